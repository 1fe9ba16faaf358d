"""Resource allocation for IRS-assisted NOMA downlinks: channel matching,
decoding-order selection and alternating power/reflection optimisation."""

from .pipeline import (
    LABELS,
    Solution,
    exhaustive_assignment,
    exhaustive_order,
    joint_optimize,
    no_irs_variant,
    oma_waterfill,
    placement_gain_approx,
    random_order_variant,
    run_algorithm,
    three_step,
)
from .scenario import ChannelRealization, SystemConfig, sample_channels

__all__ = [
    "LABELS",
    "ChannelRealization",
    "Solution",
    "SystemConfig",
    "exhaustive_assignment",
    "exhaustive_order",
    "joint_optimize",
    "no_irs_variant",
    "oma_waterfill",
    "placement_gain_approx",
    "random_order_variant",
    "run_algorithm",
    "sample_channels",
    "three_step",
]
