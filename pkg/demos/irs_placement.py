"""
Where to put the surface
========================

With the IRS on the line between the base station and the users, the
reflected path loss scales like ``(d1 * (d - d1)) ** -alpha``. That product
is largest (and the reflected gain smallest) halfway along, so the surface
helps most when it sits next to either end. The simulated throughput shows
the same dip.
"""

import numpy as np

from irsnoma import SystemConfig, placement_gain_approx, sample_channels, three_step
from irsnoma.experiment import placement_config

d = 50.0
for x in (5.0, 10.0, 25.0, 40.0, 45.0):
    print(f"x = {x:4.1f} m  approximate gain {placement_gain_approx(x, d):.4e}")

print()
trials = 10
for x in (10.0, 25.0, 45.0):
    config = placement_config(SystemConfig(), x)
    rates = []
    for seed in range(trials):
        sol = three_step(sample_channels(config, seed), config, seed)
        if sol.feasible:
            rates.append(sol.throughput)
    print(f"IRS at x = {x:4.1f} m: mean throughput {np.mean(rates):.4f} bit/s/Hz over {len(rates)} trials")
