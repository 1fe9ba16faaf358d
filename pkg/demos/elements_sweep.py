"""
Throughput against the number of reflecting elements
====================================================

A small Monte-Carlo sweep through the experiment API: the same machinery the
``irsnoma run`` command uses, driven from Python. Ten paired trials per point
keep it under a minute; raise ``trials`` for smoother curves.
"""

from irsnoma.experiment import ExperimentSpec, run_experiment, summarize
from irsnoma.scenario import SystemConfig

spec = ExperimentSpec(
    config=SystemConfig(),
    sweep="n_elements",
    values=(4, 8, 16),
    algorithms=("ThreeStep-IRS-NOMA", "NOMA-noIRS", "TwoStep-IRS-OMA", "OMA-noIRS"),
    trials=10,
    seed=100,
)

records = list(run_experiment(spec))
rows = summarize(records)

print(f"{'M':>3s}  {'algorithm':22s} {'mean':>8s} {'std':>7s} {'infeasible':>10s}")
for row in sorted(rows, key=lambda r: (r.algorithm, r.value)):
    print(f"{row.value:3.0f}  {row.algorithm:22s} {row.mean:8.4f} {row.std:7.4f} {row.infeasible_rate:10.0%}")
