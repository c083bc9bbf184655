"""Overfitted ten-component fit of the galaxy velocities.

Prints the posterior summary table and writes JSON, CSV and SVG outputs.
The full run (50 000 iterations) takes roughly 20 minutes on one core;
pass a smaller iteration count for a quick look:

    python3 demos/galaxy.py 8000 out_dir
"""

import sys

from jeffmix import McmcConfig
from jeffmix.datasets import load_dataset
from jeffmix.experiments import dataset_analysis

iterations = int(sys.argv[1]) if len(sys.argv) > 1 else 50_000
out = sys.argv[2] if len(sys.argv) > 2 else "jeffmix_out"

data = load_dataset("galaxy")
cfg = McmcConfig(iterations=iterations, burn_in=iterations // 5, seed=9)
res = dataset_analysis(data, k=10, mcmc=cfg)
print(res.summary.table())
print(f"components above 2% weight: {res.summary.n_detected}")
for p in res.write(out, data.values):
    print("wrote", p)
