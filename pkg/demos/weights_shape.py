"""Shape of the conditional weights prior for two-component mixtures.

A Gaussian paired with a Student t component of decreasing degrees of
freedom: the prior on the first weight loses its symmetry about 1/2 as the
second component's tails get heavier.

    python3 demos/weights_shape.py
"""

from jeffmix.experiments import weights_prior_shape_study

res = weights_prior_shape_study(points=100)
print(f"{'pair':14s} {'mass p1>1/2':>12s} {'asymmetry':>10s}")
for name, s in res.summary.items():
    if not isinstance(s, dict):
        continue
    print(f"{name:14s} {s['mass_above']:12.4f} {s['asymmetry']:10.2e}")
