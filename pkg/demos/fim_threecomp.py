"""Fisher information of the three-component benchmark model.

Compares the three quadrature rules on the full matrix and prints the log
Jeffreys prior under each unknown-parameter scenario.

    python3 demos/fim_threecomp.py
"""

import time

import numpy as np

from jeffmix import IntegratorConfig, Scenario, fim, log_jeffreys
from jeffmix.experiments import THREE_COMPONENT_MODEL

model = THREE_COMPONENT_MODEL
k = model.k
rules = {
    "gk": IntegratorConfig("gk"),
    "riemann-550": IntegratorConfig("riemann", points=550),
    "mc-1500": IntegratorConfig("mc", samples=1500, seed=1),
}

ref = None
for name, cfg in rules.items():
    t0 = time.perf_counter()
    F = fim(model, Scenario.all(k), cfg).entries
    dt = time.perf_counter() - t0
    if ref is None:
        ref = F
    err = np.linalg.norm(F - ref) / np.linalg.norm(ref)
    print(f"{name:12s} {dt * 1e3:8.1f} ms   rel. Frobenius diff to gk {err:.2e}")

np.set_printoptions(precision=4, suppress=True, linewidth=120)
print("\nfull information matrix (gk):")
print(ref)

for label, scen in (("weights", Scenario.weights(k)), ("locations", Scenario.locations(k)), ("all", Scenario.all(k))):
    v = log_jeffreys(model, scen, rules["gk"]).value
    print(f"log Jeffreys, {label:9s} unknown: {v: .4f}")
