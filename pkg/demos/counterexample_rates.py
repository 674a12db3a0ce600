"""Why the placement of the proximal step matters.

Two agents share isotropic quadratic costs but hold *different*
nonsmooth regularizers: an anchored absolute value plus two interleaved
pairwise-difference chains over an M-dimensional variable.  Methods that
apply each agent's prox separately (PGEXTRA, DLADMM) lose their linear
rate on this problem -- the error decays only sublinearly -- while a
single-prox method applied to the averaged regularizer stays linear.

Run:  python3 demos/counterexample_rates.py          (a minute or two)
      python3 demos/counterexample_rates.py --quick  (small instance)
"""

import sys

import numpy as np

from decprox import (
    AlgorithmSpec,
    ChainSumProx,
    CounterexampleProx,
    build_counterexample,
    centralized_reference,
    classify_decay,
    quadratic_cost,
    run,
    table1_matrices,
)

QUICK = "--quick" in sys.argv[1:]
M = 200 if QUICK else 2000
SEP_ITERS = 12000 if QUICK else 20000  # closed-form per-agent proxes, cheap
COMMON_ITERS = 1000 if QUICK else 2500  # averaged prox needs a dual solve
MU, C = 0.005, 1.0

print(f"dimension M = {M}, step mu = {MU}\n")

pair = build_counterexample(M)
print("difference operators satisfy D D' = 2 I:",
      np.allclose((pair.D1 @ pair.D1.T).toarray(), 2 * np.eye(M // 2)))

# Two agents with the all-half combination matrix; each holds the unit
# quadratic (1/2)||w||^2 and one half of the regularizer pair.
A = np.full((2, 2), 0.5)
costs = quadratic_cost(1.0, 2, M)
proxes = [CounterexampleProx("R1", pair), CounterexampleProx("R2", pair)]

# Reference: minimize the average cost plus (R1 + R2)/2, the fixed
# point that the separate-prox methods agree on.
common_half = ChainSumProx(pair, weight=0.5)
w_star = centralized_reference(costs, common_half, tol=1e-13)
print(f"reference solved; ||w*|| = {np.linalg.norm(w_star):.6f}\n")

runs = [
    ("PGEXTRA", SEP_ITERS,
     AlgorithmSpec(family="PGEXTRA", mu=MU, A=A, prox=proxes)),
    ("DLADMM", SEP_ITERS,
     AlgorithmSpec(family="DLADMM", mu=MU, A=A, c=C, prox=proxes,
                   laplacian=np.array([[1.0, -1.0], [-1.0, 1.0]]))),
    ("ProxED", COMMON_ITERS,
     AlgorithmSpec(family="PUDA_general", mu=MU,
                   triple=table1_matrices("ExactDiffusion", A),
                   prox=common_half, label="ProxED")),
]

print(f"{'algorithm':>10s} {'prox':>9s} {'iters':>6s} {'final error':>12s} "
      f"{'tail ratio':>10s}  verdict")
for name, iters, spec in runs:
    record = run(spec, costs, w_star, iters)
    verdict = classify_decay(record)
    tail = verdict.geometric_ratio_windows[-1] \
        if verdict.geometric_ratio_windows else float("nan")
    kind = "separate" if name in ("PGEXTRA", "DLADMM") else "averaged"
    print(f"{name:>10s} {kind:>9s} {iters:6d} {record.errors[-1]:12.3e} "
          f"{tail:10.6f}  {verdict.classification}")

print("\nThe separate-prox runs stall at a polynomial rate (tail ratio")
print("pinned near 1), while the averaged-prox run contracts geometrically.")
