"""Oracle for the truncated-pseudoinverse update on a well-conditioned
dense instance: solve the normal equations (J^T J) d = -J^T F directly,
a different algorithm from the SVD route used in the library.

Run: python3 tools/oracles/pinv_solve_oracle.py
Freeze the printed vector into tests/test_solver.py.
"""

import numpy as np

rng = np.random.default_rng(20240817)
J = rng.normal(size=(12, 5))
F = rng.normal(size=12)

print("cond(J) =", np.linalg.cond(J))
delta = np.linalg.solve(J.T @ J, -J.T @ F)
print("residual-norm drop:", np.linalg.norm(F), "->",
      np.linalg.norm(F + J @ delta))
print("DELTA = [")
for v in delta:
    print(f"    {v!r},")
print("]")
