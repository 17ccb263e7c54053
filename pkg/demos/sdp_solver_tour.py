"""The bundled semidefinite solver on small problems with known answers."""

import numpy as np

from ossync import conic

# minimise t subject to t I - M >= 0, i.e. the largest eigenvalue of M
M = np.array([[2.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 4.0]])
block = conic.LmiBlock(F0=-M, F=[np.eye(3)])
prob = conic.SdpProblem(c=np.array([1.0]), blocks=[block])
sol = conic.solve(prob)
print("lambda_max:", sol.status.value, round(sol.objective, 9), "exact", round(np.linalg.eigvalsh(M).max(), 9))
primal, dual, comp = conic.kkt_residuals(prob, sol)
print(f"gap {sol.gap:.1e}, primal {primal:.1e}, dual {dual:.1e}, complementarity {comp:.1e}")

# x >= 2 and x <= 1 has no solution
infeasible = conic.SdpProblem(c=np.array([1.0]), blocks=[
    conic.LmiBlock(F0=np.array([[-2.0]]), F=[np.array([[1.0]])]),
    conic.LmiBlock(F0=np.array([[1.0]]), F=[np.array([[-1.0]])]),
])
print("x >= 2, x <= 1:", conic.solve(infeasible).status.value)
feasible, _ = conic.is_feasible(prob)
print("first problem feasible:", feasible)
