"""A scalar plant tracking a constant reference.

For x' = -x + u, y = x and a unit step reference, exact tracking needs the
input u = 1 forever.  The optimal stationary solution trades tracking error
against input energy: with weights q on the error and 1 on the input the
stationary output settles at q / (q + 1).
"""

import numpy as np

from ossync import exocore, oss

agent = oss.AgentModel(A=[[-1.0]], B=[[1.0]], C=[[1.0]])
exo = exocore.build_exosystem([(0.0, 1)], [[1.0]])

print("exact solution  Pi =", oss.solve_exs(agent, exo)[0].item())
print(f"{'q':>8} {'Pi':>10} {'q/(q+1)':>10} {'Gamma':>10}")
for q in (0.1, 1.0, 10.0, 100.0, 1000.0):
    sol = oss.solve_oss(agent, exo, np.array([[q]]), np.array([[1.0]]))
    print(f"{q:8.1f} {sol.Pi.item():10.6f} {q / (q + 1):10.6f} {sol.Gamma.item():10.6f}")
print("as q grows the stationary solution approaches the exact one")
