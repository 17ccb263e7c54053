"""Shaping the error weight of an under-actuated agent.

Agent 5 has two outputs but one input, so it cannot track the reference
exactly.  Starting from the smallest diagonal weight that meets its error
bounds, trust-region steps on the full weight matrix lower the input energy
while every accepted iterate keeps the bounds certified.
"""

import numpy as np

from ossync import eboss, massim, oss, scenario
from ossync.exceptions import NoSolution

scen = scenario.load_bundled()
a5 = scen.agents[scen.agent_index("agent5")]
spec = eboss.EbossSpec(a5.model, scen.exo, a5.R, a5.eps, name=a5.name)

try:
    oss.solve_exs(a5.model, scen.exo)
except NoSolution as exc:
    print("exact tracking impossible:", exc)

Q0 = eboss.find_initial_q(spec)
print("diagonal start Q0 =", np.round(np.diag(Q0), 3))
res = eboss.path_following(spec, Q0)
for p in res.history.points:
    tag = "accept" if p.accepted else "reject"
    print(f"k={p.k:3d} {tag} objective {p.objective:9.5f} alpha {p.alpha:.4f}")
print("termination", res.history.termination.value)
print("final Q\n", np.round(res.Q, 3))
rep = massim.verify_error_bounds(spec.agent, res.Pi, spec.exo, spec.eps)
print("sup errors", np.round(rep.sampled, 4), "bounds", spec.eps)
