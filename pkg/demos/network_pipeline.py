"""Design, simulate and check the bundled five-agent network.

Agents 1 and 3 can track exactly, agent 4 uses a fixed error weight and
agents 2 and 5 are designed to respect output error bounds with the least
input energy.
"""

import numpy as np

from ossync import design, massim, scenario

scen = scenario.load_bundled()
designs = design.design_network(scen)
rec = massim.simulate(design.network(scen, designs))

print(f"{'agent':8} {'strategy':8} {'energy':>10} {'measured':>10}")
for i, d in enumerate(designs):
    measured = massim.measure_energy(rec, d.Gamma, d.R, scen.exo.period, agent=i)
    print(f"{d.name:8} {d.strategy:8} {d.energy:10.3f} {measured:10.3f}")

print("output errors in the last period, against the bounds")
for spec, d in zip(scen.agents, designs):
    rep = massim.verify_error_bounds(spec.model, d.Pi, scen.exo,
                                     spec.eps if spec.eps is not None else [np.inf] * spec.model.p)
    print(f"{d.name:8} sup error {np.round(rep.sampled, 4)}  exact {np.round(rep.exact, 4)}")
print("transition check", np.round(massim.transition_check(rec, designs), 8))
