"""
Call budgets and per-step cost
==============================

Cluster-level inference issues a fixed number of symbolic calls per step,
while a flat architecture pays per agent. The first part prints projected
call counts; the second times the oracle pathway for growing populations.
Run with ``python3 demos/03_cost_and_scaling.py``.
"""

import time

import numpy as np

from clusterabm.engine import PathwayConfig, make_world, simulate
from clusterabm.io import generate_synthetic_scenario
from clusterabm.symbolic.cost import CostLedger, project_costs

# %% projected calls per step, N=1000, four clusters of five state agents
for alpha in (0.6, 0.75, 1.0):
    p = project_costs(1000, 4, 5, alpha)
    print(f"alpha {alpha:4}: flat {p['flat']['calls']:6.0f}  hierarchical {p['hierarchical']['calls']:6.0f}"
          f"  reduction {p['call_reduction']:.2f}x")

# %% measured cost of the oracle pathway
Ns = [250, 500, 1000, 2000]
secs = []
for N in Ns:
    _, data = generate_synthetic_scenario("seird_shock", n=N, T=30, seed=0)
    ledger = CostLedger(n_agents=N)
    pc = PathwayConfig(pathway="oracle", rules=data.rules, ledger=ledger, seed=0)
    world = make_world(data.state_space, data.graph, data.population, data.labels, data.exogenous,
                       data.exo_names, data.truth[:, 0], 0)
    t0 = time.perf_counter()
    simulate(world, 20, pc)
    secs.append((time.perf_counter() - t0) / 20)
    print(f"N={N:5d}: {1e3 * secs[-1]:6.1f} ms/step, {ledger.calls(t=1)} symbolic calls/step")

slope = np.polyfit(np.log(Ns), np.log(secs), 1)[0]
print(f"log-log slope of time per step: {slope:.2f}")
