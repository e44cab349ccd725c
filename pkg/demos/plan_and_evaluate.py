"""
Planning rendezvous under a risk bound
======================================

Build the CMDP for the 12-node benchmark loop, solve the occupancy LP with
a 10 % bound on running out of charge, then fly the policy in the
continuous-battery simulator next to the threshold heuristics.
"""
from rendezvous_cmdp.cmdp import Action, build_cmdp
from rendezvous_cmdp.lp import extract_policy, solve_cmdp
from rendezvous_cmdp.mission import benchmark_mission
from rendezvous_cmdp.sim import GreedyPolicy, Simulator, evaluate

mission = benchmark_mission()
model = build_cmdp(mission)
print(f"{model.n_states} states, {model.n_pairs} state-action pairs")

sol = solve_cmdp(model, 0.1)
policy = extract_policy(sol, model, seed=0)
print(f"LP objective {sol.objective:.1f} s, risk {sol.risk:.4f}, {sol.iterations} pivots")

###############################################################################
# With one risk row the optimal basis randomizes in at most one state.

for s in policy.randomized_states(model):
    rows = range(model.sa_ptr[s], model.sa_ptr[s + 1])
    acts = {Action(int(model.sa_action[p])).name: round(float(policy.probs[p]), 3) for p in rows if policy.probs[p] > 0}
    print(model.states[s].label(), acts)

###############################################################################
# Monte-Carlo evaluation
# ----------------------
# Time, distance and rendezvous counts are averaged over successful trials.

n = 2000
rep = evaluate(Simulator(mission, policy, model), n, seed=1)
print(f"cmdp       fail {rep.failure_rate:.4f} (model {rep.model_risk:.4f})  time {rep.mean_time:7.1f} s"
      f"  rendezvous {rep.mean_rendezvous:.2f}")
for th in (40, 50, 60, 70):
    g = evaluate(Simulator(mission, GreedyPolicy(th)), n, seed=1)
    print(f"greedy-{th}  fail {g.failure_rate:.4f}                 time {g.mean_time:7.1f} s"
          f"  rendezvous {g.mean_rendezvous:.2f}")

###############################################################################
# One trial in detail.  State labels read ``k,g,j,bin,joules``.

trace = Simulator(mission, policy, model).rollout(seed=1, trial=0)
for e in trace.events:
    where = "" if e.rendezvous_node is None else f" meet at road node {e.rendezvous_node}"
    print(f"{e.k:2d} {e.action:14s} {e.duration:7.1f} s {e.energy / 1e3:6.1f} kJ{where}")
print(trace.outcome, f"{trace.time:.1f} s")
