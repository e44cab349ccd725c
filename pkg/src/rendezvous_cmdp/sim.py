"""Monte-Carlo evaluation on continuous (joule-level) battery dynamics, greedy baselines and sweeps."""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .cmdp import Action, CmdpModel, Kind, build_cmdp, risk_of_policy
from .dynamics import MissionGeometry
from .energy import leg_energy_sample
from .lp import Infeasible, Policy, extract_policy, solve_cmdp, value_iteration_unconstrained

SUCCESS = "success"
OUT_OF_CHARGE = "out_of_charge"

CSV_COLUMNS = ["delta", "lp_objective_s", "mean_time_s", "std_time_s", "failure_rate",
               "mean_distance_m", "mean_rendezvous"]


@dataclass
class Event:
    k: int
    state: str
    action: str
    energy: float
    duration: float
    distance: float
    rendezvous_node: int | None = None


@dataclass
class TrialTrace:
    trial: int
    outcome: str = SUCCESS
    events: list = field(default_factory=list)

    @property
    def time(self) -> float:
        return sum(e.duration for e in self.events)

    @property
    def distance(self) -> float:
        return sum(e.distance for e in self.events)

    @property
    def rendezvous(self) -> int:
        return sum(e.rendezvous_node is not None for e in self.events)


@dataclass(frozen=True)
class GreedyPolicy:
    """Fly at best-range speed; rendezvous whenever SOC is below ``threshold`` percent."""

    threshold: float

    def __post_init__(self):
        if not 0 < self.threshold <= 100:
            raise ValueError("greedy threshold must lie in (0, 100]")


@dataclass
class SimReport:
    trials: int
    failures: int
    failure_rate: float
    failure_stderr: float
    mean_time: float
    std_time: float
    mean_distance: float
    std_distance: float
    mean_rendezvous: float
    seed: int
    delta: float = float("nan")
    model_risk: float = float("nan")
    label: str = ""

    @property
    def success_rate(self) -> float:
        return 1.0 - self.failure_rate

    @property
    def binning_gap(self) -> float:
        """Empirical failure rate minus the model's risk for the same policy."""
        return self.failure_rate - self.model_risk

    def to_json_dict(self) -> dict:
        return asdict(self)


class _PolicyTable:
    """Lookup from continuous simulator state to the model's action distribution."""

    def __init__(self, model: CmdpModel, policy: Policy):
        self.by_group = {}
        for s, st in enumerate(model.states):
            if st.kind != Kind.IN_TASK:
                continue
            lo, hi = model.sa_ptr[s], model.sa_ptr[s + 1]
            acts = model.sa_action[lo:hi]
            probs = policy.probs[lo:hi]
            self.by_group.setdefault((st.k, st.g, st.j), []).append((st.b, acts, np.cumsum(probs)))
        for key, rows in self.by_group.items():
            rows.sort(key=lambda r: r[0])
            self.by_group[key] = ([r[0] for r in rows], rows)

    def lookup(self, k, g, j, b):
        """Action distribution for the model state closest to ``b`` from below (else above)."""
        found = self.by_group.get((k, g, j))
        if found is None:
            return None
        bins, rows = found
        i = np.searchsorted(bins, b, side="right") - 1
        return rows[max(i, 0)]


class Simulator:
    """Rolls out a mission with continuous SOC; the UGV follows the model's waypoint dynamics.

    Depletion is always judged on the true charge in joules.  A CMDP policy is
    looked up at the controller's model state: with ``lookup="tracked"`` (the
    default) the controller carries the SOC bin the model itself would be in,
    updating it by the model's floor rule from each leg's measured consumption;
    with ``lookup="gauge"`` it reads the bin straight off the true charge.
    ``quantize=True`` also floors the true charge, which reproduces the binned
    model exactly and isolates Monte-Carlo noise from discretisation error.
    """

    def __init__(self, mission, policy=None, model: CmdpModel | None = None, fixed_weight: bool = False,
                 quantize: bool = False, lookup: str = "tracked"):
        if lookup not in ("tracked", "gauge"):
            raise ValueError("lookup must be 'tracked' or 'gauge'")
        self.mission = mission
        self.quantize = quantize
        self.lookup = lookup
        self.geo = MissionGeometry(mission)
        self.policy = policy
        self.fixed_weight = fixed_weight
        self.capacity = mission.battery.capacity
        self.bin_energy = mission.battery.bin_energy
        self.table = None
        self.model_risk = float("nan")
        if isinstance(policy, Policy):
            if model is None:
                raise ValueError("a CMDP policy needs its model")
            self.table = _PolicyTable(model, policy)
            self.model_risk = risk_of_policy(model, policy)
        v = mission.vehicle
        self.speed = {Action.FORWARD_BE: v.v_be, Action.FORWARD_BR: v.v_br,
                      Action.RENDEZVOUS_BE: v.v_be, Action.RENDEZVOUS_BR: v.v_br}

    def _energy(self, length, v, rng, weight):
        params = self.mission.disturbance
        if weight is not None:
            params = type(params)(weight, 0.0, params.wind_scale, params.wind_shape)
        return leg_energy_sample(length, v, params, self.mission.coefficients, rng)

    def _drain(self, soc, e):
        if not self.quantize:
            return soc - e
        # replicate the model's floor binning exactly
        return max(0.0, soc - math.ceil(e / self.bin_energy) * self.bin_energy)

    def _track(self, b, e):
        """Model bin after consuming ``e`` joules from bin ``b`` (floor rule, clamped at 0)."""
        return max(0, b - math.ceil(e / self.bin_energy))

    def _choose(self, k, g, j, soc, b, rng):
        if isinstance(self.policy, GreedyPolicy):
            if 100.0 * soc / self.capacity < self.policy.threshold:
                return Action.RENDEZVOUS_BR
            return Action.FORWARD_BR
        if self.lookup == "gauge":
            b = self.mission.battery.bin_of(soc)
        row = self.table.lookup(k, g, j, b)
        if row is None:
            raise KeyError(f"no policy entry for route index {k}, UGV state ({g}, {j})")
        _, acts, cum = row
        i = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
        return Action(int(acts[min(i, len(acts) - 1)]))

    def rollout(self, seed: int, trial: int) -> TrialTrace:
        """One trial; ``soc`` is the true charge in joules and ``b`` the controller's model bin."""
        rng = np.random.default_rng([int(seed), int(trial)])
        geo = self.geo
        trace = TrialTrace(trial)
        weight = None
        if self.fixed_weight:
            d = self.mission.disturbance
            weight = float(rng.normal(d.weight_mean, d.weight_std))
        b = self.mission.start_bin
        soc = self.mission.battery.charge(b)
        top = self.mission.battery.top
        g, j = geo.start_waypoint, geo.start_target
        for k in range(geo.n_legs):
            a = self._choose(k, g, j, soc, b, rng)
            v = self.speed[a]
            label = f"{k},{g},{j},{b},{soc:.3f}"
            if not a.is_rendezvous:
                length = float(geo.leg_lengths[k])
                e = self._energy(length, v, rng, weight)
                if e > soc:
                    frac = soc / e if e > 0 else 0.0
                    trace.events.append(Event(k, label, a.name, e, frac * length / v, frac * length))
                    trace.outcome = OUT_OF_CHARGE
                    return trace
                soc = self._drain(soc, e)
                b = self._track(b, e)
                t = length / v
                trace.events.append(Event(k, label, a.name, e, t, length))
                g, j = geo.advance(g, j, t)
                continue
            plan = geo.rendezvous(k, g, v)
            e1 = self._energy(plan.first_leg_distance, v, rng, weight)
            if e1 > soc:
                frac = soc / e1 if e1 > 0 else 0.0
                trace.events.append(Event(k, label, a.name, e1, frac * plan.first_leg_distance / v,
                                          frac * plan.first_leg_distance))
                trace.outcome = OUT_OF_CHARGE
                return trace
            e2 = self._energy(plan.second_leg_distance, v, rng, weight)
            if e2 > self.capacity:
                frac = self.capacity / e2
                trace.events.append(Event(k, label, a.name, e1 + e2,
                                          plan.delta + plan.recharge_time + frac * plan.second_leg_time,
                                          plan.first_leg_distance + frac * plan.second_leg_distance,
                                          plan.node))
                trace.outcome = OUT_OF_CHARGE
                return trace
            soc = self._drain(self.capacity, e2)
            b = self._track(top, e2)
            trace.events.append(Event(k, label, a.name, e1 + e2, plan.total_time,
                                      plan.first_leg_distance + plan.second_leg_distance, plan.node))
            g, j = geo.after_rendezvous(plan, j)
        return trace

    def summarize(self, trials, seed: int):
        return _summarize(trials, seed)


def _trial_stats(sim: Simulator, seed: int, ids):
    out = []
    for t in ids:
        tr = sim.rollout(seed, t)
        out.append((t, tr.outcome == SUCCESS, tr.time, tr.distance, tr.rendezvous))
    return out


_WORKER_SIM = None


def _init_worker(sim):
    global _WORKER_SIM
    _WORKER_SIM = sim


def _worker(args):
    seed, ids = args
    return _trial_stats(_WORKER_SIM, seed, ids)


def _summarize(rows, seed):
    rows = sorted(rows)
    n = len(rows)
    ok = [r for r in rows if r[1]]
    failures = n - len(ok)
    fr = failures / n
    times = np.array([r[2] for r in ok])
    dist = np.array([r[3] for r in ok])
    rdv = np.array([r[4] for r in ok], dtype=float)

    def mean(a):
        return float(a.mean()) if a.size else float("nan")

    def std(a):
        return float(a.std()) if a.size else float("nan")

    return SimReport(trials=n, failures=failures, failure_rate=fr,
                     failure_stderr=math.sqrt(fr * (1 - fr) / n),
                     mean_time=mean(times), std_time=std(times),
                     mean_distance=mean(dist), std_distance=std(dist),
                     mean_rendezvous=mean(rdv), seed=int(seed))


def evaluate(sim: Simulator, n_trials: int, seed: int, jobs: int = 1, first_trial: int = 0) -> SimReport:
    """Aggregate ``n_trials`` rollouts with trial ids ``first_trial .. first_trial + n - 1``.

    Statistics on time, distance and rendezvous count use successful trials only.
    """
    if n_trials < 1:
        raise ValueError("need at least one trial")
    ids = range(first_trial, first_trial + n_trials)
    if jobs <= 1:
        rows = _trial_stats(sim, seed, ids)
    else:
        chunks = [list(ids[i::jobs]) for i in range(jobs)]
        with ProcessPoolExecutor(jobs, initializer=_init_worker, initargs=(sim,)) as pool:
            rows = [r for part in pool.map(_worker, [(seed, c) for c in chunks]) for r in part]
    rep = _summarize(rows, seed)
    rep.model_risk = sim.model_risk
    if isinstance(sim.policy, Policy):
        rep.delta = sim.policy.delta
        rep.label = "cmdp"
    elif isinstance(sim.policy, GreedyPolicy):
        rep.label = f"greedy-{sim.policy.threshold:g}"
    return rep


def rollout(mission, policy, seed: int, trial: int, model: CmdpModel | None = None) -> TrialTrace:
    return Simulator(mission, policy, model).rollout(seed, trial)


# -- experiments -------------------------------------------------------------------------

@dataclass
class SweepRow:
    delta: float
    lp_objective_s: float
    mean_time_s: float
    std_time_s: float
    failure_rate: float
    mean_distance_m: float
    mean_rendezvous: float
    model_risk: float = float("nan")
    status: str = "optimal"
    label: str = ""

    def csv_row(self):
        return [self.delta, self.lp_objective_s, self.mean_time_s, self.std_time_s, self.failure_rate,
                self.mean_distance_m, self.mean_rendezvous]


def _row_from(rep: SimReport, delta, objective, risk, label=""):
    return SweepRow(delta, objective, rep.mean_time, rep.std_time, rep.failure_rate,
                    rep.mean_distance, rep.mean_rendezvous, risk, "optimal", label)


def pareto_sweep(mission, deltas, n_trials: int, seed: int, model: CmdpModel | None = None,
                 jobs: int = 1):
    """Plan and simulate at each risk bound; infeasible bounds give a row with status ``infeasible``."""
    model = model or build_cmdp(mission, jobs)
    rows = []
    for d in deltas:
        try:
            sol = solve_cmdp(model, d)
        except Infeasible as exc:
            nan = float("nan")
            rows.append(SweepRow(d, nan, nan, nan, nan, nan, nan, exc.min_risk, "infeasible"))
            continue
        pol = extract_policy(sol, model, seed)
        rep = evaluate(Simulator(mission, pol, model), n_trials, seed, jobs)
        rows.append(_row_from(rep, d, sol.objective, sol.risk))
    return rows


def greedy_compare(mission, thresholds, n_trials: int, seed: int, model: CmdpModel | None = None,
                   jobs: int = 1, delta: float | None = None):
    """Greedy-k baselines next to the CMDP policy at the mission's risk bound."""
    delta = mission.delta if delta is None else delta
    rows = []
    for th in thresholds:
        rep = evaluate(Simulator(mission, GreedyPolicy(th)), n_trials, seed, jobs)
        rows.append(_row_from(rep, float("nan"), float("nan"), float("nan"), f"greedy-{th:g}"))
    model = model or build_cmdp(mission, jobs)
    sol = solve_cmdp(model, delta)
    pol = extract_policy(sol, model, seed)
    rep = evaluate(Simulator(mission, pol, model), n_trials, seed, jobs)
    rows.append(_row_from(rep, delta, sol.objective, sol.risk, "cmdp"))
    return rows


def rows_to_csv(rows, header_comment: str = "", label_column: bool = False) -> str:
    buf = io.StringIO()
    if header_comment:
        for line in header_comment.splitlines():
            buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    cols = (["policy"] if label_column else []) + CSV_COLUMNS + ["model_risk", "status"]
    w.writerow(cols)
    for r in rows:
        vals = ([r.label] if label_column else []) + [_fmt(x) for x in r.csv_row()] + \
               [_fmt(r.model_risk), r.status]
        w.writerow(vals)
    return buf.getvalue()


def _fmt(x):
    if isinstance(x, float):
        return "nan" if math.isnan(x) else repr(x)
    return x


def unconstrained_optimum(model: CmdpModel) -> float:
    V, _ = value_iteration_unconstrained(model)
    return float(V[model.initial])


def model_risk(model: CmdpModel, policy: Policy) -> float:
    return risk_of_policy(model, policy)
