"""Occupancy-measure LP for the constrained MDP, policy extraction and a value-iteration oracle."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import __version__
from .cmdp import Action, CmdpModel, risk_of_policy
from .fileio import atomic_write  # noqa: F401  (re-exported)
from .simplex import INFEASIBLE, OPTIMAL, SparseLp, solve_lp

log = logging.getLogger(__name__)

DENOM_TOL = 1e-12


class Infeasible(Exception):
    """The risk bound cannot be met; ``min_risk`` is the smallest achievable risk."""

    def __init__(self, delta, min_risk):
        super().__init__(f"risk bound {delta:g} is unattainable; the least risky policy has risk {min_risk:.6g}")
        self.delta = delta
        self.min_risk = min_risk


class NonConvergence(Exception):
    pass


@dataclass
class OccupancySolution:
    y: np.ndarray                  # one entry per state-action row
    objective: float
    risk: float
    status: str
    delta: float
    iterations: int = 0
    basis: np.ndarray | None = None
    solve_seconds: float = 0.0
    flow_residual: float = 0.0


@dataclass
class Policy:
    """Stationary randomized policy: ``probs[p]`` is pi(s, a) for state-action row ``p``."""

    probs: np.ndarray
    reachable: np.ndarray          # per state: received occupancy
    delta: float = float("nan")
    seed: int | None = None
    model_hash: str = ""
    objective: float = float("nan")
    risk: float = float("nan")
    meta: dict = field(default_factory=dict)

    def randomized_states(self, model: CmdpModel) -> np.ndarray:
        pos = (self.probs > 1e-9).astype(int)
        counts = np.add.reduceat(pos, model.sa_ptr[:-1])
        return np.flatnonzero(counts > 1)


# -- LP construction -------------------------------------------------------------

def _live(model: CmdpModel):
    live = np.ones(model.n_states, dtype=bool)
    live[model.terminal] = False
    return live


def build_lp(model: CmdpModel, delta: float) -> SparseLp:
    """Occupancy LP: minimise expected time subject to flow balance and the risk bound.

    One variable per state-action pair of every non-terminal state, one flow
    row per non-terminal state and a single risk row.
    """
    if not 0 <= delta <= 1:
        raise ValueError("delta must lie in [0, 1]")
    live = _live(model)
    sa_state = model.sa_state
    var = np.flatnonzero(live[sa_state])          # state-action rows that become variables
    rows = np.flatnonzero(live)                   # states that get a flow row
    row_of = np.full(model.n_states, -1)
    row_of[rows] = np.arange(rows.size)
    nv = var.size
    out_flow = sp.csr_matrix((np.ones(nv), (row_of[sa_state[var]], np.arange(nv))), shape=(rows.size, nv))
    Pv = model.P[var][:, rows]                     # (vars x flow rows)
    A_eq = (out_flow - Pv.T).tocsr()
    b_eq = np.zeros(rows.size)
    b_eq[row_of[model.initial]] = 1.0
    c = model.expected_cost()[var]
    r = model.expected_risk()[var]
    lp = SparseLp(c, A_eq, b_eq, sp.csr_matrix(r.reshape(1, -1)), [delta])
    lp.var_index = var
    lp.row_states = rows
    return lp


# -- value iteration ---------------------------------------------------------------

def _first_argmin(model: CmdpModel, Q: np.ndarray, V: np.ndarray) -> np.ndarray:
    sa_state = model.sa_state
    is_min = Q <= V[sa_state] + 1e-12 * np.maximum(1.0, np.abs(V[sa_state]))
    idx = np.where(is_min, np.arange(Q.size), Q.size)
    return np.minimum.reduceat(idx, model.sa_ptr[:-1])


def value_iteration(model: CmdpModel, stage_cost: np.ndarray, tol: float = 1e-9,
                    max_iter: int = 1_000_000):
    """Minimal expected cumulative ``stage_cost`` until the terminal state.

    Returns ``(V, greedy_rows)`` with ``greedy_rows[s]`` the chosen state-action row.
    """
    V = np.zeros(model.n_states)
    starts = model.sa_ptr[:-1]
    P = model.P
    for _ in range(max_iter):
        Q = stage_cost + P @ V
        Vn = np.minimum.reduceat(Q, starts)
        Vn[model.terminal] = 0.0
        if np.max(np.abs(Vn - V)) <= tol:
            V = Vn
            break
        V = Vn
    else:
        raise NonConvergence("value iteration did not converge; is the model transient?")
    Q = stage_cost + P @ V
    return V, _first_argmin(model, Q, V)


def value_iteration_unconstrained(model: CmdpModel, tol: float = 1e-9):
    """Bellman-optimal expected time to the terminal state and its greedy deterministic policy."""
    V, rows = value_iteration(model, model.expected_cost(), tol)
    return V, deterministic_policy(model, rows)


def deterministic_policy(model: CmdpModel, rows: np.ndarray) -> np.ndarray:
    pi = np.zeros(model.n_pairs)
    pi[rows] = 1.0
    return pi


# -- solving ---------------------------------------------------------------------

def _policy_basis(lp: SparseLp, rows: np.ndarray) -> np.ndarray:
    """Basis of a deterministic policy: its chosen variables plus the risk slack."""
    pos = np.full(lp.var_index.max() + 1 if lp.var_index.size else 0, -1)
    pos[lp.var_index] = np.arange(lp.var_index.size)
    chosen = pos[rows[lp.row_states]]
    return np.append(chosen, lp.n_vars)


def _lagrangian_policy(model: CmdpModel, delta: float, c_sa, r_sa, iters: int = 60):
    """Deterministic policy minimising time + lam * risk for the smallest lam meeting ``delta``."""
    def solve(lam):
        _, rows = value_iteration(model, c_sa + lam * r_sa)
        return rows, risk_of_policy(model, deterministic_policy(model, rows))

    rows, risk = solve(0.0)
    if risk <= delta:
        return rows
    hi = max(1.0, float(c_sa.max(initial=0.0)))
    for _ in range(80):
        rows_hi, risk_hi = solve(hi)
        if risk_hi <= delta:
            break
        hi *= 4.0
    else:
        return None
    lo = 0.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        rows_mid, risk_mid = solve(mid)
        if risk_mid <= delta:
            hi, rows_hi = mid, rows_mid
        else:
            lo = mid
        if hi - lo <= 1e-9 * hi:
            break
    return rows_hi


def min_risk(model: CmdpModel) -> float:
    """Smallest achievable failure probability, from the LP minimising expected risk cost."""
    r_sa = model.expected_risk()
    _, rows = value_iteration(model, r_sa)
    lp = build_lp(model, 1.0)
    aux = SparseLp(lp.c * 0 + r_sa[lp.var_index], lp.A_eq, lp.b_eq, None, [])
    aux.var_index, aux.row_states = lp.var_index, lp.row_states
    res = solve_lp(aux, basis=_policy_basis(aux, rows)[:-1])
    return float(res.objective)


def solve_cmdp(model: CmdpModel, delta: float, crash: str = "lagrangian", **kw) -> OccupancySolution:
    """Build and solve the occupancy LP.

    ``crash`` picks the starting basis: ``"lagrangian"`` (a feasible
    deterministic policy from penalised value iteration), ``"first"`` (each
    state's first action; feasible only when that policy meets ``delta``)
    or ``None`` for plain phase one.  Raises :class:`Infeasible` when no
    policy meets ``delta``.
    """
    t0 = time.perf_counter()
    lp = build_lp(model, delta)
    basis = None
    if crash == "lagrangian":
        rows = _lagrangian_policy(model, delta, model.expected_cost(), model.expected_risk())
        if rows is None:
            raise Infeasible(delta, min_risk(model))
        basis = _policy_basis(lp, rows)
    elif crash == "first":
        basis = _policy_basis(lp, model.sa_ptr[:-1])
    res = solve_lp(lp, basis=basis, **kw)
    if res.status == INFEASIBLE:
        raise Infeasible(delta, min_risk(model))
    if res.status != OPTIMAL:
        raise RuntimeError(f"LP solver stopped with status {res.status}")
    y = np.zeros(model.n_pairs)
    y[lp.var_index] = res.x
    resid = lp.A_eq @ res.x - lp.b_eq
    sol = OccupancySolution(
        y=y, objective=res.objective, risk=float(y @ model.expected_risk()), status=res.status,
        delta=delta, iterations=res.iterations, basis=res.basis,
        solve_seconds=time.perf_counter() - t0,
        flow_residual=float(np.abs(resid).max(initial=0.0)))
    log.info("LP delta=%g: objective %.3f s, risk %.5f, %d pivots, %.2fs",
             delta, sol.objective, sol.risk, sol.iterations, sol.solve_seconds)
    return sol


def flow_residuals(model: CmdpModel, y: np.ndarray) -> np.ndarray:
    """Per non-terminal state: outflow - inflow - initial indicator."""
    live = _live(model)
    n = model.n_states
    out = np.bincount(model.sa_state, weights=y, minlength=n)
    inflow = model.P.T @ y
    e0 = np.zeros(n)
    e0[model.initial] = 1.0
    return (out - inflow - e0)[live]


# -- policy extraction -----------------------------------------------------------------

def fallback_rows(model: CmdpModel) -> np.ndarray:
    """Per state, the cheapest action among those that can succeed (lowest action on ties)."""
    c = model.expected_cost()
    fail = model.expected_risk()
    out = np.empty(model.n_states, dtype=np.int64)
    for s in range(model.n_states):
        lo, hi = model.sa_ptr[s], model.sa_ptr[s + 1]
        cand = np.arange(lo, hi)
        ok = cand[fail[lo:hi] < 1.0 - 1e-12]
        if ok.size:
            cand = ok
        out[s] = cand[np.lexsort((model.sa_action[cand], c[cand]))[0]]
    return out


def extract_policy(sol: OccupancySolution, model: CmdpModel, seed=None) -> Policy:
    """Normalise occupancy measures per state into action probabilities."""
    y = np.maximum(sol.y, 0.0)
    den = np.add.reduceat(y, model.sa_ptr[:-1])
    reachable = den > DENOM_TOL
    probs = np.zeros(model.n_pairs)
    sa_state = model.sa_state
    ok = reachable[sa_state]
    probs[ok] = y[ok] / den[sa_state[ok]]
    fb = fallback_rows(model)
    probs[fb[~reachable]] = 1.0
    return Policy(probs, reachable, delta=sol.delta, seed=seed, model_hash=model.digest(),
                  objective=sol.objective, risk=sol.risk)


def plan(model: CmdpModel, delta: float, seed=None, **kw):
    sol = solve_cmdp(model, delta, **kw)
    return sol, extract_policy(sol, model, seed)


# -- files -------------------------------------------------------------------------------

def policy_document(policy: Policy, model: CmdpModel, mission_hash: str = "") -> dict:
    """JSON-ready policy keyed by state label.

    Schema::

        {"schema": 1, "tool_version": ..., "mission_hash": ..., "model_hash": ...,
         "seed": ..., "delta": ..., "objective_s": ..., "risk": ...,
         "states": {"<k>,<g>,<j>,<b>": {"FORWARD_BR": 0.7, "RENDEZVOUS_BR": 0.3}, ...},
         "fallback": {"<label>": "ACTION", ...}}
    """
    states, fallback = {}, {}
    for s, st in enumerate(model.states):
        label = st.label() if hasattr(st, "label") else str(st)
        lo, hi = model.sa_ptr[s], model.sa_ptr[s + 1]
        acts = {Action(int(model.sa_action[p])).name: float(policy.probs[p])
                for p in range(lo, hi) if policy.probs[p] > 0}
        if policy.reachable[s]:
            states[label] = acts
        else:
            fallback[label] = next(iter(acts))
    return {
        "schema": 1, "tool_version": __version__, "mission_hash": mission_hash,
        "model_hash": policy.model_hash, "seed": policy.seed, "delta": policy.delta,
        "objective_s": policy.objective, "risk": policy.risk,
        "states": states, "fallback": fallback,
    }


def save_policy(path, policy: Policy, model: CmdpModel, mission_hash: str = "") -> None:
    doc = policy_document(policy, model, mission_hash)
    atomic_write(path, json.dumps(doc, indent=1, sort_keys=True) + "\n")


def load_policy(path, model: CmdpModel, check_hash: bool = True) -> Policy:
    doc = json.loads(Path(path).read_text())
    if check_hash and doc["model_hash"] != model.digest():
        raise ValueError("policy file was computed for a different model")
    index = {(st.label() if hasattr(st, "label") else str(st)): s for s, st in enumerate(model.states)}
    probs = np.zeros(model.n_pairs)
    reachable = np.zeros(model.n_states, dtype=bool)
    for label, acts in doc["states"].items():
        s = index[label]
        reachable[s] = True
        row = {Action(int(model.sa_action[p])).name: p for p in range(model.sa_ptr[s], model.sa_ptr[s + 1])}
        for name, pr in acts.items():
            probs[row[name]] = pr
    for label, name in doc["fallback"].items():
        s = index[label]
        row = {Action(int(model.sa_action[p])).name: p for p in range(model.sa_ptr[s], model.sa_ptr[s + 1])}
        probs[row[name]] = 1.0
    return Policy(probs, reachable, delta=doc["delta"], seed=doc["seed"], model_hash=doc["model_hash"],
                  objective=doc["objective_s"], risk=doc["risk"],
                  meta={"mission_hash": doc["mission_hash"], "tool_version": doc["tool_version"]})


def write_lp_file(lp: SparseLp, fh, names=None) -> None:
    """CPLEX LP text format (readable by HiGHS, CBC, GLPK, Gurobi, CPLEX)."""
    names = names or [f"y{i}" for i in range(lp.n_vars)]

    def terms(coefs, cols):
        parts = []
        for k, (a, j) in enumerate(zip(coefs, cols)):
            sign = "-" if a < 0 else "+"
            parts.append(f"{sign} {abs(float(a))!r} {names[j]}")
        lines, cur = [], ""
        for p in parts:
            if len(cur) + len(p) > 200:
                lines.append(cur)
                cur = ""
            cur += " " + p
        lines.append(cur)
        return "\n  ".join(lines) if parts else " 0 " + names[0]

    fh.write("\\ occupancy-measure LP\n")
    fh.write("Minimize\n obj:")
    nz = np.flatnonzero(lp.c)
    fh.write(terms(lp.c[nz], nz) + "\n")
    fh.write("Subject To\n")
    for i in range(lp.A_eq.shape[0]):
        row = lp.A_eq.getrow(i)
        fh.write(f" flow_{i}:{terms(row.data, row.indices)} = {float(lp.b_eq[i])!r}\n")
    for i in range(lp.A_ub.shape[0]):
        row = lp.A_ub.getrow(i)
        fh.write(f" risk_{i}:{terms(row.data, row.indices)} <= {float(lp.b_ub[i])!r}\n")
    fh.write("Bounds\n")
    fh.write("End\n")
