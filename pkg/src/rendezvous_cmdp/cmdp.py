"""Chance-constrained MDP for the rendezvous problem and its constrained-MDP form.

States are ``(route index, UGV waypoint, UGV target index, SOC bin)`` plus
three special states: route complete, out of charge and the absorbing
terminal.  Every motion action moves the UAV one node along its route, so
the decision graph is acyclic.

The model itself (:class:`CmdpModel`) is generic: a sparse kernel over
state-action rows with per-transition time cost and 0/1 risk cost, so the
solver and tests can also run on hand-built or random models.
"""
from __future__ import annotations

import hashlib
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import IntEnum
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .dynamics import MissionGeometry
from .energy import PowerBank

log = logging.getLogger(__name__)


class InfeasibleMission(Exception):
    """No sequence of actions can complete the UAV route."""


class Action(IntEnum):
    FORWARD_BE = 0
    FORWARD_BR = 1
    RENDEZVOUS_BE = 2
    RENDEZVOUS_BR = 3
    TO_TERMINAL = 4

    @property
    def is_rendezvous(self) -> bool:
        return self in (Action.RENDEZVOUS_BE, Action.RENDEZVOUS_BR)


MOTION = (Action.FORWARD_BE, Action.FORWARD_BR, Action.RENDEZVOUS_BE, Action.RENDEZVOUS_BR)


class Kind(IntEnum):
    IN_TASK = 0
    COMPLETE = 1
    OUT_OF_CHARGE = 2
    TERMINAL = 3


class State(NamedTuple):
    kind: Kind
    k: int = -1   # UAV route index
    g: int = -1   # UGV waypoint
    j: int = -1   # index of the UGV's next task node
    b: int = -1   # SOC bin

    def label(self) -> str:
        if self.kind == Kind.IN_TASK:
            return f"{self.k},{self.g},{self.j},{self.b}"
        return self.kind.name.lower()


@dataclass
class CmdpModel:
    """Finite CMDP with an absorbing terminal state.

    State-action pairs are rows ``p`` of the sparse matrices; the actions of
    state ``s`` occupy rows ``sa_ptr[s]:sa_ptr[s+1]``.  ``cost`` and ``risk``
    share the sparsity pattern of ``P`` and hold C(s,a,s') and C̄(s,a,s').
    """

    states: list
    sa_ptr: np.ndarray
    sa_action: np.ndarray
    P: sp.csr_matrix
    cost: sp.csr_matrix
    risk: sp.csr_matrix
    initial: int
    terminal: int
    out_of_charge: int | None = None
    stats: dict = field(default_factory=dict)

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_pairs(self) -> int:
        return len(self.sa_action)

    @property
    def sa_state(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_states), np.diff(self.sa_ptr))

    def actions(self, s: int) -> np.ndarray:
        return self.sa_action[self.sa_ptr[s]:self.sa_ptr[s + 1]]

    def expected_cost(self) -> np.ndarray:
        """C(s,a) = sum over s' of T(s'|s,a) C(s,a,s')."""
        return np.asarray(self.P.multiply(self.cost).sum(axis=1)).ravel()

    def expected_risk(self) -> np.ndarray:
        """One-step probability of entering the failure state."""
        return np.asarray(self.P.multiply(self.risk).sum(axis=1)).ravel()

    def successors(self, p: int):
        row = self.P.getrow(p)
        return row.indices, row.data

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.sa_ptr, self.sa_action, self.P.indptr, self.P.indices, self.P.data,
                    self.cost.data, self.risk.data, np.array([self.initial, self.terminal])):
            h.update(np.ascontiguousarray(arr).tobytes())
        h.update(repr([s.label() if hasattr(s, "label") else s for s in self.states]).encode())
        return h.hexdigest()[:16]

    @classmethod
    def from_rows(cls, n_states: int, rows, initial: int, terminal: int, out_of_charge=None,
                  states=None) -> "CmdpModel":
        """Assemble from ``rows = [(s, action, [(s', prob, cost), ...]), ...]``.

        Rows must be grouped by state in increasing order.  The risk cost is
        derived from ``out_of_charge``; the terminal self-loop is added when missing.
        """
        rows = list(rows)
        has = {r[0] for r in rows}
        if terminal not in has:
            rows.append((terminal, int(Action.TO_TERMINAL), [(terminal, 1.0, 0.0)]))
        rows.sort(key=lambda r: (r[0], r[1]))
        counts = np.zeros(n_states, dtype=np.int64)
        r_idx, c_idx, pv, cv = [], [], [], []
        for p, (s, a, outs) in enumerate(rows):
            counts[s] += 1
            for t, prob, c in outs:
                r_idx.append(p)
                c_idx.append(t)
                pv.append(prob)
                cv.append(c)
        sa_ptr = np.concatenate([[0], np.cumsum(counts)])
        sa_action = np.array([r[1] for r in rows], dtype=np.int64)
        sa_state = np.array([r[0] for r in rows], dtype=np.int64)
        shape = (len(rows), n_states)
        P = sp.csr_matrix((pv, (r_idx, c_idx)), shape=shape)
        C = sp.csr_matrix((cv, (r_idx, c_idx)), shape=shape)
        P.sort_indices()
        C.sort_indices()
        risk = _risk_matrix(P, sa_state, out_of_charge)
        return cls(states if states is not None else list(range(n_states)), sa_ptr, sa_action,
                   P, C, risk, initial, terminal, out_of_charge)


def _risk_matrix(P: sp.csr_matrix, sa_state: np.ndarray, ooc) -> sp.csr_matrix:
    R = P.copy()
    R.data = np.zeros_like(R.data)
    if ooc is not None:
        rows = np.repeat(np.arange(P.shape[0]), np.diff(P.indptr))
        hit = (P.indices == ooc) & (sa_state[rows] != ooc)
        R.data[hit] = 1.0
    return R


# -- model construction ------------------------------------------------------

class _Builder:
    def __init__(self, mission, jobs: int = 1):
        self.m = mission
        self.geo = MissionGeometry(mission)
        d = mission.discretization
        self.bank = PowerBank(mission.disturbance, mission.coefficients, mission.battery,
                              d.energy_samples, d.seed)
        self.top = mission.battery.top
        self.K = self.geo.n_legs
        self.speed = {Action.FORWARD_BE: mission.vehicle.v_be, Action.FORWARD_BR: mission.vehicle.v_br,
                      Action.RENDEZVOUS_BE: mission.vehicle.v_be, Action.RENDEZVOUS_BR: mission.vehicle.v_br}
        self.jobs = max(1, int(jobs))
        self.NG = self.geo.n_waypoints
        self.NJ = len(self.geo.targets)
        self.NB = mission.battery.bins

    def key(self, k, g, j, b):
        return ((k * self.NG + g) * self.NJ + j) * self.NB + b

    def decode(self, key):
        key, b = divmod(int(key), self.NB)
        key, j = divmod(key, self.NJ)
        k, g = divmod(key, self.NG)
        return k, g, j, b

    def _action_outcome(self, k, g, j, a):
        """Deterministic part of an action: duration, next UGV state and energy legs."""
        v = self.speed[a]
        if a in (Action.FORWARD_BE, Action.FORWARD_BR):
            length = float(self.geo.leg_lengths[k])
            t = length / v
            g2, j2 = self.geo.advance(g, j, t)
            return t, g2, j2, self.bank.histogram(length, v), None, None
        plan = self.geo.rendezvous(k, g, v)
        g2, j2 = self.geo.after_rendezvous(plan, j)
        first = self.bank.histogram(plan.first_leg_distance, v)
        second = self.bank.histogram(plan.second_leg_distance, v)
        return plan.total_time, g2, j2, first, second, plan

    def expand_group(self, k, g, j, bins):
        """Transitions for every state (k, g, j, b) with b in ``bins``.

        Returns a list of ``(bin, action, duration, target_keys, probs, failure)``.
        """
        out = []
        base_next = None
        last = k + 1 == self.K
        per_action = {}
        for a in MOTION:
            t, g2, j2, first, second, plan = self._action_outcome(k, g, j, a)
            if second is None:
                per_action[a] = (t, g2, j2, first, None)
            else:
                end2, p2, fail2 = second.from_bin(self.top)
                per_action[a] = (t, g2, j2, first, (end2, p2, fail2))
        for b in bins:
            b = int(b)
            allowed = list(MOTION)
            if b == 0:
                ok = [a for a in (Action.RENDEZVOUS_BE, Action.RENDEZVOUS_BR)
                      if self._rendezvous_failure(per_action[a], 0) < 1.0]
                # an empty battery with no reachable meeting point is a forced failure
                allowed = ok or [Action.RENDEZVOUS_BE]
            for a in allowed:
                t, g2, j2, first, second = per_action[a]
                base_next = self.key(k + 1, g2, j2, 0)
                if second is None:
                    end, p, fail = first.from_bin(b)
                else:
                    ok1 = first.success_from(b)
                    end2, p2, fail2 = second
                    p = ok1 * p2
                    end, p = end2[p > 0], p[p > 0]
                    fail = first.failure_from(b) + ok1 * fail2
                if last:
                    keys = np.array([self.complete_key] if p.size else [], dtype=np.int64)
                    probs = np.array([p.sum()] if p.size else [])
                else:
                    keys = base_next + end
                    probs = p
                out.append((b, a, t, keys, probs, fail))
        return out

    @staticmethod
    def _rendezvous_failure(entry, b):
        _, _, _, first, second = entry
        return first.failure_from(b) + first.success_from(b) * second[2]

    def build(self) -> CmdpModel:
        t0 = time.perf_counter()
        m = self.m
        self.complete_key = self.key(self.K, 0, 0, 0)
        ooc_key, term_key = self.complete_key + 1, self.complete_key + 2
        init_key = self.key(0, self.geo.start_waypoint, self.geo.start_target, m.start_bin)

        rows = []          # (state key, action, duration, failure)
        trans = []         # per row: (target keys, probs)
        frontier = np.array([init_key], dtype=np.int64)
        seen = [frontier]
        pool = ThreadPoolExecutor(self.jobs) if self.jobs > 1 else None
        try:
            for k in range(self.K):
                if frontier.size == 0:
                    break
                groups = {}
                for key in frontier:
                    _, g, j, b = self.decode(key)
                    groups.setdefault((g, j), []).append(b)
                items = sorted(groups.items())
                work = [(k, g, j, np.array(sorted(bs))) for (g, j), bs in items]
                if pool is None:
                    results = [self.expand_group(*w) for w in work]
                else:
                    results = list(pool.map(lambda w: self.expand_group(*w), work))
                nxt = []
                for (k_, g, j, _), res in zip(work, results):
                    for b, a, t, keys, probs, fail in res:
                        rows.append((self.key(k, g, j, b), int(a), t, fail))
                        keep = probs > 0
                        trans.append((keys[keep], probs[keep]))
                        if k + 1 < self.K:
                            nxt.append(keys[keep])
                frontier = np.unique(np.concatenate(nxt)) if nxt else np.array([], dtype=np.int64)
                seen.append(frontier)
        finally:
            if pool is not None:
                pool.shutdown()

        # complete / ooc reachable?
        reach_complete = any(t[0].size and t[0][0] == self.complete_key for t in trans)
        if not reach_complete:
            raise InfeasibleMission(
                f"no action sequence completes the UAV route (last layer reached: {len(seen) - 2})")
        rows.append((self.complete_key, int(Action.TO_TERMINAL), 0.0, 0.0))
        trans.append((np.array([term_key]), np.array([1.0])))
        rows.append((ooc_key, int(Action.TO_TERMINAL), 0.0, 0.0))
        trans.append((np.array([term_key]), np.array([1.0])))
        rows.append((term_key, int(Action.TO_TERMINAL), 0.0, 0.0))
        trans.append((np.array([term_key]), np.array([1.0])))

        keys = np.unique(np.concatenate([np.concatenate(seen), [self.complete_key, ooc_key, term_key]]))
        n = keys.size
        row_key = np.array([r[0] for r in rows], dtype=np.int64)
        row_act = np.array([r[1] for r in rows], dtype=np.int64)
        order = np.lexsort((row_act, row_key))
        row_state = np.searchsorted(keys, row_key)

        lens = np.array([tk[0].size + (1 if r[3] > 0 else 0) for tk, r in zip(trans, rows)], dtype=np.int64)
        ooc = int(np.searchsorted(keys, ooc_key))
        cols, vals, costs = [], [], []
        for (tk, pr), (_, _, t, fail) in zip(trans, rows):
            c = np.searchsorted(keys, tk)
            cc = np.full(c.size, t)
            if fail > 0:
                c = np.append(c, ooc)
                pr = np.append(pr, fail)
                cc = np.append(cc, 0.0)  # entering the failure state costs nothing
            cols.append(c)
            vals.append(pr)
            costs.append(cc)
        ptr = np.concatenate([[0], np.cumsum(lens)])
        cols = np.concatenate(cols)
        vals = np.concatenate(vals)
        costs = np.concatenate(costs)
        # reorder rows into (state, action) order
        new_ptr = np.concatenate([[0], np.cumsum(lens[order])])
        take = np.concatenate([np.arange(ptr[o], ptr[o + 1]) for o in order])
        shape = (len(rows), n)
        P = sp.csr_matrix((vals[take], cols[take], new_ptr), shape=shape)
        C = sp.csr_matrix((costs[take], cols[take], new_ptr), shape=shape)
        P.sum_duplicates()
        C.sum_duplicates()
        P.sort_indices()
        C.sort_indices()
        sa_state = row_state[order]
        sa_ptr = np.searchsorted(sa_state, np.arange(n + 1))
        risk = _risk_matrix(P, sa_state, ooc)

        states = [self.state_of(kk, ooc_key, term_key) for kk in keys]
        model = CmdpModel(states, sa_ptr, row_act[order], P, C, risk,
                          initial=int(np.searchsorted(keys, init_key)),
                          terminal=int(np.searchsorted(keys, term_key)), out_of_charge=ooc)
        model.stats = {
            "states": n, "pairs": len(rows), "transitions": int(P.nnz),
            "waypoints": self.NG, "legs": self.K, "power_clamped": self.bank.clamped,
            "build_seconds": time.perf_counter() - t0,
        }
        model.keys = keys
        model.codec = (self.NG, self.NJ, self.NB)
        return model

    def state_of(self, key, ooc_key, term_key) -> State:
        if key == self.complete_key:
            return State(Kind.COMPLETE)
        if key == ooc_key:
            return State(Kind.OUT_OF_CHARGE)
        if key == term_key:
            return State(Kind.TERMINAL)
        return State(Kind.IN_TASK, *self.decode(key))


def build_cmdp(mission, jobs: int = 1) -> CmdpModel:
    """Compile a mission into its CMDP, expanding only states reachable from the start."""
    model = _Builder(mission, jobs).build()
    log.info("built CMDP: %d states, %d state-action pairs in %.2fs",
             model.stats["states"], model.stats["pairs"], model.stats["build_seconds"])
    return model


# -- policy evaluation ----------------------------------------------------------

def policy_matrix(model: CmdpModel, pi: np.ndarray) -> sp.csr_matrix:
    """State-to-state kernel under randomized policy ``pi`` (one weight per state-action row)."""
    n = model.n_states
    W = sp.csr_matrix((pi, (model.sa_state, np.arange(model.n_pairs))), shape=(n, model.n_pairs))
    return (W @ model.P).tocsr()


def occupancy(model: CmdpModel, pi: np.ndarray) -> np.ndarray:
    """Expected visits to each non-terminal state from the initial state."""
    n = model.n_states
    M = policy_matrix(model, pi)
    live = np.ones(n, dtype=bool)
    live[model.terminal] = False
    idx = np.flatnonzero(live)
    Q = M[idx][:, idx]
    e0 = np.zeros(idx.size)
    e0[np.searchsorted(idx, model.initial)] = 1.0
    A = (sp.identity(idx.size, format="csc") - Q.T.tocsc())
    x = np.zeros(n)
    x[idx] = spsolve(A, e0) if idx.size > 1 else e0 / A.toarray()[0, 0]
    return x


def risk_of_policy(model: CmdpModel, pi) -> float:
    """Probability of ever entering the failure state under ``pi``.

    ``pi`` is either a per-row probability vector or an object with a ``probs`` attribute.
    """
    pi = np.asarray(getattr(pi, "probs", pi), dtype=float)
    x = occupancy(model, pi)
    y = x[model.sa_state] * pi
    return float(y @ model.expected_risk())


def expected_cost_of_policy(model: CmdpModel, pi) -> float:
    pi = np.asarray(getattr(pi, "probs", pi), dtype=float)
    x = occupancy(model, pi)
    return float((x[model.sa_state] * pi) @ model.expected_cost())


def reachable_states(model: CmdpModel) -> np.ndarray:
    """Breadth-first closure of the initial state over all actions (boolean mask)."""
    seen = np.zeros(model.n_states, dtype=bool)
    seen[model.initial] = True
    frontier = [model.initial]
    P = model.P
    while frontier:
        nxt = []
        for s in frontier:
            for p in range(model.sa_ptr[s], model.sa_ptr[s + 1]):
                for t in P.indices[P.indptr[p]:P.indptr[p + 1]]:
                    if not seen[t]:
                        seen[t] = True
                        nxt.append(t)
        frontier = nxt
    return seen


# -- export ------------------------------------------------------------------

def export_model(model: CmdpModel, fh) -> None:
    """Plain-text dump readable by external CMDP tools.

    Format::

        # cmdp v1
        states <n> initial <i> terminal <t> failure <f>
        S <index> <label>                       one line per state
        A <state> <action> <exp cost> <exp risk> one line per state-action pair,
        T <next state> <prob> <cost> <risk>     followed by its transitions
    """
    c_sa = model.expected_cost()
    r_sa = model.expected_risk()
    fh.write("# cmdp v1\n")
    fh.write(f"states {model.n_states} initial {model.initial} terminal {model.terminal} "
             f"failure {-1 if model.out_of_charge is None else model.out_of_charge}\n")
    for i, s in enumerate(model.states):
        fh.write(f"S {i} {s.label() if hasattr(s, 'label') else s}\n")
    P, C, R = model.P, model.cost, model.risk
    names = {int(a): a.name for a in Action}
    for s in range(model.n_states):
        for p in range(model.sa_ptr[s], model.sa_ptr[s + 1]):
            a = int(model.sa_action[p])
            fh.write(f"A {s} {names.get(a, a)} {float(c_sa[p])!r} {float(r_sa[p])!r}\n")
            for q in range(P.indptr[p], P.indptr[p + 1]):
                fh.write(f"T {P.indices[q]} {float(P.data[q])!r} {float(C.data[q])!r} {float(R.data[q])!r}\n")
