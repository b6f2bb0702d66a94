"""Truncated scheduling MDP and discounted value iteration.

State index layout: plant ``i``'s registers ``r = [tau_0..tau_v, tail,
eta_0..eta_v]`` (each in ``1..L``) form the mixed-radix number
``sum_k (r_k - 1) L^k``. Plants are concatenated with plant 1 least
significant. In reduced mode a final block of ``N`` bits holds the link modes,
with bit ``i`` set when plant ``i+1`` is in downlink mode.

Transitions are stored in CSR form with one row per ``(state, action)`` pair,
row index ``state * n_actions + action``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import product

import numpy as np

from . import kernels
from .aoi import advance_modes, row_width
from .errors import CapacityExceeded, FormatError
from .network import (DOWNLINK, UPLINK, enumerate_full_actions, enumerate_reduced_actions,
                      resolve_reduced)
from .policies import Policy

MAX_STATES = 1_000_000


@dataclass
class TruncatedMdp:
    L: int
    mode: str
    vs: list
    actions: list
    full_actions: list
    indptr: np.ndarray
    indices: np.ndarray
    probs: np.ndarray
    costs: np.ndarray
    theta: float

    @property
    def n_states(self):
        return len(self.costs)

    @property
    def n_actions(self):
        return len(self.actions)

    def plant_sizes(self):
        return [self.L ** row_width(v) for v in self.vs]

    def encode(self, rows, modes=None):
        """State indices for per-plant register rows (saturated at ``L``)."""
        idx = np.zeros(len(rows[0]), dtype=np.int64)
        stride = 1
        for r, v in zip(rows, self.vs):
            r = np.minimum(np.asarray(r, dtype=np.int64), self.L)
            idx += stride * ((r - 1) @ (self.L ** np.arange(row_width(v), dtype=np.int64)))
            stride *= self.L ** row_width(v)
        if self.mode == "reduced":
            bits = (np.asarray(modes) == DOWNLINK).astype(np.int64)
            idx += stride * (bits @ (2 ** np.arange(bits.shape[1], dtype=np.int64)))
        return idx

    def decode(self, idx):
        """Inverse of :meth:`encode`: ``(rows, modes)`` for an index array."""
        idx = np.asarray(idx, dtype=np.int64)
        rows = []
        for v in self.vs:
            W = row_width(v)
            r = np.empty((len(idx), W), dtype=np.int64)
            for k in range(W):
                r[:, k] = idx % self.L + 1
                idx = idx // self.L
            rows.append(r)
        N = len(self.vs)
        modes = np.full((len(rows[0]), N), UPLINK, dtype=np.int8)
        if self.mode == "reduced":
            for i in range(N):
                modes[(idx >> i) & 1 == 1, i] = DOWNLINK
        return rows, modes


def state_count(vs, L, mode):
    n = 1
    for v in vs:
        n *= L ** row_width(v)
    return n * (2 ** len(vs) if mode == "reduced" else 1)


def _outcome_table(net, action):
    """Joint delivery outcomes of one full action: list of (beta, gamma, prob)."""
    links = []
    for m, a in enumerate(action):
        if a > 0:
            links.append(("b", a - 1, net.xi_s[m, a - 1]))
        elif a < 0:
            links.append(("g", -a - 1, net.xi_c[m, -a - 1]))
    out = []
    for bits in product((0, 1), repeat=len(links)):
        beta = np.zeros(net.N, dtype=bool)
        gamma = np.zeros(net.N, dtype=bool)
        p = 1.0
        for (kind, i, q), b in zip(links, bits):
            p *= q if b else 1.0 - q
            (beta if kind == "b" else gamma)[i] = bool(b)
        if p > 0.0:
            out.append((beta, gamma, p))
    return out


def build_truncated_mdp(system, L, mode="full"):
    """Enumerate states, transitions and costs of the saturated MDP."""
    if mode not in ("full", "reduced"):
        raise ValueError("mode must be 'full' or 'reduced'")
    vs = [p.v for p in system.plants]
    S = state_count(vs, L, mode)
    if S > MAX_STATES:
        raise CapacityExceeded(f"{S} states exceed the limit of {MAX_STATES}")
    N, M = system.N, system.M
    full = enumerate_full_actions(N, M)
    actions = full if mode == "full" else enumerate_reduced_actions(N, M)
    A = len(actions)
    if S * A > 50 * MAX_STATES:
        raise CapacityExceeded(f"{S * A} state-action pairs are too many")

    shell = TruncatedMdp(L, mode, vs, actions, full, None, None, None, None, system.theta)
    all_idx = np.arange(S, dtype=np.int64)
    rows, modes = shell.decode(all_idx)
    costs = np.zeros(S)
    for ev, r in zip(system.evaluators, rows):
        costs += ev.cost_rows(r)

    full_index = {a: j for j, a in enumerate(full)}
    outcomes = [_outcome_table(system.net, a) for a in full]
    row_ids, cols, ps = [], [], []
    # states sharing a mode pattern resolve each action to the same full action
    pattern = (modes == DOWNLINK) @ (2 ** np.arange(N))
    for pat in np.unique(pattern):
        sel = all_idx[pattern == pat]
        pat_modes = modes[sel[0]]
        sub_rows = [r[sel] for r in rows]
        for a_idx, a in enumerate(actions):
            fa = a if mode == "full" else resolve_reduced(a, pat_modes)
            for beta, gamma, p in outcomes[full_index[fa]]:
                nxt_rows = [kernels.advance_rows(r, np.full(len(sel), beta[i]), np.full(len(sel), gamma[i]), v, L)
                            for i, (r, v) in enumerate(zip(sub_rows, vs))]
                nxt_modes = np.tile(pat_modes, (len(sel), 1))
                if mode == "reduced":
                    nxt_modes = advance_modes(nxt_modes, np.tile(beta, (len(sel), 1)), np.tile(gamma, (len(sel), 1)))
                row_ids.append(sel * A + a_idx)
                cols.append(shell.encode(nxt_rows, nxt_modes))
                ps.append(np.full(len(sel), p))
    row_ids = np.concatenate(row_ids)
    cols = np.concatenate(cols)
    ps = np.concatenate(ps)
    # merge duplicate successors and sort into CSR order
    key = row_ids * S + cols
    uniq, inv = np.unique(key, return_inverse=True)
    merged = np.bincount(inv.reshape(-1), weights=ps)
    r_u, c_u = uniq // S, uniq % S
    indptr = np.zeros(S * A + 1, dtype=np.int64)
    np.add.at(indptr, r_u + 1, 1)
    indptr = np.cumsum(indptr)
    shell.indptr, shell.indices, shell.probs, shell.costs = indptr, c_u, merged, costs
    return shell


def _stop_threshold(tol, theta):
    return np.inf if theta == 0 else tol * (1 - theta) / (2 * theta)


def _q_values(mdp, V, theta=None):
    theta = mdp.theta if theta is None else theta
    ev = kernels.expect_rows(mdp.indptr, mdp.indices, mdp.probs, V).reshape(mdp.n_states, mdp.n_actions)
    return mdp.costs[:, None] + theta * ev


def value_iteration(mdp, tol=1e-6, max_iter=1_000_000):
    """Return optimal values and a greedy policy (ties to the lowest action index)."""
    V = np.zeros(mdp.n_states)
    thr = _stop_threshold(tol, mdp.theta)
    for _ in range(max_iter):
        Vn = _q_values(mdp, V).min(axis=1)
        change = np.max(np.abs(Vn - V))
        V = Vn
        if change <= thr:
            break
    policy = np.argmin(_q_values(mdp, V), axis=1)
    return V, policy


def bellman_residual(mdp, V):
    return float(np.max(np.abs(_q_values(mdp, V).min(axis=1) - V)))


def policy_evaluation(mdp, policy, tol=1e-6, max_iter=1_000_000):
    """Values of a deterministic (``(S,)`` ints) or randomised (``(S, A)``) policy."""
    policy = np.asarray(policy)
    if policy.ndim == 1:
        pi = np.zeros((mdp.n_states, mdp.n_actions))
        pi[np.arange(mdp.n_states), policy] = 1.0
    else:
        pi = policy
    V = np.zeros(mdp.n_states)
    thr = _stop_threshold(tol, mdp.theta)
    for _ in range(max_iter):
        Vn = (pi * _q_values(mdp, V)).sum(axis=1)
        change = np.max(np.abs(Vn - V))
        V = Vn
        if change <= thr:
            break
    return V


def tabulate_policy(mdp, policy: Policy):
    """Action index chosen by a (stateless) batch policy in every MDP state."""
    rows, modes = mdp.decode(np.arange(mdp.n_states))

    class _Snap:
        pass

    snap = _Snap()
    snap.rows, snap.modes = rows, modes
    policy.reset(mdp.n_states)
    acts = policy.act(snap, 0)
    lookup = {a: j for j, a in enumerate(mdp.actions)}
    if mdp.mode == "full":
        return np.array([lookup[tuple(int(x) for x in a)] for a in acts])
    out = []
    for a in acts:
        red = tuple(abs(int(x)) for x in a)
        out.append(lookup[red])
    return np.array(out)


def uniform_random_policy(mdp):
    """Action distribution of :class:`~wncs.policies.RandomPolicy` as an ``(S, A)`` matrix."""
    N = len(mdp.vs)
    busy = min(len(mdp.full_actions[0]), 2 * N)
    mask = np.array([sum(1 for x in a if x) == busy for a in mdp.full_actions], dtype=float)
    if mdp.mode != "full":
        raise ValueError("the random benchmark acts in the full action space")
    return np.tile(mask / mask.sum(), (mdp.n_states, 1))


def reachable_states(mdp, start, policy=None):
    """States reachable from ``start`` (under ``policy`` if given, else any action)."""
    seen = np.zeros(mdp.n_states, dtype=bool)
    frontier = [int(start)]
    seen[start] = True
    while frontier:
        s = frontier.pop()
        acts = range(mdp.n_actions) if policy is None else [int(policy[s])]
        for a in acts:
            r = s * mdp.n_actions + a
            for t in mdp.indices[mdp.indptr[r]:mdp.indptr[r + 1]]:
                if not seen[t]:
                    seen[t] = True
                    frontier.append(int(t))
    return np.flatnonzero(seen)


def save_table(path, mdp, values, policy):
    meta = {"L": mdp.L, "mode": mdp.mode, "vs": mdp.vs, "n_actions": mdp.n_actions, "theta": mdp.theta}
    with open(path, "w") as f:
        f.write("# " + json.dumps(meta) + "\n")
        f.write("state_index,value,action_index\n")
        for s, (val, a) in enumerate(zip(values, policy)):
            f.write(f"{s},{float(val)!r},{int(a)}\n")


def load_table(path):
    with open(path) as f:
        first = f.readline()
        if not first.startswith("# "):
            raise FormatError("missing metadata line")
        meta = json.loads(first[2:])
        header = f.readline().strip()
        if header != "state_index,value,action_index":
            raise FormatError("unexpected table header")
        data = np.loadtxt(f, delimiter=",", ndmin=2)
    return meta, data[:, 1], data[:, 2].astype(np.int64)


class TablePolicy(Policy):
    """Scheduler that looks up a value-iteration table."""

    kind = "vi"

    def __init__(self, meta, policy, N, M):
        self.meta = meta
        self.table = policy
        self.mdp = TruncatedMdp(meta["L"], meta["mode"], meta["vs"], None, None, None, None, None, None,
                                meta["theta"])
        self.actions = (enumerate_full_actions if meta["mode"] == "full" else enumerate_reduced_actions)(N, M)

    def act(self, snap, k):
        idx = self.mdp.encode(snap.rows, snap.modes)
        acts = [self.actions[a] for a in self.table[idx]]
        if self.meta["mode"] == "reduced":
            acts = [resolve_reduced(a, m) for a, m in zip(acts, snap.modes)]
        return np.array(acts, dtype=np.int64)
