"""Benchmark schedulers.

Every policy works on a batch of episodes. ``act(snap, k)`` returns full
actions of shape ``(S, M)`` from the registers in ``snap`` (anything with
``rows`` and ``modes``), and ``observe(beta, gamma)`` feeds back the
acknowledgments of that slot. ``decide(ws, k)`` is the single-state form.

Links are numbered ``l = 2*(i-1)`` for the uplink of plant ``i`` and
``2*(i-1) + 1`` for its downlink; as action entries they read ``+i`` / ``-i``.
"""

from __future__ import annotations

from itertools import product

import numpy as np

from .network import NetworkModel


def link_to_entry(l):
    i = l // 2 + 1
    return i if l % 2 == 0 else -i


class _Registers:
    def __init__(self, states):
        states = getattr(states, "per_plant", states)
        self.rows = [s.as_row()[None, :] for s in states]
        self.modes = np.array([[s.mode for s in states]], dtype=np.int8)


def _link_ages(snap):
    """``(S, 2N)`` ages: uplink ``tau0`` then downlink ``eta0`` for each plant."""
    cols = []
    for rows in snap.rows:
        v = (rows.shape[1] - 3) // 2
        cols += [rows[:, 0], rows[:, v + 2]]
    return np.stack(cols, axis=1)


class Policy:
    kind = "base"

    def reset(self, S):
        self.S = S

    def act(self, snap, k):
        raise NotImplementedError

    def observe(self, beta, gamma):
        pass

    def decide(self, ws, k=0):
        """Action for a single register set ``ws`` (sequence of ``AoIState``)."""
        if getattr(self, "S", None) != 1:
            self.reset(1)
        return tuple(int(a) for a in self.act(_Registers(ws), k)[0])


class RandomPolicy(Policy):
    kind = "random"

    def __init__(self, N, M, rng):
        self.N, self.M, self.rng = N, M, rng

    def act(self, snap, k):
        S = len(snap.modes)
        L = 2 * self.N
        perm = np.argsort(self.rng.random((S, L)), axis=1)[:, : min(self.M, L)]
        links = np.vectorize(link_to_entry, otypes=[np.int64])(perm) if perm.size else perm
        if self.M <= L:
            return links
        out = np.zeros((S, self.M), dtype=np.int64)
        slots = np.argsort(self.rng.random((S, self.M)), axis=1)[:, :L]
        np.put_along_axis(out, slots, links, axis=1)
        return out


def random_policy(N, M, rng):
    return RandomPolicy(N, M, rng)


class RoundRobinPolicy(Policy):
    kind = "roundrobin"

    def __init__(self, groups):
        self.groups = [list(g) for g in groups]
        self.M = len(self.groups)

    def act(self, snap, k):
        row = [g[k % len(g)] if g else 0 for g in self.groups]
        return np.tile(np.array(row, dtype=np.int64), (len(snap.modes), 1))


def round_robin_policy(groups):
    return RoundRobinPolicy(groups)


def link_groupings(N, M):
    """All labelled assignments of the ``2N`` links to ``M`` frequencies with
    group sizes differing by at most one. Links keep ascending order within
    their group.
    """
    L = 2 * N
    lo, hi = L // M, -(-L // M)
    seen = []
    for assign in product(range(M), repeat=L):
        sizes = np.bincount(assign, minlength=M)
        if sizes.min() < lo or sizes.max() > hi:
            continue
        groups = [[link_to_entry(l) for l in range(L) if assign[l] == m] for m in range(M)]
        seen.append(groups)
    return seen


class GreedyPolicy(Policy):
    """Oldest links first; each takes its best remaining frequency."""

    kind = "greedy"

    def __init__(self, net: NetworkModel):
        self.net = net
        # (2N, M): success probability of link l on each frequency
        self._succ = np.empty((2 * net.N, net.M))
        self._succ[0::2] = net.xi_s.T
        self._succ[1::2] = net.xi_c.T

    def act(self, snap, k):
        ages = _link_ages(snap)
        S, L = ages.shape
        M = self.net.M
        order = np.argsort(-ages, axis=1, kind="stable")[:, : min(M, L)]
        out = np.zeros((S, M), dtype=np.int64)
        free = np.ones((S, M), dtype=bool)
        rows = np.arange(S)
        entries = np.array([link_to_entry(l) for l in range(L)], dtype=np.int64)
        for r in range(order.shape[1]):
            link = order[:, r]
            score = np.where(free, self._succ[link], -np.inf)
            m = np.argmax(score, axis=1)
            out[rows, m] = entries[link]
            free[rows, m] = False
        return out


def greedy_policy(net):
    return GreedyPolicy(net)


UP, DOWN, WAIT = 0, 1, 2


class PersistentPolicy(Policy):
    """Per frequency, serve its plants in turn: uplink until delivered,
    downlink until delivered, then stay idle for ``v - 1`` slots.
    """

    kind = "persistent"

    def __init__(self, partition, plants, M):
        self.M = M
        self.lists = [sorted(i for i, f in partition.items() if f == m) for m in range(M)]
        self.v = [p.v for p in plants]

    def reset(self, S):
        super().reset(S)
        self.ptr = np.zeros((S, self.M), dtype=np.int64)
        self.phase = np.full((S, self.M), UP, dtype=np.int8)
        self.wait = np.zeros((S, self.M), dtype=np.int64)

    def _current(self, m):
        lst = self.lists[m]
        return np.array(lst, dtype=np.int64)[self.ptr[:, m]] if lst else None

    def act(self, snap, k):
        out = np.zeros((self.S, self.M), dtype=np.int64)
        for m in range(self.M):
            cur = self._current(m)
            if cur is None:
                continue
            ph = self.phase[:, m]
            out[:, m] = np.where(ph == UP, cur + 1, np.where(ph == DOWN, -(cur + 1), 0))
        self._last = out
        return out

    def observe(self, beta, gamma):
        rows = np.arange(self.S)
        for m in range(self.M):
            cur = self._current(m)
            if cur is None:
                continue
            ph = self.phase[:, m].copy()
            nxt = ph.copy()
            wait = self.wait[:, m].copy()
            advance = np.zeros(self.S, dtype=bool)
            up_ok = (ph == UP) & beta[rows, cur]
            nxt[up_ok] = DOWN
            dn_ok = (ph == DOWN) & gamma[rows, cur]
            vm1 = np.array(self.v, dtype=np.int64)[cur] - 1
            nxt[dn_ok] = WAIT
            wait[dn_ok] = vm1[dn_ok]
            in_wait = ph == WAIT
            wait[in_wait] -= 1
            advance |= (nxt == WAIT) & (wait <= 0)
            nxt[advance] = UP
            self.ptr[advance, m] = (self.ptr[advance, m] + 1) % len(self.lists[m])
            self.phase[:, m] = nxt
            self.wait[:, m] = wait


def persistent_policy(partition, plants, M):
    return PersistentPolicy(partition, plants, M)
