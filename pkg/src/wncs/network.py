"""Channel model and the two encodings of a scheduling action.

Actions are tuples of length ``M`` (one entry per frequency). In the full
encoding an entry ``i > 0`` carries the uplink of plant ``i``, ``-i`` its
downlink and ``0`` leaves the frequency idle. The reduced encoding only names
the plant; the direction comes from that plant's link mode (+1 uplink,
-1 downlink).

Enumeration order is fixed so that list positions can serve as network output
indices. Entries are compared through the alphabet ``0 < 1 < ... < N < -1 <
... < -N``, which puts the all-idle action first in both spaces.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from math import comb, perm

import numpy as np

from .errors import CapacityExceeded, InvalidAction

UPLINK = 1
DOWNLINK = -1
MAX_ACTIONS = 1_000_000


@dataclass(frozen=True, eq=False)
class NetworkModel:
    N: int
    M: int
    xi_s: np.ndarray  # (M, N) uplink success probabilities
    xi_c: np.ndarray  # (M, N) downlink success probabilities

    def __post_init__(self):
        xs = np.asarray(self.xi_s, dtype=float).reshape(self.M, self.N)
        xc = np.asarray(self.xi_c, dtype=float).reshape(self.M, self.N)
        for name, arr in (("xi_s", xs), ("xi_c", xc)):
            if np.any(arr < 0) or np.any(arr > 1) or not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} entries must lie in [0, 1]")
        object.__setattr__(self, "xi_s", xs)
        object.__setattr__(self, "xi_c", xc)

    @classmethod
    def uniform_random(cls, N, M, low, high, rng):
        """Channels with every success probability drawn from U(low, high)."""
        return cls(N, M, rng.uniform(low, high, (M, N)), rng.uniform(low, high, (M, N)))


@dataclass(frozen=True)
class TransmissionOutcome:
    beta: np.ndarray
    gamma: np.ndarray


def full_action_count(N, M):
    return sum(comb(M, m) * perm(2 * N, m) for m in range(M + 1))


def reduced_action_count(N, M):
    return sum(comb(M, m) * perm(N, m) for m in range(M + 1))


def validate_action(action, N, M, reduced=False):
    if len(action) != M:
        raise InvalidAction(f"action has {len(action)} entries, expected {M}")
    low = 0 if reduced else -N
    seen = set()
    for a in action:
        if not isinstance(a, (int, np.integer)) or not low <= a <= N:
            raise InvalidAction(f"entry {a!r} outside [{low}, {N}]")
        if a != 0:
            if a in seen:
                raise InvalidAction(f"link {a} assigned twice")
            seen.add(a)


def _enumerate(alphabet, M, count):
    if count > MAX_ACTIONS:
        raise CapacityExceeded(f"{count} actions exceed the limit of {MAX_ACTIONS}")
    out = []
    for combo in product(alphabet, repeat=M):
        nz = [a for a in combo if a != 0]
        if len(nz) == len(set(nz)):
            out.append(combo)
    return out


def enumerate_full_actions(N, M):
    alphabet = [0, *range(1, N + 1), *range(-1, -N - 1, -1)]
    return _enumerate(alphabet, M, full_action_count(N, M))


def enumerate_reduced_actions(N, M):
    return _enumerate(range(N + 1), M, reduced_action_count(N, M))


def resolve_reduced(action, modes):
    """Map a reduced action to the full one using per-plant link modes."""
    return tuple(int(a * modes[a - 1]) if a else 0 for a in action)


def sample_transmissions(action, net, rng):
    """Draw deliveries for one slot; one uniform per scheduled link."""
    validate_action(action, net.N, net.M)
    beta = np.zeros(net.N, dtype=bool)
    gamma = np.zeros(net.N, dtype=bool)
    for m, a in enumerate(action):
        if a > 0:
            beta[a - 1] = rng.random() < net.xi_s[m, a - 1]
        elif a < 0:
            gamma[-a - 1] = rng.random() < net.xi_c[m, -a - 1]
    return TransmissionOutcome(beta, gamma)


def sample_transmissions_batch(actions, net, rng):
    """Vectorised draw for a batch of full actions of shape ``(S, M)``.

    Consumes one ``(S, M)`` block of uniforms per call, whether or not a
    frequency is in use, so batch trajectories are reproducible given a seed.
    """
    actions = np.asarray(actions)
    S = actions.shape[0]
    u = rng.random((S, net.M))
    beta = np.zeros((S, net.N), dtype=bool)
    gamma = np.zeros((S, net.N), dtype=bool)
    rows = np.arange(S)
    for m in range(net.M):
        a = actions[:, m]
        up = a > 0
        if up.any():
            i = a[up] - 1
            beta[rows[up], i] = u[up, m] < net.xi_s[m, i]
        dn = a < 0
        if dn.any():
            i = -a[dn] - 1
            gamma[rows[dn], i] = u[dn, m] < net.xi_c[m, i]
    return beta, gamma
