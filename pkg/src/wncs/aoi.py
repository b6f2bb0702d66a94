"""Age-of-information registers of one control loop.

For a loop with controllability index ``v`` the state keeps

* ``tau[0]``: slots since the last uplink delivery;
* ``eta[0]``: slots since the last downlink delivery;
* ``eta[j]`` (j >= 1): gap between the j-th and (j+1)-th latest downlink
  deliveries;
* ``tau[j]`` (j >= 1): uplink age in force when the j-th latest downlink
  delivery happened;
* ``tail``: the same uplink age one delivery further back.

``tail`` is not part of the scheduler-visible state. It is carried only
because the expected size of the latest command batch depends on it (see
:mod:`wncs.cost`). Without it the per-step input cost would not be a function
of the registers.

Batched code stores a plant's registers as integer rows laid out as
``[tau_0..tau_v, tail, eta_0..eta_v]`` (width ``2v + 3``).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import IndexOrder
from .network import DOWNLINK, UPLINK


@dataclass(frozen=True)
class AoIState:
    tau: tuple
    eta: tuple
    mode: int = UPLINK
    tail: int = 1

    def __post_init__(self):
        if len(self.tau) != len(self.eta) or len(self.tau) < 2:
            raise ValueError("tau and eta must have the same length v+1 >= 2")
        if min(self.tau) < 1 or min(self.eta) < 1 or self.tail < 1:
            raise ValueError("AoI entries must be positive")
        if self.mode not in (UPLINK, DOWNLINK):
            raise ValueError("mode must be +1 or -1")

    @property
    def v(self):
        return len(self.tau) - 1

    def key(self):
        """Hashable key of the registers that determine the per-step cost."""
        return (*self.tau, self.tail, *self.eta)

    def as_row(self):
        return np.array(self.key(), dtype=np.int64)

    @classmethod
    def from_row(cls, row, v, mode=UPLINK):
        row = [int(x) for x in row]
        return cls(tuple(row[: v + 1]), tuple(row[v + 2:]), mode, row[v + 1])


def initial_state(v):
    """All-ones registers, as right after a fully successful cycle."""
    if v < 1:
        raise ValueError("v must be positive")
    return AoIState((1,) * (v + 1), (1,) * (v + 1), UPLINK, 1)


def aoi_advance(s, beta, gamma):
    """Registers of the next slot given this slot's deliveries.

    On a downlink delivery the histories shift by one place and take the
    values held before the uplink counter is updated.
    """
    tau0 = 1 if beta else s.tau[0] + 1
    if gamma:
        tau = (tau0, *s.tau[:-1])
        eta = (1, *s.eta[:-1])
        tail = s.tau[-1]
    else:
        tau = (tau0, *s.tau[1:])
        eta = (s.eta[0] + 1, *s.eta[1:])
        tail = s.tail
    return AoIState(tau, eta, s.mode, tail)


def mode_advance(mode, beta, gamma):
    if mode == UPLINK and beta:
        return DOWNLINK
    if mode == DOWNLINK and gamma:
        return UPLINK
    return mode


def delta(s, i, j):
    """Gap between the uplink instants indexed ``i`` and ``j``."""
    if i > j:
        raise IndexOrder(f"delta needs i <= j, got {i} > {j}")
    return sum(s.eta[i:j]) + s.tau[j] - s.tau[i]


def shift_to_last_control(s):
    """Registers with the newest delivery gap collapsed (``tau0 <- tau1``, ``eta0 <- 1``)."""
    return replace(s, tau=(s.tau[1], *s.tau[1:]), eta=(1, *s.eta[1:]))


def state_at_last_delivery(s):
    """Registers as they stood in the slot of the newest downlink delivery.

    This is the slot whose remote estimate produced the command batch now in
    the actuator buffer. The oldest gap and ``tail`` of the result are not
    recoverable and are set to 1. The estimate covariance does not read them.
    """
    return AoIState((*s.tau[1:], s.tail), (*s.eta[1:], 1), s.mode, 1)


def truncate(s, L):
    if L < 1:
        raise ValueError("L must be positive")
    return AoIState(tuple(min(t, L) for t in s.tau), tuple(min(e, L) for e in s.eta),
                    s.mode, min(s.tail, L))


def row_width(v):
    return 2 * v + 3


def advance_rows(rows, beta, gamma, v, cap):
    """Pure-numpy batched :func:`aoi_advance` followed by saturation at ``cap``."""
    rows = np.asarray(rows, dtype=np.int64)
    out = rows.copy()
    beta = np.asarray(beta, dtype=bool)
    gamma = np.asarray(gamma, dtype=bool)
    e0 = v + 2
    out[:, 0] = np.where(beta, 1, rows[:, 0] + 1)
    g = gamma
    if g.any():
        # tau_1..tau_v, tail <- old tau_0..tau_v ; eta_1..eta_v <- old eta_0..eta_{v-1}
        out[g, 1:v + 2] = rows[g, 0:v + 1]
        out[g, e0 + 1:] = rows[g, e0:e0 + v]
    out[:, e0] = np.where(g, 1, rows[:, e0] + 1)
    np.minimum(out, cap, out=out)
    return out


def advance_modes(modes, beta, gamma):
    modes = np.asarray(modes)
    flip_up = (modes == UPLINK) & np.asarray(beta, dtype=bool)
    flip_dn = (modes == DOWNLINK) & np.asarray(gamma, dtype=bool)
    return np.where(flip_up, DOWNLINK, np.where(flip_dn, UPLINK, modes)).astype(modes.dtype)
