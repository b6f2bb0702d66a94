"""Closed-loop simulation of all plants sharing the wireless medium.

Slot ``k`` runs in this order:

1. the scheduled packets are delivered or lost (``beta_k``, ``gamma_k``);
2. the controller, holding ``xhat_k``, sends the command batch
   ``[K xhat_k, K Phi xhat_k, ...]`` if the downlink succeeds;
3. the actuator refreshes its buffer (or shifts it, padding with zero) and
   applies the head command ``u_k``;
4. the controller forms ``xhat_{k+1}`` from the sensor estimate it just
   received, or from its own prediction;
5. the plant moves, the sensor measures and filters with the steady gain;
6. the age registers advance with this slot's deliveries.

With this ordering ``c(s_k)`` pairs ``x_k`` with the input applied in the
previous slot, which is also how the physical quadratic cost is recorded.

Everything works on a leading batch axis so many independent episodes (or
Monte Carlo samples) advance together.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .aoi import AoIState, advance_modes, initial_state
from .cost import CostEvaluator
from .errors import InvalidAction
from .model import PlantModel
from .network import NetworkModel, sample_transmissions_batch, validate_action

UNCAPPED = 2**62


def _sqrtm_psd(Q):
    w, V = np.linalg.eigh(0.5 * (Q + Q.T))
    return V * np.sqrt(np.clip(w, 0.0, None))


@dataclass
class WncsSystem:
    plants: list
    net: NetworkModel
    weights: list
    theta: float = 0.95
    cap: int = 20
    evaluators: list = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.plants) != self.net.N or len(self.weights) != self.net.N:
            raise ValueError("need one plant and one weight pair per network plant")
        if self.evaluators is None:
            self.evaluators = [CostEvaluator(p, w, self.cap) for p, w in zip(self.plants, self.weights)]

    @property
    def N(self):
        return self.net.N

    @property
    def M(self):
        return self.net.M

    def with_cap(self, cap):
        return WncsSystem(self.plants, self.net, self.weights, self.theta, cap)


class LoopBatch:
    """One plant's physical loop replicated over ``S`` independent samples.

    The sensor keeps its own copy of the controller estimate and of the
    actuator buffer, updated only from acknowledgments; ``replica_gap`` checks
    that the copies agree.
    """

    def __init__(self, plant: PlantModel, S, rng, x0=None, stationary_sensor=False):
        self.p = plant
        self.rng = rng
        n, m, v = plant.n, plant.m, plant.v
        self.x = np.zeros((S, n)) if x0 is None else np.array(np.broadcast_to(x0, (S, n)), dtype=float)
        self.xs = self.x.copy()
        if stationary_sensor:
            self.xs -= rng.standard_normal((S, n)) @ _sqrtm_psd(plant.Ps_hat).T
        self.xhat = np.zeros((S, n))
        self.buf = np.zeros((S, v, m))
        self.xhat_sensor = self.xhat.copy()
        self.buf_sensor = self.buf.copy()
        self.u = np.zeros((S, m))
        self._cmd = np.stack([plant.Ktilde @ plant.power("Phi", j) for j in range(v)])  # (v, m, n)
        self._Lw = _sqrtm_psd(plant.Qw)
        self._Lv = _sqrtm_psd(plant.Qv)
        self._IKC = np.eye(n) - plant.Khat @ plant.C

    def _buffer(self, xhat, buf, gamma):
        fresh = np.einsum("jmn,sn->sjm", self._cmd, xhat)
        shifted = np.concatenate([buf[:, 1:], np.zeros_like(buf[:, :1])], axis=1)
        return np.where(gamma[:, None, None], fresh, shifted)

    def step(self, beta, gamma):
        p = self.p
        S = self.x.shape[0]
        beta = np.broadcast_to(np.asarray(beta, dtype=bool), (S,))
        gamma = np.broadcast_to(np.asarray(gamma, dtype=bool), (S,))
        self.buf = self._buffer(self.xhat, self.buf, gamma)
        u = self.buf[:, 0]
        src = np.where(beta[:, None], self.xs, self.xhat)
        self.xhat = src @ p.A.T + u @ p.B.T
        # sensor replica: only acknowledgments and its own buffer copy
        self.buf_sensor = self._buffer(self.xhat_sensor, self.buf_sensor, gamma)
        u_s = self.buf_sensor[:, 0]
        self.xhat_sensor = np.where(beta[:, None], self.xs, self.xhat_sensor) @ p.A.T + u_s @ p.B.T
        w = self.rng.standard_normal((S, p.n)) @ self._Lw.T
        vn = self.rng.standard_normal((S, p.C.shape[0])) @ self._Lv.T
        self.x = self.x @ p.A.T + u @ p.B.T + w
        y = self.x @ p.C.T + vn
        self.xs = (self.xs @ p.A.T + u_s @ p.B.T) @ self._IKC.T + y @ p.Khat.T
        self.u = u
        return u

    def replica_gap(self):
        return max(np.max(np.abs(self.xhat - self.xhat_sensor), initial=0.0),
                   np.max(np.abs(self.buf - self.buf_sensor), initial=0.0))


@dataclass
class SimSnapshot:
    """Physical and register state of every loop, for a batch of ``S`` runs."""

    loops: list
    rows: list  # per plant, (S, 2v+3) int registers
    modes: np.ndarray  # (S, N) link modes
    slot: int = 0

    def aoi(self, i, s=0):
        """Registers of plant ``i`` in batch member ``s``."""
        return AoIState.from_row(self.rows[i][s], self.loops[i].p.v, int(self.modes[s, i]))


@dataclass
class EpisodeResult:
    empirical_avg_cost: np.ndarray
    discounted_cost: np.ndarray
    quadratic_avg: np.ndarray
    trajectory: list | None = None


def initial_snapshot(system: WncsSystem, S, rng, physical=True):
    loops = [LoopBatch(p, S, rng) for p in system.plants] if physical else [_NoLoop(p) for p in system.plants]
    rows = [np.tile(initial_state(p.v).as_row(), (S, 1)) for p in system.plants]
    return SimSnapshot(loops, rows, np.ones((S, system.N), dtype=np.int8))


class _NoLoop:
    """Stand-in used when only the age registers are simulated."""

    def __init__(self, plant):
        self.p = plant

    def step(self, beta, gamma):
        return None


def apply_outcomes(snap: SimSnapshot, beta, gamma):
    """Advance loops and registers given delivery indicators of shape ``(S, N)``."""
    for i, loop in enumerate(snap.loops):
        loop.step(beta[:, i], gamma[:, i])
        snap.rows[i] = kernels.advance_rows(snap.rows[i], beta[:, i], gamma[:, i], loop.p.v, UNCAPPED)
    snap.modes = advance_modes(snap.modes, beta, gamma)
    snap.slot += 1
    return snap


def step(snap: SimSnapshot, actions, system: WncsSystem, rng):
    """Run one slot for every batch member; ``actions`` holds full actions ``(S, M)``."""
    actions = np.asarray(actions, dtype=np.int64).reshape(len(snap.modes), system.M)
    _check_actions(actions, system.N)
    beta, gamma = sample_transmissions_batch(actions, system.net, rng)
    apply_outcomes(snap, beta, gamma)
    return beta, gamma


def _check_actions(actions, N):
    if actions.min(initial=0) < -N or actions.max(initial=0) > N:
        raise InvalidAction("link index out of range")
    nz = np.where(actions != 0, actions, 0)
    srt = np.sort(nz, axis=1)
    dup = (srt[:, 1:] == srt[:, :-1]) & (srt[:, 1:] != 0)
    if dup.any():
        bad = actions[np.argmax(dup.any(axis=1))]
        validate_action(tuple(int(a) for a in bad), N, actions.shape[1])


def analytic_cost(system: WncsSystem, snap: SimSnapshot):
    """``c(s)`` for every batch member, each plant capped at ``system.cap``."""
    total = np.zeros(len(snap.modes))
    for ev, rows in zip(system.evaluators, snap.rows):
        total += ev.cost_rows(rows)
    return total


def physical_cost(system: WncsSystem, snap: SimSnapshot):
    total = np.zeros(len(snap.modes))
    for loop, w in zip(snap.loops, system.weights):
        total += np.einsum("si,ij,sj->s", loop.x, w.Sx, loop.x)
        total += np.einsum("si,ij,sj->s", loop.u, w.Su, loop.u)
    return total


def run_episode(system: WncsSystem, policy, T, theta=None, rng=None, record=False,
                episodes=1, physical=True):
    """Run ``episodes`` independent episodes of length ``T`` side by side.

    Costs are accumulated from slot 1 to ``T`` (the state reached after each
    slot). Returned arrays have one entry per episode.
    """
    rng = np.random.default_rng() if rng is None else rng
    theta = system.theta if theta is None else theta
    snap = initial_snapshot(system, episodes, rng, physical)
    policy.reset(episodes)
    avg = np.zeros(episodes)
    disc = np.zeros(episodes)
    quad = np.zeros(episodes)
    traj = [] if record else None
    for k in range(T):
        actions = policy.act(snap, k)
        beta, gamma = step(snap, actions, system, rng)
        policy.observe(beta, gamma)
        c = analytic_cost(system, snap)
        avg += c
        disc += theta**k * c
        if physical:
            pc = physical_cost(system, snap)
            quad += pc
        if record:
            traj.append({
                "slot": k + 1,
                "tau0": [r[:, 0].copy() for r in snap.rows],
                "eta0": [r[:, p.v + 2].copy() for r, p in zip(snap.rows, system.plants)],
                "analytic_cost": c.copy(),
                "physical_cost": pc.copy() if physical else None,
                "action": np.asarray(actions).copy(),
            })
    return EpisodeResult(avg / T, disc, quad / T if physical else np.full(episodes, np.nan), traj)


def scripted_run(plant: PlantModel, script, T=None, rng=None, samples=1, record=True,
                 stationary_sensor=False, x0=None):
    """Drive one loop with forced deliveries ``script[k] = (beta_k, gamma_k)``.

    Returns per-slot records of registers, applied inputs and the physical
    state of every sample (slot ``k+1`` values after running slot ``k``).
    """
    T = len(script) if T is None else T
    if len(script) < T:
        raise ValueError("script shorter than T")
    rng = np.random.default_rng() if rng is None else rng
    loop = LoopBatch(plant, samples, rng, x0=x0, stationary_sensor=stationary_sensor)
    row = initial_state(plant.v).as_row()[None, :]
    out = []
    for k in range(T):
        b, g = bool(script[k][0]), bool(script[k][1])
        xhat_k = loop.xhat.copy()
        u = loop.step(b, g)
        row = kernels.advance_rows(row, [b], [g], plant.v, UNCAPPED)
        if record:
            out.append({"slot": k + 1, "aoi": AoIState.from_row(row[0], plant.v), "beta": b, "gamma": g,
                        "x": loop.x.copy(), "xs": loop.xs.copy(), "xhat": loop.xhat.copy(),
                        "xhat_prev": xhat_k, "u": u.copy(), "replica_gap": loop.replica_gap()})
    if not record:
        out.append({"slot": T, "aoi": AoIState.from_row(row[0], plant.v), "x": loop.x, "u": loop.u})
    return out
