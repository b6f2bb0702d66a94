"""Per-step expected costs as functions of the age registers.

``state_covariance`` gives ``E[x_k x_k']`` and ``estimate_covariance``
``E[xhat_k xhat_k']`` for a loop whose registers read ``s`` at slot ``k``.
Both are finite sums of matrix products built from ``A``, ``Phi = A + B K``,
``Z = (I - Khat C) A`` and the noise covariances. The number of terms is
set by the gaps between delivery instants, ``delta(s, i, j)``.

The input cost pairs ``s_k`` with the command applied in slot ``k-1``. That
command is ``K Phi^(eta0-1) xhat_t`` where ``t`` is the slot of the newest
downlink delivery, so its second moment is read off the estimate covariance
at the registers of slot ``t``.

``mc_oracle`` checks all of this by brute-force simulation.
"""

from __future__ import annotations

import warnings

import numpy as np

from .aoi import AoIState, delta, state_at_last_delivery, truncate
from .errors import LengthMismatch, ScriptTooShort


def _gap(s, i, j):
    # Saturated registers of unreachable states may give a negative gap.
    return max(delta(s, i, j), 0)


def _symmetrize(V):
    asym = np.max(np.abs(V - V.T), initial=0.0)
    scale = max(np.max(np.abs(V), initial=0.0), 1e-300)
    if asym > 1e-8 * scale:
        warnings.warn(f"covariance asymmetry {asym:.2e} relative {asym / scale:.2e}", RuntimeWarning)
    return 0.5 * (V + V.T)


def _command_terms(plant, s):
    """``Phi^(eta_0+..+eta_{j-2}) (A^eta_{j-1} - Phi^eta_{j-1}) A^tau_j`` for j = 1..v."""
    A = lambda k: plant.power("A", k)
    P = lambda k: plant.power("Phi", k)
    t, e = s.tau, s.eta
    return [P(sum(e[: j - 1])) @ (A(e[j - 1]) - P(e[j - 1])) @ A(t[j]) for j in range(1, plant.v + 1)]


def _noise_blocks(plant, s, core, with_estimate):
    """Process/measurement noise contributions between successive uplinks."""
    A = lambda k: plant.power("A", k)
    P = lambda k: plant.power("Phi", k)
    Zp = lambda k: plant.power("Z", k)
    t, e, v = s.tau, s.eta, plant.v
    IKC = np.eye(plant.n) - plant.Khat @ plant.C
    out = np.zeros((plant.n, plant.n))
    for n in range(1, v):
        lead = P(sum(e[:n]))
        for i in range(_gap(s, n, n + 1)):
            E = lead @ A(t[n] + i)
            F = np.zeros((plant.n, plant.Khat.shape[1]))
            for j in range(1, n + 1):
                Zj = Zp(_gap(s, j, n) + i)
                E = E + core[j - 1] @ Zj @ IKC
                F = F + core[j - 1] @ Zj @ plant.Khat
            if with_estimate:
                Z0 = A(t[0]) @ Zp(_gap(s, 0, n) + i)
                E = E - Z0 @ IKC
                F = F - Z0 @ plant.Khat
            out += E @ plant.Qw @ E.T + F @ plant.Qv @ F.T
    return out


def state_covariance(plant, s: AoIState):
    """``E[x x']`` at registers ``s``."""
    core = _command_terms(plant, s)
    D = sum(c @ plant.power("Z", _gap(s, j, plant.v)) for j, c in enumerate(core, start=1))
    V = D @ plant.Ps_hat @ D.T + _noise_blocks(plant, s, core, False)
    for i in range(s.eta[0] + s.tau[1]):
        Ai = plant.power("A", i)
        V += Ai @ plant.Qw @ Ai.T
    return _symmetrize(V)


def estimate_covariance(plant, s: AoIState):
    """``E[xhat xhat']`` at registers ``s``."""
    A = lambda k: plant.power("A", k)
    Zp = lambda k: plant.power("Z", k)
    t = s.tau
    core = _command_terms(plant, s)
    D = sum(c @ Zp(_gap(s, j, plant.v)) for j, c in enumerate(core, start=1))
    D = D - A(t[0]) @ Zp(_gap(s, 0, plant.v))
    V = D @ plant.Ps_hat @ D.T + _noise_blocks(plant, s, core, True)
    IKC = np.eye(plant.n) - plant.Khat @ plant.C
    for i in range(_gap(s, 0, 1)):
        G1 = A(t[0] + i) - A(t[0]) @ Zp(i) @ IKC
        G2 = A(t[0]) @ Zp(i) @ plant.Khat
        V += G1 @ plant.Qw @ G1.T + G2 @ plant.Qv @ G2.T
    return _symmetrize(V)


def cost_x(plant, weights, s):
    return float(np.trace(weights.Sx @ state_covariance(plant, s)))


def cost_u(plant, weights, s):
    """Expected input cost of the command applied just before registers ``s``."""
    k = s.eta[0] - 1
    if k >= plant.v:
        return 0.0
    G = plant.Ktilde @ plant.power("Phi", k)
    Vh = estimate_covariance(plant, state_at_last_delivery(s))
    return float(np.trace(G.T @ weights.Su @ G @ Vh))


class CostEvaluator:
    """Memoised ``c(s) = cost_x + cost_u`` for one plant, registers capped at ``cap``."""

    def __init__(self, plant, weights, cap=20):
        if cap < 1:
            raise ValueError("cap must be positive")
        self.plant = plant
        self.weights = weights
        self.cap = int(cap)
        self.cache = {}
        self._radix = None

    def __call__(self, s: AoIState):
        s = truncate(s, self.cap)
        key = s.key()
        c = self.cache.get(key)
        if c is None:
            c = self.cache[key] = self.fresh(s)
        return c

    def fresh(self, s):
        s = truncate(s, self.cap)
        return max(cost_x(self.plant, self.weights, s) + cost_u(self.plant, self.weights, s), 0.0)

    def cost_rows(self, rows):
        """Vectorised lookup for register rows of shape ``(S, 2v+3)``."""
        rows = np.minimum(np.asarray(rows, dtype=np.int64), self.cap)
        W = rows.shape[1]
        if self._radix is None:
            self._radix = self.cap ** np.arange(W, dtype=np.int64)
        codes = (rows - 1) @ self._radix
        uniq, first, inv = np.unique(codes, return_index=True, return_inverse=True)
        v = self.plant.v
        vals = np.empty(len(uniq))
        for u, (code, idx) in enumerate(zip(uniq, first)):
            vals[u] = self(AoIState.from_row(rows[idx], v))
        return vals[inv.reshape(-1)]


def per_step_cost(evaluators, ws):
    """Sum of the plants' costs; ``ws`` is a sequence of per-plant registers."""
    states = getattr(ws, "per_plant", ws)
    if len(evaluators) != len(states):
        raise LengthMismatch(f"{len(evaluators)} evaluators for {len(states)} plant states")
    return float(sum(ev(s) for ev, s in zip(evaluators, states)))


def script_is_sufficient(script, v, target_slot):
    """True when every register the closed forms read at ``target_slot`` was set by the script.

    Needs ``v + 2`` downlink deliveries before the target and an uplink
    delivery before the oldest of those.
    """
    deliveries = [k for k in range(min(target_slot, len(script))) if script[k][1]]
    if len(deliveries) < v + 2:
        return False
    oldest = deliveries[-(v + 2)]
    return any(script[k][0] for k in range(oldest))


def mc_oracle(plant, weights, script, target_slot, n_samples, rng, x0=None, chunk=50_000):
    """Simulate the loop under forced deliveries and average the costs.

    Returns ``(mean_x, mean_u, se_x, se_u, realized_state)`` where ``mean_x``
    averages ``x'Sx x`` at ``target_slot`` and ``mean_u`` averages ``u'Su u``
    for the input applied in the slot before.
    """
    from .simulator import scripted_run

    if target_slot > len(script) or not script_is_sufficient(script, plant.v, target_slot):
        raise ScriptTooShort(f"script cannot determine the registers at slot {target_slot}")
    sx, sx2, su, su2, done = 0.0, 0.0, 0.0, 0.0, 0
    state = None
    while done < n_samples:
        S = min(chunk, n_samples - done)
        rec = scripted_run(plant, script, T=target_slot, rng=rng, samples=S, record=False,
                           stationary_sensor=True, x0=x0)[-1]
        cx = np.einsum("si,ij,sj->s", rec["x"], weights.Sx, rec["x"])
        cu = np.einsum("si,ij,sj->s", rec["u"], weights.Su, rec["u"])
        sx += cx.sum(); sx2 += (cx**2).sum()
        su += cu.sum(); su2 += (cu**2).sum()
        done += S
        state = rec["aoi"]
    mx, mu = sx / done, su / done
    se = lambda s1, s2, m: float(np.sqrt(max(s2 / done - m * m, 0.0) / max(done - 1, 1)))
    return mx, mu, se(sx, sx2, mx), se(su, su2, mu), state


def random_patterns(v, count, rng, max_entry=4, length=24, p_up=0.6, p_down=0.6, max_tries=100_000):
    """Distinct forced-delivery scripts whose final registers are all ``<= max_entry``.

    Each item is ``(script, target_slot, state)`` with ``target_slot ==
    len(script)``. The script is long enough for :func:`mc_oracle`.
    """
    from .aoi import aoi_advance, initial_state

    out, seen = [], set()
    for _ in range(max_tries):
        if len(out) >= count:
            break
        script = [(bool(rng.random() < p_up), bool(rng.random() < p_down)) for _ in range(length)]
        s = initial_state(v)
        for b, g in script:
            s = aoi_advance(s, b, g)
        if max(*s.tau, *s.eta, s.tail) > max_entry or s.key() in seen:
            continue
        if not script_is_sufficient(script, v, length):
            continue
        seen.add(s.key())
        out.append((script, length, s))
    return out
