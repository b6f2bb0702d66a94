"""Plant, sensor and controller constants.

A :class:`PlantModel` bundles the system matrices of one loop together with
everything derived from them once: the controllability index, the deadbeat
gain, and the stationary Kalman quantities used by the smart sensor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NoConvergence, NonSingularityViolated, NotControllable, SynthesisFailed

NILPOTENCY_TOL = 1e-8


def _as_matrix(a, name):
    m = np.atleast_2d(np.asarray(a, dtype=float))
    if m.ndim != 2:
        raise ValueError(f"{name} must be a matrix")
    return m


def _rank(M):
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > 1e-9 * s[0]))


def controllability_index(A, B, v_max=10):
    """Smallest ``v`` with ``rank[A^-1 B, ..., A^-v B] = n``."""
    A = _as_matrix(A, "A")
    B = _as_matrix(B, "B")
    n = A.shape[0]
    if A.shape != (n, n) or B.shape[0] != n:
        raise ValueError("A must be square and B must have matching rows")
    if abs(np.linalg.det(A)) <= 1e-12:
        raise NonSingularityViolated("A is singular")
    Ainv = np.linalg.inv(A)
    blocks = []
    P = np.eye(n)
    for v in range(1, v_max + 1):
        P = P @ Ainv
        blocks.append(P @ B)
        if _rank(np.hstack(blocks)) == n:
            return v
    raise NotControllable(f"no v <= {v_max} makes (A, B) controllable")


def deadbeat_gain(A, B, v):
    """Gain ``K`` with ``(A + B K)^v = 0``.

    Single-input plants use Ackermann's formula with every closed-loop pole at
    the origin. Multi-input plants are accepted only in the two degenerate
    cases where the answer is immediate (``A^v`` already zero, or ``B`` of full
    row rank so ``K = -B^+ A`` kills the state in one step).
    """
    A = _as_matrix(A, "A")
    B = _as_matrix(B, "B")
    n, m = B.shape
    if np.linalg.norm(np.linalg.matrix_power(A, v)) <= NILPOTENCY_TOL:
        K = np.zeros((m, n))
    elif m == 1:
        ctrb = np.hstack([np.linalg.matrix_power(A, j) @ B for j in range(n)])
        if _rank(ctrb) < n:
            raise NotControllable("(A, B) is not controllable")
        last = np.zeros((1, n))
        last[0, -1] = 1.0
        K = -last @ np.linalg.solve(ctrb, np.linalg.matrix_power(A, n))
    elif _rank(B) == n:
        K = -np.linalg.pinv(B) @ A
    else:
        raise SynthesisFailed("multi-input deadbeat synthesis is not supported")
    residual = np.linalg.norm(np.linalg.matrix_power(A + B @ K, v))
    if residual > NILPOTENCY_TOL:
        raise SynthesisFailed(f"(A+BK)^{v} has norm {residual:.3e}")
    return K


def kalman_step(P, A, C, Qw, Qv):
    """One prediction/update pass of the Riccati recursion.

    Returns the gain and the new posterior covariance.
    """
    Pp = A @ P @ A.T + Qw
    S = C @ Pp @ C.T + Qv
    K = np.linalg.solve(S.T, (Pp @ C.T).T).T
    Pn = (np.eye(A.shape[0]) - K @ C) @ Pp
    return K, 0.5 * (Pn + Pn.T)


def steady_state_kalman(A, C, Qw, Qv, tol=1e-12, max_iter=100_000):
    """Iterate the filter Riccati recursion from ``P0 = Qw`` to its fixed point.

    Returns ``(Khat, Ps_hat, Z)`` with ``Z = (I - Khat C) A``.
    """
    A, C = _as_matrix(A, "A"), _as_matrix(C, "C")
    Qw, Qv = _as_matrix(Qw, "Qw"), _as_matrix(Qv, "Qv")
    P = Qw.copy()
    for _ in range(max_iter):
        K, Pn = kalman_step(P, A, C, Qw, Qv)
        if np.linalg.norm(Pn - P) <= tol:
            K, P = kalman_step(Pn, A, C, Qw, Qv)
            Z = (np.eye(A.shape[0]) - K @ C) @ A
            return K, P, Z
        P = Pn
    raise NoConvergence("Riccati iteration did not converge")


def spectral_radius(A):
    A = _as_matrix(A, "A")
    return float(np.max(np.abs(np.linalg.eigvals(A))))


class _Powers:
    """Lazily grown table of ``M^0, M^1, ...``."""

    def __init__(self, M):
        self._table = [np.eye(M.shape[0]), M]
        self._M = M

    def __getitem__(self, k):
        table = self._table
        while len(table) <= k:
            table.append(table[-1] @ self._M)
        return table[k]


@dataclass(frozen=True)
class CostWeights:
    Sx: np.ndarray
    Su: np.ndarray

    @classmethod
    def identity(cls, n, m):
        return cls(np.eye(n), np.eye(m))


@dataclass(frozen=True, eq=False)
class PlantModel:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    Qw: np.ndarray
    Qv: np.ndarray
    v: int
    Ktilde: np.ndarray
    Phi: np.ndarray
    Khat: np.ndarray
    Ps_hat: np.ndarray
    Z: np.ndarray
    _pow: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def build(cls, A, B, C, Qw, Qv, v_max=10, Ktilde=None):
        """Derive every constant of a loop from its system matrices.

        ``Ktilde`` may be passed to use a given gain instead of synthesising
        one; it is then only checked for the nilpotency property.
        """
        A, B, C = _as_matrix(A, "A"), _as_matrix(B, "B"), _as_matrix(C, "C")
        Qw, Qv = _as_matrix(Qw, "Qw"), _as_matrix(Qv, "Qv")
        if abs(np.linalg.det(A)) > 1e-12:
            v = controllability_index(A, B, v_max)
        else:
            v = next((k for k in range(1, v_max + 1)
                      if np.linalg.norm(np.linalg.matrix_power(A, k)) <= NILPOTENCY_TOL), None)
            if v is None:
                raise NonSingularityViolated("A is singular")
        K = deadbeat_gain(A, B, v) if Ktilde is None else _as_matrix(Ktilde, "Ktilde")
        Khat, Ps, Z = steady_state_kalman(A, C, Qw, Qv)
        return cls(A, B, C, Qw, Qv, v, K, A + B @ K, Khat, Ps, Z)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    def power(self, name, k):
        """Cached ``k``-th power of ``A``, ``Phi`` or ``Z``."""
        table = self._pow.get(name)
        if table is None:
            table = self._pow[name] = _Powers(getattr(self, name))
        return table[k]

    def rho(self):
        return spectral_radius(self.A)
