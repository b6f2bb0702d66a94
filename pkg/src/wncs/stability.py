"""Stabilizability test for a set of plants sharing ``M`` frequencies.

Each unstable plant is assigned to one frequency. A group's score is the
largest ``rho(A)^2`` in it times the largest packet error probability (uplink
or downlink) among its members on that frequency. ``kappa`` is the smallest
achievable worst-group score; ``kappa < 1`` certifies that a persistent
round-robin schedule keeps every loop mean-square stable.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import CapacityExceeded
from .model import spectral_radius

UNSTABLE_TOL = 1e-12
MAX_ASSIGNMENTS = 10_000_000


@dataclass(frozen=True)
class StabilityReport:
    kappa: float
    best_partition: dict  # plant index -> frequency index (0-based)
    stabilizable: bool
    unstable_set: list

    def groups(self, M):
        """Partition as a tuple of plant-index sets, one per frequency."""
        out = [set() for _ in range(M)]
        for i, m in self.best_partition.items():
            out[m].add(i)
        return tuple(frozenset(g) for g in out)


def _rho_sq(plants):
    return [spectral_radius(p.A if hasattr(p, "A") else p) ** 2 for p in plants]


def unstable_set(plants):
    return [i for i, r2 in enumerate(_rho_sq(plants)) if np.sqrt(r2) >= 1 - UNSTABLE_TOL]


def kappa_from_rho(rho_sq, net, unstable=None):
    """Core search given squared spectral radii directly."""
    rho_sq = list(rho_sq)
    if unstable is None:
        unstable = [i for i, r2 in enumerate(rho_sq) if r2 >= (1 - UNSTABLE_TOL) ** 2]
    if not unstable:
        return StabilityReport(0.0, {}, True, [])
    M = net.M
    if M ** len(unstable) > MAX_ASSIGNMENTS:
        raise CapacityExceeded(f"{M}^{len(unstable)} assignments exceed {MAX_ASSIGNMENTS}")
    err = np.maximum(1.0 - net.xi_s, 1.0 - net.xi_c)  # (M, N) worst link error per plant
    best, best_assign = np.inf, None
    # product() yields assignments in lexicographic order; strict '<' keeps the first minimiser
    for assign in product(range(M), repeat=len(unstable)):
        worst = 0.0
        for m in set(assign):
            members = [i for i, a in zip(unstable, assign) if a == m]
            worst = max(worst, max(rho_sq[i] for i in members) * max(err[m, i] for i in members))
        if worst < best:
            best, best_assign = worst, assign
    if best == 1.0:
        warnings.warn("kappa sits exactly on the stability boundary", RuntimeWarning)
    return StabilityReport(float(best), dict(zip(unstable, best_assign)), bool(best < 1.0), list(unstable))


def kappa(plants, net):
    rho_sq = _rho_sq(plants)
    return kappa_from_rho(rho_sq, net, unstable_set(plants))


def necessary_condition_from_rho(rho_sq, net):
    err_s, err_c = 1.0 - net.xi_s, 1.0 - net.xi_c
    for i, r2 in enumerate(rho_sq):
        if r2 < (1 - UNSTABLE_TOL) ** 2:
            continue
        if not r2 * max(err_s[:, i].min(), err_c[:, i].min()) < 1.0:
            return False
    return True


def necessary_condition(plants, net):
    """Single-loop dropout bound on each unstable plant's best links."""
    return necessary_condition_from_rho(_rho_sq(plants), net)
