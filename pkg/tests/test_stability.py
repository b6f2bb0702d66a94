import time
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import A1, A2, A3
from wncs.errors import CapacityExceeded
from wncs.network import NetworkModel
from wncs.stability import kappa, kappa_from_rho, necessary_condition, necessary_condition_from_rho, unstable_set

# two identical frequencies; uplink / downlink error probabilities per plant
ERR_S = [0.1, 0.2, 0.2]
ERR_C = [0.3, 0.1, 0.4]


def example_net():
    xs = 1 - np.tile(ERR_S, (2, 1))
    xc = 1 - np.tile(ERR_C, (2, 1))
    return NetworkModel(3, 2, xs, xc)


def test_example_stable_case():
    t = time.perf_counter()
    rep = kappa_from_rho([3, 2, 1], example_net())
    assert time.perf_counter() - t < 1e-3
    assert abs(rep.kappa - 0.9) <= 1e-12 and rep.stabilizable
    assert {frozenset(g) for g in rep.groups(2)} == {frozenset({0, 1}), frozenset({2})}


def test_example_unstable_case():
    rep = kappa_from_rho([1, 2, 3], example_net())
    assert abs(rep.kappa - 1.2) <= 1e-12 and not rep.stabilizable


def test_hand_enumeration_oracle():
    # every labelled assignment of the three plants to two frequencies, scored by hand
    rho = [3, 2, 1]
    err = [max(a, b) for a, b in zip(ERR_S, ERR_C)]
    best = min(
        max(max(rho[i] for i in g) * max(err[i] for i in g) for g in (
            [i for i in range(3) if (mask >> i) & 1], [i for i in range(3) if not (mask >> i) & 1]) if g)
        for mask in range(8))
    assert abs(kappa_from_rho(rho, example_net()).kappa - best) <= 1e-15


def test_unstable_set_examples():
    assert unstable_set([A1, A2, A3]) == [0, 1, 2]
    assert unstable_set([0.5 * np.eye(2), 0.9 * np.eye(2)]) == []
    assert unstable_set([0.5 * np.eye(2), A1]) == [1]


def test_no_unstable_plants():
    rep = kappa([0.5 * np.eye(2)], NetworkModel(1, 1, np.ones((1, 1)) * 0.5, np.ones((1, 1)) * 0.5))
    assert rep.kappa == 0.0 and rep.stabilizable and rep.best_partition == {}


def test_necessary_condition_examples():
    assert necessary_condition_from_rho([3, 2, 1], example_net())
    assert not necessary_condition_from_rho([1, 2, 3], example_net())
    assert necessary_condition([0.5 * np.eye(2)], NetworkModel(1, 1, np.zeros((1, 1)), np.zeros((1, 1))))


def test_boundary_tie_warns():
    net = NetworkModel(1, 1, np.full((1, 1), 0.5), np.full((1, 1), 0.5))
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        rep = kappa_from_rho([2.0], net)
    assert rep.kappa == 1.0 and not rep.stabilizable and w


def test_capacity_guard():
    net = NetworkModel(30, 2, np.full((2, 30), 0.9), np.full((2, 30), 0.9))
    with pytest.raises(CapacityExceeded):
        kappa_from_rho([2.0] * 30, net)


instances = st.tuples(
    st.integers(1, 4), st.integers(1, 3), st.integers(0, 10**6))


def random_instance(N, M, seed, shared):
    rng = np.random.default_rng(seed)
    rho = list(rng.uniform(0.5, 4.0, N))
    if shared:
        e = rng.uniform(0, 0.6, (M, 1))
        xs = np.tile(1 - e, (1, N))
        xc = xs.copy()
    else:
        xs = rng.uniform(0.4, 1.0, (M, N))
        xc = rng.uniform(0.4, 1.0, (M, N))
    return rho, NetworkModel(N, M, xs, xc)


@settings(max_examples=100, deadline=None)
@given(instances)
def test_equivalence_without_spatial_diversity(inst):
    rho, net = random_instance(*inst, shared=True)
    assert (kappa_from_rho(rho, net).kappa < 1) == necessary_condition_from_rho(rho, net)


@settings(max_examples=100, deadline=None)
@given(instances)
def test_necessity_failure_rules_out_sufficiency(inst):
    rho, net = random_instance(*inst, shared=False)
    if not necessary_condition_from_rho(rho, net):
        assert kappa_from_rho(rho, net).kappa >= 1


@settings(max_examples=50, deadline=None)
@given(instances)
def test_frequency_relabelling_invariance(inst):
    rho, net = random_instance(*inst, shared=False)
    perm = np.random.default_rng(inst[2]).permutation(net.M)
    other = NetworkModel(net.N, net.M, net.xi_s[perm], net.xi_c[perm])
    assert kappa_from_rho(rho, net).kappa == kappa_from_rho(rho, other).kappa
