import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wncs import kernels
from wncs.aoi import (AoIState, aoi_advance, delta, initial_state, mode_advance,
                      shift_to_last_control, state_at_last_delivery, truncate)
from wncs.errors import IndexOrder
from wncs.network import DOWNLINK, UPLINK


def test_initial_state():
    s = initial_state(2)
    assert s.tau == (1, 1, 1) and s.eta == (1, 1, 1) and s.mode == UPLINK
    assert initial_state(1).tau == (1, 1)
    for v in (1, 2, 4):
        s = initial_state(v)
        assert all(delta(s, i, j) == j - i for i in range(v + 1) for j in range(i, v + 1))


def test_advance_examples():
    s = AoIState((3, 2, 2), (4, 2, 5))
    assert aoi_advance(s, True, False).tau[0] == 1
    assert aoi_advance(s, False, True).eta == (1, 4, 2)
    assert aoi_advance(AoIState((2, 7, 9), (1, 1, 1)), False, False).tau == (3, 7, 9)


def test_advance_shift_uses_pre_update_uplink_age():
    s = AoIState((5, 2, 3), (2, 1, 1), tail=4)
    t = aoi_advance(s, True, True)
    assert t.tau == (1, 5, 2) and t.tail == 3 and t.eta == (1, 2, 1)


def test_pure_aging_touches_only_the_heads():
    s = AoIState((3, 2, 4), (2, 5, 1), DOWNLINK, 6)
    t = aoi_advance(s, False, False)
    assert t.tau == (4, 2, 4) and t.eta == (3, 5, 1) and t.tail == 6 and t.mode == DOWNLINK


def test_mode_examples():
    assert mode_advance(UPLINK, True, False) == DOWNLINK
    assert mode_advance(DOWNLINK, False, True) == UPLINK
    assert mode_advance(UPLINK, False, True) == UPLINK
    assert mode_advance(DOWNLINK, True, False) == DOWNLINK


def test_delta_examples():
    s = AoIState((2, 1, 3), (4, 2, 5))
    assert delta(s, 1, 1) == 0
    assert delta(s, 0, 1) == 3
    assert delta(s, 0, 2) == 7 == delta(s, 0, 1) + delta(s, 1, 2)
    with pytest.raises(IndexOrder):
        delta(s, 2, 1)


def test_shift_examples():
    s = AoIState((5, 2, 4), (3, 1, 6))
    t = shift_to_last_control(s)
    assert t.tau == (2, 2, 4) and t.eta == (1, 1, 6)
    assert shift_to_last_control(t) == t
    just = AoIState((2, 2, 4), (1, 3, 2))
    assert shift_to_last_control(just) == just


def test_state_at_last_delivery_matches_history():
    rng = np.random.default_rng(0)
    history = [initial_state(2)]
    script = [(rng.random() < 0.5, rng.random() < 0.5) for _ in range(300)]
    for b, g in script:
        history.append(aoi_advance(history[-1], b, g))
    for k in range(50, 301):
        s = history[k]
        t = k - s.eta[0]  # slot of the newest downlink delivery
        assert script[t][1]
        back = state_at_last_delivery(s)
        then = history[t]
        assert back.tau == then.tau
        assert back.eta[:-1] == then.eta[:-1]


def test_truncate_examples():
    assert truncate(AoIState((12, 3, 5), (1, 1, 1)), 10).tau == (10, 3, 5)
    s = AoIState((2, 3, 1), (4, 1, 2), tail=3)
    assert truncate(s, 10) == s
    assert truncate(s, 1) == AoIState((1, 1, 1), (1, 1, 1), s.mode, 1)


scripts = st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1, max_size=200)


@settings(max_examples=60, deadline=None)
@given(scripts, st.integers(1, 3))
def test_delta_additivity_on_reachable_states(script, v):
    s = initial_state(v)
    for b, g in script:
        s = aoi_advance(s, b, g)
        for i in range(v + 1):
            for j in range(i, v + 1):
                for l in range(j, v + 1):
                    assert delta(s, i, j) + delta(s, j, l) == delta(s, i, l)
                assert delta(s, i, j) >= 0


@settings(max_examples=60, deadline=None)
@given(scripts, st.integers(2, 8))
def test_saturation_commutes_below_cap(script, L):
    s = initial_state(2)
    for b, g in script:
        if max(*s.tau, *s.eta, s.tail) < L:
            assert truncate(aoi_advance(s, b, g), L) == truncate(aoi_advance(truncate(s, L), b, g), L)
        s = aoi_advance(s, b, g)


@settings(max_examples=40, deadline=None)
@given(scripts)
def test_heads_count_slots_since_delivery(script):
    s = initial_state(2)
    last_up = last_dn = -1
    for k, (b, g) in enumerate(script):
        s = aoi_advance(s, b, g)
        if b:
            last_up = k
        if g:
            last_dn = k
        if last_up >= 0:
            assert s.tau[0] == k + 1 - last_up
        if last_dn >= 0:
            assert s.eta[0] == k + 1 - last_dn


@pytest.mark.parametrize("impl", ["python", "compiled"])
def test_batched_rows_match_scalar_rule(impl):
    from wncs._ext import fallback
    mod = fallback
    if impl == "compiled":
        mod = pytest.importorskip("wncs._ext.kernels")
    rng = np.random.default_rng(4)
    v, cap = 2, 6
    states = [AoIState(tuple(rng.integers(1, 7, 3)), tuple(rng.integers(1, 7, 3)), tail=int(rng.integers(1, 7)))
              for _ in range(200)]
    rows = np.stack([s.as_row() for s in states])
    beta = rng.random(200) < 0.5
    gamma = rng.random(200) < 0.5
    got = kernels.advance_rows(rows, beta, gamma, v, cap, impl=mod)
    for s, b, g, r in zip(states, beta, gamma, got):
        assert tuple(r) == truncate(aoi_advance(s, b, g), cap).key()
