import numpy as np
import pytest

from conftest import A1, A3, B, build
from wncs.aoi import AoIState, initial_state
from wncs.cost import (CostEvaluator, cost_u, cost_x, estimate_covariance, mc_oracle, per_step_cost,
                       random_patterns, state_covariance)
from wncs.errors import LengthMismatch, ScriptTooShort
from wncs.model import CostWeights, PlantModel
from wncs.simulator import scripted_run

STATES = [
    AoIState((1, 1, 1), (1, 1, 1)),
    AoIState((2, 1, 2), (2, 1, 1)),
    AoIState((3, 2, 1), (1, 3, 2), tail=2),
    AoIState((1, 4, 2), (4, 1, 3), tail=3),
]


def propagate_moments(plant, script):
    """Exact second moments of the stacked loop state, by covariance propagation.

    The joint state (x, xs, xhat, buffer) is linear in the noise, so its
    covariance follows a deterministic recursion under a forced script. The
    sensor error starts at its stationary law, the plant at zero.
    """
    n, v = plant.n, plant.v
    m = plant.B.shape[1]
    A, Bm, C, K, Kh = plant.A, plant.B, plant.C, plant.Ktilde, plant.Khat
    p = plant.C.shape[0]
    d = 3 * n + v * m
    ix, ixs, ixh, ib = slice(0, n), slice(n, 2 * n), slice(2 * n, 3 * n), slice(3 * n, d)
    # initial: x = 0, xs = -e0 with e0 ~ N(0, Ps), xhat = 0, buffer empty
    S = np.zeros((d, d))
    S[ixs, ixs] = plant.Ps_hat
    for b, g in script:
        T = np.zeros((d, d))
        Wn = np.zeros((d, n))
        Vn = np.zeros((d, p))
        # buffer contents after this slot's delivery
        Ubuf = np.zeros((v * m, d))
        if g:
            for j in range(v):
                Ubuf[j * m:(j + 1) * m, ixh] = K @ plant.power("Phi", j)
        else:
            for j in range(v - 1):
                Ubuf[j * m:(j + 1) * m, ib] = np.eye(v * m)[(j + 1) * m:(j + 2) * m]
        U0 = Ubuf[:m]
        T[ib] = Ubuf
        T[ixh] = A @ (np.eye(d)[ixs] if b else np.eye(d)[ixh]) + Bm @ U0
        T[ix] = A @ np.eye(d)[ix] + Bm @ U0
        Wn[ix] = np.eye(n)
        # sensor: prediction, then correction with y = C x_{k+1} + v
        pred = A @ np.eye(d)[ixs] + Bm @ U0
        T[ixs] = pred + Kh @ (C @ T[ix] - C @ pred)
        Wn[ixs] = Kh @ C
        Vn[ixs] = Kh
        S = T @ S @ T.T + Wn @ plant.Qw @ Wn.T + Vn @ plant.Qv @ Vn.T
        last_U0 = U0
    # last_U0 maps the state before the final slot to the input applied in it
    return S[ix, ix], S, last_U0


def exact_costs(plant, script):
    """E[x'x] at the end of the script and E[u'u] of the last applied input."""
    Sx, _, U0 = propagate_moments(plant, script)
    S_prev = propagate_moments(plant, script[:-1])[1]
    return float(np.trace(Sx)), float(np.trace(U0 @ S_prev @ U0.T))


@pytest.mark.parametrize("A", [A1, A3])
def test_closed_forms_match_exact_moment_propagation(A):
    plant = build(A)
    w = CostWeights.identity(2, 1)
    rng = np.random.default_rng(7)
    for script, target, s in random_patterns(plant.v, 8, rng):
        jx, ju = exact_costs(plant, script)
        assert abs(cost_x(plant, w, s) - jx) <= 1e-8 * max(1.0, jx)
        assert abs(cost_u(plant, w, s) - ju) <= 1e-8 * max(1.0, ju)


def test_unequal_noise_adjudicates_measurement_block():
    plant = PlantModel.build(A1, B, np.eye(2), 0.3 * np.eye(2), 0.02 * np.eye(2))
    w = CostWeights.identity(2, 1)
    for script, _, s in random_patterns(plant.v, 6, np.random.default_rng(3)):
        jx, ju = exact_costs(plant, script)
        assert abs(cost_x(plant, w, s) - jx) <= 1e-8 * max(1.0, jx)
        assert abs(cost_u(plant, w, s) - ju) <= 1e-8 * max(1.0, ju)


def test_noise_free_gives_zero():
    p = PlantModel.build(A1, B, np.eye(2), 1e-30 * np.eye(2), 1e-30 * np.eye(2))
    for s in STATES:
        assert np.max(np.abs(state_covariance(p, s))) < 1e-20
        assert np.max(np.abs(estimate_covariance(p, s))) < 1e-20


def test_zero_weights_and_exhausted_deadbeat(plants):
    zero = CostWeights(np.zeros((2, 2)), np.zeros((1, 1)))
    for p in plants:
        for s in STATES:
            assert cost_x(p, zero, s) == 0.0 and cost_u(p, zero, s) == 0.0
        w = CostWeights.identity(2, 1)
        assert cost_u(p, w, AoIState((1, 1, 1), (3, 1, 1))) == 0.0
        assert cost_u(p, w, AoIState((2, 3, 1), (7, 2, 1))) == 0.0


def test_trace_identity_and_psd(plants, weights):
    for p in plants:
        for s in STATES:
            V = state_covariance(p, s)
            assert np.isclose(cost_x(p, weights, s), np.trace(V))
            for M in (V, estimate_covariance(p, s)):
                assert np.allclose(M, M.T)
                assert np.linalg.eigvalsh(M).min() >= -1e-8 * np.trace(M)


def test_estimate_covariance_invariant_under_shift_when_fresh(plants):
    from wncs.aoi import shift_to_last_control
    s = AoIState((2, 2, 3), (1, 2, 1))
    for p in plants:
        assert np.array_equal(estimate_covariance(p, s), estimate_covariance(p, shift_to_last_control(s)))


def test_noise_scaling_monotone():
    a, b = build(A3, 0.1, 0.1), build(A3, 0.2, 0.2)
    for s in STATES:
        assert np.trace(state_covariance(b, s)) >= np.trace(state_covariance(a, s))


def test_memo_is_transparent(plants, weights):
    ev = CostEvaluator(plants[2], weights, cap=20)
    for s in STATES:
        assert ev(s) == ev.fresh(s) == ev(s)
    rows = np.stack([s.as_row() for s in STATES])
    assert np.array_equal(ev.cost_rows(rows), [ev(s) for s in STATES])


def test_cap_applies_before_evaluation(plants, weights):
    ev = CostEvaluator(plants[0], weights, cap=5)
    assert ev(AoIState((9, 1, 1), (1, 1, 1))) == ev(AoIState((5, 1, 1), (1, 1, 1)))


def test_per_step_cost_additivity(plants, weights):
    evs = [CostEvaluator(p, weights) for p in plants]
    s = initial_state(2)
    assert per_step_cost(evs[:1], [s]) == evs[0](s)
    same = [CostEvaluator(plants[1], weights) for _ in range(3)]
    assert np.isclose(per_step_cost(same, [s] * 3), 3 * same[0](s))
    with pytest.raises(LengthMismatch):
        per_step_cost(evs, [s])


def test_oracle_preconditions(plants, weights):
    with pytest.raises(ScriptTooShort):
        mc_oracle(plants[0], weights, [(True, True)] * 2, 2, 10, np.random.default_rng())
    *_, s = mc_oracle(plants[0], weights, [(True, True)] * 8, 8, 10, np.random.default_rng())
    assert s == initial_state(2)


def test_oracle_state_matches_register_module(plants, weights):
    rng = np.random.default_rng(11)
    for script, target, s in random_patterns(2, 5, rng):
        *_, got = mc_oracle(plants[0], weights, script, target, 10, rng)
        assert got == s


def test_noise_free_deadbeat_zeroes_plant():
    p = PlantModel.build(A1, B, np.eye(2), 1e-40 * np.eye(2), 1e-40 * np.eye(2))
    script = [(True, True)] + [(False, False)] * 3 + [(True, True), (False, False), (False, False)]
    rec = scripted_run(p, script, x0=np.array([3.0, -2.0]))
    assert np.max(np.abs(rec[-1]["x"])) < 1e-9


def test_oracle_matches_closed_form_small(plants, weights):
    rng = np.random.default_rng(5)
    p = plants[0]
    for script, target, s in random_patterns(p.v, 3, rng):
        mx, mu, sx, su, _ = mc_oracle(p, weights, script, target, 20000, rng)
        assert abs(cost_x(p, weights, s) - mx) <= 4 * sx + 1e-12
        assert abs(cost_u(p, weights, s) - mu) <= 4 * su + 1e-12
