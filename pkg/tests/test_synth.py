import math

import numpy as np
import pytest

from slipstick import certify, synth
from slipstick import scenario as scn
from slipstick.errors import NoStabilizerFound
from slipstick.ssmodel import Controller, StateSpace
from slipstick.xfer import XferParams


@pytest.fixture(scope="module")
def gray_prob(dims, sectors):
    return synth.SynthProblem(dims["gray"], "sector_program", sectors["gray"])


@pytest.fixture(scope="module")
def blue_prob(dims, sectors):
    return synth.SynthProblem(dims["blue"], "overshoot_h2", sectors["blue"], rho=1.3)


def _structure(K):
    return synth.ControllerStructure(k=K.order, tridiagonal=False)


def test_parameter_counts():
    assert synth.ControllerStructure(k=5).parameter_count == 25 + 15 + 2
    assert synth.ControllerStructure("pid_single").parameter_count == 3
    assert synth.ControllerStructure("pid_sum").parameter_count == 6
    m = synth.ControllerStructure(k=5).free_mask()
    assert m.sum() == 13 + 17
    with pytest.raises(ValueError):
        synth.ControllerStructure("lqg")


def test_pack_unpack_roundtrip(controllers):
    K = controllers["blue"]
    st = _structure(K)
    x = st.pack(K)
    s = 1j * np.array([0.1, 1.0, 10.0])
    assert np.allclose(st.unpack(x)(s), K(s))
    with pytest.raises(ValueError):
        st.unpack(x[:-1])


def test_pid_response():
    st = synth.ControllerStructure("pid_single")
    K = st.unpack([2.0, 3.0, 0.5])
    s = np.array([0.7j, 2.0j])
    ref = 2.0 + 3.0 / s + 0.5 * s / (1 + synth.PID_TAU * s)
    assert np.allclose(K(s)[:, 0, 0], ref)
    assert np.allclose(K(s)[:, 0, 1], 0.0)


def test_gray_objective_at_published_controller(gray_prob, controllers):
    K = controllers["gray"]
    v, slacks, _ = synth.objective(gray_prob, _structure(K).pack(K), _structure(K))
    assert v == pytest.approx(2.64 * 0.281, abs=0.02)
    assert v < 1
    assert all(s >= 0 for s in slacks)


def test_zero_controller_blue_infinite(blue_prob):
    st = synth.ControllerStructure(k=5)
    v, slacks, info = synth.objective(blue_prob, np.zeros(st.parameter_count), st)
    assert v == math.inf and slacks == [] and info["abscissa"] > 0


def test_local_lipschitz(gray_prob, controllers):
    K = controllers["gray"]
    st = _structure(K)
    x = st.pack(K)
    v0 = synth.objective(gray_prob, x, st)[0]
    rng = np.random.default_rng(0)
    for _ in range(3):
        v1 = synth.objective(gray_prob, x + 1e-6 * rng.standard_normal(x.size), st)[0]
        assert abs(v1 - v0) < 1e-3


def test_similarity_invariance(blue_prob, controllers):
    K = controllers["blue"]
    st = _structure(K)
    r = K.realization
    rng = np.random.default_rng(4)
    T = rng.standard_normal((K.order, K.order)) + 3 * np.eye(K.order)
    Ti = np.linalg.inv(T)
    K2 = Controller.from_matrices(Ti @ r.A @ T, Ti @ r.B, r.C @ T, r.D)
    v1, s1, _ = synth.objective(blue_prob, st.pack(K), st)
    v2, s2, _ = synth.objective(blue_prob, st.pack(K2), st)
    assert v2 == pytest.approx(v1, rel=1e-8)
    assert np.allclose(s1, s2, rtol=1e-8, atol=1e-10)


def test_blue_objective_reports_h2_slack(blue_prob, controllers):
    K = controllers["blue"]
    v, slacks, _ = synth.objective(blue_prob, _structure(K).pack(K), _structure(K))
    assert math.isfinite(v) and len(slacks) == 2
    assert slacks[0] > 0


def test_stabilize_first_gray_trivial(gray_prob):
    st = synth.ControllerStructure(k=5)
    x = synth.stabilize_first(gray_prob, st, budget=50)
    assert synth.objective(gray_prob, x, st)[0] < math.inf


def test_stabilize_first_blue_passes_nyquist(blue_prob, xparams):
    st = synth.ControllerStructure(k=5)
    x = synth.stabilize_first(blue_prob, st, seed=0)
    K = st.unpack(x)
    assert K.is_stable()
    assert certify.nyquist_certify(xparams["blue"], K).passed


def test_stabilize_static_gain_blue_reported(blue_prob):
    st = synth.ControllerStructure(k=0)
    try:
        x = synth.stabilize_first(blue_prob, st, seed=0, budget=400, max_starts=3)
    except NoStabilizerFound as exc:
        assert exc.args
    else:
        assert synth.objective(blue_prob, x, st)[0] < math.inf


def test_optimize_from_published_gray(gray_prob, controllers):
    K = controllers["gray"]
    st = _structure(K)
    x0 = st.pack(K)
    x, hist = synth.optimize(gray_prob, st, x0, budget=60)
    assert synth.penalty(gray_prob, x, st) <= synth.penalty(gray_prob, x0, st)
    assert np.all(np.diff(hist.values) < 0)


def test_optimize_needs_finite_start(blue_prob):
    st = synth.ControllerStructure(k=2, tridiagonal=False)
    with pytest.raises(ValueError):
        synth.optimize(blue_prob, st, np.zeros(st.parameter_count), budget=10)


def test_direct_search_quadratic():
    rng = np.random.default_rng(0)
    c = rng.normal(size=4)
    x, f, hist = synth.direct_search(lambda z: float(np.sum((z - c) ** 2)), np.zeros(4), budget=3000)
    assert np.allclose(x, c, atol=1e-3)
    assert np.all(np.diff(hist.values) < 0)
    x, f, hist = synth.direct_search(lambda z: float(np.sum((z - c) ** 2)), np.zeros(4), stop_below=1.0)
    assert f < 1.0


def _toy_problem():
    # two-state stable plant with w and u entering, velocity-like outputs
    A = np.array([[-0.5, 1.0], [-2.0, -0.3]])
    B = np.array([[0.0, 0.0], [1.0, 0.8]])
    C = np.array([[0.0, 1.0], [0.0, 1.0], [1.0, 0.2]])
    P = StateSpace(A, B, C, np.zeros((3, 2)), ["w", "u"], ["z", "y1", "y2"])
    dp = scn.DimParams(q=0.0, alpha=1.0, lam=0.1)
    return synth.SynthProblem(dp, "sector_program", scn.SectorBounds(-1.0, 1.0), plants=(P, P))


def test_toy_against_random_search():
    prob = _toy_problem()
    st = synth.ControllerStructure(k=1, tridiagonal=False)
    rng = np.random.default_rng(2)
    best = math.inf
    for _ in range(3000):
        x = rng.uniform(-3, 3, st.parameter_count)
        x[0] = -abs(x[0])
        best = min(best, synth.penalty(prob, x, st))
    x0 = synth.stabilize_first(prob, st)
    x, hist = synth.optimize(prob, st, x0, budget=1500)
    assert synth.penalty(prob, x, st) <= 1.05 * best


def test_problem_validation(dims, sectors):
    with pytest.raises(ValueError):
        synth.SynthProblem(dims["blue"], "overshoot_h2", sectors["blue"])
    with pytest.raises(ValueError):
        synth.SynthProblem(dims["blue"], "nope", sectors["blue"])


def test_problem_from_dict():
    d = {"scenario": {"q": 0.9796, "alpha": 0.1828, "lambda": 0.5477}, "program": "overshoot_h2",
         "sector": {"q_l": -3.0, "q_u": -0.1, "mode": "large_magnitude"}, "rho": 1.3, "N_design": 30}
    prob = synth.SynthProblem.from_dict(d)
    assert prob.N_design == 30 and prob.rho == 1.3
    assert prob.design_plants()[0].n == 61
    assert XferParams(prob.scenario.q, prob.scenario.alpha, prob.scenario.lam).q == 0.9796
