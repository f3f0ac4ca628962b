import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slipstick import scenario as scn
from slipstick import simulate as sim
from slipstick.errors import BlowUp
from slipstick.ssmodel import Controller

SQUARE = sim.DisturbanceSpec.parse("square:15,1,0.6")


@pytest.fixture(scope="module")
def blue_open(scenarios):
    return sim.run(scenarios["blue"], None, sim.SimConfig(t_final=20, initial_offset=0.6, record_stride=2))


@pytest.fixture(scope="module")
def blue_switched(scenarios, controllers):
    cfg = sim.SimConfig(t_final=30, controller_on_at=10, initial_offset=0.6, disturbance=SQUARE, record_stride=2)
    return sim.run(scenarios["blue"], controllers["blue"], cfg)


def test_blue_open_loop_sticks(blue_open, dims):
    assert blue_open.stick_intervals
    a, b = blue_open.stick_intervals[0]
    m = (blue_open.t >= a) & (blue_open.t <= b)
    assert np.all(np.abs(blue_open.theta_dot_bit[m]) <= 0.02 * blue_open.Omega + 1e-9)
    assert np.min(blue_open.y1) == pytest.approx(dims["blue"].kink, rel=1e-9)


def test_blue_controller_leaves_stick(blue_switched, dims):
    ts = blue_switched
    assert any(a < 10 for a, _ in ts.stick_intervals)
    # nothing starts after the short transient that follows the switch
    assert all(a < 10.5 for a, _ in ts.stick_intervals)
    assert abs(ts.y1[-1]) < 0.01 * abs(dims["blue"].kink)


def test_blue_open_loop_grows_before_sticking(scenarios):
    ts = sim.run(scenarios["blue"], None, sim.SimConfig(N=100, dt=0.01, t_final=90, initial_offset=0.01,
                                                       record_stride=5))
    assert ts.stick_intervals
    t_stick = ts.stick_intervals[0][0]
    assert t_stick > 20
    env = [np.max(np.abs(ts.y1[(ts.t >= lo) & (ts.t < lo + 10)])) for lo in np.arange(0, t_stick - 10, 10)]
    assert env[-1] > 5 * env[0]
    slope = np.polyfit(np.arange(len(env)), np.log(env), 1)[0]
    assert slope > 0


@pytest.mark.parametrize("name", ["gray", "blue"])
def test_equilibrium_stays_zero(scenarios, controllers, name):
    for K, on in ((None, math.inf), (controllers[name], 0.0), (controllers[name], 3.0)):
        ts = sim.run(scenarios[name], K, sim.SimConfig(N=60, t_final=6, controller_on_at=on))
        assert np.max(np.abs(ts.y1)) < 1e-10 and np.max(np.abs(ts.u)) < 1e-10
        assert not ts.stick_intervals


def test_detect_stick_synthetic():
    t = np.linspace(0, 5, 501)
    Om = 10.0
    th = np.where((t >= 2) & (t <= 3), 0.0, Om)
    ts = sim.TimeSeries(t, 0 * t, 0 * t, 0 * t, th, Om + 0 * t, [], Om, {})
    assert sim.detect_stick(ts) == [(2.0, 3.0)]
    ts.theta_dot_bit = Om + 0 * t
    assert sim.detect_stick(ts) == []
    # shorter than min_dur is ignored
    ts.theta_dot_bit = np.where((t >= 2) & (t <= 2.05), 0.0, Om)
    assert sim.detect_stick(ts) == []


def test_gray_noisy_sticks(scenarios, controllers):
    d = sim.DisturbanceSpec("oscillatory", 2.0, 30.0, 1.5, frequency=0.3)
    ts = sim.run(scenarios["gray"], controllers["gray"],
                 sim.SimConfig(N=100, dt=0.01, t_final=40, controller_on_at=0.0, disturbance=d))
    assert ts.stick_intervals


def test_gray_linear_vs_nonlinear_reported(scenarios, controllers):
    cfg = sim.SimConfig(N=100, t_final=30, controller_on_at=10, initial_offset=0.6, disturbance=SQUARE,
                        record_stride=4)
    rep = sim.linear_vs_nonlinear(scenarios["gray"], controllers["gray"], cfg)
    assert rep["relative"] < 0.1
    assert not rep["nonlinear"].stick_intervals


def test_linear_vs_nonlinear_zero_friction(scenarios, controllers):
    sp = scn.ScenarioParams(**{**scenarios["gray"].to_dict(), "W_ob": 0.0})
    cfg = sim.SimConfig(N=60, t_final=8, controller_on_at=0.0, initial_offset=0.3)
    rep = sim.linear_vs_nonlinear(sp, controllers["gray"], cfg)
    assert rep["max_deviation"] < 1e-12 * max(rep["linear_amplitude"], 1.0)


def test_blue_linear_vs_nonlinear_large_disturbance(scenarios, controllers):
    cfg = sim.SimConfig(N=100, t_final=25, controller_on_at=0.0,
                        disturbance=sim.DisturbanceSpec("square", 2.0, 3.0, 1.2), record_stride=4)
    rep = sim.linear_vs_nonlinear(scenarios["blue"], controllers["blue"], cfg)
    assert rep["relative"] > 0.05


def test_grid_convergence_gray(scenarios, controllers):
    ys = {}
    for N in (100, 200, 400):
        cfg = sim.SimConfig(N=N, t_final=30, controller_on_at=10, initial_offset=0.6, disturbance=SQUARE,
                            record_stride=4)
        ys[N] = sim.run(scenarios["gray"], controllers["gray"], cfg).y1
    amp = np.max(np.abs(ys[400]))
    for a, b in ((100, 200), (200, 400), (100, 400)):
        assert np.max(np.abs(ys[a] - ys[b])) < 0.02 * amp


@pytest.mark.parametrize("name,dist", [
    ("gray", sim.DisturbanceSpec("pulse", 1.0, 1.0, 0.3)),
    ("gray", sim.DisturbanceSpec("oscillatory", 1.0, 8.0, 0.3, frequency=0.2)),
    ("blue", sim.DisturbanceSpec("exp_decaying_pulse", 1.0, 20.0, 0.3, rate_a=0.3)),
])
def test_integrator_order(scenarios, controllers, name, dist):
    base = dict(N=100, t_final=15, controller_on_at=0.0, disturbance=dist)
    ys = {}
    for dt in (0.01, 0.005, 0.0025):
        ys[dt] = sim.run(scenarios[name], controllers[name],
                         sim.SimConfig(dt=dt, record_stride=int(round(0.01 / dt)), **base)).y1
    e1 = np.max(np.abs(ys[0.01] - ys[0.005]))
    e2 = np.max(np.abs(ys[0.005] - ys[0.0025]))
    assert math.log2(e1 / e2) >= 1.8


def test_blowup_detected(scenarios):
    # an anti-damping static controller pumps energy into the string
    K = Controller.from_matrices(np.zeros((0, 0)), np.zeros((0, 2)), np.zeros((1, 0)), [[0.0, -50.0]])
    with pytest.raises(BlowUp):
        sim.run(scenarios["gray"], K, sim.SimConfig(N=50, dt=0.01, t_final=200, controller_on_at=0.0,
                                                   initial_offset=0.1, nonlinear=False))


def test_config_validation():
    with pytest.raises(ValueError):
        sim.SimConfig(dt=0.0)
    with pytest.raises(ValueError):
        sim.SimConfig(N=10)
    with pytest.raises(ValueError):
        sim.SimConfig(t_final=5, controller_on_at=6)
    with pytest.raises(ValueError):
        sim.DisturbanceSpec("sawtooth")


def test_controller_required_when_switched(scenarios):
    with pytest.raises(ValueError):
        sim.run(scenarios["gray"], None, sim.SimConfig(N=50, t_final=1, controller_on_at=0.5))


def test_parse():
    d = sim.DisturbanceSpec.parse("square:15,1,0.6")
    assert (d.kind, d.t_start, d.duration, d.magnitude, d.frequency) == ("square", 15, 1, 0.6, 0)
    assert sim.DisturbanceSpec.parse("exp_decaying_pulse:1,5,0.2,0.3").rate_a == 0.3
    assert sim.DisturbanceSpec.parse("none").kind == "none"
    with pytest.raises(ValueError):
        sim.DisturbanceSpec.parse("pulse:1,2")


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(["pulse", "square", "exp_decaying_pulse", "oscillatory"]),
       st.floats(0, 5), st.floats(0.1, 5), st.floats(-2, 2), st.floats(0, 3))
def test_integral_matches_quadrature(kind, t0, dur, mag, extra):
    kw = dict(rate_a=extra) if kind == "exp_decaying_pulse" else dict(frequency=extra)
    d = sim.DisturbanceSpec(kind, t0, dur, mag, **kw)
    t = np.linspace(0, 12, 240001)
    w = d.signal(t, 2.0)
    num = np.concatenate([[0.0], np.cumsum(0.5 * (w[1:] + w[:-1]) * np.diff(t))])
    ex = d.integral(t, 2.0)
    assert np.max(np.abs(num - ex)) < 1e-3 * max(1.0, abs(mag) * 2.0)


def test_square_wave_alternates():
    d = sim.DisturbanceSpec("square", 0.0, 2.0, 1.0, frequency=1.0)
    assert list(d.signal(np.array([0.1, 0.6, 1.1, 2.5]))) == [1.0, -1.0, 1.0, 0.0]


def test_outputs_written(tmp_path, blue_open):
    csv = tmp_path / "ts.csv"
    js = tmp_path / "ts.json"
    blue_open.write_csv(csv)
    blue_open.write_json(js)
    head = csv.read_text().splitlines()[0]
    assert head == "t,y1,y2,u,theta_dot_bit,omega_cmd"
    data = json.loads(js.read_text())
    assert data["stick_intervals"] and data["config"]["initial_offset"] == 0.6


def test_backmapped_command_at_rest(scenarios):
    ts = sim.run(scenarios["gray"], None, sim.SimConfig(N=50, t_final=1))
    assert np.allclose(ts.omega_cmd, scn.steady_state(scenarios["gray"]).Omega0)
    assert np.allclose(ts.theta_dot_bit, scenarios["gray"].Omega)


def test_decay_rate_exact():
    t = np.linspace(0, 10, 1001)
    assert sim.decay_rate(t, 3 * np.exp(-0.7 * t), 0.0) == pytest.approx(0.7, rel=1e-9)
