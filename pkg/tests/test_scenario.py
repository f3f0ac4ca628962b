import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slipstick import scenario as scn
from slipstick.errors import SectorViolation

# published derived values: Omega0, kink, lambda, alpha, q, p, tau/t
TABLE2 = {
    "gray": (15.02, -3.7186, 0.1957, 0.7994, 0.0019, -0.0048, 2.6892),
    "blue": (19.75, -6.5044, 0.5477, 0.1828, 0.9796, -0.1506, 1.5374),
    "magenta": (21.94, -3.7186, 0.9786, 0.3197, 1.0885, -0.2927, 2.6892),
    "red": (20.50, -6.5044, 0.03423, 0.1828, 1.2559, -0.1931, 1.5374),
    "green": (19.13, -3.7186, 0.0391, 0.7994, 1.0885, -0.2927, 2.6892),
}


def row(sp):
    dp = scn.derive_dimensionless(sp)
    return (scn.steady_state(sp).Omega0, dp.kink, dp.lam, dp.alpha, dp.q, dp.p, dp.time_scale)


@pytest.mark.parametrize("name", ["blue", "magenta", "red", "green"])
def test_table2_rows(scenarios, name):
    got = row(scenarios[name])
    for g, ref in zip(got, TABLE2[name]):
        assert g == pytest.approx(ref, rel=0.02)


def test_gray_row_except_known_mismatches(scenarios):
    got = row(scenarios["gray"])
    ref = TABLE2["gray"]
    for i in (1, 2, 3, 6):
        assert got[i] == pytest.approx(ref[i], rel=0.02)
    assert got[4] == pytest.approx(ref[4], rel=0.25)


def test_gray_table2_reproduced_with_blue_bit_radius(scenarios):
    # the tabulated gray Omega0, q and p follow from R_b = 0.18202275 instead of 0.155575
    sp = scn.ScenarioParams(**{**scenarios["gray"].to_dict(), "R_b": 0.18202275})
    got = row(sp)
    assert got[0] == pytest.approx(15.02, rel=1e-3)
    assert got[4] == pytest.approx(0.0019, rel=0.02)
    assert got[5] == pytest.approx(-0.0048, rel=0.01)


def test_blue_example_values(dims):
    dp = dims["blue"]
    for g, ref in zip((dp.q, dp.alpha, dp.lam, dp.p), (0.9796, 0.1828, 0.5477, -0.1506)):
        assert g == pytest.approx(ref, rel=5e-3)
    assert dims["gray"].lam == pytest.approx(0.1957, rel=1e-3)


def test_frictionless_limit(scenarios):
    sp = scn.ScenarioParams(**{**scenarios["blue"].to_dict(), "W_ob": 0.0, "c_b": 0.0})
    dp = scn.derive_dimensionless(sp)
    assert dp.q == 0.0 and dp.p == 0.0


def test_steady_state(scenarios):
    assert scn.steady_state(scenarios["blue"]).Omega0 == pytest.approx(19.75, rel=1e-3)
    sp = scn.ScenarioParams(**{**scenarios["blue"].to_dict(), "W_ob": 0.0, "c_b": 0.0, "beta": 0.0})
    assert scn.steady_state(sp).Omega0 == sp.Omega


def test_gray_omega0_table_value_not_reached(scenarios):
    # Table 1 gray constants give 14.37, 4.3% below the tabulated 15.02
    assert scn.steady_state(scenarios["gray"]).Omega0 == pytest.approx(14.3726, rel=1e-4)


def test_invariants_rejected():
    base = scn.load_scenario("blue").to_dict()
    with pytest.raises(ValueError):
        scn.ScenarioParams(**{**base, "L": -1.0})
    with pytest.raises(ValueError):
        scn.ScenarioParams(**{**base, "mu_cb": 0.9})
    with pytest.raises(ValueError):
        scn.ScenarioParams(**{**base, "gamma_b": 1.0})


def test_beta_variants():
    # Table 2 lambda matches the larger beta for magenta and the smaller one for red
    assert scn.derive_dimensionless(scn.load_scenario("magenta")).lam == pytest.approx(0.9786, rel=1e-3)
    assert scn.derive_dimensionless(scn.load_scenario("red")).lam == pytest.approx(0.03423, rel=1e-3)
    alt = scn.derive_dimensionless(scn.load_scenario("magenta", beta_variant="beta_alt"))
    assert alt.lam == pytest.approx(0.9786 / 50, rel=1e-3)


# -- psi --------------------------------------------------------------------

@pytest.mark.parametrize("name", list(TABLE2))
def test_psi_origin_and_curvature(scenarios, dims, name):
    sp, dp = scenarios[name], dims[name]
    h = 1e-3
    assert scn.psi(sp, 0.0) == 0.0
    assert (scn.psi(sp, h) - scn.psi(sp, -h)) / (2 * h) == pytest.approx(0.0, abs=1e-6)
    d2 = (scn.psi(sp, h) - 2 * scn.psi(sp, 0.0) + scn.psi(sp, -h)) / h**2
    assert d2 == pytest.approx(dp.p, rel=0.01)


def test_psi_tail_matches_asymptote_gray(scenarios, dims):
    sp, dp = scenarios["gray"], dims["gray"]
    q_s, a_plus, a_minus = scn.sector_asymptotes(sp)
    w = 10 * abs(dp.kink)
    assert scn.psi(sp, w) + q_s * w == pytest.approx(a_plus, rel=1e-6)
    w = -1e3 * abs(dp.kink)
    assert scn.psi(sp, w) + q_s * w == pytest.approx(a_minus, rel=1e-6)


def test_asymptote_closed_forms(scenarios, dims):
    sp = scenarios["blue"]
    q_s, _, _ = scn.sector_asymptotes(sp)
    assert q_s == pytest.approx(sp.c_b / sp.sqrt_GJI + dims["blue"].q, rel=1e-12)
    assert q_s == pytest.approx(0.9797, rel=5e-3)
    sp0 = scn.ScenarioParams(**{**sp.to_dict(), "W_ob": 0.0})
    _, ap, am = scn.sector_asymptotes(sp0)
    assert ap == 0.0 and am == 0.0


def test_psi_within_asymptote_band_gray(scenarios, dims):
    sp, dp = scenarios["gray"], dims["gray"]
    q_s, ap, am = scn.sector_asymptotes(sp)
    k = abs(dp.kink)
    w = np.concatenate([np.linspace(5 * k, 1e3 * k, 20000), -np.linspace(5 * k, 1e3 * k, 20000)])
    w = w[(w > 5 * k) | (w < dp.kink - 5 * k)]
    line = np.where(w > 0, -q_s * w + ap, -q_s * w + am)
    assert np.max(np.abs(scn.psi(sp, w) - line)) < 1e-4


def test_psi_asymptote_band_blue_is_slow(scenarios, dims):
    # gamma_b = 0.1: the Stribeck tail still deviates by more than 1e-4 at 5|kink|
    sp, dp = scenarios["blue"], dims["blue"]
    q_s, ap, _ = scn.sector_asymptotes(sp)
    w = 5 * abs(dp.kink)
    assert abs(scn.psi(sp, w) - (-q_s * w + ap)) > 1e-4


@settings(max_examples=60, deadline=None)
@given(st.floats(min_value=-200.0, max_value=200.0))
def test_dpsi_matches_finite_difference(w):
    sp = scn.load_scenario("blue")
    dp = scn.derive_dimensionless(sp)
    if abs(w - dp.kink) < 1e-2:
        return
    h = 1e-6 * max(1.0, abs(w))
    fd = (scn.psi(sp, w + h) - scn.psi(sp, w - h)) / (2 * h)
    assert fd == pytest.approx(scn.dpsi(sp, w), rel=1e-6, abs=1e-6)


def test_psi_kink_limits(scenarios, dims):
    sp, dp = scenarios["blue"], dims["blue"]
    lo, hi = scn.psi_limits_at_kink(sp)
    e = 1e-9
    assert scn.psi(sp, dp.kink - e) == pytest.approx(lo, rel=1e-6)
    assert scn.psi(sp, dp.kink + e) == pytest.approx(hi, rel=1e-6)


# -- sectors ----------------------------------------------------------------

def test_blue_large_magnitude_sector(scenarios):
    sb = scn.fit_sector(scenarios["blue"], -3.0, -0.1, mode="large_magnitude")
    assert sb.r == pytest.approx(1.45)
    assert sb.c == pytest.approx(-1.55)
    assert sb.M_mag > 0 and sb.L_mag > 0
    # outer product condition beyond M
    sp = scenarios["blue"]
    w = np.concatenate([np.linspace(sb.M_mag, 1e3, 5000), -np.linspace(sb.M_mag, 1e3, 5000)])
    ps = scn.psi(sp, w)
    assert np.all((ps + 3.0 * w) * (ps + 0.1 * w) <= 1e-9)


@pytest.mark.xfail(strict=True, reason="psi of the gray scenario leaves the sector (-4.8, 0.48) "
                                       "near the kink; sampled ratio range is [-6.58, 1.52]")
def test_gray_published_sector_global(scenarios):
    scn.fit_sector(scenarios["gray"], -4.8, 0.48, mode="global")


def test_gray_minimal_global_sector(scenarios):
    ql, qu = scn.min_global_sector(scenarios["gray"])
    assert ql == pytest.approx(-6.577, abs=5e-3)
    assert qu == pytest.approx(1.516, abs=5e-3)
    sb = scn.fit_sector(scenarios["gray"], ql - 1e-3, qu + 1e-3)
    assert sb.verified


def test_zero_sector_violation(scenarios):
    with pytest.raises(SectorViolation):
        scn.fit_sector(scenarios["blue"], 0.0, 0.0)


def test_accepted_global_sector_holds_on_random_points(scenarios):
    sp = scenarios["gray"]
    ql, qu = scn.min_global_sector(sp)
    sb = scn.fit_sector(sp, ql - 1e-3, qu + 1e-3)
    w = np.random.default_rng(1).uniform(-1e3, 1e3, 10**5)
    ps = scn.psi(sp, w)
    assert np.all((ps - sb.q_l * w) * (ps - sb.q_u * w) <= 1e-9)


def test_sector_bounds_consistency():
    sb = scn.SectorBounds.from_center(-2.16, 2.64)
    assert sb.q_l == pytest.approx(-4.8) and sb.q_u == pytest.approx(0.48)
    with pytest.raises(ValueError):
        scn.SectorBounds(-1.0, 1.0, c=0.5)
    with pytest.raises(ValueError):
        scn.SectorBounds(1.0, -1.0)


# -- control maps -----------------------------------------------------------

def test_backmap(scenarios):
    sp = scenarios["gray"]
    om0 = scn.steady_state(sp).Omega0
    assert scn.control_backmap(sp, 0.0, 0.0) == pytest.approx(om0)
    assert scn.control_backmap(sp, 1.0, 0.0) == pytest.approx(om0 + sp.GJ / (sp.c_a * sp.L))


@settings(max_examples=50, deadline=None)
@given(st.floats(-50, 50), st.floats(-50, 50))
def test_backmap_round_trip(u, y2):
    sp = scn.load_scenario("blue")
    om = scn.control_backmap(sp, u, y2)
    assert float(scn.control_forward(sp, om, y2)) == pytest.approx(u, abs=1e-12 * max(1.0, abs(u), abs(y2)) * 1e3)


def test_json_round_trip(tmp_path):
    raw = scn.scenario_raw("red")
    p = tmp_path / "s.json"
    import json

    p.write_text(json.dumps(raw))
    a = scn.load_scenario(str(p))
    b = scn.load_scenario("red")
    assert a == b
    assert math.isclose(scn.derive_dimensionless(a).lam, 0.03423, rel_tol=1e-3)
