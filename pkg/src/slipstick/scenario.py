"""Physical drillstring parameters, the dimensionless model and the bit nonlinearity.

The torsional string is scaled to unit length and unit wave speed.  All later
analysis works in the coordinates ``(q, alpha, lambda)`` returned by
:func:`derive_dimensionless`; the bit friction enters through ``psi``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from typing import Optional

import numpy as np

from .errors import SectorViolation

SCENARIO_NAMES = ("gray", "blue", "magenta", "red", "green")


@dataclass(frozen=True)
class ScenarioParams:
    """Physical constants of one drilling scenario (SI units)."""

    G_shear: float
    J_geom: float
    I_string: float
    I_bit: float
    L: float
    Omega: float
    c_a: float
    beta: float
    W_ob: float
    R_b: float
    mu_sb: float
    mu_cb: float
    gamma_b: float
    nu_f: float
    c_b: float
    name: str = "custom"

    def __post_init__(self):
        for f in ("G_shear", "J_geom", "I_string", "I_bit", "L", "Omega", "c_a", "nu_f"):
            if not getattr(self, f) > 0:
                raise ValueError(f"{f} must be strictly positive")
        # beta, W_ob, R_b and c_b may vanish: frictionless and undamped limits
        for f in ("beta", "W_ob", "R_b", "c_b"):
            if getattr(self, f) < 0:
                raise ValueError(f"{f} must be nonnegative")
        if not self.mu_sb > self.mu_cb >= 0:
            raise ValueError("need mu_sb > mu_cb >= 0")
        if not 0 < self.gamma_b < 1:
            raise ValueError("gamma_b must lie in (0, 1)")

    # frequently used combinations
    @property
    def GJ(self) -> float:
        return self.G_shear * self.J_geom

    @property
    def sqrt_GJI(self) -> float:
        return math.sqrt(self.G_shear * self.J_geom * self.I_string)

    @property
    def time_scale(self) -> float:
        return math.sqrt(self.GJ / self.I_string) / self.L

    def with_beta(self, beta: float) -> "ScenarioParams":
        return replace(self, beta=beta)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class DimParams:
    """Dimensionless model coordinates.

    ``lam`` is the distributed damping (``lambda`` in JSON).
    """

    q: float
    alpha: float
    lam: float
    p: float = 0.0
    time_scale: float = 1.0
    kink: float = -math.inf

    def __post_init__(self):
        if self.alpha < 0 or self.lam < 0:
            raise ValueError("alpha and lambda must be nonnegative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d


@dataclass(frozen=True)
class SectorBounds:
    """Sector ``q_l*w <= psi(w) <= q_u*w`` with optional large-magnitude data.

    ``verified`` records whether the bound was checked against a scenario's psi.
    """

    q_l: float
    q_u: float
    c: float = field(default=None)
    r: float = field(default=None)
    M_mag: Optional[float] = None
    L_mag: Optional[float] = None
    mode: str = "global"
    verified: bool = False

    def __post_init__(self):
        if self.q_l > self.q_u:
            raise ValueError("q_l must not exceed q_u")
        c = 0.5 * (self.q_l + self.q_u)
        r = 0.5 * (self.q_u - self.q_l)
        if self.c is None:
            object.__setattr__(self, "c", c)
        if self.r is None:
            object.__setattr__(self, "r", r)
        if abs(self.c - c) > 1e-12 or abs(self.r - r) > 1e-12:
            raise ValueError("stored c, r inconsistent with q_l, q_u")

    @classmethod
    def from_center(cls, c: float, r: float, **kw) -> "SectorBounds":
        return cls(q_l=c - r, q_u=c + r, **kw)

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# friction law

def phi(sp: ScenarioParams, v):
    """Bit friction torque (mud viscosity plus Stribeck rock term); odd in ``v``."""
    v = np.asarray(v, dtype=float)
    k = sp.gamma_b / sp.nu_f
    rock = sp.W_ob * sp.R_b * (sp.mu_cb + (sp.mu_sb - sp.mu_cb) * np.exp(-k * np.abs(v)))
    return sp.c_b * v + rock * np.sign(v)


def dphi(sp: ScenarioParams, v):
    """Derivative of :func:`phi` for ``v != 0``."""
    v = np.asarray(v, dtype=float)
    k = sp.gamma_b / sp.nu_f
    return sp.c_b - sp.W_ob * sp.R_b * k * (sp.mu_sb - sp.mu_cb) * np.exp(-k * np.abs(v))


def d2phi(sp: ScenarioParams, v):
    """Second derivative of :func:`phi` for ``v != 0``."""
    v = np.asarray(v, dtype=float)
    k = sp.gamma_b / sp.nu_f
    return np.sign(v) * sp.W_ob * sp.R_b * k**2 * (sp.mu_sb - sp.mu_cb) * np.exp(-k * np.abs(v))


def derive_dimensionless(sp: ScenarioParams) -> DimParams:
    """Map physical constants to ``(q, alpha, lambda)`` plus curvature and scales."""
    s = sp.sqrt_GJI
    q = -float(dphi(sp, sp.Omega)) / s
    alpha = sp.I_bit / (sp.L * sp.I_string)
    lam = sp.beta * sp.L / (2.0 * s)
    p = -float(d2phi(sp, sp.Omega)) / (sp.L * sp.I_string)
    kink = -sp.Omega * sp.L * math.sqrt(sp.I_string) / math.sqrt(sp.GJ)
    return DimParams(q=q, alpha=alpha, lam=lam, p=p, time_scale=sp.time_scale, kink=kink)


@dataclass(frozen=True)
class SteadyState:
    Omega0: float
    theta0_coeffs: tuple  # (c0, c1, c2) of theta0(xi, t) - Omega*t in powers of xi
    rate: float


def steady_state(sp: ScenarioParams) -> SteadyState:
    """Constant-torque equilibrium: top speed ``Omega0`` and the twist profile."""
    f = float(phi(sp, sp.Omega))
    omega0 = sp.Omega + (f + sp.beta * sp.Omega * sp.L) / sp.c_a
    c1 = -(f + sp.beta * sp.Omega * sp.L) / sp.GJ
    c2 = sp.beta * sp.Omega / (2.0 * sp.GJ)
    return SteadyState(Omega0=omega0, theta0_coeffs=(0.0, c1, c2), rate=sp.Omega)


def psi(sp: ScenarioParams, omega):
    """Dimensionless bit nonlinearity at velocity offset ``omega``.

    The sign kink sits where the physical bit speed vanishes; there
    ``sign(0) = 0`` is used.
    """
    omega = np.asarray(omega, dtype=float)
    dp = derive_dimensionless(sp)
    v = sp.Omega + sp.time_scale * omega
    out = (sp.L / sp.GJ) * (phi(sp, sp.Omega) - phi(sp, v)) - dp.q * omega
    return out if out.ndim else float(out)


def dpsi(sp: ScenarioParams, omega):
    """Closed-form derivative of :func:`psi` away from the kink."""
    omega = np.asarray(omega, dtype=float)
    dp = derive_dimensionless(sp)
    v = sp.Omega + sp.time_scale * omega
    out = -(sp.L / sp.GJ) * sp.time_scale * dphi(sp, v) - dp.q
    return out if out.ndim else float(out)


def psi_limits_at_kink(sp: ScenarioParams) -> tuple[float, float]:
    """One-sided values ``(psi(kink-), psi(kink+))`` bracketing the set-valued stick torque."""
    k = sp.L / sp.GJ
    dp = derive_dimensionless(sp)
    base = k * float(phi(sp, sp.Omega)) - dp.q * dp.kink
    stat = k * sp.W_ob * sp.R_b * sp.mu_sb
    return base + stat, base - stat


def sector_asymptotes(sp: ScenarioParams) -> tuple[float, float, float]:
    """Tail lines of psi: ``psi(w) ~ -q_s*w + a_plus`` (w -> +inf), ``+ a_minus`` (w -> -inf)."""
    dp = derive_dimensionless(sp)
    q_s = sp.c_b / sp.sqrt_GJI + dp.q
    k = sp.gamma_b / sp.nu_f
    e = math.exp(-k * sp.Omega)
    wr = sp.L * sp.W_ob * sp.R_b / sp.GJ
    a_plus = wr * (sp.mu_sb - sp.mu_cb) * e
    a_minus = wr * (2.0 * sp.mu_cb + (sp.mu_sb - sp.mu_cb) * e)
    return q_s, a_plus, a_minus


def _sample_grid(kink: float, span: float = 1e3, n_log: int = 4000, n_kink: int = 4000):
    """Nonzero sample points: log-spaced on both sides plus a dense band around the kink."""
    a = abs(kink)
    mags = np.logspace(-8, math.log10(span), n_log) * a
    band = kink + a * np.concatenate([-np.logspace(-9, 0, n_kink // 2), np.logspace(-9, 0, n_kink // 2)])
    w = np.concatenate([mags, -mags, band])
    w = w[w != 0.0]
    return np.unique(w)


def fit_sector(sp: ScenarioParams, q_l: float, q_u: float, mode: str = "global",
               span: float = 1e3) -> SectorBounds:
    """Check ``psi`` against the sector ``[q_l, q_u]``.

    ``global`` verifies the two-sided bound everywhere and raises
    :class:`SectorViolation` at the first offending ``omega`` (ordered by
    magnitude).  ``large_magnitude`` returns the threshold ``M_mag`` beyond
    which the bound holds, padded by 10%, and the inner Lipschitz bound
    ``L_mag`` on ``|omega| <= M_mag``.
    """
    if q_l > q_u:
        raise ValueError("q_l must not exceed q_u")
    if mode not in ("global", "large_magnitude"):
        raise ValueError(f"unknown mode {mode!r}")
    dp = derive_dimensionless(sp)
    q_s, a_plus, a_minus = sector_asymptotes(sp)
    w = _sample_grid(dp.kink, span)
    ps = psi(sp, w)
    tol = 1e-12 * (1.0 + np.abs(w))
    bad = (ps - q_l * w) * (ps - q_u * w) > tol * np.abs(w)
    # tails: ratio -> -q_s with a +-a/w correction; beyond the sampled span the
    # ratio is monotone, so the limit and the boundary sample decide it
    tail_ok = q_l < -q_s < q_u or (a_plus == 0 and a_minus == 0 and q_l <= -q_s <= q_u)

    if mode == "global":
        if bad.any() or not tail_ok:
            if bad.any():
                i = np.argmin(np.where(bad, np.abs(w), np.inf))
                raise SectorViolation(w[i], ps[i])
            wt = span * abs(dp.kink) * 10
            raise SectorViolation(wt, psi(sp, wt))
        return SectorBounds(q_l=q_l, q_u=q_u, mode="global", verified=True)

    if not tail_ok:
        wt = span * abs(dp.kink) * 10
        raise SectorViolation(wt, psi(sp, wt), "asymptotic slope lies outside the sector")
    m_raw = 0.0

    def viol(x):
        v = psi(sp, x)
        return (v - q_l * x) * (v - q_u * x) > 1e-12 * abs(x) * (1 + abs(x))

    # bisect between the outermost violator and the next sample outward, per side
    for sgn in (1.0, -1.0):
        side = np.sign(w) == sgn
        if not (bad & side).any():
            continue
        wb = w[bad & side]
        lo = float(wb[np.argmax(np.abs(wb))])
        outer = w[side & (np.abs(w) > abs(lo))]
        if outer.size:
            hi = float(outer[np.argmin(np.abs(outer))])
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if viol(mid):
                    lo = mid
                else:
                    hi = mid
        m_raw = max(m_raw, abs(lo))
    M = 1.1 * m_raw
    inner = np.abs(w) <= M
    ratios = np.abs(ps[inner] / w[inner]) if inner.any() else np.array([])
    L_mag = float(ratios.max()) if ratios.size else 0.0
    return SectorBounds(q_l=q_l, q_u=q_u, M_mag=M, L_mag=L_mag, mode="large_magnitude",
                        verified=True)


def min_global_sector(sp: ScenarioParams, span: float = 1e3) -> tuple[float, float]:
    """Tightest sampled ``(q_l, q_u)`` containing ``psi(w)/w`` over all ``w``."""
    dp = derive_dimensionless(sp)
    w = _sample_grid(dp.kink, span)
    ratio = psi(sp, w) / w
    q_s, _, _ = sector_asymptotes(sp)
    return float(min(ratio.min(), -q_s)), float(max(ratio.max(), -q_s))


def control_backmap(sp: ScenarioParams, u, y2):
    """Rotary-table speed command producing the dimensionless boundary input ``u``."""
    om0 = steady_state(sp).Omega0
    return om0 + (np.asarray(u) + (sp.c_a / sp.sqrt_GJI - 1.0) * np.asarray(y2)) * sp.GJ / (sp.c_a * sp.L)


def control_forward(sp: ScenarioParams, omega_cmd, y2):
    """Inverse of :func:`control_backmap`: boundary input from a speed command."""
    om0 = steady_state(sp).Omega0
    return (1.0 - sp.c_a / sp.sqrt_GJI) * np.asarray(y2) + sp.c_a * sp.L / sp.GJ * (np.asarray(omega_cmd) - om0)


# ---------------------------------------------------------------------------
# fixtures and JSON

_FIELDS = [f.name for f in fields(ScenarioParams)]


def scenario_from_dict(d: dict, beta_variant: str = "beta") -> ScenarioParams:
    d = dict(d)
    if beta_variant != "beta":
        if beta_variant not in d:
            raise KeyError(f"scenario has no {beta_variant!r} entry")
        d["beta"] = d[beta_variant]
    kw = {k: d[k] for k in _FIELDS if k in d}
    return ScenarioParams(**kw)


def load_scenario(name_or_path: str, beta_variant: str = "beta") -> ScenarioParams:
    """Load a bundled scenario by name or a scenario JSON file by path."""
    if name_or_path in SCENARIO_NAMES:
        text = resources.files("slipstick.data").joinpath(f"scenario_{name_or_path}.json").read_text()
    else:
        with open(name_or_path) as fh:
            text = fh.read()
    return scenario_from_dict(json.loads(text), beta_variant)


def scenario_raw(name: str) -> dict:
    return json.loads(resources.files("slipstick.data").joinpath(f"scenario_{name}.json").read_text())


# sectors used with the bundled controllers
PUBLISHED_SECTORS = {
    "gray": dict(q_l=-4.8, q_u=0.48, mode="global"),
    "blue": dict(q_l=-3.0, q_u=-0.1, mode="large_magnitude"),
}
