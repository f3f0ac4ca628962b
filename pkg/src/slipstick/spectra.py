"""Unstable-pole counts, zero crossings and the zone map of the ``(q, alpha)`` plane.

As ``lambda`` grows from 0 the number of unstable poles ``n_p`` follows one
of five patterns, depending on where ``(q, alpha)`` sits relative to the
parabola ``alpha = (q-1) + (q-1)^2/3`` and the two traced curves ``m(q)``
(sup of ``alpha`` over imaginary-axis crossings, ``q >= 1``) and ``b(alpha)``
(inf of ``q`` over crossings, ``q <= 1``).
"""
from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .contour import ContourSpec, WindingResult, half_disc_winding
from .errors import OnBoundary, RadiusTooSmall, ZeroCrossingOnContour
from .xfer import XferParams, analytic_radius, eval_Phi, log_d, log_n

log = logging.getLogger(__name__)

ZONE_PATTERNS = {
    "Gray": [0],
    "Blue": [0, 2, 0],
    "Red": [1, 2, 0],
    "Magenta": [1, 0, 2, 0],
    "Green": [1, 0],
}


@dataclass
class ZonePattern:
    zone: str
    pattern: list
    thresholds: list
    scanned: list = field(default_factory=list)
    consistent: bool = True

    def __post_init__(self):
        if self.consistent and len(self.pattern) != len(self.thresholds) + 1:
            raise ValueError("pattern length must equal thresholds length + 1")

    def to_dict(self) -> dict:
        return dict(zone=self.zone, pattern=self.pattern, thresholds=self.thresholds,
                    scanned=self.scanned, consistent=self.consistent)


# ---------------------------------------------------------------------------
# pole counting

def count_unstable_poles(p: XferParams, spec: ContourSpec | None = None,
                         check_radius: bool = True) -> tuple[int, WindingResult]:
    """Number of poles of ``G`` in the closed right half-plane, by the argument principle.

    The contour radius defaults to the analytic pole-exclusion bound.  With
    ``check_radius`` the count is repeated at ``2R`` and must agree.
    """
    spec = spec or ContourSpec()
    R = spec.R if spec.R is not None else analytic_radius(p, include_zeros=False)

    def f(s):
        return log_d(p, s)

    res = half_disc_winding(f, R, spec)
    if check_radius:
        res2 = half_disc_winding(f, 2.0 * R, spec)
        if res2.winding != res.winding:
            raise RadiusTooSmall(f"winding {res.winding} at R={R:.4g} but {res2.winding} at 2R")
    # clockwise traversal of the enclosed region: zeros of d give negative winding
    return -res.winding, res


def count_unstable_zeros(p: XferParams, spec: ContourSpec | None = None) -> tuple[int, WindingResult]:
    """Experimental: zeros of ``n(s)`` (transmission zeros of ``G2``) inside the half-disc."""
    spec = spec or ContourSpec()
    R = spec.R if spec.R is not None else analytic_radius(p, include_zeros=True)
    res = half_disc_winding(lambda s: log_n(p, s), R, spec)
    return -res.winding, res


def count_unstable_poles_robust(p: XferParams, spec: ContourSpec | None = None,
                                rng: np.random.Generator | None = None, tries: int = 5) -> int:
    """Retry with a 1%-perturbed radius, then a tiny ``lambda`` nudge, on contour hits."""
    rng = rng or np.random.default_rng(0)
    spec = spec or ContourSpec()
    last = None
    for k in range(tries):
        try:
            return count_unstable_poles(p, spec)[0]
        except (ZeroCrossingOnContour, RadiusTooSmall) as exc:
            last = exc
            R = spec.R if spec.R is not None else analytic_radius(p, include_zeros=False)
            spec = ContourSpec(R=R * (1 + 0.01 * rng.uniform(0.5, 1.0)), base_samples=spec.base_samples,
                               max_refinements=spec.max_refinements, phase_cap=spec.phase_cap,
                               zero_tol=spec.zero_tol)
            if k >= 1:
                p = XferParams(p.q, p.alpha, p.lam + 1e-7 * (k + 1))
    raise last


# ---------------------------------------------------------------------------
# crossings

def crossing_curve(lam: float, omega):
    """``(q, alpha)`` for which ``j*omega`` is a pole, unfiltered."""
    omega = np.asarray(omega, dtype=float)
    ph = eval_Phi(lam, 1j * omega)
    return 1.0 + ph.real, -ph.imag / omega


def zero_crossing_pairs(lam: float, omega_grid) -> list:
    """Triples ``(q, alpha, omega)`` with a pole at ``j*omega``, restricted to ``q >= 0, alpha > 0``."""
    w = np.asarray(omega_grid, dtype=float)
    if np.any(w == 0):
        raise ValueError("omega entries must be nonzero")
    q, a = crossing_curve(lam, w)
    keep = (q >= 0) & (a > 0)
    return [(float(qq), float(aa), float(ww)) for qq, aa, ww in zip(q[keep], a[keep], w[keep])]


def lambda_crit(q: float):
    """Damping at which a real pole passes through the origin, or ``None`` for ``q < 1``."""
    if q > 1:
        return (q - 1.0) / 2.0
    if q == 1:
        return 0.0
    return None


def parabola(q: float) -> float:
    return (q - 1.0) + (q - 1.0) ** 2 / 3.0


def crossing_speed(q: float, alpha: float) -> float:
    """``s'(lambda_crit)`` for the real pole crossing the origin."""
    den = parabola(q) - alpha
    return math.inf if den == 0 else 2.0 / den


def crossing_direction(q: float, alpha: float, tol: float = 1e-12) -> str:
    if q <= 1:
        raise ValueError("crossing direction needs q > 1")
    v = parabola(q) - alpha
    if abs(v) <= tol:
        return "degenerate"
    return "left_to_right" if v > 0 else "right_to_left"


# ---------------------------------------------------------------------------
# zone curves

_LAMS = np.logspace(-3, math.log10(5.0), 240)
_OMEGAS = np.concatenate([np.logspace(-3, 0, 400, endpoint=False), np.linspace(1.0, 50.0, 4000)])


def _alpha_at_q(lam: float, q0: float, omegas=_OMEGAS) -> float:
    q, a = crossing_curve(lam, omegas)
    g = q - q0
    idx = np.nonzero(np.sign(g[:-1]) * np.sign(g[1:]) <= 0)[0]
    if idx.size == 0:
        return -math.inf
    t = g[idx] / (g[idx] - g[idx + 1] + 1e-300)
    vals = a[idx] + t * (a[idx + 1] - a[idx])
    vals = vals[vals > 0]
    return float(vals.max()) if vals.size else -math.inf


def _q_at_alpha(lam: float, a0: float, omegas=_OMEGAS) -> float:
    q, a = crossing_curve(lam, omegas)
    g = a - a0
    idx = np.nonzero(np.sign(g[:-1]) * np.sign(g[1:]) <= 0)[0]
    if idx.size == 0:
        return math.inf
    t = g[idx] / (g[idx] - g[idx + 1] + 1e-300)
    vals = q[idx] + t * (q[idx + 1] - q[idx])
    vals = vals[vals >= 0]
    return float(vals.min()) if vals.size else math.inf


def _refine(fun, lams, sign):
    vals = np.array([fun(l) for l in lams])
    if not np.isfinite(vals).any():
        return float(vals[0])
    k = int(np.argmax(sign * np.where(np.isfinite(vals), vals, -sign * np.inf)))
    lo = math.log(lams[max(k - 1, 0)])
    hi = math.log(lams[min(k + 1, len(lams) - 1)])
    best = vals[k]
    if hi > lo:
        r = minimize_scalar(lambda x: -sign * fun(math.exp(x)), bounds=(lo, hi), method="bounded",
                            options={"xatol": 1e-6})
        if np.isfinite(r.fun):
            best = max(best, -r.fun) if sign > 0 else min(best, r.fun)
    return float(best)


@functools.lru_cache(maxsize=4096)
def _m_cached(q_key: float) -> float:
    return _refine(lambda l: _alpha_at_q(l, q_key), _LAMS, +1)


@functools.lru_cache(maxsize=4096)
def _b_cached(a_key: float) -> float:
    return _refine(lambda l: _q_at_alpha(l, a_key), _LAMS, -1)


def m_curve(q: float) -> float:
    """Upper envelope of ``alpha`` over imaginary-axis crossings at fixed ``q >= 1``."""
    return _m_cached(round(float(q), 6))


def b_curve(alpha: float) -> float:
    """Lower envelope of ``q`` over imaginary-axis crossings at fixed ``alpha`` (``inf`` if none)."""
    return _b_cached(round(float(alpha), 6))


def zone_of(q: float, alpha: float, tol: float = 1e-3) -> str:
    """Zone label from the parabola and the traced curves; raises :class:`OnBoundary`."""
    if q < 0 or alpha < 0:
        raise ValueError("need q >= 0 and alpha >= 0")
    if abs(q - 1.0) < tol:
        raise OnBoundary(q, alpha, "q = 1")
    if q > 1:
        par = parabola(q)
        if abs(alpha - par) < tol:
            raise OnBoundary(q, alpha, "parabola")
        if alpha < par:
            return "Red"
        m = m_curve(q)
        if abs(alpha - m) < tol:
            raise OnBoundary(q, alpha, "m(q)")
        return "Magenta" if alpha < m else "Green"
    b = b_curve(alpha)
    if math.isfinite(b) and abs(q - b) < tol:
        raise OnBoundary(q, alpha, "b(alpha)")
    return "Blue" if q > b else "Gray"


# ---------------------------------------------------------------------------
# lambda scans

def scan_counts(q: float, alpha: float, lams) -> list:
    """``n_p`` at each ``lambda`` in ``lams`` (robust to contour hits)."""
    return [count_unstable_poles_robust(XferParams(q, alpha, float(l))) for l in lams]


def compress(counts) -> list:
    out = []
    for c in counts:
        if not out or out[-1] != c:
            out.append(c)
    return out


def _bisect_transition(q, alpha, lo, hi, n_lo, tol=1e-6):
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if count_unstable_poles_robust(XferParams(q, alpha, mid)) == n_lo:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def lambda_pattern(q: float, alpha: float, step: float = 0.02, lam_min_span: float = 3.0,
                   lam_cap: float = 50.0) -> tuple[list, list]:
    """Scan ``n_p`` over ``lambda`` and locate each change by bisection.

    The scan runs on ``[0, max(3, 2*lambda_last)]`` where ``lambda_last`` is the
    last breakpoint found, and is extended while ``n_p`` has not returned to 0.
    """
    hi = lam_min_span
    lams = np.arange(0.0, hi + step / 2, step)
    counts = scan_counts(q, alpha, lams)
    while True:
        changes = [i for i in range(1, len(counts)) if counts[i] != counts[i - 1]]
        last = lams[changes[-1]] if changes else 0.0
        if (2 * last <= lams[-1] + step and counts[-1] == 0) or lams[-1] >= lam_cap:
            break
        # keep going until n_p is back to zero and the window covers twice the last breakpoint
        target = max(2 * last, 1.5 * lams[-1]) if counts[-1] != 0 else 2 * last
        extra = lams[-1] + step * np.arange(1, max(int(round((min(target, lam_cap) - lams[-1]) / step)), 1) + 1)
        lams = np.concatenate([lams, extra])
        counts += scan_counts(q, alpha, extra)
    thresholds = []
    lc = lambda_crit(q)
    for i in range(1, len(counts)):
        if counts[i] != counts[i - 1]:
            if lc is not None and lams[i - 1] <= lc <= lams[i] and counts[i - 1] == 1 and counts[i] in (0, 2):
                thresholds.append(lc)
            else:
                thresholds.append(_bisect_transition(q, alpha, lams[i - 1], lams[i], counts[i - 1]))
    return compress(counts), thresholds


def classify_zone(q: float, alpha: float, tol: float = 1e-3, step: float = 0.02) -> ZonePattern:
    """Zone, its declared ``n_p`` pattern in ``lambda``, and the located breakpoints."""
    zone = zone_of(q, alpha, tol)
    declared = list(ZONE_PATTERNS[zone])
    scanned, thresholds = lambda_pattern(q, alpha, step=step)
    ok = scanned == declared
    if not ok:
        log.warning("scan pattern %s differs from declared %s at (q, alpha)=(%g, %g)",
                    scanned, declared, q, alpha)
    return ZonePattern(zone=zone, pattern=declared, thresholds=[float(t) for t in thresholds],
                       scanned=scanned, consistent=ok)


def zone_curves(q_grid=None, alpha_grid=None) -> dict:
    """Polylines of the zone boundaries for plotting."""
    if q_grid is None:
        q_grid = np.linspace(1.0 + 1e-3, 2.5, 80)
    if alpha_grid is None:
        alpha_grid = np.linspace(1e-3, 1.5, 80)
    return {
        "parabola": (np.asarray(q_grid), np.array([parabola(x) for x in q_grid])),
        "m": (np.asarray(q_grid), np.array([m_curve(x) for x in q_grid])),
        "b": (np.array([b_curve(a) for a in alpha_grid]), np.asarray(alpha_grid)),
    }
