"""Stability and performance certificates for a controller on the irrational plant.

Every certificate states one relation between a computed number and a
threshold, together with the tolerance that the margin must exceed.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import norms
from .contour import ContourSpec, WindingResult, half_disc_winding
from .errors import ImageNearOrigin, RadiusTooSmall, UnstableController, UnstableSystem
from .scenario import SectorBounds
from .spectra import count_unstable_poles
from .ssmodel import Controller, channel_select, loop_channels, weight_Wu
from .xfer import IrrationalLoop, XferParams, analytic_radius

KINDS = ("nyquist_closed_loop", "sector_hinf", "large_mag_pk", "weight_bound", "h2_surrogate")
# relation per kind: "eq" for integer equality, "lt" for computed < threshold
RELATION = {"nyquist_closed_loop": "eq", "sector_hinf": "lt", "large_mag_pk": "lt",
            "weight_bound": "le", "h2_surrogate": "le"}


@dataclass
class Certificate:
    kind: str
    computed: float
    threshold: float
    passed: bool
    tolerance: float
    context: dict = field(default_factory=dict)
    winding: Optional[WindingResult] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown certificate kind {self.kind!r}")

    @property
    def relation(self) -> str:
        return RELATION[self.kind]

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("winding", None)
        d["pass"] = d.pop("passed")
        d["relation"] = self.relation
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, default=float)


def _decide(relation, computed, threshold, tol) -> bool:
    if relation == "eq":
        return computed == threshold
    if relation == "lt":
        return computed + tol < threshold
    return computed + tol <= threshold


def _ctx(p: XferParams, K: Controller, **extra) -> dict:
    d = dict(q=p.q, alpha=p.alpha, **{"lambda": p.lam}, controller=K.name)
    d.update(extra)
    return d


def nyquist_winding(p: XferParams, K: Controller, spec: Optional[ContourSpec] = None,
                    doublings: int = 2) -> WindingResult:
    """Counterclockwise winding of ``1 + K1 G1 + K2 G2`` over the half-disc contour.

    The radius starts at the pole bound of ``G`` and is doubled ``doublings``
    times; the count must not change, so that closed-loop poles far out are
    not missed.
    """
    spec = spec or ContourSpec()
    loop = IrrationalLoop(p, K)
    R = spec.R if spec.R is not None else analytic_radius(p, include_zeros=False)
    res = half_disc_winding(loop.log_return_difference, R, spec, exc=ImageNearOrigin)
    for _ in range(doublings):
        R *= 2.0
        nxt = half_disc_winding(loop.log_return_difference, R, spec, exc=ImageNearOrigin)
        if nxt.winding != res.winding:
            raise RadiusTooSmall(f"closed-loop winding {res.winding} changed to {nxt.winding} at R={R:.4g}")
    return res


def nyquist_certify(p: XferParams, K: Controller, spec: Optional[ContourSpec] = None) -> Certificate:
    """Pass iff the return difference winds ``n_p`` times counterclockwise around 0."""
    if not K.is_stable():
        raise UnstableController(f"controller {K.name!r} has closed right half-plane eigenvalues")
    spec = spec or ContourSpec()
    n_p, _ = count_unstable_poles(p, spec)
    res = nyquist_winding(p, K, spec)
    ok = _decide("eq", res.winding, n_p, 0)
    return Certificate("nyquist_closed_loop", int(res.winding), int(n_p), ok, spec.zero_tol,
                       _ctx(p, K, R=res.R, samples=res.samples_used, min_modulus=res.min_modulus),
                       winding=res)


def _require_stable(p: XferParams, K: Controller, sb: SectorBounds, spec=None):
    for label, pp in (("q", p), ("q_shifted", p.shifted(sb.c))):
        cert = nyquist_certify(pp, K, spec)
        if not cert.passed:
            raise UnstableSystem(f"controller does not stabilize the plant at {label}={pp.q:.6g} "
                                 f"(winding {cert.computed}, n_p {cert.threshold})")


def sector_certificate(p: XferParams, K: Controller, sb: SectorBounds,
                       spec: Optional[ContourSpec] = None) -> Certificate:
    """Small-gain certificate ``||T~_ze||_inf < 1/r`` on the shifted irrational plant."""
    _require_stable(p, K, sb, spec)
    ch = IrrationalLoop(p.shifted(sb.c), K, stability_certified=True).channel("zw")
    nr = norms.hinf(ch)
    thr = 1.0 / sb.r if sb.r > 0 else math.inf
    ok = _decide("lt", nr.value, thr, nr.tolerance)
    return Certificate("sector_hinf", nr.value, thr, ok, nr.tolerance,
                       _ctx(p, K, c=sb.c, r=sb.r, argmax=nr.argmax, sector_verified=sb.verified))


def large_mag_certificate(p: XferParams, K: Controller, sb: SectorBounds, pk_cfg: Optional[dict] = None,
                          spec: Optional[ContourSpec] = None) -> Certificate:
    """Peak-gain certificate ``||T~_ze||_pk < 1/r`` on the finite-difference model (default N=200)."""
    cfg = dict(N=200)
    cfg.update(pk_cfg or {})
    _require_stable(p, K, sb, spec)
    N = int(cfg.pop("N"))
    cl = loop_channels(p, K, N, shift_c=sb.c)
    nr = norms.peak_gain(channel_select(cl, ["z"], ["w"]), **cfg)
    thr = 1.0 / sb.r if sb.r > 0 else math.inf
    ok = _decide("lt", nr.value, thr, nr.tolerance)
    return Certificate("large_mag_pk", nr.value, thr, ok, nr.tolerance,
                       _ctx(p, K, c=sb.c, r=sb.r, N=N, M_mag=sb.M_mag, L_mag=sb.L_mag, mode=sb.mode,
                            sector_verified=sb.verified))


def weight_certificate(p: XferParams, K: Controller, spec: Optional[ContourSpec] = None) -> Certificate:
    """Control-effort constraint ``||W_u T_uw||_inf <= 1`` on the irrational loop."""
    cert = nyquist_certify(p, K, spec)
    if not cert.passed:
        raise UnstableSystem("closed loop is not stable; weight bound undefined")
    W = weight_Wu()
    ch = IrrationalLoop(p, K, stability_certified=True).channel("uw", weight=lambda s: W.evalfr(s)[:, 0, 0])
    nr = norms.hinf(ch)
    ok = _decide("le", nr.value, 1.0, nr.tolerance)
    return Certificate("weight_bound", nr.value, 1.0, ok, nr.tolerance, _ctx(p, K, argmax=nr.argmax))


def h2_surrogate(p: XferParams, K: Controller, sb: SectorBounds, rho: float, N: int = 200,
                 spec: Optional[ContourSpec] = None) -> Certificate:
    """``||T~_ze||_2 <= rho`` on the finite-difference model."""
    if not rho > 0:
        raise ValueError("rho must be positive")
    _require_stable(p, K, sb, spec)
    cl = loop_channels(p, K, N, shift_c=sb.c)
    nr = norms.h2(channel_select(cl, ["z"], ["w"]))
    ok = _decide("le", nr.value, rho, nr.tolerance)
    return Certificate("h2_surrogate", nr.value, rho, ok, nr.tolerance, _ctx(p, K, c=sb.c, r=sb.r, N=N))


def bundle(p: XferParams, K: Controller, sb: SectorBounds, rho: Optional[float] = None,
           spec: Optional[ContourSpec] = None, N: int = 200) -> list:
    """All certificates for one (plant, controller, sector) triple; failures recorded, not raised."""
    out = [nyquist_certify(p, K, spec)]
    for fn in (lambda: sector_certificate(p, K, sb, spec),
               lambda: large_mag_certificate(p, K, sb, {"N": N}, spec),
               lambda: weight_certificate(p, K, spec)):
        out.append(fn())
    if rho is not None:
        out.append(h2_surrogate(p, K, sb, rho, N, spec))
    return out


def stable_discretized(p: XferParams, K: Controller, N: int = 200) -> bool:
    """Cross-check: the discretized closed loop has negative spectral abscissa."""
    return norms.spectral_abscissa(loop_channels(p, K, N)) < 0
