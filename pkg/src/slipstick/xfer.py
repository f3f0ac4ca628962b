"""Irrational transfer functions of the damped wave with a lumped bit inertia.

With ``sigma^2 = s^2 + 2*lam*s``, ``S = sinh(sigma)/sigma`` and ``C = cosh(sigma)``::

    d(s)  = (s + 2 lam + alpha s^2 - q s) S + (alpha s - q + 1) C
    n(s)  = C + (alpha s^2 - q s) S
    G1 = 1/d   (bit velocity  <- top input u)
    G2 = n/d   (top velocity  <- top input u)

The disturbance ``w`` enters the bit boundary; its channels are
``(C + s S)/d`` to the bit and ``1/d`` to the top.

``S`` and ``C`` are even in ``sigma``.  Small ``|sigma^2|`` uses the power
series in ``sigma^2``; otherwise the root with ``Re sigma >= 0`` is taken and
the common factor ``exp(sigma)`` is split off so that large arguments do not
overflow.  All evaluators accept scalars or arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import NotWellPosed, NumericalPole, PoleHit

SERIES_THRESHOLD = 0.25
SERIES_TERMS = 12

# 1/(2k+1)! and 1/(2k)! for k = 0..SERIES_TERMS-1
_SH_COEF = np.array([1.0 / math.factorial(2 * k + 1) for k in range(SERIES_TERMS)])
_CH_COEF = np.array([1.0 / math.factorial(2 * k) for k in range(SERIES_TERMS)])


@dataclass(frozen=True)
class XferParams:
    q: float
    alpha: float
    lam: float

    def __post_init__(self):
        if self.alpha < 0 or self.lam < 0:
            raise ValueError("alpha and lambda must be nonnegative")

    @classmethod
    def from_dim(cls, dp) -> "XferParams":
        return cls(q=dp.q, alpha=dp.alpha, lam=dp.lam)

    def shifted(self, c: float) -> "XferParams":
        return XferParams(q=self.q + c, alpha=self.alpha, lam=self.lam)


@dataclass
class XferValue:
    G1: complex
    G2: complex
    d: complex
    branch: str


@dataclass
class Blocks:
    """Scaled building blocks: ``S = Sh*exp(shift)``, ``C = Ch*exp(shift)``."""

    Sh: np.ndarray
    Ch: np.ndarray
    shift: np.ndarray  # sigma on the direct path, 0 on the series path
    series: np.ndarray  # bool mask


def _blocks(lam: float, s, flip: bool = False) -> Blocks:
    s = np.asarray(s, dtype=complex)
    z = s * s + 2.0 * lam * s  # sigma^2
    ser = np.abs(z) < SERIES_THRESHOLD
    Sh = np.empty_like(z)
    Ch = np.empty_like(z)
    shift = np.zeros_like(z)
    if ser.any():
        zs = z[ser]
        # Horner in z
        a = np.zeros_like(zs)
        b = np.zeros_like(zs)
        for k in range(SERIES_TERMS - 1, -1, -1):
            a = a * zs + _SH_COEF[k]
            b = b * zs + _CH_COEF[k]
        Sh[ser] = a
        Ch[ser] = b
    dr = ~ser
    if dr.any():
        sg = np.sqrt(z[dr])
        sg = np.where(sg.real < 0, -sg, sg)
        if flip:
            # the other root: evenness means only the scaling changes
            sg = -sg
        e = np.exp(-2.0 * sg)
        Sh[dr] = (1.0 - e) / (2.0 * sg)
        Ch[dr] = 0.5 * (1.0 + e)
        shift[dr] = sg
    return Blocks(Sh, Ch, shift, ser)


def _scaled_dn(p: XferParams, s, flip: bool = False):
    s = np.asarray(s, dtype=complex)
    b = _blocks(p.lam, s, flip)
    a2 = p.alpha * s * s - p.q * s
    dh = (s + 2.0 * p.lam + a2) * b.Sh + (p.alpha * s - p.q + 1.0) * b.Ch
    nh = b.Ch + a2 * b.Sh
    return dh, nh, b


def _guard_pole(dh, s, p):
    terms = np.abs(s) + 2 * p.lam + np.abs(p.alpha * s * s) + np.abs(p.q * s) + np.abs(p.alpha * s) + abs(1 - p.q)
    return np.abs(dh) <= 1e-15 * np.maximum(terms, 1.0)


def eval_G(p: XferParams, s, flip: bool = False) -> XferValue:
    """Evaluate ``G1``, ``G2`` and ``d`` at ``s``.

    ``d`` is returned unscaled and may be ``inf`` far in the right half-plane,
    while ``G1`` and ``G2`` stay finite.  ``flip`` evaluates with the other
    square-root branch (used only to test evenness).
    """
    scalar = np.ndim(s) == 0
    s_arr = np.atleast_1d(np.asarray(s, dtype=complex))
    if not np.all(np.isfinite(s_arr)):
        raise ValueError("s must be finite")
    dh, nh, b = _scaled_dn(p, s_arr, flip)
    hit = _guard_pole(dh, s_arr, p)
    if hit.any():
        if scalar:
            raise PoleHit(f"s={complex(s_arr[0])} is numerically a pole")
    with np.errstate(over="ignore", invalid="ignore", divide="ignore", under="ignore"):
        esc = np.exp(-b.shift)
        G1 = np.where(hit, np.nan, esc / dh)
        G2 = np.where(hit, np.nan, nh / dh)
        d = dh * np.exp(np.where(b.shift.real > 700, np.inf, b.shift))
    branch = np.where(b.series, "series", "direct")
    if scalar:
        return XferValue(complex(G1[0]), complex(G2[0]), complex(d[0]), str(branch[0]))
    return XferValue(G1, G2, d, branch)


def log_d(p: XferParams, s):
    """``log d(s)`` for winding counts: a branch-consistent log of the scaled value plus ``sigma``."""
    dh, _, b = _scaled_dn(p, s)
    return np.log(dh) + b.shift


def log_n(p: XferParams, s):
    """``log n(s)``; its winding counts transmission zeros of ``G2``."""
    _, nh, b = _scaled_dn(p, s)
    return np.log(nh) + b.shift


def eval_n(p: XferParams, s):
    dh, nh, b = _scaled_dn(p, s)
    return nh * np.exp(b.shift)


def eval_Phi(lam: float, s):
    """``Phi(lam, s) = 2 lam S / (s S + C)``, the right-hand side of the pole equation."""
    scalar = np.ndim(s) == 0
    s_arr = np.atleast_1d(np.asarray(s, dtype=complex))
    b = _blocks(lam, s_arr)
    den = s_arr * b.Sh + b.Ch
    if np.any(np.abs(den) <= 1e-15 * (np.abs(s_arr * b.Sh) + np.abs(b.Ch))):
        raise NumericalPole("s S + C vanishes numerically")
    out = 2.0 * lam * b.Sh / den
    return complex(out[0]) if scalar else out


def d_prime_real(p: XferParams, s: float, h: float = 1e-6) -> float:
    """Central difference of ``d`` along the real axis (small ``|s|`` only)."""
    return float(((eval_G(p, s + h).d - eval_G(p, s - h).d) / (2 * h)).real)


# ---------------------------------------------------------------------------
# exclusion radius

def _region_radius(lam: float, a0: float) -> float:
    """Sup of ``|s|`` over ``Re s >= 0`` with ``Re sigma(s) <= a0`` (needs ``a0 < lam``).

    ``Re sigma`` grows with ``Re s`` and with ``|Im s|`` on the axis, so the set
    sits inside ``Re s <= a0`` and ``|Im s| <= w0`` where ``Re sigma(j w0) = a0``.
    """
    w0sq = a0**4 / (lam**2 - a0**2)
    return math.sqrt(w0sq + a0**2)


def analytic_radius(p: XferParams, include_zeros: bool = True) -> float:
    """Constructive radius outside of which no poles or RHP transmission zeros lie.

    Assembled from the bounds ``|Phi| <= 4 lam/(theta0 |s|)`` (poles) and the
    analogous zero bound, valid where ``Re sigma > a0`` and ``|s - sigma| < eps|s|``.
    ``a0`` is scanned over ``(0, lam)`` and the smallest resulting radius kept.
    For ``lam = 0`` the system reduces to a delay and only the real pole
    ``(q-1)/alpha`` can be unstable.
    """
    q, al, lam = p.q, p.alpha, p.lam
    if q == 1.0 and al == 0.0 and lam == 0.0:
        raise NotWellPosed("(q, alpha, lambda) = (1, 0, 0)")
    if lam == 0.0:
        base = abs(q - 1.0) / al if al > 0 else 0.0
        return base + 1.0
    best = math.inf
    for frac in np.linspace(0.05, 0.95, 19):
        a0 = frac * lam
        rho0 = math.exp(-2 * a0)
        theta0 = 2.0 / (1.0 + rho0)
        kappa = (1.0 + rho0) / (1.0 - rho0)
        eps = 0.99 * theta0 / (2.0 * kappa)
        M = 2.0 * lam / eps  # |s - sigma| <= 2 lam in the closed RHP
        R1 = _region_radius(lam, a0)
        if al > 0:
            r_poles = max((abs(q - 1.0) + 1.0) / al, 4 * lam / theta0, 4 * lam / (al * theta0))
            r_zeros = max(lam, (2.0 + abs(q) + kappa * math.sqrt(3.0)) / al)
        else:
            # |q - 1| |s| ... pole equation degenerates to q - 1 = Phi
            r_poles = 4 * lam / (abs(q - 1.0) * theta0) if q != 1.0 else math.inf
            r_zeros = 0.0
        R = max(r_poles, r_zeros if include_zeros else 0.0, M, R1)
        best = min(best, R)
    return 1.01 * best


def pole_exclusion_radius(p: XferParams, stabilize: bool = True, max_doublings: int = 6,
                          include_zeros: bool = True) -> float:
    """Radius of the Nyquist half-disc that encloses all unstable poles of ``G``.

    Starts from :func:`analytic_radius` and, if ``stabilize``, doubles ``R``
    until the pole count agrees on two consecutive doublings.
    """
    R = analytic_radius(p, include_zeros)
    if not stabilize:
        return R
    from .contour import half_disc_winding  # local import: contour depends on xfer

    counts = []
    for _ in range(max_doublings):
        counts.append(half_disc_winding(lambda s: log_d(p, s), R).winding)
        if len(counts) >= 3 and counts[-1] == counts[-2] == counts[-3]:
            return R / 4.0
        R *= 2.0
    return R / 2.0


# ---------------------------------------------------------------------------
# closed loop in the frequency domain

ControllerResponse = Callable[[np.ndarray], np.ndarray]  # s -> (..., 1, 2)


class IrrationalLoop:
    """Frequency-domain closed loop of the irrational plant under ``u = -K y``.

    ``K`` maps an array of ``s`` to an array of shape ``(len(s), 1, 2)``
    (inputs ``y1, y2``); ``None`` means open loop.  All channels are formed
    from the scaled blocks so that the common factor ``exp(sigma)`` cancels.

    Channels (disturbance ``w`` at the bit):
      ``y1w`` (= ``zw``): bit velocity, ``y2w``: top velocity, ``uw``: control.
    """

    channels = ("zw", "y1w", "y2w", "uw")

    def __init__(self, p: XferParams, K: Optional[ControllerResponse] = None,
                 stability_certified: bool = False):
        self.p = p
        self.K = K
        self.stability_certified = stability_certified

    def _k(self, s):
        if self.K is None:
            z = np.zeros_like(s)
            return z, z
        k = np.asarray(self.K(s))
        return k[:, 0, 0], k[:, 0, 1]

    def response(self, s) -> dict:
        s = np.atleast_1d(np.asarray(s, dtype=complex))
        p = self.p
        dh, nh, b = _scaled_dn(p, s)
        k1, k2 = self._k(s)
        esc = np.exp(-b.shift)
        sS = s * b.Sh
        D = dh + k2 * nh + k1 * esc
        y1 = (b.Ch + sS + k2 * sS) / D
        y2 = (esc - k1 * sS) / D
        u = -(k1 * (b.Ch + sS) + k2 * esc) / D
        return {"zw": y1, "y1w": y1, "y2w": y2, "uw": u}

    def log_return_difference(self, s):
        """``log(1 + K1 G1 + K2 G2)`` along ``s``."""
        s = np.atleast_1d(np.asarray(s, dtype=complex))
        dh, nh, b = _scaled_dn(self.p, s)
        k1, k2 = self._k(s)
        D = dh + k2 * nh + k1 * np.exp(-b.shift)
        return np.log(D) - np.log(dh)

    def channel(self, name: str, weight: Optional[Callable] = None) -> "FrequencyChannel":
        if name not in self.channels:
            raise KeyError(name)
        return FrequencyChannel(self, name, weight)


class FrequencyChannel:
    """SISO frequency-response evaluator usable by :func:`slipstick.norms.hinf`."""

    def __init__(self, loop: IrrationalLoop, name: str, weight: Optional[Callable] = None):
        self.loop = loop
        self.name = name
        self.weight = weight

    @property
    def stability_certified(self) -> bool:
        return self.loop.stability_certified

    def freqresp(self, omega) -> np.ndarray:
        s = 1j * np.asarray(omega, dtype=float)
        h = self.loop.response(s)[self.name]
        if self.weight is not None:
            h = h * self.weight(s)
        return h
