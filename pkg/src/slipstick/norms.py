"""System norms: H-infinity by grid refinement, H2 by gramian, peak gain by impulse quadrature."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .errors import NotStrictlyProper, UnstableSystem
from .ssmodel import StateSpace

GOLD = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class NormResult:
    value: float
    argmax: Optional[float]
    method: str
    tolerance: float

    def to_dict(self) -> dict:
        return asdict(self)


def spectral_abscissa(ss: StateSpace) -> float:
    if ss.n == 0:
        return -math.inf
    return float(np.max(np.linalg.eigvals(ss.A).real))


def _gain(evaluator, w):
    H = evaluator(np.atleast_1d(w))
    H = np.asarray(H)
    if H.ndim == 1:
        return np.abs(H)
    if H.shape[1] == 1 and H.shape[2] == 1:
        return np.abs(H[:, 0, 0])
    return np.linalg.svd(H, compute_uv=False)[:, 0]


def _golden_max(f, a, b, rtol=1e-6, maxit=200):
    """Maximize ``f`` on ``[a, b]`` (log-frequency coordinates)."""
    c = b - GOLD * (b - a)
    d = a + GOLD * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(maxit):
        if abs(b - a) < rtol:
            break
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - GOLD * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLD * (b - a)
            fd = f(d)
    return (c, fc) if fc > fd else (d, fd)


def hinf(system, assume_stable: bool = False, wmin: float = 1e-4, wmax: float = 1e5,
         n_grid: int = 400, n_peaks: int = 3) -> NormResult:
    """Peak gain over frequency of a state-space model or a frequency-response evaluator.

    Evaluators must expose ``freqresp(omega)`` and ``stability_certified``.
    The coarse log grid is refined by golden-section search around the
    largest local maxima until the relative width in frequency is below 1e-6.
    """
    irrational = not isinstance(system, StateSpace)
    if irrational:
        if not (assume_stable or getattr(system, "stability_certified", False)):
            raise UnstableSystem("irrational channel lacks a stability certificate")
        evaluator = system.freqresp
    else:
        if not assume_stable and spectral_abscissa(system) >= 0:
            raise UnstableSystem("system is not exponentially stable")
        evaluator = system.freqresp
    grid = np.logspace(math.log10(wmin), math.log10(wmax), n_grid)
    extra = []
    if irrational:
        # octave scan beyond the main grid for slowly decaying boundary terms
        extra.append(wmax * 2.0 ** np.arange(0.125, math.log2(1e7 / wmax) + 1e-9, 0.125))
    elif system.n:
        ev = np.linalg.eigvals(system.A)
        wi = np.abs(ev.imag)
        light = (wi > wmin) & (wi < wmax)
        extra.append(wi[light])
    grid = np.unique(np.concatenate([grid] + extra))
    g = _gain(evaluator, grid)
    g0 = float(_gain(evaluator, np.array([0.0]))[0])
    # local maxima on the grid
    inner = np.nonzero((g[1:-1] >= g[:-2]) & (g[1:-1] >= g[2:]))[0] + 1
    cand = list(inner)
    if g[0] >= g[1]:
        cand.append(0)
    if g[-1] >= g[-2]:
        cand.append(len(g) - 1)
    cand = sorted(cand, key=lambda i: -g[i])[:n_peaks]
    best, arg = g0, 0.0
    lw = np.log(grid)
    fl = lambda x: float(_gain(evaluator, np.array([math.exp(x)]))[0])  # noqa: E731
    for i in cand:
        a = lw[max(i - 1, 0)]
        b = lw[min(i + 1, len(lw) - 1)]
        x, fx = _golden_max(fl, a, b)
        if g[i] > fx:
            x, fx = lw[i], g[i]
        if fx > best:
            best, arg = fx, math.exp(x)
    tol = max(1e-6 * best, 1e-15)
    if irrational:
        tol = max(tol, 1e-4 * best)
    return NormResult(float(best), float(arg), "grid_refine", float(tol))


def h2(ss: StateSpace) -> NormResult:
    """H2 norm from the reachability gramian (Bartels-Stewart Lyapunov solve)."""
    if np.any(ss.D != 0):
        raise NotStrictlyProper("H2 norm needs D = 0")
    if spectral_abscissa(ss) >= 0:
        raise UnstableSystem("system is not exponentially stable")
    if ss.n == 0:
        return NormResult(0.0, None, "gramian", 1e-15)
    Q = ss.B @ ss.B.T
    P = sla.solve_continuous_lyapunov(ss.A, -Q)
    P = 0.5 * (P + P.T)
    val = float(np.sqrt(max(np.trace(ss.C @ P @ ss.C.T), 0.0)))
    res = np.linalg.norm(ss.A @ P + P @ ss.A.T + Q) / max(np.linalg.norm(Q), 1e-300)
    return NormResult(val, None, "gramian", float(max(res * val, 1e-12 * max(val, 1.0))))


def _hermite_abs_integral(h0, h1, d0, d1, dt):
    """Integral of ``|p|`` over each step, ``p`` the cubic Hermite interpolant.

    Steps whose end values differ in sign are split at the root of ``p``
    (found by bisection); otherwise ``|int p|`` is used directly.
    """
    c2 = (3.0 * (h1 - h0) / dt - 2.0 * d0 - d1) / dt
    c3 = (2.0 * (h0 - h1) / dt + d0 + d1) / dt**2

    def P(tau):
        return tau * (h0 + tau * (d0 / 2.0 + tau * (c2 / 3.0 + tau * c3 / 4.0)))

    full = P(dt)
    out = np.abs(full)
    sc = np.nonzero(h0 * h1 < 0)[0]
    if sc.size:
        lo = np.zeros(sc.size)
        hi = np.full(sc.size, dt)
        a0, a1, a2, a3 = h0[sc], d0[sc], c2[sc], c3[sc]
        s0 = np.sign(a0)
        for _ in range(50):
            mid = 0.5 * (lo + hi)
            v = a0 + mid * (a1 + mid * (a2 + mid * a3))
            left = np.sign(v) == s0
            lo = np.where(left, mid, lo)
            hi = np.where(left, hi, mid)
        r = 0.5 * (lo + hi)
        Pr = r * (a0 + r * (a1 / 2.0 + r * (a2 / 3.0 + r * a3 / 4.0)))
        out[sc] = np.abs(Pr) + np.abs(full[sc] - Pr)
    return out


def peak_gain(ss: StateSpace, horizon: Optional[float] = None, dt: Optional[float] = None,
              rtol_tail: float = 1e-4, block: int = 256, max_horizon: float = 1e6) -> NormResult:
    """L1 norm of the impulse response of a SISO channel (peak-to-peak gain).

    The response ``h = C exp(At) B`` and its derivative are propagated with
    ``expm(A dt)``; ``|h|`` is integrated over the cubic Hermite interpolant,
    split at sign changes.  Each block is also integrated with step ``2 dt``
    and the difference gives the quadrature error estimate; the step doubles
    once that difference is negligible.  The tail beyond the horizon is
    bounded by ``kappa exp(sigma t) / |sigma|`` with ``kappa`` fitted on the
    last block, and the horizon is extended until this bound is below
    ``rtol_tail`` times the value.
    """
    if ss.shape != (1, 1):
        raise ValueError("peak_gain needs a SISO channel")
    sigma = spectral_abscissa(ss)
    if sigma >= 0:
        raise UnstableSystem("system is not exponentially stable")
    direct = float(abs(ss.D[0, 0]))
    if ss.n == 0:
        return NormResult(direct, 0.0, "impulse_hermite", 1e-15)
    A, c = ss.A, ss.C[0]
    cA = c @ A
    rho = float(np.max(np.abs(np.linalg.eigvals(A))))
    fixed_dt = dt is not None
    dt = dt if dt is not None else min(0.25 / rho, 0.05)
    T = horizon if horizon is not None else min(25.0 / abs(sigma), max_horizon)
    E = sla.expm(A * dt)
    x = ss.B[:, 0].copy()
    t = 0.0
    X = np.empty((ss.n, block + 1))
    total = 0.0
    peak_t, peak_h = 0.0, abs(float(c @ x))
    tail = math.inf
    quad_err = 0.0
    while True:
        while t < T - 1e-12:
            X[:, 0] = x
            for k in range(block):
                x = E @ x
                X[:, k + 1] = x
            hs = c @ X
            ds = cA @ X
            fine = float(_hermite_abs_integral(hs[:-1], hs[1:], ds[:-1], ds[1:], dt).sum())
            coarse = float(_hermite_abs_integral(hs[:-2:2], hs[2::2], ds[:-2:2], ds[2::2], 2 * dt).sum())
            total += fine
            quad_err += abs(fine - coarse) / 15.0
            a = np.abs(hs)
            j = int(np.argmax(a))
            if a[j] > peak_h:
                peak_h, peak_t = a[j], t + j * dt
            t_start = t
            t += block * dt
            tb = t_start + dt * np.arange(block + 1)
            kappa_log = np.max(np.log(a + 1e-300) - sigma * tb)
            tail = math.exp(kappa_log + sigma * t) / abs(sigma)
            if not fixed_dt and abs(fine - coarse) < 1e-10 * max(total, 1e-300) and dt < 1.0:
                dt *= 2.0
                E = E @ E
            if np.linalg.norm(x) > 1e150:
                raise UnstableSystem("impulse response diverged")
        if tail <= rtol_tail * max(total, 1e-300) or t >= max_horizon or horizon is not None:
            break
        T = min(2.0 * T, max_horizon)
    value = direct + total
    return NormResult(float(value), float(peak_t), "impulse_hermite", float(max(tail + quad_err, 1e-15)))
