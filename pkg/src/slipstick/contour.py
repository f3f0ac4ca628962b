"""Adaptive phase tracking of an analytic function around the Nyquist half-disc.

The contour runs up the imaginary axis from ``-jR`` to ``+jR`` and returns
clockwise along the right half-circle.  Functions are supplied as
``log f`` so that values with huge modulus (``d`` grows like ``exp(sigma)``)
never overflow; phase increments are the wrapped differences of ``Im log f``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ZeroCrossingOnContour


@dataclass(frozen=True)
class ContourSpec:
    R: float | None = None
    base_samples: int = 400
    max_refinements: int = 50
    phase_cap: float = math.pi / 2
    zero_tol: float = 1e-9

    def __post_init__(self):
        if self.R is not None and not self.R > 0:
            raise ValueError("R must be positive")
        if not 0 < self.phase_cap < math.pi:
            raise ValueError("phase_cap must lie in (0, pi)")


@dataclass
class WindingResult:
    winding: int  # counterclockwise positive
    samples_used: int
    min_modulus: float
    refined: bool
    R: float = 0.0
    s: np.ndarray = field(default=None, repr=False)
    logf: np.ndarray = field(default=None, repr=False)

    def image(self) -> np.ndarray:
        """Sampled image curve ``f(s)`` (may overflow far out on the arc)."""
        with np.errstate(over="ignore"):
            return np.exp(self.logf)


def contour_points(t: np.ndarray, R: float) -> np.ndarray:
    """Map ``t`` in ``[0, 2]`` onto the contour (axis for ``t <= 1``, arc after)."""
    t = np.asarray(t, dtype=float)
    axis = 1j * R * (2.0 * t - 1.0)
    arc = R * np.exp(1j * (math.pi / 2 - math.pi * (t - 1.0)))
    return np.where(t <= 1.0, axis, arc)


def _wrap(x):
    return (x + math.pi) % (2 * math.pi) - math.pi


def half_disc_winding(logf: Callable[[np.ndarray], np.ndarray], R: float,
                      spec: ContourSpec | None = None, exc=ZeroCrossingOnContour) -> WindingResult:
    """Counterclockwise winding number of ``f`` over the closed half-disc contour."""
    spec = spec or ContourSpec()
    # enough base points that exp(sigma)-type phase drift alone stays under the cap
    n_axis = max(spec.base_samples, int(math.ceil(4.0 * R / spec.phase_cap)) + 1)
    n_arc = max(spec.base_samples, int(math.ceil(2.0 * math.pi * R / spec.phase_cap)) + 1)
    t = np.unique(np.concatenate([np.linspace(0.0, 1.0, n_axis), np.linspace(1.0, 2.0, n_arc)]))
    vals = logf(contour_points(t, R))
    # every segment is split once and accepted only if both halves respect the
    # cap and add up to the one-step increment; this catches aliased 2*pi jumps
    pending = np.ones(t.size - 1, dtype=bool)
    refined = False
    cap = spec.phase_cap
    for _ in range(spec.max_refinements):
        idx = np.nonzero(pending)[0]
        if idx.size == 0:
            break
        tm = 0.5 * (t[idx] + t[idx + 1])
        vm = logf(contour_points(tm, R))
        va, vb = vals[idx], vals[idx + 1]
        d0 = _wrap(vb.imag - va.imag)
        d1 = _wrap(vm.imag - va.imag)
        d2 = _wrap(vb.imag - vm.imag)
        ok = ((np.abs(d1) <= cap) & (np.abs(d2) <= cap) & (np.abs(d1 + d2 - d0) < 1e-9)
              & (np.abs(vm.real - va.real) <= cap) & (np.abs(vb.real - vm.real) <= cap))
        ok &= np.isfinite(vm)
        refined = refined or bool((~ok).any())
        t = np.insert(t, idx + 1, tm)
        vals = np.insert(vals, idx + 1, vm)
        # both children of a split segment inherit its verdict
        new_pending = np.insert(pending, idx + 1, False)
        pos = idx + np.arange(idx.size)  # positions of the left children after insertion
        new_pending[pos] = ~ok
        new_pending[pos + 1] = ~ok
        pending = new_pending
    dphi = _wrap(np.diff(vals.imag))
    re = vals.real
    k = int(np.argmin(re))
    min_mod = float(np.exp(re[k])) if np.isfinite(re[k]) else 0.0
    s_all = contour_points(t, R)
    if not np.all(np.isfinite(vals)) or min_mod < spec.zero_tol:
        raise exc(min_mod, complex(s_all[k]))
    if pending.any() or np.any(np.abs(dphi) > spec.phase_cap):
        j = int(np.argmax(np.abs(dphi)))
        raise exc(min_mod, complex(s_all[j]))
    total = dphi.sum() / (2 * math.pi)
    w = int(round(total))
    if abs(total - w) > 1e-6:
        raise exc(min_mod, None)
    return WindingResult(winding=w, samples_used=int(t.size), min_modulus=min_mod,
                         refined=refined, R=R, s=s_all, logf=vals)
