"""Fixed-structure controller synthesis on finite-difference design models.

The constrained programs are handled with an exact penalty and minimized by
derivative-free direct search (simplex moves from scipy plus a compass
search).  Results are never self-certified; pass them to
:func:`slipstick.certify.nyquist_certify` on the irrational plant.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize

from . import norms
from .errors import NoStabilizerFound
from .scenario import DimParams, SectorBounds
from .ssmodel import (Controller, StateSpace, channel_select, close_loop, discretize, rigid_reduce,
                      series, weight_Wu)

log = logging.getLogger(__name__)

PROGRAMS = ("sector_program", "overshoot_pk", "overshoot_h2")
PID_TAU = 0.01  # derivative filter time constant


@dataclass(frozen=True)
class ControllerStructure:
    """Parameterization of ``K: (y1, y2) -> u``.

    ``state_space_order_k`` uses the full matrices ``(A, B, C, D)`` in
    row-major order; ``tridiagonal`` freezes the entries of ``A`` off the
    three central diagonals at zero during search.  The PID forms are
    ``kp + ki/s + kd s/(1 + tau s)`` on ``y1`` (single) or on each output
    (sum).
    """

    kind: str = "state_space_order_k"
    k: int = 5
    tridiagonal: bool = True

    def __post_init__(self):
        if self.kind not in ("state_space_order_k", "pid_single", "pid_sum"):
            raise ValueError(f"unknown structure {self.kind!r}")
        if self.kind == "state_space_order_k" and self.k < 0:
            raise ValueError("order must be nonnegative")

    @property
    def parameter_count(self) -> int:
        if self.kind == "state_space_order_k":
            k = self.k
            return k * k + 2 * k + k + 2
        return 3 if self.kind == "pid_single" else 6

    def free_mask(self) -> np.ndarray:
        m = np.ones(self.parameter_count, dtype=bool)
        if self.kind == "state_space_order_k" and self.tridiagonal and self.k > 2:
            i, j = np.indices((self.k, self.k))
            m[: self.k * self.k] = (np.abs(i - j) <= 1).ravel()
        return m

    def unpack(self, x) -> Controller:
        x = np.asarray(x, dtype=float)
        if x.size != self.parameter_count:
            raise ValueError(f"expected {self.parameter_count} parameters, got {x.size}")
        if self.kind == "state_space_order_k":
            k = self.k
            A = x[: k * k].reshape(k, k)
            B = x[k * k: k * k + 2 * k].reshape(k, 2)
            C = x[k * k + 2 * k: k * k + 3 * k].reshape(1, k)
            D = x[k * k + 3 * k:].reshape(1, 2)
            return Controller.from_matrices(A, B, C, D, name=f"ss{k}")
        gains = x.reshape(-1, 3)
        blocks = []
        for kp, ki, kd in gains:
            # states: integral of y, derivative filter; output kp y + ki xi + kd (y - xf)/tau
            A = np.array([[0.0, 0.0], [0.0, -1.0 / PID_TAU]])
            B = np.array([[1.0], [1.0 / PID_TAU]])
            C = np.array([[ki, -kd / PID_TAU]])
            D = np.array([[kp + kd / PID_TAU]])
            blocks.append((A, B, C, D))
        if len(blocks) == 1:
            A, B, C, D = blocks[0]
            return Controller.from_matrices(A, np.hstack([B, np.zeros((2, 1))]), C,
                                            np.hstack([D, [[0.0]]]), name="pid_single")
        (A1, B1, C1, D1), (A2, B2, C2, D2) = blocks
        A = np.block([[A1, np.zeros((2, 2))], [np.zeros((2, 2)), A2]])
        B = np.block([[B1, np.zeros((2, 1))], [np.zeros((2, 1)), B2]])
        return Controller.from_matrices(A, B, np.hstack([C1, C2]), np.hstack([D1, D2]), name="pid_sum")

    def pack(self, K: Controller) -> np.ndarray:
        if self.kind != "state_space_order_k" or K.order != self.k:
            raise ValueError("pack needs a state-space controller of matching order")
        r = K.realization
        return np.concatenate([r.A.ravel(), r.B.ravel(), r.C.ravel(), r.D.ravel()])


@dataclass
class SynthProblem:
    scenario: DimParams
    program: str
    sector: SectorBounds
    rho: Optional[float] = None
    N_design: int = 50
    penalty_weights: list = field(default_factory=lambda: [10.0, 10.0])
    plants: Optional[tuple] = None  # (P, P_shifted) override for custom models

    def __post_init__(self):
        if self.program not in PROGRAMS:
            raise ValueError(f"unknown program {self.program!r}")
        if self.program == "overshoot_h2" and not (self.rho is not None and self.rho > 0):
            raise ValueError("overshoot_h2 needs rho > 0")
        if self.N_design < 2:
            raise ValueError("N_design must be at least 2")
        self._cache = None

    def design_plants(self) -> tuple[StateSpace, StateSpace]:
        if self.plants is not None:
            return self.plants
        if self._cache is None:
            p = self.scenario
            self._cache = tuple(rigid_reduce(discretize(p, self.N_design, c).plant)
                                for c in (0.0, self.sector.c))
        return self._cache

    @classmethod
    def from_dict(cls, d: dict) -> "SynthProblem":
        sc = d["scenario"]
        if isinstance(sc, str):
            # bundled scenario name or path to a scenario JSON
            from .scenario import derive_dimensionless, load_scenario

            sc = derive_dimensionless(load_scenario(sc)).to_dict()
        dp = DimParams(q=sc["q"], alpha=sc["alpha"], lam=sc.get("lambda", sc.get("lam")))
        sb = SectorBounds(**{k: v for k, v in d["sector"].items() if k in ("q_l", "q_u", "mode", "M_mag", "L_mag")})
        kw = {k: d[k] for k in ("rho", "N_design", "penalty_weights") if k in d}
        return cls(scenario=dp, program=d["program"], sector=sb, **kw)


def _abscissae(prob: SynthProblem, K: Controller):
    P, Pt = prob.design_plants()
    cl, clt = close_loop(P, K), close_loop(Pt, K)
    return cl, clt, norms.spectral_abscissa(cl), norms.spectral_abscissa(clt)


def objective(prob: SynthProblem, x, structure: Optional[ControllerStructure] = None):
    """Program value and constraint slacks (``>= 0`` means satisfied).

    Returns ``(inf, [])`` with the worst abscissa in ``info`` when either
    design loop is unstable.
    """
    if structure is None:
        # full state-space encoding: k^2 + 3k + 2 entries
        k = (math.isqrt(4 * len(x) + 1) - 3) // 2
        structure = ControllerStructure(k=k)
    K = structure.unpack(x)
    cl, clt, a1, a2 = _abscissae(prob, K)
    if max(a1, a2) >= 0:
        return math.inf, [], dict(abscissa=max(a1, a2))
    try:
        Tuw = channel_select(cl, ["u"], ["w"])
        wu = norms.hinf(series(Tuw, weight_Wu()), assume_stable=True).value
        slacks = [1.0 - wu]
        tze = channel_select(clt, ["z"], ["w"])
        r = prob.sector.r
        if prob.program == "sector_program":
            value = r * norms.hinf(tze).value
        else:
            value = norms.hinf(channel_select(cl, ["y1"], ["w"])).value
            if prob.program == "overshoot_pk":
                slacks.append(1.0 / r - norms.peak_gain(tze).value)
            else:
                slacks.append(prob.rho - norms.h2(tze).value)
    except Exception as exc:  # numerical trouble counts as infeasible
        log.debug("objective failed: %s", exc)
        return math.inf, [], dict(abscissa=max(a1, a2), error=str(exc))
    return float(value), slacks, dict(abscissa=max(a1, a2))


def penalty(prob: SynthProblem, x, structure: ControllerStructure) -> float:
    value, slacks, _ = objective(prob, x, structure)
    if not math.isfinite(value):
        return math.inf
    w = prob.penalty_weights
    return value + sum(w[min(i, len(w) - 1)] * max(0.0, -s) for i, s in enumerate(slacks))


# ---------------------------------------------------------------------------
# direct search

@dataclass
class SearchHistory:
    values: list = field(default_factory=list)  # accepted (monotone) values
    evaluations: int = 0
    points: list = field(default_factory=list)

    def rows(self):
        return [(i, v) for i, v in enumerate(self.values)]


def direct_search(fn: Callable, x0, step: float = 0.1, budget: int = 2000, tol: float = 1e-6,
                  restarts: int = 3, rng: Optional[np.random.Generator] = None,
                  stop_below: float = -math.inf):
    """Minimize ``fn`` without derivatives; returns ``(x_best, f_best, history)``.

    Alternates Nelder-Mead simplex runs with a compass search; only strict
    improvements are accepted, so the recorded values are nonincreasing.
    The search ends early once a value below ``stop_below`` is found.
    """
    x = np.asarray(x0, dtype=float).copy()
    hist = SearchHistory()
    fx = fn(x)
    hist.evaluations += 1
    hist.values.append(fx)
    hist.points.append(x.copy())
    rng = rng or np.random.default_rng(0)

    def accept(xn, fn_):
        nonlocal x, fx
        if fn_ < fx:
            x, fx = xn.copy(), fn_
            hist.values.append(fx)
            hist.points.append(x.copy())
            return True
        return False

    class _Done(Exception):
        pass

    def wrapped(z):
        hist.evaluations += 1
        v = fn(z)
        if v < stop_below:
            accept(np.asarray(z), v)
            raise _Done
        return v if math.isfinite(v) else 1e300

    h = step
    for _ in range(restarts + 1):
        if hist.evaluations >= budget:
            break
        simplex = np.vstack([x] + [x + h * max(abs(x[i]), 1.0) * np.eye(x.size)[i] for i in range(x.size)])
        left = budget - hist.evaluations
        try:
            res = minimize(wrapped, x, method="Nelder-Mead",
                           options=dict(maxfev=max(left // 2, x.size + 2), initial_simplex=simplex,
                                        xatol=tol, fatol=tol * max(abs(fx), 1.0) if math.isfinite(fx) else tol))
        except _Done:
            break
        accept(np.asarray(res.x), fn(res.x) if res.fun >= 1e300 else res.fun)
        if fx < stop_below:
            break
        # compass search with shrinking steps
        hc = h
        while hc > tol and hist.evaluations < budget:
            improved = False
            for i in rng.permutation(x.size):
                for sgn in (1.0, -1.0):
                    xn = x.copy()
                    xn[i] += sgn * hc * max(abs(x[i]), 1.0)
                    hist.evaluations += 1
                    if accept(xn, fn(xn)):
                        improved = True
                        break
                if hist.evaluations >= budget or fx < stop_below:
                    break
            if fx < stop_below:
                break
            if not improved:
                hc *= 0.5
        h *= 0.5
    return x, fx, hist


def _embed(structure, mask, z):
    x = np.zeros(structure.parameter_count)
    x[mask] = z
    return x


def stabilize_first(prob: SynthProblem, structure: ControllerStructure, seed: int = 0,
                    budget: int = 4000, target: float = -1e-3, max_starts: int = 8) -> np.ndarray:
    """Parameters making both design loops stable (abscissa below ``target``)."""
    rng = np.random.default_rng(seed)
    mask = structure.free_mask()

    def f(z):
        K = structure.unpack(_embed(structure, mask, z))
        try:
            _, _, a1, a2 = _abscissae(prob, K)
        except Exception:
            return math.inf
        ak = float(np.max(K.realization.poles().real)) if K.order else -math.inf
        # keep the controller itself stable so the Nyquist test applies later
        return max(a1, a2, ak + 1e-2 if structure.kind == "state_space_order_k" else -math.inf)

    best_val, used = math.inf, 0
    x0 = np.zeros(structure.parameter_count)
    if structure.kind == "state_space_order_k" and structure.k:
        x0[: structure.k ** 2] = -np.eye(structure.k).ravel()
    starts = [x0[mask]]
    for i in range(max_starts):
        if i >= len(starts):
            z = x0[mask] + rng.normal(scale=1.0, size=mask.sum())
            starts.append(z)
        z0 = starts[i]
        v0 = f(z0)
        used += 1
        if v0 < target:
            return _embed(structure, mask, z0)
        z, v, hist = direct_search(f, z0, step=0.5, budget=max((budget - used) // max(max_starts - i, 1), 50),
                                   restarts=2, rng=rng, stop_below=target)
        used += hist.evaluations
        best_val = min(best_val, v)
        log.info("stabilize start %d: abscissa %.4g after %d evaluations", i, v, hist.evaluations)
        if v < target:
            return _embed(structure, mask, z)
        if used >= budget:
            break
    raise NoStabilizerFound(best_val)


def optimize(prob: SynthProblem, structure: ControllerStructure, x0, budget: int = 3000, seed: int = 0):
    """Exact-penalty direct search from a stabilizing ``x0``; returns ``(x_best, history)``."""
    mask = structure.free_mask()
    x0 = np.asarray(x0, dtype=float)
    fixed = x0.copy()

    def full(z):
        x = fixed.copy()
        x[mask] = z
        return x

    def f(z):
        return penalty(prob, full(z), structure)

    if not math.isfinite(f(x0[mask])):
        raise ValueError("optimize needs a starting point with a finite objective")
    z, _, hist = direct_search(f, x0[mask], step=0.2, budget=budget, rng=np.random.default_rng(seed))
    return full(z), hist
