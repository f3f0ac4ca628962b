"""Nonlinear closed-loop simulation by the method of lines.

The spatial operator is the finite-difference model of :mod:`slipstick.ssmodel`
with the rigid-body mode removed.  The bit nonlinearity enters through the
same input column as the disturbance, so both the open and the closed loop
have the form ``x' = A x + b (psi(c x) + w)``.

Time stepping is the trapezoidal rule (A-stable, second order).  Each step
reduces to one scalar generalized equation ``v - gamma psi(v) = v_hat`` for
the new bit velocity; at the kink ``psi`` is set-valued and the bit sticks
whenever ``v_hat`` falls in the corresponding interval.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.linalg as sla
from scipy.optimize import brentq

from . import scenario as scn
from .errors import BlowUp, StepTooLarge
from .ssmodel import Controller, close_loop, discretize, rigid_reduce

BLOWUP_NORM = 1e9
DIST_KINDS = ("none", "square", "pulse", "exp_decaying_pulse", "oscillatory")


@dataclass(frozen=True)
class DisturbanceSpec:
    """Additive disturbance at the bit boundary.

    ``magnitude`` is a fraction of the steady-state speed (``|kink|`` in
    dimensionless velocity units) unless ``absolute`` is set.  ``square``
    alternates sign with ``frequency`` (a single rectangle when it is 0);
    ``oscillatory`` is a sine of that frequency.
    """

    kind: str = "none"
    t_start: float = 0.0
    duration: float = 0.0
    magnitude: float = 0.0
    rate_a: float = 0.0
    frequency: float = 0.0
    absolute: bool = False

    def __post_init__(self):
        if self.kind not in DIST_KINDS:
            raise ValueError(f"unknown disturbance kind {self.kind!r}")
        if self.duration < 0:
            raise ValueError("duration must be nonnegative")
        if self.frequency < 0 or self.rate_a < 0:
            raise ValueError("frequency and rate_a must be nonnegative")

    @classmethod
    def parse(cls, text: str) -> "DisturbanceSpec":
        """``kind:t_start,duration,magnitude[,rate_or_frequency]``, e.g. ``square:15,1,0.6``."""
        if text in ("", "none"):
            return cls()
        kind, _, args = text.partition(":")
        vals = [float(a) for a in args.split(",") if a.strip()]
        if len(vals) < 3:
            raise ValueError("disturbance needs t_start,duration,magnitude")
        kw = dict(kind=kind, t_start=vals[0], duration=vals[1], magnitude=vals[2])
        if len(vals) > 3:
            kw["rate_a" if kind == "exp_decaying_pulse" else "frequency"] = vals[3]
        return cls(**kw)

    def signal(self, t, scale: float = 1.0):
        t = np.asarray(t, dtype=float)
        if self.kind == "none":
            return np.zeros_like(t)
        amp = self.magnitude * (1.0 if self.absolute else scale)
        tau = t - self.t_start
        on = (tau >= 0) & (tau < self.duration)
        if self.kind == "pulse" or (self.kind == "square" and self.frequency == 0):
            val = np.ones_like(t)
        elif self.kind == "square":
            val = np.where(np.floor(2.0 * self.frequency * tau) % 2 == 0, 1.0, -1.0)
        elif self.kind == "exp_decaying_pulse":
            val = np.exp(-self.rate_a * np.maximum(tau, 0.0))
        else:
            val = np.sin(2.0 * math.pi * self.frequency * tau)
        return np.where(on, amp * val, 0.0)

    def integral(self, t, scale: float = 1.0):
        """Running integral ``int_{-inf}^t w``, exact for every kind."""
        t = np.asarray(t, dtype=float)
        if self.kind == "none":
            return np.zeros_like(t)
        amp = self.magnitude * (1.0 if self.absolute else scale)
        tau = np.clip(t - self.t_start, 0.0, self.duration)
        if self.kind == "pulse" or (self.kind == "square" and self.frequency == 0):
            F = tau
        elif self.kind == "square":
            P = 1.0 / self.frequency
            m = np.mod(tau, P)
            F = np.where(m < P / 2, m, P - m)
        elif self.kind == "exp_decaying_pulse":
            a = self.rate_a
            F = tau if a == 0 else -np.expm1(-a * tau) / a
        else:
            om = 2.0 * math.pi * self.frequency
            F = np.zeros_like(tau) if om == 0 else (1.0 - np.cos(om * tau)) / om
        return amp * F


@dataclass(frozen=True)
class SimConfig:
    N: int = 200
    dt: float = 0.005
    t_final: float = 30.0
    controller_on_at: float = math.inf
    initial_offset: float = 0.0
    disturbance: DisturbanceSpec = field(default_factory=DisturbanceSpec)
    record_stride: int = 1
    nonlinear: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.N < 50:
            raise ValueError("N must be at least 50")
        if not self.t_final > 0:
            raise ValueError("t_final must be positive")
        if self.controller_on_at < 0 or (math.isfinite(self.controller_on_at)
                                         and self.controller_on_at > self.t_final):
            raise ValueError("controller_on_at must lie in [0, t_final] or be infinite")
        if self.record_stride < 1:
            raise ValueError("record_stride must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["controller_on_at"] = None if math.isinf(self.controller_on_at) else self.controller_on_at
        return d


@dataclass
class TimeSeries:
    t: np.ndarray
    y1: np.ndarray
    y2: np.ndarray
    u: np.ndarray
    theta_dot_bit: np.ndarray
    omega_cmd: np.ndarray
    stick_intervals: list
    Omega: float = 1.0
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.t)
        for name in ("y1", "y2", "u", "theta_dot_bit", "omega_cmd"):
            if len(getattr(self, name)) != n:
                raise ValueError("time series columns must have equal length")

    def write_csv(self, path) -> None:
        cols = ("t", "y1", "y2", "u", "theta_dot_bit", "omega_cmd")
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(cols)
            wr.writerows(zip(*(np.asarray(getattr(self, c)).tolist() for c in cols)))

    def write_json(self, path, extra: Optional[dict] = None) -> None:
        doc = dict(stick_intervals=[list(iv) for iv in self.stick_intervals], Omega=self.Omega,
                   config=self.config)
        doc.update(extra or {})
        Path(path).write_text(json.dumps(doc, indent=2))


def detect_stick(ts: TimeSeries, eps_v: Optional[float] = None, min_dur: float = 0.1) -> list:
    """Maximal intervals with ``|theta_dot_bit| < eps_v`` lasting at least ``min_dur``."""
    eps_v = 0.02 * ts.Omega if eps_v is None else eps_v
    t = np.asarray(ts.t)
    low = np.abs(np.asarray(ts.theta_dot_bit)) < eps_v
    out = []
    if not low.any():
        return out
    edges = np.diff(np.concatenate([[0], low.astype(int), [0]]))
    starts = np.nonzero(edges == 1)[0]
    ends = np.nonzero(edges == -1)[0] - 1
    for a, b in zip(starts, ends):
        if t[b] - t[a] >= min_dur - 1e-12:
            out.append((float(t[a]), float(t[b])))
    return out


class _Bit:
    """Scalar friction map with the set-valued stick interval at the kink."""

    def __init__(self, sp: scn.ScenarioParams, dp: scn.DimParams, nonlinear: bool):
        self.sp, self.kink, self.q = sp, dp.kink, dp.q
        self.k = sp.L / sp.GJ
        self.f0 = float(scn.phi(sp, sp.Omega))
        self.ts = sp.time_scale
        self.nonlinear = nonlinear
        if nonlinear:
            self.lim_minus, self.lim_plus = scn.psi_limits_at_kink(sp)

    def __call__(self, v: float) -> float:
        if not self.nonlinear:
            return 0.0
        return self.k * (self.f0 - float(scn.phi(self.sp, self.sp.Omega + self.ts * v))) - self.q * v

    def solve(self, vhat: float, gamma: float) -> tuple[float, float]:
        """Return ``(v, psi)`` with ``v - gamma psi = vhat`` and ``psi`` in the graph of psi."""
        if not self.nonlinear or gamma == 0.0:
            return vhat, self(vhat)
        kink = self.kink
        lo, hi = sorted((kink - gamma * self.lim_minus, kink - gamma * self.lim_plus))
        if lo <= vhat <= hi:
            return kink, (kink - vhat) / gamma
        g = lambda v: v - gamma * self(v) - vhat  # noqa: E731
        side = 1.0 if vhat > hi else -1.0
        a = kink
        step = max(abs(vhat - kink), 1e-12 * max(abs(kink), 1.0))
        b = kink + side * step
        for _ in range(200):
            if np.sign(g(b)) == side:
                break
            a, b = b, kink + side * 2.0 * abs(b - kink)
        else:
            raise StepTooLarge("no bracket for the bit velocity equation")
        eps = 1e-15 * max(abs(kink), 1.0)
        a_in = a + side * eps if a == kink else a
        try:
            v = brentq(g, min(a_in, b), max(a_in, b), xtol=1e-14 * max(abs(kink), 1.0), rtol=1e-14)
        except ValueError as exc:
            raise StepTooLarge(str(exc)) from None
        return v, self(v)


class _Stepper:
    def __init__(self, A, b, C, dt):
        n = A.shape[0]
        self.P = np.eye(n) + 0.5 * dt * A
        self.lu = sla.lu_factor(np.eye(n) - 0.5 * dt * A)
        self.b = b
        self.beta = sla.lu_solve(self.lu, b)
        self.C = C  # rows: y1, y2, u (u row may be zero)
        self.gamma = 0.5 * dt * float(C[0] @ self.beta)
        self.dt = dt

    def base(self, x, g_old):
        return sla.lu_solve(self.lu, self.P @ x + 0.5 * self.dt * self.b * g_old)


def run(sp: scn.ScenarioParams, K: Optional[Controller], cfg: SimConfig) -> TimeSeries:
    """Integrate the nonlinear loop (open loop until ``controller_on_at``)."""
    if math.isfinite(cfg.controller_on_at) and K is None:
        raise ValueError("a controller is needed when controller_on_at is finite")
    dp = scn.derive_dimensionless(sp)
    plant = rigid_reduce(discretize(dp, cfg.N).plant)
    iw = plant.inputs.index("w")
    b_ol = plant.B[:, iw]
    C_ol = np.vstack([plant.C[plant.outputs.index("y1")], plant.C[plant.outputs.index("y2")],
                      np.zeros(plant.n)])
    steppers = [_Stepper(plant.A, b_ol, C_ol, cfg.dt)]
    if K is not None and math.isfinite(cfg.controller_on_at):
        cl = close_loop(plant, K)
        C_cl = np.vstack([cl.C[cl.outputs.index(o)] for o in ("y1", "y2", "u")])
        # D of the closed loop from w is zero for velocity outputs; u may carry Dk*Dyw = 0 too
        steppers.append(_Stepper(cl.A, cl.B[:, 0], C_cl, cfg.dt))
    bit = _Bit(sp, dp, cfg.nonlinear)
    scale = abs(dp.kink)

    n_steps = int(round(cfg.t_final / cfg.dt))
    N = cfg.N
    x = np.zeros(plant.n)
    x[N:] = -cfg.initial_offset * scale  # uniform velocity offset, zero twist
    t_grid = cfg.dt * np.arange(n_steps + 1)
    # step averages of w keep second order when the disturbance jumps
    w_bar = np.diff(cfg.disturbance.integral(t_grid, scale)) / cfg.dt
    k_on = n_steps + 1 if not math.isfinite(cfg.controller_on_at) else int(round(cfg.controller_on_at / cfg.dt))
    mode = 0
    st = steppers[0]
    if k_on == 0:
        mode, st = 1, steppers[1]
        x = np.concatenate([x, np.zeros(K.order)])
    v0 = float(st.C[0] @ x)
    if bit.nonlinear and v0 == bit.kink:
        psi0 = 0.5 * (bit.lim_minus + bit.lim_plus)
    else:
        psi0 = bit(v0)
    ps = psi0

    rec = []

    def record(k, x):
        y = st.C @ x
        rec.append((t_grid[k], y[0], y[1], y[2]))

    record(0, x)
    for k in range(n_steps):
        if k == k_on and mode == 0:
            mode, st = 1, steppers[1]
            x = np.concatenate([x, np.zeros(K.order)])
        wb = w_bar[k]
        base = st.base(x, ps + wb)
        vhat = float(st.C[0] @ base) + st.gamma * wb
        v, ps = bit.solve(vhat, st.gamma)
        x = base + 0.5 * cfg.dt * st.beta * (ps + wb)
        nx = float(np.linalg.norm(x))
        if not math.isfinite(nx) or nx > BLOWUP_NORM:
            raise BlowUp(t_grid[k + 1], nx)
        if (k + 1) % cfg.record_stride == 0 or k + 1 == n_steps:
            record(k + 1, x)
    arr = np.array(rec)
    t, y1, y2, u = arr.T
    thb = sp.Omega + sp.time_scale * y1
    omega_cmd = scn.control_backmap(sp, u, y2)
    ts = TimeSeries(t=t, y1=y1, y2=y2, u=u, theta_dot_bit=thb, omega_cmd=np.asarray(omega_cmd),
                    stick_intervals=[], Omega=sp.Omega, config=cfg.to_dict())
    ts.stick_intervals = detect_stick(ts)
    return ts


def linear_vs_nonlinear(sp: scn.ScenarioParams, K: Optional[Controller], cfg: SimConfig) -> dict:
    """Sup-norm deviation of ``y1`` between the nonlinear loop and its linear part."""
    nl = run(sp, K, cfg)
    lin = run(sp, K, replace(cfg, nonlinear=False))
    dev = float(np.max(np.abs(nl.y1 - lin.y1)))
    amp = float(np.max(np.abs(lin.y1)))
    return dict(max_deviation=dev, linear_amplitude=amp,
                relative=dev / amp if amp > 0 else 0.0, nonlinear=nl, linear=lin)


def decay_rate(t, y, t_from: float, t_to: Optional[float] = None) -> float:
    """Fitted exponential rate of the running envelope of ``|y|`` after ``t_from``."""
    t = np.asarray(t)
    y = np.abs(np.asarray(y))
    m = (t >= t_from) & (t <= (t[-1] if t_to is None else t_to))
    tt, yy = t[m], y[m]
    # envelope: running max from the right keeps oscillations from biasing the fit
    env = np.maximum.accumulate(yy[::-1])[::-1]
    ok = env > 1e-300
    slope = np.polyfit(tt[ok], np.log(env[ok]), 1)[0]
    return float(-slope)
