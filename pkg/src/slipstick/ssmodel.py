"""State-space models: finite-difference plant, controllers, weights and interconnections.

Feedback convention: the loop is closed with ``u = -K(s) y``; the return
difference is ``1 + K1 G1 + K2 G2``.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla

from .errors import AlphaZeroUnsupported, IllPosedLoop

log = logging.getLogger(__name__)


@dataclass
class StateSpace:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    inputs: list = field(default_factory=list)
    outputs: list = field(default_factory=list)

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float)) if np.size(self.A) else np.zeros((0, 0))
        n = self.A.shape[0]
        self.D = np.atleast_2d(np.asarray(self.D, dtype=float))
        p, m = self.D.shape
        self.B = np.asarray(self.B, dtype=float).reshape(n, m)
        self.C = np.asarray(self.C, dtype=float).reshape(p, n)
        if self.A.shape != (n, n):
            raise ValueError("A must be square")
        if not self.inputs:
            self.inputs = [f"u{i}" for i in range(m)]
        if not self.outputs:
            self.outputs = [f"y{i}" for i in range(p)]
        if len(self.inputs) != m or len(self.outputs) != p:
            raise ValueError("label lengths do not match the dimensions")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.D.shape

    def poles(self) -> np.ndarray:
        return np.linalg.eigvals(self.A) if self.n else np.zeros(0, dtype=complex)

    def evalfr(self, s) -> np.ndarray:
        """Transfer matrix at each ``s``; shape ``(len(s), p, m)``."""
        s = np.atleast_1d(np.asarray(s, dtype=complex))
        p, m = self.shape
        if self.n == 0:
            return np.broadcast_to(self.D, (s.size, p, m)).astype(complex)
        if self.n > 12:
            out = self._evalfr_modal(s)
            if out is not None:
                return out
        M = s[:, None, None] * np.eye(self.n) - self.A
        X = np.linalg.solve(M, np.broadcast_to(self.B, (s.size,) + self.B.shape))
        return self.C @ X + self.D

    def _modal(self):
        # cached on a snapshot of the matrices; recomputed if they are edited
        key = (self.A.tobytes(), self.B.tobytes(), self.C.tobytes())
        cache = self.__dict__.get("_modal_cache")
        if cache is not None and cache[0] == key:
            return cache[1]
        w, V = np.linalg.eig(self.A)
        cond = np.linalg.cond(V)
        if not np.isfinite(cond) or cond > 1e8:
            log.debug("modal evaluation skipped, cond(V)=%.3g", cond)
            val = None
        else:
            val = (w, self.C @ V, np.linalg.solve(V, self.B))
        self.__dict__["_modal_cache"] = (key, val)
        return val

    def _evalfr_modal(self, s):
        modal = self._modal()
        if modal is None:
            return None
        w, Cm, Bm = modal
        out = np.empty((s.size,) + self.shape, dtype=complex)
        for i in range(0, s.size, 512):
            r = 1.0 / (s[i:i + 512, None] - w[None, :])  # (k, n)
            out[i:i + 512] = np.einsum("pn,kn,nm->kpm", Cm, r, Bm) + self.D
        return out

    def freqresp(self, omega) -> np.ndarray:
        return self.evalfr(1j * np.asarray(omega, dtype=float))

    def scaled(self, k: float) -> "StateSpace":
        return StateSpace(self.A, self.B, k * self.C, k * self.D, list(self.inputs), list(self.outputs))

    def to_dict(self) -> dict:
        return dict(A=self.A.tolist(), B=self.B.tolist(), C=self.C.tolist(), D=self.D.tolist(),
                    inputs=self.inputs, outputs=self.outputs)


def static_gain(D, inputs=None, outputs=None) -> StateSpace:
    D = np.atleast_2d(np.asarray(D, dtype=float))
    return StateSpace(np.zeros((0, 0)), np.zeros((0, D.shape[1])), np.zeros((D.shape[0], 0)), D,
                      inputs or [], outputs or [])


# ---------------------------------------------------------------------------
# finite differences

@dataclass
class PlantChannels:
    plant: StateSpace
    shift_c: float
    q: float
    alpha: float
    lam: float
    N: int


def fd_matrices(q: float, alpha: float, lam: float, N: int, allow_alpha_zero: bool = False):
    """Second-order method of lines for the damped wave on ``[0, 1]``.

    Returns ``(A, b_bit, b_top)`` with the state ``(x_0..x_N, v_0..v_N)``;
    ``b_bit`` carries a unit force at the bit boundary (disturbance and
    nonlinearity), ``b_top`` the control ``u`` at the top boundary.  Ghost
    points at both ends are eliminated with central differences, which keeps
    the bit row valid at ``alpha = 0``.
    """
    if N < 2:
        raise ValueError("N must be at least 2")
    if alpha < 0 or lam < 0:
        raise ValueError("alpha and lambda must be nonnegative")
    if alpha == 0 and not allow_alpha_zero:
        raise AlphaZeroUnsupported("alpha = 0 needs allow_alpha_zero=True")
    h = 1.0 / N
    n1 = N + 1
    T = np.zeros((n1, n1))
    idx = np.arange(1, N)
    T[idx, idx - 1] = 1.0 / h**2
    T[idx, idx + 1] = 1.0 / h**2
    T[idx, idx] = -2.0 / h**2
    lam_diag = np.full(n1, -2.0 * lam)
    den = 1.0 + 2.0 * alpha / h
    T[0, 0] = -2.0 / (h**2 * den)
    T[0, 1] = 2.0 / (h**2 * den)
    lam_diag[0] = (2.0 * q / h - 2.0 * lam) / den
    T[N, N] = -2.0 / h**2
    T[N, N - 1] = 2.0 / h**2
    lam_diag[N] = -2.0 / h - 2.0 * lam
    A = np.block([[np.zeros((n1, n1)), np.eye(n1)], [T, np.diag(lam_diag)]])
    b_bit = np.zeros(2 * n1)
    b_bit[n1] = (2.0 / h) / den
    b_top = np.zeros(2 * n1)
    b_top[2 * n1 - 1] = 2.0 / h
    return A, b_bit, b_top


def discretize(p, N: int, shift_c: float = 0.0, allow_alpha_zero: bool = False) -> PlantChannels:
    """Finite-difference plant with inputs ``(w, u)`` and outputs ``(z, y1, y2)``."""
    q = p.q + shift_c
    A, b_bit, b_top = fd_matrices(q, p.alpha, p.lam, N, allow_alpha_zero)
    n1 = N + 1
    C = np.zeros((3, 2 * n1))
    C[0, n1] = 1.0  # z = bit velocity
    C[1, n1] = 1.0  # y1
    C[2, 2 * n1 - 1] = 1.0  # y2 = top velocity
    B = np.column_stack([b_bit, b_top])
    ss = StateSpace(A, B, C, np.zeros((3, 2)), ["w", "u"], ["z", "y1", "y2"])
    log.debug("discretize N=%d cond(A)=%.3g", N, np.linalg.cond(A) if N <= 100 else float("nan"))
    return PlantChannels(ss, shift_c, q, p.alpha, p.lam, N)


# ---------------------------------------------------------------------------
# minimal realization

def _staircase(A, B, C, tol):
    """Orthogonal reachability staircase with Householder reflectors.

    Returns the transformed ``(A, B, C)`` and the reachable dimension; the
    reachable part is the leading block.
    """
    A = A.copy()
    B = B.copy()
    C = C.copy()
    n = A.shape[0]
    k = 0
    prev = None
    while k < n:
        rank = 0
        while k + rank < n:
            M = B[k + rank:, :] if prev is None else A[k + rank:, prev[0]:prev[1]]
            if M.size == 0:
                break
            norms = np.linalg.norm(M, axis=0)
            j = int(np.argmax(norms))
            if norms[j] <= tol:
                break
            x = M[:, j].copy()
            alpha = -np.copysign(norms[j], x[0]) if x[0] != 0 else -norms[j]
            v = x
            v[0] -= alpha
            vv = v @ v
            if vv == 0:
                rank += 1
                continue
            r0 = k + rank
            # A <- H A H, B <- H B, C <- C H with H = I - 2 v v^T / vv on rows/cols r0:
            A[r0:, :] -= np.outer(v, (2.0 / vv) * (v @ A[r0:, :]))
            A[:, r0:] -= np.outer(A[:, r0:] @ v, (2.0 / vv) * v)
            B[r0:, :] -= np.outer(v, (2.0 / vv) * (v @ B[r0:, :]))
            C[:, r0:] -= np.outer(C[:, r0:] @ v, (2.0 / vv) * v)
            rank += 1
        if rank == 0:
            break
        prev = (k, k + rank)
        k += rank
    return A, B, C, k


def minreal(ss: StateSpace, tol: Optional[float] = None) -> StateSpace:
    """Remove unreachable, then unobservable, states by orthogonal staircases.

    ``tol`` defaults to ``1e-8 * ||A||_F``.
    """
    n = ss.n
    if n == 0:
        return ss
    if tol is None:
        tol = 1e-8 * max(np.linalg.norm(ss.A, "fro"), 1.0)
    A, B, C, nr = _staircase(ss.A, ss.B, ss.C, tol)
    A, B, C = A[:nr, :nr], B[:nr], C[:, :nr]
    At, Ct, Bt, no = _staircase(A.T, C.T, B.T, tol)
    A, B, C = At[:no, :no].T, Bt[:, :no].T, Ct[:no].T
    if no != n:
        log.debug("minreal removed %d states", n - no)
    return StateSpace(A, B, C, ss.D.copy(), list(ss.inputs), list(ss.outputs))


# ---------------------------------------------------------------------------
# controllers

@dataclass
class Controller:
    realization: StateSpace
    name: str = "K"

    def __post_init__(self):
        r = self.realization
        if r.shape != (1, 2):
            raise ValueError("controller must map (y1, y2) to u")
        r.inputs = ["y1", "y2"]
        r.outputs = ["u"]
        if not np.all(np.isfinite(r.D)):
            raise ValueError("controller feedthrough must be finite")

    @classmethod
    def from_matrices(cls, A, B, C, D, name="K") -> "Controller":
        A = np.asarray(A, dtype=float)
        k = A.shape[0] if A.size else 0
        return cls(StateSpace(A if k else np.zeros((0, 0)), np.asarray(B, float).reshape(k, 2),
                              np.asarray(C, float).reshape(1, k), np.asarray(D, float).reshape(1, 2)), name)

    @classmethod
    def zero(cls) -> "Controller":
        return cls(static_gain(np.zeros((1, 2))), "zero")

    @property
    def order(self) -> int:
        return self.realization.n

    def is_stable(self) -> bool:
        return self.order == 0 or bool(np.max(self.realization.poles().real) < 0)

    def check_stabilizable_detectable(self, tol: float = 1e-9) -> bool:
        """PBH test on the closed right half-plane eigenvalues."""
        r = self.realization
        for ev in r.poles():
            if ev.real < 0:
                continue
            M1 = np.hstack([ev * np.eye(r.n) - r.A, r.B])
            M2 = np.vstack([ev * np.eye(r.n) - r.A, r.C])
            if np.linalg.svd(M1, compute_uv=False)[-1] < tol or np.linalg.svd(M2, compute_uv=False)[-1] < tol:
                return False
        return True

    def __call__(self, s) -> np.ndarray:
        """Frequency response, shape ``(len(s), 1, 2)``."""
        return self.realization.evalfr(s)

    def to_dict(self) -> dict:
        r = self.realization
        return {"name": self.name, "A": r.A.tolist(), "B": r.B.tolist(), "C": r.C.tolist(), "D": r.D.tolist()}


def controller_from_dict(d: dict) -> Controller:
    K = Controller.from_matrices(d["A"], d["B"], d["C"], d["D"], d.get("name", "K"))
    if not K.check_stabilizable_detectable():
        raise ValueError(f"controller {K.name!r} is not stabilizable and detectable")
    return K


def load_controller(name_or_path: str) -> Controller:
    if name_or_path in ("gray", "blue"):
        text = resources.files("slipstick.data").joinpath(f"controller_{name_or_path}.json").read_text()
    elif name_or_path == "zero":
        return Controller.zero()
    else:
        with open(name_or_path) as fh:
            text = fh.read()
    return controller_from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# interconnections

def close_loop(plant: PlantChannels | StateSpace, K: Controller) -> StateSpace:
    """Close ``u = -K y`` around the plant; input ``w``, outputs ``(z, y1, y2, u)``."""
    P = plant.plant if isinstance(plant, PlantChannels) else plant
    iw = [P.inputs.index("w")]
    iu = [P.inputs.index("u")]
    oz = [P.outputs.index("z")]
    oy = [P.outputs.index("y1"), P.outputs.index("y2")]
    A, B, C, D = P.A, P.B, P.C, P.D
    Bw, Bu = B[:, iw], B[:, iu]
    Cz, Cy = C[oz], C[oy]
    Dzw, Dzu = D[np.ix_(oz, iw)], D[np.ix_(oz, iu)]
    Dyw, Dyu = D[np.ix_(oy, iw)], D[np.ix_(oy, iu)]
    Kr = K.realization
    Ak, Bk, Ck, Dk = Kr.A, Kr.B, -Kr.C, -Kr.D  # u = Ck xk + Dk y
    Em = np.eye(1) - Dk @ Dyu
    if abs(np.linalg.det(Em)) < 1e-12:
        raise IllPosedLoop("I + D_K D_yu is singular")
    E = np.linalg.inv(Em)
    # u = Ux x + Uk xk + Uw w
    Ux = E @ Dk @ Cy
    Uk = E @ Ck
    Uw = E @ Dk @ Dyw
    # y = Yx x + Yk xk + Yw w
    Yx = Cy + Dyu @ Ux
    Yk = Dyu @ Uk
    Yw = Dyw + Dyu @ Uw
    n, k = P.n, Kr.n
    Acl = np.block([[A + Bu @ Ux, Bu @ Uk], [Bk @ Yx, Ak + Bk @ Yk]])
    Bcl = np.vstack([Bw + Bu @ Uw, Bk @ Yw])
    Ccl = np.vstack([np.hstack([Cz + Dzu @ Ux, Dzu @ Uk]), np.hstack([Yx, Yk]), np.hstack([Ux, Uk])])
    Dcl = np.vstack([Dzw + Dzu @ Uw, Yw, Uw])
    return StateSpace(Acl.reshape(n + k, n + k), Bcl, Ccl, Dcl, ["w"], ["z", "y1", "y2", "u"])


def weight_Wu() -> StateSpace:
    """Control-effort weight ``1e4 s / (s + 2e5)``."""
    g = np.sqrt(2e9)
    return StateSpace([[-2e5]], [[g]], [[-g]], [[1e4]], ["u"], ["Wu"])


def series(first: StateSpace, second: StateSpace) -> StateSpace:
    """``second`` driven by the output of ``first``."""
    if first.shape[0] != second.shape[1]:
        raise ValueError("dimension mismatch in series connection")
    n1, n2 = first.n, second.n
    A = np.block([[first.A, np.zeros((n1, n2))], [second.B @ first.C, second.A]])
    B = np.vstack([first.B, second.B @ first.D])
    C = np.hstack([second.D @ first.C, second.C])
    D = second.D @ first.D
    return StateSpace(A.reshape(n1 + n2, n1 + n2), B, C, D, list(first.inputs), list(second.outputs))


def parallel(a: StateSpace, b: StateSpace) -> StateSpace:
    """Sum of two systems with the same input and output dimensions."""
    if a.shape != b.shape:
        raise ValueError("dimension mismatch in parallel connection")
    n1, n2 = a.n, b.n
    A = sla.block_diag(a.A, b.A) if n1 + n2 else np.zeros((0, 0))
    return StateSpace(A, np.vstack([a.B, b.B]), np.hstack([a.C, b.C]), a.D + b.D,
                      list(a.inputs), list(a.outputs))


def channel_select(ss: StateSpace, outputs: Sequence[str], inputs: Sequence[str]) -> StateSpace:
    """Sub-system by label."""
    try:
        oi = [ss.outputs.index(o) for o in outputs]
        ii = [ss.inputs.index(i) for i in inputs]
    except ValueError as exc:
        raise ValueError(f"unknown channel label: {exc}") from None
    return StateSpace(ss.A, ss.B[:, ii], ss.C[oi], ss.D[np.ix_(oi, ii)], list(inputs), list(outputs))


def rigid_reduce(plant: StateSpace) -> StateSpace:
    """Remove the rigid-body mode of a discretized plant exactly.

    The positions enter only through differences (each row of the stiffness
    block sums to zero) and the outputs are velocities, so the common
    position is unobservable.  Relative positions ``x_i - x_N`` give the
    order ``2N+1`` realization with the same transfer function.
    """
    n = plant.n
    n1 = n // 2
    if n % 2 or np.any(plant.C[:, :n1] != 0) or np.any(plant.B[:n1] != 0):
        raise ValueError("plant does not have the position/velocity layout")
    T = plant.A[n1:, :n1]
    if np.max(np.abs(T.sum(axis=1))) > 1e-9 * max(np.max(np.abs(T)), 1.0):
        raise ValueError("stiffness rows do not sum to zero")
    N = n1 - 1
    A = np.zeros((N + n1, N + n1))
    A[:N, N:N + N] = np.eye(N)
    A[:N, N + N] = -1.0
    A[N:, :N] = T[:, :N]
    A[N:, N:] = plant.A[n1:, n1:]
    B = np.vstack([np.zeros((N, plant.B.shape[1])), plant.B[n1:]])
    C = np.hstack([np.zeros((plant.C.shape[0], N)), plant.C[:, n1:]])
    return StateSpace(A, B, C, plant.D.copy(), list(plant.inputs), list(plant.outputs))


def loop_channels(p, K: Controller, N: int = 200, shift_c: float = 0.0, reduce: bool = True) -> StateSpace:
    """Discretize, strip the rigid-body mode (optionally) and close the loop.

    The cancellation at the origin is removed from the plant before the
    interconnection, where it is structural; reducing the closed loop
    instead risks trading it for a slow controller mode.
    """
    plant = discretize(p, N, shift_c).plant
    if reduce:
        plant = rigid_reduce(plant)
    return close_loop(plant, K)
