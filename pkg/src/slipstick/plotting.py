"""Static SVG figures: time series, Nyquist image, zone map and sector plot."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.2,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "svg.hashsalt": "slipstick",  # stable ids so repeated runs give identical files
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_timeseries(ts, path, title=None):
    """Bit and commanded speed with shaded stick intervals, control below."""
    with plt.rc_context(STYLE):
        fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6.5, 4.2), sharex=True,
                                       gridspec_kw=dict(height_ratios=[2, 1]))
        ax1.plot(ts.t, ts.theta_dot_bit, color="C0", label="bit speed")
        ax1.plot(ts.t, ts.omega_cmd, color="C1", lw=0.9, label="table command")
        ax1.axhline(ts.Omega, color="0.5", ls=":", lw=0.8)
        for a, b in ts.stick_intervals:
            ax1.axvspan(a, b, color="gold", alpha=0.35, lw=0)
        ax1.set_ylabel("speed [rad/s]")
        ax1.legend(loc="upper right", frameon=False)
        if title:
            ax1.set_title(title)
        ax2.plot(ts.t, ts.u, color="C2")
        ax2.set_ylabel("u")
        ax2.set_xlabel("t (dimensionless)")
        return _save(fig, path)


def plot_nyquist(winding, path, title=None, clip=50.0, logf=None, n=4000):
    """Image of the return difference on the imaginary-axis part of the contour.

    With ``logf`` the axis is resampled on ``n`` points; otherwise the
    contour samples stored in ``winding`` are drawn.
    """
    if logf is not None:
        f = np.exp(logf(1j * np.linspace(-winding.R, winding.R, n)))
    else:
        s = winding.s
        on_axis = np.abs(s.real) < 1e-12 * max(winding.R, 1.0)
        f = winding.image()[on_axis]
    # compress large values radially so the neighbourhood of 0 stays readable
    mag = np.abs(f)
    g = np.where(mag > clip, f / mag * (clip + np.log(mag / clip)), f)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.2, 4.2))
        ax.plot(g.real, g.imag, color="C0")
        ax.plot([0], [0], "k+", ms=9)
        ax.set_aspect("equal", adjustable="datalim")
        ax.set_xlabel("Re")
        ax.set_ylabel("Im")
        ax.set_title(title or f"winding {winding.winding}")
        return _save(fig, path)


def plot_zone_map(curves, points, path):
    """Zone boundaries in the ``(q, alpha)`` plane with labelled scenario points."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 4.0))
        for key, style in (("parabola", dict(color="k", ls="--")), ("m", dict(color="C3")),
                           ("b", dict(color="C0"))):
            x, y = curves[key]
            ax.plot(x, y, label=key, **style)
        for name, (q, a) in points.items():
            ax.plot(q, a, "o", ms=4, color="0.2")
            ax.annotate(name, (q, a), textcoords="offset points", xytext=(4, 3), fontsize=7)
        ax.axvline(1.0, color="0.6", lw=0.7)
        ax.set_xlabel("q")
        ax.set_ylabel(r"$\alpha$")
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_sector(omega, psi_vals, sb, path):
    """Nonlinearity against the sector lines ``q_l w`` and ``q_u w``."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.6))
        ax.plot(omega, psi_vals, color="C0", label=r"$\psi$")
        ax.plot(omega, sb.q_l * omega, color="C3", ls="--", lw=0.9, label="q_l")
        ax.plot(omega, sb.q_u * omega, color="C2", ls="--", lw=0.9, label="q_u")
        ax.set_xlabel(r"$\omega$")
        ax.legend(frameon=False)
        return _save(fig, path)
