"""Command-line interface.

Exit codes: 0 success, 1 invalid arguments, 2 a certificate failed,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import scenario as scn
from .contour import ContourSpec
from .errors import NumericalFailure, SlipstickError, UnstableController, UnstableSystem

log = logging.getLogger("slipstick")

EXIT_OK, EXIT_ARGS, EXIT_CERT, EXIT_NUM = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ARGS, f"{self.prog}: error: {message}\n")


def _emit(obj, out=None):
    text = json.dumps(obj, indent=2, default=_json_default)
    if out:
        Path(out).write_text(text + "\n")
    print(text)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(type(o).__name__)


def _xparams(args):
    from .xfer import XferParams

    dp = scn.derive_dimensionless(scn.load_scenario(args.scenario))
    return XferParams.from_dim(dp)


def _sector(args):
    if args.ql is not None and args.qu is not None:
        return scn.SectorBounds(args.ql, args.qu, mode=args.sector_mode)
    if args.scenario not in scn.PUBLISHED_SECTORS:
        raise ValueError("no default sector for this scenario; pass --ql and --qu")
    return scn.SectorBounds(**scn.PUBLISHED_SECTORS[args.scenario])


def _spec(args) -> ContourSpec:
    return ContourSpec(zero_tol=args.tol) if args.tol else ContourSpec()


# ---------------------------------------------------------------------------
# commands

def cmd_derive(args):
    sp = scn.load_scenario(args.scenario, args.beta_variant)
    dp = scn.derive_dimensionless(sp)
    st = scn.steady_state(sp)
    doc = dict(scenario=args.scenario, **dp.to_dict(), Omega0=st.Omega0,
               tau_over_t=dp.time_scale)
    _emit(doc, args.out)
    return EXIT_OK


def cmd_classify(args):
    from .spectra import classify_zone, zone_curves

    zp = classify_zone(args.q, args.alpha, step=args.step)
    doc = dict(q=args.q, alpha=args.alpha, **zp.to_dict())
    if args.svg:
        from .plotting import plot_zone_map

        plot_zone_map(zone_curves(), {"point": (args.q, args.alpha)}, args.svg)
    _emit(doc, args.out)
    return EXIT_OK if zp.consistent else EXIT_CERT


def cmd_np(args):
    from .spectra import count_unstable_poles
    from .xfer import XferParams

    p = XferParams(args.q, args.alpha, args.lam)
    n_p, res = count_unstable_poles(p, _spec(args))
    doc = dict(n_p=n_p, q=args.q, alpha=args.alpha, **{"lambda": args.lam}, R=res.R,
               samples=res.samples_used, min_modulus=res.min_modulus, refined=res.refined)
    _emit(doc, args.out)
    return EXIT_OK


def cmd_certify(args):
    from . import certify
    from .ssmodel import load_controller

    p = _xparams(args)
    K = load_controller(args.controller)
    sb = _sector(args)
    certs = certify.bundle(p, K, sb, rho=args.rho, spec=_spec(args), N=args.n)
    doc = dict(scenario=args.scenario, controller=args.controller, sector=sb.to_dict(),
               certificates=[c.to_dict() for c in certs],
               all_pass=all(c.passed for c in certs))
    if args.out_dir:
        from .plotting import plot_nyquist
        from .xfer import IrrationalLoop

        d = Path(args.out_dir)
        d.mkdir(parents=True, exist_ok=True)
        plot_nyquist(certs[0].winding, d / f"nyquist_{args.scenario}_{args.controller}.svg",
                     title=f"{args.scenario}: winding {certs[0].computed}, n_p {certs[0].threshold}",
                     logf=IrrationalLoop(p, K).log_return_difference)
        (d / f"certificates_{args.scenario}_{args.controller}.json").write_text(
            json.dumps(doc, indent=2, default=_json_default))
    _emit(doc, args.out)
    return EXIT_OK if doc["all_pass"] else EXIT_CERT


def cmd_simulate(args):
    from . import simulate as sim
    from .plotting import plot_timeseries
    from .ssmodel import load_controller

    sp = scn.load_scenario(args.scenario)
    K = None if args.controller in (None, "none") else load_controller(args.controller)
    on_at = math.inf if args.on_at is None else args.on_at
    if K is not None and args.on_at is None:
        on_at = 0.0
    cfg = sim.SimConfig(N=args.n, dt=args.dt, t_final=args.t_final, controller_on_at=on_at,
                        initial_offset=args.offset, disturbance=sim.DisturbanceSpec.parse(args.disturb),
                        record_stride=args.stride)
    ts = sim.run(sp, K, cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    ts.write_csv(out)
    side = out.with_suffix(".json")
    ts.write_json(side, extra=dict(scenario=args.scenario, controller=args.controller))
    svg = out.with_suffix(".svg")
    plot_timeseries(ts, svg, title=f"{args.scenario}, controller {args.controller or 'none'}")
    _emit(dict(csv=str(out), json=str(side), svg=str(svg), stick_intervals=ts.stick_intervals,
               final_y1=float(ts.y1[-1])))
    return EXIT_OK


def cmd_norms(args):
    from . import norms
    from .ssmodel import channel_select, load_controller, loop_channels, series, weight_Wu
    from .xfer import IrrationalLoop

    p = _xparams(args)
    K = load_controller(args.controller)
    shift = 0.0
    if args.channel == "tze":
        shift = _sector(args).c
    name = {"tze": "z", "y1w": "y1", "y2w": "y2", "uw": "u", "wuuw": "u"}[args.channel]
    if args.irrational:
        if args.norm != "hinf":
            raise ValueError("only hinf is available on the irrational plant")
        W = weight_Wu()
        weight = (lambda s: W.evalfr(s)[:, 0, 0]) if args.channel == "wuuw" else None
        ch = IrrationalLoop(p.shifted(shift), K, stability_certified=True).channel(
            "zw" if name == "z" else name + "w", weight)
        nr = norms.hinf(ch)
    else:
        cl = loop_channels(p, K, args.n, shift_c=shift)
        T = channel_select(cl, [name], ["w"])
        if args.channel == "wuuw":
            T = series(T, weight_Wu())
        nr = {"hinf": norms.hinf, "h2": norms.h2, "pk": norms.peak_gain}[args.norm](T)
    _emit(dict(scenario=args.scenario, controller=args.controller, channel=args.channel,
               norm=args.norm, N=None if args.irrational else args.n, **nr.to_dict()), args.out)
    return EXIT_OK


def cmd_synth(args):
    from . import certify, synth
    from .xfer import XferParams

    doc = json.loads(Path(args.problem).read_text())
    prob = synth.SynthProblem.from_dict(doc)
    st = synth.ControllerStructure(**doc.get("structure", {}))
    seed = args.seed if args.seed is not None else 0
    x0 = synth.stabilize_first(prob, st, seed=seed, budget=doc.get("stabilize_budget", 4000))
    x, hist = synth.optimize(prob, st, x0, budget=doc.get("budget", 1500), seed=seed)
    K = st.unpack(x)
    value, slacks, info = synth.objective(prob, x, st)
    p = XferParams.from_dim(prob.scenario)
    cert = certify.nyquist_certify(p, K, _spec(args))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "controller.json").write_text(json.dumps(K.to_dict(), indent=2))
    with open(out / "history.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["iterate", "penalty"])
        wr.writerows(hist.rows())
    res = dict(value=value, slacks=slacks, evaluations=hist.evaluations, nyquist=cert.to_dict(),
               controller=str(out / "controller.json"), history=str(out / "history.csv"))
    _emit(res, out / "synth.json")
    return EXIT_OK if cert.passed else EXIT_CERT


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="slipstick", description="Drillstring slip-stick analysis and certification")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("--tol", type=float, default=None, help="contour zero tolerance")
    ap.add_argument("--n", type=int, default=200, help="finite-difference points")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--log-level", default="WARNING")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def scen(p, required=True):
        p.add_argument("--scenario", required=required,
                       help="bundled name (" + ", ".join(scn.SCENARIO_NAMES) + ") or JSON path")

    def sector(p):
        p.add_argument("--ql", type=float)
        p.add_argument("--qu", type=float)
        p.add_argument("--sector-mode", default="global", choices=["global", "large_magnitude"])

    p = sub.add_parser("derive", help="dimensionless parameters of a scenario")
    scen(p)
    p.add_argument("--beta-variant", default="beta")
    p.add_argument("--out")
    p.set_defaults(func=cmd_derive)

    p = sub.add_parser("classify", help="zone and n_p pattern of a (q, alpha) point")
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--step", type=float, default=0.02)
    p.add_argument("--svg")
    p.add_argument("--out")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("np", help="number of unstable poles")
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_np)

    p = sub.add_parser("certify", help="certificate bundle for a scenario and controller")
    scen(p)
    p.add_argument("--controller", required=True)
    p.add_argument("--rho", type=float, default=None)
    sector(p)
    p.add_argument("--out")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("simulate", help="nonlinear closed-loop simulation")
    scen(p)
    p.add_argument("--controller", default=None)
    p.add_argument("--on-at", type=float, default=None)
    p.add_argument("--disturb", default="none", help="kind:t_start,duration,magnitude[,extra]")
    p.add_argument("--offset", type=float, default=0.6, help="initial speed deficit (fraction)")
    p.add_argument("--t-final", type=float, default=30.0)
    p.add_argument("--dt", type=float, default=0.005)
    p.add_argument("--stride", type=int, default=4)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("norms", help="closed-loop channel norms")
    scen(p)
    p.add_argument("--controller", required=True)
    p.add_argument("--channel", choices=["tze", "y1w", "y2w", "uw", "wuuw"], default="tze")
    p.add_argument("--norm", choices=["hinf", "h2", "pk"], default="hinf")
    p.add_argument("--irrational", action="store_true")
    sector(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_norms)

    p = sub.add_parser("synth", help="fixed-structure synthesis from a problem JSON")
    p.add_argument("--problem", required=True)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_synth)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.n < 2:
        ap.error("--n must be at least 2")
    try:
        return args.func(args)
    except (UnstableSystem, UnstableController) as exc:
        # a stability precondition of a certificate does not hold
        print(f"certificate not issued: {exc}", file=sys.stderr)
        return EXIT_CERT
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUM
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except SlipstickError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUM


if __name__ == "__main__":
    sys.exit(main())
