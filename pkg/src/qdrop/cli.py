"""Command line entry point: ``qdrop run|oracle|spectrum|report``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import io
from .config import CaseLibrary, load_config
from .runner import rerender_report, run_case, run_oracle, run_spectrum


def _load(args):
    cfg = load_config(args.config)
    kw = {}
    if args.seed is not None:
        kw["rng_seed"] = args.seed
    if args.scale is not None:
        kw["scale"] = args.scale
    if args.out is not None:
        kw["out_dir"] = args.out
    return cfg.with_overrides(**kw) if kw else cfg


def _out_dir(cfg) -> Path:
    d = Path(cfg.out_dir) / cfg.case_id
    d.mkdir(parents=True, exist_ok=True)
    return d


def cmd_run(args) -> int:
    cfg = _load(args)
    if args.t_max is not None:
        cfg = cfg.with_overrides(pinn_t_max=args.t_max)
    if args.no_pinn:
        cfg = cfg.with_overrides(run_pinn=False)
    rep = run_case(cfg)
    for name, a in rep.acceptance.items():
        print(f"{'PASS' if a['pass'] else 'FAIL'} {name} = {a['value']} (<= {a['threshold']})")
    print(f"{cfg.case_id}: {rep.status}"
          + (f" at stage {rep.failed_stage}: {rep.error}" if rep.failed_stage else ""))
    return rep.exit_code


def cmd_oracle(args) -> int:
    cfg = _load(args)
    info: dict = {}
    field = run_oracle(cfg, info)
    d = _out_dir(cfg)
    io.write_cf2d(field, d / "oracle.cf2d")
    io.emit_heatmap(field, d / "oracle.ppm")
    io.write_json({k: v for k, v in info.items() if k != "grid"}, d / "oracle.json")
    print(f"oracle residual {info['residual']:.3e} after {info['iterations']} iterations"
          f" -> {d / 'oracle.cf2d'}")
    return 0


def cmd_spectrum(args) -> int:
    cfg = _load(args)
    modes = run_spectrum(cfg, args.n_modes)
    d = _out_dir(cfg)
    rows = []
    for k, m in enumerate(modes):
        io.write_cf2d(m.mode, d / f"mode_{k}.cf2d")
        rows.append({"index": k, "eigenvalue": [m.eigenvalue.real, m.eigenvalue.imag],
                     "residual": m.residual})
        print(f"{k:2d}  {m.eigenvalue.real:+.10f} {m.eigenvalue.imag:+.3e}i  res {m.residual:.1e}")
    io.write_json(rows, d / "spectrum.json")
    return 0


def cmd_report(args) -> int:
    r = rerender_report(args.directory)
    for k, v in sorted(r["metrics"].items()):
        if isinstance(v, float):
            print(f"{k:32s} {v:.6e}")
    ok = True
    for name, a in r["acceptance"].items():
        ok &= a["pass"]
        print(f"{'PASS' if a['pass'] else 'FAIL'} {name} = {a['value']} (<= {a['threshold']})")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qdrop", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help=f"case id ({', '.join(CaseLibrary.ids())}) or config JSON")
        sp.add_argument("--seed", type=int, help="master 64-bit RNG seed")
        sp.add_argument("--scale", type=float, help="global budget scale factor (> 0)")
        sp.add_argument("--out", help="output root directory")

    r = sub.add_parser("run", help="oracle, IINN, PINN and metrics for one case")
    common(r)
    r.add_argument("--t-max", type=float, help="override the PINN time horizon")
    r.add_argument("--no-pinn", action="store_true", help="stop after the IINN stage")
    r.set_defaults(func=cmd_run)

    o = sub.add_parser("oracle", help="spectral stationary solve only")
    common(o)
    o.set_defaults(func=cmd_oracle)

    s = sub.add_parser("spectrum", help="linear modes of -lap + U")
    common(s)
    s.add_argument("--n-modes", type=int, default=6)
    s.set_defaults(func=cmd_spectrum)

    rp = sub.add_parser("report", help="re-render metrics of a run directory")
    rp.add_argument("directory")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, KeyError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
