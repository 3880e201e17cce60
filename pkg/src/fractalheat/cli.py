"""Command-line front end: pipelines, run manifests, CSV/JSON/SVG artifacts.

Subcommands: dims | classify | gkf | heat | mc | tube | fit | compare |
selftest.  Every command records a manifest with parameters, seed, file
digests, and wall time.  Exit codes: 0 ok, 1 usage, 2 numeric-quality
warning, 3 resource limit.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from . import __version__
from .errors import FractalHeatError, GeometryError, ResourceLimitError
from .expansion import (ExpansionFit, HeatZeta, explicit_formula_eval,
                        heat_residue, logperiodic_fit)
from .geometry import (Polyline, gkf_system, rasterize, self_avoidance_bound,
                       snowflake)
from .heat import fd_heat_solve, mc_heat_content, remainder_order_fit
from .mellin import truncated_mellin, scaling_identity_residual
from .series import TimeSeries, log_grid, write_json_sidecar
from .tube import compare_exponents, minkowski_fit, tube_function, inradius
from .zeta import (ComplexDimensionSet, Pole, RatioProfile, Window,
                   argument_principle_count, classify_lattice,
                   complex_dimensions, gkf_profile, moran_dimension)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_QUALITY = 2
EXIT_RESOURCE = 3


def _params(args, **extra) -> dict:
    out = {k: v for k, v in vars(args).items() if k != "func"}
    out.update(extra)
    return out


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class RunManifest:
    command: str
    parameters: dict
    version: str = ""
    seed: int | None = None
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def add_input(self, path):
        self.inputs[str(path)] = _sha256(path)

    def add_output(self, path):
        self.outputs[str(path)] = _sha256(path)

    def write(self, path):
        Path(path).write_text(json.dumps(asdict(self), indent=2,
                                         sort_keys=True) + "\n")


class _Parser(argparse.ArgumentParser):
    def error(self, message):          # usage problems exit 1, not 2
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(EXIT_USAGE)


def _parse_ratios(text: str) -> RatioProfile:
    pairs = []
    for chunk in text.split(","):
        r, _, m = chunk.partition(":")
        pairs.append((float(r), int(m) if m else 1))
    return RatioProfile.from_pairs(pairs)


def _profile_from_args(args) -> RatioProfile:
    if getattr(args, "gkf", None):
        n, r = int(args.gkf[0]), float(args.gkf[1])
        return gkf_profile(n, r)
    if getattr(args, "ratios", None):
        return _parse_ratios(args.ratios)
    raise SystemExit(EXIT_USAGE)


def _domain_from_args(args):
    """(polyline, label) for --square or --gkf n r with --depth."""
    if getattr(args, "square", False):
        verts = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float)
        return Polyline(vertices=verts, closed=True), "square"
    if getattr(args, "gkf", None):
        n, r = int(args.gkf[0]), float(args.gkf[1])
        bound = self_avoidance_bound(n)
        if r >= bound:
            print(f"warning: r = {r} >= self-avoidance bound {bound:.6g} "
                  f"for n = {n}", file=sys.stderr)
        system = gkf_system(n, r, strict=False)
        poly = snowflake(system, args.depth)
        return poly, f"gkf-{n}-{r}-d{args.depth}"
    raise SystemExit(EXIT_USAGE)


def _outdir(args) -> Path:
    out = Path(getattr(args, "out", ".") or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_dims(args) -> int:
    t0 = time.time()
    profile = _profile_from_args(args)
    classification = classify_lattice(profile,
                                      max_denominator=args.max_denominator)
    window = Window(sigma_min=args.sigma_min, sigma_max=args.sigma_max,
                    T=args.T)
    dims = complex_dimensions(profile, window, classification)
    out = _outdir(args)
    json_path, csv_path, svg_path = (out / "dims.json", out / "dims.csv",
                                     out / "dims.svg")
    dims.to_json(json_path)
    dims.to_csv(csv_path)
    fig, ax = plt.subplots(figsize=(5, 6))
    re = [p.omega.real for p in dims]
    im = [p.omega.imag for p in dims]
    ax.scatter(re, im, s=18)
    ax.set_xlabel("Re s")
    ax.set_ylabel("Im s")
    ax.set_title(f"{len(dims)} poles ({dims.method})")
    ax.grid(True, alpha=0.3)
    fig.savefig(svg_path)
    plt.close(fig)
    manifest = RunManifest("dims", _params(args, kind=classification.kind),
                           version=__version__, wall_time=time.time() - t0)
    for p in (json_path, csv_path, svg_path):
        manifest.add_output(p)
    manifest.write(out / "dims.manifest.json")
    print(f"{len(dims)} poles, {classification.kind}, "
          f"{len(dims.undecided)} undecided boxes")
    return EXIT_QUALITY if dims.undecided else EXIT_OK


def cmd_classify(args) -> int:
    t0 = time.time()
    profile = _profile_from_args(args)
    c = classify_lattice(profile, max_denominator=args.max_denominator,
                         tol=args.tol)
    payload = {"kind": c.kind, "generator": c.generator,
               "exponents": list(c.exponents) if c.exponents else None,
               "residual": c.residual,
               "max_denominator_checked": c.max_denominator_checked,
               "moran_dimension": moran_dimension(profile)}
    out = _outdir(args)
    path = out / "classify.json"
    write_json_sidecar(path, payload)
    manifest = RunManifest("classify", _params(args), version=__version__,
                           wall_time=time.time() - t0)
    manifest.add_output(path)
    manifest.write(out / "classify.manifest.json")
    print(json.dumps(payload))
    return EXIT_OK


def cmd_gkf(args) -> int:
    t0 = time.time()
    poly, label = _domain_from_args(args)
    out = _outdir(args)
    csv_path, svg_path = out / f"{label}.csv", out / f"{label}.svg"
    poly.to_csv(csv_path)
    fig, ax = plt.subplots(figsize=(6, 6))
    v = np.vstack([poly.vertices, poly.vertices[:1]])
    ax.plot(v[:, 0], v[:, 1], lw=0.7)
    ax.set_aspect("equal")
    ax.set_title(label)
    fig.savefig(svg_path)
    plt.close(fig)
    manifest = RunManifest("gkf", _params(args), version=__version__,
                           wall_time=time.time() - t0)
    manifest.add_output(csv_path)
    manifest.add_output(svg_path)
    manifest.write(out / f"{label}.manifest.json")
    print(f"{len(poly.vertices)} vertices, area {abs(poly.shoelace_area()):.6g}")
    return EXIT_OK


def cmd_heat(args) -> int:
    t0 = time.time()
    poly, label = _domain_from_args(args)
    grid = rasterize(poly, args.res)
    t_grid = log_grid(args.t_min, args.t_max, args.per_decade)
    run = fd_heat_solve(grid, args.C, t_grid,
                        steps_per_time=args.steps_per_time)
    out = _outdir(args)
    csv_path = out / f"heat-{label}.csv"
    run.E.to_csv(csv_path, columns=("t", "E"))
    meta = {"label": label, "resolution": args.res, "C": args.C,
            "area": grid.area, "scheme": run.scheme}
    if args.gkf:
        meta |= {"n": int(args.gkf[0]), "r": float(args.gkf[1]),
                 "depth": args.depth}
    write_json_sidecar(out / f"heat-{label}.json", meta)
    svg_path = out / f"heat-{label}.svg"
    fig, ax = plt.subplots()
    ax.loglog(run.E.t, run.E.v)
    ax.set_xlabel("t")
    ax.set_ylabel("E(t)")
    fig.savefig(svg_path)
    plt.close(fig)
    manifest = RunManifest("heat", _params(args, area=grid.area),
                           version=__version__, wall_time=time.time() - t0)
    for p in (csv_path, out / f"heat-{label}.json", svg_path):
        manifest.add_output(p)
    manifest.write(out / f"heat-{label}.manifest.json")
    print(f"E({run.E.t[0]:.3g}) = {run.E.v[0]:.6g} ... "
          f"E({run.E.t[-1]:.3g}) = {run.E.v[-1]:.6g} "
          f"(area {grid.area:.6g}, {run.scheme['solves']} solves)")
    return EXIT_OK


def cmd_mc(args) -> int:
    t0 = time.time()
    poly, label = _domain_from_args(args)
    result = mc_heat_content(poly, args.C, args.t, args.paths, dt=args.dt,
                             seed=args.seed, bridge=args.bridge)
    out = _outdir(args)
    path = out / f"mc-{label}.json"
    write_json_sidecar(path, result)
    manifest = RunManifest("mc", _params(args), version=__version__,
                           seed=args.seed, wall_time=time.time() - t0)
    manifest.add_output(path)
    manifest.write(out / f"mc-{label}.manifest.json")
    print(f"E({args.t:.3g}) = {result['estimate']:.6g} "
          f"+- {result['stderr']:.3g}")
    return EXIT_OK


def cmd_tube(args) -> int:
    t0 = time.time()
    poly, label = _domain_from_args(args)
    grid = rasterize(poly, args.res)
    rad = inradius(grid)
    t_values = log_grid(grid.h, rad * 2, args.per_decade)
    run = tube_function(grid, t_values)
    window = (args.fit_lo, args.fit_hi) if args.fit_lo else None
    fit = minkowski_fit(run, window=window, period=args.period)
    out = _outdir(args)
    csv_path = out / f"tube-{label}.csv"
    run.V.to_csv(csv_path, columns=("t", "V"))
    report = {"label": label, "inradius": rad} | fit
    write_json_sidecar(out / f"tube-{label}.json", report)
    manifest = RunManifest("tube", _params(args), version=__version__,
                           wall_time=time.time() - t0)
    manifest.add_output(csv_path)
    manifest.add_output(out / f"tube-{label}.json")
    manifest.write(out / f"tube-{label}.manifest.json")
    print(f"Minkowski dim = {fit['dim']:.5g} over window {fit['window']}")
    return EXIT_OK


def cmd_fit(args) -> int:
    t0 = time.time()
    profile = _profile_from_args(args)
    E = TimeSeries.from_csv(args.heat_csv)
    dims = ComplexDimensionSet.from_json(Path(args.dims_json))
    hz = HeatZeta.from_heat_content(profile, E, delta=args.delta)
    poles = []
    for p in dims:
        if abs(p.omega.imag) > args.T or p.omega.real / 2 <= hz.sigma_r:
            continue
        r = heat_residue(hz, p.omega)
        poles.append(Pole(omega=p.omega, residue=r))
    pole_set = ComplexDimensionSet(window=dims.window, poles=tuple(poles),
                                   method=dims.method)
    recon = (explicit_formula_eval(pole_set, args.k, 2, E.t, T=args.T)
             if poles else np.zeros_like(E.v))
    residual = TimeSeries(t=E.t, v=E.v - recon)
    out = _outdir(args)
    fit = ExpansionFit(
        N=2, k=args.k, delta=args.delta,
        poles=tuple({"re": p.omega.real, "im": p.omega.imag,
                     "res_re": p.residue.real, "res_im": p.residue.imag,
                     "source": "analytic"} for p in poles),
        residual=residual,
        meta={"heat_csv": str(args.heat_csv), "dims_json": str(args.dims_json)})
    json_path = out / "fit.json"
    res_csv = out / "fit-residual.csv"
    fit.to_json(json_path, residual_csv_path=str(res_csv))
    svg_path = out / "fit.svg"
    fig, axes = plt.subplots(2, 1, figsize=(6, 7), sharex=True)
    axes[0].loglog(E.t, E.v, label="measured")
    axes[0].loglog(E.t, np.abs(recon), "--", label="reconstruction")
    axes[0].legend()
    axes[0].set_ylabel("E(t)")
    axes[1].semilogx(E.t, residual.v / np.maximum(E.v, 1e-300))
    axes[1].set_ylabel("relative residual")
    axes[1].set_xlabel("t")
    fig.savefig(svg_path)
    plt.close(fig)
    manifest = RunManifest("fit", _params(args), version=__version__,
                           wall_time=time.time() - t0)
    manifest.add_input(args.heat_csv)
    manifest.add_input(args.dims_json)
    for p in (json_path, res_csv, svg_path):
        manifest.add_output(p)
    manifest.write(out / "fit.manifest.json")
    rel = np.abs(residual.v) / np.maximum(np.abs(E.v), 1e-300)
    print(f"{len(poles)} poles used; max relative residual {rel.max():.3g}")
    return EXIT_OK


def cmd_compare(args) -> int:
    t0 = time.time()
    if args.tube_json:
        tube_dim = json.loads(Path(args.tube_json).read_text())["dim"]
    else:
        tube_dim = args.tube_dim
    report = compare_exponents(tube_dim, args.heat_slope, tol=args.tol)
    out = _outdir(args)
    path = out / "compare.json"
    write_json_sidecar(path, report)
    manifest = RunManifest("compare", _params(args), version=__version__,
                           wall_time=time.time() - t0)
    manifest.add_output(path)
    manifest.write(out / "compare.manifest.json")
    print(json.dumps(report))
    return EXIT_OK if report["consistent"] else EXIT_QUALITY


def cmd_selftest(args) -> int:
    checks = []

    def check(name, ok, detail=""):
        checks.append((name, bool(ok)))
        print(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")

    p = gkf_profile(3, 1 / 3)
    D = moran_dimension(p)
    check("moran-gkf3", abs(D - math.log(4) / math.log(3)) < 1e-10, f"D={D:.10f}")
    dims = complex_dimensions(p, Window(sigma_min=-1, sigma_max=2, T=20))
    check("lattice-poles", len(dims) == 7 and
          all(abs(q.omega.real - D) < 1e-9 for q in dims))
    check("ap-recount",
          argument_principle_count(p, Window(sigma_min=-1, sigma_max=2, T=20)) == 7)
    mv = truncated_mellin(lambda t: np.asarray(t) ** 2, 0, 1, 1.0, sigma0=-2.0)
    check("mellin-monomial", abs(mv.value - 1 / 3) < 1e-10)
    res = scaling_identity_residual(lambda t: np.asarray(t), 2.0, 1.0, 1.0,
                                    sigma0=-1.0)
    check("mellin-scaling", res < 1e-8, f"residual={res:.2e}")
    check("self-avoidance", abs(self_avoidance_bound(4) - 1 / 3) < 1e-12)
    n_fail = sum(1 for _, ok in checks if not ok)
    print(f"{len(checks) - n_fail}/{len(checks)} selftest checks passed")
    return EXIT_OK if n_fail == 0 else EXIT_QUALITY


def _add_profile_args(p):
    p.add_argument("--gkf", nargs=2, metavar=("N", "R"),
                   help="von Koch parameters n and r")
    p.add_argument("--ratios", help="ratio:multiplicity list, e.g. 0.5:2")


def _add_domain_args(p):
    p.add_argument("--square", action="store_true", help="unit square domain")
    p.add_argument("--gkf", nargs=2, metavar=("N", "R"))
    p.add_argument("--depth", type=int, default=4)


def build_parser() -> _Parser:
    parser = _Parser(prog="fhl", description=__doc__)
    parser.add_argument("--config", help="key=value file supplying defaults")
    parser.add_argument("--out", default=".", help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)
    parser.subcommands = sub

    p = sub.add_parser("dims", help="complex dimensions in a window")
    _add_profile_args(p)
    p.add_argument("--sigma-min", type=float, default=-1.0)
    p.add_argument("--sigma-max", type=float, default=3.0)
    p.add_argument("--T", type=float, default=20.0)
    p.add_argument("--max-denominator", type=int, default=10 ** 6)
    p.set_defaults(func=cmd_dims)

    p = sub.add_parser("classify", help="lattice/nonlattice classification")
    _add_profile_args(p)
    p.add_argument("--max-denominator", type=int, default=10 ** 6)
    p.add_argument("--tol", type=float, default=1e-9)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("gkf", help="build a snowflake polyline")
    _add_domain_args(p)
    p.set_defaults(func=cmd_gkf)

    p = sub.add_parser("heat", help="finite-difference heat content")
    _add_domain_args(p)
    p.add_argument("--res", type=int, default=512)
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--t-min", type=float, default=1e-6)
    p.add_argument("--t-max", type=float, default=1e1)
    p.add_argument("--per-decade", type=int, default=16)
    p.add_argument("--steps-per-time", type=int, default=12)
    p.set_defaults(func=cmd_heat)

    p = sub.add_parser("mc", help="Monte Carlo heat content at one time")
    _add_domain_args(p)
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--paths", type=int, default=100_000)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bridge", action="store_true")
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("tube", help="tube volume and Minkowski fit")
    _add_domain_args(p)
    p.add_argument("--res", type=int, default=512)
    p.add_argument("--per-decade", type=int, default=64)
    p.add_argument("--fit-lo", type=float, default=None)
    p.add_argument("--fit-hi", type=float, default=None)
    p.add_argument("--period", type=float, default=None)
    p.set_defaults(func=cmd_tube)

    p = sub.add_parser("fit", help="explicit-formula reconstruction")
    _add_profile_args(p)
    p.add_argument("--heat-csv", required=True)
    p.add_argument("--dims-json", required=True)
    p.add_argument("--k", type=int, default=0)
    p.add_argument("--T", type=float, default=20.0)
    p.add_argument("--delta", type=float, default=1.0)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("compare", help="tube vs heat exponent relation")
    p.add_argument("--tube-json", default=None)
    p.add_argument("--tube-dim", type=float, default=None)
    p.add_argument("--heat-slope", type=float, required=True)
    p.add_argument("--tol", type=float, default=0.05)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("selftest", help="quick desk-scale checks")
    p.set_defaults(func=cmd_selftest)
    return parser


def _apply_config(parser, argv):
    """Pre-scan for --config and fold key=value pairs into defaults."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    path = argv[i + 1]
    overrides = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        overrides[key.strip().replace("-", "_")] = value.strip()
    # subparsers re-apply their own defaults, so push the overrides onto
    # every parser; explicitly supplied flags still win
    parser.set_defaults(**overrides)
    for sp in parser.subcommands.choices.values():
        known = {a.dest for a in sp._actions}
        sp.set_defaults(**{k: v for k, v in overrides.items() if k in known})
    return argv[:i] + argv[i + 2:]


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    threads = os.environ.get("FHL_THREADS")
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ.setdefault(var, threads)
    parser = build_parser()
    argv = _apply_config(parser, argv)
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ResourceLimitError as exc:
        print(f"resource limit: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (GeometryError, FractalHeatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_QUALITY
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
