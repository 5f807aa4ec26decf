"""Command-line interface: ``sympfaff <command> [options]``.

Exit codes: 0 success, 1 verification failure, 2 invalid input,
3 numerical failure, 4 singular mass configuration.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .correlators import (
    NearSingularError,
    char_poly_expectation,
    correlation,
    correlation_batch,
    hermitean_limit_sweep,
    partition_function,
    perturb_coincident,
    real_correlation,
    results_to_csv,
    check_masses,
)
from .numerics import ConfigurationError, NumericError, ValidationError
from .oracle import density_compare, histogram_grid, mcmc_sample
from .skewortho import (
    chgse_skew_basis,
    general_skew_basis,
    gse_skew_basis,
    monomial_W,
    projected_skew_residual,
    skew_residual,
)
from .verify import SUITES, format_table
from .weights import build_grid, chgse_weight, gse_weight, projected_weight

EXIT_OK, EXIT_VERIFY, EXIT_INVALID, EXIT_NUMERIC, EXIT_SINGULAR = 0, 1, 2, 3, 4


def parse_complex(text: str) -> complex:
    """Parse ``a``, ``bi``, ``a+bi`` or ``a-bi`` (``j`` is accepted for ``i``)."""
    s = text.strip().replace(" ", "")
    if not s:
        raise ValidationError("empty complex number")
    t = s.replace("i", "j")
    if t.endswith("j") and (len(t) == 1 or t[-2] in "+-"):
        t = t[:-1] + "1j"
    try:
        return complex(t)
    except ValueError:
        raise ValidationError(f"cannot parse complex number {text!r}") from None


def parse_complex_list(text: Optional[str]) -> list[complex]:
    if text is None or (isinstance(text, str) and not text.strip()):
        return []
    if isinstance(text, (list, tuple)):
        return [parse_complex(str(v)) if not isinstance(v, (int, float, complex)) else complex(v)
                for v in text]
    return [parse_complex(part) for part in str(text).split(",")]


def parse_grid(text: str):
    """``xmin:xmax:nx[,ymin:ymax:ny]`` into linspace axes."""
    axes = []
    for part in text.split(","):
        bits = part.split(":")
        if len(bits) != 3:
            raise ValidationError(f"grid axis {part!r} must be min:max:n")
        lo, hi, n = float(bits[0]), float(bits[1]), int(bits[2])
        if n < 2 or not hi > lo:
            raise ValidationError(f"grid axis {part!r} needs max > min and n >= 2")
        axes.append(np.linspace(lo, hi, n))
    return axes


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


def _resolve(args: argparse.Namespace) -> dict:
    """Merge flags with an optional JSON config file (config wins)."""
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "config")}
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                extra = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config {args.config!r}: {exc}") from None
        aliases = {"N": "n"}
        for key, val in extra.items():
            cfg[aliases.get(key, key)] = val
    return cfg


def _validate_family(cfg: dict, projected: bool = False):
    fam = cfg.get("family")
    if fam not in ("gse", "chgse"):
        raise ValidationError(f"family must be 'gse' or 'chgse', got {fam!r}")
    n = cfg.get("n")
    if not isinstance(n, int) or n < 1:
        raise ValidationError(f"N must be a positive integer, got {n!r}")
    if fam == "gse":
        tau = cfg.get("tau")
        hi_ok = projected or cfg.get("command") == "skewpoly"
        if tau is None or not (0.0 <= tau < 1.0 or (hi_ok and tau == 1.0)):
            raise ValidationError(f"tau must lie in [0, 1) (1 only for projected bases), got {tau!r}")
    else:
        mu = cfg.get("mu")
        lo_ok = projected or cfg.get("command") == "skewpoly"
        if mu is None or not (0.0 < mu <= 1.0 or (lo_ok and mu == 0.0)):
            raise ValidationError(f"mu must lie in (0, 1] (0 only for projected bases), got {mu!r}")
        nu = cfg.get("nu")
        if not isinstance(nu, int) or nu < 0:
            raise ValidationError(f"nu must be a non-negative integer, got {nu!r}")


def _weight(cfg):
    if cfg["family"] == "gse":
        return gse_weight(cfg["n"], cfg["tau"])
    return chgse_weight(cfg["n"], cfg["mu"], cfg["nu"])


def _basis(cfg, pairs: int, projected: bool = False):
    if cfg["family"] == "gse":
        return gse_skew_basis(cfg["n"], 1.0 if projected else cfg["tau"], pairs)
    return chgse_skew_basis(cfg["n"], 0.0 if projected else cfg["mu"], cfg["nu"], pairs)


def _projected_weight(cfg):
    if cfg["family"] == "gse":
        return projected_weight(gse_weight(cfg["n"], 0.0))
    return projected_weight(chgse_weight(cfg["n"], 0.5, cfg["nu"]))


def _masses(cfg, chiral: bool) -> list[complex]:
    masses = parse_complex_list(cfg.get("masses"))
    eps = cfg.get("perturb_masses")
    if eps:
        masses = perturb_coincident(masses, float(eps), chiral)
    check_masses(masses, chiral)
    return masses


def _provenance(cfg: dict) -> dict:
    clean = {k: v for k, v in sorted(cfg.items()) if v is not None and k != "out"}
    return {"version": __version__, "config": clean}


def _json_default(obj):
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(type(obj).__name__)


def _emit(text: str, path: Optional[str]):
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, default=_json_default) + "\n"


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_skewpoly(cfg: dict) -> int:
    _validate_family(cfg)
    count = int(cfg["count"])
    if count < 2:
        raise ValidationError("--count must be at least 2")
    pairs = (count + 1) // 2
    projected = (cfg["family"] == "gse" and cfg["tau"] == 1.0) or (
        cfg["family"] == "chgse" and cfg["mu"] == 0.0)
    if cfg.get("method") == "w":
        if projected:
            raise ValidationError("the W-matrix path needs tau < 1 / mu > 0")
        basis = general_skew_basis(monomial_W(_weight(cfg), 2 * pairs))
    else:
        basis = _basis(cfg, pairs)
    out = dict(_provenance(cfg))
    data = basis.to_json()
    data["polys"] = data["polys"][:count]
    data["norms"] = data["norms"][: count // 2 if count % 2 == 0 else pairs]
    out["basis"] = data
    if cfg.get("verify"):
        if projected:
            res = projected_skew_residual(basis, _projected_weight(cfg))
        elif cfg["family"] == "chgse" and cfg["mu"] == 1.0:
            # the weight vanishes at mu = 1; check the reduced weight and norms instead
            n, nu = cfg["n"], cfg["nu"]
            res = skew_residual(chgse_skew_basis(n, 1.0, nu, pairs, reduced=True),
                                chgse_weight(n, 1.0, nu, reduced=True))
        else:
            res = skew_residual(basis, _weight(cfg))
        out["max_residual"] = res
        print(f"max normalised skew-orthogonality residual: {res:.3e}", file=sys.stderr)
    _emit(_dumps(out), cfg.get("out"))
    return EXIT_OK


def _run_parallel(func, items, threads: int):
    if threads <= 1 or len(items) < 2:
        return [func(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))


def cmd_correlator(cfg: dict) -> int:
    projected = bool(cfg.get("projected"))
    _validate_family(cfg, projected)
    N = cfg["n"]
    chiral = cfg["family"] == "chgse"
    masses = _masses(cfg, chiral)
    k = int(cfg.get("k") or 1)
    pairs = N + len(masses) // 2 + 1
    threads = int(cfg.get("threads") or 1)
    side = dict(_provenance(cfg))
    side["R_index"] = N + len(masses) // 2
    side["parity"] = "odd" if len(masses) % 2 else "even"

    if projected:
        basis = _basis(cfg, pairs, projected=True)
        wbar = _projected_weight(cfg)
        if cfg.get("grid"):
            (xs,) = parse_grid(cfg["grid"].split(",")[0])
            vals = _run_parallel(lambda x: real_correlation(basis, wbar, N, [x], masses), list(xs),
                                 threads)
            pts = [complex(x) for x in xs]
            side["grid_integral"] = float(np.trapezoid(np.real(vals), xs))
        else:
            pts_list = [parse_complex(p).real for p in str(cfg.get("points") or "").split(",") if p]
            if not pts_list:
                raise ValidationError("give --points or --grid")
            vals = [real_correlation(basis, wbar, N, pts_list, masses)]
            pts = [complex(pts_list[0])]
    else:
        w = _weight(cfg)
        basis = _basis(cfg, pairs)
        if cfg.get("grid"):
            axes = parse_grid(cfg["grid"])
            if len(axes) != 2:
                raise ValidationError("complex correlator grids need x and y axes")
            xs, ys = axes
            Z = (xs[:, None] + 1j * ys[None, :]).ravel()
            chunks = np.array_split(Z, max(1, threads))
            vals = np.concatenate(_run_parallel(
                lambda c: correlation_batch(basis, w, N, c, masses), chunks, threads))
            pts = list(Z)
            V = np.asarray(vals).reshape(len(xs), len(ys))
            side["grid_integral"] = complex(np.trapezoid(np.trapezoid(V, ys, axis=1), xs))
        else:
            points = parse_complex_list(cfg.get("points"))
            if len(points) != k:
                raise ValidationError(f"--k {k} needs exactly {k} points, got {len(points)}")
            res = correlation(basis, w, N, points, masses)
            side["diagnostics"] = res.diagnostics
            vals, pts = [res.value], [points[0]]
    _emit(results_to_csv(pts, vals), cfg.get("out"))
    if cfg.get("out"):
        with open(cfg["out"] + ".json", "w") as fh:
            fh.write(_dumps(side))
    else:
        sys.stderr.write(_dumps(side))
    return EXIT_OK


def _scalar_command(cfg: dict, which: str) -> int:
    projected = bool(cfg.get("projected"))
    _validate_family(cfg, projected)
    N = cfg["n"]
    masses = _masses(cfg, cfg["family"] == "chgse")
    basis = _basis(cfg, N + len(masses) // 2 + 1, projected=projected)
    if which == "charpoly":
        value = char_poly_expectation(basis, N, masses)
    else:
        value = partition_function(basis, N, masses)
    out = dict(_provenance(cfg))
    out["value"] = complex(value)
    _emit(_dumps(out), cfg.get("out"))
    return EXIT_OK


def cmd_verify(cfg: dict) -> int:
    suite = cfg["suite"]
    if suite not in SUITES:
        raise ValidationError(f"unknown suite {suite!r}; choose from {sorted(SUITES)}")
    kwargs = {}
    if suite == "mcmc":
        kwargs = {"steps": int(cfg.get("steps") or 1_000_000), "seed": int(cfg.get("seed") or 20240611)}
        if cfg.get("n_max"):
            kwargs["n_values"] = tuple(range(2, int(cfg["n_max"]) + 1))
    checks = SUITES[suite](**kwargs)
    print(format_table(checks))
    ok = all(c.passed for c in checks)
    print(f"{suite}: {'all checks passed' if ok else 'FAILED'}")
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_sample(cfg: dict) -> int:
    _validate_family(cfg)
    w = _weight(cfg)
    N = cfg["n"]
    masses = _masses(cfg, w.chiral)
    if any(m.imag for m in masses):
        raise ValidationError("sampling needs real masses")
    run = mcmc_sample(w, N, int(cfg["steps"]), int(cfg["seed"]), [m.real for m in masses])
    report = {**_provenance(cfg), "stats": run.stats.__dict__}
    if cfg.get("compare"):
        basis = _basis(cfg, N + len(masses) // 2 + 1)
        pred = lambda z: correlation_batch(basis, w, N, z, masses).real  # noqa: E731
        rep = density_compare(run.samples, pred, histogram_grid(w, N), N, chiral=w.chiral,
                              norm_grid=build_grid(w, degree=8 * N + 4))
        report["compare"] = rep.to_json()
    if cfg.get("out"):
        run.save_csv(cfg["out"])
        with open(cfg["out"] + ".json", "w") as fh:
            fh.write(_dumps(report))
    else:
        sys.stdout.write(_dumps(report))
    return EXIT_OK


def cmd_sweep(cfg: dict) -> int:
    fam = cfg.get("family")
    seq = [float(v) for v in str(cfg["sequence"]).split(",")] if cfg.get("sequence") else None
    rep = hermitean_limit_sweep(fam, int(cfg.get("n") or 1), seq, observable=cfg["observable"],
                                nu=int(cfg.get("nu") or 0))
    out = {**_provenance(cfg), **rep.to_json()}
    _emit(_dumps(out), cfg.get("out"))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _ensemble_args(p: argparse.ArgumentParser):
    p.add_argument("--family", choices=["gse", "chgse"], default="gse")
    p.add_argument("--n", type=int, default=1, help="matrix size N")
    p.add_argument("--tau", type=float, default=0.5, help="non-Hermiticity of gse, in [0, 1)")
    p.add_argument("--mu", type=float, default=0.5, help="non-Hermiticity of chgse, in (0, 1]")
    p.add_argument("--nu", type=int, default=0, help="topological index of chgse")
    p.add_argument("--config", help="JSON file whose keys override the flags")
    p.add_argument("--out", help="output path (stdout when omitted)")
    p.add_argument("--threads", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sympfaff", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("skewpoly", help="skew-orthogonal polynomials and norms as JSON")
    _ensemble_args(p)
    p.add_argument("--count", type=int, default=4, help="number of polynomials q_0..q_{count-1}")
    p.add_argument("--method", choices=["closed", "w"], default="closed")
    p.add_argument("--verify", action="store_true", help="report the skew-orthogonality residual")
    p.set_defaults(func=cmd_skewpoly)

    p = sub.add_parser("correlator", help="k-point correlators at points or on a grid (CSV)")
    _ensemble_args(p)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--points", help="comma-separated a+bi values")
    p.add_argument("--grid", help="xmin:xmax:nx,ymin:ymax:ny")
    p.add_argument("--masses", help="comma-separated a+bi values")
    p.add_argument("--perturb-masses", type=float, dest="perturb_masses",
                   help="split coincident masses symmetrically by this epsilon")
    p.add_argument("--projected", action="store_true", help="real-line (Hermitean-limit) correlator")
    p.set_defaults(func=cmd_correlator)

    for name, helptext in (("charpoly", "expectation of a product of characteristic polynomials"),
                           ("partition", "massive partition function")):
        p = sub.add_parser(name, help=helptext)
        _ensemble_args(p)
        p.add_argument("--masses", help="comma-separated a+bi values")
        p.add_argument("--perturb-masses", type=float, dest="perturb_masses")
        p.add_argument("--projected", action="store_true")
        p.set_defaults(func=lambda cfg, which=name: _scalar_command(cfg, which))

    p = sub.add_parser("verify", help="run a verification suite and print a pass/fail table")
    p.add_argument("suite", choices=sorted(SUITES))
    p.add_argument("--steps", type=int, help="chain length for the mcmc suite")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-max", type=int, dest="n_max", help="largest N for the mcmc suite")
    p.add_argument("--config")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sample", help="Metropolis samples of the eigenvalue density")
    _ensemble_args(p)
    p.add_argument("--steps", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--masses", help="comma-separated real masses")
    p.add_argument("--perturb-masses", type=float, dest="perturb_masses")
    p.add_argument("--compare", action="store_true", help="histogram comparison with the prediction")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("sweep", help="Hermitean-limit convergence table")
    _ensemble_args(p)
    p.add_argument("--sequence", help="comma-separated tau (gse) or mu (chgse) values")
    p.add_argument("--observable", choices=["density", "norms", "charpoly"], default="density")
    p.set_defaults(func=cmd_sweep)
    return parser


# options whose values may start with a minus sign ("-3:3:61", "-0.4+0.2i")
_SIGNED_VALUE_OPTIONS = ("--grid", "--points", "--masses", "--sequence")


def _join_signed_values(argv: Sequence[str]) -> list[str]:
    out = []
    it = iter(argv)
    for tok in it:
        if tok in _SIGNED_VALUE_OPTIONS:
            val = next(it, None)
            out.append(tok if val is None else f"{tok}={val}")
        else:
            out.append(tok)
    return out


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    argv = _join_signed_values(sys.argv[1:] if argv is None else argv)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code not in (0, None) else EXIT_OK
    try:
        cfg = _resolve(args)
        return args.func(cfg)
    except NearSingularError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SINGULAR
    except (ValidationError, ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
