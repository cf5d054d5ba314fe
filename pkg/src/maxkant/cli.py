"""Command-line interface: ``maxkant <subcommand> ...``.

Exit status is 0 when every assertion of the subcommand holds, 1 when a
verification fails, and 2 for usage or input errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import harness
from .harness import ExperimentConfig, emit_reports
from .kernels import KernelConditionError, get_kernel
from .operators import MaxProductOperator, OperatorGuardError
from .orlicz import Domain, check_phi_conditions, get_phi
from .signals import get_signal
from .smoothness import SmoothingFamily, k_functional, parse_deltas, smoothness_curve

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _int_list(text: str) -> list[int]:
    if text.startswith("dyadic:"):
        lo, hi = (int(v) for v in text.split(":")[1].split("-"))
        out, n = [], lo
        while n <= hi:
            out.append(n)
            n *= 2
        return out
    return [int(v) for v in text.split(",")]


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",")]


def _write_rows(path, header, rows) -> None:
    fh = open(path, "w", newline="") if path else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([f"{v:.12g}" for v in row])
    finally:
        if path:
            fh.close()


def _emit_json(obj, path) -> None:
    text = json.dumps(harness._jsonable(obj), indent=2, sort_keys=True) + "\n"
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


# -- subcommands ----------------------------------------------------------------

def cmd_verify_kernel(args) -> int:
    kernel = get_kernel(args.kernel)
    report = kernel.report(args.alpha, _float_list(args.betas))
    chi4 = report["chi4"]
    ok = report["chi2"]["real_line"]
    if chi4.get("gamma_predicted") not in (None, "inf") and chi4["gamma"] != "inf":
        ok = ok and abs(chi4["gamma"] - chi4["gamma_predicted"]) <= 0.1
    ok = ok and report["moments"]["0"] <= report["sup_norm"] * (1 + 1e-9)
    report["verdict"] = {"passed": bool(ok)}
    _emit_json(report, args.out)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_reconstruct(args) -> int:
    kernel = get_kernel(args.kernel)
    f = get_signal(args.signal)
    domain = Domain.parse(args.domain)
    op = MaxProductOperator(kernel, args.n, domain)
    if domain.is_real_line:
        lo, hi = f.support if f.support is not None else (-domain.R, domain.R)
        pad = 0.25 * (hi - lo) + 1.0 / args.n
        lo, hi = max(lo - pad, -domain.R), min(hi + pad, domain.R)
    else:
        lo, hi = domain.a, domain.b
    x = np.linspace(lo, hi, args.points)
    if f.lower_bound is not None and f.lower_bound < 0:
        y = op.shifted_apply(f, x, f.lower_bound)
    else:
        y = op.apply(f, x)
    _write_rows(args.out, ["x", "K_n(f)(x)", "f(x)"], zip(x, y, f(x)))
    return EXIT_OK


def cmd_smoothness(args) -> int:
    phi = check_phi_conditions(get_phi(args.phi), raise_on_failure=True)
    f = get_signal(args.signal)
    domain = Domain.parse(args.domain)
    curve = smoothness_curve(phi, f, args.lam, parse_deltas(args.deltas), domain, args.H,
                             args.mode)
    _write_rows(args.out, ["delta", "omega"], curve.points)
    return EXIT_OK if all(np.isfinite(curve.values)) else EXIT_FAIL


def cmd_kfun(args) -> int:
    phi = check_phi_conditions(get_phi(args.phi), raise_on_failure=True)
    f = get_signal(args.signal)
    domain = Domain.parse(args.domain)
    family = SmoothingFamily(f, domain)
    estimates = [k_functional(phi, f, args.lam, d, domain, family).to_dict()
                 for d in _float_list(args.delta)]
    _emit_json({"phi": phi.name, "signal": f.name, "domain": domain.spec(),
                "estimates": estimates}, args.out)
    return EXIT_OK


def _config_from(args, experiment: str) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.load(args.config)
        return cfg
    data = {"name": args.name or experiment, "experiment": experiment,
            "kernel": args.kernel, "phi": args.phi, "signal": args.signal,
            "domain": args.domain, "alpha": args.alpha, "n_grid": _int_list(args.n_grid)}
    if getattr(args, "shift", None) is not None:
        data["shift"] = args.shift
        data["experiment"] = "shifted"
    if args.out_dir:
        data["output_dir"] = args.out_dir
    return ExperimentConfig.from_dict(data)


def _run(args, experiment: str, allowed) -> int:
    cfg = _config_from(args, experiment)
    if cfg.experiment not in allowed:
        raise ValueError(f"config {cfg.name!r} is a {cfg.experiment!r} experiment")
    out_dir = args.out_dir if args.out_dir else None
    passed, paths = harness.run_config(cfg, out_dir)
    verdict = "PASS" if passed else "FAIL"
    print(f"{verdict} {cfg.name}: " + ", ".join(str(p) for p in paths.values()))
    return EXIT_OK if passed else EXIT_FAIL


def cmd_bound_real(args) -> int:
    return _run(args, "bound-real", ("bound-real", "shifted"))


def cmd_bound_interval(args) -> int:
    return _run(args, "bound-interval", ("bound-interval",))


def cmd_rate(args) -> int:
    return _run(args, "rate", ("rate",))


# -- parser ---------------------------------------------------------------------

def _experiment_flags(p, domain: str, n_grid: str) -> None:
    p.add_argument("--config", help="TOML or JSON experiment config (overrides the flags)")
    p.add_argument("--name", help="report file stem")
    p.add_argument("--kernel", default="fejer")
    p.add_argument("--phi", default="p:1")
    p.add_argument("--signal", default="hat")
    p.add_argument("--domain", default=domain)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--n-grid", default=n_grid, help="comma list or dyadic:LO-HI")
    p.add_argument("--out-dir", help=f"report directory (default: ${harness.OUTPUT_ENV} or config)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="maxkant", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify-kernel", help="norms, a_chi, moments and tail decay of a kernel")
    p.add_argument("--kernel", required=True)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--betas", default="0,1")
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify_kernel)

    p = sub.add_parser("reconstruct", help="evaluate K_n f on a grid")
    p.add_argument("--kernel", required=True)
    p.add_argument("--signal", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--domain", default="real:R=8")
    p.add_argument("--points", type=int, default=1001)
    p.add_argument("--out")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("smoothness", help="modulus of smoothness on a delta grid")
    p.add_argument("--phi", required=True)
    p.add_argument("--signal", required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--deltas", default="dyadic:16")
    p.add_argument("--domain", default="real:R=8")
    p.add_argument("--H", type=int, default=32)
    p.add_argument("--mode", choices=("overlap", "zero"), default="overlap")
    p.add_argument("--out")
    p.set_defaults(func=cmd_smoothness)

    p = sub.add_parser("kfun", help="K-functional upper estimate on an interval")
    p.add_argument("--phi", required=True)
    p.add_argument("--signal", required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--delta", required=True, help="comma-separated delta values")
    p.add_argument("--domain", default="interval:0:1")
    p.add_argument("--out")
    p.set_defaults(func=cmd_kfun)

    p = sub.add_parser("bound-real", help="modulus-of-smoothness bound on the real line")
    _experiment_flags(p, "real:R=8", "4,8,16,32,64,128,256")
    p.add_argument("--shift", type=float, help="run the shifted variant with this lower bound")
    p.set_defaults(func=cmd_bound_real)

    p = sub.add_parser("bound-interval", help="K-functional bound on an interval")
    _experiment_flags(p, "interval:0:1", "4,8,16,32,64,128,256")
    p.set_defaults(func=cmd_bound_interval)

    p = sub.add_parser("rate", help="empirical convergence rate for Lipschitz signals")
    _experiment_flags(p, "real:R=8", "32,45,64,90,128,181,256")
    p.set_defaults(func=cmd_rate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (KernelConditionError, OperatorGuardError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (KeyError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
