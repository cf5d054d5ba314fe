"""Declarative experiments: bound ledgers, rate fits and reports.

An :class:`ExperimentConfig` names a kernel, a phi-function, a signal and a
domain.  The runners compute both sides of each inequality along separate
code paths: left-hand sides come from evaluating the operator and
integrating its residual; right-hand sides come from the kernel's measured
constants combined with moduli and modulars of the signal itself.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .kernels import Chi4Report, Kernel, default_chi4_grid, discrete_moment_of_indicator, \
    get_kernel, verify_chi4
from .operators import MaxProductOperator, OperatorGuardError, error_image, \
    interval_threshold, shifted_error_image
from .orlicz import Domain, PhiFunction, check_phi_conditions, default_ladder, get_phi, \
    modular, scan_lambda
from .signals import Signal, get_signal
from .smoothness import DEFAULT_H, SmoothingFamily, fit_lipschitz, k_functional, \
    modulus_bracket, smoothness_curve, dyadic_deltas

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

OUTPUT_ENV = "MAXKANT_OUTPUT_DIR"
TOLERANCE = 1e-6
EXPERIMENTS = ("bound-real", "bound-interval", "rate", "shifted")


class BoundViolation(AssertionError):
    """An asserted inequality failed by more than the tolerance."""


def _fmt(v: float) -> str:
    return f"{v:.12g}"


# -- configuration --------------------------------------------------------------

@dataclass
class ExperimentConfig:
    name: str
    experiment: str = "bound-real"
    kernel: str = "fejer"
    phi: str = "p:1"
    signal: str = "hat"
    domain: str = "real:R=8"
    alpha: float = 0.5
    n_grid: list = field(default_factory=lambda: [4, 8, 16, 32, 64, 128, 256])
    ladder: list = field(default_factory=lambda: default_ladder(20))
    H: int = DEFAULT_H
    density: int = 8
    shift: Optional[float] = None
    tolerance: float = TOLERANCE
    seed: int = 0
    output_dir: str = "out"

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        self.n_grid = [int(n) for n in self.n_grid]
        if not self.n_grid or any(n < 1 for n in self.n_grid):
            raise ValueError("n_grid must hold positive integers")
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ValueError("n_grid must be strictly increasing")
        if isinstance(self.ladder, str):
            _, _, depth = self.ladder.partition(":")
            self.ladder = default_ladder(int(depth) if depth else 20)
        self.ladder = [float(v) for v in self.ladder]
        # resolve names early so typos fail at load time
        get_kernel(self.kernel)
        get_phi(self.phi)
        get_signal(self.signal)
        self.domain_obj()

    def domain_obj(self) -> Domain:
        return Domain.parse(self.domain, self.density)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if "config" in data and isinstance(data["config"], dict):
            data = data["config"]  # a JSON summary written by emit_reports
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if path.suffix == ".toml":
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        else:
            data = json.loads(path.read_text())
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    def save(self, path) -> None:
        path = Path(path)
        if path.suffix == ".toml":
            path.write_text(_to_toml(self.to_dict()))
        else:
            path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    def output_path(self) -> Path:
        return Path(os.environ.get(OUTPUT_ENV) or self.output_dir)


def _to_toml(data: dict) -> str:
    lines = []
    for key, value in data.items():
        if value is None:
            continue
        lines.append(f"{key} = {json.dumps(value)}")
    return "\n".join(lines) + "\n"


# -- shared pieces ------------------------------------------------------------

@dataclass
class KernelConstants:
    """Every kernel number a bound uses, with its provenance."""

    name: str
    sup_norm: float
    l1_norm: float
    a_chi: float
    m0: float
    m1: Optional[float]
    M0_tau: float
    chi4: Optional[Chi4Report]

    def to_dict(self) -> dict:
        out = {k: v for k, v in asdict(self).items() if k != "chi4"}
        out["chi4"] = None if self.chi4 is None else self.chi4.to_dict()
        return out


def kernel_constants(kernel: Kernel, flavor: str, alpha: Optional[float] = None,
                     n_grid: Sequence[int] = (), need_m1: bool = False) -> KernelConstants:
    chi4 = None
    if alpha is not None:
        grid = sorted(set(default_chi4_grid()) | {int(n) for n in n_grid})
        chi4 = verify_chi4(kernel, alpha, grid)
    return KernelConstants(kernel.name, kernel.sup_norm, kernel.l1_norm, kernel.a_chi(flavor),
                           kernel.moment(0.0), kernel.moment(1.0) if need_m1 else None,
                           discrete_moment_of_indicator(closed=True), chi4)


def _certified_phi(spec: str) -> PhiFunction:
    return check_phi_conditions(get_phi(spec), raise_on_failure=True)


# -- modulus-of-smoothness bound on the real line ------------------------------

@dataclass
class BoundRow:
    n: int
    lhs: float
    lhs_error: float
    term1: float
    term2: float
    term3: float
    term1_coarse: float
    term3_coarse: float
    asserted: bool

    @property
    def rhs(self) -> float:
        return self.term1 + self.term2 + self.term3

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs


@dataclass
class BoundLedger:
    config: ExperimentConfig
    lam: Optional[float]
    constants: dict
    rows: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def n_threshold(self) -> int:
        return int(self.constants.get("n_threshold", 1))

    def violations(self) -> list:
        tol = self.config.tolerance
        return [r for r in self.rows if r.asserted and r.slack < -tol]

    def decay_ok(self) -> Optional[bool]:
        asserted = [r for r in self.rows if r.asserted]
        if len(asserted) < 2 or all(r.lhs == 0.0 for r in asserted):
            return None
        return asserted[-1].lhs < asserted[0].lhs

    @property
    def passed(self) -> bool:
        return not self.violations() and self.decay_ok() is not False

    def csv_rows(self):
        return [[r.n, r.lhs, r.term1, r.term2, r.term3, r.slack] for r in self.rows]

    def summary(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "lambda": self.lam,
            "constants": self.constants,
            "rows": [dict(asdict(r), rhs=r.rhs, slack=r.slack) for r in self.rows],
            "verdict": {"passed": self.passed, "violations": [r.n for r in self.violations()],
                        "lhs_decreasing": self.decay_ok()},
            "orientation": "omega is a finite-grid maximum (lower bound of the sup); slack "
                           "uses the finer grid",
            "notes": self.notes,
        }


def _select_lambda(phi: PhiFunction, f_rhs: Signal, scale: float, domain: Domain,
                   ladder: Sequence[float]) -> Optional[float]:
    """Largest ladder lambda for which the modular in the tail term is finite."""
    for lam in ladder:
        if modular(phi, f_rhs, 8.0 * scale * lam, domain).finite:
            return lam
    return None


def _bound_real(config: ExperimentConfig, shifted: bool) -> BoundLedger:
    kernel = get_kernel(config.kernel)
    phi = _certified_phi(config.phi)
    f = get_signal(config.signal)
    domain = config.domain_obj()
    if not domain.is_real_line:
        raise ValueError("this experiment runs on the real line")

    if shifted:
        c = config.shift
        if c is None:
            if f.lower_bound is None:
                raise ValueError(f"{f.name}: no lower bound declared; set 'shift'")
            c = f.lower_bound
        g = f.minus_const(c)  # the tail term uses f - c
    else:
        c = None
        if f.lower_bound is not None and f.lower_bound < 0:
            raise ValueError(f"{f.name} is not non-negative; use the shifted experiment")
        g = f

    kc = kernel_constants(kernel, "real_line", config.alpha, config.n_grid)
    chi4 = kc.chi4
    scale = kc.sup_norm / kc.a_chi
    c1 = kc.l1_norm * kc.M0_tau / (2.0 * kc.sup_norm)
    c2 = kc.M0_tau * chi4.M / (2.0 * kc.sup_norm)
    constants = {"kernel": kc.to_dict(), "scale": scale, "c1": c1, "c2": c2,
                 "n_threshold": chi4.n_threshold, "shift": c, "H": config.H, "refine": 4,
                 "grid_resolution": f"1/(n*{config.density})"}
    ledger = BoundLedger(config, None, constants)

    lam = _select_lambda(phi, g, scale, domain, config.ladder)
    if lam is None:
        ledger.notes.append("no ladder lambda gives a finite right-hand side; nothing asserted")
        return ledger
    ledger.lam = lam

    I8 = modular(phi, g, 8.0 * scale * lam, domain)
    constants["modular_8"] = I8.to_dict()
    lam4 = 4.0 * scale * lam

    for n in config.n_grid:
        op = MaxProductOperator(kernel, n, domain)
        image = shifted_error_image(op, f, c) if shifted else error_image(op, f)
        rep = image.modular(phi, lam)
        w1 = modulus_bracket(phi, f, lam4, n ** -config.alpha, domain, config.H)
        w3 = modulus_bracket(phi, f, lam4, 1.0 / n, domain, config.H)
        term2 = 0.0 if chi4.M == 0.0 else c2 * I8.value * n ** -chi4.gamma
        ledger.rows.append(BoundRow(
            n=n, lhs=rep.value, lhs_error=rep.error,
            term1=c1 * w1.fine, term2=term2, term3=0.5 * w3.fine,
            term1_coarse=c1 * w1.coarse, term3_coarse=0.5 * w3.coarse,
            asserted=n >= chi4.n_threshold))
    return ledger


def run_theorem_bound_real_line(config: ExperimentConfig) -> BoundLedger:
    """Ledger of the modulus-of-smoothness estimate for ``K_n f - f`` on the line."""
    return _bound_real(config, shifted=False)


def run_shifted_variant(config: ExperimentConfig) -> BoundLedger:
    """Same ledger for ``K_n(f - c) + c`` with f bounded below by c."""
    return _bound_real(config, shifted=True)


# -- rate ---------------------------------------------------------------------

@dataclass
class RateFit:
    rho_emp: float
    rho_pred: float
    residual: float
    nu: float
    gamma: float
    alpha: float
    ns: list
    lhs: list
    threshold: float = 0.15
    skipped: bool = False
    diagnostics: str = ""

    @property
    def passed(self) -> bool:
        if self.skipped:
            return True
        return not self.diagnostics and self.rho_emp >= self.rho_pred - self.threshold

    def summary(self) -> dict:
        out = asdict(self)
        out["passed"] = self.passed
        for key in ("rho_emp", "rho_pred", "gamma"):
            if isinstance(out[key], float) and math.isinf(out[key]):
                out[key] = "inf"
        return out


def fit_rate(ns: Sequence[int], lhs: Sequence[float]) -> tuple[float, float]:
    """Slope of ``-log LHS`` against ``log n`` and its RMS residual."""
    x = np.log(np.asarray(ns, dtype=float))
    y = np.log(np.asarray(lhs, dtype=float))
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    return -float(slope), resid


def run_lipschitz_rate(config: ExperimentConfig) -> tuple[RateFit, BoundLedger]:
    """Empirical decay exponent of the left-hand side against ``min(alpha nu, gamma)``."""
    ledger = run_theorem_bound_real_line(config)
    phi = _certified_phi(config.phi)
    f = get_signal(config.signal)
    domain = config.domain_obj()
    chi4: dict = ledger.constants["kernel"]["chi4"]
    gamma = math.inf if chi4["gamma"] == "inf" else float(chi4["gamma"])
    rows = [r for r in ledger.rows if r.asserted]
    ns = [r.n for r in rows]
    lhs = [r.lhs for r in rows]
    if all(v == 0.0 for v in lhs):
        return RateFit(math.inf, math.nan, 0.0, math.nan, gamma, config.alpha, ns, lhs,
                       skipped=True, diagnostics="left-hand side identically zero"), ledger
    if len(ns) < 5:
        raise ValueError("the rate fit needs at least 5 asserted n values")
    lam = ledger.lam if ledger.lam is not None else 1.0
    curve = smoothness_curve(phi, f, lam, dyadic_deltas(16), domain, config.H)
    lip = fit_lipschitz(curve)
    rho_pred = min(config.alpha * lip.nu, gamma)
    diagnostics = ""
    if any(b > a for a, b in zip(lhs, lhs[1:])):
        diagnostics = "left-hand side is not monotone in n: " + ", ".join(_fmt(v) for v in lhs)
    rho, resid = fit_rate(ns, lhs)
    return RateFit(rho, rho_pred, resid, lip.nu, gamma, config.alpha, ns, lhs,
                   diagnostics=diagnostics), ledger


# -- K-functional bound on an interval ----------------------------------------------

@dataclass
class KRow:
    n: int
    lhs: float
    kfun: float
    rhs: float
    witness_rhs: Optional[float]
    witness: str
    asserted: bool
    note: str = ""

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs if math.isfinite(self.lhs) else math.nan


@dataclass
class KFunctionalReport:
    config: ExperimentConfig
    constants: dict
    rows: list = field(default_factory=list)

    def violations(self) -> list:
        tol = self.config.tolerance
        bad = []
        for r in self.rows:
            if not r.asserted:
                continue
            if r.slack < -tol:
                bad.append(r.n)
            elif r.witness_rhs is not None and r.lhs > r.witness_rhs + tol:
                bad.append(r.n)
        return bad

    @property
    def passed(self) -> bool:
        return not self.violations() and any(r.asserted for r in self.rows)

    def csv_rows(self):
        return [[r.n, r.lhs, r.rhs, "" if r.witness_rhs is None else r.witness_rhs, r.slack]
                for r in self.rows]

    def summary(self) -> dict:
        return {"config": self.config.to_dict(), "constants": self.constants,
                "rows": [dict(asdict(r), slack=r.slack) for r in self.rows],
                "orientation": "K-functional is an upper estimate over a finite C1 family",
                "verdict": {"passed": self.passed, "violations": self.violations()}}


def run_kfunctional_bound(config: ExperimentConfig) -> KFunctionalReport:
    """``I[lam1 (K_n f - f)] <= A1 * K(f, lam0, A2/n)`` on a compact interval."""
    kernel = get_kernel(config.kernel)
    phi = _certified_phi(config.phi)
    f = get_signal(config.signal)
    domain = config.domain_obj()
    if domain.is_real_line:
        raise ValueError("the K-functional bound runs on an interval domain")
    kc = kernel_constants(kernel, "compact", need_m1=True)
    scan = scan_lambda(phi, f, domain, config.ladder)
    if not scan.member:
        raise ValueError(f"{f.name} is not in the Orlicz space at any ladder lambda")
    lam0 = scan.lam
    m0, m1, a = kc.m0, kc.m1, kc.a_chi
    lam1 = lam0 * a / (6.0 * m0)
    A1 = kc.l1_norm / m0 + 1.0
    A2 = lam0 * (0.5 * m0 + m1) * (domain.b - domain.a) / (a * A1)
    n_interval = interval_threshold(kernel, domain.a, domain.b)
    n_convex = math.ceil(lam0 * (0.5 * m0 + m1) / a - 1e-12)
    n_threshold = max(n_interval, n_convex, 1)
    constants = {"kernel": kc.to_dict(), "lambda0": lam0, "lambda1": lam1, "A1": A1, "A2": A2,
                 "n_threshold": n_threshold, "n_threshold_interval": n_interval,
                 "n_threshold_convexity": n_convex, "grid_resolution": f"1/(n*{config.density})"}
    report = KFunctionalReport(config, constants)

    family = SmoothingFamily(f, domain)
    deriv = None
    for cand in family.candidates:
        if cand.name == "self":
            deriv = cand.derivative_norm
    constants["candidates"] = len(family.candidates)
    constants["derivative_sup_norm"] = deriv

    for n in config.n_grid:
        try:
            op = MaxProductOperator(kernel, n, domain)
        except OperatorGuardError as exc:
            report.rows.append(KRow(n, math.nan, math.nan, math.nan, None, "", False, str(exc)))
            continue
        lhs = error_image(op, f).modular(phi, lam1).value
        est = k_functional(phi, f, lam0, A2 / n, domain, family)
        witness_rhs = None
        if deriv is not None:
            witness_rhs = A1 * (A2 / n) * phi.scalar(deriv)
        report.rows.append(KRow(n, lhs, est.value, A1 * est.value, witness_rhs, est.witness,
                                n >= n_threshold))
    return report


# -- reports --------------------------------------------------------------------

LEDGER_HEADER = ["n", "lhs", "term1", "term2", "term3", "slack"]
KFUN_HEADER = ["n", "lhs", "rhs", "witness_rhs", "slack"]


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([c if isinstance(c, (int, str)) else _fmt(c) for c in row])


def _jsonable(obj):
    if isinstance(obj, float):
        if math.isnan(obj):
            return "nan"
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    return obj


def emit_reports(result, out_dir, stem: str) -> dict:
    """Write ``<stem>.csv`` and ``<stem>.json``; returns the paths written."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = {}
        if isinstance(result, RateFit):
            summary = result.summary()
        else:
            header = KFUN_HEADER if isinstance(result, KFunctionalReport) else LEDGER_HEADER
            csv_path = out_dir / f"{stem}.csv"
            _write_csv(csv_path, header, result.csv_rows() if result is not None else [])
            paths["csv"] = csv_path
            summary = result.summary() if result is not None else {}
        json_path = out_dir / f"{stem}.json"
        json_path.write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
        paths["json"] = json_path
    except OSError as exc:
        raise OSError(f"cannot write reports to {out_dir}: {exc}") from exc
    return paths


def run_config(config: ExperimentConfig, out_dir=None) -> tuple[bool, dict]:
    """Run one experiment, write its reports, return ``(passed, paths)``."""
    out_dir = Path(out_dir) if out_dir is not None else config.output_path()
    if config.experiment == "bound-real":
        res = run_theorem_bound_real_line(config)
        return res.passed, emit_reports(res, out_dir, config.name)
    if config.experiment == "shifted":
        res = run_shifted_variant(config)
        return res.passed, emit_reports(res, out_dir, config.name)
    if config.experiment == "bound-interval":
        res = run_kfunctional_bound(config)
        return res.passed, emit_reports(res, out_dir, config.name)
    fit, ledger = run_lipschitz_rate(config)
    paths = emit_reports(ledger, out_dir, config.name)
    paths.update({"rate": emit_reports(fit, out_dir, config.name + "-rate")["json"]})
    return fit.passed and ledger.passed, paths
