"""phi-functions, domains and the modular functional.

The modular of a signal is ``I[f] = int_Omega phi(|f(x)|) dx``; a signal
belongs to the Orlicz space of ``phi`` when ``I[lam*f]`` is finite for some
``lam > 0``.  Membership is certified by scanning a decreasing ladder of
``lam`` values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .quadrature import gauss_kronrod
from .signals import Signal

POWER = "power"
ZYGMUND = "zygmund"
EXPONENTIAL = "exponential"
CUSTOM = "custom"


class PhiConditionError(ValueError):
    """A candidate phi-function violated (phi1), (phi2) or convexity."""


@dataclass(frozen=True)
class PhiCertificate:
    passed: bool
    convex: bool
    failures: tuple[str, ...]
    u_min: float
    u_max: float
    points: int


@dataclass(frozen=True, eq=False)
class PhiFunction:
    name: str
    func: Callable[[np.ndarray], np.ndarray]
    family: str = CUSTOM
    params: tuple[float, ...] = ()
    certificate: Optional[PhiCertificate] = None

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        with np.errstate(over="ignore", invalid="ignore"):
            return np.asarray(self.func(u), dtype=float)

    def scalar(self, u: float) -> float:
        return float(self(np.array([u]))[0])


def power(p: float) -> PhiFunction:
    p = float(p)
    return PhiFunction(f"p:{p:g}", lambda u: u ** p, POWER, (p,))


def zygmund(alpha: float, beta: float) -> PhiFunction:
    a, b = float(alpha), float(beta)
    return PhiFunction(f"zygmund:{a:g}:{b:g}", lambda u: u ** a * np.log(u + math.e) ** b,
                       ZYGMUND, (a, b))


def exponential(gamma: float) -> PhiFunction:
    g = float(gamma)
    return PhiFunction(f"exp:{g:g}", lambda u: np.expm1(u ** g), EXPONENTIAL, (g,))


def custom(name: str, func: Callable[[np.ndarray], np.ndarray]) -> PhiFunction:
    return PhiFunction(name, func, CUSTOM)


def get_phi(spec: str) -> PhiFunction:
    """Parse ``p:<p>``, ``zygmund:<a>:<b>`` or ``exp:<g>``."""
    parts = spec.split(":")
    head = parts[0]
    try:
        if head in ("p", "power"):
            return power(float(parts[1]))
        if head == "zygmund":
            return zygmund(float(parts[1]), float(parts[2]))
        if head in ("exp", "exponential"):
            return exponential(float(parts[1]))
    except (IndexError, ValueError) as exc:
        raise ValueError(f"malformed phi spec {spec!r}") from exc
    raise KeyError(f"unknown phi {spec!r}")


def check_phi_conditions(phi: PhiFunction, points: int = 2001, u_min: float = 1e-6,
                         u_max: float = 1e6, rtol: float = 1e-9,
                         raise_on_failure: bool = False) -> PhiFunction:
    """Certify phi(0)=0, positivity, monotonicity, growth and convexity.

    Tests run on a geometric grid over ``[u_min, u_max]`` truncated where phi
    overflows; convexity is checked through non-decreasing secant slopes of
    consecutive grid points.  Returns a copy of ``phi`` carrying the
    certificate.
    """
    u = np.concatenate([[0.0], np.geomspace(u_min, u_max, points)])
    v = phi(u)
    finite = np.isfinite(v)
    stop = u.size if finite.all() else int(np.argmin(finite))
    u, v = u[:stop], v[:stop]
    failures = []
    if stop < 3:
        cert = PhiCertificate(False, False, ("phi not finite near 0",), u_min, 0.0, stop)
        if raise_on_failure:
            raise PhiConditionError(f"{phi.name}: phi not finite near 0")
        return replace(phi, certificate=cert)
    tested_max = float(u[-1])
    if v[0] != 0.0:
        failures.append("phi(0) != 0")
    if np.any(v[1:] <= 0.0):
        failures.append("phi not positive on u > 0")
    if np.any(np.diff(v) < -rtol * np.abs(v[1:])):
        failures.append("phi decreasing")
    if v[-1] <= 1e3 * v[1]:
        failures.append("phi does not grow")
    slopes = np.diff(v) / np.diff(u)
    convex = bool(np.all(np.diff(slopes) >= -rtol * np.maximum(np.abs(slopes[1:]), 1e-300)))
    if not convex:
        failures.append("phi not convex")
    cert = PhiCertificate(not failures, convex, tuple(failures), u_min, tested_max, int(u.size))
    if raise_on_failure and failures:
        raise PhiConditionError(f"{phi.name}: " + "; ".join(failures))
    return replace(phi, certificate=cert)


def sup_inequality_gap(phi: PhiFunction, values: Sequence[float]) -> float:
    """``max_k phi(2 A_k) - phi(max_k A_k)`` for non-negative ``A_k``."""
    a = np.asarray(values, dtype=float)
    if np.any(a < 0):
        raise ValueError("values must be non-negative")
    return float(np.max(phi(2.0 * a)) - phi.scalar(float(a.max())))


# -- domains ------------------------------------------------------------------

@dataclass(frozen=True)
class Domain:
    """Either the real line (with integration half-width ``R``) or ``[a, b]``."""

    kind: str
    a: float = 0.0
    b: float = 1.0
    R: float = 8.0
    density: int = 8

    def __post_init__(self):
        if self.kind == "real_line":
            if not self.R > 0:
                raise ValueError("real-line truncation R must be positive")
        elif self.kind == "interval":
            if not self.a < self.b:
                raise ValueError("interval needs a < b")
        else:
            raise ValueError(f"unknown domain kind {self.kind!r}")

    @property
    def is_real_line(self) -> bool:
        return self.kind == "real_line"

    @property
    def flavor(self) -> str:
        return "real_line" if self.is_real_line else "compact"

    @classmethod
    def real_line(cls, R: float = 8.0, density: int = 8) -> "Domain":
        return cls("real_line", R=float(R), density=density)

    @classmethod
    def interval(cls, a: float, b: float, density: int = 8) -> "Domain":
        return cls("interval", a=float(a), b=float(b), density=density)

    @classmethod
    def parse(cls, spec: str, density: int = 8) -> "Domain":
        """``real``, ``real:R=8`` or ``interval:a:b``."""
        head, _, rest = spec.partition(":")
        if head == "real":
            R = 8.0
            if rest:
                key, _, val = rest.partition("=")
                R = float(val if val else key)
            return cls.real_line(R, density)
        if head == "interval":
            a, b = rest.split(":")
            return cls.interval(float(a), float(b), density)
        raise ValueError(f"malformed domain {spec!r}")

    def spec(self) -> str:
        if self.is_real_line:
            return f"real:R={self.R:g}"
        return f"interval:{self.a:g}:{self.b:g}"


# -- modular ------------------------------------------------------------------

@dataclass(frozen=True)
class ModularReport:
    value: float
    lam: float
    error: float
    finite: bool = True
    tail_bound: float = 0.0
    note: str = ""

    def to_dict(self) -> dict:
        return {"value": self.value if self.finite else "inf", "lambda": self.lam,
                "error": self.error, "tail_bound": self.tail_bound, "note": self.note}


def integration_region(f: Signal, domain: Domain) -> tuple[float, float, str]:
    """Interval carrying the modular of ``f`` and a note on truncation."""
    if not domain.is_real_line:
        return domain.a, domain.b, ""
    if f.support is not None:
        return f.support[0], f.support[1], ""
    return -domain.R, domain.R, f"integrated over [-{domain.R:g}, {domain.R:g}] only"


def modular(phi: PhiFunction, f: Signal, lam: float, domain: Domain,
            atol: float = 1e-11, rtol: float = 1e-12) -> ModularReport:
    """``int phi(lam |f(x)|) dx`` over the domain by adaptive quadrature.

    On the real line a compactly supported ``f`` is integrated over its
    support exactly; a non-zero far-field constant makes the modular
    infinite.  Quadrature non-convergence (a non-integrable blow-up) yields an
    infinite report.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if domain.is_real_line and f.baseline != 0.0:
        if phi.scalar(lam * abs(f.baseline)) > 0.0:
            return ModularReport(math.inf, lam, 0.0, False, note="non-zero far field")
    lo, hi, note = integration_region(f, domain)
    if hi <= lo:
        return ModularReport(0.0, lam, 0.0, True, note=note)
    bp = f.breakpoints or ()
    pieces = max(1, int(math.ceil(hi - lo)))
    r = gauss_kronrod(lambda x: phi(lam * np.abs(f(x))), lo, hi, bp, pieces=pieces,
                      atol=atol, rtol=rtol)
    if not r.finite:
        return ModularReport(math.inf, lam, r.error, False, note="quadrature did not converge")
    return ModularReport(r.value, lam, r.error, True, note=note)


def default_ladder(depth: int = 20) -> list[float]:
    return [2.0 ** -j for j in range(depth + 1)]


@dataclass(frozen=True)
class LambdaScan:
    lam: Optional[float]
    trace: list = field(default_factory=list)

    @property
    def member(self) -> bool:
        return self.lam is not None


def scan_lambda(phi: PhiFunction, f: Signal, domain: Domain,
                ladder: Optional[Sequence[float]] = None) -> LambdaScan:
    """First (largest) ladder value with a finite modular, plus the full trace."""
    ladder = list(default_ladder() if ladder is None else ladder)
    if any(l <= 0 for l in ladder) or any(b >= a for a, b in zip(ladder, ladder[1:])):
        raise ValueError("ladder must be positive and strictly decreasing")
    trace = []
    found = None
    for lam in ladder:
        rep = modular(phi, f, lam, domain)
        trace.append((lam, rep.value))
        if rep.finite and found is None:
            found = lam
    return LambdaScan(found, trace)
