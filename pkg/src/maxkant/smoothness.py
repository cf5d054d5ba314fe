"""Modulus of smoothness, Lipschitz exponents and the Peetre-type K-functional.

Every quantity here replaces an uncomputable sup or inf by a finite family:

* ``modulus`` maximizes over a finite grid of shifts, so it is a lower bound
  of the true modulus; refining the grid can only increase it.
* ``k_functional`` minimizes over a finite family of smooth candidates, so it
  is an upper bound of the true infimum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import BSpline

from .orlicz import Domain, PhiFunction, default_ladder
from .quadrature import gauss_kronrod
from .signals import Signal

DEFAULT_H = 32
OVERLAP = "overlap"
ZERO = "zero"
DERIVATIVE_GRID = 2 ** 14


# -- modulus of smoothness ------------------------------------------------------

def _difference_modular(phi: PhiFunction, f: Signal, lam: float, h: float,
                        domain: Domain, mode: str) -> float:
    """``int phi(lam |f(x+h) - f(x)|) dx`` over the admissible x."""
    if h == 0.0:
        return 0.0
    bp = set()
    if f.breakpoints is not None:
        bp.update(f.breakpoints)
        bp.update(p - h for p in f.breakpoints)
    g = f.func

    if domain.is_real_line:
        if f.support is None:
            lo, hi = -domain.R, domain.R
        else:
            lo = f.support[0] - abs(h)
            hi = f.support[1] + abs(h)
        func = lambda x: phi(lam * np.abs(g(x + h) - g(x)))
    elif mode == OVERLAP:
        lo, hi = domain.a + max(0.0, -h), domain.b - max(0.0, h)
        if hi <= lo:
            return 0.0
        func = lambda x: phi(lam * np.abs(g(x + h) - g(x)))
    elif mode == ZERO:
        a, b = domain.a, domain.b
        lo, hi = a - abs(h), b + abs(h)
        bp.update([a, b, a - h, b - h])

        def restricted(x):
            return np.where((x >= a) & (x <= b), g(np.clip(x, a, b)), 0.0)

        func = lambda x: phi(lam * np.abs(restricted(x + h) - restricted(x)))
    else:
        raise ValueError(f"unknown boundary mode {mode!r}")

    pieces = max(1, int(math.ceil(hi - lo)))
    r = gauss_kronrod(func, lo, hi, sorted(bp), pieces=pieces, atol=1e-12, rtol=1e-11)
    return r.value if r.finite else math.inf


def shift_grid(delta: float, H: int = DEFAULT_H) -> np.ndarray:
    """Positive shifts ``j*delta/H``, j = 1..H.

    The modular of ``f(.+h) - f`` is even in ``h`` (substitute ``x -> x - h``),
    so the negative half of ``{+-j delta/H}`` repeats these values.
    """
    return delta * np.arange(1, H + 1) / H


@dataclass(frozen=True)
class ModulusValue:
    value: float
    argmax: float
    H: int
    finite: bool


def modulus_detail(phi: PhiFunction, f: Signal, lam: float, delta: float, domain: Domain,
                   H: int = DEFAULT_H, mode: str = OVERLAP) -> ModulusValue:
    if delta < 0:
        raise ValueError("delta must be non-negative")
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if delta == 0.0:
        return ModulusValue(0.0, 0.0, H, True)
    best, arg = 0.0, 0.0
    for h in shift_grid(delta, H):
        v = _difference_modular(phi, f, lam, float(h), domain, mode)
        if not math.isfinite(v):
            return ModulusValue(math.inf, float(h), H, False)
        if v > best:
            best, arg = v, float(h)
    return ModulusValue(best, arg, H, True)


def modulus(phi: PhiFunction, f: Signal, lam: float, delta: float, domain: Domain,
            H: int = DEFAULT_H, mode: str = OVERLAP) -> float:
    """``max_{h in {+-j delta/H}} I^phi[lam (f(.+h) - f)]`` (a lower bound of the sup)."""
    return modulus_detail(phi, f, lam, delta, domain, H, mode).value


@dataclass(frozen=True)
class ModulusBracket:
    """The modulus on the declared grid and on a grid ``refine`` times finer."""

    coarse: float
    fine: float
    H: int
    refine: int

    @property
    def finite(self) -> bool:
        return math.isfinite(self.fine)


def modulus_bracket(phi: PhiFunction, f: Signal, lam: float, delta: float, domain: Domain,
                    H: int = DEFAULT_H, refine: int = 4, mode: str = OVERLAP) -> ModulusBracket:
    """Both resolutions from one sweep: the coarse shifts are a subset of the fine ones."""
    if delta == 0.0:
        return ModulusBracket(0.0, 0.0, H, refine)
    values = np.array([_difference_modular(phi, f, lam, float(h), domain, mode)
                       for h in shift_grid(delta, H * refine)])
    coarse = float(values[refine - 1::refine].max())
    return ModulusBracket(coarse, float(values.max()), H, refine)


def dyadic_deltas(depth: int = 16) -> list[float]:
    """``2^-depth, ..., 2^-1`` in increasing order."""
    return [2.0 ** -j for j in range(depth, 0, -1)]


def parse_deltas(spec: str) -> list[float]:
    """``dyadic:<depth>`` or a comma-separated list."""
    if spec.startswith("dyadic"):
        _, _, depth = spec.partition(":")
        return dyadic_deltas(int(depth) if depth else 16)
    return sorted(float(v) for v in spec.split(","))


@dataclass(frozen=True)
class SmoothnessCurve:
    lam: float
    deltas: tuple[float, ...]
    values: tuple[float, ...]
    H: int = DEFAULT_H
    mode: str = OVERLAP

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.deltas, self.values))


def smoothness_curve(phi: PhiFunction, f: Signal, lam: float, deltas: Sequence[float],
                     domain: Domain, H: int = DEFAULT_H, mode: str = OVERLAP) -> SmoothnessCurve:
    deltas = sorted(float(d) for d in deltas)
    values = [modulus(phi, f, lam, d, domain, H, mode) for d in deltas]
    return SmoothnessCurve(lam, tuple(deltas), tuple(values), H, mode)


def vanishing_check(phi: PhiFunction, f: Signal, domain: Domain,
                    ladder: Optional[Sequence[float]] = None, tol: float = 1e-3,
                    depth: int = 16, H: int = DEFAULT_H):
    """First ladder lambda with ``omega(lam f, 2^-depth) < tol`` and its dyadic curve.

    Returns ``(None, None)`` when no ladder value shows vanishing at this
    resolution.
    """
    ladder = default_ladder() if ladder is None else ladder
    delta_min = 2.0 ** -depth
    for lam in ladder:
        if modulus(phi, f, lam, delta_min, domain, H) < tol:
            return lam, smoothness_curve(phi, f, lam, dyadic_deltas(depth), domain, H)
    return None, None


# -- Lipschitz exponents ----------------------------------------------------

@dataclass(frozen=True)
class LipschitzFit:
    nu: float
    constant: float
    residual: float
    delta_range: tuple[float, float]
    raw_slope: float


def fit_lipschitz(curve: SmoothnessCurve) -> LipschitzFit:
    """Log-log least squares on the smallest-delta half of a curve."""
    pts = [(d, v) for d, v in curve.points if d > 0 and v > 0 and math.isfinite(v)]
    if len(pts) < 4:
        raise ValueError("need at least 4 positive curve points to fit an exponent")
    pts.sort()
    pts = pts[:max(4, len(pts) // 2)]
    x = np.log([p[0] for p in pts])
    y = np.log([p[1] for p in pts])
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    nu = float(min(max(slope, np.finfo(float).tiny), 1.0))
    return LipschitzFit(nu, float(math.exp(intercept)), resid,
                        (pts[0][0], pts[-1][0]), float(slope))


# -- K-functional -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Candidate:
    """A smooth non-negative competitor ``g`` with its sup-derivative."""

    name: str
    signal: Signal
    derivative_norm: float
    c1: bool = True


def _steklov_spline(f: Signal, a: float, b: float, h: float) -> Candidate:
    """Quadratic B-spline with Steklov-mean coefficients of the even extension of f.

    The spline is C^1, non-negative when f is, and its derivative is the
    piecewise-linear interpolant of ``(c_j - c_{j-1}) / h`` -- so the sup of
    ``|g'|`` is attained at a knot and is exact.
    """
    ext = f.folded(a, b)
    m = int(math.ceil((b - a) / h))
    knots = a + h * np.arange(-2, m + 3)
    centers = knots[:-3] + 1.5 * h
    coef = ext.means(centers - 0.5 * h, centers + 0.5 * h)
    coef = np.maximum(coef, 0.0)
    spl = BSpline(knots, coef, 2, extrapolate=False)
    dspl = spl.derivative()
    slopes = np.abs(np.diff(coef)) / h
    grid = np.linspace(a, b, DERIVATIVE_GRID + 1)
    dnorm = max(float(slopes.max(initial=0.0)), float(np.nanmax(np.abs(dspl(grid)))))

    def g(x):
        x = np.clip(np.asarray(x, dtype=float), a, b)
        return spl(x)

    bp = tuple(float(t) for t in knots if a < t < b)
    sig = Signal(f"steklov(h={h:.6g})", g, support=None, breakpoints=bp, nonneg=True,
                 lower_bound=0.0, derivative=lambda x: dspl(np.clip(x, a, b)))
    return Candidate(sig.name, sig, dnorm)


def _derivative_norm(f: Signal, a: float, b: float) -> float:
    grid = np.linspace(a, b, DERIVATIVE_GRID + 1)
    if f.breakpoints:
        grid = np.union1d(grid, [p for p in f.breakpoints if a <= p <= b])
    return float(np.max(np.abs(f.derivative(grid))))


class SmoothingFamily:
    """Candidate competitors for the K-functional of ``f`` on ``[a, b]``.

    Contains ``g = 0``, ``g = f`` when f carries a derivative, and Steklov
    splines at bandwidths ``2^(-j/per_octave)`` between ``2^-1`` and
    ``2^-max_octave``.  Objective modulars are cached per ``(phi, lam)``.
    """

    def __init__(self, f: Signal, domain: Domain, max_octave: int = 12, per_octave: int = 2):
        if domain.is_real_line:
            raise ValueError("the K-functional family is built on an interval")
        a, b = domain.a, domain.b
        probe = f(np.linspace(a, b, 4097))
        if (f.lower_bound is not None and f.lower_bound < 0) or np.any(probe < -1e-12):
            raise ValueError(f"{f.name} takes negative values; shift it by its infimum first")
        self.f = f
        self.domain = domain
        cands = [Candidate("zero", Signal("zero", lambda x: np.zeros_like(np.asarray(x, float)),
                                          nonneg=True, lower_bound=0.0), 0.0)]
        if f.derivative is not None:
            cands.append(Candidate("self", f, _derivative_norm(f, a, b),
                                   c1=bool(f.meta.get("c1", False))))
        for j in range(per_octave, max_octave * per_octave + 1):
            cands.append(_steklov_spline(f, a, b, 2.0 ** (-j / per_octave)))
        self.candidates: list[Candidate] = cands
        self._cache: dict = {}

    def distance(self, phi: PhiFunction, lam: float) -> np.ndarray:
        """``I^phi[lam (f - g)]`` for every candidate."""
        key = (id(phi), phi.name, float(lam))
        if key not in self._cache:
            a, b = self.domain.a, self.domain.b
            out = []
            f = self.f
            for c in self.candidates:
                g = c.signal
                bp = sorted(set(f.breakpoints or ()) | set(g.breakpoints or ()))
                r = gauss_kronrod(lambda x: phi(lam * np.abs(f(x) - g(x))), a, b, bp,
                                  pieces=max(1, int(math.ceil(b - a))), atol=1e-12, rtol=1e-11)
                out.append(r.value if r.finite else math.inf)
            self._cache[key] = np.array(out)
        return self._cache[key]


@dataclass(frozen=True)
class KFunctionalEstimate:
    """Upper estimate of the K-functional over a finite candidate family."""

    lam: float
    delta: float
    value: float
    witness: str
    witness_derivative_norm: float
    witness_distance: float
    candidates: int

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "delta": self.delta, "value": self.value,
                "orientation": "upper bound of the infimum over C1 non-negative g",
                "witness": {"name": self.witness,
                            "derivative_sup_norm": self.witness_derivative_norm,
                            "modular_distance": self.witness_distance},
                "candidates": self.candidates}


def k_functional(phi: PhiFunction, f: Signal, lam: float, delta: float, domain: Domain,
                 family: Optional[SmoothingFamily] = None) -> KFunctionalEstimate:
    """``min_g I^phi[lam (f - g)] + delta * phi(||g'||_inf)`` over the family."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    if not lam > 0:
        raise ValueError("lambda must be positive")
    family = SmoothingFamily(f, domain) if family is None else family
    if not family.candidates:
        raise ValueError("empty candidate family")
    dist = family.distance(phi, lam)
    dn = np.array([c.derivative_norm for c in family.candidates])
    obj = dist + delta * phi(dn)
    i = int(np.argmin(obj))
    c = family.candidates[i]
    return KFunctionalEstimate(lam, delta, float(obj[i]), c.name, c.derivative_norm,
                               float(dist[i]), len(family.candidates))
