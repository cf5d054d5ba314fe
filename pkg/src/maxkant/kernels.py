"""Generalized kernels: evaluation, norms, moments and condition checks.

A kernel is any bounded integrable ``chi`` that is bounded away from zero
near the origin, has a finite generalized absolute moment of some positive
order, and whose tail mass shrinks polynomially under dilation.  The
functions here measure each of those properties numerically and record how
they were measured (grid steps, truncation windows, error estimates).
"""

from __future__ import annotations

import csv
import functools
import logging
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .quadrature import gauss_kronrod

log = logging.getLogger(__name__)

REAL_LINE = "real_line"
COMPACT = "compact"
CHI2_THRESHOLD = 1e-8
GRID_STEP = 1e-3
L1_WINDOW = 1.0e4
ENVELOPE_WINDOW = 256.0


class KernelConditionError(ValueError):
    """A kernel failed one of the conditions required of generalized kernels."""


@dataclass(frozen=True)
class QuadratureSpec:
    window: float = L1_WINDOW
    atol: float = 1e-10
    grid_step: float = GRID_STEP


@dataclass(frozen=True)
class Norms:
    sup_norm: float
    l1_norm: float
    sup_argmax: float
    l1_error: float
    l1_window: float
    grid_step: float


@dataclass(frozen=True)
class Chi4Report:
    alpha: float
    samples: list
    M: float
    gamma: float
    n_threshold: int
    gamma_predicted: Optional[float] = None
    residual: float = 0.0
    compact: bool = False

    @property
    def gamma_consistent(self) -> Optional[bool]:
        if self.gamma_predicted is None:
            return None
        if self.compact:
            return True
        return abs(self.gamma - self.gamma_predicted) <= 0.1

    def bound(self, n: float) -> float:
        """The fitted envelope ``M n^-gamma`` (0 for exactly vanishing tails)."""
        if self.M == 0.0:
            return 0.0
        return self.M * float(n) ** (-self.gamma)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "M": self.M,
            "gamma": _json_float(self.gamma),
            "n_threshold": self.n_threshold,
            "gamma_predicted": _json_float(self.gamma_predicted),
            "residual": self.residual,
            "compact": self.compact,
            "samples": [[int(n), t] for n, t in self.samples],
        }


def _json_float(v):
    if v is None:
        return None
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


@dataclass(frozen=True, eq=False)
class Kernel:
    """A generalized kernel ``chi`` with lazily cached measurements.

    ``support`` is a closed interval outside of which ``chi`` vanishes;
    ``decay_exponent`` asserts ``|chi(x)| = O(|x|^-theta)``.  Exactly one of
    the two must describe the tail for the L1 norm to be computable.
    ``breakpoints`` lists kinks/zeros that quadrature should respect.
    """

    name: str
    func: Callable[[np.ndarray], np.ndarray]
    support: Optional[tuple[float, float]] = None
    decay_exponent: Optional[float] = None
    breakpoints: tuple[float, ...] = ()
    panel_width: float = 1.0
    quad: QuadratureSpec = field(default_factory=QuadratureSpec)

    def __post_init__(self):
        if self.decay_exponent is not None and self.decay_exponent <= 1.0:
            raise KernelConditionError(f"{self.name}: decay exponent must exceed 1")

    def __call__(self, x):
        with np.errstate(all="ignore"):
            return np.asarray(self.func(np.asarray(x, dtype=float)), dtype=float)

    @property
    def compact(self) -> bool:
        return self.support is not None

    @property
    def radius(self) -> float:
        """Half-width of the smallest symmetric interval holding the support."""
        if self.support is None:
            return math.inf
        return max(abs(self.support[0]), abs(self.support[1]))

    # cached measurements; computed on first use, never mutated afterwards

    @cached_property
    def norms(self) -> Norms:
        return compute_norms(self, self.quad)

    @property
    def sup_norm(self) -> float:
        return self.norms.sup_norm

    @property
    def l1_norm(self) -> float:
        return self.norms.l1_norm

    @cached_property
    def _a_chi(self) -> dict:
        return {flavor: infimum_on_window(self, flavor, self.quad.grid_step)
                for flavor in (REAL_LINE, COMPACT)}

    def a_chi(self, flavor: str = REAL_LINE) -> float:
        """The positive infimum near the origin; raises if it is not positive."""
        value = self._a_chi[flavor]
        if value <= CHI2_THRESHOLD:
            raise KernelConditionError(
                f"{self.name}: inf on the {flavor} window is {value:.3g} <= {CHI2_THRESHOLD:g}")
        return value

    def passes_chi2(self, flavor: str) -> bool:
        return self._a_chi[flavor] > CHI2_THRESHOLD

    @functools.lru_cache(maxsize=None)
    def moment(self, beta: float) -> float:
        return generalized_moment(self, beta, self.quad.grid_step)

    @cached_property
    def decay_constant(self) -> float:
        """sup of ``|chi(u)| |u|^theta`` over ``1 <= |u| <= 256`` (grid estimate)."""
        theta = self.decay_exponent
        if theta is None:
            return 0.0
        u = np.arange(1.0, ENVELOPE_WINDOW, self.quad.grid_step)
        u = np.concatenate([-u[::-1], u])
        return float(np.max(np.abs(self(u)) * np.abs(u) ** theta)) * (1.0 + 1e-9)

    def envelope(self, u) -> np.ndarray:
        """Upper bound for ``sup_{|v| >= |u|} |chi(v)|``."""
        u = np.abs(np.asarray(u, dtype=float))
        if self.support is not None:
            return np.where(u > self.radius, 0.0, self.sup_norm)
        theta = self.decay_exponent
        if theta is None:
            return np.full(u.shape, self.sup_norm)
        with np.errstate(divide="ignore"):
            tail = self.decay_constant * np.where(u > 0, u, 1.0) ** (-theta)
        return np.where(u >= 1.0, np.minimum(tail, self.sup_norm), self.sup_norm)

    def reach(self, level: float) -> float:
        """A radius beyond which ``|chi|`` stays below ``level``."""
        if self.support is not None:
            return self.radius
        if self.decay_exponent is None or level <= 0:
            return math.inf
        return max(1.0, (self.decay_constant / level) ** (1.0 / self.decay_exponent))

    @cached_property
    def tail_mass(self) -> Callable[[float], float]:
        return functools.lru_cache(maxsize=None)(lambda t: _tail_mass(self, t))

    def report(self, alpha: float = 0.5, betas: Sequence[float] = (0.0, 1.0),
               n_grid: Optional[Sequence[int]] = None) -> dict:
        """Verification summary suitable for JSON output."""
        chi4 = verify_chi4(self, alpha, n_grid or default_chi4_grid())
        out = {
            "name": self.name,
            "sup_norm": self.sup_norm,
            "l1_norm": self.l1_norm,
            "l1_error": self.norms.l1_error,
            "a_chi": self._a_chi[REAL_LINE],
            "a_chi_compact": self._a_chi[COMPACT],
            "chi2": {flavor: self.passes_chi2(flavor) for flavor in (REAL_LINE, COMPACT)},
            "moments": {f"{b:g}": self.moment(float(b)) for b in betas},
            "chi4": chi4.to_dict(),
            "grid_step": self.quad.grid_step,
            "decay_exponent": self.decay_exponent,
            "support": list(self.support) if self.support else None,
        }
        return out


# -- operations ------------------------------------------------------------

def eval_kernel(kernel: Kernel, x: float) -> float:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"kernel argument must be finite, got {x}")
    return float(kernel(np.array([x]))[0])


def _panel_edges(kernel: Kernel, lo: float, hi: float) -> tuple[int, list[float]]:
    pieces = max(1, int(math.ceil((hi - lo) / kernel.panel_width)))
    return pieces, list(kernel.breakpoints)


def _abs_integral(kernel: Kernel, lo: float, hi: float, atol: float):
    pieces, bp = _panel_edges(kernel, lo, hi)
    return gauss_kronrod(lambda x: np.abs(kernel(x)), lo, hi, bp, pieces=pieces,
                         atol=atol, rtol=1e-13)


def _tail_estimate(kernel: Kernel, window: float, side: int) -> tuple[float, float]:
    """Mass of ``|chi|`` beyond ``side*window`` from its averaged power-law envelope.

    Returns (estimate, bound): the estimate uses the mean of ``|chi(u)||u|^theta``
    over the last half of the window, the bound its maximum.
    """
    theta = kernel.decay_exponent
    a, b = 0.5 * window, window
    if side < 0:
        a, b = -b, -a
    u = np.linspace(a, b, 20001)
    g = np.abs(kernel(u)) * np.abs(u) ** theta
    r = gauss_kronrod(lambda x: np.abs(kernel(x)) * np.abs(x) ** theta, a, b,
                      kernel.breakpoints, pieces=int(math.ceil((b - a) / kernel.panel_width)),
                      atol=1e-12, rtol=1e-12)
    mean = r.value / (b - a)
    scale = window ** (1.0 - theta) / (theta - 1.0)
    return mean * scale, float(g.max()) * scale


def compute_norms(kernel: Kernel, quad: QuadratureSpec = QuadratureSpec()) -> Norms:
    """Sup norm by grid search plus bounded refinement; L1 norm by adaptive quadrature.

    For non-compact kernels the L1 integral runs over ``[-window, window]`` and
    the remainder is closed with the power-law tail estimate; the reported
    error includes the gap between that estimate and a rigorous envelope bound.
    """
    if kernel.support is not None:
        lo, hi = kernel.support
    elif kernel.decay_exponent is not None:
        lo, hi = -quad.window, quad.window
    else:
        raise KernelConditionError(
            f"{kernel.name}: no support and no decay exponent, L1 tail cannot be closed")

    span = min(hi, 64.0) - max(lo, -64.0)
    xs = np.linspace(max(lo, -64.0), min(hi, 64.0), int(round(span / quad.grid_step)) + 1)
    vals = np.abs(kernel(xs))
    if not np.all(np.isfinite(vals)):
        raise KernelConditionError(f"{kernel.name}: kernel is not finite on the grid")
    i = int(np.argmax(vals))
    x_best, sup = float(xs[i]), float(vals[i])
    res = minimize_scalar(lambda t: -abs(eval_kernel(kernel, t)),
                          bounds=(x_best - quad.grid_step, x_best + quad.grid_step),
                          method="bounded", options={"xatol": 1e-12})
    if -res.fun > sup:
        sup, x_best = float(-res.fun), float(res.x)

    r = _abs_integral(kernel, lo, hi, quad.atol)
    if not r.converged:
        raise KernelConditionError(f"{kernel.name}: L1 quadrature did not converge")
    l1, err = r.value, r.error
    if kernel.support is None:
        for side in (-1, 1):
            est, bound = _tail_estimate(kernel, quad.window, side)
            l1 += est
            err += bound - est
    return Norms(sup, l1, x_best, err, float(hi - lo), quad.grid_step)


def infimum_on_window(kernel: Kernel, domain_flavor: str = REAL_LINE,
                      grid_step: float = GRID_STEP) -> float:
    """inf of chi over [-1/2, 1/2] (real line) or [-3/2, 3/2] (compact)."""
    if domain_flavor == REAL_LINE:
        w = 0.5
    elif domain_flavor == COMPACT:
        w = 1.5
    else:
        raise ValueError(f"unknown domain flavor {domain_flavor!r}")
    xs = np.linspace(-w, w, int(round(2 * w / grid_step)) + 1)
    vals = kernel(xs)
    i = int(np.argmin(vals))
    best = float(vals[i])
    lo, hi = max(-w, xs[i] - grid_step), min(w, xs[i] + grid_step)
    res = minimize_scalar(lambda t: eval_kernel(kernel, t), bounds=(lo, hi),
                          method="bounded", options={"xatol": 1e-12})
    return min(best, float(res.fun))


def _moment_on(kernel: Kernel, x: np.ndarray, beta: float, kmin: int, kmax: int) -> np.ndarray:
    k = np.arange(kmin, kmax + 1, dtype=float)
    u = x[:, None] - k[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.abs(u) ** beta if beta > 0 else np.ones_like(u)
    return np.max(np.abs(kernel(u)) * w, axis=1)


def generalized_moment(kernel: Kernel, beta: float, grid_step: float = GRID_STEP) -> float:
    """``m_beta = sup_x max_k |chi(x-k)| |x-k|^beta`` with x restricted to [0, 1].

    The k-range is grown until every omitted term is provably below the
    running maximum (compactly supported kernels use their support exactly).
    """
    beta = float(beta)
    if beta < 0:
        raise ValueError("moment order must be non-negative")
    theta = kernel.decay_exponent
    lower_bound_only = False
    if kernel.support is None:
        if theta is None:
            raise KernelConditionError(f"{kernel.name}: no decay information for moments")
        if beta > theta:
            warnings.warn(f"{kernel.name}: moment of order {beta} > decay exponent {theta} "
                          "may diverge", RuntimeWarning, stacklevel=2)
            return math.inf
        lower_bound_only = beta == theta

    xs = np.linspace(0.0, 1.0, int(round(1.0 / grid_step)) + 1)
    if kernel.support is not None:
        s0, s1 = kernel.support
        kmin, kmax = int(math.floor(-s1)) - 1, int(math.ceil(1.0 - s0)) + 1
        vals = _moment_on(kernel, xs, beta, kmin, kmax)
    else:
        width = 4
        while True:
            kmin, kmax = -width, width + 1
            vals = _moment_on(kernel, xs, beta, kmin, kmax)
            best = float(vals.max())
            # omitted terms have |x-k| >= width
            omitted = kernel.decay_constant * width ** (beta - theta)
            if omitted < best or lower_bound_only and width >= 1024:
                break
            width *= 2
        if lower_bound_only:
            log.warning("%s: m_%g equals the decay order; value is a window maximum",
                        kernel.name, beta)

    i = int(np.argmax(vals))
    best = float(vals[i])
    lo, hi = max(0.0, xs[i] - grid_step), min(1.0, xs[i] + grid_step)
    res = minimize_scalar(lambda t: -float(_moment_on(kernel, np.array([t]), beta, kmin, kmax)[0]),
                          bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
    return max(best, float(-res.fun))


def _tail_mass(kernel: Kernel, t: float) -> float:
    """Integral of ``|chi|`` over ``|u| > t``."""
    t = float(t)
    if kernel.support is not None:
        s0, s1 = kernel.support
        total = 0.0
        if s1 > t:
            total += _abs_integral(kernel, t, s1, 1e-13).value
        if s0 < -t:
            total += _abs_integral(kernel, s0, -t, 1e-13).value
        return total
    window = max(kernel.quad.window, 4.0 * t)
    total = 0.0
    for side in (-1, 1):
        est, _ = _tail_estimate(kernel, window, side)
        total += est
    if t < window:
        total += _abs_integral(kernel, t, window, 1e-13).value
        total += _abs_integral(kernel, -window, -t, 1e-13).value
    return total


def default_chi4_grid() -> list[int]:
    return [2 ** j for j in range(2, 17)]


def verify_chi4(kernel: Kernel, alpha: float, n_grid: Sequence[int]) -> Chi4Report:
    """Tail-mass decay ``n * int_{|y| > n^-alpha} |chi(n y)| dy <= M n^-gamma``.

    The tail values are ``int_{|u| > n^(1-alpha)} |chi(u)| du``.  gamma is the
    least-squares slope on the log-log scale; M is the smallest constant that
    makes ``M n^-gamma`` dominate every sampled tail from ``n_threshold`` on,
    so the recorded envelope holds on the whole grid.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    ns = [int(n) for n in n_grid]
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise ValueError("n_grid must be strictly increasing")
    tails = np.array([kernel.tail_mass(n ** (1.0 - alpha)) for n in ns])
    samples = list(zip(ns, tails.tolist()))
    if np.any(tails < -1e-12):
        raise KernelConditionError(f"{kernel.name}: negative tail mass")
    if np.any(np.diff(tails) > 1e-12 * max(tails.max(), 1.0)):
        raise KernelConditionError(f"{kernel.name}: (chi4) tails are not non-increasing")

    predicted = None
    if kernel.decay_exponent is not None:
        predicted = (1.0 - alpha) * (kernel.decay_exponent - 1.0)

    positive = tails > 1e-15
    if kernel.support is not None:
        # exact zeros from some n on: any M works, gamma unbounded
        zero_from = len(ns)
        for i in range(len(ns) - 1, -1, -1):
            if positive[i]:
                break
            zero_from = i
        if zero_from < len(ns):
            return Chi4Report(alpha, samples, 0.0, math.inf, ns[zero_from],
                              math.inf if predicted is None else predicted, 0.0, compact=True)

    if positive.sum() < 2:
        raise KernelConditionError(f"{kernel.name}: not enough positive tails to fit (chi4)")
    logn = np.log(np.array(ns, dtype=float)[positive])
    logt = np.log(tails[positive])
    slope, intercept = np.polyfit(logn, logt, 1)
    resid = float(np.sqrt(np.mean((logt - (slope * logn + intercept)) ** 2)))
    gamma = -float(slope)
    if gamma <= 0:
        raise KernelConditionError(f"{kernel.name}: fitted gamma {gamma:.3g} is not positive")
    M = float(np.max(tails * np.array(ns, dtype=float) ** gamma)) * (1.0 + 1e-12)
    return Chi4Report(alpha, samples, M, gamma, ns[0], predicted, resid)


def discrete_moment_of_indicator(closed: bool = True, points: int = 4001) -> float:
    """``sup_x sum_k tau(x - k)`` for tau the indicator of [0, 1] (or [0, 1))."""
    xs = np.linspace(0.0, 1.0, points)
    k = np.arange(-3, 4)
    u = xs[:, None] - k[None, :]
    inside = (u >= 0.0) & ((u <= 1.0) if closed else (u < 1.0))
    return float(inside.sum(axis=1).max())


# -- built-in kernels -------------------------------------------------------

def fejer() -> Kernel:
    """F(x) = 1/2 sinc^2(x/2) with the normalized sinc."""
    return Kernel(name="fejer", func=lambda x: 0.5 * np.sinc(0.5 * x) ** 2,
                  decay_exponent=2.0, panel_width=2.0)


def bspline(order: int) -> Kernel:
    """Centered cardinal B-spline of the given order (``bspline(2)`` is the hat)."""
    s = int(order)
    if s < 1:
        raise ValueError("B-spline order must be >= 1")
    half = 0.5 * s
    coeffs = [(-1) ** j * math.comb(s, j) for j in range(s + 1)]
    fact = math.factorial(s - 1)

    def func(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for j, c in enumerate(coeffs):
            t = x + half - j
            if s == 1:
                out += c * (t >= 0)
            else:
                out += c * np.where(t > 0, t, 0.0) ** (s - 1)
        out /= fact
        return np.where(np.abs(x) < half, np.maximum(out, 0.0), 0.0)

    return Kernel(name=f"bspline:{s}", func=func, support=(-half, half),
                  breakpoints=tuple(-half + j for j in range(s + 1)))


def box(half_width: float = 1.0, value: float = 1.0) -> Kernel:
    """Constant ``value`` on [-w, w], zero outside."""
    w = float(half_width)
    return Kernel(name=f"box:{w:g}",
                  func=lambda x: np.where(np.abs(x) <= w, value, 0.0),
                  support=(-w, w), breakpoints=(-w, w))


def tabulated(xs, values, name: str = "table") -> Kernel:
    """Linear interpolation of ``(xs, values)``, zero outside the table."""
    xs = np.asarray(xs, dtype=float)
    values = np.asarray(values, dtype=float)
    if xs.size < 2 or np.any(np.diff(xs) <= 0):
        raise ValueError("tabulated kernel needs increasing abscissae")
    return Kernel(name=name,
                  func=lambda x: np.interp(x, xs, values, left=0.0, right=0.0),
                  support=(float(xs[0]), float(xs[-1])),
                  breakpoints=tuple(float(v) for v in xs))


def load_kernel_csv(path: str | Path) -> Kernel:
    xs, vals = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                xs.append(float(row[0]))
                vals.append(float(row[1]))
            except ValueError:
                continue
    return tabulated(xs, vals, name=f"file:{path}")


@functools.lru_cache(maxsize=None)
def get_kernel(spec: str) -> Kernel:
    """Resolve ``fejer``, ``bspline:<s>``, ``box[:w]`` or ``file:<path>``.

    Instances are cached so their measurements are computed once per process.
    """
    name, _, rest = spec.partition(":")
    if name == "fejer":
        return fejer()
    if name == "bspline":
        return bspline(int(rest or 2))
    if name == "box":
        return box(float(rest or 1.0))
    if name == "file":
        return load_kernel_csv(rest)
    raise KeyError(f"unknown kernel {spec!r}")
