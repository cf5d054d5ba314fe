"""Max-product Kantorovich sampling operators.

For a kernel ``chi`` and ``n >= 1``::

    K_n f(x) = max_k chi(nx - k) * [n int_{k/n}^{(k+1)/n} f]  /  max_k chi(nx - k)

with k over all integers on the real line and over
``ceil(na) <= k <= floor(nb) - 1`` on ``[a, b]``.  Also provided: the
auxiliary operator used to compare with shifted means, the shifted variant
for signals bounded below, and the linear (sum-based) Kantorovich baseline.

Evaluation is vectorized over x.  On the real line the index set is finite in
practice: a compactly supported signal only has non-zero means on its support
cells (every other cell contributes an exact 0 to the numerator), and the
denominator maximum always sits within the radius where ``|chi|`` can exceed
``a_chi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .kernels import Kernel, KernelConditionError
from .orlicz import Domain, ModularReport, PhiFunction
from .quadrature import gauss_legendre
from .signals import Signal, sup_abs_estimate

GUARD_TOL = 1e-8
TRUNCATION_TOL = 1e-10
MAX_WINDOW = 4096
_CHUNK = 1 << 21


class OperatorGuardError(ValueError):
    """The max-product denominator fell below ``a_chi`` (n too small or bad kernel)."""


class BaselineUnavailable(ValueError):
    """The linear baseline's denominator is too close to zero for this kernel."""


class ContractViolation(ValueError):
    """A signal broke its declared lower bound."""


def kantorovich_mean(f: Signal, k: int, n: int) -> float:
    """``n * int_{k/n}^{(k+1)/n} f(t) dt``."""
    if n < 1:
        raise ValueError("n must be a positive integer")
    return float(f.means(np.array([k / n]), np.array([(k + 1) / n]))[0])


def cell_means(f: Signal, n: int, ks: np.ndarray) -> np.ndarray:
    ks = np.asarray(ks, dtype=float)
    return f.means(ks / n, (ks + 1.0) / n)


def interval_threshold(kernel: Kernel, a: float, b: float, points: int = 2049,
                       n_max: int = 4096) -> int:
    """Smallest n with a non-empty index set and denominator >= a_chi on a grid of [a, b]."""
    a_chi = kernel.a_chi("compact")
    x = np.linspace(a, b, points)
    for n in range(1, n_max + 1):
        ks = _interval_indices(n, a, b)
        if ks.size == 0:
            continue
        den = _dense_max(kernel, n * x, ks)
        if np.all(den >= a_chi - GUARD_TOL):
            return n
    raise OperatorGuardError(f"{kernel.name}: no n <= {n_max} satisfies the denominator guard")


def _interval_indices(n: int, a: float, b: float) -> np.ndarray:
    lo = math.ceil(n * a - 1e-12)
    hi = math.floor(n * b + 1e-12) - 1
    return np.arange(lo, hi + 1)


def _rows_per_chunk(width: int) -> int:
    return max(1, _CHUNK // max(width, 1))


def _dense_max(kernel: Kernel, nx: np.ndarray, ks: np.ndarray,
               weights: Optional[np.ndarray] = None) -> np.ndarray:
    """``max_k chi(nx - k) * w_k`` over the listed k, chunked over x."""
    out = np.empty(nx.size)
    ks = ks.astype(float)
    step = _rows_per_chunk(ks.size)
    for s in range(0, nx.size, step):
        vals = kernel(nx[s:s + step, None] - ks[None, :])
        if weights is not None:
            vals = vals * weights[None, :]
        out[s:s + step] = vals.max(axis=1)
    return out


def _band(kernel: Kernel, nx: np.ndarray, width: int, k_lo: int, weights: np.ndarray,
          valid: Optional[np.ndarray] = None, reduce=np.max) -> np.ndarray:
    """Reduce ``chi(nx-k) * weights[k - k_lo]`` over ``|floor(nx) - k| <= width``.

    ``valid`` masks indices outside the admissible set.
    """
    offs = np.arange(-width, width + 1)
    out = np.empty(nx.size)
    step = _rows_per_chunk(offs.size)
    for s in range(0, nx.size, step):
        y = nx[s:s + step]
        k = np.floor(y)[:, None].astype(np.int64) + offs[None, :]
        idx = k - k_lo
        inside = (idx >= 0) & (idx < weights.size)
        idx_c = np.clip(idx, 0, weights.size - 1)
        vals = kernel(y[:, None] - k) * np.where(inside, weights[idx_c], 0.0)
        if valid is not None:
            ok = inside & valid[idx_c]
            vals = np.where(ok, vals, -np.inf if reduce is np.max else np.inf)
        out[s:s + step] = reduce(vals, axis=1)
    return out


@dataclass(frozen=True, eq=False)
class MaxProductOperator:
    """``K_n^chi`` on a domain; construction validates the index set and guard."""

    kernel: Kernel
    n: int
    domain: Domain
    check_threshold: bool = True

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("n must be a positive integer")
        self.a_chi  # raises if (chi2) fails for this flavor
        if not self.domain.is_real_line:
            d = self.domain
            if self.index_set.size == 0:
                raise OperatorGuardError(
                    f"n={self.n}: index set for [{d.a:g},{d.b:g}] is empty "
                    f"(need ceil(n a) <= floor(n b) - 1)")
            if self.check_threshold:
                need = self.threshold
                if self.n < need:
                    raise OperatorGuardError(
                        f"n={self.n} is below the interval threshold n={need} for "
                        f"{self.kernel.name} on [{d.a:g},{d.b:g}]")

    @cached_property
    def a_chi(self) -> float:
        return self.kernel.a_chi(self.domain.flavor)

    @cached_property
    def threshold(self) -> int:
        if self.domain.is_real_line:
            return 1
        return interval_threshold(self.kernel, self.domain.a, self.domain.b)

    @cached_property
    def index_set(self) -> Optional[np.ndarray]:
        if self.domain.is_real_line:
            return None
        return _interval_indices(self.n, self.domain.a, self.domain.b)

    @cached_property
    def den_width(self) -> int:
        """Half-width (in k) holding every term that can attain the denominator max."""
        k = self.kernel
        if k.compact:
            return int(math.ceil(k.radius)) + 1
        return int(math.ceil(k.reach(0.5 * self.a_chi))) + 1

    def truncation_window(self, sup_f: float) -> tuple[int, float]:
        """Half-width for non-compact signals and the bound on omitted terms."""
        k = self.kernel
        if k.compact:
            return int(math.ceil(k.radius)) + 1, 0.0
        if sup_f == 0:
            return self.den_width, 0.0
        w = int(math.ceil(k.reach(TRUNCATION_TOL / sup_f))) + 1
        w = min(max(w, self.den_width), MAX_WINDOW)
        return w, float(sup_f * k.envelope(w - 1))

    # -- core evaluation -----------------------------------------------------

    def _denominator(self, nx: np.ndarray) -> np.ndarray:
        if self.domain.is_real_line:
            kmin = int(np.floor(nx.min())) - self.den_width
            kmax = int(np.floor(nx.max())) + self.den_width
            ones = np.ones(kmax - kmin + 1)
            return _band(self.kernel, nx, self.den_width, kmin, ones)
        ks = self.index_set
        if self.kernel.compact:
            ones = np.ones(ks.size)
            return _band(self.kernel, nx, self.den_width, int(ks[0]), ones,
                         valid=np.ones(ks.size, dtype=bool))
        return _dense_max(self.kernel, nx, ks)

    def _numerator(self, f: Signal, nx: np.ndarray) -> np.ndarray:
        kern = self.kernel
        if not self.domain.is_real_line:
            ks = self.index_set
            means = cell_means(f, self.n, ks)
            if kern.compact:
                return _band(kern, nx, self.den_width, int(ks[0]), means,
                             valid=np.ones(ks.size, dtype=bool))
            return _dense_max(kern, nx, ks, means)

        if f.compact:
            s0, s1 = f.support
            k0 = int(math.floor(self.n * s0 + 1e-12)) - 1
            k1 = int(math.ceil(self.n * s1 - 1e-12))
            ks = np.arange(k0, k1 + 1)
            means = cell_means(f, self.n, ks)
            if kern.compact:
                num = _band(kern, nx, self.den_width, k0, means)
            else:
                num = _dense_max(kern, nx, ks, means)
            # all other cells have mean 0 and contribute exactly 0
            return np.maximum(num, 0.0)

        sup_f = sup_abs_estimate(f, nx.min() / self.n - 1, nx.max() / self.n + 1)
        width, _ = self.truncation_window(sup_f)
        kmin = int(np.floor(nx.min())) - width
        kmax = int(np.floor(nx.max())) + width
        means = cell_means(f, self.n, np.arange(kmin, kmax + 1))
        num = _band(kern, nx, width, kmin, means)
        if kern.compact:
            return num
        # the omitted far terms have sup equal to the far-field limit 0
        return np.maximum(num, 0.0) if f.baseline >= 0 else num

    def _guard(self, den: np.ndarray, nx: np.ndarray) -> None:
        bad = den < self.a_chi - GUARD_TOL
        if np.any(bad):
            i = int(np.argmax(bad))
            raise OperatorGuardError(
                f"{self.kernel.name}, n={self.n}: denominator {den[i]:.3g} < a_chi="
                f"{self.a_chi:.3g} at x={nx[i] / self.n:.6g} ((chi2) or n-threshold violated)")

    def _check_x(self, x: np.ndarray) -> None:
        if not np.all(np.isfinite(x)):
            raise ValueError("evaluation points must be finite")
        if not self.domain.is_real_line:
            d = self.domain
            if np.any((x < d.a - 1e-12) | (x > d.b + 1e-12)):
                raise ValueError(f"evaluation points must lie in [{d.a:g}, {d.b:g}]")

    def apply(self, f: Signal, x):
        """``K_n f(x)`` (array in, array out; scalar in, float out)."""
        scalar = np.ndim(x) == 0
        x = np.atleast_1d(np.asarray(x, dtype=float))
        self._check_x(x)
        if f.lower_bound is not None and f.lower_bound < -1e-15:
            raise ContractViolation(
                f"{f.name} may be negative (lower bound {f.lower_bound:g}); use shifted_apply")
        nx = self.n * x
        den = self._denominator(nx)
        self._guard(den, nx)
        out = self._numerator(f, nx) / den
        return float(out[0]) if scalar else out

    def auxiliary(self, f: Signal, x):
        """``P_n f(x)``: every cell mean replaced by the mean of f over ``[x, x + 1/n]``."""
        if not self.domain.is_real_line:
            raise ValueError("the auxiliary operator is defined on the real line only")
        scalar = np.ndim(x) == 0
        x = np.atleast_1d(np.asarray(x, dtype=float))
        self._check_x(x)
        nx = self.n * x
        den = self._denominator(nx)
        self._guard(den, nx)
        m = f.means(x, x + 1.0 / self.n)
        kmin = int(np.floor(nx.min())) - self.den_width
        kmax = int(np.floor(nx.max())) + self.den_width
        low = _band(self.kernel, nx, self.den_width, kmin, np.ones(kmax - kmin + 1),
                    reduce=np.min)
        low = np.minimum(low, 0.0)  # far kernel values tend to 0
        num = np.where(m >= 0, m * den, m * low)
        out = num / den
        return float(out[0]) if scalar else out

    def shifted_apply(self, f: Signal, x, c: Optional[float] = None):
        """``K_n(f - c) + c`` for f bounded below by c (default: its declared bound)."""
        if c is None:
            if f.lower_bound is None:
                raise ContractViolation(f"{f.name} has no declared lower bound")
            c = f.lower_bound
        g = f.minus_const(c)
        self._check_lower(g, x)
        g = _with_lower(g, 0.0)
        out = self.apply(g, x)
        return out + c

    def _check_lower(self, g: Signal, x) -> None:
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        lo = xs.min() - 1.0 / self.n
        hi = xs.max() + 1.0 / self.n
        if not self.domain.is_real_line:
            lo, hi = self.domain.a, self.domain.b
        elif g.compact:
            lo, hi = g.support
        k0, k1 = math.floor(self.n * lo), math.ceil(self.n * hi)
        t, _ = gauss_legendre(8)
        cells = np.arange(k0, k1 + 1, dtype=float)
        nodes = ((cells[:, None] + t[None, :]) / self.n).ravel()
        if not self.domain.is_real_line:
            nodes = nodes[(nodes >= self.domain.a) & (nodes <= self.domain.b)]
        vals = g(nodes)
        if np.any(vals < -1e-12):
            i = int(np.argmin(vals))
            raise ContractViolation(f"f - c = {vals[i]:.3g} < 0 at t={nodes[i]:.6g}")

    def linear_apply(self, f: Signal, x):
        """Sum-based Kantorovich baseline ``sum_k chi(nx-k) m_k / sum_k chi(nx-k)``."""
        scalar = np.ndim(x) == 0
        x = np.atleast_1d(np.asarray(x, dtype=float))
        self._check_x(x)
        kern = self.kernel
        nx = self.n * x
        if self.domain.is_real_line:
            width = int(math.ceil(kern.radius)) + 1 if kern.compact else MAX_WINDOW
            kmin = int(np.floor(nx.min())) - width
            kmax = int(np.floor(nx.max())) + width
            ks = np.arange(kmin, kmax + 1)
        else:
            ks = self.index_set
        means = cell_means(f, self.n, ks)
        num = np.empty(nx.size)
        den = np.empty(nx.size)
        kf = ks.astype(float)
        step = _rows_per_chunk(ks.size)
        for s in range(0, nx.size, step):
            vals = kern(nx[s:s + step, None] - kf[None, :])
            num[s:s + step] = vals @ means
            den[s:s + step] = vals.sum(axis=1)
        if np.any(np.abs(den) < 1e-8):
            raise BaselineUnavailable(f"{kern.name}: sum of shifts vanishes near x")
        out = num / den
        return float(out[0]) if scalar else out

    def linear_truncation_bound(self) -> float:
        """Bound on the omitted part of ``sum_k |chi(nx-k)|`` for the real-line window."""
        kern = self.kernel
        if kern.compact or not self.domain.is_real_line:
            return 0.0
        theta = kern.decay_exponent
        w = MAX_WINDOW
        return 2.0 * kern.decay_constant * (w - 1) ** (1.0 - theta) / (theta - 1.0)


def _with_lower(g: Signal, c: float) -> Signal:
    from dataclasses import replace
    return replace(g, lower_bound=c, nonneg=c >= 0)


# -- modular of operator images ----------------------------------------------

@dataclass(frozen=True, eq=False)
class OperatorImage:
    """A residual ``r(x)`` (e.g. ``K_n f - f``) sampled on a Gauss grid.

    ``tail`` maps ``(phi, lam)`` to an upper bound for the modular outside
    ``[lo, hi]``; it is identically zero when the residual has compact
    support inside the region.
    """

    nodes: np.ndarray
    weights: np.ndarray
    mid_weights: np.ndarray
    values: np.ndarray
    lo: float
    hi: float
    resolution: float
    tail: Callable[[PhiFunction, float], float] = field(default=lambda phi, lam: 0.0)
    note: str = ""

    def modular(self, phi: PhiFunction, lam: float) -> ModularReport:
        u = phi(lam * np.abs(self.values))
        if not np.all(np.isfinite(u)):
            return ModularReport(math.inf, lam, 0.0, False, note="phi overflow")
        value = float(np.dot(u, self.weights))
        mid = float(np.dot(u, self.mid_weights))
        tail = float(self.tail(phi, lam))
        return ModularReport(value + tail, lam, abs(value - mid), True, tail_bound=tail,
                             note=self.note)


def _gauss3_grid(edges: np.ndarray):
    t = np.array([0.5 - 0.5 * math.sqrt(0.6), 0.5, 0.5 + 0.5 * math.sqrt(0.6)])
    w = np.array([5.0, 8.0, 5.0]) / 18.0
    width = np.diff(edges)
    nodes = (edges[:-1, None] + width[:, None] * t[None, :]).ravel()
    weights = (width[:, None] * w[None, :]).ravel()
    mid = (width[:, None] * np.array([0.0, 1.0, 0.0])[None, :]).ravel()
    return nodes, weights, mid


def _partition(lo: float, hi: float, n: int, density: int, extra=()) -> np.ndarray:
    m = max(1, int(math.ceil((hi - lo) * n * density - 1e-9)))
    edges = np.linspace(lo, hi, m + 1)
    pts = [p for p in extra if lo < p < hi]
    if pts:
        edges = np.union1d(edges, pts)
    # drop slivers created by the union
    keep = np.concatenate([[True], np.diff(edges) > 1e-13 * max(1.0, hi - lo)])
    return edges[keep]


def _region(op: MaxProductOperator, signals) -> tuple[float, float, bool, float]:
    """Integration window, whether the residual vanishes outside, and the cell edge radius."""
    d = op.domain
    if not d.is_real_line:
        return d.a, d.b, True, 0.0
    if not all(s.compact for s in signals):
        return -d.R, d.R, False, 0.0
    s0 = min(s.support[0] for s in signals)
    s1 = max(s.support[1] for s in signals)
    e0 = (math.floor(op.n * s0 + 1e-12) - 1) / op.n
    e1 = (math.ceil(op.n * s1 - 1e-12) + 1) / op.n
    if op.kernel.compact:
        r = (op.kernel.radius + 1.0) / op.n
        return min(s0, e0 - r), max(s1, e1 + r), True, 0.0
    lo, hi = min(-d.R, e0 - 1.0), max(d.R, e1 + 1.0)
    return lo, hi, False, max(abs(e0), abs(e1))


def _tail_function(op: MaxProductOperator, amplitude: float, e0: float, e1: float,
                   lo: float, hi: float):
    """Modular bound for ``|r(x)| <= amplitude * env(n * dist(x, [e0, e1])) / a_chi``."""
    kern = op.kernel
    n = op.n
    a = op.a_chi

    def tail(phi: PhiFunction, lam: float) -> float:
        if amplitude == 0.0:
            return 0.0
        total = 0.0
        for start, edge, sign in ((hi, e1, 1.0), (lo, e0, -1.0)):
            def integrand(t):
                x = start + sign * t
                u = n * abs(x - edge)
                return phi.scalar(lam * amplitude * float(kern.envelope(u)) / a)
            val, _ = integrate.quad(integrand, 0.0, np.inf, limit=200)
            total += val
        return total

    return tail


def _image(op: MaxProductOperator, residual: Callable[[np.ndarray], np.ndarray],
           signals, amplitude: float, breakpoints=()) -> OperatorImage:
    lo, hi, exact, _ = _region(op, signals)
    d = op.domain
    extra = list(breakpoints)
    edges = _partition(lo, hi, op.n, d.density, extra)
    nodes, weights, mid = _gauss3_grid(edges)
    values = residual(nodes)
    note = ""
    tail = lambda phi, lam: 0.0
    if d.is_real_line and not exact:
        if all(s.compact for s in signals):
            s0 = min(s.support[0] for s in signals)
            s1 = max(s.support[1] for s in signals)
            e0 = (math.floor(op.n * s0 + 1e-12) - 1) / op.n
            e1 = (math.ceil(op.n * s1 - 1e-12) + 1) / op.n
            tail = _tail_function(op, amplitude, e0, e1, lo, hi)
        else:
            note = f"residual integrated over [{lo:g}, {hi:g}] only"
    return OperatorImage(nodes, weights, mid, values, float(lo), float(hi),
                         1.0 / (op.n * d.density), tail, note)


def _bp(s: Signal):
    return s.breakpoints or ()


def error_image(op: MaxProductOperator, f: Signal) -> OperatorImage:
    """Residual ``K_n f - f`` on the operator's evaluation grid."""
    amp = f.sup_abs if f.sup_abs is not None else sup_abs_estimate(
        f, *(f.support or (op.domain.a, op.domain.b)))
    return _image(op, lambda x: op.apply(f, x) - f(x), [f], amp, _bp(f))


def shifted_error_image(op: MaxProductOperator, f: Signal, c: float) -> OperatorImage:
    """Residual ``K_n(f - c) + c - f`` for a signal bounded below by ``c``."""
    g = f.minus_const(c)
    amp = g.sup_abs if g.sup_abs is not None else sup_abs_estimate(
        g, *(g.support or (op.domain.a, op.domain.b)))
    return _image(op, lambda x: op.shifted_apply(f, x, c) - f(x), [g], amp, _bp(f))


def difference_image(op: MaxProductOperator, f: Signal, g: Signal) -> OperatorImage:
    """``K_n f - K_n g``."""
    amp = sum(s.sup_abs if s.sup_abs is not None else sup_abs_estimate(
        s, *(s.support or (op.domain.a, op.domain.b))) for s in (f, g))
    bps = tuple(_bp(f)) + tuple(_bp(g))
    return _image(op, lambda x: op.apply(f, x) - op.apply(g, x), [f, g], amp, bps)


def error_modular(op: MaxProductOperator, f: Signal, phi: PhiFunction, lam: float) -> ModularReport:
    """``I^phi[lam (K_n f - f)]``."""
    return error_image(op, f).modular(phi, lam)
