"""Real-valued signals on the line or an interval.

A :class:`Signal` bundles a vectorized evaluator with the metadata the
numerics need: where it differs from its far-field constant (``support`` and
``baseline``), where it has kinks or jumps (``breakpoints``), and optionally
an exact antiderivative and derivative.  Built-in signals carry closed forms,
so Kantorovich cell means are exact for them.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .quadrature import interval_means

Func = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class Signal:
    """A function f: R -> R with numerical metadata.

    ``support`` is the closed interval outside of which ``f`` equals
    ``baseline``; ``None`` means no such interval is known.
    ``breakpoints=None`` means the kink/jump locations are unknown, which
    forces the midpoint fallback for cell means.
    """

    name: str
    func: Func
    support: Optional[tuple[float, float]] = None
    baseline: float = 0.0
    breakpoints: Optional[tuple[float, ...]] = ()
    primitive: Optional[Func] = None
    derivative: Optional[Func] = None
    sup_abs: Optional[float] = None
    nonneg: bool = False
    lower_bound: Optional[float] = None
    meta: dict = field(default_factory=dict)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(all="ignore"):
            return np.asarray(self.func(x), dtype=float)

    @property
    def compact(self) -> bool:
        """True when f vanishes outside a bounded interval."""
        return self.support is not None and self.baseline == 0.0

    @property
    def has_primitive(self) -> bool:
        return self.primitive is not None

    def means(self, lo, hi) -> np.ndarray:
        """Averages of f over the intervals ``[lo_i, hi_i]``."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if self.primitive is not None:
            return (self.primitive(hi) - self.primitive(lo)) / (hi - lo)
        values, _ = interval_means(self, lo, hi, self.breakpoints)
        return values

    def means_flagged(self, lo, hi) -> tuple[np.ndarray, bool]:
        """Like :meth:`means`, also reporting whether the midpoint fallback ran."""
        if self.primitive is not None:
            return self.means(lo, hi), False
        return interval_means(self, np.asarray(lo, float), np.asarray(hi, float),
                              self.breakpoints)

    # -- arithmetic -------------------------------------------------------

    def minus_const(self, c: float) -> "Signal":
        """The signal ``f - c``."""
        c = float(c)
        f = self.func
        prim = None
        if self.primitive is not None:
            p = self.primitive
            prim = lambda x: p(x) - c * np.asarray(x, dtype=float)
        deriv = self.derivative
        lower = None if self.lower_bound is None else self.lower_bound - c
        nonneg = lower is not None and lower >= 0.0
        sup_abs = None
        if self.sup_abs is not None:
            sup_abs = self.sup_abs + abs(c)
        return Signal(
            name=f"({self.name})-{c:g}",
            func=lambda x: f(x) - c,
            support=self.support,
            baseline=self.baseline - c,
            breakpoints=self.breakpoints,
            primitive=prim,
            derivative=deriv,
            sup_abs=sup_abs,
            nonneg=nonneg or (self.nonneg and c <= 0.0),
            lower_bound=lower,
        )

    def scaled(self, lam: float) -> "Signal":
        lam = float(lam)
        f = self.func
        prim = None if self.primitive is None else (lambda x, p=self.primitive: lam * p(x))
        deriv = None if self.derivative is None else (lambda x, d=self.derivative: lam * d(x))
        lower = None
        if self.lower_bound is not None and lam >= 0:
            lower = lam * self.lower_bound
        return Signal(
            name=f"{lam:g}*({self.name})",
            func=lambda x: lam * f(x),
            support=self.support,
            baseline=lam * self.baseline,
            breakpoints=self.breakpoints,
            primitive=prim,
            derivative=deriv,
            sup_abs=None if self.sup_abs is None else abs(lam) * self.sup_abs,
            nonneg=self.nonneg and lam >= 0,
            lower_bound=lower,
        )

    def plus(self, other: "Signal") -> "Signal":
        f, g = self.func, other.func
        prim = None
        if self.primitive is not None and other.primitive is not None:
            p, q = self.primitive, other.primitive
            prim = lambda x: p(x) + q(x)
        deriv = None
        if self.derivative is not None and other.derivative is not None:
            d, e = self.derivative, other.derivative
            deriv = lambda x: d(x) + e(x)
        support = _union(self.support, other.support)
        sup_abs = None
        if self.sup_abs is not None and other.sup_abs is not None:
            sup_abs = self.sup_abs + other.sup_abs
        lower = None
        if self.lower_bound is not None and other.lower_bound is not None:
            lower = self.lower_bound + other.lower_bound
        return Signal(
            name=f"({self.name})+({other.name})",
            func=lambda x: f(x) + g(x),
            support=support,
            baseline=self.baseline + other.baseline,
            breakpoints=_merge_bp(self.breakpoints, other.breakpoints),
            primitive=prim,
            derivative=deriv,
            sup_abs=sup_abs,
            nonneg=self.nonneg and other.nonneg,
            lower_bound=lower,
        )

    def minus(self, other: "Signal") -> "Signal":
        return self.plus(other.scaled(-1.0))

    def translated(self, h: float) -> "Signal":
        """The signal ``x -> f(x + h)``."""
        h = float(h)
        f = self.func
        prim = None if self.primitive is None else (lambda x, p=self.primitive: p(np.asarray(x) + h))
        deriv = None if self.derivative is None else (lambda x, d=self.derivative: d(np.asarray(x) + h))
        support = None if self.support is None else (self.support[0] - h, self.support[1] - h)
        bp = None if self.breakpoints is None else tuple(b - h for b in self.breakpoints)
        return replace(self, name=f"{self.name}(.+{h:g})", func=lambda x: f(np.asarray(x) + h),
                       support=support, breakpoints=bp, primitive=prim, derivative=deriv)

    def absolute(self) -> "Signal":
        f = self.func
        return Signal(name=f"|{self.name}|", func=lambda x: np.abs(f(x)), support=self.support,
                      baseline=abs(self.baseline), breakpoints=self.breakpoints,
                      sup_abs=self.sup_abs, nonneg=True, lower_bound=0.0)

    def folded(self, a: float, b: float) -> "Signal":
        """Even periodic extension of ``f|[a,b]`` (reflection at both ends)."""
        length = b - a
        f = self.func

        def ext(x):
            y = np.mod(np.asarray(x, dtype=float) - a, 2.0 * length)
            y = np.where(y > length, 2.0 * length - y, y)
            return f(a + y)

        bp = None
        if self.breakpoints is not None:
            inner = [p - a for p in self.breakpoints if a < p < b]
            pts = set()
            for m in range(-4, 5):
                base = 2.0 * length * m
                pts.update([base, base + length])
                for p in inner:
                    pts.update([base + p, base - p])
            bp = tuple(sorted(a + p for p in pts))
        return Signal(name=f"fold({self.name})", func=ext, support=None, baseline=0.0,
                      breakpoints=bp, sup_abs=self.sup_abs, nonneg=self.nonneg,
                      lower_bound=self.lower_bound)


def _union(s1, s2):
    if s1 is None or s2 is None:
        return None
    return (min(s1[0], s2[0]), max(s1[1], s2[1]))


def _merge_bp(b1, b2):
    if b1 is None or b2 is None:
        return None
    return tuple(sorted(set(b1) | set(b2)))


# -- constructors ---------------------------------------------------------

def step(edges, values, name: str = "step") -> Signal:
    """Piecewise-constant signal: ``values[i]`` on ``[edges[i], edges[i+1])``, 0 outside."""
    edges = np.asarray(edges, dtype=float)
    values = np.asarray(values, dtype=float)
    if edges.ndim != 1 or values.shape != (edges.size - 1,):
        raise ValueError("step needs len(values) == len(edges) - 1")
    if np.any(np.diff(edges) <= 0):
        raise ValueError("step edges must be increasing")
    cum = np.concatenate([[0.0], np.cumsum(values * np.diff(edges))])

    def func(x):
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(edges, x, side="right") - 1
        inside = (idx >= 0) & (idx < values.size)
        return np.where(inside, values[np.clip(idx, 0, values.size - 1)], 0.0)

    def primitive(x):
        x = np.clip(np.asarray(x, dtype=float), edges[0], edges[-1])
        idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, values.size - 1)
        return cum[idx] + values[idx] * (x - edges[idx])

    lo = float(min(values.min(), 0.0))
    return Signal(name=name, func=func, support=(float(edges[0]), float(edges[-1])),
                  breakpoints=tuple(float(e) for e in edges), primitive=primitive,
                  sup_abs=float(np.abs(values).max()), nonneg=bool(lo >= 0.0),
                  lower_bound=lo, meta={"edges": edges.tolist(), "values": values.tolist()})


def piecewise_linear(xs, ys, name: str = "pl") -> Signal:
    """Continuous-inside piecewise-linear signal through ``(xs, ys)``, 0 outside."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.size < 2 or np.any(np.diff(xs) <= 0):
        raise ValueError("piecewise_linear needs increasing xs matching ys")
    dx = np.diff(xs)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (ys[:-1] + ys[1:]) * dx)])
    slopes = np.diff(ys) / dx

    def func(x):
        x = np.asarray(x, dtype=float)
        inside = (x >= xs[0]) & (x <= xs[-1])
        return np.where(inside, np.interp(x, xs, ys), 0.0)

    def primitive(x):
        x = np.clip(np.asarray(x, dtype=float), xs[0], xs[-1])
        i = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, dx.size - 1)
        t = x - xs[i]
        return cum[i] + ys[i] * t + 0.5 * slopes[i] * t * t

    lo = float(min(ys.min(), 0.0))
    return Signal(name=name, func=func, support=(float(xs[0]), float(xs[-1])),
                  breakpoints=tuple(float(v) for v in xs), primitive=primitive,
                  sup_abs=float(np.abs(ys).max()), nonneg=bool(lo >= 0.0), lower_bound=lo,
                  meta={"xs": xs.tolist(), "ys": ys.tolist()})


def hat() -> Signal:
    """max(1 - |x|, 0)."""
    s = piecewise_linear([-1.0, 0.0, 1.0], [0.0, 1.0, 0.0], name="hat")
    deriv = lambda x: np.where(np.abs(x) < 1.0, -np.sign(x), 0.0)
    return replace(s, derivative=deriv)


def indicator(a: float = 0.0, b: float = 1.0) -> Signal:
    return step([a, b], [1.0], name=f"indicator[{a:g},{b:g}]")


def constant(c: float) -> Signal:
    c = float(c)
    return Signal(name=f"const:{c:g}", func=lambda x: np.full(np.shape(x), c),
                  support=None, baseline=c, breakpoints=(),
                  primitive=lambda x: c * np.asarray(x, dtype=float),
                  derivative=lambda x: np.zeros(np.shape(x)), sup_abs=abs(c),
                  nonneg=c >= 0.0, lower_bound=c)


def zero() -> Signal:
    return replace(constant(0.0), name="zero", support=(0.0, 0.0))


def linear() -> Signal:
    """f(t) = t on the whole line (no support, unbounded)."""
    return Signal(name="linear", func=lambda x: np.asarray(x, dtype=float), support=None,
                  baseline=0.0, breakpoints=(), primitive=lambda x: 0.5 * np.asarray(x) ** 2,
                  derivative=lambda x: np.ones(np.shape(x)))


def sin_squared() -> Signal:
    """sin^2(pi x) on [0, 1], zero elsewhere; C^1 on the whole line."""

    def func(x):
        x = np.asarray(x, dtype=float)
        return np.where((x >= 0.0) & (x <= 1.0), np.sin(np.pi * x) ** 2, 0.0)

    def primitive(x):
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        return 0.5 * x - np.sin(2.0 * np.pi * x) / (4.0 * np.pi)

    def derivative(x):
        x = np.asarray(x, dtype=float)
        return np.where((x >= 0.0) & (x <= 1.0), np.pi * np.sin(2.0 * np.pi * x), 0.0)

    return Signal(name="sinsq", func=func, support=(0.0, 1.0), breakpoints=(0.0, 1.0),
                  primitive=primitive, derivative=derivative, sup_abs=1.0, nonneg=True,
                  lower_bound=0.0, meta={"c1": True})


def sine() -> Signal:
    """sin(2 pi t) on [0, 1], zero elsewhere."""

    def func(x):
        x = np.asarray(x, dtype=float)
        return np.where((x >= 0.0) & (x <= 1.0), np.sin(2.0 * np.pi * x), 0.0)

    def primitive(x):
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        return (1.0 - np.cos(2.0 * np.pi * x)) / (2.0 * np.pi)

    def derivative(x):
        x = np.asarray(x, dtype=float)
        return np.where((x >= 0.0) & (x <= 1.0), 2.0 * np.pi * np.cos(2.0 * np.pi * x), 0.0)

    return Signal(name="sin", func=func, support=(0.0, 1.0), breakpoints=(0.0, 1.0),
                  primitive=primitive, derivative=derivative, sup_abs=1.0, lower_bound=-1.0,
                  meta={"c1": True})


def sqrt_cusp() -> Signal:
    """sqrt(x) on [0, 1], zero elsewhere."""

    def func(x):
        x = np.asarray(x, dtype=float)
        return np.where((x >= 0.0) & (x <= 1.0), np.sqrt(np.clip(x, 0.0, None)), 0.0)

    def primitive(x):
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        return (2.0 / 3.0) * x ** 1.5

    return Signal(name="sqrt", func=func, support=(0.0, 1.0), breakpoints=(0.0, 1.0),
                  primitive=primitive, sup_abs=1.0, nonneg=True, lower_bound=0.0)


def log_singular() -> Signal:
    """sqrt(2 log(1/x)) on (0, 1), zero elsewhere; unbounded at 0."""

    def func(x):
        x = np.asarray(x, dtype=float)
        inside = (x > 0.0) & (x < 1.0)
        safe = np.where(inside, x, 0.5)
        return np.where(inside, np.sqrt(2.0 * np.log(1.0 / safe)), 0.0)

    return Signal(name="logsing", func=func, support=(0.0, 1.0), breakpoints=(0.0, 1.0),
                  nonneg=True, lower_bound=0.0)


def from_table(xs, values, name: str = "table") -> Signal:
    """Piecewise-constant table: ``values[i]`` on ``[xs[i], xs[i+1])``."""
    return step(xs, values, name=name)


def load_csv(path: str | Path) -> Signal:
    """Read a piecewise-constant signal from ``x,value`` rows.

    The last row's x closes the support; its value is ignored.
    """
    xs, vals = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                x, v = float(row[0]), float(row[1])
            except ValueError:
                continue  # header
            xs.append(x)
            vals.append(v)
    if len(xs) < 2:
        raise ValueError(f"{path}: need at least two rows")
    return from_table(xs, vals[:-1], name=f"file:{path}")


def get_signal(spec: str) -> Signal:
    """Resolve a signal name: ``hat``, ``step``, ``indicator:a:b``, ``sinsq``,
    ``sin``, ``sqrt``, ``logsing``, ``zero``, ``const:c``, ``hatshift:c``,
    ``file:<path>``."""
    name, _, rest = spec.partition(":")
    args = rest.split(":") if rest else []
    if name == "hat":
        return hat()
    if name == "step":
        return replace(indicator(0.0, 1.0), name="step")
    if name == "indicator":
        a, b = (float(v) for v in args) if args else (0.0, 1.0)
        return indicator(a, b)
    if name == "sinsq":
        return sin_squared()
    if name == "sin":
        return sine()
    if name == "sqrt":
        return sqrt_cusp()
    if name == "logsing":
        return log_singular()
    if name == "zero":
        return zero()
    if name == "const":
        return constant(float(args[0]))
    if name == "hatshift":
        # hat + c on the whole line, bounded below by c
        c = float(args[0])
        return replace(hat().minus_const(-c), name=f"hatshift:{c:g}")
    if name == "file":
        return load_csv(rest)
    raise KeyError(f"unknown signal {spec!r}")


def sup_abs_estimate(f: Signal, a: float, b: float, points: int = 4097) -> float:
    """Declared sup |f| or a grid estimate on [a, b]."""
    if f.sup_abs is not None:
        return f.sup_abs
    x = np.linspace(a, b, points)
    return float(np.max(np.abs(f(x))))
