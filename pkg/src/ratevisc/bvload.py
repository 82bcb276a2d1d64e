"""Piecewise constant/affine functions of bounded variation and Kurzweil-Stieltjes pairings.

Every integral here is evaluated in closed form on the merged piecewise
structure of the two factors, so no quadrature error enters the
certificates built on top of it.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainMismatch, TimeOutsideHorizon
from .model import SpdOperator

SIDES = ("at", "left", "right")


def _vec(x, n=None):
    v = np.atleast_1d(np.asarray(x, dtype=float))
    if n is not None and v.shape != (n,):
        raise ValueError(f"expected a vector of length {n}, got shape {v.shape}")
    return v


@dataclass(frozen=True)
class Jump:
    t: float
    left: np.ndarray
    right: np.ndarray
    at: np.ndarray


@dataclass(frozen=True, eq=False)
class BVLoad:
    """l(t) = values[i] + (t - breakpoints[i]) * slopes[i] on (breakpoints[i], breakpoints[i+1]).

    ``at_jump[i-1]`` fixes the value at interior breakpoint i: ``"left"``,
    ``"right"`` or an explicit vector. The endpoints take the adjacent
    segment's value.
    """

    breakpoints: np.ndarray
    values: np.ndarray
    slopes: np.ndarray
    at_jump: tuple = ()
    dim: int = field(init=False)

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float).copy()
        vals = np.atleast_2d(np.asarray(self.values, dtype=float)).copy()
        slopes = np.atleast_2d(np.asarray(self.slopes, dtype=float)).copy()
        m = bp.size - 1
        if m < 1 or bp[0] != 0.0 or np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must start at 0 and increase strictly")
        if vals.shape != slopes.shape or vals.shape[0] != m:
            raise ValueError("one value and one slope vector per segment required")
        if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(slopes))):
            raise ValueError("load must be finite")
        at = list(self.at_jump) if self.at_jump else ["right"] * (m - 1)
        if len(at) != m - 1:
            raise ValueError("one jump designation per interior breakpoint required")
        fixed = []
        for a in at:
            if isinstance(a, str):
                if a not in ("left", "right"):
                    raise ValueError(f"bad jump designation {a!r}")
                fixed.append(a)
            else:
                v = _vec(a, vals.shape[1]).copy()
                v.setflags(write=False)
                fixed.append(v)
        for arr in (bp, vals, slopes):
            arr.setflags(write=False)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "slopes", slopes)
        object.__setattr__(self, "at_jump", tuple(fixed))
        object.__setattr__(self, "dim", vals.shape[1])

    # construction -----------------------------------------------------
    @classmethod
    def constant(cls, T: float, c) -> "BVLoad":
        c = _vec(c)
        return cls([0.0, T], [c], [np.zeros_like(c)])

    @classmethod
    def affine(cls, T: float, start, slope) -> "BVLoad":
        return cls([0.0, T], [_vec(start)], [_vec(slope)])

    @classmethod
    def step(cls, T: float, t_jump: float, before, after, at="right") -> "BVLoad":
        b, a = _vec(before), _vec(after)
        return cls([0.0, t_jump, T], [b, a], [np.zeros_like(b), np.zeros_like(a)], (at,))

    @property
    def T(self) -> float:
        return float(self.breakpoints[-1])

    @property
    def n_segments(self) -> int:
        return self.values.shape[0]

    def segment_end(self, i: int) -> np.ndarray:
        return self.values[i] + (self.breakpoints[i + 1] - self.breakpoints[i]) * self.slopes[i]

    def designated(self, i: int) -> np.ndarray:
        """Value at interior breakpoint i (1 <= i <= m-1)."""
        a = self.at_jump[i - 1]
        if isinstance(a, str):
            return self.segment_end(i - 1) if a == "left" else self.values[i].copy()
        return a.copy()

    def with_designation(self, side: str) -> "BVLoad":
        """Same load with every interior breakpoint set to its left or right limit."""
        return BVLoad(self.breakpoints, self.values, self.slopes, (side,) * (self.n_segments - 1))

    def rescale_time(self, factor: float) -> "BVLoad":
        """The load t -> l(t / factor) on [0, factor * T]."""
        return BVLoad(self.breakpoints * factor, self.values, self.slopes / factor, self.at_jump)

    # evaluation -------------------------------------------------------
    def _segment_value(self, i, t):
        return self.values[i] + (t - self.breakpoints[i]) * self.slopes[i]

    def eval(self, t: float, side: str = "at") -> np.ndarray:
        if side not in SIDES:
            raise ValueError(f"side must be one of {SIDES}")
        t = float(t)
        bp, m = self.breakpoints, self.n_segments
        if not (0.0 <= t <= bp[-1]) or (side == "left" and t <= 0) or (side == "right" and t >= bp[-1]):
            raise TimeOutsideHorizon(f"time {t} outside horizon [0, {bp[-1]}] for side {side!r}")
        k = int(np.searchsorted(bp, t))
        if k <= m and bp[k] == t:
            if k == 0:
                return self.values[0].copy()
            if k == m:
                return self.segment_end(m - 1)
            if side == "left":
                return self.segment_end(k - 1)
            if side == "right":
                return self.values[k].copy()
            return self.designated(k)
        return self._segment_value(k - 1, t)

    def eval_open(self, ts) -> np.ndarray:
        """Values at points assumed to lie strictly inside segments."""
        ts = np.asarray(ts, dtype=float)
        idx = np.clip(np.searchsorted(self.breakpoints, ts, side="right") - 1, 0, self.n_segments - 1)
        return self.values[idx] + (ts - self.breakpoints[idx])[..., None] * self.slopes[idx]

    def __call__(self, t, side: str = "at"):
        return self.eval(t, side)

    def jumps(self, tol: float = 0.0) -> list[Jump]:
        out = []
        for i in range(1, self.n_segments):
            left, right, at = self.segment_end(i - 1), self.values[i].copy(), self.designated(i)
            if np.max(np.abs(left - right)) > tol or np.max(np.abs(at - right)) > tol:
                out.append(Jump(float(self.breakpoints[i]), left, right, at))
        return out

    def is_piecewise_constant(self) -> bool:
        return not np.any(self.slopes)

    # norms ------------------------------------------------------------
    def variation(self, V: SpdOperator, a: float = 0.0, b: float | None = None) -> float:
        b = self.T if b is None else b
        if not 0 <= a <= b <= self.T:
            raise TimeOutsideHorizon("variation needs 0 <= a <= b <= T")
        if a == b:
            return 0.0
        bp = self.breakpoints
        lo, hi = np.maximum(bp[:-1], a), np.minimum(bp[1:], b)
        lengths = np.maximum(hi - lo, 0.0)
        total = float(np.sum(V.dual_norm(self.slopes) * lengths))
        for i in range(1, self.n_segments):
            t = bp[i]
            if t < a or t > b:
                continue
            at = self.designated(i)
            if t > a:
                total += float(V.dual_norm(at - self.segment_end(i - 1)))
            if t < b:
                total += float(V.dual_norm(self.values[i] - at))
        return total

    def sup_norm(self, V: SpdOperator) -> float:
        pts = [self.values, np.array([self.segment_end(i) for i in range(self.n_segments)])]
        pts += [self.designated(i)[None, :] for i in range(1, self.n_segments)]
        return float(V.dual_norm(np.vstack(pts)).max())

    # serialization ----------------------------------------------------
    def to_spec(self) -> dict:
        pieces = []
        for i in range(self.n_segments):
            if i > 0:
                a = self.at_jump[i - 1]
                pieces.append({"kind": "jump", "t": float(self.breakpoints[i]),
                               "at": a if isinstance(a, str) else a.tolist()})
            seg = {"t0": float(self.breakpoints[i]), "t1": float(self.breakpoints[i + 1]),
                   "value": self.values[i].tolist()}
            if np.any(self.slopes[i]):
                seg.update(kind="affine", slope=self.slopes[i].tolist())
            else:
                seg["kind"] = "constant"
            pieces.append({"kind": seg.pop("kind"), **seg})
        return {"pieces": pieces}

    @classmethod
    def from_spec(cls, spec: dict) -> "BVLoad":
        pieces = spec["pieces"] if isinstance(spec, dict) else spec
        bps, vals, slopes, at = [0.0], [], [], []
        pending = None
        for p in pieces:
            kind = p["kind"]
            if kind == "jump":
                pending = p.get("at", "right")
                continue
            if kind not in ("constant", "affine"):
                raise ValueError(f"unknown load piece {kind!r}")
            t0, t1 = float(p["t0"]), float(p["t1"])
            if t0 != bps[-1]:
                raise ValueError(f"load segments must be contiguous (gap at t={bps[-1]})")
            v = _vec(p["value"])
            s = _vec(p["slope"]) if kind == "affine" else np.zeros_like(v)
            if vals:
                at.append("right" if pending is None else pending)
            pending = None
            bps.append(t1)
            vals.append(v)
            slopes.append(s)
        return cls(bps, vals, slopes, tuple(at))


@dataclass(frozen=True, eq=False)
class PiecewiseLinearCurve:
    """Continuous curve, affine between grid nodes."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float).copy()
        v = np.asarray(self.values, dtype=float)
        v = v[:, None].copy() if v.ndim == 1 else v.copy()
        if g.ndim != 1 or g.size < 2 or np.any(np.diff(g) <= 0) or v.shape[0] != g.size:
            raise ValueError("grid must increase strictly and match the values")
        g.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def a(self) -> float:
        return float(self.grid[0])

    @property
    def b(self) -> float:
        return float(self.grid[-1])

    def eval(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(s < self.grid[0] - 1e-12) or np.any(s > self.grid[-1] + 1e-12):
            raise TimeOutsideHorizon("argument outside the curve's domain")
        out = np.stack([np.interp(s, self.grid, self.values[:, j]) for j in range(self.dim)], axis=-1)
        return out

    __call__ = eval

    def increments(self):
        return np.diff(self.values, axis=0)

    def variation(self, norm=None, a: float | None = None, b: float | None = None) -> float:
        """Sum of norms of increments on [a, b]; Euclidean unless ``norm`` is given."""
        norm = norm or (lambda d: np.linalg.norm(d, axis=-1))
        if a is None and b is None:
            return float(np.sum(norm(self.increments())))
        a = self.a if a is None else a
        b = self.b if b is None else b
        nodes = np.unique(np.concatenate([[a, b], self.grid[(self.grid > a) & (self.grid < b)]]))
        return float(np.sum(norm(np.diff(self.eval(nodes), axis=0))))

    def lipschitz(self, norm=None) -> float:
        norm = norm or (lambda d: np.linalg.norm(d, axis=-1))
        return float(np.max(norm(self.increments()) / np.diff(self.grid)))

    def sup_norm(self, norm=None) -> float:
        norm = norm or (lambda d: np.linalg.norm(d, axis=-1))
        return float(np.max(norm(self.values)))


def _check_domain(f: BVLoad, g: PiecewiseLinearCurve, a, b):
    scale = max(1.0, abs(f.T))
    if abs(g.a - 0.0) > 1e-12 * scale or abs(g.b - f.T) > 1e-12 * scale:
        raise DomainMismatch(f"integrand on [0, {f.T}] but integrator on [{g.a}, {g.b}]")
    a = 0.0 if a is None else float(a)
    b = f.T if b is None else float(b)
    if not 0.0 <= a <= b <= f.T:
        raise DomainMismatch("integration bounds outside the common interval")
    return a, b


def _merged_nodes(a, b, *grids):
    pts = np.concatenate([np.asarray(g, dtype=float) for g in grids] + [[a, b]])
    return np.unique(pts[(pts >= a) & (pts <= b)])


def kurzweil_bv_dg(f: BVLoad, g: PiecewiseLinearCurve, a: float | None = None,
                   b: float | None = None) -> float:
    """Integral of <f, dg> for piecewise affine f of bounded variation and continuous g.

    On each cell of the merged grid f is affine and g' is constant, so the
    midpoint value of f times the increment of g is exact. Values of f at
    isolated points never enter.
    """
    a, b = _check_domain(f, g, a, b)
    if a == b:
        return 0.0
    nodes = _merged_nodes(a, b, f.breakpoints, g.grid)
    mids = 0.5 * (nodes[:-1] + nodes[1:])
    dg = np.diff(g.eval(nodes), axis=0)
    return float(np.sum(f.eval_open(mids) * dg))


def kurzweil_bv_dg_trace(f: BVLoad, g: PiecewiseLinearCurve) -> np.ndarray:
    """Running values of kurzweil_bv_dg(f, g, 0, s) at every grid node s of g."""
    _check_domain(f, g, None, None)
    nodes = _merged_nodes(0.0, f.T, f.breakpoints, g.grid)
    mids = 0.5 * (nodes[:-1] + nodes[1:])
    contrib = np.sum(f.eval_open(mids) * np.diff(g.eval(nodes), axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(contrib)])
    return cum[np.searchsorted(nodes, g.grid)]


def kurzweil_cont_dstep(f: PiecewiseLinearCurve, g: BVLoad, a: float | None = None,
                        b: float | None = None) -> float:
    """Integral of <f, dg> for continuous piecewise affine f and a jump function g.

    Jumps contribute <f(s_j), g(s_j+) - g(s_j-)>, split at the designated
    value; any affine part of g is integrated exactly.
    """
    a, b = _check_domain(g, f, a, b)
    if a == b:
        return 0.0
    total = 0.0
    if not g.is_piecewise_constant():
        nodes = _merged_nodes(a, b, g.breakpoints, f.grid)
        mids = 0.5 * (nodes[:-1] + nodes[1:])
        idx = np.clip(np.searchsorted(g.breakpoints, mids, side="right") - 1, 0, g.n_segments - 1)
        total += float(np.sum(f.eval(mids) * g.slopes[idx] * np.diff(nodes)[:, None]))
    for i in range(1, g.n_segments):
        t = g.breakpoints[i]
        if t < a or t > b:
            continue
        at = g.designated(i)
        ft = f.eval(t)
        if t > a:
            total += float(ft @ (at - g.segment_end(i - 1)))
        if t < b:
            total += float(ft @ (g.values[i] - at))
    return total


def diff_quotient_pairing(f: BVLoad, g: PiecewiseLinearCurve, h: float, a: float | None = None,
                          b: float | None = None) -> float:
    """Integral over [a, b-h] of <f(s), (g(s+h) - g(s)) / h>, exact per cell (Simpson on quadratics)."""
    a, b = _check_domain(f, g, a, b)
    if not 0 < h < b - a:
        raise ValueError("need 0 < h < b - a")
    nodes = _merged_nodes(a, b - h, f.breakpoints, g.grid, g.grid - h)
    u, v = nodes[:-1], nodes[1:]
    mid = 0.5 * (u + v)
    idx = np.clip(np.searchsorted(f.breakpoints, mid, side="right") - 1, 0, f.n_segments - 1)

    def integrand(x):
        fx = f.values[idx] + (x - f.breakpoints[idx])[:, None] * f.slopes[idx]
        return np.sum(fx * (g.eval(x + h) - g.eval(x)), axis=1) / h

    simpson = (v - u) / 6 * (integrand(u) + 4 * integrand(mid) + integrand(v))
    return float(np.sum(simpson))


def kurzweil_bound(f: BVLoad, g: PiecewiseLinearCurve, V: SpdOperator, a: float | None = None,
                   b: float | None = None) -> tuple[float, float]:
    """Both arguments of the standard estimate |int <f, dg>| <= min(first, second).

    f is measured in the dual metric of V and g in the V-metric.
    """
    a, b = _check_domain(f, g, a, b)
    var_g = g.variation(V.norm, a, b)
    var_f = f.variation(V, a, b)
    sup_g = float(np.max(V.norm(g.eval(_merged_nodes(a, b, g.grid)))))
    first = f.sup_norm(V) * var_g
    second = (float(V.dual_norm(f.eval(a))) + float(V.dual_norm(f.eval(b))) + var_f) * sup_g
    return first, second
