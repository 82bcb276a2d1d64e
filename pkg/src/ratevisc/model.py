"""Energies, dissipation geometry and the contact potential.

All objects are immutable after construction. Vector arguments may be a
single state of shape ``(n,)`` or a stack of states of shape ``(m, n)``;
reductions are taken over the last axis.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericOverflow, ProjectionNotConverged

PROJ_TOL = 1e-10
PROJ_MAX_ITER = 10_000


def _finite(x, what: str):
    if not np.all(np.isfinite(x)):
        raise NumericOverflow(f"numeric overflow in {what}")
    return x


@dataclass(frozen=True, eq=False)
class SpdOperator:
    """Dense symmetric positive definite matrix with cached spectral data."""

    entries: np.ndarray
    dim: int = field(init=False)
    ellipticity: float = field(init=False)
    max_eig: float = field(init=False)
    is_diagonal: bool = field(init=False)
    inverse: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.entries, dtype=float))
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("operator must be a square matrix")
        scale = max(np.abs(m).max(), 1.0)
        if np.abs(m - m.T).max() > 1e-12 * scale:
            raise ValueError("operator is not symmetric")
        m = 0.5 * (m + m.T)
        eig = np.linalg.eigvalsh(m)
        if eig[0] <= 0:
            raise ValueError("operator is not positive definite")
        m.setflags(write=False)
        inv = np.linalg.inv(m)
        inv = 0.5 * (inv + inv.T)
        inv.setflags(write=False)
        object.__setattr__(self, "entries", m)
        object.__setattr__(self, "dim", m.shape[0])
        # shave a few ulps so the Rayleigh quotient bound is safe under rounding
        object.__setattr__(self, "ellipticity", float(eig[0]) * (1 - 1e-12))
        object.__setattr__(self, "max_eig", float(eig[-1]))
        object.__setattr__(self, "is_diagonal", bool(np.count_nonzero(m - np.diag(np.diag(m))) == 0))
        object.__setattr__(self, "inverse", inv)

    @classmethod
    def identity(cls, n: int) -> "SpdOperator":
        return cls(np.eye(n))

    @classmethod
    def diagonal(cls, d) -> "SpdOperator":
        return cls(np.diag(np.atleast_1d(np.asarray(d, dtype=float))))

    def apply(self, v):
        return np.asarray(v, dtype=float) @ self.entries

    def solve(self, w):
        return np.asarray(w, dtype=float) @ self.inverse

    def inner(self, u, v):
        return np.sum(self.apply(u) * np.asarray(v, dtype=float), axis=-1)

    def norm(self, v):
        """Primal norm sqrt(<Mv, v>)."""
        return np.sqrt(np.maximum(self.inner(v, v), 0.0))

    def dual_norm(self, w):
        """Dual norm sqrt(<w, M^{-1} w>)."""
        w = np.asarray(w, dtype=float)
        return np.sqrt(np.maximum(np.sum(self.solve(w) * w, axis=-1), 0.0))

    def to_spec(self) -> list:
        return self.entries.tolist()


@dataclass(frozen=True, eq=False)
class Dissipation:
    """Weighted l1 gauge R(v) = sum r_i |v_i|; its subdifferential at 0 is a box."""

    weights: np.ndarray
    kind: str = "weighted-l1"

    def __post_init__(self):
        r = np.atleast_1d(np.asarray(self.weights, dtype=float)).copy()
        if r.ndim != 1 or np.any(r <= 0) or not np.all(np.isfinite(r)):
            raise ValueError("dissipation weights must be positive and finite")
        if self.kind != "weighted-l1":
            raise ValueError(f"unsupported dissipation kind {self.kind!r}")
        r.setflags(write=False)
        object.__setattr__(self, "weights", r)

    @property
    def dim(self) -> int:
        return self.weights.size

    def __call__(self, v):
        return np.sum(self.weights * np.abs(np.asarray(v, dtype=float)), axis=-1)

    def contains(self, w, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(w) <= self.weights + tol))

    def diameter(self, V: SpdOperator) -> float:
        """Diameter of the box in the dual metric of V."""
        if V.is_diagonal:
            return float(2 * np.sqrt(np.sum(self.weights**2 / np.diag(V.entries))))
        if self.dim <= 16:
            signs = np.array(list(itertools.product((-1.0, 1.0), repeat=self.dim)))
            return float(2 * V.dual_norm(signs * self.weights).max())
        # upper bound; the estimates only need an upper bound on the diameter
        return float(2 * np.linalg.norm(self.weights) / np.sqrt(V.ellipticity))


class NonconvexTerm:
    """Base class for the C^2 lower-order energy F >= 0."""

    growth_exponent: float = 1.0
    name = "abstract"

    def value(self, z):
        raise NotImplementedError

    def gradient(self, z):
        raise NotImplementedError

    def hessian(self, z) -> np.ndarray:
        raise NotImplementedError

    def hessian_apply(self, z, v):
        return self.hessian(z) @ np.asarray(v, dtype=float)

    def min_curvature(self, rho: float) -> float | None:
        """Lower bound on the smallest Hessian eigenvalue on the rho-ball, if known."""
        return None

    def curvature_bound(self, rho: float) -> float | None:
        """Upper bound on the Hessian spectral norm on the rho-ball, if known."""
        return None

    def to_spec(self) -> dict:
        raise NotImplementedError


class ZeroTerm(NonconvexTerm):
    name = "zero"

    def value(self, z):
        return np.zeros(np.shape(z)[:-1])

    def gradient(self, z):
        return np.zeros(np.shape(z))

    def hessian(self, z):
        n = np.shape(z)[-1]
        return np.zeros((n, n))

    def hessian_apply(self, z, v):
        return np.zeros(np.shape(v))

    def min_curvature(self, rho):
        return 0.0

    def curvature_bound(self, rho):
        return 0.0

    def to_spec(self):
        return {"kind": "zero"}


class DoubleWell(NonconvexTerm):
    """F(z) = scale * sum (z_i^2 - 1)^2 / 4."""

    name = "doublewell"
    growth_exponent = 2.0

    def __init__(self, scale: float = 1.0):
        if scale < 0:
            raise ValueError("scale must be nonnegative")
        self.scale = float(scale)

    def value(self, z):
        z = np.asarray(z, dtype=float)
        return self.scale * np.sum((z * z - 1) ** 2, axis=-1) / 4

    def gradient(self, z):
        z = np.asarray(z, dtype=float)
        return self.scale * z * (z * z - 1)

    def hessian(self, z):
        z = np.asarray(z, dtype=float)
        return np.diag(self.scale * (3 * z * z - 1))

    def hessian_apply(self, z, v):
        z = np.asarray(z, dtype=float)
        return self.scale * (3 * z * z - 1) * np.asarray(v, dtype=float)

    def min_curvature(self, rho):
        return -self.scale

    def curvature_bound(self, rho):
        return self.scale * max(3 * rho * rho - 1, 1.0)

    def to_spec(self):
        return {"kind": "doublewell", "scale": self.scale}


class Quartic(NonconvexTerm):
    """F(z) = scale * ||z||^4 (convex)."""

    name = "quartic"
    growth_exponent = 2.0

    def __init__(self, scale: float = 1.0):
        if scale < 0:
            raise ValueError("scale must be nonnegative")
        self.scale = float(scale)

    def value(self, z):
        z = np.asarray(z, dtype=float)
        return self.scale * np.sum(z * z, axis=-1) ** 2

    def gradient(self, z):
        z = np.asarray(z, dtype=float)
        return 4 * self.scale * np.sum(z * z, axis=-1, keepdims=True) * z

    def hessian(self, z):
        z = np.asarray(z, dtype=float)
        return self.scale * (4 * (z @ z) * np.eye(z.size) + 8 * np.outer(z, z))

    def min_curvature(self, rho):
        return 0.0

    def curvature_bound(self, rho):
        return 12 * self.scale * rho * rho

    def to_spec(self):
        return {"kind": "quartic", "scale": self.scale}


def nonconvex_from_spec(spec: dict) -> NonconvexTerm:
    kind = spec.get("kind", "zero")
    if kind == "zero":
        return ZeroTerm()
    if kind == "doublewell":
        return DoubleWell(spec.get("scale", 1.0))
    if kind == "quartic":
        return Quartic(spec.get("scale", 1.0))
    raise ValueError(f"unknown nonconvex term {kind!r}")


@dataclass(frozen=True, eq=False)
class SemilinearEnergy:
    """E(t, z) = 1/2 <Az, z> + F(z) - <l(t), z>."""

    A: SpdOperator
    F: NonconvexTerm
    load: "BVLoad"  # noqa: F821

    def __post_init__(self):
        if self.load.dim != self.A.dim:
            raise ValueError("load and operator dimensions differ")

    @property
    def dim(self) -> int:
        return self.A.dim

    def internal(self, z):
        z = np.asarray(z, dtype=float)
        return _finite(0.5 * np.sum(self.A.apply(z) * z, axis=-1) + self.F.value(z), "internal energy")

    def internal_grad(self, z):
        z = np.asarray(z, dtype=float)
        return _finite(self.A.apply(z) + self.F.gradient(z), "internal energy gradient")

    def internal_hessian(self, z):
        return self.A.entries + self.F.hessian(z)

    def __call__(self, t, z, side: str = "at"):
        return energy(self, t, z, side)


def energy(E: SemilinearEnergy, t: float, z, side: str = "at") -> float:
    ell = E.load.eval(t, side)
    return _finite(E.internal(z) - np.sum(ell * np.asarray(z, dtype=float), axis=-1), "energy")


def grad_E(E: SemilinearEnergy, t: float, z, side: str = "at"):
    return _finite(E.internal_grad(z) - E.load.eval(t, side), "energy gradient")


def dissipation_R(R: Dissipation, v):
    return R(v)


def dist_V(R: Dissipation, V: SpdOperator, w, tol: float = PROJ_TOL,
           max_iter: int = PROJ_MAX_ITER):
    """Distance in the dual metric of V from w to the box, and the nearest point.

    Closed form when V is diagonal; otherwise accelerated projected gradient
    on 1/2 <V^{-1}(w - xi), w - xi> over the box.
    """
    w = np.asarray(w, dtype=float)
    r = R.weights
    if V.is_diagonal:
        xi = np.clip(w, -r, r)
        return V.dual_norm(w - xi), xi
    if w.ndim == 2:
        out = [dist_V(R, V, row, tol, max_iter) for row in w]
        return np.array([d for d, _ in out]), np.array([x for _, x in out])
    W = V.inverse
    step = 1.0 / np.linalg.eigvalsh(W)[-1]
    xi = np.clip(w, -r, r)
    y, x_old, theta = xi.copy(), xi.copy(), 1.0
    for _ in range(max_iter):
        x_new = np.clip(y - step * (W @ (y - w)), -r, r)
        fixed = np.clip(x_new - step * (W @ (x_new - w)), -r, r)
        if np.max(np.abs(fixed - x_new)) <= tol * step:
            xi = fixed
            break
        theta_new = 0.5 * (1 + np.sqrt(1 + 4 * theta * theta))
        if np.dot(W @ (x_new - w), x_new - x_old) > 0:
            theta_new, y = 1.0, x_new.copy()  # adaptive restart
        else:
            y = x_new + ((theta - 1) / theta_new) * (x_new - x_old)
        x_old, theta = x_new, theta_new
    else:
        res = float(np.max(np.abs(np.clip(x_new - step * (W @ (x_new - w)), -r, r) - x_new)) / step)
        raise ProjectionNotConverged(res)
    return float(V.dual_norm(w - xi)), xi


def conjugate_R_eps(R: Dissipation, V: SpdOperator, eps: float, w):
    if eps <= 0:
        raise ValueError("viscosity must be positive")
    d, _ = dist_V(R, V, w)
    return d * d / (2 * eps)


def viscous_dissipation(R: Dissipation, V: SpdOperator, eps: float, v):
    """R_eps(v) = R(v) + eps/2 ||v||_V^2."""
    nv = V.norm(v)
    return R(v) + 0.5 * eps * nv * nv


def contact_potential(R: Dissipation, V: SpdOperator, v, w):
    d, _ = dist_V(R, V, w)
    return R(v) + V.norm(v) * d


def probe_min_curvature(F: NonconvexTerm, dim: int, rho: float, n_probe: int = 401,
                        seed: int = 0) -> float:
    """Smallest Hessian eigenvalue of F seen on a probe set in the rho-ball."""
    if dim == 1:
        pts = np.linspace(-rho, rho, n_probe)[:, None]
    else:
        rng = np.random.default_rng(seed)
        dirs = rng.normal(size=(n_probe, dim))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        radii = rho * rng.random(n_probe) ** (1 / dim)
        axes = np.concatenate([np.eye(dim) * s for s in np.linspace(-rho, rho, 21)])
        pts = np.vstack([np.zeros((1, dim)), dirs * radii[:, None], axes])
    return float(min(np.linalg.eigvalsh(F.hessian(p))[0] for p in pts))


def calibrate_lambda(F: NonconvexTerm, V: SpdOperator, rho: float, inflate: float = 1.1) -> float:
    """Semiconvexity defect lambda(rho) measured in the V-metric, inflated by 10%."""
    mu = F.min_curvature(rho)
    if mu is None:
        mu = probe_min_curvature(F, V.dim, rho)
    return inflate * max(0.0, -mu) / V.ellipticity


def lambda_convexity_probe(E: SemilinearEnergy, V: SpdOperator, t: float, z1, z2, rho: float,
                           lam: float | None = None):
    """Both sides of <DE(z1) - DE(z2), z1 - z2> >= alpha/2 |z1 - z2|^2 - lam ||z1 - z2||_V^2."""
    if lam is None:
        lam = calibrate_lambda(E.F, V, rho)
    dz = np.asarray(z1, dtype=float) - np.asarray(z2, dtype=float)
    lhs = float(np.dot(grad_E(E, t, z1) - grad_E(E, t, z2), dz))
    rhs = float(0.5 * E.A.ellipticity * dz @ dz - lam * V.norm(dz) ** 2)
    return lhs, rhs


def curvature_bound(F: NonconvexTerm, dim: int, rho: float) -> tuple[float, bool]:
    """Upper bound on |D^2 F| over the rho-ball and whether it is rigorous."""
    bound = F.curvature_bound(rho)
    if bound is not None:
        return float(bound), True
    if dim == 1:
        pts = np.linspace(-rho, rho, 401)[:, None]
    else:
        rng = np.random.default_rng(0)
        pts = rng.normal(size=(400, dim))
        pts *= rho / np.linalg.norm(pts, axis=1, keepdims=True)
    return 1.1 * float(max(np.abs(np.linalg.eigvalsh(F.hessian(p))).max() for p in pts)), False


def interpolation_constant(F: NonconvexTerm, R: Dissipation, V: SpdOperator, rho: float,
                           kappa: float) -> tuple[float, bool]:
    """Constant C with |<DF(z1)-DF(z2), d>| <= kappa |d|^2 + C R(d) ||d||_V on the rho-ball.

    Uses |d|^2 <= |d|_1 |d|_2 <= R(d) ||d||_V / (min r * sqrt(gamma_V)).
    """
    lip, rigorous = curvature_bound(F, V.dim, rho)
    c = max(0.0, lip - kappa) / (R.weights.min() * np.sqrt(V.ellipticity))
    return float(c), rigorous


@dataclass(frozen=True, eq=False)
class Problem:
    """A complete rate-independent system: energy, dissipation, viscosity metric, initial state."""

    energy: SemilinearEnergy
    R: Dissipation
    V: SpdOperator
    z0: np.ndarray

    def __post_init__(self):
        z0 = np.atleast_1d(np.asarray(self.z0, dtype=float)).copy()
        n = self.energy.dim
        if z0.shape != (n,) or self.R.dim != n or self.V.dim != n:
            raise ValueError("problem dimensions are inconsistent")
        z0.setflags(write=False)
        object.__setattr__(self, "z0", z0)

    @property
    def dim(self) -> int:
        return self.energy.dim

    @property
    def load(self):
        return self.energy.load

    @property
    def T(self) -> float:
        return self.energy.load.T

    @property
    def alpha(self) -> float:
        return self.energy.A.ellipticity

    @property
    def c_Z(self) -> float:
        """Embedding constant with ||v||_V <= c_Z |v|."""
        return float(np.sqrt(self.V.max_eig))

    def with_load(self, load) -> "Problem":
        return Problem(SemilinearEnergy(self.energy.A, self.energy.F, load), self.R, self.V, self.z0)
