"""Time-incremental minimization, trajectory assembly and a-priori estimate ledgers."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bvload import PiecewiseLinearCurve
from .errors import InnerSolverStalled, LineSearchFailure
from .model import (
    Dissipation,
    Problem,
    SemilinearEnergy,
    SpdOperator,
    calibrate_lambda,
    dist_V,
    energy,
    grad_E,
    interpolation_constant,
    viscous_dissipation,
)

TOL_INNER = 1e-9
MAX_INNER = 50_000
LEDGER_SLACK = 1e-8


@dataclass(frozen=True, eq=False)
class Partition:
    times: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).copy()
        if t.ndim != 1 or t.size < 2 or t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise ValueError("partition times must start at 0 and increase strictly")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    @classmethod
    def uniform(cls, T: float, N: int, breakpoints=()) -> "Partition":
        t = np.linspace(0.0, T, N + 1)
        t[-1] = T
        return cls(_merge_breakpoints(t, breakpoints))

    @classmethod
    def for_viscosity(cls, T: float, eps: float, c_mesh: float, breakpoints=()) -> "Partition":
        """Equal steps of length <= c_mesh * eps inside every interval between breakpoints."""
        if eps <= 0 or c_mesh <= 0:
            raise ValueError("eps and c_mesh must be positive")
        knots = np.unique(np.concatenate([[0.0, T], [b for b in breakpoints if 0 < b < T]]))
        pieces = [np.zeros(1)]
        for a, b in zip(knots[:-1], knots[1:]):
            n = int(np.ceil((b - a) / (c_mesh * eps) - 1e-12))
            seg = a + (b - a) * np.arange(1, n + 1) / n
            seg[-1] = b
            pieces.append(seg)
        return cls(np.concatenate(pieces))

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def N(self) -> int:
        return self.times.size - 1

    @property
    def tau(self) -> np.ndarray:
        return np.diff(self.times)

    @property
    def fineness(self) -> float:
        return float(self.tau.max())

    def rescale(self, factor: float) -> "Partition":
        return Partition(self.times * factor)


def _merge_breakpoints(t, breakpoints):
    inner = [b for b in breakpoints if 0 < b < t[-1]]
    return np.unique(np.concatenate([t, inner]))


@dataclass
class StepResult:
    z: np.ndarray
    residual: float
    iterations: int
    objective: float
    starts: int = 1


class _StepProblem:
    """E(t_k, v) + R(v - z_prev) + eps/(2 tau) ||v - z_prev||_V^2 split into smooth + prox part."""

    def __init__(self, E: SemilinearEnergy, R: Dissipation, V: SpdOperator, t_k, tau, eps, z_prev):
        self.E, self.R, self.V = E, R, V
        self.ell = E.load.eval(t_k)
        self.c = eps / tau
        self.zp = np.asarray(z_prev, dtype=float)
        self.r = R.weights

    def smooth(self, v):
        d = v - self.zp
        return float(self.E.internal(v) - self.ell @ v + 0.5 * self.c * d @ self.V.apply(d))

    def grad(self, v):
        return self.E.internal_grad(v) - self.ell + self.c * self.V.apply(v - self.zp)

    def hessian(self, v):
        return self.E.internal_hessian(v) + self.c * self.V.entries

    def objective(self, v):
        return self.smooth(v) + float(self.R(v - self.zp))

    def prox(self, y, gamma):
        d = y - self.zp
        return self.zp + np.sign(d) * np.maximum(np.abs(d) - gamma * self.r, 0.0)

    def residual(self, v, g=None):
        """Violation of the first-order inclusion, componentwise max."""
        g = -(self.grad(v) if g is None else g)
        d = v - self.zp
        moving = d != 0
        res = np.where(moving, np.abs(g - self.r * np.sign(d)), np.maximum(np.abs(g) - self.r, 0.0))
        return float(res.max()) if res.size else 0.0

    def scale(self):
        return max(1.0, float(np.abs(self.ell).max()), float(self.r.max()))


def _newton_polish(P: _StepProblem, x, tol, max_newton=50):
    """Semismooth Newton on the free coordinates with fixed signs; returns None when it cannot help."""
    d = x - P.zp
    free = d != 0
    if not free.any():
        return x
    sigma = np.sign(d[free])
    phi = P.objective(x)
    for _ in range(max_newton):
        g = P.grad(x)
        F = g[free] + P.r[free] * sigma
        if np.abs(F).max() <= 0.1 * tol:
            return x
        H = P.hessian(x)[np.ix_(free, free)]
        try:
            np.linalg.cholesky(H)
        except np.linalg.LinAlgError:
            return None
        step = np.linalg.solve(H, -F)
        alpha = 1.0
        while alpha > 1e-8:
            y = x.copy()
            y[free] = x[free] + alpha * step
            if np.all(np.sign(y[free] - P.zp[free]) == sigma):
                phi_y = P.objective(y)
                if phi_y <= phi + 1e-14 * max(1.0, abs(phi)):
                    break
            alpha *= 0.5
        else:
            return None
        x, phi = y, phi_y
    return x


def _local_minimize(P: _StepProblem, x0, tol, max_iter, step=None):
    x = P.prox(np.asarray(x0, dtype=float), 0.0)
    L = 1.0 / step if step else (P.E.A.max_eig + P.c * P.V.max_eig
                                 + float(np.abs(np.linalg.eigvalsh(P.E.F.hessian(x))).max()) + 1e-12)
    fx, g = P.smooth(x), P.grad(x)
    phi = fx + float(P.R(x - P.zp))
    scale = P.scale()
    best, best_res = x, P.residual(x, g)
    for it in range(1, max_iter + 1):
        res = P.residual(x, g)
        if res < best_res:
            best, best_res = x, res
        if res <= tol * scale:
            return x, res, it - 1
        if it % 5 == 1:
            y = _newton_polish(P, x, tol * scale)
            if y is not None:
                ry = P.residual(y)
                if ry <= tol * scale:
                    return y, ry, it
                if P.objective(y) <= phi:
                    x, fx, g = y, P.smooth(y), P.grad(y)
                    phi = fx + float(P.R(x - P.zp))
        while True:
            y = P.prox(x - g / L, 1.0 / L)
            d = y - x
            fy = P.smooth(y)
            if fy <= fx + g @ d + 0.5 * L * (d @ d) + 1e-15 * max(1.0, abs(fx)):
                break
            L *= 2.0
            if L > 1e30:
                raise LineSearchFailure("backtracking could not find a descent step")
        phi_y = fy + float(P.R(y - P.zp))
        if phi_y > phi + 1e-12 * max(1.0, abs(phi)):
            raise LineSearchFailure(f"objective increased from {phi} to {phi_y}")
        if np.array_equal(y, x):
            # fixed point of the prox-gradient map: stationary up to rounding
            return x, P.residual(x, g), it
        x, fx, phi = y, fy, phi_y
        g = P.grad(x)
        L = max(L * 0.8, 1e-12)
    raise InnerSolverStalled(f"inner solver stalled after {max_iter} iterations", best, best_res)


def incremental_step(E: SemilinearEnergy, R: Dissipation, V: SpdOperator, t_k: float, tau: float,
                     eps: float, z_prev, warm_start=None, *, tol: float = TOL_INNER,
                     max_iter: int = MAX_INNER, lam: float = 0.0, seed: int = 0) -> StepResult:
    """One step z_k in argmin E(t_k, v) + R(v - z_prev) + eps/(2 tau) ||v - z_prev||_V^2.

    When eps / tau <= lam the step may be nonconvex and several starts are
    tried; the lowest objective wins, ties go to the smallest
    ||v - z_prev||_V and then to lexicographic order.
    """
    if tau <= 0 or eps < 0:
        raise ValueError("need tau > 0 and eps >= 0")
    P = _StepProblem(E, R, V, t_k, tau, eps, z_prev)
    zp = P.zp
    starts = [zp if warm_start is None else np.asarray(warm_start, dtype=float)]
    if P.c <= lam:
        force = grad_E(E, t_k, zp)
        kick = max(tau, 1e-6) * max(1.0, float(np.abs(force).max()))
        starts.append(zp)
        for i in range(zp.size):
            for sgn in (1.0, -1.0):
                s = zp.copy()
                s[i] += sgn * kick
                starts.append(s)
        starts.append(zp - tau * V.solve(force))
        order = np.random.default_rng(seed).permutation(len(starts))
        starts = [starts[i] for i in order]
    candidates, total_it = [], 0
    for x0 in starts:
        x, res, it = _local_minimize(P, x0, tol, max_iter)
        total_it += it
        candidates.append((P.objective(x), float(V.norm(x - zp)), tuple(x), x, res))
    if len(candidates) > 1:
        top = min(c[0] for c in candidates)
        near = [c for c in candidates if c[0] <= top + 1e-12 * max(1.0, abs(top))]
        near.sort(key=lambda c: (c[1], c[2]))
        chosen = near[0]
    else:
        chosen = candidates[0]
    return StepResult(chosen[3], chosen[4], total_it, chosen[0], len(starts))


@dataclass(frozen=True, eq=False)
class DiscreteTrajectory:
    problem: Problem
    partition: Partition
    eps: float
    states: np.ndarray
    residuals: np.ndarray
    iterations: np.ndarray
    energies: np.ndarray
    dissipation: np.ndarray
    lam: float
    meta: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return self.partition.times

    @property
    def N(self) -> int:
        return self.partition.N

    def loads(self) -> np.ndarray:
        """Designated load values l(t_k) used by each step (row 0 is l(0))."""
        return np.array([self.problem.load.eval(t) for t in self.times])

    def interpolants(self) -> "Interpolants":
        return Interpolants(self)

    def sup_distance(self, other: "DiscreteTrajectory") -> float:
        return float(np.abs(self.states - other.states).max())


class Interpolants:
    """Affine, left-constant and right-constant interpolants of a discrete trajectory."""

    def __init__(self, traj: DiscreteTrajectory):
        self.traj = traj
        self.affine = PiecewiseLinearCurve(traj.times, traj.states)

    def _index(self, t):
        times = self.traj.times
        return np.clip(np.searchsorted(times, t, side="left"), 1, times.size - 1)

    def right(self, t):
        """z-bar: value z_k on (t_{k-1}, t_k]; z_0 at t = 0."""
        t = np.asarray(t, dtype=float)
        k = np.where(t <= 0, 0, self._index(t))
        return self.traj.states[k]

    def left(self, t):
        """z-underbar: value z_{k-1} on [t_{k-1}, t_k); z_N at t = T."""
        t = np.asarray(t, dtype=float)
        times = self.traj.times
        k = np.clip(np.searchsorted(times, t, side="right") - 1, 0, times.size - 1)
        return self.traj.states[k]

    def t_bar(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t <= 0, 0.0, self.traj.times[self._index(t)])


def ball_radius(problem: Problem) -> float:
    """Radius bounding every incremental state by the coercivity estimate."""
    c = estimate_constants(problem)
    return c["rho"]


def estimate_constants(problem: Problem) -> dict:
    E, R, V = problem.energy, problem.R, problem.V
    load = problem.load
    alpha, c_Z = problem.alpha, problem.c_Z
    sup_l = load.sup_norm(V)
    var = load.variation(V)
    c0 = c_Z**2 / alpha * (1 + sup_l**2)
    E0 = float(energy(E, 0.0, problem.z0))
    rho = (E0 + c0) * np.exp(var) / c_Z
    C_tilde = (E0 + c0) * (1 + var * np.exp(var))
    C_I, rigorous = interpolation_constant(E.F, R, V, rho, alpha / 2)
    dist0, _ = dist_V(R, V, -grad_E(E, 0.0, problem.z0))
    return dict(alpha=alpha, c_Z=c_Z, c_V=1.0, gamma=V.ellipticity, sup_load=sup_l, var=var, c0=c0,
                E0=E0, rho=rho, C_tilde=C_tilde, C_I=C_I, C_I_rigorous=rigorous, dist0=float(dist0),
                C1=float(dist0) + var + C_I * C_tilde, diam=R.diameter(V))


def solve_trajectory(E: SemilinearEnergy, R: Dissipation, V: SpdOperator, partition: Partition,
                     eps: float, z0, *, tol: float = TOL_INNER, max_iter: int = MAX_INNER,
                     warm_start: str = "previous", seed: int = 0,
                     lam: float | None = None) -> DiscreteTrajectory:
    """Run the incremental scheme over the partition.

    ``warm_start`` selects the inner solver's starting point: ``"previous"``
    (z_{k-1}), ``"extrapolate"`` (linear extrapolation) or ``"perturb"``
    (z_{k-1} plus seeded noise).
    """
    problem = Problem(E, R, V, z0)
    if abs(partition.T - E.load.T) > 1e-12 * max(1.0, E.load.T):
        raise ValueError("partition and load horizons differ")
    if lam is None:
        lam = calibrate_lambda(E.F, V, estimate_constants(problem)["rho"])
    rng = np.random.default_rng(seed)
    N = partition.N
    states = np.empty((N + 1, problem.dim))
    states[0] = problem.z0
    residuals, iterations, diss = np.zeros(N), np.zeros(N, dtype=int), np.zeros(N)
    energies = np.empty(N + 1)
    energies[0] = energy(E, 0.0, problem.z0)
    max_starts = 1
    for k in range(1, N + 1):
        t, tau = partition.times[k], partition.times[k] - partition.times[k - 1]
        zp = states[k - 1]
        if warm_start == "extrapolate" and k > 1:
            ws = 2 * zp - states[k - 2]
        elif warm_start == "perturb":
            ws = zp + 0.1 * rng.standard_normal(zp.size)
        else:
            ws = None
        try:
            step = incremental_step(E, R, V, t, tau, eps, zp, ws, tol=tol, max_iter=max_iter,
                                    lam=lam, seed=int(rng.integers(2**31)))
        except (InnerSolverStalled, LineSearchFailure) as err:
            err.step = k
            raise
        states[k] = step.z
        residuals[k - 1] = step.residual
        iterations[k - 1] = step.iterations
        max_starts = max(max_starts, step.starts)
        energies[k] = energy(E, t, step.z)
        diss[k - 1] = viscous_dissipation(R, V, eps / tau, step.z - zp) if eps > 0 else R(step.z - zp)
    meta = {"warm_start": warm_start, "seed": seed, "max_starts": max_starts,
            "selection": "lowest objective, then smallest V-distance, then lexicographic"}
    return DiscreteTrajectory(problem, partition, float(eps), states, residuals, iterations,
                              energies, diss, float(lam), meta)


@dataclass(frozen=True)
class LedgerEntry:
    id: str
    lhs: float
    rhs: float
    margin: float
    passed: bool
    note: str = ""

    def to_dict(self) -> dict:
        return {"id": self.id, "lhs": self.lhs, "rhs": self.rhs, "margin": self.margin,
                "pass": self.passed, "note": self.note}


def _entry(id_, lhs, rhs, note="", slack=LEDGER_SLACK):
    """Worst case over arrays of (lhs, rhs) pairs of the inequality lhs <= rhs."""
    lhs, rhs = np.atleast_1d(lhs).astype(float), np.atleast_1d(rhs).astype(float)
    margin = rhs - lhs
    i = int(np.argmin(margin))
    tol = slack * max(1.0, abs(rhs[i]), abs(lhs[i]))
    return LedgerEntry(id_, float(lhs[i]), float(rhs[i]), float(margin[i]), bool(margin[i] >= -tol), note)


def check_basic_estimates(traj: DiscreteTrajectory) -> list[LedgerEntry]:
    """Coercivity, product estimate and the five basic estimates of the incremental scheme."""
    pb = traj.problem
    E, V = pb.energy, pb.V
    c = estimate_constants(pb)
    times, z = traj.times, traj.states
    loads = traj.loads()
    var_k = np.array([pb.load.variation(V, 0.0, t) for t in times])
    growth = (c["E0"] + c["c0"]) * np.exp(var_k)
    norms = np.linalg.norm(z, axis=1)
    cum_diss = np.concatenate([[0.0], np.cumsum(traj.dissipation)])
    I = E.internal(z)
    dl = np.diff(loads, axis=0)
    dz = np.diff(z, axis=0)
    power_19 = np.concatenate([[0.0], np.cumsum(np.sum(-dl * z[:-1], axis=1))])
    power_20 = np.concatenate([[0.0], np.cumsum(np.sum(loads[1:] * dz, axis=1))])
    dl_norm = V.dual_norm(dl)
    entries = [
        _entry("coercivity", c["c_Z"] * norms, traj.energies + c["c0"], "coercivity at every state"),
        _entry("load_product", np.prod(1 + dl_norm), np.exp(np.sum(dl_norm)),
               f"product over load increments; exp(Var)={np.exp(c['var']):.6g}"),
        _entry("state_bound", norms, growth / c["c_Z"]),
        _entry("energy_bound", np.concatenate([c["c0"] + traj.energies, -(c["c0"] + traj.energies)]),
               np.concatenate([growth, np.zeros_like(growth)]), "two-sided: 0 <= c0 + E <= bound"),
        _entry("dissipation_bound", cum_diss[-1], c["C_tilde"]),
        _entry("energy_balance", traj.energies + cum_diss, c["E0"] + power_19,
               "power term paired with the previous state"),
        _entry("internal_energy_balance", I + cum_diss, I[0] + power_20,
               "power term uses the step's right-endpoint load"),
    ]
    return entries


def check_bv_estimates(traj: DiscreteTrajectory) -> list[LedgerEntry]:
    """The refined estimates on increments, driving forces and rates."""
    pb = traj.problem
    E, V = pb.energy, pb.V
    c = estimate_constants(pb)
    dz = np.diff(traj.states, axis=0)
    tau = traj.partition.tau
    visc = traj.eps / tau * V.norm(dz)
    steps = np.linalg.norm(dz, axis=1)
    weighted = visc + c["alpha"] / (2 * c["c_Z"]) * np.cumsum(steps)
    literal = float(steps.sum() + (visc.max() if visc.size else 0.0))
    forces = np.array([V.dual_norm(grad_E(E, t, zk)) for t, zk in zip(traj.times, traj.states)])
    rate_sq = float(np.sum(steps**2 / tau))
    C_eps = 2 * c["C_tilde"] / (traj.eps * c["gamma"]) if traj.eps > 0 else np.inf
    flag = "" if c["C_I_rigorous"] else "; interpolation constant is a probe estimate"
    return [
        _entry("increment_bound", weighted, np.full_like(weighted, c["C1"]),
               f"alpha/(2 c_Z)-weighted increment sum; unweighted form {literal:.6g}{flag}"),
        _entry("force_bound", forces, np.full_like(forces, c["diam"] + c["C1"]), flag.lstrip("; ")),
        _entry("rate_bound", rate_sq, C_eps, "C_eps = 2 C_tilde / (eps * gamma_V)"),
    ]


def bv_constants(traj: DiscreteTrajectory) -> dict:
    """LHS values and constants of the increment and force estimates (rescaling probes)."""
    entries = {e.id: e for e in check_bv_estimates(traj)}
    c = estimate_constants(traj.problem)
    return {"lhs_increment_bound": entries["increment_bound"].lhs, "lhs_force_bound": entries["force_bound"].lhs, "C1": c["C1"],
            "rhs_force_bound": entries["force_bound"].rhs, "dist0": c["dist0"], "var": c["var"],
            "C_tilde": c["C_tilde"], "C_I": c["C_I"]}


@dataclass(frozen=True, eq=False)
class EdpCheck:
    times: np.ndarray
    residual: np.ndarray
    bound: np.ndarray
    slack: float

    @property
    def passed(self) -> bool:
        return bool(np.all(self.residual <= self.bound + self.slack))

    @property
    def max_excess(self) -> float:
        return float(np.max(self.residual - self.bound))


def check_discrete_edp(traj: DiscreteTrajectory, sub_nodes: int = 8) -> EdpCheck:
    """Discrete energy-dissipation balance along the affine interpolant.

    Every term is constant per step except I along the interpolant, which is
    evaluated exactly at the sub-nodes, so the residual carries no
    quadrature error.
    """
    if traj.eps <= 0:
        raise ValueError("viscosity must be positive")
    pb = traj.problem
    E, R, V = pb.energy, pb.R, pb.V
    times, z, eps = traj.times, traj.states, traj.eps
    loads = traj.loads()
    tau = traj.partition.tau
    theta = np.arange(1, sub_nodes + 1) / sub_nodes
    I0 = float(E.internal(z[0]))
    out_t, out_r, out_b = [0.0], [0.0], [0.0]
    acc, acc_b, slack = 0.0, 0.0, 0.0
    for k in range(1, traj.N + 1):
        dz = z[k] - z[k - 1]
        rate = dz / tau[k - 1]
        d, _ = dist_V(R, V, -grad_E(E, times[k], z[k]))
        per_time = viscous_dissipation(R, V, eps, rate) + d * d / (2 * eps) - loads[k] @ rate
        defect = traj.lam * tau[k - 1] * float(V.norm(rate)) ** 2
        sub_t = times[k - 1] + theta * tau[k - 1]
        sub_z = z[k - 1] + theta[:, None] * dz
        out_t.extend(sub_t)
        out_r.extend(E.internal(sub_z) - I0 + acc + theta * tau[k - 1] * per_time)
        out_b.extend(acc_b + defect * theta * tau[k - 1])
        acc += tau[k - 1] * per_time
        acc_b += tau[k - 1] * defect
        slack += traj.residuals[k - 1] * (np.abs(dz).sum() + tau[k - 1] * traj.residuals[k - 1] / eps)
    scale = max(1.0, abs(I0), float(np.abs(out_r).max()))
    return EdpCheck(np.array(out_t), np.array(out_r), np.array(out_b), slack + 1e-12 * scale)
