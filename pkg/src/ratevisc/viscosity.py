"""Arc-length reparameterization, the vanishing-viscosity sweep and limit certificates.

A viscous trajectory is reparameterized by s = t + int p(z', -DE) along its
affine interpolant. Within step k the load is frozen at l(t_k), the value
the incremental problem used, so the discrete trajectory and the curve
describe the same energetics. The curve keeps that load per segment; all
derived fields (rates, distances, G, multiplier, certificates) are
recomputed from the stored nodes, which is what makes replays from CSV
exact.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .bvload import BVLoad, PiecewiseLinearCurve, kurzweil_bv_dg_trace
from .errors import ReparameterizationFailed, SweepNotConverged
from .incremental import (
    DiscreteTrajectory,
    LedgerEntry,
    Partition,
    check_basic_estimates,
    check_bv_estimates,
    check_discrete_edp,
    solve_trajectory,
)
from .model import Problem, dist_V

SUB_NODES = 8
DELTA_G_REL = 1e-6


def _dist(problem: Problem, eta):
    d, _ = dist_V(problem.R, problem.V, eta)
    return np.asarray(d, dtype=float)


@dataclass(frozen=True, eq=False)
class ParameterizedCurve:
    problem: Problem
    eps: float
    s: np.ndarray
    t: np.ndarray
    z: np.ndarray
    seg_load: np.ndarray
    seg_step: np.ndarray
    sub_nodes: int = SUB_NODES
    quad_error: float = 0.0
    inner_budget: float = 0.0

    @property
    def S(self) -> float:
        return float(self.s[-1])

    @property
    def T(self) -> float:
        return float(self.t[-1])

    @property
    def M(self) -> int:
        return self.s.size - 1

    @cached_property
    def ds(self):
        return np.diff(self.s)

    @cached_property
    def dz(self):
        return np.diff(self.z, axis=0)

    @cached_property
    def t_rate(self):
        return np.diff(self.t) / self.ds

    @cached_property
    def z_rate(self):
        return self.dz / self.ds[:, None]

    @cached_property
    def R_rate(self):
        return self.problem.R(self.z_rate)

    @cached_property
    def V_rate(self):
        return self.problem.V.norm(self.z_rate)

    @cached_property
    def _forces(self):
        E = self.problem.energy
        DI = E.internal_grad(self.z)
        mid = 0.5 * (self.z[:-1] + self.z[1:])
        return DI, self.seg_load - DI[:-1], self.seg_load - DI[1:], self.seg_load - E.internal_grad(mid)

    @cached_property
    def dist_lo(self):
        return _dist(self.problem, self._forces[1])

    @cached_property
    def dist_hi(self):
        return _dist(self.problem, self._forces[2])

    @cached_property
    def dist_mid(self):
        return _dist(self.problem, self._forces[3])

    @cached_property
    def dist_field(self):
        """dist at each node with the node's designated load (left segment at step boundaries)."""
        return np.concatenate([self.dist_lo[:1], self.dist_hi])

    @cached_property
    def m_field(self):
        """Minimum of dist over the designated and one-sided load values at each node."""
        inner = np.minimum(self.dist_hi[:-1], self.dist_lo[1:])
        return np.concatenate([self.dist_lo[:1], inner, self.dist_hi[-1:]])

    @cached_property
    def seg_dist(self):
        """Trapezoid average per segment, the value used in the arc-length quadrature."""
        return 0.5 * (self.dist_lo + self.dist_hi)

    @cached_property
    def ell_hat(self) -> BVLoad:
        change = np.flatnonzero(np.diff(self.seg_step) != 0) + 1
        bps = np.concatenate([[0.0], self.s[change], [self.S]])
        starts = np.concatenate([[0], change])
        vals = self.seg_load[starts]
        return BVLoad(bps, vals, np.zeros_like(vals), ("left",) * (len(starts) - 1))

    @cached_property
    def z_curve(self) -> PiecewiseLinearCurve:
        return PiecewiseLinearCurve(self.s, self.z)

    def normalization_residual(self, G: "GSet | None" = None, quadrature: str = "mid"):
        """Per-segment |t' + R[z'] + ||z'||_V dist - 1|.

        ``quadrature="mid"`` evaluates dist at the segment midpoint (an
        independent check of the trapezoid rule used to build s);
        ``"trap"`` uses the trapezoid value itself. With ``G`` the viscous
        term only counts on G, as in the limit identity.
        """
        d = self.dist_mid if quadrature == "mid" else self.seg_dist
        visc = self.V_rate * d
        if G is not None:
            visc = np.where(G.seg_mask, visc, 0.0)
        return np.abs(self.t_rate + self.R_rate + visc - 1.0)

    def complementarity_sq(self) -> float:
        """Integral of (t' dist)^2 ds, trapezoid in dist^2."""
        return float(np.sum(self.t_rate**2 * 0.5 * (self.dist_lo**2 + self.dist_hi**2) * self.ds))

    def resample(self, grid):
        """t and z on a grid, extended by their end values past S."""
        t = np.interp(grid, self.s, self.t)
        z = np.stack([np.interp(grid, self.s, self.z[:, j]) for j in range(self.z.shape[1])], axis=1)
        return t, z

    def physical_value(self, t: float) -> np.ndarray:
        """State at physical time t (the latest arc-length point with that time)."""
        j = int(np.searchsorted(self.t, t, side="right")) - 1
        j = min(max(j, 0), self.M)
        if j == self.M or self.t[j] == t:
            return self.z[j].copy()
        w = (t - self.t[j]) / (self.t[j + 1] - self.t[j])
        return self.z[j] + w * (self.z[j + 1] - self.z[j])


def _step_arc_lengths(problem, z_prev, dz, rate, load, tau, m):
    """Arc-length increments of the m sub-segments of every step (shape (N, m))."""
    N, n = dz.shape
    theta = np.arange(m + 1) / m
    pts = z_prev[:, None, :] + theta[None, :, None] * dz[:, None, :]
    eta = load[:, None, :] - problem.energy.internal_grad(pts.reshape(-1, n)).reshape(N, m + 1, n)
    d = _dist(problem, eta.reshape(-1, n)).reshape(N, m + 1)
    p = problem.R(rate)[:, None] + problem.V.norm(rate)[:, None] * d
    return (tau / m)[:, None] * (1 + 0.5 * (p[:, :-1] + p[:, 1:])), pts


def reparameterize(traj: DiscreteTrajectory, sub_nodes: int = SUB_NODES) -> ParameterizedCurve:
    if traj.eps <= 0:
        raise ValueError("reparameterization needs a positive viscosity")
    pb = traj.problem
    tau = traj.partition.tau
    z = traj.states
    dz = np.diff(z, axis=0)
    rate = dz / tau[:, None]
    load = traj.loads()[1:]
    ds, pts = _step_arc_lengths(pb, z[:-1], dz, rate, load, tau, sub_nodes)
    ds2, _ = _step_arc_lengths(pb, z[:-1], dz, rate, load, tau, 2 * sub_nodes)
    quad_error = float(np.sum(np.abs(ds.sum(axis=1) - ds2.sum(axis=1))))
    if not np.all(ds > 0):
        raise ReparameterizationFailed("arc length is not strictly increasing")
    N, n = dz.shape
    m = sub_nodes
    s = np.concatenate([[0.0], np.cumsum(ds.ravel())])
    theta = np.arange(1, m + 1) / m
    t = np.concatenate([[0.0], (traj.times[:-1, None] + theta[None, :] * tau[:, None]).ravel()])
    t[m::m] = traj.times[1:]
    zz = np.vstack([z[:1], pts[:, 1:, :].reshape(-1, n)])
    zz[m::m] = z[1:]
    seg_step = np.repeat(np.arange(1, N + 1), m)
    seg_load = np.repeat(load, m, axis=0)
    inner = float(np.sum(traj.residuals * np.abs(dz).sum(axis=1)))
    return ParameterizedCurve(pb, traj.eps, s, t, zz, seg_load, seg_step, m, quad_error, inner)


def g_threshold(problem: Problem, eps: float, rate_cap: float | None = None) -> float:
    """Threshold on m for membership in G.

    Off G a viscous curve still carries dist = eps * (physical rate), so a
    fixed absolute threshold would put every moving stretch into G. With a
    rate cap the threshold becomes eps * rate_cap, never below the absolute
    floor.
    """
    floor = DELTA_G_REL * problem.R.diameter(problem.V)
    if rate_cap is None:
        return floor
    return max(floor, rate_cap * eps)


@dataclass(frozen=True, eq=False)
class GSet:
    mask: np.ndarray
    seg_mask: np.ndarray
    runs: list
    delta: float

    @property
    def intervals(self) -> list[tuple[float, float]]:
        return [(a, b) for a, b, _, _ in self.runs]

    def __len__(self):
        return len(self.runs)


def detect_G(curve: ParameterizedCurve, delta: float | None = None,
             merge_gap: int | None = None) -> GSet:
    """Nodes where m exceeds delta, grouped into maximal runs.

    Within a step the load is frozen, so dist carries a saw-tooth of one
    step's load increment. Gaps no longer than one step (``merge_gap``
    nodes, default the sub-node count) are therefore treated as interior
    to G.
    """
    if delta is None:
        delta = g_threshold(curve.problem, curve.eps)
    merge_gap = curve.sub_nodes if merge_gap is None else merge_gap
    mask = curve.m_field > delta
    idx = np.flatnonzero(mask)
    if idx.size:
        gaps = np.flatnonzero(np.diff(idx) > 1)
        for g in gaps:
            a, b = idx[g], idx[g + 1]
            if b - a - 1 <= merge_gap:
                mask[a + 1:b] = True
    runs = []
    j = 0
    while j < mask.size:
        if mask[j]:
            k = j
            while k + 1 < mask.size and mask[k + 1]:
                k += 1
            if k > j:
                runs.append((float(curve.s[j]), float(curve.s[k]), j, k))
            else:
                mask[j] = False
            j = k + 1
        else:
            j += 1
    seg_mask = mask[:-1] & mask[1:]
    return GSet(mask, seg_mask, runs, float(delta))


@dataclass(frozen=True, eq=False)
class LambdaField:
    seg_lambda: np.ndarray
    node_residual: np.ndarray
    seg_residual: np.ndarray
    node_lambda: np.ndarray
    degenerate: bool

    @property
    def residual_max(self) -> float:
        """Worst residual at step ends, where the discrete inclusion holds."""
        return float(self.node_residual.max()) if self.node_residual.size else 0.0

    @property
    def interpolated_residual_max(self) -> float:
        """Worst residual over all sub-node segment ends (includes the frozen-load defect)."""
        return float(self.seg_residual.max()) if self.seg_residual.size else 0.0


def _inclusion_residual(problem: Problem, eta, lam, rate):
    """dist of eta - lam V rate to the box plus its complementarity defect on moving coordinates."""
    w = eta - lam[:, None] * problem.V.apply(rate)
    d = _dist(problem, w)
    r = problem.R.weights
    moving = rate != 0
    comp = np.where(moving, w - r * np.sign(rate), 0.0)
    return d + problem.V.dual_norm(comp)


def extract_lambda(curve: ParameterizedCurve, G: GSet) -> LambdaField:
    """Multiplier dist / ||z'||_V on G and the residual of the rescaled viscous inclusion.

    The residual is gated at step ends: there the incremental
    Euler-Lagrange equation holds with the step's own load, so the
    inclusion is satisfied up to the inner-solver tolerance. At interior
    sub-nodes the state differs from the step end while the load is
    frozen; that defect is reported separately.
    """
    sel = np.flatnonzero(G.seg_mask)
    vr_all = curve.V_rate
    degenerate = bool(np.any(vr_all[sel] < 1e-12))
    safe = np.where(vr_all < 1e-12, np.inf, vr_all)
    _, eta_lo, eta_hi, _ = curve._forces
    rate = curve.z_rate[sel]
    lam_lo, lam_hi = curve.dist_lo[sel] / safe[sel], curve.dist_hi[sel] / safe[sel]
    seg_res = np.maximum(_inclusion_residual(curve.problem, eta_lo[sel], lam_lo, rate),
                         _inclusion_residual(curve.problem, eta_hi[sel], lam_hi, rate))
    ends = sel[(sel + 1) % curve.sub_nodes == 0]
    node_res = _inclusion_residual(curve.problem, eta_hi[ends], curve.dist_hi[ends] / safe[ends],
                                   curve.z_rate[ends])
    seg_lambda = np.zeros(curve.M)
    seg_lambda[sel] = curve.seg_dist[sel] / safe[sel]
    node = np.zeros(curve.M + 1)
    node[:-1] = np.where(G.seg_mask, curve.dist_lo / safe, 0.0)
    node[1:] = np.where(G.seg_mask, curve.dist_hi / safe, node[1:])
    return LambdaField(seg_lambda, node_res, seg_res, node, degenerate)


@dataclass(frozen=True, eq=False)
class EdiTrace:
    s: np.ndarray
    residual: np.ndarray
    residual_eps: np.ndarray
    off_G: np.ndarray
    budget: dict

    @property
    def max_residual(self) -> float:
        return float(np.abs(self.residual).max())

    @property
    def total_budget(self) -> float:
        return float(sum(self.budget.values()))


def certify_edi(curve: ParameterizedCurve, G: GSet) -> EdiTrace:
    """Energy-dissipation identity along the curve, at every node.

    ``residual`` keeps the viscous term only on G (the limit identity);
    ``residual_eps`` keeps it everywhere (the identity of the viscous curve
    itself). Their difference is the off-G viscous mass, which vanishes with
    eps and is part of the budget.
    """
    pb = curve.problem
    E = pb.energy
    I = E.internal(curve.z)
    diss_R = np.concatenate([[0.0], np.cumsum(pb.R(curve.dz))])
    visc = pb.V.norm(curve.dz) * curve.seg_dist
    on_G = np.concatenate([[0.0], np.cumsum(np.where(G.seg_mask, visc, 0.0))])
    off_G = np.concatenate([[0.0], np.cumsum(np.where(G.seg_mask, 0.0, visc))])
    power = kurzweil_bv_dg_trace(curve.ell_hat, curve.z_curve)
    base = I - I[0] + diss_R - power
    # a priori bound on the frozen-load defect: Lipschitz in the force, which
    # moves by DI(z_k) - DI(z) along the step
    DI = curve._forces[0]
    step_end = np.concatenate([np.flatnonzero(np.diff(curve.seg_step) != 0) + 1, [curve.M]])
    end_of_seg = step_end[np.searchsorted(step_end, np.arange(1, curve.M + 1))]
    drift = np.maximum(pb.V.dual_norm(DI[:-1] - DI[end_of_seg]), pb.V.dual_norm(DI[1:] - DI[end_of_seg]))
    frozen = float(np.sum(2 * pb.V.norm(curve.dz) * drift))
    simpson = float(np.sum(pb.V.norm(curve.dz) * np.abs(curve.seg_dist - curve.dist_mid)) * 2 / 3)
    scale = max(1.0, float(np.abs(I).max()), float(np.abs(power).max()))
    budget = {"frozen_load": frozen, "quadrature": simpson, "inner_solver": curve.inner_budget,
              "off_G_viscous": float(off_G[-1]), "rounding": 1e-12 * scale * curve.M ** 0.5}
    return EdiTrace(curve.s.copy(), base + on_G, base + on_G + off_G, off_G, budget)


@dataclass(frozen=True)
class Switch:
    t_star: float
    s_star: float | None
    switches: int
    ok: bool

    def to_dict(self):
        return {"t*": self.t_star, "s*": self.s_star, "switches": self.switches, "ok": self.ok}


def characterize_ell_hat(curve: ParameterizedCurve, load: BVLoad, width: float | None = None) -> list[Switch]:
    """Check that on each jump fiber the curve's load goes from the left limit to the right limit once.

    The fiber of a jump time t* is taken as the segments whose time lies
    within ``width`` of t* (default: two time steps), which absorbs the one
    step by which a frozen-load scheme can anticipate the jump.
    """
    if width is None:
        step_dt = np.bincount(curve.seg_step, weights=np.diff(curve.t))
        width = 2 * float(step_dt.max())
    t_mid = 0.5 * (curve.t[:-1] + curve.t[1:])
    out = []
    for jump in load.jumps():
        if np.allclose(jump.left, jump.right, rtol=0, atol=0):
            continue
        sel = np.flatnonzero(np.abs(t_mid - jump.t) <= width)
        if sel.size == 0:
            out.append(Switch(jump.t, None, 0, False))
            continue
        vals = curve.seg_load[sel]
        right = np.linalg.norm(vals - jump.right, axis=1) < np.linalg.norm(vals - jump.left, axis=1)
        changes = np.flatnonzero(np.diff(right.astype(int)) != 0)
        s_star = float(curve.s[sel[changes[0]] + 1]) if changes.size else None
        ok = changes.size == 1 and not right[0] and right[-1]
        out.append(Switch(jump.t, s_star, int(changes.size), bool(ok)))
    return out


def curve_certificates(curve: ParameterizedCurve, G: GSet, load: BVLoad | None = None) -> dict:
    lam = extract_lambda(curve, G)
    edi = certify_edi(curve, G)
    switches = characterize_ell_hat(curve, load if load is not None else curve.problem.load)
    fibers = []
    for _, _, i, k in G.runs:
        fibers.append(float(curve.t[k] - curve.t[i]))
    off = ~G.mask
    return {
        "eps": curve.eps,
        "S": curve.S,
        "normalization_max": float(curve.normalization_residual().max()),
        "normalization_trapezoid_max": float(curve.normalization_residual(quadrature="trap").max()),
        "normalization_limit_max": float(curve.normalization_residual(G).max()),
        "complementarity_l2": float(np.sqrt(curve.complementarity_sq())),
        "complementarity_sq": curve.complementarity_sq(),
        "edi_max": edi.max_residual,
        "edi_eps_max": float(np.abs(edi.residual_eps).max()),
        "edi_budget": edi.total_budget,
        "edi_budget_terms": edi.budget,
        "lambda_residual_max": lam.residual_max,
        "lambda_residual_interpolated_max": lam.interpolated_residual_max,
        "lambda_degenerate": lam.degenerate,
        "delta_G": G.delta,
        "G_intervals": [list(iv) for iv in G.intervals],
        "fiber_time_spread": fibers,
        "off_G_dist_max": float(curve.dist_field[off].max()) if off.any() else 0.0,
        "time_monotone": bool(np.all(curve.t_rate >= 0)),
        "t_rate_min": float(curve.t_rate.min()),
        "t_end": curve.T,
        "T": curve.problem.T,
        "quadrature_error": curve.quad_error,
        "switches": [sw.to_dict() for sw in switches],
        "switches_ok": all(sw.ok for sw in switches),
        "var_Z": curve.z_curve.variation(),
    }


@dataclass(eq=False)
class SweepResult:
    problem: Problem
    eps_sequence: list
    trajectories: list
    curves: list
    ledgers: list
    edp: list
    G_sets: list
    certificates: list
    grid: np.ndarray
    table: list
    converged: bool
    converged_from: int | None
    rate_cap: float | None
    timings: dict = field(default_factory=dict)

    @property
    def limit(self) -> ParameterizedCurve:
        return self.curves[-1]

    @property
    def limit_G(self) -> GSet:
        return self.G_sets[-1]

    @property
    def limit_certificates(self) -> dict:
        return self.certificates[-1]

    @property
    def cauchy_tolerance(self) -> float:
        return self.table[-1]["z_sup"] if self.table else 0.0

    def physical_values(self, t: float) -> np.ndarray:
        return np.array([c.physical_value(t) for c in self.curves])

    def extrapolated_value(self, t: float) -> np.ndarray:
        """Value at physical time t extrapolated to eps = 0 from the two finest curves.

        Off the jump set the viscous lag is first order in eps, so linear
        extrapolation in eps removes it.
        """
        vals = self.physical_values(t)
        if len(vals) < 2:
            return vals[-1]
        e1, e2 = self.eps_sequence[-2], self.eps_sequence[-1]
        return (e1 * vals[-1] - e2 * vals[-2]) / (e1 - e2)


def resample_distance(a: ParameterizedCurve, b: ParameterizedCurve, grid, V) -> tuple[float, float]:
    ta, za = a.resample(grid)
    tb, zb = b.resample(grid)
    return float(V.norm(za - zb).max()), float(np.abs(ta - tb).max())


def mesh_partition(problem: Problem, eps: float, mesh) -> Partition:
    """Partition for one viscosity; ``mesh`` is c (steps <= c * eps) or an object with kind "c"/"N" and value."""
    kind, value = getattr(mesh, "kind", "c"), float(getattr(mesh, "value", mesh))
    breaks = problem.load.breakpoints[1:-1]
    if kind == "N":
        return Partition.uniform(problem.T, int(value), breaks)
    return Partition.for_viscosity(problem.T, eps, value, breaks)


def sweep(problem: Problem, eps_sequence, mesh=0.5, *, sub_nodes: int = SUB_NODES,
          rate_cap: float | None = None, delta_G: float | None = None, tol_inner: float = 1e-9,
          seed: int = 0, warm_start: str = "previous", strict: bool = False) -> SweepResult:
    """Solve, reparameterize and certify a decreasing sequence of viscosities."""
    eps_sequence = [float(e) for e in eps_sequence]
    if len(eps_sequence) < 1 or any(e <= 0 for e in eps_sequence) or any(
            b >= a for a, b in zip(eps_sequence, eps_sequence[1:])):
        raise ValueError("eps sequence must be positive and strictly decreasing")
    E, R, V = problem.energy, problem.R, problem.V
    trajs, curves, ledgers, edps, Gs, certs = [], [], [], [], [], []
    timings = {}
    for e in eps_sequence:
        t0 = time.perf_counter()
        part = mesh_partition(problem, e, mesh)
        traj = solve_trajectory(E, R, V, part, e, problem.z0, tol=tol_inner, seed=seed,
                                warm_start=warm_start)
        curve = reparameterize(traj, sub_nodes)
        G = detect_G(curve, delta_G if delta_G is not None else g_threshold(problem, e, rate_cap))
        trajs.append(traj)
        curves.append(curve)
        ledgers.append(check_basic_estimates(traj) + check_bv_estimates(traj))
        edps.append(check_discrete_edp(traj, sub_nodes))
        Gs.append(G)
        certs.append(curve_certificates(curve, G))
        timings[e] = time.perf_counter() - t0
    M = max(c.s.size for c in curves)
    grid = np.linspace(0.0, max(c.S for c in curves), M)
    table = []
    for (ea, a), (eb, b) in zip(zip(eps_sequence, curves), zip(eps_sequence[1:], curves[1:])):
        z_sup, t_sup = resample_distance(a, b, grid, V)
        table.append({"eps_a": ea, "eps_b": eb, "z_sup": z_sup, "t_sup": t_sup, "S_a": a.S, "S_b": b.S})
    converged, start = _tail_decreasing([row["z_sup"] for row in table])
    result = SweepResult(problem, eps_sequence, trajs, curves, ledgers, edps, Gs, certs, grid, table,
                         converged, start, rate_cap, timings)
    if strict and not converged:
        raise SweepNotConverged(result)
    return result


def _tail_decreasing(values) -> tuple[bool, int | None]:
    """Whether the table is non-increasing from some index on, and that index."""
    if len(values) < 2:
        return True, 0
    start = len(values) - 1
    while start > 0 and values[start] <= values[start - 1]:
        start -= 1
    return start < len(values) - 1, start


def ledger_summary(entries: list[list[LedgerEntry]]) -> list[LedgerEntry]:
    """Worst margin per inequality over several runs."""
    worst: dict[str, LedgerEntry] = {}
    for run in entries:
        for e in run:
            if e.id not in worst or e.margin < worst[e.id].margin or (worst[e.id].passed and not e.passed):
                worst[e.id] = e
    return [worst[k] for k in sorted(worst)]


NON_GATING = {"normalization_midpoint", "off_G_stability"}


def certificate_entries(cert: dict, *, tol_norm: float = 1e-6, tol_lambda: float = 1e-6,
                        comp_bound: float | None = None) -> list[LedgerEntry]:
    """Certificates of one curve as inequalities lhs <= rhs.

    ``comp_bound`` defaults to eps times the a priori energy bound, the
    order the complementarity integral is controlled by.
    """
    def entry(id_, lhs, rhs, note=""):
        lhs, rhs = float(lhs), float(rhs)
        return LedgerEntry(id_, lhs, rhs, rhs - lhs, bool(lhs <= rhs), note)

    bad_fibers = sum(not sw["ok"] for sw in cert["switches"])
    return [
        entry("normalization", cert["normalization_trapezoid_max"], tol_norm,
              "per segment, with the quadrature rule that defines s"),
        entry("normalization_midpoint", cert["normalization_max"],
              max(tol_norm, 10 * cert["quadrature_error"] + 1e-12),
              "midpoint dist; measures the quadrature error of s"),
        entry("complementarity", cert["complementarity_sq"],
              comp_bound if comp_bound is not None else np.inf, "integral of (t' dist)^2"),
        entry("edi", cert["edi_max"], cert["edi_budget"], "max over nodes of the limit-form residual"),
        entry("lambda_inclusion", cert["lambda_residual_max"], tol_lambda, "at step ends on G"),
        entry("lambda_degenerate", float(cert["lambda_degenerate"]), 0.0),
        entry("characterization", bad_fibers, 0, "jump fibers without exactly one left-to-right switch"),
        entry("time_monotone", max(0.0, -min(0.0, cert.get("t_rate_min", 0.0))), 0.0),
        entry("time_endpoint", abs(cert["t_end"] - cert["T"]), 1e-12 * max(1.0, cert["T"])),
        entry("off_G_stability", cert["off_G_dist_max"], cert["delta_G"], "dist off G"),
    ]
