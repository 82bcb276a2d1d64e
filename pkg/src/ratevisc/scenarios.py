"""Built-in benchmark problems and their independent reference solutions."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .bvload import BVLoad
from .model import DoubleWell, Dissipation, Problem, SemilinearEnergy, SpdOperator, ZeroTerm, dist_V


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    problem: Problem
    oracle: Callable | None = None
    rate_cap: float | None = None
    eps_ladder: tuple = (0.2, 0.1, 0.05, 0.025)
    params: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.problem.dim

    def initial_dist(self) -> float:
        """dist of -DE(0, z0) to the elastic box; finite for every admissible start."""
        pb = self.problem
        eta = pb.load.eval(0.0) - pb.energy.internal_grad(pb.z0)
        return float(dist_V(pb.R, pb.V, eta)[0])

    def rescaled(self, factor: float) -> "Scenario":
        """Same scenario on the time interval [0, factor * T], load reparameterized accordingly."""
        pb = self.problem.with_load(self.problem.load.rescale_time(factor))
        return Scenario(f"{self.name}@x{factor:g}", pb, None, self.rate_cap,
                        tuple(e * factor for e in self.eps_ladder), dict(self.params, time_factor=factor))


def play_oracle(load: BVLoad, a: float, r: float, z0: float, ts, sub: int = 64) -> np.ndarray:
    """Exact 1-D play/stop response sampled at times ``ts``.

    The state is clamped into [(l - r)/a, (l + r)/a] along the load; the
    recursion is exact for piecewise monotone input when every monotone
    piece is resolved, which ``sub`` points per load segment guarantee for
    affine segments.
    """
    ts = np.asarray(ts, dtype=float)
    bp = load.breakpoints
    fine = np.unique(np.concatenate([np.linspace(bp[i], bp[i + 1], sub + 1) for i in range(bp.size - 1)] + [ts]))
    out = {}
    z = float(z0)
    for i, t in enumerate(fine):
        if i > 0 and t in bp[1:-1]:
            left = float(load.eval(t, "left")[0])
            z = min(max(z, (left - r) / a), (left + r) / a)
        ell = float(load.eval(t)[0])
        z = min(max(z, (ell - r) / a), (ell + r) / a)
        out[t] = z
    return np.array([out[t] for t in ts])


def scenario_play1d(variant: str = "ramp", a: float = 1.0, r: float = 1.0, z0: float = 0.0) -> Scenario:
    """Linear spring with dry friction; ``variant`` is "ramp" (0 to 3), "step" (0 to 3 at t = 0.5) or "constant" (0.5)."""
    if variant == "ramp":
        load = BVLoad.affine(1.0, [0.0], [3.0])
    elif variant == "step":
        load = BVLoad.step(1.0, 0.5, [0.0], [3.0])
    elif variant == "constant":
        load = BVLoad.constant(1.0, [0.5])
    else:
        raise ValueError(f"unknown play variant {variant!r}")
    E = SemilinearEnergy(SpdOperator([[a]]), ZeroTerm(), load)
    pb = Problem(E, Dissipation([r]), SpdOperator.identity(1), [z0])

    def oracle(ts):
        return play_oracle(load, a, r, z0, ts)[:, None]

    return Scenario("play1d" if variant == "ramp" else f"play1d-{variant}", pb, oracle, rate_cap=5.0,
                    params={"a": a, "r": r, "z0": z0, "variant": variant})


DW_KAPPA = 0.1
DW_R = 0.1
DW_SLOPE = 0.8


def doublewell_spinodal(kappa: float = DW_KAPPA, r: float = DW_R, slope: float = DW_SLOPE):
    """Fold of the left branch: (t*, z before the snap, z after the snap).

    With h(z) = kappa z + z^3 - z the left branch loses stability where h
    has its local maximum z_s = -sqrt((1 - kappa)/3), i.e. when l - r = h(z_s).
    The cubic h(z) - h(z_s) has a double root at z_s and a simple one at -2 z_s.
    """
    zs = -np.sqrt((1 - kappa) / 3)
    hs = kappa * zs + zs**3 - zs
    return (hs + r) / slope, zs, -2 * zs


def doublewell_oracle(ts, kappa: float = DW_KAPPA, r: float = DW_R, slope: float = DW_SLOPE,
                      z0: float = -1.0, dt: float = 1e-5) -> np.ndarray:
    """Dense rate-independent stepping with local (descent) selection.

    At each step the state stays put while -DE lies in [-r, r]; otherwise
    it moves in the direction of the force to the first point where the
    force is back on the boundary of [-r, r]. That first crossing is found
    by a scan and refined with a bracketing root finder.
    """
    def h(z):
        return kappa * z + z**3 - z

    ts = np.asarray(ts, dtype=float)
    T = float(ts.max()) if ts.size else 0.0
    n = max(1, int(np.ceil(T / dt)))
    grid = np.linspace(0.0, T, n + 1)
    zs = np.empty_like(grid)
    z = z0
    for i, t in enumerate(grid):
        ell = slope * t
        f = ell - h(z)
        if abs(f) > r:
            sgn = 1.0 if f > 0 else -1.0
            target = ell - sgn * r

            def g(x):
                return h(x) - target

            step = 1e-3
            x = z
            while np.sign(g(x + sgn * step)) == np.sign(g(x)) and g(x) != 0:
                x += sgn * step
            lo, hi = sorted((x, x + sgn * step))
            z = brentq(g, lo, hi, xtol=1e-14, rtol=1e-15) if g(x) != 0 else x
        zs[i] = z
    return np.interp(ts, grid, zs)[:, None]


def scenario_doublewell1d() -> Scenario:
    """Nonconvex 1-D snap-through: weak spring plus double well, ramp load crossing the fold."""
    load = BVLoad.affine(1.0, [0.0], [DW_SLOPE])
    E = SemilinearEnergy(SpdOperator([[DW_KAPPA]]), DoubleWell(1.0), load)
    pb = Problem(E, Dissipation([DW_R]), SpdOperator.identity(1), [-1.0])
    return Scenario("doublewell1d", pb, doublewell_oracle, rate_cap=5.0,
                    eps_ladder=(0.008, 0.004, 0.002, 0.001),
                    params={"kappa": DW_KAPPA, "r": DW_R, "slope": DW_SLOPE, "z0": -1.0})


def chain_operator(n: int) -> SpdOperator:
    A = 3.0 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)
    return SpdOperator(A)


def scenario_chainNd(n: int = 16, symmetric: bool = False, frozen: bool = False) -> Scenario:
    """Chain of n double-well sites with nearest-neighbour coupling.

    The load is a ramp along a sine profile; unless ``symmetric``, site 3
    also receives a jump of +1 at t = 0.5. ``frozen`` gives the zero-load
    variant.
    """
    if n < 2:
        raise ValueError("chain needs at least two sites")
    profile = 1.2 * np.sin(np.pi * np.arange(1, n + 1) / (n + 1))
    if frozen:
        load = BVLoad.constant(1.0, np.zeros(n))
    elif symmetric:
        load = BVLoad.affine(1.0, np.zeros(n), profile)
    else:
        bump = np.zeros(n)
        bump[min(3, n - 1)] = 1.0
        load = BVLoad([0.0, 0.5, 1.0], [np.zeros(n), 0.5 * profile + bump], [profile, profile])
    E = SemilinearEnergy(chain_operator(n), DoubleWell(1.5), load)
    pb = Problem(E, Dissipation(np.full(n, 0.3)), SpdOperator.identity(n), np.zeros(n))
    tag = "-frozen" if frozen else "-sym" if symmetric else ""
    return Scenario(f"chain{n}d{tag}", pb, None, rate_cap=5.0,
                    eps_ladder=(0.2, 0.1, 0.05, 0.025), params={"n": n})


REGISTRY: dict[str, Callable[[], Scenario]] = {
    "play1d": scenario_play1d,
    "play1d-step": lambda: scenario_play1d("step"),
    "play1d-constant": lambda: scenario_play1d("constant"),
    "doublewell1d": scenario_doublewell1d,
    "chainNd": scenario_chainNd,
    "chain16d": scenario_chainNd,
    "chain16d-sym": lambda: scenario_chainNd(16, symmetric=True),
}


def get_scenario(name: str) -> Scenario:
    if name in REGISTRY:
        return REGISTRY[name]()
    if name.startswith("chain") and name.endswith("d") and name[5:-1].isdigit():
        return scenario_chainNd(int(name[5:-1]))
    raise KeyError(f"unknown scenario {name!r}; known: {', '.join(sorted(REGISTRY))}")
