"""Run configuration: a line-oriented ``key = value`` format with ``[section]`` headers.

Sections are ``[run]``, ``[tolerances]``, ``[problem]`` and ``[load]``.
``#`` starts a comment. The grammar is documented in docs/config.md.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .bvload import BVLoad
from .errors import ConfigError
from .model import Dissipation, Problem, SemilinearEnergy, SpdOperator, nonconvex_from_spec

SECTIONS = {
    "run": {"scenario", "eps", "mesh", "out", "seed", "warm_start"},
    "tolerances": {"tol_inner", "tol_norm", "tol_comp", "tol_lambda", "delta_G", "rate_cap", "sub_nodes"},
    "problem": {"dim", "A", "V", "r", "F", "z0"},
    "load": {"T", "segment", "jump"},
}
REPEATABLE = {("load", "segment"), ("load", "jump")}


@dataclass(frozen=True)
class MeshRule:
    """Either steps no longer than ``value * eps`` (kind "c") or ``value`` uniform steps (kind "N")."""

    kind: str
    value: float

    @classmethod
    def parse(cls, text: str, line: int | None = None) -> "MeshRule":
        key, sep, val = text.partition("=")
        key = key.strip()
        if not sep or key not in ("c", "N"):
            raise ConfigError(f"mesh rule must be 'c=<float>' or 'N=<int>', got {text!r}", line, "mesh")
        try:
            v = float(val) if key == "c" else int(val)
        except ValueError:
            raise ConfigError(f"bad mesh value {val.strip()!r}", line, "mesh") from None
        if v <= 0 or (key == "c" and v > 1):
            raise ConfigError("mesh value out of range (c in (0, 1], N >= 1)", line, "mesh")
        return cls(key, float(v))

    def __str__(self):
        return f"c={self.value:g}" if self.kind == "c" else f"N={int(self.value)}"


@dataclass(frozen=True)
class Tolerances:
    tol_inner: float = 1e-9
    tol_norm: float = 1e-6
    tol_comp: float | None = None
    tol_lambda: float = 1e-6
    delta_G: float | None = None
    rate_cap: float | None = None
    sub_nodes: int = 8


@dataclass(frozen=True, eq=False)
class RunConfig:
    scenario: str | None = None
    problem: Problem | None = None
    eps: tuple = ()
    mesh: MeshRule = MeshRule("c", 0.5)
    out: Path = Path("out")
    seed: int = 0
    warm_start: str = "previous"
    tolerances: Tolerances = field(default_factory=Tolerances)

    def validated(self) -> "RunConfig":
        if (self.scenario is None) == (self.problem is None):
            raise ConfigError("give exactly one of a scenario name or an inline problem", field="scenario")
        eps = tuple(self.eps)
        if eps:
            if any(e <= 0 for e in eps):
                raise ConfigError("eps values must be positive", field="eps")
            if any(b >= a for a, b in zip(eps, eps[1:])):
                raise ConfigError("eps sequence must be strictly decreasing", field="eps")
        if self.warm_start not in ("previous", "extrapolate", "perturb"):
            raise ConfigError(f"unknown warm start {self.warm_start!r}", field="warm_start")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer", field="seed")
        if self.tolerances.sub_nodes < 1:
            raise ConfigError("sub_nodes must be positive", field="sub_nodes")
        return self

    def with_overrides(self, **kw) -> "RunConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw)


def parse_floats(text: str, line: int | None = None, name: str | None = None) -> list[float]:
    try:
        return [float(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"expected numbers, got {text!r}", line, name) from None


def parse_eps(text: str, line: int | None = None) -> tuple:
    vals = parse_floats(text, line, "eps")
    if not vals:
        raise ConfigError("empty eps sequence", line, "eps")
    return tuple(vals)


def _matrix(text: str, line, name) -> np.ndarray:
    rows = [parse_floats(r, line, name) for r in text.split(";")]
    if any(len(r) != len(rows[0]) for r in rows):
        raise ConfigError("ragged matrix rows", line, name)
    return np.array(rows)


def _operator(text: str, line, n: int, name: str) -> SpdOperator:
    M = _matrix(text, line, name)
    if M.size == 1:
        M = M.item() * np.eye(n)
    elif M.shape == (1, n):
        M = np.diag(M[0])
    if M.shape != (n, n):
        raise ConfigError(f"{name} must be a scalar, a diagonal of length {n} or an {n}x{n} matrix", line, name)
    try:
        return SpdOperator(M)
    except ValueError as err:
        raise ConfigError(str(err), line, name) from None


def _vector(text: str, n: int, line, name) -> np.ndarray:
    v = parse_floats(text, line, name)
    if len(v) == 1:
        v = v * n
    if len(v) != n:
        raise ConfigError(f"{name} needs 1 or {n} entries", line, name)
    return np.array(v)


def _build_load(entries, n, line_of) -> BVLoad:
    T = None
    segs, jumps = [], {}
    for key, val, line in entries:
        if key == "T":
            T = parse_floats(val, line, "T")[0]
        elif key == "segment":
            parts = [p.strip() for p in val.split("|")]
            if len(parts) not in (2, 3):
                raise ConfigError("segment = t0, t1 | value | slope", line, "segment")
            t01 = parse_floats(parts[0], line, "segment")
            if len(t01) != 2:
                raise ConfigError("segment needs t0 and t1", line, "segment")
            value = _vector(parts[1], n, line, "segment")
            slope = _vector(parts[2], n, line, "segment") if len(parts) == 3 else np.zeros(n)
            segs.append((t01[0], t01[1], value, slope, line))
        elif key == "jump":
            t_txt, _, at = val.partition("|")
            t = parse_floats(t_txt, line, "jump")[0]
            at = at.strip() or "right"
            jumps[t] = (at if at in ("left", "right") else _vector(at, n, line, "jump"), line)
    if not segs:
        raise ConfigError("load needs at least one segment", line_of, "segment")
    segs.sort(key=lambda s: s[0])
    bps = [segs[0][0]]
    for a, b, *_rest, line in segs:
        if abs(a - bps[-1]) > 1e-14 or b <= a:
            raise ConfigError("segments must tile [0, T] without gaps or overlaps", line, "segment")
        bps.append(b)
    if bps[0] != 0.0:
        raise ConfigError("the first segment must start at t = 0", segs[0][4], "segment")
    if T is not None and abs(bps[-1] - T) > 1e-14:
        raise ConfigError("segments must end at T", segs[-1][4], "T")
    at_jump = []
    for t in bps[1:-1]:
        at_jump.append(jumps.pop(t, ("right", None))[0])
    if jumps:
        t, (_, line) = next(iter(jumps.items()))
        raise ConfigError(f"jump at t = {t:g} is not a segment boundary", line, "jump")
    try:
        return BVLoad(bps, [s[2] for s in segs], [s[3] for s in segs], tuple(at_jump))
    except ValueError as err:
        raise ConfigError(str(err), line_of, "load") from None


def _build_problem(block: dict, load_entries, line_of) -> Problem:
    def get(key):
        if key not in block:
            raise ConfigError(f"[problem] needs '{key}'", line_of, key)
        return block[key]

    dim_txt, dim_line = get("dim")
    try:
        n = int(dim_txt)
    except ValueError:
        raise ConfigError("dim must be an integer", dim_line, "dim") from None
    if n < 1:
        raise ConfigError("dim must be positive", dim_line, "dim")
    A = _operator(*get("A"), n=n, name="A")
    V = _operator(*block["V"], n=n, name="V") if "V" in block else SpdOperator.identity(n)
    r = _vector(get("r")[0], n, get("r")[1], "r")
    z0 = _vector(block["z0"][0], n, block["z0"][1], "z0") if "z0" in block else np.zeros(n)
    F_txt, F_line = block.get("F", ("zero", None))
    kind, _, scale = F_txt.partition(":")
    spec = {"kind": kind.strip()}
    if scale.strip():
        spec["scale"] = parse_floats(scale, F_line, "F")[0]
    try:
        F = nonconvex_from_spec(spec)
        R = Dissipation(r)
    except (ValueError, KeyError) as err:
        raise ConfigError(str(err), F_line, "F") from None
    load = _build_load(load_entries, n, line_of)
    try:
        return Problem(SemilinearEnergy(A, F, load), R, V, z0)
    except ValueError as err:
        raise ConfigError(str(err), line_of, "problem") from None


def parse_config(text: str) -> RunConfig:
    section = None
    blocks: dict[str, dict] = {s: {} for s in SECTIONS}
    load_entries = []
    problem_line = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]") or line[1:-1].strip() not in SECTIONS:
                raise ConfigError(f"unknown section {line!r}", lineno)
            section = line[1:-1].strip()
            if section == "problem":
                problem_line = lineno
            continue
        if section is None:
            raise ConfigError("key outside of a section", lineno)
        key, sep, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not sep or not key:
            raise ConfigError("expected 'key = value'", lineno)
        if key not in SECTIONS[section]:
            raise ConfigError(f"unknown key in [{section}]", lineno, key)
        if section == "load":
            load_entries.append((key, val, lineno))
            continue
        if key in blocks[section] and (section, key) not in REPEATABLE:
            raise ConfigError("duplicate key", lineno, key)
        blocks[section][key] = (val, lineno)

    run, tol = blocks["run"], blocks["tolerances"]
    kw = {}
    if "scenario" in run:
        kw["scenario"] = run["scenario"][0]
    if "eps" in run:
        kw["eps"] = parse_eps(*run["eps"])
    if "mesh" in run:
        kw["mesh"] = MeshRule.parse(*run["mesh"])
    if "out" in run:
        kw["out"] = Path(run["out"][0])
    if "seed" in run:
        try:
            kw["seed"] = int(run["seed"][0])
        except ValueError:
            raise ConfigError("seed must be an integer", run["seed"][1], "seed") from None
    if "warm_start" in run:
        kw["warm_start"] = run["warm_start"][0]
    tkw = {}
    for key, (val, lineno) in tol.items():
        if key == "sub_nodes":
            try:
                tkw[key] = int(val)
            except ValueError:
                raise ConfigError("sub_nodes must be an integer", lineno, key) from None
        else:
            v = parse_floats(val, lineno, key)
            if len(v) != 1 or not v[0] > 0:
                raise ConfigError("tolerance must be one positive number", lineno, key)
            tkw[key] = v[0]
    kw["tolerances"] = Tolerances(**tkw)
    if blocks["problem"] or load_entries:
        if "scenario" in kw:
            raise ConfigError("give either a scenario or a [problem] block, not both", problem_line, "scenario")
        kw["problem"] = _build_problem(blocks["problem"], load_entries, problem_line)
    try:
        return RunConfig(**kw).validated()
    except ConfigError as err:
        where = run.get(err.field) or tol.get(err.field)
        if err.line is None and where is not None:
            raise ConfigError(str(err).split(": ", 1)[-1], where[1], err.field) from None
        raise


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config: {err}") from None
    return parse_config(text)
