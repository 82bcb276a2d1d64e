import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ratevisc.bvload import (
    BVLoad,
    PiecewiseLinearCurve,
    diff_quotient_pairing,
    kurzweil_bound,
    kurzweil_bv_dg,
    kurzweil_bv_dg_trace,
    kurzweil_cont_dstep,
)
from ratevisc.errors import DomainMismatch, TimeOutsideHorizon
from ratevisc.model import SpdOperator

ONE = SpdOperator([[1.0]])


def line(T=1.0, n=2):
    g = np.linspace(0, T, n)
    return PiecewiseLinearCurve(g, g)


def test_eval_sides():
    step = BVLoad.step(1.0, 0.5, [0.0], [1.0])
    assert step.eval(0.5, "left") == pytest.approx([0.0])
    assert step.eval(0.5, "right") == pytest.approx([1.0])
    assert step.eval(0.5) == pytest.approx([1.0])
    assert BVLoad.step(1.0, 0.5, [0.0], [1.0], at="left").eval(0.5) == pytest.approx([0.0])
    c = BVLoad.constant(2.0, [0.7, -1.0])
    for t in (0.3, 1.0, 1.7):
        for side in ("at", "left", "right"):
            assert c.eval(t, side) == pytest.approx([0.7, -1.0])
    with pytest.raises(TimeOutsideHorizon):
        c.eval(2.5)
    with pytest.raises(TimeOutsideHorizon):
        c.eval(0.0, "left")


def test_variation_values():
    assert BVLoad.constant(1.0, [3.0]).variation(ONE) == 0.0
    pulse = BVLoad([0.0, 0.3, 0.6, 1.0], [[0.0], [1.0], [0.0]], [[0.0]] * 3)
    assert pulse.variation(ONE) == pytest.approx(2.0)
    assert BVLoad.step(1.0, 0.5, [0.0], [2.0]).variation(SpdOperator([[4.0]])) == pytest.approx(1.0)
    ramp = BVLoad.affine(1.0, [0.0], [3.0])
    assert ramp.variation(ONE, 0.2, 0.7) == pytest.approx(1.5)
    # a designated value off both limits counts twice
    odd = BVLoad.step(1.0, 0.5, [0.0], [1.0], at=np.array([3.0]))
    assert odd.variation(ONE) == pytest.approx(5.0)


def test_variation_additive_over_refinement():
    rng = np.random.default_rng(0)
    ell = BVLoad([0.0, 0.25, 0.6, 1.0], rng.normal(size=(3, 2)), rng.normal(size=(3, 2)), ("left", "right"))
    V = SpdOperator([[2.0, 0.3], [0.3, 1.0]])
    cuts = np.sort(rng.uniform(0, 1, 9))
    pts = np.concatenate([[0.0], cuts, [1.0]])
    assert sum(ell.variation(V, a, b) for a, b in zip(pts[:-1], pts[1:])) == pytest.approx(ell.variation(V))


def test_serialization_roundtrip():
    ell = BVLoad([0.0, 0.5, 1.0], [[0.0], [1.0]], [[2.0], [0.0]], ("left",))
    back = BVLoad.from_spec(ell.to_spec())
    for t in (0.1, 0.5, 0.9):
        assert back.eval(t) == pytest.approx(ell.eval(t))


def test_rescale_time():
    ell = BVLoad([0.0, 0.5, 1.0], [[0.0], [1.0]], [[2.0], [-1.0]])
    slow = ell.rescale_time(2.0)
    for t in (0.0, 0.3, 0.5, 0.8, 1.0):
        assert slow.eval(2 * t) == pytest.approx(ell.eval(t))


def test_kurzweil_bv_dg_examples():
    rng = np.random.default_rng(1)
    grid = np.sort(np.concatenate([[0.0, 1.0], rng.uniform(0, 1, 7)]))
    g = PiecewiseLinearCurve(grid, rng.normal(size=(9, 2)))
    c = np.array([0.4, -2.0])
    assert kurzweil_bv_dg(BVLoad.constant(1.0, c), g) == pytest.approx(c @ (g.values[-1] - g.values[0]))
    assert kurzweil_bv_dg(BVLoad.step(1.0, 0.5, [0.0], [1.0]), line()) == pytest.approx(0.5)
    spike = BVLoad.step(1.0, 0.5, [0.0], [0.0], at=np.array([7.0]))
    assert kurzweil_bv_dg(spike, line()) == 0.0


def test_kurzweil_cont_dstep_examples():
    step = BVLoad.step(1.0, 0.5, [0.0], [1.0])
    assert kurzweil_cont_dstep(line(), step) == pytest.approx(0.5)
    assert kurzweil_cont_dstep(line(), BVLoad.constant(1.0, [2.0])) == 0.0
    c = PiecewiseLinearCurve([0.0, 1.0], [[3.0], [3.0]])
    ell = BVLoad([0.0, 0.3, 1.0], [[1.0], [4.0]], [[2.0], [-1.0]])
    assert kurzweil_cont_dstep(c, ell) == pytest.approx(3.0 * (ell.eval(1.0) - ell.eval(0.0))[0])


def test_diff_quotient_examples():
    step = BVLoad.step(1.0, 0.5, [0.0], [1.0])
    errs = [abs(diff_quotient_pairing(step, line(), h) - 0.5) for h in (0.1, 0.01, 0.001)]
    assert errs == sorted(errs, reverse=True)
    for h, e in zip((0.1, 0.01, 0.001), errs):
        assert e <= 1.0 * h + 1e-12
    flat = PiecewiseLinearCurve([0.0, 1.0], [[2.0], [2.0]])
    assert diff_quotient_pairing(step, flat, 0.05) == 0.0
    c = BVLoad.constant(1.0, [1.5])
    assert diff_quotient_pairing(c, line(), 1e-4) == pytest.approx(1.5 * (1 - 1e-4), rel=1e-10)


def test_domain_mismatch():
    with pytest.raises(DomainMismatch):
        kurzweil_bv_dg(BVLoad.constant(1.0, [1.0]), line(2.0))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_additivity_and_bound(seed):
    rng = np.random.default_rng(seed)
    bps = np.sort(np.concatenate([[0.0, 1.0], rng.uniform(0.05, 0.95, 3)]))
    f = BVLoad(bps, rng.normal(size=(4, 1)), rng.normal(size=(4, 1)))
    grid = np.sort(np.concatenate([[0.0, 1.0], rng.uniform(0, 1, 6)]))
    g = PiecewiseLinearCurve(grid, rng.normal(size=(8, 1)))
    b = float(rng.uniform(0.1, 0.9))
    whole = kurzweil_bv_dg(f, g)
    assert kurzweil_bv_dg(f, g, 0, b) + kurzweil_bv_dg(f, g, b, 1) == pytest.approx(whole, abs=1e-12)
    whole_c = kurzweil_cont_dstep(g, f)
    parts = kurzweil_cont_dstep(g, f, 0, b) + kurzweil_cont_dstep(g, f, b, 1)
    assert parts == pytest.approx(whole_c, abs=1e-12)
    h = 0.05
    dq = diff_quotient_pairing(f, g, h, 0, 1)
    split = b if b < 1 - h else 0.5
    assert diff_quotient_pairing(f, g, h, 0, split + h) + diff_quotient_pairing(f, g, h, split, 1) == \
        pytest.approx(dq, abs=1e-12)
    first, second = kurzweil_bound(f, g, ONE)
    assert abs(whole) <= min(first, second) + 1e-12
    trace = kurzweil_bv_dg_trace(f, g)
    assert trace[-1] == pytest.approx(whole, abs=1e-12)
    k = int(rng.integers(1, grid.size - 1))
    assert trace[k] == pytest.approx(kurzweil_bv_dg(f, g, 0, grid[k]), abs=1e-12)
