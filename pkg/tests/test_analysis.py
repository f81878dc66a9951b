import math

import numpy as np
import pytest

from tailnest.analysis import (
    InsufficientSamples,
    Reference,
    TailScan,
    fit_tail,
    gof_report,
    reference_cdf,
    tail_scan,
)
from tailnest.fixtures import parity_sequence, uniform_sequence
from tailnest.nesting import NestSequence
from tailnest.sampler import sample
from tailnest.vertex_algebra import VertexCopula

S_GRID = [2.0**-i for i in range(4, 21)]


def test_reference_examples():
    assert reference_cdf("clayton", 1.0, [0.5, 0.5]) == pytest.approx(1 / 3)
    u = np.array([0.3, 0.6, 0.9])
    assert reference_cdf("gumbel", 1.0, u) == pytest.approx(np.prod(u))
    assert reference_cdf("independence", None, u) == pytest.approx(np.prod(u))
    assert reference_cdf("clayton", 2.0, [0.0, 0.4]) == 0.0
    assert reference_cdf("gumbel", 3.0, [0.4, 0.0]) == 0.0


def test_reference_errors():
    with pytest.raises(ValueError):
        reference_cdf("clayton", 0.0, [0.5, 0.5])
    with pytest.raises(ValueError):
        reference_cdf("gumbel", 0.5, [0.5, 0.5])
    with pytest.raises(ValueError):
        reference_cdf("frank", 1.0, [0.5, 0.5])
    with pytest.raises(ValueError):
        reference_cdf("clayton", 1.0, [1.5, 0.5])


@pytest.mark.parametrize("kind,theta", [("clayton", 1.0), ("clayton", 3.0), ("gumbel", 1.0), ("gumbel", 2.5)])
def test_reference_is_copula_like(kind, theta):
    g = np.linspace(0, 1, 21)
    grid = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1)
    c = reference_cdf(kind, theta, grid)
    assert np.all(np.diff(c, axis=0) >= -1e-15)
    assert np.all(np.diff(c, axis=1) >= -1e-15)
    np.testing.assert_allclose(c[:, -1], g, atol=1e-12)
    np.testing.assert_allclose(c[-1, :], g, atol=1e-12)
    three = reference_cdf(kind, theta, np.stack([g, np.ones_like(g), np.ones_like(g)], axis=-1))
    np.testing.assert_allclose(three, g, atol=1e-12)


def test_scan_examples():
    scan = tail_scan(Reference("clayton", 2, 1.0), (1, 2), S_GRID)
    np.testing.assert_allclose(scan.mass, scan.s / (2 - scan.s), rtol=1e-12)
    assert scan.source == "analytic"
    uni = tail_scan(uniform_sequence(3, 4), (1, 3), [0.5, 0.1, 0.01], degree=2)
    np.testing.assert_allclose(uni.mass, uni.s**2, rtol=1e-12)
    np.testing.assert_allclose(uni.ratio, 1.0)
    par = tail_scan(parity_sequence(3, 10), (1, 2, 3), [2.0**-n for n in range(1, 11)])
    np.testing.assert_allclose(par.mass, [4.0**-n for n in range(1, 11)], rtol=1e-12)


def test_scan_ordering_and_errors():
    scan = tail_scan(Reference("independence", 2), (2,), [0.01, 0.5, 0.1])
    assert np.all(np.diff(scan.s) < 0)
    assert np.all(np.diff(scan.mass) <= 1e-15)
    with pytest.raises(ValueError):
        tail_scan(Reference("independence", 2), (1,), [0.5, 0.0])
    with pytest.raises(ValueError):
        tail_scan(Reference("independence", 2), (3,), [0.5])
    with pytest.raises(ValueError):
        tail_scan(Reference("independence", 2), (), [0.5])


def test_fit_references():
    fit = fit_tail(tail_scan(Reference("clayton", 2, 1.0), (1, 2), S_GRID))
    assert fit.degree == pytest.approx(1.0, abs=0.02)
    assert fit.coefficient == pytest.approx(0.5, abs=0.02)
    fit = fit_tail(tail_scan(Reference("gumbel", 2, 2.0), (1, 2), S_GRID))
    assert fit.degree == pytest.approx(math.sqrt(2), abs=0.02)
    assert fit.coefficient == pytest.approx(1.0, abs=0.05)


@pytest.mark.parametrize("face", [(1,), (1, 2), (1, 2, 3)])
def test_fit_uniform(face):
    fit = fit_tail(tail_scan(uniform_sequence(3, 2), face, S_GRID))
    assert fit.degree == pytest.approx(len(face), abs=1e-9)
    assert fit.coefficient == pytest.approx(1.0, abs=1e-9)
    assert fit.spread == pytest.approx(1.0)


def test_fit_degenerate_and_errors():
    s = np.array([1e-1, 1e-2, 1e-3, 1e-4])
    fit = fit_tail(TailScan((1, 2), s, np.array([1e-2, 0.0, 0.0, 0.0])))
    assert fit.degree == math.inf and fit.coefficient == 0.0
    with pytest.raises(ValueError, match="4"):
        fit_tail(TailScan((1,), s[:3], s[:3]))
    with pytest.raises(ValueError, match="decades"):
        fit_tail(TailScan((1,), np.array([0.5, 0.4, 0.3, 0.2]), np.array([0.5, 0.4, 0.3, 0.2])))


def test_gof_null_uniform():
    seq = uniform_sequence(3, 3)
    pts, _ = sample(seq, 100_000, 31)
    rep = gof_report(pts, seq, 2)
    assert rep.p_value > 1e-3 and rep.passed


def test_gof_parity_odd_cells_fail():
    seq = parity_sequence(3, 4, "full")
    pts, _ = sample(seq, 20_000, 2)
    assert gof_report(pts, seq, 3).ok()
    bad = pts.copy()
    bad[0] = [0.1, 0.1, 0.6]
    rep = gof_report(bad, seq, 3)
    assert rep.forbidden == 1 and not rep.passed and not rep.ok()


def test_gof_power_against_perturbed_level():
    seq = uniform_sequence(3, 3)
    levels = list(seq.levels)
    # raise the origin raw mass by 0.05: every box moves by 0.05 with alternating sign
    x = levels[0].x.copy()
    x[0] += 0.05
    alt = NestSequence([VertexCopula(levels[0].u, x, 1)] + levels[1:], 1)
    pts, _ = sample(alt, 200_000, 8)
    assert gof_report(pts, seq, 2).p_value < 1e-6
    assert gof_report(pts, alt, 2).p_value > 1e-3


def test_gof_insufficient():
    seq = uniform_sequence(3, 3)
    pts, _ = sample(seq, 1000, 1)
    with pytest.raises(InsufficientSamples):
        gof_report(pts, seq, 2)
