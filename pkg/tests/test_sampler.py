import numpy as np
import pytest
from scipy import stats

from tailnest.analysis import gof_report
from tailnest.fixtures import parity_sequence, random_sequence, uniform_sequence
from tailnest.margins import Margin, MarginSpec
from tailnest.nesting import NestSequence, refine_to_grid
from tailnest.sampler import SamplerState, WorkStats, draw_one, philox, sample, transform_margins
from tailnest.tail_shaper import build_pareto


def binned_deviation(points, seq, depth):
    grid = refine_to_grid(seq, depth)
    n = points.shape[0]
    obs = np.bincount(grid.cell_of(points), minlength=grid.masses.size) / n
    p = grid.masses
    sd = np.sqrt(np.maximum(p * (1 - p), 1e-300) / n)
    return np.max(np.abs(obs - p) / sd)


def xor_holds(points, depth):
    digits = np.floor(points * 2.0**depth).astype(np.int64)
    return (digits[:, 0] ^ digits[:, 1]) == digits[:, 2]


def test_uniform_sequence_chi_square():
    seq = uniform_sequence(3, 4, k=1)
    pts, _ = sample(seq, 100_000, 1)
    assert gof_report(pts, seq, 2).p_value > 1e-3


def test_parity_xor_full_scheme():
    seq = parity_sequence(3, 8, "full")
    pts, _ = sample(seq, 20_000, 3)
    assert xor_holds(pts, 8).all()


def test_tail_scheme_breaks_xor_off_origin():
    # the tail scheme only nests near the origin, so released digits are free
    pts, _ = sample(parity_sequence(3, 8), 20_000, 3)
    assert not xor_holds(pts, 8).all()


@pytest.mark.parametrize("seed", [22, 23])
def test_law_matches_grid(seed):
    seq = random_sequence(3, 1, 3, np.random.default_rng(seed))
    pts, _ = sample(seq, 200_000, seed)
    assert binned_deviation(pts, seq, 3) <= 4.5


def test_draw_one_law():
    seq = random_sequence(3, 1, 3, np.random.default_rng(5))
    state = SamplerState(9)
    pts = np.array([draw_one(seq, state) for _ in range(20_000)])
    assert binned_deviation(pts, seq, 2) <= 4.5
    assert state.samples == 20_000
    assert state.stats(seq).average_draws <= state.stats(seq).bound + 0.05


def test_draw_one_full_scheme_xor():
    seq = parity_sequence(3, 6, "full")
    state = SamplerState(4)
    pts = np.array([draw_one(seq, state) for _ in range(2_000)])
    assert xor_holds(pts, 6).all()
    assert state.draws == 2_000 * 6


def test_released_coordinates_uniform():
    seq = random_sequence(3, 1, 1, np.random.default_rng(8))
    u = seq.splits[0]
    pts, _ = sample(seq, 100_000, 12)
    # coordinate 1 released at level 1 lies in [u_1, 1] and is uniform there
    upper = pts[:, 0] >= u[0]
    vals = (pts[upper, 0] - u[0]) / (1 - u[0])
    assert stats.kstest(vals, "uniform").pvalue > 1e-3
    lower = pts[~upper, 0] / u[0]
    assert stats.kstest(lower, "uniform").pvalue > 1e-3


def test_determinism_across_workers():
    seq = random_sequence(4, 1, 8, np.random.default_rng(2))
    a, sa = sample(seq, 150_000, 77, workers=1)
    b, sb = sample(seq, 150_000, 77, workers=4)
    assert a.tobytes() == b.tobytes()
    assert sa.draws == sb.draws
    c, _ = sample(seq, 150_000, 78)
    assert a.tobytes() != c.tobytes()


def test_streams_differ():
    x = philox(5, 0).random(4)
    y = philox(5, 1).random(4)
    assert not np.array_equal(x, y)
    np.testing.assert_array_equal(x, philox(5, 0).random(4))


def test_parity_work():
    pts, st_ = sample(parity_sequence(3, 12), 200_000, 1)
    assert st_.average_draws == pytest.approx(4 / 3, abs=0.01)
    assert st_.p_max == 0.25
    assert st_.bound == pytest.approx(4 / 3)


def test_work_bound_random(corpus):
    for seq in corpus:
        _, s = sample(seq, 50_000, 3)
        assert s.average_draws <= s.bound + 0.01


def test_empty_sequence_uniform():
    seq = NestSequence([], 1, r=2)
    pts, s = sample(seq, 50_000, 6)
    assert s.draws == 0
    for j in range(2):
        assert stats.kstest(pts[:, j], "uniform").pvalue > 1e-3


def test_workstats_merge():
    a = WorkStats(10, 13, 0.2)
    b = WorkStats(5, 5, 0.4)
    m = a.merge(b)
    assert (m.samples, m.draws, m.p_max) == (15, 18, 0.4)
    assert "avg_draws=1.200000" in m.summary()
    assert WorkStats(1, 1, 1.0).bound == np.inf


def test_sample_errors():
    seq = uniform_sequence(2, 2)
    with pytest.raises(ValueError):
        sample(seq, 0, 1)
    with pytest.raises(ValueError):
        sample(seq, 5, 1, workers=0)


def test_pareto_margin_quantile():
    m = Margin("pareto", 2.0)
    assert m.quantile(0.04) == pytest.approx(-5.0)
    assert m.cdf(-5.0) == pytest.approx(0.04)
    pts = np.array([[0.25, 0.5]])
    np.testing.assert_array_equal(transform_margins(pts, MarginSpec.identity(2)), pts)


def test_margins_clamped_and_scipy():
    spec = MarginSpec((Margin("pareto", 1.0), Margin("scipy", name="norm")))
    out = spec.quantiles(np.array([[0.0, 1.0], [0.5, 0.5]]))
    assert np.all(np.isfinite(out))
    assert out[1, 1] == pytest.approx(0.0)
    with pytest.raises(ValueError):
        Margin("scipy", name="nonexistent")
    with pytest.raises(ValueError):
        Margin("pareto", -1.0)
    assert MarginSpec.from_config(spec.to_config()) == spec


def test_pareto_samples_match_obox():
    built = build_pareto([1, 1, 1], {"1,2": 1.5, "1,3": 1.5, "2,3": 1.5, "1,2,3": 2}, 4.0, 6)
    pts, _ = sample(built.seq, 200_000, 17)
    x = transform_margins(pts, built.margins)
    assert np.all(x <= -1.0)
    n_obs = x.shape[0]
    for n in (1, 2):
        p = 4.0 ** (-1.5 * n)
        hit = np.mean((x[:, 0] <= -(4.0**n)) & (x[:, 1] <= -(4.0**n)))
        assert abs(hit - p) <= 4 * np.sqrt(p * (1 - p) / n_obs)
