import numpy as np
import pytest

from tailnest.analysis import fit_tail, tail_scan
from tailnest.nesting import exact_cdf, obox_mass, refine_to_grid
from tailnest.tail_shaper import (
    ShapingError,
    TailSpec,
    build_degree_one,
    build_eventually_constant,
    build_increasing,
    build_pareto,
    build_subsequence_targets,
    eventually_constant,
    face_coords,
    face_label,
    face_vertex,
    geometric_factors,
    validate_nc_k,
)
from tailnest.vertex_algebra import s_transform, uniform_weights

B3 = {"1,2": 1.3, "1,3": 1.4, "2,3": 1.5, "1,2,3": 1.8}
PAIRS = {"1,2": 1.5, "1,3": 1.5, "2,3": 1.5, "1,2,3": 2.0}


def test_face_vertex_mapping():
    assert face_vertex((1, 2, 3), 3) == 0
    assert face_vertex((1,), 3) == 0b110
    assert face_coords(0b101, 3) == (2,)
    assert face_label(0b001, 3) == "F{2,3}"
    with pytest.raises(ValueError):
        face_vertex((4,), 3)


@pytest.mark.parametrize("r,k", [(2, 0), (2, 1), (3, 1), (3, 2), (4, 2)])
def test_independence_valid(r, k):
    assert validate_nc_k(TailSpec.independence(r, k)).ok


@pytest.mark.parametrize("lam", [0.0, 0.3, 1.0])
def test_degree_one_square(lam):
    spec = TailSpec(2, 1, [lam, 1, 1, 1], [1, 1, 1, 0])
    rep = validate_nc_k(spec)
    assert rep.ok
    assert rep.boundary == []
    sa = s_transform(spec.a)
    # (iii)' only reads the vertices of the edges through the origin face
    np.testing.assert_allclose(sa[:3], [lam, 1 - lam, 1 - lam])
    assert sa[3] == pytest.approx(lam - 1)


def test_degree_one_square_out_of_range():
    rep = validate_nc_k(TailSpec(2, 1, [1.2, 1, 1, 1], [1, 1, 1, 0]))
    assert not rep.ok
    assert any(m.startswith("NC_k (iii)'") for m in rep.messages())


def test_monotonicity_violation_named():
    spec = TailSpec.from_faces(3, 1, {**B3, "1,2,3": 1.4})
    msgs = validate_nc_k(spec).messages()
    assert any(m.startswith("NC_k (i)") and "F{2,3}" in m for m in msgs)


def test_pinning_violation_named():
    spec = TailSpec.from_faces(3, 1, B3, {"1": 0.9})
    assert any(m.startswith("NC_k (ii)") for m in validate_nc_k(spec).messages())


def test_alternating_sum_violation():
    # b eventually constant at the whole cube; a gives a negative alternating sum
    spec = TailSpec.from_faces(2, 1, {"1,2": 1.0}, {"1,2": -0.5})
    rep = validate_nc_k(spec)
    assert rep.other


def test_geometric_factors_hit_target(rng):
    a = rng.uniform(0.3, 2.0, 8)
    f = geometric_factors(a, 20)
    np.testing.assert_allclose(np.prod(f, axis=0), a, rtol=1e-12)
    assert np.all(f > 0)


def test_build_increasing_uniform_levels():
    spec = TailSpec.independence(3, 1)
    built = build_increasing(spec, 0.5, 6)
    for level in built.seq.levels:
        np.testing.assert_allclose(level.z, uniform_weights(level.u), atol=1e-15)


def test_build_increasing_reference_case():
    spec = TailSpec.from_faces(3, 1, B3)
    built = build_increasing(spec, 0.5, 8)
    assert built.t == 0.5
    assert all(level.check() for level in built.seq.levels)


def test_build_increasing_shaping_identity():
    spec = TailSpec.from_faces(3, 1, B3, {"1,2": 0.7, "1,2,3": 0.5})
    built = build_increasing(spec, 0.5, 12)
    assert built.t < 0.5
    partial = built.schedule.partial_products()
    for n in range(1, 13):
        for nu in range(8):
            target = partial[n - 1, nu] * built.t ** (n * spec.b[nu])
            assert obox_mass(built.seq, n, nu) == pytest.approx(target, rel=1e-12, abs=1e-300)
    np.testing.assert_allclose(partial[-1], spec.a, rtol=1e-12)


def test_build_increasing_rejects_flat_b():
    spec = TailSpec.from_faces(3, 1, {**B3, "1,2,3": 1.5})
    with pytest.raises(ShapingError, match="increasing"):
        build_increasing(spec, 0.5, 4)


def test_build_increasing_rejects_invalid_spec():
    with pytest.raises(ShapingError, match=r"NC_k \(i\)"):
        build_increasing(TailSpec.from_faces(3, 1, {**B3, "1,2,3": 1.4}), 0.5, 4)


def test_fitted_degrees_match_targets():
    spec = TailSpec.from_faces(3, 1, B3, {"1,3": 0.8})
    built = build_increasing(spec, 0.5, 30)
    s = built.schedule.s[-20:]
    for nu in range(7):
        face = face_coords(nu, 3)
        fit = fit_tail(tail_scan(built.seq, face, s))
        assert fit.degree == pytest.approx(spec.b[nu], abs=0.05)
        assert fit.coefficient == pytest.approx(spec.a[nu], abs=0.05)


def test_subsequence_targets_exact():
    b = np.array([1.5, 1.0, 1.0, 0.0])
    spec = TailSpec(2, 1, np.ones(4), b)
    a_seq = [np.array([0.5 + 0.1 / m, 1, 1, 1]) for m in range(1, 16)]
    s_seq = [4.0**-m for m in range(1, 16)]
    built = build_subsequence_targets(spec, a_seq, s_seq)
    assert built.retained == list(range(15))
    for n, m in enumerate(built.retained, 1):
        assert obox_mass(built.seq, n, 0) == pytest.approx(a_seq[m][0] * s_seq[m] ** 1.5, rel=1e-12)
        w = s_seq[m]
        assert exact_cdf(built.seq, [w, w]) == pytest.approx(a_seq[m][0] * w**1.5, rel=1e-12)


def test_subsequence_thins_slow_ratios():
    spec = TailSpec.from_faces(3, 1, B3)
    s_seq = [0.9**m for m in range(1, 200)]
    a_seq = [np.ones(8)] * len(s_seq)
    built = build_subsequence_targets(spec, a_seq, s_seq)
    assert len(built.retained) < len(s_seq)
    assert all(level.check() for level in built.seq.levels)
    for n, m in enumerate(built.retained, 1):
        assert obox_mass(built.seq, n, 0) == pytest.approx(s_seq[m] ** 1.8, rel=1e-12)


def test_subsequence_constant_reduces_to_increasing():
    spec = TailSpec.from_faces(3, 1, B3)
    t = 0.5
    sub = build_subsequence_targets(spec, [np.ones(8)] * 6, [t**m for m in range(1, 7)])
    inc = build_increasing(spec, t, 6)
    for a, b in zip(sub.seq.levels, inc.seq.levels):
        np.testing.assert_allclose(a.x, b.x, rtol=1e-15)


def test_subsequence_errors():
    spec = TailSpec(2, 1, np.ones(4), np.array([1.5, 1, 1, 0]))
    with pytest.raises(ShapingError):
        build_subsequence_targets(spec, [np.ones(4)] * 2, [0.5, 0.6])
    with pytest.raises(ShapingError):
        build_subsequence_targets(spec, [np.ones(4)], [0.5, 0.25])


def test_eventually_constant_zero_sums():
    # b constant above the pair {1,2}; increasing elsewhere
    b = {"1,2": 1.5, "1,3": 1.5, "2,3": 1.5, "1,2,3": 1.5}
    spec = TailSpec.from_faces(3, 1, b, {"1,2,3": 0.8, "1,2": 0.9, "1,3": 0.9, "2,3": 0.9})
    assert validate_nc_k(spec).ok
    s = [4.0**-m for m in range(1, 12)]
    built = build_eventually_constant(spec, s)
    assert not [n for n in built.notes if "eventually constant" in n]
    const = [v for v in range(1, 8) if eventually_constant(spec.b, v)]
    assert const
    for level in built.seq.levels[1:]:
        assert max(abs(level.z[v]) for v in const) <= 1e-12
    for n, m in enumerate(built.retained, 1):
        for nu in range(8):
            target = spec.a[nu] * s[m] ** spec.b[nu]
            assert obox_mass(built.seq, n, nu) == pytest.approx(target, rel=1e-12)


def test_eventually_constant_matches_increasing():
    spec = TailSpec.from_faces(3, 1, B3)
    ev = build_eventually_constant(spec, [0.5**m for m in range(1, 6)])
    inc = build_increasing(spec, 0.5, 5)
    np.testing.assert_allclose(refine_to_grid(ev.seq, 3).masses, refine_to_grid(inc.seq, 3).masses, atol=1e-15)


def test_eventually_constant_boundary_gate():
    # b = k everywhere above dimension k: (iii)' decides
    ok = TailSpec(2, 1, [0.4, 1, 1, 1], [1, 1, 1, 0])
    bad = TailSpec(2, 1, [1.5, 1, 1, 1], [1, 1, 1, 0])
    assert validate_nc_k(ok).ok and validate_nc_k(ok).boundary == []
    assert validate_nc_k(bad).boundary
    build_eventually_constant(ok, [0.5**m for m in range(1, 5)])
    with pytest.raises(ShapingError):
        build_eventually_constant(bad, [0.5**m for m in range(1, 5)])


def test_degree_one_limits():
    for a, tol in ((1.0, 0.01), (0.5, 0.01)):
        built = build_degree_one(np.array([a, 1, 1, 1]), 20_000)
        s = built.schedule.s
        for n in (19_999, 12_000):
            assert s[n] <= 1e-4
            assert exact_cdf(built.seq, [s[n], s[n]]) / s[n] == pytest.approx(a, abs=tol)


def test_degree_one_schedule():
    built = build_degree_one({"1,2": 0.5}, 50, r=2)
    s = built.schedule.s
    n = np.arange(1, 51)
    # s_n = t_1 * prod_{l=2..n} l/(l+1) = 2 t_1 / (n + 1)
    np.testing.assert_allclose(s, 2 * built.t / (n + 1), rtol=1e-12)


def test_degree_one_rejects():
    with pytest.raises(ShapingError, match=r"NC_k \(ii\)"):
        build_degree_one(np.array([0.5, 0.9, 1, 1]), 5)
    with pytest.raises(ShapingError):
        build_degree_one(np.array([1.2, 1, 1, 1]), 5)


def test_degree_one_r3():
    a = {"1,2,3": 0.3, "1,2": 0.5, "1,3": 0.5, "2,3": 0.5}
    built = build_degree_one(a, 200, r=3)
    assert all(level.check() for level in built.seq.levels)


def test_pareto_valid_and_exact():
    built = build_pareto([1, 1, 1], PAIRS, 4.0, 8)
    seq = built.seq
    assert all(level.check() for level in seq.levels)
    np.testing.assert_allclose(seq.splits, 0.25)
    for n in range(1, 9):
        assert obox_mass(seq, n, 0) == pytest.approx(4.0 ** (-2 * n), rel=1e-12)
        assert obox_mass(seq, n, 0b100) == pytest.approx(4.0 ** (-1.5 * n), rel=1e-12)
    assert [m.alpha for m in built.margins.margins] == [1.0, 1.0, 1.0]


def test_pareto_edges_forced_to_alpha():
    built = build_pareto([1.0, 2.0, 1.5], {"1,2": 2.5, "1,3": 2.0, "2,3": 2.5, "1,2,3": 3.0}, 3.0, 3)
    x = built.seq.levels[0].x
    for i, alpha in enumerate([1.0, 2.0, 1.5]):
        assert x[7 & ~(1 << i)] == pytest.approx(3.0**-alpha)


def test_pareto_small_delta():
    delta = np.zeros((4, 8))
    delta[:, 0] = 0.05
    built = build_pareto([1, 1, 1], PAIRS, 4.0, 4, delta=delta)
    assert obox_mass(built.seq, 4, 0) == pytest.approx(1.05**4 * 4.0**-8, rel=1e-12)


def test_pareto_errors():
    with pytest.raises(ShapingError, match="outside"):
        build_pareto([1, 1, 1], {**PAIRS, "1,2": 2.5, "1,2,3": 2.8}, 4.0, 2)
    with pytest.raises(ShapingError, match="grow"):
        build_pareto([1, 1, 1], {**PAIRS, "1,2,3": 1.5}, 4.0, 2)
    with pytest.raises(ShapingError, match="positivity"):
        build_pareto([1, 1, 1], {"1,2": 1.1, "1,3": 1.1, "2,3": 1.1, "1,2,3": 3.0}, 4.0, 2)
    with pytest.raises(ShapingError):
        build_pareto([1, 1, 1], PAIRS, 0.5, 2)
    bad = np.zeros((2, 8))
    bad[:, 6] = 0.1
    with pytest.raises(ShapingError, match="vanish"):
        build_pareto([1, 1, 1], PAIRS, 4.0, 2, delta=bad)


def test_accepted_specs_pass_validator(rng):
    for _ in range(10):
        b = {"1,2": rng.uniform(1.1, 1.6), "1,3": rng.uniform(1.1, 1.6), "2,3": rng.uniform(1.1, 1.6)}
        b["1,2,3"] = max(b.values()) + rng.uniform(0.1, 0.5)
        a = {key: rng.uniform(0.5, 1.5) for key in b}
        spec = TailSpec.from_faces(3, 1, b, a)
        build_increasing(spec, 0.5, 3)
        assert validate_nc_k(spec).ok
