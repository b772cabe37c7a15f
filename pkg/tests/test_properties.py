import numpy as np
from hypothesis import assume, given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from eaisim.assembly import absorbed_power, build_L
from eaisim.greens import GreenOptions, green_dyadic
from eaisim.interferometry import (
    ProbeSet, direct_H, eigenvalue_clusters, extract_fringe, measure_H, visibility_row,
)
from eaisim.io import Table, read_csv, write_csv
from eaisim.model import Dipole, DipoleSystem, ghz_to_omega

SETTINGS = settings(max_examples=40, deadline=None)

coords = st.floats(-0.5, 0.5, allow_nan=False)
point = st.tuples(coords, coords, coords)
freq = st.floats(100.0, 600.0)


@st.composite
def systems(draw, max_count=5):
    n = draw(st.integers(1, max_count))
    pts = draw(st.lists(point, min_size=n, max_size=n))
    pts = np.array(pts)
    dist = np.linalg.norm(pts[:, None] - pts[None], axis=-1) + np.eye(n)
    assume(dist.min() > 0.02)
    dipoles = []
    for p in pts:
        f0 = draw(st.floats(150.0, 450.0))
        gamma = draw(st.floats(5.0, 60.0))
        alpha = draw(st.floats(1e-4, 1e-2))
        axis = draw(st.sampled_from([(0, 0, 1), (1, 0, 0), (0, 1, 1)]))
        dipoles.append(Dipole.from_ghz(p, f0, gamma, alpha, axis))
    return DipoleSystem(tuple(dipoles))


def probe_sets(count):
    # distinct x offsets on a line above the structure, so no two probes coincide
    xs = st.lists(st.integers(-50, 50), min_size=count, max_size=count, unique=True)
    return st.tuples(xs, st.floats(2, 6)).map(lambda a: ProbeSet.from_points(
        [[0.1 * x, a[1], 0.05 * x] for x in a[0]], green_opts=GreenOptions.named("near")))


@SETTINGS
@given(systems(), freq)
def test_L_is_hermitian_psd(system, f):
    L = build_L(system, ghz_to_omega(f))
    scale = np.abs(L).max()
    assert np.abs(L - L.conj().T).max() <= 1e-12 * scale
    assert np.linalg.eigvalsh(L).min() >= -1e-10 * scale


@SETTINGS
@given(systems(3), freq, st.integers(0, 2**32 - 1), st.complex_numbers(max_magnitude=10, allow_nan=False))
def test_power_nonnegative_and_quadratic(system, f, seed, c):
    rng = np.random.default_rng(seed)
    e = rng.normal(size=system.dim) + 1j * rng.normal(size=system.dim)
    w = ghz_to_omega(f)
    W = absorbed_power(system, w, e, cross_check=True, rtol=1e-8)
    assert W >= 0
    Wc = absorbed_power(system, w, c * e)
    assert abs(Wc - abs(c) ** 2 * W) <= 1e-10 * max(W * abs(c) ** 2, 1e-300)


@SETTINGS
@given(systems(3), freq, probe_sets(4))
def test_visibility_bounded(system, f, probes):
    H = direct_H(system, ghz_to_omega(f), probes).values
    d = np.real(np.diag(H))
    live = np.flatnonzero(d > 1e-8 * d.max()) if d.max() > 0 else []
    # a probe whose field is orthogonal to every dipole axis absorbs nothing
    for ref in live:
        assert np.all(np.abs(visibility_row(H[np.ix_(live, live)], list(live).index(ref))) <= 1 + 1e-9)


@SETTINGS
@given(systems(3), freq, probe_sets(3))
def test_fringe_H_matches_direct(system, f, probes):
    w = ghz_to_omega(f)
    Hm, Hd = measure_H(system, w, probes).values, direct_H(system, w, probes).values
    assert np.abs(Hm - Hd).max() <= 1e-9 * np.abs(Hd).max()


@SETTINGS
@given(systems(3), freq, probe_sets(4), st.permutations(range(4)))
def test_H_equivariant_under_probe_permutation(system, f, probes, perm):
    w = ghz_to_omega(f)
    H = direct_H(system, w, probes).values
    Hp = direct_H(system, w, probes.subset(perm)).values
    np.testing.assert_allclose(Hp, H[np.ix_(perm, perm)], atol=1e-12 * np.abs(H).max())


@SETTINGS
@given(st.floats(0.1, 100), st.complex_numbers(max_magnitude=10, allow_nan=False), st.sampled_from([4, 8, 16, 32]))
def test_fringe_extraction_inverts_model(dc, h, steps):
    phases = 2 * np.pi * np.arange(steps) / steps
    W = dc + 2 * np.real(h * np.exp(1j * phases))
    dc_out, h_out = extract_fringe(list(zip(phases, W)))
    assert abs(dc_out - dc) <= 1e-12 * (dc + abs(h))
    assert abs(h_out - h) <= 1e-12 * (dc + abs(h))


@SETTINGS
@given(point, point, freq, st.sampled_from(["full", "near", "intermediate", "far"]))
def test_green_reciprocity(a, b, f, name):
    a, b = np.array(a), np.array(b)
    assume(np.linalg.norm(a - b) > 1e-3)
    opts = GreenOptions.named(name)
    w = ghz_to_omega(f)
    G = green_dyadic(a, b, w, opts)
    np.testing.assert_allclose(G, green_dyadic(b, a, w, opts), rtol=1e-13)
    np.testing.assert_allclose(G, G.T, rtol=1e-13, atol=1e-13 * np.abs(G).max())


@SETTINGS
@given(point, freq, st.floats(0, 2 * np.pi))
def test_green_rotation_covariance(r, f, theta):
    r = np.array(r)
    assume(np.linalg.norm(r) > 1e-3)
    c, s = np.cos(theta), np.sin(theta)
    Q = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
    w = ghz_to_omega(f)
    G = green_dyadic(r, np.zeros(3), w)
    np.testing.assert_allclose(green_dyadic(Q @ r, np.zeros(3), w), Q @ G @ Q.T,
                               atol=1e-12 * np.abs(G).max())


@SETTINGS
@given(st.lists(st.floats(1e-3, 1e3), min_size=1, max_size=12), st.floats(1e-9, 0.5))
def test_clusters_partition_sorted_values(values, gap):
    values = sorted(values, reverse=True)
    clusters = eigenvalue_clusters(values, gap)
    assert [i for c in clusters for i in c] == list(range(len(values)))
    for a, b in zip(clusters, clusters[1:]):
        x, y = values[a[-1]], values[b[0]]
        assert abs(x - y) > gap * max(x, y)


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, (4, 3), elements=st.floats(allow_nan=False, allow_infinity=False)))
def test_csv_round_trip_is_exact(tmp_path_factory, data):
    path = tmp_path_factory.mktemp("csv") / "t.csv"
    back = read_csv(write_csv(Table.from_array(["a", "b", "c"], data), path))
    np.testing.assert_array_equal(np.array(back.rows, dtype=float), data)
