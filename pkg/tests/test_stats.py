"""The five test statistics, the Voronoi draw, and the randomized second knot."""

import math

import numpy as np
import pytest

from srknots.errors import NonPositiveDenominator, OutOfRange
from srknots.knots import KnotCertificate, compute_certificate, first_knot
from srknots.model import AtomicMeasure, ModelContext, TorusPoint, synthesize
from srknots.numerics import RngStream, normal_pdf, normal_sf
from srknots.stats import (
    _voronoi_geometry,
    g_bar,
    grid_knots,
    grid_spacing_test,
    grid_test_known,
    grid_test_unknown,
    h_bar,
    h_bar_closed,
    lambda2_bar,
    rice_known,
    rice_unknown,
    spacing_statistic,
    voronoi_sample,
)
from srknots.variance import VarianceEstimate, sigma_hat_cond

TWO_PI = 2.0 * math.pi


def _cert(lambda1, lambda2, alpha2=0.0, alpha3=0.0):
    """Hand-built certificate for closed-form checks."""
    big_r = np.array([[-alpha2, alpha3], [alpha3, 0.0]])
    return KnotCertificate(
        z_hat=TorusPoint.make(0.0, 0.0),
        lambda1=lambda1,
        y_hat=TorusPoint.make(1.0, 0.0),
        lambda2=lambda2,
        R=big_r,
        alpha2=alpha2,
        alpha3=alpha3,
        grad_norm_at_zhat=0.0,
    )


def _noisy_obs(seed, f_c=3):
    return synthesize(AtomicMeasure.empty(), f_c, 1.0, RngStream(seed, 0))


def _g_bar_reference(ell, a1, a2, a3, sigma):
    x = ell / sigma
    return sigma * (
        sigma * (a1 * ell + a2) * normal_pdf(x)
        + (a1 * sigma * sigma - a3 * a3) * normal_sf(x)
    )


def test_g_bar_zero_remainder():
    ctx = ModelContext(3)
    assert g_bar(0.0, np.zeros((2, 2)), 1.0, ctx) == pytest.approx(ctx.alpha1 / 2.0, abs=1e-10)
    assert abs(g_bar(40.0, np.zeros((2, 2)), 1.0, ctx)) < 1e-15


def test_g_bar_matches_closed_form():
    ctx = ModelContext(5)
    rng = np.random.default_rng(17)
    for _ in range(100):
        ell = rng.uniform(0.0, 4.0)
        a2 = rng.uniform(-3.0, 3.0)
        a3 = rng.uniform(-2.0, 2.0)
        sigma = rng.uniform(0.5, 2.0)
        big_r = np.array([[-a2, a3], [a3, 0.0]])
        quad = g_bar(ell, big_r, sigma, ctx)
        closed = _g_bar_reference(ell, ctx.alpha1, a2, a3, sigma)
        assert abs(quad - closed) < 1e-9 * max(1.0, abs(closed))


def test_rice_known_equal_knots_is_one():
    ctx = ModelContext(3)
    report = rice_known(_cert(1.3, 1.3, alpha2=0.4, alpha3=-0.2), 1.0, ctx)
    assert report.value == pytest.approx(1.0, abs=1e-12)
    assert report.name == "rice"


def test_rice_known_reference_value():
    # alpha2 = alpha3 = 0, sigma = 1, knots (2, 1):
    # (2 phi(2) + sf(2)) / (phi(1) + sf(1))
    ctx = ModelContext(3)
    report = rice_known(_cert(2.0, 1.0), 1.0, ctx)
    expected = (2 * normal_pdf(2.0) + normal_sf(2.0)) / (normal_pdf(1.0) + normal_sf(1.0))
    assert report.value == pytest.approx(expected, rel=1e-12)
    assert report.value == pytest.approx(0.3263194900144883, rel=1e-10)
    assert {"lambda1", "lambda2", "sigma"} <= set(report.aux)


def test_rice_known_scale_equivariance(obs_seed42):
    from srknots.model import Observation

    ctx = obs_seed42.context()
    cert = compute_certificate(obs_seed42)
    base = rice_known(cert, 1.0, ctx).value
    c = 2.9
    scaled = Observation(f_c=obs_seed42.f_c, y=c * obs_seed42.y, sigma=c)
    cert_c = compute_certificate(scaled)
    assert rice_known(cert_c, c, ctx).value == pytest.approx(base, abs=1e-9)


def test_rice_known_nonpositive_denominator():
    ctx = ModelContext(3)
    # both survival terms underflow to zero at lambda2 = 60
    with pytest.raises(NonPositiveDenominator):
        rice_known(_cert(61.0, 60.0), 1.0, ctx)


def test_h_bar_zero_remainder_value():
    # r = 0, ell = 0, m = 14: alpha1 * sqrt(11/13) / 2
    ctx = ModelContext(3)
    val = h_bar(0.0, np.zeros((2, 2)), 14, ctx)
    assert val == pytest.approx(ctx.alpha1 * math.sqrt(11.0 / 13.0) / 2.0, abs=1e-10)
    assert abs(h_bar(40.0, np.zeros((2, 2)), 14, ctx)) < 1e-8 * val


def test_h_bar_matches_closed_form():
    ctx = ModelContext(3)
    rng = np.random.default_rng(23)
    for _ in range(100):
        ell = rng.uniform(0.0, 4.0)
        a2 = rng.uniform(-3.0, 3.0)
        a3 = rng.uniform(-2.0, 2.0)
        m = int(rng.choice([8, 14, 30]))
        r = np.array([[-a2, a3], [a3, 0.0]])
        quad = h_bar(ell, r, m, ctx)
        closed = h_bar_closed(ell, r, m, ctx)
        assert abs(quad - closed) < 1e-7 * max(1.0, abs(closed))


def test_rice_unknown_equal_knots_is_one():
    ctx = ModelContext(3)
    est = VarianceEstimate(value=0.8, dof=ctx.m - 3, design=())
    report = rice_unknown(_cert(1.7, 1.7, alpha2=0.3), est, ctx)
    assert report.value == pytest.approx(1.0, abs=1e-12)
    assert report.name == "t_rice"
    assert report.aux["dof"] == 11


def test_rice_unknown_validation():
    ctx = ModelContext(3)
    with pytest.raises(ValueError):
        rice_unknown(_cert(2.0, 1.0), VarianceEstimate(value=1.0, dof=13, design=()), ctx)
    with pytest.raises(ValueError):
        rice_unknown(
            _cert(2.0, 1.0),
            VarianceEstimate(value=1.0, dof=3, design=()),
            ModelContext(1),
        )


def test_rice_unknown_on_observation(obs_seed42):
    ctx = obs_seed42.context()
    cert = compute_certificate(obs_seed42)
    est = sigma_hat_cond(obs_seed42, cert.z_hat)
    report = rice_unknown(cert, est, ctx)
    assert 0.0 <= report.value <= 1.0
    assert report.aux["closed_form"] == pytest.approx(report.value, abs=1e-7)


def test_spacing_values():
    assert spacing_statistic(1.4, 1.4, 1.0).value == pytest.approx(1.0, abs=1e-14)
    report = spacing_statistic(2.0, 1.0, 1.0)
    assert report.value == pytest.approx(0.14339349869880644, rel=1e-12)
    assert report.name == "spacing"


def test_grid_knots_dominated_by_continuum(obs_seed42):
    _, lambda1 = first_knot(obs_seed42)
    for p in (3, 10, 32, 50):
        l1n, _, l2n = grid_knots(obs_seed42, p)
        assert l1n <= lambda1 + 1e-12
        assert l2n <= l1n + 1e-12
    with pytest.raises(ValueError):
        grid_knots(obs_seed42, 1)


def test_grid_knots_mesh_refinement():
    # pinned instance where the sweep is monotone and the 200-grid closes
    # to within 1e-4 of the continuum maximum
    obs = _noisy_obs(6)
    _, lambda1 = first_knot(obs)
    vals = [grid_knots(obs, p)[0] for p in (3, 10, 32, 50, 200)]
    assert all(a <= b + 1e-15 for a, b in zip(vals, vals[1:]))
    assert lambda1 - vals[-1] < 1e-4
    assert vals[-1] <= lambda1


def test_grid_knots_noiseless_atom_on_node():
    x0 = TWO_PI * 3.0 / 10.0
    obs = synthesize(AtomicMeasure.from_atoms([(x0, 1.5)]), 3, 0.0, RngStream(0))
    l1n, z_n, _ = grid_knots(obs, 10)
    assert l1n == pytest.approx(1.5, abs=1e-12)
    assert z_n.t == pytest.approx(x0, abs=1e-12)
    assert z_n.theta == 0.0


def test_grid_knots_tie_break_lexicographic():
    # two unit atoms at antipodal grid nodes make (0, 0) and (pi, 0) tie
    measure = AtomicMeasure.from_atoms([(0.0, 1.0), (math.pi, 1.0)])
    obs = synthesize(measure, 1, 0.0, RngStream(0))
    l1n, z_n, _ = grid_knots(obs, 4)
    assert l1n == pytest.approx(2.0 / 3.0, rel=1e-12)
    assert z_n.t == 0.0 and z_n.theta == 0.0


def test_grid_spacing_uniform_null():
    # exact U[0,1] on a fixed grid: 300-rep KS within the 99% band
    vals = []
    for rep in range(300):
        obs = synthesize(AtomicMeasure.empty(), 3, 1.0, RngStream(31337, rep))
        vals.append(grid_spacing_test(obs, 10, 1.0).value)
    vals = np.sort(np.asarray(vals))
    n = vals.size
    i = np.arange(1, n + 1)
    ks = max(np.max(i / n - vals), np.max(vals - (i - 1) / n))
    assert ks < 1.63 / math.sqrt(n)


def test_grid_spacing_report_shape(obs_seed42):
    report = grid_spacing_test(obs_seed42, 10, 1.0)
    assert report.name == "grid_spacing_10"
    assert 0.0 <= report.value <= 1.0
    assert report.aux["p"] == 10


def test_voronoi_sample_diagonal_cell():
    hess = np.diag([-2.0, -0.5])
    gen = RngStream(12, 0).generator()
    draws = np.array([voronoi_sample(hess, gen) for _ in range(400)])
    assert np.all(np.abs(draws) <= 0.5 + 1e-12)
    # deterministic when handed the stream itself
    u1 = voronoi_sample(hess, RngStream(12, 5))
    u2 = voronoi_sample(hess, RngStream(12, 5))
    assert np.array_equal(u1, u2)


def test_voronoi_sample_membership_general():
    # every draw must be at least as close to 0 as to any nearby lattice point
    hess = -np.array([[4.0, -1.9], [-1.9, 1.0]])
    metric = -hess
    gen = RngStream(13, 0).generator()
    ks = [np.array([i, j]) for i in range(-2, 3) for j in range(-2, 3) if (i, j) != (0, 0)]
    for _ in range(400):
        u = voronoi_sample(hess, gen)
        qu = u @ metric @ u
        for k in ks:
            assert qu <= (u - k) @ metric @ (u - k) + 1e-9


def test_voronoi_sample_acceptance_rate():
    # the cell has unit area; for an ordinary metric the proposal box is
    # [-1,1]^2, so the acceptance rate is 1/4
    metric = np.diag([2.0, 0.5])
    normals, halves, box = _voronoi_geometry(metric)
    assert np.array_equal(box, [1.0, 1.0])
    props = RngStream(7, 0).generator().uniform(-1.0, 1.0, size=(10_000, 2))
    accept = np.all(np.abs(props @ normals.T) <= halves, axis=1)
    assert abs(accept.mean() - 0.25) < 0.02


def test_voronoi_sample_eccentric_mean():
    # strongly sheared metric: the cell leaves [-1,1]^2 (the box grows), and
    # the draw stays centered
    hess = -np.array([[4.0, -1.9], [-1.9, 1.0]])
    _, _, box = _voronoi_geometry(-hess)
    assert box[1] > 1.0
    gen = RngStream(99, 0).generator()
    draws = np.array([voronoi_sample(hess, gen) for _ in range(10_000)])
    assert np.max(np.abs(draws[:, 1])) > 1.0  # actually uses the grown box
    assert np.all(np.abs(draws.mean(axis=0)) < 0.02)


def test_lambda2_bar_diagonal_axis_vectors():
    # U = 0, hess = -diag(d1, d2): the axis vectors attain the sup, giving
    # max(lambda2, lambda1 - min(d1/alpha1, d2))
    ctx = ModelContext(3)
    val = lambda2_bar(2.0, 1.0, np.diag([-2.0, -0.5]), np.zeros(2), ctx)
    assert val == pytest.approx(1.5, abs=1e-14)
    val2 = lambda2_bar(2.0, 1.9, np.diag([-2.0, -0.5]), np.zeros(2), ctx)
    assert val2 == pytest.approx(1.9, abs=1e-14)


def test_lambda2_bar_dominates_and_window_stable():
    ctx = ModelContext(3)
    rng = np.random.default_rng(29)
    for _ in range(100):
        a = rng.uniform(0.5, 4.0)
        b = rng.uniform(0.3, 2.0)
        c = rng.uniform(-0.8, 0.8) * math.sqrt(a * b)
        hess = -np.array([[a, c], [c, b]])
        u = voronoi_sample(hess, rng)
        lam1 = rng.uniform(1.0, 3.0)
        lam2 = rng.uniform(0.0, lam1)
        v16 = lambda2_bar(lam1, lam2, hess, u, ctx, k_window=16)
        v64 = lambda2_bar(lam1, lam2, hess, u, ctx, k_window=64)
        assert v16 >= lam2
        assert v16 < lam1
        assert abs(v16 - v64) < 1e-12


def test_grid_test_known_values():
    report = grid_test_known(1.8, 1.8, 1.0)
    assert report.value == pytest.approx(1.0, abs=1e-14)
    assert report.name == "grid"
    with pytest.raises(OutOfRange):
        grid_test_known(1.0, 2.0, 1.0)  # ratio above 1 must not be clamped


def test_grid_test_unknown_dof_validation():
    ctx = ModelContext(3)
    est_wrong = VarianceEstimate(value=1.0, dof=11, design=())
    with pytest.raises(ValueError):
        grid_test_unknown(2.0, 1.0, est_wrong, ctx)
    est = VarianceEstimate(value=1.0, dof=13, design=())
    report = grid_test_unknown(2.0, 1.0, est, ctx)
    assert report.name == "t_grid"
    assert 0.0 <= report.value <= 1.0
    assert report.aux["dof"] == 13


def test_grid_statistic_dominates_spacing():
    # lambda2_bar >= lambda2 and a decreasing survival make S-grid >= S-spacing
    for seed in range(12):
        obs = _noisy_obs(3000 + seed)
        ctx = obs.context()
        cert = compute_certificate(obs)
        hess = np.asarray(cert.R) - ctx.lambda_tilde() * cert.lambda1
        u = voronoi_sample(hess, RngStream(3000 + seed, 1))
        l2b = lambda2_bar(cert.lambda1, cert.lambda2, hess, u, ctx)
        s_grid = grid_test_known(cert.lambda1, l2b, 1.0).value
        s_spacing = spacing_statistic(cert.lambda1, cert.lambda2, 1.0).value
        assert s_grid >= s_spacing - 1e-12
