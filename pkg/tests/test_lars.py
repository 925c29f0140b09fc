"""Continuation path: knot invariants, homogeneity, exports."""

import math

import numpy as np
import pytest

from srknots.knots import first_knot, second_knot
from srknots.lars import LarsOptions, export_csv, lars_residual, lars_run
from srknots.model import AtomicMeasure, Observation, synthesize
from srknots.numerics import RngStream

TWO_PI = 2.0 * math.pi


def _noisy_obs(seed, f_c=3):
    return synthesize(AtomicMeasure.empty(), f_c, 1.0, RngStream(seed, 0))


def _path_invariants(obs, path, tol=1e-7):
    """Residual modulus lambda on the active set, dominated elsewhere,
    strictly decreasing knots."""
    lams = [knot.lam for knot in path.knots]
    assert all(a > b for a, b in zip(lams, lams[1:]))
    t_dense = np.linspace(0.0, TWO_PI, 4096, endpoint=False)
    for k, knot in enumerate(path.knots, start=1):
        res_active = lars_residual(obs, path, k, np.array(knot.active))
        assert np.max(np.abs(np.abs(res_active) - knot.lam)) < tol
        res_dense = np.abs(lars_residual(obs, path, k, t_dense))
        assert np.max(res_dense) <= knot.lam + tol


def test_options_validation():
    with pytest.raises(ValueError):
        LarsOptions(k_max=1)
    with pytest.raises(ValueError):
        LarsOptions(lambda_min=0.0)
    with pytest.raises(ValueError):
        LarsOptions(lambda_step_fraction=-0.1)
    with pytest.raises(ValueError):
        LarsOptions(event_grid=4)
    with pytest.raises(ValueError):
        lars_run(_noisy_obs(0), 0.0)


def test_path_invariants_noise_only():
    for seed in (42, 7, 101, 555):
        obs = _noisy_obs(seed)
        path = lars_run(obs, 1.0, LarsOptions(k_max=4))
        assert path.status == "reached_k_max"
        assert len(path.knots) == 4
        _path_invariants(obs, path)


def test_first_two_knots_match_knot_module():
    obs = _noisy_obs(42)
    path = lars_run(obs, 1.0, LarsOptions(k_max=3))
    z_hat, lambda1 = first_knot(obs)
    _, lambda2 = second_knot(obs, z_hat, lambda1)
    assert path.knots[0].lam == pytest.approx(lambda1, abs=1e-8)
    assert path.knots[0].active[0] == pytest.approx(z_hat.t, abs=1e-8)
    assert path.knots[1].lam == pytest.approx(lambda2, abs=1e-8)


def test_noiseless_single_atom():
    x0, a0 = 1.2, 2.5
    obs = synthesize(AtomicMeasure.from_atoms([(x0, a0)]), 3, 0.0, RngStream(0))
    path = lars_run(obs, 1.0)
    assert path.status == "reached_lambda_min"
    assert len(path.knots) == 1
    assert path.knots[0].lam == pytest.approx(a0, abs=1e-9)
    assert path.knots[0].active[0] == pytest.approx(x0, abs=1e-9)


def test_homogeneity():
    obs = _noisy_obs(9)
    c = 3.7
    scaled = Observation(f_c=obs.f_c, y=c * obs.y, sigma=c)
    base = lars_run(obs, 1.0, LarsOptions(k_max=3))
    big = lars_run(scaled, c, LarsOptions(k_max=3))
    assert len(base.knots) == len(big.knots)
    for kb, kc in zip(base.knots, big.knots):
        assert kc.lam == pytest.approx(c * kb.lam, rel=1e-8)
        for tb, tc in zip(kb.active, kc.active):
            assert tc == pytest.approx(tb, abs=1e-8)
        for ab, ac in zip(kb.weights, kc.weights):
            assert abs(ac - ab / c) < 1e-8 * max(1.0, abs(ab))


def test_residual_bounds_and_errors():
    obs = _noisy_obs(42)
    path = lars_run(obs, 1.0, LarsOptions(k_max=3))
    t = np.linspace(0.0, TWO_PI, 101)
    # knot 1 carries zero weights, so the residual is Z itself
    from srknots.model import z_eval

    assert np.allclose(lars_residual(obs, path, 1, t), z_eval(obs, t), atol=1e-14)
    assert isinstance(lars_residual(obs, path, 2, 0.3), complex)
    with pytest.raises(IndexError):
        lars_residual(obs, path, 0, 0.3)
    with pytest.raises(IndexError):
        lars_residual(obs, path, len(path.knots) + 1, 0.3)


def test_export_csv_round_trip():
    obs = _noisy_obs(42)
    path = lars_run(obs, 1.0, LarsOptions(k_max=3))
    text = export_csv(path)
    lines = text.strip().split("\n")
    assert lines[0] == "k,lambda,t_i,re_a_i,im_a_i"
    n_rows = sum(len(knot.active) for knot in path.knots)
    assert len(lines) == 1 + n_rows
    row = lines[1].split(",")
    assert int(row[0]) == 1
    assert float(row[1]) == path.knots[0].lam
    assert float(row[2]) == path.knots[0].active[0]
    # the entering point always carries weight zero
    last = lines[-1].split(",")
    assert float(last[3]) == 0.0 and float(last[4]) == 0.0
