"""Exact test statistics for the mean of the super-resolution process.

Five families, all valid p-values (uniform under the null) except the plain
spacing statistic, which is the documented non-conservative baseline:

  rice / t_rice   Kac-Rice survival ratios at the continuous knots, known /
                  studentized noise level;
  spacing         Gaussian survival ratio at the continuous knots (not
                  uniform: its level at 5% is about 11% for f_c = 7);
  grid / t_grid   survival ratios at (lambda1, lambda2-bar), where the
                  randomized lambda2-bar restores exact uniformity;
  grid_spacing_n  the spacing test on a fixed p x p grid, exactly uniform.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import NonPositiveDenominator, OutOfRange, Unconverged
from .model import TorusPoint, kernel_gamma, wrap_delta
from .numerics import (
    QuadratureSpec,
    RngStream,
    integrate_upper,
    normal_pdf,
    normal_sf,
    student_pdf,
    student_sf,
)

# Student tails are polynomial, not Gaussian: with 11-13 degrees of freedom
# the mass beyond 12 still moves the h_bar integrals at the 1e-6 level, so the
# unknown-variance quadratures integrate out to 600 (the doubling panels make
# the wide window cost only a handful of extra panels).
_HBAR_SPEC = QuadratureSpec(node_count=64, tail_cut=600.0)


@dataclass(frozen=True)
class TestReport:
    """A test statistic value with its diagnostics."""

    name: str
    value: float
    aux: Optional[dict] = None


@dataclass(frozen=True)
class RandomizedAux:
    """The randomization behind a grid statistic: U uniform on the Voronoi
    cell of Z^2 under the metric -X''(z_hat), and the resulting lambda2_bar."""

    U: np.ndarray
    lambda2_bar: float
    K_window: int


def _checked(name, value, aux):
    if not -1e-9 <= value <= 1.0 + 1e-9:
        raise OutOfRange("statistic %s = %.17g is outside [0, 1]" % (name, value))
    return TestReport(name=name, value=float(value), aux=aux)


def _alphas_from_r(big_r):
    big_r = np.asarray(big_r, dtype=float)
    return -float(big_r[0, 0]), float(big_r[0, 1])


def g_bar(ell, big_r, sigma, ctx, spec=None):
    """Integral of det(-Lambda-tilde u + R) phi(u/sigma) over [ell, inf).

    With R = [[-a2, a3], [a3, 0]] the determinant is (a1 u + a2) u - a3^2.
    Note the plain phi(u/sigma), no 1/sigma: the normalization cancels in
    every ratio this feeds.
    """
    a1 = ctx.alpha1
    a2, a3 = _alphas_from_r(big_r)

    def integrand(u):
        return ((a1 * u + a2) * u - a3 * a3) * normal_pdf(u / sigma)

    return integrate_upper(integrand, ell, sigma, spec)


def _g_bar_closed(ell, a1, a2, a3, sigma):
    x = ell / sigma
    return sigma * (
        sigma * (a1 * ell + a2) * normal_pdf(x)
        + (a1 * sigma * sigma - a3 * a3) * normal_sf(x)
    )


def rice_known(cert, sigma, ctx, spec=None):
    """S-Rice: the Kac-Rice survival ratio g_bar(lambda1)/g_bar(lambda2).

    Evaluated in closed form (Gaussian moments) and cross-checked against the
    quadrature on every call; the two routes must agree to 1e-8.
    """
    a1 = ctx.alpha1
    a2, a3 = cert.alpha2, cert.alpha3
    num = _g_bar_closed(cert.lambda1, a1, a2, a3, sigma)
    den = _g_bar_closed(cert.lambda2, a1, a2, a3, sigma)
    if not den > 0.0:
        raise NonPositiveDenominator(
            "g_bar(lambda2) = %g; the certificate does not describe a maximum" % den
        )
    value = num / den
    q_num = g_bar(cert.lambda1, cert.R, sigma, ctx, spec)
    q_den = g_bar(cert.lambda2, cert.R, sigma, ctx, spec)
    if q_den > 0.0:
        q_value = q_num / q_den
        if abs(q_value - value) > 1e-8 * max(1.0, abs(q_value)):
            raise Unconverged(
                "closed form %.12g and quadrature %.12g disagree in rice_known"
                % (value, q_value)
            )
    aux = {
        "lambda1": cert.lambda1,
        "lambda2": cert.lambda2,
        "sigma": sigma,
        "alpha2": a2,
        "alpha3": a3,
        "quadrature": q_num / q_den if q_den > 0 else float("nan"),
    }
    return _checked("rice", value, aux)


def h_bar(ell, r, m, ctx, spec=None):
    """Student analogue of g_bar: integral over [ell, inf) of
    det(-Lambda-tilde t + r) f_{m-1}(t c) dt with c = sqrt((m-1)/(m-3)).

    r is the Hessian remainder already divided by sigma-hat.
    """
    a1 = ctx.alpha1
    a2, a3 = _alphas_from_r(r)
    c = math.sqrt((m - 1.0) / (m - 3.0))
    dof = m - 1

    def integrand(t):
        return ((a1 * t + a2) * t - a3 * a3) * student_pdf(t * c, dof)

    return integrate_upper(integrand, ell, 1.0, spec if spec is not None else _HBAR_SPEC)


def h_bar_closed(ell, r, m, ctx):
    """Closed form of h_bar from the Student moment identities:

        kappa [a1 (ell f_{m-3}(ell) + Fbar_{m-3}(ell)) + a2 f_{m-3}(ell)
               - a3^2 Fbar_{m-1}(ell c)],   kappa = 1/c = sqrt((m-3)/(m-1)),

    using int_L^inf s f_nu(s) ds = sqrt(nu/(nu-2)) f_{nu-2}(L sqrt((nu-2)/nu))
    and its integration by parts for the second moment.
    """
    a1 = ctx.alpha1
    a2, a3 = _alphas_from_r(r)
    c = math.sqrt((m - 1.0) / (m - 3.0))
    kappa = 1.0 / c
    return kappa * (
        a1 * (ell * student_pdf(ell, m - 3) + student_sf(ell, m - 3))
        + a2 * student_pdf(ell, m - 3)
        - a3 * a3 * student_sf(ell * c, m - 1)
    )


def rice_unknown(cert, var_est, ctx, spec=None):
    """T-Rice: the studentized Kac-Rice ratio h_bar(T1)/h_bar(T2) with
    T_i = lambda_i / sigma-hat and r = R / sigma-hat.

    The quadrature is the reported value; the closed form rides along in aux.
    Requires the conditional estimate (dof = 2N - 3 >= 5).
    """
    m = ctx.m
    if m - 3 < 5:
        raise ValueError("rice_unknown needs m - 3 = 2N - 3 >= 5 (f_c >= 2)")
    if var_est.dof != m - 3:
        raise ValueError(
            "rice_unknown needs the conditional variance estimate (dof %d), got dof %d"
            % (m - 3, var_est.dof)
        )
    s_hat = math.sqrt(var_est.value)
    t1 = cert.lambda1 / s_hat
    t2 = cert.lambda2 / s_hat
    r = np.asarray(cert.R, dtype=float) / s_hat
    num = h_bar(t1, r, m, ctx, spec)
    den = h_bar(t2, r, m, ctx, spec)
    if not den > 0.0:
        raise NonPositiveDenominator("h_bar(T2) = %g is not positive" % den)
    value = num / den
    cl_num = h_bar_closed(t1, r, m, ctx)
    cl_den = h_bar_closed(t2, r, m, ctx)
    aux = {
        "lambda1": cert.lambda1,
        "lambda2": cert.lambda2,
        "sigma_hat": s_hat,
        "dof": var_est.dof,
        "T1": t1,
        "T2": t2,
        "closed_form": cl_num / cl_den if cl_den > 0 else float("nan"),
    }
    return _checked("t_rice", value, aux)


def spacing_statistic(lambda1, lambda2, sigma):
    """The spacing baseline Phi-bar(lambda1/sigma) / Phi-bar(lambda2/sigma).

    With continuous knots this is NOT uniform under the null (its level at
    nominal 5% is around 11% for f_c = 7); it is kept as the comparison
    baseline that the Rice and randomized-grid corrections repair.
    """
    value = normal_sf(lambda1 / sigma) / normal_sf(lambda2 / sigma)
    aux = {"lambda1": lambda1, "lambda2": lambda2, "sigma": sigma}
    return _checked("spacing", value, aux)


def grid_knots(obs, p):
    """First and second knots of the LARS path restricted to the p x p grid
    t_i = 2 pi i / p: the grid maximum of X and the maximum of the regressed
    field over the remaining nodes.  Ties go to the lexicographically
    smallest (i, j)."""
    if p < 2:
        raise ValueError("grid mesh needs p >= 2, got %d" % p)
    n = obs.n_freq
    nodes = 2.0 * math.pi * np.arange(p) / p
    k = np.arange(-obs.f_c, obs.f_c + 1)
    z_t = np.exp(1j * np.outer(nodes, k)) @ obs.y / math.sqrt(n)
    x = np.real(np.outer(z_t, np.exp(-1j * nodes)))  # (t index, theta index)
    flat = int(np.argmax(x))
    i0, j0 = divmod(flat, p)
    lambda1_n = float(x[i0, j0])
    z_hat_n = TorusPoint.make(nodes[i0], nodes[j0])

    gam = kernel_gamma(obs.f_c, nodes - nodes[i0])
    rho = np.outer(gam, np.cos(nodes - nodes[j0]))
    with np.errstate(divide="ignore", invalid="ignore"):
        regressed = lambda1_n + (x - lambda1_n) / (1.0 - rho)
    regressed[i0, j0] = -np.inf
    lambda2_n = float(np.max(regressed))
    return lambda1_n, z_hat_n, lambda2_n


def grid_spacing_test(obs, p, sigma):
    """Spacing test on the fixed p x p grid: exactly uniform under the null
    (finite Gaussian vector, no continuum pathology)."""
    lambda1_n, _, lambda2_n = grid_knots(obs, p)
    value = normal_sf(lambda1_n / sigma) / normal_sf(lambda2_n / sigma)
    aux = {"lambda1_n": lambda1_n, "lambda2_n": lambda2_n, "sigma": sigma, "p": p}
    return _checked("grid_spacing_%d" % p, value, aux)


def _gauss_reduce(metric):
    """Lagrange-reduced basis (u, v) of Z^2 under the quadratic form `metric`:
    q(u) <= q(v) <= q(u + w) for all lattice w, and <u, v> <= 0."""
    a = np.asarray(metric, dtype=float)

    def q(w):
        return float(w @ a @ w)

    u = np.array([1, 0])
    v = np.array([0, 1])
    if q(u) > q(v):
        u, v = v, u
    for _ in range(64):
        mu = round(float(u @ a @ v) / q(u))
        v = v - mu * u
        if q(v) < q(u):
            u, v = v, u
        else:
            break
    if float(u @ a @ v) > 0.0:
        v = -v
    return u, v


def _voronoi_geometry(metric):
    """Relevant vectors of Z^2 under `metric` and a bounding box of the cell.

    The cell V0 is the intersection of |<x, r>| <= q(r)/2 over the relevant
    vectors r in {u, v, u+v} of a reduced basis.  The box is the componentwise
    maximum of 1 and the cell's extent, so that for ordinary metrics (cell
    inside [-1,1]^2) the proposal box is exactly [-1,1]^2.
    """
    a = np.asarray(metric, dtype=float)
    u, v = _gauss_reduce(a)
    rel = np.array([u, v, u + v], dtype=float)
    normals = rel @ a                      # rows r' A
    halves = 0.5 * np.einsum("ij,ij->i", normals, rel)  # q(r)/2

    vertices = []
    for i in range(3):
        for j in range(i + 1, 3):
            mat = np.array([normals[i], normals[j]])
            for si in (-1.0, 1.0):
                for sj in (-1.0, 1.0):
                    x = np.linalg.solve(mat, [si * halves[i], sj * halves[j]])
                    if np.all(np.abs(normals @ x) <= halves * (1.0 + 1e-9)):
                        vertices.append(x)
    extent = np.max(np.abs(np.array(vertices)), axis=0)
    box = np.maximum(1.0, extent)
    return normals, halves, box


def voronoi_sample(hess, stream):
    """A uniform draw from the Voronoi cell V0 of Z^2 under -hess,
    by rejection from the uniform law on a box.

    For ordinary metrics the box is [-1,1]^2 and the acceptance rate is 1/4
    (the cell always has area 1); very eccentric metrics stretch the cell
    outside that square, so the box is grown to the cell's true bounding box
    computed from the reduced-basis relevant vectors — membership against
    those three vectors is exact for every metric, where the naive 3 x 3
    neighbor test is not.
    """
    rng = stream.generator() if isinstance(stream, RngStream) else stream
    metric = -np.asarray(hess, dtype=float)
    normals, halves, box = _voronoi_geometry(metric)
    for _ in range(100000):
        u = rng.uniform(-1.0, 1.0, size=2) * box
        if np.all(np.abs(normals @ u) <= halves):
            return u
    raise Unconverged("voronoi_sample rejection loop failed to accept")


def lambda2_bar(lambda1, lambda2, hess, u_draw, ctx, k_window=16):
    """The randomized second knot:

        max(lambda2, lambda1 + max_{k in [-K,K]^2 \\ 0} k' hess (k - 2U) / (k' Lt k)).

    Each term tends to the strictly negative limit k' hess k / k' Lt k as |k|
    grows, so the sup is attained on small k; K = 16 is far beyond it (tested
    against 4K).  Because U lies in the Voronoi cell, 2 k' (-hess) U <=
    k'(-hess)k for every k, hence lambda2_bar < lambda1 almost surely.
    """
    hess = np.asarray(hess, dtype=float)
    u_draw = np.asarray(u_draw, dtype=float)
    rng_1d = np.arange(-k_window, k_window + 1)
    kk1, kk2 = np.meshgrid(rng_1d, rng_1d, indexing="ij")
    k_mat = np.stack([kk1.ravel(), kk2.ravel()], axis=1).astype(float)
    k_mat = k_mat[np.any(k_mat != 0, axis=1)]
    num = np.einsum("ki,ij,kj->k", k_mat, hess, k_mat - 2.0 * u_draw)
    den = ctx.alpha1 * k_mat[:, 0] ** 2 + k_mat[:, 1] ** 2
    return float(max(lambda2, lambda1 + np.max(num / den)))


def grid_test_known(lambda1, lambda2_bar_value, sigma):
    """S-Grid: Phi-bar(lambda1/sigma) / Phi-bar(lambda2_bar/sigma)."""
    value = normal_sf(lambda1 / sigma) / normal_sf(lambda2_bar_value / sigma)
    aux = {"lambda1": lambda1, "lambda2_bar": lambda2_bar_value, "sigma": sigma}
    return _checked("grid", value, aux)


def grid_test_unknown(lambda1, lambda2_bar_value, var_est, ctx):
    """T-Grid: Fbar_{m-1}(lambda1/sigma-hat) / Fbar_{m-1}(lambda2_bar/sigma-hat)
    with sigma-hat from the grid estimator (dof = m - 1 = 2N - 1)."""
    m = ctx.m
    if var_est.dof != m - 1:
        raise ValueError(
            "grid_test_unknown needs the grid variance estimate (dof %d), got dof %d"
            % (m - 1, var_est.dof)
        )
    s_hat = math.sqrt(var_est.value)
    value = student_sf(lambda1 / s_hat, m - 1) / student_sf(lambda2_bar_value / s_hat, m - 1)
    aux = {
        "lambda1": lambda1,
        "lambda2_bar": lambda2_bar_value,
        "sigma_hat": s_hat,
        "dof": var_est.dof,
    }
    return _checked("t_grid", value, aux)
