"""Grid-less computation of the first two knots of the correlation field.

The first knot is the global maximizer of X on the 2-torus, found as the
maximizer of |Z| on the circle (theta aligns with the phase of Z).  The
second knot is lambda1 + max g where

    g(y) = (X(y) - lambda1) / (1 - rho(y - z_hat)),

the amount by which the regressed field X^{z_hat} falls short of lambda1.
Near z_hat both numerator and denominator vanish quadratically, so there the
ratio is evaluated through the integral remainder of Taylor's theorem:

    Num(y) = integral_0^1 (1-h) u' X''(z_hat + h d) u dh        (Gauss-Legendre)
    Den(y) = (1/2N) sum_k c_k^2 sinc^2(r c_k / 2),   c_k = k cos(a) - sin(a)

with d = y - z_hat = r (cos a, sin a).  The exact identity Den * r^2 =
1 - rho(d) makes the two branches agree for every r, so the switch at
r = 0.5 is seamless.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DegenerateProcess, NearSingular, NotAMaximum
from .model import (
    TorusPoint,
    correlation,
    correlation_grad,
    kernel_gamma,
    torus_delta,
    wrap_delta,
    x_grad,
    x_hess,
    z_deriv,
    z_eval,
)
from .numerics import maximize_1d, maximize_2d

RADIUS_SWITCH = 0.5


@dataclass(frozen=True)
class KnotCertificate:
    """The knots and local geometry of one observation.

    R = X''(z_hat) + Lambda-tilde * lambda1 = [[-alpha2, alpha3], [alpha3, 0]]
    is the Hessian remainder at the first knot; its theta-theta entry vanishes
    identically because X_thth = -X.
    """

    z_hat: TorusPoint
    lambda1: float
    y_hat: TorusPoint
    lambda2: float
    R: np.ndarray
    alpha2: float
    alpha3: float
    grad_norm_at_zhat: float


@lru_cache(maxsize=32)
def _t_grid(f_c, n_points):
    """Cached t grid on [0, 2*pi) with the matrix exp(i k t) for fast |Z| sweeps."""
    t = np.linspace(0.0, 2.0 * math.pi, n_points, endpoint=False)
    k = np.arange(-f_c, f_c + 1)
    return t, np.exp(1j * np.outer(t, k))


@lru_cache(maxsize=4)
def _gl_unit(n_nodes):
    """Gauss-Legendre nodes/weights mapped to [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    return 0.5 * (x + 1.0), 0.5 * w


def _local_max_mask_1d(vals):
    left = np.roll(vals, 1)
    right = np.roll(vals, -1)
    return (vals >= left) & (vals > right)


def first_knot(obs, grid_factor=32):
    """Locate the global maximizer of X: t_hat maximizes |Z|, theta_hat = arg Z(t_hat).

    A coarse sweep on grid_factor*N points brackets every local maximum of
    |Z|^2; each is polished by bounded Brent search to |dt| < 1e-10, and the
    best polished value wins (ties go to the smallest t).
    """
    n = obs.n_freq
    t_grid, emat = _t_grid(obs.f_c, grid_factor * n)
    zvals = emat @ obs.y / math.sqrt(n)
    f_grid = np.abs(zvals) ** 2
    top = math.sqrt(f_grid.max())
    if top - math.sqrt(f_grid.min()) < 1e-12 * max(1.0, top):
        raise DegenerateProcess(
            "|Z| is constant to within 1e-12: no isolated maximizer exists"
        )

    h = t_grid[1] - t_grid[0]

    def f_scalar(t):
        return abs(z_eval(obs, t)) ** 2

    def polish(t):
        # Newton on d|Z|^2/dt = 0: Brent alone stalls at sqrt(eps) because it
        # only sees function values; two or three derivative steps reach the
        # rounding floor of the gradient itself.
        for _ in range(8):
            z0 = z_eval(obs, t)
            z1 = z_deriv(obs, t, 1)
            z2 = z_deriv(obs, t, 2)
            f1 = 2.0 * (z0.conjugate() * z1).real
            f2 = 2.0 * (abs(z1) ** 2 + (z0.conjugate() * z2).real)
            if f2 >= 0.0:
                return t
            step = f1 / f2
            t -= step
            if abs(step) < 1e-14:
                break
        return t

    candidates = []
    for idx in np.nonzero(_local_max_mask_1d(f_grid))[0]:
        t0 = t_grid[idx]
        t_star, f_star = maximize_1d(f_scalar, (t0 - h, t0 + h), tol=1e-10)
        t_new = polish(t_star)
        # Trust the Newton fixpoint whenever it stayed local: near the
        # optimum the value comparison is dominated by rounding noise while
        # the gradient residual is not.
        if np.isfinite(t_new) and abs(t_new - t_star) < 0.25 * h:
            t_star = t_new
            f_star = max(f_star, f_scalar(t_new))
        candidates.append((f_star, t_star % (2.0 * math.pi)))
    best = max(c[0] for c in candidates)
    tied = [c for c in candidates if c[0] >= best - 1e-9 * max(1.0, best)]
    t_hat = min(t for _, t in tied)
    z_at = z_eval(obs, t_hat)
    lambda1 = abs(z_at)
    theta_hat = math.atan2(z_at.imag, z_at.real)
    return TorusPoint.make(t_hat, theta_hat), float(lambda1)


def regressed_value(obs, z, y, mode="on_value"):
    """Value at y of the field regressed on X(z) ("on_value") or on
    (X(z), X'(z)) ("on_value_and_grad").

    on_value:          X(z) + (X(y) - X(z)) / (1 - rho(y-z))
    on_value_and_grad: (X(y) - rho X(z) + <rho'(y-z), Lt^{-1} X'(z)>) / (1 - rho)

    Both are smooth in y away from z; near z use the robust ratio of
    second_knot instead (NearSingular is raised when 1 - rho <= 1e-14).
    """
    ctx = obs.context()
    d = torus_delta(y, z)
    rho = correlation(ctx, d)
    if not 1.0 - rho > 1e-14:
        raise NearSingular(
            "1 - rho(y-z) = %g is below 1e-14; use the Taylor-remainder ratio" % (1.0 - rho,)
        )
    from .model import x_eval  # local import to keep module header lean

    xz = x_eval(obs, z)
    xy = x_eval(obs, y)
    if mode == "on_value":
        return float(xz + (xy - xz) / (1.0 - rho))
    if mode == "on_value_and_grad":
        grad = x_grad(obs, z)
        rp = correlation_grad(ctx, d)
        corr = rp[0] * grad[0] / ctx.alpha1 + rp[1] * grad[1]
        return float((xy - rho * xz + corr) / (1.0 - rho))
    raise ValueError("mode must be 'on_value' or 'on_value_and_grad', got %r" % (mode,))


def _aligned_coeffs(obs, z_hat):
    """w_k = y_k exp(i(k t_hat - theta_hat)): Fourier data rotated so that
    Z(t_hat) aligns with the positive real axis."""
    k = np.arange(-obs.f_c, obs.f_c + 1)
    return obs.y * np.exp(1j * (k * z_hat.t - z_hat.theta))


def _g_ratio(obs, z_hat, lambda1, w, dt, dth, n_gl=16):
    """g = (X(y) - lambda1)/(1 - rho(y - z_hat)) for displacements (dt, dth).

    Vectorized over flat arrays.  For r > RADIUS_SWITCH the direct quotient is
    used; below it, Gauss-Legendre on the Taylor remainder over the sinc
    closed form of the denominator.  Points with r < 1e-9 get the theta-circle
    floor -lambda1 (the true limit values there never exceed the nearby ring
    maxima, which the caller seeds separately).
    """
    dt = np.atleast_1d(np.asarray(dt, dtype=float))
    dth = np.atleast_1d(np.asarray(dth, dtype=float))
    n = obs.n_freq
    k = np.arange(-obs.f_c, obs.f_c + 1)
    r = np.hypot(dt, dth)
    out = np.full(dt.shape, -lambda1)

    far = r > RADIUS_SWITCH
    if np.any(far):
        zvals = np.exp(1j * np.outer(dt[far] + z_hat.t, k)) @ obs.y / math.sqrt(n)
        xvals = np.real(np.exp(-1j * (dth[far] + z_hat.theta)) * zvals)
        rho = kernel_gamma(obs.f_c, dt[far]) * np.cos(dth[far])
        out[far] = (xvals - lambda1) / (1.0 - rho)

    near = (~far) & (r > 1e-9)
    if np.any(near):
        rr = r[near]
        ca = dt[near] / rr
        sa = dth[near] / rr
        ck = np.outer(ca, k) - sa[:, None]            # (M, N)
        beta = rr[:, None] * ck                        # (M, N)
        den = (ck**2 * np.sinc(beta / (2.0 * math.pi)) ** 2).sum(axis=1) / (2.0 * n)
        nodes, weights = _gl_unit(n_gl)
        # u' X''(z_hat + h d) u = -(1/sqrt N) sum_k c_k^2 Re(w_k e^{i h beta_k})
        phase = np.exp(1j * beta[:, None, :] * nodes[None, :, None])  # (M, Q, N)
        integrand = -(ck**2)[:, None, :] * np.real(w[None, None, :] * phase)
        integrand = integrand.sum(axis=2) / math.sqrt(n)               # (M, Q)
        num = integrand @ (weights * (1.0 - nodes))
        out[near] = num / den
    return out


def second_knot(obs, z_hat, lambda1, t_factor=16, n_theta=64):
    """The second knot: lambda2 = lambda1 + max_y g(y), y_hat the maximizer.

    A coarse (t_factor*N) x n_theta sweep in displacement coordinates (the
    dt = 0 column pins the theta-circle, where g = -lambda1 exactly) collects
    local maxima; these, plus a ring of seeds around z_hat, are refined by
    Nelder-Mead.  Ties within 1e-9 go to the smallest t.  The result is
    clamped to [0, lambda1]: g <= 0 always, and the theta-circle guarantees
    max g >= -lambda1, so any excursion is floating-point noise.
    """
    w = _aligned_coeffs(obs, z_hat)
    n = obs.n_freq
    n_t = t_factor * n
    dt_grid = np.linspace(0.0, 2.0 * math.pi, n_t, endpoint=False)
    dth_grid = np.linspace(0.0, 2.0 * math.pi, n_theta, endpoint=False)
    dt2 = wrap_delta(np.repeat(dt_grid, n_theta))
    dth2 = wrap_delta(np.tile(dth_grid, n_t))
    g_grid = _g_ratio(obs, z_hat, lambda1, w, dt2, dth2).reshape(n_t, n_theta)

    neighbors = [np.roll(np.roll(g_grid, di, axis=0), dj, axis=1)
                 for di in (-1, 0, 1) for dj in (-1, 0, 1) if (di, dj) != (0, 0)]
    is_max = np.ones_like(g_grid, dtype=bool)
    for nb in neighbors:
        is_max &= g_grid >= nb
    gb = g_grid.max()
    ii, jj = np.nonzero(is_max & (g_grid >= gb - 1e-2 * max(1.0, lambda1)))
    order = np.argsort(-g_grid[ii, jj])[:6]
    starts = [(wrap_delta(dt_grid[ii[q]]), wrap_delta(dth_grid[jj[q]])) for q in order]

    # A maximizer hiding closer to z_hat than the grid spacing would be missed
    # above; scan a small ring of directions and keep the best as one more seed.
    ring_r = 0.05
    ring_a = np.linspace(0.0, 2.0 * math.pi, 64, endpoint=False)
    ring_g = _g_ratio(obs, z_hat, lambda1, w, ring_r * np.cos(ring_a), ring_r * np.sin(ring_a))
    a_best = ring_a[int(np.argmax(ring_g))]
    starts.append((ring_r * math.cos(a_best), ring_r * math.sin(a_best)))

    # Scalar twin of _g_ratio with the per-call array bookkeeping stripped out;
    # the Nelder-Mead refinements below evaluate it a few hundred times each.
    k = np.arange(-obs.f_c, obs.f_c + 1)
    sqrt_n = math.sqrt(n)
    nodes, weights = _gl_unit(16)
    wts_1m = weights * (1.0 - nodes)
    inv_2pi = 0.5 / math.pi

    def g_scalar(p):
        dt = float(p[0])
        dth = float(p[1])
        r = math.hypot(dt, dth)
        if r < 1e-9:
            return -lambda1
        if r > RADIUS_SWITCH:
            zv = np.exp(1j * ((z_hat.t + dt) * k)) @ obs.y / sqrt_n
            xv = (np.exp(-1j * (z_hat.theta + dth)) * zv).real
            s_half = math.sin(0.5 * dt)
            if abs(s_half) < 1e-8:
                gam = (1.0 + 2.0 * np.cos(dt * k[obs.f_c + 1:]).sum()) / n
            else:
                gam = math.sin(0.5 * n * dt) / s_half / n
            return (xv - lambda1) / (1.0 - gam * math.cos(dth))
        ck = k * (dt / r) - dth / r
        beta = r * ck
        sc = np.sinc(beta * inv_2pi)
        den = (ck * ck * sc * sc).sum() / (2.0 * n)
        phase = np.exp(1j * np.outer(nodes, beta))
        integrand = -((ck * ck) * (phase * w).real).sum(axis=1) / sqrt_n
        return float(wts_1m @ integrand / den)

    h_t = dt_grid[1] - dt_grid[0]
    h_th = dth_grid[1] - dth_grid[0]
    refined = []
    for s in starts:
        p_star, g_star = maximize_2d(g_scalar, s, tol=1e-8, step=(0.5 * h_t, 0.5 * h_th))
        refined.append((g_star, wrap_delta(p_star[0]), wrap_delta(p_star[1])))
    g_best = max(rf[0] for rf in refined)
    tied = [rf for rf in refined if rf[0] >= g_best - 1e-9 * max(1.0, lambda1)]
    _, dt_star, dth_star = min(tied, key=lambda rf: (rf[1] + z_hat.t) % (2.0 * math.pi))

    g_final = min(max(g_best, -lambda1), 0.0)
    lambda2 = lambda1 + g_final
    y_hat = TorusPoint.make(z_hat.t + dt_star, z_hat.theta + dth_star)
    return y_hat, float(lambda2)


def hessian_and_alphas(obs, z_hat, lambda1):
    """alpha2, alpha3 and the remainder R = X''(z_hat) + Lambda-tilde*lambda1.

    alpha2 = (1/sqrt N) sum (k^2 - alpha1) Re(w_k),
    alpha3 = (1/sqrt N) sum k Re(w_k),       w_k = y_k e^{i(k t_hat - theta_hat)};
    R = [[-alpha2, alpha3], [alpha3, 0]].  Cross-checked against the analytic
    Hessian to 1e-9, and -X''(z_hat) must be positive definite.
    """
    ctx = obs.context()
    n = obs.n_freq
    k = np.arange(-obs.f_c, obs.f_c + 1)
    re_w = np.real(_aligned_coeffs(obs, z_hat))
    alpha2 = float((k**2 - ctx.alpha1) @ re_w / math.sqrt(n))
    alpha3 = float(k @ re_w / math.sqrt(n))
    big_r = np.array([[-alpha2, alpha3], [alpha3, 0.0]])

    hess = x_hess(obs, z_hat)
    evals = np.linalg.eigvalsh(hess)
    if not np.all(evals < 0):
        raise NotAMaximum(
            "X''(z_hat) has eigenvalues %s; z_hat is not a strict maximum" % (evals,)
        )
    check = hess + ctx.lambda_tilde() * lambda1
    if np.max(np.abs(big_r - check)) > 1e-9:
        raise NotAMaximum(
            "alpha formulas disagree with the analytic Hessian by %g"
            % (np.max(np.abs(big_r - check)),)
        )
    return big_r, alpha2, alpha3


def compute_certificate(obs, grid_factor=32, t_factor=16, n_theta=64):
    """Full knot computation: first knot, second knot, Hessian remainder."""
    z_hat, lambda1 = first_knot(obs, grid_factor=grid_factor)
    y_hat, lambda2 = second_knot(obs, z_hat, lambda1, t_factor=t_factor, n_theta=n_theta)
    big_r, alpha2, alpha3 = hessian_and_alphas(obs, z_hat, lambda1)
    grad_norm = float(np.linalg.norm(x_grad(obs, z_hat)))
    return KnotCertificate(
        z_hat=z_hat,
        lambda1=lambda1,
        y_hat=y_hat,
        lambda2=lambda2,
        R=big_r,
        alpha2=alpha2,
        alpha3=alpha3,
        grad_norm_at_zhat=grad_norm,
    )
