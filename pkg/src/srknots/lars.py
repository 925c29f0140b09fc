"""Active-set continuation of the least-angle regression path for complex
measures against the kernel K(s, t) = 2 sigma^2 Gamma(t - s).

The first two knots are delegated to the grid-less knot module.  From the
third on, for lambda in (lambda_k, lambda_{k-1}] the weights are

    a(lambda, x) = M(x)^{-1} (Z(x_i) - (lambda/lambda_{k-1}) Z_{k-1}(t_i))_i,
    M(x)_{ij} = K(x_i, x_j),

which makes the residual at every active point have modulus exactly lambda
(the previous residual values Z_{k-1}(t_i) all have modulus lambda_{k-1}).
The active locations x(lambda) then follow the stationarity system

    h_j(lambda, x) = d/dt |Z(t) - sum_i a_i K(x_i, t)|^2 at t = x_j = 0,

tracked by a predictor-corrector scheme: decrement lambda by a fixed
fraction, re-solve h = 0 by Newton with a finite-difference Jacobian, halving
the decrement when Newton fails.  The next knot is the largest lambda at
which the off-support maximum of |Z^(lambda)| reaches lambda, located by a
grid scan with local refinement and then bisection in lambda.
"""

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .knots import _t_grid, first_knot, second_knot
from .model import kernel_gamma, wrap_delta, z_deriv, z_eval
from .numerics import maximize_1d

_MERGE_RADIUS = 1e-3
_COND_LIMIT = 1e14


@dataclass(frozen=True)
class LarsOptions:
    """Continuation controls; the defaults follow the module conventions
    (1% lambda steps, Newton to 1e-10, event grid of 64N points)."""

    k_max: int = 4
    lambda_min: float = 1e-3
    lambda_step_fraction: float = 1e-2
    newton_tol: float = 1e-10
    event_grid: Optional[int] = None

    def __post_init__(self):
        if self.k_max < 2:
            raise ValueError("k_max must be >= 2")
        if not (self.lambda_min > 0 and self.lambda_step_fraction > 0 and self.newton_tol > 0):
            raise ValueError("lambda_min, lambda_step_fraction and newton_tol must be positive")
        if self.event_grid is not None and self.event_grid < 8:
            raise ValueError("event_grid must be at least 8 points")


@dataclass(frozen=True)
class LarsKnot:
    """One knot: the regularization level, the active locations and the
    weights of the fitted measure (the newly entered point carries weight 0)."""

    lam: float
    active: Tuple[float, ...]
    weights: Tuple[complex, ...]


@dataclass
class LarsPath:
    knots: List[LarsKnot]
    status: str
    sigma: float
    f_c: int


class _PathStop(Exception):
    def __init__(self, status):
        self.status = status


class _Leg:
    """Continuation state for one leg of the path (fixed active cardinality)."""

    def __init__(self, obs, sigma, active, prev_vals, lam_prev, opts):
        self.obs = obs
        self.sigma = sigma
        self.x = np.asarray(active, dtype=float)
        self.prev_vals = np.asarray(prev_vals, dtype=complex)
        self.lam_prev = float(lam_prev)
        self.opts = opts
        self.two_s2 = 2.0 * sigma * sigma
        n_grid = opts.event_grid or 64 * obs.n_freq
        self.t_grid, emat = _t_grid(obs.f_c, n_grid)
        self.z_grid = emat @ obs.y / math.sqrt(obs.n_freq)

    def gram(self, x):
        d = x[:, None] - x[None, :]
        m = self.two_s2 * kernel_gamma(self.obs.f_c, d.ravel()).reshape(d.shape)
        if not np.all(np.isfinite(m)) or np.linalg.cond(m) > _COND_LIMIT:
            raise _PathStop("path_stop_singular_gram")
        return m

    def weights_at(self, lam, x):
        rhs = z_eval(self.obs, x) - (lam / self.lam_prev) * self.prev_vals
        return np.linalg.solve(self.gram(x), rhs)

    def h_vec(self, lam, x):
        a = self.weights_at(lam, x)
        w_at = (lam / self.lam_prev) * self.prev_vals
        d = x[:, None] - x[None, :]
        gp = kernel_gamma(self.obs.f_c, d.ravel(), order=1).reshape(d.shape)
        w_prime = z_deriv(self.obs, x, 1) - self.two_s2 * (gp @ a)
        return 2.0 * np.real(np.conj(w_at) * w_prime), a

    def newton(self, lam, x0):
        """Solve h(lambda, .) = 0 from x0; returns (x, a) or raises ValueError."""
        x = np.array(x0, dtype=float)
        k = x.size
        fd = 1e-6
        for _ in range(30):
            h, a = self.h_vec(lam, x)
            jac = np.empty((k, k))
            for i in range(k):
                xp = x.copy()
                xp[i] += fd
                xm = x.copy()
                xm[i] -= fd
                jac[:, i] = (self.h_vec(lam, xp)[0] - self.h_vec(lam, xm)[0]) / (2.0 * fd)
            try:
                delta = np.linalg.solve(jac, -h)
            except np.linalg.LinAlgError:
                raise ValueError("singular Jacobian")
            if not np.all(np.isfinite(delta)) or np.max(np.abs(delta)) > 0.1:
                raise ValueError("Newton step diverged")
            x = x + delta
            if np.max(np.abs(delta)) < self.opts.newton_tol:
                return x, self.weights_at(lam, x)
        raise ValueError("Newton did not converge")

    def off_support_max(self, x, a):
        """(value, location) of the maximum of |Z^(lambda)| outside the open
        merge discs around the active points.

        Every grid-local maximum whose curvature-corrected upper bound can
        beat the best grid value is refined (a peak straddling two grid
        points can read below a disc-edge sample, so refining only the
        argmax is not sound), and the disc boundary points are evaluated
        exactly: the constrained maximum sits there when an active point is
        about to split.
        """

        def f(t):
            gam_t = kernel_gamma(self.obs.f_c, t - x)
            return abs(z_eval(self.obs, t) - self.two_s2 * (gam_t @ a))

        gam = kernel_gamma(
            self.obs.f_c, (self.t_grid[:, None] - x[None, :]).ravel()
        ).reshape(self.t_grid.size, x.size)
        res = self.z_grid - self.two_s2 * (gam @ a)
        vals = np.abs(res)
        dist = np.min(np.abs(wrap_delta(self.t_grid[:, None] - x[None, :])), axis=1)
        masked = np.where(dist >= _MERGE_RADIUS, vals, -np.inf)
        h = self.t_grid[1] - self.t_grid[0]

        up = np.roll(masked, -1)
        dn = np.roll(masked, 1)
        is_peak = np.isfinite(masked) & (masked >= up) & (masked >= dn)
        # peak value can exceed the sample by ~|f''| h^2 / 8; the discrete
        # second difference is that bound directly (generous default at the
        # mask edges, where a neighbor is -inf)
        d2 = np.abs(dn - 2.0 * masked + up)
        d2_cap = float(np.max(d2[np.isfinite(d2)])) if np.any(np.isfinite(d2)) else 0.0
        bound = np.where(np.isfinite(d2), d2, d2_cap) / 8.0

        best_val, best_t = -np.inf, 0.0
        floor = float(np.max(masked))
        for idx in np.nonzero(is_peak & (masked + bound >= floor))[0]:
            t0 = self.t_grid[idx]
            t_ref, v_ref = maximize_1d(f, (t0 - h, t0 + h), tol=1e-12)
            if np.min(np.abs(wrap_delta(t_ref - x))) < _MERGE_RADIUS:
                continue  # constrained max on this side lives on the boundary
            if v_ref > best_val:
                best_val, best_t = float(v_ref), float(t_ref)
        for tb in np.concatenate([x - _MERGE_RADIUS, x + _MERGE_RADIUS]):
            vb = f(float(tb))
            if vb > best_val:
                best_val, best_t = float(vb), float(tb)
        return best_val, best_t % (2.0 * math.pi)

    def gap(self, lam, x, a):
        val, loc = self.off_support_max(x, a)
        return val - lam, loc

    def run(self):
        """Track the leg until the next knot; returns (lam_k, x, a, t_new)
        or raises _PathStop."""
        opts = self.opts
        lam_hi = self.lam_prev
        x_hi = self.x.copy()
        _, a_hi = self.h_vec(lam_hi, x_hi)
        base_frac = opts.lambda_step_fraction
        frac = base_frac
        while True:
            lam_lo = lam_hi * (1.0 - frac)
            if lam_lo < opts.lambda_min:
                if lam_hi > opts.lambda_min:
                    lam_lo = opts.lambda_min
                else:
                    raise _PathStop("reached_lambda_min")
            try:
                x_lo, a_lo = self.newton(lam_lo, x_hi)
            except ValueError:
                frac *= 0.5
                if frac < 1e-6:
                    raise _PathStop("path_stop_singular_jacobian")
                continue
            gap_lo, _ = self.gap(lam_lo, x_lo, a_lo)
            if gap_lo >= 0.0:
                return self.bisect(lam_lo, x_lo, lam_hi, x_hi)
            lam_hi, x_hi, a_hi = lam_lo, x_lo, a_lo
            frac = base_frac
            if lam_hi <= opts.lambda_min:
                raise _PathStop("reached_lambda_min")

    def bisect(self, lam_lo, x_lo, lam_hi, x_hi):
        """The gap is >= 0 at lam_lo and < 0 at lam_hi; refine the crossing."""
        for _ in range(80):
            if lam_hi - lam_lo < 1e-9 * max(1.0, lam_hi):
                break
            lam_mid = 0.5 * (lam_lo + lam_hi)
            try:
                x_mid, a_mid = self.newton(lam_mid, 0.5 * (x_lo + x_hi))
            except ValueError:
                raise _PathStop("path_stop_singular_jacobian")
            gap_mid, _ = self.gap(lam_mid, x_mid, a_mid)
            if gap_mid >= 0.0:
                lam_lo, x_lo = lam_mid, x_mid
            else:
                lam_hi, x_hi = lam_mid, x_mid
        x_k, a_k = self.newton(lam_lo, x_lo)
        _, t_new = self.off_support_max(x_k, a_k)
        return lam_lo, x_k, a_k, t_new


def lars_run(obs, sigma, opts=None):
    """The continuation path ((lambda_k, active_k, weights_k))_k; see module
    docstring.  sigma only rescales the kernel (the knots are invariant) but
    fixes the weight normalization of the printed algorithm."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    opts = opts or LarsOptions()
    two_s2 = 2.0 * sigma * sigma

    z_hat, lambda1 = first_knot(obs)
    t1 = z_hat.t
    knots = [LarsKnot(lam=lambda1, active=(t1,), weights=(0j,))]
    path = LarsPath(knots=knots, status="completed", sigma=sigma, f_c=obs.f_c)
    _, lambda2 = second_knot(obs, z_hat, lambda1)
    if lambda2 < max(opts.lambda_min, 1e-12 * lambda1):
        path.status = "reached_lambda_min"
        return path

    # weights at the second knot: single-point Gram K(t1,t1) = 2 sigma^2
    z_t1 = z_eval(obs, t1)
    a1 = z_t1 * (1.0 - lambda2 / lambda1) / two_s2
    leg2 = _Leg(obs, sigma, [t1], [z_t1], lambda1, opts)
    _, t2 = leg2.off_support_max(np.array([t1]), np.array([a1]))
    knots.append(LarsKnot(lam=lambda2, active=(t1, t2), weights=(complex(a1), 0j)))

    active = np.array([t1, t2])
    prev_vals = np.array(
        [
            (lambda2 / lambda1) * z_t1,
            z_eval(obs, t2) - two_s2 * a1 * kernel_gamma(obs.f_c, t2 - t1),
        ],
        dtype=complex,
    )
    lam_prev = lambda2

    while len(knots) < opts.k_max:
        leg = _Leg(obs, sigma, active, prev_vals, lam_prev, opts)
        start_max, _ = leg.off_support_max(active, np.zeros(active.size, dtype=complex))
        if start_max < 1e-12 * max(1.0, lambda1):
            path.status = "completed"
            return path
        try:
            lam_k, x_k, a_k, t_new = leg.run()
        except _PathStop as stop:
            path.status = stop.status
            return path
        knots.append(
            LarsKnot(
                lam=lam_k,
                active=tuple(float(v % (2.0 * math.pi)) for v in x_k) + (t_new,),
                weights=tuple(complex(v) for v in a_k) + (0j,),
            )
        )
        new_vals = (lam_k / lam_prev) * leg.prev_vals
        gam = kernel_gamma(obs.f_c, t_new - x_k)
        entering_val = z_eval(obs, t_new) - two_s2 * (gam @ a_k)
        active = np.concatenate([x_k, [t_new]])
        prev_vals = np.concatenate([new_vals, [entering_val]])
        lam_prev = lam_k

    path.status = "reached_k_max"
    return path


def lars_residual(obs, path, k, t):
    """The residual Z_k(t) = Z(t) - sum_i a_i K(t_i, t) after knot k (1-based)."""
    if not 1 <= k <= len(path.knots):
        raise IndexError("knot index %d out of range (path has %d)" % (k, len(path.knots)))
    knot = path.knots[k - 1]
    t_arr = np.asarray(t, dtype=float)
    scalar = t_arr.ndim == 0
    t_arr = np.atleast_1d(t_arr)
    vals = z_eval(obs, t_arr)
    vals = np.atleast_1d(vals)
    two_s2 = 2.0 * path.sigma * path.sigma
    for loc, a_i in zip(knot.active, knot.weights):
        if a_i != 0:
            vals = vals - two_s2 * a_i * kernel_gamma(obs.f_c, t_arr - loc)
    return complex(vals[0]) if scalar else vals


def export_csv(path):
    """CSV rows (k, lambda, t_i, re(a_i), im(a_i)): one row per active point
    and knot, 17 significant digits."""
    lines = ["k,lambda,t_i,re_a_i,im_a_i"]
    for k, knot in enumerate(path.knots, start=1):
        for loc, a_i in zip(knot.active, knot.weights):
            lines.append(
                "%d,%s,%s,%s,%s"
                % (
                    k,
                    format(knot.lam, ".17g"),
                    format(loc, ".17g"),
                    format(a_i.real, ".17g"),
                    format(a_i.imag, ".17g"),
                )
            )
    return "\n".join(lines) + "\n"
