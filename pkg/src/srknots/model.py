"""The super-resolution observation model.

An atomic measure nu0 on the torus [0, 2*pi) is observed through its first
f_c Fourier coefficients, corrupted by complex white noise:

    y_k = (1/sqrt(N)) sum_j a_j exp(-i k x_j) + sigma (zeta_1k + i zeta_2k),
    k = -f_c..f_c,  N = 2 f_c + 1.

From y we form the correlation process Z(t) = (1/sqrt(N)) sum_k y_k e^{ikt}
and the real field X(t, theta) = Re(e^{-i theta} Z(t)) on the 2-torus, whose
correlation under the null is rho((dt, dtheta)) = Gamma(dt) cos(dtheta) with
Gamma = D_N / N the normalized Dirichlet kernel.
"""

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import SchemaError
from .numerics import RngStream

TWO_PI = 2.0 * math.pi


def wrap_angle(x):
    """Reduce an angle (or array of angles) to [0, 2*pi)."""
    return np.mod(x, TWO_PI)


def wrap_delta(x):
    """Reduce a displacement to the shortest representative in [-pi, pi)."""
    return np.mod(np.asarray(x, dtype=float) + math.pi, TWO_PI) - math.pi


def circular_distance(a, b):
    """Shortest distance between two angles on the circle."""
    return np.abs(wrap_delta(np.asarray(a, dtype=float) - b))


class TorusPoint(NamedTuple):
    """A point z = (t, theta) of the 2-torus, coordinates in [0, 2*pi)."""

    t: float
    theta: float

    @classmethod
    def make(cls, t, theta):
        return cls(float(wrap_angle(t)), float(wrap_angle(theta)))


def torus_delta(z, y):
    """Shortest displacement z - y on the 2-torus, components in [-pi, pi)."""
    return wrap_delta(np.asarray(z, dtype=float) - np.asarray(y, dtype=float))


@dataclass(frozen=True)
class ModelContext:
    """Derived constants for a cutoff frequency f_c.

    alpha1 = f_c(f_c+1)/3 = (1/N) sum k^2 is the t-curvature of the
    correlation at zero; Lambda-tilde = -rho''(0) = diag(alpha1, 1); m = 2N is
    the Gaussian dimension of the model.
    """

    f_c: int

    def __post_init__(self):
        if self.f_c < 1:
            raise ValueError("f_c must be >= 1, got %r" % (self.f_c,))

    @property
    def n_freq(self):
        return 2 * self.f_c + 1

    @property
    def alpha1(self):
        return self.f_c * (self.f_c + 1) / 3.0

    @property
    def m(self):
        return 2 * self.n_freq

    def lambda_tilde(self):
        return np.diag([self.alpha1, 1.0])

    def k_range(self):
        return np.arange(-self.f_c, self.f_c + 1)


@dataclass(frozen=True)
class AtomicMeasure:
    """A discrete complex measure sum_j a_j delta_{x_j} on the circle.

    The empty measure encodes the null hypothesis.
    """

    locations: np.ndarray
    weights: np.ndarray

    @classmethod
    def from_atoms(cls, atoms):
        """Build from a list of (location, weight) pairs."""
        if atoms:
            locs = wrap_angle(np.asarray([a[0] for a in atoms], dtype=float))
            wts = np.asarray([a[1] for a in atoms], dtype=complex)
        else:
            locs = np.empty(0)
            wts = np.empty(0, dtype=complex)
        return cls(locs, wts)

    @classmethod
    def empty(cls):
        return cls.from_atoms([])

    def __post_init__(self):
        locs = wrap_angle(np.asarray(self.locations, dtype=float))
        wts = np.asarray(self.weights, dtype=complex)
        if locs.shape != wts.shape or locs.ndim != 1:
            raise ValueError("locations and weights must be 1-d arrays of equal length")
        n = locs.size
        for i in range(n):
            for j in range(i + 1, n):
                if circular_distance(locs[i], locs[j]) < 1e-12:
                    raise ValueError("atom locations must be pairwise distinct modulo 2*pi")
        object.__setattr__(self, "locations", locs)
        object.__setattr__(self, "weights", wts)

    @property
    def n_atoms(self):
        return self.locations.size


@dataclass(frozen=True)
class Observation:
    """Noisy Fourier data y in C^N with cutoff f_c; sigma is None when the noise level is unknown."""

    f_c: int
    y: np.ndarray
    sigma: Optional[float] = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=complex)
        if y.shape != (2 * self.f_c + 1,):
            raise ValueError(
                "y must have length 2*f_c+1 = %d, got %r" % (2 * self.f_c + 1, y.shape)
            )
        if self.sigma is not None and not self.sigma > 0:
            raise ValueError("sigma must be positive when given")
        object.__setattr__(self, "y", y)

    @property
    def n_freq(self):
        return 2 * self.f_c + 1

    def context(self):
        return ModelContext(self.f_c)


def dirichlet(f_c, t):
    """The Dirichlet kernel D_N(t) = sin(Nt/2)/sin(t/2), N = 2 f_c + 1.

    The removable singularity at t = 0 (mod 2*pi) evaluates to N; near it the
    ratio form loses digits, so below |sin(t/2)| = 1e-8 the cosine-sum form
    1 + 2 sum_{k<=f_c} cos(kt) is used instead.
    """
    n = 2 * f_c + 1
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    s = np.sin(0.5 * t)
    out = np.empty_like(t)
    near = np.abs(s) < 1e-8
    if np.any(near):
        k = np.arange(1, f_c + 1)
        out[near] = 1.0 + 2.0 * np.cos(np.outer(t[near], k)).sum(axis=1)
    far = ~near
    out[far] = np.sin(0.5 * n * t[far]) / s[far]
    return float(out[0]) if scalar else out


def kernel_gamma(f_c, t, order=0):
    """Gamma(t) = D_N(t)/N and its derivatives, by term-wise differentiation.

    order 0: (1/N)(1 + 2 sum cos(kt));  order 1: -(2/N) sum k sin(kt);
    order 2: -(2/N) sum k^2 cos(kt).
    """
    n = 2 * f_c + 1
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    k = np.arange(1, f_c + 1, dtype=float)
    kt = np.multiply.outer(t, k)
    if order == 0:
        out = (1.0 + 2.0 * np.cos(kt) @ np.ones_like(k)) / n
    elif order == 1:
        out = -(2.0 / n) * (np.sin(kt) @ k)
    elif order == 2:
        out = -(2.0 / n) * (np.cos(kt) @ (k * k))
    else:
        raise ValueError("order must be 0, 1 or 2")
    return float(out[0]) if scalar else out


def correlation(ctx, dz):
    """Correlation rho(dz) = Gamma(dt) cos(dtheta) of the field X under the null."""
    dt, dth = float(dz[0]), float(dz[1])
    return kernel_gamma(ctx.f_c, dt) * math.cos(dth)


def correlation_grad(ctx, dz):
    """Gradient of rho at dz: (Gamma'(dt) cos(dtheta), -Gamma(dt) sin(dtheta))."""
    dt, dth = float(dz[0]), float(dz[1])
    g = kernel_gamma(ctx.f_c, dt)
    g1 = kernel_gamma(ctx.f_c, dt, order=1)
    return np.array([g1 * math.cos(dth), -g * math.sin(dth)])


def correlation_hess(ctx, dz):
    """Hessian of rho at dz (2x2 symmetric)."""
    dt, dth = float(dz[0]), float(dz[1])
    g = kernel_gamma(ctx.f_c, dt)
    g1 = kernel_gamma(ctx.f_c, dt, order=1)
    g2 = kernel_gamma(ctx.f_c, dt, order=2)
    c, s = math.cos(dth), math.sin(dth)
    return np.array([[g2 * c, -g1 * s], [-g1 * s, -g * c]])


def synthesize(measure, f_c, sigma, stream):
    """Draw an observation of `measure` at noise level sigma.

    The real and imaginary noise parts are i.i.d. standard normal scaled by
    sigma, drawn in the fixed order (all real parts, then all imaginary
    parts), so the result is fully determined by the stream.
    """
    if isinstance(stream, RngStream):
        rng = stream.generator()
    else:
        rng = stream
    n = 2 * f_c + 1
    k = np.arange(-f_c, f_c + 1)
    y = np.zeros(n, dtype=complex)
    if measure.n_atoms:
        phases = np.exp(-1j * np.outer(k, measure.locations))
        y = phases @ measure.weights / math.sqrt(n)
    if sigma is not None and sigma > 0:
        zeta = rng.standard_normal((2, n))
        y = y + sigma * (zeta[0] + 1j * zeta[1])
        return Observation(f_c=f_c, y=y, sigma=float(sigma))
    return Observation(f_c=f_c, y=y, sigma=None)


def z_eval(obs, t):
    """Z(t) = (1/sqrt(N)) sum_k y_k e^{ikt}; vectorized over t."""
    return z_deriv(obs, t, order=0)


def z_deriv(obs, t, order=1):
    """d^order Z / dt^order by term-wise differentiation ((ik)^order factors)."""
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    k = np.arange(-obs.f_c, obs.f_c + 1)
    coef = obs.y * (1j * k) ** order
    vals = np.exp(1j * np.multiply.outer(t, k)) @ coef / math.sqrt(obs.n_freq)
    return complex(vals[0]) if scalar else vals


def x_eval(obs, z):
    """X(z) = Re(e^{-i theta} Z(t))."""
    return float(np.real(np.exp(-1j * z[1]) * z_eval(obs, z[0])))


def x_grad(obs, z):
    """Gradient of X at z = (t, theta): (Re(e^{-i th} Z'), Im(e^{-i th} Z))."""
    ph = np.exp(-1j * z[1])
    return np.array([
        np.real(ph * z_deriv(obs, z[0], order=1)),
        np.imag(ph * z_eval(obs, z[0])),
    ])


def x_hess(obs, z):
    """Hessian of X at z: [[Re(e Z''), Im(e Z')], [Im(e Z'), -Re(e Z)]] with e = e^{-i theta}."""
    ph = np.exp(-1j * z[1])
    xtt = np.real(ph * z_deriv(obs, z[0], order=2))
    xtth = np.imag(ph * z_deriv(obs, z[0], order=1))
    xthth = -np.real(ph * z_eval(obs, z[0]))
    return np.array([[xtt, xtth], [xtth, xthth]])


def _fmt17(x):
    """Format a float with 17 significant digits (lossless for binary64)."""
    return format(float(x), ".17g")


def save_observation(obs, path):
    """Write the observation as JSON: {"fc": int, "sigma": number|null, "y": [[re, im], ...]}.

    y is ordered k = -f_c..f_c; numbers carry 17 significant digits so the
    round trip is bit-faithful.
    """
    rows = ",\n    ".join(
        "[%s, %s]" % (_fmt17(c.real), _fmt17(c.imag)) for c in obs.y
    )
    sigma = "null" if obs.sigma is None else _fmt17(obs.sigma)
    text = '{\n  "fc": %d,\n  "sigma": %s,\n  "y": [\n    %s\n  ]\n}\n' % (
        obs.f_c, sigma, rows,
    )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def load_observation(path):
    """Parse an observation file; raises SchemaError on any malformation."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError("cannot parse observation file %s: %s" % (path, exc))
    if not isinstance(doc, dict):
        raise SchemaError("observation file must hold a JSON object")
    missing = {"fc", "y"} - set(doc)
    if missing:
        raise SchemaError("observation file missing keys: %s" % sorted(missing))
    fc = doc["fc"]
    if not isinstance(fc, int) or fc < 1:
        raise SchemaError("fc must be an integer >= 1, got %r" % (fc,))
    sigma = doc.get("sigma", None)
    if sigma is not None:
        if not isinstance(sigma, (int, float)) or not sigma > 0:
            raise SchemaError("sigma must be a positive number or null, got %r" % (sigma,))
        sigma = float(sigma)
    rows = doc["y"]
    if not isinstance(rows, list) or len(rows) != 2 * fc + 1:
        raise SchemaError(
            "y must list exactly 2*fc+1 = %d coefficients" % (2 * fc + 1,)
        )
    y = np.empty(len(rows), dtype=complex)
    for i, row in enumerate(rows):
        if (
            not isinstance(row, list)
            or len(row) != 2
            or not all(isinstance(v, (int, float)) for v in row)
            or not all(math.isfinite(v) for v in row)
        ):
            raise SchemaError("y[%d] must be a [re, im] pair of finite numbers" % i)
        y[i] = complex(row[0], row[1])
    return Observation(f_c=fc, y=y, sigma=sigma)
