"""Monte-Carlo harness: null calibration, power under spike alternatives,
ECDF/KS summaries, and the figure panels (CSV + SVG).

Replication r of a run with seed s draws everything from RngStream(s, r), in
the fixed order (spike locations, noise, Voronoi uniform), so results are
identical across thread counts and any subset of statistics can be
recomputed in isolation.
"""

import math
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import SrknotsError
from .knots import compute_certificate
from .model import TWO_PI, AtomicMeasure, circular_distance, synthesize
from .numerics import RngStream
from .stats import (
    grid_spacing_test,
    grid_test_known,
    grid_test_unknown,
    lambda2_bar,
    rice_known,
    rice_unknown,
    spacing_statistic,
    voronoi_sample,
)
from .variance import sigma_hat_cond, sigma_hat_grid

DEFAULT_GRID_SIZES = (3, 10, 32, 50)

_GRID_SPACING_RE = re.compile(r"^grid_spacing_(\d+)$")
_KNOWN_SIGMA_STATS = {"rice", "spacing", "grid"}


@dataclass(frozen=True)
class AlternativeSpec:
    """The mean under test: 0, 1 or 2 spikes with fixed real weights,
    uniform random locations per replication and phase 0 (by rotation
    invariance of the model the null laws do not depend on the phase)."""

    n_spikes: int = 0
    weights: Tuple[float, ...] = ()
    min_separation: Optional[float] = None

    def __post_init__(self):
        if self.n_spikes not in (0, 1, 2):
            raise ValueError("n_spikes must be 0, 1 or 2")
        if len(self.weights) != self.n_spikes:
            raise ValueError("need exactly one weight per spike")
        if any(not w > 0 for w in self.weights):
            raise ValueError("spike weights must be positive")
        if self.min_separation is not None and not self.min_separation > 0:
            raise ValueError("min_separation must be positive")

    @property
    def alt_id(self):
        if self.n_spikes == 0:
            return "null"
        return "%dspike_%s" % (
            self.n_spikes,
            "_".join(format(w, ".6g") for w in self.weights),
        )

    def draw_measure(self, f_c, rng):
        if self.n_spikes == 0:
            return AtomicMeasure.empty()
        if self.n_spikes == 1:
            return AtomicMeasure.from_atoms([(rng.uniform(0.0, TWO_PI), self.weights[0])])
        sep = self.min_separation if self.min_separation is not None else TWO_PI / f_c
        for _ in range(100000):
            locs = rng.uniform(0.0, TWO_PI, size=2)
            if circular_distance(locs[0], locs[1]) >= sep:
                return AtomicMeasure.from_atoms(list(zip(locs, self.weights)))
        raise ValueError("could not draw two locations at separation %g" % sep)


@dataclass(frozen=True)
class ExperimentConfig:
    f_c: int
    reps: int
    seed: int
    statistics: Tuple[str, ...]
    alternative: AlternativeSpec = AlternativeSpec()
    sigma: float = 1.0
    sigma_mode: str = "known"

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.sigma_mode not in ("known", "unknown"):
            raise ValueError("sigma_mode must be 'known' or 'unknown'")
        if not self.statistics:
            raise ValueError("at least one statistic is required")
        for name in self.statistics:
            base = name if _GRID_SPACING_RE.match(name) is None else "grid_spacing"
            if base not in ("rice", "t_rice", "spacing", "grid", "t_grid", "grid_spacing"):
                raise ValueError("unknown statistic %r" % name)
            if self.sigma_mode == "unknown" and (
                base in _KNOWN_SIGMA_STATS or base == "grid_spacing"
            ):
                raise ValueError(
                    "statistic %r needs the known noise level; use sigma_mode='known'" % name
                )


@dataclass
class ExperimentTable:
    config: ExperimentConfig
    values: Dict[str, np.ndarray]
    failures: List[Tuple[int, str, str]] = field(default_factory=list)

    @property
    def n_excluded(self):
        return len({rep for rep, _, _ in self.failures})


def _thread_count(reps):
    env = os.environ.get("SRKNOTS_THREADS", "").strip()
    limit = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(limit, reps))


def _one_rep(config, rep):
    stream = RngStream(config.seed, rep)
    rng = stream.generator()
    measure = config.alternative.draw_measure(config.f_c, rng)
    obs = synthesize(measure, config.f_c, config.sigma, rng)
    ctx = obs.context()

    grid_sizes = []
    needs_cert = False
    needs_randomized = False
    for name in config.statistics:
        match = _GRID_SPACING_RE.match(name)
        if match:
            grid_sizes.append(int(match.group(1)))
        else:
            needs_cert = True
            if name in ("grid", "t_grid"):
                needs_randomized = True

    out = {}
    failures = []
    cert = None
    l2_bar = None
    if needs_cert:
        try:
            cert = compute_certificate(obs)
            if needs_randomized:
                hess = np.asarray(cert.R) - ctx.lambda_tilde() * cert.lambda1
                u_draw = voronoi_sample(hess, rng)
                l2_bar = lambda2_bar(cert.lambda1, cert.lambda2, hess, u_draw, ctx)
        except SrknotsError as exc:
            for name in config.statistics:
                if not _GRID_SPACING_RE.match(name):
                    out[name] = float("nan")
                    failures.append((rep, name, str(exc)))
            cert = None

    for name in config.statistics:
        if name in out:
            continue
        try:
            match = _GRID_SPACING_RE.match(name)
            if match:
                report = grid_spacing_test(obs, int(match.group(1)), config.sigma)
            elif name == "rice":
                report = rice_known(cert, config.sigma, ctx)
            elif name == "t_rice":
                report = rice_unknown(cert, sigma_hat_cond(obs, cert.z_hat), ctx)
            elif name == "spacing":
                report = spacing_statistic(cert.lambda1, cert.lambda2, config.sigma)
            elif name == "grid":
                report = grid_test_known(cert.lambda1, l2_bar, config.sigma)
            else:  # t_grid
                report = grid_test_unknown(
                    cert.lambda1, l2_bar, sigma_hat_grid(obs, cert.z_hat), ctx
                )
            out[name] = report.value
        except SrknotsError as exc:
            out[name] = float("nan")
            failures.append((rep, name, str(exc)))
    return out, failures


def run_experiment(config):
    """Evaluate every requested statistic on each of `reps` independent
    observations; see the module docstring for the determinism contract."""
    values = {name: np.empty(config.reps) for name in config.statistics}
    failures = []

    def fill(rep):
        return rep, _one_rep(config, rep)

    threads = _thread_count(config.reps)
    if threads == 1:
        results = map(fill, range(config.reps))
        for rep, (out, fails) in results:
            for name in config.statistics:
                values[name][rep] = out[name]
            failures.extend(fails)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for rep, (out, fails) in pool.map(fill, range(config.reps)):
                for name in config.statistics:
                    values[name][rep] = out[name]
                failures.extend(fails)
    failures.sort()
    return ExperimentTable(config=config, values=values, failures=failures)


@dataclass
class EcdfTable:
    grid: np.ndarray
    columns: Dict[str, np.ndarray]


def ecdf(values, name="value", n_grid=513):
    """Empirical CDF of a sample from [0,1] on a uniform evaluation grid."""
    return ecdf_multi({name: values}, n_grid=n_grid)


def ecdf_multi(named_values, n_grid=513):
    grid = np.linspace(0.0, 1.0, n_grid)
    columns = {}
    for name, values in named_values.items():
        v = np.sort(np.asarray(values, dtype=float))
        if v.size == 0:
            raise ValueError("ecdf of an empty sample")
        columns[name] = np.searchsorted(v, grid, side="right") / v.size
    return EcdfTable(grid=grid, columns=columns)


def ks_uniform(values):
    """Two-sided Kolmogorov-Smirnov sup-distance to the uniform CDF on [0,1]."""
    u = np.sort(np.asarray(values, dtype=float))
    n = u.size
    if n == 0:
        raise ValueError("ks_uniform of an empty sample")
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - u), np.max(u - (i - 1) / n)))


def empirical_level(values, alpha):
    """Fraction of p-values at or below the nominal level alpha."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("empirical_level of an empty sample")
    return float(np.mean(v <= alpha))


def emit_csv(table, path):
    """One row per (rep, statistic): rep,statistic,value,fc,sigma_mode,alt_id,seed."""
    cfg = table.config
    lines = ["rep,statistic,value,fc,sigma_mode,alt_id,seed"]
    for rep in range(cfg.reps):
        for name in cfg.statistics:
            lines.append(
                "%d,%s,%s,%d,%s,%s,%d"
                % (
                    rep,
                    name,
                    format(table.values[name][rep], ".17g"),
                    cfg.f_c,
                    cfg.sigma_mode,
                    cfg.alternative.alt_id,
                    cfg.seed,
                )
            )
    with open(path, "w") as handle:
        handle.write("\n".join(lines) + "\n")


_SVG_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def emit_svg(curves, path, title=""):
    """Standalone SVG 1.1, 600 x 600: one ECDF polyline per column, the
    diagonal for reference, and a legend.  Bytes depend only on the input."""
    size, margin = 600, 60
    span = size - 2 * margin

    def px(x):
        return margin + span * x

    def py(y):
        return size - margin - span * y

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        '<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        'width="600" height="600" viewBox="0 0 600 600">',
        '<rect x="0" y="0" width="600" height="600" fill="white"/>',
        '<rect x="%d" y="%d" width="%d" height="%d" fill="none" stroke="black"/>'
        % (margin, margin, span, span),
        '<line x1="%.2f" y1="%.2f" x2="%.2f" y2="%.2f" stroke="#999999" '
        'stroke-dasharray="6,4"/>' % (px(0.0), py(0.0), px(1.0), py(1.0)),
    ]
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        parts.append(
            '<text x="%.2f" y="%d" font-size="12" text-anchor="middle">%.2f</text>'
            % (px(tick), size - margin + 20, tick)
        )
        parts.append(
            '<text x="%d" y="%.2f" font-size="12" text-anchor="end">%.2f</text>'
            % (margin - 8, py(tick) + 4, tick)
        )
    for idx, (name, col) in enumerate(curves.columns.items()):
        color = _SVG_COLORS[idx % len(_SVG_COLORS)]
        points = " ".join(
            "%.2f,%.2f" % (px(x), py(y)) for x, y in zip(curves.grid, col)
        )
        parts.append(
            '<polyline fill="none" stroke="%s" stroke-width="1.5" points="%s"/>'
            % (color, points)
        )
        parts.append(
            '<rect x="%d" y="%d" width="12" height="12" fill="%s"/>'
            % (margin + 12, margin + 12 + 20 * idx, color)
        )
        parts.append(
            '<text x="%d" y="%d" font-size="13">%s</text>'
            % (margin + 30, margin + 22 + 20 * idx, name)
        )
    if title:
        parts.append(
            '<text x="300" y="30" font-size="15" text-anchor="middle">%s</text>' % title
        )
    parts.append("</svg>")
    with open(path, "w") as handle:
        handle.write("\n".join(parts) + "\n")


def _figure_panels(fig_id, seed, reps):
    grid_stats = tuple("grid_spacing_%d" % p for p in DEFAULT_GRID_SIZES)
    if fig_id == "fig3":
        return [
            ExperimentConfig(
                f_c=f_c, reps=reps, seed=seed, statistics=("rice", "spacing")
            )
            for f_c in (3, 5, 7)
        ]
    if fig_id == "fig4":
        panels = []
        for weight_of in (lambda n: math.log(n), lambda n: math.sqrt(n)):
            for f_c in (3, 5, 7):
                alt = AlternativeSpec(n_spikes=1, weights=(weight_of(2 * f_c + 1),))
                panels.append(
                    ExperimentConfig(
                        f_c=f_c,
                        reps=reps,
                        seed=seed,
                        statistics=("rice",) + grid_stats,
                        alternative=alt,
                    )
                )
        return panels
    if fig_id == "fig5":
        f_c = 7
        log_n = math.log(2 * f_c + 1)
        sqrt_n = math.sqrt(2 * f_c + 1)
        pairs = ((log_n, log_n), (log_n, sqrt_n), (sqrt_n, sqrt_n))
        return [
            ExperimentConfig(
                f_c=f_c,
                reps=reps,
                seed=seed,
                statistics=("rice", "grid_spacing_50"),
                alternative=AlternativeSpec(n_spikes=2, weights=pair),
            )
            for pair in pairs
        ]
    if fig_id == "fig6":
        f_c = 3
        n = 2 * f_c + 1
        alts = [
            AlternativeSpec(),
            AlternativeSpec(n_spikes=1, weights=(math.log(n),)),
            AlternativeSpec(n_spikes=1, weights=(math.sqrt(n),)),
        ]
        return [
            ExperimentConfig(
                f_c=f_c, reps=reps, seed=seed, statistics=("rice", "t_rice"), alternative=alt
            )
            for alt in alts
        ]
    raise ValueError("unknown figure id %r" % fig_id)


def reproduce_figure(fig_id, seed, reps=2000, out_dir="out"):
    """Run the panel grid of one figure and write panel_<k>.csv / .svg under
    out_dir/<fig_id>; returns the list of created paths."""
    configs = _figure_panels(fig_id, seed, reps)
    fig_dir = os.path.join(out_dir, fig_id)
    os.makedirs(fig_dir, exist_ok=True)
    created = []
    for k, config in enumerate(configs, start=1):
        table = run_experiment(config)
        csv_path = os.path.join(fig_dir, "panel_%d.csv" % k)
        svg_path = os.path.join(fig_dir, "panel_%d.svg" % k)
        emit_csv(table, csv_path)
        finite = {
            name: vals[np.isfinite(vals)] for name, vals in table.values.items()
        }
        title = "%s panel %d: fc=%d, %s" % (
            fig_id,
            k,
            config.f_c,
            config.alternative.alt_id,
        )
        emit_svg(ecdf_multi(finite), svg_path, title=title)
        created.extend([csv_path, svg_path])
    return created
