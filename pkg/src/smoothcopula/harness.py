"""Monte Carlo experiments on the decay of sup-norm remainders with the sample size.

For every sample size ``n`` and replication ``r`` the harness draws a sample
from a reference copula, evaluates the classic and smooth remainders together
with the bias and drift terms on a grid, and summarises the medians across
replications by a log-log slope.

Replication ``r`` of size ``n`` draws its sample from a stream seeded by
``SeedSequence(master_seed, spawn_key=(n, r))``, so results do not depend on
the order in which replications run or on how many worker processes share
them.
"""
from __future__ import annotations

import csv
import math
import multiprocessing
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.stats import linregress
from threadpoolctl import threadpool_limits

from .copulas import CopulaModel, make_copula
from .empirical import EvaluationGrid
from .processes import GridEvaluator, check_decomposition
from .smoothing import MonteCarloSpec, SmoothingScheme

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "ReplicationResult",
    "RateReport",
    "replication_seed",
    "run_experiment",
    "fit_loglog_slope",
    "emit_report",
    "read_report_csv",
    "summary_path",
    "with_overrides",
    "RAW_HEADER",
    "SUMMARY_HEADER",
]

RAW_HEADER = ["n", "rep", "sup_classic", "sup_smooth", "bias_term", "drift_term",
              "scheme", "gamma", "seed"]
SUMMARY_HEADER = ["n", "median_smooth", "mean_smooth", "q90_smooth", "median_classic",
                  "slope", "slope_se"]


class ConfigError(ValueError):
    """An experiment configuration is malformed or inconsistent."""


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines the output of :func:`run_experiment`.

    Parameters
    ----------
    copula : str
        Reference family name, see :func:`make_copula`.
    theta : float or None
        Family parameter.
    scheme : SmoothingScheme
    n_list : tuple of int
        Strictly increasing sample sizes, at least two.
    replications : int
        Replications per sample size.
    resolution : int or None
        Points per axis of the uniform part of the grid.
    master_seed : int
    output : str or None
        Raw CSV path; the summary goes next to it.
    d : int
        Dimension.
    lattice : bool
        Add the rank lattice ``{i/n}`` to the grid.  Off by default because the
        grid then grows with ``n``.
    quad_nodes : int
        Gauss nodes per coordinate for integrals of the smooth parts.
    """

    copula: str = "clayton"
    theta: float | None = 2.0
    scheme: SmoothingScheme = field(default_factory=SmoothingScheme.beta)
    n_list: tuple = (128, 256, 512, 1024, 2048, 4096, 8192)
    replications: int = 200
    resolution: int | None = None
    master_seed: int = 20240101
    output: str | None = None
    d: int = 2
    lattice: bool = False
    quad_nodes: int = 16

    def __post_init__(self):
        n_list = tuple(int(n) for n in self.n_list)
        object.__setattr__(self, "n_list", n_list)
        if len(n_list) < 2:
            raise ConfigError("n_list needs at least two sample sizes")
        if any(b <= a for a, b in zip(n_list, n_list[1:])):
            raise ConfigError(f"n_list must be strictly increasing, got {n_list}")
        if n_list[0] < 2:
            raise ConfigError("sample sizes must be at least 2")
        if int(self.replications) != self.replications or self.replications < 1:
            raise ConfigError(f"replications must be a positive integer, got {self.replications}")
        if self.resolution is not None and self.resolution < 2:
            raise ConfigError("grid resolution must be at least 2")
        if self.master_seed < 0:
            raise ConfigError("master_seed must be non-negative")
        try:
            self.model()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def model(self) -> CopulaModel:
        return make_copula(self.copula, self.theta, self.d)

    def grid(self, n: int) -> EvaluationGrid:
        return EvaluationGrid.build(self.d, n, resolution=self.resolution, lattice=self.lattice)

    # Flat key=value text form.  Scheme settings live under "scheme.".
    @classmethod
    def from_mapping(cls, items: dict) -> "ExperimentConfig":
        items = dict(items)
        scheme_items = {k[len("scheme."):]: items.pop(k) for k in list(items) if k.startswith("scheme.")}
        kw = {}
        try:
            for key, value in items.items():
                if key == "copula":
                    kw[key] = value.strip()
                elif key == "theta":
                    kw[key] = None if value.strip().lower() in ("", "none") else float(value)
                elif key == "n_list":
                    kw[key] = tuple(int(v) for v in value.replace(" ", "").split(",") if v)
                elif key in ("replications", "master_seed", "d", "quad_nodes"):
                    kw[key] = int(value)
                elif key == "resolution":
                    kw[key] = None if value.strip().lower() in ("", "none") else int(value)
                elif key == "output":
                    kw[key] = value.strip() or None
                elif key == "lattice":
                    kw[key] = _parse_bool(value)
                else:
                    raise ConfigError(f"unknown config key {key!r}")
            kw["scheme"] = _scheme_from_items(scheme_items)
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc
        return cls(**kw)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        """Read a flat ``key = value`` file; ``#`` starts a comment."""
        items = {}
        with open(path) as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
                key, value = (part.strip() for part in line.split("=", 1))
                if key in items:
                    raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
                items[key] = value
        return cls.from_mapping(items)

    def to_text(self) -> str:
        s = self.scheme
        lines = [
            f"copula = {self.copula}",
            f"theta = {'none' if self.theta is None else repr(float(self.theta))}",
            f"d = {self.d}",
            f"n_list = {','.join(str(n) for n in self.n_list)}",
            f"replications = {self.replications}",
            f"resolution = {'none' if self.resolution is None else self.resolution}",
            f"master_seed = {self.master_seed}",
            f"lattice = {str(self.lattice).lower()}",
            f"quad_nodes = {self.quad_nodes}",
            f"scheme.kind = {s.kind}",
        ]
        if s.degree is not None:
            lines.append(f"scheme.degree = {s.degree}")
        if s.gamma is not None and s.kind != "beta":
            lines.append(f"scheme.gamma = {s.gamma!r}")
        if s.kind == "adaptive_bernstein":
            lines.append(f"scheme.rule = {s.rule}")
        lines.append(f"scheme.mc.draws = {s.mc.draws}")
        lines.append(f"scheme.mc.seed = {s.mc.seed}")
        if self.output is not None:
            lines.append(f"output = {self.output}")
        return "\n".join(lines) + "\n"


def _scheme_from_items(items: dict) -> SmoothingScheme:
    known = {"kind", "gamma", "degree", "m", "rule", "mc.draws", "mc.seed"}
    unknown = set(items) - known
    if unknown:
        raise ConfigError(f"unknown scheme keys {sorted('scheme.' + k for k in unknown)}")
    kind = items.get("kind", "beta").strip()
    mc = MonteCarloSpec(draws=int(items.get("mc.draws", 10_000)), seed=int(items.get("mc.seed", 0)))
    degree = items.get("degree", items.get("m"))
    gamma = items.get("gamma")
    if kind == "bernstein_fixed":
        if degree is None:
            raise ConfigError("scheme.kind = bernstein_fixed needs scheme.degree")
        return SmoothingScheme.bernstein_fixed(int(degree), mc=mc)
    if kind == "beta":
        if gamma is not None and float(gamma) != 1.0:
            raise ConfigError("the beta scheme has gamma = 1")
        return SmoothingScheme.beta(mc=mc)
    if kind in ("bernstein_rate", "adaptive_bernstein"):
        if gamma is None:
            raise ConfigError(f"scheme.kind = {kind} needs scheme.gamma")
        if kind == "bernstein_rate":
            return SmoothingScheme.bernstein_rate(float(gamma), mc=mc)
        return SmoothingScheme.adaptive_bernstein(float(gamma), items.get("rule", "iqr").strip(), mc=mc)
    raise ConfigError(f"unknown scheme kind {kind!r}")


@dataclass(frozen=True)
class ReplicationResult:
    n: int
    rep: int
    sup_classic: float
    sup_smooth: float
    bias_term: float
    drift_term: float
    smoothed_classic: float
    seed: int


def replication_seed(master_seed: int, n: int, rep: int) -> int:
    """Integer seed of replication ``rep`` (0-based) at sample size ``n``."""
    seq = np.random.SeedSequence(master_seed, spawn_key=(n, rep))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def fit_loglog_slope(points) -> tuple:
    """Least-squares slope of ``log(value)`` on ``log(n)`` and its standard error.

    Parameters
    ----------
    points : iterable of (n, value)
        At least two points with distinct ``n`` and positive values.

    Returns
    -------
    slope, stderr : float
        ``stderr`` is 0 for exactly two points.
    """
    pts = [(float(n), float(v)) for n, v in points]
    if len(pts) < 2:
        raise ValueError("a slope needs at least two points")
    if any(v <= 0 or not math.isfinite(v) for _, v in pts):
        raise ValueError("log-log slope needs positive finite values")
    if any(n <= 0 for n, _ in pts):
        raise ValueError("sample sizes must be positive")
    x = np.log([n for n, _ in pts])
    y = np.log([v for _, v in pts])
    if np.ptp(x) == 0:
        raise ValueError("a slope needs at least two distinct sample sizes")
    fit = linregress(x, y)
    stderr = float(fit.stderr) if len(pts) > 2 else 0.0
    return float(fit.slope), stderr


@dataclass
class RateReport:
    """Per-replication terms of an experiment and their per-``n`` summaries."""

    config: ExperimentConfig | None
    rows: list

    @property
    def scheme_name(self) -> str:
        return self.config.scheme.describe() if self.config is not None else ""

    @property
    def gamma(self) -> float:
        if self.config is None or self.config.scheme.rate is None:
            return math.nan
        return float(self.config.scheme.rate)

    @property
    def theoretical_exponents(self) -> dict:
        """Exponents of the three terms in the smooth remainder rate, without log factors."""
        g = self.gamma
        return {"bias": (3.0 - 4.0 * g) / 6.0, "oscillation": -0.25, "drift": -g / 5.0}

    def sample_sizes(self) -> list:
        return sorted({r.n for r in self.rows})

    def values(self, name: str, n: int) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows if r.n == n])

    def summary(self) -> list:
        """Rows ``(n, median_smooth, mean_smooth, q90_smooth, median_classic)``."""
        out = []
        for n in self.sample_sizes():
            smooth = self.values("sup_smooth", n)
            classic = self.values("sup_classic", n)
            out.append((n, float(np.median(smooth)), float(np.mean(smooth)),
                        float(np.quantile(smooth, 0.9)), float(np.median(classic))))
        return out

    def slope(self, which: str = "smooth") -> tuple:
        """Log-log slope of the per-``n`` medians of the smooth or classic remainder."""
        col = {"smooth": 1, "classic": 4}[which]
        summ = self.summary()
        if len(summ) < 2:
            return math.nan, math.nan
        return fit_loglog_slope([(row[0], row[col]) for row in summ])


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def summary_path(path) -> Path:
    path = Path(path)
    return path.with_name(f"{path.stem}_summary{path.suffix or '.csv'}")


def emit_report(report: RateReport, path) -> tuple:
    """Write the raw and summary CSV files; returns both paths.

    The summary lands next to ``path`` as ``<stem>_summary.csv``.  Floats are
    written with 17 significant digits so they parse back exactly.
    """
    path = Path(path)
    spath = summary_path(path)
    scheme = report.scheme_name
    gamma = _fmt(report.gamma)
    rows = sorted(report.rows, key=lambda r: (r.n, r.rep))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RAW_HEADER)
        for r in rows:
            writer.writerow([r.n, r.rep, _fmt(r.sup_classic), _fmt(r.sup_smooth),
                             _fmt(r.bias_term), _fmt(r.drift_term), scheme, gamma, r.seed])
    summ = report.summary()
    slope, se = report.slope() if len(summ) >= 2 else (math.nan, math.nan)
    with open(spath, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_HEADER)
        for n, med, mean, q90, med_c in summ:
            writer.writerow([n, _fmt(med), _fmt(mean), _fmt(q90), _fmt(med_c), _fmt(slope), _fmt(se)])
    return path, spath


def read_report_csv(path) -> RateReport:
    """Rebuild a report (without its config) from a raw CSV written by :func:`emit_report`."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RAW_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for rec in reader:
            rows.append(ReplicationResult(
                n=int(rec["n"]), rep=int(rec["rep"]),
                sup_classic=float(rec["sup_classic"]), sup_smooth=float(rec["sup_smooth"]),
                bias_term=float(rec["bias_term"]), drift_term=float(rec["drift_term"]),
                smoothed_classic=math.nan, seed=int(rec["seed"])))
    return RateReport(config=None, rows=rows)


# Worker-side state: one evaluator per sample size, built on first use.
_EVALUATORS: dict = {}


def _evaluator(config: ExperimentConfig, n: int) -> GridEvaluator:
    key = (config, n)
    if key not in _EVALUATORS:
        _EVALUATORS.clear()
        _EVALUATORS[key] = GridEvaluator(config.model(), config.scheme, config.grid(n), n,
                                         quad_nodes=config.quad_nodes)
    return _EVALUATORS[key]


def _run_block(config: ExperimentConfig, n: int, reps) -> list:
    with threadpool_limits(limits=1):
        ev = _evaluator(config, n)
        out = []
        for rep in reps:
            seed = replication_seed(config.master_seed, n, rep)
            sample = ev.model.sample(n, np.random.default_rng(seed))
            terms = ev.terms(sample)
            check_decomposition(terms)
            out.append(ReplicationResult(
                n=n, rep=rep, sup_classic=terms.classic_term, sup_smooth=terms.lhs,
                bias_term=terms.bias_term, drift_term=terms.smooth_drift_term,
                smoothed_classic=terms.smoothed_classic_term, seed=seed))
        return out


def _blocks(config: ExperimentConfig, workers: int):
    parts = max(1, workers)
    for n in config.n_list:
        reps = np.arange(config.replications)
        for chunk in np.array_split(reps, min(parts, reps.size)):
            yield n, [int(r) for r in chunk]


def run_experiment(config: ExperimentConfig, workers: int = 1) -> RateReport:
    """Run every replication of ``config`` and collect the results.

    Parameters
    ----------
    config : ExperimentConfig
    workers : int
        Worker processes; 1 runs in the calling process.  The output does not
        depend on this value.

    Raises
    ------
    DecompositionError
        If any replication violates the decomposition inequality.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    blocks = list(_blocks(config, workers))
    if workers == 1:
        results = [_run_block(config, n, reps) for n, reps in blocks]
    else:
        ctx = multiprocessing.get_context("fork" if os.name == "posix" else "spawn")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            futures = [pool.submit(_run_block, config, n, reps) for n, reps in blocks]
            results = [f.result() for f in futures]
    rows = sorted((r for block in results for r in block), key=lambda r: (r.n, r.rep))
    return RateReport(config=config, rows=rows)


def with_overrides(config: ExperimentConfig, **changes) -> ExperimentConfig:
    """Copy of ``config`` with some fields replaced (``None`` values are ignored)."""
    return replace(config, **{k: v for k, v in changes.items() if v is not None})
