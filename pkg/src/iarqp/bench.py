"""Epsilon sweeps, aggregation, slope fitting and CSV/JSON output."""
from __future__ import annotations

import configparser
import csv
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from .driver import Config, ConfigError, run
from .oracles import ExactProblem, NoiseSpec, get_problem

CSV_FIELDS = ("epsilon", "n_runs", "mean_N", "median_N", "stddev_N", "mean_deriv_evals",
              "mean_f_evals", "frac_converged", "empirical_p_star")


@dataclass(frozen=True)
class SweepSpec:
    """A family of runs: every epsilon crossed with every seed.

    ``x0`` fixes the start; otherwise seed ``s`` starts at a point drawn
    uniformly from the ball of radius ``x0_radius`` with generator seed ``[s, 1]``.
    """

    problem: str = "quadratic"
    dim: int | None = None
    data_path: str | None = None
    x0: tuple | None = None
    x0_radius: float = 1.0
    epsilons: tuple = (1e-2, 1e-3)
    seeds: tuple = (0,)
    config: Config = field(default_factory=Config)

    def __post_init__(self):
        eps = tuple(float(e) for e in self.epsilons)
        if not all(0.0 < e <= 1.0 for e in eps):
            raise ConfigError(f"epsilon values must lie in (0, 1], got {eps}")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            warnings.warn("sweep epsilons are not strictly decreasing", stacklevel=2)
        if not self.x0_radius > 0:
            raise ConfigError("x0_radius must be positive")
        object.__setattr__(self, "epsilons", eps)
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.x0 is not None:
            object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))

    def make_problem(self) -> ExactProblem:
        return get_problem(self.problem, self.dim, self.data_path)

    def start_point(self, problem: ExactProblem, seed: int) -> np.ndarray:
        if self.x0 is not None:
            return np.array(self.x0)
        return random_ball_point(problem.dim, self.x0_radius, seed)


def random_ball_point(n: int, radius: float, seed: int) -> np.ndarray:
    rng = np.random.default_rng([seed, 1])
    z = rng.standard_normal(n)
    return radius * rng.random() ** (1.0 / n) * z / np.linalg.norm(z)


@dataclass(frozen=True)
class RunSummary:
    epsilon: float
    seed: int
    n_epsilon: int | None
    termination: str
    deriv_evals: int
    f_evals: int
    iterations: int
    accurate_iterations: int
    instrumented: bool


@dataclass(frozen=True)
class SweepRow:
    epsilon: float
    n_runs: int
    mean_N: float
    median_N: float
    stddev_N: float
    mean_deriv_evals: float
    mean_f_evals: float
    frac_converged: float
    empirical_p_star: float


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    r_squared: float


def _one_run(spec: SweepSpec, eps: float, seed: int) -> RunSummary:
    problem = spec.make_problem()
    config = replace(spec.config, epsilon=(eps,) * spec.config.q, seed=seed)
    result = run(problem, spec.start_point(problem, seed), config)
    instrumented = config.instrument_events
    accurate = sum(r.events.mk for r in result.trace) if instrumented else 0
    return RunSummary(eps, seed, result.n_epsilon, result.termination, result.deriv_evals,
                      result.f_evals, len(result.trace), int(accurate), instrumented)


def sweep_runs(spec: SweepSpec, workers: int = 1) -> list[RunSummary]:
    """Execute every (epsilon, seed) pair; results come back in job order."""
    jobs = [(eps, seed) for eps in spec.epsilons for seed in spec.seeds]
    if workers <= 1:
        return [_one_run(spec, e, s) for e, s in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_one_run, [spec] * len(jobs), *zip(*jobs)))


def aggregate(runs: Sequence[RunSummary]) -> list[SweepRow]:
    """One row per epsilon, in first-appearance order.  Means use converged runs only."""
    order = list(dict.fromkeys(r.epsilon for r in runs))
    rows = []
    for eps in order:
        group = [r for r in runs if r.epsilon == eps]
        done = [r for r in group if r.termination == "converged"]
        ns = np.array([r.n_epsilon for r in done], dtype=float)
        nan = math.nan
        iters = sum(r.iterations for r in group if r.instrumented)
        acc = sum(r.accurate_iterations for r in group if r.instrumented)
        rows.append(SweepRow(
            epsilon=eps,
            n_runs=len(group),
            mean_N=float(ns.mean()) if ns.size else nan,
            median_N=float(np.median(ns)) if ns.size else nan,
            stddev_N=float(ns.std(ddof=1)) if ns.size > 1 else (0.0 if ns.size else nan),
            mean_deriv_evals=float(np.mean([r.deriv_evals for r in done])) if done else nan,
            mean_f_evals=float(np.mean([r.f_evals for r in done])) if done else nan,
            frac_converged=len(done) / len(group),
            empirical_p_star=acc / iters if iters else nan,
        ))
    return rows


def run_sweep(spec: SweepSpec, workers: int = 1) -> list[SweepRow]:
    return aggregate(sweep_runs(spec, workers))


def fit_slope(rows: Sequence[SweepRow]) -> SlopeFit:
    """Least-squares fit of ``log(mean_N)`` against ``log(1/epsilon)``."""
    if len(rows) < 3:
        raise ValueError(f"need at least 3 rows to fit a slope, got {len(rows)}")
    if any(r.frac_converged != 1.0 for r in rows):
        raise ValueError("every row must have all runs converged")
    x = np.log(1.0 / np.array([r.epsilon for r in rows]))
    y = np.log(np.array([r.mean_N for r in rows]))
    if not np.all(np.isfinite(y)):
        raise ValueError("mean_N must be positive for a log-log fit")
    if np.ptp(y) == 0.0:
        # linregress reports nan r-value for a constant response
        return SlopeFit(0.0, float(y[0]), 1.0)
    fit = stats.linregress(x, y)
    return SlopeFit(float(fit.slope), float(fit.intercept), float(fit.rvalue ** 2))


# -- output ---------------------------------------------------------------------------


def _fmt(v) -> str:
    return str(v) if isinstance(v, int) else format(float(v), ".17g")


def emit(rows: Sequence[SweepRow], path: str | Path, format: str = "csv") -> None:
    """Write rows as CSV (17 significant digits) or JSON (non-finite values as null)."""
    path = Path(path)
    if format == "csv":
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_FIELDS)
            for r in rows:
                w.writerow([_fmt(getattr(r, f)) for f in CSV_FIELDS])
    elif format == "json":
        data = [{k: (v if isinstance(v, int) or math.isfinite(v) else None)
                 for k, v in asdict(r).items()} for r in rows]
        path.write_text(json.dumps(data, indent=1) + "\n")
    else:
        raise ValueError(f"format must be 'csv' or 'json', got {format!r}")


def read_rows(path: str | Path, format: str | None = None) -> list[SweepRow]:
    path = Path(path)
    format = format or ("json" if path.suffix.lower() == ".json" else "csv")
    if format == "json":
        raw = json.loads(path.read_text())
    else:
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != CSV_FIELDS:
                raise ValueError(f"unexpected CSV header {reader.fieldnames}")
            raw = list(reader)
    out = []
    for d in raw:
        vals = {k: (math.nan if d[k] is None else float(d[k])) for k in CSV_FIELDS}
        vals["n_runs"] = int(vals["n_runs"])
        out.append(SweepRow(**vals))
    return out


# -- configuration files ----------------------------------------------------------------

_INT = {"p", "q", "max_iterations", "seed", "inner_budget", "max_resamples"}
_BOOL = {"instrument_events", "stop_on_model"}
_STR = {"noise_mode", "f_estimate_mode"}


def parse_floats(text: str) -> tuple:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _convert(key: str, text: str, parser: configparser.ConfigParser):
    if key in _INT:
        return int(text)
    if key in _BOOL:
        return parser.BOOLEAN_STATES[text.strip().lower()]
    if key in _STR:
        return text.strip()
    if key == "epsilon":
        vals = parse_floats(text)
        return vals[0] if len(vals) == 1 else vals
    if key == "omega" and text.strip().lower() in ("", "auto", "none"):
        return None
    return float(text)


def parse_ini(text: str) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.read_string(text)
    unknown = set(parser.sections()) - {"algorithm", "noise", "sweep", "problem"}
    if unknown:
        raise ConfigError(f"unknown sections {sorted(unknown)}")
    return parser


def config_from_parser(parser: configparser.ConfigParser) -> Config:
    """Build a :class:`Config` from ``[algorithm]`` and ``[noise]`` sections.

    ``[algorithm]`` accepts any Config field; ``[noise]`` accepts the noise
    fields plus ``mode`` as an alias for ``noise_mode``.
    """
    names = {f.name for f in fields(Config)} - {"noise"}
    kwargs, noise = {}, {}
    try:
        if parser.has_section("algorithm"):
            for key, text in parser.items("algorithm"):
                if key not in names:
                    raise ConfigError(f"unknown [algorithm] key {key!r}")
                kwargs[key] = _convert(key, text, parser)
        if parser.has_section("noise"):
            noise_names = {f.name for f in fields(NoiseSpec)}
            for key, text in parser.items("noise"):
                if key == "mode":
                    kwargs["noise_mode"] = text.strip()
                elif key in noise_names:
                    noise[key] = text.strip() if key == "kind" else float(text)
                elif key in names:
                    kwargs[key] = _convert(key, text, parser)
                else:
                    raise ConfigError(f"unknown [noise] key {key!r}")
        return Config(noise=NoiseSpec(**noise), **kwargs)
    except ConfigError:
        raise
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> Config:
    return config_from_parser(parse_ini(Path(path).read_text()))


def problem_options(parser: configparser.ConfigParser) -> dict:
    """``[problem]`` section as SweepSpec keyword arguments."""
    if not parser.has_section("problem"):
        return {}
    sec = parser["problem"]
    out = {}
    try:
        for key, text in sec.items():
            if key == "name":
                out["problem"] = text.strip()
            elif key in ("n", "dim"):
                out["dim"] = int(text)
            elif key == "data":
                out["data_path"] = text.strip()
            elif key == "x0":
                if text.strip().lower() != "random":
                    out["x0"] = parse_floats(text)
            elif key == "radius":
                out["x0_radius"] = float(text)
            else:
                raise ConfigError(f"unknown [problem] key {key!r}")
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return out


def load_sweep_spec(path: str | Path) -> SweepSpec:
    """Read a sweep spec file.

    ``[sweep]`` holds ``epsilons`` (list) and either ``seeds`` (list) or
    ``count`` (seeds ``0..count-1``).
    """
    parser = parse_ini(Path(path).read_text())
    kwargs = problem_options(parser)
    kwargs["config"] = config_from_parser(parser)
    if parser.has_section("sweep"):
        sec = parser["sweep"]
        try:
            for key, text in sec.items():
                if key == "epsilons":
                    kwargs["epsilons"] = parse_floats(text)
                elif key == "seeds":
                    kwargs["seeds"] = tuple(int(v) for v in parse_floats(text))
                elif key == "count":
                    kwargs["seeds"] = tuple(range(int(text)))
                else:
                    raise ConfigError(f"unknown [sweep] key {key!r}")
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    try:
        return SweepSpec(**kwargs)
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc
