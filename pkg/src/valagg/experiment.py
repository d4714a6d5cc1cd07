"""Experiment configs: flat key/value parsing, instance construction, single
runs, sweeps and their summaries."""

from __future__ import annotations

import itertools
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .diagnostics import check_bounds, fit_rate
from .instances import (
    AffineQuadraticSpec,
    LinearImitationSpec,
    Regularizer,
    StochasticInstance,
    StochasticWrapperSpec,
    make_affine_quadratic,
    make_counterexample,
    make_linear_imitation,
)
from .loop import DETERMINISTIC, STOCHASTIC, CostTransformer, LoopConfig, RunTrace, SamplingSchedule, run
from .problem import CapabilityError, DomainError, MissingConstantError
from .traceio import SummaryRecord, write_jsonl, write_summary, write_trace_csv

INSTANCES = ("counterexample", "affine", "imitation")
TRANSFORMERS = ("none", "mixing", "weighted")
EMITS = ("csv", "json", "svg")
SWEEP_AXES = ("theta", "lambda", "q", "m0", "r", "iters", "seed")
DEFAULT_OUT = "val_agg_out"
SWEEP_CAP = 10_000


class ConfigError(ValueError):
    """Bad configuration; ``line``/``key`` locate the problem when known."""

    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        self.line, self.key = line, key
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"field '{key}'")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


@dataclass(frozen=True)
class ExperimentConfig:
    instance: str = "counterexample"
    theta: float = 0.5
    M: str = "0.5"
    b: str = ""
    alpha: float = 2.0
    dim: int = 0
    x1: str = "1"
    iters: int = 100
    transformer: str = "none"
    lam: float = 0.0
    q: float = 0.0
    regularizer: str = "squared"
    m0: int = 0
    r: float = 0.0
    seed: int = 0
    noise: str = "uniform"
    sigma: float = 1.0
    a: float = 0.3
    a_b: float = 0.2
    k_star: float = 0.1
    sigma0_sq: float = 1.0
    T: int = 3
    gain_lo: float = -1.0
    gain_hi: float = 1.0
    emit: tuple = ("csv", "json")

    @property
    def stochastic(self) -> bool:
        return self.m0 > 0

    def echo(self) -> dict:
        """Fields that matter for the chosen instance and variant."""
        d = {"instance": self.instance, "x1": self.x1, "iters": self.iters}
        if self.instance == "counterexample":
            d["theta"] = self.theta
        elif self.instance == "affine":
            d.update(M=self.M, b=self.b, alpha=self.alpha, dim=self.dim)
        else:
            d.update(a=self.a, a_b=self.a_b, k_star=self.k_star, sigma0_sq=self.sigma0_sq, T=self.T,
                     gain_lo=self.gain_lo, gain_hi=self.gain_hi)
        if self.transformer == "mixing":
            d.update(transformer="mixing", q=self.q)
        elif self.transformer == "weighted":
            d.update(transformer="weighted", **{"lambda": self.lam}, regularizer=self.regularizer)
        if self.stochastic:
            d.update(m0=self.m0, r=self.r, seed=self.seed, noise=self.noise, sigma=self.sigma)
        return d


# config key -> (dataclass field, parser)
def _int(v: str) -> int:
    f = float(v)
    if f != int(f):
        raise ValueError(f"expected an integer, got {v!r}")
    return int(f)


def _emit(v: str) -> tuple:
    items = tuple(s.strip() for s in v.split(",") if s.strip())
    bad = [s for s in items if s not in EMITS]
    if bad:
        raise ValueError(f"unknown emit kinds {bad}; choose from {EMITS}")
    return items


def _choice(options):
    def parse(v: str) -> str:
        if v not in options:
            raise ValueError(f"{v!r} is not one of {options}")
        return v
    return parse


KEYS = {
    "instance": ("instance", _choice(INSTANCES)),
    "theta": ("theta", float),
    "M": ("M", str),
    "b": ("b", str),
    "alpha": ("alpha", float),
    "dim": ("dim", _int),
    "x1": ("x1", str),
    "iters": ("iters", _int),
    "transformer": ("transformer", _choice(TRANSFORMERS)),
    "lambda": ("lam", float),
    "q": ("q", float),
    "regularizer": ("regularizer", _choice(("squared", "expert"))),
    "m0": ("m0", _int),
    "r": ("r", float),
    "seed": ("seed", _int),
    "seeds": ("seed", _int),
    "noise": ("noise", _choice(("uniform", "scaled_bernoulli", "gaussian"))),
    "sigma": ("sigma", float),
    "a": ("a", float),
    "a_b": ("a_b", float),
    "k_star": ("k_star", float),
    "sigma0_sq": ("sigma0_sq", float),
    "T": ("T", _int),
    "gain_lo": ("gain_lo", float),
    "gain_hi": ("gain_hi", float),
    "emit": ("emit", _emit),
}
# keys whose value is never split on commas
SCALAR_ONLY = ("M", "b", "x1", "emit", "instance", "transformer", "regularizer", "noise")


def parse_config_text(text: str) -> dict[str, tuple[str, int]]:
    """``key = value`` lines; ``#`` starts a comment.  Returns raw strings with
    their line numbers."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", line=lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key.startswith("--"):
            key = key[2:]
        if key not in KEYS and key not in ("out", "jobs"):
            raise ConfigError(f"unknown key; known keys: {sorted(KEYS)}", line=lineno, key=key)
        if value == "":
            raise ConfigError("empty value", line=lineno, key=key)
        out[key] = (value, lineno)
    return out


def read_config_file(path) -> dict[str, tuple[str, int]]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    return parse_config_text(text)


def resolve(raw: dict[str, tuple[str, int | None]]) -> tuple[ExperimentConfig, dict[str, list]]:
    """Turn raw key/value strings into a base config plus sweep axes.

    A comma-separated value for a sweepable key becomes an axis; every
    sweepable key given explicitly is an axis (possibly of length one).
    """
    fields, axes = {}, {}
    for key, (value, line) in raw.items():
        if key in ("out", "jobs"):
            continue
        name, parse = KEYS[key]
        parts = [value] if key in SCALAR_ONLY else [s.strip() for s in value.split(",")]
        try:
            vals = [parse(p) for p in parts]
        except ValueError as exc:
            raise ConfigError(str(exc), line=line, key=key) from None
        axis = "seed" if key == "seeds" else key
        if axis in SWEEP_AXES:
            axes[axis] = vals
        elif len(vals) > 1:
            raise ConfigError("only sweep axes accept lists", line=line, key=key)
        fields[name] = vals[0]
    cfg = ExperimentConfig(**fields)
    validate(cfg)
    return cfg, axes


def validate(cfg: ExperimentConfig) -> None:
    if cfg.iters < 1:
        raise ConfigError("must be at least 1", key="iters")
    if cfg.theta < 0:
        raise ConfigError("must be nonnegative", key="theta")
    if cfg.alpha <= 0:
        raise ConfigError("must be positive", key="alpha")
    if cfg.m0 < 0:
        raise ConfigError("must be nonnegative (0 = deterministic)", key="m0")
    if cfg.r < 0:
        raise ConfigError("must be nonnegative", key="r")
    if not 0 <= cfg.q <= 1:
        raise ConfigError("must lie in [0, 1]", key="q")
    if cfg.lam < 0:
        raise ConfigError("must be nonnegative", key="lambda")
    if cfg.stochastic and cfg.transformer != "none":
        raise ConfigError("transformers are not supported on stochastic runs", key="transformer")
    if cfg.instance == "imitation" and not cfg.gain_lo < cfg.gain_hi:
        raise ConfigError("gain_lo must be below gain_hi", key="gain_lo")


def _vector(text: str, key: str) -> np.ndarray:
    try:
        return np.array([float(s) for s in text.replace(";", ",").split(",") if s.strip()])
    except ValueError:
        raise ConfigError(f"cannot parse {text!r} as numbers", key=key) from None


def parse_matrix(text: str, dim: int = 0) -> np.ndarray:
    """``"0.5"`` (scaled identity of size ``dim``, default 1) or rows separated
    by ``;`` with comma-separated entries."""
    try:
        rows = [[float(v) for v in row.split(",")] for row in text.split(";")]
    except ValueError:
        raise ConfigError(f"cannot parse matrix {text!r}", key="M") from None
    if len(rows) == 1 and len(rows[0]) == 1:
        return rows[0][0] * np.eye(max(dim, 1))
    if len({len(r) for r in rows}) != 1:
        raise ConfigError("matrix rows have different lengths", key="M")
    M = np.array(rows)
    if M.shape[0] != M.shape[1]:
        raise ConfigError(f"matrix must be square, got {M.shape}", key="M")
    return M


def build_instance(cfg: ExperimentConfig):
    if cfg.instance == "counterexample":
        inst = make_counterexample(cfg.theta)
    elif cfg.instance == "affine":
        M = parse_matrix(cfg.M, cfg.dim)
        b = _vector(cfg.b, "b") if cfg.b else None
        if b is not None and b.size != M.shape[0]:
            raise ConfigError(f"b has {b.size} entries, M is {M.shape[0]}x{M.shape[0]}", key="b")
        inst = make_affine_quadratic(AffineQuadraticSpec(M, b, alpha=cfg.alpha))
    else:
        inst = make_linear_imitation(LinearImitationSpec(cfg.a, cfg.a_b, cfg.k_star, cfg.sigma0_sq, cfg.T,
                                                         (cfg.gain_lo, cfg.gain_hi)))
    if cfg.stochastic:
        inst = StochasticInstance(inst, StochasticWrapperSpec(cfg.noise, cfg.sigma,
                                                             unchecked=cfg.noise == "gaussian"))
    return inst


def build_transformer(cfg: ExperimentConfig, instance) -> CostTransformer | None:
    if cfg.transformer == "mixing":
        return CostTransformer.mixing(cfg.q)
    if cfg.transformer == "weighted":
        if cfg.regularizer == "expert":
            reg = Regularizer.expert_cost(instance)
        else:
            center = instance.expert if instance.expert is not None else np.zeros(instance.dimension)
            reg = Regularizer.squared_distance(instance.constants.alpha, center)
        return CostTransformer.weighted(cfg.lam, reg)
    return None


def build_loop_config(cfg: ExperimentConfig, instance) -> LoopConfig:
    x1 = _vector(cfg.x1, "x1")
    if x1.size == 1 and instance.dimension > 1:
        x1 = np.full(instance.dimension, x1[0])
    if x1.size != instance.dimension:
        raise ConfigError(f"x1 has {x1.size} coordinates, instance dimension is {instance.dimension}", key="x1")
    sampling = SamplingSchedule(cfg.m0, cfg.r, cfg.seed) if cfg.stochastic else None
    return LoopConfig(cfg.iters, x1, STOCHASTIC if cfg.stochastic else DETERMINISTIC, sampling,
                      build_transformer(cfg, instance))


def execute(cfg: ExperimentConfig) -> tuple[RunTrace, object]:
    try:
        inst = build_instance(cfg)
        loop = build_loop_config(cfg, inst)
        return run(inst, loop), inst
    except (CapabilityError, DomainError, MissingConstantError) as exc:
        raise ConfigError(str(exc)) from None
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def default_bounds(trace: RunTrace) -> tuple[str, ...]:
    if trace.sample_counts.any():
        return ()
    ids = ["thm1", "lemma3", "perturbation", "corollary1"]
    if not trace.aborted:
        ids += ["thm2", "prop2"]
    if trace.transformer is not None:
        ids.append("corollary2" if trace.transformer.kind == "mixing" else "corollary3")
    return tuple(ids)


def summarize(cfg: ExperimentConfig, trace: RunTrace, instance, wall_time: float) -> SummaryRecord:
    c = trace.effective_constants
    # transformed runs are judged on the original objective
    values, floor = trace.self_values, c.eps_tilde
    if trace.transformer is not None:
        values, floor = trace.base_values, instance.constants.eps_tilde
    try:
        fit = fit_rate(values, floor, theta=c.theta)
        fitted, r2 = fit.fitted_exponent, fit.r_squared
    except ValueError:
        fitted, r2 = None, None
    base = instance.constants
    records = check_bounds(trace, c, default_bounds(trace), base_constants=base)
    return SummaryRecord(
        config=cfg.echo(),
        final_value=trace.final_value,
        best_index=trace.best_index,
        best_value=float(trace.self_values[trace.best_index - 1]),
        fitted_exponent=fitted,
        theoretical_exponent=2 * (c.theta - 1),
        r_squared=r2,
        bounds={r.bound_id: r.passed for r in records},
        constants=c.to_dict(),
        iterations_run=trace.n_rounds,
        aborted=trace.aborted,
        abort_reason=trace.abort_reason,
        wall_time=round(wall_time, 6),
    )


def output_dir(out: str | None) -> Path:
    return Path(out or os.environ.get("VAL_AGG_OUT") or DEFAULT_OUT)


def ensure_writable(path: Path) -> None:
    """Create ``path`` and prove a file can be written there; raises OSError."""
    path.mkdir(parents=True, exist_ok=True)
    probe = path / ".write_probe"
    probe.write_text("")
    probe.unlink()


def write_svg_for(trace_path: Path, summary: SummaryRecord | None, svg_path: Path) -> None:
    from .plotting import plot_traces
    plot_traces([trace_path], "self_value", svg_path, summaries=[summary])


def run_point(cfg: ExperimentConfig, out: Path, stem: str) -> SummaryRecord:
    t0 = time.perf_counter()
    trace, inst = execute(cfg)
    record = summarize(cfg, trace, inst, time.perf_counter() - t0)
    csv_path = out / f"{stem}.csv"
    if "csv" in cfg.emit or "svg" in cfg.emit:
        write_trace_csv(trace, csv_path)
    if "json" in cfg.emit:
        write_summary(record, out / f"{stem}.json")
    if "svg" in cfg.emit:
        write_svg_for(csv_path, record, out / f"{stem}.svg")
    return record


def sweep_points(base: ExperimentConfig, axes: dict[str, list], cap: int = SWEEP_CAP) -> list[ExperimentConfig]:
    if not axes:
        raise ConfigError("a sweep needs at least one axis (" + ", ".join(SWEEP_AXES) + ")")
    size = math.prod(len(v) for v in axes.values())
    if size > cap:
        raise ConfigError(f"sweep has {size} points, cap is {cap}")
    names = [a for a in SWEEP_AXES if a in axes]
    points = []
    for combo in itertools.product(*(axes[a] for a in names)):
        changes = {("lam" if a == "lambda" else a): v for a, v in zip(names, combo)}
        cfg = replace(base, **changes)
        validate(cfg)
        points.append(cfg)
    return points


def _sweep_job(args):
    cfg, out, stem = args
    return run_point(cfg, Path(out), stem)


def run_sweep(base: ExperimentConfig, axes: dict[str, list], out: Path, jobs: int = 1,
              cap: int = SWEEP_CAP) -> list[SummaryRecord]:
    points = sweep_points(base, axes, cap)
    tasks = [(cfg, str(out), f"point_{i:04d}") for i, cfg in enumerate(points)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_sweep_job, tasks))
    else:
        records = [_sweep_job(t) for t in tasks]
    write_jsonl(records, out / "sweep.jsonl")
    write_sweep_table(records, [a for a in SWEEP_AXES if a in axes], out / "sweep_table.csv")
    return records


def _cell(v) -> str:
    if v is None:
        return ""
    return v if isinstance(v, str) else repr(v)


def write_sweep_table(records, axis_names, path: Path) -> None:
    bound_ids = sorted({k for r in records for k in r.bounds})
    lines = [",".join(list(axis_names) + ["final_value", "fitted_exponent", "theoretical_exponent",
                                          "aborted"] + [f"pass_{b}" for b in bound_ids])]
    for r in records:
        cells = [_cell(r.config.get("lambda" if a == "lambda" else a)) for a in axis_names]
        cells += [repr(r.final_value), "" if r.fitted_exponent is None else repr(r.fitted_exponent),
                  repr(r.theoretical_exponent), str(r.aborted)]
        cells += ["" if b not in r.bounds else str(r.bounds[b]) for b in bound_ids]
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")


__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "build_instance",
    "build_loop_config",
    "execute",
    "parse_config_text",
    "resolve",
    "run_point",
    "run_sweep",
    "summarize",
    "sweep_points",
]
