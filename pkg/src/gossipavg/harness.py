"""Experiment orchestration: seeded runs, traces, histograms, serialization.

A run is fully determined by its :class:`ExperimentConfig`; run r of an
ensemble draws every random bit from a PCG64 stream seeded by
``mix64(master_seed, r)``.  Traces record potential snapshots at step 0,
every ``record_every`` steps, the final step, and at the endpoints of each
decomposition interval, where the incremental trackers are verified
against full recomputations.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from . import __version__
from .dynamics import (
    Cutoff,
    DiscreteRounding,
    Population,
    Real,
    SequentialEngine,
    SynchronousEngine,
    UpdateRule,
    init_population,
)
from .errors import ConfigError, InsufficientDataError, ModelMismatchError, ParameterError
from .noise import DiscreteGeometric, Gaussian, NoiseModel, Zero
from .potentials import (
    DecompositionAccumulator,
    PotentialSnapshot,
    check_decomposition_bound,
)
from .seeding import GENERATOR_NAME, make_rng

# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UniformInit:
    lo: float
    hi: float


@dataclass(frozen=True)
class ConstantInit:
    v: float


@dataclass(frozen=True)
class ExplicitInit:
    values: tuple[float, ...]


InitSpec = Union[UniformInit, ConstantInit, ExplicitInit]

SCHEDULERS = ("sequential", "synchronous")


@dataclass(frozen=True)
class ExperimentConfig:
    """Complete description of one (possibly multi-run) experiment."""

    n: int
    init: InitSpec
    scheduler: str
    noise: NoiseModel
    rule: UpdateRule
    steps: int
    master_seed: int
    record_every: int
    decomposition_intervals: tuple[tuple[int, int], ...] = ()
    runs: int = 1

    def validate(self) -> None:
        if self.n < 2:
            raise ConfigError(f"n: need at least 2 agents, got {self.n}")
        if self.scheduler not in SCHEDULERS:
            raise ConfigError(f"scheduler: must be one of {SCHEDULERS}, got {self.scheduler!r}")
        if self.steps < 1:
            raise ConfigError(f"steps: must be a positive integer, got {self.steps}")
        if self.record_every < 1 or self.record_every > self.steps:
            raise ConfigError(
                f"record_every: must be in [1, steps], got {self.record_every} with steps={self.steps}"
            )
        if self.runs < 1:
            raise ConfigError(f"runs: must be positive, got {self.runs}")
        if isinstance(self.init, ExplicitInit) and len(self.init.values) != self.n:
            raise ConfigError(
                f"init: explicit values have length {len(self.init.values)}, expected n={self.n}"
            )
        if isinstance(self.init, UniformInit) and not self.init.lo < self.init.hi:
            raise ConfigError(f"init: uniform range needs lo < hi, got [{self.init.lo}, {self.init.hi}]")
        prev_end = 0
        for t0, t1 in self.decomposition_intervals:
            if not (0 <= t0 < t1 <= self.steps):
                raise ConfigError(
                    f"decomposition_intervals: ({t0}, {t1}] must lie within [0, steps]"
                )
            if t0 < prev_end:
                raise ConfigError(
                    "decomposition_intervals: intervals must be sorted and non-overlapping"
                )
            prev_end = t1
        if self.decomposition_intervals and self.scheduler != "sequential":
            raise ConfigError(
                "decomposition_intervals: decomposition is defined for the sequential scheduler"
            )


def _noise_to_json(model: NoiseModel) -> dict:
    if isinstance(model, Gaussian):
        return {"kind": "gaussian", "sigma2": model.sigma2}
    if isinstance(model, DiscreteGeometric):
        return {"kind": "discrete_geometric", "p": model.p}
    return {"kind": "zero"}


def _noise_from_json(d: dict) -> NoiseModel:
    kind = d.get("kind")
    if kind == "gaussian":
        return Gaussian(float(d["sigma2"]))
    if kind == "discrete_geometric":
        return DiscreteGeometric(float(d["p"]))
    if kind == "zero":
        return Zero()
    raise ConfigError(f"noise: unknown kind {kind!r}")


def _rule_to_json(rule: UpdateRule) -> dict:
    if isinstance(rule, Real):
        return {"kind": "real"}
    if isinstance(rule, DiscreteRounding):
        return {"kind": "discrete_rounding"}
    return {"kind": "cutoff", "vmin": rule.vmin, "vmax": rule.vmax, "rounding": rule.rounding}


def _rule_from_json(d: dict) -> UpdateRule:
    kind = d.get("kind")
    if kind == "real":
        return Real()
    if kind == "discrete_rounding":
        return DiscreteRounding()
    if kind == "cutoff":
        return Cutoff(float(d["vmin"]), float(d["vmax"]), bool(d.get("rounding", False)))
    raise ConfigError(f"rule: unknown kind {kind!r}")


def _init_to_json(init: InitSpec) -> dict:
    if isinstance(init, UniformInit):
        return {"kind": "uniform", "lo": init.lo, "hi": init.hi}
    if isinstance(init, ConstantInit):
        return {"kind": "constant", "v": init.v}
    return {"kind": "explicit", "values": list(init.values)}


def _init_from_json(d: dict) -> InitSpec:
    kind = d.get("kind")
    if kind == "uniform":
        return UniformInit(float(d["lo"]), float(d["hi"]))
    if kind == "constant":
        return ConstantInit(float(d["v"]))
    if kind == "explicit":
        return ExplicitInit(tuple(float(v) for v in d["values"]))
    raise ConfigError(f"init: unknown kind {kind!r}")


def config_to_json_dict(config: ExperimentConfig) -> dict:
    return {
        "n": config.n,
        "init": _init_to_json(config.init),
        "scheduler": config.scheduler,
        "noise": _noise_to_json(config.noise),
        "rule": _rule_to_json(config.rule),
        "steps": config.steps,
        "master_seed": config.master_seed,
        "record_every": config.record_every,
        "decomposition_intervals": [list(iv) for iv in config.decomposition_intervals],
        "runs": config.runs,
    }


def config_from_json_dict(d: dict) -> ExperimentConfig:
    known = {
        "n", "init", "scheduler", "noise", "rule", "steps",
        "master_seed", "record_every", "decomposition_intervals", "runs",
    }
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    try:
        config = ExperimentConfig(
            n=int(d["n"]),
            init=_init_from_json(d["init"]),
            scheduler=str(d["scheduler"]),
            noise=_noise_from_json(d["noise"]),
            rule=_rule_from_json(d["rule"]),
            steps=int(d["steps"]),
            master_seed=int(d["master_seed"]),
            record_every=int(d["record_every"]),
            decomposition_intervals=tuple(
                (int(t0), int(t1)) for t0, t1 in d.get("decomposition_intervals", [])
            ),
            runs=int(d.get("runs", 1)),
        )
    except KeyError as exc:
        raise ConfigError(f"missing config field: {exc.args[0]}") from exc
    except ParameterError as exc:
        raise ConfigError(str(exc)) from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"malformed config value: {exc}") from exc
    config.validate()
    return config


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return config_from_json_dict(json.load(fh))


# ---------------------------------------------------------------------------
# trace records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Histogram:
    """Counts over strictly increasing bin edges."""

    bin_edges: tuple[float, ...]
    counts: tuple[int, ...]
    total: int


@dataclass(frozen=True)
class DecompositionRecord:
    accumulator: DecompositionAccumulator
    phi_bar_t0: float
    phi_bar_t1: float
    bound_holds: bool


@dataclass(frozen=True)
class FinalSummary:
    minimum: float
    maximum: float
    mean: float
    histogram: Optional[Histogram]


@dataclass
class TraceRecord:
    """Everything recorded about one run."""

    run_index: int
    n: int
    seed: int
    snapshots: list[PotentialSnapshot] = field(default_factory=list)
    decompositions: list[DecompositionRecord] = field(default_factory=list)
    final_values: Optional[FinalSummary] = None
    final_population: Optional[np.ndarray] = None


# ---------------------------------------------------------------------------
# running experiments
# ---------------------------------------------------------------------------


def _initial_values(config: ExperimentConfig, rng) -> np.ndarray:
    init = config.init
    if isinstance(init, UniformInit):
        return rng.uniform(init.lo, init.hi, size=config.n)
    if isinstance(init, ConstantInit):
        return np.full(config.n, float(init.v))
    return np.asarray(init.values, dtype=float)


def _snapshot_from_engine(engine, step: int, initial_average: float,
                          mean: float, phibar: float) -> PotentialSnapshot:
    vals = engine.values_array()
    d0 = vals - initial_average
    n = len(vals)
    return PotentialSnapshot(
        step=step,
        tss=float(np.dot(d0, d0)),
        phi_bar=phibar,
        phi=2.0 * n * phibar,
        running_avg=mean,
        drift=mean - initial_average,
    )


def run_single(config: ExperimentConfig, run_index: int,
               keep_final_values: bool = False) -> TraceRecord:
    """Execute one run of the ensemble; deterministic in (config, run_index)."""
    seed = config.master_seed
    rng = make_rng(seed, run_index)
    pop = init_population(_initial_values(config, rng))
    x0 = pop.initial_average

    if config.scheduler == "sequential":
        engine = SequentialEngine(pop, config.noise, config.rule, rng)
    else:
        engine = SynchronousEngine(pop, config.noise, config.rule, rng)

    record_set = set(range(0, config.steps + 1, config.record_every))
    record_set.add(0)
    record_set.add(config.steps)
    starts = {t0: (t0, t1) for t0, t1 in config.decomposition_intervals}
    ends = {t1: (t0, t1) for t0, t1 in config.decomposition_intervals}
    boundaries = sorted(record_set | set(starts) | set(ends))

    trace = TraceRecord(run_index=run_index, n=config.n, seed=seed)
    open_phi0: Optional[float] = None
    open_interval: Optional[tuple[int, int]] = None

    mean, phibar = engine.refresh()
    trace.snapshots.append(_snapshot_from_engine(engine, 0, x0, mean, phibar))
    if 0 in starts:
        engine.begin_decomposition()
        open_interval = starts[0]
        open_phi0 = phibar

    for b in boundaries:
        if b == 0:
            continue
        engine.advance(b - engine.step)
        mean, phibar = engine.refresh()
        if open_interval is not None and b == open_interval[1]:
            s_prime, s_star, s_minus = engine.end_decomposition()
            acc = DecompositionAccumulator(
                t0=open_interval[0], t1=open_interval[1],
                s_prime=s_prime, s_star=s_star, s_minus=s_minus,
            )
            trace.decompositions.append(
                DecompositionRecord(
                    accumulator=acc,
                    phi_bar_t0=open_phi0,
                    phi_bar_t1=phibar,
                    bound_holds=check_decomposition_bound(acc, open_phi0, phibar),
                )
            )
            open_interval = None
            open_phi0 = None
        trace.snapshots.append(_snapshot_from_engine(engine, b, x0, mean, phibar))
        if b in starts:
            engine.begin_decomposition()
            open_interval = starts[b]
            open_phi0 = phibar

    engine.finish()
    vals = engine.values_array()
    trace.final_values = FinalSummary(
        minimum=float(vals.min()),
        maximum=float(vals.max()),
        mean=float(vals.mean()),
        histogram=distance_histogram(pop),
    )
    if keep_final_values:
        trace.final_population = vals.copy()
    return trace


def run_experiment(config: ExperimentConfig, jobs: int = 1,
                   keep_final_values: bool = False) -> list[TraceRecord]:
    """Run the whole ensemble; results are in run order regardless of ``jobs``."""
    config.validate()
    if jobs > 1 and config.runs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(
                pool.map(
                    run_single,
                    [config] * config.runs,
                    range(config.runs),
                    [keep_final_values] * config.runs,
                )
            )
    return [run_single(config, r, keep_final_values) for r in range(config.runs)]


# ---------------------------------------------------------------------------
# histograms and the distance-distribution fit
# ---------------------------------------------------------------------------


def distance_histogram(pop: Population, bins: Optional[int] = None) -> Histogram:
    """Histogram of the distances x_i - mean(x) over equal-width bins.

    ``bins=None`` selects the bin count by the Freedman-Diaconis rule; an
    explicit count must be >= 2.  An all-equal population collapses to a
    single bin regardless.
    """
    dist = pop.values - np.mean(pop.values)
    lo, hi = float(dist.min()), float(dist.max())
    if hi <= lo:
        return Histogram((lo, lo + 1.0), (len(dist),), len(dist))
    if bins is None:
        edges = np.histogram_bin_edges(dist, bins="fd")
        if len(edges) < 3:
            edges = np.histogram_bin_edges(dist, bins=2)
    else:
        if bins < 2:
            raise ParameterError(f"bins must be >= 2, got {bins}")
        edges = np.histogram_bin_edges(dist, bins=bins)
    counts, edges = np.histogram(dist, bins=edges)
    return Histogram(tuple(float(e) for e in edges),
                     tuple(int(c) for c in counts), int(len(dist)))


def histogram_of(values: Sequence[float], bins: Optional[int] = None) -> Histogram:
    """Histogram of arbitrary sample values (same binning rules)."""
    arr = np.asarray(values, dtype=float)
    lo, hi = float(arr.min()), float(arr.max())
    if hi <= lo:
        return Histogram((lo, lo + 1.0), (len(arr),), len(arr))
    spec = "fd" if bins is None else bins
    if bins is not None and bins < 2:
        raise ParameterError(f"bins must be >= 2, got {bins}")
    edges = np.histogram_bin_edges(arr, bins=spec)
    if len(edges) < 3:
        edges = np.histogram_bin_edges(arr, bins=2)
    counts, edges = np.histogram(arr, bins=edges)
    return Histogram(tuple(float(e) for e in edges),
                     tuple(int(c) for c in counts), int(len(arr)))


#: Bins with fewer samples than this are excluded from the survival fit.
FIT_MIN_COUNT = 30

#: Minimum number of qualifying bins for a meaningful fit.
FIT_MIN_BINS = 5


def survival_fit(hist: Histogram) -> tuple[float, float]:
    """Least-squares fit of log empirical survival against distance.

    Evaluates the survival fraction at each bin's right edge and fits
    ln(survival) ~ a x + b over bins holding at least FIT_MIN_COUNT samples
    (and positive survival).  Returns (slope, r_squared); an exponential
    tail yields a negative slope with r_squared near 1.
    """
    counts = np.asarray(hist.counts, dtype=float)
    edges = np.asarray(hist.bin_edges, dtype=float)
    survivors = hist.total - np.cumsum(counts)
    ok = (counts >= FIT_MIN_COUNT) & (survivors > 0)
    if int(ok.sum()) < FIT_MIN_BINS:
        raise InsufficientDataError(
            f"survival fit needs >= {FIT_MIN_BINS} bins with >= {FIT_MIN_COUNT} samples, "
            f"got {int(ok.sum())}"
        )
    x = edges[1:][ok]
    y = np.log(survivors[ok] / hist.total)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_res = float(np.dot(resid, resid))
    centered = y - y.mean()
    ss_tot = float(np.dot(centered, centered))
    r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(r_squared)


# ---------------------------------------------------------------------------
# Monte Carlo drift study
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DriftReport:
    empirical_variance: float
    theory_variance: float
    exceed_fraction_upper: float
    exceed_fraction_lower: float
    delta: float
    upper_bound: float
    lower_prob: float


def monte_carlo_drift(config: ExperimentConfig, runs: int, delta: float = 0.1,
                      jobs: int = 1) -> DriftReport:
    """Drift of the running average over an ensemble, against the Gaussian law.

    Requires Gaussian noise and the sequential scheduler.  The theoretical
    variance of the drift after t steps is t sigma^2 / (2 n^2).
    """
    from .bounds import drift_bound_gaussian

    if not isinstance(config.noise, Gaussian):
        raise ModelMismatchError("drift study requires the Gaussian noise model")
    if config.scheduler != "sequential":
        raise ModelMismatchError("drift study requires the sequential scheduler")
    sigma = math.sqrt(config.noise.sigma2)
    theory = config.steps * config.noise.sigma2 / (2.0 * config.n**2)
    upper, lower_prob = drift_bound_gaussian(config.steps, delta, sigma, config.n)
    if config.steps == 0:
        return DriftReport(0.0, 0.0, 0.0, 0.0, delta, 0.0, lower_prob)
    cfg = dataclasses.replace(config, runs=runs, record_every=config.steps,
                              decomposition_intervals=())
    traces = run_experiment(cfg, jobs=jobs)
    drifts = np.array([t.snapshots[-1].drift for t in traces])
    return DriftReport(
        empirical_variance=float(np.var(drifts)),
        theory_variance=theory,
        exceed_fraction_upper=float(np.mean(np.abs(drifts) > upper)),
        exceed_fraction_lower=float(np.mean(np.abs(drifts) >= upper)),
        delta=delta,
        upper_bound=upper,
        lower_prob=lower_prob,
    )


# ---------------------------------------------------------------------------
# figure replications
# ---------------------------------------------------------------------------

FIG_A_SEED = 1
FIG_B_SEED = 12345


def fig_a_config(n: int = 10**4, master_seed: int = FIG_A_SEED) -> ExperimentConfig:
    """Distance-distribution study: uniform init over [1, n^2], 10 n steps.

    Defaults to n = 10^4 for desk-scale runtime; the distributional claim
    is scale-free in n.
    """
    return ExperimentConfig(
        n=n,
        init=UniformInit(1.0, float(n) ** 2),
        scheduler="sequential",
        noise=Gaussian(1.0),
        rule=Real(),
        steps=10 * n,
        master_seed=master_seed,
        record_every=n,
    )


def fig_b_config(master_seed: int = FIG_B_SEED) -> ExperimentConfig:
    """Bounded-range drift study: n=1000 agents at 10, cutoff [1, 10], 10^7 steps."""
    n = 1000
    return ExperimentConfig(
        n=n,
        init=ConstantInit(10.0),
        scheduler="sequential",
        noise=DiscreteGeometric(0.8),
        rule=Cutoff(1.0, 10.0, rounding=True),
        steps=10**4 * n,
        master_seed=master_seed,
        record_every=10**3 * n,
    )


def replicate_fig_a(n: int = 10**4, master_seed: int = FIG_A_SEED,
                    bins: int = 60) -> tuple[TraceRecord, Histogram, tuple[float, float]]:
    """Run the distance-distribution experiment and fit the tail law.

    Returns the trace, the histogram of absolute distances to the running
    average, and the (slope, r_squared) of the log-survival fit.
    """
    config = fig_a_config(n=n, master_seed=master_seed)
    trace = run_experiment(config, keep_final_values=True)[0]
    vals = trace.final_population
    abs_dist = np.abs(vals - vals.mean())
    hist = histogram_of(abs_dist, bins)
    fit = survival_fit(hist)
    return trace, hist, fit


def replicate_fig_b(master_seed: int = FIG_B_SEED) -> TraceRecord:
    """Run the bounded-range experiment; the final running average is the result."""
    return run_experiment(fig_b_config(master_seed))[0]


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

TRACE_COLUMNS = ("step", "tss", "phi_bar", "phi", "running_avg", "drift", "parallel_time")
DECOMP_COLUMNS = ("t0", "t1", "s_prime", "s_star", "s_minus", "bound_holds")


def _fmt(x: float) -> str:
    return format(x, ".17g")


def emit_csv(trace: TraceRecord, path) -> None:
    """Write the snapshot trace as CSV; floats carry 17 significant digits."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for s in trace.snapshots:
            writer.writerow(
                [
                    s.step,
                    _fmt(s.tss),
                    _fmt(s.phi_bar),
                    _fmt(s.phi),
                    _fmt(s.running_avg),
                    _fmt(s.drift),
                    _fmt(s.step / trace.n),
                ]
            )


def emit_decomposition_csv(trace: TraceRecord, path) -> None:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(DECOMP_COLUMNS)
        for rec in trace.decompositions:
            acc = rec.accumulator
            writer.writerow(
                [
                    acc.t0,
                    acc.t1,
                    _fmt(acc.s_prime),
                    _fmt(acc.s_star),
                    _fmt(acc.s_minus),
                    str(rec.bound_holds).lower(),
                ]
            )


def read_trace_csv(path) -> list[PotentialSnapshot]:
    """Parse a trace CSV back into snapshots (exact round-trip)."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            out.append(
                PotentialSnapshot(
                    step=int(row["step"]),
                    tss=float(row["tss"]),
                    phi_bar=float(row["phi_bar"]),
                    phi=float(row["phi"]),
                    running_avg=float(row["running_avg"]),
                    drift=float(row["drift"]),
                )
            )
    return out


def _snapshot_dict(s: PotentialSnapshot, n: int) -> dict:
    return {
        "step": s.step,
        "tss": s.tss,
        "phi_bar": s.phi_bar,
        "phi": s.phi,
        "running_avg": s.running_avg,
        "drift": s.drift,
        "parallel_time": s.step / n,
    }


def summary_dict(traces: list[TraceRecord], config: ExperimentConfig,
                 bound_values: Optional[dict] = None) -> dict:
    """Ensemble summary: per-run finals, ensemble statistics, bound values."""
    finals = [t.snapshots[-1] for t in traces]
    drifts = np.array([s.drift for s in finals])
    phis = np.array([s.phi_bar for s in finals])
    violations = sum(
        1 for t in traces for rec in t.decompositions if not rec.bound_holds
    )
    return {
        "metadata": {
            "master_seed": config.master_seed,
            "generator": GENERATOR_NAME,
            "build": __version__,
            "config": config_to_json_dict(config),
        },
        "runs": [
            {
                "run_index": t.run_index,
                "final": _snapshot_dict(t.snapshots[-1], t.n),
                "final_values": {
                    "min": t.final_values.minimum,
                    "max": t.final_values.maximum,
                    "mean": t.final_values.mean,
                },
                "decompositions": [
                    {
                        "t0": rec.accumulator.t0,
                        "t1": rec.accumulator.t1,
                        "s_prime": rec.accumulator.s_prime,
                        "s_star": rec.accumulator.s_star,
                        "s_minus": rec.accumulator.s_minus,
                        "bound_holds": rec.bound_holds,
                    }
                    for rec in t.decompositions
                ],
            }
            for t in traces
        ],
        "ensemble": {
            "final_phi_bar_mean": float(phis.mean()),
            "final_phi_bar_max": float(phis.max()),
            "final_drift_variance": float(np.var(drifts)),
            "decomposition_violations": violations,
        },
        "bounds": bound_values or {},
    }


def emit_json(traces: list[TraceRecord], path, config: ExperimentConfig,
              bound_values: Optional[dict] = None) -> None:
    """Write the ensemble summary JSON (floats round-trip via repr)."""
    path = Path(path)
    with open(path, "w") as fh:
        json.dump(summary_dict(traces, config, bound_values), fh, indent=2)
        fh.write("\n")
