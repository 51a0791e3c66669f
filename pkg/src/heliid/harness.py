"""Experiment orchestration: multi-trial runs, confidence intervals, reports.

Builds synthetic benchmark flights from the truth parameter values, runs
repeated identification trials with derived seeds, summarizes per-parameter
95% confidence intervals, and emits CSV/JSON artifacts for plotting.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import stats as _stats

from . import fitness as _fitness
from . import model as _model
from . import optimizers as _optim
from . import signals as _signals
from .signals import CONTROL_NAMES, STATE_NAMES, TimeSeriesLog

# States reported in the method-comparison table (the ones controllers need).
COMPARISON_STATES = ("p", "q", "phi", "theta")

# Excitation plan for the standard synthetic benchmark: 3-2-1-1 bursts placed
# so that each half of a 50/50 split sees one full lateral and one full
# longitudinal burst (7 s each) and opens with a quiet second for anchoring
# the initial state.
DEFAULT_EXCITATION_PLAN = ((1.0, "lat"), (8.0, "lon"), (16.0, "lat"), (23.0, "lon"))

METHODS = ("iwo", "ga", "pem")


def default_optimizer_config(method: str, rng_seed: int = 0):
    if method == "iwo":
        return _optim.IwoConfig(rng_seed=rng_seed)
    if method == "ga":
        return _optim.GaConfig(rng_seed=rng_seed)
    if method == "pem":
        return _optim.PemConfig(rng_seed=rng_seed)
    raise ValueError(f"unknown method {method!r}, expected one of {METHODS}")


_RUNNERS = {"iwo": _optim.run_iwo, "ga": _optim.run_ga, "pem": _optim.run_pem}


def synthesize_flight(
    params: _model.ParameterSet = _model.TRUTH_HOVER,
    duration_s: float = 30.0,
    sample_rate_hz: float = 100.0,
    amplitude: float = 0.1,
    noise_fraction: float = 0.01,
    rng_seed: int = 0,
    flap_sign_symmetric: bool = True,
    excitation_plan=DEFAULT_EXCITATION_PLAN,
) -> TimeSeriesLog:
    """Simulate a hover flight with scheduled 3-2-1-1 bursts plus noise.

    The symmetric flap sign is the default here because the published
    asymmetric variant exceeds the divergence guard before 30 s with the truth
    values.  Noise sigma is ``noise_fraction`` of each state channel's RMS;
    control channels stay noiseless (they are commands, not measurements).
    """
    n = int(round(duration_s * sample_rate_hz))
    dt = 1.0 / sample_rate_hz
    t = np.arange(n) * dt
    controls = {c: np.zeros(n) for c in CONTROL_NAMES}
    for start, axis in excitation_plan:
        channel = controls[f"delta_{axis}"]
        offset = start
        for sign, seconds in _signals.DEFAULT_3211:
            lo = np.searchsorted(t, offset)
            hi = np.searchsorted(t, offset + seconds)
            channel[lo:hi] = sign * amplitude
            offset += seconds

    input_log = TimeSeriesLog(sample_rate_hz, controls, frozenset())
    mats = _model.build_matrices(params, flap_sign_symmetric)
    sim = _model.simulate(mats, np.zeros(_model.N_STATES), input_log)
    if sim.divergent:
        raise RuntimeError(
            "truth simulation diverged; synthetic benchmark needs a bounded model"
        )

    channels = dict(sim.channels)
    channels.update(controls)
    clean = TimeSeriesLog(sample_rate_hz, channels, frozenset(STATE_NAMES))
    rng = np.random.default_rng(rng_seed)
    return _signals.add_measurement_noise(clean, noise_fraction, rng)


@dataclass(frozen=True)
class ExperimentConfig:
    """One identification experiment: data, method, trial count, seeds."""

    data: TimeSeriesLog
    method: str = "iwo"
    trials: int = 10
    split_fraction: float = 0.5
    seed: int = 0
    optimizer_config: object | None = None
    space: _optim.SearchSpace | None = None
    fitness_config: _fitness.FitnessConfig = _fitness.FitnessConfig(flap_sign_symmetric=True)
    # With identical seeds every trial repeats exactly (zero-width intervals).
    identical_trial_seeds: bool = False

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")


@dataclass
class TrialReport:
    """Best model plus cross-trial statistics, in canonical parameter order."""

    method: str
    seed: int
    param_names: tuple
    best_values: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    best_cost: float
    trial_costs: list
    trial_seconds: list
    validation_rho: dict
    config_echo: dict

    def to_json_dict(self, include_timing: bool = False) -> dict:
        out = {
            "method": self.method,
            "seed": self.seed,
            "best_cost": self.best_cost,
            "trial_costs": list(self.trial_costs),
            "best_parameters": {
                n: float(v) for n, v in zip(self.param_names, self.best_values)
            },
            "confidence_intervals": {
                n: [float(lo), float(hi)]
                for n, lo, hi in zip(self.param_names, self.ci_lower, self.ci_upper)
            },
            "validation_rho": {
                k: (None if v is None else float(v))
                for k, v in self.validation_rho.items()
            },
            "config": self.config_echo,
        }
        if include_timing:
            out["trial_seconds"] = list(self.trial_seconds)
        return out


def confidence_intervals(samples: np.ndarray, level: float = 0.95):
    """Student-t interval per column; degenerate (lo = hi = value) for n = 1.

    Bounds are stored sorted so ci_lower <= ci_upper always holds.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    n = samples.shape[0]
    mean = samples.mean(axis=0)
    if n == 1:
        return mean.copy(), mean.copy()
    sem = samples.std(axis=0, ddof=1) / np.sqrt(n)
    t_crit = float(_stats.t.ppf(0.5 + level / 2.0, n - 1))
    lo = mean - t_crit * sem
    hi = mean + t_crit * sem
    # a column of identical samples has exactly zero width (std can otherwise
    # pick up rounding noise of order 1e-16 from the mean subtraction)
    constant = samples.max(axis=0) == samples.min(axis=0)
    lo[constant] = samples[0, constant]
    hi[constant] = samples[0, constant]
    return np.minimum(lo, hi), np.maximum(lo, hi)


def _config_echo(cfg: ExperimentConfig, opt_cfg) -> dict:
    echo = {
        "method": cfg.method,
        "trials": cfg.trials,
        "split_fraction": cfg.split_fraction,
        "seed": cfg.seed,
        "identical_trial_seeds": cfg.identical_trial_seeds,
        "flap_sign_symmetric": cfg.fitness_config.flap_sign_symmetric,
        "optimizer": {
            k: (v if isinstance(v, (int, float, bool, str)) else str(v))
            for k, v in vars(opt_cfg).items()
        },
    }
    return echo


def run_experiment(cfg: ExperimentConfig) -> TrialReport:
    """Run independent trials, keep the best model, summarize 95% CIs.

    Trial i uses rng_seed = seed + i (fixed offset), so a master seed pins the
    whole experiment.  The best model is selected by training cost and its
    per-state Pearson correlation is evaluated on the validation split.
    """
    train, validate = _signals.split_train_validate(cfg.data, cfg.split_fraction)
    space = cfg.space or _optim.SearchSpace.around_truth()
    base_opt = cfg.optimizer_config or default_optimizer_config(cfg.method)
    runner = _RUNNERS[cfg.method]

    results = []
    seconds = []
    for i in range(cfg.trials):
        trial_seed = cfg.seed if cfg.identical_trial_seeds else cfg.seed + i
        opt_cfg = replace(base_opt, rng_seed=trial_seed)
        started = time.perf_counter()
        results.append(runner(train, space, opt_cfg, cfg.fitness_config))
        seconds.append(time.perf_counter() - started)

    trial_costs = [r.best_cost for r in results]
    best = min(results, key=lambda r: r.best_cost)
    samples = np.vstack([r.best_params for r in results])
    ci_lo, ci_hi = confidence_intervals(samples)

    best_params = _model.ParameterSet.from_array(best.best_params)
    validation = _fitness.evaluate(best_params, validate, cfg.fitness_config)

    return TrialReport(
        method=cfg.method,
        seed=cfg.seed,
        param_names=_model.PARAM_NAMES,
        best_values=best.best_params.copy(),
        ci_lower=ci_lo,
        ci_upper=ci_hi,
        best_cost=float(best.best_cost),
        trial_costs=[float(c) for c in trial_costs],
        trial_seconds=seconds,
        validation_rho=validation.per_state_rho,
        config_echo=_config_echo(cfg, replace(base_opt, rng_seed=cfg.seed)),
    )


@dataclass
class ComparisonTable:
    """Validation correlation of each method's best model, per state."""

    states: tuple
    methods: tuple
    cells: dict  # method -> {state: rho or None}
    reports: dict  # method -> TrialReport

    def to_csv(self) -> str:
        lines = ["state," + ",".join(self.methods)]
        for s in self.states:
            row = [s]
            for m in self.methods:
                v = self.cells[m].get(s)
                row.append("" if v is None else repr(float(v)))
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        width = 12
        header = "state".ljust(8) + "".join(m.rjust(width) for m in self.methods)
        lines = [header]
        for s in self.states:
            row = s.ljust(8)
            for m in self.methods:
                v = self.cells[m].get(s)
                row += ("undef" if v is None else f"{v:.4f}").rjust(width)
            lines.append(row)
        return "\n".join(lines) + "\n"


def compare_methods(
    cfg: ExperimentConfig, methods=METHODS, states=COMPARISON_STATES
) -> ComparisonTable:
    """Run each method under the shared config and tabulate validation rho."""
    if len(methods) < 1:
        raise ValueError("need at least one method")
    cells = {}
    reports = {}
    for method in methods:
        mcfg = replace(cfg, method=method, optimizer_config=None)
        report = run_experiment(mcfg)
        reports[method] = report
        cells[method] = {s: report.validation_rho.get(s) for s in states}
    return ComparisonTable(
        states=tuple(states), methods=tuple(methods), cells=cells, reports=reports
    )


def export_timeseries(
    params: _model.ParameterSet,
    data: TimeSeriesLog,
    out_dir,
    fitness_config: _fitness.FitnessConfig = _fitness.FitnessConfig(flap_sign_symmetric=True),
) -> list[Path]:
    """Write one ``t,measured,simulated`` CSV per masked state channel."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    mats = _model.build_matrices(params, fitness_config.flap_sign_symmetric)
    sim = _model.simulate(mats, _model.initial_state_from_log(data), data)
    t = data.times()
    written = []
    for name in STATE_NAMES:
        if name not in data.mask:
            continue
        path = out_dir / f"{name}.csv"
        measured = data.channels[name]
        simulated = sim.channels[name]
        n = min(len(measured), len(simulated))
        try:
            with open(path, "w", newline="", encoding="utf-8") as fh:
                fh.write("t,measured,simulated\n")
                for i in range(n):
                    fh.write(f"{float(t[i])!r},{float(measured[i])!r},{float(simulated[i])!r}\n")
        except OSError as exc:
            raise OSError(f"failed writing {path}: {exc}") from exc
        written.append(path)
    return written


def write_report(report: TrialReport, out_dir) -> dict[str, Path]:
    """Persist a TrialReport: deterministic report.json, parameters.csv, timing.

    Wall-clock timings live in a separate file so that report.json is
    byte-identical across reruns with the same seed.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}

    report_path = out_dir / "report.json"
    report_path.write_text(
        json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    paths["report"] = report_path

    csv_path = out_dir / "parameters.csv"
    lines = ["parameter,value,ci_lower,ci_upper"]
    for name, value, lo, hi in zip(
        report.param_names, report.best_values, report.ci_lower, report.ci_upper
    ):
        lines.append(f"{name},{float(value)!r},{float(lo)!r},{float(hi)!r}")
    csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    paths["parameters"] = csv_path

    timing_path = out_dir / "timing.json"
    timing_path.write_text(
        json.dumps({"trial_seconds": report.trial_seconds}, indent=2) + "\n",
        encoding="utf-8",
    )
    paths["timing"] = timing_path
    return paths
