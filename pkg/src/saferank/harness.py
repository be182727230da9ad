"""Experiment orchestration: seeded runs, aggregation, CSV and SVG output.

A configuration names an instance (file or generator scenario), a horizon,
a number of repeated runs, and the algorithms to race. Every run derives
its own seed from (master_seed, algorithm id, run index) and splits it into
an environment stream (clicks) and an algorithm stream (exchanges and tie
breaks), so results do not depend on execution order and byte-identical
output files come out of repeated or parallel invocations.
"""

from __future__ import annotations

import csv
import io
import json
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .click_models import (
    BanditInstance,
    MODEL_KINDS,
    SCENARIOS,
    _expected_reward_arrays,
    generate_instance,
    load_instance,
    optimal_reward,
    sample_clicks,
)
from .errors import ConfigurationError, InputContractError
from .evaluation import (
    RunRecorder,
    RunResult,
    TrueOrder,
    _count_inversions,
    checkpoint_rounds,
    safety_slack,
)
from .rankers import ALGORITHM_IDS, make_ranker

RUNS_CSV = "runs.csv"
AGGREGATE_CSV = "aggregate.csv"
REGRET_SVG = "regret.svg"
VIOLATIONS_SVG = "violations.svg"

_ENGINES = ("auto", "compiled", "stepwise")


@dataclass(frozen=True)
class InstanceSpec:
    """Where the bandit instance comes from: a JSON file or a generator."""

    file: str | None = None
    scenario: str | None = None
    model: str | None = None
    num_items: int | None = None
    display_size: int | None = None
    seed: int | None = None

    def validate(self) -> None:
        if self.file is not None:
            others = (self.scenario, self.model, self.num_items, self.display_size, self.seed)
            if any(v is not None for v in others):
                raise ConfigurationError(
                    "instance: give either 'file' or generator fields, not both"
                )
            return
        missing = [name for name, v in (
            ("scenario", self.scenario), ("model", self.model), ("L", self.num_items),
            ("K", self.display_size), ("seed", self.seed),
        ) if v is None]
        if missing:
            raise ConfigurationError(f"instance: missing generator fields {missing}")
        if self.scenario not in SCENARIOS:
            raise ConfigurationError(f"instance.scenario: unknown scenario {self.scenario!r}")
        if self.model not in MODEL_KINDS:
            raise ConfigurationError(f"instance.model: unknown model {self.model!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of one experiment; see the README for the JSON form."""

    instance: InstanceSpec
    horizon: int = 100_000
    runs: int = 100
    algorithms: tuple[str, ...] = ALGORITHM_IDS
    delta: float | None = None
    master_seed: int = 1
    checkpoint_stride: int = 100
    out_dir: str | None = None
    workers: int | None = None
    conservative_safety: bool = False

    def validate(self) -> None:
        self.instance.validate()
        if self.horizon < 1:
            raise ConfigurationError(f"T: must be at least 1, got {self.horizon}")
        if self.runs < 1:
            raise ConfigurationError(f"runs: must be at least 1, got {self.runs}")
        if not self.algorithms:
            raise ConfigurationError("algorithms: at least one algorithm id is required")
        for alg in self.algorithms:
            if alg not in ALGORITHM_IDS:
                raise ConfigurationError(
                    f"algorithms: unknown id {alg!r}; known ids: {', '.join(ALGORITHM_IDS)}"
                )
        if len(set(self.algorithms)) != len(self.algorithms):
            raise ConfigurationError("algorithms: ids must be unique")
        if self.delta is not None and not 0.0 < self.delta < 1.0:
            raise ConfigurationError(f"delta: must lie in (0, 1), got {self.delta}")
        if self.master_seed < 0:
            raise ConfigurationError("master_seed: must be nonnegative")
        if self.checkpoint_stride < 1:
            raise ConfigurationError("checkpoint_stride: must be at least 1")
        if self.workers is not None and self.workers < 1:
            raise ConfigurationError("workers: must be at least 1")

    @property
    def effective_delta(self) -> float:
        return self.delta if self.delta is not None else 1.0 / self.horizon


_CONFIG_FIELDS = {
    "instance", "T", "runs", "algorithms", "delta", "master_seed",
    "checkpoint_stride", "out_dir", "workers", "conservative_safety",
}
_INSTANCE_SPEC_FIELDS = {"file", "scenario", "model", "L", "K", "seed"}


def config_from_dict(doc: dict, base_dir: Path | None = None) -> ExperimentConfig:
    """Build a validated config from parsed JSON; unknown keys are errors."""
    if not isinstance(doc, dict):
        raise ConfigurationError("config: expected a JSON object")
    unknown = set(doc) - _CONFIG_FIELDS
    if unknown:
        raise ConfigurationError(f"config: unknown fields {sorted(unknown)}")
    if "instance" not in doc:
        raise ConfigurationError("instance: field is required")
    inst_doc = doc["instance"]
    if not isinstance(inst_doc, dict):
        raise ConfigurationError("instance: expected an object")
    unknown = set(inst_doc) - _INSTANCE_SPEC_FIELDS
    if unknown:
        raise ConfigurationError(f"instance: unknown fields {sorted(unknown)}")
    file_path = inst_doc.get("file")
    if file_path is not None and base_dir is not None and not Path(file_path).is_absolute():
        file_path = str(base_dir / file_path)
    spec = InstanceSpec(
        file=file_path,
        scenario=inst_doc.get("scenario"),
        model=inst_doc.get("model"),
        num_items=inst_doc.get("L"),
        display_size=inst_doc.get("K"),
        seed=inst_doc.get("seed"),
    )
    defaults = ExperimentConfig(instance=spec)
    config = ExperimentConfig(
        instance=spec,
        horizon=int(doc.get("T", defaults.horizon)),
        runs=int(doc.get("runs", defaults.runs)),
        algorithms=tuple(doc.get("algorithms", defaults.algorithms)),
        delta=None if doc.get("delta") is None else float(doc["delta"]),
        master_seed=int(doc.get("master_seed", defaults.master_seed)),
        checkpoint_stride=int(doc.get("checkpoint_stride", defaults.checkpoint_stride)),
        out_dir=doc.get("out_dir"),
        workers=None if doc.get("workers") is None else int(doc["workers"]),
        conservative_safety=bool(doc.get("conservative_safety", False)),
    )
    config.validate()
    return config


def load_config(path: str | Path) -> ExperimentConfig:
    """Read and validate an experiment config JSON file.

    A relative instance file path is resolved against the config file's
    directory.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigurationError(f"config file {path} does not exist") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file {path}: invalid JSON ({exc})") from exc
    return config_from_dict(doc, base_dir=path.parent)


def resolve_instance(config: ExperimentConfig) -> BanditInstance:
    spec = config.instance
    if spec.file is not None:
        try:
            return load_instance(spec.file)
        except FileNotFoundError as exc:
            raise ConfigurationError(f"instance.file: {spec.file} does not exist") from exc
    return generate_instance(
        spec.scenario, spec.num_items, spec.display_size, spec.seed, spec.model
    )


# ---------------------------------------------------------------------------
# single-run simulation


def run_seed_sequence(master_seed: int, algorithm: str, run_index: int) -> np.random.SeedSequence:
    """Deterministic, process-independent seed for one (algorithm, run)."""
    digest = zlib.crc32(algorithm.encode("utf-8"))
    return np.random.SeedSequence([master_seed, digest, run_index])


def _instance_arrays(instance: BanditInstance):
    is_pbm = instance.model_kind == "pbm"
    chi = instance.examination if is_pbm else np.zeros(0)
    return instance.attraction, chi, is_pbm


def simulate_run(
    instance: BanditInstance,
    algorithm: str,
    run_index: int,
    master_seed: int,
    horizon: int,
    stride: int,
    delta: float,
    conservative_safety: bool = False,
    engine: str = "auto",
) -> RunResult:
    """Simulate one (algorithm, run index) pair for ``horizon`` rounds.

    ``engine`` picks the fused compiled loop ("compiled"), the per-round
    ranker classes ("stepwise"), or whichever fits the instance ("auto");
    the two engines produce bit-identical results.
    """
    if engine not in _ENGINES:
        raise ConfigurationError(f"engine: unknown engine {engine!r}")
    alpha, chi, is_pbm = _instance_arrays(instance)
    true_order = TrueOrder.from_instance(instance)
    r_star = optimal_reward(instance)
    pos = np.empty(instance.num_items, dtype=np.int64)
    v0 = _count_inversions(true_order.rank, instance.original_ranking, pos)
    threshold = v0 + safety_slack(
        instance.num_items, instance.display_size, conservative_safety
    )

    env_ss, alg_ss = run_seed_sequence(master_seed, algorithm, run_index).spawn(2)
    env_rng = np.random.default_rng(env_ss)
    alg_rng = np.random.default_rng(alg_ss)

    if engine == "auto":
        compiled_ok = _kernels.leader_key_fits(instance.num_items, instance.display_size)
        engine = "compiled" if compiled_ok else "stepwise"

    if engine == "compiled":
        rounds = checkpoint_rounds(horizon, stride)
        out_regret = np.empty(rounds.shape[0], dtype=np.float64)
        out_violations = np.empty(rounds.shape[0], dtype=np.int64)
        if algorithm in ("klucb-br", "bubblerank-random"):
            _kernels.run_safe(
                alpha, chi, is_pbm, instance.original_ranking, horizon, delta,
                algorithm == "klucb-br", env_rng, alg_rng, stride, r_star,
                true_order.rank, threshold, out_regret, out_violations,
            )
        elif algorithm == "uniform-random":
            _kernels.run_uniform(
                alpha, chi, is_pbm, instance.display_size, horizon, env_rng,
                alg_rng, stride, r_star, true_order.rank, threshold,
                out_regret, out_violations,
            )
        elif algorithm == "original":
            _kernels.run_original(
                alpha, chi, is_pbm, instance.original_ranking, horizon, env_rng,
                stride, r_star, true_order.rank, threshold,
                out_regret, out_violations,
            )
        else:
            raise ConfigurationError(f"algorithms: unknown id {algorithm!r}")
        return RunResult(algorithm, run_index, rounds, out_regret, out_violations)

    ranker = make_ranker(algorithm)
    ranker.reset(instance.num_items, instance.display_size,
                 instance.original_ranking, delta, alg_rng)
    recorder = RunRecorder(algorithm, run_index, horizon, stride)
    for t in range(1, horizon + 1):
        displayed = ranker.propose(t)
        clicks = sample_clicks(instance, displayed, env_rng)
        regret = r_star - _expected_reward_arrays(alpha, chi, is_pbm, displayed)
        if regret < 0.0:
            regret = 0.0
        violated = _count_inversions(true_order.rank, displayed, pos) > threshold
        recorder.record_round(t, regret, violated)
        ranker.feedback(t, clicks)
    return recorder.finish()


def run_experiment(config: ExperimentConfig, engine: str = "auto") -> list[RunResult]:
    """Execute every (algorithm, run) of the config on a bounded worker pool.

    Results come back ordered by (algorithm id, run index) regardless of the
    pool size, and repeated invocations are identical.
    """
    config.validate()
    if engine not in _ENGINES:
        raise ConfigurationError(f"engine: unknown engine {engine!r}")
    instance = resolve_instance(config)
    delta = config.effective_delta
    tasks = [(alg, r) for alg in sorted(config.algorithms)
             for r in range(1, config.runs + 1)]

    def one(task: tuple[str, int]) -> RunResult:
        alg, run_index = task
        return simulate_run(
            instance, alg, run_index, config.master_seed, config.horizon,
            config.checkpoint_stride, delta, config.conservative_safety, engine,
        )

    workers = config.workers if config.workers is not None else min(8, os.cpu_count() or 1)
    if workers <= 1:
        return [one(task) for task in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, tasks))


# ---------------------------------------------------------------------------
# aggregation


@dataclass(eq=False)
class AggregateSeries:
    """Per-algorithm mean and standard error across runs at each checkpoint."""

    rounds: np.ndarray
    algorithms: tuple[str, ...]
    regret_mean: dict
    regret_stderr: dict
    violations_mean: dict
    violations_stderr: dict

    def equals(self, other: "AggregateSeries") -> bool:
        if self.algorithms != other.algorithms:
            return False
        if not np.array_equal(self.rounds, other.rounds):
            return False
        for mine, theirs in (
            (self.regret_mean, other.regret_mean),
            (self.regret_stderr, other.regret_stderr),
            (self.violations_mean, other.violations_mean),
            (self.violations_stderr, other.violations_stderr),
        ):
            for alg in self.algorithms:
                if not np.array_equal(mine[alg], theirs[alg]):
                    return False
        return True


def _mean_stderr(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = values.mean(axis=0)
    if values.shape[0] == 1:
        return mean, np.zeros_like(mean)
    stderr = values.std(axis=0, ddof=1) / np.sqrt(values.shape[0])
    return mean, stderr


def aggregate(results: list[RunResult]) -> AggregateSeries:
    """Collapse per-run series into mean and standard error per algorithm.

    With a single run the standard error is reported as 0 so the output
    schema stays uniform. All results must share one checkpoint grid.
    """
    if not results:
        raise InputContractError("cannot aggregate an empty result set")
    rounds = results[0].rounds
    for res in results:
        if not np.array_equal(res.rounds, rounds):
            raise InputContractError("results do not share a checkpoint grid")
    algorithms = tuple(sorted({res.algorithm for res in results}))
    regret_mean, regret_stderr = {}, {}
    violations_mean, violations_stderr = {}, {}
    for alg in algorithms:
        regret = np.stack([r.cum_regret for r in results if r.algorithm == alg])
        violations = np.stack(
            [r.cum_violations for r in results if r.algorithm == alg]
        ).astype(np.float64)
        regret_mean[alg], regret_stderr[alg] = _mean_stderr(regret)
        violations_mean[alg], violations_stderr[alg] = _mean_stderr(violations)
    return AggregateSeries(rounds.copy(), algorithms, regret_mean, regret_stderr,
                           violations_mean, violations_stderr)


# ---------------------------------------------------------------------------
# CSV and SVG emission


def write_runs_csv(results: list[RunResult], path: str | Path) -> None:
    """Write per-run checkpoint rows sorted by (algorithm, seed, t)."""
    ordered = sorted(results, key=lambda r: (r.algorithm, r.seed))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["algorithm", "seed", "t", "cum_regret", "cum_violations"])
    for res in ordered:
        for t, reg, vio in zip(res.rounds, res.cum_regret, res.cum_violations):
            writer.writerow([res.algorithm, res.seed, int(t), repr(float(reg)), int(vio)])
    Path(path).write_text(buf.getvalue())


def read_runs_csv(path: str | Path) -> list[RunResult]:
    try:
        text = Path(path).read_text()
    except FileNotFoundError as exc:
        raise InputContractError(f"runs file {path} does not exist") from exc
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != ["algorithm", "seed", "t", "cum_regret", "cum_violations"]:
        raise InputContractError(f"runs file {path}: unexpected header {header}")
    series: dict[tuple[str, int], list[tuple[int, float, int]]] = {}
    for row in reader:
        if len(row) != 5:
            raise InputContractError(f"runs file {path}: malformed row {row}")
        key = (row[0], int(row[1]))
        series.setdefault(key, []).append((int(row[2]), float(row[3]), int(row[4])))
    results = []
    for (alg, seed), rows in series.items():
        results.append(RunResult(
            algorithm=alg,
            seed=seed,
            rounds=np.asarray([r[0] for r in rows], dtype=np.int64),
            cum_regret=np.asarray([r[1] for r in rows], dtype=np.float64),
            cum_violations=np.asarray([r[2] for r in rows], dtype=np.int64),
        ))
    return results


def write_aggregate_csv(series: AggregateSeries, path: str | Path) -> None:
    """Write aggregate rows sorted by (algorithm, t); floats round-trip."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["algorithm", "t", "regret_mean", "regret_stderr",
                     "violations_mean", "violations_stderr"])
    for alg in series.algorithms:
        for i, t in enumerate(series.rounds):
            writer.writerow([
                alg, int(t),
                repr(float(series.regret_mean[alg][i])),
                repr(float(series.regret_stderr[alg][i])),
                repr(float(series.violations_mean[alg][i])),
                repr(float(series.violations_stderr[alg][i])),
            ])
    Path(path).write_text(buf.getvalue())


def read_aggregate_csv(path: str | Path) -> AggregateSeries:
    try:
        text = Path(path).read_text()
    except FileNotFoundError as exc:
        raise InputContractError(f"aggregate file {path} does not exist") from exc
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    expected = ["algorithm", "t", "regret_mean", "regret_stderr",
                "violations_mean", "violations_stderr"]
    if header != expected:
        raise InputContractError(f"aggregate file {path}: unexpected header {header}")
    per_alg: dict[str, list[list[float]]] = {}
    rounds_by_alg: dict[str, list[int]] = {}
    for row in reader:
        if len(row) != 6:
            raise InputContractError(f"aggregate file {path}: malformed row {row}")
        per_alg.setdefault(row[0], []).append([float(x) for x in row[2:]])
        rounds_by_alg.setdefault(row[0], []).append(int(row[1]))
    algorithms = tuple(sorted(per_alg))
    if not algorithms:
        raise InputContractError(f"aggregate file {path}: no data rows")
    rounds = np.asarray(rounds_by_alg[algorithms[0]], dtype=np.int64)
    for alg in algorithms:
        if rounds_by_alg[alg] != rounds.tolist():
            raise InputContractError(f"aggregate file {path}: inconsistent checkpoint grids")
    cols = {alg: np.asarray(per_alg[alg], dtype=np.float64) for alg in algorithms}
    return AggregateSeries(
        rounds=rounds,
        algorithms=algorithms,
        regret_mean={alg: cols[alg][:, 0] for alg in algorithms},
        regret_stderr={alg: cols[alg][:, 1] for alg in algorithms},
        violations_mean={alg: cols[alg][:, 2] for alg in algorithms},
        violations_stderr={alg: cols[alg][:, 3] for alg in algorithms},
    )


def _plot_metric(series: AggregateSeries, mean: dict, stderr: dict,
                 ylabel: str, path: Path) -> None:
    import matplotlib
    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    with plt.rc_context({"svg.hashsalt": "saferank"}):
        fig, ax = plt.subplots(figsize=(7.0, 4.5))
        for alg in series.algorithms:
            line, = ax.plot(series.rounds, mean[alg], label=alg, linewidth=1.6)
            ax.fill_between(series.rounds, mean[alg] - stderr[alg],
                            mean[alg] + stderr[alg], alpha=0.25,
                            color=line.get_color(), linewidth=0)
        ax.set_xlabel("round")
        ax.set_ylabel(ylabel)
        ax.legend()
        ax.grid(alpha=0.3)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def plot_series(series: AggregateSeries, out_dir: str | Path) -> list[Path]:
    """Render the regret and violation charts (mean line, +-1 stderr band)."""
    out_dir = Path(out_dir)
    regret_path = out_dir / REGRET_SVG
    violations_path = out_dir / VIOLATIONS_SVG
    _plot_metric(series, series.regret_mean, series.regret_stderr,
                 "cumulative expected regret", regret_path)
    _plot_metric(series, series.violations_mean, series.violations_stderr,
                 "cumulative safety violations", violations_path)
    return [regret_path, violations_path]


def run_and_emit(config: ExperimentConfig, out_dir: str | Path,
                 engine: str = "auto") -> list[RunResult]:
    """Run the experiment and write runs.csv, aggregate.csv, and both charts.

    The configuration and instance are fully validated before any
    simulation starts or any file is touched.
    """
    config.validate()
    resolve_instance(config)
    results = run_experiment(config, engine=engine)
    series = aggregate(results)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_runs_csv(results, out / RUNS_CSV)
    write_aggregate_csv(series, out / AGGREGATE_CSV)
    plot_series(series, out)
    return results
