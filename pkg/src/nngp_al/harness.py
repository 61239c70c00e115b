"""End-to-end active-learning experiments.

Covers dataset ingestion (CSV or synthetic oracles), the shuffled-fraction
split protocol, the iterate / train / acquire / annotate loop, error metrics
in original target units, and Dolan-More performance profiles.
"""

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from . import acquisition, nn_core
from .errors import IngestionError, TrainingDivergedError, UsageError
from .seeding import derive_rng

_TAG_SPLIT = 43
_TAG_SAMPLE = 47
_TAG_NOISE = 53
_TAG_INIT = 59
_TAG_ANCHOR = 61

_MASK63 = (1 << 63) - 1


def _mix(*parts: int) -> int:
    """Deterministic integer key mixing for per-iteration sub-seeds."""
    val = 0
    for p in parts:
        val = (val * 1_000_003 + (int(p) & _MASK63)) & _MASK63
    return val


# ---------------------------------------------------------------------------
# datasets and splits


@dataclass
class Dataset:
    """Standardized feature/target arrays plus the stats to invert them."""

    features: np.ndarray
    targets: np.ndarray
    feature_names: tuple[str, ...]
    feature_mean: np.ndarray
    feature_std: np.ndarray
    target_mean: float
    target_std: float
    constant_features: tuple[int, ...] = ()
    dropped_rows: int = 0

    def __len__(self) -> int:
        return self.targets.shape[0]

    def destandardize_targets(self, z):
        return np.asarray(z) * self.target_std + self.target_mean

    def standardize_targets(self, y):
        return (np.asarray(y) - self.target_mean) / self.target_std


def _standardize_columns(values: np.ndarray):
    mean = values.mean(axis=0)
    std = values.std(axis=0)
    constant = np.flatnonzero(std == 0.0)
    safe_std = np.where(std == 0.0, 1.0, std)
    return (values - mean) / safe_std, mean, safe_std, tuple(int(j) for j in constant)


def load_csv(path, target_column: str, exclude=()) -> Dataset:
    """Load a headered CSV, dropping rows with missing or unparseable cells.

    Features and target are standardized; per-column stats are retained so
    metrics can be reported in original units. Constant feature columns are
    kept (standardized to all zeros) and flagged.
    """
    try:
        frame = pd.read_csv(path)
    except FileNotFoundError:
        raise IngestionError(f"dataset file not found: {path}") from None
    if target_column not in frame.columns:
        raise IngestionError(f"target column {target_column!r} not in {list(frame.columns)}")
    frame = frame.drop(columns=[c for c in exclude if c in frame.columns])
    frame = frame.apply(pd.to_numeric, errors="coerce")
    n_raw = len(frame)
    frame = frame.dropna()
    dropped = n_raw - len(frame)
    if len(frame) == 0:
        raise IngestionError(f"no usable rows in {path} ({dropped} dropped)")

    target = frame[target_column].to_numpy(dtype=float)
    feature_frame = frame.drop(columns=[target_column])
    if feature_frame.shape[1] == 0:
        raise IngestionError("dataset has no feature columns")
    features = feature_frame.to_numpy(dtype=float)
    features_std, f_mean, f_std, constant = _standardize_columns(features)
    t_std = target.std()
    t_std = t_std if t_std > 0 else 1.0
    t_mean = target.mean()
    return Dataset(
        features=features_std,
        targets=(target - t_mean) / t_std,
        feature_names=tuple(feature_frame.columns),
        feature_mean=f_mean,
        feature_std=f_std,
        target_mean=float(t_mean),
        target_std=float(t_std),
        constant_features=constant,
        dropped_rows=dropped,
    )


@dataclass(frozen=True)
class Splits:
    """Disjoint row-index sets covering the whole dataset."""

    train: np.ndarray
    test: np.ndarray
    val: np.ndarray
    pool: np.ndarray


def split(dataset, fractions=(0.10, 0.05, 0.05, 0.80), seed: int = 0) -> Splits:
    """Seeded shuffle, then contiguous train/test/val assignment; remainder
    rows go to the pool."""
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 4:
        raise UsageError("fractions must be (train, test, val, pool)")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise UsageError(f"fractions must sum to 1, got {sum(fractions)}")
    n = len(dataset)
    perm = derive_rng(seed, _TAG_SPLIT).permutation(n)
    n_train = int(fractions[0] * n)
    n_test = int(fractions[1] * n)
    n_val = int(fractions[2] * n)
    cuts = np.cumsum([n_train, n_test, n_val])
    parts = np.split(perm, cuts)
    splits = Splits(train=parts[0], test=parts[1], val=parts[2], pool=parts[3])
    for name in ("train", "test", "val", "pool"):
        if getattr(splits, name).size == 0:
            raise UsageError(f"{name} split is empty for n={n}, fractions={fractions}")
    return splits


# ---------------------------------------------------------------------------
# annotation oracles


def _branin(x):
    x1, x2 = x[:, 0], x[:, 1]
    return (
        (x2 - 5.1 / (4 * np.pi**2) * x1**2 + 5 / np.pi * x1 - 6) ** 2
        + 10 * (1 - 1 / (8 * np.pi)) * np.cos(x1)
        + 10
    )


def _friedman1(x):
    return (
        10 * np.sin(np.pi * x[:, 0] * x[:, 1])
        + 20 * (x[:, 2] - 0.5) ** 2
        + 10 * x[:, 3]
        + 5 * x[:, 4]
    )


def _multimodal(x):
    x1, x2 = x[:, 0], x[:, 1]
    bump = 1.5 * np.exp(-20.0 * ((x1 - 0.75) ** 2 + (x2 - 0.75) ** 2))
    return np.sin(4 * np.pi * x1) * np.cos(4 * np.pi * x2) + bump


SYNTHETIC_FUNCTIONS = {
    "branin-2d": (_branin, [[-5.0, 10.0], [0.0, 15.0]]),
    "friedman1-5d": (_friedman1, [[0.0, 1.0]] * 5),
    "multimodal-2d": (_multimodal, [[0.0, 1.0]] * 2),
}


@dataclass(frozen=True)
class SyntheticOracle:
    """Analytic target function with per-point frozen Gaussian noise.

    The noise draw depends only on (oracle seed, point id), so re-annotating
    the same point always returns the same value.
    """

    name: str
    noise_sigma: float
    seed: int

    @property
    def fn(self):
        return SYNTHETIC_FUNCTIONS[self.name][0]

    @property
    def box(self) -> np.ndarray:
        return np.asarray(SYNTHETIC_FUNCTIONS[self.name][1], dtype=float)

    @property
    def input_dim(self) -> int:
        return self.box.shape[0]

    def sample_inputs(self, n: int, rng) -> np.ndarray:
        box = self.box
        return rng.uniform(box[:, 0], box[:, 1], size=(n, self.input_dim))

    def query(self, x, ids) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.input_dim:
            raise UsageError(f"{self.name} expects {self.input_dim} inputs, got {x.shape[1]}")
        y = self.fn(x).astype(float)
        if self.noise_sigma > 0.0:
            noise = np.array(
                [derive_rng(self.seed, _TAG_NOISE, pid).standard_normal() for pid in ids]
            )
            y = y + self.noise_sigma * noise
        return y


def make_synthetic_oracle(name: str, noise_sigma: float = 0.0, seed: int = 0) -> SyntheticOracle:
    if name not in SYNTHETIC_FUNCTIONS:
        raise UsageError(f"unknown oracle {name!r}; available: {sorted(SYNTHETIC_FUNCTIONS)}")
    if noise_sigma < 0:
        raise UsageError("noise_sigma must be >= 0")
    return SyntheticOracle(name=name, noise_sigma=noise_sigma, seed=seed)


# ---------------------------------------------------------------------------
# metrics and performance profiles


def metrics(predictions, truths) -> tuple[float, float, float]:
    """(rmse, mae, max_error) between equal-length prediction/truth vectors."""
    predictions = np.asarray(predictions, dtype=float)
    truths = np.asarray(truths, dtype=float)
    if predictions.shape != truths.shape or predictions.ndim != 1:
        raise UsageError("predictions and truths must be equal-length vectors")
    if predictions.size == 0:
        raise UsageError("metrics need at least one pair")
    diff = np.abs(predictions - truths)
    return (
        float(np.sqrt(np.mean(diff**2))),
        float(np.mean(diff)),
        float(np.max(diff)),
    )


@dataclass(frozen=True)
class DolanMoreTable:
    """Performance ratios and profile curves over a tau grid."""

    errors: np.ndarray  # (problems, algorithms)
    ratios: np.ndarray
    tau_grid: np.ndarray
    rho: np.ndarray  # (algorithms, len(tau_grid))
    algorithms: tuple[str, ...] = ()


def dolan_more(errors, tau_grid, algorithms=()) -> DolanMoreTable:
    """Performance profile: per-problem ratios to the best algorithm and the
    fraction of problems within each factor tau."""
    errors = np.asarray(errors, dtype=float)
    if errors.ndim != 2 or errors.shape[0] < 1 or errors.shape[1] < 2:
        raise UsageError("need a (problems x algorithms) matrix with >= 2 algorithms")
    if np.any(errors <= 0) or not np.all(np.isfinite(errors)):
        raise UsageError("errors must be finite and strictly positive")
    tau_grid = np.asarray(tau_grid, dtype=float)
    ratios = errors / errors.min(axis=1, keepdims=True)
    rho = np.stack([(ratios[:, a][:, None] <= tau_grid[None, :]).mean(axis=0)
                    for a in range(errors.shape[1])])
    return DolanMoreTable(
        errors=errors, ratios=ratios, tau_grid=tau_grid, rho=rho,
        algorithms=tuple(algorithms),
    )


# ---------------------------------------------------------------------------
# the active-learning loop


@dataclass
class Problem:
    """Materialized experiment instance: standardized data plus an annotator."""

    name: str
    features: np.ndarray  # standardized
    targets: np.ndarray  # standardized; NaN where not yet annotated
    splits: Splits
    target_mean: float
    target_std: float
    annotate: object  # callable(row indices) -> standardized targets

    def destandardize(self, z):
        return np.asarray(z) * self.target_std + self.target_mean


def problem_from_dataset(dataset: Dataset, splits: Splits, name: str = "csv") -> Problem:
    def annotate(rows):
        return dataset.targets[np.asarray(rows, dtype=int)]

    return Problem(
        name=name,
        features=dataset.features,
        targets=dataset.targets.copy(),
        splits=splits,
        target_mean=dataset.target_mean,
        target_std=dataset.target_std,
        annotate=annotate,
    )


def problem_from_oracle(
    oracle: SyntheticOracle, sizes: dict, seed: int, name: str | None = None
) -> Problem:
    """Sample inputs uniformly in the oracle's box and annotate the labeled
    splits. Target stats come from the initially labeled points only."""
    n_train, n_val = int(sizes["train"]), int(sizes["val"])
    n_test, n_pool = int(sizes["test"]), int(sizes["pool"])
    for key in ("train", "val", "test", "pool"):
        if int(sizes[key]) < 1:
            raise UsageError(f"synthetic size {key!r} must be >= 1")
    n_total = n_train + n_val + n_test + n_pool
    raw = oracle.sample_inputs(n_total, derive_rng(seed, _TAG_SAMPLE))
    bounds = np.arange(n_total)
    splits = Splits(
        train=bounds[:n_train],
        val=bounds[n_train : n_train + n_val],
        test=bounds[n_train + n_val : n_train + n_val + n_test],
        pool=bounds[n_train + n_val + n_test :],
    )
    features, _, _, _ = _standardize_columns(raw)
    labeled = np.concatenate([splits.train, splits.val])
    y_labeled = oracle.query(raw[labeled], labeled)
    t_mean = float(y_labeled.mean())
    t_std = float(y_labeled.std())
    t_std = t_std if t_std > 0 else 1.0

    targets = np.full(n_total, np.nan)

    def annotate(rows):
        rows = np.asarray(rows, dtype=int)
        return (oracle.query(raw[rows], rows) - t_mean) / t_std

    targets[labeled] = (y_labeled - t_mean) / t_std
    targets[splits.test] = annotate(splits.test)
    return Problem(
        name=name or oracle.name,
        features=features,
        targets=targets,
        splits=splits,
        target_mean=t_mean,
        target_std=t_std,
        annotate=annotate,
    )


@dataclass
class RunRecord:
    """Per-iteration metrics and acquisition diagnostics for one run."""

    config: dict
    strategy: str
    seed: int
    entries: list[dict] = field(default_factory=list)
    aborted: bool = False
    pool_exhausted: bool = False
    error: str | None = None


def _network_from_config(net_cfg, input_dim: int, seed: int) -> nn_core.Network:
    dims = [input_dim, *net_cfg.hidden, 1]
    specs = [
        nn_core.LayerSpec(dims[i], dims[i + 1], nn_core.LEAKY_RELU, net_cfg.activation_slope)
        for i in range(len(dims) - 2)
    ]
    specs.append(nn_core.LayerSpec(dims[-2], 1, nn_core.IDENTITY))
    return nn_core.init_network(specs, net_cfg.dropout, seed)


def build_problem(experiment, seed: int) -> Problem:
    """Materialize the experiment's dataset or synthetic oracle for one seed."""
    if experiment.dataset is not None:
        ds_cfg = experiment.dataset
        dataset = load_csv(ds_cfg.path, ds_cfg.target, ds_cfg.exclude)
        splits_ = split(dataset, ds_cfg.fractions, seed)
        return problem_from_dataset(dataset, splits_, name=experiment.output.name)
    oc = experiment.oracle
    oracle = make_synthetic_oracle(oc.name, oc.noise_sigma, _mix(seed, 7))
    sizes = {"train": oc.train, "val": oc.val, "test": oc.test, "pool": oc.pool}
    return problem_from_oracle(oracle, sizes, seed)


def run_active_learning(run_cfg) -> RunRecord:
    """Run the full iterate-train-acquire-annotate loop for one strategy/seed.

    Entry i reports metrics for the model trained on the train set after i
    acquisitions; every entry except the last also records the acquisition
    that followed. Training divergence aborts the run but keeps the entries
    collected so far.
    """
    exp = run_cfg.experiment
    seed = run_cfg.seed
    strategy = acquisition.Strategy(run_cfg.strategy)
    problem = build_problem(exp, seed)
    n_features = problem.features.shape[1]

    net = _network_from_config(exp.network, n_features, _mix(seed, _TAG_INIT))
    train_idx = list(problem.splits.train)
    pool_idx = list(problem.splits.pool)
    x_val = problem.features[problem.splits.val]
    y_val = problem.targets[problem.splits.val]
    x_test = problem.features[problem.splits.test]
    y_test_raw = problem.destandardize(problem.targets[problem.splits.test])

    acq_cfg = exp.acquisition
    record = RunRecord(
        config=run_cfg.to_dict(),
        strategy=strategy.value,
        seed=seed,
    )

    final_pass_only = False
    for iteration in range(exp.loop.n_iter + 1):
        t0 = time.perf_counter()
        train_cfg = exp.training.to_train_config(seed=_mix(seed, 100, iteration))
        if iteration > 0 and not exp.training.warm_start:
            net = _network_from_config(exp.network, n_features, _mix(seed, _TAG_INIT, iteration))
        x_train = problem.features[train_idx]
        y_train = problem.targets[train_idx]
        try:
            report = nn_core.train(net, (x_train, y_train), (x_val, y_val), train_cfg)
        except TrainingDivergedError as err:
            record.aborted = True
            record.error = f"iteration {iteration}: {err}"
            break

        preds_raw = problem.destandardize(nn_core.forward_batch(net, x_test))
        rmse, mae, max_error = metrics(preds_raw, y_test_raw)
        entry = {
            "iteration": iteration,
            "train_size": len(train_idx),
            "rmse": rmse,
            "mae": mae,
            "maxerr": max_error,
            "epochs_run": report.epochs_run,
            "stop_reason": report.stop_reason,
            "val_rmse": report.final_val_rmse,
        }

        if iteration < exp.loop.n_iter and not final_pass_only:
            anchor_rng = derive_rng(seed, _TAG_ANCHOR, iteration)
            anchor_rows = anchor_rng.choice(
                train_idx, size=min(len(train_idx), acq_cfg.anchor_size), replace=False
            )
            request = acquisition.AcquisitionRequest(
                strategy=strategy,
                batch_size=acq_cfg.batch_size,
                passes=acq_cfg.passes,
                dropout=acq_cfg.dropout if acq_cfg.dropout is not None else exp.network.dropout,
                ridge=acq_cfg.ridge,
                anchor_size=acq_cfg.anchor_size,
                steps=acq_cfg.steps if strategy == acquisition.Strategy.MSTEP_NNGP else 1,
                seed=_mix(seed, 500, iteration),
                selection=acq_cfg.selection,
                rank_one=acq_cfg.rank_one,
            )
            result = acquisition.acquire(
                net, problem.features[pool_idx], problem.features[anchor_rows], request
            )
            chosen_rows = [pool_idx[j] for j in result.selected]
            problem.targets[chosen_rows] = problem.annotate(chosen_rows)
            train_idx.extend(chosen_rows)
            chosen_set = set(chosen_rows)
            pool_idx = [r for r in pool_idx if r not in chosen_set]
            entry["acquisition"] = {
                "strategy": strategy.value,
                "seed": request.seed,
                "selected": [int(r) for r in chosen_rows],
                "scores": result.scores,
                "diagnostics": result.diagnostics,
                "exhausted": result.exhausted,
            }
            if not pool_idx:
                # absorb the last batch with one more train/evaluate, then stop
                record.pool_exhausted = True
                final_pass_only = True
        entry["wall_time"] = time.perf_counter() - t0
        record.entries.append(entry)
        if final_pass_only and "acquisition" not in entry:
            break

    return record


# ---------------------------------------------------------------------------
# run-record persistence (JSON lines, deterministic bytes)


def _scrub_timing(obj):
    if isinstance(obj, dict):
        return {k: _scrub_timing(v) for k, v in obj.items() if k != "wall_time"}
    if isinstance(obj, list):
        return [_scrub_timing(v) for v in obj]
    return obj


def _json_line(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def record_to_lines(record: RunRecord, record_timings: bool = False) -> list[str]:
    """Serialize a run record: header line, one line per iteration, summary.

    Timing fields are volatile and are stripped unless explicitly requested,
    keeping fixed-seed reruns byte-identical.
    """
    header = {"type": "run", "strategy": record.strategy, "seed": record.seed,
              "config": record.config}
    lines = [_json_line(header)]
    for entry in record.entries:
        payload = dict(entry, type="iteration")
        if not record_timings:
            payload = _scrub_timing(payload)
        lines.append(_json_line(payload))
    lines.append(_json_line({
        "type": "summary",
        "aborted": record.aborted,
        "pool_exhausted": record.pool_exhausted,
        "error": record.error,
        "iterations": len(record.entries),
    }))
    return lines


def write_record(record: RunRecord, path, record_timings: bool = False) -> None:
    with open(path, "w") as fh:
        for line in record_to_lines(record, record_timings):
            fh.write(line + "\n")


def read_record(path) -> RunRecord:
    with open(path) as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    if not lines or lines[0].get("type") != "run":
        raise UsageError(f"{path} is not a run record")
    header = lines[0]
    entries = [dict(l) for l in lines[1:] if l.get("type") == "iteration"]
    for e in entries:
        e.pop("type", None)
    summary = next((l for l in lines[1:] if l.get("type") == "summary"), {})
    return RunRecord(
        config=header.get("config", {}),
        strategy=header["strategy"],
        seed=header["seed"],
        entries=entries,
        aborted=summary.get("aborted", False),
        pool_exhausted=summary.get("pool_exhausted", False),
        error=summary.get("error"),
    )


def record_curve_rows(record: RunRecord) -> list[dict]:
    return [
        {
            "iteration": e["iteration"],
            "strategy": record.strategy,
            "seed": record.seed,
            "rmse": e["rmse"],
            "mae": e["mae"],
            "maxerr": e["maxerr"],
        }
        for e in record.entries
    ]
