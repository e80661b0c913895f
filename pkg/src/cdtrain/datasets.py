"""Dataset sources, normalization and deterministic train/validation splits.

Z-scoring uses statistics of the drawn subsample (population stddev), so
both split halves share one normalization.  The split takes the first
floor(fraction * subsample) indices of the already shuffled subsample.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .network import Batch, NetworkSpec, forward, init_network

SYNTHETIC_KINDS = ("linear", "teacher")

# Hidden width of the random relu teacher used by the "teacher" source.
_TEACHER_WIDTH = 32


@dataclass(frozen=True)
class CsvSource:
    path: str
    target_column: str


@dataclass(frozen=True)
class SyntheticSource:
    kind: str
    n_samples: int
    n_features: int
    noise_std: float = 0.0
    seed: int = 0
    n_targets: int = 1

    def __post_init__(self) -> None:
        if self.kind not in SYNTHETIC_KINDS:
            raise ValueError(f"unknown synthetic kind {self.kind!r}; expected one of {SYNTHETIC_KINDS}")
        if self.n_samples < 1 or self.n_features < 1 or self.n_targets < 1:
            raise ValueError("n_samples, n_features and n_targets must be >= 1")
        if self.noise_std < 0.0:
            raise ValueError("noise_std must be non-negative")


@dataclass(frozen=True)
class DatasetSpec:
    source: CsvSource | SyntheticSource
    subsample: int
    normalize: bool = True
    split_train_fraction: float = 0.7
    seed: int = 0

    def __post_init__(self) -> None:
        if self.subsample < 2:
            raise ValueError("subsample must be >= 2")
        if not 0.0 < self.split_train_fraction < 1.0:
            raise ValueError("split_train_fraction must lie in (0, 1)")

    def with_seed(self, seed: int) -> "DatasetSpec":
        """Copy with a new shuffle seed (and generation seed for synthetic data)."""
        spec = replace(self, seed=int(seed))
        if isinstance(self.source, SyntheticSource):
            spec = replace(spec, source=replace(self.source, seed=int(seed)))
        return spec


def _generate_synthetic(source: SyntheticSource) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(source.seed)
    x = rng.standard_normal((source.n_samples, source.n_features))
    if source.kind == "linear":
        w = rng.standard_normal((source.n_features, source.n_targets))
        y = x @ w / math.sqrt(source.n_features)
    else:
        teacher_spec = NetworkSpec(
            input_dim=source.n_features,
            output_dim=source.n_targets,
            hidden_widths=(_TEACHER_WIDTH,),
            activation="relu",
            init_scheme="ntk",
        )
        teacher = init_network(teacher_spec, source.seed + 1)
        y = forward(teacher, Batch(x, np.zeros(source.n_samples * source.n_targets)))
        y = y.reshape(source.n_samples, source.n_targets)
    if source.noise_std > 0.0:
        y = y + source.noise_std * rng.standard_normal(y.shape)
    return x, y


def _read_csv(path: str, target_column: str) -> tuple[np.ndarray, np.ndarray]:
    try:
        fh = open(path, newline="")
    except FileNotFoundError:
        raise FileNotFoundError(f"csv file not found: {path}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"csv file {path} is empty") from None
        if target_column not in header:
            raise ValueError(f"target column {target_column!r} not found; header has {header}")
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise ValueError(f"row {line_no}: expected {len(header)} fields, got {len(row)}")
            values = []
            for name, cell in zip(header, row):
                try:
                    values.append(float(cell))
                except ValueError:
                    raise ValueError(
                        f"non-numeric value {cell.strip()!r} at row {line_no}, column {name!r}"
                    ) from None
            rows.append(values)
    if not rows:
        raise ValueError(f"csv file {path} has no data rows")
    data = np.asarray(rows, dtype=np.float64)
    tgt = header.index(target_column)
    y = data[:, [tgt]]
    x = np.delete(data, tgt, axis=1)
    if x.shape[1] == 0:
        raise ValueError("csv file needs at least one feature column besides the target")
    return x, y


def _zscore_columns(m: np.ndarray, what: str) -> np.ndarray:
    mean = m.mean(axis=0)
    std = m.std(axis=0)
    flat = np.nonzero(std == 0.0)[0]
    if flat.size:
        raise ValueError(f"{what} column {int(flat[0])} is constant on the subsample; cannot z-score")
    return (m - mean) / std


def load_dataset(spec: DatasetSpec) -> tuple[Batch, Batch]:
    """Materialize, subsample, normalize and split into (train, val) batches.

    The subsample is drawn without replacement in shuffled order with
    spec.seed, so equal seeds give identical splits.
    """
    if isinstance(spec.source, SyntheticSource):
        x, y = _generate_synthetic(spec.source)
    else:
        x, y = _read_csv(spec.source.path, spec.source.target_column)
    n = x.shape[0]
    if spec.subsample > n:
        raise ValueError(f"subsample {spec.subsample} exceeds the {n} available samples")
    rng = np.random.default_rng(spec.seed)
    idx = rng.choice(n, size=spec.subsample, replace=False)
    x = x[idx]
    y = y[idx]
    if spec.normalize:
        x = _zscore_columns(x, "feature")
        y = _zscore_columns(y, "target")
    n_train = int(math.floor(spec.split_train_fraction * spec.subsample))
    if n_train < 1 or n_train >= spec.subsample:
        raise ValueError(
            f"split_train_fraction {spec.split_train_fraction} leaves an empty train or validation set"
        )
    train = Batch(x[:n_train], y[:n_train].ravel())
    val = Batch(x[n_train:], y[n_train:].ravel())
    return train, val
