"""JSON experiment configuration: one flat document describing a sweep.

The file holds a ``dataset`` section, an ``architectures`` list and plan
scalars (see the shipped ``configs/example.json``).  Architecture entries
omit input and output dimensions; they are resolved from the dataset.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

from .datasets import CsvSource, DatasetSpec, SyntheticSource
from .experiments import ExperimentPlan
from .network import NetworkSpec

_DATASET_KEYS = {
    "source",
    "kind",
    "n_samples",
    "n_features",
    "n_targets",
    "noise_std",
    "path",
    "target_column",
    "subsample",
    "normalize",
    "split_train_fraction",
    "seed",
}
_ARCH_KEYS = {"hidden_widths", "activation", "sigma_w", "sigma_b", "init_scheme", "use_bias"}
_PLAN_KEYS = {
    "dataset",
    "architectures",
    "alphas",
    "methods",
    "n_seeds",
    "steps",
    "loss",
    "q_weight",
    "p",
    "decay_coeff",
    "divergence_threshold",
    "master_seed",
    "dare_tol",
    "dare_max_iters",
    "snapshot_interval",
    "sample_trace_count",
    "out_dir",
}


def _reject_unknown(section: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ValueError(f"unknown {where} keys: {unknown}")


def _peek_csv_dims(path: str, target_column: str) -> tuple[int, int]:
    with open(path, newline="") as fh:
        try:
            header = [h.strip() for h in next(csv.reader(fh))]
        except StopIteration:
            raise ValueError(f"csv file {path} is empty") from None
    if target_column not in header:
        raise ValueError(f"target column {target_column!r} not found; header has {header}")
    return len(header) - 1, 1


def _parse_dataset(section: dict, base_dir: Path) -> tuple[DatasetSpec, int, int]:
    _reject_unknown(section, _DATASET_KEYS, "dataset")
    kind = section.get("source", "synthetic")
    if kind == "synthetic":
        source = SyntheticSource(
            kind=section.get("kind", "linear"),
            n_samples=int(section["n_samples"]),
            n_features=int(section["n_features"]),
            noise_std=float(section.get("noise_std", 0.0)),
            seed=int(section.get("seed", 0)),
            n_targets=int(section.get("n_targets", 1)),
        )
        dims = (source.n_features, source.n_targets)
    elif kind == "csv":
        path = str(section["path"])
        if not Path(path).is_absolute():
            path = str(base_dir / path)
        source = CsvSource(path=path, target_column=str(section["target_column"]))
        dims = _peek_csv_dims(path, source.target_column)
    else:
        raise ValueError(f"unknown dataset source {kind!r}; expected 'synthetic' or 'csv'")
    spec = DatasetSpec(
        source=source,
        subsample=int(section["subsample"]),
        normalize=bool(section.get("normalize", True)),
        split_train_fraction=float(section.get("split_train_fraction", 0.7)),
        seed=int(section.get("seed", 0)),
    )
    return spec, dims[0], dims[1]


def _parse_architecture(entry: dict, n_features: int, n_targets: int) -> NetworkSpec:
    _reject_unknown(entry, _ARCH_KEYS, "architecture")
    kwargs = {}
    for key in ("activation", "init_scheme"):
        if key in entry:
            kwargs[key] = str(entry[key])
    for key in ("sigma_w", "sigma_b"):
        if key in entry:
            kwargs[key] = float(entry[key])
    if "use_bias" in entry:
        kwargs["use_bias"] = bool(entry["use_bias"])
    return NetworkSpec(
        input_dim=n_features,
        output_dim=n_targets,
        hidden_widths=tuple(int(w) for w in entry.get("hidden_widths", ())),
        **kwargs,
    )


def load_plan(
    path: str | Path,
    seed_override: int | None = None,
    out_dir_override: str | None = None,
) -> ExperimentPlan:
    """Parse a JSON config file into an ExperimentPlan.

    ``seed_override`` replaces the master seed; ``out_dir_override`` the
    output directory.  Relative csv paths resolve against the config file.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise FileNotFoundError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValueError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ValueError("config root must be a JSON object")
    _reject_unknown(raw, _PLAN_KEYS, "config")
    if "dataset" not in raw or "architectures" not in raw or "alphas" not in raw:
        raise ValueError("config needs 'dataset', 'architectures' and 'alphas'")
    dataset, n_features, n_targets = _parse_dataset(dict(raw["dataset"]), path.parent)
    archs = [_parse_architecture(dict(a), n_features, n_targets) for a in raw["architectures"]]
    if "steps" not in raw:
        raise ValueError("config needs 'steps' (no default training length is assumed)")
    plan = ExperimentPlan(
        dataset=dataset,
        architectures=archs,
        alphas=[float(a) for a in raw["alphas"]],
        methods=tuple(raw.get("methods", ("gd", "cdt"))),
        n_seeds=int(raw.get("n_seeds", 10)),
        steps=int(raw["steps"]),
        loss=str(raw.get("loss", "mse")),
        q_weight=float(raw.get("q_weight", 1.0)),
        p=float(raw.get("p", 0.1)),
        decay_coeff=float(raw.get("decay_coeff", 0.01)),
        divergence_threshold=float(raw.get("divergence_threshold", 1e12)),
        master_seed=int(raw.get("master_seed", 0)),
        dare_tol=float(raw.get("dare_tol", 1e-10)),
        dare_max_iters=int(raw.get("dare_max_iters", 100000)),
        snapshot_interval=int(raw.get("snapshot_interval", 1)),
        sample_trace_count=int(raw.get("sample_trace_count", 4)),
        out_dir=str(raw.get("out_dir", "results")),
    )
    if seed_override is not None:
        plan.master_seed = int(seed_override)
    if out_dir_override is not None:
        plan.out_dir = str(out_dir_override)
    for value in plan.alphas:
        if not math.isfinite(value):
            raise ValueError("alphas must be finite")
    return plan
