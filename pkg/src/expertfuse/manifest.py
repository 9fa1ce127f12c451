"""Manifest-driven experiment runner.

A manifest is a JSON file naming a dataset source (synthetic config or
file paths), a list of strategies with their settings, and an output
directory. Running it produces one report JSON per strategy, a combined
tab-separated comparison table, frontier TSVs for sequential-search
sweeps, and PNG figures rendered from the same rows. All outputs are
computed first and written last (temp file + rename), so a failing run
leaves no partial report files, and reruns with the same seed are
byte-identical.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

from .dataio import (
    CostModel,
    Dataset,
    SynthConfig,
    TargetKind,
    format_float,
    generate_synthetic,
    load_dataset,
)
from .errors import InvalidConfig, IoFailure, UnknownStrategy
from .frugal import FrugalConfig, FuserKind, frugal_evaluate, train_fuser_bank
from .fusion import (
    ConfidenceStrategy,
    EnsembleStrategy,
    KnnStrategy,
    MetricsReport,
    MlpStrategy,
    OracleStrategy,
    SubsetMask,
    TrainConfig,
    evaluate,
    train_mlp_fuser,
)
from . import plots

SPEC_VERSION = 1
KNOWN_STRATEGIES = ("oracle", "ensemble", "confidence", "knn", "mlp", "frugal")


@dataclass(frozen=True)
class ExperimentManifest:
    """Parsed manifest: dataset source, strategy list, output location."""

    name: str
    seed: int
    dataset: dict
    strategies: tuple[dict, ...]
    output_dir: str

    def __post_init__(self):
        if not self.name:
            raise InvalidConfig("manifest needs a non-empty name")
        if "synth" not in self.dataset and "files" not in self.dataset:
            raise InvalidConfig("manifest dataset must give 'synth' or 'files'")
        labels = [strategy_label(s) for s in self.strategies]
        if len(set(labels)) != len(labels):
            raise InvalidConfig("strategy labels must be unique")
        for strategy in self.strategies:
            name = strategy.get("name")
            if name not in KNOWN_STRATEGIES:
                raise UnknownStrategy(f"unknown strategy '{name}'")

    @classmethod
    def from_json_file(cls, path) -> "ExperimentManifest":
        try:
            with open(path, "r", encoding="utf-8") as handle:
                obj = json.load(handle)
        except OSError as exc:
            raise IoFailure(f"cannot read {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise InvalidConfig(f"manifest is not valid JSON ({exc.msg})") from exc
        try:
            return cls(
                name=obj["name"],
                seed=int(obj.get("seed", 0)),
                dataset=obj["dataset"],
                strategies=tuple(obj.get("strategies", ())),
                output_dir=obj.get("output_dir", "out"),
            )
        except KeyError as exc:
            raise InvalidConfig(f"manifest missing required key {exc}") from exc


def strategy_label(strategy: dict) -> str:
    return strategy.get("label", strategy.get("name", "strategy"))


def _load_splits(manifest: ExperimentManifest) -> tuple[Dataset, Dataset, Dataset]:
    source = manifest.dataset
    if "synth" in source:
        raw = dict(source["synth"])
        as_expert = raw.pop("as_expert_target", False)
        raw.setdefault("seed", manifest.seed)
        if "samples_per_split" in raw:
            raw["samples_per_split"] = tuple(raw["samples_per_split"])
        if "mixture_weights" in raw:
            raw["mixture_weights"] = tuple(raw["mixture_weights"])
        config = SynthConfig(**raw)
        return generate_synthetic(config, as_expert_target=as_expert)
    files = source["files"]
    for key in ("train", "validation", "test"):
        if key not in files:
            raise InvalidConfig(f"dataset files must include '{key}'")
    return (
        load_dataset(files["train"]),
        load_dataset(files["validation"]),
        load_dataset(files["test"]),
    )


def _parse_subset(spec, num_experts: int) -> SubsetMask:
    if spec in (None, "all"):
        return SubsetMask.full(num_experts)
    if isinstance(spec, str):
        indices = [int(part) for part in spec.split(",") if part.strip()]
    else:
        indices = [int(part) for part in spec]
    return SubsetMask.from_indices(indices, num_experts)


def _train_config(strategy: dict, default_seed: int) -> TrainConfig:
    return TrainConfig(
        hidden_dims=tuple(strategy.get("hidden", (256, 256))),
        epochs=strategy.get("epochs", 50),
        batch_size=strategy.get("batch_size", 64),
        learning_rate=strategy.get("learning_rate", 1e-3),
        weight_decay=strategy.get("weight_decay", 1e-4),
        dropout=strategy.get("dropout", 0.5),
        seed=strategy.get("seed", default_seed),
    )


def _run_plain_strategy(
    strategy: dict,
    manifest: ExperimentManifest,
    train: Dataset,
    validation: Dataset,
    test: Dataset,
) -> MetricsReport:
    name = strategy["name"]
    k = test.schema.num_experts
    if name == "oracle":
        handle = OracleStrategy()
    elif name == "ensemble":
        handle = EnsembleStrategy()
    elif name == "confidence":
        handle = ConfidenceStrategy()
    elif name == "knn":
        handle = KnnStrategy(
            validation,
            kappa=strategy.get("kappa", 9),
            subset=_parse_subset(strategy.get("subset"), k),
        )
    elif name == "mlp":
        target = strategy.get("target")
        kind = TargetKind(target) if target else None
        fuser = train_mlp_fuser(
            train,
            _parse_subset(strategy.get("subset"), k),
            _train_config(strategy, manifest.seed),
            target_kind=kind,
        )
        handle = MlpStrategy(fuser)
    else:  # pragma: no cover - guarded by manifest validation
        raise UnknownStrategy(f"unknown strategy '{name}'")
    report = evaluate(handle, test, config_echo={"strategy_config": strategy})
    return report


def _run_frugal_strategy(
    strategy: dict,
    manifest: ExperimentManifest,
    train: Dataset,
    validation: Dataset,
    test: Dataset,
):
    """Run a sweep over the lambda grid; returns (per-lambda rows, reports)."""
    k = test.schema.num_experts
    if "costs" in strategy:
        costs = tuple(float(c) for c in strategy["costs"])
    else:
        costs = (float(strategy.get("cost", 0.01)),) * k
    grid = strategy.get("lambda_grid")
    if grid is None:
        grid = [strategy.get("lambda", 0.0)]
    fuser_kind = FuserKind(strategy.get("fuser", "knn"))
    bank = None
    max_queries = strategy.get("max_queries")
    if fuser_kind is FuserKind.MLP_BANK:
        if max_queries is None:
            max_queries = 5
        bank = train_fuser_bank(
            train,
            max_queries,
            _train_config(strategy, manifest.seed),
            TargetKind(strategy["target"]) if "target" in strategy else None,
        )
    rows = []
    reports = []
    for lam in grid:
        config = FrugalConfig(
            m_neighbors=strategy.get("m_neighbors", 15),
            kappa=strategy.get("kappa", 9),
            cost_model=CostModel(costs=costs, lam=float(lam)),
            fuser_kind=fuser_kind,
            max_queries=max_queries,
            stop_on_zero=strategy.get("stop_on_zero", False),
            subset_restricted_losses=strategy.get("subset_restricted", False),
        )
        report = frugal_evaluate(test, validation, config, bank=bank)
        reports.append(report)
        rows.append(
            {
                "lambda": float(lam),
                "mean_queried": report.mean_queried,
                "accuracy": report.final_accuracy,
            }
        )
    return rows, reports


def _comparison_line(columns) -> str:
    return "\t".join(columns)


def _atomic_write(path: Path, data: bytes) -> None:
    fd, temp = tempfile.mkstemp(dir=str(path.parent), prefix=".tmp-", suffix=path.suffix)
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(temp, path)
    except OSError as exc:
        if os.path.exists(temp):
            os.unlink(temp)
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def run_manifest(manifest: ExperimentManifest, output_dir: str | None = None) -> dict:
    """Execute every strategy and write reports, tables, and figures.

    Returns a summary dict with the written file paths and key metrics.
    """
    out = Path(output_dir or manifest.output_dir)
    train, validation, test = _load_splits(manifest)
    text_outputs: dict[str, str] = {}
    figure_jobs = []
    comparison_rows = []
    for strategy in manifest.strategies:
        label = strategy_label(strategy)
        if strategy["name"] == "frugal":
            rows, reports = _run_frugal_strategy(strategy, manifest, train, validation, test)
            frontier_lines = ["lambda\tmean_queried\taccuracy"]
            for row in rows:
                frontier_lines.append(
                    _comparison_line(
                        (
                            format_float(row["lambda"]),
                            format_float(row["mean_queried"]),
                            format_float(row["accuracy"]),
                        )
                    )
                )
            text_outputs[f"{label}.frontier.tsv"] = "\n".join(frontier_lines) + "\n"
            payload = {
                "spec_version": SPEC_VERSION,
                "experiment": manifest.name,
                "strategy": label,
                "seed": manifest.seed,
                "strategy_config": strategy,
                "sweep": [report.to_json_dict() for report in reports],
            }
            text_outputs[f"{label}.report.json"] = (
                json.dumps(payload, indent=2, sort_keys=True) + "\n"
            )
            figure_jobs.append(("frontier", rows, f"{label}.frontier.png"))
            for row, report in zip(rows, reports):
                comparison_rows.append(
                    {
                        "strategy": f"{label}@lambda={row['lambda']:g}",
                        "final_accuracy": report.final_accuracy,
                        "expert_selection_accuracy": report.expert_selection_accuracy,
                        "mean_queried": report.mean_queried,
                        "record_count": report.record_count,
                    }
                )
        else:
            report = _run_plain_strategy(strategy, manifest, train, validation, test)
            payload = {
                "spec_version": SPEC_VERSION,
                "experiment": manifest.name,
                "strategy": label,
                "seed": manifest.seed,
                "report": report.to_json_dict(),
            }
            text_outputs[f"{label}.report.json"] = (
                json.dumps(payload, indent=2, sort_keys=True) + "\n"
            )
            comparison_rows.append(
                {
                    "strategy": label,
                    "final_accuracy": report.final_accuracy,
                    "expert_selection_accuracy": report.expert_selection_accuracy,
                    "mean_queried": None,
                    "record_count": report.record_count,
                }
            )
    table_lines = [
        _comparison_line(
            ("strategy", "final_accuracy", "expert_selection_accuracy", "mean_queried", "record_count")
        )
    ]
    for row in comparison_rows:
        table_lines.append(
            _comparison_line(
                (
                    row["strategy"],
                    format_float(row["final_accuracy"]),
                    ""
                    if row["expert_selection_accuracy"] is None
                    else format_float(row["expert_selection_accuracy"]),
                    "" if row["mean_queried"] is None else format_float(row["mean_queried"]),
                    str(row["record_count"]),
                )
            )
        )
    text_outputs["comparison.tsv"] = "\n".join(table_lines) + "\n"
    figure_jobs.append(("comparison", comparison_rows, "comparison.png"))

    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create output directory {out}: {exc}") from exc
    written = []
    for filename, content in text_outputs.items():
        _atomic_write(out / filename, content.encode("utf-8"))
        written.append(str(out / filename))
    for kind, rows, filename in figure_jobs:
        if not rows:
            continue
        if kind == "frontier":
            plots.render_frontier(rows, out / filename)
        else:
            plots.render_comparison(rows, out / filename)
        written.append(str(out / filename))
    return {
        "experiment": manifest.name,
        "output_dir": str(out),
        "files": written,
        "comparison": comparison_rows,
    }
