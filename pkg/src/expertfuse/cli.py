"""Command-line entry point.

Subcommands: ``synth`` (generate a synthetic mixture), ``train-fuser``,
``eval`` (baselines and trained fusers), ``frugal`` (budgeted sequential
search with frontier output), ``analyze`` (selectability diagnostics),
and ``run`` (manifest-driven experiment). Every failure exits nonzero
with a single machine-parsable line ``error:<Kind>:<detail>`` on stderr;
the exit code identifies the error kind (see README).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .analysis import estimate_fano_inputs, fano_lower_bound
from .dataio import (
    CostModel,
    SynthConfig,
    TargetKind,
    format_float,
    generate_synthetic,
    load_dataset,
    save_dataset,
)
from .errors import ExpertFuseError, InvalidConfig
from .frugal import FrugalConfig, FuserKind, frugal_evaluate, train_fuser_bank
from .fusion import (
    ConfidenceStrategy,
    EnsembleStrategy,
    KnnStrategy,
    MlpStrategy,
    OracleStrategy,
    SubsetMask,
    TrainConfig,
    evaluate,
    load_fuser,
    save_fuser,
    train_mlp_fuser,
)
from .manifest import SPEC_VERSION, ExperimentManifest, run_manifest
from . import plots


def _csv_floats(text: str) -> tuple[float, ...]:
    return tuple(float(part) for part in text.split(",") if part.strip())


def _csv_ints(text: str) -> tuple[int, ...]:
    return tuple(int(part) for part in text.split(",") if part.strip())


def _subset_from_flag(value: str | None, num_experts: int) -> SubsetMask:
    if value in (None, "all"):
        return SubsetMask.full(num_experts)
    return SubsetMask.from_indices(_csv_ints(value), num_experts)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="expertfuse",
        description="Fuse complementary expert outputs; query experts frugally.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic domain mixture")
    p_synth.add_argument("--num-domains", type=int, required=True)
    p_synth.add_argument("--num-classes", type=int, required=True)
    p_synth.add_argument("--mixture-weights", type=_csv_floats, default=None)
    p_synth.add_argument("--in-domain-accuracy", type=float, default=0.9)
    p_synth.add_argument("--off-domain-accuracy", type=float, default=0.55)
    p_synth.add_argument("--confusion-temperature", type=float, default=1.0)
    p_synth.add_argument("--off-domain-flatness", type=float, default=2.0)
    p_synth.add_argument("--samples-per-split", type=_csv_ints, default=(1000, 500, 1000))
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--as-expert-target", action="store_true")
    p_synth.add_argument("--out-dir", required=True)

    p_train = sub.add_parser("train-fuser", help="train an MLP fuser")
    p_train.add_argument("--train", required=True)
    p_train.add_argument("--subset", default="all")
    p_train.add_argument("--target", choices=["class", "expert"], default=None)
    p_train.add_argument("--epochs", type=int, default=50)
    p_train.add_argument("--hidden", type=_csv_ints, default=(256, 256))
    p_train.add_argument("--batch-size", type=int, default=64)
    p_train.add_argument("--learning-rate", type=float, default=1e-3)
    p_train.add_argument("--weight-decay", type=float, default=1e-4)
    p_train.add_argument("--dropout", type=float, default=0.5)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--out", required=True)

    p_eval = sub.add_parser("eval", help="evaluate a fusion strategy")
    p_eval.add_argument(
        "--strategy",
        required=True,
        choices=["mlp", "knn", "ensemble", "confidence", "oracle"],
    )
    p_eval.add_argument("--test", required=True)
    p_eval.add_argument("--fuser", default=None, help="fuser JSON (mlp strategy)")
    p_eval.add_argument("--validation", default=None, help="store (knn strategy)")
    p_eval.add_argument("--kappa", type=int, default=9)
    p_eval.add_argument("--subset", default="all")
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--json-out", default=None)

    p_frugal = sub.add_parser("frugal", help="budgeted sequential expert selection")
    p_frugal.add_argument("--validation", required=True)
    p_frugal.add_argument("--test", required=True)
    p_frugal.add_argument("--lambda", dest="lam", type=float, default=0.0)
    p_frugal.add_argument(
        "--lambda-grid", type=_csv_floats, default=None, help="sweep instead of one value"
    )
    p_frugal.add_argument("--m-neighbors", type=int, default=15)
    p_frugal.add_argument("--kappa", type=int, default=9)
    p_frugal.add_argument("--cost", type=float, default=0.01)
    p_frugal.add_argument("--costs", type=_csv_floats, default=None)
    p_frugal.add_argument("--fuser", choices=["knn", "mlp-bank"], default="knn")
    p_frugal.add_argument("--train", default=None, help="train split (mlp-bank fuser)")
    p_frugal.add_argument("--epochs", type=int, default=50)
    p_frugal.add_argument("--max-queries", type=int, default=None)
    p_frugal.add_argument("--stop-on-zero", action="store_true")
    p_frugal.add_argument("--subset-restricted", action="store_true")
    p_frugal.add_argument("--seed", type=int, default=0)
    p_frugal.add_argument("--out-dir", required=True)
    p_frugal.add_argument("--label", default="frugal")

    p_analyze = sub.add_parser("analyze", help="selectability diagnostics")
    p_analyze.add_argument("--fano", action="store_true", required=True)
    p_analyze.add_argument("--validation", required=True)
    p_analyze.add_argument("--json", action="store_true")
    p_analyze.add_argument("--seed", type=int, default=0)

    p_run = sub.add_parser("run", help="run a manifest-driven experiment")
    p_run.add_argument("--manifest", required=True)
    p_run.add_argument("--output-dir", default=None)
    p_run.add_argument("--seed", type=int, default=None, help="override manifest seed")

    return parser


def _cmd_synth(args) -> int:
    config = SynthConfig(
        num_domains=args.num_domains,
        num_classes=args.num_classes,
        mixture_weights=args.mixture_weights or (),
        in_domain_accuracy=args.in_domain_accuracy,
        off_domain_accuracy=args.off_domain_accuracy,
        confusion_temperature=args.confusion_temperature,
        off_domain_flatness=args.off_domain_flatness,
        samples_per_split=args.samples_per_split,
        seed=args.seed,
    )
    splits = generate_synthetic(config, as_expert_target=args.as_expert_target)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for split, name in zip(splits, ("train", "validation", "test")):
        save_dataset(split, out / f"{name}.jsonl")
        print(f"wrote {out / f'{name}.jsonl'} ({len(split)} records)")
    return 0


def _cmd_train_fuser(args) -> int:
    train = load_dataset(args.train)
    subset = _subset_from_flag(args.subset, train.schema.num_experts)
    hyper = TrainConfig(
        hidden_dims=args.hidden,
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        weight_decay=args.weight_decay,
        dropout=args.dropout,
        seed=args.seed,
    )
    kind = TargetKind(args.target) if args.target else None
    fuser = train_mlp_fuser(train, subset, hyper, target_kind=kind)
    save_fuser(fuser, args.out)
    print(
        f"trained fuser on {len(train)} records "
        f"(final loss {format_float(fuser.train_report.final_loss)}); wrote {args.out}"
    )
    return 0


def _cmd_eval(args) -> int:
    test = load_dataset(args.test)
    k = test.schema.num_experts
    if args.strategy == "oracle":
        handle = OracleStrategy()
    elif args.strategy == "ensemble":
        handle = EnsembleStrategy()
    elif args.strategy == "confidence":
        handle = ConfidenceStrategy()
    elif args.strategy == "knn":
        if not args.validation:
            raise InvalidConfig("knn strategy needs --validation")
        handle = KnnStrategy(
            load_dataset(args.validation),
            kappa=args.kappa,
            subset=_subset_from_flag(args.subset, k),
        )
    else:
        if not args.fuser:
            raise InvalidConfig("mlp strategy needs --fuser")
        handle = MlpStrategy(load_fuser(args.fuser))
    report = evaluate(handle, test)
    print(f"strategy\t{report.strategy}")
    print(f"records\t{report.record_count}")
    print(f"final_accuracy\t{format_float(report.final_accuracy)}")
    if report.expert_selection_accuracy is not None:
        print(f"expert_selection_accuracy\t{format_float(report.expert_selection_accuracy)}")
    if args.json_out:
        payload = {"spec_version": SPEC_VERSION, "report": report.to_json_dict()}
        with open(args.json_out, "w", encoding="utf-8") as handle_:
            json.dump(payload, handle_, indent=2, sort_keys=True)
            handle_.write("\n")
        print(f"wrote {args.json_out}")
    return 0


def _cmd_frugal(args) -> int:
    validation = load_dataset(args.validation)
    test = load_dataset(args.test)
    k = validation.schema.num_experts
    costs = args.costs if args.costs is not None else (args.cost,) * k
    if len(costs) != k:
        raise InvalidConfig(f"--costs must list {k} values")
    fuser_kind = FuserKind(args.fuser)
    bank = None
    max_queries = args.max_queries
    if fuser_kind is FuserKind.MLP_BANK:
        if not args.train:
            raise InvalidConfig("mlp-bank fuser needs --train")
        if max_queries is None:
            max_queries = 5
        bank = train_fuser_bank(
            load_dataset(args.train),
            max_queries,
            TrainConfig(epochs=args.epochs, seed=args.seed),
        )
    grid = args.lambda_grid if args.lambda_grid is not None else (args.lam,)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    reports = []
    for lam in grid:
        config = FrugalConfig(
            m_neighbors=args.m_neighbors,
            kappa=args.kappa,
            cost_model=CostModel(costs=costs, lam=lam),
            fuser_kind=fuser_kind,
            max_queries=max_queries,
            stop_on_zero=args.stop_on_zero,
            subset_restricted_losses=args.subset_restricted,
        )
        report = frugal_evaluate(test, validation, config, bank=bank)
        reports.append(report)
        rows.append(
            {
                "lambda": lam,
                "mean_queried": report.mean_queried,
                "accuracy": report.final_accuracy,
            }
        )
        print(
            f"lambda={lam:g}\tmean_queried={format_float(report.mean_queried)}"
            f"\taccuracy={format_float(report.final_accuracy)}"
        )
    frontier_lines = ["lambda\tmean_queried\taccuracy"]
    for row in rows:
        frontier_lines.append(
            "\t".join(
                (
                    format_float(row["lambda"]),
                    format_float(row["mean_queried"]),
                    format_float(row["accuracy"]),
                )
            )
        )
    frontier_path = out / f"{args.label}.frontier.tsv"
    frontier_path.write_text("\n".join(frontier_lines) + "\n", encoding="utf-8")
    payload = {
        "spec_version": SPEC_VERSION,
        "strategy": args.label,
        "sweep": [report.to_json_dict() for report in reports],
    }
    report_path = out / f"{args.label}.report.json"
    report_path.write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    plots.render_frontier(rows, out / f"{args.label}.frontier.png")
    print(f"wrote {frontier_path}")
    print(f"wrote {report_path}")
    return 0


def _cmd_analyze(args) -> int:
    validation = load_dataset(args.validation)
    inputs = estimate_fano_inputs(validation)
    bound = fano_lower_bound(inputs)
    if args.json:
        payload = {
            "spec_version": SPEC_VERSION,
            "entropy_h": inputs.entropy_h,
            "mutual_info_i": inputs.mutual_info_i,
            "num_experts": inputs.num_experts,
            "error_lower_bound": bound,
        }
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        print(f"H\t{format_float(inputs.entropy_h)}")
        print(f"I\t{format_float(inputs.mutual_info_i)}")
        print(f"K\t{inputs.num_experts}")
        print(f"error_lower_bound\t{format_float(bound)}")
    return 0


def _cmd_run(args) -> int:
    manifest = ExperimentManifest.from_json_file(args.manifest)
    if args.seed is not None:
        manifest = ExperimentManifest(
            name=manifest.name,
            seed=args.seed,
            dataset=manifest.dataset,
            strategies=manifest.strategies,
            output_dir=manifest.output_dir,
        )
    summary = run_manifest(manifest, output_dir=args.output_dir)
    for path in summary["files"]:
        print(f"wrote {path}")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "train-fuser": _cmd_train_fuser,
    "eval": _cmd_eval,
    "frugal": _cmd_frugal,
    "analyze": _cmd_analyze,
    "run": _cmd_run,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ExpertFuseError as exc:
        detail = str(exc).replace("\n", " ")
        print(f"error:{type(exc).__name__}:{detail}", file=sys.stderr)
        return exc.exit_code


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
