"""Command-line entry point.

Subcommands: gen-trace, compress, similarity, compare, bench, classify.

Exit codes:
    0   success
    2   validation or configuration error (argparse uses the same code)
    3   I/O or trace-format error
    4   infeasible budget
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import bench as bench_mod
from . import classifier as classifier_mod
from . import report as report_mod
from .budget import per_layer_kv_size_to_total
from .errors import ConfigError, InfeasibleBudgetError, TraceFormatError
from .grouping import (
    build_grouping,
    format_heatmap_csv,
    intra_group_similarity,
    mean_cross_group_jaccard,
    mean_intra_group_jaccard,
)
from .kvstore import compact, retained_attention_mass
from .policies import (
    POLICY_NAMES,
    CompressionConfig,
    run_policy,
    windowkv_compress,
)
from .scoring import TaskType
from .synthetic import PROFILES, generate_synthetic
from .wire import read_trace_file, write_trace_file

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_BUDGET = 4


def _print_json(doc: dict) -> None:
    print(json.dumps(doc, indent=2))


def _parse_regions(spec: str) -> list[tuple[int, int]]:
    regions = []
    for part in spec.split(","):
        try:
            start, end = part.split(":")
            regions.append((int(start), int(end)))
        except ValueError:
            raise ConfigError(
                f"bad region {part!r}, expected start:end pairs like 32:64,128:160"
            ) from None
    return regions


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alpha", type=int, default=16, help="observation window tokens")
    p.add_argument("--omega", type=int, default=8, help="review window tokens")
    p.add_argument(
        "--p-aggregation",
        type=int,
        default=None,
        help="top-p token count per window for aggregation tasks "
        "(< omega; defaults to omega // 2)",
    )
    p.add_argument("--gamma", type=int, default=1, help="layers per sharing group")
    p.add_argument(
        "--lambda",
        dest="lam",
        type=float,
        default=14.0,
        help="pyramid shape parameter (>= 1)",
    )
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--budget", type=int, help="model-wide token budget")
    group.add_argument(
        "--kv-size-per-layer",
        type=int,
        help="per-layer KV size; multiplied by the layer count to get the total",
    )
    p.add_argument(
        "--task",
        choices=["localization", "aggregation", "auto"],
        default="localization",
    )
    p.add_argument(
        "--prompt-file",
        type=Path,
        default=None,
        help="prompt text for --task auto",
    )
    p.add_argument(
        "--bytes-per-token",
        type=int,
        default=None,
        help="override bytes per token per layer in memory accounting "
        "(default: 2 * heads * head_dim * 4)",
    )


def _build_config(args, trace) -> CompressionConfig:
    if args.budget is not None:
        b_total = args.budget
    else:
        b_total = per_layer_kv_size_to_total(args.kv_size_per_layer, trace.num_layers)
    task = None if args.task == "auto" else TaskType(args.task)
    p_aggregation = (
        args.p_aggregation if args.p_aggregation is not None else max(1, args.omega // 2)
    )
    return CompressionConfig(
        alpha=args.alpha,
        omega=args.omega,
        gamma=args.gamma,
        lam=args.lam,
        b_total=b_total,
        p_aggregation=p_aggregation,
        task=task,
    )


def _resolve_task(args, config: CompressionConfig) -> TaskType:
    if config.task is not None:
        return config.task
    if args.prompt_file is None:
        raise ConfigError("--task auto needs --prompt-file to classify")
    text = args.prompt_file.read_text(encoding="utf-8")
    return classifier_mod.classify(text).task


def cmd_gen_trace(args) -> int:
    regions = _parse_regions(args.regions) if args.regions else None
    trace = generate_synthetic(
        num_layers=args.layers,
        num_heads=args.heads,
        seq_len=args.tokens,
        head_dim=args.head_dim,
        seed=args.seed,
        profile=args.profile,
        regions=regions,
        num_regions=args.num_regions,
        region_len=args.region_len,
        region_mass=args.region_mass,
        sink_mass=args.sink_mass,
        label=args.label,
    )
    size = write_trace_file(trace, args.output)
    meta = trace.meta
    _print_json(
        {
            "schema_version": report_mod.SCHEMA_VERSION,
            "path": str(args.output),
            "bytes": size,
            "mode": trace.mode.name,
            "layers": trace.num_layers,
            "heads": trace.num_heads,
            "tokens": trace.seq_len,
            "head_dim": trace.head_dim,
            "seed": meta.rng_seed,
            "generator_params": meta.generator_params,
            "label": trace.label,
        }
    )
    return EXIT_OK


def _run_one_policy(trace, config, task, name, bytes_per_token=None):
    start = time.perf_counter()
    result = run_policy(name, trace, config, task)
    elapsed = time.perf_counter() - start
    cache = compact(trace, result, bytes_per_token_per_layer=bytes_per_token)
    masses = retained_attention_mass(trace, result, config.alpha)
    entry = report_mod.policy_report_entry(
        result, cache.memory_report(), masses, elapsed
    )
    return result, entry


def cmd_compress(args) -> int:
    trace = read_trace_file(args.trace)
    config = _build_config(args, trace)
    task = _resolve_task(args, config) if args.policy in ("windowkv", "pkv") else None
    result, entry = _run_one_policy(
        trace, config, task, args.policy, bytes_per_token=args.bytes_per_token
    )

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result_path = out_dir / f"{args.policy}_result.json"
    result_path.write_text(
        json.dumps(report_mod.policy_result_to_json(result), indent=2),
        encoding="utf-8",
    )
    run_report = report_mod.build_run_report(trace, config, {args.policy: entry})
    report_path = out_dir / "run_report.json"
    report_path.write_text(json.dumps(run_report, indent=2), encoding="utf-8")
    _print_json(run_report)
    return EXIT_OK


def cmd_similarity(args) -> int:
    trace = read_trace_file(args.trace)
    config = _build_config(args, trace)
    if args.gamma < 2:
        raise ConfigError("similarity analysis needs gamma >= 2")
    task = _resolve_task(args, config)
    result = windowkv_compress(trace, config, task, share=args.use_sharing)
    grouping = build_grouping(trace.num_layers, config.gamma)
    matrices = intra_group_similarity(result.index_sets, grouping)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    for g, mat in enumerate(matrices):
        path = out_dir / f"heatmap_group_{g}.csv"
        path.write_text(format_heatmap_csv(mat), encoding="utf-8")
        files.append(str(path))

    intra = mean_intra_group_jaccard(matrices)
    cross = mean_cross_group_jaccard(result.index_sets, grouping)
    summary = {
        "schema_version": report_mod.SCHEMA_VERSION,
        "sharing": args.use_sharing,
        "mean_intra_group_jaccard": intra,
        "mean_cross_group_jaccard": cross,
        "difference": intra - cross,
        "heatmap_files": files,
    }
    (out_dir / "similarity_summary.json").write_text(
        json.dumps(summary, indent=2), encoding="utf-8"
    )
    _print_json(summary)
    return EXIT_OK


def cmd_compare(args) -> int:
    trace = read_trace_file(args.trace)
    config = _build_config(args, trace)
    task = _resolve_task(args, config)
    entries: dict[str, dict] = {}
    for name in POLICY_NAMES:
        _, entries[name] = _run_one_policy(
            trace, config, task, name, bytes_per_token=args.bytes_per_token
        )

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = report_mod.build_run_report(trace, config, entries)
    (out_dir / "comparison.json").write_text(json.dumps(doc, indent=2), encoding="utf-8")
    (out_dir / "comparison.csv").write_text(
        report_mod.comparison_csv(entries), encoding="utf-8"
    )
    _print_json(doc)
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.repetitions < 10:
        raise ConfigError(
            f"bench needs at least 10 repetitions, got {args.repetitions}"
        )
    trace = read_trace_file(args.trace)
    config = _build_config(args, trace)
    task = _resolve_task(args, config)
    doc = bench_mod.run_selection_bench(trace, config, task, args.repetitions)
    if args.output is not None:
        Path(args.output).write_text(json.dumps(doc, indent=2), encoding="utf-8")
    _print_json(doc)
    return EXIT_OK


def cmd_classify(args) -> int:
    if args.file is None or str(args.file) == "-":
        text = sys.stdin.read()
    else:
        text = Path(args.file).read_text(encoding="utf-8")
    decision = classifier_mod.classify(text)
    doc = {"schema_version": report_mod.SCHEMA_VERSION}
    doc.update(decision.to_json())
    _print_json(doc)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="windowkv",
        description="Trace-driven KV cache compression: policies, budgets, analysis.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-trace", help="generate a synthetic attention trace")
    p.add_argument("--layers", type=int, required=True)
    p.add_argument("--heads", type=int, required=True)
    p.add_argument("--tokens", type=int, required=True)
    p.add_argument("--head-dim", type=int, default=64)
    p.add_argument("--profile", default="uniform", help=f"one of {PROFILES}")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--label", default=None)
    p.add_argument("--regions", default=None, help="hotspot regions, e.g. 32:64,128:160")
    p.add_argument("--num-regions", type=int, default=1)
    p.add_argument("--region-len", type=int, default=32)
    p.add_argument("--region-mass", type=float, default=0.9)
    p.add_argument("--sink-mass", type=float, default=0.5)
    p.add_argument("-o", "--output", type=Path, required=True)
    p.set_defaults(func=cmd_gen_trace)

    p = sub.add_parser("compress", help="run one policy and report memory and mass")
    p.add_argument("--trace", type=Path, required=True)
    p.add_argument("--policy", choices=POLICY_NAMES, required=True)
    p.add_argument("--out-dir", type=Path, default=Path("."))
    _add_config_flags(p)
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser(
        "similarity",
        help="intra-group Jaccard heatmaps from independent per-layer selection",
    )
    p.add_argument("--trace", type=Path, required=True)
    p.add_argument("--out-dir", type=Path, default=Path("."))
    p.add_argument(
        "--use-sharing",
        action="store_true",
        help="analyze the sharing path instead (degenerate all-ones heatmaps)",
    )
    _add_config_flags(p)
    p.set_defaults(func=cmd_similarity)

    p = sub.add_parser("compare", help="run every policy at one shared budget")
    p.add_argument("--trace", type=Path, required=True)
    p.add_argument("--out-dir", type=Path, default=Path("."))
    _add_config_flags(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("bench", help="time selection with and without sharing")
    p.add_argument("--trace", type=Path, required=True)
    p.add_argument("--repetitions", type=int, default=10)
    p.add_argument("-o", "--output", type=Path, default=None)
    _add_config_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("classify", help="classify prompt text into a task type")
    p.add_argument("file", nargs="?", default=None, help="prompt file, or - for stdin")
    p.set_defaults(func=cmd_classify)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InfeasibleBudgetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except TraceFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
