"""wkvt-export: dump one prefill's attention to a WKVT trace file."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .capture import ExportError, ExportJob, export


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="wkvt-export",
        description="Capture per-layer attention from a transformer prefill "
        "and write a WKVT trace file.",
    )
    p.add_argument("--model", required=True, help="model id or local path")
    text = p.add_mutually_exclusive_group(required=True)
    text.add_argument("--prompt", help="prompt text")
    text.add_argument("--prompt-file", type=Path, help="file containing the prompt")
    p.add_argument("--mode", choices=["attn", "qk"], default="attn")
    p.add_argument("--max-tokens", type=int, default=4096)
    p.add_argument(
        "--head-view",
        choices=["query", "kv"],
        default="query",
        help="record query-head maps, or aggregate them per GQA KV head",
    )
    p.add_argument("-o", "--output", type=Path, required=True)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    prompt = args.prompt if args.prompt is not None else args.prompt_file.read_text(
        encoding="utf-8"
    )
    try:
        info = export(
            ExportJob(
                model_id=args.model,
                prompt=prompt,
                output=args.output,
                mode=args.mode,
                max_tokens=args.max_tokens,
                head_view=args.head_view,
            )
        )
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    print(json.dumps(info, indent=2))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
