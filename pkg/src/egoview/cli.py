"""Command-line entry point: solvability analysis, question synthesis, corpus
building, and exact-match evaluation.

Exit codes: 0 success, 1 usage, 2 schema/data error, 3 unknown reference,
4 service failure.  All randomness flows from --seed; stub-mode runs write
byte-identical outputs for identical configurations.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from ._util import config_hash
from .corpus import (
    CaptionBuildConfig,
    ExtendConfig,
    build_caption_triplets,
    extend_dataset_triplets,
    load_scenes_dir,
    read_instructions,
    triplet_to_dict,
    write_jsonl,
)
from .errors import (
    DuplicateId,
    DuplicatePrediction,
    EmptyInput,
    MissingGold,
    NoViews,
    SchemaError,
    ServiceUnavailable,
    UnknownObjectId,
    UnknownScene,
)
from .evaluate import (
    ARTICLES_POLICY,
    NORMALIZATION_VERSION,
    em_score,
    format_solvability_report,
    read_gold,
    read_predictions,
    solvability_report,
)
from .services import ServiceEndpointConfig, make_client
from .solvability import WitnessConfig, view_requirement_stats
from .synthesis import (
    SynthesisConfig,
    composed_to_dict,
    read_questions,
    synthesize_dataset,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_SCHEMA = 2
EXIT_REFERENCE = 3
EXIT_SERVICE = 4

MODEL_SERVICE_ENV = "MODEL_SERVICE_URL"

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunConfig:
    """Resolved run settings; the semantic part feeds the config hash."""

    command: str
    seed: int
    stub: bool
    knobs: dict

    def hash_payload(self) -> dict:
        # Paths never enter the hash: identical runs on different machines
        # must produce identical provenance.
        return {
            "command": self.command,
            "seed": self.seed,
            "stub": self.stub,
            "tool_version": __version__,
            **self.knobs,
        }

    def provenance(self) -> dict:
        return {
            "tool": "egoview",
            "version": __version__,
            "command": self.command,
            "seed": self.seed,
            "stub": self.stub,
            "config_hash": config_hash(self.hash_payload()),
        }


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _service_client(args, seed: int):
    """Build the model-service client; env var overrides the --service URL."""
    if args.stub:
        return make_client(ServiceEndpointConfig(mode="stub", seed=seed))
    base_url = os.environ.get(MODEL_SERVICE_ENV) or args.service
    return make_client(ServiceEndpointConfig(mode="remote", base_url=base_url, seed=seed))


def _write_json(path: str | Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(json.dumps(payload, ensure_ascii=False, indent=2) + "\n")


def _default_report_path(out: str) -> str:
    return str(out) + ".report.json"


def cmd_solvability(args) -> int:
    cfg = WitnessConfig(
        iosa_threshold=args.iosa_threshold, min_area_ratio=args.min_area_ratio
    )
    run = RunConfig(
        command="solvability",
        seed=args.seed,
        stub=True,
        knobs={
            "stride": args.stride,
            "iosa_threshold": cfg.iosa_threshold,
            "min_area_ratio": cfg.min_area_ratio,
        },
    )
    scenes = load_scenes_dir(args.scenes)
    instructions = read_instructions(args.instructions)
    hist = view_requirement_stats(instructions, scenes, cfg, stride=args.stride)
    report = solvability_report(hist, cfg)
    report["provenance"] = run.provenance()
    _write_json(args.out, report)
    print(format_solvability_report(report))
    print(f"wrote report -> {args.out}")
    return EXIT_OK


def cmd_synthesize(args) -> int:
    syn_cfg = SynthesisConfig()
    witness_cfg = WitnessConfig()
    run = RunConfig(
        command="synthesize",
        seed=args.seed,
        stub=args.stub,
        knobs={
            "prompt_version": syn_cfg.prompt_version,
            "max_attempts": syn_cfg.max_attempts,
            "answer_token_limit": syn_cfg.answer_token_limit,
            "temperature": syn_cfg.temperature,
            "iosa_threshold": witness_cfg.iosa_threshold,
            "min_area_ratio": witness_cfg.min_area_ratio,
        },
    )
    scenes = load_scenes_dir(args.scenes)
    questions = read_questions(args.questions)
    client = _service_client(args, args.seed)
    records, report = synthesize_dataset(
        questions,
        client,
        scenes,
        witness_cfg=witness_cfg,
        cfg=syn_cfg,
        config_hash=config_hash(run.hash_payload()),
    )
    provenance = {**run.provenance(), "prompt_version": syn_cfg.prompt_version}
    write_jsonl(args.out, [composed_to_dict(r) for r in records], provenance=provenance)
    report_path = args.report or _default_report_path(args.out)
    _write_json(report_path, {**report.to_dict(), "provenance": provenance})
    print(
        f"synthesized {report.composed} of {report.pairs_considered} eligible pairs "
        f"-> {args.out}"
    )
    if not records:
        print("no eligible pairs produced records; see report for reasons")
    return EXIT_OK


def cmd_build_corpus(args) -> int:
    if args.mode == "extend" and not args.instructions:
        raise _UsageError("--mode extend requires --instructions")
    scenes = load_scenes_dir(args.scenes)
    knobs = {
        "mode": args.mode,
        "stride": args.stride,
        "num_captions": args.num_captions,
        "threshold": args.threshold,
        "tau": args.tau,
    }
    run = RunConfig(command="build-corpus", seed=args.seed, stub=args.stub, knobs=knobs)
    chash = config_hash(run.hash_payload())
    client = _service_client(args, args.seed)

    records = []
    if args.mode == "captions":
        cfg = CaptionBuildConfig(
            stride=args.stride,
            num_captions=args.num_captions,
            threshold=args.threshold,
            tau=args.tau,
        )
        for scene_id in sorted(scenes):
            records.extend(
                build_caption_triplets(scenes[scene_id], client, client, cfg, config_hash=chash)
            )
    else:
        instructions = read_instructions(args.instructions)
        records = extend_dataset_triplets(
            instructions, scenes, client, ExtendConfig(tau=args.tau), config_hash=chash
        )

    provenance = run.provenance()
    write_jsonl(args.out, [triplet_to_dict(r) for r in records], provenance=provenance)
    sources: dict[str, int] = {}
    for record in records:
        sources[record.source] = sources.get(record.source, 0) + 1
    summary = {
        "record": "corpus_report",
        "triplets": len(records),
        "per_source": {k: sources[k] for k in sorted(sources)},
        "provenance": provenance,
    }
    report_path = args.report or _default_report_path(args.out)
    _write_json(report_path, summary)
    print(f"built {len(records)} triplets -> {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    gold = read_gold(args.gold)
    predictions = read_predictions(args.pred)
    report = em_score(predictions, gold)
    run = RunConfig(
        command="eval",
        seed=args.seed,
        stub=True,
        knobs={"normalization": NORMALIZATION_VERSION, "articles": ARTICLES_POLICY},
    )
    payload = {**report.to_dict(), "provenance": run.provenance()}
    _write_json(args.out, payload)
    print(f"overall EM: {report.overall_em:.1f} over {report.total} questions")
    for bucket, value in report.per_bucket_em.items():
        print(f"  views={bucket}: EM {value:.1f} ({report.bucket_counts[bucket]})")
    print(f"wrote report -> {args.out}")
    return EXIT_OK


def _add_service_args(sub) -> None:
    group = sub.add_mutually_exclusive_group(required=True)
    group.add_argument("--stub", action="store_true", help="use deterministic in-process stubs")
    group.add_argument("--service", metavar="URL", help="model service base URL")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="egoview", description=__doc__)
    parser.add_argument("--version", action="version", version=f"egoview {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    sub = commands.add_parser("solvability", help="view-requirement analysis over instructions")
    sub.add_argument("--scenes", required=True, help="directory of scene JSON files")
    sub.add_argument("--instructions", required=True, help="instruction JSONL file")
    sub.add_argument("--out", required=True, help="report JSON output path")
    sub.add_argument("--stride", type=int, default=1, help="candidate view stride (default 1)")
    sub.add_argument("--iosa-threshold", type=float, default=0.5)
    sub.add_argument("--min-area-ratio", type=float, default=0.005)
    sub.add_argument("--seed", type=int, default=0)
    sub.set_defaults(func=cmd_solvability)

    sub = commands.add_parser("synthesize", help="compose multi-view questions from pairs")
    sub.add_argument("--scenes", required=True)
    sub.add_argument("--questions", required=True, help="question JSONL file")
    sub.add_argument("--out", required=True, help="composed-question JSONL output path")
    sub.add_argument("--report", help="report JSON path (default: <out>.report.json)")
    sub.add_argument("--seed", type=int, default=0)
    _add_service_args(sub)
    sub.set_defaults(func=cmd_synthesize)

    sub = commands.add_parser("build-corpus", help="build view/object/text triplets")
    sub.add_argument("--scenes", required=True)
    sub.add_argument("--mode", required=True, choices=["captions", "extend"])
    sub.add_argument("--instructions", help="instruction JSONL (required for extend mode)")
    sub.add_argument("--out", required=True, help="triplet JSONL output path")
    sub.add_argument("--report", help="summary JSON path (default: <out>.report.json)")
    sub.add_argument("--stride", type=int, default=20, help="view sampling stride (default 20)")
    sub.add_argument("--num-captions", type=int, default=3)
    sub.add_argument("--threshold", type=float, default=0.5, help="caption keep threshold")
    sub.add_argument("--tau", type=float, default=0.5, help="visibility threshold")
    sub.add_argument("--seed", type=int, default=0)
    _add_service_args(sub)
    sub.set_defaults(func=cmd_build_corpus)

    sub = commands.add_parser("eval", help="exact-match evaluation of predictions")
    sub.add_argument("--gold", required=True, help="gold answer JSONL")
    sub.add_argument("--pred", required=True, help="prediction JSONL")
    sub.add_argument("--out", required=True, help="report JSON output path")
    sub.add_argument("--seed", type=int, default=0)
    sub.set_defaults(func=cmd_eval)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SchemaError, DuplicateId, EmptyInput, NoViews, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (UnknownScene, UnknownObjectId, MissingGold, DuplicatePrediction) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_REFERENCE
    except ServiceUnavailable as exc:
        print(f"service error: {exc}", file=sys.stderr)
        return EXIT_SERVICE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA


if __name__ == "__main__":
    sys.exit(main())
