"""Command-line entry point: convert, stats, spans, translate, evaluate, lint.

Options may also come from a JSON file given with ``--config``; explicit flags
win over the file.  The seed falls back to ``WOZLOC_SEED`` and then to 0.

Exit codes: 0 success (lint findings included), 1 pipeline or input errors,
2 usage errors and missing files.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any

from . import __version__
from .align import AlignmentConfig, detect_entity_spans
from .harness import Mode, UsageError, build_report, run_csp_loop
from .ingest import (
    Corpus,
    FieldMapping,
    IngestError,
    corpus_stats,
    dump_corpus,
    filter_domains,
    import_foreign,
    load_canonical,
)
from .lint import LintConfig, lint_corpus
from .pipeline import DependencyDictionary, PipelineError, corpus_faithfulness, translate_corpus
from .state import Ontology, SlotId, StateError
from .wire import PARSE_PROTOCOL, TRANSLATE_PROTOCOL, ProtocolError, TransportError, char_to_byte_offsets, connect

log = logging.getLogger("wozloc")


class CliUsageError(Exception):
    """Reported with exit code 2."""


# argument parsing

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with default option values")
    p.add_argument("--in", dest="input", help="input corpus")
    p.add_argument("--jobs", type=int, help="parallel workers (default 1)")
    p.add_argument("--strict", action="store_true", default=None, help="fail on ontology violations")
    p.add_argument("--drop-domain", action="append", dest="drop_domain", help="remove a domain from all states")
    p.add_argument("-v", "--verbose", action="store_true", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wozloc", description="dialogue-state corpus toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="import a foreign corpus into the canonical format")
    _common(p)
    p.add_argument("--mapping", help="field mapping JSON (omit to canonicalize a canonical file)")
    p.add_argument("--ontology", help="ontology JSON used for validation")
    p.add_argument("--out", help="output corpus")

    p = sub.add_parser("stats", help="print corpus statistics")
    _common(p)
    p.add_argument("--json", action="store_true", default=None, help="print JSON instead of a table")

    p = sub.add_parser("spans", help="print detected entity spans as JSON lines")
    _common(p)
    p.add_argument("--out", help="write to a file instead of standard output")

    p = sub.add_parser("translate", help="translate a corpus with entity alignment")
    _common(p)
    p.add_argument("--src", help="source language tag")
    p.add_argument("--tgt", help="target language tag")
    p.add_argument("--client", help="translator worker command line")
    p.add_argument("--client-url", dest="client_url", help="translator HTTP endpoint")
    p.add_argument("--dict", dest="dictionary", help="dependency dictionary JSON")
    p.add_argument("--target-ontology", dest="target_ontology", help="target-language ontology JSON")
    p.add_argument("--strategy", choices=("random", "identity", "dictionary"))
    p.add_argument("--seed", type=int)
    p.add_argument("--no-align", dest="no_align", action="store_true", default=None,
                   help="translate without span preservation (ablation)")
    p.add_argument("--theta", type=float, help="attention extension threshold")
    p.add_argument("--no-numeric", dest="no_numeric", action="store_true", default=None,
                   help="disable the number/date/time heuristics")
    p.add_argument("--out", help="output corpus")
    p.add_argument("--report", help="write a JSON run report")

    p = sub.add_parser("evaluate", help="run a state-tracking backend and score it")
    _common(p)
    p.add_argument("--backend", help="backend worker command line")
    p.add_argument("--backend-url", dest="backend_url", help="backend HTTP endpoint")
    p.add_argument("--mode", choices=("jga", "gjga", "both"))
    p.add_argument("--exclude-final-turn", dest="exclude_final_turn", action="store_true", default=None)
    p.add_argument("--report", help="write the metrics report as JSON")

    p = sub.add_parser("lint", help="find likely misannotations")
    _common(p)
    p.add_argument("--sample", type=int, help="inspect a random sample of this many turns")
    p.add_argument("--seed", type=int)
    p.add_argument("--inferable", action="append", help='slot exempt from ExtraSlot, e.g. "restaurant price"')
    p.add_argument("--max-edit-distance", dest="max_edit_distance", type=int)
    p.add_argument("--missing-slot-mode", dest="missing_slot_mode", choices=("conservative", "contextual"))
    p.add_argument("--report", help="write the lint report as JSON")
    return parser


DEFAULTS: dict[str, Any] = {
    "jobs": 1, "strict": False, "drop_domain": [], "verbose": False, "json": False,
    "strategy": "random", "no_align": False, "theta": 0.5, "no_numeric": False,
    "mode": "both", "exclude_final_turn": False, "inferable": [], "max_edit_distance": 1,
    "missing_slot_mode": "conservative",
}


def _merge_config(args: argparse.Namespace) -> argparse.Namespace:
    """flags > config file > environment (seed only) > built-in defaults"""
    config: dict[str, Any] = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise CliUsageError(f"config file not found: {path}")
        try:
            config = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise CliUsageError(f"config file {path}: {e}") from e
        if not isinstance(config, dict):
            raise CliUsageError(f"config file {path} must hold a JSON object")
        config = {k.replace("-", "_"): v for k, v in config.items()}
        if "in" in config:
            config["input"] = config.pop("in")
    for key, value in vars(args).items():
        if value is None and key in config:
            setattr(args, key, config[key])
    if hasattr(args, "seed") and args.seed is None:
        env = os.environ.get("WOZLOC_SEED")
        if env is not None:
            try:
                args.seed = int(env, 0)
            except ValueError:
                raise CliUsageError(f"WOZLOC_SEED is not an integer: {env!r}") from None
        else:
            args.seed = 0
    for key, value in DEFAULTS.items():
        if hasattr(args, key) and getattr(args, key) is None:
            setattr(args, key, value)
    return args


def _need(args: argparse.Namespace, *names: str) -> None:
    for name in names:
        if not getattr(args, name, None):
            flag = {"input": "in"}.get(name, name).replace("_", "-")
            raise CliUsageError(f"--{flag} is required")


def _existing(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise CliUsageError(f"{what} not found: {p}")
    return p


def _load_input(args: argparse.Namespace) -> Corpus:
    _need(args, "input")
    corpus = load_canonical(_existing(args.input, "input corpus"), strict=args.strict)
    for finding in corpus.validation_findings:
        log.warning("%s", finding)
    return filter_domains(corpus, args.drop_domain or ())


def _write(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _json_text(obj: Any) -> str:
    return json.dumps(obj, ensure_ascii=False, indent=1) + "\n"


def _one_endpoint(args: argparse.Namespace, cmd: str, url: str) -> tuple[str | None, str | None]:
    command, endpoint = getattr(args, cmd), getattr(args, url)
    if bool(command) == bool(endpoint):
        raise CliUsageError(f"give exactly one of --{cmd.replace('_', '-')} or --{url.replace('_', '-')}")
    return command or None, endpoint or None


# subcommands

def cmd_convert(args: argparse.Namespace) -> int:
    _need(args, "input", "out")
    source = _existing(args.input, "input file")
    ontology = Ontology.load(_existing(args.ontology, "ontology")) if args.ontology else None
    if args.mapping:
        mapping = FieldMapping.load(_existing(args.mapping, "mapping"))
        corpus = import_foreign(source, mapping, ontology)
    else:
        corpus = load_canonical(source, strict=args.strict)
        if ontology is not None:
            corpus = Corpus(corpus.dialogues, ontology, corpus.split)
    if args.strict and corpus.validation_findings:
        for f in corpus.validation_findings:
            print(f, file=sys.stderr)
        return 1
    corpus = filter_domains(corpus, args.drop_domain or ())
    _write(args.out, dump_corpus(corpus))
    print(f"wrote {len(corpus)} dialogues, {corpus.n_turns} turns, "
          f"{len(corpus.validation_findings)} validation findings")
    for f in corpus.validation_findings:
        print(f"  {f}")
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    report = corpus_stats(_load_input(args))
    print(_json_text(report.as_dict()) if args.json else report.table())
    return 0


def cmd_spans(args: argparse.Namespace) -> int:
    corpus = _load_input(args)
    lines = []
    for d in corpus.dialogues:
        for t in d.turns:
            for speaker in ("agent", "user"):
                text = getattr(t, speaker)
                spans = detect_entity_spans(text, t.state)
                offsets = char_to_byte_offsets(text, [(s.start, s.end) for s in spans])
                for sp, (a, b) in zip(spans, offsets):
                    lines.append(json.dumps({"dialogue": d.id, "turn": t.index, "speaker": speaker,
                                             "start": a, "end": b, "slot": str(sp.slot), "value": sp.value},
                                            ensure_ascii=False))
    _write(args.out, "".join(line + "\n" for line in lines))
    return 0


def cmd_translate(args: argparse.Namespace) -> int:
    _need(args, "src", "tgt", "out")
    command, url = _one_endpoint(args, "client", "client_url")
    corpus = _load_input(args)
    dictionary = DependencyDictionary.load(_existing(args.dictionary, "dictionary")) if args.dictionary \
        else DependencyDictionary()
    target = Ontology.load(_existing(args.target_ontology, "target ontology")) if args.target_ontology \
        else corpus.ontology
    for problem in dictionary.validate(corpus.ontology, target):
        log.warning("dictionary: %s", problem)
    try:
        cfg = AlignmentConfig(args.theta, not args.no_numeric)
    except ValueError as e:
        raise CliUsageError(str(e)) from e

    run = translate_corpus(
        corpus, lambda: connect(TRANSLATE_PROTOCOL, command, url), dictionary, target, args.seed,
        args.src, args.tgt, cfg, align=not args.no_align, strategy=args.strategy, jobs=args.jobs,
    )
    _write(args.out, dump_corpus(run.corpus))
    rate = corpus_faithfulness(corpus, run.corpus)
    report = {
        "seed": args.seed,
        "aligned": not args.no_align,
        "translated": len(run.corpus),
        "failed": run.failed,
        "alignment_failures": len(run.findings),
        "faithfulness": rate,
        "findings": run.findings,
    }
    if args.report:
        _write(args.report, _json_text(report))
    print(f"translated {len(run.corpus)}/{len(corpus)} dialogues; "
          f"{len(run.findings)} alignment fallbacks; faithfulness {100 * rate:.1f}%")
    if run.failed:
        for err in run.failed:
            print(f"  failed: {err}", file=sys.stderr)
        return 1
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    command, url = _one_endpoint(args, "backend", "backend_url")
    corpus = _load_input(args)
    modes = [Mode.PREDICTED, Mode.GOLD] if args.mode == "both" else [Mode.from_metric(args.mode)]
    runs = {}
    for mode in modes:
        runs[mode] = run_csp_loop(corpus, lambda: connect(PARSE_PROTOCOL, command, url), mode, args.jobs)
    report = build_report(runs, args.exclude_final_turn)
    if args.report:
        _write(args.report, _json_text(report.to_json()))
    print(report.summary())
    lost = [e for e in report.errors if not e["error"].startswith("bad backend response")]
    if lost:
        print(f"{len(lost)} turns not evaluated: {lost[0]['error']}", file=sys.stderr)
        return 1
    return 0


def cmd_lint(args: argparse.Namespace) -> int:
    corpus = _load_input(args)
    try:
        cfg = LintConfig(
            inferable_slots=frozenset(SlotId.parse(s) for s in args.inferable or ()),
            max_edit_distance=args.max_edit_distance,
            sample_size=args.sample,
            seed=args.seed,
            missing_slot_mode=args.missing_slot_mode,
        )
    except (ValueError, StateError) as e:
        raise CliUsageError(str(e)) from e
    report = lint_corpus(corpus, cfg, args.jobs)
    if args.report:
        _write(args.report, _json_text(report.to_json()))
    print(report.summary())
    return 0


COMMANDS = {
    "convert": cmd_convert,
    "stats": cmd_stats,
    "spans": cmd_spans,
    "translate": cmd_translate,
    "evaluate": cmd_evaluate,
    "lint": cmd_lint,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)     # exits with 2 on unknown flags
    try:
        args = _merge_config(args)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.jobs < 1:
            raise CliUsageError("--jobs must be at least 1")
        return COMMANDS[args.command](args)
    except CliUsageError as e:
        parser.print_usage(sys.stderr)
        print(f"wozloc {args.command}: error: {e}", file=sys.stderr)
        return 2
    except (IngestError, StateError, PipelineError, UsageError, TransportError, ProtocolError, OSError) as e:
        print(f"wozloc {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
