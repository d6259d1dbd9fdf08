"""``acasec`` command line: scaffold, check, build, render and report workbooks."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Sequence

from acasec.builder import BuildError, build_case
from acasec.emit import (
    DocumentError,
    ScopeError,
    from_canonical,
    report_markdown,
    scope_node_id,
    to_canonical,
    to_graph_text,
    write_workbook,
)
from acasec.ingest import ParseError, WorkbookModel, empty_workbook, parse_workbook
from acasec.model import AssuranceCase
from acasec.taxonomy import DecompositionFrame, FrameError, load_frame_file, standard_frame
from acasec.validate import CONFIDENCE_BANNER, Calculus, Verdict, assess_confidence, check_coverage

EXIT_OK = 0
EXIT_FINDINGS = 1
EXIT_PARSE = 2
EXIT_USAGE = 3

FRAME_ENV = "ACASEC_FRAME"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _diag(message: str) -> None:
    print(message, file=sys.stderr)


def _frame(args: argparse.Namespace) -> DecompositionFrame:
    path = args.frame or os.environ.get(FRAME_ENV)
    return load_frame_file(path) if path else standard_frame()


def _emit(args: argparse.Namespace, data: str | bytes) -> None:
    if isinstance(data, str):
        data = data.encode("utf-8")
    if args.output:
        Path(args.output).write_bytes(data)
    else:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()


def _workbook(args: argparse.Namespace, frame: DecompositionFrame) -> WorkbookModel:
    return parse_workbook(args.workbook, frame, allow_missing=True)


# -- commands -----------------------------------------------------------------

def cmd_init(args: argparse.Namespace) -> int:
    frame = _frame(args)
    target = Path(args.target)
    if target.exists() and not target.is_dir():
        raise UsageError(f"{target} exists and is not a directory")
    if target.is_dir() and any(target.iterdir()) and not args.force:
        raise UsageError(f"{target} is not empty; pass --force to overwrite")
    subject = args.subject or args.system_name
    manifest = {"system_name": args.system_name, "frame": frame.name,
                "top_claim_subject": subject}
    write_workbook(empty_workbook(frame, manifest), target, frame)
    _diag(f"scaffolded {len(list(target.iterdir()))} files in {target}")
    return EXIT_OK


def _confidence_section(case: AssuranceCase, calculus: str) -> dict:
    result = assess_confidence(case, calculus)
    return {"calculus": result.calculus.value, "notes": list(result.notes),
            "scores": {k: result.scores[k] for k in sorted(result.scores)}}


def cmd_check(args: argparse.Namespace) -> int:
    frame = _frame(args)
    workbook = _workbook(args, frame)
    report = check_coverage(frame, workbook)
    # Building surfaces chain and defeater-target errors the coverage pass cannot.
    case = build_case(frame, workbook)
    confidence = _confidence_section(case, args.with_confidence) if args.with_confidence else None
    if args.format == "structured":
        doc = report.to_dict()
        if confidence is not None:
            doc["confidence"] = confidence
        _emit(args, json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n")
    else:
        text = report_markdown(report)
        if confidence is not None:
            lines = ["# Confidence", "", f"calculus: {confidence['calculus']}", "",
                     CONFIDENCE_BANNER, ""]
            lines += [f"- {k}: {v:.4f}" for k, v in confidence["scores"].items()]
            text += "\n" + "\n".join(lines) + "\n"
        _emit(args, text)
    _diag(f"verdict: {report.verdict.value} "
          f"({report.subcases_populated}/{report.subcase_total} subcases)")
    return EXIT_OK if report.verdict is Verdict.COMPLETE else EXIT_FINDINGS


def cmd_build(args: argparse.Namespace) -> int:
    frame = _frame(args)
    workbook = _workbook(args, frame)
    case = build_case(frame, workbook)
    _emit(args, to_canonical(case))
    report = check_coverage(frame, workbook)
    _diag(f"built {len(case.nodes)} nodes, {len(case.edges)} edges; "
          f"verdict: {report.verdict.value}")
    return EXIT_OK


def cmd_render(args: argparse.Namespace) -> int:
    source = Path(args.source)
    if source.is_file():
        try:
            case = from_canonical(source.read_bytes())
        except DocumentError as exc:
            raise ParseError(source, str(exc)) from exc
    else:
        frame = _frame(args)
        case = build_case(frame, parse_workbook(source, frame, allow_missing=True))
    try:
        scope = scope_node_id(case, args.scope)
    except ScopeError as exc:
        raise UsageError(exc.args[0]) from None
    _emit(args, to_graph_text(case, scope=scope, levels=args.levels))
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    frame = _frame(args)
    workbook = _workbook(args, frame)
    report = check_coverage(frame, workbook)
    _emit(args, report_markdown(report))
    _diag(f"verdict: {report.verdict.value}")
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--frame", help=f"frame document (default: ${FRAME_ENV} or the "
                                        "built-in standard frame)")
    parser = _Parser(prog="acasec", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("init", parents=[common], help="scaffold an empty workbook")
    p.add_argument("target")
    p.add_argument("--force", action="store_true", help="write into a non-empty directory")
    p.add_argument("--system-name", default="The system")
    p.add_argument("--subject", help="subject used in claim texts (default: system name)")
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("check", parents=[common], help="coverage check; exit 0 iff complete")
    p.add_argument("workbook")
    p.add_argument("--format", choices=("human", "structured"), default="human")
    p.add_argument("--with-confidence", choices=[c.value for c in Calculus])
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("build", parents=[common], help="write the canonical case document")
    p.add_argument("workbook")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("render", parents=[common], help="write DOT graph text")
    p.add_argument("source", help="workbook directory or canonical case file")
    p.add_argument("--scope", help="PHASE[/Stage[/FACTOR]]")
    p.add_argument("--levels", type=int, choices=(1, 2, 3),
                   help="stop at phase (1), stage (2) or factor (3) claims")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("report", parents=[common], help="write the Markdown coverage report")
    p.add_argument("workbook")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # Usage errors exit 3 (see _Parser.error); --help exits 0.
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        _diag(f"acasec: error: {exc}")
        return EXIT_USAGE
    except (ParseError, FrameError, BuildError) as exc:
        _diag(f"acasec: {exc}")
        return EXIT_PARSE
    except OSError as exc:
        _diag(f"acasec: {exc}")
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
