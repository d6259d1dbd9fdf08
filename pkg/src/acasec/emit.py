"""Serializers: canonical case documents, DOT diagrams, Markdown reports and
workbook files."""

from __future__ import annotations

import csv
import io
import json
import textwrap
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from acasec.builder import TOP, path_id, stable_id
from acasec.ingest import (
    CONFIDENCE_COLUMN,
    DEFEATERS_FILE,
    DEFEATERS_HEADER,
    MANIFEST_FILE,
    WORKSHEET_HEADER,
    DelegationRef,
    PopulatedCell,
    WorkbookModel,
    Worksheet,
    worksheet_filename,
)
from acasec.model import (
    ArgumentKind,
    ArgumentNode,
    AssuranceCase,
    ClaimNode,
    ClaimRole,
    DefeaterNode,
    DefeaterStatus,
    EdgeKind,
    EvidenceKind,
    EvidenceNode,
    ModelError,
    Node,
    NodeKind,
    SideClaimKind,
    SideClaimNode,
)
from acasec.taxonomy import CellKey, DecompositionFrame, FactorId, slugify
from acasec.validate import CellState, CoverageReport

SCHEMA_VERSION = "assurance-case/1"


class DocumentError(ValueError):
    pass


class SchemaVersionError(DocumentError):
    pass


class ScopeError(KeyError):
    pass


# -- canonical document -------------------------------------------------------

def _cell_text(cell: CellKey | None) -> str | None:
    return str(cell) if cell is not None else None


def _parse_cell(text: str | None) -> CellKey | None:
    if text is None:
        return None
    phase, stage, factor = text.split("/")
    return CellKey(phase, stage, FactorId(factor))


def _node_record(node: Node) -> dict[str, Any]:
    rec: dict[str, Any] = {"id": node.id, "kind": node.kind.value}
    if isinstance(node, ClaimNode):
        rec.update(text=node.text, role=node.role.value, cell=_cell_text(node.cell))
    elif isinstance(node, SideClaimNode):
        rec.update(text=node.text, side_kind=node.side_kind.value)
    elif isinstance(node, ArgumentNode):
        rec.update(argument_kind=node.argument_kind.value, rationale=node.rationale)
    elif isinstance(node, EvidenceNode):
        rec.update(label=node.label, cell=_cell_text(node.cell), index=node.index,
                   evidence_kind=node.evidence_kind.value, artifact_ref=node.artifact_ref,
                   confidence=node.confidence)
    elif isinstance(node, DefeaterNode):
        rec.update(text=node.text, target=node.target, status=node.status.value,
                   resolution=node.resolution)
    return rec


def _node_from_record(rec: Mapping[str, Any]) -> Node:
    kind = NodeKind(rec["kind"])
    if kind is NodeKind.CLAIM:
        return ClaimNode(rec["id"], rec["text"], ClaimRole(rec["role"]), _parse_cell(rec["cell"]))
    if kind is NodeKind.SIDE_CLAIM:
        return SideClaimNode(rec["id"], rec["text"], SideClaimKind(rec["side_kind"]))
    if kind is NodeKind.ARGUMENT:
        return ArgumentNode(rec["id"], ArgumentKind(rec["argument_kind"]), rec["rationale"])
    if kind is NodeKind.EVIDENCE:
        cell = _parse_cell(rec["cell"])
        if cell is None:
            raise DocumentError(f"evidence {rec['id']} has no cell")
        return EvidenceNode(rec["id"], rec["label"], cell, int(rec["index"]),
                            EvidenceKind(rec["evidence_kind"]), rec["artifact_ref"],
                            rec["confidence"])
    return DefeaterNode(rec["id"], rec["text"], rec["target"], DefeaterStatus(rec["status"]),
                        rec["resolution"])


def to_canonical(case: AssuranceCase) -> bytes:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "frame_name": case.frame_name,
        "meta": {k: case.meta[k] for k in sorted(case.meta)},
        "nodes": [_node_record(case.nodes[k]) for k in sorted(case.nodes)],
        "edges": [
            {"from": e.source, "to": e.target, "kind": e.kind.value}
            for e in sorted(set(case.edges), key=lambda e: (e.source, e.target, e.kind.value))
        ],
    }
    return (json.dumps(doc, indent=2, ensure_ascii=False) + "\n").encode("utf-8")


def from_canonical(data: bytes | str) -> AssuranceCase:
    try:
        doc = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise DocumentError(f"not a JSON document: {exc}") from None
    if not isinstance(doc, dict):
        raise DocumentError("top level must be an object")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise SchemaVersionError(
            f"schema_version {doc.get('schema_version')!r}, expected {SCHEMA_VERSION!r}")
    try:
        case = AssuranceCase(doc["frame_name"], doc["meta"])
        for rec in doc["nodes"]:
            case.add_node(_node_from_record(rec))
        for rec in doc["edges"]:
            case.connect(rec["from"], rec["to"], EdgeKind(rec["kind"]))
    except ModelError as exc:
        raise DocumentError(f"invalid case: {exc}") from exc
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise DocumentError(f"malformed document: {exc!r}") from exc
    return case


# -- DOT ----------------------------------------------------------------------

@dataclass(frozen=True)
class DiagramStyle:
    orientation: str = "top_down"
    shapes: Mapping[NodeKind, str] = field(default_factory=lambda: {
        NodeKind.CLAIM: "box",
        NodeKind.ARGUMENT: "parallelogram",
        NodeKind.EVIDENCE: "cylinder",
        NodeKind.SIDE_CLAIM: "box",
        NodeKind.DEFEATER: "octagon",
    })
    styles: Mapping[NodeKind, str] = field(default_factory=lambda: {
        NodeKind.CLAIM: "rounded,filled",
        NodeKind.ARGUMENT: "filled",
        NodeKind.EVIDENCE: "filled",
        NodeKind.SIDE_CLAIM: "dashed,filled",
        NodeKind.DEFEATER: "filled",
    })
    colors: Mapping[str, str] = field(default_factory=lambda: {
        "claim": "#dbe9f6",
        "argument": "#fff2cc",
        "evidence": "#d9ead3",
        "side_claim": "#f3f3f3",
        "defeater.open": "#f4cccc",
        "defeater.resolved": "#d9d9d9",
        "defeater.accepted_residual": "#fce5cd",
    })
    defeat_colors: Mapping[DefeaterStatus, str] = field(default_factory=lambda: {
        DefeaterStatus.OPEN: "red",
        DefeaterStatus.RESOLVED: "gray50",
        DefeaterStatus.ACCEPTED_RESIDUAL: "orange",
    })
    wrap: int = 40

    def __post_init__(self) -> None:
        if self.orientation != "top_down":
            raise ValueError(f"unsupported orientation {self.orientation!r}")
        for kind in NodeKind:
            if not self.shapes.get(kind):
                raise ValueError(f"diagram style has no shape for {kind.value}")
            if kind is not NodeKind.DEFEATER and not self.colors.get(kind.value):
                raise ValueError(f"diagram style has no color for {kind.value}")
        for status in DefeaterStatus:
            if not self.colors.get(f"defeater.{status.value}") or not self.defeat_colors.get(status):
                raise ValueError(f"diagram style has no color for defeater {status.value}")

    def fill(self, node: Node) -> str:
        if isinstance(node, DefeaterNode):
            return self.colors[f"defeater.{node.status.value}"]
        return self.colors[node.kind.value]


DEFAULT_STYLE = DiagramStyle()

_STOP_ROLES = {1: ClaimRole.PHASE, 2: ClaimRole.STAGE, 3: ClaimRole.FACTOR}


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n") + '"'


def _label(node: Node, wrap: int) -> str:
    if isinstance(node, ArgumentNode):
        text = node.argument_kind.value
    elif isinstance(node, EvidenceNode):
        text = node.label
    elif isinstance(node, DefeaterNode):
        text = f"[{node.status.value}] {node.text}"
    else:
        text = node.text
    return "\n".join(textwrap.wrap(text, wrap)) or text


def scope_node_id(case: AssuranceCase, selector: str | None) -> str | None:
    """Resolve ``PHASE[/Stage Title[/FACTOR]]`` to the claim heading that scope."""
    if not selector:
        return None
    parts = [p.strip() for p in selector.split("/")]
    if parts == [TOP]:
        node_id = path_id(TOP, "C")
    elif len(parts) == 1:
        node_id = path_id(parts[0], "C")
    elif len(parts) == 2:
        node_id = path_id(parts[0], slugify(parts[1]), "C")
    elif len(parts) == 3:
        try:
            factor = FactorId(parts[2].upper())
        except ValueError:
            raise ScopeError(f"unknown factor in scope {selector!r}") from None
        node_id = stable_id(CellKey(parts[0], slugify(parts[1]), factor), "claim")
    else:
        raise ScopeError(f"bad scope {selector!r}")
    if node_id not in case:
        raise ScopeError(f"scope {selector!r} matches no node in the case")
    return node_id


def subtree(case: AssuranceCase, root: str, levels: int | None = None) -> set[str]:
    """Nodes under ``root``, walking from conclusions down to their supports.

    ``levels`` stops the walk at phase (1), stage (2) or factor (3) claims.
    """
    case.get(root)
    stop = _STOP_ROLES.get(levels) if levels else None
    if levels and stop is None:
        raise ValueError("levels must be 1, 2 or 3")
    incoming: dict[str, list] = {}
    for e in case.edges:
        incoming.setdefault(e.target, []).append(e)
    keep = set()
    stack = [root]
    while stack:
        n = stack.pop()
        if n in keep:
            continue
        keep.add(n)
        node = case.nodes[n]
        if stop is not None and n != root and node.kind is NodeKind.CLAIM and node.role is stop:
            # Still show doubts raised against the boundary claim.
            stack.extend(e.source for e in incoming.get(n, []) if e.kind is EdgeKind.DEFEATS)
            continue
        for e in incoming.get(n, []):
            src = case.nodes[e.source]
            if e.kind in (EdgeKind.CONCLUDES, EdgeKind.PREMISE, EdgeKind.EVIDENCES,
                          EdgeKind.DEFEATS):
                stack.append(e.source)
            elif (e.kind is EdgeKind.SIDE_SUPPORTS and src.kind is NodeKind.SIDE_CLAIM
                  and not (node.kind is NodeKind.CLAIM and node.role is ClaimRole.DELEGATED)):
                stack.append(e.source)
    return keep


def to_graph_text(case: AssuranceCase, style: DiagramStyle = DEFAULT_STYLE,
                  scope: str | None = None, levels: int | None = None) -> str:
    """DOT digraph of the case, or of the subtree under node id ``scope``."""
    if scope is not None and scope not in case:
        raise ScopeError(f"unknown scope node {scope!r}")
    if scope is None and levels is not None:
        tops = case.top_claims()
        scope = tops[0] if tops else None
    ids = (subtree(case, scope, levels) if scope is not None else set(case.nodes))

    out = io.StringIO()
    out.write("digraph assurance_case {\n")
    # Edges point from support to conclusion; BT puts the top claim on top.
    out.write("  rankdir=BT;\n")
    out.write('  node [fontname="Helvetica", fontsize=10];\n')
    out.write('  edge [arrowsize=0.7];\n')
    for node_id in sorted(ids):
        node = case.nodes[node_id]
        out.write(
            f"  {_quote(node_id)} [shape={style.shapes[node.kind]}, "
            f"style={_quote(style.styles.get(node.kind, 'filled'))}, "
            f"fillcolor={_quote(style.fill(node))}, label={_quote(_label(node, style.wrap))}];\n")
    edges = sorted({e for e in case.edges if e.source in ids and e.target in ids},
                   key=lambda e: (e.source, e.target, e.kind.value))
    for e in edges:
        attrs = [f"label={_quote(e.kind.value)}"]
        if e.kind is EdgeKind.SIDE_SUPPORTS:
            attrs.append("style=dashed")
        elif e.kind is EdgeKind.DEFEATS:
            status = case.nodes[e.source].status
            attrs.append(f"color={_quote(style.defeat_colors[status])}")
        out.write(f"  {_quote(e.source)} -> {_quote(e.target)} [{', '.join(attrs)}];\n")
    out.write("}\n")
    return out.getvalue()


# -- Markdown report ----------------------------------------------------------

def _cell_cell(status) -> str:
    if status.state is CellState.POPULATED:
        text = str(status.entry_count)
        if status.measurement_gaps:
            text += f" ({status.measurement_gaps} gap{'s' if status.measurement_gaps > 1 else ''})"
        return text
    if status.state is CellState.DELEGATED:
        if status.target is None:
            return "n/a (not occurred)"
        mark = "" if status.sound else " DANGLING"
        prefix = "measurement of " if status.delegation_kind.value == "measurement_of_cell" else ""
        return f"-> {prefix}{status.target.stage}{mark}"
    return "MISSING"


def _md(text: str) -> str:
    return text.replace("|", "\\|").replace("\n", " ")


def report_markdown(coverage: CoverageReport) -> str:
    lines = ["# Coverage", ""]
    lines.append(f"Frame: {coverage.frame_name}")
    lines.append(f"Verdict: {coverage.verdict.value}")
    lines.append(f"subcases: {coverage.subcases_populated}/{coverage.subcase_total}")
    lines.append("")
    from acasec.taxonomy import WORKSHEET_FACTORS

    phases: list[str] = []
    for status in coverage.cells:
        if status.cell.phase not in phases:
            phases.append(status.cell.phase)
    for phase in phases:
        title = coverage.phase_titles.get(phase, phase)
        lines.append(f"## {phase}: {title}")
        lines.append("")
        lines.append("| Stage | " + " | ".join(f.value for f in WORKSHEET_FACTORS) + " |")
        lines.append("|---" * (len(WORKSHEET_FACTORS) + 1) + "|")
        rows: dict[str, list] = {}
        for status in coverage.cells:
            if status.cell.phase == phase:
                rows.setdefault(status.stage_title or status.cell.stage, []).append(status)
        for stage_title, statuses in rows.items():
            lines.append(f"| {_md(stage_title)} | "
                         + " | ".join(_md(_cell_cell(s)) for s in statuses) + " |")
        lines.append("")

    missing = coverage.missing_cells
    if missing:
        lines.append("## Missing")
        lines.append("")
        lines.extend(f"- {s.cell}" for s in missing)
        lines.append("")
    gaps = [s for s in coverage.cells if s.measurement_gaps]
    if gaps:
        lines.append("## Measurement gaps")
        lines.append("")
        lines.extend(f"- {s.cell}: {s.measurement_gaps}" for s in gaps)
        lines.append("")
    if coverage.dangling:
        lines.append("## Dangling delegations")
        lines.append("")
        lines.extend(f"- {s.cell} -> {s.target}" for s in coverage.dangling)
        lines.append("")

    lines.append("# Defeaters")
    lines.append("")
    lines.append(f"open: {coverage.open_defeaters}, accepted residual: "
                 f"{coverage.accepted_residuals}")
    lines.append("")
    if not coverage.defeaters:
        lines.append("none")
    for d in coverage.defeaters:
        extra = f" (resolution: {d.resolution})" if d.resolution else ""
        lines.append(f"- [{d.status.value}] {d.target}: {d.text}{extra}")
    lines.append("")

    lines.append("# Warnings")
    lines.append("")
    if not coverage.warnings:
        lines.append("none")
    lines.extend(f"- {w}" for w in coverage.warnings)
    lines.append("")
    return "\n".join(lines)


# -- workbook writer ----------------------------------------------------------

def _format_confidence(value: float | None) -> str:
    return "" if value is None else repr(value)


def worksheet_rows(ws: Worksheet, frame: DecompositionFrame) -> list[list[str]]:
    with_conf = any(
        isinstance(b.content, PopulatedCell) and any(e.confidence is not None for e in b.content.entries)
        for b in ws.rows)
    header = list(WORKSHEET_HEADER) + ([CONFIDENCE_COLUMN] if with_conf else [])
    rows = [header]
    for block in ws.rows:
        title = frame.stage(ws.phase, block.stage).title
        content = block.content
        if isinstance(content, DelegationRef):
            row = [title, content.raw_text, "", content.measurement_text, ""]
            rows.append(row + ([""] if with_conf else []))
        elif isinstance(content, PopulatedCell):
            for k, entry in enumerate(content.entries, start=1):
                row = [
                    title if k == 1 else "",
                    content.sub_claim if k == 1 else "",
                    f"E{k}: {entry.evidence}",
                    f"MC{k}: {entry.measurement_claim}" if entry.measurement_claim else "",
                    f"ME{k}: {entry.measurement_evidence}" if entry.measurement_evidence else "",
                ]
                rows.append(row + ([_format_confidence(entry.confidence)] if with_conf else []))
        else:
            rows.append([title, "", "", "", ""] + ([""] if with_conf else []))
    return rows


def _write_csv(path: Path, rows: list[list[str]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)


def write_workbook(model: WorkbookModel, root: str | Path, frame: DecompositionFrame) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    _write_csv(root / MANIFEST_FILE, [["key", "value"]] + [[k, v] for k, v in model.manifest.items()])
    for (phase, factor), ws in sorted(model.worksheets.items(),
                                      key=lambda kv: (kv[0][0], kv[0][1].value)):
        _write_csv(root / worksheet_filename(phase, factor), worksheet_rows(ws, frame))
    if model.defeaters:
        _write_csv(root / DEFEATERS_FILE, [list(DEFEATERS_HEADER)] + [
            [d.target, d.text, d.status.value, d.resolution] for d in model.defeaters])
