"""Completeness, measurement pairing and defeater audits."""

from __future__ import annotations

import enum
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import NamedTuple

from acasec.builder import target_worksheet
from acasec.ingest import (
    DelegationKind,
    DelegationRef,
    PopulatedCell,
    WorkbookModel,
    worksheet_filename,
)
from acasec.model import (
    AssuranceCase,
    DefeaterNode,
    DefeaterStatus,
    EdgeKind,
    NodeKind,
    SideClaimKind,
)
from acasec.taxonomy import (
    CellKey,
    DecompositionFrame,
    enumerate_cells,
    expected_subcase_count,
)


class CellState(str, enum.Enum):
    POPULATED = "populated"
    DELEGATED = "delegated"
    MISSING = "missing"


class Verdict(str, enum.Enum):
    COMPLETE = "complete"
    INCOMPLETE = "incomplete"


@dataclass(frozen=True)
class CellStatus:
    cell: CellKey
    state: CellState
    stage_title: str = ""
    entry_count: int = 0
    target: CellKey | None = None
    delegation_kind: DelegationKind | None = None
    # False when a delegation points at a cell that is not itself populated.
    sound: bool = True
    measurement_gaps: int = 0

    @property
    def covered(self) -> bool:
        if self.state is CellState.POPULATED:
            return True
        return self.state is CellState.DELEGATED and self.sound

    @property
    def subcases(self) -> int:
        """Covered subcases out of two: the factor one and its measurement."""
        if self.state is CellState.POPULATED:
            return 1 + (self.measurement_gaps == 0)
        return 2 if self.covered else 0


@dataclass(frozen=True)
class DefeaterSummary:
    target: str
    text: str
    status: DefeaterStatus
    resolution: str = ""


@dataclass(frozen=True)
class CoverageReport:
    frame_name: str
    cells: tuple[CellStatus, ...]
    subcase_total: int
    subcases_populated: int
    open_defeaters: int
    accepted_residuals: int
    warnings: tuple[str, ...]
    verdict: Verdict
    phase_titles: dict[str, str] = field(default_factory=dict)
    missing_worksheets: tuple[str, ...] = ()
    defeaters: tuple[DefeaterSummary, ...] = ()

    @property
    def missing_cells(self) -> list[CellStatus]:
        return [c for c in self.cells if c.state is CellState.MISSING]

    @property
    def dangling(self) -> list[CellStatus]:
        return [c for c in self.cells if c.state is CellState.DELEGATED and not c.sound]

    @property
    def measurement_gap_total(self) -> int:
        return sum(c.measurement_gaps for c in self.cells)

    def to_dict(self) -> dict:
        return {
            "frame_name": self.frame_name,
            "verdict": self.verdict.value,
            "subcase_total": self.subcase_total,
            "subcases_populated": self.subcases_populated,
            "open_defeaters": self.open_defeaters,
            "accepted_residuals": self.accepted_residuals,
            "missing_worksheets": list(self.missing_worksheets),
            "cells": [
                {
                    "cell": str(c.cell),
                    "state": c.state.value,
                    "entry_count": c.entry_count,
                    "target": str(c.target) if c.target else None,
                    "delegation_kind": c.delegation_kind.value if c.delegation_kind else None,
                    "sound": c.sound,
                    "measurement_gaps": c.measurement_gaps,
                }
                for c in self.cells
            ],
            "defeaters": [
                {"target": d.target, "text": d.text, "status": d.status.value,
                 "resolution": d.resolution}
                for d in self.defeaters
            ],
            "warnings": list(self.warnings),
        }


STANDING_SIDE_CLAIM_WARNING = (
    "the requirements completeness side claim at the top of the case has no evidence row"
)


def check_coverage(frame: DecompositionFrame, workbook: WorkbookModel) -> CoverageReport:
    warnings: list[str] = []
    first_pass: dict[CellKey, CellStatus] = {}
    cells = enumerate_cells(frame)

    for cell in cells:
        title = frame.stage(cell.phase, cell.stage).title
        block = workbook.block(cell.phase, cell.stage, cell.factor)
        content = block.content if block is not None else None
        if isinstance(content, PopulatedCell):
            gaps = 0
            for k, entry in enumerate(content.entries, start=1):
                if not entry.has_measurement:
                    gaps += 1
                    warnings.append(f"{cell} E{k}: measurement claim/evidence missing")
            first_pass[cell] = CellStatus(cell, CellState.POPULATED, title,
                                          len(content.entries), measurement_gaps=gaps)
        elif isinstance(content, DelegationRef):
            target = (CellKey(cell.phase, content.target_stage, cell.factor)
                      if content.target_stage else None)
            first_pass[cell] = CellStatus(cell, CellState.DELEGATED, title, target=target,
                                          delegation_kind=content.kind)
        else:
            first_pass[cell] = CellStatus(cell, CellState.MISSING, title)

    statuses: list[CellStatus] = []
    for cell in cells:
        status = first_pass[cell]
        if status.state is CellState.DELEGATED:
            if status.delegation_kind is DelegationKind.NOT_OCCURRED:
                warnings.append(f"{cell}: stage marked as not occurred")
            else:
                target = first_pass.get(status.target)
                if target is None or target.state is not CellState.POPULATED:
                    state = "missing" if target is None else target.state.value
                    warnings.append(f"{cell}: delegation target {status.target} is {state}")
                    status = replace(status, sound=False)
        elif status.state is CellState.MISSING:
            warnings.append(f"{cell}: no content")
        statuses.append(status)

    missing_sheets = tuple(worksheet_filename(p, f) for p, f in workbook.missing)
    for name in missing_sheets:
        warnings.append(f"worksheet {name} is missing")

    defeaters = tuple(DefeaterSummary(d.target, d.text, d.status, d.resolution)
                      for d in workbook.defeaters)
    open_count = sum(d.status is DefeaterStatus.OPEN for d in defeaters)
    accepted = sum(d.status is DefeaterStatus.ACCEPTED_RESIDUAL for d in defeaters)
    for d in defeaters:
        if d.status is DefeaterStatus.ACCEPTED_RESIDUAL:
            warnings.append(f"accepted residual risk on {d.target}: {d.text}")
        if target_worksheet(d.target) in workbook.missing:
            warnings.append(f"defeater on {d.target} is not attached: its worksheet is missing")
    warnings.append(STANDING_SIDE_CLAIM_WARNING)

    complete = (
        all(s.state is not CellState.MISSING for s in statuses)
        and all(s.measurement_gaps == 0 for s in statuses)
        and all(s.sound for s in statuses)
        and open_count == 0
    )
    return CoverageReport(
        frame_name=frame.name,
        cells=tuple(statuses),
        subcase_total=expected_subcase_count(frame),
        subcases_populated=sum(s.subcases for s in statuses),
        open_defeaters=open_count,
        accepted_residuals=accepted,
        warnings=tuple(warnings),
        verdict=Verdict.COMPLETE if complete else Verdict.INCOMPLETE,
        phase_titles={p.id: p.title for p in frame.phases},
        missing_worksheets=missing_sheets,
        defeaters=defeaters,
    )


class DefeaterPartition(NamedTuple):
    open: list[DefeaterNode]
    accepted: list[DefeaterNode]
    resolved: list[DefeaterNode]


def check_defeaters(case: AssuranceCase) -> DefeaterPartition:
    part = DefeaterPartition([], [], [])
    for node in case.iter_nodes(NodeKind.DEFEATER):
        if node.status is DefeaterStatus.OPEN:
            part.open.append(node)
        elif node.status is DefeaterStatus.ACCEPTED_RESIDUAL:
            part.accepted.append(node)
        else:
            part.resolved.append(node)
    return part


# -- confidence heuristic -----------------------------------------------------

CONFIDENCE_BANNER = (
    "Confidence scores are a heuristic roll-up of author-stated evidence confidence. "
    "They are not part of the decomposition method and carry no probabilistic meaning."
)


class Calculus(str, enum.Enum):
    WEAKEST_LINK = "weakest_link"
    AVERAGE = "average"


@dataclass(frozen=True)
class ConfidenceAssessment:
    scores: dict[str, float]
    calculus: Calculus
    notes: tuple[str, ...] = (CONFIDENCE_BANNER,)


def support_inputs(case: AssuranceCase) -> dict[str, list[str]]:
    """What each node's score is computed from.

    Claims and side claims draw on the arguments concluding them, arguments on
    their premises and evidence, evidence on the measurement side claims
    pointing at it.  Delegated claims draw on their cross-link sources.
    Side claims justifying an argument are not inputs.
    """
    inputs: dict[str, list[str]] = defaultdict(list)
    for e in case.edges:
        if e.kind in (EdgeKind.CONCLUDES, EdgeKind.PREMISE, EdgeKind.EVIDENCES):
            inputs[e.target].append(e.source)
        elif e.kind is EdgeKind.SIDE_SUPPORTS:
            kind = case.nodes[e.target].kind
            if kind in (NodeKind.EVIDENCE, NodeKind.CLAIM):
                inputs[e.target].append(e.source)
    return {k: sorted(v) for k, v in inputs.items()}


def _defeated(case: AssuranceCase) -> set[str]:
    return {n.target for n in case.iter_nodes(NodeKind.DEFEATER)
            if n.status is DefeaterStatus.OPEN}


def assess_confidence(case: AssuranceCase,
                      calculus: Calculus | str = Calculus.WEAKEST_LINK) -> ConfidenceAssessment:
    """Score claims from evidence confidence (default 1.0 when not stated).

    Arguments combine their inputs with ``min`` (weakest_link) or the
    arithmetic mean (average); claims take the weakest of their supporting
    arguments.  Anything without support scores 0, and an open defeater
    zeroes its target and everything that depends on it.
    """
    try:
        calculus = Calculus(calculus)
    except ValueError:
        raise ValueError(f"unknown calculus {calculus!r}") from None
    combine = min if calculus is Calculus.WEAKEST_LINK else (lambda xs: math.fsum(xs) / len(xs))
    inputs = support_inputs(case)
    defeated = _defeated(case)

    # Anything whose support closure touches a defeated node is zeroed.
    dependents: dict[str, list[str]] = defaultdict(list)
    for node_id, srcs in inputs.items():
        for s in srcs:
            dependents[s].append(node_id)
    tainted = set(defeated)
    stack = list(defeated)
    while stack:
        n = stack.pop()
        for m in dependents[n]:
            if m not in tainted:
                tainted.add(m)
                stack.append(m)

    memo: dict[str, float] = {}

    def score(node_id: str) -> float:
        if node_id in memo:
            return memo[node_id]
        node = case.nodes[node_id]
        srcs = inputs.get(node_id, [])
        if node_id in tainted:
            value = 0.0
        elif node.kind is NodeKind.EVIDENCE:
            own = 1.0 if node.confidence is None else node.confidence
            value = combine([own] + [score(s) for s in srcs])
        elif node.kind is NodeKind.ARGUMENT:
            value = combine([score(s) for s in srcs]) if srcs else 0.0
        else:
            value = min(score(s) for s in srcs) if srcs else 0.0
        memo[node_id] = value
        return value

    scores: dict[str, float] = {}
    # Supports-first order keeps recursion shallow on deep cases.
    for node_id in case.topological_order():
        score(node_id)
    for node in case.iter_nodes():
        if node.kind is NodeKind.CLAIM or (
                node.kind is NodeKind.SIDE_CLAIM and node.side_kind is SideClaimKind.MEASUREMENT):
            scores[node.id] = score(node.id)
    return ConfidenceAssessment(scores, calculus)
