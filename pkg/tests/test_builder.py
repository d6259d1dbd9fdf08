from __future__ import annotations

import dataclasses

import pytest
from hypothesis import given

from acasec.builder import (
    BuildError,
    BuildOptions,
    DefeaterTargetError,
    DelegationChainError,
    DelegationStyle,
    FrameMismatch,
    build_case,
    resolve_target,
    stable_id,
)
from acasec.ingest import (
    DefeaterRecord,
    DelegationKind,
    DelegationRef,
    PopulatedCell,
    StageBlock,
    Worksheet,
    empty_workbook,
)
from acasec.model import (
    ArgumentKind,
    ClaimRole,
    EdgeKind,
    EvidenceKind,
    NodeKind,
    SideClaimKind,
    audit_structure,
)
from acasec.taxonomy import CellKey, FactorId
from tests.helpers import CASE_STUDY, count_evidence_rows, workbooks

MANIFEST = {"system_name": "s", "frame": "standard", "top_claim_subject": "the car"}


def node_count_law(frame, wb) -> int:
    """Expected node total recomputed from the workbook model."""
    stages = len(frame.stages)
    total = 5 + 2 * len(frame.phases) + 2 * stages + 5 * stages + len(wb.defeaters)
    for ws in wb.worksheets.values():
        for block in ws.rows:
            if isinstance(block.content, PopulatedCell):
                total += 1  # evidence incorporation argument
                for entry in block.content.entries:
                    total += 1 + (3 if entry.has_measurement else 0)
    return total


def kinds(case, kind):
    return [n for n in case.iter_nodes(kind)]


def test_level1_skeleton(frame):
    case = build_case(frame, empty_workbook(frame, MANIFEST))
    top = case.nodes["TOP.C"]
    assert top.role is ClaimRole.TOP and top.text == "The car is acceptably safe"
    assert case.nodes["TOP.SUB"].argument_kind is ArgumentKind.SUBSTITUTION
    assert case.nodes["TOP.SC"].text == "The car meets all the requirements"
    assert case.nodes["TOP.SIDE"].side_kind is SideClaimKind.JUSTIFICATION
    assert case.children_of("TOP.D") == ["PD.C", "RE.C", "VNV.C"]
    assert case.nodes["VNV.C"].text.startswith("The Verification and Validation (VnV) phase of")


def test_empty_workbook_structure(frame):
    wb = empty_workbook(frame, MANIFEST)
    case = build_case(frame, wb)
    assert len(case.nodes) == node_count_law(frame, wb) == 116
    factor_claims = [n for n in kinds(case, NodeKind.CLAIM) if n.role is ClaimRole.FACTOR]
    assert len(factor_claims) == 75
    assert all(case.children_of(n.id) == [] for n in factor_claims)
    assert audit_structure(case) == []


def test_case_study_counts(frame, workbook, case):
    e = sum(count_evidence_rows(CASE_STUDY).values())
    assert len(case.nodes) == node_count_law(frame, workbook)
    claims = [n for n in kinds(case, NodeKind.CLAIM)
              if n.role in (ClaimRole.FACTOR, ClaimRole.DELEGATED)]
    assert len(claims) == 75
    assert len(kinds(case, NodeKind.EVIDENCE)) == 2 * e
    measurement = [n for n in kinds(case, NodeKind.SIDE_CLAIM)
                   if n.side_kind is SideClaimKind.MEASUREMENT]
    assert len(measurement) == e
    assert audit_structure(case) == []


def test_cell_path_ids(case):
    cell = CellKey("VNV", "test-planning", FactorId.MAN)
    assert stable_id(cell, "claim") == "VNV.test-planning.MAN.C"
    assert stable_id(cell, "measurement_evidence", 2) == "VNV.test-planning.MAN.ME2"
    assert case.nodes["VNV.test-planning.MAN.E3"].label == "E3: Resume for the QA Lead"
    assert case.parent_argument_of("VNV.test-planning.MAN.E3") == "VNV.test-planning.MAN.EI"
    with pytest.raises(ValueError):
        stable_id(cell, "evidence")
    with pytest.raises(ValueError):
        stable_id(cell, "bogus")


def test_measurement_side_claims(case):
    ev = "PD.change-management.METHOD.E4"
    sources = [e.source for e in case.incoming(ev, EdgeKind.SIDE_SUPPORTS)]
    assert sources == ["PD.change-management.METHOD.MC4"]
    mc = case.nodes[sources[0]]
    assert mc.text == "MC4: The documented process re. safety case update has passed the audit check"
    mei = case.incoming(mc.id, EdgeKind.CONCLUDES)[0].source
    assert case.children_of(mei) == ["PD.change-management.METHOD.ME4"]
    assert case.nodes["PD.change-management.METHOD.ME4"].evidence_kind is EvidenceKind.MEASUREMENT


def test_find_by_cell_test_cycle_closure(case):
    found = case.find_by_cell(CellKey("VNV", "test-cycle-closure", FactorId.MAN))
    assert [n.kind for n in found].count(NodeKind.CLAIM) == 1
    assert [n.kind for n in found].count(NodeKind.EVIDENCE) == 2
    with_me = case.find_by_cell(CellKey("VNV", "test-cycle-closure", FactorId.MAN), True)
    assert len(with_me) == 5


def test_delegation_cross_links(case):
    spec = case.nodes["RE.requirement-specification.MATERIAL.C"]
    assert spec.role is ClaimRole.DELEGATED
    assert spec.text == ("The Material of Requirement Specification is covered by the "
                         "Material of Requirement Analysis")
    assert [e.source for e in case.incoming(spec.id, EdgeKind.SIDE_SUPPORTS)] == [
        "RE.requirement-analysis.MATERIAL.C"]
    check = "RE.requirement-checking.MATERIAL.C"
    assert sorted(e.source for e in case.incoming(check, EdgeKind.SIDE_SUPPORTS)) == [
        f"RE.requirement-analysis.MATERIAL.MC{k}" for k in (1, 2, 3)]
    # Delegated claims have no core support of their own.
    assert case.children_of(check) == []


def test_defeaters_attach(case):
    df = case.nodes["DF2"]
    assert df.target == "PD.operational-monitoring.METHOD.E2"
    assert case.outgoing("DF2") [0].kind is EdgeKind.DEFEATS
    no_df = build_case(*_inputs(case), BuildOptions(include_defeaters=False))
    assert not kinds(no_df, NodeKind.DEFEATER)


def _inputs(case):
    from acasec.ingest import parse_workbook
    from acasec.taxonomy import standard_frame
    frame = standard_frame()
    return frame, parse_workbook(CASE_STUDY, frame)


@pytest.mark.parametrize("target, expected", [
    ("TOP", "TOP.C"),
    ("VNV", "VNV.C"),
    ("VNV/test planning", "VNV.test-planning.C"),
    ("VNV/Test Planning/man", "VNV.test-planning.MAN.C"),
    ("VNV/Test Planning/MAN/ME2", "VNV.test-planning.MAN.ME2"),
    ("RE/Requirement Analysis/MATERIAL/mc3", "RE.requirement-analysis.MATERIAL.MC3"),
])
def test_resolve_target(frame, case, target, expected):
    assert resolve_target(frame, case, target) == expected


@pytest.mark.parametrize("target", [
    "XX", "VNV/Nope", "VNV/Test Planning/MEASUREMENT", "VNV/Test Planning/MAN/E9",
    "VNV/Test Planning/MAN/Q1", "RE/Requirement Specification/MATERIAL/E1",
])
def test_bad_defeater_targets(frame, workbook, target):
    wb = dataclasses.replace(workbook, defeaters=(DefeaterRecord(target, "doubt"),))
    with pytest.raises(DefeaterTargetError):
        build_case(frame, wb)


def _with_block(workbook, phase, factor, stage, content):
    ws = workbook.worksheet(phase, factor)
    rows = tuple(StageBlock(b.stage, content) if b.stage == stage else b for b in ws.rows)
    sheets = dict(workbook.worksheets)
    sheets[(phase, factor)] = Worksheet(phase, factor, rows)
    return dataclasses.replace(workbook, worksheets=sheets)


def test_defeater_into_missing_sheet_is_skipped(frame, workbook):
    sheets = dict(workbook.worksheets)
    del sheets[("PD", FactorId.METHOD)]
    draft = dataclasses.replace(workbook, worksheets=sheets, missing=(("PD", FactorId.METHOD),))
    case = build_case(frame, draft)
    assert "DF2" not in case and "DF1" in case
    # Without the draft marker the same target is an error.
    with pytest.raises(DefeaterTargetError):
        build_case(frame, dataclasses.replace(draft, missing=()))


def test_delegation_chain_rejected(frame, workbook):
    # Requirement Analysis now points at Elicitation, while Specification
    # still points at Analysis: a chain.
    ref = DelegationRef(DelegationKind.CELL, "requirement-elicitation",
                        "N/A - covered in Requirement Elicitation")
    wb = _with_block(workbook, "RE", FactorId.MATERIAL, "requirement-analysis", ref)
    with pytest.raises(DelegationChainError):
        build_case(frame, wb)


def test_delegation_to_empty_cell_builds_without_link(frame, workbook):
    wb = _with_block(workbook, "RE", FactorId.MATERIAL, "requirement-analysis", None)
    case = build_case(frame, wb)
    assert case.incoming("RE.requirement-specification.MATERIAL.C", EdgeKind.SIDE_SUPPORTS) == []


def test_not_occurred_claim(frame, workbook):
    ref = DelegationRef(DelegationKind.NOT_OCCURRED, None, "N/A - not occurred")
    wb = _with_block(workbook, "PD", FactorId.MAN, "incident-and-event-handling", ref)
    claim = build_case(frame, wb).nodes["PD.incident-and-event-handling.MAN.C"]
    assert claim.role is ClaimRole.DELEGATED
    assert claim.text.endswith("is not applicable because the stage did not occur")


def test_merge_style_is_reserved(frame, workbook):
    with pytest.raises(BuildError):
        build_case(frame, workbook, BuildOptions(delegation_style=DelegationStyle.MERGE))


def test_frame_mismatch(frame, workbook):
    wb = dataclasses.replace(workbook, manifest={**workbook.manifest, "frame": "other"})
    with pytest.raises(FrameMismatch):
        build_case(frame, wb)


def test_build_is_pure(frame, workbook):
    assert build_case(frame, workbook) == build_case(frame, workbook)


def test_core_stays_connected_without_side_nodes(case):
    """Dropping side claims, defeaters and their edges leaves one core tree."""
    core = {n.id for n in case.nodes.values()
            if n.kind in (NodeKind.CLAIM, NodeKind.ARGUMENT, NodeKind.EVIDENCE)}
    reached, stack = {"TOP.C"}, ["TOP.C"]
    while stack:
        for m in case.children_of(stack.pop()):
            if m not in reached:
                reached.add(m)
                stack.append(m)
    measurement_evidence = {n.id for n in case.iter_nodes(NodeKind.EVIDENCE)
                            if n.evidence_kind is EvidenceKind.MEASUREMENT}
    assert core - reached == measurement_evidence | {
        e.source for e in case.edges if e.kind is EdgeKind.CONCLUDES
        and case.nodes[e.target].kind is NodeKind.SIDE_CLAIM}


@given(workbooks())
def test_random_builds_are_sound(drawn):
    frame, wb = drawn
    case = build_case(frame, wb)
    assert len(case.nodes) == node_count_law(frame, wb)
    assert audit_structure(case) == []
    for ev in case.iter_nodes(NodeKind.EVIDENCE):
        if ev.evidence_kind is EvidenceKind.PRIMARY:
            assert len(case.incoming(ev.id, EdgeKind.SIDE_SUPPORTS)) <= 1
