"""Shared strategies and independent oracles for the test suite.

The oracles deliberately avoid the package's own parsing and scoring code so
they can catch mistakes in it.
"""

from __future__ import annotations

import csv
import string
from collections import defaultdict
from pathlib import Path

from hypothesis import strategies as st

from acasec.builder import build_case
from acasec.ingest import (
    DefeaterRecord,
    DelegationKind,
    DelegationRef,
    EvidenceEntry,
    PopulatedCell,
    StageBlock,
    WorkbookModel,
    Worksheet,
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
    NodeKind,
    SideClaimKind,
    SideClaimNode,
)
from acasec.taxonomy import (
    CellKey,
    DecompositionFrame,
    FactorId,
    LifecycleStage,
    Phase,
    slugify,
    worksheet_ids,
)

FIXTURES = Path(__file__).parent / "fixtures"
CASE_STUDY = FIXTURES / "case_study"
GOLDEN = FIXTURES / "golden"


# -- strategies ---------------------------------------------------------------

# No digits, colons or slashes: those would collide with label prefixes and
# the N/A delegation grammar.
_ALPHABET = string.ascii_letters + " ,.'\"()-éüß"
text = (st.text(_ALPHABET, min_size=1, max_size=30)
        .map(lambda s: " ".join(s.split()))
        .filter(bool))

_TITLE_WORDS = ["Alpha", "Beta", "Gamma", "Delta", "Review", "Audit", "Setup", "Design",
                "Closure", "Planning", "Release", "Monitoring", "Handling"]


@st.composite
def frames(draw) -> DecompositionFrame:
    n_phases = draw(st.integers(1, 3))
    phase_ids = draw(st.lists(st.sampled_from(["AA", "BB", "CC", "DD", "EE"]),
                              min_size=n_phases, max_size=n_phases, unique=True))
    phases = tuple(Phase(p, f"Phase {p}", f"Phase {p} of {{subject}} is acceptably safe")
                   for p in phase_ids)
    stages = []
    for p in phase_ids:
        titles = draw(st.lists(
            st.lists(st.sampled_from(_TITLE_WORDS), min_size=1, max_size=2).map(" ".join),
            min_size=1, max_size=4, unique_by=slugify))
        for k, title in enumerate(titles, start=1):
            stages.append(LifecycleStage(slugify(title), p, title, k,
                                         conditional=draw(st.booleans())))
    return DecompositionFrame(
        name=draw(st.sampled_from(["alt", "mini", "trial"])),
        phases=phases,
        stages=tuple(stages),
        top_claim_template="{subject} is acceptably safe",
        substituted_claim_template="{subject} meets all the requirements",
        side_claim_template="The requirements for {subject} are complete",
    )


@st.composite
def entries(draw, allow_gaps: bool = True) -> EvidenceEntry:
    measured = draw(st.booleans()) if allow_gaps else True
    conf = draw(st.none() | st.floats(0.0, 1.0, allow_nan=False))
    if measured:
        return EvidenceEntry(draw(text), draw(text), draw(text), conf)
    return EvidenceEntry(draw(text), confidence=conf)


@st.composite
def worksheet_blocks(draw, stages: list[LifecycleStage], allow_empty: bool = True,
                     allow_gaps: bool = True) -> tuple[StageBlock, ...]:
    choices = ["populated", "delegated"] + (["empty"] if allow_empty else [])
    plan = {s.id: draw(st.sampled_from(choices)) for s in stages}
    populated = [s for s in stages if plan[s.id] == "populated"]
    blocks = []
    for s in stages:
        what = plan[s.id]
        if what == "delegated" and populated and any(p.id != s.id for p in populated):
            target = draw(st.sampled_from([p for p in populated if p.id != s.id]))
            meas = draw(st.booleans())
            raw = f"N/A - covered in {'Measurement of ' if meas else ''}{target.title}"
            kind = DelegationKind.MEASUREMENT_OF_CELL if meas else DelegationKind.CELL
            mtext = draw(st.sampled_from(["", f"N/A - covered in Measurement of {target.title}"]))
            blocks.append(StageBlock(s.id, DelegationRef(kind, target.id, raw, mtext)))
        elif what == "delegated" and s.conditional:
            blocks.append(StageBlock(s.id, DelegationRef(DelegationKind.NOT_OCCURRED, None,
                                                         "N/A - not occurred")))
        elif what == "empty":
            blocks.append(StageBlock(s.id))
        else:
            ents = draw(st.lists(entries(allow_gaps), min_size=1, max_size=3))
            blocks.append(StageBlock(s.id, PopulatedCell(draw(text), tuple(ents))))
    return tuple(blocks)


@st.composite
def workbooks(draw, frame: DecompositionFrame | None = None, allow_empty: bool = True,
              allow_gaps: bool = True, with_defeaters: bool = True):
    frame = frame if frame is not None else draw(frames())
    sheets = {}
    for phase, factor in worksheet_ids(frame):
        blocks = draw(worksheet_blocks(frame.stages_of(phase), allow_empty, allow_gaps))
        sheets[(phase, factor)] = Worksheet(phase, factor, blocks)
    manifest = {"system_name": draw(text), "frame": frame.name,
                "top_claim_subject": draw(text)}
    if draw(st.booleans()):
        manifest["version"] = draw(text)
    defeaters = ()
    if with_defeaters:
        targets = ["TOP"] + [p.id for p in frame.phases] + [
            f"{s.phase}/{s.title}" for s in frame.stages] + [
            f"{s.phase}/{s.title}/{f.value}" for s in frame.stages for f in
            (FactorId.MAN, FactorId.METHOD)]
        recs = []
        for _ in range(draw(st.integers(0, 3))):
            status = draw(st.sampled_from(list(DefeaterStatus)))
            resolution = "" if status is DefeaterStatus.OPEN else draw(text)
            recs.append(DefeaterRecord(draw(st.sampled_from(targets)), draw(text), status,
                                       resolution))
        defeaters = tuple(recs)
    return frame, WorkbookModel(manifest, sheets, defeaters)


@st.composite
def built_cases(draw) -> AssuranceCase:
    frame, wb = draw(workbooks())
    return build_case(frame, wb)


@st.composite
def raw_cases(draw) -> AssuranceCase:
    """Hand-authored style graphs using every node and argument kind."""
    case = AssuranceCase(draw(text), draw(st.dictionaries(text, text, max_size=2)))
    case.add_node(ClaimNode("top", draw(text), ClaimRole.TOP))
    n = draw(st.integers(0, 12))
    cell = CellKey("AA", "stage", FactorId.MAN)
    for i in range(n):
        kind = draw(st.sampled_from(list(NodeKind)))
        nid = f"n{i}"
        if kind is NodeKind.CLAIM:
            role = draw(st.sampled_from([ClaimRole.GENERIC, ClaimRole.FACTOR, ClaimRole.DELEGATED,
                                         ClaimRole.STAGE]))
            case.add_node(ClaimNode(nid, draw(text), role, cell if role in (
                ClaimRole.FACTOR, ClaimRole.DELEGATED) else None))
        elif kind is NodeKind.SIDE_CLAIM:
            case.add_node(SideClaimNode(nid, draw(text), draw(st.sampled_from(list(SideClaimKind)))))
        elif kind is NodeKind.ARGUMENT:
            case.add_node(ArgumentNode(nid, draw(st.sampled_from(list(ArgumentKind))), draw(text)))
        elif kind is NodeKind.EVIDENCE:
            case.add_node(EvidenceNode(nid, draw(text), cell, draw(st.integers(1, 5)),
                                       draw(st.sampled_from(list(EvidenceKind))),
                                       draw(st.none() | text),
                                       draw(st.none() | st.floats(0, 1, allow_nan=False))))
        else:
            status = draw(st.sampled_from(list(DefeaterStatus)))
            case.add_node(DefeaterNode(nid, draw(text), "top", status,
                                       None if status is DefeaterStatus.OPEN else draw(text)))
    ids = sorted(case.nodes)
    for _ in range(draw(st.integers(0, 3 * len(ids)))):
        src, dst = draw(st.sampled_from(ids)), draw(st.sampled_from(ids))
        try:
            case.connect(src, dst, draw(st.sampled_from(list(EdgeKind))))
        except ModelError:
            pass
    return case


# -- oracles ------------------------------------------------------------------

def count_evidence_rows(root: Path) -> dict[str, int]:
    """Evidence rows per worksheet, read straight from the CSV files."""
    counts = {}
    for path in sorted(Path(root).glob("*__*.csv")):
        with open(path, newline="", encoding="utf-8-sig") as fh:
            rows = list(csv.DictReader(fh))
        counts[path.stem] = sum(1 for r in rows
                                if r["Evidence"].strip()
                                and not r["Evidence"].strip().upper().startswith("N/A"))
    return counts


def count_evidence_per_stage(path: Path) -> list[int]:
    """Evidence entries per stage block in one worksheet, in row order."""
    with open(path, newline="", encoding="utf-8-sig") as fh:
        rows = list(csv.DictReader(fh))
    out: list[int] = []
    for r in rows:
        if r["PDLC"].strip():
            out.append(0)
        if r["Evidence"].strip():
            out[-1] += 1
    return out


def weakest_link_oracle(case: AssuranceCase) -> dict[str, float]:
    """Brute force: a node's score is the minimum over its whole support closure.

    Any open defeater or unsupported node anywhere in the closure gives 0;
    otherwise the score is the smallest stated evidence confidence (default 1).
    """
    inputs: dict[str, set[str]] = defaultdict(set)
    for e in case.edges:
        src, dst = case.nodes[e.source], case.nodes[e.target]
        if e.kind in (EdgeKind.CONCLUDES, EdgeKind.PREMISE, EdgeKind.EVIDENCES):
            inputs[e.target].add(e.source)
        elif e.kind is EdgeKind.SIDE_SUPPORTS and dst.kind in (NodeKind.CLAIM, NodeKind.EVIDENCE):
            inputs[e.target].add(e.source)
    defeated = {n.target for n in case.nodes.values()
                if n.kind is NodeKind.DEFEATER and n.status is DefeaterStatus.OPEN}

    def closure(start: str) -> set[str]:
        seen, stack = {start}, [start]
        while stack:
            for m in inputs[stack.pop()]:
                if m not in seen:
                    seen.add(m)
                    stack.append(m)
        return seen

    scores = {}
    for node in case.nodes.values():
        if not (node.kind is NodeKind.CLAIM or (
                node.kind is NodeKind.SIDE_CLAIM and node.side_kind is SideClaimKind.MEASUREMENT)):
            continue
        reach = closure(node.id)
        if reach & defeated or any(
                not inputs[m] and case.nodes[m].kind is not NodeKind.EVIDENCE for m in reach):
            scores[node.id] = 0.0
            continue
        values = [1.0 if case.nodes[m].confidence is None else case.nodes[m].confidence
                  for m in reach if case.nodes[m].kind is NodeKind.EVIDENCE]
        scores[node.id] = min(values)
    return scores
