"""Turn a frame plus a parsed workbook into a full assurance case graph.

The construction is a pure function of its inputs and all node ids are
derived from cell paths, so rebuilding the same workbook gives an identical
graph.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass

from acasec.ingest import (
    DefeaterRecord,
    DelegationKind,
    DelegationRef,
    PopulatedCell,
    WorkbookModel,
)
from acasec.model import (
    ArgumentKind,
    ArgumentNode,
    AssuranceCase,
    ClaimNode,
    ClaimRole,
    DefeaterNode,
    EdgeKind,
    EvidenceKind,
    EvidenceNode,
    SideClaimKind,
    SideClaimNode,
)
from acasec.taxonomy import (
    WORKSHEET_FACTORS,
    CellKey,
    DecompositionFrame,
    FactorId,
    worksheet_ids,
)

TOP = "TOP"

_ROLE_TOKENS = {
    "claim": "C",
    "decomposition": "D",
    "incorporation": "EI",
    "evidence": "E",
    "measurement_claim": "MC",
    "measurement_incorporation": "MEI",
    "measurement_evidence": "ME",
}
_ORDINAL_ROLES = {"evidence", "measurement_claim", "measurement_incorporation",
                  "measurement_evidence"}


class BuildError(ValueError):
    pass


class FrameMismatch(BuildError):
    pass


class DelegationChainError(BuildError):
    pass


class DefeaterTargetError(BuildError):
    pass


class DelegationStyle(str, enum.Enum):
    LINK_CLAIM = "link_claim"
    MERGE = "merge"


@dataclass(frozen=True)
class BuildOptions:
    include_defeaters: bool = True
    delegation_style: DelegationStyle = DelegationStyle.LINK_CLAIM
    id_scheme: str = "cell-path"

    def __post_init__(self) -> None:
        if self.id_scheme != "cell-path":
            raise ValueError(f"unsupported id scheme {self.id_scheme!r}")
        object.__setattr__(self, "delegation_style", DelegationStyle(self.delegation_style))


def path_id(*parts: str) -> str:
    return ".".join(parts)


def stable_id(cell: CellKey, role: str, ordinal: int | None = None) -> str:
    """Node id for a cell-level node, e.g. ``RE.requirement-analysis.MATERIAL.E2``."""
    try:
        token = _ROLE_TOKENS[role]
    except KeyError:
        raise ValueError(f"unknown node role {role!r}") from None
    if role in _ORDINAL_ROLES:
        if ordinal is None or ordinal < 1:
            raise ValueError(f"role {role!r} needs an ordinal >= 1")
        token = f"{token}{ordinal}"
    elif ordinal is not None:
        raise ValueError(f"role {role!r} takes no ordinal")
    return path_id(cell.phase, cell.stage, cell.factor.value, token)


def _sentence(template: str, **values: str) -> str:
    text = template.format(**values)
    return text[:1].upper() + text[1:]


class _Builder:
    def __init__(self, frame: DecompositionFrame, workbook: WorkbookModel,
                 options: BuildOptions) -> None:
        self.frame = frame
        self.wb = workbook
        self.options = options
        self.subject = workbook.subject
        meta = {k: v for k, v in workbook.manifest.items() if k != "frame"}
        self.case = AssuranceCase(frame.name, meta)

    def run(self) -> AssuranceCase:
        self._level1()
        for phase in self.frame.phases:
            self._phase(phase.id)
        self._link_delegations()
        if self.options.include_defeaters:
            for k, record in enumerate(self.wb.defeaters, start=1):
                self._defeater(k, record)
        return self.case

    # Level 1: top claim, substitution, side claim, phase decomposition.
    def _level1(self) -> None:
        c, f = self.case, self.frame
        top = c.add_node(ClaimNode(path_id(TOP, "C"),
                                   _sentence(f.top_claim_template, subject=self.subject),
                                   ClaimRole.TOP))
        sub = c.add_node(ArgumentNode(path_id(TOP, "SUB"), ArgumentKind.SUBSTITUTION,
                                      "Replace the safety claim with requirements compliance"))
        substituted = c.add_node(ClaimNode(
            path_id(TOP, "SC"), _sentence(f.substituted_claim_template, subject=self.subject),
            ClaimRole.SUBSTITUTED))
        side = c.add_node(SideClaimNode(
            path_id(TOP, "SIDE"), _sentence(f.side_claim_template, subject=self.subject),
            SideClaimKind.JUSTIFICATION))
        dec = c.add_node(ArgumentNode(path_id(TOP, "D"), ArgumentKind.DECOMPOSITION,
                                      "Decompose by lifecycle phase"))
        c.connect(sub, top, EdgeKind.CONCLUDES)
        c.connect(substituted, sub, EdgeKind.PREMISE)
        c.connect(side, sub, EdgeKind.SIDE_SUPPORTS)
        c.connect(dec, substituted, EdgeKind.CONCLUDES)
        for phase in f.phases:
            claim = c.add_node(ClaimNode(path_id(phase.id, "C"),
                                         _sentence(phase.claim_template, subject=self.subject),
                                         ClaimRole.PHASE))
            c.connect(claim, dec, EdgeKind.PREMISE)

    # Level 2 and 3 for one phase.
    def _phase(self, phase_id: str) -> None:
        c = self.case
        pdec = c.add_node(ArgumentNode(path_id(phase_id, "D"), ArgumentKind.DECOMPOSITION,
                                       "Decompose by lifecycle stage"))
        c.connect(pdec, path_id(phase_id, "C"), EdgeKind.CONCLUDES)
        for stage in self.frame.stages_of(phase_id):
            sclaim = c.add_node(ClaimNode(path_id(phase_id, stage.id, "C"),
                                          _sentence(self.frame.stage_claim_template,
                                                    stage=stage.title, subject=self.subject),
                                          ClaimRole.STAGE))
            c.connect(sclaim, pdec, EdgeKind.PREMISE)
            sdec = c.add_node(ArgumentNode(path_id(phase_id, stage.id, "D"),
                                           ArgumentKind.DECOMPOSITION, "Decompose by 5M1E factor"))
            c.connect(sdec, sclaim, EdgeKind.CONCLUDES)
            for factor in WORKSHEET_FACTORS:
                self._cell(CellKey(phase_id, stage.id, factor), sdec)

    def _factor_text(self, cell: CellKey) -> tuple[str, str]:
        stage = self.frame.stage(cell.phase, cell.stage)
        factor = self.frame.factor(cell.factor)
        return factor.title, stage.title

    def _cell(self, cell: CellKey, stage_dec: str) -> None:
        c = self.case
        block = self.wb.block(cell.phase, cell.stage, cell.factor)
        content = block.content if block is not None else None
        factor_title, stage_title = self._factor_text(cell)
        claim_id = stable_id(cell, "claim")

        if isinstance(content, DelegationRef):
            c.add_node(ClaimNode(claim_id, self._delegated_text(cell, content),
                                 ClaimRole.DELEGATED, cell))
            c.connect(claim_id, stage_dec, EdgeKind.PREMISE)
            return

        c.add_node(ClaimNode(claim_id, _sentence(self.frame.factor_claim_template,
                                                 factor=factor_title, stage=stage_title,
                                                 subject=self.subject),
                             ClaimRole.FACTOR, cell))
        c.connect(claim_id, stage_dec, EdgeKind.PREMISE)
        if not isinstance(content, PopulatedCell):
            # Missing content stays visible as an unsupported factor claim.
            return

        ei = c.add_node(ArgumentNode(stable_id(cell, "incorporation"),
                                     ArgumentKind.EVIDENCE_INCORPORATION, content.sub_claim))
        c.connect(ei, claim_id, EdgeKind.CONCLUDES)
        for k, entry in enumerate(content.entries, start=1):
            ev = c.add_node(EvidenceNode(stable_id(cell, "evidence", k),
                                         f"E{k}: {entry.evidence}", cell, k,
                                         EvidenceKind.PRIMARY, confidence=entry.confidence))
            c.connect(ev, ei, EdgeKind.EVIDENCES)
            if not entry.has_measurement:
                continue
            mc = c.add_node(SideClaimNode(stable_id(cell, "measurement_claim", k),
                                          f"MC{k}: {entry.measurement_claim}",
                                          SideClaimKind.MEASUREMENT))
            c.connect(mc, ev, EdgeKind.SIDE_SUPPORTS)
            mei = c.add_node(ArgumentNode(stable_id(cell, "measurement_incorporation", k),
                                          ArgumentKind.EVIDENCE_INCORPORATION,
                                          f"Measurement of E{k}"))
            c.connect(mei, mc, EdgeKind.CONCLUDES)
            me = c.add_node(EvidenceNode(stable_id(cell, "measurement_evidence", k),
                                         f"ME{k}: {entry.measurement_evidence}", cell, k,
                                         EvidenceKind.MEASUREMENT))
            c.connect(me, mei, EdgeKind.EVIDENCES)

    def _delegated_text(self, cell: CellKey, ref: DelegationRef) -> str:
        factor_title, stage_title = self._factor_text(cell)
        head = f"The {factor_title} of {stage_title}"
        if ref.kind is DelegationKind.NOT_OCCURRED:
            return f"{head} is not applicable because the stage did not occur"
        target_title = self.frame.stage(cell.phase, ref.target_stage).title
        if ref.kind is DelegationKind.MEASUREMENT_OF_CELL:
            return f"{head} is covered by the Measurement of {factor_title} of {target_title}"
        return f"{head} is covered by the {factor_title} of {target_title}"

    def _link_delegations(self) -> None:
        c = self.case
        for phase, factor in worksheet_ids(self.frame):
            ws = self.wb.worksheet(phase, factor)
            if ws is None:
                continue
            for block in ws.rows:
                ref = block.content
                if not isinstance(ref, DelegationRef) or ref.kind is DelegationKind.NOT_OCCURRED:
                    continue
                cell = CellKey(phase, block.stage, factor)
                target_block = ws.block(ref.target_stage)
                if isinstance(target_block.content, DelegationRef):
                    raise DelegationChainError(
                        f"{cell} delegates to {phase}/{ref.target_stage}/{factor.value}, "
                        "which is itself delegated")
                if not isinstance(target_block.content, PopulatedCell):
                    # Unpopulated target: no link; coverage flags it.
                    continue
                target = CellKey(phase, ref.target_stage, factor)
                delegated = stable_id(cell, "claim")
                if ref.kind is DelegationKind.CELL:
                    c.connect(stable_id(target, "claim"), delegated, EdgeKind.SIDE_SUPPORTS)
                else:
                    for k, entry in enumerate(target_block.content.entries, start=1):
                        if entry.has_measurement:
                            c.connect(stable_id(target, "measurement_claim", k), delegated,
                                      EdgeKind.SIDE_SUPPORTS)

    def _defeater(self, k: int, record: DefeaterRecord) -> None:
        try:
            target = resolve_target(self.frame, self.case, record.target)
        except DefeaterTargetError:
            # A draft workbook may lack the sheet holding the target; the
            # coverage report already flags the sheet, so skip the node.
            if target_worksheet(record.target) in self.wb.missing:
                return
            raise
        node = DefeaterNode(f"DF{k}", record.text, target, record.status,
                            record.resolution or None)
        self.case.add_node(node)
        self.case.connect(node.id, target, EdgeKind.DEFEATS)


_ITEM = re.compile(r"^(E|MC|ME)(\d+)$", re.IGNORECASE)
_ITEM_ROLES = {"E": "evidence", "MC": "measurement_claim", "ME": "measurement_evidence"}


def target_worksheet(target: str) -> tuple[str, FactorId] | None:
    """The ``(phase, factor)`` worksheet a defeater target points into, if any."""
    parts = [p.strip() for p in target.split("/")]
    if len(parts) < 3:
        return None
    try:
        return parts[0], FactorId(parts[2].upper())
    except ValueError:
        return None


def resolve_target(frame: DecompositionFrame, case: AssuranceCase, target: str) -> str:
    """Map ``PHASE[/Stage Title[/FACTOR[/E<k>]]]`` (or ``TOP``) to a node id."""
    parts = [p.strip() for p in target.split("/")]
    if parts == [TOP]:
        node_id = path_id(TOP, "C")
    else:
        phase = parts[0]
        if phase not in [p.id for p in frame.phases]:
            raise DefeaterTargetError(f"defeater target {target!r}: unknown phase {phase!r}")
        if len(parts) == 1:
            node_id = path_id(phase, "C")
        else:
            stage = frame.find_stage(phase, parts[1])
            if stage is None:
                raise DefeaterTargetError(f"defeater target {target!r}: unknown stage")
            if len(parts) == 2:
                node_id = path_id(phase, stage.id, "C")
            else:
                try:
                    factor = FactorId(parts[2].upper())
                except ValueError:
                    raise DefeaterTargetError(
                        f"defeater target {target!r}: unknown factor") from None
                if factor not in WORKSHEET_FACTORS:
                    raise DefeaterTargetError(f"defeater target {target!r}: unknown factor")
                cell = CellKey(phase, stage.id, factor)
                if len(parts) == 3:
                    node_id = stable_id(cell, "claim")
                else:
                    m = _ITEM.match(parts[3])
                    if not m or len(parts) > 4:
                        raise DefeaterTargetError(f"defeater target {target!r}: bad item")
                    node_id = stable_id(cell, _ITEM_ROLES[m.group(1).upper()], int(m.group(2)))
    if node_id not in case:
        raise DefeaterTargetError(f"defeater target {target!r} does not exist in the case")
    return node_id


def _check_alignment(frame: DecompositionFrame, workbook: WorkbookModel) -> None:
    if workbook.frame_name != frame.name:
        raise FrameMismatch(f"workbook was written for frame {workbook.frame_name!r}, "
                            f"not {frame.name!r}")
    expected = set(worksheet_ids(frame))
    extra = set(workbook.worksheets) - expected
    if extra:
        raise FrameMismatch(f"worksheets not in frame: {sorted(extra)}")
    for (phase, _), ws in workbook.worksheets.items():
        stages = [b.stage for b in ws.rows]
        allowed = [s.id for s in frame.stages_of(phase)]
        if any(s not in allowed for s in stages) or stages != [s for s in allowed if s in stages]:
            raise FrameMismatch(f"worksheet {phase}/{ws.factor.value} stages do not match frame")


def build_case(frame: DecompositionFrame, workbook: WorkbookModel,
               options: BuildOptions | None = None) -> AssuranceCase:
    options = options or BuildOptions()
    if options.delegation_style is DelegationStyle.MERGE:
        raise BuildError("delegation_style 'merge' is reserved and not implemented")
    _check_alignment(frame, workbook)
    return _Builder(frame, workbook, options).run()
