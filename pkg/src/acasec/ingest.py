"""Template workbook reader.

A workbook is a directory::

    manifest.csv            key,value
    <PHASE>__<FACTOR>.csv   one worksheet per phase and worksheet factor
    defeaters.csv           optional, Target,Text,Status,Resolution

Worksheets carry the canonical five-column header.  A stage spans several
rows: the first names the stage and its sub-claim, the following rows leave
``PDLC`` blank and add one evidence entry each.
"""

from __future__ import annotations

import csv
import enum
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

from acasec.model import DefeaterStatus
from acasec.taxonomy import DecompositionFrame, FactorId, LifecycleStage, worksheet_ids

WORKSHEET_HEADER = (
    "PDLC",
    "Sub-claims",
    "Evidence",
    "Measurement Claim (MC)",
    "Measurement Evidence (ME)",
)
CONFIDENCE_COLUMN = "Confidence"
MANIFEST_FILE = "manifest.csv"
DEFEATERS_FILE = "defeaters.csv"
DEFEATERS_HEADER = ("Target", "Text", "Status", "Resolution")
REQUIRED_MANIFEST_KEYS = ("system_name", "frame", "top_claim_subject")
OPTIONAL_MANIFEST_KEYS = ("version", "author", "date")


# -- errors -------------------------------------------------------------------

class ParseError(Exception):
    def __init__(self, file: str | Path | None, message: str) -> None:
        self.file = str(file) if file is not None else None
        super().__init__(f"{Path(self.file).name}: {message}" if self.file else message)


class MissingWorksheet(ParseError):
    def __init__(self, root: str | Path, phase: str, factor: FactorId) -> None:
        self.phase, self.factor = phase, FactorId(factor)
        super().__init__(None, f"missing worksheet {worksheet_filename(phase, factor)} "
                               f"in {root}")


class HeaderMismatch(ParseError):
    def __init__(self, file, expected: tuple[str, ...], found: tuple[str, ...]) -> None:
        self.expected, self.found = expected, found
        detail = "header row is empty"
        for i in range(max(len(expected), len(found))):
            want = expected[i] if i < len(expected) else "<nothing>"
            got = found[i] if i < len(found) else "<nothing>"
            if want != got:
                detail = f"column {i + 1}: expected {want!r}, found {got!r}"
                break
        super().__init__(file, f"header mismatch, {detail}")


class UnknownStage(ParseError):
    def __init__(self, file, row: int, title: str) -> None:
        self.row, self.title = row, title
        what = f"unknown stage {title!r}" if title else "continuation row before any stage"
        super().__init__(file, f"row {row}: {what}")


class MissingStage(ParseError):
    def __init__(self, file, stage: str) -> None:
        self.stage = stage
        super().__init__(file, f"no row for stage {stage!r}")


class DanglingDelegation(ParseError):
    def __init__(self, file, stage: str, target: str, reason: str = "") -> None:
        self.stage, self.target = stage, target
        super().__init__(file, f"stage {stage!r} delegates to {target!r}"
                               f"{': ' + reason if reason else ', which is not a stage of this phase'}")


class DuplicateStage(ParseError):
    def __init__(self, file, title: str) -> None:
        self.title = title
        super().__init__(file, f"stage {title!r} appears more than once")


class EmptySubClaim(ParseError):
    def __init__(self, file, stage: str) -> None:
        self.stage = stage
        super().__init__(file, f"stage {stage!r} has evidence but no sub-claim")


class MalformedRow(ParseError):
    def __init__(self, file, row: int, message: str) -> None:
        self.row = row
        super().__init__(file, f"row {row}: {message}")


class ManifestError(ParseError):
    pass


class DefeaterFileError(ParseError):
    pass


class WorkbookErrors(ParseError):
    """Several problems found in one pass."""

    def __init__(self, errors: list[ParseError]) -> None:
        self.errors = errors
        super().__init__(None, f"{len(errors)} problems:\n" + "\n".join(f"  {e}" for e in errors))


def _raise_collected(errors: list[ParseError]) -> None:
    flat: list[ParseError] = []
    for e in errors:
        flat.extend(e.errors if isinstance(e, WorkbookErrors) else [e])
    if len(flat) == 1:
        raise flat[0]
    if flat:
        raise WorkbookErrors(flat)


# -- model --------------------------------------------------------------------

class DelegationKind(str, enum.Enum):
    CELL = "cell"
    MEASUREMENT_OF_CELL = "measurement_of_cell"
    # Conditional stage that did not happen; delegated to nothing.
    NOT_OCCURRED = "not_occurred"


@dataclass(frozen=True)
class EvidenceEntry:
    evidence: str
    measurement_claim: str = ""
    measurement_evidence: str = ""
    confidence: float | None = None

    @property
    def has_measurement(self) -> bool:
        return bool(self.measurement_claim.strip() and self.measurement_evidence.strip())


@dataclass(frozen=True)
class DelegationRef:
    kind: DelegationKind
    target_stage: str | None
    raw_text: str
    # Text found in the MC column of the delegated row, kept for round-trips.
    measurement_text: str = ""


@dataclass(frozen=True)
class PopulatedCell:
    sub_claim: str
    entries: tuple[EvidenceEntry, ...]


@dataclass(frozen=True)
class StageBlock:
    stage: str
    # None means the row exists but nothing has been filled in yet.
    content: PopulatedCell | DelegationRef | None = None

    @property
    def populated(self) -> bool:
        return isinstance(self.content, PopulatedCell)

    @property
    def delegated(self) -> bool:
        return isinstance(self.content, DelegationRef)


@dataclass(frozen=True)
class Worksheet:
    phase: str
    factor: FactorId
    rows: tuple[StageBlock, ...]

    def block(self, stage_id: str) -> StageBlock:
        for b in self.rows:
            if b.stage == stage_id:
                return b
        raise KeyError(stage_id)


@dataclass(frozen=True)
class DefeaterRecord:
    target: str
    text: str
    status: DefeaterStatus = DefeaterStatus.OPEN
    resolution: str = ""


@dataclass
class WorkbookModel:
    manifest: dict[str, str]
    worksheets: dict[tuple[str, FactorId], Worksheet]
    defeaters: tuple[DefeaterRecord, ...] = ()
    # Worksheets absent on disk; only non-empty when parsed with allow_missing.
    missing: tuple[tuple[str, FactorId], ...] = ()
    root: Path | None = field(default=None, compare=False)

    @property
    def frame_name(self) -> str:
        return self.manifest.get("frame", "")

    @property
    def subject(self) -> str:
        return self.manifest.get("top_claim_subject", "")

    def worksheet(self, phase: str, factor: FactorId | str) -> Worksheet | None:
        return self.worksheets.get((phase, FactorId(factor)))

    def block(self, phase: str, stage: str, factor: FactorId | str) -> StageBlock | None:
        ws = self.worksheet(phase, factor)
        if ws is None:
            return None
        try:
            return ws.block(stage)
        except KeyError:
            return None


def worksheet_filename(phase: str, factor: FactorId | str) -> str:
    return f"{phase}__{FactorId(factor).value}.csv"


# -- cell grammar -------------------------------------------------------------

_DELEGATION = re.compile(
    r"^\s*N\s*/\s*A\s*-\s*covered\s+in\s+(?P<meas>measurement\s+of\s+)?(?P<target>\S.*?)\s*$",
    re.IGNORECASE | re.DOTALL,
)
_NOT_OCCURRED = re.compile(r"^\s*N\s*/\s*A\s*-\s*not\s+occurred\s*$", re.IGNORECASE)


def parse_delegation(cell_text: str) -> DelegationRef | None:
    """Recognize ``N/A - covered in [Measurement of] <Stage Title>``.

    Returns None for ordinary content.  The target is returned as written
    (whitespace collapsed); the worksheet parser resolves it to a stage id.
    """
    if _NOT_OCCURRED.match(cell_text):
        return DelegationRef(DelegationKind.NOT_OCCURRED, None, cell_text)
    m = _DELEGATION.match(cell_text)
    if not m:
        return None
    kind = DelegationKind.MEASUREMENT_OF_CELL if m.group("meas") else DelegationKind.CELL
    return DelegationRef(kind, " ".join(m.group("target").split()), cell_text)


_PREFIXES = {
    "evidence": re.compile(r"^\s*E\d+\s*:\s*", re.IGNORECASE),
    "mc": re.compile(r"^\s*MC\d+\s*:\s*", re.IGNORECASE),
    "me": re.compile(r"^\s*ME\d+\s*:\s*", re.IGNORECASE),
}


def strip_label(text: str, column: str) -> str:
    """Drop an ``E3:``-style numbering prefix; ordinals come from row order."""
    return _PREFIXES[column].sub("", text, count=1).strip()


def _parse_confidence(file, row: int, text: str) -> float | None:
    if not text:
        return None
    try:
        value = float(text)
    except ValueError:
        raise MalformedRow(file, row, f"confidence {text!r} is not a number") from None
    if not 0.0 <= value <= 1.0:
        raise MalformedRow(file, row, f"confidence {value} outside [0, 1]")
    return value


# -- worksheet ----------------------------------------------------------------

def _read_rows(path: Path) -> list[list[str]]:
    with open(path, newline="", encoding="utf-8-sig") as fh:
        return [list(row) for row in csv.reader(fh)]


def parse_worksheet(file: str | Path, phase: str, factor: FactorId | str,
                    frame: DecompositionFrame) -> Worksheet:
    path = Path(file)
    factor = FactorId(factor)
    rows = _read_rows(path)
    header = tuple(c.strip() for c in rows[0]) if rows else ()
    while header and not header[-1]:
        header = header[:-1]
    if header not in (WORKSHEET_HEADER, WORKSHEET_HEADER + (CONFIDENCE_COLUMN,)):
        raise HeaderMismatch(path, WORKSHEET_HEADER, header)
    width = len(header)

    errors: list[ParseError] = []
    blocks: dict[str, StageBlock] = {}
    current: str | None = None
    # (stage id, sub_claim, entries) for the stage being accumulated.
    pending: dict[str, tuple[str, list[EvidenceEntry]]] = {}
    row_of: dict[str, int] = {}

    for lineno, raw in enumerate(rows[1:], start=2):
        cells = [c.strip() for c in raw] + [""] * width
        extra = [c for c in cells[width:] if c]
        if extra:
            errors.append(MalformedRow(path, lineno, f"{len(extra)} cells beyond the header"))
            continue
        pdlc, sub, ev, mc, me = cells[:5]
        conf_text = cells[5] if width == 6 else ""
        if not any(cells[:width]):
            continue

        try:
            confidence = _parse_confidence(path, lineno, conf_text)
        except ParseError as exc:
            errors.append(exc)
            continue

        if pdlc:
            stage = frame.find_stage(phase, pdlc)
            if stage is None:
                errors.append(UnknownStage(path, lineno, pdlc))
                current = None
                continue
            if stage.id in row_of:
                errors.append(DuplicateStage(path, stage.title))
                current = None
                continue
            current = stage.id
            row_of[stage.id] = lineno

            delegation = parse_delegation(sub) if sub else (parse_delegation(ev) if ev else None)
            if delegation is not None:
                # Delegation text goes in Sub-claims (or Evidence) and optionally MC.
                if (sub and ev) or me:
                    errors.append(MalformedRow(path, lineno, "delegated stage carries content"))
                    continue
                blocks[stage.id] = StageBlock(stage.id, replace(delegation, measurement_text=mc))
                continue
            if not (sub or ev or mc or me):
                blocks[stage.id] = StageBlock(stage.id, None)
                continue
            if not sub:
                errors.append(EmptySubClaim(path, stage.title))
                continue
            if not ev:
                errors.append(MalformedRow(path, lineno, f"stage {stage.title!r} has a "
                                                         "sub-claim but no evidence"))
                continue
            pending[stage.id] = (sub, [_entry(ev, mc, me, confidence)])
            continue

        # Continuation row.
        if current is None:
            if not row_of:
                errors.append(UnknownStage(path, lineno, ""))
            continue
        if current not in pending:
            errors.append(MalformedRow(path, lineno,
                                       "continuation row under a stage without evidence"))
            continue
        sub_claim, entries = pending[current]
        if sub and sub != sub_claim:
            errors.append(MalformedRow(path, lineno, "continuation row repeats a different "
                                                     "sub-claim"))
            continue
        if not ev:
            errors.append(MalformedRow(path, lineno, "measurement columns without evidence"))
            continue
        entries.append(_entry(ev, mc, me, confidence))

    for stage_id, (sub_claim, entries) in pending.items():
        blocks[stage_id] = StageBlock(stage_id, PopulatedCell(sub_claim, tuple(entries)))

    ordered: list[StageBlock] = []
    for stage in frame.stages_of(phase):
        block = blocks.get(stage.id)
        if block is None:
            if stage.id not in row_of:
                errors.append(MissingStage(path, stage.title))
            continue
        if isinstance(block.content, DelegationRef):
            try:
                block = replace(block, content=_resolve(path, frame, phase, stage, block.content))
            except ParseError as exc:
                errors.append(exc)
                continue
        ordered.append(block)

    _raise_collected(errors)
    return Worksheet(phase, factor, tuple(ordered))


def _entry(ev: str, mc: str, me: str, confidence: float | None) -> EvidenceEntry:
    return EvidenceEntry(
        evidence=strip_label(ev, "evidence"),
        measurement_claim=strip_label(mc, "mc"),
        measurement_evidence=strip_label(me, "me"),
        confidence=confidence,
    )


def _resolve(path: Path, frame: DecompositionFrame, phase: str, stage: LifecycleStage,
             ref: DelegationRef) -> DelegationRef:
    if ref.kind is DelegationKind.NOT_OCCURRED:
        if not stage.conditional:
            raise DanglingDelegation(path, stage.title, "nothing",
                                     "only conditional stages may be marked not occurred")
        return ref
    target = frame.find_stage(phase, ref.target_stage or "")
    if target is None:
        raise DanglingDelegation(path, stage.title, ref.target_stage or "")
    if target.id == stage.id:
        raise DanglingDelegation(path, stage.title, target.title, "a stage cannot cover itself")
    return replace(ref, target_stage=target.id)


# -- manifest and defeaters ---------------------------------------------------

def parse_manifest(path: str | Path) -> dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise ManifestError(path, "manifest file not found")
    rows = [r for r in _read_rows(path) if any(c.strip() for c in r)]
    if not rows or [c.strip() for c in rows[0][:2]] != ["key", "value"]:
        raise ManifestError(path, "expected header 'key,value'")
    manifest: dict[str, str] = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) < 2 or any(c.strip() for c in row[2:]):
            raise ManifestError(path, f"row {lineno}: expected two columns")
        key, value = row[0].strip(), row[1].strip()
        if key in manifest:
            raise ManifestError(path, f"duplicate key {key!r}")
        manifest[key] = value
    missing = [k for k in REQUIRED_MANIFEST_KEYS if not manifest.get(k)]
    if missing:
        raise ManifestError(path, f"missing required keys {missing}")
    return manifest


_TARGET = re.compile(r"^[^/]+(/[^/]+){0,3}$")


def parse_defeaters(path: str | Path) -> tuple[DefeaterRecord, ...]:
    path = Path(path)
    rows = _read_rows(path)
    header = tuple(c.strip() for c in rows[0]) if rows else ()
    if header != DEFEATERS_HEADER:
        raise HeaderMismatch(path, DEFEATERS_HEADER, header)
    records = []
    for lineno, raw in enumerate(rows[1:], start=2):
        cells = [c.strip() for c in raw] + [""] * 4
        if not any(cells):
            continue
        target, text, status, resolution = cells[:4]
        if not _TARGET.match(target):
            raise DefeaterFileError(path, f"row {lineno}: bad target {target!r}")
        if not text:
            raise DefeaterFileError(path, f"row {lineno}: empty defeater text")
        try:
            st = DefeaterStatus(status.casefold() if status else "open")
        except ValueError:
            raise DefeaterFileError(path, f"row {lineno}: unknown status {status!r}") from None
        if st is not DefeaterStatus.OPEN and not resolution:
            raise DefeaterFileError(path, f"row {lineno}: {st.value} defeater needs a resolution")
        records.append(DefeaterRecord(target, text, st, resolution))
    return tuple(records)


# -- workbook -----------------------------------------------------------------

def parse_workbook(root: str | Path, frame: DecompositionFrame,
                   allow_missing: bool = False) -> WorkbookModel:
    """Read and schema-check a whole workbook directory.

    With ``allow_missing`` absent worksheets are recorded on the model
    instead of raising :class:`MissingWorksheet`, so coverage checks can
    report them as missing cells.
    """
    root = Path(root)
    if not root.is_dir():
        raise ParseError(root, "workbook directory not found")
    manifest = parse_manifest(root / MANIFEST_FILE)

    errors: list[ParseError] = []
    sheets: dict[tuple[str, FactorId], Worksheet] = {}
    missing: list[tuple[str, FactorId]] = []
    for phase, factor in worksheet_ids(frame):
        path = root / worksheet_filename(phase, factor)
        if not path.is_file():
            if allow_missing:
                missing.append((phase, factor))
            else:
                errors.append(MissingWorksheet(root, phase, factor))
            continue
        try:
            sheets[(phase, factor)] = parse_worksheet(path, phase, factor, frame)
        except ParseError as exc:
            errors.append(exc)

    defeaters: tuple[DefeaterRecord, ...] = ()
    dpath = root / DEFEATERS_FILE
    if dpath.is_file():
        try:
            defeaters = parse_defeaters(dpath)
        except ParseError as exc:
            errors.append(exc)

    _raise_collected(errors)
    return WorkbookModel(manifest, sheets, defeaters, tuple(missing), root)


def empty_workbook(frame: DecompositionFrame, manifest: Mapping[str, str]) -> WorkbookModel:
    """A workbook with every stage row present and nothing filled in."""
    sheets = {
        (phase, factor): Worksheet(phase, factor, tuple(StageBlock(s.id) for s in frame.stages_of(phase)))
        for phase, factor in worksheet_ids(frame)
    }
    return WorkbookModel(dict(manifest), sheets)
