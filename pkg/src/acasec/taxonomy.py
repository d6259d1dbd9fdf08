"""Decomposition frames: phases, lifecycle stages and 5M1E factors.

A frame fixes the expected shape of an assurance case.  Level 1 splits the
top claim into phases, level 2 splits each phase into its lifecycle stages and
level 3 splits each stage into the five worksheet factors.  Measurement is the
sixth factor but never gets its own worksheet; it lives in the MC/ME columns
of the other five.
"""

from __future__ import annotations

import csv
import enum
import io
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path


class FrameError(ValueError):
    """Raised when a frame definition is malformed or violates an invariant."""


class FactorId(str, enum.Enum):
    MAN = "MAN"
    MACHINE = "MACHINE"
    METHOD = "METHOD"
    MATERIAL = "MATERIAL"
    ENVIRONMENT = "ENVIRONMENT"
    MEASUREMENT = "MEASUREMENT"


class Layer(str, enum.Enum):
    CORE = "core"
    INNER = "inner"
    OUTER = "outer"
    OUTERMOST = "outermost"


# Fixed enumeration order for cells, worksheets and reports.
WORKSHEET_FACTORS: tuple[FactorId, ...] = (
    FactorId.MAN,
    FactorId.MACHINE,
    FactorId.METHOD,
    FactorId.MATERIAL,
    FactorId.ENVIRONMENT,
)


@dataclass(frozen=True)
class Phase:
    id: str
    title: str
    claim_template: str

    def __post_init__(self) -> None:
        if not self.id or not _TOKEN.fullmatch(self.id):
            raise FrameError(f"phase id {self.id!r} is not a short token")
        if self.id.upper() == "TOP":
            raise FrameError("phase id TOP is reserved")
        if not self.title.strip():
            raise FrameError(f"phase {self.id}: empty title")
        if not self.claim_template.strip():
            raise FrameError(f"phase {self.id}: empty claim template")


@dataclass(frozen=True)
class LifecycleStage:
    id: str
    phase: str
    title: str
    ordinal: int
    goal: str = ""
    # Stage only applies when something happened (e.g. incident handling).
    conditional: bool = False


@dataclass(frozen=True)
class Factor:
    id: FactorId
    title: str
    layer: Layer
    definition: str


@dataclass(frozen=True, order=True)
class CellKey:
    phase: str
    stage: str
    factor: FactorId

    def __str__(self) -> str:
        return f"{self.phase}/{self.stage}/{self.factor.value}"


STANDARD_FACTORS: tuple[Factor, ...] = (
    Factor(FactorId.MAN, "Man (Human)", Layer.INNER,
           "The roles or personnel responsible for creating the Material."),
    Factor(FactorId.MACHINE, "Machine", Layer.INNER,
           "The tools or technologies used to support the creation of Material."),
    Factor(FactorId.METHOD, "Method", Layer.INNER,
           "The processes or techniques used to transform Material."),
    Factor(FactorId.MATERIAL, "Material", Layer.CORE,
           "The input, intermediate, and output artefacts. "
           "Example: datasets, requirements, test results."),
    Factor(FactorId.ENVIRONMENT, "Environment", Layer.OUTER,
           "The organizational context, policies, and physical conditions that "
           "enforce the Method, maintain the Machine, support Man, and protect Material."),
    Factor(FactorId.MEASUREMENT, "Measurement", Layer.OUTERMOST,
           "The evaluation and monitoring of all other factors, ensuring that each "
           "component (Man, Machine, Method, Material, and Environment) is assessed "
           "for quality, reliability, and safety."),
)


@dataclass(frozen=True)
class DecompositionFrame:
    name: str
    phases: tuple[Phase, ...]
    stages: tuple[LifecycleStage, ...]
    top_claim_template: str
    substituted_claim_template: str
    side_claim_template: str
    stage_claim_template: str = "The {stage} is appropriate"
    factor_claim_template: str = "The {factor} of {stage} is appropriate"
    factors: tuple[Factor, ...] = field(default=STANDARD_FACTORS)

    def __post_init__(self) -> None:
        _validate(self)

    def phase(self, phase_id: str) -> Phase:
        for p in self.phases:
            if p.id == phase_id:
                return p
        raise KeyError(phase_id)

    def stages_of(self, phase_id: str) -> tuple[LifecycleStage, ...]:
        return tuple(s for s in self.stages if s.phase == phase_id)

    def stage(self, phase_id: str, stage_id: str) -> LifecycleStage:
        for s in self.stages:
            if s.phase == phase_id and s.id == stage_id:
                return s
        raise KeyError(f"{phase_id}/{stage_id}")

    def find_stage(self, phase_id: str, title: str) -> LifecycleStage | None:
        """Match a stage title within one phase, ignoring case and spacing."""
        wanted = normalize_title(title)
        for s in self.stages_of(phase_id):
            if normalize_title(s.title) == wanted or s.id == wanted.replace(" ", "-"):
                return s
        return None

    def factor(self, factor_id: FactorId | str) -> Factor:
        fid = FactorId(factor_id)
        for f in self.factors:
            if f.id is fid:
                return f
        raise KeyError(factor_id)


_TOKEN = re.compile(r"[A-Za-z][A-Za-z0-9_]*")
_STAGE_ID = re.compile(r"[a-z0-9]+(?:-[a-z0-9]+)*")


def normalize_title(text: str) -> str:
    return " ".join(text.split()).casefold()


def slugify(title: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", title.casefold()).strip("-")


def _validate(frame: DecompositionFrame) -> None:
    if not frame.name.strip():
        raise FrameError("frame name is empty")
    if not frame.phases:
        raise FrameError("frame needs at least one phase")
    for attr in ("top_claim_template", "substituted_claim_template", "side_claim_template",
                 "stage_claim_template", "factor_claim_template"):
        if not getattr(frame, attr).strip():
            raise FrameError(f"{attr} is empty")

    phase_ids = [p.id for p in frame.phases]
    if len(set(phase_ids)) != len(phase_ids):
        raise FrameError(f"duplicate phase ids in {phase_ids}")

    if [f.id for f in frame.factors] != [f.id for f in STANDARD_FACTORS]:
        raise FrameError("a frame carries exactly the six 5M1E factors in fixed order")
    measurement = frame.factor(FactorId.MEASUREMENT)
    if measurement.layer is not Layer.OUTERMOST:
        raise FrameError("MEASUREMENT must be the outermost layer")

    seen_ids: set[tuple[str, str]] = set()
    seen_titles: set[tuple[str, str]] = set()
    for s in frame.stages:
        if s.phase not in phase_ids:
            raise FrameError(f"stage {s.title!r} references unknown phase {s.phase!r}")
        if not s.title.strip():
            raise FrameError(f"stage in phase {s.phase} has an empty title")
        if not _STAGE_ID.fullmatch(s.id):
            raise FrameError(f"stage id {s.id!r} must be lowercase letters, digits and dashes")
        key = (s.phase, normalize_title(s.title))
        if key in seen_titles:
            raise FrameError(f"duplicate stage title {s.title!r} in phase {s.phase}")
        seen_titles.add(key)
        if (s.phase, s.id) in seen_ids:
            raise FrameError(f"duplicate stage id {s.id!r} in phase {s.phase}")
        seen_ids.add((s.phase, s.id))

    for p in frame.phases:
        stages = frame.stages_of(p.id)
        if not stages:
            raise FrameError(f"phase {p.id} has no stages")
        if [s.ordinal for s in stages] != list(range(1, len(stages) + 1)):
            raise FrameError(f"stage ordinals of phase {p.id} are not contiguous from 1")

    # Stages must be grouped by phase in phase order so enumeration is stable.
    order = [phase_ids.index(s.phase) for s in frame.stages]
    if order != sorted(order):
        raise FrameError("stages must be listed phase by phase in phase order")


def enumerate_cells(frame: DecompositionFrame) -> list[CellKey]:
    return [
        CellKey(stage.phase, stage.id, factor)
        for stage in frame.stages
        for factor in WORKSHEET_FACTORS
    ]


def expected_subcase_count(frame: DecompositionFrame) -> int:
    # One factor subcase plus one paired measurement subcase per cell.
    return 2 * len(enumerate_cells(frame))


def worksheet_ids(frame: DecompositionFrame) -> list[tuple[str, FactorId]]:
    return [(p.id, f) for p in frame.phases for f in WORKSHEET_FACTORS]


def standard_frame() -> DecompositionFrame:
    """The SDV frame: RE, VnV and PD phases with their lifecycle stages."""
    phases = (
        Phase("RE", "Requirement Engineering",
              "The Requirement Engineering (RE) phase of {subject} is acceptably safe"),
        Phase("VNV", "Verification and Validation",
              "The Verification and Validation (VnV) phase of {subject} is acceptably safe"),
        Phase("PD", "Post-Deployment",
              "The Post-Deployment (PD) phase of {subject} is acceptably safe"),
    )
    rows = {
        "RE": [
            ("Requirement Elicitation",
             "To understand the needs for the product and gather high-level "
             "requirements from stakeholders."),
            ("Requirement Analysis",
             "To refine, prioritize, and resolve conflicts in the gathered requirements."),
            ("Requirement Specification",
             "To document the formal, testable, and unambiguous requirements in a "
             "structured, clear, and traceable format."),
            ("Requirement Checking",
             "To ensure that the requirements meet stakeholder needs and are feasible "
             "for implementation."),
            ("Requirement Management",
             "To track changes, maintain traceability, and manage versions of the requirements."),
        ],
        "VNV": [
            ("Test Requirement Analysis", "To determine the required procedures for testing."),
            ("Test Planning", "To define the strategy and scope for testing."),
            ("Test Case Design", "To create detailed test cases."),
            ("Test Environment Setup", "To prepare the HW and SW conditions for testing."),
            ("Test Execution", "To run the test cases and log results."),
            ("Test Cycle Closure", "To evaluate the testing process and outcomes."),
        ],
        "PD": [
            ("Operational Monitoring",
             "To ensure the ADS continues to operate safely and securely, and as "
             "intended in real-world conditions."),
            ("Incident and Event Handling",
             "To respond effectively to safety-critical events and prevent recurrence."),
            ("Change Management",
             "To identify, assess, implement, and validate changes to the ADS once it "
             "is deployed."),
            ("Field Update and Maintenance",
             "To maintain and improve system performance without compromising safety."),
        ],
    }
    stages = tuple(
        LifecycleStage(
            id=slugify(title),
            phase=phase_id,
            title=title,
            ordinal=i,
            goal=goal,
            conditional=(title == "Incident and Event Handling"),
        )
        for phase_id, items in rows.items()
        for i, (title, goal) in enumerate(items, start=1)
    )
    return DecompositionFrame(
        name="standard",
        phases=phases,
        stages=stages,
        top_claim_template="{subject} is acceptably safe",
        substituted_claim_template="{subject} meets all the requirements",
        side_claim_template=(
            "The requirements being used for testing {subject} are complete and correct"
        ),
    )


# -- frame-definition documents ------------------------------------------------

_FRAME_KEYS = {
    "name", "top_claim_template", "substituted_claim_template", "side_claim_template",
    "stage_claim_template", "factor_claim_template",
}
_PHASE_KEYS = {"id", "title", "claim_template"}
_STAGE_KEYS = {"id", "phase", "title", "goal", "conditional"}
_SECTION = re.compile(r"^\[(frame|phase|stage)\]$")


def _sections(document: str) -> list[tuple[str, dict[str, str], int]]:
    sections: list[tuple[str, dict[str, str], int]] = []
    current: dict[str, str] | None = None
    reader = csv.reader(io.StringIO(document))
    for row in reader:
        line = reader.line_num
        cells = [c.strip() for c in row]
        if not cells or not any(cells) or cells[0].startswith("#"):
            continue
        m = _SECTION.match(cells[0])
        if m and not any(cells[1:]):
            current = {}
            sections.append((m.group(1), current, line))
            continue
        if current is None:
            raise FrameError(f"line {line}: content before the first section header")
        if len(cells) < 2 or len([c for c in cells[2:] if c]) > 0:
            raise FrameError(f"line {line}: expected a key,value pair")
        key, value = cells[0], cells[1]
        if key in current:
            raise FrameError(f"line {line}: duplicate key {key!r}")
        current[key] = value
    return sections


def _check_keys(kind: str, data: dict[str, str], allowed: set[str],
                required: set[str], line: int) -> None:
    unknown = set(data) - allowed
    if unknown:
        raise FrameError(f"[{kind}] at line {line}: unknown keys {sorted(unknown)}")
    missing = required - set(data)
    if missing:
        raise FrameError(f"[{kind}] at line {line}: missing keys {sorted(missing)}")


def load_frame(document: str) -> DecompositionFrame:
    """Parse a frame-definition document.

    The document is CSV-lexed.  ``[frame]``, ``[phase]`` and ``[stage]`` lines
    open sections; every other non-blank line is a ``key,value`` pair.  Lines
    starting with ``#`` are comments.  Stage ordinals follow document order.
    """
    sections = _sections(document)
    frames = [s for s in sections if s[0] == "frame"]
    if len(frames) != 1:
        raise FrameError(f"expected exactly one [frame] section, found {len(frames)}")
    _, fdata, fline = frames[0]
    _check_keys("frame", fdata, _FRAME_KEYS,
                {"name", "top_claim_template", "substituted_claim_template",
                 "side_claim_template"}, fline)

    phases: list[Phase] = []
    stage_rows: list[tuple[dict[str, str], int]] = []
    for kind, data, line in sections:
        if kind == "phase":
            _check_keys(kind, data, _PHASE_KEYS, _PHASE_KEYS, line)
            phases.append(Phase(data["id"], data["title"], data["claim_template"]))
        elif kind == "stage":
            _check_keys(kind, data, _STAGE_KEYS, {"phase", "title"}, line)
            stage_rows.append((data, line))

    phase_ids = [p.id for p in phases]
    counters: dict[str, int] = {}
    grouped: dict[str, list[LifecycleStage]] = {pid: [] for pid in phase_ids}
    for data, line in stage_rows:
        pid = data["phase"]
        if pid not in grouped:
            raise FrameError(f"[stage] at line {line}: unknown phase {pid!r}")
        counters[pid] = counters.get(pid, 0) + 1
        conditional = data.get("conditional", "false").casefold()
        if conditional not in ("true", "false"):
            raise FrameError(f"[stage] at line {line}: conditional must be true or false")
        grouped[pid].append(LifecycleStage(
            id=data.get("id") or slugify(data["title"]),
            phase=pid,
            title=data["title"],
            ordinal=counters[pid],
            goal=data.get("goal", ""),
            conditional=conditional == "true",
        ))

    kwargs = {k: v for k, v in fdata.items()}
    return DecompositionFrame(
        phases=tuple(phases),
        stages=tuple(s for pid in phase_ids for s in grouped[pid]),
        **kwargs,
    )


def dump_frame(frame: DecompositionFrame) -> str:
    """Inverse of :func:`load_frame`."""
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["[frame]"])
    for key in ("name", "top_claim_template", "substituted_claim_template",
                "side_claim_template", "stage_claim_template", "factor_claim_template"):
        w.writerow([key, getattr(frame, key)])
    for p in frame.phases:
        out.write("\n")
        w.writerow(["[phase]"])
        w.writerow(["id", p.id])
        w.writerow(["title", p.title])
        w.writerow(["claim_template", p.claim_template])
    for s in frame.stages:
        out.write("\n")
        w.writerow(["[stage]"])
        w.writerow(["phase", s.phase])
        w.writerow(["id", s.id])
        w.writerow(["title", s.title])
        if s.goal:
            w.writerow(["goal", s.goal])
        if s.conditional:
            w.writerow(["conditional", "true"])
    return out.getvalue()


def load_frame_file(path: str | Path) -> DecompositionFrame:
    return load_frame(Path(path).read_text(encoding="utf-8"))


def standard_frame_document() -> str:
    """Text of the shipped standard-frame definition."""
    return resources.files("acasec.frames").joinpath("standard.frame").read_text(encoding="utf-8")
