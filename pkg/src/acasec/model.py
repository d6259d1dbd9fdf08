"""Typed Assurance 2.0 graph.

Edges point from support to conclusion: a premise claim feeds an argument,
the argument concludes its parent claim, evidence feeds an evidence
incorporation argument.  Claims, arguments and evidence form the *core*
subgraph, which must stay acyclic.  Side claims and defeaters hang off the
core without being part of it.
"""

from __future__ import annotations

import enum
import heapq
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Union

from acasec.taxonomy import CellKey


class ModelError(ValueError):
    pass


class DuplicateNodeError(ModelError):
    pass


class UnknownNodeError(ModelError, KeyError):
    pass


class EdgeKindError(ModelError):
    pass


class DuplicateEdgeError(ModelError):
    pass


class CycleError(ModelError):
    pass


class NodeKind(str, enum.Enum):
    CLAIM = "claim"
    SIDE_CLAIM = "side_claim"
    ARGUMENT = "argument"
    EVIDENCE = "evidence"
    DEFEATER = "defeater"


class ClaimRole(str, enum.Enum):
    TOP = "top"
    SUBSTITUTED = "substituted"
    PHASE = "phase"
    STAGE = "stage"
    FACTOR = "factor"
    DELEGATED = "delegated"
    GENERIC = "generic"


class SideClaimKind(str, enum.Enum):
    JUSTIFICATION = "justification"
    MEASUREMENT = "measurement"


class ArgumentKind(str, enum.Enum):
    CONCRETION = "Concretion"
    SUBSTITUTION = "Substitution"
    DECOMPOSITION = "Decomposition"
    CALCULATION = "Calculation"
    EVIDENCE_INCORPORATION = "EvidenceIncorporation"


class EvidenceKind(str, enum.Enum):
    # E_k items from the Evidence column, ME_k from the measurement column.
    PRIMARY = "E"
    MEASUREMENT = "ME"


class DefeaterStatus(str, enum.Enum):
    OPEN = "open"
    RESOLVED = "resolved"
    ACCEPTED_RESIDUAL = "accepted_residual"


class EdgeKind(str, enum.Enum):
    CONCLUDES = "concludes"
    PREMISE = "premise"
    EVIDENCES = "evidences"
    SIDE_SUPPORTS = "side_supports"
    DEFEATS = "defeats"


CORE_EDGE_KINDS = frozenset({EdgeKind.CONCLUDES, EdgeKind.PREMISE, EdgeKind.EVIDENCES})
CORE_NODE_KINDS = frozenset({NodeKind.CLAIM, NodeKind.ARGUMENT, NodeKind.EVIDENCE})


@dataclass(frozen=True)
class ClaimNode:
    id: str
    text: str
    role: ClaimRole = ClaimRole.GENERIC
    cell: CellKey | None = None

    kind = NodeKind.CLAIM

    def __post_init__(self) -> None:
        _require_id(self.id)
        if not self.text.strip():
            raise ModelError(f"claim {self.id}: empty text")
        if self.role in (ClaimRole.FACTOR, ClaimRole.DELEGATED) and self.cell is None:
            raise ModelError(f"claim {self.id}: {self.role.value} claim needs a cell")


@dataclass(frozen=True)
class SideClaimNode:
    id: str
    text: str
    side_kind: SideClaimKind = SideClaimKind.JUSTIFICATION

    kind = NodeKind.SIDE_CLAIM

    def __post_init__(self) -> None:
        _require_id(self.id)
        if not self.text.strip():
            raise ModelError(f"side claim {self.id}: empty text")


@dataclass(frozen=True)
class ArgumentNode:
    id: str
    argument_kind: ArgumentKind
    rationale: str = ""

    kind = NodeKind.ARGUMENT

    def __post_init__(self) -> None:
        _require_id(self.id)
        if not isinstance(self.argument_kind, ArgumentKind):
            raise ModelError(f"argument {self.id}: unknown kind {self.argument_kind!r}")


@dataclass(frozen=True)
class EvidenceNode:
    id: str
    label: str
    cell: CellKey
    index: int
    evidence_kind: EvidenceKind = EvidenceKind.PRIMARY
    artifact_ref: str | None = None
    # Author-stated confidence from the workbook; input only, never computed here.
    confidence: float | None = None

    kind = NodeKind.EVIDENCE

    def __post_init__(self) -> None:
        _require_id(self.id)
        if not self.label.strip():
            raise ModelError(f"evidence {self.id}: empty label")
        if self.index < 1:
            raise ModelError(f"evidence {self.id}: index must be >= 1")
        if self.confidence is not None and not 0.0 <= self.confidence <= 1.0:
            raise ModelError(f"evidence {self.id}: confidence outside [0, 1]")


@dataclass(frozen=True)
class DefeaterNode:
    id: str
    text: str
    target: str
    status: DefeaterStatus = DefeaterStatus.OPEN
    resolution: str | None = None

    kind = NodeKind.DEFEATER

    def __post_init__(self) -> None:
        _require_id(self.id)
        if not self.text.strip():
            raise ModelError(f"defeater {self.id}: empty text")
        if self.status is not DefeaterStatus.OPEN and not (self.resolution or "").strip():
            raise ModelError(f"defeater {self.id}: {self.status.value} needs a resolution")


Node = Union[ClaimNode, SideClaimNode, ArgumentNode, EvidenceNode, DefeaterNode]


@dataclass(frozen=True, order=True)
class Edge:
    source: str
    target: str
    kind: EdgeKind


def _require_id(node_id: str) -> None:
    if not isinstance(node_id, str) or not node_id.strip():
        raise ModelError("node id must be a non-empty string")


def _edge_allowed(kind: EdgeKind, src: Node, dst: Node) -> bool:
    s, d = src.kind, dst.kind
    if kind is EdgeKind.CONCLUDES:
        # Side claims may be concluded too: a measurement side claim is
        # supported by its own evidence incorporation argument.
        return s is NodeKind.ARGUMENT and d in (NodeKind.CLAIM, NodeKind.SIDE_CLAIM)
    if kind is EdgeKind.PREMISE:
        return s is NodeKind.CLAIM and d is NodeKind.ARGUMENT
    if kind is EdgeKind.EVIDENCES:
        return s is NodeKind.EVIDENCE and d is NodeKind.ARGUMENT
    if kind is EdgeKind.SIDE_SUPPORTS:
        if s is NodeKind.SIDE_CLAIM and d in (NodeKind.ARGUMENT, NodeKind.EVIDENCE):
            return True
        # Delegation cross-links land on the delegated claim stub.
        return (s in (NodeKind.SIDE_CLAIM, NodeKind.CLAIM) and d is NodeKind.CLAIM
                and dst.role is ClaimRole.DELEGATED)
    if kind is EdgeKind.DEFEATS:
        return s is NodeKind.DEFEATER and d is not NodeKind.DEFEATER
    return False


def _is_core(edge: Edge, nodes: Mapping[str, Node]) -> bool:
    if edge.kind not in CORE_EDGE_KINDS:
        return False
    src, dst = nodes.get(edge.source), nodes.get(edge.target)
    return (src is not None and dst is not None
            and src.kind in CORE_NODE_KINDS and dst.kind in CORE_NODE_KINDS)


@dataclass(frozen=True)
class StructuralViolation:
    rule: str
    ids: tuple[str, ...]
    message: str

    def __str__(self) -> str:
        return f"[{self.rule}] {self.message}"


class AssuranceCase:
    """Mutable while being built; treat as read-only once handed out."""

    def __init__(self, frame_name: str, meta: Mapping[str, str] | None = None) -> None:
        self.frame_name = frame_name
        self.meta: dict[str, str] = dict(meta or {})
        self.nodes: dict[str, Node] = {}
        self.edges: list[Edge] = []
        self._edge_set: set[Edge] = set()
        # Core adjacency kept in step with connect() for cheap cycle checks.
        self._core_out: dict[str, list[str]] = defaultdict(list)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AssuranceCase):
            return NotImplemented
        return (self.frame_name == other.frame_name and self.meta == other.meta
                and self.nodes == other.nodes and set(self.edges) == set(other.edges))

    def __repr__(self) -> str:
        return (f"AssuranceCase(frame={self.frame_name!r}, nodes={len(self.nodes)}, "
                f"edges={len(self.edges)})")

    def __len__(self) -> int:
        return len(self.nodes)

    def copy(self) -> AssuranceCase:
        """Independent copy; nodes and edges are immutable so they are shared."""
        other = AssuranceCase(self.frame_name, self.meta)
        other.nodes = dict(self.nodes)
        other.edges = list(self.edges)
        other._edge_set = set(self._edge_set)
        for source, targets in self._core_out.items():
            other._core_out[source] = list(targets)
        return other

    def __contains__(self, node_id: object) -> bool:
        return node_id in self.nodes

    def get(self, node_id: str) -> Node:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNodeError(node_id) from None

    def add_node(self, node: Node) -> str:
        if node.id in self.nodes:
            raise DuplicateNodeError(f"duplicate node id {node.id!r}")
        self.nodes[node.id] = node
        return node.id

    def connect(self, source: str, target: str, kind: EdgeKind | str) -> None:
        kind = EdgeKind(kind)
        src, dst = self.get(source), self.get(target)
        if source == target:
            raise EdgeKindError(f"self-loop on {source!r}")
        if not _edge_allowed(kind, src, dst):
            raise EdgeKindError(
                f"{kind.value} edge not allowed from {src.kind.value} {source!r} "
                f"to {dst.kind.value} {target!r}")
        edge = Edge(source, target, kind)
        if edge in self._edge_set:
            raise DuplicateEdgeError(f"duplicate edge {source} -{kind.value}-> {target}")
        if _is_core(edge, self.nodes) and self._core_path_exists(target, source):
            raise CycleError(f"edge {source} -{kind.value}-> {target} closes a cycle")
        self.edges.append(edge)
        self._edge_set.add(edge)
        if _is_core(edge, self.nodes):
            self._core_out[source].append(target)

    def _core_path_exists(self, start: str, goal: str) -> bool:
        out = self._core_out
        stack, seen = [start], {start}
        while stack:
            n = stack.pop()
            if n == goal:
                return True
            for m in out.get(n, ()):
                if m not in seen:
                    seen.add(m)
                    stack.append(m)
        return False

    # -- queries ------------------------------------------------------------

    def incoming(self, node_id: str, *kinds: EdgeKind) -> list[Edge]:
        return [e for e in self.edges if e.target == node_id and (not kinds or e.kind in kinds)]

    def outgoing(self, node_id: str, *kinds: EdgeKind) -> list[Edge]:
        return [e for e in self.edges if e.source == node_id and (not kinds or e.kind in kinds)]

    def iter_nodes(self, kind: NodeKind | None = None) -> Iterator[Node]:
        for node_id in sorted(self.nodes):
            node = self.nodes[node_id]
            if kind is None or node.kind is kind:
                yield node

    def children_of(self, node_id: str) -> list[str]:
        """Direct supports of a node along core edges, sorted."""
        self.get(node_id)
        return sorted(e.source for e in self.edges
                      if e.target == node_id and e.kind in CORE_EDGE_KINDS)

    def parent_argument_of(self, node_id: str) -> str | None:
        node = self.get(node_id)
        kinds = (EdgeKind.EVIDENCES,) if node.kind is NodeKind.EVIDENCE else (EdgeKind.PREMISE,)
        parents = sorted(e.target for e in self.outgoing(node_id, *kinds))
        return parents[0] if parents else None

    def find_by_cell(self, cell: CellKey, include_measurement: bool = False) -> list[Node]:
        """Claims and evidence belonging to one worksheet cell.

        Measurement evidence is left out unless asked for, so the result
        mirrors the Sub-claims and Evidence columns of the cell.
        """
        found = []
        for node in self.iter_nodes():
            if getattr(node, "cell", None) != cell:
                continue
            if (node.kind is NodeKind.EVIDENCE and not include_measurement
                    and node.evidence_kind is EvidenceKind.MEASUREMENT):
                continue
            found.append(node)
        return found

    def top_claims(self) -> list[str]:
        return [n.id for n in self.iter_nodes(NodeKind.CLAIM) if n.role is ClaimRole.TOP]

    def topological_order(self) -> list[str]:
        """Core nodes ordered supports-first; ties broken by id."""
        core = sorted(n for n, node in self.nodes.items() if node.kind in CORE_NODE_KINDS)
        indeg = {n: 0 for n in core}
        out = defaultdict(list)
        for e in self.edges:
            if _is_core(e, self.nodes):
                out[e.source].append(e.target)
                indeg[e.target] += 1
        heap = [n for n in core if indeg[n] == 0]
        heapq.heapify(heap)
        order = []
        while heap:
            n = heapq.heappop(heap)
            order.append(n)
            for m in out[n]:
                indeg[m] -= 1
                if indeg[m] == 0:
                    heapq.heappush(heap, m)
        if len(order) != len(core):
            raise CycleError("core subgraph contains a cycle")
        return order


def new_case(frame_name: str, meta: Mapping[str, str] | None = None) -> AssuranceCase:
    return AssuranceCase(frame_name, meta)


def _node_problems(node: Node) -> Iterable[str]:
    # Re-run constructor checks; nodes can be altered behind the dataclass.
    try:
        type(node).__post_init__(node)
    except ModelError as exc:
        yield str(exc)


def audit_structure(case: AssuranceCase) -> list[StructuralViolation]:
    """Check every structural invariant and report what is broken."""
    out: list[StructuralViolation] = []
    nodes = case.nodes

    for node_id, node in sorted(nodes.items()):
        if node.id != node_id:
            out.append(StructuralViolation("node-id", (node_id,),
                                           f"node stored under {node_id!r} has id {node.id!r}"))
        for problem in _node_problems(node):
            out.append(StructuralViolation("node-invariant", (node_id,), problem))

    seen: set[Edge] = set()
    for e in sorted(case.edges):
        ids = (e.source, e.target)
        if e.source not in nodes or e.target not in nodes:
            out.append(StructuralViolation("edge-endpoint", ids,
                                           f"edge {e.source}->{e.target} has a missing endpoint"))
            continue
        if e.source == e.target:
            out.append(StructuralViolation("self-loop", ids, f"self-loop on {e.source}"))
        elif not _edge_allowed(e.kind, nodes[e.source], nodes[e.target]):
            out.append(StructuralViolation(
                "edge-kind", ids,
                f"{e.kind.value} edge {e.source}->{e.target} joins incompatible node kinds"))
        if e in seen:
            out.append(StructuralViolation("duplicate-edge", ids,
                                           f"duplicate {e.kind.value} edge {e.source}->{e.target}"))
        seen.add(e)

    valid_edges = [e for e in seen if e.source in nodes and e.target in nodes]

    tops = [n.id for n in case.iter_nodes(NodeKind.CLAIM) if n.role is ClaimRole.TOP]
    if len(tops) != 1:
        out.append(StructuralViolation("top-claim", tuple(tops),
                                       f"expected exactly one top claim, found {len(tops)}"))

    conclusions: dict[str, int] = defaultdict(int)
    supports: dict[str, int] = defaultdict(int)
    for e in valid_edges:
        if e.kind is EdgeKind.CONCLUDES and nodes[e.source].kind is NodeKind.ARGUMENT:
            conclusions[e.source] += 1
        if e.kind in (EdgeKind.PREMISE, EdgeKind.EVIDENCES) and nodes[e.target].kind is NodeKind.ARGUMENT:
            supports[e.target] += 1
    for node in case.iter_nodes(NodeKind.ARGUMENT):
        if conclusions[node.id] != 1:
            out.append(StructuralViolation(
                "argument-conclusion", (node.id,),
                f"argument {node.id} has {conclusions[node.id]} concludes edges, expected 1"))
        if supports[node.id] < 1:
            out.append(StructuralViolation("argument-premise", (node.id,),
                                           f"argument {node.id} has no premise or evidence"))

    core_edges = [e for e in valid_edges if _is_core(e, nodes)]
    cyclic = _cycle_nodes(nodes, core_edges)
    if cyclic:
        out.append(StructuralViolation("core-cycle", tuple(sorted(cyclic)),
                                       f"core subgraph has a cycle through {len(cyclic)} nodes"))

    if tops:
        # Walk conclusion -> premises starting at the top claim(s).
        feeders = defaultdict(list)
        for e in core_edges:
            feeders[e.target].append(e.source)
        reached = set(tops)
        stack = list(tops)
        while stack:
            n = stack.pop()
            for m in feeders[n]:
                if m not in reached:
                    reached.add(m)
                    stack.append(m)
        for node in case.iter_nodes(NodeKind.CLAIM):
            if node.role is not ClaimRole.TOP and node.id not in reached:
                out.append(StructuralViolation("unreachable-claim", (node.id,),
                                               f"claim {node.id} is not reachable from the top claim"))
    return out


def _cycle_nodes(nodes: Mapping[str, Node], edges: list[Edge]) -> set[str]:
    """Nodes left over after repeatedly peeling zero in-degree nodes."""
    indeg = {n: 0 for n in nodes}
    out = defaultdict(list)
    for e in edges:
        out[e.source].append(e.target)
        indeg[e.target] += 1
    queue = [n for n, d in indeg.items() if d == 0]
    removed = set()
    while queue:
        n = queue.pop()
        removed.add(n)
        for m in out[n]:
            indeg[m] -= 1
            if indeg[m] == 0:
                queue.append(m)
    return {n for n in nodes if n not in removed}
