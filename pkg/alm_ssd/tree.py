"""Scenario tree topology, node coefficients and the tree text format."""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

LOGGER = logging.getLogger("alm_ssd.tree")

PROBABILITY_TOL = 1e-12


class TopologyError(ValueError):
    """Raised when stages or branching cannot describe a tree."""


class TreeFormatError(ValueError):
    """Raised when a tree file cannot be parsed.

    Carries the 1-based ``line``, the offending ``field`` name and the
    ``node_id`` when one is known.
    """

    def __init__(self, message: str, line: int, field: str, node_id: Optional[int] = None) -> None:
        self.line = line
        self.field = field
        self.node_id = node_id
        where = f"line {line}, field {field}"
        if node_id is not None:
            where += f", node {node_id}"
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class Node:
    id: int
    stage: int
    ancestor: Optional[int]
    children: Tuple[int, ...]
    probability: float


@dataclass(frozen=True)
class TreeTopology:
    stages: Tuple[float, ...]
    branching: Tuple[int, ...]
    nodes: Tuple[Node, ...]

    @property
    def horizon(self) -> int:
        """Index T of the last stage."""

        return len(self.stages) - 1

    def __len__(self) -> int:
        return len(self.nodes)

    @cached_property
    def _by_stage(self) -> Tuple[Tuple[int, ...], ...]:
        buckets: List[List[int]] = [[] for _ in self.stages]
        for node in self.nodes:
            buckets[node.stage].append(node.id)
        return tuple(tuple(bucket) for bucket in buckets)

    def stage_nodes(self, stage: int) -> Tuple[int, ...]:
        return self._by_stage[stage]

    @property
    def leaves(self) -> Tuple[int, ...]:
        return self._by_stage[-1]

    @cached_property
    def ancestors(self) -> np.ndarray:
        """Ancestor id per node, -1 at the root."""

        return np.array([-1 if n.ancestor is None else n.ancestor for n in self.nodes], dtype=np.int64)

    @cached_property
    def probabilities(self) -> np.ndarray:
        return np.array([n.probability for n in self.nodes], dtype=float)

    @cached_property
    def node_stages(self) -> np.ndarray:
        return np.array([n.stage for n in self.nodes], dtype=np.int64)

    def children(self, node_id: int) -> Tuple[int, ...]:
        return self.nodes[node_id].children

    def is_leaf(self, node_id: int) -> bool:
        return not self.nodes[node_id].children

    def conditional_probability(self, node_id: int) -> float:
        """p_{a(m),m} = p_m / p_{a(m)}; 1 at the root."""

        node = self.nodes[node_id]
        if node.ancestor is None:
            return 1.0
        return node.probability / self.nodes[node.ancestor].probability

    def conditional_probabilities(self, node_id: int) -> np.ndarray:
        children = self.nodes[node_id].children
        parent = self.nodes[node_id].probability
        return np.array([self.nodes[m].probability / parent for m in children], dtype=float)

    def path_to_root(self, node_id: int) -> List[int]:
        """Node ids from the root down to ``node_id`` inclusive."""

        path = [node_id]
        ancestor = self.nodes[node_id].ancestor
        while ancestor is not None:
            path.append(ancestor)
            ancestor = self.nodes[ancestor].ancestor
        path.reverse()
        return path

    def gap_months(self, stage: int) -> int:
        """Whole months between stage ``stage - 1`` and ``stage``."""

        if stage < 1:
            return 0
        return int(round((self.stages[stage] - self.stages[stage - 1]) * 12.0))

    def gap_years(self, stage: int) -> float:
        return self.gap_months(stage) / 12.0

    def descendants_at(self, node_id: int, stage: int) -> List[int]:
        frontier = [node_id]
        while frontier and self.nodes[frontier[0]].stage < stage:
            frontier = [child for n in frontier for child in self.nodes[n].children]
        return frontier


def build_topology(stages: Sequence[float], branching: Sequence[int]) -> TreeTopology:
    """Build a uniform-branching topology with breadth-first node ids.

    Args:
        stages: Stage dates in years, starting at 0 and strictly increasing.
        branching: Children per node for each stage transition.

    Returns:
        A :class:`TreeTopology` with equal conditional probabilities.
    """

    stages = tuple(float(s) for s in stages)
    branching = tuple(int(b) for b in branching)
    if len(stages) < 2:
        raise TopologyError("a tree needs at least two stages")
    if len(branching) != len(stages) - 1:
        raise TopologyError(
            f"expected {len(stages) - 1} branching counts, got {len(branching)}"
        )
    if any(b < 1 for b in branching):
        raise TopologyError("branching counts must be at least 1")
    if any(later <= earlier for earlier, later in zip(stages, stages[1:])):
        raise TopologyError("stage dates must be strictly increasing")

    ancestors: List[Optional[int]] = [None]
    node_stage = [0]
    probs = [1.0]
    frontier = [0]
    for t, count in enumerate(branching, start=1):
        next_frontier = []
        for parent in frontier:
            for _ in range(count):
                ancestors.append(parent)
                node_stage.append(t)
                probs.append(probs[parent] / count)
                next_frontier.append(len(ancestors) - 1)
        frontier = next_frontier
    return _assemble(stages, branching, ancestors, node_stage, probs)


def _assemble(
    stages: Tuple[float, ...],
    branching: Tuple[int, ...],
    ancestors: Sequence[Optional[int]],
    node_stage: Sequence[int],
    probs: Sequence[float],
) -> TreeTopology:
    children: Dict[int, List[int]] = {i: [] for i in range(len(ancestors))}
    for node_id, parent in enumerate(ancestors):
        if parent is not None:
            children[parent].append(node_id)
    nodes = tuple(
        Node(
            id=node_id,
            stage=node_stage[node_id],
            ancestor=ancestors[node_id],
            children=tuple(children[node_id]),
            probability=float(probs[node_id]),
        )
        for node_id in range(len(ancestors))
    )
    return TreeTopology(stages=stages, branching=branching, nodes=nodes)


def reweight(topology: TreeTopology, conditional: Dict[int, Sequence[float]]) -> TreeTopology:
    """Return ``topology`` with new conditional probabilities per parent.

    ``conditional`` maps a parent id to the probabilities of its children in
    child order; parents not listed keep their current split.
    """

    probs = [0.0] * len(topology)
    probs[0] = 1.0
    for node in topology.nodes:
        if not node.children:
            continue
        split = conditional.get(node.id)
        if split is None:
            split = topology.conditional_probabilities(node.id)
        split = np.asarray(split, dtype=float)
        if split.shape != (len(node.children),) or np.any(split <= 0.0):
            raise TopologyError(f"node {node.id} needs {len(node.children)} positive probabilities")
        split = split / split.sum()
        for child, share in zip(node.children, split):
            probs[child] = probs[node.id] * float(share)
    return _assemble(
        topology.stages,
        topology.branching,
        [n.ancestor for n in topology.nodes],
        [n.stage for n in topology.nodes],
        probs,
    )


def check_topology(topology: TreeTopology) -> List[str]:
    """List violated structural and probability invariants."""

    problems: List[str] = []
    roots = [n.id for n in topology.nodes if n.ancestor is None]
    if roots != [0] or topology.nodes[0].stage != 0:
        problems.append("exactly one root at stage 0 is required")
    for node in topology.nodes:
        if node.ancestor is not None and topology.nodes[node.ancestor].stage != node.stage - 1:
            problems.append(f"node {node.id} ancestor is not at the previous stage")
        if node.children:
            total = sum(topology.nodes[m].probability for m in node.children)
            if abs(total - node.probability) > PROBABILITY_TOL * max(1.0, len(node.children)):
                problems.append(f"node {node.id} children probabilities do not sum to p_n")
    for t in range(len(topology.stages)):
        total = float(topology.probabilities[list(topology.stage_nodes(t))].sum())
        if abs(total - 1.0) > 1e-12 * max(1, len(topology.stage_nodes(t))):
            problems.append(f"stage {t} probabilities sum to {total!r}")
    return problems


def nodal_partition_matrix(topology: TreeTopology) -> np.ndarray:
    """Leaf-by-stage table of node ids; row s is the root path of leaf s."""

    leaves = np.array(topology.leaves, dtype=np.int64)
    matrix = np.empty((leaves.size, topology.horizon + 1), dtype=np.int64)
    matrix[:, -1] = leaves
    ancestors = topology.ancestors
    for column in range(topology.horizon - 1, -1, -1):
        matrix[:, column] = ancestors[matrix[:, column + 1]]
    return matrix


# --------------------------------------------------------------------------
# Node coefficients


@dataclass
class NodeCoefficients:
    """Stochastic parameters attached to one node.

    ``r`` and ``g`` are indexed over cash plus assets (``g[0]`` is always 0),
    the liability arrays over liability classes.
    """

    r: np.ndarray
    g: np.ndarray
    L: np.ndarray
    c: float
    lam: np.ndarray
    delta_lam: np.ndarray
    r_minus: float

    @property
    def Lambda(self) -> float:
        return float(np.sum(self.lam))

    def check(self) -> List[str]:
        problems = []
        if np.any(self.r <= -1.0):
            problems.append("return at or below -100%")
        if np.any(self.lam < 0) or np.any(self.L < 0) or self.c < 0 or np.any(self.delta_lam < 0):
            problems.append("negative liability quantity")
        return problems


@dataclass
class ScenarioTree:
    topology: TreeTopology
    asset_ids: Tuple[str, ...]
    liability_ids: Tuple[str, ...]
    coefficients: List[NodeCoefficients] = field(default_factory=list)
    econ: Optional[np.ndarray] = None  # per node (b1, b2, b3, gamma, pi, sIG)

    @property
    def n_assets(self) -> int:
        return len(self.asset_ids)

    @property
    def n_liabilities(self) -> int:
        return len(self.liability_ids)

    @property
    def has_coefficients(self) -> bool:
        return bool(self.coefficients)

    def node(self, node_id: int) -> NodeCoefficients:
        return self.coefficients[node_id]

    def Lambda(self) -> np.ndarray:
        return np.array([coef.Lambda for coef in self.coefficients], dtype=float)

    def child_returns(self, node_id: int) -> np.ndarray:
        """Matrix of gross returns (children by cash+assets)."""

        return np.array(
            [1.0 + self.coefficients[m].r for m in self.topology.children(node_id)], dtype=float
        )


ECON_FIELDS = ("b1", "b2", "b3", "gamma", "pi", "sIG")


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def serialize_tree(tree: ScenarioTree) -> str:
    """Render ``tree`` as the line-oriented tree format."""

    topology = tree.topology
    header = [
        "stages=" + ",".join(_fmt(s) for s in topology.stages),
        "branching=" + ",".join(str(b) for b in topology.branching),
        "assets=" + ",".join(tree.asset_ids),
        "liabilities=" + ",".join(tree.liability_ids),
    ]
    if tree.econ is not None:
        header.append("econ=" + ",".join(ECON_FIELDS))
    out = io.StringIO()
    out.write(";".join(header) + "\n")
    for node in topology.nodes:
        row = [
            str(node.id),
            str(node.stage),
            "" if node.ancestor is None else str(node.ancestor),
            _fmt(node.probability),
        ]
        if tree.coefficients:
            coef = tree.coefficients[node.id]
            row.extend(_fmt(v) for v in coef.r)
            row.extend(_fmt(v) for v in coef.g[1:])
            row.extend(_fmt(v) for v in coef.L)
            row.append(_fmt(coef.c))
            row.extend(_fmt(v) for v in coef.lam)
            row.extend(_fmt(v) for v in coef.delta_lam)
            row.append(_fmt(coef.r_minus))
        if tree.econ is not None:
            row.extend(_fmt(v) for v in tree.econ[node.id])
        out.write(",".join(row) + "\n")
    return out.getvalue()


def _column_names(n_assets: int, n_liabilities: int, with_coefficients: bool, with_econ: bool) -> List[str]:
    names = ["id", "stage", "ancestor", "p"]
    if with_coefficients:
        names += [f"r_{i}" for i in range(n_assets + 1)]
        names += [f"g_{i}" for i in range(1, n_assets + 1)]
        names += [f"L_{j}" for j in range(1, n_liabilities + 1)]
        names += ["c"]
        names += [f"lambda_{j}" for j in range(1, n_liabilities + 1)]
        names += [f"deltaLambda_{j}" for j in range(1, n_liabilities + 1)]
        names += ["rMinus"]
    if with_econ:
        names += list(ECON_FIELDS)
    return names


def deserialize_tree(text: str) -> ScenarioTree:
    """Parse the tree format back into a :class:`ScenarioTree`.

    Raises:
        TreeFormatError: naming the line and field of the first problem.
    """

    lines = [line for line in text.splitlines()]
    if not lines or not lines[0].strip():
        raise TreeFormatError("missing header", 1, "header")
    header: Dict[str, str] = {}
    for part in lines[0].strip().split(";"):
        if "=" not in part:
            raise TreeFormatError(f"malformed header entry {part!r}", 1, "header")
        key, value = part.split("=", 1)
        header[key.strip()] = value.strip()
    for key in ("stages", "branching"):
        if key not in header:
            raise TreeFormatError(f"header lacks {key}", 1, key)
    try:
        stages = tuple(float(v) for v in header["stages"].split(","))
        branching = tuple(int(v) for v in header["branching"].split(","))
    except ValueError as exc:
        raise TreeFormatError(str(exc), 1, "stages/branching") from exc
    asset_ids = tuple(v for v in header.get("assets", "").split(",") if v)
    liability_ids = tuple(v for v in header.get("liabilities", "").split(",") if v)
    with_econ = "econ" in header
    n_assets, n_liab = len(asset_ids), len(liability_ids)

    full = _column_names(n_assets, n_liab, True, with_econ)
    bare = _column_names(n_assets, n_liab, False, with_econ)

    rows = [(number, line) for number, line in enumerate(lines[1:], start=2) if line.strip()]
    ancestors: List[Optional[int]] = []
    node_stage: List[int] = []
    probs: List[float] = []
    coefficients: List[NodeCoefficients] = []
    econ_rows: List[List[float]] = []
    with_coefficients: Optional[bool] = None

    for number, line in rows:
        fields = line.strip().split(",")
        if with_coefficients is None:
            if len(fields) == len(full):
                with_coefficients = True
            elif len(fields) == len(bare):
                with_coefficients = False
            else:
                raise TreeFormatError(
                    f"expected {len(full)} or {len(bare)} fields, got {len(fields)}", number, "row"
                )
        names = full if with_coefficients else bare
        node_id = _parse_int(fields[0], number, "id", None)
        if len(fields) != len(names):
            raise TreeFormatError(
                f"expected {len(names)} fields, got {len(fields)}", number, "row", node_id
            )
        if node_id != len(ancestors):
            raise TreeFormatError(f"node ids must be dense, expected {len(ancestors)}", number, "id", node_id)
        stage = _parse_int(fields[1], number, "stage", node_id)
        ancestor = None if fields[2] == "" else _parse_int(fields[2], number, "ancestor", node_id)
        if node_id == 0:
            if ancestor is not None or stage != 0:
                raise TreeFormatError("root must be stage 0 without ancestor", number, "ancestor", node_id)
        else:
            if ancestor is None or not 0 <= ancestor < node_id:
                raise TreeFormatError("ancestor link points to no earlier node", number, "ancestor", node_id)
            if node_stage[ancestor] != stage - 1:
                raise TreeFormatError("ancestor is not at the previous stage", number, "ancestor", node_id)
        if not 0 <= stage < len(stages):
            raise TreeFormatError("stage index out of range", number, "stage", node_id)
        values = [_parse_float(v, number, names[k + 3], node_id) for k, v in enumerate(fields[3:])]
        ancestors.append(ancestor)
        node_stage.append(stage)
        probs.append(values[0])
        cursor = 1
        if with_coefficients:
            r = np.array(values[cursor: cursor + n_assets + 1]); cursor += n_assets + 1
            g = np.concatenate(([0.0], values[cursor: cursor + n_assets])); cursor += n_assets
            L = np.array(values[cursor: cursor + n_liab]); cursor += n_liab
            c = values[cursor]; cursor += 1
            lam = np.array(values[cursor: cursor + n_liab]); cursor += n_liab
            delta_lam = np.array(values[cursor: cursor + n_liab]); cursor += n_liab
            r_minus = values[cursor]; cursor += 1
            coefficients.append(NodeCoefficients(r=r, g=g, L=L, c=c, lam=lam, delta_lam=delta_lam, r_minus=r_minus))
        if with_econ:
            econ_rows.append(values[cursor:])

    if not ancestors:
        raise TreeFormatError("tree has no nodes", 2, "row")
    topology = _assemble(stages, branching, ancestors, node_stage, probs)
    problems = check_topology(topology)
    if problems:
        raise TreeFormatError("; ".join(problems), 2, "p")
    return ScenarioTree(
        topology=topology,
        asset_ids=asset_ids,
        liability_ids=liability_ids,
        coefficients=coefficients,
        econ=np.array(econ_rows, dtype=float) if with_econ else None,
    )


def _parse_int(raw: str, line: int, name: str, node_id: Optional[int]) -> int:
    try:
        return int(raw)
    except ValueError:
        raise TreeFormatError(f"{raw!r} is not an integer", line, name, node_id) from None


def _parse_float(raw: str, line: int, name: str, node_id: Optional[int]) -> float:
    try:
        return float(raw)
    except ValueError:
        raise TreeFormatError(f"{raw!r} is not a number", line, name, node_id) from None


def write_tree(tree: ScenarioTree, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(serialize_tree(tree))


def read_tree(path) -> ScenarioTree:
    with open(path, "r", encoding="utf-8") as handle:
        return deserialize_tree(handle.read())


def iter_non_leaf(topology: TreeTopology) -> Iterable[Node]:
    return (node for node in topology.nodes if node.children)


__all__ = [
    "Node",
    "NodeCoefficients",
    "ScenarioTree",
    "TopologyError",
    "TreeFormatError",
    "TreeTopology",
    "build_topology",
    "check_topology",
    "deserialize_tree",
    "iter_non_leaf",
    "nodal_partition_matrix",
    "read_tree",
    "reweight",
    "serialize_tree",
    "write_tree",
]
