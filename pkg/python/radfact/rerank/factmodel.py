# This file is part of radfact_rerank.
#
# See the COPYRIGHT file at the top-level directory of this distribution
# for details of code ownership.
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <https://www.gnu.org/licenses/>.

from __future__ import annotations

__all__ = (
    "EntityLabel",
    "RelationType",
    "RelationFlag",
    "EntityNode",
    "FactEdge",
    "FactGraph",
    "Triplet",
    "TripletSet",
    "InvalidEntityError",
    "InvalidLabelError",
    "FactGraphError",
    "normalize_entity",
    "reduce_graph",
)

import dataclasses
import enum
from collections.abc import Callable, Iterable, Iterator, Set
from typing import Any

from lsst.utils.logging import getLogger

from ._constants import RESERVED_SPELLINGS

_LOG = getLogger(__name__)


class InvalidEntityError(ValueError):
    """Exception raised when an entity surface is empty or uses a reserved
    special-token spelling.
    """


class InvalidLabelError(ValueError):
    """Exception raised when text does not name a known entity label,
    relation type, or relation flag.
    """


class FactGraphError(ValueError):
    """Exception raised when a fact graph violates its structural
    invariants.
    """


class EntityLabel(enum.Enum):
    """The four entity categories of the RadGraph schema."""

    ANAT_DP = "ANAT-DP"
    OBS_DP = "OBS-DP"
    OBS_U = "OBS-U"
    OBS_DA = "OBS-DA"

    @classmethod
    def parse(cls, text: str) -> EntityLabel:
        """Return the label spelled exactly as ``text``.

        Raises
        ------
        InvalidLabelError
            Raised if ``text`` is not one of the four label spellings.
        """
        try:
            return cls(text)
        except ValueError:
            raise InvalidLabelError(f"Unknown entity label {text!r}.") from None

    @property
    def token(self) -> str:
        """Special-token spelling used in linearized sequences."""
        return f"[{self.value}]"

    @property
    def is_observation(self) -> bool:
        return self is not EntityLabel.ANAT_DP


class RelationType(enum.Enum):
    """The three edge types of the RadGraph schema."""

    SUGGESTIVE_OF = "Suggestive_Of"
    LOCATED_AT = "Located_At"
    MODIFY = "Modify"

    @classmethod
    def parse(cls, text: str) -> RelationType:
        try:
            return cls(text)
        except ValueError:
            raise InvalidLabelError(f"Unknown relation type {text!r}.") from None


class RelationFlag(enum.Enum):
    """Whether an entity takes part in any relation."""

    REL = "REL"
    NA = "NA"

    @classmethod
    def parse(cls, text: str) -> RelationFlag:
        try:
            return cls(text)
        except ValueError:
            raise InvalidLabelError(f"Unknown relation flag {text!r}.") from None

    @classmethod
    def from_bool(cls, has_relation: bool) -> RelationFlag:
        return cls.REL if has_relation else cls.NA

    @property
    def token(self) -> str:
        """Special-token spelling used in linearized sequences."""
        return f"[{self.value}]"


def normalize_entity(raw: str, *, lowercase: bool = True) -> str:
    """Return the canonical form of an entity surface.

    Parameters
    ----------
    raw : `str`
        Surface text as extracted or generated.
    lowercase : `bool`, optional
        If `True` (default), case-fold the surface so that matching is
        case-insensitive.

    Returns
    -------
    normalized : `str`
        Surface with leading/trailing whitespace removed and internal
        whitespace runs collapsed to single spaces.  Applying this function
        to its own output is a no-op.

    Raises
    ------
    InvalidEntityError
        Raised if ``raw`` holds no non-whitespace characters.
    """
    normalized = " ".join(raw.split())
    if not normalized:
        raise InvalidEntityError(f"Entity surface {raw!r} is empty.")
    if lowercase:
        normalized = normalized.lower()
    return normalized


def _check_reserved(surface: str) -> None:
    for spelling in RESERVED_SPELLINGS:
        if spelling in surface:
            raise InvalidEntityError(f"Entity surface {surface!r} contains reserved token {spelling!r}.")


def _check_surface(surface: str) -> None:
    if not surface or surface != " ".join(surface.split()):
        raise InvalidEntityError(f"Entity surface {surface!r} is empty or not whitespace-normalized.")
    _check_reserved(surface)


@dataclasses.dataclass(frozen=True)
class EntityNode:
    """An entity mention in a fact graph.

    Attributes
    ----------
    surface : `str`
        Mention text, whitespace-trimmed; multi-token mentions are joined by
        single spaces.
    label : `EntityLabel`
        Entity category.
    position : `int` or `None`
        Token index of the first appearance in the source text, if known.
    """

    surface: str
    label: EntityLabel
    position: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "surface", " ".join(self.surface.split()))
        if not self.surface:
            raise InvalidEntityError("Entity node surface is empty.")
        _check_reserved(self.surface)
        if self.position is not None and self.position < 0:
            raise FactGraphError(f"Entity node {self.surface!r} has negative position {self.position}.")


@dataclasses.dataclass(frozen=True)
class FactEdge:
    """A typed, directed relation between two nodes of a `FactGraph`."""

    source: int
    target: int
    type: RelationType


# Endpoint label checks for each relation type; violations are only logged.
_EDGE_COMPATIBILITY: dict[RelationType, Callable[[EntityLabel, EntityLabel], bool]] = {
    RelationType.SUGGESTIVE_OF: lambda a, b: a.is_observation and b.is_observation,
    RelationType.LOCATED_AT: lambda a, b: a.is_observation and not b.is_observation,
    RelationType.MODIFY: lambda a, b: not a.is_observation and not b.is_observation,
}


@dataclasses.dataclass(frozen=True)
class FactGraph:
    """The entities and relations extracted from one text.

    Attributes
    ----------
    nodes : `tuple` [ `EntityNode`, ... ]
        Entity nodes, in extraction order.
    edges : `tuple` [ `FactEdge`, ... ]
        Relations between nodes, by node index.

    Raises
    ------
    FactGraphError
        Raised on construction if an edge endpoint is out of range, an edge
        is a self-loop, or the same edge appears twice.
    """

    nodes: tuple[EntityNode, ...] = ()
    edges: tuple[FactEdge, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(self.edges))
        seen: set[FactEdge] = set()
        n = len(self.nodes)
        for edge in self.edges:
            for index in (edge.source, edge.target):
                if not 0 <= index < n:
                    raise FactGraphError(f"Edge endpoint index {index} is out of range for {n} nodes.")
            if edge.source == edge.target:
                raise FactGraphError(f"Edge on node {edge.source} is a self-loop.")
            if edge in seen:
                raise FactGraphError(
                    f"Duplicate {edge.type.value} edge from node {edge.source} to node {edge.target}."
                )
            seen.add(edge)
            source_label = self.nodes[edge.source].label
            target_label = self.nodes[edge.target].label
            if not _EDGE_COMPATIBILITY[edge.type](source_label, target_label):
                _LOG.warning(
                    "%s edge from %s node %r to %s node %r does not match the schema's endpoint labels.",
                    edge.type.value,
                    source_label.value,
                    self.nodes[edge.source].surface,
                    target_label.value,
                    self.nodes[edge.target].surface,
                )

    @classmethod
    def build(
        cls,
        nodes: Iterable[tuple[str, EntityLabel] | tuple[str, EntityLabel, int | None]],
        edges: Iterable[tuple[int, int, RelationType]] = (),
    ) -> FactGraph:
        """Construct a graph from plain tuples.

        This is a convenience for fixtures and tests; node tuples are
        ``(surface, label)`` or ``(surface, label, position)``.
        """
        return cls(
            nodes=tuple(EntityNode(*node) for node in nodes),
            edges=tuple(FactEdge(*edge) for edge in edges),
        )

    def connected_nodes(self) -> frozenset[int]:
        """Return the indices of nodes that are an endpoint of any edge."""
        return frozenset(index for edge in self.edges for index in (edge.source, edge.target))


@dataclasses.dataclass(frozen=True)
class Triplet:
    """A reduced fact: entity surface, entity label, and relation flag.

    The ``entity`` must already be normalized; use `from_raw` to normalize
    while constructing.
    """

    entity: str
    label: EntityLabel
    flag: RelationFlag

    def __post_init__(self) -> None:
        _check_surface(self.entity)

    @classmethod
    def from_raw(
        cls, raw: str, label: EntityLabel, flag: RelationFlag, *, lowercase: bool = True
    ) -> Triplet:
        return cls(normalize_entity(raw, lowercase=lowercase), label, flag)


class TripletSet(Set[Triplet]):
    """An immutable set of triplets that remembers first-appearance order.

    Parameters
    ----------
    triplets : `~collections.abc.Iterable` [ `Triplet` ], optional
        Triplets in first-appearance order; later duplicates are dropped.

    Notes
    -----
    Equality and hashing follow set semantics and ignore order; the order is
    metadata available through `ordered` and iteration.
    """

    __slots__ = ("_members",)

    def __init__(self, triplets: Iterable[Triplet] = ()):
        self._members: dict[Triplet, None] = dict.fromkeys(triplets)

    @classmethod
    def _from_iterable(cls, it: Iterable[Any]) -> TripletSet:
        return cls(it)

    def __contains__(self, item: object) -> bool:
        return item in self._members

    def __iter__(self) -> Iterator[Triplet]:
        return iter(self._members)

    def __len__(self) -> int:
        return len(self._members)

    def __hash__(self) -> int:
        return self._hash()

    def __repr__(self) -> str:
        inner = ", ".join(f"({t.entity}, {t.label.value}, {t.flag.value})" for t in self._members)
        return f"TripletSet({{{inner}}})"

    @property
    def ordered(self) -> tuple[Triplet, ...]:
        """Members in first-appearance order."""
        return tuple(self._members)

    def filter(self, predicate: Callable[[Triplet], bool]) -> TripletSet:
        """Return the members satisfying ``predicate``, order preserved."""
        return TripletSet(t for t in self._members if predicate(t))


def reduce_graph(graph: FactGraph, *, lowercase: bool = True) -> TripletSet:
    """Reduce a fact graph to its triplet set.

    Parameters
    ----------
    graph : `FactGraph`
        Graph to reduce.
    lowercase : `bool`, optional
        Passed to `normalize_entity`.

    Returns
    -------
    triplets : `TripletSet`
        One triplet per distinct (normalized surface, label) pair.  The flag
        is `RelationFlag.REL` if any occurrence of that pair is an endpoint of
        an edge, in either direction.  Order follows node positions if every
        node has one, and node list order otherwise.
    """
    indices = list(range(len(graph.nodes)))
    if graph.nodes and all(node.position is not None for node in graph.nodes):
        indices.sort(key=lambda i: (graph.nodes[i].position, i))
    connected = graph.connected_nodes()
    flags: dict[tuple[str, EntityLabel], bool] = {}
    for i in indices:
        node = graph.nodes[i]
        key = (normalize_entity(node.surface, lowercase=lowercase), node.label)
        flags[key] = flags.get(key, False) or i in connected
    return TripletSet(
        Triplet(entity, label, RelationFlag.from_bool(has_relation))
        for (entity, label), has_relation in flags.items()
    )
