"""Scene-graph parsing, validation, and directional-constraint derivation.

A scene graph is entities (name, quantity, attributes) plus relation
triples.  Relations are turned into ordered-pair directional constraints:
``(i, j, vertical, horizontal)`` restricts the cells of entity ``j``
relative to the seed cell of entity ``i``.  Constraint sets are always
symmetry-closed: ``(i, j, ABOVE, LEFT)`` implies ``(j, i, BELOW, RIGHT)``.
"""
from __future__ import annotations

import graphlib
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

from .errors import (
    ConflictError,
    CycleError,
    DocumentSyntaxError,
    ValidationError,
)


class Vertical(Enum):
    ABOVE = "ABOVE"
    SAME = "SAME"
    BELOW = "BELOW"
    UNCONSTRAINED = "UNCONSTRAINED"

    def invert(self) -> "Vertical":
        return _V_INVERSE[self]


class Horizontal(Enum):
    LEFT = "LEFT"
    SAME = "SAME"
    RIGHT = "RIGHT"
    UNCONSTRAINED = "UNCONSTRAINED"

    def invert(self) -> "Horizontal":
        return _H_INVERSE[self]


_V_INVERSE = {
    Vertical.ABOVE: Vertical.BELOW,
    Vertical.BELOW: Vertical.ABOVE,
    Vertical.SAME: Vertical.SAME,
    Vertical.UNCONSTRAINED: Vertical.UNCONSTRAINED,
}
_H_INVERSE = {
    Horizontal.LEFT: Horizontal.RIGHT,
    Horizontal.RIGHT: Horizontal.LEFT,
    Horizontal.SAME: Horizontal.SAME,
    Horizontal.UNCONSTRAINED: Horizontal.UNCONSTRAINED,
}


@dataclass(frozen=True)
class Entity:
    """One scene-graph node: a named object with a count and attributes.

    ``token_index`` (and ``attribute_token_indices``) optionally tie the
    entity name (and each attribute) to prompt-token positions so losses
    can address attention-map columns directly.
    """

    id: int
    name: str
    quantity: int = 1
    attributes: tuple[str, ...] = ()
    token_index: int | None = None
    attribute_token_indices: tuple[int, ...] | None = None


@dataclass(frozen=True)
class RelationTriple:
    subject_id: int
    predicate: str
    object_id: int


@dataclass(frozen=True)
class SceneGraph:
    caption: str
    entities: tuple[Entity, ...]
    relations: tuple[RelationTriple, ...] = ()

    def entity(self, entity_id: int) -> Entity:
        for ent in self.entities:
            if ent.id == entity_id:
                return ent
        raise KeyError(entity_id)

    def entity_ids(self) -> list[int]:
        return [ent.id for ent in self.entities]

    def to_document(self) -> dict:
        """Serialize back to the JSON document schema (round-trip stable)."""
        entities = []
        for ent in self.entities:
            doc: dict = {"id": ent.id, "name": ent.name, "quantity": ent.quantity,
                         "attributes": list(ent.attributes)}
            if ent.token_index is not None:
                doc["token_index"] = ent.token_index
            if ent.attribute_token_indices is not None:
                doc["attribute_token_indices"] = list(ent.attribute_token_indices)
            entities.append(doc)
        return {
            "caption": self.caption,
            "entities": entities,
            "relations": [
                {"subject": rel.subject_id, "predicate": rel.predicate,
                 "object": rel.object_id}
                for rel in self.relations
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_document())


@dataclass(frozen=True)
class DirectionalConstraint:
    """Restriction on entity ``j``'s cells relative to entity ``i``'s seed."""

    i: int
    j: int
    vertical: Vertical
    horizontal: Horizontal

    def inverse(self) -> "DirectionalConstraint":
        return DirectionalConstraint(
            self.j, self.i, self.vertical.invert(), self.horizontal.invert())


_ENTITY_FIELDS = {"id", "name", "quantity", "attributes", "token_index",
                  "attribute_token_indices"}
_RELATION_FIELDS = {"subject", "predicate", "object"}
_GRAPH_FIELDS = {"caption", "entities", "relations"}


def _require_int(value, what: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise DocumentSyntaxError(f"{what} must be an integer, got {value!r}")
    return value


def parse_scene_graph(document: str | bytes | dict) -> SceneGraph:
    """Parse and validate a scene-graph JSON document.

    Entity ids are assigned 1..N in document order when absent; explicit
    ids must form exactly {1..N}.  Unknown fields are rejected.

    Raises:
        DocumentSyntaxError: malformed JSON, unknown fields, wrong types.
        ValidationError: violated invariants (duplicate ids, dangling
            relation ids, quantity < 1, empty entity list, ...).
    """
    if isinstance(document, (str, bytes)):
        try:
            obj = json.loads(document)
        except json.JSONDecodeError as exc:
            raise DocumentSyntaxError(f"invalid JSON: {exc}") from exc
    else:
        obj = document
    if not isinstance(obj, dict):
        raise DocumentSyntaxError("scene-graph document must be a JSON object")
    unknown = set(obj) - _GRAPH_FIELDS
    if unknown:
        raise DocumentSyntaxError(f"unknown fields: {sorted(unknown)}")

    caption = obj.get("caption", "")
    if not isinstance(caption, str):
        raise DocumentSyntaxError("caption must be a string")
    raw_entities = obj.get("entities")
    if not isinstance(raw_entities, list) or not raw_entities:
        raise ValidationError("entity list is empty or missing")

    explicit = [("id" in ent) for ent in raw_entities if isinstance(ent, dict)]
    if len(explicit) != len(raw_entities):
        raise DocumentSyntaxError("every entity must be a JSON object")
    if any(explicit) and not all(explicit):
        raise ValidationError("entity ids must be given for all entities or none")

    entities = []
    for index, ent in enumerate(raw_entities):
        unknown = set(ent) - _ENTITY_FIELDS
        if unknown:
            raise DocumentSyntaxError(
                f"entity {index}: unknown fields {sorted(unknown)}")
        name = ent.get("name")
        if not isinstance(name, str):
            raise DocumentSyntaxError(f"entity {index}: name must be a string")
        if not name:
            raise ValidationError(f"entity {index}: name is empty")
        entity_id = _require_int(ent["id"], f"entity {index}: id") \
            if "id" in ent else index + 1
        quantity = _require_int(ent.get("quantity", 1), f"entity {index}: quantity")
        if quantity < 1:
            raise ValidationError(f"entity {index} ({name}): quantity {quantity} < 1")
        attributes = ent.get("attributes", [])
        if not isinstance(attributes, list) or \
                not all(isinstance(a, str) for a in attributes):
            raise DocumentSyntaxError(
                f"entity {index}: attributes must be a list of strings")
        token_index = None
        if "token_index" in ent:
            token_index = _require_int(ent["token_index"],
                                       f"entity {index}: token_index")
            if token_index < 0:
                raise ValidationError(f"entity {index}: token_index < 0")
        attr_tokens = None
        if "attribute_token_indices" in ent:
            raw = ent["attribute_token_indices"]
            if not isinstance(raw, list):
                raise DocumentSyntaxError(
                    f"entity {index}: attribute_token_indices must be a list")
            attr_tokens = tuple(
                _require_int(v, f"entity {index}: attribute token index")
                for v in raw)
            if len(attr_tokens) != len(attributes):
                raise ValidationError(
                    f"entity {index}: attribute_token_indices length "
                    f"{len(attr_tokens)} != {len(attributes)} attributes")
        entities.append(Entity(entity_id, name, quantity, tuple(attributes),
                               token_index, attr_tokens))

    ids = [ent.id for ent in entities]
    if len(set(ids)) != len(ids):
        dup = sorted(i for i in set(ids) if ids.count(i) > 1)
        raise ValidationError(f"duplicate entity ids: {dup}")
    if sorted(ids) != list(range(1, len(ids) + 1)):
        raise ValidationError(
            f"entity ids must form 1..{len(ids)}, got {sorted(ids)}")
    with_token = [ent for ent in entities if ent.token_index is not None]
    if with_token and len(with_token) != len(entities):
        raise ValidationError(
            "token_index must be present for all entities or none")

    relations = []
    seen_triples = set()
    for index, rel in enumerate(obj.get("relations", [])):
        if not isinstance(rel, dict):
            raise DocumentSyntaxError(f"relation {index} must be a JSON object")
        unknown = set(rel) - _RELATION_FIELDS
        if unknown:
            raise DocumentSyntaxError(
                f"relation {index}: unknown fields {sorted(unknown)}")
        missing = _RELATION_FIELDS - set(rel)
        if missing:
            raise DocumentSyntaxError(
                f"relation {index}: missing fields {sorted(missing)}")
        subject = _require_int(rel["subject"], f"relation {index}: subject")
        obj_id = _require_int(rel["object"], f"relation {index}: object")
        predicate = rel["predicate"]
        if not isinstance(predicate, str):
            raise DocumentSyntaxError(f"relation {index}: predicate must be a string")
        for which, rid in (("subject", subject), ("object", obj_id)):
            if rid not in set(ids):
                raise ValidationError(
                    f"relation {index}: {which} id {rid} does not exist")
        if subject == obj_id:
            raise ValidationError(f"relation {index}: subject equals object")
        triple = (subject, predicate, obj_id)
        if triple in seen_triples:
            raise ValidationError(f"relation {index}: duplicate triple {triple}")
        seen_triples.add(triple)
        relations.append(RelationTriple(subject, predicate, obj_id))

    return SceneGraph(caption, tuple(entities), tuple(relations))


# Predicate -> (vertical, horizontal) direction of the SUBJECT relative to
# the OBJECT.  Lookup is case-insensitive after whitespace normalization.
_DEFAULT_LEXICON: dict[str, tuple[Vertical, Horizontal]] = {
    "left of": (Vertical.SAME, Horizontal.LEFT),
    "to the left of": (Vertical.SAME, Horizontal.LEFT),
    "right of": (Vertical.SAME, Horizontal.RIGHT),
    "to the right of": (Vertical.SAME, Horizontal.RIGHT),
    "above": (Vertical.ABOVE, Horizontal.SAME),
    "over": (Vertical.ABOVE, Horizontal.SAME),
    "on": (Vertical.ABOVE, Horizontal.SAME),
    "on top of": (Vertical.ABOVE, Horizontal.SAME),
    "atop": (Vertical.ABOVE, Horizontal.SAME),
    "rides": (Vertical.ABOVE, Horizontal.SAME),
    "riding": (Vertical.ABOVE, Horizontal.SAME),
    "sits on": (Vertical.ABOVE, Horizontal.SAME),
    "standing on": (Vertical.ABOVE, Horizontal.SAME),
    "below": (Vertical.BELOW, Horizontal.SAME),
    "under": (Vertical.BELOW, Horizontal.SAME),
    "beneath": (Vertical.BELOW, Horizontal.SAME),
    "underneath": (Vertical.BELOW, Horizontal.SAME),
    "next to": (Vertical.SAME, Horizontal.UNCONSTRAINED),
    "beside": (Vertical.SAME, Horizontal.UNCONSTRAINED),
}


def normalize_predicate(predicate: str) -> str:
    return " ".join(predicate.lower().split())


def default_lexicon() -> dict[str, tuple[Vertical, Horizontal]]:
    """Built-in predicate lexicon (subject direction relative to object)."""
    return dict(_DEFAULT_LEXICON)


def _check_acyclic(edges: set[tuple[int, int]], axis: str) -> None:
    sorter: graphlib.TopologicalSorter = graphlib.TopologicalSorter()
    for src, dst in edges:
        sorter.add(dst, src)
    try:
        sorter.prepare()
    except graphlib.CycleError as exc:
        raise CycleError(f"{axis} order contains a cycle: {exc.args[1]}") from exc


def strict_edges(
    constraints: Iterable[DirectionalConstraint],
) -> tuple[set[tuple[int, int]], set[tuple[int, int]]]:
    """Strict order edges (before, after) implied by LEFT/RIGHT and
    ABOVE/BELOW constraints: (x_edges, y_edges), smaller coordinate first."""
    x_edges: set[tuple[int, int]] = set()
    y_edges: set[tuple[int, int]] = set()
    for con in constraints:
        if con.horizontal is Horizontal.RIGHT:
            x_edges.add((con.i, con.j))
        elif con.horizontal is Horizontal.LEFT:
            x_edges.add((con.j, con.i))
        if con.vertical is Vertical.BELOW:
            y_edges.add((con.i, con.j))
        elif con.vertical is Vertical.ABOVE:
            y_edges.add((con.j, con.i))
    return x_edges, y_edges


def derive_constraints(
    graph: SceneGraph,
    lexicon: Mapping[str, tuple[Vertical, Horizontal]] | None = None,
) -> frozenset[DirectionalConstraint]:
    """Expand relation triples into a symmetry-closed constraint set.

    For ``(s, p, o)`` with lexicon entry ``(dv, dh)`` (direction of the
    subject relative to the object) this emits ``(i=o, j=s, dv, dh)`` plus
    its inverse.  Unknown predicates yield fully unconstrained pairs.
    Multiple relations on one ordered pair merge axis-wise; UNCONSTRAINED
    is the merge identity.

    Raises:
        CycleError: strict LEFT/RIGHT or ABOVE/BELOW edges form a cycle.
        ConflictError: one ordered pair ends up with two different
            constrained values on an axis.
    """
    if lexicon is None:
        lexicon = _DEFAULT_LEXICON
    normalized = {normalize_predicate(k): v for k, v in lexicon.items()}

    raw: list[DirectionalConstraint] = []
    for rel in graph.relations:
        entry = normalized.get(normalize_predicate(rel.predicate))
        if entry is None:
            entry = (Vertical.UNCONSTRAINED, Horizontal.UNCONSTRAINED)
        vert, horiz = entry
        forward = DirectionalConstraint(rel.object_id, rel.subject_id, vert, horiz)
        raw.append(forward)
        raw.append(forward.inverse())

    # Cycle detection first: a LEFT+RIGHT contradiction on one pair is a
    # 2-cycle and must surface as CycleError, not ConflictError.
    x_edges, y_edges = strict_edges(raw)
    _check_acyclic(x_edges, "horizontal")
    _check_acyclic(y_edges, "vertical")

    merged: dict[tuple[int, int], tuple[Vertical, Horizontal]] = {}
    for con in raw:
        pair = (con.i, con.j)
        if pair not in merged:
            merged[pair] = (con.vertical, con.horizontal)
            continue
        vert, horiz = merged[pair]
        merged[pair] = (
            _merge_axis(vert, con.vertical, Vertical.UNCONSTRAINED, pair, "vertical"),
            _merge_axis(horiz, con.horizontal, Horizontal.UNCONSTRAINED, pair,
                        "horizontal"),
        )

    return frozenset(
        DirectionalConstraint(i, j, vert, horiz)
        for (i, j), (vert, horiz) in merged.items()
    )


def _merge_axis(current, incoming, unconstrained, pair, axis):
    if incoming is unconstrained:
        return current
    if current is unconstrained or current is incoming:
        return incoming
    raise ConflictError(
        f"pair {pair}: contradictory {axis} directions "
        f"{current.value} vs {incoming.value}")
