"""Parameterized behavior trees.

Skills are represented as immutable trees whose nodes expose named,
domain-constrained parameters. All mutation helpers (`set_parameter`,
`insert_node`, `remove_node`) return new trees and bump the version; the
originals are never touched, which is what makes state diffing and
transcript replay cheap.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

from .canon import canon_document
from .errors import (
    DomainError,
    InvariantError,
    KindNotInsertable,
    NotRemovable,
    SchemaError,
    SkillMismatch,
    UnknownNode,
    UnknownParameter,
    UnknownParent,
)

COMPOSITE_KINDS = ("Sequence", "Selector")
LEAF_KINDS = ("Action", "Condition", "Pause", "WaitForGesture", "Retract")
NODE_KINDS = COMPOSITE_KINDS + LEAF_KINDS

# The only kinds a personalization update may insert.
INSERTABLE_KINDS = ("Pause", "WaitForGesture", "Retract")

ORIGIN_BUILTIN = "builtin"
ORIGIN_ADDED = "personalization-added"


# ---------------------------------------------------------------------------
# parameter domains


@dataclass(frozen=True)
class EnumDomain:
    values: tuple

    def __post_init__(self):
        if not self.values:
            raise InvariantError("enum domain must be non-empty")

    def contains(self, value):
        return value in self.values

    def to_doc(self):
        return {"type": "enum", "values": list(self.values)}

    def render(self):
        return "{" + ", ".join(str(v) for v in self.values) + "}"

    def is_subset_of(self, other):
        return isinstance(other, EnumDomain) and set(self.values) <= set(other.values)


@dataclass(frozen=True)
class IntRange:
    lo: int
    hi: int
    unit: str = ""

    def __post_init__(self):
        if self.lo > self.hi:
            raise InvariantError(f"int range lo {self.lo} > hi {self.hi}")

    def contains(self, value):
        return isinstance(value, int) and not isinstance(value, bool) \
            and self.lo <= value <= self.hi

    def to_doc(self):
        doc = {"type": "int_range", "lo": self.lo, "hi": self.hi}
        if self.unit:
            doc["unit"] = self.unit
        return doc

    def render(self):
        unit = f" {self.unit}" if self.unit else ""
        return f"[{self.lo}, {self.hi}]{unit}"

    def is_subset_of(self, other):
        return isinstance(other, IntRange) and other.lo <= self.lo and self.hi <= other.hi


@dataclass(frozen=True)
class RealRange:
    lo: float
    hi: float
    unit: str = ""

    def __post_init__(self):
        if self.lo > self.hi:
            raise InvariantError(f"real range lo {self.lo} > hi {self.hi}")

    def contains(self, value):
        return isinstance(value, (int, float)) and not isinstance(value, bool) \
            and self.lo <= value <= self.hi

    def to_doc(self):
        doc = {"type": "real_range", "lo": self.lo, "hi": self.hi}
        if self.unit:
            doc["unit"] = self.unit
        return doc

    def render(self):
        unit = f" {self.unit}" if self.unit else ""
        return f"[{self.lo}, {self.hi}]{unit}"

    def is_subset_of(self, other):
        return isinstance(other, RealRange) and other.lo <= self.lo and self.hi <= other.hi


@dataclass(frozen=True)
class BoolDomain:
    def contains(self, value):
        return isinstance(value, bool)

    def to_doc(self):
        return {"type": "bool"}

    def render(self):
        return "{true, false}"

    def is_subset_of(self, other):
        return isinstance(other, BoolDomain)


def domain_from_doc(doc):
    if not isinstance(doc, dict) or "type" not in doc:
        raise SchemaError(f"malformed domain document: {doc!r}")
    kind = doc["type"]
    extra = set(doc) - {"type", "values", "lo", "hi", "unit"}
    if extra:
        raise SchemaError(f"unknown domain fields: {sorted(extra)}")
    if kind == "enum":
        return EnumDomain(tuple(doc["values"]))
    if kind == "int_range":
        return IntRange(int(doc["lo"]), int(doc["hi"]), doc.get("unit", ""))
    if kind == "real_range":
        return RealRange(float(doc["lo"]), float(doc["hi"]), doc.get("unit", ""))
    if kind == "bool":
        return BoolDomain()
    raise SchemaError(f"unknown domain type: {kind!r}")


def render_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


# ---------------------------------------------------------------------------
# parameters and nodes


@dataclass(frozen=True)
class BTParameter:
    id: str
    name: str
    description: str
    domain: object
    default: object
    current: object

    def __post_init__(self):
        if not self.domain.contains(self.default):
            raise InvariantError(
                f"default {self.default!r} outside domain of parameter {self.id}")
        if not self.domain.contains(self.current):
            raise InvariantError(
                f"value {self.current!r} outside domain of parameter {self.id}")

    def to_doc(self):
        return {
            "id": self.id,
            "name": self.name,
            "description": self.description,
            "domain": self.domain.to_doc(),
            "default": self.default,
            "current": self.current,
        }

    @staticmethod
    def from_doc(doc):
        _require_fields(doc, {"id", "name", "description", "domain", "default", "current"},
                        kind="parameter")
        return BTParameter(
            id=doc["id"], name=doc["name"], description=doc["description"],
            domain=domain_from_doc(doc["domain"]),
            default=doc["default"], current=doc["current"],
        )


@dataclass(frozen=True)
class BTNode:
    id: str
    kind: str
    name: str
    description: str
    children: tuple = ()
    param_refs: tuple = ()
    origin: str = ORIGIN_BUILTIN
    config_label: str | None = None

    def __post_init__(self):
        if self.kind not in NODE_KINDS:
            raise SchemaError(f"unknown node kind {self.kind!r}")
        if self.kind in LEAF_KINDS and self.children:
            raise InvariantError(f"{self.kind} node {self.id!r} must be a leaf")
        if self.origin not in (ORIGIN_BUILTIN, ORIGIN_ADDED):
            raise SchemaError(f"unknown node origin {self.origin!r}")

    @property
    def is_leaf(self):
        return self.kind in LEAF_KINDS

    def to_doc(self):
        doc = {
            "id": self.id,
            "kind": self.kind,
            "name": self.name,
            "description": self.description,
            "origin": self.origin,
            "param_refs": list(self.param_refs),
            "children": [c.to_doc() for c in self.children],
        }
        if self.config_label is not None:
            doc["config_label"] = self.config_label
        return doc

    @staticmethod
    def from_doc(doc):
        _require_fields(
            doc,
            {"id", "kind", "name", "description", "origin", "param_refs", "children"},
            optional={"config_label"}, kind="node")
        return BTNode(
            id=doc["id"], kind=doc["kind"], name=doc["name"],
            description=doc["description"],
            children=tuple(BTNode.from_doc(c) for c in doc["children"]),
            param_refs=tuple(doc["param_refs"]),
            origin=doc["origin"],
            config_label=doc.get("config_label"),
        )


def _require_fields(doc, required, optional=frozenset(), kind="document"):
    if not isinstance(doc, dict):
        raise SchemaError(f"{kind} is not an object: {doc!r}")
    missing = required - set(doc)
    if missing:
        raise SchemaError(f"{kind} missing fields: {sorted(missing)}")
    extra = set(doc) - required - set(optional)
    if extra:
        raise SchemaError(f"{kind} has unknown fields: {sorted(extra)}")


# ---------------------------------------------------------------------------
# trees


@dataclass(frozen=True)
class BehaviorTree:
    skill_id: str
    root: BTNode
    parameters: dict = field(default_factory=dict)
    version: int = 0

    def __post_init__(self):
        _validate_tree(self)

    def param(self, param_id):
        try:
            return self.parameters[param_id]
        except KeyError:
            raise UnknownParameter(
                f"{self.skill_id} has no parameter {param_id!r}") from None

    def value(self, param_id):
        return self.param(param_id).current

    def nodes(self):
        """Preorder traversal."""
        out = []

        def walk(node):
            out.append(node)
            for child in node.children:
                walk(child)

        walk(self.root)
        return out

    def find_node(self, node_id):
        for node in self.nodes():
            if node.id == node_id:
                return node
        raise UnknownNode(f"{self.skill_id} has no node {node_id!r}")

    def to_doc(self):
        return {
            "skill_id": self.skill_id,
            "version": self.version,
            "parameters": [self.parameters[k].to_doc() for k in sorted(self.parameters)],
            "root": self.root.to_doc(),
        }


def _validate_tree(tree):
    seen = set()
    for node in tree.nodes():
        if node.id in seen:
            raise InvariantError(f"duplicate node id {node.id!r}")
        seen.add(node.id)
        for ref in node.param_refs:
            if ref not in tree.parameters:
                raise InvariantError(
                    f"node {node.id!r} references unknown parameter {ref!r}")
    if tree.version < 0:
        raise InvariantError("version must be non-negative")


def load_tree(doc) -> BehaviorTree:
    """Build a tree from its JSON document, rejecting unknown fields."""
    _require_fields(doc, {"skill_id", "version", "parameters", "root"}, kind="tree")
    try:
        params = {}
        for pdoc in doc["parameters"]:
            p = BTParameter.from_doc(pdoc)
            if p.id in params:
                raise SchemaError(f"duplicate parameter id {p.id!r}")
            params[p.id] = p
        return BehaviorTree(
            skill_id=doc["skill_id"],
            root=BTNode.from_doc(doc["root"]),
            parameters=params,
            version=int(doc["version"]),
        )
    except (SchemaError, InvariantError):
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed tree document: {exc}") from exc


def serialize(tree) -> str:
    """Canonical textual form; `serialize(load_tree(doc))` is byte-stable."""
    return canon_document(tree.to_doc())


# ---------------------------------------------------------------------------
# updates (pure: each returns a new tree, version + 1)


def set_parameter(tree, param_id, value) -> BehaviorTree:
    param = tree.param(param_id)
    if not param.domain.contains(value):
        raise DomainError(
            f"{tree.skill_id}.{param_id}: {value!r} outside domain {param.domain.render()}")
    params = dict(tree.parameters)
    params[param_id] = replace(param, current=value)
    return replace(tree, parameters=params, version=tree.version + 1)


def seed_parameter_values(tree, values) -> BehaviorTree:
    """Set several currents without bumping the version (profile loading)."""
    params = dict(tree.parameters)
    for param_id, value in values.items():
        param = tree.param(param_id)
        if not param.domain.contains(value):
            raise DomainError(
                f"{tree.skill_id}.{param_id}: {value!r} outside domain "
                f"{param.domain.render()}")
        params[param_id] = replace(param, current=value)
    return replace(tree, parameters=params)


def extend_enum_domain(tree, param_id, new_value) -> BehaviorTree:
    """Widen an enum parameter (e.g. when a synthesized gesture is registered).

    Not part of the structured-update channel: leaves the version untouched so
    that versions keep counting applied personalization updates only.
    """
    param = tree.param(param_id)
    if not isinstance(param.domain, EnumDomain):
        raise DomainError(f"{param_id} is not an enum parameter")
    if param.domain.contains(new_value):
        return tree
    params = dict(tree.parameters)
    params[param_id] = replace(
        param, domain=EnumDomain(param.domain.values + (new_value,)))
    return replace(tree, parameters=params)


def _slug(text):
    return re.sub(r"[^a-z0-9]+", "_", text.lower()).strip("_") or "node"


def node_from_spec(tree, node_spec):
    """Materialize an insertable node (plus any parameters it brings along).

    Returns (node, new_params). `node_spec` is the AddNode payload:
    {kind, name, description, config_label?, id?, params?: [parameter docs]}.
    """
    _require_fields(
        node_spec, {"kind", "name", "description"},
        optional={"config_label", "id", "params"}, kind="node spec")
    kind = node_spec["kind"]
    if kind not in INSERTABLE_KINDS:
        raise KindNotInsertable(
            f"kind {kind!r} is not insertable (allowed: {', '.join(INSERTABLE_KINDS)})")
    new_params = {}
    for pdoc in node_spec.get("params", []):
        p = BTParameter.from_doc(pdoc)
        if p.id in tree.parameters or p.id in new_params:
            raise InvariantError(f"parameter id {p.id!r} already exists")
        new_params[p.id] = p
    existing = {n.id for n in tree.nodes()}
    node_id = node_spec.get("id") or _fresh_id(_slug(node_spec["name"]), existing)
    if node_id in existing:
        raise InvariantError(f"node id {node_id!r} already exists")
    node = BTNode(
        id=node_id, kind=kind, name=node_spec["name"],
        description=node_spec["description"],
        param_refs=tuple(sorted(new_params)),
        origin=ORIGIN_ADDED,
        config_label=node_spec.get("config_label"),
    )
    return node, new_params


def _fresh_id(base, existing):
    candidate = f"added_{base}"
    i = 2
    while candidate in existing:
        candidate = f"added_{base}_{i}"
        i += 1
    return candidate


def insert_node(tree, parent_id, index, node_spec) -> BehaviorTree:
    """Insert a whitelisted node under `parent_id` at `index`."""
    parent = None
    for node in tree.nodes():
        if node.id == parent_id:
            parent = node
            break
    if parent is None:
        raise UnknownParent(f"{tree.skill_id} has no node {parent_id!r}")
    if parent.kind not in COMPOSITE_KINDS:
        raise UnknownParent(f"node {parent_id!r} is a leaf and cannot take children")
    if not 0 <= index <= len(parent.children):
        raise InvariantError(
            f"index {index} out of range for {parent_id!r} "
            f"({len(parent.children)} children)")
    new_node, new_params = node_from_spec(tree, node_spec)

    def rebuild(node):
        if node.id == parent_id:
            children = list(node.children)
            children.insert(index, new_node)
            return replace(node, children=tuple(children))
        if node.children:
            return replace(node, children=tuple(rebuild(c) for c in node.children))
        return node

    params = dict(tree.parameters)
    params.update(new_params)
    return replace(tree, root=rebuild(tree.root), parameters=params,
                   version=tree.version + 1)


def remove_node(tree, node_id) -> BehaviorTree:
    """Remove a personalization-added node (and the parameters it brought)."""
    target = tree.find_node(node_id)
    if target.origin != ORIGIN_ADDED:
        raise NotRemovable(f"node {node_id!r} is builtin")

    def rebuild(node):
        if node.children:
            kept = tuple(rebuild(c) for c in node.children if c.id != node_id)
            return replace(node, children=kept)
        return node

    params = {k: v for k, v in tree.parameters.items() if k not in target.param_refs}
    return replace(tree, root=rebuild(tree.root), parameters=params,
                   version=tree.version + 1)


# ---------------------------------------------------------------------------
# descriptions and diffs


def describe(tree) -> str:
    """Deterministic human-readable listing of nodes and parameters.

    No version line: two trees differing only in a parameter value must
    differ in exactly that parameter's line.
    """
    lines = [f"skill {tree.skill_id}"]
    lines.append("nodes:")

    def walk(node, depth):
        pad = "  " * (depth + 1)
        cfg = f" [configuration: {node.config_label}]" if node.config_label else ""
        refs = f" (parameters: {', '.join(node.param_refs)})" if node.param_refs else ""
        lines.append(f"{pad}{node.kind} \"{node.name}\": {node.description}{cfg}{refs}")
        for child in node.children:
            walk(child, depth + 1)

    walk(tree.root, 0)
    lines.append("parameters:")
    for pid in sorted(tree.parameters):
        p = tree.parameters[pid]
        lines.append(
            f"  {p.id} \"{p.name}\": {p.description} | allowed {p.domain.render()}"
            f" | current {render_value(p.current)} | default {render_value(p.default)}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class TreeDifference:
    kind: str          # parameter_changed | parameter_domain_changed |
                       # parameter_added | parameter_removed |
                       # node_added | node_removed
    subject: str       # parameter id or node id
    detail: str
    path: str = ""

    def to_doc(self):
        return {"kind": self.kind, "subject": self.subject,
                "detail": self.detail, "path": self.path}


def _node_paths(tree):
    paths = {}

    def walk(node, prefix):
        paths[node.id] = prefix
        for i, child in enumerate(node.children):
            walk(child, f"{prefix}/{i}")

    walk(tree.root, tree.root.id)
    return paths


def diff(a, b):
    """Differences between two versions of the same skill, ignoring version."""
    if a.skill_id != b.skill_id:
        raise SkillMismatch(f"{a.skill_id} vs {b.skill_id}")
    out = []
    for pid in sorted(set(a.parameters) | set(b.parameters)):
        pa = a.parameters.get(pid)
        pb = b.parameters.get(pid)
        if pa is None:
            out.append(TreeDifference("parameter_added", pid,
                                      f"now {render_value(pb.current)}"))
        elif pb is None:
            out.append(TreeDifference("parameter_removed", pid,
                                      f"was {render_value(pa.current)}"))
        else:
            if pa.current != pb.current:
                out.append(TreeDifference(
                    "parameter_changed", pid,
                    f"{render_value(pa.current)} -> {render_value(pb.current)}"))
            if pa.domain != pb.domain:
                out.append(TreeDifference(
                    "parameter_domain_changed", pid,
                    f"{pa.domain.render()} -> {pb.domain.render()}"))
    paths_a = _node_paths(a)
    paths_b = _node_paths(b)
    for nid in sorted(set(paths_b) - set(paths_a)):
        node = b.find_node(nid)
        out.append(TreeDifference("node_added", nid,
                                  f"{node.kind} \"{node.name}\"", paths_b[nid]))
    for nid in sorted(set(paths_a) - set(paths_b)):
        node = a.find_node(nid)
        out.append(TreeDifference("node_removed", nid,
                                  f"{node.kind} \"{node.name}\"", paths_a[nid]))
    return out


def structurally_equal(a, b):
    return not diff(a, b)
