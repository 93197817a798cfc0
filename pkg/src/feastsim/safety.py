"""Validation of structured tree updates.

Every personalization request bottoms out here: updates are first statically
checked (names and payload shapes), then safety checked (node-addition
whitelist, vetted retract configurations, parameter domains narrowed by the
user's profile). Verdicts are per update, in order, and updates in one batch
are applied sequentially so later updates see earlier accepted ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import bt
from .errors import InvariantError, SchemaError

KIND_SET_PARAMETER = "set_parameter"
KIND_ADD_NODE = "add_node"
KIND_REMOVE_ADDED_NODE = "remove_added_node"
UPDATE_KINDS = (KIND_SET_PARAMETER, KIND_ADD_NODE, KIND_REMOVE_ADDED_NODE)

ACCEPTED = "accepted"
REJECTED_STATIC = "rejected_static"
REJECTED_SAFETY = "rejected_safety"


@dataclass(frozen=True)
class StructuredUpdate:
    kind: str
    tree_id: str
    param_id: str | None = None
    value: object = None
    parent_id: str | None = None
    index: int | None = None
    node_spec: dict | None = None
    node_id: str | None = None

    def to_doc(self):
        doc = {"kind": self.kind, "tree": self.tree_id}
        if self.kind == KIND_SET_PARAMETER:
            doc["param"] = self.param_id
            doc["value"] = self.value
        elif self.kind == KIND_ADD_NODE:
            doc["parent"] = self.parent_id
            doc["index"] = self.index
            doc["node"] = self.node_spec
        else:
            doc["node_id"] = self.node_id
        return doc

    def describe(self):
        if self.kind == KIND_SET_PARAMETER:
            return (f"set {self.tree_id}.{self.param_id} to "
                    f"{bt.render_value(self.value)}")
        if self.kind == KIND_ADD_NODE:
            node_kind = (self.node_spec or {}).get("kind", "?")
            return f"add a {node_kind} step to {self.tree_id}"
        return f"remove step {self.node_id} from {self.tree_id}"


def set_param(tree_id, param_id, value):
    return StructuredUpdate(KIND_SET_PARAMETER, tree_id, param_id=param_id, value=value)


def add_node(tree_id, parent_id, index, node_spec):
    return StructuredUpdate(KIND_ADD_NODE, tree_id, parent_id=parent_id,
                            index=index, node_spec=node_spec)


def remove_added(tree_id, node_id):
    return StructuredUpdate(KIND_REMOVE_ADDED_NODE, tree_id, node_id=node_id)


_WIRE_FIELDS = {
    KIND_SET_PARAMETER: {"kind", "tree", "param", "value"},
    KIND_ADD_NODE: {"kind", "tree", "parent", "index", "node"},
    KIND_REMOVE_ADDED_NODE: {"kind", "tree", "node_id"},
}


def parse_update(doc) -> StructuredUpdate:
    """Parse one wire-format update document; raises SchemaError."""
    if not isinstance(doc, dict):
        raise SchemaError(f"update is not an object: {doc!r}")
    kind = doc.get("kind")
    if kind not in UPDATE_KINDS:
        raise SchemaError(f"unknown update kind {kind!r}")
    expected = _WIRE_FIELDS[kind]
    if set(doc) != expected:
        raise SchemaError(
            f"update fields {sorted(doc)} do not match expected {sorted(expected)}")
    if kind == KIND_SET_PARAMETER:
        return set_param(doc["tree"], doc["param"], doc["value"])
    if kind == KIND_ADD_NODE:
        if not isinstance(doc["index"], int) or isinstance(doc["index"], bool):
            raise SchemaError("add_node index must be an integer")
        if not isinstance(doc["node"], dict):
            raise SchemaError("add_node node spec must be an object")
        return add_node(doc["tree"], doc["parent"], doc["index"], doc["node"])
    return remove_added(doc["tree"], doc["node_id"])


@dataclass(frozen=True)
class UpdateVerdict:
    update: StructuredUpdate
    status: str
    reason: str = ""

    def __post_init__(self):
        if self.status != ACCEPTED and not self.reason:
            raise InvariantError("rejected verdicts must carry a reason")

    @property
    def accepted(self):
        return self.status == ACCEPTED

    def to_doc(self):
        return {"update": self.update.to_doc(), "status": self.status,
                "reason": self.reason}


@dataclass(frozen=True)
class SafetyConfig:
    """Per-user safety profile: vetted retract configs and narrowed domains.

    Override keys are qualified as ``TreeId.ParamId``.
    """
    tested_retract_configs: frozenset = frozenset()
    overrides: dict = field(default_factory=dict)

    def override_for(self, tree_id, param_id):
        return self.overrides.get(f"{tree_id}.{param_id}")

    def with_override(self, tree_id, param_id, domain):
        overrides = dict(self.overrides)
        overrides[f"{tree_id}.{param_id}"] = domain
        return SafetyConfig(self.tested_retract_configs, overrides)

    def to_doc(self):
        return {
            "tested_retract_configs": sorted(self.tested_retract_configs),
            "overrides": {k: d.to_doc() for k, d in sorted(self.overrides.items())},
        }

    @staticmethod
    def from_doc(doc):
        if not isinstance(doc, dict):
            raise SchemaError("safety config must be an object")
        extra = set(doc) - {"tested_retract_configs", "overrides"}
        if extra:
            raise SchemaError(f"safety config has unknown fields: {sorted(extra)}")
        return SafetyConfig(
            tested_retract_configs=frozenset(doc.get("tested_retract_configs", ())),
            overrides={k: bt.domain_from_doc(d)
                       for k, d in doc.get("overrides", {}).items()},
        )

    def check_subset_of(self, trees):
        """Raise if any override is not a subset of its tree domain."""
        for key, domain in self.overrides.items():
            tree_id, _, param_id = key.partition(".")
            tree = trees.get(tree_id)
            if tree is None or param_id not in tree.parameters:
                raise InvariantError(f"override {key} targets nothing")
            if not domain.is_subset_of(tree.parameters[param_id].domain):
                raise InvariantError(f"override {key} is not a subset of the tree domain")


# ---------------------------------------------------------------------------
# checks


def _static_failure(update, trees):
    """Reason string if the update fails static checks, else None."""
    if update.kind not in UPDATE_KINDS:
        return f"unknown update kind {update.kind!r}"
    tree = trees.get(update.tree_id)
    if tree is None:
        return f"unknown tree {update.tree_id!r}"
    if update.kind == KIND_SET_PARAMETER:
        if not update.param_id or update.param_id not in tree.parameters:
            return f"unknown parameter {update.param_id!r} on {update.tree_id}"
        if not isinstance(update.value, (str, int, float, bool)):
            return f"malformed value {update.value!r}"
        return None
    if update.kind == KIND_ADD_NODE:
        if not update.parent_id:
            return "missing parent id"
        try:
            parent = tree.find_node(update.parent_id)
        except Exception:
            return f"unknown parent {update.parent_id!r} on {update.tree_id}"
        if parent.kind not in bt.COMPOSITE_KINDS:
            return f"parent {update.parent_id!r} cannot take children"
        if update.index is None or not 0 <= update.index <= len(parent.children):
            return f"index {update.index!r} out of range"
        spec = update.node_spec
        if not isinstance(spec, dict):
            return "malformed node spec"
        for fld in ("kind", "name", "description"):
            if not isinstance(spec.get(fld), str) or not spec[fld]:
                return f"node spec missing {fld}"
        if spec["kind"] not in bt.NODE_KINDS:
            return f"unknown node kind {spec['kind']!r}"
        for pdoc in spec.get("params", []):
            try:
                bt.BTParameter.from_doc(pdoc)
            except Exception as exc:
                return f"malformed node parameter: {exc}"
        return None
    # remove_added_node
    try:
        tree.find_node(update.node_id)
    except Exception:
        return f"unknown node {update.node_id!r} on {update.tree_id}"
    return None


def _exit_config(node):
    """Config label in effect after `node` finishes (rightmost labelled leaf)."""
    if node.children:
        for child in reversed(node.children):
            label = _exit_config(child)
            if label is not None:
                return label
    return node.config_label


def _safety_failure(update, trees, cfg):
    """Reason string if a statically valid update fails safety, else None."""
    tree = trees[update.tree_id]
    if update.kind == KIND_SET_PARAMETER:
        param = tree.parameters[update.param_id]
        override = cfg.override_for(update.tree_id, update.param_id)
        if not param.domain.contains(update.value):
            return (f"value {bt.render_value(update.value)} outside the allowed "
                    f"domain {param.domain.render()}")
        if override is not None and not override.contains(update.value):
            return (f"value {bt.render_value(update.value)} outside the allowed "
                    f"safety limits {override.render()}")
        return None
    if update.kind == KIND_ADD_NODE:
        kind = update.node_spec["kind"]
        if kind not in bt.INSERTABLE_KINDS:
            return (f"node additions are limited to "
                    f"{', '.join(bt.INSERTABLE_KINDS)}; got {kind}")
        if kind == "Retract":
            parent = tree.find_node(update.parent_id)
            if update.index == 0:
                return "no vetted configuration precedes the insertion point"
            predecessor = parent.children[update.index - 1]
            label = _exit_config(predecessor)
            if label not in cfg.tested_retract_configs:
                return (f"retract from configuration {label!r} has not been vetted")
        return None
    # remove_added_node
    node = tree.find_node(update.node_id)
    if node.origin != bt.ORIGIN_ADDED:
        return f"node {update.node_id!r} is builtin and cannot be removed"
    return None


def _apply_accepted(update, trees):
    tree = trees[update.tree_id]
    if update.kind == KIND_SET_PARAMETER:
        new = bt.set_parameter(tree, update.param_id, update.value)
    elif update.kind == KIND_ADD_NODE:
        new = bt.insert_node(tree, update.parent_id, update.index, update.node_spec)
    else:
        new = bt.remove_node(tree, update.node_id)
    trees[update.tree_id] = new


def process_updates(updates, trees, cfg, apply=True):
    """Check a batch sequentially; returns (verdicts, resulting trees).

    With apply=False the input trees are returned untouched and verdicts are
    still computed against the would-be evolving state.
    """
    working = dict(trees)
    verdicts = []
    for update in updates:
        reason = _static_failure(update, working)
        if reason is not None:
            verdicts.append(UpdateVerdict(update, REJECTED_STATIC, reason))
            continue
        reason = _safety_failure(update, working, cfg)
        if reason is not None:
            verdicts.append(UpdateVerdict(update, REJECTED_SAFETY, reason))
            continue
        verdicts.append(UpdateVerdict(update, ACCEPTED))
        _apply_accepted(update, working)
    return verdicts, (working if apply else dict(trees))


def static_check(updates, trees):
    """Per-update static results: list of (ok, reason)."""
    results = []
    for update in updates:
        reason = _static_failure(update, trees)
        results.append((reason is None, reason or ""))
    return results


def safety_check(updates, trees, cfg):
    """Full verdict list (static failures included) without applying anything."""
    verdicts, _ = process_updates(updates, trees, cfg, apply=False)
    return verdicts
