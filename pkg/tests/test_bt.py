import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from feastsim import bt, defaults
from feastsim.errors import (
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

RETRACT_SPEC = {
    "kind": "Retract",
    "name": "retract after bite",
    "description": "Moves to the retract configuration after the transfer.",
    "config_label": "retract",
}


def test_acquire_bite_has_the_three_core_parameters(trees):
    params = trees["AcquireBite"].parameters
    assert {"Speed", "TimeToWaitBeforeAutocontinue", "AskUserForConfirmation"} <= set(params)
    assert params["Speed"].domain == bt.EnumDomain(("low", "medium", "high"))
    assert params["TimeToWaitBeforeAutocontinue"].domain == bt.IntRange(5, 100, "s")
    assert isinstance(params["AskUserForConfirmation"].domain, bt.BoolDomain)


def test_load_rejects_out_of_domain_value(trees):
    doc = trees["AcquireBite"].to_doc()
    for pdoc in doc["parameters"]:
        if pdoc["id"] == "Speed":
            pdoc["current"] = "turbo"
    with pytest.raises(InvariantError):
        bt.load_tree(doc)


def test_load_rejects_unknown_fields(trees):
    doc = trees["Retract"].to_doc()
    doc["color"] = "red"
    with pytest.raises(SchemaError):
        bt.load_tree(doc)
    doc = trees["Retract"].to_doc()
    doc["root"]["children"][0]["speed"] = 3
    with pytest.raises(SchemaError):
        bt.load_tree(doc)


def test_round_trip_is_byte_identical(trees):
    # canonicalization oracle: the serializer is the canonical form, so a
    # serialized document must reload to the very same bytes
    for tree in trees.values():
        text = bt.serialize(tree)
        again = bt.serialize(bt.load_tree(json.loads(text)))
        assert again == text


def test_shipped_documents_match_builders():
    from importlib import resources

    built = defaults.build_default_trees()
    for tree_id, tree in built.items():
        shipped = resources.files("feastsim").joinpath(f"trees/{tree_id}.json").read_text()
        assert shipped == bt.serialize(tree), f"{tree_id} document is stale"


class TestSetParameter:
    def test_speed_to_high(self, trees):
        new = bt.set_parameter(trees["AcquireBite"], "Speed", "high")
        assert new.value("Speed") == "high"
        assert new.version == trees["AcquireBite"].version + 1

    def test_task_selection_autocontinue_100(self, trees):
        new = bt.set_parameter(trees["TaskSelection"], "TimeToWaitBeforeAutocontinue", 100)
        assert new.value("TimeToWaitBeforeAutocontinue") == 100

    def test_below_domain_rejected(self, trees):
        with pytest.raises(DomainError):
            bt.set_parameter(trees["AcquireBite"], "TimeToWaitBeforeAutocontinue", 3)

    def test_unknown_parameter(self, trees):
        with pytest.raises(UnknownParameter):
            bt.set_parameter(trees["AcquireBite"], "WipeAutoContinue", 10)

    def test_updates_are_pure(self, trees):
        original = trees["AcquireBite"]
        bt.set_parameter(original, "Speed", "low")
        assert original.value("Speed") == "medium"

    def test_bool_domain_rejects_nonbool(self, trees):
        with pytest.raises(DomainError):
            bt.set_parameter(trees["AcquireBite"], "AskUserForConfirmation", "yes")


class TestInsertRemove:
    def _insert_retract(self, tree):
        parent = tree.root.id
        return bt.insert_node(tree, parent, len(tree.root.children), RETRACT_SPEC)

    def test_insert_retract_after_transfer(self, trees):
        tree = trees["TransferUtensil"]
        new = self._insert_retract(tree)
        added = new.root.children[-1]
        assert added.kind == "Retract"
        assert added.origin == bt.ORIGIN_ADDED
        assert new.version == tree.version + 1

    def test_insert_rejects_other_kinds(self, trees):
        spec = dict(RETRACT_SPEC, kind="Action")
        with pytest.raises(KindNotInsertable):
            bt.insert_node(trees["TransferUtensil"], "transferutensil", 0, spec)

    def test_insert_unknown_parent(self, trees):
        with pytest.raises(UnknownParent):
            bt.insert_node(trees["TransferUtensil"], "nope", 0, RETRACT_SPEC)

    def test_remove_restores_structure(self, trees):
        # structural-diff oracle: removal must make diff-to-original empty
        tree = trees["TransferUtensil"]
        grown = self._insert_retract(tree)
        assert bt.diff(tree, grown)
        shrunk = bt.remove_node(grown, grown.root.children[-1].id)
        assert bt.diff(tree, shrunk) == []
        assert shrunk.version == tree.version + 2

    def test_remove_builtin_rejected(self, trees):
        with pytest.raises(NotRemovable):
            bt.remove_node(trees["TransferUtensil"], "withdraw")

    def test_remove_unknown_node(self, trees):
        with pytest.raises(UnknownNode):
            bt.remove_node(trees["TransferUtensil"], "ghost")

    def test_inserted_pause_registers_parameters(self, trees):
        spec = {
            "kind": "Pause",
            "name": "pause before acquisition",
            "description": "Waits before the robot picks up the bite.",
            "params": [{
                "id": "PauseBeforeAcquisition",
                "name": "Pause Before Acquisition",
                "description": "How long to pause, in seconds.",
                "domain": {"type": "real_range", "lo": 0.1, "hi": 60.0, "unit": "s"},
                "default": 2.0,
                "current": 2.0,
            }],
        }
        tree = trees["AcquireBite"]
        new = bt.insert_node(tree, tree.root.id, 4, spec)
        assert "PauseBeforeAcquisition" in new.parameters
        pause = new.root.children[4]
        assert pause.kind == "Pause"
        assert pause.param_refs == ("PauseBeforeAcquisition",)
        back = bt.remove_node(new, pause.id)
        assert "PauseBeforeAcquisition" not in back.parameters
        assert bt.diff(tree, back) == []


class TestDescribe:
    def test_lists_speed_domain(self, trees):
        text = bt.describe(trees["AcquireBite"])
        assert "Speed" in text
        assert "{low, medium, high}" in text

    def test_deterministic(self, trees):
        tree = trees["AcquireBite"]
        assert bt.describe(tree) == bt.describe(tree)

    def test_only_the_changed_line_differs(self, trees):
        # line-diff oracle
        tree = trees["AcquireBite"]
        before = bt.describe(tree).splitlines()
        after = bt.describe(bt.set_parameter(tree, "Speed", "high")).splitlines()
        assert len(before) == len(after)
        changed = [(a, b) for a, b in zip(before, after) if a != b]
        assert len(changed) == 1
        assert "Speed" in changed[0][0]


class TestDiff:
    def test_self_diff_empty(self, trees):
        for tree in trees.values():
            assert bt.diff(tree, tree) == []

    def test_parameter_change(self, trees):
        tree = trees["AcquireBite"]
        entries = bt.diff(tree, bt.set_parameter(tree, "Speed", "high"))
        assert len(entries) == 1
        assert entries[0].kind == "parameter_changed"
        assert entries[0].subject == "Speed"

    def test_node_added_with_path(self, trees):
        tree = trees["TransferUtensil"]
        grown = bt.insert_node(tree, tree.root.id, len(tree.root.children), RETRACT_SPEC)
        entries = bt.diff(tree, grown)
        assert len(entries) == 1
        assert entries[0].kind == "node_added"
        assert entries[0].path.startswith(tree.root.id)

    def test_version_is_ignored(self, trees):
        tree = trees["AcquireBite"]
        bumped = bt.set_parameter(bt.set_parameter(tree, "Speed", "high"), "Speed", "medium")
        assert bumped.version != tree.version
        assert bt.diff(tree, bumped) == []

    def test_skill_mismatch(self, trees):
        with pytest.raises(SkillMismatch):
            bt.diff(trees["AcquireBite"], trees["Retract"])


def _domain_values(domain):
    if isinstance(domain, bt.EnumDomain):
        return st.sampled_from(domain.values)
    if isinstance(domain, bt.IntRange):
        return st.integers(min_value=domain.lo, max_value=domain.hi)
    if isinstance(domain, bt.RealRange):
        return st.floats(min_value=domain.lo, max_value=domain.hi,
                         allow_nan=False, allow_infinity=False)
    return st.booleans()


@settings(max_examples=60, deadline=None)
@given(data=st.data())
def test_domain_closure_under_random_updates(data):
    tree = defaults.build_acquire_bite()
    ids = sorted(tree.parameters)
    for _ in range(data.draw(st.integers(0, 12))):
        pid = data.draw(st.sampled_from(ids))
        value = data.draw(_domain_values(tree.parameters[pid].domain))
        tree = bt.set_parameter(tree, pid, value)
        for param in tree.parameters.values():
            assert param.domain.contains(param.current)
