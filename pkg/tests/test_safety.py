import random

import pytest

from feastsim import bt, config, defaults, safety
from feastsim.errors import InvariantError

RETRACT_SPEC = {
    "kind": "Retract",
    "name": "retract after transfer",
    "description": "Moves to the retract configuration after the transfer.",
    "config_label": "retract",
}


@pytest.fixture
def cfg():
    return config.build_profiles()["default"].safety


def end_index(tree):
    return len(tree.root.children)


class TestStaticCheck:
    def test_unknown_parameter_name(self, trees):
        # the wipe auto-continue request failed on a bad parameter name
        updates = [safety.set_param("TransferWiper", "WipeAutoContinue", 100)]
        (ok, reason), = safety.static_check(updates, trees)
        assert not ok
        assert "WipeAutoContinue" in reason

    def test_well_formed_update_passes(self, trees):
        updates = [safety.set_param("AcquireBite", "Speed", "high")]
        assert safety.static_check(updates, trees) == [(True, "")]

    def test_missing_parent(self, trees):
        updates = [safety.add_node("TransferUtensil", "", 0, RETRACT_SPEC)]
        (ok, reason), = safety.static_check(updates, trees)
        assert not ok and "parent" in reason

    def test_unknown_tree(self, trees):
        updates = [safety.set_param("TransferCup", "Speed", "high")]
        (ok, reason), = safety.static_check(updates, trees)
        assert not ok and "TransferCup" in reason

    def test_does_not_mutate(self, trees):
        before = {k: bt.serialize(t) for k, t in trees.items()}
        safety.static_check([safety.set_param("AcquireBite", "Speed", "high")], trees)
        assert before == {k: bt.serialize(t) for k, t in trees.items()}


class TestSafetyCheck:
    def test_retract_at_tested_config_accepted(self, trees, cfg):
        tree = trees["TransferUtensil"]
        updates = [safety.add_node("TransferUtensil", tree.root.id,
                                   end_index(tree), RETRACT_SPEC)]
        verdict, = safety.safety_check(updates, trees, cfg)
        assert verdict.accepted

    def test_retract_at_untested_config_rejected(self, trees, cfg):
        # the drink tree withdraws to an unvetted configuration
        tree = trees["TransferMug"]
        updates = [safety.add_node("TransferMug", tree.root.id,
                                   end_index(tree), RETRACT_SPEC)]
        verdict, = safety.safety_check(updates, trees, cfg)
        assert verdict.status == safety.REJECTED_SAFETY
        assert "vetted" in verdict.reason

    def test_distance_below_profile_floor_rejected(self, trees):
        cfg = safety.SafetyConfig(
            frozenset(), {"TransferWiper.ApproachDistance": bt.RealRange(0.06, 0.15, "m")})
        updates = [safety.set_param("TransferWiper", "ApproachDistance", 0.03)]
        verdict, = safety.safety_check(updates, trees, cfg)
        assert verdict.status == safety.REJECTED_SAFETY
        assert "safety limits" in verdict.reason

    def test_non_whitelisted_addition_rejected(self, trees, cfg):
        spec = dict(RETRACT_SPEC, kind="Action")
        tree = trees["TransferUtensil"]
        updates = [safety.add_node("TransferUtensil", tree.root.id, 0, spec)]
        verdict, = safety.safety_check(updates, trees, cfg)
        assert verdict.status == safety.REJECTED_SAFETY

    def test_verdicts_preserve_order(self, trees, cfg):
        updates = [
            safety.set_param("AcquireBite", "Speed", "high"),
            safety.set_param("AcquireBite", "Nope", 1),
            safety.set_param("TransferMug", "Speed", "low"),
        ]
        verdicts = safety.safety_check(updates, trees, cfg)
        assert [v.update for v in verdicts] == updates
        assert [v.status for v in verdicts] == [
            safety.ACCEPTED, safety.REJECTED_STATIC, safety.ACCEPTED]

    def test_later_updates_see_earlier_ones(self, trees, cfg):
        tree = trees["TransferUtensil"]
        updates = [
            safety.add_node("TransferUtensil", tree.root.id, end_index(tree),
                            dict(RETRACT_SPEC, id="added_retract")),
            safety.remove_added("TransferUtensil", "added_retract"),
        ]
        verdicts, new_trees = safety.process_updates(updates, trees, cfg)
        assert all(v.accepted for v in verdicts)
        assert bt.diff(tree, new_trees["TransferUtensil"]) == []

    def test_remove_builtin_rejected(self, trees, cfg):
        updates = [safety.remove_added("TransferUtensil", "withdraw")]
        verdict, = safety.safety_check(updates, trees, cfg)
        assert verdict.status == safety.REJECTED_SAFETY


class TestSafetyConfig:
    def test_round_trip(self, cfg):
        doc = cfg.to_doc()
        again = safety.SafetyConfig.from_doc(doc)
        assert again.to_doc() == doc

    def test_override_must_be_subset(self, trees):
        cfg = safety.SafetyConfig(
            frozenset(), {"TransferWiper.ApproachDistance": bt.RealRange(0.0, 0.5, "m")})
        with pytest.raises(InvariantError):
            cfg.check_subset_of(trees)

    def test_shipped_profiles_are_subsets(self, trees):
        for profile in config.build_profiles().values():
            profile.safety.check_subset_of(trees)

    def test_monotone_restriction(self, trees, cfg):
        # narrowing an override can never turn a rejection into an acceptance
        wide = cfg.with_override("TransferUtensil", "ApproachDistance",
                                 bt.RealRange(0.05, 0.2, "m"))
        narrow = cfg.with_override("TransferUtensil", "ApproachDistance",
                                   bt.RealRange(0.08, 0.15, "m"))
        for value in [0.01, 0.05, 0.07, 0.08, 0.12, 0.15, 0.2, 0.25]:
            update = [safety.set_param("TransferUtensil", "ApproachDistance", value)]
            wide_verdict, = safety.safety_check(update, trees, wide)
            narrow_verdict, = safety.safety_check(update, trees, narrow)
            if not wide_verdict.accepted:
                assert not narrow_verdict.accepted


def random_update(rng, trees):
    tree_id = rng.choice(sorted(trees) + ["NoSuchTree"])
    tree = trees.get(tree_id)
    kind = rng.choice(["set", "add", "remove"])
    if kind == "set" or tree is None:
        params = sorted(tree.parameters) if tree is not None else []
        param = rng.choice(params + ["BogusParam"])
        value = rng.choice([
            "low", "high", "turbo", True, False, 0, 3, 5, 42, 100, 250,
            0.0, 0.03, 0.07, 0.1, 0.3, "button", "sense", "gesture", "vertical",
        ])
        return safety.set_param(tree_id, param, value)
    nodes = [n for n in tree.nodes()]
    if kind == "add":
        parent = rng.choice(nodes)
        index = rng.randint(0, max(len(parent.children), 1))
        node_kind = rng.choice(list(bt.NODE_KINDS) + ["Banana"])
        spec = {"kind": node_kind, "name": "extra step",
                "description": "A personalization-added step."}
        if rng.random() < 0.3:
            spec["config_label"] = rng.choice(["retract", "somewhere"])
        return safety.add_node(tree_id, parent.id, index, spec)
    target = rng.choice(nodes)
    return safety.remove_added(tree_id, target.id)


def test_soundness_and_whitelist_over_random_batches(trees, cfg):
    # applying exactly the accepted verdicts must never corrupt a tree and
    # never introduce a non-whitelisted node kind or an unvetted retract
    rng = random.Random(20250809)
    builtin_ids = {tid: {n.id for n in t.nodes()} for tid, t in trees.items()}
    working = dict(trees)
    for _ in range(400):
        batch = [random_update(rng, working) for _ in range(rng.randint(1, 4))]
        verdicts, working = safety.process_updates(batch, working, cfg)
        for tree_id, tree in working.items():
            for param in tree.parameters.values():
                assert param.domain.contains(param.current)
            for node in tree.nodes():
                if node.id not in builtin_ids[tree_id]:
                    assert node.kind in bt.INSERTABLE_KINDS
                    assert node.origin == bt.ORIGIN_ADDED
