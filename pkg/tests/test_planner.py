import random
from collections import deque

import pytest

from feastsim import planner
from feastsim.errors import InvariantError, PreconditionViolated, Unsolvable


def bfs_distance(initial, goal, actions=None):
    """Independent breadth-first oracle for optimal plan length."""
    actions = actions if actions is not None else planner.domain()
    goal = frozenset(goal)
    if initial.satisfies(goal):
        return 0
    seen = {initial.key()}
    queue = deque([(initial, 0)])
    while queue:
        st, depth = queue.popleft()
        for action in actions:
            if action.applicable(st):
                nxt = planner.apply(st, action)
                if nxt.satisfies(goal):
                    return depth + 1
                if nxt.key() not in seen:
                    seen.add(nxt.key())
                    queue.append((nxt, depth + 1))
    return None


class TestDomain:
    def test_picktool_grounds_over_three_tools(self):
        picks = [a for a in planner.domain() if a.name == "PickTool"]
        assert sorted(a.obj for a in picks) == ["mug", "utensil", "wiper"]

    def test_picktool_mug_preconditions(self):
        (pick_mug,) = [a for a in planner.domain()
                       if a.name == "PickTool" and a.obj == "mug"]
        assert pick_mug.pre_pos == {"GripperFree", "Reachable(mug)"}
        assert pick_mug.add == {"Holding(mug)"}
        assert pick_mug.delete == {"GripperFree", "Reachable(mug)"}

    def test_transfer_utensil_consumes_the_loaded_bite(self):
        # two-bite replay oracle: after one bite the loaded marker must be
        # gone so a second bite replans acquisition
        st = planner.initial_state()
        first = planner.plan(st, planner.goal_for("Bite"))
        st = planner.clear_delivered(first.execute(st))
        assert "BiteLoaded" not in st.atoms
        second = planner.plan(st, planner.goal_for("Bite"))
        assert second.labels() == ["AcquireBite", "TransferUtensil"]

    def test_pddl_dump_mentions_every_schema(self):
        text = planner.to_pddl()
        for name in ["PickTool", "PlaceTool", "AcquireBite", "TransferUtensil",
                     "TransferMug", "TransferWiper", "EmulateTransfer", "Retract"]:
            assert f"(:action {name}" in text


class TestPlan:
    def test_bite_from_scratch_is_the_three_step_plan(self):
        result = planner.plan(planner.initial_state(), planner.goal_for("Bite"))
        assert result.labels() == ["PickTool(utensil)", "AcquireBite", "TransferUtensil"]

    def test_drink_after_bite(self):
        st = planner.initial_state()
        st = planner.plan(st, planner.goal_for("Bite")).execute(st)
        st = planner.clear_delivered(st)
        result = planner.plan(st, planner.goal_for("Sip"))
        assert result.labels() == ["PlaceTool(utensil)", "PickTool(mug)", "TransferMug"]

    def test_satisfied_goal_gives_empty_plan(self):
        st = planner.initial_state()
        assert planner.plan(st, {"GripperFree"}).steps == ()

    def test_unsolvable(self):
        st = planner.state("GripperFree")  # nothing reachable
        with pytest.raises(Unsolvable):
            planner.plan(st, {"BiteTransferred"})

    def test_finish_while_holding_mug(self):
        # uniform-cost oracle over the reachable space
        st = planner.state("Holding(mug)", "Reachable(utensil)", "Reachable(wiper)")
        result = planner.plan(st, planner.goal_for("Finish"))
        assert result.labels() == ["PlaceTool(mug)", "Retract"]
        assert bfs_distance(st, planner.goal_for("Finish")) == 2

    def test_record_gesture_from_retract(self):
        result = planner.plan(planner.initial_state(),
                              planner.goal_for("RecordGesture"))
        assert result.labels() == ["EmulateTransfer"]


class TestApply:
    def test_picktool_effects(self):
        st = planner.initial_state()
        (pick,) = [a for a in planner.domain()
                   if a.name == "PickTool" and a.obj == "utensil"]
        nxt = planner.apply(st, pick)
        assert "Holding(utensil)" in nxt.atoms
        assert "GripperFree" not in nxt.atoms
        assert "Reachable(utensil)" not in nxt.atoms

    def test_place_inverts_pick(self):
        # set-algebra oracle: place after pick restores the original atoms
        st = planner.initial_state()
        actions = {a.label: a for a in planner.domain()}
        there = planner.apply(st, actions["PickTool(utensil)"])
        back = planner.apply(there, actions["PlaceTool(utensil)"])
        assert back.atoms == st.atoms

    def test_unmet_precondition(self):
        st = planner.initial_state()
        (transfer,) = [a for a in planner.domain() if a.name == "TransferUtensil"]
        with pytest.raises(PreconditionViolated):
            planner.apply(st, transfer)


class TestProperties:
    def test_optimality_matches_bfs_oracle_everywhere(self):
        actions = planner.domain()
        states = planner.reachable_states()
        assert len(states) < 1000
        goals = list(planner.TASK_GOALS.values())
        for st in states:
            for goal in goals:
                expected = bfs_distance(st, goal, actions)
                if expected is None:
                    with pytest.raises(Unsolvable):
                        planner.plan(st, goal, actions)
                else:
                    assert planner.plan(st, goal, actions).cost == expected

    def test_plans_are_sound(self):
        states = planner.reachable_states()
        for st in states[::7]:
            for goal in planner.TASK_GOALS.values():
                try:
                    result = planner.plan(st, goal)
                except Unsolvable:
                    continue
                assert result.execute(st).satisfies(goal)

    def test_apply_preserves_invariants_from_random_states(self):
        rng = random.Random(7)
        states = planner.reachable_states()
        actions = planner.domain()
        for _ in range(500):
            st = rng.choice(states)
            applicable = [a for a in actions if a.applicable(st)]
            if not applicable:
                continue
            nxt = planner.apply(st, rng.choice(applicable))
            assert isinstance(nxt, planner.PlannerState)  # invariants checked in init

    def test_state_invariants_enforced(self):
        with pytest.raises(InvariantError):
            planner.state("Holding(mug)", "Holding(utensil)")
        with pytest.raises(InvariantError):
            planner.state("GripperFree", "Holding(mug)")
        with pytest.raises(InvariantError):
            planner.state("BiteLoaded", "GripperFree")
