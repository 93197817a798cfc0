import random

import pytest

from feastsim.errors import PreconditionViolated, SafetyStopped
from feastsim.world import (
    MODE_COMPLIANT,
    MODE_NORMAL,
    MODE_SAFETY_STOP,
    FaultEvent,
    FoodItem,
    SimWorld,
    SkillOutcome,
)


def plate_of(*types):
    items = []
    for i, t in enumerate(types):
        items.append(FoodItem(id=f"item{i}", food_type=t, position=(0.1 * i, 0.0)))
    return items


def fresh_world(seed=0, **kwargs):
    return SimWorld(seed=seed, plate=plate_of("chicken", "chicken", "wedge"), **kwargs)


class TestStep:
    def test_one_second_yields_ten_frames(self):
        world = fresh_world()
        events = world.step(1.0)
        frames = [e for e in events if e["kind"] == "frame"]
        assert len(frames) == 10

    def test_due_estop_stops_in_same_step(self):
        world = fresh_world()
        world.inject(FaultEvent(at=0.3, kind="estop", detail={"source": "user"}))
        world.step(0.3)
        assert world.mode == MODE_SAFETY_STOP

    def test_determinism(self):
        def run():
            world = fresh_world(seed=42)
            world.inject(FaultEvent(at=0.5, kind="torque_anomaly",
                                    detail={"magnitude": 9.0}))
            log = []
            for _ in range(20):
                log.extend(world.step(0.1))
            return log

        assert run() == run()


class TestSkills:
    def test_pick_mug_with_damaged_marker_fails(self):
        world = fresh_world()
        world.inject(FaultEvent(at=0.0, kind="marker_damaged"))
        world.step(0.1)
        outcome = world.execute_skill("PickTool", {"tool": "mug"})
        assert outcome == SkillOutcome("failure", "marker not detected")
        world.repair_marker()
        assert world.execute_skill("PickTool", {"tool": "mug"}).ok

    def test_acquire_moves_item_onto_fork(self):
        world = fresh_world()
        assert world.execute_skill("PickTool", {"tool": "utensil"}).ok
        assert world.execute_skill("AcquireBite", {"item_id": "item0"}).ok
        assert world.find_item("item0").state == "on_fork"

    def test_transfer_consumes_bite_on_force(self):
        world = fresh_world()
        world.execute_skill("PickTool", {"tool": "utensil"})
        world.execute_skill("AcquireBite", {"item_id": "item0"})
        outcome = world.execute_skill("TransferUtensil")
        assert outcome.ok
        assert world.find_item("item0").state == "eaten"

    def test_breakaway_in_compliant_mode(self):
        world = fresh_world()
        world.execute_skill("PickTool", {"tool": "utensil"})
        world.execute_skill("AcquireBite", {"item_id": "item0"})
        world.inject(FaultEvent(at=world.clock + 0.5, kind="excessive_force"))
        outcome = world.execute_skill("TransferUtensil", {"InsideMouthTransfer": True})
        assert not outcome.ok
        assert outcome.reason == "breakaway utensil"
        # yielded hardware, not a safety stop
        assert world.mode != MODE_SAFETY_STOP
        assert world.utensil_broken

    def test_excessive_force_outside_compliant_stops(self):
        world = fresh_world()
        world.execute_skill("PickTool", {"tool": "utensil"})
        world.execute_skill("AcquireBite", {"item_id": "item0"})
        world.inject(FaultEvent(at=world.clock + 0.5, kind="excessive_force"))
        outcome = world.execute_skill("TransferUtensil")
        assert not outcome.ok
        assert world.mode == MODE_SAFETY_STOP

    def test_injected_skill_failure(self):
        world = fresh_world()
        world.execute_skill("PickTool", {"tool": "utensil"})
        world.inject(FaultEvent(at=world.clock, kind="skill_failure",
                                detail={"skill": "AcquireBite"}))
        world.step(0.1)
        assert not world.execute_skill("AcquireBite", {"item_id": "item0"}).ok
        assert world.execute_skill("AcquireBite", {"item_id": "item0"}).ok

    def test_preconditions(self):
        world = fresh_world()
        with pytest.raises(PreconditionViolated):
            world.execute_skill("AcquireBite", {})
        world.execute_skill("PickTool", {"tool": "utensil"})
        with pytest.raises(PreconditionViolated):
            world.execute_skill("PickTool", {"tool": "mug"})
        with pytest.raises(PreconditionViolated):
            world.execute_skill("Retract")

    def test_execute_refused_during_safety_stop(self):
        world = fresh_world()
        world.inject(FaultEvent(at=0.1, kind="estop"))
        world.step(0.2)
        with pytest.raises(SafetyStopped):
            world.execute_skill("PickTool", {"tool": "utensil"})

    def test_speed_scales_duration(self):
        def timed(speed):
            world = fresh_world()
            start = world.clock
            world.execute_skill("PickTool", {"tool": "utensil", "Speed": speed})
            return world.clock - start

        assert timed("high") < timed("medium") < timed("low")

    def test_mug_and_wiper_transfers_complete_via_nod(self):
        world = fresh_world()
        assert world.execute_skill("PickTool", {"tool": "mug"}).ok
        assert world.execute_skill("TransferMug").ok
        assert world.execute_skill("PlaceTool").ok
        assert world.execute_skill("PickTool", {"tool": "wiper"}).ok
        assert world.execute_skill("TransferWiper").ok

    def test_emulate_transfer_requires_empty_gripper(self):
        world = fresh_world()
        assert world.execute_skill("EmulateTransfer").ok
        assert world.config_label == "at-mouth"
        assert world.execute_skill("Retract").ok
        assert world.config_label == "retract"


class TestSafetyMonitors:
    def test_head_out_of_zone_only_matters_during_transfer(self):
        world = fresh_world()
        world.inject(FaultEvent(at=0.2, kind="head_out_of_zone",
                                detail={"duration_s": 3.0}))
        world.step(1.0)
        assert world.mode == MODE_NORMAL    # no transfer active
        world.execute_skill("PickTool", {"tool": "utensil"})
        world.execute_skill("AcquireBite", {"item_id": "item0"})
        world.inject(FaultEvent(at=world.clock + 0.2, kind="head_out_of_zone",
                                detail={"duration_s": 3.0}))
        outcome = world.execute_skill("TransferUtensil")
        assert not outcome.ok
        assert world.mode == MODE_SAFETY_STOP
        assert "pose filter" in world.safety_reason

    def test_fresh_heartbeats_keep_normal(self):
        world = fresh_world()
        world.step(2.0)
        assert world.mode == MODE_NORMAL

    def test_torque_anomaly_stops_in_normal_mode(self):
        world = fresh_world()
        world.inject(FaultEvent(at=0.2, kind="torque_anomaly",
                                detail={"magnitude": 8.0}))
        world.step(0.3)
        assert world.mode == MODE_SAFETY_STOP
        assert "torque" in world.safety_reason

    def test_watchdog_fires_within_timeout_plus_one_step(self):
        world = fresh_world(watchdog_timeout_s=0.5)
        world.inject(FaultEvent(at=0.2, kind="sensor_stall",
                                detail={"sensor": "head_camera", "duration_s": 5.0}))
        stalled_at = 0.2
        while world.mode != MODE_SAFETY_STOP:
            world.step(0.1)
            assert world.clock < 5.0
        assert world.clock <= stalled_at + 0.5 + 0.1 + 1e-6
        assert "watchdog" in world.safety_reason

    def test_short_stall_does_not_stop(self):
        world = fresh_world(watchdog_timeout_s=0.5)
        world.inject(FaultEvent(at=0.2, kind="sensor_stall",
                                detail={"sensor": "head_camera", "duration_s": 0.3}))
        world.step(2.0)
        assert world.mode == MODE_NORMAL

    def test_estop_idempotent_and_absorbing_until_reset(self):
        world = fresh_world()
        world.inject(FaultEvent(at=0.1, kind="estop", detail={"source": "user"}))
        world.inject(FaultEvent(at=0.2, kind="estop", detail={"source": "experimenter"}))
        world.step(0.5)
        assert world.mode == MODE_SAFETY_STOP
        world.step(3.0)
        assert world.mode == MODE_SAFETY_STOP
        world.operator_reset()
        assert world.mode == MODE_NORMAL
        assert world.execute_skill("PickTool", {"tool": "utensil"}).ok

    def test_compliant_mode_exempt_from_torque_check(self):
        world = fresh_world()
        world.execute_skill("PickTool", {"tool": "utensil"})
        world.execute_skill("AcquireBite", {"item_id": "item0"})
        world.begin_activity("motion", 5.0, {"label": "at-mouth"}, compliant=True)
        assert world.mode == MODE_COMPLIANT
        world.inject(FaultEvent(at=world.clock + 0.2, kind="torque_anomaly",
                                detail={"magnitude": 50.0}))
        world.step(1.0)
        assert world.mode == MODE_COMPLIANT

    def test_absorbing_over_random_fault_schedules(self):
        rng = random.Random(13)
        kinds = ["estop", "torque_anomaly", "sensor_stall", "head_out_of_zone",
                 "excessive_force", "skill_failure"]
        for trial in range(60):
            world = fresh_world(seed=trial)
            t = 0.0
            for _ in range(rng.randint(1, 5)):
                t += rng.uniform(0.1, 1.0)
                kind = rng.choice(kinds)
                detail = {}
                if kind == "torque_anomaly":
                    detail = {"magnitude": rng.uniform(0, 12)}
                elif kind == "sensor_stall":
                    detail = {"sensor": rng.choice(["head_camera", "force_torque"]),
                              "duration_s": rng.uniform(0.1, 2.0)}
                elif kind == "skill_failure":
                    detail = {"skill": "AcquireBite"}
                world.inject(FaultEvent(at=round(t, 1), kind=kind, detail=detail))
            stopped_at = None
            for _ in range(80):
                world.step(0.1)
                if world.mode == MODE_SAFETY_STOP and stopped_at is None:
                    stopped_at = world.clock
                if stopped_at is not None:
                    assert world.mode == MODE_SAFETY_STOP
            if stopped_at is not None:
                with pytest.raises(SafetyStopped):
                    world.execute_skill("PickTool", {"tool": "utensil"})


class TestFoodConservation:
    def test_census_constant_over_meal(self):
        world = fresh_world()
        total = sum(world.food_census().values())
        world.execute_skill("PickTool", {"tool": "utensil"})
        for item_id in ("item0", "item1", "item2"):
            assert world.execute_skill("AcquireBite", {"item_id": item_id}).ok
            assert world.execute_skill("TransferUtensil").ok
            census = world.food_census()
            assert sum(census.values()) == total
        assert world.food_census() == {"on_plate": 0, "on_fork": 0, "eaten": 3}
