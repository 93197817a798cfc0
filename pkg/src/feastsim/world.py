"""Deterministic simulated robot and environment.

One `SimWorld` owns the clock, the robot (mode, gripper, arm configuration),
the plate/mug scene, a simulated user head producing perception frames at
10 Hz, and the runtime safety monitors (pose filter, torque residual check,
watchdog, e-stops) as a state machine. Faults are injected with timestamps
and fire during `step`; everything is reproducible from the seed and the
fault schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvariantError, PreconditionViolated, SafetyStopped
from .gestures import DetectorRun, PerceptionFrame, builtin

SUBSTEP = 0.1          # simulation granularity = one perception frame

MODE_NORMAL = "normal"
MODE_COMPLIANT = "compliant"
MODE_SAFETY_STOP = "safety_stop"

SPEED_MULT = {"low": 1.5, "medium": 1.0, "high": 0.5}

TRANSFER_SKILLS = ("TransferUtensil", "TransferMug", "TransferWiper",
                   "EmulateTransfer")

FAULT_KINDS = ("sensor_stall", "torque_anomaly", "head_out_of_zone",
               "marker_damaged", "estop", "skill_failure", "excessive_force")

SENSORS = ("head_camera", "force_torque", "estop_circuit")

ITEM_STATES = ("on_plate", "on_fork", "eaten")


@dataclass
class FoodItem:
    id: str
    food_type: str
    position: tuple = (0.0, 0.0)
    skewerable: bool = True
    scoopable: bool = False
    twirlable: bool = False
    dippable: bool = True
    is_dip: bool = False          # sauce wells are dipped into, never eaten
    state: str = "on_plate"

    def to_doc(self):
        return {"id": self.id, "food_type": self.food_type,
                "position": list(self.position),
                "skewerable": self.skewerable, "scoopable": self.scoopable,
                "twirlable": self.twirlable, "dippable": self.dippable,
                "is_dip": self.is_dip, "state": self.state}

    @staticmethod
    def from_doc(doc):
        doc = dict(doc)
        doc["position"] = tuple(doc.get("position", (0.0, 0.0)))
        return FoodItem(**doc)


@dataclass(frozen=True)
class FaultEvent:
    at: float
    kind: str
    detail: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in FAULT_KINDS:
            raise InvariantError(f"unknown fault kind {self.kind!r}")

    def to_doc(self):
        return {"at": self.at, "kind": self.kind, "detail": dict(self.detail)}

    @staticmethod
    def from_doc(doc):
        return FaultEvent(doc["at"], doc["kind"], dict(doc.get("detail", {})))


@dataclass(frozen=True)
class SkillOutcome:
    status: str                   # success | failure
    reason: str = ""

    @property
    def ok(self):
        return self.status == "success"


@dataclass(frozen=True)
class UserZone:
    center: tuple = (0.0, 0.0, 0.6)
    half_extent: float = 0.15
    max_yaw: float = 0.8
    max_pitch: float = 0.8

    def contains(self, frame):
        dx = abs(frame.x - self.center[0])
        dy = abs(frame.y - self.center[1])
        dz = abs(frame.z - self.center[2])
        if max(dx, dy, dz) > self.half_extent:
            return False
        return abs(frame.yaw) <= self.max_yaw and abs(frame.pitch) <= self.max_pitch


# signature shapes the simulated user performs on request; these mirror the
# synthetic training generator so tuned detectors fire on live performances
def _performance_value(gesture_class, amplitude, u):
    if gesture_class == "head_nod":
        return {"pitch": 0.35 * amplitude * math.sin(2 * math.pi * 1.1 * u)} \
            if u <= 2.5 else {}
    if gesture_class == "head_shake":
        return {"yaw": 0.4 * amplitude * math.sin(2 * math.pi * 1.2 * u)} \
            if u <= 2.8 else {}
    if gesture_class == "head_tilt":
        return {"roll": 0.3 * amplitude * math.sin(2 * math.pi * 0.9 * u)} \
            if u <= 2.8 else {}
    if gesture_class == "head_still":
        return {"calm": True} if u <= 6.5 else {}
    if gesture_class == "mouth_open":
        level = min(0.35 + 0.5 * amplitude, 0.95)
        return {"mouth_open_ratio": level} if 0.1 <= u <= 2.1 else {}
    if gesture_class == "mouth_continuously_open":
        level = min(0.35 + 0.5 * amplitude, 0.95)
        return {"mouth_open_ratio": level} if 0.1 <= u <= 6.2 else {}
    if gesture_class == "three_blinks":
        floor = max(0.75 - 0.6 * amplitude, 0.02)
        phase = u % 1.0
        if u <= 3.0 and phase < 0.3:
            return {"eye_aspect_left": floor, "eye_aspect_right": floor}
        return {}
    if gesture_class == "three_eyebrow_raises":
        level = min(0.1 + 0.7 * amplitude, 0.98)
        phase = u % 1.1
        if u <= 3.3 and phase < 0.4:
            return {"eyebrow_raise": level}
        return {}
    return {}


_PERFORM_DURATION = {
    "head_nod": 3.5, "head_shake": 3.8, "head_tilt": 3.8, "head_still": 7.0,
    "mouth_open": 2.6, "mouth_continuously_open": 6.8,
    "three_blinks": 3.6, "three_eyebrow_raises": 4.0,
}


class UserModel:
    """Deterministic simulated user: idle head motion plus requested responses."""

    def __init__(self, zone, rng, amplitude=1.0, responsive=True,
                 gesture_delay_s=0.8, bite_delay_s=1.0, button_delay_s=1.0):
        self.zone = zone
        self.rng = rng
        self.amplitude = amplitude
        self.responsive = responsive
        self.gesture_delay_s = gesture_delay_s
        self.bite_delay_s = bite_delay_s
        self.button_delay_s = button_delay_s
        self.expectation = None         # (kind, detail, since)
        self.performance = None         # (gesture_class, start_t)
        self.displaced_until = 0.0      # head held outside the zone

    def expect(self, kind, detail, now):
        if self.expectation and self.expectation[:2] == (kind, detail):
            return
        self.expectation = (kind, detail, now)
        if kind == "gesture" and self.responsive:
            self.performance = (detail, now + self.gesture_delay_s)

    def clear_expectation(self):
        self.expectation = None
        self.performance = None

    def displace(self, until):
        self.displaced_until = max(self.displaced_until, until)

    def button_due(self, now):
        if not self.responsive or self.expectation is None:
            return False
        kind, _, since = self.expectation
        return kind == "button" and now - since >= self.button_delay_s

    def bite_due(self, now):
        if not self.responsive or self.expectation is None:
            return False
        kind, _, since = self.expectation
        return kind == "bite" and now - since >= self.bite_delay_s

    def frame(self, now):
        n = self.rng.normal
        cx, cy, cz = self.zone.center
        overlay = {}
        calm = False
        if self.performance is not None:
            gesture_class, start = self.performance
            u = now - start
            if u > _PERFORM_DURATION.get(gesture_class, 4.0):
                self.performance = None
            elif u >= 0:
                # deliberate responses are performed clearly, whatever the
                # user's recorded range of motion during training
                effective = max(self.amplitude, 0.8)
                overlay = _performance_value(gesture_class, effective, u)
                calm = overlay.pop("calm", False)
        sigma = 0.002 if calm else 0.015
        values = {
            "x": cx + n(0, 0.004), "y": cy + n(0, 0.004), "z": cz + n(0, 0.004),
            "yaw": n(0, sigma), "pitch": n(0, sigma), "roll": n(0, sigma),
            "mouth_open_ratio": min(abs(n(0.04, 0.01)), 1.0),
            "eye_aspect_left": min(max(n(0.75, 0.008), 0.0), 1.0),
            "eye_aspect_right": min(max(n(0.75, 0.008), 0.0), 1.0),
            "eyebrow_raise": min(abs(n(0.1, 0.01)), 1.0),
        }
        values.update(overlay)
        if now < self.displaced_until:
            values["x"] = cx + 0.5    # detection behind the user's zone
        return PerceptionFrame(t=round(now, 6), **values)


@dataclass
class _Activity:
    kind: str
    ends_at: float
    payload: dict
    compliant: bool = False


class SimWorld:
    """Single-owner simulation; `step` drives everything."""

    def __init__(self, seed=0, plate=(), mug_filled=True, marker_ok=True,
                 zone=None, user_amplitude=1.0, user_responsive=True,
                 watchdog_timeout_s=0.5, torque_threshold=5.0):
        self.clock = 0.0
        self.mode = MODE_NORMAL
        self.config_label = "retract"
        self.gripper = None
        self.utensil_broken = False
        self.plate = [replace(item) for item in plate]
        self.mug = {"marker_ok": marker_ok, "filled": mug_filled}
        self.zone = zone or UserZone()
        self.rng = np.random.default_rng(np.random.SeedSequence([seed, 11]))
        self.user = UserModel(self.zone, self.rng, amplitude=user_amplitude,
                              responsive=user_responsive)
        self.watchdog_timeout_s = watchdog_timeout_s
        self.torque_threshold = torque_threshold
        self.pending_faults = []
        self.queued_skill_failures = []
        self.heartbeats = {s: 0.0 for s in SENSORS}
        self.stalled_until = {}
        self.torque_residual = 0.0
        self.excessive_force_until = 0.0
        self.active_skill = None
        self._activity = None
        self._activity_outcome = None
        self._bite_event = False
        self._button_event = False
        self.latest_frame = None
        self.safety_log = []
        self.events = []
        self.safety_reason = ""
        self.observer = None     # callable(list of events), set by the session

    # -- fault harness -------------------------------------------------------

    def inject(self, fault):
        if fault.at < self.clock - 1e-9:
            raise InvariantError("fault scheduled in the past")
        self.pending_faults.append(fault)
        self.pending_faults.sort(key=lambda f: f.at)

    def operator_reset(self):
        """Explicit recovery from the safety state."""
        self.mode = MODE_NORMAL
        self.safety_reason = ""
        self.torque_residual = 0.0
        self.utensil_broken = False
        self._emit("safety", {"mode": self.mode, "trigger": "operator_reset"})
        self._log_safety("operator reset to normal mode")

    def repair_marker(self):
        self.mug["marker_ok"] = True
        self._emit("scene", {"change": "marker_replaced"})

    def refill_mug(self):
        self.mug["filled"] = True
        self._emit("scene", {"change": "mug_refilled"})

    # -- clock ---------------------------------------------------------------

    def step(self, dt=SUBSTEP):
        """Advance the clock, firing faults, frames, activity, and monitors."""
        if dt <= 0:
            raise InvariantError("dt must be positive")
        emitted = []
        remaining = dt
        while remaining > 1e-9:
            sub = min(SUBSTEP, remaining)
            remaining -= sub
            self.clock = round(self.clock + sub, 6)
            self._fire_due_faults()
            self._heartbeat()
            frame = None
            if not self._stalled("head_camera"):
                frame = self.user.frame(self.clock)
                self.latest_frame = frame
                self._emit("frame", frame.to_doc())
            if self.user.button_due(self.clock):
                self._button_event = True
                self.user.clear_expectation()
                self._emit("button", {})
            if self.user.bite_due(self.clock):
                self._bite_event = True
                self.user.clear_expectation()
                self._emit("bite_force", {})
            self._progress_activity()
            self.safety_tick()
        emitted, self.events = self.events, []
        if self.observer is not None and emitted:
            self.observer(emitted)
        return emitted

    def _emit(self, kind, data):
        self.events.append({"t": self.clock, "kind": kind, "data": data})

    def _log_safety(self, message):
        self.safety_log.append({"t": self.clock, "message": message})

    def _fire_due_faults(self):
        while self.pending_faults and self.pending_faults[0].at <= self.clock + 1e-9:
            fault = self.pending_faults.pop(0)
            detail = fault.detail
            self._emit("fault", fault.to_doc())
            if fault.kind == "sensor_stall":
                sensor = detail.get("sensor", "head_camera")
                until = self.clock + float(detail.get("duration_s", 1.0))
                self.stalled_until[sensor] = until
            elif fault.kind == "torque_anomaly":
                self.torque_residual = float(detail.get("magnitude", 10.0))
            elif fault.kind == "head_out_of_zone":
                self.user.displace(self.clock + float(detail.get("duration_s", 1.0)))
            elif fault.kind == "marker_damaged":
                self.mug["marker_ok"] = False
            elif fault.kind == "estop":
                self._enter_safety_stop(
                    f"emergency stop ({detail.get('source', 'user')})")
            elif fault.kind == "skill_failure":
                self.queued_skill_failures.append(detail.get("skill", ""))
            elif fault.kind == "excessive_force":
                self.excessive_force_until = self.clock + float(
                    detail.get("duration_s", 0.5))

    def _stalled(self, sensor):
        return self.clock < self.stalled_until.get(sensor, 0.0)

    def _heartbeat(self):
        for sensor in SENSORS:
            if not self._stalled(sensor):
                self.heartbeats[sensor] = self.clock

    # -- safety monitors -----------------------------------------------------

    def safety_tick(self):
        """Pose filter, watchdog, torque residual, breakaway; returns the mode."""
        if self.mode == MODE_SAFETY_STOP:
            return self.mode
        for sensor in SENSORS:
            if self.clock - self.heartbeats[sensor] > self.watchdog_timeout_s:
                self._enter_safety_stop(f"watchdog: {sensor} heartbeat stale")
                return self.mode
        transfer_active = self.active_skill in TRANSFER_SKILLS
        if (transfer_active and self.latest_frame is not None
                and not self._stalled("head_camera")
                and not self.zone.contains(self.latest_frame)):
            self._enter_safety_stop("pose filter: head outside the user zone "
                                    "during transfer")
            return self.mode
        force_spike = self.clock < self.excessive_force_until
        if self.mode == MODE_NORMAL and (
                self.torque_residual > self.torque_threshold or force_spike):
            self._enter_safety_stop("collision monitor: torque residual above "
                                    "threshold")
            return self.mode
        if self.mode == MODE_COMPLIANT and force_spike and not self.utensil_broken:
            # the utensil's mechanical weak point yields instead of escalating
            self.utensil_broken = True
            self.excessive_force_until = 0.0
            self._emit("breakaway", {"skill": self.active_skill})
            self._log_safety("breakaway utensil yielded under excessive force")
            if self._activity is not None:
                self._finish_activity(SkillOutcome("failure", "breakaway utensil"))
        return self.mode

    def _enter_safety_stop(self, reason):
        self.mode = MODE_SAFETY_STOP
        self.safety_reason = reason
        self._log_safety(f"SAFETY STOP: {reason}")
        self._emit("safety", {"mode": self.mode, "trigger": reason})
        if self._activity is not None:
            self._finish_activity(SkillOutcome("failure", "safety stop"))

    # -- activities (asynchronous primitives driven by step) ------------------

    def _require_motion_ok(self):
        if self.mode == MODE_SAFETY_STOP:
            raise SafetyStopped(f"robot is in the safety state: {self.safety_reason}")

    def begin_activity(self, kind, duration_s, payload=None, compliant=False):
        self._require_motion_ok()
        if self._activity is not None:
            raise InvariantError("an activity is already running")
        if compliant:
            self.mode = MODE_COMPLIANT
        self._activity = _Activity(kind, self.clock + duration_s, payload or {},
                                   compliant)
        self._activity_outcome = None

    def _progress_activity(self):
        act = self._activity
        if act is None or self.clock + 1e-9 < act.ends_at:
            return
        outcome = self._complete(act)
        self._finish_activity(outcome)

    def _finish_activity(self, outcome):
        act = self._activity
        self._activity = None
        self._activity_outcome = outcome
        if act is not None and act.compliant and self.mode == MODE_COMPLIANT:
            self.mode = MODE_NORMAL

    def poll_activity(self):
        """One-shot: outcome of the finished activity, else None."""
        outcome, self._activity_outcome = self._activity_outcome, None
        return outcome

    def _take_injected_failure(self, skill):
        if skill in self.queued_skill_failures:
            self.queued_skill_failures.remove(skill)
            return True
        return False

    def _complete(self, act):
        kind = act.kind
        p = act.payload
        if kind == "motion":
            self.config_label = p["label"]
            return SkillOutcome("success")
        if kind == "grasp":
            tool = p["tool"]
            if self._take_injected_failure("PickTool"):
                return SkillOutcome("failure", "injected failure")
            if tool == "mug" and not self.mug["marker_ok"]:
                return SkillOutcome("failure", "marker not detected")
            self.gripper = tool
            self.config_label = "tool-mount" if tool != "mug" else "mug-pickup"
            return SkillOutcome("success")
        if kind == "stow":
            self.gripper = None
            self.config_label = "tool-mount"
            return SkillOutcome("success")
        if kind == "acquire":
            if self._take_injected_failure("AcquireBite"):
                return SkillOutcome("failure", "injected failure")
            if self.utensil_broken:
                return SkillOutcome("failure", "utensil broken")
            item_id = p.get("item_id")
            if item_id is None:
                return SkillOutcome("success")   # empty keypoint: recovery no-op
            item = self.find_item(item_id)
            if item is None or item.state != "on_plate" or item.is_dip:
                return SkillOutcome("failure", "item not on plate")
            if any(i.state == "on_fork" for i in self.plate):
                return SkillOutcome("failure", "fork already loaded")
            item.state = "on_fork"
            self.config_label = "above-plate"
            return SkillOutcome("success")
        if kind == "detect_plate":
            if self._stalled("head_camera"):
                return SkillOutcome("failure", "camera unavailable")
            return SkillOutcome("success")
        raise InvariantError(f"unknown activity kind {kind!r}")

    # -- scene helpers ---------------------------------------------------------

    def find_item(self, item_id):
        for item in self.plate:
            if item.id == item_id:
                return item
        return None

    def onfork_item(self):
        for item in self.plate:
            if item.state == "on_fork":
                return item
        return None

    def consume_onfork(self):
        item = self.onfork_item()
        if item is None:
            raise PreconditionViolated("no item on the fork")
        item.state = "eaten"
        return item

    def drop_onfork_back(self):
        item = self.onfork_item()
        if item is not None:
            item.state = "on_plate"
        return item

    def food_census(self):
        counts = {"on_plate": 0, "on_fork": 0, "eaten": 0}
        for item in self.plate:
            if not item.is_dip:
                counts[item.state] += 1
        return counts

    def edible_items(self):
        return [i for i in self.plate if not i.is_dip and i.state == "on_plate"]

    # -- user interaction ------------------------------------------------------

    def expect_user(self, kind, detail=""):
        self.user.expect(kind, detail, self.clock)

    def clear_user_expectation(self):
        self.user.clear_expectation()

    def take_button_event(self):
        pressed, self._button_event = self._button_event, False
        return pressed

    def take_bite_event(self):
        bitten, self._bite_event = self._bite_event, False
        return bitten

    def announce(self, text):
        self._emit("audio", {"text": text})

    # -- synchronous composite skills (module-level interface) ------------------

    def execute_skill(self, skill_id, params=None) -> SkillOutcome:
        """Run one whole skill to completion, stepping the clock internally."""
        params = params or {}
        self._require_motion_ok()
        speed = SPEED_MULT.get(params.get("Speed", "medium"), 1.0)
        # grasp/acquire activities consume their own injected failures
        if skill_id not in ("PickTool", "AcquireBite") \
                and self._take_injected_failure(skill_id):
            return SkillOutcome("failure", "injected failure")
        if skill_id == "PickTool":
            tool = params.get("tool", "utensil")
            if self.gripper is not None:
                raise PreconditionViolated(f"gripper already holds {self.gripper}")
            self.begin_activity("grasp", 1.6 * speed, {"tool": tool})
            return self._run_to_outcome()
        if skill_id == "PlaceTool":
            if self.gripper is None:
                raise PreconditionViolated("gripper is empty")
            self.begin_activity("stow", 1.6 * speed)
            return self._run_to_outcome()
        if skill_id == "AcquireBite":
            if self.gripper != "utensil":
                raise PreconditionViolated("utensil not in gripper")
            item_id = params.get("item_id")
            if item_id is None and "item_id" not in params:
                items = self.edible_items()
                item_id = items[0].id if items else None
            self.begin_activity("acquire", 2.0 * speed, {"item_id": item_id})
            return self._run_to_outcome()
        if skill_id in ("TransferUtensil", "TransferMug", "TransferWiper"):
            return self._transfer(skill_id, params, speed)
        if skill_id == "EmulateTransfer":
            if self.gripper is not None:
                raise PreconditionViolated("gesture recording needs an empty gripper")
            self.active_skill = skill_id
            try:
                self.begin_activity("motion", 1.2 * speed, {"label": "at-mouth"})
                return self._run_to_outcome()
            finally:
                self.active_skill = None
        if skill_id == "Retract":
            if self.gripper is not None:
                raise PreconditionViolated("retract requires an empty gripper")
            self.begin_activity("motion", 1.5 * speed, {"label": "retract"})
            return self._run_to_outcome()
        raise InvariantError(f"unknown skill {skill_id!r}")

    def _transfer(self, skill_id, params, speed):
        tool = {"TransferUtensil": "utensil", "TransferMug": "mug",
                "TransferWiper": "wiper"}[skill_id]
        if self.gripper != tool:
            raise PreconditionViolated(f"transfer needs {tool} in the gripper")
        if skill_id == "TransferUtensil" and self.onfork_item() is None:
            return SkillOutcome("failure", "no bite on the fork")
        if skill_id == "TransferMug" and not self.mug["filled"]:
            return SkillOutcome("failure", "mug is empty")
        self.active_skill = skill_id
        compliant = bool(params.get("InsideMouthTransfer", False))
        labels = {"TransferUtensil": ("at-mouth", "ready-to-transfer"),
                  "TransferMug": ("mug-at-mouth", "mug-near-user"),
                  "TransferWiper": ("wiper-at-mouth", "wiper-near-user")}
        at_mouth, withdraw_to = labels[skill_id]
        try:
            self.begin_activity("motion", 1.0 * speed, {"label": at_mouth},
                                compliant=compliant)
            outcome = self._run_to_outcome()
            if not outcome.ok:
                return outcome
            if skill_id == "TransferUtensil":
                self.expect_user("bite")
                outcome = self._await(self.take_bite_event, timeout_s=20.0)
                if not outcome.ok:
                    return outcome
                self.consume_onfork()
            else:
                self.expect_user("gesture", "head_nod")
                deadline = self.clock + 30.0
                fired = False
                run = DetectorRun(builtin("head_nod"), timeout_s=25.0)
                while self.clock < deadline:
                    events = self.step()
                    for event in events:
                        if event["kind"] == "frame":
                            out = run.feed(PerceptionFrame.from_doc(event["data"]))
                            if out is not None:
                                fired = out.status == "fired"
                                break
                    if fired or run.outcome is not None:
                        break
                    if self.mode == MODE_SAFETY_STOP:
                        return SkillOutcome("failure", "safety stop")
                self.clear_user_expectation()
                if not fired:
                    return SkillOutcome("failure", "completion gesture not seen")
            self.begin_activity("motion", 0.8 * speed, {"label": withdraw_to})
            return self._run_to_outcome()
        finally:
            self.active_skill = None

    def _await(self, taker, timeout_s):
        deadline = self.clock + timeout_s
        while self.clock < deadline:
            self.step()
            if self.mode == MODE_SAFETY_STOP:
                return SkillOutcome("failure", "safety stop")
            if self.utensil_broken:
                return SkillOutcome("failure", "breakaway utensil")
            if taker():
                return SkillOutcome("success")
        return SkillOutcome("failure", "timed out waiting for the user")

    def _run_to_outcome(self):
        while True:
            self.step()
            outcome = self.poll_activity()
            if outcome is not None:
                return outcome
            if self.mode == MODE_SAFETY_STOP:
                return SkillOutcome("failure", "safety stop")
