"""The mealtime-assistance procedure as a page/state machine.

A session owns the world, the per-user trees, the planner belief, the four
transparency logs (node execution, perception, safety, Q&A), and the
transcript. External inputs (clicks, task requests, personalization text,
faults, caregiver actions) arrive as events; everything else is derived
deterministically in `step`, which is what makes transcripts replayable.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from . import bt, planner
from .errors import (
    InvalidEventForPage,
    InvariantError,
    SchemaError,
    TranslationFailed,
    WorldNotReady,
)
from .gateway_stub import gesture_template_for, slugify
from .gestures import DetectorRun, GestureProgram, PerceptionFrame, builtin
from .gesture_data import USER_PROFILES, example_set
from .gesture_synth import synthesize
from .tick import FAILURE, RUNNING, SUCCESS, TreeRunner
from .world import SPEED_MULT, MODE_SAFETY_STOP

PAGE_NEW_MEAL = "new_meal"
PAGE_TASK_SELECTION = "task_selection"
PAGE_BITE_ACQUISITION = "bite_acquisition"
PAGE_MANUAL_ACQUISITION = "manual_bite_acquisition"
PAGE_TRANSFER_CONFIRM = "transfer_confirm"
PAGE_PERSONALIZATION = "personalization"
PAGE_GESTURES = "gestures"
PAGE_TRANSITION = "transition"
PAGE_FINISHED = "finished"

PAGES = (PAGE_NEW_MEAL, PAGE_TASK_SELECTION, PAGE_BITE_ACQUISITION,
         PAGE_MANUAL_ACQUISITION, PAGE_TRANSFER_CONFIRM, PAGE_PERSONALIZATION,
         PAGE_GESTURES, PAGE_TRANSITION, PAGE_FINISHED)

TASKS = {"bite": "Bite", "sip": "Sip", "wipe": "Wipe", "finish": "Finish"}

LOG_TAIL = 20

AUTO_USER_DELAY_S = 0.6
LEVEL5_INTERVAL_S = 5.0

# gesture classes live detectors are performed as, keyed by program name
_GESTURE_CLASS_FALLBACK = "mouth_open"


@dataclass(frozen=True)
class MealSpec:
    food_types: tuple
    preference: str = ""
    tools: tuple = ("utensil", "mug", "wiper")
    profile_id: str = "default"

    def __post_init__(self):
        if not self.food_types and "mug" not in self.tools:
            raise InvariantError("a meal needs food types unless it is drink-only")

    def to_doc(self):
        return {"food_types": list(self.food_types), "preference": self.preference,
                "tools": list(self.tools), "profile_id": self.profile_id}

    @staticmethod
    def from_doc(doc):
        return MealSpec(tuple(doc.get("food_types", ())),
                        doc.get("preference", ""),
                        tuple(doc.get("tools", ("utensil", "mug", "wiper"))),
                        doc.get("profile_id", "default"))


# ---------------------------------------------------------------------------
# bite-ordering preferences


_NUMBER_WORDS = {"one": 1, "two": 2, "three": 3, "four": 4, "five": 5}


def _norm(text):
    return re.sub(r"[^a-z0-9 ]+", " ", text.lower())


def _stem(token):
    return token[:-1] if token.endswith("s") and len(token) > 3 else token


def _match_type(phrase, food_types):
    """Most-overlapping known food type named inside `phrase`."""
    phrase_tokens = {_stem(t) for t in _norm(phrase).split()}
    best = None
    best_overlap = 0
    for ft in food_types:
        tokens = {_stem(t) for t in _norm(ft).split()}
        overlap = len(tokens & phrase_tokens)
        if overlap > best_overlap:
            best_overlap = overlap
            best = ft
    return best


def parse_preference(text, food_types, dip_types):
    """Rule-based ordering policy; unmatched text falls back to the gateway."""
    policy = {"rule": None, "order": (), "dips": {}, "main": None,
              "insert": None, "count": 0, "text": text}
    normed = _norm(text)
    eaten_types = [t for t in food_types if t not in dip_types]

    # dip pairings are read clause by clause; "without dipping" never pairs
    undipped = re.sub(r"(?:without|no|not) dip\w*", " ", normed)
    for clause in re.split(r" then | and give ", undipped):
        if not re.search(r"\bdip", clause):
            continue
        clause_tokens = set(clause.split())
        for dip in dip_types:
            if not set(_norm(dip).split()) & clause_tokens:
                continue
            for ft in eaten_types:
                head = _norm(ft).split()[0]
                prefix = head if len(head) <= 5 else head[:-2]
                if re.search(rf"\b{prefix}", clause):
                    policy["dips"][ft] = dip

    after = re.search(r"give ([a-z ]+?) after (\w+) bites? of ([a-z ]+)", normed)
    if after:
        insert = _match_type(after.group(1), eaten_types)
        main = _match_type(after.group(3), eaten_types)
        count = _NUMBER_WORDS.get(after.group(2), 0)
        if insert and main and count:
            policy.update(rule="after_count", main=main, insert=insert, count=count)
            return policy

    if "alternate" in normed:
        policy.update(rule="alternate", order=tuple(eaten_types))
        return policy

    seq = re.search(r"all (?:of )?([a-z ]+?) first[, ]*then ([a-z ]+)", normed)
    if seq:
        first = _match_type(seq.group(1), eaten_types)
        second = _match_type(seq.group(2), eaten_types)
        if first and second:
            policy.update(rule="sequential", order=(first, second))
            return policy

    if " then " in normed:
        left, right = normed.split(" then ", 1)
        first = _match_type(left, eaten_types)
        second = _match_type(right, eaten_types)
        if first and second and first != second:
            policy.update(rule="alternate", order=(first, second))
            return policy

    if policy["dips"] and len(eaten_types) == 1:
        policy.update(rule="alternate", order=tuple(eaten_types))
        return policy

    policy.update(rule="fallback", order=tuple(eaten_types))
    return policy


MEAL_COMPLETE = "meal_complete"


def next_bite(plate_items, policy, history, gateway=None):
    """Next food item consistent with the policy and history, or MEAL_COMPLETE."""
    available = {}
    for item in plate_items:
        if not item.is_dip and item.state == "on_plate":
            available.setdefault(item.food_type, []).append(item)
    if not available:
        return MEAL_COMPLETE

    def first_item(food_type):
        return sorted(available[food_type], key=lambda i: i.id)[0]

    rule = policy.get("rule")
    if rule == "alternate" and policy["order"]:
        order = policy["order"]
        start = len(history) % len(order)
        for k in range(len(order)):
            candidate = order[(start + k) % len(order)]
            if candidate in available:
                return first_item(candidate)
    if rule == "sequential" and policy["order"]:
        for candidate in policy["order"]:
            if candidate in available:
                return first_item(candidate)
    if rule == "after_count":
        main, insert, count = policy["main"], policy["insert"], policy["count"]
        tail = history[-count:] if count else []
        due = len(tail) == count and all(h == main for h in tail)
        if due and insert in available:
            return first_item(insert)
        if main in available:
            return first_item(main)
        if insert in available:
            return first_item(insert)
    if rule == "fallback" and gateway is not None:
        choice = gateway.choose_next_bite(policy.get("text", ""),
                                          sorted(available), list(history))
        return first_item(choice)
    return first_item(sorted(available)[0])


# ---------------------------------------------------------------------------
# snapshots


@dataclass(frozen=True)
class SystemStateSnapshot:
    clock: float
    page: str
    trees: dict
    tree_texts: dict
    versions: dict
    node_log_tail: tuple
    perception_log_tail: tuple
    safety_log_tail: tuple
    qa_history: tuple
    log_lengths: dict
    safety_overrides: dict
    gesture_names: tuple
    bite_history: tuple = ()

    def effective_lo(self, tree_id, param_id):
        domain = self.trees[tree_id].parameters[param_id].domain
        lo = domain.lo
        override = self.safety_overrides.get(f"{tree_id}.{param_id}")
        if override is not None:
            lo = max(lo, override.lo)
        return round(lo, 4)

    def render_text(self):
        lines = [f"page: {self.page}", f"time: {self.clock:.1f}s"]
        for tree_id in sorted(self.tree_texts):
            lines.append(f"--- {tree_id} (version {self.versions[tree_id]}) ---")
            lines.append(self.tree_texts[tree_id].rstrip())
        lines.append("recent node executions: " + str(list(self.node_log_tail)[-5:]))
        lines.append("recent safety log: " + str(list(self.safety_log_tail)[-5:]))
        lines.append("gestures: " + ", ".join(self.gesture_names))
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# the session


@dataclass
class _Countdown:
    deadline: float
    action: str
    page: str


class Session:
    """One meal; single-threaded, driven by `step` and `handle_event`."""

    def __init__(self, spec, world, gateway, profile, trees, transcript):
        self.spec = spec
        self.world = world
        self.gateway = gateway
        self.profile = profile
        self.safety_cfg = profile.safety
        self.trees = trees
        self.transcript = transcript
        self.page = PAGE_NEW_MEAL
        self.belief = None
        self.bite_history = []
        self.last_task = None
        self.countdown = None
        self.node_log = []
        self.perception_log = []
        self.safety_log = []
        self.qa_log = []
        self.gesture_library = {}
        for name in ("mouth_open", "head_nod"):
            self.gesture_library[name] = builtin(name)
        for doc in profile.gestures:
            program = GestureProgram.from_doc(doc)
            self.gesture_library[program.name] = program
            self._extend_gesture_domains(program.name)
        self.preference_policy = None
        self.plan_queue = []
        self.active_skill = None
        self.active_runner = None
        self.pending_bite = None
        self.pending_action = None
        self.pending_task = None
        self.manual_choice = None
        self.confirm_state = {}
        self.detector = None
        self.auto_user = True
        self.auto_user_due = None
        self.executed_skills = []
        self.level5_next = LEVEL5_INTERVAL_S
        self.level5_last = None
        self.finished = False
        self.aborted = False
        self._emitted = []
        self._runner_action = None
        self._pick_target = None
        world.observer = self._route_world_events

    # -- logging ------------------------------------------------------------

    def now(self):
        return self.world.clock

    def emit(self, kind, data):
        record = self.transcript.append(kind, self.now(), data)
        self._emitted.append(record)
        return record

    def _set_page(self, page):
        if page != self.page:
            self.page = page
            self.emit("page", {"page": page})

    def log_node(self, record):
        self.node_log.append(record)

    # -- snapshot -------------------------------------------------------------

    def snapshot(self) -> SystemStateSnapshot:
        return SystemStateSnapshot(
            clock=self.now(),
            page=self.page,
            trees=dict(self.trees),
            tree_texts={k: bt.describe(t) for k, t in self.trees.items()},
            versions={k: t.version for k, t in self.trees.items()},
            node_log_tail=tuple(self.node_log[-LOG_TAIL:]),
            perception_log_tail=tuple(self.perception_log[-LOG_TAIL:]),
            safety_log_tail=tuple(self.safety_log[-LOG_TAIL:]),
            qa_history=tuple(self.qa_log),
            log_lengths={"node": len(self.node_log),
                         "perception": len(self.perception_log),
                         "safety": len(self.safety_log),
                         "qa": len(self.qa_log)},
            safety_overrides=dict(self.safety_cfg.overrides),
            gesture_names=tuple(sorted(self.gesture_library)),
            bite_history=tuple(self.bite_history),
        )

    def state_hash_payload(self):
        return {
            "clock": round(self.now(), 3),
            "page": self.page,
            "trees": {k: self.trees[k].to_doc() for k in sorted(self.trees)},
            "belief": sorted(self.belief.atoms) if self.belief else [],
            "bite_history": list(self.bite_history),
            "plate": [i.to_doc() for i in self.world.plate],
            "mode": self.world.mode,
            "log_lengths": [len(self.node_log), len(self.perception_log),
                            len(self.safety_log), len(self.qa_log)],
            "gestures": sorted(self.gesture_library),
            "finished": self.finished,
            "aborted": self.aborted,
        }

    # -- gestures ---------------------------------------------------------------

    def _extend_gesture_domains(self, slug):
        for tree_id in list(self.trees):
            tree = self.trees[tree_id]
            changed = False
            for pid in ("TransferInitiationGesture", "TransferCompletionGesture"):
                if pid in tree.parameters:
                    tree = bt.extend_enum_domain(tree, pid, slug)
                    changed = True
            if changed:
                self.trees[tree_id] = tree

    def gesture_class_for(self, program_name):
        program = self.gesture_library.get(program_name)
        description = program.description if program else program_name
        return (gesture_template_for(description)
                or gesture_template_for(program_name.replace("_", " "))
                or _GESTURE_CLASS_FALLBACK)

    # -- event handling ----------------------------------------------------------

    def handle_event(self, event, auto=False):
        """Apply one external event; returns the records emitted by it."""
        self._emitted = []
        kind = event.get("kind")
        handler = getattr(self, f"_on_{kind}", None)
        if handler is None:
            raise SchemaError(f"unknown event kind {kind!r}")
        self.emit("input", {"event": event, "auto": bool(auto)})
        try:
            handler(event)
        except (InvalidEventForPage, SchemaError) as exc:
            self.emit("error", {"message": str(exc)})
            raise
        return self._emitted

    def _require_page(self, *pages):
        if self.page not in pages:
            raise InvalidEventForPage(
                f"event invalid on page {self.page} (needs {pages})")

    def _on_task(self, event):
        self._require_page(PAGE_TASK_SELECTION)
        task = event["task"]
        if task not in TASKS:
            raise SchemaError(f"unknown task {task!r}")
        self._cancel_countdown("user task request")
        self._begin_task(task)

    def _on_click(self, event):
        action = event["action"]
        if action == "confirm":
            self._require_page(PAGE_TRANSFER_CONFIRM, PAGE_BITE_ACQUISITION)
            self._cancel_countdown("user confirmation")
            self.confirm_state["confirmed"] = True
        elif action == "acquire_now":
            self._require_page(PAGE_BITE_ACQUISITION)
            self._cancel_countdown("user confirmation")
            self.confirm_state["confirmed"] = True
        elif action == "manual_mode":
            self._require_page(PAGE_BITE_ACQUISITION)
            self._set_page(PAGE_MANUAL_ACQUISITION)
        elif action == "back":
            self._require_page(PAGE_MANUAL_ACQUISITION, PAGE_PERSONALIZATION,
                               PAGE_GESTURES)
            if self.page == PAGE_MANUAL_ACQUISITION:
                self._set_page(PAGE_BITE_ACQUISITION)
            elif self.page == PAGE_GESTURES:
                self._set_page(PAGE_PERSONALIZATION)
            else:
                self._set_page(PAGE_TASK_SELECTION)
        elif action == "open_personalization":
            self._require_page(PAGE_TASK_SELECTION)
            self._set_page(PAGE_PERSONALIZATION)
        elif action == "open_gestures":
            self._require_page(PAGE_PERSONALIZATION)
            self._set_page(PAGE_GESTURES)
        elif action == "cancel":
            self.confirm_state["cancelled"] = True
        else:
            raise SchemaError(f"unknown click action {action!r}")

    def _on_bite_override(self, event):
        self._require_page(PAGE_BITE_ACQUISITION)
        food_type = event["food_type"]
        items = [i for i in self.world.edible_items() if i.food_type == food_type]
        if not items:
            raise SchemaError(f"no {food_type!r} available on the plate")
        self.pending_bite = sorted(items, key=lambda i: i.id)[0]
        self.emit("command", {"command": "show_bite",
                              "item": self.pending_bite.id,
                              "food_type": food_type})

    def _on_manual_acquire(self, event):
        self._require_page(PAGE_MANUAL_ACQUISITION)
        keypoint = event.get("keypoint")
        item = None
        if keypoint is not None:
            for candidate in self.world.edible_items():
                if (abs(candidate.position[0] - keypoint[0]) < 0.05
                        and abs(candidate.position[1] - keypoint[1]) < 0.05):
                    item = candidate
                    break
        self.manual_choice = {"skill": event.get("skill", "skewer"), "item": item}
        self.pending_bite = item
        self.confirm_state["confirmed"] = True
        self._set_page(PAGE_BITE_ACQUISITION)

    def _on_personalize(self, event):
        from .personalization import apply_adaptability
        apply_adaptability(event["text"], self)

    def _on_transparency(self, event):
        from .personalization import answer_query
        answer_query(event["text"], self)

    def _on_gesture_add(self, event):
        self._record_and_synthesize(event["name"], event["description"],
                                    event.get("gesture_class"),
                                    int(event.get("seed", 0)))

    def _on_gesture_test(self, event):
        name = event["name"]
        if name not in self.gesture_library:
            raise SchemaError(f"unknown gesture {name!r}")
        self._no_motion_guard()
        self._move_for_recording()
        program = self.gesture_library[name]
        run = DetectorRun(program, timeout_s=float(event.get("timeout_s", 10.0)))
        self.world.expect_user("gesture", self.gesture_class_for(name))
        outcome = None
        while outcome is None:
            for ev in self.world.step(0.1):
                if ev["kind"] == "frame":
                    outcome = run.feed(PerceptionFrame.from_doc(ev["data"]))
            if outcome is None and self.world.mode == MODE_SAFETY_STOP:
                outcome = run.cancel()
        self.world.clear_user_expectation()
        self.emit("command", {"command": "gesture_indicator",
                              "gesture": name, "status": outcome.status})
        self._return_from_recording()
        self._set_page(PAGE_TASK_SELECTION)

    def _on_estop(self, event):
        from .world import FaultEvent
        self.world.inject(FaultEvent(at=self.now(), kind="estop",
                                     detail={"source": event.get("source", "user")}))
        self.world.step(0.1)   # the stop takes effect within one substep

    def _on_fault(self, event):
        from .world import FaultEvent
        fault = FaultEvent.from_doc(event["fault"])
        if fault.at < self.now():
            fault = FaultEvent(self.now(), fault.kind, fault.detail)
        self.world.inject(fault)

    def _on_caregiver(self, event):
        action = event["action"]
        if action == "refill_mug":
            self.world.refill_mug()
        elif action == "repair_marker":
            self.world.repair_marker()
        elif action == "reset":
            self.world.operator_reset()
            self._abort_plan("safety reset")
            self._set_page(PAGE_TASK_SELECTION)
        else:
            raise SchemaError(f"unknown caregiver action {action!r}")

    def _on_intervention(self, event):
        """Experimenter-applied update batch through the normal safety channel."""
        from .personalization import apply_updates_directly
        apply_updates_directly(event["updates"], self,
                               note=event.get("note", "experimenter intervention"))

    def _on_override_profile(self, event):
        domain = bt.domain_from_doc(event["domain"])
        tree_id, _, param_id = event["param"].partition(".")
        self.safety_cfg = self.safety_cfg.with_override(tree_id, param_id, domain)
        self.safety_log.append({"t": self.now(),
                                "message": f"profile override: {event['param']} "
                                           f"now {domain.render()}"})
        self.emit("safety", {"change": "override", "param": event["param"],
                             "domain": event["domain"]})

    # -- task execution -----------------------------------------------------------

    def _no_motion_guard(self):
        if self.world.mode == MODE_SAFETY_STOP:
            raise InvalidEventForPage("robot is in the safety state")

    def _begin_task(self, task):
        self._no_motion_guard()
        goal = planner.goal_for(TASKS[task])
        try:
            result = planner.plan(self.belief, goal)
        except planner.Unsolvable:
            self.emit("command", {"command": "task_unavailable", "task": task})
            return
        self.last_task = task if task in ("bite", "sip") else self.last_task
        self.plan_queue = list(result.steps)
        self.pending_task = task
        self.emit("plan", {"task": task, "steps": result.labels()})
        if not self.plan_queue:
            self._task_finished(task)
            return
        self._set_page(PAGE_TRANSITION)
        self._advance_plan()

    def _advance_plan(self):
        if self.world.mode == MODE_SAFETY_STOP:
            self._abort_plan("safety stop")
            return
        if self.active_runner is not None or self._activity_pending():
            return
        if not self.plan_queue:
            task, self.pending_task = self.pending_task, None
            if task:
                self._task_finished(task)
            return
        action = self.plan_queue.pop(0)
        skill = action.name
        self.active_skill = skill
        if skill == "PickTool":
            self._pick_target = action.obj
        self.emit("skill", {"skill": action.label, "status": "started"})
        if skill in ("TransferUtensil", "TransferMug", "TransferWiper"):
            self.world.active_skill = skill
        if skill == "EmulateTransfer":
            self.world.active_skill = skill
            self.world.begin_activity("motion", 1.2, {"label": "at-mouth"})
            self.pending_action = ("world_activity", action)
            return
        tree = self.trees.get(skill)
        if tree is None:
            raise InvariantError(f"no tree for skill {skill}")
        self.confirm_state = {}
        self.active_runner = TreeRunner(tree)
        self._runner_action = action
        self._tick_runner()

    def _activity_pending(self):
        return self.pending_action is not None

    def _abort_plan(self, reason):
        if self.plan_queue or self.active_runner or self.pending_action:
            self.emit("plan", {"status": "aborted", "reason": reason})
        self.plan_queue = []
        self.active_runner = None
        self.pending_action = None
        self.pending_task = None
        self.active_skill = None
        self.world.active_skill = None
        if self.detector is not None:
            self.detector = None
            self.world.clear_user_expectation()
        if not self.finished:
            self._set_page(PAGE_TASK_SELECTION)

    def _task_finished(self, task):
        # delivered markers are ephemeral: clearing them makes the next
        # identical request replan instead of no-opping
        self.belief = planner.clear_delivered(self.belief)
        if task == "finish":
            self.finished = True
            self._set_page(PAGE_FINISHED)
            self.emit("meal", {"status": "finished"})
            return
        self._set_page(PAGE_TASK_SELECTION)
        if task in ("bite", "sip"):
            tree = self.trees["TaskSelection"]
            if tree.value("AutoContinueEnabled") and self._meal_has_more():
                wait = float(tree.value("TimeToWaitBeforeAutocontinue"))
                self._start_countdown(wait, f"task:{task}", PAGE_TASK_SELECTION)

    def _meal_has_more(self):
        if self.last_task == "sip":
            return self.world.mug["filled"]
        return bool(self.world.edible_items())

    # -- countdowns ---------------------------------------------------------------

    def _start_countdown(self, duration_s, action, page):
        self.countdown = _Countdown(self.now() + duration_s, action, page)
        self.emit("command", {"command": "countdown", "seconds": duration_s,
                              "action": action})

    def _cancel_countdown(self, reason):
        if self.countdown is not None:
            self.countdown = None
            self.emit("command", {"command": "countdown_cancelled",
                                  "reason": reason})

    def _fire_countdown(self):
        countdown = self.countdown
        self.countdown = None
        action = countdown.action
        self.emit("command", {"command": "countdown_fired", "action": action})
        if action.startswith("task:"):
            if self.page == PAGE_TASK_SELECTION:
                self._begin_task(action.split(":", 1)[1])
        elif action == "acquire_now":
            self.confirm_state["confirmed"] = True

    # -- leaf semantics -------------------------------------------------------------

    def leaf_status(self, tree, node, params, entered_at):
        handler = _LEAF_HANDLERS.get((tree.skill_id, node.id))
        if handler is None:
            handler = _GENERIC_LEAF_HANDLERS.get(node.kind)
        if handler is None:
            return SUCCESS
        return handler(self, tree, node, params, entered_at)

    def await_gesture(self, tree, node, params, entered_at):
        if self.confirm_state.get("cancelled"):
            self.confirm_state.pop("cancelled", None)
            return "cancelled"
        interaction = params.get("TransferInitiationInteraction", "gesture")
        if interaction == "auto":
            return "fired"
        if interaction == "button":
            self.world.expect_user("button")
            if self.world.take_button_event():
                return "fired"
            return "pending"
        gesture_name = params.get("TransferInitiationGesture")
        if gesture_name is None:
            gesture_name = next(
                (v for v in params.values() if isinstance(v, str)
                 and v in self.gesture_library), None)
        timeout = next((v for v in params.values()
                        if isinstance(v, (int, float)) and not isinstance(v, bool)),
                       60.0)
        if gesture_name is None or gesture_name not in self.gesture_library:
            return "cancelled"
        if self.detector is None or self.detector[0] != node.id:
            run = DetectorRun(self.gesture_library[gesture_name],
                              timeout_s=float(timeout))
            self.detector = (node.id, run)
            self.world.expect_user("gesture", self.gesture_class_for(gesture_name))
        run = self.detector[1]
        outcome = run.outcome
        if outcome is None:
            return "pending"
        self.detector = None
        self.world.clear_user_expectation()
        if outcome.status == "fired":
            return "fired"
        if outcome.status == "timed_out":
            return "timed_out"
        return "cancelled"

    # -- stepping --------------------------------------------------------------------

    def _route_world_events(self, events):
        """Observer hook: every world event lands in the right log exactly once."""
        for event in events:
            kind = event["kind"]
            if kind == "frame":
                self.perception_log.append(event["data"])
                if self.detector is not None:
                    self.detector[1].feed(PerceptionFrame.from_doc(event["data"]))
            elif kind == "safety":
                self.safety_log.append({"t": event["t"],
                                        "message": event["data"]["trigger"]})
                self.emit("safety", event["data"])
                if event["data"]["mode"] == MODE_SAFETY_STOP:
                    self._abort_plan("safety stop")
            elif kind == "fault":
                self.safety_log.append({"t": event["t"],
                                        "message": f"fault: {event['data']['kind']}"})
                self.emit("fault", event["data"])
            elif kind == "audio":
                self.emit("command", {"command": "audio",
                                      "text": event["data"]["text"]})
            elif kind == "breakaway":
                self.safety_log.append({"t": event["t"], "message": "breakaway"})
                self.emit("safety", {"mode": self.world.mode, "trigger": "breakaway"})
            elif kind == "scene":
                self.emit("command", {"command": "scene", **event["data"]})

    def step(self, dt=0.1):
        """Advance sim time and drive all pending machinery."""
        if self.finished:
            return
        self.world.step(dt)
        if self.countdown is not None and self.now() >= self.countdown.deadline:
            self._fire_countdown()
        if self.active_runner is not None:
            self._tick_runner()
        elif self.pending_action is not None:
            self._poll_world_activity()
        elif self.plan_queue:
            self._advance_plan()
        if self.now() >= self.level5_next:
            from .personalization import continuous_explanation_tick
            continuous_explanation_tick(self, self.now())
            self.level5_next = self.now() + LEVEL5_INTERVAL_S

    def take_auto_event(self):
        """Attentive-user click due now, if any (applied by the driver loop)."""
        if not self.auto_user or self.auto_user_due is None:
            return None
        if self.now() < self.auto_user_due:
            return None
        self.auto_user_due = None
        if self.page in (PAGE_TRANSFER_CONFIRM, PAGE_BITE_ACQUISITION) \
                and not self.confirm_state.get("confirmed"):
            return {"kind": "click", "action": "confirm"}
        return None

    def _tick_runner(self):
        runner = self.active_runner
        if runner is None:
            return
        status = runner.tick(self)
        if status == RUNNING:
            return
        action = self._runner_action
        self.active_runner = None
        self.world.active_skill = None
        self.active_skill = None
        self.emit("skill", {"skill": action.label, "status": status})
        if status == SUCCESS:
            self.executed_skills.append(action.label)
            self._apply_action_to_belief(action)
            self._advance_plan()
        else:
            if action.name == "TransferUtensil":
                self.world.drop_onfork_back()   # keep the plate consistent
            self._abort_plan(f"skill {action.label} failed")

    def _poll_world_activity(self):
        outcome = self.world.poll_activity()
        if outcome is None:
            return
        kind, action = self.pending_action
        self.pending_action = None
        self.world.active_skill = None
        self.active_skill = None
        status = SUCCESS if outcome.ok else FAILURE
        self.emit("skill", {"skill": action.label, "status": status,
                            "reason": outcome.reason})
        if outcome.ok:
            self.executed_skills.append(action.label)
            self._apply_action_to_belief(action)
            self._advance_plan()
        else:
            self._abort_plan(f"skill {action.label} failed: {outcome.reason}")

    def _apply_action_to_belief(self, action):
        self.belief = planner.apply(self.belief, action)
        # any motion leaves the retract configuration except Retract itself
        if action.name != "Retract" and "AtRetract" in self.belief.atoms:
            self.belief = planner.PlannerState(self.belief.atoms - {"AtRetract"})

    def run_until_idle(self, max_s=300.0):
        """Step until no plan/runner is active (test and fixture helper)."""
        deadline = self.now() + max_s
        while (self.active_runner is not None or self.plan_queue
               or self.pending_action is not None):
            if self.now() >= deadline:
                raise WorldNotReady("session did not become idle in time")
            self.step()
            auto = self.take_auto_event()
            if auto is not None:
                self.handle_event(auto, auto=True)
        return self

    # -- recording flow -----------------------------------------------------------

    def _move_for_recording(self):
        goal = planner.goal_for("RecordGesture")
        result = planner.plan(self.belief, goal)
        for action in result.steps:
            outcome = self.world.execute_skill(
                action.name, {"tool": action.obj} if action.obj else {})
            if not outcome.ok:
                raise WorldNotReady(f"could not reach recording pose: {outcome.reason}")
            self._apply_action_to_belief(action)
            self.executed_skills.append(action.label)

    def _return_from_recording(self):
        result = planner.plan(self.belief, planner.goal_for("Finish"))
        for action in result.steps:
            outcome = self.world.execute_skill(
                action.name, {"tool": action.obj} if action.obj else {})
            if not outcome.ok:
                return
            self._apply_action_to_belief(action)
            self.executed_skills.append(action.label)

    def _record_and_synthesize(self, name, description, gesture_class, seed):
        self._no_motion_guard()
        self._set_page(PAGE_GESTURES)
        self._move_for_recording()
        gesture_class = gesture_class or gesture_template_for(description)
        if gesture_class is None:
            raise SchemaError(f"cannot emulate recording for {description!r}")
        profile = next((p for p in USER_PROFILES
                        if p.name == getattr(self.world.user, "profile_name", "u0")),
                       USER_PROFILES[0])
        positives, negatives = example_set(gesture_class, profile, seed)
        self.emit("command", {"command": "recording", "examples": 10})
        program = synthesize(description, positives, negatives, self.gateway)
        slug = slugify(name)
        program = GestureProgram(
            name=slug, description=description, source=program.source,
            hyperparameters=program.hyperparameters, metrics=program.metrics)
        self.gesture_library[slug] = program
        self._extend_gesture_domains(slug)
        self.emit("gesture_added", {"name": slug, "given_name": name,
                                    "metrics": program.metrics})
        self._return_from_recording()
        self._set_page(PAGE_TASK_SELECTION)


# ---------------------------------------------------------------------------
# leaf handlers


def _h_condition_holding_utensil(session, tree, node, params, entered_at):
    return SUCCESS if session.world.gripper == "utensil" else FAILURE


def _begin_once(session, key, starter):
    if session.confirm_state.get(key):
        return False
    session.confirm_state[key] = True
    starter()
    return True


def _h_detect_plate(session, tree, node, params, entered_at):
    _begin_once(session, f"started:{node.id}",
                lambda: session.world.begin_activity("detect_plate", 0.6))
    outcome = session.world.poll_activity()
    if outcome is None:
        return RUNNING
    session.confirm_state.pop(f"started:{node.id}", None)
    return SUCCESS if outcome.ok else FAILURE


def _h_select_bite(session, tree, node, params, entered_at):
    if session.manual_choice is not None:
        return SUCCESS
    choice = next_bite(session.world.plate, session.preference_policy,
                       session.bite_history, session.gateway)
    if choice == MEAL_COMPLETE:
        session.emit("command", {"command": "meal_complete"})
        return FAILURE
    session.pending_bite = choice
    session.emit("command", {"command": "show_bite", "item": choice.id,
                             "food_type": choice.food_type})
    return SUCCESS


def _h_confirm_acquisition(session, tree, node, params, entered_at):
    if not params.get("AskUserForConfirmation", True):
        return SUCCESS
    if session.confirm_state.get("cancelled"):
        return FAILURE
    if session.confirm_state.get("confirmed"):
        session.confirm_state.pop("confirmed", None)
        return SUCCESS
    if session.page not in (PAGE_BITE_ACQUISITION, PAGE_MANUAL_ACQUISITION):
        session._set_page(PAGE_BITE_ACQUISITION)
        wait = float(params.get("TimeToWaitBeforeAutocontinue", 10))
        session._start_countdown(wait, "acquire_now", PAGE_BITE_ACQUISITION)
        if session.auto_user:
            session.auto_user_due = session.now() + AUTO_USER_DELAY_S
    return RUNNING


def _h_execute_acquisition(session, tree, node, params, entered_at):
    def start():
        session._set_page(PAGE_TRANSITION)
        session._cancel_countdown("acquisition started")
        item = session.pending_bite
        manual = session.manual_choice
        if manual is not None:
            item = manual["item"]
            session.manual_choice = None
        speed = SPEED_MULT.get(params.get("Speed", "medium"), 1.0)
        session.world.begin_activity(
            "acquire", 2.0 * speed,
            {"item_id": item.id if item is not None else None})

    _begin_once(session, f"started:{node.id}", start)
    outcome = session.world.poll_activity()
    if outcome is None:
        return RUNNING
    session.confirm_state.pop(f"started:{node.id}", None)
    if outcome.ok:
        session.pending_bite = None
        return SUCCESS
    session.emit("command", {"command": "acquisition_failed",
                             "reason": outcome.reason})
    return FAILURE


def _h_confirm_transfer(session, tree, node, params, entered_at):
    if not params.get("AskUserForConfirmation", True):
        return SUCCESS
    if session.confirm_state.get("cancelled"):
        return FAILURE
    if session.confirm_state.get("confirmed"):
        session.confirm_state.pop("confirmed", None)
        return SUCCESS
    if session.page != PAGE_TRANSFER_CONFIRM:
        session._set_page(PAGE_TRANSFER_CONFIRM)
        if session.auto_user:
            session.auto_user_due = session.now() + AUTO_USER_DELAY_S
    return RUNNING


def _motion_handler(label_key, base_duration):
    def handler(session, tree, node, params, entered_at):
        def start():
            speed = SPEED_MULT.get(params.get("Speed", "medium"), 1.0)
            compliant = bool(params.get("InsideMouthTransfer", False))
            session.world.begin_activity(
                "motion", base_duration * speed,
                {"label": node.config_label or label_key}, compliant=compliant)

        _begin_once(session, f"started:{node.id}", start)
        outcome = session.world.poll_activity()
        if outcome is None:
            return RUNNING
        session.confirm_state.pop(f"started:{node.id}", None)
        return SUCCESS if outcome.ok else FAILURE

    return handler


def _announce(text):
    def handler(session, tree, node, params, entered_at):
        if params.get("VoicePromptsEnabled", True):
            session.world.announce(text)
        return SUCCESS

    return handler


def _h_await_completion(session, tree, node, params, entered_at):
    interaction = params.get("TransferCompletionInteraction", "sense")
    if session.confirm_state.get("cancelled"):
        return FAILURE
    key = f"started:{node.id}"
    if interaction == "auto_timeout":
        if not session.confirm_state.get(key):
            session.confirm_state[key] = session.now()
            return RUNNING
        if session.now() - session.confirm_state[key] >= 10.0:
            session.confirm_state.pop(key, None)
            return _complete_transfer(session, tree)
        return RUNNING
    if interaction == "button":
        session.world.expect_user("button")
        if session.world.take_button_event():
            return _complete_transfer(session, tree)
        return RUNNING
    # sense: force sensor for the fork, completion gesture otherwise
    if tree.skill_id == "TransferUtensil":
        session.world.expect_user("bite")
        if session.world.take_bite_event():
            return _complete_transfer(session, tree)
        if session.world.utensil_broken:
            return FAILURE
        return RUNNING
    gesture_name = params.get("TransferCompletionGesture", "head_nod")
    if gesture_name not in session.gesture_library:
        return FAILURE
    if session.detector is None or session.detector[0] != node.id:
        run = DetectorRun(session.gesture_library[gesture_name], timeout_s=45.0)
        session.detector = (node.id, run)
        session.world.expect_user("gesture", session.gesture_class_for(gesture_name))
    outcome = session.detector[1].outcome
    if outcome is None:
        return RUNNING
    session.detector = None
    session.world.clear_user_expectation()
    if outcome.status == "fired":
        return _complete_transfer(session, tree)
    return FAILURE


def _complete_transfer(session, tree):
    if tree.skill_id == "TransferUtensil":
        if session.world.onfork_item() is None:
            session.emit("command", {"command": "transfer_failed",
                                     "reason": "no bite on the fork"})
            return FAILURE
        item = session.world.consume_onfork()
        session.bite_history.append(item.food_type)
        session.emit("command", {"command": "bite_delivered",
                                 "food_type": item.food_type})
    elif tree.skill_id == "TransferMug":
        if not session.world.mug["filled"]:
            return FAILURE
        session.emit("command", {"command": "sip_delivered"})
    else:
        session.emit("command", {"command": "wipe_delivered"})
    return SUCCESS


_LEAF_HANDLERS = {
    ("AcquireBite", "holding_utensil"): _h_condition_holding_utensil,
    ("AcquireBite", "detect_plate"): _h_detect_plate,
    ("AcquireBite", "select_bite"): _h_select_bite,
    ("AcquireBite", "confirm_acquisition"): _h_confirm_acquisition,
    ("AcquireBite", "execute_acquisition"): _h_execute_acquisition,
}


def _h_locate_tool(session, tree, node, params, entered_at):
    tool = getattr(session, "_pick_target", None)
    if tool == "mug" and not session.world.mug["marker_ok"]:
        session.emit("command", {"command": "marker_not_detected"})
        return FAILURE
    return SUCCESS


def _h_grasp_tool(session, tree, node, params, entered_at):
    def start():
        speed = SPEED_MULT.get(params.get("Speed", "medium"), 1.0)
        session.world.begin_activity(
            "grasp", 1.6 * speed, {"tool": getattr(session, "_pick_target", "utensil")})

    _begin_once(session, f"started:{node.id}", start)
    outcome = session.world.poll_activity()
    if outcome is None:
        return RUNNING
    session.confirm_state.pop(f"started:{node.id}", None)
    if not outcome.ok:
        session.emit("command", {"command": "grasp_failed", "reason": outcome.reason})
    return SUCCESS if outcome.ok else FAILURE


def _h_stow_tool(session, tree, node, params, entered_at):
    def start():
        speed = SPEED_MULT.get(params.get("Speed", "medium"), 1.0)
        session.world.begin_activity("stow", 1.6 * speed)

    _begin_once(session, f"started:{node.id}", start)
    outcome = session.world.poll_activity()
    if outcome is None:
        return RUNNING
    session.confirm_state.pop(f"started:{node.id}", None)
    return SUCCESS if outcome.ok else FAILURE


def _h_generic_retract(session, tree, node, params, entered_at):
    def start():
        session.world.begin_activity("motion", 1.5, {"label": "retract"})

    _begin_once(session, f"started:{node.id}", start)
    outcome = session.world.poll_activity()
    if outcome is None:
        return RUNNING
    session.confirm_state.pop(f"started:{node.id}", None)
    return SUCCESS if outcome.ok else FAILURE


_LEAF_HANDLERS.update({
    ("PickTool", "locate_tool"): _h_locate_tool,
    ("PickTool", "grasp_tool"): _h_grasp_tool,
    ("PlaceTool", "stow_tool"): _h_stow_tool,
    ("Retract", "move_retract"): _motion_handler("retract", 1.5),
})

for _skill in ("TransferUtensil", "TransferMug", "TransferWiper"):
    _LEAF_HANDLERS.update({
        (_skill, "confirm_transfer"): _h_confirm_transfer,
        (_skill, "move_ready"): _motion_handler("ready-to-transfer", 1.2),
        (_skill, "announce_open"): _announce("Please open your mouth when ready."),
        (_skill, "approach_mouth"): _motion_handler("at-mouth", 1.0),
        (_skill, "announce_ready"): _announce("Ready for transfer."),
        (_skill, "await_completion"): _h_await_completion,
        (_skill, "withdraw"): _motion_handler("withdraw", 0.8),
    })

_GENERIC_LEAF_HANDLERS = {
    "Retract": _h_generic_retract,
    "Action": lambda session, tree, node, params, entered_at: SUCCESS,
    "Condition": lambda session, tree, node, params, entered_at: SUCCESS,
}


# ---------------------------------------------------------------------------
# construction


def start_meal(spec, world, gateway, profile, trees, transcript) -> Session:
    """Initialize the procedure: retract configuration, empty gripper."""
    if world is None:
        raise WorldNotReady("world not initialized")
    session = Session(spec, world, gateway, profile, trees, transcript)
    session.emit("meal", {"status": "started", "spec": spec.to_doc()})
    dip_types = sorted({i.food_type for i in world.plate if i.is_dip})
    food_types = sorted({i.food_type for i in world.plate if not i.is_dip})
    session.preference_policy = parse_preference(spec.preference, food_types,
                                                 dip_types)
    atoms = {"GripperFree", "AtRetract"}
    atoms |= {planner.reachable(t) for t in spec.tools}
    session.belief = planner.PlannerState(frozenset(atoms))
    session._set_page(PAGE_TASK_SELECTION)
    session.level5_last = session.snapshot()
    session.level5_next = LEVEL5_INTERVAL_S
    return session
