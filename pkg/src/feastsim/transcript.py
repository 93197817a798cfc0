"""Append-only session transcripts: record, run scenarios, replay.

A transcript is JSON-lines: a header (the full scenario), then one record
per event/command/outcome with monotone sequence numbers, ending in a
``meal_end`` record that carries the final state hash. All derived records
are deterministic functions of the header plus the recorded inputs, so
replaying the inputs must reproduce the stream byte for byte.
"""

from __future__ import annotations

import json
from pathlib import Path

from . import config, session as session_mod
from .canon import canon_line, digest
from .errors import (
    InvalidEventForPage,
    SchemaError,
    TranscriptDiverged,
    WorldNotReady,
)
from .gateway import make_gateway
from .world import MODE_SAFETY_STOP, FoodItem, SimWorld, UserZone

# events that wait for the session to be idle on the task-selection page
IDLE_GATED = {"task", "personalize", "transparency", "gesture_add",
              "gesture_test", "intervention", "override_profile"}

DEFAULT_MAX_S = 1800.0


class Transcript:
    def __init__(self, header):
        self.header = dict(header)
        self.records = []
        self._seq = 0

    def append(self, kind, t, data):
        record = {"seq": self._seq, "t": round(t, 3), "kind": kind, "data": data}
        self._seq += 1
        self.records.append(record)
        return record

    def to_jsonl(self):
        lines = [canon_line({"header": self.header})]
        lines += [canon_line(r) for r in self.records]
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_jsonl(text):
        lines = [line for line in text.splitlines() if line.strip()]
        if not lines:
            raise SchemaError("empty transcript")
        try:
            head = json.loads(lines[0])
            records = [json.loads(line) for line in lines[1:]]
        except json.JSONDecodeError as exc:
            raise SchemaError(f"malformed transcript: {exc}") from exc
        if "header" not in head:
            raise SchemaError("transcript missing header line")
        transcript = Transcript(head["header"])
        transcript.records = records
        transcript._seq = (records[-1]["seq"] + 1) if records else 0
        return transcript

    def final_hash(self):
        for record in reversed(self.records):
            if record["kind"] == "meal_end":
                return record["data"].get("state_hash")
        return None

    def inputs(self):
        return [r for r in self.records if r["kind"] == "input"]


def load_scenario(path):
    doc = json.loads(Path(path).read_text())
    validate_scenario(doc)
    return doc


def validate_scenario(doc):
    if not isinstance(doc, dict):
        raise SchemaError("scenario must be a JSON object")
    missing = {"meal_id", "seed", "spec", "plate"} - set(doc)
    if missing:
        raise SchemaError(f"scenario missing fields: {sorted(missing)}")
    for event in doc.get("timeline", ()):
        if "t" not in event or "kind" not in event:
            raise SchemaError(f"timeline event needs t and kind: {event}")
    return doc


def _build(scenario, gateway=None, auto_user=None):
    spec = session_mod.MealSpec.from_doc(scenario["spec"])
    if "profile_doc" in scenario:
        profile = config.Profile.from_doc(scenario["profile_doc"])
    else:
        profile = config.load_profile(scenario.get("profile", spec.profile_id))
    trees = config.trees_for_profile(profile)
    profile.safety.check_subset_of(trees)
    mug = scenario.get("mug", {})
    zone_doc = scenario.get("zone")
    zone = UserZone(**zone_doc) if zone_doc else None
    world = SimWorld(
        seed=int(scenario["seed"]),
        plate=[FoodItem.from_doc(d) for d in scenario["plate"]],
        mug_filled=mug.get("filled", True),
        marker_ok=mug.get("marker_ok", True),
        zone=zone,
        user_amplitude=float(scenario.get("user_amplitude", 1.0)),
        user_responsive=bool(scenario.get("user_responsive", True)),
    )
    for fault in scenario.get("faults", ()):
        from .world import FaultEvent
        world.inject(FaultEvent.from_doc(fault))
    transcript = Transcript({"version": 1, "scenario": scenario})
    gateway = gateway or make_gateway()
    sess = session_mod.start_meal(spec, world, gateway, profile, trees, transcript)
    if auto_user is not None:
        sess.auto_user = auto_user
    elif "auto_user" in scenario:
        sess.auto_user = bool(scenario["auto_user"])
    return sess


def _is_idle(sess):
    return (sess.page == session_mod.PAGE_TASK_SELECTION
            and not sess.plan_queue
            and sess.active_runner is None
            and sess.pending_action is None)


def run_scenario(scenario, gateway=None, max_s=None):
    """Execute a scenario to completion; returns the finished session."""
    validate_scenario(scenario)
    sess = _build(scenario, gateway)
    timeline = sorted(scenario.get("timeline", ()), key=lambda e: e["t"])
    pending = list(timeline)
    deadline = max_s or float(scenario.get("max_s", DEFAULT_MAX_S))
    while True:
        sess.step(0.1)
        auto = sess.take_auto_event()
        if auto is not None:
            sess.handle_event(auto, auto=True)
        # gated events wait for an idle task-selection page and keep their
        # relative order; physical events (faults, caregiver) apply on time
        blocked = False
        i = 0
        while i < len(pending) and pending[i]["t"] <= sess.now() + 1e-9:
            event = pending[i]
            gated = event.get("when_idle", event["kind"] in IDLE_GATED)
            if gated and (blocked or not _is_idle(sess)):
                blocked = True
                i += 1
                continue
            pending.pop(i)
            payload = {k: v for k, v in event.items() if k not in ("t", "when_idle")}
            try:
                sess.handle_event(payload)
            except (InvalidEventForPage, SchemaError):
                pass    # recorded as an error record; scenario continues
        if sess.finished:
            break
        if not pending and _is_idle(sess) and sess.countdown is None:
            break
        if sess.now() > deadline:
            raise WorldNotReady(f"scenario exceeded {deadline}s of sim time")
    status = "finished" if sess.finished else "aborted"
    if status == "aborted":
        sess.aborted = True
    sess.emit("meal_end", {
        "status": status,
        "safety_mode": sess.world.mode,
        "state_hash": digest(sess.state_hash_payload()),
    })
    return sess


def replay(transcript_or_text, gateway=None):
    """Re-execute a transcript's inputs; byte-identical records required."""
    if isinstance(transcript_or_text, str):
        recorded = Transcript.from_jsonl(transcript_or_text)
    elif isinstance(transcript_or_text, Transcript):
        recorded = transcript_or_text
    else:
        raise SchemaError("replay needs a Transcript or its JSON-lines text")
    scenario = recorded.header.get("scenario")
    if scenario is None:
        raise SchemaError("transcript header carries no scenario")
    sess = _build(scenario, gateway, auto_user=False)   # inputs are recorded
    inputs = recorded.inputs()
    for record in inputs:
        target = record["t"]
        while sess.now() + 1e-9 < target:
            sess.step(0.1)
            if sess.finished:
                break
        try:
            sess.handle_event(record["data"]["event"],
                              auto=record["data"].get("auto", False))
        except (InvalidEventForPage, SchemaError):
            pass
    final = recorded.records[-1] if recorded.records else None
    complete = final is not None and final["kind"] == "meal_end"
    if complete:
        while not sess.finished and sess.now() + 1e-9 < final["t"]:
            sess.step(0.1)
        if not sess.finished:
            sess.run_until_idle(max_s=600.0)
        status = "finished" if sess.finished else "aborted"
        if status == "aborted":
            sess.aborted = True
        sess.emit("meal_end", {
            "status": status,
            "safety_mode": sess.world.mode,
            "state_hash": digest(sess.state_hash_payload()),
        })
    _compare(recorded.records, sess.transcript.records, prefix=not complete)
    return sess


def _compare(expected, actual, prefix=False):
    for i, (a, b) in enumerate(zip(expected, actual)):
        if a != b:
            raise TranscriptDiverged(
                f"transcript diverged at seq {a.get('seq', i)}: "
                f"expected {canon_line(a)[:200]} got {canon_line(b)[:200]}", seq=i)
    if prefix:
        # a partial recording only pins the records it actually captured
        if len(expected) > len(actual):
            raise TranscriptDiverged(
                f"replay produced fewer records ({len(actual)}) than "
                f"recorded ({len(expected)})", seq=len(actual))
        return
    if len(expected) != len(actual):
        raise TranscriptDiverged(
            f"transcript length mismatch: {len(expected)} recorded, "
            f"{len(actual)} replayed", seq=min(len(expected), len(actual)))


def run_and_verify(scenario, gateway=None):
    """Run, then replay the produced transcript; returns (session, replayed)."""
    sess = run_scenario(scenario, gateway)
    replayed = replay(sess.transcript.to_jsonl(), gateway)
    return sess, replayed
