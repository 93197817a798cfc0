"""HTTP boundary for the web console and scripted clients.

JSON over HTTP plus one server-sent-events stream per session. All requests
for a session are serialized behind its lock; a background driver thread
advances simulation time, so skills progress between requests. Transcripts
and profiles persist under the data directory when a meal ends.
"""

from __future__ import annotations

import asyncio
import json
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import PlainTextResponse, StreamingResponse
from pydantic import BaseModel

from . import manual, persistence, session as session_mod
from .errors import FeastError, InvalidEventForPage, SchemaError, WorldNotReady
from .gateway import make_gateway
from .transcript import Transcript
from .world import MODE_SAFETY_STOP, FoodItem, SimWorld

DEFAULT_PLATE = [
    {"id": "i00", "food_type": "chicken", "position": [0.0, 0.0]},
    {"id": "i01", "food_type": "chicken", "position": [0.03, 0.0]},
    {"id": "i02", "food_type": "vegetable", "position": [0.06, 0.0]},
    {"id": "i03", "food_type": "vegetable", "position": [0.0, 0.03]},
]

# transcript record kind -> api event kind
_EVENT_KINDS = {
    "page": "PageChanged",
    "explanation": "Explanation",
    "skill": "SkillStatus",
    "safety": "SafetyChanged",
    "personalization": "Personalization",
    "qa": "Answer",
    "gesture_added": "GestureAdded",
    "meal_end": "MealEnd",
}


class MealRequest(BaseModel):
    food_types: list[str] = []
    preference: str = ""
    tools: list[str] = ["utensil", "mug", "wiper"]
    profile_id: str = "default"
    plate: list[dict] | None = None
    seed: int = 0
    auto_user: bool = True


class TaskRequest(BaseModel):
    task: str


class TextRequest(BaseModel):
    text: str


class OverrideRequest(BaseModel):
    food_type: str


class ManualAcquireRequest(BaseModel):
    skill: str = "skewer"
    keypoint: list[float] | None = None


class GestureRequest(BaseModel):
    name: str
    description: str


class GestureRecordRequest(BaseModel):
    gesture_class: str | None = None
    seed: int = 0


class GestureTestRequest(BaseModel):
    name: str
    timeout_s: float = 10.0


@dataclass
class SessionHolder:
    session: object
    lock: threading.Lock = field(default_factory=threading.Lock)
    api_events: list = field(default_factory=list)
    translated_upto: int = 0
    pending_gesture: dict | None = None
    persisted: bool = False

    def sync(self, data_dir):
        records = self.session.transcript.records
        while self.translated_upto < len(records):
            record = records[self.translated_upto]
            self.translated_upto += 1
            kind = record["kind"]
            payload = record["data"]
            api_kind = _EVENT_KINDS.get(kind)
            if kind == "command" and payload.get("command", "").startswith("countdown"):
                api_kind = "CountdownTick"
            elif kind == "command" and payload.get("command") in (
                    "show_bite", "bite_delivered", "sip_delivered",
                    "wipe_delivered", "gesture_indicator", "meal_complete"):
                api_kind = "Command"
            if api_kind is None:
                continue
            self.api_events.append({
                "seq": len(self.api_events),
                "kind": api_kind,
                "t": record["t"],
                "payload": payload,
            })
        if (self.session.finished or self.session.aborted) and not self.persisted:
            self.persisted = True
            persistence.persist(self.session, data_dir)

    def state_doc(self):
        sess = self.session
        snapshot = sess.snapshot()
        countdown = None
        if sess.countdown is not None:
            countdown = {"deadline": sess.countdown.deadline,
                         "action": sess.countdown.action,
                         "remaining": max(sess.countdown.deadline - sess.now(), 0.0)}
        return {
            "page": sess.page,
            "clock": round(sess.now(), 3),
            "safety_mode": sess.world.mode,
            "finished": sess.finished,
            "bite_history": list(sess.bite_history),
            "versions": snapshot.versions,
            "gestures": list(snapshot.gesture_names),
            "plate": [item.to_doc() for item in sess.world.plate],
            "pending_bite": sess.pending_bite.id if sess.pending_bite else None,
            "countdown": countdown,
            "log_lengths": snapshot.log_lengths,
            "last_event_seq": len(self.api_events) - 1,
        }


def create_app(data_dir=None, step_interval_s=0.005, sim_step_s=0.1) -> FastAPI:
    data_dir = Path(data_dir) if data_dir else persistence.data_dir_from_env()
    app = FastAPI(title="mealtime-assistance service")
    holders: dict[str, SessionHolder] = {}
    state = {"running": True}

    def driver():
        while state["running"]:
            for holder in list(holders.values()):
                with holder.lock:
                    if holder.session.finished or holder.session.aborted:
                        holder.sync(data_dir)
                        continue
                    holder.session.step(sim_step_s)
                    auto = holder.session.take_auto_event()
                    if auto is not None:
                        holder.session.handle_event(auto, auto=True)
                    holder.sync(data_dir)
            threading.Event().wait(step_interval_s)

    thread = threading.Thread(target=driver, daemon=True)

    @app.on_event("startup")
    def startup():
        thread.start()

    @app.on_event("shutdown")
    def shutdown():
        state["running"] = False

    def holder_of(session_id) -> SessionHolder:
        holder = holders.get(session_id)
        if holder is None:
            raise HTTPException(status_code=404, detail="unknown session")
        return holder

    def apply_event(holder, event, motion=False):
        with holder.lock:
            if motion and holder.session.world.mode == MODE_SAFETY_STOP:
                raise HTTPException(status_code=503,
                                    detail="robot is in the safety state")
            try:
                records = holder.session.handle_event(event)
            except InvalidEventForPage as exc:
                raise HTTPException(status_code=409, detail=str(exc)) from exc
            except SchemaError as exc:
                raise HTTPException(status_code=422, detail=str(exc)) from exc
            holder.sync(data_dir)
            return records

    @app.post("/meal")
    def start_meal(body: MealRequest):
        profile = persistence.load_profile(body.profile_id, data_dir)
        from . import config as config_mod
        trees = config_mod.trees_for_profile(profile)
        plate_docs = body.plate if body.plate is not None else (
            [] if not body.food_types else DEFAULT_PLATE)
        scenario = {
            "meal_id": f"api-{uuid.uuid4().hex[:8]}",
            "seed": body.seed,
            "profile_doc": profile.to_doc(),
            "spec": {"food_types": body.food_types or sorted(
                {d["food_type"] for d in plate_docs if not d.get("is_dip")}),
                "preference": body.preference, "tools": body.tools,
                "profile_id": body.profile_id},
            "plate": plate_docs,
        }
        world = SimWorld(seed=body.seed,
                         plate=[FoodItem.from_doc(d) for d in plate_docs])
        transcript = Transcript({"version": 1, "scenario": scenario})
        gateway = make_gateway()
        try:
            spec = session_mod.MealSpec.from_doc(scenario["spec"])
            sess = session_mod.start_meal(spec, world, gateway, profile, trees,
                                          transcript)
        except FeastError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        sess.auto_user = body.auto_user
        session_id = uuid.uuid4().hex[:12]
        holder = SessionHolder(sess)
        holder.sync(data_dir)
        holders[session_id] = holder
        return {"session_id": session_id, "state": holder.state_doc()}

    @app.get("/session/{session_id}/state")
    def get_state(session_id: str):
        holder = holder_of(session_id)
        with holder.lock:
            return holder.state_doc()

    @app.post("/session/{session_id}/task")
    def post_task(session_id: str, body: TaskRequest):
        holder = holder_of(session_id)
        apply_event(holder, {"kind": "task", "task": body.task}, motion=True)
        with holder.lock:
            return {"ok": True, "state": holder.state_doc()}

    @app.post("/session/{session_id}/bite-override")
    def post_override(session_id: str, body: OverrideRequest):
        holder = holder_of(session_id)
        apply_event(holder, {"kind": "bite_override", "food_type": body.food_type},
                    motion=True)
        return {"ok": True}

    @app.post("/session/{session_id}/manual-acquire")
    def post_manual(session_id: str, body: ManualAcquireRequest):
        holder = holder_of(session_id)
        apply_event(holder, {"kind": "manual_acquire", "skill": body.skill,
                             "keypoint": body.keypoint}, motion=True)
        return {"ok": True}

    @app.post("/session/{session_id}/click")
    def post_click(session_id: str, body: dict):
        holder = holder_of(session_id)
        apply_event(holder, {"kind": "click", "action": body.get("action", "")})
        return {"ok": True}

    @app.post("/session/{session_id}/personalize")
    def post_personalize(session_id: str, body: TextRequest):
        holder = holder_of(session_id)
        records = apply_event(holder, {"kind": "personalize", "text": body.text})
        outcome = [r["data"] for r in records if r["kind"] == "personalization"]
        return outcome[-1] if outcome else {"summary": "no outcome recorded"}

    @app.post("/session/{session_id}/transparency")
    def post_transparency(session_id: str, body: TextRequest):
        holder = holder_of(session_id)
        records = apply_event(holder, {"kind": "transparency", "text": body.text})
        answers = [r["data"] for r in records if r["kind"] == "qa"]
        return {"answer": answers[-1]["answer"] if answers else ""}

    @app.post("/session/{session_id}/gesture")
    def post_gesture(session_id: str, body: GestureRequest):
        holder = holder_of(session_id)
        with holder.lock:
            holder.pending_gesture = {"name": body.name,
                                      "description": body.description}
        return {"ok": True}

    @app.post("/session/{session_id}/gesture/record")
    def post_gesture_record(session_id: str, body: GestureRecordRequest):
        holder = holder_of(session_id)
        with holder.lock:
            pending = holder.pending_gesture
        if pending is None:
            raise HTTPException(status_code=409, detail="no gesture declared")
        records = apply_event(holder, {
            "kind": "gesture_add", "name": pending["name"],
            "description": pending["description"],
            "gesture_class": body.gesture_class, "seed": body.seed}, motion=True)
        added = [r["data"] for r in records if r["kind"] == "gesture_added"]
        if not added:
            raise HTTPException(status_code=422, detail="synthesis failed")
        with holder.lock:
            holder.pending_gesture = None
        return added[-1]

    @app.post("/session/{session_id}/gesture/test")
    def post_gesture_test(session_id: str, body: GestureTestRequest):
        holder = holder_of(session_id)
        records = apply_event(holder, {"kind": "gesture_test", "name": body.name,
                                       "timeout_s": body.timeout_s}, motion=True)
        results = [r["data"] for r in records if r["kind"] == "command"
                   and r["data"].get("command") == "gesture_indicator"]
        return results[-1] if results else {"status": "unknown"}

    @app.post("/session/{session_id}/estop")
    def post_estop(session_id: str):
        holder = holder_of(session_id)
        with holder.lock:
            if holder.session.world.mode != MODE_SAFETY_STOP:
                holder.session.handle_event({"kind": "estop", "source": "user"})
            holder.sync(data_dir)
            return {"safety_mode": holder.session.world.mode}

    @app.get("/session/{session_id}/events")
    async def get_events(session_id: str, request: Request,
                         last_event_id: int | None = None):
        holder = holder_of(session_id)
        header_id = request.headers.get("Last-Event-ID")
        start = 0
        if header_id is not None:
            start = int(header_id) + 1
        elif last_event_id is not None:
            start = int(last_event_id) + 1

        async def stream():
            cursor = start
            while True:
                events = holder.api_events[cursor:]
                for event in events:
                    yield (f"id: {event['seq']}\n"
                           f"data: {json.dumps(event, sort_keys=True)}\n\n")
                cursor += len(events)
                if await request.is_disconnected():
                    return
                if holder.session.finished and cursor >= len(holder.api_events):
                    return
                await asyncio.sleep(0.02)

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.get("/manual", response_class=PlainTextResponse)
    def get_manual():
        return manual.render_manual()

    app.state.holders = holders
    return app


def serve(host="127.0.0.1", port=8080, data_dir=None):
    import uvicorn

    uvicorn.run(create_app(data_dir), host=host, port=port, log_level="warning")
