"""Language-model boundary.

All prompt construction, structured-output parsing, and bounded re-prompting
lives here; no other module ever parses raw model text. The adapter is
pluggable: the deterministic rule-based stub (default) reproduces every
recorded personalization exchange for tests, while the live adapter speaks
HTTP+JSON to a configurable endpoint. Select with FEAST_LLM_ADAPTER.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import httpx

from . import safety
from .errors import (
    AdapterUnavailable,
    InvariantError,
    SchemaError,
    SynthesisFailed,
    TranslationFailed,
)
from .gestures import GestureProgram

MAX_RETRIES = 3     # re-prompts after the first attempt

TASK_TRANSLATE = "adaptability_translate"
TASK_SUMMARIZE = "summarize"
TASK_ANSWER = "transparency_answer"
TASK_GESTURE = "gesture_synthesize"
TASK_NEXT_BITE = "next_bite_choose"

FORM_UPDATE_BATCH = "update_batch_v1"
FORM_TEXT = "text_v1"
FORM_GESTURE = "gesture_program_v1"
FORM_BITE = "bite_choice_v1"


@dataclass(frozen=True)
class GatewayRequest:
    task: str
    context: tuple        # ordered (label, text) pairs
    expected_form: str

    def __post_init__(self):
        if not self.context:
            raise InvariantError("gateway request needs at least one context block")
        if self.expected_form not in (FORM_UPDATE_BATCH, FORM_TEXT, FORM_GESTURE,
                                      FORM_BITE):
            raise InvariantError(f"unknown schema id {self.expected_form!r}")

    def to_doc(self):
        return {"task": self.task, "context": [list(c) for c in self.context],
                "expected_form": self.expected_form}


@dataclass(frozen=True)
class GatewayResult:
    raw: str
    parsed: object            # schema-conformant value, or None on failure
    failure: str = ""
    attempts: int = 1

    def __post_init__(self):
        if self.attempts < 1 or self.attempts > 1 + MAX_RETRIES:
            raise InvariantError(f"attempts {self.attempts} outside bound")


class Gateway:
    """Task-level operations over a raw-text adapter."""

    def __init__(self, adapter, transcript_sink=None):
        self.adapter = adapter
        self._sink = transcript_sink

    # -- plumbing -----------------------------------------------------------

    def _complete(self, request, payload, attempt):
        raw = self.adapter.complete(request, payload)
        if self._sink is not None:
            self._sink({"kind": "gateway", "task": request.task, "attempt": attempt,
                        "request": request.to_doc(), "raw": raw})
        return raw

    @staticmethod
    def _with_failures(request, failures):
        if not failures:
            return request
        text = "\n".join(failures)
        return GatewayRequest(request.task,
                              request.context + (("failures", text),),
                              request.expected_form)

    # -- operations ---------------------------------------------------------

    def translate_request(self, request_text, scenario_text, tree_descriptions,
                          trees, gestures=(), cfg=None):
        """Natural-language request -> structured updates.

        Re-prompts with failure information while the output fails to parse
        or fails static checks entirely; after the retry budget, the last
        parseable batch is returned so per-update rejections surface to the
        user. Returns (updates, GatewayResult).
        """
        base = GatewayRequest(
            TASK_TRANSLATE,
            (("scenario", scenario_text),
             ("request", request_text),
             ("trees", "\n".join(tree_descriptions[k] for k in sorted(tree_descriptions))),
             ("gestures", ", ".join(gestures) or "none")),
            FORM_UPDATE_BATCH)
        payload = {"trees": trees, "gestures": tuple(gestures), "cfg": cfg}
        failures = []
        last_updates = None
        last_raw = ""
        attempts = 0
        for attempt in range(1, 2 + MAX_RETRIES):
            attempts = attempt
            request = self._with_failures(base, failures)
            try:
                raw = self._complete(request, payload, attempt)
            except AdapterUnavailable:
                raise
            try:
                updates = _parse_update_batch(raw)
            except SchemaError as exc:
                failures.append(f"attempt {attempt}: {exc}")
                continue
            last_updates, last_raw = updates, raw
            static = safety.static_check(updates, trees)
            bad = [reason for ok, reason in static if not ok]
            if not bad:
                return updates, GatewayResult(raw, [u.to_doc() for u in updates],
                                              attempts=attempt)
            failures.append(f"attempt {attempt}: " + "; ".join(bad))
        if last_updates is not None:
            return last_updates, GatewayResult(
                last_raw, [u.to_doc() for u in last_updates],
                failure="static checks still failing after retries",
                attempts=attempts)
        raise TranslationFailed(
            f"could not translate {request_text!r}: " + " | ".join(failures),
            attempts=attempts)

    def summarize_outcome(self, request_text, verdicts):
        request = GatewayRequest(
            TASK_SUMMARIZE,
            (("request", request_text),
             ("verdicts", json.dumps([v.to_doc() for v in verdicts]))),
            FORM_TEXT)
        raw = self._complete(request, {"verdicts": tuple(verdicts)}, 1)
        return _require_text(raw)

    def answer_transparency(self, query, snapshot, qa_history):
        request = GatewayRequest(
            TASK_ANSWER,
            (("query", query),
             ("system_state", snapshot.render_text()),
             ("qa_history", json.dumps(list(qa_history)))),
            FORM_TEXT)
        raw = self._complete(request, {"snapshot": snapshot,
                                       "qa_history": tuple(qa_history)}, 1)
        answer = _require_text(raw)
        qa_history.append(query)
        qa_history.append(answer)
        return answer

    def explain_changes(self, differences, executed_skills):
        """Level-5 change summary from concrete diff entries."""
        request = GatewayRequest(
            TASK_SUMMARIZE,
            (("differences", json.dumps(differences)),
             ("executed", json.dumps(list(executed_skills)))),
            FORM_TEXT)
        raw = self._complete(request, {"differences": differences,
                                       "executed": tuple(executed_skills)}, 1)
        return _require_text(raw)

    def propose_gesture_program(self, description, dsl_reference, positives,
                                negatives, prior_failures=()):
        base = GatewayRequest(
            TASK_GESTURE,
            (("description", description),
             ("dsl", dsl_reference),
             ("examples", f"{len(positives)} positive, {len(negatives)} negative")),
            FORM_GESTURE)
        payload = {"positives": tuple(positives), "negatives": tuple(negatives)}
        failures = list(prior_failures)
        for attempt in range(1, 2 + MAX_RETRIES):
            request = self._with_failures(base, failures)
            raw = self._complete(request, payload, attempt)
            try:
                return _parse_gesture_program(raw)
            except (SchemaError, InvariantError) as exc:
                failures.append(f"attempt {attempt}: {exc}")
        raise SynthesisFailed(
            f"no parseable detector for {description!r} after {1 + MAX_RETRIES} attempts")

    def choose_next_bite(self, preference_text, available_types, history):
        request = GatewayRequest(
            TASK_NEXT_BITE,
            (("preference", preference_text or "no stated preference"),
             ("available", ", ".join(available_types)),
             ("history", ", ".join(history) or "none")),
            FORM_BITE)
        raw = self._complete(request, {"available": tuple(available_types),
                                       "history": tuple(history)}, 1)
        choice = _require_text(raw)
        if choice not in available_types:
            raise SchemaError(f"bite choice {choice!r} not among available types")
        return choice


def _parse_update_batch(raw):
    try:
        docs = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not valid JSON: {exc}") from exc
    if not isinstance(docs, list):
        raise SchemaError("update batch must be a JSON list")
    return [safety.parse_update(d) for d in docs]


def _parse_gesture_program(raw):
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("gesture program must be a JSON object")
    missing = {"name", "description", "expression", "hyperparameters"} - set(doc)
    if missing:
        raise SchemaError(f"gesture program missing fields: {sorted(missing)}")
    return GestureProgram.from_doc(doc)


def _require_text(raw):
    if not isinstance(raw, str) or not raw.strip():
        raise SchemaError("expected non-empty text")
    return raw


class LiveAdapter:
    """HTTP+JSON adapter; body shapes are {task, context, expected_form} in,
    {output: text} out."""

    def __init__(self, endpoint, timeout_s=30.0, client=None):
        self.endpoint = endpoint
        self.timeout_s = timeout_s
        self._client = client or httpx.Client(timeout=timeout_s)

    def complete(self, request, payload=None):
        try:
            response = self._client.post(self.endpoint, json=request.to_doc(),
                                         timeout=self.timeout_s)
            response.raise_for_status()
            return response.json()["output"]
        except (httpx.HTTPError, KeyError, ValueError) as exc:
            raise AdapterUnavailable(f"live adapter failed: {exc}") from exc


def make_gateway(transcript_sink=None, adapter=None):
    """Adapter selection: FEAST_LLM_ADAPTER in {stub, live} (default stub)."""
    if adapter is None:
        choice = os.environ.get("FEAST_LLM_ADAPTER", "stub")
        if choice == "live":
            endpoint = os.environ.get("FEAST_LLM_ENDPOINT", "")
            if not endpoint:
                raise AdapterUnavailable("FEAST_LLM_ENDPOINT not set for live adapter")
            timeout = float(os.environ.get("FEAST_LLM_TIMEOUT_SECS", "30"))
            adapter = LiveAdapter(endpoint, timeout)
        elif choice == "stub":
            from .gateway_stub import StubAdapter
            adapter = StubAdapter()
        else:
            raise AdapterUnavailable(f"unknown adapter {choice!r}")
    return Gateway(adapter, transcript_sink)
