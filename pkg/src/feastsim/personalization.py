"""The three-step personalization pipeline and the transparency surface.

Adaptability: translate the request into structured updates, check them
statically and for safety, apply exactly the accepted ones, then summarize
the whole outcome back to the user. Transparency: answer queries from the
system-state snapshot, and emit continuous change explanations whenever the
state actually changed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import bt, safety
from .errors import AdapterUnavailable, InvariantError, TranslationFailed

APOLOGY = ("Sorry, I cannot provide an explanation right now; the language "
           "service is unavailable.")


@dataclass(frozen=True)
class PersonalizationOutcome:
    request: str
    updates: tuple
    verdicts: tuple
    summary: str
    new_versions: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.updates) != len(self.verdicts):
            raise InvariantError("one verdict per update")
        if not self.summary:
            raise InvariantError("summary must be non-empty")

    @property
    def verdict_pattern(self):
        return [v.status for v in self.verdicts]

    def to_doc(self):
        return {
            "request": self.request,
            "updates": [u.to_doc() for u in self.updates],
            "verdicts": [v.to_doc() for v in self.verdicts],
            "summary": self.summary,
            "new_versions": dict(self.new_versions),
            "pattern": self.verdict_pattern,
        }


def _scenario_text(session):
    foods = ", ".join(session.spec.food_types) or "a drink-only meal"
    return (f"A mealtime-assistance robot is feeding a user. Plate contents: "
            f"{foods}. Ordering preference: "
            f"{session.spec.preference or 'none stated'}.")


def apply_adaptability(request_text, session) -> PersonalizationOutcome:
    """Translate -> check -> apply -> summarize; never raises at the user."""
    gateway = session.gateway
    descriptions = {k: bt.describe(t) for k, t in session.trees.items()}
    try:
        updates, _result = gateway.translate_request(
            request_text, _scenario_text(session), descriptions,
            session.trees, gestures=tuple(sorted(session.gesture_library)),
            cfg=session.safety_cfg)
    except TranslationFailed:
        summary = gateway.summarize_outcome(request_text, [])
        outcome = PersonalizationOutcome(request_text, (), (), summary, {})
        session.emit("personalization", outcome.to_doc())
        return outcome
    verdicts, new_trees = safety.process_updates(
        updates, session.trees, session.safety_cfg)
    session.trees = new_trees
    summary = gateway.summarize_outcome(request_text, verdicts)
    outcome = PersonalizationOutcome(
        request_text, tuple(updates), tuple(verdicts), summary,
        {k: t.version for k, t in session.trees.items()})
    session.emit("personalization", outcome.to_doc())
    return outcome


def apply_updates_directly(update_docs, session, note="intervention"):
    """Experimenter updates: skip translation, keep every safety check."""
    updates = [safety.parse_update(d) for d in update_docs]
    verdicts, new_trees = safety.process_updates(
        updates, session.trees, session.safety_cfg)
    session.trees = new_trees
    summary = session.gateway.summarize_outcome(note, verdicts)
    outcome = PersonalizationOutcome(
        note, tuple(updates), tuple(verdicts), summary,
        {k: t.version for k, t in session.trees.items()})
    session.emit("personalization", outcome.to_doc())
    return outcome


def answer_query(query_text, session) -> str:
    """Level 3/4: answer from the snapshot; history carries follow-up context."""
    snapshot = session.snapshot()
    try:
        answer = session.gateway.answer_transparency(query_text, snapshot,
                                                     session.qa_log)
    except AdapterUnavailable:
        answer = APOLOGY
        session.qa_log.append(query_text)
        session.qa_log.append(answer)
    session.emit("qa", {"query": query_text, "answer": answer})
    return answer


def continuous_explanation_tick(session, now):
    """Level 5: explain iff the system state changed since the last check."""
    previous = session.level5_last
    current = session.snapshot()
    differences = []
    for tree_id in sorted(current.trees):
        before = previous.trees.get(tree_id)
        if before is None:
            continue
        for entry in bt.diff(before, current.trees[tree_id]):
            differences.append({"tree": tree_id, **entry.to_doc()})
    seen = getattr(session, "level5_exec_seen", 0)
    executed = list(session.executed_skills[seen:])
    session.level5_exec_seen = len(session.executed_skills)
    session.level5_last = current
    if not differences and not executed:
        return None
    text = session.gateway.explain_changes(differences, executed)
    session.emit("explanation", {"text": text, "differences": differences,
                                 "executed": executed})
    return text
