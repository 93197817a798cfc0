"""Loading and checking scenario fixtures against their expectations."""

from __future__ import annotations

import json
from pathlib import Path

from .errors import InvariantError, SchemaError

FIXTURE_NAMES = tuple([f"meal{i}" for i in range(1, 7)]
                      + [f"scenario{i}" for i in range(1, 11)])


def default_fixtures_dir():
    return Path(__file__).resolve().parents[2] / "fixtures"


def load_fixture(path):
    doc = json.loads(Path(path).read_text())
    if "expected" not in doc or "timeline" not in doc:
        raise SchemaError(f"{path} is not a fixture document")
    return doc


def scenario_of(fixture):
    return {k: v for k, v in fixture.items() if k != "expected"}


def check_fixture(fixture, session):
    """Assert a finished session matches the fixture's expectations.

    Returns the list of checks performed; raises InvariantError on the first
    mismatch.
    """
    expected = fixture["expected"]
    checks = []
    records = session.transcript.records

    def fail(message):
        raise InvariantError(f"{fixture['meal_id']}: {message}")

    outcomes = [r["data"] for r in records if r["kind"] == "personalization"]
    by_request = {}
    for outcome in outcomes:
        by_request.setdefault(outcome["request"], []).append(outcome)
    for request_text, pattern in expected.get("patterns", ()):
        matching = by_request.get(request_text)
        if not matching:
            fail(f"no personalization outcome recorded for {request_text!r}")
        got = matching[0]["pattern"]
        if got != pattern:
            fail(f"verdict pattern for {request_text!r}: expected {pattern}, "
                 f"got {got}")
        checks.append(("pattern", request_text))

    interventions = [o for o in outcomes if o["request"] not in by_request
                     or "intervention" in o["request"] or "manually" in o["request"]]
    for i, pattern in enumerate(expected.get("intervention_patterns", ())):
        if i >= len(interventions) or interventions[i]["pattern"] != pattern:
            fail(f"intervention {i} pattern expected {pattern}")
        checks.append(("intervention", i))

    answers = {r["data"]["query"]: r["data"]["answer"]
               for r in records if r["kind"] == "qa"}
    for query, needle in expected.get("qa_contains", ()):
        answer = answers.get(query)
        if answer is None:
            fail(f"no answer recorded for {query!r}")
        if needle.lower() not in answer.lower():
            fail(f"answer to {query!r} does not mention {needle!r}: {answer}")
        checks.append(("qa", query))

    status_records = [r for r in records if r["kind"] == "meal_end"]
    if not status_records:
        fail("no meal_end record")
    status = status_records[-1]["data"]["status"]
    if expected.get("status") and status != expected["status"]:
        fail(f"meal status expected {expected['status']}, got {status}")
    checks.append(("status", status))

    if "bites" in expected and len(session.bite_history) != expected["bites"]:
        fail(f"expected exactly {expected['bites']} bites, "
             f"got {len(session.bite_history)}")
    if "min_bites" in expected and len(session.bite_history) < expected["min_bites"]:
        fail(f"expected at least {expected['min_bites']} bites, "
             f"got {len(session.bite_history)}")
    if "bite_prefix" in expected:
        prefix = expected["bite_prefix"]
        if session.bite_history[:len(prefix)] != prefix:
            fail(f"bite order prefix expected {prefix}, "
                 f"got {session.bite_history[:len(prefix)]}")

    for tree_id, param, value in expected.get("parameter_values", ()):
        got = session.trees[tree_id].value(param)
        if isinstance(value, float):
            ok = abs(got - value) < 1e-9
        else:
            ok = got == value
        if not ok:
            fail(f"{tree_id}.{param} expected {value!r}, got {got!r}")
        checks.append(("parameter", f"{tree_id}.{param}"))

    for gesture in expected.get("gestures", ()):
        if gesture not in session.gesture_library:
            fail(f"gesture {gesture!r} missing from the library")
        program = session.gesture_library[gesture]
        if not program.metrics or "accuracy" not in program.metrics:
            fail(f"gesture {gesture!r} has no recorded training metrics")
        checks.append(("gesture", gesture))

    if expected.get("retract_after_bite"):
        names = [r["data"].get("name", "") for r in records
                 if r["kind"] == "skill"]   # skill records carry labels only
        added_retracts = [r for r in session.node_log
                          if r.get("name") == "retract after transfer"
                          and r.get("phase") == "exit"]
        if not added_retracts:
            fail("no added retract step executed after bites")
        checks.append(("retract_after_bite", len(added_retracts)))

    for skill in expected.get("skill_failures", ()):
        failures = [r for r in records if r["kind"] == "skill"
                    and r["data"].get("skill") == skill
                    and r["data"].get("status") == "failure"]
        if not failures:
            fail(f"expected a recorded failure of {skill}")
        checks.append(("skill_failure", skill))

    if expected.get("safety_stop"):
        stops = [r for r in records if r["kind"] == "safety"
                 and r["data"].get("mode") == "safety_stop"]
        if not stops:
            fail("expected a safety stop during the meal")
        checks.append(("safety_stop", len(stops)))

    if "state_hash" in expected:
        got = session.transcript.final_hash()
        if got != expected["state_hash"]:
            fail(f"final state hash {got} != frozen {expected['state_hash']}")
        checks.append(("state_hash", got))
    return checks
