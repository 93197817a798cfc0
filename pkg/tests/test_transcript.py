import json

import pytest

from feastsim import transcript as tr
from feastsim.canon import canon_line
from feastsim.errors import SchemaError, TranscriptDiverged
from feastsim.fixtures import check_fixture, load_fixture, scenario_of
from feastsim.gateway import Gateway
from feastsim.gateway_stub import StubAdapter

from test_session import scenario


def gw():
    return Gateway(StubAdapter())


class TestRunScenario:
    def test_scripted_meal_finishes(self):
        doc = scenario(timeline=[
            {"t": 1.0, "kind": "task", "task": "bite"},
            {"t": 20.0, "kind": "task", "task": "finish"},
        ])
        sess = tr.run_scenario(doc, gw())
        assert sess.finished
        assert sess.transcript.final_hash()

    def test_estop_mid_meal_marks_aborted(self):
        doc = scenario(timeline=[
            {"t": 1.0, "kind": "task", "task": "bite"},
            {"t": 3.0, "kind": "estop", "source": "user"},
        ])
        sess = tr.run_scenario(doc, gw())
        assert not sess.finished
        end = [r for r in sess.transcript.records if r["kind"] == "meal_end"][-1]
        assert end["data"]["status"] == "aborted"
        assert end["data"]["safety_mode"] == "safety_stop"

    def test_malformed_scenario_rejected(self):
        with pytest.raises(SchemaError):
            tr.run_scenario({"meal_id": "x"}, gw())

    def test_same_scenario_twice_is_byte_identical(self):
        doc = scenario(timeline=[
            {"t": 1.0, "kind": "task", "task": "bite"},
            {"t": 20.0, "kind": "personalize", "text": "Be quiet"},
            {"t": 30.0, "kind": "task", "task": "finish"},
        ])
        a = tr.run_scenario(doc, gw()).transcript.to_jsonl()
        b = tr.run_scenario(doc, gw()).transcript.to_jsonl()
        assert a == b


class TestReplay:
    def _transcript(self):
        doc = scenario(timeline=[
            {"t": 1.0, "kind": "task", "task": "bite"},
            {"t": 25.0, "kind": "personalize", "text": "Be quiet"},
            {"t": 30.0, "kind": "transparency",
             "text": "What is the default action to complete a transfer"},
            {"t": 40.0, "kind": "task", "task": "sip"},
            {"t": 90.0, "kind": "task", "task": "finish"},
        ])
        return tr.run_scenario(doc, gw()).transcript

    def test_round_trip(self):
        recorded = self._transcript()
        replayed = tr.replay(recorded.to_jsonl(), gw())
        assert replayed.transcript.final_hash() == recorded.final_hash()

    def test_jsonl_serialization_round_trip(self):
        recorded = self._transcript()
        text = recorded.to_jsonl()
        again = tr.Transcript.from_jsonl(text)
        assert again.records == recorded.records
        assert again.to_jsonl() == text

    def test_tampered_verdict_diverges(self):
        recorded = self._transcript()
        lines = recorded.to_jsonl().splitlines()
        tampered = []
        for line in lines:
            record = json.loads(line)
            if record.get("kind") == "personalization":
                record["data"]["pattern"] = ["rejected_static"] * len(
                    record["data"]["pattern"])
                line = canon_line(record)
            tampered.append(line)
        with pytest.raises(TranscriptDiverged):
            tr.replay("\n".join(tampered) + "\n", gw())

    def test_empty_transcript_rejected(self):
        with pytest.raises(SchemaError):
            tr.replay("", gw())

    def test_header_only_transcript_yields_initial_state(self):
        doc = scenario(timeline=[])
        header_line = canon_line({"header": {"version": 1, "scenario": doc}})
        sess = tr.replay(header_line + "\n", gw())
        assert sess.page == "task_selection"
        assert sess.bite_history == []


class TestFinalHash:
    def test_hash_covers_tree_state(self):
        doc = scenario(timeline=[{"t": 1.0, "kind": "task", "task": "finish"}])
        base = tr.run_scenario(doc, gw()).transcript.final_hash()
        doc2 = scenario(timeline=[
            {"t": 1.0, "kind": "personalize", "text": "Be quiet"},
            {"t": 4.0, "kind": "task", "task": "finish"},
        ])
        changed = tr.run_scenario(doc2, gw()).transcript.final_hash()
        assert base != changed
