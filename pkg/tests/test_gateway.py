import httpx
import pytest

from feastsim import defaults, safety
from feastsim.canon import digest
from feastsim.errors import AdapterUnavailable, SynthesisFailed, TranslationFailed
from feastsim.gateway import (
    FORM_TEXT,
    FORM_UPDATE_BATCH,
    Gateway,
    GatewayRequest,
    GatewayResult,
    LiveAdapter,
    make_gateway,
)
from feastsim.gateway_stub import StubAdapter, gesture_template_for, normalize

from test_session import fresh_session


@pytest.fixture
def gateway():
    return Gateway(StubAdapter())


def descriptions(trees):
    from feastsim import bt
    return {k: bt.describe(t) for k, t in trees.items()}


class TestTranslate:
    def test_fast_as_possible_touches_multiple_trees(self, gateway, trees):
        updates, result = gateway.translate_request(
            "always move as fast as possible", "a meal", descriptions(trees), trees)
        touched = {u.tree_id for u in updates}
        assert len(touched) >= 4
        assert all(u.param_id == "Speed" and u.value == "high" for u in updates)
        assert result.attempts == 1

    def test_be_quiet_mutes_three_transfer_trees(self, gateway, trees):
        updates, _ = gateway.translate_request(
            "Be quiet", "a meal", descriptions(trees), trees)
        assert {u.tree_id for u in updates} == {
            "TransferUtensil", "TransferMug", "TransferWiper"}
        assert all(u.param_id == "VoicePromptsEnabled" and u.value is False
                   for u in updates)

    def test_gibberish_exhausts_exactly_four_attempts(self, gateway, trees):
        with pytest.raises(TranslationFailed) as info:
            gateway.translate_request("zzqq", "a meal", descriptions(trees), trees)
        assert info.value.attempts == 4

    def test_partial_static_failure_surfaces_after_retries(self, gateway, trees):
        updates, result = gateway.translate_request(
            "Feed me As fast as you can", "a meal", descriptions(trees), trees)
        assert result.attempts == 4   # deterministic stub repeats its answer
        statuses = [safety.static_check([u], trees)[0][0] for u in updates]
        assert statuses == [True, True, False, False]

    def test_retry_bound_invariant(self):
        with pytest.raises(Exception):
            GatewayResult(raw="", parsed=None, attempts=5)


class TestSummaries:
    def _verdicts(self, trees, accept, reject):
        verdicts = []
        for tree_id, param, value in accept:
            verdicts.append(safety.UpdateVerdict(
                safety.set_param(tree_id, param, value), safety.ACCEPTED))
        for tree_id, param, value, reason in reject:
            verdicts.append(safety.UpdateVerdict(
                safety.set_param(tree_id, param, value), safety.REJECTED_STATIC,
                reason))
        return verdicts

    def test_mixed_outcome_reports_partial_success(self, gateway, trees):
        verdicts = self._verdicts(
            trees,
            [("TransferMug", "Speed", "high")],
            [("TransferWiper", "WipeAutoContinue", 100, "unknown parameter")])
        import re

        text = gateway.summarize_outcome("go faster", verdicts)
        assert "TransferMug" in text
        assert "could not" in text.lower()
        sentences = re.findall(r"\.(?:\s|$)", text)
        assert len(sentences) <= 3

    def test_all_accepted_names_skills(self, gateway, trees):
        verdicts = self._verdicts(trees, [("AcquireBite", "Speed", "high")], [])
        text = gateway.summarize_outcome("go faster", verdicts)
        assert "AcquireBite" in text and "could not" not in text.lower()

    def test_nothing_applied(self, gateway, trees):
        text = gateway.summarize_outcome("do the dishes", [])
        assert "no changes" in text.lower()


class TestTransparencyAnswers:
    def test_answers_from_structural_facts_only(self, gateway):
        sess = fresh_session()
        snapshot = sess.snapshot()
        history = []
        answer = gateway.answer_transparency(
            "What is the dipping depth", snapshot, history)
        assert "0.02" in answer
        assert history == ["What is the dipping depth", answer]

    def test_closed_world_refusal(self, gateway):
        sess = fresh_session()
        answer = gateway.answer_transparency(
            "why is the sky blue", sess.snapshot(), [])
        assert "cannot answer" in answer.lower()

    def test_what_if_enumerates_domain(self, gateway):
        sess = fresh_session()
        answer = gateway.answer_transparency(
            "What other ways can I end a transfer besides pushing the button",
            sess.snapshot(), [])
        for value in ("sense", "button", "auto_timeout"):
            assert value in answer


class TestGestureProposals:
    def test_head_shake_uses_yaw_oscillation_with_threshold(self, gateway):
        program = gateway.propose_gesture_program(
            "shaking my head from left to right", "dsl", [], [])
        assert "oscillation_count" in program.source
        assert "(signal yaw)" in program.source
        names = {h.name for h in program.hyperparameters}
        assert "head_shake_threshold" in names
        for hp in program.hyperparameters:
            assert hp.lo < hp.hi

    def test_mouth_open_is_the_builtin_template(self, gateway):
        program = gateway.propose_gesture_program("mouth open", "dsl", [], [])
        assert "mouth_open_ratio" in program.source

    def test_unmatched_description_fails(self, gateway):
        with pytest.raises(SynthesisFailed):
            gateway.propose_gesture_program("zzqq", "dsl", [], [])

    def test_template_keyword_routing(self):
        assert gesture_template_for("tilting my head from side to side") == "head_tilt"
        assert gesture_template_for("Hold head still for five seconds") == "head_still"
        assert gesture_template_for("Mouth open for five seconds") == \
            "mouth_continuously_open"
        assert gesture_template_for("blinking three times") == "three_blinks"
        assert gesture_template_for("nope") is None


class TestStubDeterminism:
    def test_identical_requests_hash_stable(self, trees):
        adapter = StubAdapter()
        request = GatewayRequest(
            "adaptability_translate",
            (("scenario", "meal"), ("request", "Be quiet")),
            FORM_UPDATE_BATCH)
        payload = {"trees": trees, "gestures": (), "cfg": None}
        outputs = {digest(adapter.complete(request, payload)) for _ in range(5)}
        assert len(outputs) == 1

    def test_normalization(self):
        assert normalize("Don't SHOUT!") == ["don", "t", "shout"]


class TestLiveAdapter:
    def test_round_trip_through_http(self, trees):
        def handler(http_request):
            body = http_request.read().decode()
            assert "Be quiet" in body
            return httpx.Response(200, json={
                "output": '[{"kind":"set_parameter","tree":"TransferUtensil",'
                          '"param":"VoicePromptsEnabled","value":false}]'})

        client = httpx.Client(transport=httpx.MockTransport(handler))
        adapter = LiveAdapter("http://llm.example/complete", client=client)
        gateway = Gateway(adapter)
        updates, result = gateway.translate_request(
            "Be quiet", "meal", {}, trees)
        assert len(updates) == 1 and updates[0].value is False

    def test_http_error_surfaces_as_adapter_unavailable(self):
        def handler(http_request):
            return httpx.Response(500)

        client = httpx.Client(transport=httpx.MockTransport(handler))
        adapter = LiveAdapter("http://llm.example/complete", client=client)
        request = GatewayRequest("summarize", (("request", "x"),), FORM_TEXT)
        with pytest.raises(AdapterUnavailable):
            adapter.complete(request)

    def test_env_selection(self, monkeypatch):
        monkeypatch.setenv("FEAST_LLM_ADAPTER", "stub")
        gateway = make_gateway()
        assert isinstance(gateway.adapter, StubAdapter)
        monkeypatch.setenv("FEAST_LLM_ADAPTER", "live")
        monkeypatch.delenv("FEAST_LLM_ENDPOINT", raising=False)
        with pytest.raises(AdapterUnavailable):
            make_gateway()
        monkeypatch.setenv("FEAST_LLM_ENDPOINT", "http://llm.example")
        monkeypatch.setenv("FEAST_LLM_TIMEOUT_SECS", "5")
        gateway = make_gateway()
        assert isinstance(gateway.adapter, LiveAdapter)
        assert gateway.adapter.timeout_s == 5.0
