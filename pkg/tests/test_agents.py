"""Synthetic joint, prompt templates, response parsing, and the LLM client."""

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tonelab.agents import (
    FEATURE_IDS,
    AuthError,
    LlmChainAgent,
    LlmParams,
    MalformedResponseError,
    ParseError,
    PromptTemplate,
    SyntheticChainAgent,
    SyntheticFeatureRater,
    SyntheticJoint,
    SyntheticRater,
    SyntheticSimilarityJudge,
    TransportError,
    llm_complete,
    load_features,
    load_templates,
    parse_response,
    render_prompt,
    synthetic_answer_sentence,
    synthetic_answer_tone,
)
from tonelab.core import ConfigError, InputError


def small_joint():
    probs = np.array([
        [0.30, 0.10, 0.05],
        [0.05, 0.25, 0.25],
    ])
    return SyntheticJoint(("warm", "cold"), ("s one", "s two", "s three"), probs)


class TestSyntheticJoint:
    def test_marginals(self):
        joint = small_joint()
        np.testing.assert_allclose(joint.tone_marginal(), [0.45, 0.55])
        np.testing.assert_allclose(joint.sentence_marginal(), [0.35, 0.35, 0.30])

    def test_conditionals_normalize(self):
        joint = small_joint()
        for j in range(3):
            assert joint.conditional_tone_given_sentence(j).sum() == pytest.approx(1.0)
        for i in range(2):
            assert joint.conditional_sentence_given_tone(i).sum() == pytest.approx(1.0)

    def test_conditional_values(self):
        joint = small_joint()
        np.testing.assert_allclose(
            joint.conditional_tone_given_sentence(0), [0.30 / 0.35, 0.05 / 0.35])
        np.testing.assert_allclose(
            joint.conditional_sentence_given_tone(1),
            [0.05 / 0.55, 0.25 / 0.55, 0.25 / 0.55])

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ConfigError):
            SyntheticJoint(("a",), ("x", "y"), np.ones((2, 2)) / 4)

    def test_duplicate_items_rejected(self):
        with pytest.raises(ConfigError):
            SyntheticJoint(("a", "a"), ("x", "y"), np.ones((2, 2)) / 4)

    def test_negative_mass_rejected(self):
        probs = np.array([[0.6, -0.1], [0.3, 0.2]])
        with pytest.raises(ConfigError):
            SyntheticJoint(("a", "b"), ("x", "y"), probs)

    def test_bad_total_rejected(self):
        with pytest.raises(ConfigError):
            SyntheticJoint(("a", "b"), ("x", "y"), np.ones((2, 2)))

    def test_zero_mass_row_rejected(self):
        probs = np.array([[0.5, 0.5], [0.0, 0.0]])
        with pytest.raises(ConfigError):
            SyntheticJoint(("a", "b"), ("x", "y"), probs)

    def test_unknown_item_lookup(self):
        joint = small_joint()
        with pytest.raises(InputError):
            joint.tone_index("missing")
        with pytest.raises(InputError):
            joint.sentence_index("missing")

    def test_random_joint_valid_and_deterministic(self):
        tones = ["t" + str(i) for i in range(5)]
        sentences = ["s" + str(i) for i in range(8)]
        a = SyntheticJoint.random(tones, sentences, np.random.default_rng(7))
        b = SyntheticJoint.random(tones, sentences, np.random.default_rng(7))
        assert a.probs.sum() == pytest.approx(1.0)
        assert np.all(a.probs > 0)
        np.testing.assert_array_equal(a.probs, b.probs)

    def test_roundtrip(self):
        joint = small_joint()
        again = SyntheticJoint.from_dict(json.loads(json.dumps(joint.to_dict())))
        assert again.tones == joint.tones
        np.testing.assert_allclose(again.probs, joint.probs)


class TestSyntheticSampling:
    def test_peaked_joint_answers_are_forced(self):
        eps = 1e-9
        probs = np.array([[0.5 - eps, eps], [eps, 0.5 - eps]])
        probs = probs / probs.sum()
        joint = SyntheticJoint(("a", "b"), ("x", "y"), probs)
        rng = np.random.default_rng(0)
        for _ in range(20):
            assert synthetic_answer_tone(joint, "x", rng) == "a"
            assert synthetic_answer_sentence(joint, "b", rng) == "y"

    def test_same_seed_same_sample(self):
        joint = small_joint()
        a = synthetic_answer_tone(joint, "s two", np.random.default_rng(42))
        b = synthetic_answer_tone(joint, "s two", np.random.default_rng(42))
        assert a == b

    def test_empirical_conditional_matches(self):
        joint = small_joint()
        rng = np.random.default_rng(3)
        draws = [synthetic_answer_tone(joint, "s one", rng) for _ in range(4000)]
        share_warm = draws.count("warm") / len(draws)
        assert share_warm == pytest.approx(0.30 / 0.35, abs=0.03)

    def test_chain_agent_dispatch(self):
        joint = small_joint()
        agent = SyntheticChainAgent(joint)
        assert agent.backend_kind == "synthetic"
        sentence = agent.answer("S", "warm", np.random.default_rng(0))
        assert sentence in joint.sentences
        tone = agent.answer("T", "s one", np.random.default_rng(0))
        assert tone in joint.tones
        with pytest.raises(InputError):
            agent.answer("X", "warm", np.random.default_rng(0))


class TestTemplates:
    def test_all_templates_load(self):
        templates = load_templates()
        assert set(templates) == {
            "elicit_tone", "elicit_sentence", "rate_fit",
            "rate_similarity", "rate_feature",
        }
        for template in templates.values():
            assert template.text.strip()

    def test_render_fills_every_slot(self):
        templates = load_templates()
        rendered = render_prompt(templates["rate_fit"],
                                 tone="joyful", sentence="We won the game today")
        assert "joyful" in rendered
        assert "We won the game today" in rendered
        assert "{" not in rendered

    def test_render_missing_slot(self):
        templates = load_templates()
        with pytest.raises(InputError):
            render_prompt(templates["rate_fit"], tone="joyful")

    def test_declared_slots_must_match_text(self):
        with pytest.raises(ConfigError):
            PromptTemplate("bad", "uses {foo}", ("bar",), "sentence")
        with pytest.raises(ConfigError):
            PromptTemplate("bad", "no slots here", ("foo",), "sentence")

    def test_unknown_format_rejected(self):
        with pytest.raises(ConfigError):
            PromptTemplate("bad", "text {x}", ("x",), "haiku")

    def test_features_ship_with_definitions(self):
        features = load_features()
        assert [f["id"] for f in features] == list(FEATURE_IDS)
        for feature in features:
            assert feature["label"]
            assert feature["definition"].strip()


class TestParseResponse:
    @pytest.mark.parametrize("fmt,text,expected", [
        ("sentence", "  That is lovely to hear.  ", "That is lovely to hear."),
        ("adjective", "Grateful.", "grateful"),
        ("adjective", '"matter-of-fact"', "matter-of-fact"),
        ("adjective", "  HAPPY\n", "happy"),
        ("integer_1_to_5", "4", 4),
        ("integer_1_to_5", "I would say 3 out of 5.", 3),
        ("number_0_to_1", "0.75", 0.75),
        ("number_0_to_1", "similarity: 1", 1.0),
        ("number_0_to_1", "0", 0.0),
    ])
    def test_accepts(self, fmt, text, expected):
        assert parse_response(fmt, text) == expected

    @pytest.mark.parametrize("fmt,text", [
        ("sentence", "   "),
        ("adjective", "two words"),
        ("adjective", "happy2"),
        ("adjective", ""),
        ("integer_1_to_5", "no rating here"),
        ("integer_1_to_5", "0"),
        ("integer_1_to_5", "6"),
        ("number_0_to_1", "nothing"),
        ("number_0_to_1", "1.2"),
        ("number_0_to_1", "-0.5"),
    ])
    def test_rejects(self, fmt, text):
        with pytest.raises(ParseError):
            parse_response(fmt, text)

    def test_unknown_format(self):
        with pytest.raises(ConfigError):
            parse_response("haiku", "anything")

    @given(st.from_regex(r"[a-z](?:[a-z-]{0,9}[a-z])?", fullmatch=True),
           st.sampled_from(["", ".", "!", '"', "  ", "\n"]))
    def test_adjective_survives_wrapping(self, word, wrap):
        # edge hyphens are stripped as punctuation, so words never carry them
        assert parse_response("adjective", wrap + word + wrap) == word

    @given(st.integers(min_value=1, max_value=5))
    def test_integer_roundtrip(self, value):
        assert parse_response("integer_1_to_5", str(value)) == value


# --------------------------------------------------------------------------
# LLM client with a local stub endpoint


class StubHandler(BaseHTTPRequestHandler):
    script = []  # list of (status, body-dict-or-str) consumed per request
    seen = []

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        body = json.loads(self.rfile.read(length)) if length else {}
        type(self).seen.append({"path": self.path, "body": body,
                                "auth": self.headers.get("Authorization")})
        status, payload = type(self).script.pop(0) if type(self).script else (200, None)
        if payload is None:
            payload = {"choices": [{"message": {"content": "ok"}}]}
        data = payload if isinstance(payload, str) else json.dumps(payload)
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.end_headers()
        self.wfile.write(data.encode())

    def log_message(self, *args):
        pass


@pytest.fixture()
def stub_server():
    StubHandler.script = []
    StubHandler.seen = []
    server = HTTPServer(("127.0.0.1", 0), StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}/v1/chat/completions"
    server.shutdown()
    thread.join(timeout=5)


@pytest.fixture(autouse=True)
def no_backoff_sleep(monkeypatch):
    monkeypatch.setattr("tonelab.agents.time.sleep", lambda s: None)


def make_params(endpoint, **kw):
    return LlmParams(model="stub-model", endpoint=endpoint, **kw)


class TestLlmComplete:
    def test_happy_path_and_auth_header(self, stub_server, monkeypatch):
        monkeypatch.setenv("TONELAB_API_KEY", "sk-test")
        StubHandler.script = [(200, {"choices": [{"message": {"content": "polite"}}]})]
        out = llm_complete(make_params(stub_server), "what tone?")
        assert out == "polite"
        assert StubHandler.seen[0]["auth"] == "Bearer sk-test"
        assert StubHandler.seen[0]["body"]["model"] == "stub-model"
        assert StubHandler.seen[0]["body"]["messages"][0]["content"] == "what tone?"

    def test_retries_transient_500(self, stub_server):
        StubHandler.script = [
            (500, {"error": "boom"}),
            (429, {"error": "slow down"}),
            (200, {"choices": [{"message": {"content": "fine"}}]}),
        ]
        assert llm_complete(make_params(stub_server), "p") == "fine"
        assert len(StubHandler.seen) == 3

    def test_exhausted_retries(self, stub_server):
        StubHandler.script = [(500, {})] * 10
        with pytest.raises(TransportError):
            llm_complete(make_params(stub_server, max_retries=2), "p")
        assert len(StubHandler.seen) == 3

    def test_auth_failure_is_terminal(self, stub_server):
        StubHandler.script = [(401, {"error": "nope"}), (200, None)]
        with pytest.raises(AuthError):
            llm_complete(make_params(stub_server), "p")
        assert len(StubHandler.seen) == 1

    def test_unexpected_status_is_transport_error(self, stub_server):
        StubHandler.script = [(404, {"error": "missing"})]
        with pytest.raises(TransportError):
            llm_complete(make_params(stub_server), "p")

    def test_malformed_payload(self, stub_server):
        StubHandler.script = [(200, {"choices": []})]
        with pytest.raises(MalformedResponseError):
            llm_complete(make_params(stub_server), "p")

    def test_connection_refused_retries_then_fails(self):
        params = make_params("http://127.0.0.1:9/nothing", max_retries=1,
                             timeout_seconds=0.2)
        with pytest.raises(TransportError):
            llm_complete(params, "p")

    def test_exchange_log_written(self, stub_server, tmp_path):
        StubHandler.script = [(200, {"choices": [{"message": {"content": "hi"}}]})]
        log = tmp_path / "exchange.jsonl"
        llm_complete(make_params(stub_server), "p", log_path=str(log))
        records = [json.loads(line) for line in log.read_text().splitlines()]
        assert records[-1]["status"] == 200
        assert records[-1]["response"] == "hi"

    def test_chain_agent_parses_completion(self, stub_server):
        StubHandler.script = [(200, {"choices": [{"message": {"content": " Warm! "}}]})]
        agent = LlmChainAgent(make_params(stub_server))
        assert agent.answer("T", "The meeting went better than expected today") == "warm"
        prompt = StubHandler.seen[0]["body"]["messages"][0]["content"]
        assert "The meeting went better than expected today" in prompt


class TestSyntheticJudges:
    def test_rater_scores_dominant_tone_high(self):
        joint = small_joint()
        rater = SyntheticRater(joint, noise_sd=0.0)
        rng = np.random.default_rng(0)
        # warm dominates "s one" (0.30 vs 0.05)
        assert rater.rate("warm", "s one", rng) == 5
        assert rater.rate("cold", "s one", rng) < 5

    def test_similarity_self_is_max(self):
        joint = small_joint()
        judge = SyntheticSimilarityJudge(joint, noise_sd=0.0)
        rng = np.random.default_rng(0)
        assert judge.judge("warm", "warm", rng) == 5
        assert 1 <= judge.judge("warm", "cold", rng) <= 5

    def test_feature_rater_is_stable_and_strict(self):
        joint = small_joint()
        rater = SyntheticFeatureRater(joint, seed=5, noise_sd=0.0)
        rng = np.random.default_rng(0)
        first = rater.rate("warm", "aroused", rng)
        second = rater.rate("warm", "aroused", rng)
        assert first == second
        with pytest.raises(InputError):
            rater.rate("warm", "no-such-feature", rng)

    def test_ratings_always_in_range(self):
        joint = small_joint()
        rater = SyntheticRater(joint, noise_sd=2.0)
        rng = np.random.default_rng(1)
        values = {rater.rate("warm", "s two", rng) for _ in range(200)}
        assert values <= {1, 2, 3, 4, 5}
