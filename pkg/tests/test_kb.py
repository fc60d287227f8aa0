import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import httpx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semlab.fuzzyctl import FuzzyParams, PromptDirective, directive_for
from semlab.kb import (Background, DiskCache, IdentityKb, KbConfigError, LlmClientConfig, LlmKb, MockKb, TemplateError,
                       content_words, render_prompt, word_count)
from semlab.kb.mock import target_word_count
from semlab.textcore import demo_corpus_path, load_corpus

TABLE_SENTENCE = "A young child, with a beaming smile, eagerly slides down the slide."
ALICE = Background("alice", ("Alice has given birth", "Alice's children seldom listen to her"))


@pytest.fixture(scope="module")
def corpus():
    return load_corpus(demo_corpus_path())


@pytest.fixture()
def kb(corpus):
    return MockKb(corpus.texts)


# ---------------------------------------------------------------- mock backend

def test_disambiguate_example(kb):
    out = kb.disambiguate("I can't bear children; they seldom listen to me.", Background("a", ("Alice has given birth",)))
    assert out == "Alice can't tolerate the presence of children; they seldom listen to her."


def test_disambiguate_no_match_unchanged(kb):
    assert kb.disambiguate("The weather is nice.", ALICE) == "The weather is nice."


def test_correct_example(kb):
    noisy = "Alice can't tolerate the presence of children; they always listen to her."
    assert kb.correct(noisy, ALICE) == "I can't tolerate the presence of children; they barely listen to me."


def test_correct_no_unk_unchanged(kb):
    assert kb.correct("see you at the station", ALICE) == "see you at the station"


def test_correct_unk_uses_bigrams():
    kb = MockKb(["good morning everyone", "good morning", "nice morning"])
    assert kb.correct("<unk> morning", Background("u")) == "good morning"


def test_kb_encode_table_low_and_high(kb):
    low = directive_for(0.0, FuzzyParams())
    assert low.snr_class == "Low"
    assert kb.kb_encode(TABLE_SENTENCE, low) == "A young child, smiling, slides down the slide."
    high = directive_for(25.0, FuzzyParams())
    assert kb.kb_encode(TABLE_SENTENCE, high) == TABLE_SENTENCE


def test_compress_priority_hand_oracle(kb):
    # the (stopword) then very (adverb) go first: 6 words -> round(0.67 * 6) = 4
    assert target_word_count(6, 0.67) == 4
    assert kb.compress("the very big red dog ran", 4) == "big red dog ran"


def test_kb_decode_examples(kb):
    assert kb.kb_decode("a young child smiling slides down the slide") == "A young child smiling slides down the slide."
    assert kb.kb_decode("") == ""


def test_kb_encode_flags_unreachable_ratio(kb):
    d = PromptDirective("Low", (0.7, 0.8), 0.75)
    out = kb.kb_encode("hello", d)
    assert word_count(out) == 1
    assert kb.last.op == "kb_encode"


@pytest.mark.parametrize("snr", [-5.0, 0.0, 5.0, 10.0])
def test_ratio_contract_over_corpus(corpus, snr):
    kb = MockKb(corpus.texts)
    d = directive_for(snr, FuzzyParams())
    lo, hi = d.length_ratio_range
    for text in corpus.texts:
        n = word_count(text)
        if n < 8:
            continue
        r = word_count(kb.kb_encode(text, d)) / n
        assert lo - 0.05 - 1e-9 <= r <= hi + 0.05 + 1e-9, (text, r)


@pytest.mark.parametrize("snr", [-5.0, 5.0, 12.0])
def test_decode_encode_keeps_content_words(corpus, snr):
    kb = MockKb(corpus.texts)
    d = directive_for(snr, FuzzyParams())
    for text in corpus.texts:
        assert content_words(text) <= content_words(kb.kb_decode(kb.kb_encode(text, d)))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.sampled_from("the a very big red dog cat ran quickly home to see , .".split(" ")), min_size=1,
                max_size=14).map(" ".join), st.floats(-10, 30))
def test_mock_is_pure(text, snr):
    d = directive_for(snr, FuzzyParams())
    a, b = MockKb(["the dog ran home"]), MockKb(["the dog ran home"])
    assert a.kb_encode(text, d) == b.kb_encode(text, d)
    assert a.correct(text, ALICE) == b.correct(text, ALICE)


@given(st.text(max_size=40))
def test_kb_decode_never_shrinks(text):
    out = MockKb().kb_decode(text)
    assert word_count(out) >= word_count(text)


class Boom(MockKb):
    def _run(self, op, prompt, text, flags, **kw):
        raise RuntimeError("backend down")


def test_failure_is_pass_through():
    kb = Boom()
    d = directive_for(0.0, FuzzyParams())
    for call in (lambda: kb.disambiguate("x y z", ALICE), lambda: kb.correct("x y z", ALICE),
                 lambda: kb.kb_encode("x y z", d), lambda: kb.kb_decode("x y z")):
        assert call() == "x y z"
        assert kb.last.pass_through and "backend down" in kb.last.flags[0]


def test_identity_kb_returns_input():
    kb = IdentityKb()
    assert kb.kb_encode(TABLE_SENTENCE, directive_for(-5, FuzzyParams())) == TABLE_SENTENCE
    assert kb.correct("abc", ALICE) == "abc"


def test_audit_log_jsonl(tmp_path, corpus):
    log = tmp_path / "audit.jsonl"
    kb = MockKb(corpus.texts, audit_path=log)
    kb.disambiguate("hello", ALICE)
    kb.kb_decode("hello")
    rows = [json.loads(line) for line in log.read_text().splitlines()]
    assert [r["op"] for r in rows] == ["disambiguate", "kb_decode"]
    assert {"prompt", "response", "latency_ms", "backend", "pass_through"} <= set(rows[0])


def test_disk_cache_hits(tmp_path):
    cache = DiskCache(tmp_path / "cache.jsonl")
    kb = MockKb(["a b"], cache=cache)
    d = directive_for(0.0, FuzzyParams())
    first = kb.kb_encode(TABLE_SENTENCE, d)
    second = kb.kb_encode(TABLE_SENTENCE, d)
    assert first == second and kb.last.cached
    reopened = DiskCache(tmp_path / "cache.jsonl")
    assert len(reopened) == 1


# ---------------------------------------------------------------- templates

def test_render_encode_template():
    out = render_prompt("kb_encode", {"text": "hello there", "range_lo": 70, "range_hi": 80})
    assert "hello there" in out and "70%" in out and "80%" in out
    assert out == render_prompt("kb_encode", {"text": "hello there", "range_lo": 70, "range_hi": 80})


def test_render_errors():
    with pytest.raises(TemplateError):
        render_prompt("nope", {})
    with pytest.raises(TemplateError):
        render_prompt("kb_encode", {"text": "x"})


# ---------------------------------------------------------------- LLM client

def _client(handler):
    return httpx.Client(transport=httpx.MockTransport(handler))


def _reply(text):
    return httpx.Response(200, json={"choices": [{"message": {"content": text}}]})


def test_llm_config_validation(monkeypatch):
    with pytest.raises(KbConfigError):
        LlmClientConfig(timeout_s=0)
    with pytest.raises(KbConfigError):
        LlmClientConfig(max_retries=-1)
    monkeypatch.delenv("SEMLAB_TEST_KEY", raising=False)
    with pytest.raises(KbConfigError):
        LlmKb(LlmClientConfig(api_key_env="SEMLAB_TEST_KEY"))


def test_llm_request_shape(monkeypatch):
    monkeypatch.setenv("SEMLAB_TEST_KEY", "sekret")
    seen = {}

    def handler(request):
        seen["auth"] = request.headers["authorization"]
        seen["body"] = json.loads(request.content)
        return _reply("  A young child smiling slides down the slide.  ")

    kb = LlmKb(LlmClientConfig(endpoint="http://kb.test/v1", model="m1", api_key_env="SEMLAB_TEST_KEY"),
               client=_client(handler))
    out = kb.kb_decode("young child smiling slides slide", "playground")
    assert out == "A young child smiling slides down the slide."
    assert seen["auth"] == "Bearer sekret"
    assert seen["body"]["model"] == "m1"
    assert seen["body"]["messages"][0]["role"] == "user"
    assert "young child smiling slides slide" in seen["body"]["messages"][0]["content"]
    assert content_words("young child smiling slides slide") <= content_words(out)


def test_llm_custom_field_paths():
    def handler(request):
        body = json.loads(request.content)
        assert body["params"]["engine"] == "x" and body["input"]["msgs"][0]["content"]
        return httpx.Response(200, json={"output": {"text": "ok"}})

    cfg = LlmClientConfig(endpoint="http://kb.test", model="x", require_api_key=False, model_field="params.engine",
                          messages_field="input.msgs", response_path="output.text")
    assert LlmKb(cfg, client=_client(handler)).correct("in", ALICE) == "ok"


def test_llm_retries_then_succeeds():
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(503) if len(calls) < 3 else _reply("fixed")

    cfg = LlmClientConfig(endpoint="http://kb.test", require_api_key=False, max_retries=2, retry_backoff_s=0.0)
    assert LlmKb(cfg, client=_client(handler)).correct("broken", ALICE) == "fixed"
    assert len(calls) == 3


def test_llm_failure_passes_through():
    def handler(request):
        raise httpx.ConnectError("unreachable")

    cfg = LlmClientConfig(endpoint="http://kb.test", require_api_key=False, max_retries=1, retry_backoff_s=0.0)
    kb = LlmKb(cfg, client=_client(handler))
    assert kb.disambiguate("I can't bear children.", ALICE) == "I can't bear children."
    assert kb.last.pass_through


class _Handler(BaseHTTPRequestHandler):
    def do_POST(self):  # noqa: N802 - http.server API
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        prompt = body["messages"][0]["content"]
        text = prompt.rsplit("\n", 1)[-1]
        payload = json.dumps({"choices": [{"message": {"content": text.upper()}}]}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


def test_llm_against_local_http_server():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        cfg = LlmClientConfig(endpoint=f"http://127.0.0.1:{server.server_port}/v1/chat/completions",
                              require_api_key=False, timeout_s=5)
        kb = LlmKb(cfg)
        assert kb.kb_decode("hello world") == "HELLO WORLD"
        kb.close()
    finally:
        server.shutdown()
