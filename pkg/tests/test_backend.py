import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import httpx
import pytest

from llmfactor.backend import (
    BackendConfig,
    CachingBackend,
    MockBackend,
    RemoteBackend,
    ResponseCache,
    mock_from_rules,
    prompt_hash,
    replay_backend,
)
from llmfactor.errors import BackendError, ConfigError


class Stub:
    """Tiny chat-completion server driven by a list of scripted statuses."""

    def __init__(self, script=(), delay=0.0):
        self.script = list(script)
        self.delay = delay
        self.requests = []
        self.in_flight = 0
        self.peak = 0
        self.lock = threading.Lock()
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *a):
                pass

            def do_POST(self):
                body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
                with stub.lock:
                    stub.requests.append((dict(self.headers), body))
                    status = stub.script.pop(0) if stub.script else 200
                    stub.in_flight += 1
                    stub.peak = max(stub.peak, stub.in_flight)
                try:
                    if stub.delay:
                        time.sleep(stub.delay)
                    if status == 200:
                        out = json.dumps({"choices": [{"message": {"content": "echo: " + body["messages"][-1]["content"]}}],
                                          "usage": {"prompt_tokens": 7, "completion_tokens": 3}}).encode()
                    else:
                        out = b'{"error": "nope"}'
                    self.send_response(status)
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(out)))
                    self.end_headers()
                    self.wfile.write(out)
                except (BrokenPipeError, ConnectionResetError):
                    pass  # the client gave up (timeout tests)
                finally:
                    with stub.lock:
                        stub.in_flight -= 1

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.server.server_address[1]}/v1/chat/completions"
        threading.Thread(target=self.server.serve_forever, daemon=True).start()

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def stub():
    made = []

    def make(script=(), delay=0.0):
        s = Stub(script, delay)
        made.append(s)
        return s

    yield make
    for s in made:
        s.close()


def remote(url, **kw):
    sleeps = []
    cfg = BackendConfig(kind="remote", model_id="gpt-test", endpoint_url=url, timeout_s=kw.pop("timeout_s", 5.0), **kw)
    return RemoteBackend(cfg, api_key="k", sleep=sleeps.append), sleeps


def test_payload_shape(stub):
    s = stub()
    b, _ = remote(s.url)
    r = b.complete("You are a financial analysis assistant.", "hello")
    assert r.text == "echo: hello" and r.attempt == 1 and r.prompt_tokens == 7 and r.completion_tokens == 3
    headers, body = s.requests[0]
    assert body == {"model": "gpt-test", "temperature": 0.0, "messages": [
        {"role": "system", "content": "You are a financial analysis assistant."},
        {"role": "user", "content": "hello"}]}
    assert headers["Authorization"] == "Bearer k"


def test_retries_after_rate_limit(stub):
    s = stub([429, 429, 200])
    b, sleeps = remote(s.url)
    r = b.complete("", "x")
    assert r.attempt == 3 and r.text == "echo: x"
    assert len(sleeps) == 2
    # exponential backoff with jitter in [base, 1.25 * base]
    assert 1.0 <= sleeps[0] <= 1.25 and 2.0 <= sleeps[1] <= 2.5


def test_gives_up_after_max_retries(stub):
    s = stub([503] * 10)
    b, sleeps = remote(s.url, max_retries=3)
    with pytest.raises(BackendError) as ei:
        b.complete("", "x")
    assert ei.value.status == 503 and ei.value.attempts == 4
    assert len(s.requests) == 4 and len(sleeps) == 3


def test_non_transient_fails_fast(stub):
    s = stub([401])
    b, sleeps = remote(s.url)
    with pytest.raises(BackendError) as ei:
        b.complete("", "x")
    assert ei.value.status == 401 and len(s.requests) == 1 and sleeps == []


def test_unreachable_endpoint():
    b, sleeps = remote("http://127.0.0.1:9/v1/chat/completions", max_retries=2)
    with pytest.raises(BackendError) as ei:
        b.complete("", "x")
    assert ei.value.attempts == 3 and ei.value.status is None and len(sleeps) == 2


def test_timeout_is_retried(stub):
    s = stub(delay=0.5)
    b, _ = remote(s.url, timeout_s=0.05, max_retries=1)
    with pytest.raises(BackendError) as ei:
        b.complete("", "x")
    assert "timeout" in str(ei.value)


class CountingClient(httpx.Client):
    """Tracks requests in flight from the caller's side of the socket."""

    def __init__(self, **kw):
        super().__init__(**kw)
        self.in_flight = 0
        self.peak = 0
        self.lock = threading.Lock()

    def post(self, *a, **kw):
        with self.lock:
            self.in_flight += 1
            self.peak = max(self.peak, self.in_flight)
        try:
            return super().post(*a, **kw)
        finally:
            with self.lock:
                self.in_flight -= 1


def test_concurrency_cap(stub):
    s = stub(delay=0.05)
    client = CountingClient(timeout=5.0)
    cfg = BackendConfig(kind="remote", model_id="m", endpoint_url=s.url, max_concurrent_requests=3)
    b = RemoteBackend(cfg, api_key="", client=client)
    threads = [threading.Thread(target=b.complete, args=("", f"p{i}")) for i in range(12)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(s.requests) == 12
    assert client.peak == 3  # saturated, never above the cap


def test_retry_after_header_is_honoured():
    calls = []

    def handler(request):
        calls.append(1)
        if len(calls) == 1:
            return httpx.Response(429, headers={"Retry-After": "7"})
        return httpx.Response(200, json={"choices": [{"message": {"content": "ok"}}]})

    sleeps = []
    cfg = BackendConfig(kind="remote", model_id="m", endpoint_url="http://x/v1")
    b = RemoteBackend(cfg, api_key="", client=httpx.Client(transport=httpx.MockTransport(handler)), sleep=sleeps.append)
    assert b.complete("", "p").text == "ok"
    assert sleeps == [7.0]


def test_config_validation():
    with pytest.raises(ConfigError):
        BackendConfig(kind="gpt")
    with pytest.raises(ConfigError):
        BackendConfig(max_concurrent_requests=0)
    assert BackendConfig().max_concurrent_requests == 5 and BackendConfig().temperature == 0


# --------------------------------------------------------------------------- mock

def test_mock_rules_and_determinism():
    m = mock_from_rules([(r"^rel", "competitor"), (lambda p: "price" in p, lambda p: p.upper()), (None, "rise")])
    assert m.complete("", "relation?").text == "competitor"
    assert m.complete("", "the price").text == "THE PRICE"
    assert [m.complete("", "zzz").text for _ in range(3)] == ["rise"] * 3
    assert m.calls == 5


def test_mock_requires_default():
    with pytest.raises(ConfigError):
        MockBackend([(r"x", "y")])


# --------------------------------------------------------------------------- cache / replay

def test_cache_then_replay_offline(tmp_path):
    log = tmp_path / "replay.jsonl"
    inner = mock_from_rules([(None, lambda p: f"answer to {p}")], model_id="m1")
    live = CachingBackend(inner, ResponseCache(log))
    first = [live.complete("sys", f"q{i}").text for i in range(5)]
    assert live.complete("sys", "q0").cached and inner.calls == 5

    rows = [json.loads(l) for l in log.read_text().splitlines()]
    assert len(rows) == 5 and set(rows[0]) == {"prompt_hash", "model_id", "response"}
    assert rows[0]["prompt_hash"] == prompt_hash("sys", "q0")

    offline = replay_backend(log, "m1")
    assert [offline.complete("sys", f"q{i}").text for i in range(5)] == first
    with pytest.raises(BackendError):
        offline.complete("sys", "never asked")
    # keyed by model too
    with pytest.raises(BackendError):
        replay_backend(log, "m2").complete("sys", "q0")


def test_cache_survives_torn_line(tmp_path):
    log = tmp_path / "replay.jsonl"
    c = ResponseCache(log)
    c.put("m", "h1", "a")
    with open(log, "a") as fh:
        fh.write('{"prompt_hash": "h2", "mod')
    assert ResponseCache(log).get("m", "h1") == "a" and len(ResponseCache(log)) == 1


def test_prompt_hash_separates_fields():
    assert prompt_hash("ab", "c") != prompt_hash("a", "bc")


def test_compact_sorts_log(tmp_path):
    log = tmp_path / "replay.jsonl"
    c = ResponseCache(log)
    for key in ("h3", "h1", "h2"):
        c.put("m", key, key.upper())
    c.compact()
    assert [json.loads(l)["prompt_hash"] for l in log.read_text().splitlines()] == ["h1", "h2", "h3"]
    assert ResponseCache(log).get("m", "h2") == "H2"
