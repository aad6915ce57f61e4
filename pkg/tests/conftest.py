import json
import threading
from pathlib import Path
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest

from ddmroute.config import load_config
from ddmroute.engine import SourceItem
from ddmroute.providers import OfflineRecord, PassthroughScorer, provider_set_from_record

A, B = "baseline_a", "baseline_b"
SEVEN = [f"prompt:{i}" for i in range(1, 8)]
CONFIGS = Path(__file__).resolve().parent.parent / "demos" / "configs"


def scenario(name, **overrides):
    """ExperimentConfig for one of the demo scenario files."""
    return load_config(CONFIGS / f"{name}.json").experiment_config(**overrides)


def make_episode(score_a, score_b, prompt_scores, prompt_ids=None, source_id="s0"):
    """Providers + scorer serving fixed scores; prompt ids default to prompt:1..n."""
    if prompt_ids is None:
        prompt_ids = [f"prompt:{i}" for i in range(1, len(prompt_scores) + 1)]
    cands = {A: (f"text-{A}", score_a), B: (f"text-{B}", score_b)}
    for pid, s in zip(prompt_ids, prompt_scores):
        cands[pid] = (f"text-{pid}", s)
    rec = OfflineRecord(source_id, "source text", cands)
    providers = provider_set_from_record(rec, A, B, prompt_ids)
    return SourceItem(source_id, "source text"), providers, PassthroughScorer(), list(prompt_ids)


def random_scores(rng, n_prompts=7, spread=None):
    """Scores for one fuzz episode: a per-episode centre and spread so that all
    three terminal cases occur with reasonable frequency."""
    centre = rng.uniform(0.3, 0.9)
    if spread is None:
        spread = rng.choice([0.005, 0.02, 0.05, 0.1])
    s = centre + spread * rng.standard_normal(2 + n_prompts)
    return float(s[0]), float(s[1]), [float(x) for x in s[2:]]


@pytest.fixture
def fuzz_rng():
    return np.random.default_rng(20240611)


class _Stub(BaseHTTPRequestHandler):
    routes = {}

    def do_POST(self):
        n = int(self.headers.get("Content-Length", 0))
        body = json.loads(self.rfile.read(n) or b"{}")
        handler = self.routes.get(self.path)
        if handler is None:
            self.send_response(404)
            self.end_headers()
            return
        status, payload = handler(body)
        raw = payload if isinstance(payload, bytes) else json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(raw)))
        self.end_headers()
        self.wfile.write(raw)

    def log_message(self, *args):
        pass


@pytest.fixture
def stub_server():
    """Local HTTP server; tests register ``path -> handler(body) -> (status, payload)``."""
    routes = {}
    handler = type("Handler", (_Stub,), {"routes": routes})
    server = ThreadingHTTPServer(("127.0.0.1", 0), handler)
    t = threading.Thread(target=server.serve_forever, daemon=True)
    t.start()
    server.routes = routes
    server.url = f"http://127.0.0.1:{server.server_address[1]}"
    yield server
    server.shutdown()
    server.server_close()
