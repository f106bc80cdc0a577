"""Provider contracts: token layout, synthetic determinism, HTTP wire client."""

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest

from privi.errors import ContractViolation, ProviderError, SchemaError
from privi.frames import Keyframe
from privi.http_client import HttpInferenceClient
from privi.metrics import roc_auc
from privi.providers import (
    SyntheticDetector,
    SyntheticEmbedder,
    SyntheticFeatureProvider,
    TokenFeatures,
    tokenize_layout,
)
from privi.rng import make_rng


def test_tokenize_layout_standard_clip():
    assert tokenize_layout(16, 224, 224, 2, 16) == 1568


def test_tokenize_layout_single_token():
    assert tokenize_layout(2, 16, 16, 2, 16) == 1


def test_tokenize_layout_half_width():
    assert tokenize_layout(16, 224, 112, 2, 16) == 784


def test_tokenize_layout_divisibility_contract():
    with pytest.raises(ContractViolation):
        tokenize_layout(15, 224, 224, 2, 16)
    with pytest.raises(ContractViolation):
        tokenize_layout(16, 225, 224, 2, 16)


def test_token_features_validation():
    with pytest.raises(ContractViolation):
        TokenFeatures(tokens=np.zeros(5))
    with pytest.raises(ContractViolation):
        TokenFeatures(tokens=np.full((2, 2), np.nan))


def frame(meta, value=128):
    return Keyframe(image=np.full((20, 30, 3), value, dtype=np.uint8),
                    video_ref="v", time_s=1.5, meta=meta)


def test_synthetic_embedder_zero_noise_hits_centroid():
    centroid = np.arange(8.0)
    emb = SyntheticEmbedder(seed=1, dim=8, class_centroids={"rel": centroid}, noise_sigma=0.0)
    np.testing.assert_allclose(emb.embed(frame({"embed_class": "rel"})), centroid)


def test_synthetic_embedder_deterministic():
    emb = SyntheticEmbedder(seed=2, dim=16, class_centroids={"a": np.zeros(16)}, noise_sigma=1.0)
    v1 = emb.embed(frame({"embed_class": "a"}))
    v2 = emb.embed(frame({"embed_class": "a"}))
    np.testing.assert_array_equal(v1, v2)


def test_synthetic_embedder_unknown_label_rejected():
    emb = SyntheticEmbedder(seed=2, dim=4, class_centroids={"a": np.zeros(4)})
    with pytest.raises(ContractViolation):
        emb.embed(frame({}))


def test_eight_sigma_centroids_give_high_auc():
    rng = make_rng(60)
    dim = 64
    direction = rng.normal(size=dim)
    direction *= 8.0 / (2.0 * np.linalg.norm(direction))
    emb = SyntheticEmbedder(seed=3, dim=dim,
                            class_centroids={"rel": direction, "irr": -direction},
                            noise_sigma=1.0)
    scores, truth = [], []
    w = direction / np.linalg.norm(direction)
    for i in range(200):
        label = "rel" if i % 2 == 0 else "irr"
        kf = Keyframe(image=np.zeros((4, 4, 3), np.uint8), video_ref=f"v{i}",
                      time_s=0.0, meta={"embed_class": label})
        scores.append(float(emb.embed(kf) @ w))
        truth.append(int(label == "rel"))
    assert roc_auc(scores, truth) >= 0.99


def test_synthetic_detector_meta_driven():
    det = SyntheticDetector(seed=4)
    assert det.detect(frame({"has_primate": False}), "primate") == []
    boxes = det.detect(frame({"has_primate": True}), "primate")
    assert len(boxes) == 1
    b = boxes[0]
    assert 0 <= b.x1 < b.x2 <= 30 and 0 <= b.y1 < b.y2 <= 20
    explicit = det.detect(frame({"boxes": [(1, 2, 5, 6, 0.7, "baboon")]}), "primate")
    assert explicit[0].label == "baboon"


def test_synthetic_features_class_signal_and_determinism():
    fp = SyntheticFeatureProvider(seed=5, dim=32, n_tokens=8, n_classes=3)
    f1 = fp.features("clip:0:1", view=0)
    f2 = fp.features("clip:0:1", view=0)
    np.testing.assert_array_equal(f1.tokens, f2.tokens)
    f_other_view = fp.features("clip:0:1", view=1)
    assert not np.array_equal(f1.tokens, f_other_view.tokens)
    # mean token carries the class signal
    m1 = fp.features("a:1", view=0).tokens.mean(axis=0)
    m2 = fp.features("b:1", view=0).tokens.mean(axis=0)
    assert np.linalg.norm(m1 - fp.class_means[1]) < np.linalg.norm(m1 - fp.class_means[2])
    assert np.linalg.norm(m2 - fp.class_means[1]) < np.linalg.norm(m2 - fp.class_means[0])


# ---------------------------------------------------------------------------
# HTTP client against a scripted in-process server


class _Script:
    def __init__(self):
        self.responses = {}
        self.failures_left = {}

    def set(self, path, body, fail_first=0):
        self.responses[path] = body
        self.failures_left[path] = fail_first


def _make_server(script: _Script):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args):
            pass

        def _respond(self):
            path = self.path
            if script.failures_left.get(path, 0) > 0:
                script.failures_left[path] -= 1
                self.send_response(503)
                self.end_headers()
                return
            body = script.responses.get(path)
            if body is None:
                self.send_response(404)
                self.end_headers()
                return
            data = json.dumps(body).encode()
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def do_GET(self):
            self._respond()

        def do_POST(self):
            length = int(self.headers.get("Content-Length", 0))
            self.rfile.read(length)
            self._respond()

    server = HTTPServer(("127.0.0.1", 0), Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server


@pytest.fixture()
def http_script():
    script = _Script()
    script.set("/health", {"dim": 4, "layout": None})
    server = _make_server(script)
    base = f"http://127.0.0.1:{server.server_port}"
    yield script, base
    server.shutdown()


def test_http_embed_echoes_vector(http_script):
    script, base = http_script
    script.set("/embed", {"embedding": [1.0, 2.0, 3.0, 4.0]})
    client = HttpInferenceClient(base, retries=0)
    vec = client.embed(frame({}))
    np.testing.assert_allclose(vec, [1, 2, 3, 4])


def test_http_retries_on_503_then_succeeds(http_script):
    script, base = http_script
    script.set("/embed", {"embedding": [0.0, 0.0, 0.0, 0.0]}, fail_first=2)
    client = HttpInferenceClient(base, retries=2, backoff_s=0.01)
    vec = client.embed(frame({}))
    assert vec.shape == (4,)


def test_http_gives_up_after_retries(http_script):
    script, base = http_script
    script.set("/embed", {"embedding": [0.0] * 4}, fail_first=5)
    client = HttpInferenceClient(base, retries=1, backoff_s=0.01)
    with pytest.raises(ProviderError):
        client.embed(frame({}))


def test_http_box_outside_frame_is_schema_error(http_script):
    script, base = http_script
    script.set("/detect", {"boxes": [{"x1": -5, "y1": 0, "x2": 10, "y2": 10, "score": 0.9, "label": "x"}]})
    client = HttpInferenceClient(base, retries=0)
    with pytest.raises(SchemaError):
        client.detect(frame({}), "primate")


def test_http_wrong_dim_embedding_is_schema_error(http_script):
    script, base = http_script
    script.set("/embed", {"embedding": [1.0, 2.0]})
    client = HttpInferenceClient(base, retries=0)
    with pytest.raises(SchemaError):
        client.embed(frame({}))
