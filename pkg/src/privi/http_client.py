"""JSON-over-HTTP client for real inference servers.

Wire protocol:
  GET  {base}/health            -> 200 {dim, layout}
  POST {base}/embed             {image, width, height} -> {embedding}
  POST {base}/detect            {image, width, height, prompt} -> {boxes}
  POST {base}/features          {frames, crop} -> {tokens, n, d}

Images travel as base64-encoded packed RGB8. 5xx responses are retried with
exponential backoff; schema violations are hard errors carrying a payload
excerpt. Concurrent use is bounded by a semaphore.
"""

from __future__ import annotations

import base64
import threading
import time

import numpy as np
import requests

from .boxes import DetectionBox
from .errors import ProviderError, SchemaError
from .frames import Keyframe
from .providers import DetectorProvider, EmbeddingProvider, FeatureProvider, TokenFeatures, TokenLayout


def _encode_image(image: np.ndarray) -> dict:
    arr = np.ascontiguousarray(image, dtype=np.uint8)
    return {
        "image": base64.b64encode(arr.tobytes()).decode("ascii"),
        "width": int(arr.shape[1]),
        "height": int(arr.shape[0]),
    }


class HttpInferenceClient(EmbeddingProvider, DetectorProvider, FeatureProvider):
    """One client speaks all three provider roles of a model server."""

    def __init__(self, base_url: str, timeout: float = 30.0, retries: int = 3,
                 max_in_flight: int = 8, backoff_s: float = 0.2,
                 session: requests.Session | None = None):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.retries = retries
        self.backoff_s = backoff_s
        self._sem = threading.Semaphore(max_in_flight)
        self._session = session or requests.Session()
        health = self._request("GET", "/health")
        self.dim = int(health.get("dim", 0))
        layout = health.get("layout") or {}
        self.layout = TokenLayout(**layout) if layout else TokenLayout()

    def _request(self, method: str, path: str, payload: dict | None = None) -> dict:
        url = self.base_url + path
        last_exc: Exception | None = None
        with self._sem:
            for attempt in range(self.retries + 1):
                try:
                    resp = self._session.request(method, url, json=payload, timeout=self.timeout)
                except requests.RequestException as exc:
                    raise ProviderError(f"{method} {url} failed: {exc}") from exc
                if 500 <= resp.status_code < 600:
                    last_exc = ProviderError(f"{method} {url} -> {resp.status_code}")
                    if attempt < self.retries:
                        time.sleep(self.backoff_s * (2 ** attempt))
                        continue
                    raise last_exc
                if resp.status_code != 200:
                    raise ProviderError(f"{method} {url} -> {resp.status_code}: {resp.text[:200]}")
                try:
                    return resp.json()
                except ValueError as exc:
                    raise SchemaError(f"non-JSON response from {url}: {resp.text[:200]}") from exc
        raise last_exc  # unreachable; satisfies type checkers

    # -- embedder -----------------------------------------------------------
    def embed(self, keyframe: Keyframe) -> np.ndarray:
        body = self._request("POST", "/embed", _encode_image(keyframe.image))
        emb = body.get("embedding")
        if not isinstance(emb, list) or (self.dim and len(emb) != self.dim):
            raise SchemaError(f"bad embedding payload: {str(body)[:200]}")
        return np.asarray(emb, dtype=np.float32)

    # -- detector -----------------------------------------------------------
    def detect(self, keyframe: Keyframe, prompt: str) -> list[DetectionBox]:
        payload = _encode_image(keyframe.image)
        payload["prompt"] = prompt
        body = self._request("POST", "/detect", payload)
        raw = body.get("boxes")
        if not isinstance(raw, list):
            raise SchemaError(f"bad detect payload: {str(body)[:200]}")
        boxes = []
        for item in raw:
            try:
                box = DetectionBox(x1=item["x1"], y1=item["y1"], x2=item["x2"], y2=item["y2"],
                                   score=item["score"], label=item.get("label", ""))
            except Exception as exc:
                raise SchemaError(f"malformed box {item!r}: {exc}") from exc
            if box.x1 < 0 or box.y1 < 0 or box.x2 > keyframe.width or box.y2 > keyframe.height:
                raise SchemaError(f"box outside frame bounds: {item!r}")
            boxes.append(box)
        return boxes

    # -- feature encoder ----------------------------------------------------
    def features(self, miniclip_ref: str, crop=None, view: int = 0,
                 frames: list[np.ndarray] | None = None) -> TokenFeatures:
        if frames is None:
            raise ProviderError("http feature provider needs decoded frames")
        payload = {
            "frames": [base64.b64encode(np.ascontiguousarray(f, dtype=np.uint8).tobytes()).decode("ascii")
                       for f in frames],
            "crop": {"x1": crop[0], "y1": crop[1], "x2": crop[2], "y2": crop[3]} if crop else None,
        }
        body = self._request("POST", "/features", payload)
        try:
            n, d = int(body["n"]), int(body["d"])
            tokens = np.asarray(body["tokens"], dtype=np.float64).reshape(n, d)
        except Exception as exc:
            raise SchemaError(f"bad features payload: {str(body)[:200]}") from exc
        return TokenFeatures(tokens=tokens, provider_id=self.base_url,
                             miniclip_ref=miniclip_ref, crop=crop)
