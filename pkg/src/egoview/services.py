"""Model-service clients: one wire protocol, remote and deterministic stub modes.

Four capabilities sit behind a single request/response protocol so any
captioner, retrieval scorer, or text generator can be adapted:

    POST <base>/v1/caption            {image_path|image_b64, num_captions} -> {captions: [...]}
    POST <base>/v1/embed_text         {texts: [...]}                       -> {embeddings: [[...]]}
    POST <base>/v1/score_image_text   {image_path|image_b64, texts: [...]} -> {scores: [...]}
    POST <base>/v1/generate           {prompt, max_tokens, temperature}    -> {text: ...}

The stub client answers the same calls in-process from a sidecar of visible
object labels per image reference, making every pipeline reproducible offline
byte for byte.  Stub outputs are pure functions of (inputs, seed).
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import requests

from ._util import tokenize
from .errors import EmptyInput, InvalidImageReference, ServiceUnavailable

logger = logging.getLogger(__name__)

STUB_EMBED_DIM = 64
COMPOSE_MARKER = "[task:compose-qa]"

# Transport retry schedule: sleeps between attempts, transport errors only.
RETRY_BACKOFF = (0.5, 2.0)

_CAPTION_TEMPLATES = (
    "a view containing {}",
    "a view showing {}",
    "an egocentric view with {}",
)

_PROMPT_FIELD_RE = {
    "q1": re.compile(r"^Parent question 1: (.*)$", re.MULTILINE),
    "a1": re.compile(r"^Parent answer 1: (.*)$", re.MULTILINE),
    "q2": re.compile(r"^Parent question 2: (.*)$", re.MULTILINE),
}


@dataclass(frozen=True)
class ServiceEndpointConfig:
    """Where and how to reach a model service."""

    base_url: str = ""
    timeout: float = 30.0
    max_in_flight: int = 8
    mode: str = "stub"
    seed: int = 0

    def __post_init__(self):
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.mode not in ("stub", "remote"):
            raise ValueError("mode must be 'stub' or 'remote'")


@dataclass(frozen=True)
class ScoreResult:
    """Per-text scores in [0, 1], aligned with the input texts."""

    scores: tuple[float, ...]


def _join_labels(labels: Sequence[str]) -> str:
    if not labels:
        return "no distinct objects"
    if len(labels) == 1:
        return labels[0]
    return ", ".join(labels[:-1]) + " and " + labels[-1]


class StubModelService:
    """Deterministic in-process stand-in for all four model capabilities.

    Image understanding comes from a sidecar mapping image reference to the
    labels of objects visible in that view (registered by the corpus builder
    before any scoring call); no pixels are ever read.  Reentrant and
    lock-free: all methods are pure given the registered sidecar.
    """

    def __init__(self, seed: int = 0):
        self.seed = int(seed)
        self._labels: dict[str, tuple[str, ...]] = {}

    def register_view_labels(self, image_ref: str, labels: Sequence[str]) -> None:
        self._labels[image_ref] = tuple(sorted(set(labels)))

    def _labels_for(self, image_ref: str) -> tuple[str, ...]:
        if image_ref not in self._labels:
            raise InvalidImageReference(f"no sidecar labels registered for {image_ref!r}")
        return self._labels[image_ref]

    def _digest(self, *parts: str) -> str:
        h = hashlib.blake2b(digest_size=8)
        h.update(str(self.seed).encode("utf-8"))
        for part in parts:
            h.update(b"\x00")
            h.update(part.encode("utf-8"))
        return h.hexdigest()

    def caption_image(self, image_ref: str, num_captions: int = 1) -> list[str]:
        if num_captions < 1:
            raise ValueError("num_captions must be >= 1")
        base = _join_labels(self._labels_for(image_ref))
        captions = []
        for i in range(num_captions):
            if i < len(_CAPTION_TEMPLATES):
                captions.append(_CAPTION_TEMPLATES[i].format(base))
            else:
                captions.append(f"a view containing {base} (variant {i})")
        return captions

    def _token_vector(self, token: str) -> np.ndarray:
        h = hashlib.blake2b(
            f"{self.seed}|{token}".encode("utf-8"), digest_size=STUB_EMBED_DIM
        )
        raw = np.frombuffer(h.digest(), dtype=np.uint8).astype(np.float64)
        return (raw - 127.5) / 127.5

    def embed_text(self, texts: Sequence[str]) -> np.ndarray:
        """Unit-norm vectors from the token multiset of each text (order-free)."""
        if not texts:
            raise EmptyInput("embed_text requires at least one text")
        out = np.zeros((len(texts), STUB_EMBED_DIM))
        for i, text in enumerate(texts):
            tokens = sorted(tokenize(text)) or [""]
            vec = np.zeros(STUB_EMBED_DIM)
            for token in tokens:
                vec += self._token_vector(token)
            norm = np.linalg.norm(vec)
            if norm < 1e-12:
                vec = self._token_vector("")
                norm = np.linalg.norm(vec)
            out[i] = vec / norm
        return out

    def score_image_text(self, image_ref: str, texts: Sequence[str]) -> ScoreResult:
        """Jaccard overlap between text tokens and the view's label tokens."""
        if not texts:
            raise EmptyInput("score_image_text requires at least one text")
        label_tokens: set[str] = set()
        for label in self._labels_for(image_ref):
            label_tokens.update(tokenize(label))
        scores = []
        for text in texts:
            text_tokens = set(tokenize(text))
            union = text_tokens | label_tokens
            if not union:
                scores.append(0.0)
            else:
                scores.append(len(text_tokens & label_tokens) / len(union))
        return ScoreResult(scores=tuple(scores))

    def generate_text(self, prompt: str, max_tokens: int = 256, temperature: float = 0.0) -> str:
        """Deterministic generation; temperature is ignored.

        Prompts carrying the composition marker get the fixed combination
        template (question = both parents joined, answer = first parent's);
        anything else echoes a seeded digest string.
        """
        if max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if COMPOSE_MARKER in prompt:
            fields = {}
            for key, pattern in _PROMPT_FIELD_RE.items():
                match = pattern.search(prompt)
                if match is None:
                    return f"stub-reply:{self._digest(prompt)}"
                fields[key] = match.group(1).strip()
            q1 = fields["q1"].rstrip(" ?")
            q2 = fields["q2"].rstrip(" ?")
            return json.dumps(
                {"question": f"Combining: {q1} | {q2}?", "answer": fields["a1"]},
                ensure_ascii=False,
            )
        return f"stub-reply:{self._digest(prompt)}"


class RemoteModelService:
    """HTTP client for the four-route protocol.

    Transport failures (connection errors, timeouts) are retried twice with
    backoff, then raised as ServiceUnavailable.  Well-formed replies are
    never retried; malformed bodies and non-2xx statuses fail immediately.
    """

    def __init__(self, config: ServiceEndpointConfig):
        if not config.base_url:
            raise ValueError("remote mode requires a base_url")
        self.config = config
        self._session = requests.Session()

    def _post(self, route: str, payload: dict) -> dict:
        url = self.config.base_url.rstrip("/") + route
        last_error: Exception | None = None
        for attempt in range(len(RETRY_BACKOFF) + 1):
            if attempt > 0:
                time.sleep(RETRY_BACKOFF[attempt - 1])
                logger.warning("retrying %s (attempt %d)", route, attempt + 1)
            try:
                response = self._session.post(url, json=payload, timeout=self.config.timeout)
            except (requests.ConnectionError, requests.Timeout) as exc:
                last_error = exc
                continue
            if response.status_code != 200:
                raise ServiceUnavailable(f"{url} returned status {response.status_code}")
            try:
                body = response.json()
            except ValueError as exc:
                raise ServiceUnavailable(f"{url} returned a non-JSON body") from exc
            if not isinstance(body, dict):
                raise ServiceUnavailable(f"{url} returned a non-object body")
            return body
        raise ServiceUnavailable(f"cannot reach {url}: {last_error}")

    def caption_image(self, image_ref: str, num_captions: int = 1) -> list[str]:
        if num_captions < 1:
            raise ValueError("num_captions must be >= 1")
        if not image_ref:
            raise InvalidImageReference("empty image reference")
        body = self._post(
            "/v1/caption", {"image_path": image_ref, "num_captions": num_captions}
        )
        captions = body.get("captions")
        if not isinstance(captions, list):
            raise ServiceUnavailable("caption reply missing 'captions' list")
        return [str(c) for c in captions]

    def embed_text(self, texts: Sequence[str]) -> np.ndarray:
        if not texts:
            raise EmptyInput("embed_text requires at least one text")
        body = self._post("/v1/embed_text", {"texts": list(texts)})
        embeddings = body.get("embeddings")
        if not isinstance(embeddings, list) or len(embeddings) != len(texts):
            raise ServiceUnavailable("embed reply shape does not match inputs")
        return np.asarray(embeddings, dtype=np.float64)

    def score_image_text(self, image_ref: str, texts: Sequence[str]) -> ScoreResult:
        if not texts:
            raise EmptyInput("score_image_text requires at least one text")
        if not image_ref:
            raise InvalidImageReference("empty image reference")
        body = self._post(
            "/v1/score_image_text", {"image_path": image_ref, "texts": list(texts)}
        )
        scores = body.get("scores")
        if not isinstance(scores, list) or len(scores) != len(texts):
            raise ServiceUnavailable("score reply shape does not match inputs")
        return ScoreResult(scores=tuple(min(1.0, max(0.0, float(s))) for s in scores))

    def generate_text(self, prompt: str, max_tokens: int = 256, temperature: float = 0.0) -> str:
        if max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        body = self._post(
            "/v1/generate",
            {"prompt": prompt, "max_tokens": max_tokens, "temperature": temperature},
        )
        text = body.get("text")
        if not isinstance(text, str):
            raise ServiceUnavailable("generate reply missing 'text'")
        return text


def make_client(config: ServiceEndpointConfig):
    """Build the client matching config.mode."""
    if config.mode == "stub":
        return StubModelService(seed=config.seed)
    return RemoteModelService(config)
