from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest
import requests

from egoview.errors import EmptyInput, InvalidImageReference, ServiceUnavailable
from egoview.services import (
    RemoteModelService,
    ScoreResult,
    ServiceEndpointConfig,
    StubModelService,
    make_client,
)
from egoview.synthesis import build_compose_prompt


class TestStubCaptions:
    def test_sorted_labels_in_caption(self):
        stub = StubModelService(seed=0)
        stub.register_view_labels("frames/v01.jpg", ["desk", "chair"])
        captions = stub.caption_image("frames/v01.jpg", 2)
        assert captions[0] == "a view containing chair and desk"
        assert captions[1] == "a view showing chair and desk"

    def test_deterministic_across_calls(self):
        stub = StubModelService(seed=9)
        stub.register_view_labels("ref", ["sofa", "table", "lamp"])
        assert stub.caption_image("ref", 5) == stub.caption_image("ref", 5)

    def test_unregistered_reference(self):
        with pytest.raises(InvalidImageReference):
            StubModelService().caption_image("nowhere.jpg", 1)

    def test_empty_label_set(self):
        stub = StubModelService()
        stub.register_view_labels("blank", [])
        assert stub.caption_image("blank", 1) == ["a view containing no distinct objects"]


class TestStubEmbeddings:
    def test_identical_texts_identical_vectors(self):
        stub = StubModelService(seed=1)
        vecs = stub.embed_text(["a red chair", "a red chair"])
        assert np.array_equal(vecs[0], vecs[1])
        assert float(vecs[0] @ vecs[1]) == pytest.approx(1.0, abs=1e-12)

    def test_token_multiset_is_order_free(self):
        stub = StubModelService(seed=1)
        vecs = stub.embed_text(["red chair", "chair red"])
        assert np.array_equal(vecs[0], vecs[1])

    def test_unit_norm(self):
        stub = StubModelService(seed=2)
        vecs = stub.embed_text(["desk", "a very long caption about many objects", ""])
        norms = np.linalg.norm(vecs, axis=1)
        assert np.all(np.abs(norms - 1.0) <= 1e-9)

    def test_empty_list_rejected(self):
        with pytest.raises(EmptyInput):
            StubModelService().embed_text([])

    def test_seed_changes_vectors(self):
        a = StubModelService(seed=1).embed_text(["desk"])
        b = StubModelService(seed=2).embed_text(["desk"])
        assert not np.array_equal(a, b)


class TestStubScores:
    def test_exact_label_match(self):
        stub = StubModelService()
        stub.register_view_labels("r", ["desk"])
        assert stub.score_image_text("r", ["desk"]).scores == (1.0,)

    def test_jaccard_with_stopwords_kept(self):
        stub = StubModelService()
        stub.register_view_labels("r", ["desk", "chair"])
        assert stub.score_image_text("r", ["the desk"]).scores[0] == pytest.approx(1 / 3)

    def test_alignment_with_inputs(self):
        stub = StubModelService()
        stub.register_view_labels("r", ["desk"])
        result = stub.score_image_text("r", ["desk", "sofa"])
        assert len(result.scores) == 2
        assert result.scores[0] > result.scores[1]

    def test_multiword_labels_are_tokenized(self):
        stub = StubModelService()
        stub.register_view_labels("r", ["waste basket"])
        assert stub.score_image_text("r", ["waste basket"]).scores == (1.0,)

    def test_scores_in_unit_interval(self):
        stub = StubModelService()
        stub.register_view_labels("r", ["desk", "chair", "sofa"])
        texts = ["", "desk", "desk chair sofa", "something unrelated entirely"]
        assert all(0.0 <= s <= 1.0 for s in stub.score_image_text("r", texts).scores)


class _FakePair:
    def __init__(self):
        from egoview.synthesis import CandidatePair, QuestionRecord

        self.pair = CandidatePair(
            first=QuestionRecord("qa", "s", "Where is the desk?", "left", frozenset({1, 2})),
            second=QuestionRecord("qb", "s", "What color is the chair?", "red", frozenset({2, 3})),
            shared_anchor_ids=frozenset({2}),
        )


class TestStubGeneration:
    def test_compose_prompt_yields_parseable_template(self):
        pair = _FakePair().pair
        prompt = build_compose_prompt(pair, ["chair"])
        reply = StubModelService(seed=7).generate_text(prompt)
        data = json.loads(reply)
        assert data == {
            "question": "Combining: Where is the desk | What color is the chair?",
            "answer": "left",
        }

    def test_same_prompt_same_output(self):
        stub = StubModelService(seed=7)
        assert stub.generate_text("hello") == stub.generate_text("hello")

    def test_plain_prompt_gets_digest(self):
        reply = StubModelService(seed=7).generate_text("hello")
        assert reply.startswith("stub-reply:")

    def test_temperature_ignored(self):
        stub = StubModelService(seed=7)
        assert stub.generate_text("x", temperature=0.0) == stub.generate_text("x", temperature=1.0)

    def test_max_tokens_validated(self):
        with pytest.raises(ValueError):
            StubModelService().generate_text("x", max_tokens=0)


class _Handler(BaseHTTPRequestHandler):
    def log_message(self, *args):
        pass

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        payload = json.loads(self.rfile.read(length))
        route = self.path
        if route == "/v1/caption":
            body = {"captions": [f"caption {i}" for i in range(payload["num_captions"])]}
        elif route == "/v1/embed_text":
            body = {"embeddings": [[1.0, 0.0] for _ in payload["texts"]]}
        elif route == "/v1/score_image_text":
            body = {"scores": [2.5 for _ in payload["texts"]]}  # out of range on purpose
        elif route == "/v1/generate":
            body = {"text": f"echo:{payload['prompt']}"}
        elif route == "/v1/broken":
            self.send_response(200)
            self.end_headers()
            self.wfile.write(b"not json")
            return
        else:
            self.send_response(500)
            self.end_headers()
            return
        data = json.dumps(body).encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)


@pytest.fixture(scope="module")
def model_server():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()


class TestRemoteService:
    def test_caption_round_trip(self, model_server):
        client = RemoteModelService(ServiceEndpointConfig(mode="remote", base_url=model_server))
        assert client.caption_image("img.jpg", 2) == ["caption 0", "caption 1"]

    def test_embed_round_trip(self, model_server):
        client = RemoteModelService(ServiceEndpointConfig(mode="remote", base_url=model_server))
        vecs = client.embed_text(["a", "b"])
        assert vecs.shape == (2, 2)

    def test_scores_clamped_to_unit_interval(self, model_server):
        client = RemoteModelService(ServiceEndpointConfig(mode="remote", base_url=model_server))
        assert client.score_image_text("img.jpg", ["x"]).scores == (1.0,)

    def test_generate_round_trip(self, model_server):
        client = RemoteModelService(ServiceEndpointConfig(mode="remote", base_url=model_server))
        assert client.generate_text("ping") == "echo:ping"

    def test_unreachable_url_raises_after_retries(self, monkeypatch):
        sleeps = []
        monkeypatch.setattr("egoview.services.time.sleep", sleeps.append)
        client = RemoteModelService(
            ServiceEndpointConfig(mode="remote", base_url="http://127.0.0.1:9", timeout=0.5)
        )
        with pytest.raises(ServiceUnavailable):
            client.generate_text("ping")
        assert sleeps == [0.5, 2.0]

    def test_malformed_body_fails_without_retry(self, model_server, monkeypatch):
        sleeps = []
        monkeypatch.setattr("egoview.services.time.sleep", sleeps.append)
        client = RemoteModelService(ServiceEndpointConfig(mode="remote", base_url=model_server))
        with pytest.raises(ServiceUnavailable):
            client._post("/v1/broken", {})
        assert sleeps == []

    def test_transient_transport_error_is_retried(self, model_server, monkeypatch):
        client = RemoteModelService(ServiceEndpointConfig(mode="remote", base_url=model_server))
        monkeypatch.setattr("egoview.services.time.sleep", lambda _: None)
        real_post = client._session.post
        calls = {"n": 0}

        def flaky(*args, **kwargs):
            calls["n"] += 1
            if calls["n"] == 1:
                raise requests.ConnectionError("boom")
            return real_post(*args, **kwargs)

        monkeypatch.setattr(client._session, "post", flaky)
        assert client.generate_text("ping") == "echo:ping"
        assert calls["n"] == 2


class TestConfigAndFactory:
    def test_make_client_stub(self):
        assert isinstance(make_client(ServiceEndpointConfig(mode="stub", seed=3)), StubModelService)

    def test_make_client_remote(self):
        client = make_client(ServiceEndpointConfig(mode="remote", base_url="http://x"))
        assert isinstance(client, RemoteModelService)

    def test_remote_requires_base_url(self):
        with pytest.raises(ValueError):
            RemoteModelService(ServiceEndpointConfig(mode="remote"))

    def test_invalid_mode_rejected(self):
        with pytest.raises(ValueError):
            ServiceEndpointConfig(mode="other")

    def test_score_result_shape(self):
        assert ScoreResult(scores=(0.5,)).scores == (0.5,)
