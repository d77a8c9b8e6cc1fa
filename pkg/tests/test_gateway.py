import base64
import json

import httpx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from textualize.gateway import (
    BackendRefusal,
    ChatBackend,
    ChatMessage,
    DenseCaptionBackend,
    DepthBackend,
    EmbedderBackend,
    EmptyResponse,
    Endpoint,
    FixtureMissing,
    FixtureTransport,
    HttpTransport,
    MaskEmpty,
    RecordingTransport,
    ResponseValidationError,
    RetryPolicy,
    SegmenterBackend,
    TransportError,
    UnknownModelTag,
)
from textualize.gateway.wire import image_payload, rle_decode, rle_encode
from textualize.model import ImageRef
from textualize.testkit import FlakyTransport, OracleTransport, SceneObject, build_scene, generate_scene, oracle_backends

NO_SLEEP = {"sleep": lambda s: None}


class Scripted:
    def __init__(self, **handlers):
        self.handlers = handlers
        self.requests = []

    def call(self, kind, request):
        self.requests.append((kind, request))
        return self.handlers[kind](request)


def chat_reply(text):
    return {"choices": [{"message": {"role": "assistant", "content": text}}]}


def test_chat_wire_body_and_reply():
    seen = {}

    def handler(request: httpx.Request):
        seen.update(json.loads(request.content))
        return httpx.Response(200, json=chat_reply("hello"))

    transport = HttpTransport("http://llm.test/v1/chat", client=httpx.Client(transport=httpx.MockTransport(handler)))
    chat = ChatBackend(Endpoint(transport, **NO_SLEEP), model="m1", temperature=0.0, max_tokens=32)
    image = ImageRef("u", 4, 4, "https://img.test/u.png")
    assert chat.chat([ChatMessage.user(image, "Describe.")]) == "hello"
    assert seen["model"] == "m1" and seen["temperature"] == 0.0 and seen["max_tokens"] == 32
    assert seen["messages"][0]["content"] == [
        {"type": "image_url", "image_url": {"url": "https://img.test/u.png"}},
        {"type": "text", "text": "Describe."},
    ]


def test_local_image_becomes_data_uri(tmp_path):
    path = tmp_path / "x.png"
    path.write_bytes(b"\x89PNG-bytes")
    uri = image_payload(ImageRef("x", 1, 1, str(path)))
    assert uri.startswith("data:image/png;base64,")
    assert base64.b64decode(uri.split(",", 1)[1]) == b"\x89PNG-bytes"


def test_two_transient_failures_then_success():
    delays = []
    flaky = FlakyTransport(Scripted(chat=lambda r: chat_reply("ok")), kinds={"chat"}, failures=2)
    endpoint = Endpoint(flaky, policy=RetryPolicy(retry_limit=3), sleep=delays.append)
    assert ChatBackend(endpoint).chat([ChatMessage.user("hi")]) == "ok"
    assert endpoint.attempts == 3 and endpoint.calls == 1
    assert [outcome.split(":")[0] for _, outcome in endpoint.attempt_log] == ["error", "error", "ok"]
    assert 0.25 <= delays[0] <= 0.75 and 0.5 <= delays[1] <= 1.5


def test_retries_exhausted():
    flaky = FlakyTransport(Scripted(chat=lambda r: chat_reply("ok")), kinds={"chat"})
    endpoint = Endpoint(flaky, policy=RetryPolicy(retry_limit=2), **NO_SLEEP)
    with pytest.raises(TransportError, match="3 attempt"):
        ChatBackend(endpoint).chat([ChatMessage.user("hi")])
    assert endpoint.attempts == 3


@pytest.mark.parametrize("status,exc", [(429, TransportError), (503, TransportError), (400, BackendRefusal)])
def test_http_status_mapping(status, exc):
    client = httpx.Client(transport=httpx.MockTransport(
        lambda r: httpx.Response(status, json={"error": {"code": "x", "message": "m", "retryable": False}})))
    endpoint = Endpoint(HttpTransport("http://t", client=client), policy=RetryPolicy(retry_limit=1), **NO_SLEEP)
    with pytest.raises(exc):
        endpoint.call("detect", {"phrase": "cat"})
    assert endpoint.attempts == (2 if exc is TransportError else 1)


def test_fixture_record_and_replay(tmp_path):
    scene = generate_scene(3)
    image = scene.image_ref()
    recorder = RecordingTransport(OracleTransport([scene]), tmp_path)
    live = ChatBackend(Endpoint(recorder, **NO_SLEEP)).chat([ChatMessage.user(image, "Describe.")])
    replay = ChatBackend(Endpoint(FixtureTransport(tmp_path), **NO_SLEEP))
    assert replay.chat([ChatMessage.user(image, "Describe.")]) == live
    # the key ignores where pixels live, only the image id counts
    moved = ImageRef(image.id, image.width, image.height, "/elsewhere.pgm")
    assert replay.chat([ChatMessage.user(moved, "Describe.")]) == live


def test_missing_fixture_names_digest(tmp_path):
    chat = ChatBackend(Endpoint(FixtureTransport(tmp_path), **NO_SLEEP))
    with pytest.raises(EmptyResponse) as info:
        chat.chat([ChatMessage.user("never recorded")])
    assert isinstance(info.value, FixtureMissing)
    assert len(info.value.digest) == 64 and info.value.digest in str(info.value)


def test_blank_chat_reply_is_empty_response():
    chat = ChatBackend(Endpoint(Scripted(chat=lambda r: chat_reply("  ")), **NO_SLEEP))
    with pytest.raises(EmptyResponse):
        chat.chat([ChatMessage.user("x")])


def test_detector_and_dense_captioner_against_scene():
    scene = generate_scene(5, n_objects=3)
    b = oracle_backends(scene)
    image = scene.image_ref()
    planted = scene.objects[0].phrase
    hits = b.detector.detect(image, planted)
    assert len(hits) == 1 and hits[0].score >= 0.35
    assert b.detector.detect(image, "a traffic light") == []
    with pytest.raises(ValueError):
        b.detector.detect(image, "   ")
    captions = b.dense_captioner.dense_caption(image)
    assert [c.phrase for c in captions] == [o.phrase for o in scene.objects]
    empty = generate_scene(5, n_objects=0)
    assert oracle_backends(empty).dense_captioner.dense_caption(empty.image_ref()) == []


def test_out_of_bounds_dense_caption_box_rejected():
    image = ImageRef("i", 10, 10)
    backend = DenseCaptionBackend(Endpoint(Scripted(dense_caption=lambda r: {
        "regions": [{"phrase": "cat", "box": [2, 2, 11, 5]}]}), **NO_SLEEP))
    with pytest.raises(ResponseValidationError, match=r"\[2, 2, 11, 5\]"):
        backend.dense_caption(image)


def test_segmenter_exact_masks_and_failures():
    scene = build_scene(1, 20, 10, [SceneObject("red cube", "rect", (2, 3, 4, 5), 2.0),
                                    SceneObject("dot", "rect", (15, 5, 1, 1), 3.0)])
    b = oracle_backends(scene)
    image = scene.image_ref()
    masks = b.segmenter.segment(image, [scene.tight_box(0), scene.tight_box(1)])
    assert np.array_equal(masks[0].bits, scene.masks[0])
    assert masks[1].count == 1
    with pytest.raises(MaskEmpty) as info:
        b.segmenter.segment(image, [(8, 0, 12, 2), scene.tight_box(0)])
    assert info.value.failed == [0] and info.value.masks[1] is not None
    with pytest.raises(ValueError):
        b.segmenter.segment(image, [(0, 0, 21, 2)])


def test_depth_two_layer_and_dims_check():
    scene = build_scene(1, 6, 4, [SceneObject("box", "rect", (0, 0, 3, 4), 2.0)], background_depth=8.0)
    depth = oracle_backends(scene).depth.estimate_depth(scene.image_ref())
    assert sorted(np.unique(depth.values).tolist()) == [2.0, 8.0]
    bad = DepthBackend(Endpoint(Scripted(depth=lambda r: {"width": 5, "height": 4, "values": [0.0] * 20}), **NO_SLEEP))
    with pytest.raises(ResponseValidationError):
        bad.estimate_depth(scene.image_ref())


def test_embedder_determinism_and_unknown_tag():
    scene = generate_scene(2)
    b = oracle_backends(scene)
    v1 = b.embedder.embed_image(scene.image_ref(), "oracle-embed/1")
    assert v1 == b.embedder.embed_image(scene.image_ref(), "oracle-embed/1")
    with pytest.raises(UnknownModelTag):
        b.embedder.embed_image(scene.image_ref(), "clip-huge")


def test_embedder_refusal_is_not_retried():
    endpoint = Endpoint(OracleTransport([generate_scene(2)]), **NO_SLEEP)
    with pytest.raises(UnknownModelTag):
        EmbedderBackend(endpoint).embed_image(generate_scene(2).image_ref(), "nope")
    assert endpoint.attempts == 1


@given(arrays(bool, st.tuples(st.integers(1, 12), st.integers(1, 12))))
def test_rle_round_trip(bits):
    counts = rle_encode(bits)
    assert sum(counts) == bits.size
    assert all(c > 0 for c in counts[1:])
    assert np.array_equal(rle_decode(counts, bits.shape[1], bits.shape[0]), bits)


def test_rle_starts_with_background():
    assert rle_encode(np.array([[True, True, False]])) == [0, 2, 1]
    with pytest.raises(ValueError):
        rle_decode([1, 2], 2, 2)
