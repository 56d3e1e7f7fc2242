import json
import time

import numpy as np
import pytest

from headsplat.cloud import GaussianCloud
from headsplat.errors import InvalidInputError, ParseError
from headsplat.headmodel import HeadParams
from headsplat.rasterizer import RenderOptions, RenderOutput
from headsplat.rasters import to_uint8
from headsplat.rigid import RigidTransform
from headsplat.scene import ComposedScene, orbit_camera
from headsplat.service import (
    HEADER_SIZE,
    create_app,
    decode_frame,
    encode_frame,
    parameter_ranges,
)


@pytest.fixture()
def small_scene(head_model, bound_scene):
    cloud, binding = bound_scene
    camera = orbit_camera([0, 0, 0], 0.0, 0.1, 0.45, width=32, height=32)
    return ComposedScene(
        model=head_model,
        head_cloud=cloud,
        binding=binding,
        background=GaussianCloud.empty(),
        head_transform=RigidTransform.identity(),
        camera=camera,
        params=HeadParams.neutral(head_model),
    )


def known_output():
    color = np.zeros((2, 2, 3))
    color[0, 0] = [1.0, 0.0, 0.0]
    color[0, 1] = [0.0, 1.0, 0.0]
    color[1, 0] = [0.0, 0.0, 1.0]
    color[1, 1] = [1.0, 1.0, 1.0]
    alpha = np.array([[1.0, 0.5], [0.0, 1.0]])
    return RenderOutput(
        color=color, alpha=alpha, depth=np.ones((2, 2)), contributors=np.ones((2, 2), np.int32)
    )


def test_encode_raw_hand_laid_bytes():
    message = encode_frame(known_output(), "raw", frame_id=7)
    assert len(message) == HEADER_SIZE + 16
    assert message[:4] == b"HSF1"
    assert int.from_bytes(message[4:8], "little") == 7
    assert int.from_bytes(message[8:12], "little") == 2  # width
    assert int.from_bytes(message[12:16], "little") == 2  # height
    assert int.from_bytes(message[16:20], "little") == 0  # raw tag
    assert int.from_bytes(message[20:24], "little") == 16
    expected = bytes(
        [255, 0, 0, 255, 0, 255, 0, 128, 0, 0, 255, 0, 255, 255, 255, 255]
    )
    assert message[HEADER_SIZE:] == expected


def test_encode_png_roundtrip():
    output = known_output()
    frame_id, image = decode_frame(encode_frame(output, "png", frame_id=3))
    assert frame_id == 3
    expected = np.concatenate(
        [to_uint8(output.color), to_uint8(output.alpha)[:, :, None]], axis=2
    )
    assert np.array_equal(image, expected)


def test_encode_rejects_zero_size():
    empty = RenderOutput(
        color=np.zeros((0, 0, 3)), alpha=np.zeros((0, 0)),
        depth=np.zeros((0, 0)), contributors=np.zeros((0, 0), np.int32),
    )
    with pytest.raises(InvalidInputError):
        encode_frame(empty, "raw", 1)
    with pytest.raises(InvalidInputError):
        encode_frame(known_output(), "bmp", 1)


def test_decode_rejects_garbage():
    with pytest.raises(ParseError):
        decode_frame(b"nope")
    with pytest.raises(ParseError):
        decode_frame(b"XXXX" + b"\x00" * 20)


def test_parameter_ranges_from_asset(small_scene):
    ranges = parameter_ranges(small_scene)
    assert ranges["expression"]["count"] == small_scene.model.num_expression
    assert ranges["pose"]["joints"] == small_scene.model.num_joints
    assert ranges["image"] == {"width": 32, "height": 32}


def _recv_frame(ws, tries=20):
    """Skip text messages until a binary frame arrives."""
    for _ in range(tries):
        message = ws.receive()
        if "bytes" in message and message["bytes"] is not None:
            return message["bytes"]
        if "text" in message and message["text"] is not None:
            continue
    raise AssertionError("no binary frame received")


def _recv_text(ws, tries=20):
    for _ in range(tries):
        message = ws.receive()
        if "text" in message and message["text"] is not None:
            return json.loads(message["text"])
    raise AssertionError("no text message received")


@pytest.fixture()
def client(small_scene):
    from starlette.testclient import TestClient

    app = create_app(small_scene, options=RenderOptions(), fps_cap=200.0, fmt="raw")
    with TestClient(app) as test_client:
        yield test_client


def test_ranges_endpoint(client, small_scene):
    payload = client.get("/ranges").json()
    assert payload["expression"]["count"] == small_scene.model.num_expression


def test_set_params_renders_golden_neutral(client, small_scene):
    golden = small_scene.render().color
    with client.websocket_connect("/ws") as ws:
        ws.send_text(json.dumps({
            "type": "set_params",
            "expression": [0.0] * small_scene.model.num_expression,
        }))
        frame = _recv_frame(ws)
        frame_id, image = decode_frame(frame)
        assert frame_id >= 1
        assert np.array_equal(image[:, :, :3], to_uint8(golden))


def test_frame_ids_strictly_increase(client, small_scene):
    with client.websocket_connect("/ws") as ws:
        seen = []
        for k in range(3):
            ws.send_text(json.dumps({"type": "set_params", "expression":
                                     [0.1 * k] + [0.0] * (small_scene.model.num_expression - 1)}))
            frame_id, _ = decode_frame(_recv_frame(ws))
            seen.append(frame_id)
        assert seen == sorted(seen)
        assert len(set(seen)) == len(seen)


def test_play_track_emits_exact_frame_count(client, small_scene, tmp_path):
    from headsplat.headmodel import head_params_to_dict

    frames = []
    for k in range(3):
        params = HeadParams.neutral(small_scene.model)
        params.expression[0] = 0.2 * k
        frames.append({"t": float(k) / 10.0, "params": head_params_to_dict(params)})
    track_path = tmp_path / "track.json"
    track_path.write_text(json.dumps({"frames": frames}))

    with client.websocket_connect("/ws") as ws:
        ws.send_text(json.dumps({"type": "play_track", "path": str(track_path)}))
        ids = []
        done = None
        for _ in range(20):
            message = ws.receive()
            if message.get("bytes"):
                ids.append(decode_frame(message["bytes"])[0])
            elif message.get("text"):
                payload = json.loads(message["text"])
                if payload.get("type") == "track_done":
                    done = payload
                    break
        assert done == {"type": "track_done", "frames": 3}
        assert len(ids) == 3
        assert ids == sorted(ids)


def test_malformed_message_keeps_session(client, small_scene):
    with client.websocket_connect("/ws") as ws:
        ws.send_text("{not json")
        reply = _recv_text(ws)
        assert reply["type"] == "error"
        ws.send_text(json.dumps({"type": "bogus"}))
        reply = _recv_text(ws)
        assert reply["type"] == "error"
        # session still alive and functional
        ws.send_text(json.dumps({"type": "get_stats"}))
        stats = _recv_text(ws)
        assert stats["type"] == "stats"


def test_stats_fps_consistent(client, small_scene):
    with client.websocket_connect("/ws") as ws:
        for k in range(4):
            ws.send_text(json.dumps({"type": "set_params", "expression":
                                     [0.05 * k] + [0.0] * (small_scene.model.num_expression - 1)}))
            _recv_frame(ws)
        ws.send_text(json.dumps({"type": "get_stats"}))
        stats = _recv_text(ws)
        assert stats["frames_rendered"] >= 4
        assert stats["fps"] > 0.0
        assert stats["mean_frame_time_ms"] > 0.0


def test_set_format_switches_encoding(client, small_scene):
    with client.websocket_connect("/ws") as ws:
        ws.send_text(json.dumps({"type": "set_format", "format": "png"}))
        reply = _recv_text(ws)
        assert reply == {"type": "ok", "command": "set_format"}
        ws.send_text(json.dumps({
            "type": "set_params",
            "expression": [0.0] * small_scene.model.num_expression,
        }))
        frame = _recv_frame(ws)
        assert int.from_bytes(frame[16:20], "little") == 1  # png tag
