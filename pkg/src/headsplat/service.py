"""Live reenactment endpoint.

One server holds one composed scene. Clients connect over a websocket,
send JSON text commands and receive binary frame messages:

    set_params {shape?, expression?, pose?, global_rotation_quat?,
                global_translation?, camera?}      partial update, merged
    play_track {path}                              render a track's frames
    get_stats {}                                   -> stats reply
    set_format {format: "raw"|"png"}               stream encoding

Parameter updates land in a single latest-value slot; the render worker
wakes, takes the latest snapshot (intermediate updates coalesce away) and
broadcasts the frame. Lagging clients have stale frames dropped, never
queued unboundedly. Frame ids increase strictly.

Binary frame layout: 24-byte little-endian header
(magic ``HSF1``, frame id u32, width u32, height u32, format tag u32
[0 raw RGBA8, 1 PNG], payload length u32) followed by the payload.
"""

from __future__ import annotations

import asyncio
import io
import json
import struct
import time
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from PIL import Image

from .camera import CameraRig, camera_from_dict, camera_to_dict
from .errors import InvalidInputError, ParseError
from .headmodel import HeadParams, head_params_from_dict
from .rasterizer import RenderOptions, RenderOutput
from .rasters import to_uint8
from .scene import ComposedScene
from .track import load_track

FRAME_MAGIC = b"HSF1"
FORMAT_RAW = 0
FORMAT_PNG = 1
_FORMAT_TAGS = {"raw": FORMAT_RAW, "png": FORMAT_PNG}
HEADER_STRUCT = struct.Struct("<4sIIIII")
HEADER_SIZE = HEADER_STRUCT.size  # 24


def encode_frame(output: RenderOutput, fmt: str, frame_id: int) -> bytes:
    """Serialize a render into one binary frame message."""
    if fmt not in _FORMAT_TAGS:
        raise InvalidInputError(f"unknown frame format {fmt!r}")
    h, w = output.alpha.shape
    if h == 0 or w == 0:
        raise InvalidInputError("cannot encode a zero-size image")
    rgba = np.concatenate([to_uint8(output.color), to_uint8(output.alpha)[:, :, None]], axis=2)
    if fmt == "raw":
        payload = rgba.tobytes()
    else:
        buf = io.BytesIO()
        Image.fromarray(rgba, mode="RGBA").save(buf, format="PNG")
        payload = buf.getvalue()
    header = HEADER_STRUCT.pack(FRAME_MAGIC, frame_id, w, h, _FORMAT_TAGS[fmt], len(payload))
    return header + payload


def decode_frame(message: bytes) -> tuple[int, np.ndarray]:
    """Parse a frame message back into (frame id, HxWx4 uint8 image)."""
    if len(message) < HEADER_SIZE:
        raise ParseError("frame message shorter than its header")
    magic, frame_id, w, h, tag, length = HEADER_STRUCT.unpack(message[:HEADER_SIZE])
    if magic != FRAME_MAGIC:
        raise ParseError("bad frame magic")
    payload = message[HEADER_SIZE : HEADER_SIZE + length]
    if len(payload) != length:
        raise ParseError("frame payload is truncated")
    if tag == FORMAT_RAW:
        image = np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 4)
    elif tag == FORMAT_PNG:
        image = np.asarray(Image.open(io.BytesIO(payload)).convert("RGBA"))
    else:
        raise ParseError(f"unknown frame format tag {tag}")
    return frame_id, image


@dataclass
class SessionStats:
    frames_rendered: int = 0
    started_at: float = 0.0
    frame_times: list = field(default_factory=list)  # seconds, last 240

    def record(self, dt: float) -> None:
        if self.frames_rendered == 0:
            self.started_at = time.monotonic()
        self.frames_rendered += 1
        self.frame_times.append(dt)
        del self.frame_times[:-240]

    def snapshot(self, clients: int) -> dict:
        elapsed = max(time.monotonic() - self.started_at, 1e-9)
        times = sorted(self.frame_times)
        mean_ms = 1000.0 * sum(times) / len(times) if times else 0.0
        p95_ms = 1000.0 * times[min(int(0.95 * len(times)), len(times) - 1)] if times else 0.0
        fps = self.frames_rendered / elapsed if self.frames_rendered else 0.0
        return {
            "type": "stats",
            "frames_rendered": self.frames_rendered,
            "mean_frame_time_ms": mean_ms,
            "p95_frame_time_ms": p95_ms,
            "fps": fps,
            "clients": clients,
        }


class LiveSession:
    """Single render worker + latest-wins parameter slot + client fan-out."""

    def __init__(
        self,
        scene: ComposedScene,
        options: RenderOptions = RenderOptions(),
        fps_cap: float = 30.0,
        fmt: str = "png",
    ):
        if fmt not in _FORMAT_TAGS:
            raise InvalidInputError(f"unknown frame format {fmt!r}")
        self.scene = scene
        self.options = options
        self.fps_cap = fps_cap
        self.format = fmt
        self.params: HeadParams = scene.params
        self.camera: CameraRig = scene.camera
        self.frame_id = 0
        self.stats = SessionStats()
        self._dirty = asyncio.Event()
        self._clients: dict[int, asyncio.Queue] = {}
        self._next_client = 0
        self._worker: asyncio.Task | None = None

    # -- client management -------------------------------------------------
    def attach(self) -> tuple[int, asyncio.Queue]:
        cid = self._next_client
        self._next_client += 1
        queue: asyncio.Queue = asyncio.Queue(maxsize=2)
        self._clients[cid] = queue
        return cid, queue

    def detach(self, cid: int) -> None:
        self._clients.pop(cid, None)

    def _broadcast(self, payload: bytes) -> None:
        for queue in self._clients.values():
            while queue.full():  # drop stale frames for lagging clients
                try:
                    queue.get_nowait()
                except asyncio.QueueEmpty:
                    break
            queue.put_nowait(payload)

    # -- commands -----------------------------------------------------------
    def set_params(self, message: dict) -> None:
        self.params = head_params_from_dict(message, base=self.params)
        if "camera" in message:
            self.camera = camera_from_dict(message["camera"])
        self._dirty.set()

    def set_format(self, fmt: str) -> None:
        if fmt not in _FORMAT_TAGS:
            raise InvalidInputError(f"unknown frame format {fmt!r}")
        self.format = fmt

    # -- rendering ----------------------------------------------------------
    async def _render_broadcast(self, params: HeadParams, camera: CameraRig) -> None:
        loop = asyncio.get_running_loop()
        t0 = time.monotonic()
        output = await loop.run_in_executor(
            None, lambda: self.scene.render(params=params, camera=camera, options=self.options)
        )
        self.stats.record(time.monotonic() - t0)
        self.frame_id += 1
        self._broadcast(encode_frame(output, self.format, self.frame_id))

    async def play_track(self, path) -> int:
        track = load_track(path, model=self.scene.model)
        for frame in track.frames:
            await self._render_broadcast(frame.params, frame.camera or self.camera)
            if self.fps_cap > 0:
                await asyncio.sleep(0)  # yield; playback pacing is fps-capped below
        return len(track)

    async def run(self) -> None:
        """Render worker: wake on parameter changes, render the latest."""
        min_period = 1.0 / self.fps_cap if self.fps_cap > 0 else 0.0
        while True:
            await self._dirty.wait()
            self._dirty.clear()
            params, camera = self.params, self.camera
            started = time.monotonic()
            await self._render_broadcast(params, camera)
            spent = time.monotonic() - started
            if min_period > spent:
                await asyncio.sleep(min_period - spent)

    def start(self) -> None:
        self._worker = asyncio.get_running_loop().create_task(self.run())

    async def stop(self) -> None:
        if self._worker is not None:
            self._worker.cancel()
            try:
                await self._worker
            except asyncio.CancelledError:
                pass
            self._worker = None


def parameter_ranges(scene: ComposedScene) -> dict:
    """Slider manifest consumed by the browser panel; dimensions come from
    the loaded head asset, never hard-coded client-side."""
    model = scene.model
    return {
        "expression": {"count": model.num_expression, "min": -3.0, "max": 3.0},
        "pose": {"joints": model.num_joints, "min": -0.6, "max": 0.6},
        "camera": camera_to_dict(scene.camera),
        "image": {"width": scene.camera.width, "height": scene.camera.height},
        "formats": sorted(_FORMAT_TAGS),
    }


def create_app(
    scene: ComposedScene,
    options: RenderOptions = RenderOptions(),
    fps_cap: float = 30.0,
    fmt: str = "png",
    ui_dir=None,
):
    """Build the FastAPI app: websocket endpoint + ranges manifest
    (+ static UI files when ``ui_dir`` is given)."""
    from contextlib import asynccontextmanager

    session = LiveSession(scene, options=options, fps_cap=fps_cap, fmt=fmt)

    @asynccontextmanager
    async def lifespan(_app):
        session.start()
        yield
        await session.stop()

    app = FastAPI(title="headsplat live endpoint", lifespan=lifespan)
    app.state.session = session

    @app.get("/ranges")
    async def ranges():
        return parameter_ranges(scene)

    @app.websocket("/ws")
    async def websocket_endpoint(ws: WebSocket):
        await ws.accept()
        cid, queue = session.attach()

        async def pump_frames():
            while True:
                payload = await queue.get()
                await ws.send_bytes(payload)

        pump = asyncio.get_running_loop().create_task(pump_frames())
        try:
            while True:
                text = await ws.receive_text()
                try:
                    message = json.loads(text)
                    kind = message.get("type")
                    if kind == "set_params":
                        session.set_params(message)
                        await ws.send_text(json.dumps({"type": "ok", "command": "set_params"}))
                    elif kind == "play_track":
                        count = await session.play_track(message["path"])
                        await ws.send_text(json.dumps({"type": "track_done", "frames": count}))
                    elif kind == "get_stats":
                        await ws.send_text(json.dumps(session.stats.snapshot(len(session._clients))))
                    elif kind == "set_format":
                        session.set_format(message.get("format", ""))
                        await ws.send_text(json.dumps({"type": "ok", "command": "set_format"}))
                    else:
                        raise InvalidInputError(f"unknown message type {kind!r}")
                except (KeyError, ValueError, InvalidInputError, ParseError) as exc:
                    await ws.send_text(json.dumps({"type": "error", "message": str(exc)}))
        except WebSocketDisconnect:
            pass
        finally:
            pump.cancel()
            session.detach(cid)

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    return app


def serve(scene: ComposedScene, bind: str = "127.0.0.1:8787", **kwargs) -> None:
    """Blocking entry point used by the CLI ``serve`` command."""
    import uvicorn

    host, _, port = bind.partition(":")
    app = create_app(scene, **kwargs)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8787), log_level="warning")
