"""On-disk formats: JSONL video records and binary model checkpoints."""

from __future__ import annotations

import json
import math
import os
import struct
import tempfile
import zlib
from pathlib import Path

import numpy as np

from .exceptions import CheckpointError, ContractError, FormatError, VersionMismatchError
from .features import BackgroundMotion, FlowField, FlowLayer, GridFlow, LayeredFlow
from .geometry import BBox, FrameDims
from .model.network import ModelConfig, ModelParams, param_shapes
from .motion import EgoPose
from .video import AnomalyAnnotation, Detection, Frame, SyntheticVideo

FORMAT_VERSION = 1
GRID_COLS, GRID_ROWS = 64, 36


def file_mode() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return 0o666 & ~mask


def atomic_write(path, data: bytes | str) -> None:
    """Write via a sibling temp file and rename, so readers never see partial files."""
    path = Path(path)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": ""})) as f:
            f.write(data)
        os.chmod(tmp, file_mode())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


# ---- videos ----

def _box_json(track_id, b: BBox):
    return {"id": track_id, "cx": b.cx, "cy": b.cy, "w": b.w, "h": b.h}


def _flow_json(flow: FlowField, mode: str, grid):
    if mode == "layered" and isinstance(flow, LayeredFlow):
        bg = flow.background
        return {"kind": "layered",
                "background": [bg.scale, bg.origin_u, bg.origin_v, bg.shift_u, bg.shift_v],
                "layers": [[l.box.cx, l.box.cy, l.box.w, l.box.h, l.du, l.dv] for l in flow.layers]}
    if not isinstance(flow, GridFlow):
        flow = GridFlow.from_field(flow, *grid)
    rows, cols = flow.coarse.shape[:2]
    return {"kind": "grid", "rows": rows, "cols": cols, "data": flow.coarse.ravel().tolist()}


def video_lines(video: SyntheticVideo, flow: str = "layered", grid=(GRID_COLS, GRID_ROWS)) -> list[str]:
    """``flow`` is "layered" (exact for generated scenes) or "grid" (coarse, upsampled on load)."""
    if flow not in ("layered", "grid"):
        raise ContractError(f"flow storage must be 'layered' or 'grid', got {flow!r}")
    dumps = lambda o: json.dumps(o, separators=(",", ":"), allow_nan=False)
    lines = [dumps({"format_version": FORMAT_VERSION, "video_id": video.video_id,
                    "dims": [video.dims.width, video.dims.height], "frame_rate": video.frame_rate})]
    for f in video.frames:
        lines.append(dumps({
            "frame": f.index,
            "detections": [_box_json(d.track_id, d.box) for d in f.detections],
            "truth": [_box_json(d.track_id, d.box) for d in f.truth],
            "ego": {"phi": f.ego.phi, "x": f.ego.x, "z": f.ego.z},
            "flow": _flow_json(f.flow, flow, grid),
        }))
    a = video.annotation
    if a is not None:
        lines.append(dumps({"annotation": {"start": a.start, "end": a.end,
                                           "ego_involved": a.ego_involved, "kind": a.kind}}))
    return lines


def save_video(video: SyntheticVideo, path, flow: str = "layered", grid=(GRID_COLS, GRID_ROWS)) -> None:
    atomic_write(path, "\n".join(video_lines(video, flow, grid)) + "\n")


def _num(obj, key, line):
    v = obj.get(key) if isinstance(obj, dict) else None
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise FormatError(f"field {key!r} must be a finite number", line)
    return float(v)


def _int(obj, key, line):
    v = obj.get(key) if isinstance(obj, dict) else None
    if isinstance(v, bool) or not isinstance(v, int):
        raise FormatError(f"field {key!r} must be an integer", line)
    return v


def _list(obj, key, line):
    v = obj.get(key)
    if not isinstance(v, list):
        raise FormatError(f"field {key!r} must be a list", line)
    return v


def _detections(items, line):
    out = []
    for d in items:
        if not isinstance(d, dict):
            raise FormatError("detection must be an object", line)
        out.append(Detection(_int(d, "id", line), BBox(_num(d, "cx", line), _num(d, "cy", line),
                                                       _num(d, "w", line), _num(d, "h", line))))
    return tuple(out)


def _flow(obj, dims, line) -> FlowField:
    if not isinstance(obj, dict):
        raise FormatError("flow must be an object", line)
    kind = obj.get("kind")
    if kind == "layered":
        bg = _list(obj, "background", line)
        if len(bg) != 5:
            raise FormatError("layered flow background needs 5 numbers", line)
        layers = []
        for l in _list(obj, "layers", line):
            if not isinstance(l, list) or len(l) != 6:
                raise FormatError("flow layer needs 6 numbers", line)
            v = [_num({"v": x}, "v", line) for x in l]
            layers.append(FlowLayer(BBox(*v[:4]), v[4], v[5]))
        bgv = [_num({"v": x}, "v", line) for x in bg]
        return LayeredFlow(dims, BackgroundMotion(*bgv), tuple(layers))
    if kind == "grid":
        rows, cols = _int(obj, "rows", line), _int(obj, "cols", line)
        data = _list(obj, "data", line)
        if rows < 1 or cols < 1 or len(data) != rows * cols * 2:
            raise FormatError(f"grid flow needs rows*cols*2 = {rows * cols * 2} values", line)
        arr = np.array([_num({"v": x}, "v", line) for x in data]).reshape(rows, cols, 2)
        return GridFlow(dims, arr)
    raise FormatError(f"unknown flow kind {kind!r}", line)


def parse_video(lines) -> SyntheticVideo:
    lines = list(lines)
    if not lines or not lines[0].strip():
        raise FormatError("missing header", 1)

    def load(i):
        try:
            obj = json.loads(lines[i])
        except json.JSONDecodeError as e:
            raise FormatError(f"invalid JSON ({e.msg})", i + 1) from None
        except RecursionError:
            raise FormatError("JSON nested too deeply", i + 1) from None
        if not isinstance(obj, dict):
            raise FormatError("expected a JSON object", i + 1)
        return obj

    head = load(0)
    if "format_version" not in head:
        raise FormatError("header lacks format_version", 1)
    if head["format_version"] != FORMAT_VERSION:
        raise VersionMismatchError(
            f"format_version {head['format_version']!r} is not supported (expected {FORMAT_VERSION})", 1)
    try:
        dims_raw = _list(head, "dims", 1)
        if len(dims_raw) != 2 or not all(isinstance(x, int) and not isinstance(x, bool) for x in dims_raw):
            raise FormatError("dims must be [width, height] integers", 1)
        dims = FrameDims(*dims_raw)
        rate = _num(head, "frame_rate", 1)
        vid = head.get("video_id")
        if not isinstance(vid, str):
            raise FormatError("video_id must be a string", 1)
        frames, annotation = [], None
        for i in range(1, len(lines)):
            if not lines[i].strip():
                if i == len(lines) - 1:
                    break
                raise FormatError("blank line", i + 1)
            if annotation is not None:
                raise FormatError("content after the annotation line", i + 1)
            obj = load(i)
            ln = i + 1
            try:
                if "annotation" in obj:
                    a = obj["annotation"]
                    if not isinstance(a, dict) or not isinstance(a.get("ego_involved", False), bool):
                        raise FormatError("malformed annotation", ln)
                    kind = a.get("kind")
                    if kind is not None and not isinstance(kind, str):
                        raise FormatError("annotation kind must be a string", ln)
                    annotation = AnomalyAnnotation(_int(a, "start", ln), _int(a, "end", ln),
                                                   a.get("ego_involved", False), kind)
                    if annotation.end >= len(frames):
                        raise FormatError("annotation window extends past the last frame", ln)
                    continue
                idx = _int(obj, "frame", ln)
                if idx != len(frames):
                    raise FormatError(f"expected frame {len(frames)}, got {idx}", ln)
                ego = obj.get("ego")
                pose = EgoPose(_num(ego, "phi", ln), _num(ego, "x", ln), _num(ego, "z", ln))
                truth = _list(obj, "truth", ln) if "truth" in obj else []
                frames.append(Frame(idx, _detections(_list(obj, "detections", ln), ln), pose,
                                    _flow(obj.get("flow"), dims, ln), _detections(truth, ln)))
            except ContractError as e:
                raise FormatError(str(e), ln) from None
        return SyntheticVideo(vid, dims, rate, frames, annotation)
    except ContractError as e:
        raise FormatError(str(e), 1) from None


def load_video(path) -> SyntheticVideo:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError:
        raise FormatError("file is not UTF-8 text") from None
    return parse_video(text.split("\n"))


# ---- checkpoints ----

MAGIC = b"FOLADCK\x00"
CKPT_VERSION = 1
_HEADER = struct.Struct("<8sIIIIIIII")   # magic, version, H, H_ego, horizon, width, height, count, crc


def checkpoint_bytes(params: ModelParams) -> bytes:
    c = params.config
    body = bytearray()
    for name, shape in param_shapes(c).items():
        raw = name.encode("ascii")
        body += struct.pack("<H", len(raw)) + raw + struct.pack("<B", len(shape))
        body += struct.pack(f"<{len(shape)}I", *shape)
        body += np.asarray(params[name], dtype="<f4").tobytes()
    n = len(param_shapes(c))
    head = _HEADER.pack(MAGIC, CKPT_VERSION, c.hidden_size, c.ego_hidden_size, c.horizon,
                        c.dims.width, c.dims.height, n, 0)
    crc = zlib.crc32(body, zlib.crc32(head))
    return _HEADER.pack(MAGIC, CKPT_VERSION, c.hidden_size, c.ego_hidden_size, c.horizon,
                        c.dims.width, c.dims.height, n, crc) + bytes(body)


def save_checkpoint(params: ModelParams, path) -> None:
    """Tensors are stored as little-endian float32."""
    atomic_write(path, checkpoint_bytes(params))


def read_checkpoint_header(data: bytes) -> ModelConfig:
    if len(data) < _HEADER.size:
        raise CheckpointError("file too short for a checkpoint header")
    magic, version, H, He, horizon, width, height, count, _ = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    if version != CKPT_VERSION:
        raise CheckpointError(f"checkpoint version {version} is not supported (expected {CKPT_VERSION})")
    try:
        return ModelConfig(H, He, horizon, FrameDims(width, height))
    except ContractError as e:
        raise CheckpointError(f"invalid header: {e}") from None


def parse_checkpoint(data: bytes, expected: ModelConfig | None = None) -> ModelParams:
    config = read_checkpoint_header(data)
    head = bytearray(data[:_HEADER.size])
    stored_crc = _HEADER.unpack_from(data)[-1]
    head[-4:] = b"\x00\x00\x00\x00"
    if zlib.crc32(data[_HEADER.size:], zlib.crc32(bytes(head))) != stored_crc:
        raise CheckpointError("checksum mismatch; the checkpoint is corrupt")
    if expected is not None and expected != config:
        raise CheckpointError(f"checkpoint holds {config}, expected {expected}")
    shapes = param_shapes(config)
    count = _HEADER.unpack_from(data)[-2]
    if count != len(shapes):
        raise CheckpointError(f"header lists {count} tensors, configuration needs {len(shapes)}")
    pos = _HEADER.size
    tensors = {}
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos:pos + n].decode("ascii")
            pos += n
            (ndim,) = struct.unpack_from("<B", data, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}I", data, pos)
            pos += 4 * ndim
            if shapes.get(name) != tuple(shape):
                raise CheckpointError(f"tensor {name!r} has shape {shape}, expected {shapes.get(name)}")
            size = int(np.prod(shape, dtype=np.int64)) * 4
            if pos + size > len(data):
                raise CheckpointError(f"tensor {name!r} is truncated")
            tensors[name] = np.frombuffer(data, dtype="<f4", count=size // 4, offset=pos).reshape(shape)
            pos += size
    except (struct.error, UnicodeDecodeError):
        raise CheckpointError("truncated or malformed tensor record") from None
    if pos != len(data):
        raise CheckpointError("trailing bytes after the last tensor")
    if set(tensors) != set(shapes):
        raise CheckpointError("duplicate or missing tensor names")
    if not all(np.all(np.isfinite(v)) for v in tensors.values()):
        raise CheckpointError("checkpoint holds non-finite values")
    return ModelParams(config, {k: v.astype(np.float64) for k, v in tensors.items()})


def load_checkpoint(path, expected: ModelConfig | None = None) -> ModelParams:
    return parse_checkpoint(Path(path).read_bytes(), expected)
