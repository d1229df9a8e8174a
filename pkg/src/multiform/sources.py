"""Frame sources: synthetic counters, image directories, raw byte pipes.

The raw protocol carries uncompressed frames over any byte pipe: a
16-byte header (magic "MFHR", then width, height and frame index as
little-endian u32) followed by width*height*3 bytes of RGB. Codec
decoding stays outside this package; an external decoder (ffmpeg, a
camera daemon) feeds the pipe.
"""

from __future__ import annotations

import struct
import sys
from pathlib import Path
from typing import BinaryIO, Iterator

import numpy as np

from .config import SourceConfig, StreamConfig
from .detection import Frame
from .errors import FixtureError, ProtocolError

RAW_MAGIC = b"MFHR"
_HEADER = struct.Struct("<4sIII")  # magic, width, height, frame_index


def write_raw_frame(stream: BinaryIO, pixels: np.ndarray, frame_index: int):
    """Emit one frame in the raw pipe format (feeder-side helper)."""
    h, w = pixels.shape[:2]
    stream.write(_HEADER.pack(RAW_MAGIC, w, h, frame_index))
    stream.write(np.ascontiguousarray(pixels, dtype=np.uint8).tobytes())


def read_raw_frames(stream: BinaryIO, stream_id: str, fps: float = 25.0) -> Iterator[Frame]:
    """Yield frames from a raw-protocol byte stream until EOF."""
    while True:
        header = stream.read(_HEADER.size)
        if not header:
            return
        if len(header) < _HEADER.size:
            raise ProtocolError(
                f"stream {stream_id}: truncated header ({len(header)} of {_HEADER.size} bytes)"
            )
        magic, width, height, frame_index = _HEADER.unpack(header)
        if magic != RAW_MAGIC:
            raise ProtocolError(
                f"stream {stream_id}: bad magic {magic!r} (expected {RAW_MAGIC!r})"
            )
        if width == 0 or height == 0:
            raise ProtocolError(f"stream {stream_id}: zero-sized frame {width}x{height}")
        payload = stream.read(width * height * 3)
        if len(payload) < width * height * 3:
            raise ProtocolError(
                f"stream {stream_id}: truncated frame {frame_index} "
                f"({len(payload)} of {width * height * 3} bytes)"
            )
        pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)
        yield Frame(
            stream_id=stream_id,
            index=frame_index,
            width=width,
            height=height,
            timestamp_ms=frame_index * 1000.0 / fps,
            pixels=pixels,
        )


def synthetic_frames(
    stream_id: str, count: int, width: int, height: int, fps: float = 25.0
) -> Iterator[Frame]:
    """Pixel-less frames for scripted runs and benchmarks."""
    for i in range(count):
        yield Frame(
            stream_id=stream_id,
            index=i,
            width=width,
            height=height,
            timestamp_ms=i * 1000.0 / fps,
            pixels=None,
        )


def directory_frames(
    stream_id: str,
    directory: Path,
    manifest_name: str | None = None,
    fps: float = 25.0,
) -> Iterator[Frame]:
    """Frames listed in a manifest inside an image directory.

    Manifest lines: `<frame_index> <filename> [timestamp_ms]`, `#`
    comments. Images load as RGB via PIL.
    """
    from PIL import Image

    directory = Path(directory)
    manifest = directory / (manifest_name or "manifest.txt")
    try:
        lines = manifest.read_text().splitlines()
    except OSError as e:
        raise FixtureError(f"cannot read manifest {manifest}: {e}") from e
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (2, 3):
            raise FixtureError(
                f"{manifest}:{lineno}: expected '<frame_index> <filename> [timestamp_ms]'"
            )
        try:
            index = int(parts[0])
            timestamp = float(parts[2]) if len(parts) == 3 else index * 1000.0 / fps
        except ValueError as e:
            raise FixtureError(f"{manifest}:{lineno}: {e}") from e
        image_path = directory / parts[1]
        try:
            with Image.open(image_path) as img:
                pixels = np.asarray(img.convert("RGB"))
        except OSError as e:
            raise FixtureError(f"{manifest}:{lineno}: cannot load {image_path}: {e}") from e
        yield Frame(
            stream_id=stream_id,
            index=index,
            width=pixels.shape[1],
            height=pixels.shape[0],
            timestamp_ms=timestamp,
            pixels=pixels,
        )


def open_source(stream: StreamConfig, base_dir: Path) -> Iterator[Frame]:
    src: SourceConfig = stream.source
    if src.kind == "synthetic":
        return synthetic_frames(stream.id, src.frames or 0, src.width, src.height, src.fps)
    if src.kind == "directory":
        path = Path(src.path)
        if not path.is_absolute():
            path = base_dir / path
        return directory_frames(stream.id, path, src.manifest, src.fps)
    if src.kind == "pipe":
        if src.path == "-":
            return read_raw_frames(sys.stdin.buffer, stream.id, src.fps)
        path = Path(src.path)
        if not path.is_absolute():
            path = base_dir / path
        return read_raw_frames(open(path, "rb"), stream.id, src.fps)
    raise FixtureError(f"unknown source kind {src.kind!r}")
