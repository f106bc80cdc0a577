"""Frame sources: how the pipeline obtains video frames.

Video decoding stays outside the core. Three sources are provided:
directories of numbered frames, in-memory arrays (tests and synthetic
corpora), and a decoder subprocess for real codecs. A Keyframe pairs the
RGB pixel array with provenance metadata; synthetic providers key off that
metadata.
"""

from __future__ import annotations

import logging
import struct
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator

import numpy as np

from .errors import ContractViolation, ProviderError

log = logging.getLogger(__name__)


@dataclass
class Keyframe:
    image: np.ndarray  # (H, W, 3) uint8 RGB
    video_ref: str
    time_s: float
    meta: dict = field(default_factory=dict)

    @property
    def height(self) -> int:
        return self.image.shape[0]

    @property
    def width(self) -> int:
        return self.image.shape[1]


class FrameSource:
    """Sequential access to one video's frames."""

    fps: float

    def __len__(self) -> int:  # number of frames
        raise NotImplementedError

    def frames(self) -> Iterator[np.ndarray | None]:
        """Yield frames in order; None marks an unreadable frame."""
        raise NotImplementedError

    def frame_at(self, index: int) -> np.ndarray:
        raise NotImplementedError

    @property
    def duration_s(self) -> float:
        return len(self) / self.fps


class ArrayFrameSource(FrameSource):
    """Frames already in memory (fixtures and unit tests)."""

    def __init__(self, frames: list[np.ndarray | None], fps: float):
        if fps <= 0:
            raise ContractViolation("fps must be positive")
        self._frames = frames
        self.fps = float(fps)

    def __len__(self) -> int:
        return len(self._frames)

    def frames(self) -> Iterator[np.ndarray | None]:
        yield from self._frames

    def frame_at(self, index: int) -> np.ndarray:
        frame = self._frames[index]
        if frame is None:
            raise ProviderError(f"frame {index} unreadable")
        return frame


class GeneratedFrameSource(FrameSource):
    """Frames computed on demand by a callable (procedural synthetic videos)."""

    def __init__(self, n_frames: int, fps: float, render: Callable[[int], np.ndarray]):
        self.fps = float(fps)
        self._n = int(n_frames)
        self._render = render

    def __len__(self) -> int:
        return self._n

    def frames(self) -> Iterator[np.ndarray | None]:
        for i in range(self._n):
            yield self._render(i)

    def frame_at(self, index: int) -> np.ndarray:
        if not 0 <= index < self._n:
            raise ContractViolation(f"frame index {index} outside [0, {self._n})")
        return self._render(index)


class DirFrameSource(FrameSource):
    """Directory of numbered image frames (000000.png, 000001.png, ...)."""

    def __init__(self, directory: str | Path, fps: float):
        from PIL import Image  # local import keeps PIL optional at module load

        self._Image = Image
        self.dir = Path(directory)
        self.fps = float(fps)
        self._paths = sorted(self.dir.glob("*.png")) + sorted(self.dir.glob("*.jpg"))
        if not self._paths:
            raise ContractViolation(f"no frames found in {self.dir}")

    def __len__(self) -> int:
        return len(self._paths)

    def _read(self, path: Path) -> np.ndarray | None:
        try:
            with self._Image.open(path) as im:
                return np.asarray(im.convert("RGB"), dtype=np.uint8)
        except Exception as exc:  # decode failures degrade to a skipped frame
            log.warning("unreadable frame %s: %s", path, exc)
            return None

    def frames(self) -> Iterator[np.ndarray | None]:
        for p in self._paths:
            yield self._read(p)

    def frame_at(self, index: int) -> np.ndarray:
        frame = self._read(self._paths[index])
        if frame is None:
            raise ProviderError(f"frame {self._paths[index]} unreadable")
        return frame


class DecoderSubprocess:
    """Keyframe fetch through an external decoder process.

    Protocol: one request line "<video_ref>\t<timestamp_s>" on stdin; the
    decoder answers with 8 bytes (u32 width, u32 height, little-endian)
    followed by width*height*3 bytes of packed RGB8 on stdout.
    """

    def __init__(self, command: list[str]):
        self.command = list(command)
        self._proc: subprocess.Popen | None = None

    def _ensure(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(
                self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE)
        return self._proc

    def fetch(self, video_ref: str, time_s: float) -> np.ndarray:
        proc = self._ensure()
        try:
            proc.stdin.write(f"{video_ref}\t{time_s:.6f}\n".encode("utf-8"))
            proc.stdin.flush()
            header = proc.stdout.read(8)
            if len(header) != 8:
                raise ProviderError("decoder closed the stream mid-response")
            width, height = struct.unpack("<II", header)
            payload = proc.stdout.read(width * height * 3)
            if len(payload) != width * height * 3:
                raise ProviderError("short decoder payload")
            return np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3).copy()
        except BrokenPipeError as exc:
            raise ProviderError(f"decoder process died: {exc}") from exc

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.stdin.close()
            self._proc.wait(timeout=5)


def rgb_to_hsv255(frame: np.ndarray) -> np.ndarray:
    """Vectorized RGB -> HSV with all channels scaled to 0..255.

    Hue maps the full circle onto 0..255 (unlike OpenCV's 0..179).
    """
    rgb = frame.astype(np.float64) / 255.0
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = np.max(rgb, axis=-1)
    minc = np.min(rgb, axis=-1)
    delta = maxc - minc

    h = np.zeros_like(maxc)
    nonzero = delta > 0
    rmax = nonzero & (maxc == r)
    gmax = nonzero & (maxc == g) & ~rmax
    bmax = nonzero & ~rmax & ~gmax
    with np.errstate(invalid="ignore", divide="ignore"):
        h[rmax] = (((g - b)[rmax] / delta[rmax]) % 6.0) / 6.0
        h[gmax] = (((b - r)[gmax] / delta[gmax]) + 2.0) / 6.0
        h[bmax] = (((r - g)[bmax] / delta[bmax]) + 4.0) / 6.0

    s = np.where(maxc > 0, delta / np.where(maxc > 0, maxc, 1.0), 0.0)
    return np.stack([h * 255.0, s * 255.0, maxc * 255.0], axis=-1)


def downscale_width(frame: np.ndarray, max_width: int = 256) -> np.ndarray:
    """Stride-subsample so width <= max_width (deterministic, no filtering)."""
    width = frame.shape[1]
    if width <= max_width:
        return frame
    stride = int(np.ceil(width / max_width))
    return frame[::stride, ::stride]
