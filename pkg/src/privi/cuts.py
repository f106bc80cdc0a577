"""Hard-cut detection by frame-to-frame content delta.

A cut is declared at frame t when the mean absolute per-pixel difference of
the hue/saturation/luma channels between frames t-1 and t (downscaled to at
most 256 px width) exceeds the threshold. The threshold lives on a 0-255
scale; 27 is the default. Unreadable frames are skipped with a warning and
never produce a phantom cut: comparison restarts at the next pair of
consecutive readable frames.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation
from .frames import FrameSource, downscale_width, rgb_to_hsv255

log = logging.getLogger(__name__)

DEFAULT_CUT_THRESHOLD = 27.0


@dataclass
class CutList:
    video_ref: str
    cut_frames: list[int]
    fps: float

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.cut_frames, self.cut_frames[1:])):
            raise ContractViolation("cut frames must be strictly increasing")
        if self.fps <= 0:
            raise ContractViolation("fps must be positive")

    def cut_times(self) -> list[float]:
        return [f / self.fps for f in self.cut_frames]

    def to_dict(self) -> dict:
        return {"video_ref": self.video_ref, "cut_frames": self.cut_frames, "fps": self.fps}

    @classmethod
    def from_dict(cls, d: dict) -> "CutList":
        return cls(video_ref=d["video_ref"], cut_frames=list(d["cut_frames"]), fps=d["fps"])


def frame_delta(a: np.ndarray, b: np.ndarray) -> float:
    """Mean |HSV delta| over pixels and channels, 0-255 scale."""
    ha = rgb_to_hsv255(downscale_width(a))
    hb = rgb_to_hsv255(downscale_width(b))
    return float(np.mean(np.abs(ha - hb)))


def detect_cuts(source: FrameSource, threshold: float = DEFAULT_CUT_THRESHOLD,
                video_ref: str = "") -> CutList:
    """Scan a frame source and return the list of hard-cut frame indices."""
    n = len(source)
    if n < 2:
        raise ContractViolation("cut detection needs at least 2 frames")
    cuts: list[int] = []
    prev: np.ndarray | None = None
    for idx, frame in enumerate(source.frames()):
        if frame is None:
            log.warning("skipping unreadable frame %d of %s", idx, video_ref or "<video>")
            prev = None
            continue
        if prev is not None and frame_delta(prev, frame) > threshold:
            cuts.append(idx)
        prev = frame
    return CutList(video_ref=video_ref, cut_frames=cuts, fps=source.fps)
