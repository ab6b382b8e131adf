"""Head-map encoding of a pair of head tracks.

For each of ``M`` frames sampled from the pair's common span, every visible
head becomes an isotropic 2D Gaussian on a 64x64 grid.  The Gaussian's
width scales with the head box size, so nearer (larger) heads spread wider.
The two target heads have amplitude 1; everyone else in the frame is drawn
at ``bystander_amplitude``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .kernels import render_gaussians

GRID = 64
DEFAULT_TRACK_LENGTH = 10
DEFAULT_MAP_LENGTH = 10


@dataclass(frozen=True)
class HeadBox:
    frame_index: int
    person_id: str
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError("head box needs positive width and height")
        object.__setattr__(self, "cx", float(min(1.0, max(0.0, self.cx))))
        object.__setattr__(self, "cy", float(min(1.0, max(0.0, self.cy))))
        object.__setattr__(self, "w", float(min(1.0, self.w)))
        object.__setattr__(self, "h", float(min(1.0, self.h)))


@dataclass(frozen=True)
class HeadTrack:
    person_id: str
    boxes: tuple[HeadBox, ...]

    def __post_init__(self):
        boxes = tuple(self.boxes)
        object.__setattr__(self, "boxes", boxes)
        if not boxes:
            raise ValueError("empty head track")
        for prev, cur in zip(boxes, boxes[1:]):
            if cur.frame_index != prev.frame_index + 1:
                raise ValueError(f"track {self.person_id}: frames not consecutive")
        if any(b.person_id != self.person_id for b in boxes):
            raise ValueError(f"track {self.person_id}: mixed person ids")

    @property
    def first_frame(self) -> int:
        return self.boxes[0].frame_index

    @property
    def last_frame(self) -> int:
        return self.boxes[-1].frame_index

    def box_at(self, frame: int) -> HeadBox | None:
        k = frame - self.first_frame
        return self.boxes[k] if 0 <= k < len(self.boxes) else None


class TrackPair(NamedTuple):
    first: HeadTrack
    second: HeadTrack
    involves_child: bool


@dataclass(frozen=True)
class HeadMapStack:
    maps: np.ndarray  # (64, 64, M)
    pair: tuple[str, str]
    bystanders: tuple[str, ...]
    frames: tuple[int, ...]


def overlap(a: HeadTrack, b: HeadTrack) -> tuple[int, int]:
    """Inclusive common frame span; empty when ``start > end``."""
    return max(a.first_frame, b.first_frame), min(a.last_frame, b.last_frame)


def enumerate_pairs(tracks: Sequence[HeadTrack], child_id,
                    tau: int = DEFAULT_TRACK_LENGTH) -> list[TrackPair]:
    """All unordered track pairs visible together for at least ``tau`` frames.

    Pairs that do not include ``child_id`` are still returned but flagged
    ``involves_child=False`` so callers can leave them out of the analysis.
    """
    out = []
    for a, b in itertools.combinations(tracks, 2):
        start, end = overlap(a, b)
        if end - start + 1 >= tau:
            out.append(TrackPair(a, b, child_id in (a.person_id, b.person_id)))
    return out


def sample_frames(start: int, end: int, M: int) -> list[int]:
    """``M`` frames spread uniformly over ``[start, end]``, both ends included."""
    length = end - start + 1
    if M < 1:
        raise ValueError("M must be >= 1")
    if M > length:
        raise ValueError(f"M={M} exceeds the common track length {length}")
    if M == 1:
        return [start]
    return [start + int(round(k * (length - 1) / (M - 1))) for k in range(M)]


def gaussian_sigma(box: HeadBox, k: float = 0.5, size: int = GRID) -> float:
    return k * max(box.w, box.h) * size


def render_frame(heads: Sequence[tuple[HeadBox, float]], k: float = 0.5,
                 additive: bool = True, size: int = GRID) -> np.ndarray:
    """One grid from ``(box, amplitude)`` pairs."""
    if not heads:
        return np.zeros((size, size))
    xs = [b.cx * size for b, _ in heads]
    ys = [b.cy * size for b, _ in heads]
    sig = [gaussian_sigma(b, k, size) for b, _ in heads]
    amp = [a for _, a in heads]
    return render_gaussians(size, xs, ys, sig, amp, additive)


def build_headmap(pair: tuple[HeadTrack, HeadTrack], others: Sequence[HeadTrack] = (),
                  M: int = DEFAULT_MAP_LENGTH, k: float = 0.5,
                  bystander_amplitude: float = 0.5, additive: bool = True) -> HeadMapStack:
    a, b = pair[0], pair[1]
    start, end = overlap(a, b)
    frames = sample_frames(start, end, M)
    maps = np.empty((GRID, GRID, M))
    seen = []
    for m, frame in enumerate(frames):
        heads = [(a.box_at(frame), 1.0), (b.box_at(frame), 1.0)]
        for t in others:
            box = t.box_at(frame)
            if box is not None:
                heads.append((box, bystander_amplitude))
                if t.person_id not in seen:
                    seen.append(t.person_id)
        maps[:, :, m] = render_frame(heads, k, additive)
    return HeadMapStack(maps, (a.person_id, b.person_id), tuple(seen), tuple(frames))


def format_headmap_csv(stack: HeadMapStack) -> str:
    """Row-major CSV, one 64-line block per map, blocks separated by a blank line."""
    blocks = []
    for m in range(stack.maps.shape[2]):
        grid = stack.maps[:, :, m]
        blocks.append("\n".join(",".join(repr(float(v)) for v in row) for row in grid))
    return "\n\n".join(blocks) + "\n"


def parse_headmap_csv(text: str) -> np.ndarray:
    blocks = [b for b in text.strip().split("\n\n") if b.strip()]
    grids = [np.array([[float(v) for v in line.split(",")] for line in b.splitlines()])
             for b in blocks]
    return np.stack(grids, axis=2)
