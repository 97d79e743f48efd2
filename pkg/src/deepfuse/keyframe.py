"""Keyframe selection: head/tail skipping, interval sampling, similarity dedup."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from .errors import DeepfuseError, FrameLoadFailure
from .imgcore import GrayImage, frame_similarity, load_image, resize

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".pgm")
_TIME_EPS = 1e-9


@dataclass(frozen=True)
class Frame:
    timestamp: float
    source: str


@dataclass(frozen=True)
class FrameSequence:
    frames: tuple
    fps: float = 30.0

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        if self.fps <= 0:
            raise ValueError("fps must be positive")
        ts = [f.timestamp for f in self.frames]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("frame timestamps must be strictly increasing")

    def __len__(self):
        return len(self.frames)

    @classmethod
    def from_paths(cls, paths: Sequence, fps: float = 30.0) -> "FrameSequence":
        return cls(tuple(Frame(i / fps, str(p)) for i, p in enumerate(paths)), fps)

    @classmethod
    def from_directory(cls, directory, fps: float = 30.0) -> "FrameSequence":
        paths = sorted(p for p in Path(directory).iterdir()
                       if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
        return cls.from_paths(paths, fps)

    @classmethod
    def from_manifest(cls, manifest, fps: float = 30.0) -> "FrameSequence":
        """Parse a manifest of ``path`` or ``timestamp<TAB>path`` lines.

        Relative paths resolve against the manifest's directory.  Lines without
        a timestamp get ``index / fps``.
        """
        manifest = Path(manifest)
        base = manifest.parent
        frames = []
        for line in manifest.read_text().splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "\t" in line:
                ts, path = line.split("\t", 1)
                t = float(ts)
            else:
                path, t = line, len(frames) / fps
            p = Path(path)
            frames.append(Frame(t, str(p if p.is_absolute() else base / p)))
        return cls(tuple(frames), fps)


@dataclass(frozen=True)
class KeyframePolicy:
    interval: float = 0.5
    skip_head: int = 10
    skip_tail: int = 10
    skip_enabled: bool = True
    # "only if necessary": when set, skipping is waived for sequences too
    # short to survive it
    skip_auto_disable: bool = False
    dedup_threshold: float = 0.05
    compare_size: tuple = (28, 28)

    def __post_init__(self):
        if self.interval <= 0:
            raise ValueError("interval must be > 0")
        if self.skip_head < 0 or self.skip_tail < 0:
            raise ValueError("skip counts must be >= 0")
        if not 0.0 <= self.dedup_threshold <= 1.0:
            raise ValueError("dedup_threshold must lie in [0, 1]")


@dataclass
class Decision:
    index: int
    source: str
    timestamp: float
    kept: bool
    similarity: float | None
    reason: str


@dataclass
class SelectionLog:
    decisions: list = field(default_factory=list)

    @property
    def kept(self):
        return [d for d in self.decisions if d.kept]

    def to_tsv(self) -> str:
        rows = ["index\ttimestamp\tsource\tdecision\tsimilarity\treason"]
        for d in self.decisions:
            sim = "" if d.similarity is None else f"{d.similarity:.6f}"
            rows.append(f"{d.index}\t{d.timestamp:.6f}\t{d.source}\t"
                        f"{'kept' if d.kept else 'dropped'}\t{sim}\t{d.reason}")
        return "\n".join(rows) + "\n"


def _load_frame(load, frame):
    try:
        return load(frame.source)
    except DeepfuseError as exc:
        raise FrameLoadFailure(frame.source, exc) from exc
    except OSError as exc:
        raise FrameLoadFailure(frame.source, exc) from exc


def select_keyframes(seq: FrameSequence, policy: KeyframePolicy = KeyframePolicy(),
                     load: Callable[[str], GrayImage] = load_image,
                     log_to: SelectionLog | None = None) -> list:
    """Return the kept keyframes (original resolution) in input order.

    Frames are compared at ``policy.compare_size`` against the last *kept*
    frame, so a long static shot collapses to a single keyframe.
    """
    n = len(seq)
    lo, hi = 0, n
    skip = policy.skip_enabled
    if skip and policy.skip_auto_disable and n <= policy.skip_head + policy.skip_tail:
        skip = False
    if skip:
        lo, hi = policy.skip_head, n - policy.skip_tail
    if log_to is not None:
        for i in list(range(0, min(lo, n))) + list(range(max(hi, lo), n)):
            f = seq.frames[i]
            log_to.decisions.append(Decision(i, f.source, f.timestamp, False, None, "skipped"))
    if hi <= lo:
        return []

    kept = []
    last_kept_small = None
    next_time = None
    cw, ch = policy.compare_size
    for i in range(lo, hi):
        f = seq.frames[i]
        if next_time is not None and f.timestamp < next_time - _TIME_EPS:
            if log_to is not None:
                log_to.decisions.append(Decision(i, f.source, f.timestamp, False, None, "interval"))
            continue
        next_time = f.timestamp + policy.interval
        img = _load_frame(load, f)
        small = resize(img, cw, ch)
        if last_kept_small is None:
            score, keep = None, True
        else:
            score = frame_similarity(small, last_kept_small)
            keep = score > policy.dedup_threshold
        if keep:
            kept.append(img)
            last_kept_small = small
        if log_to is not None:
            log_to.decisions.append(Decision(i, f.source, f.timestamp, keep, score,
                                             "sampled" if keep else "duplicate"))
    log.debug("kept %d of %d frames", len(kept), n)
    return kept
