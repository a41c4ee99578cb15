"""Turning a raw frame sequence into an ordered set of expression snippets.

The path for one video is::

    unify_length -> sample_window -> decompose -> sample_snippet (per sub-video)

followed, during training, by ``shuffle_snippets`` with an entry of a fixed
:class:`PermutationTable`. All randomness goes through explicit
``numpy.random.Generator`` objects; :func:`video_rng` derives an independent
stream per (seed, epoch, video id).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import CapacityError, StateError, ValidationError


@dataclass(frozen=True)
class PipelineConfig:
    target_frames: int = 105
    window: int = 75
    start_range: int = 30
    subvideo_len: int = 15
    overlap: int = 5
    n: int = 7
    J: int = 5
    num_shuffle_types: int = 10

    def __post_init__(self):
        stride = self.subvideo_len - self.overlap
        if stride <= 0:
            raise ValidationError("overlap must be smaller than the sub-video length")
        if (self.n - 1) * stride + self.subvideo_len != self.window:
            raise ValidationError(
                f"{self.n} sub-videos of {self.subvideo_len} frames with overlap "
                f"{self.overlap} do not tile a {self.window}-frame window")
        if self.start_range < 1 or self.start_range - 1 + self.window > self.target_frames:
            raise ValidationError("window starting positions overrun the unified length")
        if not 1 <= self.J <= self.subvideo_len:
            raise ValidationError("J must lie in [1, subvideo_len]")

    @property
    def stride(self) -> int:
        return self.subvideo_len - self.overlap


@dataclass
class Video:
    frames: np.ndarray  # T x H x W x C
    label: int
    id: int = 0

    def __post_init__(self):
        if self.frames.ndim != 4:
            raise ValidationError(f"video frames must be T x H x W x C, got {self.frames.shape}")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    def with_frames(self, frames: np.ndarray) -> Video:
        return replace(self, frames=frames)


@dataclass
class Snippet:
    frames: np.ndarray  # J x H x W x C
    source_indices: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.source_indices) <= 0):
            raise ValidationError("snippet source indices must be strictly increasing")


@dataclass
class SnippetSet:
    snippets: list[Snippet]
    order_label: int | None = None
    video_id: int = 0
    label: int = 0

    @property
    def frames(self) -> np.ndarray:
        """Stacked frames, n x J x H x W x C."""
        return np.stack([s.frames for s in self.snippets])

    def __len__(self) -> int:
        return len(self.snippets)


@dataclass(frozen=True)
class PermutationTable:
    permutations: tuple[tuple[int, ...], ...]
    seed: int | None = None

    def __len__(self) -> int:
        return len(self.permutations)

    def __getitem__(self, i: int) -> tuple[int, ...]:
        return self.permutations[i]

    @property
    def n(self) -> int:
        return len(self.permutations[0])


def video_rng(seed: int, video_id: int, epoch: int = 0) -> np.random.Generator:
    """Independent stream for one video in one epoch, stable under worker scheduling."""
    return np.random.default_rng(np.random.SeedSequence([seed, epoch, video_id]))


def unify_length(video: Video, target: int = 105) -> Video:
    """Resample to exactly ``target`` frames.

    Longer videos are clipped by uniform index subsampling; shorter ones are
    linearly interpolated in time, per pixel.
    """
    t = video.num_frames
    if t < 2:
        raise ValidationError(f"video {video.id} has {t} frame(s); at least 2 are required")
    if t == target:
        return video
    pos = np.arange(target) * (t - 1) / (target - 1)
    if t > target:
        return video.with_frames(video.frames[np.rint(pos).astype(int)])
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, t - 1)
    w = (pos - lo).astype(video.frames.dtype)[:, None, None, None]
    a, b = video.frames[lo], video.frames[hi]
    return video.with_frames(a + w * (b - a))


def sample_window(video: Video, rng: np.random.Generator | None = None,
                  cfg: PipelineConfig = PipelineConfig(), start: int | None = None) -> Video:
    if video.num_frames != cfg.target_frames:
        raise ValidationError(
            f"window sampling needs {cfg.target_frames} frames, got {video.num_frames}")
    if start is None:
        start = int(rng.integers(0, cfg.start_range))
    elif not 0 <= start < cfg.start_range:
        raise ValidationError(f"start {start} outside [0, {cfg.start_range})")
    return video.with_frames(video.frames[start:start + cfg.window])


def subvideo_indices(cfg: PipelineConfig = PipelineConfig()) -> list[np.ndarray]:
    """Window-relative frame indices of each overlapping sub-video."""
    return [np.arange(k * cfg.stride, k * cfg.stride + cfg.subvideo_len) for k in range(cfg.n)]


def decompose(window: Video, cfg: PipelineConfig = PipelineConfig()) -> list[Video]:
    if window.num_frames != cfg.window:
        raise ValidationError(f"decompose needs {cfg.window} frames, got {window.num_frames}")
    return [window.with_frames(window.frames[idx]) for idx in subvideo_indices(cfg)]


def sample_snippet(subvideo: Video, rng: np.random.Generator | None = None,
                   cfg: PipelineConfig = PipelineConfig(), draw=None) -> Snippet:
    """Pick J distinct frames uniformly without replacement, kept in temporal order."""
    if draw is None:
        draw = rng.choice(subvideo.num_frames, size=cfg.J, replace=False)
    idx = np.sort(np.asarray(draw, dtype=int))
    return Snippet(subvideo.frames[idx], idx)


def make_snippet_set(video: Video, rng: np.random.Generator,
                     cfg: PipelineConfig = PipelineConfig()) -> SnippetSet:
    window = sample_window(unify_length(video, cfg.target_frames), rng, cfg)
    snippets = [sample_snippet(sub, rng, cfg) for sub in decompose(window, cfg)]
    return SnippetSet(snippets, None, video.id, video.label)


def generate_permutation_table(n: int = 7, count: int = 10, seed: int = 0) -> PermutationTable:
    """``count`` distinct non-identity permutations of ``range(n)``, reproducible by seed."""
    if count > math.factorial(n) - 1:
        raise CapacityError(f"only {math.factorial(n) - 1} non-identity orders exist for n={n}")
    rng = np.random.default_rng(seed)
    identity = tuple(range(n))
    seen: set[tuple[int, ...]] = set()
    perms: list[tuple[int, ...]] = []
    while len(perms) < count:
        p = tuple(int(i) for i in rng.permutation(n))
        if p != identity and p not in seen:
            seen.add(p)
            perms.append(p)
    return PermutationTable(tuple(perms), seed)


def shuffle_snippets(snippet_set: SnippetSet, perm_index: int,
                     table: PermutationTable) -> SnippetSet:
    """Position i of the result holds the snippet at ``table[perm_index][i]``."""
    if snippet_set.order_label is not None:
        raise StateError("snippet set is already shuffled")
    if not 0 <= perm_index < len(table):
        raise ValidationError(f"permutation index {perm_index} outside table of {len(table)}")
    perm = table[perm_index]
    if len(perm) != len(snippet_set):
        raise ValidationError(f"permutation of {len(perm)} applied to {len(snippet_set)} snippets")
    return SnippetSet([snippet_set.snippets[i] for i in perm], perm_index,
                      snippet_set.video_id, snippet_set.label)


def unshuffle_snippets(snippet_set: SnippetSet, table: PermutationTable) -> SnippetSet:
    if snippet_set.order_label is None:
        return snippet_set
    inverse = np.argsort(table[snippet_set.order_label])
    return SnippetSet([snippet_set.snippets[i] for i in inverse], None,
                      snippet_set.video_id, snippet_set.label)
