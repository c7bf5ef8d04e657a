"""Input checks shared by the estimators and the CLI."""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.utils import check_array, column_or_1d

from .exceptions import ContractError
from .scoring import METHODS
from .video import SyntheticVideo


def check_videos(videos, require_frames: bool = True) -> list[SyntheticVideo]:
    """A non-empty list of videos sharing one frame size."""
    if isinstance(videos, SyntheticVideo):
        videos = [videos]
    videos = list(videos)
    if not videos:
        raise ContractError("expected at least one video")
    for v in videos:
        if not isinstance(v, SyntheticVideo):
            raise ContractError(f"expected SyntheticVideo, got {type(v).__name__}")
    dims = {v.dims for v in videos}
    if len(dims) > 1:
        raise ContractError(f"videos have different frame sizes: {sorted(map(str, dims))}")
    if require_frames and all(len(v) == 0 for v in videos):
        raise ContractError("every video is empty")
    return videos


def check_scores(scores, labels=None):
    """Finite 1-d float scores, and 0/1 labels of the same length when given."""
    s = column_or_1d(check_array(np.asarray(scores, dtype=np.float64).reshape(-1, 1),
                                 ensure_min_samples=1))
    if labels is None:
        return s
    y = column_or_1d(labels)
    if y.shape != s.shape:
        raise ContractError(f"{s.size} scores but {y.size} labels")
    if not np.all(np.isin(y, (0, 1))):
        raise ContractError("labels must be 0 or 1")
    return s, y.astype(np.int8)


def check_positive_int(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < 1:
        raise ContractError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_positive(value, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, numbers.Real) or not value > 0:
        raise ContractError(f"{name} must be a positive number, got {value!r}")
    return float(value)


def check_fraction(value, name: str, open_interval: bool = False) -> float:
    v = float(value)
    ok = 0.0 < v < 1.0 if open_interval else 0.0 <= v <= 1.0
    if not ok:
        raise ContractError(f"{name} must lie in {'(0, 1)' if open_interval else '[0, 1]'}, got {value!r}")
    return v


def check_method(method: str) -> str:
    if method not in METHODS:
        raise ContractError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    return method
