"""Event sequences, JSON-lines persistence, splitting and padded batches."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class ValidationError(ValueError):
    pass


class DatasetParseError(ValueError):
    pass


@dataclass(frozen=True)
class InterEventView:
    taus: np.ndarray
    tail_gap: float


@dataclass(frozen=True)
class EventSequence:
    """Arrival times and 0-based marks observed on ``[t_start, t_end]``."""

    arrival_times: np.ndarray
    marks: np.ndarray
    t_start: float = 0.0
    t_end: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "arrival_times", np.asarray(self.arrival_times, dtype=np.float64))
        object.__setattr__(self, "marks", np.asarray(self.marks, dtype=np.int64))
        object.__setattr__(self, "t_start", float(self.t_start))
        object.__setattr__(self, "t_end", float(self.t_end))

    def __len__(self) -> int:
        return len(self.arrival_times)

    def validate(self, num_marks: int | None = None, index: int | None = None):
        where = "" if index is None else f"sequence {index}: "
        t, m = self.arrival_times, self.marks
        if t.ndim != 1 or m.ndim != 1 or len(t) != len(m):
            raise ValidationError(f"{where}arrival_times and marks must be 1-D of equal length")
        if not (math.isfinite(self.t_start) and math.isfinite(self.t_end)) or self.t_end < self.t_start:
            raise ValidationError(f"{where}invalid window [{self.t_start}, {self.t_end}]")
        if len(t):
            if not np.all(np.isfinite(t)):
                raise ValidationError(f"{where}non-finite arrival time")
            if t[0] < self.t_start or t[-1] > self.t_end:
                raise ValidationError(f"{where}arrival times outside [{self.t_start}, {self.t_end}]")
            if np.any(np.diff(t) <= 0):
                raise ValidationError(f"{where}arrival times are not strictly increasing")
            if t[0] <= self.t_start:
                raise ValidationError(f"{where}first event coincides with t_start (zero inter-event time)")
            if m.min() < 0:
                raise ValidationError(f"{where}negative mark")
            if num_marks is not None and m.max() >= num_marks:
                raise ValidationError(f"{where}mark {int(m.max())} >= num_marks {num_marks}")

    def inter_event(self) -> InterEventView:
        t = self.arrival_times
        prev = np.concatenate([[self.t_start], t[:-1]]) if len(t) else np.zeros(0)
        last = t[-1] if len(t) else self.t_start
        return InterEventView(taus=t - prev, tail_gap=float(self.t_end - last))

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    def to_json(self) -> dict:
        return {
            "arrival_times": self.arrival_times.tolist(),
            "marks": self.marks.tolist(),
            "t_start": self.t_start,
            "t_end": self.t_end,
        }

    @classmethod
    def from_taus(cls, taus, marks, tail_gap: float, t_start: float = 0.0) -> "EventSequence":
        taus = np.asarray(taus, dtype=np.float64)
        times = t_start + np.cumsum(taus)
        last = times[-1] if len(times) else t_start
        return cls(times, marks, t_start, last + tail_gap)


@dataclass
class Dataset:
    sequences: list[EventSequence]
    num_marks: int
    time_scale: float = 1.0

    def __post_init__(self):
        if self.num_marks < 1:
            raise ValidationError("num_marks must be >= 1")
        for i, s in enumerate(self.sequences):
            s.validate(self.num_marks, i)

    def __len__(self) -> int:
        return len(self.sequences)

    def __getitem__(self, i):
        return self.sequences[i]

    @property
    def num_events(self) -> int:
        return sum(len(s) for s in self.sequences)

    @property
    def total_time(self) -> float:
        return float(sum(s.duration for s in self.sequences))

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return Dataset([self.sequences[i] for i in indices], self.num_marks, self.time_scale)


def _dedup(times: np.ndarray, jitter: float) -> np.ndarray:
    out = times.copy()
    for i in range(1, len(out)):
        if out[i] <= out[i - 1]:
            out[i] = out[i - 1] + jitter
    return out


def load_dataset(
    path,
    time_scale: float = 1.0,
    num_marks: int | None = None,
    dedup_jitter: float | None = None,
) -> Dataset:
    """Read a JSON-lines file with one sequence per line.

    Every time (events and window) is multiplied by ``time_scale``. ``num_marks``
    defaults to ``1 + max mark``. With ``dedup_jitter`` set, ties between
    consecutive timestamps (including a first event at ``t_start``) are broken by
    that spacing instead of being rejected.
    """
    if time_scale <= 0:
        raise ValueError("time_scale must be positive")
    seqs: list[EventSequence] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                times = np.asarray(rec["arrival_times"], dtype=np.float64) * time_scale
                marks = np.asarray(rec["marks"], dtype=np.int64)
                t_start = float(rec["t_start"]) * time_scale
                t_end = float(rec["t_end"]) * time_scale
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DatasetParseError(f"{path}:{lineno}: {exc}") from exc
            if dedup_jitter is not None and len(times):
                times = _dedup(np.concatenate([[t_start], times]), dedup_jitter)[1:]
            seqs.append(EventSequence(times, marks, t_start, t_end))
    for i, s in enumerate(seqs):
        s.validate(None, i)
    if num_marks is None:
        num_marks = 1 + max((int(s.marks.max()) for s in seqs if len(s)), default=0)
    return Dataset(seqs, num_marks, time_scale)


def save_dataset(dataset: Dataset | Sequence[EventSequence], path, time_scale: float | None = None):
    """Write sequences as JSON lines, undoing ``time_scale`` when given."""
    seqs = dataset.sequences if isinstance(dataset, Dataset) else dataset
    if time_scale is None:
        time_scale = dataset.time_scale if isinstance(dataset, Dataset) else 1.0
    with open(path, "w", encoding="utf-8") as fh:
        for s in seqs:
            rec = s.to_json()
            if time_scale != 1.0:
                rec["arrival_times"] = (s.arrival_times / time_scale).tolist()
                rec["t_start"] = s.t_start / time_scale
                rec["t_end"] = s.t_end / time_scale
            fh.write(json.dumps(rec) + "\n")


def split_sizes(n: int, fractions=(0.6, 0.2, 0.2)) -> tuple[int, int, int]:
    """Floor the train and validation shares; the remainder goes to test."""
    n_train = int(math.floor(n * fractions[0] + 1e-9))
    n_val = int(math.floor(n * fractions[1] + 1e-9))
    return n_train, n_val, n - n_train - n_val


def split_indices(n: int, fractions=(0.6, 0.2, 0.2), seed: int = 0) -> dict[str, list[int]]:
    if n < 1:
        raise ValueError("cannot split an empty dataset")
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9 or min(fractions) < 0:
        raise ValueError(f"fractions must be three non-negative shares summing to 1, got {fractions}")
    order = np.random.default_rng(seed).permutation(n)
    n_train, n_val, _ = split_sizes(n, fractions)
    return {
        "train": sorted(order[:n_train].tolist()),
        "val": sorted(order[n_train : n_train + n_val].tolist()),
        "test": sorted(order[n_train + n_val :].tolist()),
    }


def split(dataset: Dataset, fractions=(0.6, 0.2, 0.2), seed: int = 0) -> tuple[Dataset, Dataset, Dataset]:
    idx = split_indices(len(dataset), fractions, seed)
    return dataset.subset(idx["train"]), dataset.subset(idx["val"]), dataset.subset(idx["test"])


def save_split(indices: dict[str, list[int]], path, seed: int | None = None):
    payload = dict(indices)
    if seed is not None:
        payload["seed"] = seed
    Path(path).write_text(json.dumps(payload))


def load_split(path) -> dict[str, list[int]]:
    payload = json.loads(Path(path).read_text())
    return {k: payload[k] for k in ("train", "val", "test")}


@dataclass(frozen=True)
class Batch:
    """Zero-padded inter-event times and marks for ``B`` sequences."""

    padded_taus: np.ndarray
    padded_marks: np.ndarray
    lengths: np.ndarray
    tail_gaps: np.ndarray
    durations: np.ndarray = field(default=None)

    @property
    def size(self) -> int:
        return len(self.lengths)

    @property
    def max_len(self) -> int:
        return self.padded_taus.shape[1]

    def mask(self) -> np.ndarray:
        """``[B, L]`` boolean mask of real (non-padded) events."""
        return np.arange(self.max_len)[None, :] < self.lengths[:, None]

    def unbatch(self) -> list[tuple[np.ndarray, np.ndarray, float]]:
        return [
            (self.padded_taus[b, :n].copy(), self.padded_marks[b, :n].copy(), float(self.tail_gaps[b]))
            for b, n in enumerate(self.lengths)
        ]


def collate(sequences: Sequence[EventSequence]) -> Batch:
    lengths = np.array([len(s) for s in sequences], dtype=np.int64)
    L = int(lengths.max()) if len(lengths) else 0
    taus = np.zeros((len(sequences), L))
    marks = np.zeros((len(sequences), L), dtype=np.int64)
    tails = np.zeros(len(sequences))
    for b, s in enumerate(sequences):
        view = s.inter_event()
        n = len(s)
        taus[b, :n] = view.taus
        marks[b, :n] = s.marks
        tails[b] = view.tail_gap
    durations = np.array([s.duration for s in sequences])
    return Batch(taus, marks, lengths, tails, durations)


def make_batches(dataset: Dataset | Sequence[EventSequence], batch_size: int, shuffle_seed: int | None = None) -> list[Batch]:
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    seqs = dataset.sequences if isinstance(dataset, Dataset) else list(dataset)
    order = np.arange(len(seqs))
    if shuffle_seed is not None:
        order = np.random.default_rng(shuffle_seed).permutation(len(seqs))
    return [collate([seqs[i] for i in order[j : j + batch_size]]) for j in range(0, len(seqs), batch_size)]
