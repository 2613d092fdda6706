"""History encoder: mark embedding, input features and a GRU over events."""

from __future__ import annotations

import numpy as np

from . import autograd as ag
from .autograd import ParamStore, Tensor

TIME_TRANSFORMS = ("log", "raw")
LOG_TIME_SHIFT = 1e-8


def embed_mark(table: np.ndarray, mark: int) -> np.ndarray:
    if not 0 <= mark < table.shape[0]:
        raise IndexError(f"mark {mark} out of range for {table.shape[0]} mark types")
    return table[mark].copy()


def time_feature(tau, transform: str = "log"):
    if transform == "log":
        return np.log(np.asarray(tau, dtype=np.float64) + LOG_TIME_SHIFT)
    if transform == "raw":
        return np.asarray(tau, dtype=np.float64)
    raise ValueError(f"unknown time transform {transform!r}")


def build_input(tau: float, mark_embedding: np.ndarray, transform: str = "log") -> np.ndarray:
    """Input vector ``(time feature, embedding)``; the time entry always comes first."""
    if tau <= 0:
        raise ValueError(f"inter-event time must be positive, got {tau}")
    return np.concatenate([[time_feature(tau, transform)], mark_embedding])


class GRUEncoder:
    """Maps padded ``(taus, marks)`` to history vectors ``h_0 .. h_L``.

    Row ``i`` of the output summarises events ``1..i`` and parametrises the
    distribution of event ``i + 1`` (or of the tail interval when ``i = N``).
    """

    def __init__(
        self,
        params: ParamStore,
        num_marks: int,
        emb_size: int,
        hidden_size: int,
        rng: np.random.Generator,
        time_transform: str = "log",
    ):
        if time_transform not in TIME_TRANSFORMS:
            raise ValueError(f"time_transform must be one of {TIME_TRANSFORMS}")
        self.num_marks = num_marks
        self.emb_size = emb_size
        self.hidden_size = hidden_size
        self.time_transform = time_transform
        H, I = hidden_size, 1 + emb_size
        bound = 1.0 / np.sqrt(H)
        self.embedding = params.add("encoder.embedding", rng.normal(0.0, 1.0, (num_marks, emb_size)))
        self.W = params.add("encoder.W_x", rng.uniform(-bound, bound, (I, 3 * H)))
        self.U = params.add("encoder.W_h", rng.uniform(-bound, bound, (H, 3 * H)))
        self.b_x = params.add("encoder.b_x", rng.uniform(-bound, bound, 3 * H))
        self.b_h = params.add("encoder.b_h", rng.uniform(-bound, bound, 3 * H))
        self.h0 = params.add("encoder.h0", np.zeros(H))

    def inputs(self, taus: np.ndarray, marks: np.ndarray) -> Tensor:
        """``[B, L, 1 + d_emb]`` input features; padded cells carry tau 0 and mark 0."""
        feat = time_feature(np.maximum(taus, 0.0), self.time_transform)[..., None]
        emb = ag.embedding(self.embedding, marks)
        return ag.concat([feat, emb], axis=-1)

    def __call__(self, taus: np.ndarray, marks: np.ndarray) -> Tensor:
        x = self.inputs(taus, marks)
        return ag.gru_scan(x, self.h0, self.W, self.U, self.b_x, self.b_h)

    def step(self, h: np.ndarray, tau: np.ndarray, marks: np.ndarray) -> np.ndarray:
        """Advance numpy states ``h [B, H]`` by one event each (no graph)."""
        x = np.concatenate(
            [time_feature(tau, self.time_transform)[:, None], self.embedding.data[marks]], axis=-1
        )
        h_new, *_ = ag.gru_step(x @ self.W.data + self.b_x.data, h, self.U.data, self.b_h.data)
        return h_new


def encode_prefixes(encoder: GRUEncoder, taus, marks) -> np.ndarray:
    """History vectors for a single sequence, shape ``[N + 1, d_h]``."""
    taus = np.asarray(taus, dtype=np.float64)[None, :]
    marks = np.asarray(marks, dtype=np.int64)[None, :]
    with ag.no_grad():
        return encoder(taus, marks).data[0]
