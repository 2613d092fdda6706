"""Sequence negative log-likelihood for every decoder kind.

For a sequence with inter-event times ``tau_1..tau_N`` and tail gap ``T - t_N``::

    NLL = -sum_i log f_i(tau_i, m_i) - log S_{N+1}(T - t_N)

``f_i`` is split into a time part and a mark part (see :mod:`marktpp.decoders`);
the survival term is booked under time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .decoders import DecoderTerms
from .events import Batch, EventSequence, collate


class NumericalError(ArithmeticError):
    pass


@dataclass
class NLLBreakdown:
    """Summed NLL (nats) over a set of sequences, with its time/mark split."""

    total: float
    time_nll: float
    mark_nll: float
    per_sequence: list[float] = field(default_factory=list)
    per_sequence_time: list[float] = field(default_factory=list)
    per_sequence_mark: list[float] = field(default_factory=list)
    num_events: int = 0
    total_time: float = 0.0

    @property
    def num_sequences(self) -> int:
        return len(self.per_sequence)

    @property
    def nll_per_time(self) -> float:
        return self.total / self.total_time if self.total_time > 0 else float("nan")

    @property
    def mean_total(self) -> float:
        return self.total / max(self.num_sequences, 1)

    @property
    def mean_time_nll(self) -> float:
        return self.time_nll / max(self.num_sequences, 1)

    @property
    def mean_mark_nll(self) -> float:
        return self.mark_nll / max(self.num_sequences, 1)

    @classmethod
    def combine(cls, parts: list["NLLBreakdown"]) -> "NLLBreakdown":
        out = cls(0.0, 0.0, 0.0)
        for p in parts:
            out.total += p.total
            out.time_nll += p.time_nll
            out.mark_nll += p.mark_nll
            out.per_sequence += p.per_sequence
            out.per_sequence_time += p.per_sequence_time
            out.per_sequence_mark += p.per_sequence_mark
            out.num_events += p.num_events
            out.total_time += p.total_time
        return out


@dataclass(frozen=True)
class Layout:
    """Cells of a padded batch: ``L`` event slots plus one tail gap per sequence."""

    dt: np.ndarray  # [B, L] inter-event times, 1.0 in padded slots
    marks: np.ndarray  # [B, L] observed marks, 0 in padded slots
    event_mask: np.ndarray  # [B, L] 1.0 on observed events
    tail_gaps: np.ndarray  # [B]
    lengths: np.ndarray  # [B]


def layout(batch: Batch) -> Layout:
    mask = batch.mask()
    dt = np.where(mask, batch.padded_taus, 1.0)
    marks = np.where(mask, batch.padded_marks, 0)
    return Layout(dt, marks, mask.astype(np.float64), np.maximum(batch.tail_gaps, 0.0), batch.lengths)


def split_history(H: Tensor, lay: Layout) -> tuple[Tensor, Tensor]:
    """History rows for the event slots ``[B, L, d]`` and for each tail ``[B, d]``."""
    B, P, d = H.shape
    H_events = H[:, : P - 1]
    idx = np.broadcast_to(lay.lengths[:, None, None], (B, 1, d))
    H_tail = ag.reshape(ag.take_along_axis(H, idx, axis=1), (B, d))
    return H_events, H_tail


def batch_terms(model, batch: Batch, mc_seed: int | None = None, mc_samples: int | None = None):
    """Decoder terms on event slots and the tail log survival of a batch."""
    lay = layout(batch)
    H = model.history(batch.padded_taus, batch.padded_marks)
    H_events, H_tail = split_history(H, lay)
    rng = np.random.default_rng(mc_seed)
    terms = model.terms(H_events, lay.dt, rng=rng, mc_samples=mc_samples)
    log_surv = model.log_survival(H_tail, lay.tail_gaps, rng=rng, mc_samples=mc_samples)
    return terms, log_surv, lay


def observed_terms(terms: DecoderTerms, lay: Layout) -> tuple[Tensor, Tensor]:
    """Log time and log mark terms at the observed mark of each slot, ``[B, L]``."""
    idx = lay.marks[..., None]
    lt = terms.log_time
    time_idx = idx if lt.shape[-1] > 1 else np.zeros_like(idx)
    log_time = ag.reshape(ag.take_along_axis(lt, time_idx, axis=-1), lay.dt.shape)
    log_mark = ag.reshape(ag.take_along_axis(terms.log_mark, idx, axis=-1), lay.dt.shape)
    return log_time, log_mark


def batch_nll(model, batch: Batch, mc_seed: int | None = None, mc_samples: int | None = None):
    """Summed NLL of a padded batch as a graph scalar, plus its breakdown.

    Padded slots are multiplied by a zero mask and never reach the loss.
    """
    terms, log_surv, lay = batch_terms(model, batch, mc_seed, mc_samples)
    return nll_from_terms(terms, log_surv, lay, batch)


def nll_from_terms(terms: DecoderTerms, log_surv: Tensor, lay: Layout, batch: Batch):
    log_time, log_mark = observed_terms(terms, lay)
    time_cells = -(log_time * lay.event_mask)
    mark_cells = -(log_mark * lay.event_mask)
    surv = -log_surv
    loss = ag.sum_(time_cells) + ag.sum_(mark_cells) + ag.sum_(surv)
    tc, mc, sc = time_cells.data, mark_cells.data, surv.data
    if not (np.isfinite(tc).all() and np.isfinite(mc).all() and np.isfinite(sc).all()):
        bad_slots = np.argwhere(~(np.isfinite(tc) & np.isfinite(mc)))
        if len(bad_slots):
            b, i = int(bad_slots[0][0]), int(bad_slots[0][1])
            raise NumericalError(f"non-finite log-likelihood in sequence {b} of batch at event index {i}")
        b = int(np.argwhere(~np.isfinite(sc))[0][0])
        raise NumericalError(f"non-finite log-likelihood in sequence {b} of batch at the survival term")
    seq_time = tc.sum(axis=1) + sc
    seq_mark = mc.sum(axis=1)
    seq_total = seq_time + seq_mark
    durations = batch.durations if batch.durations is not None else np.zeros(batch.size)
    breakdown = NLLBreakdown(
        total=float(seq_total.sum()),
        time_nll=float(seq_time.sum()),
        mark_nll=float(seq_mark.sum()),
        per_sequence=seq_total.tolist(),
        per_sequence_time=seq_time.tolist(),
        per_sequence_mark=seq_mark.tolist(),
        num_events=int(batch.lengths.sum()),
        total_time=float(np.sum(durations)),
    )
    return loss, breakdown


def sequence_nll(model, sequence: EventSequence, mc_seed: int | None = None, mc_samples: int | None = None) -> NLLBreakdown:
    with ag.no_grad():
        _, breakdown = batch_nll(model, collate([sequence]), mc_seed, mc_samples)
    return breakdown


def dataset_nll(model, sequences, batch_size: int = 256, mc_seed: int | None = None, mc_samples: int | None = None) -> NLLBreakdown:
    from .events import make_batches

    parts = []
    with ag.no_grad():
        for j, batch in enumerate(make_batches(sequences, batch_size)):
            seed = None if mc_seed is None else mc_seed + j
            parts.append(batch_nll(model, batch, seed, mc_samples)[1])
    return NLLBreakdown.combine(parts)


def mc_compensator(model, h, dt: float, num_samples: int, seed: int | None = None) -> np.ndarray:
    """Monte-Carlo estimate of each mark's integrated intensity over ``[0, dt]``.

    Unbiased for any ``num_samples >= 1``: the mean of ``dt * lambda_k(u dt)``
    with ``u ~ U(0, 1)``.
    """
    from .model import mc_compensator_graph

    if num_samples < 1:
        raise ValueError("num_samples must be >= 1")
    if dt < 0:
        raise ValueError("dt must be >= 0")
    if not model.intensity_based:
        raise ValueError(f"{model.kind} is intensity-free; it has no compensator")
    with ag.no_grad():
        base = model.decoder.base(ag.tensor(np.atleast_2d(h)))
        est = mc_compensator_graph(model.decoder, base, np.array([float(dt)]), num_samples, np.random.default_rng(seed))
    return est.data[0]


def closed_compensator(model, h, dt: float) -> np.ndarray:
    with ag.no_grad():
        base = model.decoder.base(ag.tensor(np.atleast_2d(h)))
        return model.decoder.compensator(base, np.array([float(dt)])).data[0]


def joint_log_density(model, h, taus, mc_seed: int | None = None) -> np.ndarray:
    """``log f(tau, m=k | h)`` for each waiting time in ``taus``, shape ``[n, K]``."""
    taus = np.atleast_1d(np.asarray(taus, dtype=np.float64))
    H = np.broadcast_to(np.asarray(h, dtype=np.float64), (len(taus), len(h)))
    with ag.no_grad():
        terms = model.terms(ag.tensor(H), taus, rng=np.random.default_rng(mc_seed))
    return terms.log_time.data + terms.log_mark.data


def log_survival_at(model, h, gaps, mc_seed: int | None = None) -> np.ndarray:
    """``log P(no event in (0, gap] | h)`` for each gap."""
    gaps = np.atleast_1d(np.asarray(gaps, dtype=np.float64))
    H = np.broadcast_to(np.asarray(h, dtype=np.float64), (len(gaps), len(h)))
    with ag.no_grad():
        return model.log_survival(ag.tensor(H), gaps, rng=np.random.default_rng(mc_seed)).data
