"""Closed-form generation of event sequences from a trained model.

Every kind is sampled exactly:

* ``lnm``/``lnm_dep``: mark from the pmf, then a mixture component of the
  (mark's) time density, then ``tau = exp(mu + s * z)``.
* ``cp``: exponential waiting time at the summed rate, mark proportional to rate.
* ``rmtpp``: Gompertz waiting time by inverting the closed-form compensator;
  the mark pmf does not depend on the waiting time.
* ``rmtpp_dep``: one Gompertz clock per mark (competing risks); the earliest
  clock fires.

A waiting time of ``inf`` means no further event ever occurs.
"""

from __future__ import annotations

import logging

import numpy as np

from .events import EventSequence

log = logging.getLogger(__name__)

MAX_EVENTS = 1_000_000


class SamplingCapError(RuntimeError):
    pass


def _categorical(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One draw per row of ``probs [B, n]``; zero-probability entries are never chosen."""
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random(probs.shape[0]) * cdf[:, -1]
    idx = np.sum(cdf <= u[:, None], axis=-1)
    return np.minimum(idx, probs.shape[-1] - 1)


def sample_lnm(pmf, w, mu, s, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``(tau, mark)`` per row.

    ``pmf`` is ``[B, K]``; ``w``, ``mu``, ``s`` are ``[B, heads, C]`` with one
    head (mark-independent time) or ``K`` heads (one time density per mark).
    """
    pmf, w, mu, s = (np.asarray(a, dtype=np.float64) for a in (pmf, w, mu, s))
    B = pmf.shape[0]
    marks = _categorical(pmf, rng)
    head = marks if w.shape[1] > 1 else np.zeros(B, dtype=np.int64)
    rows = np.arange(B)
    comp = _categorical(w[rows, head], rng)
    z = rng.standard_normal(B)
    taus = np.exp(mu[rows, head, comp] + s[rows, head, comp] * z)
    return taus, marks


def sample_cp(rates, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Exponential waiting time at the summed rate; ``inf`` when every rate is 0."""
    rates = np.asarray(rates, dtype=np.float64)
    total = rates.sum(axis=-1)
    e = rng.standard_exponential(rates.shape[0])
    with np.errstate(divide="ignore"):
        taus = np.where(total > 0, e / np.where(total > 0, total, 1.0), np.inf)
    safe = np.where(total[:, None] > 0, rates, 1.0)
    marks = _categorical(safe, rng)
    return taus, marks


def gompertz_inverse(log_scale, w, e) -> np.ndarray:
    """Solve ``exp(log_scale) * (exp(w tau) - 1) / w = e`` for ``tau``.

    For ``w < 0`` the total hazard is bounded; when ``e`` exceeds it the
    event never happens and ``inf`` is returned.
    """
    log_scale, w, e = np.broadcast_arrays(*(np.asarray(a, dtype=np.float64) for a in (log_scale, w, e)))
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        x = e * np.exp(-log_scale)
        small = np.abs(w) < 1e-12
        arg = w * x
        safe_w = np.where(small, 1.0, w)
        tau = np.where(arg > -1.0, np.log1p(np.maximum(arg, -1.0)) / safe_w, np.inf)
        tau = np.where(small, x, tau)
    return np.where(np.isnan(tau), np.inf, tau)


def sample_rmtpp(log_base, w2, rng: np.random.Generator, dependent: bool) -> tuple[np.ndarray, np.ndarray]:
    """RMTPP draws from per-mark log base intensities ``[B, K]`` and slopes."""
    log_base = np.asarray(log_base, dtype=np.float64)
    w2 = np.broadcast_to(np.asarray(w2, dtype=np.float64), log_base.shape)
    B, K = log_base.shape
    if dependent:
        e = rng.standard_exponential((B, K))
        clocks = gompertz_inverse(log_base, w2, e)
        marks = np.argmin(clocks, axis=-1)
        return clocks[np.arange(B), marks], marks
    top = log_base.max(axis=-1, keepdims=True)
    log_ground = (top + np.log(np.exp(log_base - top).sum(axis=-1, keepdims=True)))[:, 0]
    taus = gompertz_inverse(log_ground, w2[:, 0], rng.standard_exponential(B))
    marks = _categorical(np.exp(log_base - top), rng)
    return taus, marks


def draw(model, h: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Next ``(tau, mark)`` for every history row of ``h [B, d_h]``."""
    dist = model.distribution(np.atleast_2d(h))
    if model.kind in ("lnm", "lnm_dep"):
        return sample_lnm(dist["pmf"], dist["w"], dist["mu"], dist["s"], rng)
    if model.kind == "cp":
        return sample_cp(dist["rate"], rng)
    return sample_rmtpp(dist["log_base"], dist["w2"], rng, dependent=model.dependent)


def sample_next(model, h, seed=None) -> tuple[float, int]:
    taus, marks = draw(model, np.asarray(h, dtype=np.float64)[None, :], np.random.default_rng(seed))
    return float(taus[0]), int(marks[0])


def _rollout(model, num_seq: int, t_end: float, rng: np.random.Generator, max_events: int):
    H = model.config.hidden_size
    h = np.broadcast_to(model.encoder.h0.data, (num_seq, H)).copy()
    t = np.zeros(num_seq)
    active = np.ones(num_seq, dtype=bool)
    times: list[list[float]] = [[] for _ in range(num_seq)]
    marks: list[list[int]] = [[] for _ in range(num_seq)]
    while active.any():
        idx = np.flatnonzero(active)
        tau, m = draw(model, h[idx], rng)
        new_t = t[idx] + tau
        # guard against a draw too small to move the clock in float64
        new_t = np.where(new_t > t[idx], new_t, np.nextafter(t[idx], np.inf))
        keep = new_t <= t_end
        active[idx[~keep]] = False
        idx, tau, m, new_t = idx[keep], tau[keep], m[keep], new_t[keep]
        if len(idx) == 0:
            break
        for j, tj, mj in zip(idx, new_t, m):
            times[j].append(float(tj))
            marks[j].append(int(mj))
            if len(times[j]) > max_events:
                raise SamplingCapError(f"sequence exceeded {max_events} events before t_end={t_end}")
        gap = new_t - t[idx]
        t[idx] = new_t
        h[idx] = model.encoder.step(h[idx], gap, m)
    return [EventSequence(np.array(ts), np.array(ms, dtype=np.int64), 0.0, t_end) for ts, ms in zip(times, marks)]


def sample_sequences(
    model,
    num_seq: int,
    t_end: float,
    seed: int = 0,
    chunk_size: int = 256,
    max_events: int = MAX_EVENTS,
) -> list[EventSequence]:
    """Autoregressive rollouts on ``[0, t_end]``; the first event past ``t_end`` is dropped.

    Sequences are generated in chunks, each with its own seeded stream, so the
    output depends only on ``seed`` and ``chunk_size``.
    """
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    if num_seq < 0:
        raise ValueError("num_seq must be non-negative")
    out: list[EventSequence] = []
    for c, start in enumerate(range(0, num_seq, chunk_size)):
        n = min(chunk_size, num_seq - start)
        rng = np.random.default_rng(np.random.SeedSequence([seed, c]))
        out.extend(_rollout(model, n, t_end, rng, max_events))
    return out


def sample_sequence(model, t_end: float, seed: int = 0, max_events: int = MAX_EVENTS) -> EventSequence:
    return sample_sequences(model, 1, t_end, seed, max_events=max_events)[0]


def _histogram(values, bins) -> dict:
    counts, edges = np.histogram(np.asarray(values, dtype=np.float64), bins=bins)
    return {"edges": edges.tolist(), "counts": counts.tolist()}


def mark_frequencies(sequences, num_marks: int) -> np.ndarray:
    counts = np.zeros(num_marks)
    for s in sequences:
        counts += np.bincount(s.marks, minlength=num_marks)[:num_marks]
    total = counts.sum()
    return counts / total if total > 0 else counts


def sampling_report(real, generated, num_marks: int | None = None, bins: int = 20) -> dict:
    """Length, mark and arrival-time statistics of generated vs. real sequences.

    Histograms share bin edges between the two sets so they can be overlaid.
    """
    real = list(real)
    generated = list(generated)
    if not generated:
        raise ValueError("no samples")
    if not real:
        raise ValueError("no real sequences")
    if num_marks is None:
        num_marks = 1 + max(int(s.marks.max()) for s in real + generated if len(s))
    real_len = np.array([len(s) for s in real])
    gen_len = np.array([len(s) for s in generated])
    len_edges = np.histogram_bin_edges(np.concatenate([real_len, gen_len]), bins=bins)
    window = max(max(s.duration for s in real), max(s.duration for s in generated))
    t_edges = np.linspace(0.0, window, bins + 1)

    def arrivals(seqs):
        return np.concatenate([s.arrival_times - s.t_start for s in seqs] + [np.zeros(0)])

    real_freq = mark_frequencies(real, num_marks)
    gen_freq = mark_frequencies(generated, num_marks)
    return {
        "num_real": len(real),
        "num_generated": len(generated),
        "mean_length_real": float(real_len.mean()),
        "mean_length_generated": float(gen_len.mean()),
        "mean_length_ratio": float(gen_len.mean() / real_len.mean()) if real_len.mean() > 0 else float("nan"),
        "length_histogram": {"real": _histogram(real_len, len_edges), "generated": _histogram(gen_len, len_edges)},
        "mark_frequencies": {"real": real_freq.tolist(), "generated": gen_freq.tolist()},
        "mark_l1": float(np.abs(real_freq - gen_freq).sum()),
        "arrival_histogram": {
            "real": _histogram(arrivals(real), t_edges),
            "generated": _histogram(arrivals(generated), t_edges),
        },
    }
