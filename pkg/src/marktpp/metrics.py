"""Mark-classification scores and evaluation reports."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autograd as ag
from .decoders import predict_mark_from
from .events import make_batches
from .likelihood import NLLBreakdown, batch_terms, nll_from_terms


def _check(true_marks, pred_marks) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(true_marks, dtype=np.int64).ravel()
    p = np.asarray(pred_marks, dtype=np.int64).ravel()
    if len(y) != len(p):
        raise ValueError(f"length mismatch: {len(y)} true vs {len(p)} predicted marks")
    if len(y) == 0:
        raise ValueError("need at least one prediction")
    return y, p


def micro_f1(true_marks, pred_marks) -> float:
    """Micro-averaged F1 in percent; equal to accuracy for single-label data."""
    y, p = _check(true_marks, pred_marks)
    return 100.0 * float(np.mean(y == p))


def per_class_f1(true_marks, pred_marks, num_marks: int) -> tuple[np.ndarray, np.ndarray]:
    """``(f1, support)`` per class; a class with no true and no predicted cases scores 0."""
    y, p = _check(true_marks, pred_marks)
    tp = np.bincount(y[y == p], minlength=num_marks).astype(np.float64)
    support = np.bincount(y, minlength=num_marks).astype(np.float64)
    predicted = np.bincount(p, minlength=num_marks).astype(np.float64)
    denom = support + predicted
    f1 = np.divide(2.0 * tp, denom, out=np.zeros(num_marks), where=denom > 0)
    return f1, support


def weighted_f1(true_marks, pred_marks, num_marks: int | None = None) -> float:
    y, p = _check(true_marks, pred_marks)
    K = num_marks if num_marks is not None else int(max(y.max(), p.max())) + 1
    f1, support = per_class_f1(y, p, K)
    return 100.0 * float(np.sum(f1 * support) / support.sum())


REPORT_FIELDS = (
    "split",
    "model",
    "total_nll",
    "time_nll",
    "mark_nll",
    "nll_per_time",
    "micro_f1",
    "weighted_f1",
    "num_events",
    "config_hash",
)


@dataclass
class EvalReport:
    """Summed NLL columns plus per-sequence means and mark F1 scores."""

    split: str
    model: str
    total_nll: float
    time_nll: float
    mark_nll: float
    nll_per_time: float
    micro_f1: float
    weighted_f1: float
    num_events: int
    config_hash: str
    num_sequences: int = 0
    mean_total_nll: float = float("nan")
    mean_time_nll: float = float("nan")
    mean_mark_nll: float = float("nan")
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        missing = [f for f in REPORT_FIELDS if f not in d]
        if missing:
            raise ValueError(f"report is missing fields: {missing}")
        return cls(**d)


def assemble_report(breakdown: NLLBreakdown, f1s: dict, meta: dict) -> EvalReport:
    """Combine an NLL breakdown, ``{"micro_f1", "weighted_f1"}`` and split metadata."""
    for key in ("micro_f1", "weighted_f1"):
        if key not in f1s:
            raise ValueError(f"missing field {key!r}")
    for key in ("split", "model", "config_hash"):
        if key not in meta:
            raise ValueError(f"missing field {key!r}")
    return EvalReport(
        split=meta["split"],
        model=meta["model"],
        total_nll=breakdown.total,
        time_nll=breakdown.time_nll,
        mark_nll=breakdown.mark_nll,
        nll_per_time=breakdown.nll_per_time,
        micro_f1=float(f1s["micro_f1"]),
        weighted_f1=float(f1s["weighted_f1"]),
        num_events=breakdown.num_events,
        config_hash=meta["config_hash"],
        num_sequences=breakdown.num_sequences,
        mean_total_nll=breakdown.mean_total,
        mean_time_nll=breakdown.mean_time_nll,
        mean_mark_nll=breakdown.mean_mark_nll,
        extra=dict(meta.get("extra", {})),
    )


def predict_marks(model, terms) -> np.ndarray:
    """Most likely mark of each observed event given its history and its time.

    Dependent models score ``log f_k(tau) + log p(k)``; the others use the
    mark law alone (which for ``rmtpp_dep``'s factorisation already includes
    the observed waiting time).
    """
    use_time = model.kind == "lnm_dep"
    return predict_mark_from(terms.log_time.data, terms.log_mark.data, use_time)


PREDICT_AT = ("observed", "sampled-mean")


def expected_waiting_time(model, H: np.ndarray, num_samples: int, rng) -> np.ndarray:
    """Monte-Carlo mean of the model's next waiting time per history row.

    Draws of ``inf`` (no further event) are ignored; rows without any finite
    draw get ``nan``.
    """
    from .sampling import draw

    flat = H.reshape(-1, H.shape[-1])
    taus = np.stack([draw(model, flat, rng)[0] for _ in range(num_samples)], axis=-1)
    finite = np.isfinite(taus)
    with np.errstate(invalid="ignore"):
        mean = np.where(finite, taus, 0.0).sum(-1) / finite.sum(-1)
    return mean.reshape(H.shape[:-1])


def evaluate(model, sequences, split: str = "test", config_hash: str = "", batch_size: int = 256,
             mc_seed: int | None = None, mc_samples: int | None = None,
             predict_at: str = "observed", mean_samples: int = 100) -> EvalReport:
    """NLL and mark F1 of ``model`` over ``sequences``.

    ``predict_at="sampled-mean"`` scores marks of dependent models at the
    model's expected waiting time instead of the observed one.
    """
    if predict_at not in PREDICT_AT:
        raise ValueError(f"predict_at must be one of {PREDICT_AT}")
    parts, y_true, y_pred = [], [], []
    rng = np.random.default_rng(mc_seed if mc_seed is not None else 0)
    with ag.no_grad():
        for j, batch in enumerate(make_batches(sequences, batch_size)):
            seed = None if mc_seed is None else mc_seed + j
            terms, log_surv, lay = batch_terms(model, batch, seed, mc_samples)
            parts.append(nll_from_terms(terms, log_surv, lay, batch)[1])
            if predict_at == "sampled-mean" and model.dependent:
                H = model.history(batch.padded_taus, batch.padded_marks)[:, :-1]
                dt_hat = expected_waiting_time(model, H.data, mean_samples, rng)
                dt_hat = np.where(np.isfinite(dt_hat) & (dt_hat > 0), dt_hat, lay.dt)
                terms = model.terms(H, dt_hat, rng=np.random.default_rng(seed), mc_samples=mc_samples)
            pred = predict_marks(model, terms)
            mask = lay.event_mask.astype(bool)
            y_true.append(lay.marks[mask])
            y_pred.append(pred[mask])
    bd = NLLBreakdown.combine(parts)
    y, p = np.concatenate(y_true), np.concatenate(y_pred)
    if len(y):
        f1s = {"micro_f1": micro_f1(y, p), "weighted_f1": weighted_f1(y, p, model.num_marks)}
    else:
        f1s = {"micro_f1": float("nan"), "weighted_f1": float("nan")}
    return assemble_report(bd, f1s, {"split": split, "model": model.kind, "config_hash": config_hash})
