"""Maximum-likelihood training: Adam with decoupled weight decay and early stopping."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .events import Dataset, make_batches
from .likelihood import NumericalError, batch_nll, dataset_nll
from .model import ModelConfig, TPPModel

log = logging.getLogger(__name__)

# Per-dataset hyperparameters (batch size, mixture components, history size,
# mark embedding size, time scale).
DATASET_DEFAULTS = {
    "hawkes_ind": dict(batch_size=512, num_components=64, hidden_size=64, emb_size=32, time_scale=1.0),
    "hawkes_dep1": dict(batch_size=512, num_components=64, hidden_size=64, emb_size=32, time_scale=1.0),
    "hawkes_dep2": dict(batch_size=512, num_components=64, hidden_size=64, emb_size=32, time_scale=1.0),
    "mimic2": dict(batch_size=64, num_components=64, hidden_size=64, emb_size=32, time_scale=1.0),
    "mooc": dict(batch_size=64, num_components=64, hidden_size=64, emb_size=64, time_scale=1.0),
    "stackoverflow": dict(batch_size=64, num_components=64, hidden_size=64, emb_size=32, time_scale=1e-5),
}


@dataclass
class TrainConfig:
    kind: str = "lnm_dep"
    learning_rate: float = 1e-3
    weight_decay: float = 1e-5
    batch_size: int = 512
    patience: int = 50
    max_epochs: int = 500
    seed: int = 0
    num_components: int = 64
    hidden_size: int = 64
    emb_size: int = 32
    time_scale: float = 1.0
    input_time_transform: str = "log"
    raw_mu: bool = False
    compensator: str = "closed"
    mc_samples: int = 20
    grad_clip: float | None = 10.0

    def __post_init__(self):
        for name in ("learning_rate", "batch_size", "max_epochs", "time_scale"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.weight_decay < 0 or self.patience < 0:
            raise ValueError("weight_decay and patience must be non-negative")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def model_config(self, num_marks: int) -> ModelConfig:
        return ModelConfig(
            kind=self.kind,
            num_marks=num_marks,
            hidden_size=self.hidden_size,
            emb_size=self.emb_size,
            num_components=self.num_components,
            time_transform=self.input_time_transform,
            raw_mu=self.raw_mu,
            compensator=self.compensator,
            mc_samples=self.mc_samples,
            seed=self.seed,
        )

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    skipped: int = 0


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    decay: float = 0.0,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> bool:
    """In-place Adam update with decoupled decay ``lr * decay * theta``.

    Returns False (and counts a skip) when any gradient is non-finite.
    """
    if not all(np.all(np.isfinite(g)) for g in grads.values()):
        state.skipped += 1
        log.warning("non-finite gradient; skipped step (%d skipped so far)", state.skipped)
        return False
    b1, b2 = betas
    state.step += 1
    t = state.step
    for name, theta in params.items():
        g = grads[name]
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(theta)
            state.v[name] = np.zeros_like(theta)
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        theta -= lr * m_hat / (np.sqrt(v_hat) + eps) + lr * decay * theta
    return True


def clip_grad_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for g in grads.values():
            g *= scale
    return norm


@dataclass
class TrainResult:
    model: TPPModel
    log: list[dict]
    best_epoch: int
    best_val_nll: float
    skipped_steps: int
    diverged: bool = False


def epoch_seed(seed: int, epoch: int) -> int:
    return int(np.random.SeedSequence([seed, epoch]).generate_state(1)[0])


def train(
    train_set: Dataset,
    val_set: Dataset,
    config: TrainConfig,
    num_marks: int | None = None,
    on_epoch=None,
) -> TrainResult:
    """Fit a model by minimising the mean per-sequence NLL of each batch.

    Validation NLL (mean per sequence) drives early stopping; the returned
    model carries the parameters of the best validation epoch.
    """
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError("train and validation splits must be non-empty")
    K = num_marks or max(train_set.num_marks, val_set.num_marks)
    model = TPPModel(config.model_config(K))
    params = {name: p.data for name, p in model.params.items()}
    state = AdamState()
    best_val = float("inf")
    best_values = model.params.copy_values()
    best_epoch = -1
    wait = 0
    history: list[dict] = []
    diverged = False
    mc_eval_seed = config.seed + 1_000_003 if config.compensator == "mc" else None
    start = time.perf_counter()

    for epoch in range(config.max_epochs):
        train_total = 0.0
        n_seq = 0
        try:
            for j, batch in enumerate(make_batches(train_set, config.batch_size, epoch_seed(config.seed, epoch))):
                mc_seed = epoch_seed(config.seed + 7, epoch * 100_003 + j) if config.compensator == "mc" else None
                loss, bd = batch_nll(model, batch, mc_seed)
                model.params.zero_grad()
                ag.mul(loss, 1.0 / batch.size).backward()
                grads = model.params.grads()
                if config.grad_clip:
                    clip_grad_norm(grads, config.grad_clip)
                adam_step(params, grads, state, config.learning_rate, config.weight_decay)
                train_total += bd.total
                n_seq += batch.size
            val = dataset_nll(model, val_set.sequences, mc_seed=mc_eval_seed).mean_total
        except NumericalError as exc:
            log.error("epoch %d: %s", epoch, exc)
            val = float("nan")
        entry = {
            "epoch": epoch,
            "train_nll": train_total / max(n_seq, 1),
            "val_nll": val,
            "wall_time": time.perf_counter() - start,
        }
        history.append(entry)
        if on_epoch is not None:
            on_epoch(entry)
        log.info("epoch %d train %.4f val %.4f", epoch, entry["train_nll"], val)
        if not np.isfinite(val):
            diverged = True
            break
        if val < best_val:
            best_val = val
            best_values = model.params.copy_values()
            best_epoch = epoch
            wait = 0
        else:
            wait += 1
            if wait >= config.patience:
                break

    model.params.set_values(best_values)
    return TrainResult(model, history, best_epoch, best_val, state.skipped, diverged)
