"""Encoder + decoder assembly, configuration and checkpoints."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autograd as ag
from .autograd import ParamStore, Tensor
from .decoders import (
    DEPENDENT_KINDS,
    INTENSITY_KINDS,
    MODEL_KINDS,
    ConditionalPoissonDecoder,
    DecoderTerms,
    LogNormalMixtureDecoder,
    RMTPPDecoder,
)
from .encoder import GRUEncoder


class CheckpointMismatch(ValueError):
    pass


@dataclass
class ModelConfig:
    kind: str
    num_marks: int
    hidden_size: int = 64
    emb_size: int = 32
    num_components: int = 64
    time_transform: str = "log"
    raw_mu: bool = False
    compensator: str = "closed"  # "closed" or "mc" (intensity kinds only)
    mc_samples: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; choose from {MODEL_KINDS}")
        if self.compensator not in ("closed", "mc"):
            raise ValueError("compensator must be 'closed' or 'mc'")
        for name in ("num_marks", "hidden_size", "emb_size", "num_components", "mc_samples"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


class TPPModel:
    def __init__(self, config: ModelConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        self.params = ParamStore()
        self.encoder = GRUEncoder(
            self.params, config.num_marks, config.emb_size, config.hidden_size, rng, config.time_transform
        )
        H, K = config.hidden_size, config.num_marks
        if config.kind == "cp":
            self.decoder = ConditionalPoissonDecoder(self.params, H, K, rng)
        elif config.kind in ("rmtpp", "rmtpp_dep"):
            self.decoder = RMTPPDecoder(self.params, H, K, rng, dependent=config.kind == "rmtpp_dep")
        else:
            self.decoder = LogNormalMixtureDecoder(
                self.params, H, K, config.num_components, rng,
                dependent=config.kind == "lnm_dep", raw_mu=config.raw_mu,
            )

    @property
    def kind(self) -> str:
        return self.config.kind

    @property
    def num_marks(self) -> int:
        return self.config.num_marks

    @property
    def dependent(self) -> bool:
        return self.kind in DEPENDENT_KINDS

    @property
    def intensity_based(self) -> bool:
        return self.kind in INTENSITY_KINDS

    def history(self, taus: np.ndarray, marks: np.ndarray) -> Tensor:
        return self.encoder(taus, marks)

    def _use_mc(self) -> bool:
        return self.intensity_based and self.config.compensator == "mc"

    def terms(self, H: Tensor, dt: np.ndarray, rng=None, mc_samples: int | None = None) -> DecoderTerms:
        """Joint log density terms at waiting times ``dt`` (same leading shape as ``H``)."""
        if self._use_mc():
            n = mc_samples or self.config.mc_samples
            comp = mc_compensator_graph(self.decoder, self.decoder.base(H), dt, n, rng or np.random.default_rng())
            return self.decoder.terms(H, dt, compensator=comp)
        return self.decoder.terms(H, dt)

    def log_survival(self, H: Tensor, gap: np.ndarray, rng=None, mc_samples: int | None = None) -> Tensor:
        if self._use_mc():
            n = mc_samples or self.config.mc_samples
            comp = mc_compensator_graph(self.decoder, self.decoder.base(H), gap, n, rng or np.random.default_rng())
            return self.decoder.log_survival(H, gap, compensator=comp)
        return self.decoder.log_survival(H, gap)

    def distribution(self, h: np.ndarray) -> dict:
        return self.decoder.distribution(h)

    def metadata(self) -> dict:
        return {"model_kind": self.kind, **self.config.to_dict()}

    def save(self, path, extra: dict | None = None):
        ag.save_checkpoint(path, self.params, {**self.metadata(), **(extra or {})})

    @classmethod
    def load(cls, path, expect_kind: str | None = None) -> "TPPModel":
        meta, state = ag.read_checkpoint(path)
        if expect_kind is not None and meta.get("model_kind") != expect_kind:
            raise CheckpointMismatch(f"checkpoint holds a {meta.get('model_kind')!r} model, expected {expect_kind!r}")
        fields = {f.name for f in dataclasses.fields(ModelConfig)}
        model = cls(ModelConfig(**{k: v for k, v in meta.items() if k in fields}))
        try:
            model.params.load_state(state)
        except (KeyError, ag.ShapeError) as exc:
            raise CheckpointMismatch(str(exc)) from exc
        return model


def mc_compensator_graph(decoder, base: Tensor, dt: np.ndarray, num_samples: int, rng) -> Tensor:
    """Uniform Monte-Carlo estimate of ``int_0^dt lambda_k`` -> ``[..., K]``."""
    u = rng.random(dt.shape + (num_samples,))
    lam = ag.exp(decoder.log_intensity(base, u * dt[..., None]))  # [..., S, K]
    return ag.mean(lam, axis=-2) * dt[..., None]


def load_config_file(path) -> dict:
    return json.loads(Path(path).read_text())
