"""Next-event decoders.

Every decoder turns history vectors ``H [..., d_h]`` and candidate waiting
times ``dt [...]`` into :class:`DecoderTerms`, a factorisation of the joint
log density ``log f(dt, m=k)`` into a time part and a mark part. Separately,
``log_survival`` gives ``log P(no event in (0, dt])``:

===========  ===================================  ================================
kind         time part                            mark part
===========  ===================================  ================================
cp, rmtpp    log lambda_g(dt) - Lambda_g(dt)      log lambda_k(dt) - log lambda_g
rmtpp_dep    log lambda_g(dt) - Lambda_g(dt)      log lambda_k(dt) - log lambda_g
lnm          log f(dt)                            log p(k)
lnm_dep      log f_k(dt)                          log p(k)
===========  ===================================  ================================

``lambda_g`` is the summed (ground) intensity. For ``rmtpp_dep`` each mark has
its own time slope so the mark part varies with ``dt``; for ``cp`` and
``rmtpp`` it does not.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from . import autograd as ag
from .autograd import ParamStore, Tensor

MODEL_KINDS = ("cp", "rmtpp", "lnm", "rmtpp_dep", "lnm_dep")
DEPENDENT_KINDS = ("rmtpp_dep", "lnm_dep")
INTENSITY_KINDS = ("cp", "rmtpp", "rmtpp_dep")

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


# -- closed-form building blocks (numpy) --------------------------------------


def mark_pmf(h, W_m, b_m) -> np.ndarray:
    return special.softmax(np.asarray(h) @ W_m + b_m, axis=-1)


def lnm_log_pdf(tau, w, mu, s) -> np.ndarray:
    tau = np.asarray(tau, dtype=np.float64)
    if np.any(tau <= 0):
        raise ValueError("log-normal mixture density needs tau > 0")
    x = np.log(tau)[..., None]
    z = (x - mu) / s
    comp = np.log(w) - np.log(s) - _LOG_SQRT_2PI - x - 0.5 * z * z
    return special.logsumexp(comp, axis=-1)


def lnm_pdf(tau, w, mu, s) -> np.ndarray:
    """Mixture of ``C`` log-normals: ``sum_c w_c LogNormal(tau; mu_c, s_c)``."""
    return np.exp(lnm_log_pdf(tau, w, mu, s))


def lnm_log_survival(tau, w, mu, s) -> np.ndarray:
    """``log(1 - F(tau))``; exactly 0 at ``tau = 0``."""
    tau = np.asarray(tau, dtype=np.float64)
    if np.any(tau < 0):
        raise ValueError("survival needs tau >= 0")
    with np.errstate(divide="ignore"):
        x = np.log(tau)[..., None]
    z = (x - mu) / s
    out = special.logsumexp(np.log(w) + special.log_ndtr(-z), axis=-1)
    return np.where(tau == 0, 0.0, out)


def lnm_mean(w, mu, s) -> np.ndarray:
    return np.sum(np.asarray(w) * np.exp(np.asarray(mu) + 0.5 * np.asarray(s) ** 2), axis=-1)


def rmtpp_intensity(h, dt, W_1, w_2, b_1) -> np.ndarray:
    """``exp(h W_1 + w_2 dt + b_1)``; ``w_2`` is a scalar or one slope per mark."""
    return np.exp(np.asarray(h) @ W_1 + np.asarray(w_2) * dt + b_1)


def rmtpp_compensator(h, dt, W_1, w_2, b_1) -> np.ndarray:
    """Integral of :func:`rmtpp_intensity` over ``[0, dt]``."""
    w_2 = np.broadcast_to(np.asarray(w_2, dtype=np.float64), np.shape(b_1))
    with ag.no_grad():
        core = ag.expm1_div(w_2, np.full(np.shape(b_1), float(dt))).data
    return np.exp(np.asarray(h) @ W_1 + b_1) * core


def predict_mark_from(log_time: np.ndarray, log_mark: np.ndarray, dependent: bool) -> np.ndarray:
    """Mark estimate per cell; ties go to the smaller mark index."""
    score = log_time + log_mark if dependent else log_mark
    return np.argmax(score, axis=-1)


# -- decoder modules (graph) --------------------------------------------------


@dataclass
class DecoderTerms:
    log_time: Tensor  # [..., 1] or [..., K]
    log_mark: Tensor  # [..., K]


def _uniform(rng, fan_in, shape):
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, shape)


class MarkHead:
    def __init__(self, params: ParamStore, hidden_size: int, num_marks: int, rng):
        self.W = params.add("mark.W_m", _uniform(rng, hidden_size, (hidden_size, num_marks)))
        self.b = params.add("mark.b_m", np.zeros(num_marks))

    def __call__(self, H: Tensor) -> Tensor:
        return ag.log_softmax(ag.matmul(H, self.W) + self.b, axis=-1)


class LogNormalMixtureDecoder:
    """Log-normal mixture time density; one mixture per mark when ``dependent``.

    Location ``mu = exp(affine)`` unless ``raw_mu``; scale ``s = exp(affine)``.
    """

    def __init__(
        self,
        params: ParamStore,
        hidden_size: int,
        num_marks: int,
        num_components: int,
        rng,
        dependent: bool,
        raw_mu: bool = False,
    ):
        self.K = num_marks
        self.C = num_components
        self.dependent = dependent
        self.raw_mu = raw_mu
        heads = num_marks if dependent else 1
        out = heads * 3 * num_components
        self.W = params.add("lnm.W", _uniform(rng, hidden_size, (hidden_size, out)))
        self.b = params.add("lnm.b", np.zeros(out))
        self.mark_head = MarkHead(params, hidden_size, num_marks, rng)

    def mixture(self, H: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        """``(log_w, mu, log_s)``, each ``[B, P, heads, C]``."""
        raw = ag.matmul(H, self.W) + self.b
        heads = self.K if self.dependent else 1
        raw = ag.reshape(raw, raw.shape[:-1] + (heads, 3 * self.C))
        C = self.C
        log_w = ag.log_softmax(raw[..., :C], axis=-1)
        mu_raw = raw[..., C : 2 * C]
        mu = mu_raw if self.raw_mu else ag.exp(mu_raw)
        log_s = raw[..., 2 * C :]
        return log_w, mu, log_s

    def _log_pdf_sf(self, H: Tensor, dt: np.ndarray, want_pdf: bool = True):
        log_w, mu, log_s = self.mixture(H)
        dt = np.asarray(dt, dtype=np.float64)
        positive = dt > 0
        # no clamp on positive times: wide components keep real mass far below any cut-off
        x = np.log(np.where(positive, dt, 1.0))[..., None, None]
        z = (x - mu) * ag.exp(-log_s)
        if want_pdf:
            return ag.logsumexp(log_w - log_s - _LOG_SQRT_2PI - x - 0.5 * ag.square(z), axis=-1)
        # S(0) = 1 exactly; the mask also keeps zero gaps out of the gradient
        return ag.logsumexp(log_w + ag.log_ndtr(-z), axis=-1) * positive[..., None].astype(np.float64)

    def terms(self, H: Tensor, dt: np.ndarray) -> DecoderTerms:
        return DecoderTerms(self._log_pdf_sf(H, dt), self.mark_head(H))

    def log_survival(self, H: Tensor, gap: np.ndarray) -> Tensor:
        log_sf = self._log_pdf_sf(H, gap, want_pdf=False)  # [..., heads]
        if self.dependent:
            return ag.logsumexp(self.mark_head(H) + log_sf, axis=-1)
        return ag.reshape(log_sf, log_sf.shape[:-1])

    def distribution(self, h: np.ndarray) -> dict:
        with ag.no_grad():
            log_w, mu, log_s = self.mixture(ag.tensor(h))
            log_mark = self.mark_head(ag.tensor(h))
        return {
            "pmf": np.exp(log_mark.data),
            "w": np.exp(log_w.data),
            "mu": mu.data,
            "s": np.exp(log_s.data),
        }


class RMTPPDecoder:
    """``lambda_k(dt) = exp(h W_1 + w_2 dt + b_1)_k`` with shared or per-mark slope."""

    def __init__(self, params: ParamStore, hidden_size: int, num_marks: int, rng, dependent: bool):
        self.K = num_marks
        self.dependent = dependent
        self.W1 = params.add("rmtpp.W_1", _uniform(rng, hidden_size, (hidden_size, num_marks)))
        self.b1 = params.add("rmtpp.b_1", np.zeros(num_marks))
        self.w2 = params.add("rmtpp.w_2", _uniform(rng, hidden_size, num_marks if dependent else 1))

    def base(self, H: Tensor) -> Tensor:
        return ag.matmul(H, self.W1) + self.b1

    def log_intensity(self, base: Tensor, t: np.ndarray) -> Tensor:
        """Log intensities at offsets ``t [..., S]`` -> ``[..., S, K]``."""
        return ag.reshape(base, base.shape[:-1] + (1, self.K)) + self.w2 * t[..., None]

    def compensator(self, base: Tensor, dt: np.ndarray) -> Tensor:
        return ag.exp(base) * ag.expm1_div(self.w2, dt[..., None])

    def terms(self, H: Tensor, dt: np.ndarray, compensator: Tensor | None = None) -> DecoderTerms:
        a = self.base(H)
        log_lam = a + self.w2 * dt[..., None]
        comp = self.compensator(a, dt) if compensator is None else compensator
        return _intensity_terms(log_lam, comp)

    def log_survival(self, H: Tensor, gap: np.ndarray, compensator: Tensor | None = None) -> Tensor:
        comp = self.compensator(self.base(H), gap) if compensator is None else compensator
        return -ag.sum_(comp, axis=-1)

    def distribution(self, h: np.ndarray) -> dict:
        with ag.no_grad():
            a = self.base(ag.tensor(h)).data
        return {"log_base": a, "w2": np.broadcast_to(self.w2.data, a.shape).copy()}


class ConditionalPoissonDecoder:
    """Constant-in-time intensities ``softplus(MLP(h))``."""

    def __init__(self, params: ParamStore, hidden_size: int, num_marks: int, rng):
        self.K = num_marks
        self.W1 = params.add("cp.W_1", _uniform(rng, hidden_size, (hidden_size, hidden_size)))
        self.b1 = params.add("cp.b_1", np.zeros(hidden_size))
        self.W2 = params.add("cp.W_2", _uniform(rng, hidden_size, (hidden_size, num_marks)))
        self.b2 = params.add("cp.b_2", np.zeros(num_marks))

    def log_rate(self, H: Tensor) -> Tensor:
        hidden = ag.tanh(ag.matmul(H, self.W1) + self.b1)
        return ag.log_softplus(ag.matmul(hidden, self.W2) + self.b2)

    def log_intensity(self, log_rate: Tensor, t: np.ndarray) -> Tensor:
        return ag.reshape(log_rate, log_rate.shape[:-1] + (1, self.K)) + 0.0 * t[..., None]

    def compensator(self, log_rate: Tensor, dt: np.ndarray) -> Tensor:
        return ag.exp(log_rate) * dt[..., None]

    def terms(self, H: Tensor, dt: np.ndarray, compensator: Tensor | None = None) -> DecoderTerms:
        log_lam = self.log_rate(H)
        comp = self.compensator(log_lam, dt) if compensator is None else compensator
        return _intensity_terms(log_lam, comp)

    def log_survival(self, H: Tensor, gap: np.ndarray, compensator: Tensor | None = None) -> Tensor:
        comp = self.compensator(self.log_rate(H), gap) if compensator is None else compensator
        return -ag.sum_(comp, axis=-1)

    def base(self, H: Tensor) -> Tensor:
        return self.log_rate(H)

    def distribution(self, h: np.ndarray) -> dict:
        with ag.no_grad():
            rate = np.exp(self.log_rate(ag.tensor(h)).data)
        return {"rate": rate}


def _intensity_terms(log_lam: Tensor, comp: Tensor) -> DecoderTerms:
    log_ground = ag.logsumexp(log_lam, axis=-1, keepdims=True)
    total_comp = ag.sum_(comp, axis=-1, keepdims=True)
    return DecoderTerms(log_ground - total_comp, log_lam - log_ground)
