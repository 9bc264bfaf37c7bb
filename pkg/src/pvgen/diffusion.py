"""DDPM mathematics and exact mixture denoisers.

Timesteps are 1-based.  Schedule tables carry a leading sentinel entry at
index 0 (beta 0, alpha 1, alpha_bar 1) so ``schedule.alpha_bar[t]`` reads
naturally for t in 1..T.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Protocol, Sequence, runtime_checkable

import numpy as np
from scipy.special import logsumexp

from . import _kernels

log = logging.getLogger(__name__)

DEFAULT_STEPS = 1000
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02


class ShapeError(ValueError):
    pass


class TimestepError(ValueError):
    pass


def _check_same_shape(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if np.shape(a) != np.shape(b):
        raise ShapeError(f"{what}: shape {np.shape(a)} != {np.shape(b)}")


@dataclass(frozen=True)
class NoiseSchedule:
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray

    @property
    def T(self) -> int:
        return len(self.beta) - 1

    @classmethod
    def from_betas(cls, betas: Sequence[float]) -> "NoiseSchedule":
        b = np.asarray(betas, dtype=np.float64)
        if b.ndim != 1 or b.size == 0:
            raise ValueError("need a non-empty 1-D beta sequence")
        if not np.all((b > 0) & (b < 1)):
            raise ValueError("every beta must lie in (0, 1)")
        beta = np.concatenate([[0.0], b])
        alpha = 1.0 - beta
        alpha_bar = np.cumprod(alpha)
        for arr in (beta, alpha, alpha_bar):
            arr.setflags(write=False)
        return cls(beta=beta, alpha=alpha, alpha_bar=alpha_bar)

    def check_t(self, t: int) -> int:
        if not 1 <= t <= self.T:
            raise TimestepError(f"timestep {t} outside 1..{self.T}")
        return int(t)


def make_schedule(
    T: int = DEFAULT_STEPS,
    beta_start: float = DEFAULT_BETA_START,
    beta_end: float = DEFAULT_BETA_END,
) -> NoiseSchedule:
    """Linear beta schedule from ``beta_start`` to ``beta_end`` over T steps."""
    if int(T) != T or T < 1:
        raise ValueError(f"T must be a positive integer, got {T}")
    if not 0 < beta_start <= beta_end < 1:
        raise ValueError(
            f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )
    return NoiseSchedule.from_betas(np.linspace(beta_start, beta_end, int(T)))


def diffuse_step(x_prev, t: int, schedule: NoiseSchedule, noise) -> np.ndarray:
    """One forward step q(x_t | x_{t-1})."""
    t = schedule.check_t(t)
    _check_same_shape(x_prev, noise, "diffuse_step")
    b = schedule.beta[t]
    return math.sqrt(1.0 - b) * np.asarray(x_prev) + math.sqrt(b) * np.asarray(noise)


def diffuse_to(x0, t: int, schedule: NoiseSchedule, noise) -> np.ndarray:
    """Closed-form jump q(x_t | x_0)."""
    t = schedule.check_t(t)
    _check_same_shape(x0, noise, "diffuse_to")
    ab = schedule.alpha_bar[t]
    return math.sqrt(ab) * np.asarray(x0) + math.sqrt(1.0 - ab) * np.asarray(noise)


def estimate_x0(x_t, t: int, eps_hat, schedule: NoiseSchedule) -> np.ndarray:
    """Clean-sample estimate implied by a noise prediction."""
    t = schedule.check_t(t)
    _check_same_shape(x_t, eps_hat, "estimate_x0")
    ab = schedule.alpha_bar[t]
    if ab == 0.0:
        raise ZeroDivisionError(f"alpha_bar[{t}] is zero")
    return (np.asarray(x_t) - math.sqrt(1.0 - ab) * np.asarray(eps_hat)) / math.sqrt(ab)


def reverse_step(x_t, t: int, eps_hat, schedule: NoiseSchedule, z=None) -> np.ndarray:
    """Ancestral step x_t -> x_{t-1} with sigma_t^2 = beta_t.

    ``z`` is ignored at t = 1, where the stochastic term is dropped.
    """
    t = schedule.check_t(t)
    _check_same_shape(x_t, eps_hat, "reverse_step")
    a = schedule.alpha[t]
    b = schedule.beta[t]
    ab = schedule.alpha_bar[t]
    mean = (np.asarray(x_t) - (b / math.sqrt(1.0 - ab)) * np.asarray(eps_hat)) / math.sqrt(a)
    if t == 1 or z is None:
        return mean
    _check_same_shape(x_t, z, "reverse_step noise")
    return mean + math.sqrt(b) * np.asarray(z)


def loss_simple(eps_hat, eps) -> float:
    _check_same_shape(eps_hat, eps, "loss_simple")
    d = np.asarray(eps_hat, dtype=np.float64) - np.asarray(eps, dtype=np.float64)
    return float(np.sum(d * d))


# --------------------------------------------------------------------------
# denoisers
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ConditionBundle:
    start_frame: np.ndarray | None = None
    text: str | None = None


@runtime_checkable
class Denoiser(Protocol):
    def predict_eps(self, x_t: np.ndarray, t: int, cond: ConditionBundle) -> np.ndarray: ...


def supports_vjp(denoiser) -> bool:
    return callable(getattr(denoiser, "vjp", None))


@dataclass(frozen=True)
class GmmPrior:
    """Mixture of isotropic Gaussians over latents of one shape.

    ``sigmas[k] == 0`` makes component k a point mass, so a list of
    training videos with zero sigmas is the empirical data distribution.
    """

    weights: np.ndarray
    means: np.ndarray
    sigmas: np.ndarray
    labels: tuple = ()

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        mu = np.asarray(self.means, dtype=np.float64)
        s = np.asarray(self.sigmas, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("GmmPrior needs at least one component")
        if mu.shape[0] != w.size or s.shape != w.shape:
            raise ValueError("weights, means and sigmas disagree on component count")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must be nonnegative and sum to 1 (sum={w.sum()!r})")
        if np.any(s < 0) or not np.all(np.isfinite(s)):
            raise ValueError("sigmas must be finite and >= 0")
        if not np.all(np.isfinite(mu)):
            raise ValueError("component means must be finite")
        labels = tuple(self.labels) if self.labels else (None,) * w.size
        if len(labels) != w.size:
            raise ValueError("one label per component")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "sigmas", s)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_components(cls, components: Sequence[tuple]) -> "GmmPrior":
        """Build from ``(weight, mean, sigma)`` or ``(weight, mean, sigma, label)`` tuples."""
        ws, mus, ss, labels = [], [], [], []
        for comp in components:
            ws.append(comp[0])
            mus.append(np.asarray(comp[1], dtype=np.float64))
            ss.append(comp[2])
            labels.append(comp[3] if len(comp) > 3 else None)
        shapes = {m.shape for m in mus}
        if len(shapes) != 1:
            raise ShapeError(f"component means disagree on shape: {sorted(shapes)}")
        return cls(np.array(ws, dtype=np.float64), np.stack(mus), np.array(ss), tuple(labels))

    @classmethod
    def empirical(cls, samples: Sequence[np.ndarray], weights=None) -> "GmmPrior":
        n = len(samples)
        w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=np.float64)
        return cls.from_components([(w[i], samples[i], 0.0) for i in range(n)])

    @property
    def shape(self) -> tuple:
        return tuple(self.means.shape[1:])

    @property
    def n_components(self) -> int:
        return self.weights.size

    def log_marginal(self, x_t, t: int, schedule: NoiseSchedule) -> float:
        """log q_t(x_t) for the diffused mixture."""
        mix = _Mixture.from_prior(self)
        return mix.log_marginal(np.ravel(x_t), math.sqrt(schedule.alpha_bar[schedule.check_t(t)]))


@dataclass(frozen=True)
class _Mixture:
    """Flattened diagonal-Gaussian mixture the kernels operate on."""

    means: np.ndarray  # (K, D)
    var: np.ndarray  # (K, D)
    logw: np.ndarray  # (K,)
    shape: tuple

    @classmethod
    def from_prior(cls, prior: GmmPrior) -> "_Mixture":
        k = prior.n_components
        means = prior.means.reshape(k, -1)
        var = np.repeat((prior.sigmas**2)[:, None], means.shape[1], axis=1)
        with np.errstate(divide="ignore"):
            logw = np.log(prior.weights)
        return cls(means, var, logw, prior.shape)

    def log_marginal(self, x: np.ndarray, sqrt_ab: float) -> float:
        ab = sqrt_ab * sqrt_ab
        v = ab * self.var + (1.0 - ab)
        r = x[None, :] - sqrt_ab * self.means
        logits = self.logw - 0.5 * np.sum(r * r / v + np.log(2 * np.pi * v), axis=1)
        return float(logsumexp(logits))


def condition_prior(
    prior: GmmPrior, cond: ConditionBundle | None, text_boost: float = 1.0
) -> _Mixture:
    """Exact conditioning of a mixture on its first frame, plus label reweighting.

    Observing frame 0 pins it (zero variance, mean = the frame) inside every
    component and multiplies each weight by that frame's likelihood.  Labels
    found in ``cond.text`` get their weight scaled by ``text_boost``.
    """
    mix = _Mixture.from_prior(prior)
    if cond is None:
        return mix
    logw = mix.logw.copy()
    if cond.text and text_boost != 1.0:
        text = cond.text.lower()
        for k, label in enumerate(prior.labels):
            if label and label.lower() in text:
                logw[k] += math.log(text_boost)
    means, var = mix.means, mix.var
    if cond.start_frame is not None:
        frame = np.asarray(cond.start_frame, dtype=np.float64)
        if prior.shape[1:] != frame.shape:
            raise ShapeError(
                f"start frame shape {frame.shape} does not match prior frame shape {prior.shape[1:]}"
            )
        flat = frame.ravel()
        n = flat.size
        means = mix.means.copy()
        var = mix.var.copy()
        for k in range(prior.n_components):
            s = prior.sigmas[k]
            head = prior.means[k].reshape(prior.shape[0], -1)[0]
            if s > 0:
                d = flat - head
                logw[k] += -0.5 * float(d @ d) / (s * s) - n * math.log(s * math.sqrt(2 * math.pi))
            elif np.max(np.abs(flat - head)) > 1e-9:
                logw[k] = -np.inf
            means[k, :n] = flat
            var[k, :n] = 0.0
    if not np.isfinite(np.max(logw)):
        log.warning("start frame has zero likelihood under every component; using uniform weights")
        logw = np.zeros_like(logw)
    logw = logw - logsumexp(logw)
    return _Mixture(means, var, logw, mix.shape)


@dataclass(frozen=True)
class GmmPosterior:
    mean: np.ndarray
    responsibilities: np.ndarray
    underflow: bool


def _posterior(mix: _Mixture, x_t, sqrt_ab: float) -> GmmPosterior:
    x = np.asarray(x_t, dtype=np.float64)
    if x.shape != mix.shape:
        raise ShapeError(f"latent shape {x.shape} does not match prior shape {mix.shape}")
    mean, resp, underflow = _kernels.gmm_posterior(x.ravel(), sqrt_ab, mix.means, mix.var, mix.logw)
    if underflow:
        log.warning("all mixture responsibilities underflowed; falling back to uniform")
    return GmmPosterior(mean.reshape(mix.shape), resp, underflow)


def gmm_posterior_mean(x_t, t: int, prior: GmmPrior, schedule: NoiseSchedule) -> GmmPosterior:
    """E[x_0 | x_t] with the component responsibilities behind it."""
    t = schedule.check_t(t)
    return _posterior(_Mixture.from_prior(prior), x_t, math.sqrt(schedule.alpha_bar[t]))


def gmm_predict_eps(x_t, t: int, prior: GmmPrior, schedule: NoiseSchedule) -> np.ndarray:
    """Bayes-optimal noise prediction for a Gaussian-mixture data distribution."""
    t = schedule.check_t(t)
    ab = schedule.alpha_bar[t]
    post = gmm_posterior_mean(x_t, t, prior, schedule)
    return (np.asarray(x_t) - math.sqrt(ab) * post.mean) / math.sqrt(1.0 - ab)


def _eps_vjp(mix: _Mixture, x_t, sqrt_ab: float, v) -> np.ndarray:
    x = np.asarray(x_t, dtype=np.float64).ravel()
    u = np.asarray(v, dtype=np.float64).ravel()
    ab = sqrt_ab * sqrt_ab
    var_t = ab * mix.var + (1.0 - ab)
    resid = x[None, :] - sqrt_ab * mix.means
    logits = mix.logw - 0.5 * np.sum(resid * resid / var_t + np.log(2 * np.pi * var_t), axis=1)
    resp = np.exp(logits - logsumexp(logits))
    gain = sqrt_ab * mix.var / var_t
    comp_mean = mix.means + gain * resid
    score = -resid / var_t
    score_bar = resp @ score
    proj = comp_mean @ u
    # J_D is the posterior-mean Jacobian; its transpose applied to u
    jd_u = (resp @ gain) * u + (resp * proj) @ score - score_bar * float(resp @ proj)
    out = (u - sqrt_ab * jd_u) / math.sqrt(1.0 - ab)
    return out.reshape(mix.shape)


def gmm_eps_vjp(x_t, t: int, prior: GmmPrior, schedule: NoiseSchedule, v) -> np.ndarray:
    """Vector-Jacobian product v^T d(eps_hat)/d(x_t) for the mixture denoiser."""
    t = schedule.check_t(t)
    _check_same_shape(x_t, v, "gmm_eps_vjp")
    return _eps_vjp(_Mixture.from_prior(prior), x_t, math.sqrt(schedule.alpha_bar[t]), v)


class GmmDenoiser:
    """Exact denoiser for a ``GmmPrior``, with conditioning and a closed-form vjp.

    The start frame in a ``ConditionBundle`` is treated as an exact
    observation of frame 0; text reweights components whose label occurs in
    it.  ``underflow_events`` counts responsibility underflows seen so far.
    """

    def __init__(self, prior: GmmPrior, schedule: NoiseSchedule, text_boost: float = 4.0):
        self.prior = prior
        self.schedule = schedule
        self.text_boost = text_boost
        self.underflow_events = 0
        self._cache_key = None
        self._cache_mix = None

    def _mixture(self, cond: ConditionBundle | None) -> _Mixture:
        if cond is None:
            key = None
        else:
            sf = cond.start_frame
            key = (cond.text, None if sf is None else np.asarray(sf, dtype=np.float64).tobytes())
        if self._cache_mix is None or key != self._cache_key:
            self._cache_mix = condition_prior(self.prior, cond, self.text_boost)
            self._cache_key = key
        return self._cache_mix

    def posterior(self, x_t, t: int, cond: ConditionBundle | None = None) -> GmmPosterior:
        t = self.schedule.check_t(t)
        post = _posterior(self._mixture(cond), x_t, math.sqrt(self.schedule.alpha_bar[t]))
        if post.underflow:
            self.underflow_events += 1
        return post

    def predict_eps(self, x_t, t: int, cond: ConditionBundle | None = None) -> np.ndarray:
        ab = self.schedule.alpha_bar[self.schedule.check_t(t)]
        post = self.posterior(x_t, t, cond)
        return (np.asarray(x_t) - math.sqrt(ab) * post.mean) / math.sqrt(1.0 - ab)

    def vjp(self, x_t, t: int, cond: ConditionBundle | None, v) -> np.ndarray:
        t = self.schedule.check_t(t)
        _check_same_shape(x_t, v, "vjp")
        return _eps_vjp(self._mixture(cond), x_t, math.sqrt(self.schedule.alpha_bar[t]), v)


def as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def ancestral_sample(
    denoiser: Denoiser,
    shape: tuple,
    schedule: NoiseSchedule,
    seed=None,
    cond: ConditionBundle | None = None,
    observer: Callable | None = None,
) -> np.ndarray:
    """Plain T-step ancestral sampling from x_T ~ N(0, I)."""
    rng = as_rng(seed)
    x = rng.standard_normal(shape)
    for t in range(schedule.T, 0, -1):
        eps = denoiser.predict_eps(x, t, cond)
        z = rng.standard_normal(shape) if t > 1 else None
        x = reverse_step(x, t, eps, schedule, z)
        if observer is not None:
            observer(t, x)
    return x

