"""Likelihoods, posterior moments and technical efficiency for the
spatio-temporal normal/half-normal frontier.

Composite error for unit ``i`` at period ``t``::

    eps_it = v_it - s * h_t * u_i,    u_i = utilde_i / delta_i

with ``v ~ N(0, sigma2_v)``, ``utilde ~ N+(0, sigma2_u)``,
``delta_i = 1 - rho * rowsum_i(W)`` and decay ``h_t = exp(-eta (t - T))``.
The time-invariant model is the ``h = 1`` case; the two share one kernel.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import log_ndtr

from ._backend import kernels
from .panel import PanelDataset

PRODUCTION = 1
COST = -1


class LikelihoodError(FloatingPointError):
    pass


@dataclass(frozen=True)
class VarianceParams:
    sigma2_v: float
    sigma2_u: float

    def __post_init__(self):
        if not (np.isfinite(self.sigma2_v) and np.isfinite(self.sigma2_u)):
            raise ValueError("variances must be finite")
        if self.sigma2_v <= 0:
            raise ValueError(f"sigma2_v must be > 0, got {self.sigma2_v}")
        if self.sigma2_u < 0:
            raise ValueError(f"sigma2_u must be >= 0, got {self.sigma2_u}")


@dataclass(frozen=True)
class PosteriorMoments:
    mu_star: np.ndarray
    sigma2_star: np.ndarray

    @property
    def sigma_star(self) -> np.ndarray:
        return np.sqrt(self.sigma2_star)


@dataclass(frozen=True, eq=False)
class ParamVector:
    """Model parameters in natural coordinates."""

    beta: np.ndarray
    sigma2_v: float
    sigma2_u: float
    rho: float = 0.0
    eta: float = 0.0

    def __post_init__(self):
        b = np.array(self.beta, dtype=float).ravel()
        b.setflags(write=False)
        object.__setattr__(self, "beta", b)
        for name in ("sigma2_v", "sigma2_u", "rho", "eta"):
            object.__setattr__(self, name, float(getattr(self, name)))

    def __eq__(self, other):
        if not isinstance(other, ParamVector):
            return NotImplemented
        return np.array_equal(self.beta, other.beta) and self.as_tuple()[1:] == other.as_tuple()[1:]

    def as_tuple(self):
        return (tuple(float(b) for b in self.beta), self.sigma2_v, self.sigma2_u, self.rho, self.eta)

    def replace(self, **kw) -> "ParamVector":
        return replace(self, **kw)

    @property
    def variances(self) -> VarianceParams:
        return VarianceParams(self.sigma2_v, self.sigma2_u)


def check_sign(s: int) -> int:
    if s not in (PRODUCTION, COST):
        raise ValueError(f"frontier sign must be +1 or -1, got {s!r}")
    return int(s)


def std_normal_log_cdf_complement(x):
    """``ln(1 - Phi(x))``, accurate far into both tails."""
    return log_ndtr(-np.asarray(x, dtype=float))


def decay_profile(eta: float, t: int) -> np.ndarray:
    """``exp(-eta (t - T))`` for t = 1..T; the last entry is exactly 1."""
    periods = np.arange(1, t + 1, dtype=float)
    return np.exp(-eta * (periods - t))


def residuals(y, X, beta) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if X.shape[:-1] != y.shape or X.shape[-1] != beta.shape[0]:
        raise ValueError(f"shape mismatch: y {y.shape}, X {X.shape}, beta {beta.shape}")
    return y - X @ beta


def _check_delta(delta, n):
    delta = np.ascontiguousarray(np.broadcast_to(np.asarray(delta, dtype=float), (n,)))
    if np.any(delta <= 0) or not np.all(np.isfinite(delta)):
        raise ValueError("delta must be finite and > 0 for every unit")
    return delta


def posterior_moments_ti(eps_bar, delta, vp: VarianceParams, t: int, s: int = PRODUCTION) -> PosteriorMoments:
    s = check_sign(s)
    eps_bar = np.asarray(eps_bar, dtype=float)
    delta = _check_delta(delta, eps_bar.shape[0])
    if t < 1:
        raise ValueError("T must be >= 1")
    d2 = vp.sigma2_u / delta**2
    den = vp.sigma2_v + t * d2
    return PosteriorMoments(-s * t * eps_bar * d2 / den, d2 * vp.sigma2_v / den)


def posterior_moments_tv(eps, decay, delta, vp: VarianceParams, s: int = PRODUCTION) -> PosteriorMoments:
    s = check_sign(s)
    eps = np.ascontiguousarray(eps, dtype=float)
    decay = np.ascontiguousarray(decay, dtype=float)
    delta = _check_delta(delta, eps.shape[0])
    mu, s2 = kernels.posterior_moments(eps, decay, delta, vp.sigma2_v, vp.sigma2_u, s)
    return PosteriorMoments(np.asarray(mu), np.asarray(s2))


def panel_loglik(y, X, beta, decay, delta, sigma2_v, sigma2_u, s=PRODUCTION) -> float:
    """Sample log-likelihood for given arrays; the common path of both models."""
    if not sigma2_v > 0:
        raise LikelihoodError(f"sigma2_v must be > 0, got {sigma2_v}")
    if not sigma2_u >= 0:
        raise LikelihoodError(f"sigma2_u must be >= 0, got {sigma2_u}")
    y = np.ascontiguousarray(y, dtype=float)
    X = np.ascontiguousarray(X, dtype=float)
    delta = _check_delta(delta, y.shape[0])
    val = kernels.panel_loglik(
        y, X, np.ascontiguousarray(beta, dtype=float), np.ascontiguousarray(decay, dtype=float),
        delta, float(sigma2_v), float(sigma2_u), int(s),
    )
    if not np.isfinite(val):
        raise LikelihoodError(
            f"non-finite log-likelihood at beta={list(np.asarray(beta))}, sigma2_v={sigma2_v}, sigma2_u={sigma2_u}"
        )
    return val


def loglik_time_invariant(params: ParamVector, data: PanelDataset, delta, s: int = PRODUCTION) -> float:
    s = check_sign(s)
    return panel_loglik(data.y, data.X, params.beta, np.ones(data.t), delta, params.sigma2_v, params.sigma2_u, s)


def loglik_time_varying(params: ParamVector, data: PanelDataset, delta, s: int = PRODUCTION) -> float:
    s = check_sign(s)
    return panel_loglik(
        data.y, data.X, params.beta, decay_profile(params.eta, data.t), delta,
        params.sigma2_v, params.sigma2_u, s,
    )


def _log_te(mu, s2, h):
    """log E[exp(-h u)] for u ~ N+(mu, s2); h broadcasts against a trailing axis."""
    mu = np.asarray(mu, dtype=float)[..., None]
    s2 = np.asarray(s2, dtype=float)[..., None]
    h = np.asarray(h, dtype=float)
    sd = np.sqrt(s2)
    if np.any((s2 == 0) & (mu != 0)):
        raise LikelihoodError("degenerate posterior: sigma_star = 0 with nonzero mu_star")
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sd > 0, mu / np.where(sd > 0, sd, 1.0), 0.0)
        out = log_ndtr(z - h * sd) - log_ndtr(z) - h * mu + 0.5 * h * h * s2
    return np.where(sd > 0, out, 0.0)


def technical_efficiency_ti(pm: PosteriorMoments) -> np.ndarray:
    return np.exp(_log_te(pm.mu_star, pm.sigma2_star, np.ones(1)))[:, 0]


def technical_efficiency_tv(pm: PosteriorMoments, decay, mode: str = "bc92") -> np.ndarray:
    decay = np.asarray(decay, dtype=float)
    if mode == "paper":
        te = technical_efficiency_ti(pm)
        return np.repeat(te[:, None], decay.shape[0], axis=1)
    if mode != "bc92":
        raise ValueError(f"unknown TE mode {mode!r}")
    return np.exp(_log_te(pm.mu_star, pm.sigma2_star, decay))
