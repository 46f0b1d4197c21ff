"""GJR-GARCH(1,1) estimation and one-step volatility forecasting.

Conditional variance follows the threshold recursion

    var_t = omega + (alpha + gamma * [eps_{t-1} < 0]) * eps_{t-1}^2 + beta * var_{t-1}

with omega, alpha, gamma, beta > 0 and alpha + beta + 0.5*gamma < 1.
Returns are demeaned by their training-window mean before fitting, and the
Gaussian log-likelihood is maximized by a derivative-free simplex search
over an unconstrained reparameterization (log for omega, a logistic map
onto the stationarity simplex for the loadings), so the constraint holds by
construction at every iterate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter

from .errors import NonFinite, TooFewObservations

_LOG_2PI = math.log(2.0 * math.pi)
_PERSISTENCE_CAP = 1.0 - 1e-6


@dataclass(frozen=True)
class GjrGarchParams:
    omega: float
    alpha: float
    gamma: float
    beta: float

    def __post_init__(self):
        if min(self.omega, self.alpha, self.gamma, self.beta) <= 0.0:
            raise ValueError("omega, alpha, gamma, beta must all be > 0")
        if self.persistence >= 1.0:
            raise ValueError("alpha + beta + 0.5*gamma must be < 1")

    @property
    def persistence(self) -> float:
        return self.alpha + self.beta + 0.5 * self.gamma

    @property
    def long_run_variance(self) -> float:
        return self.omega / (1.0 - self.persistence)


@dataclass(frozen=True)
class GarchFit:
    params: GjrGarchParams
    loglik: float
    sigma2_path: np.ndarray
    converged: bool
    iterations: int
    mean: float  # training-window mean removed from raw returns
    last_eps: float  # final demeaned training return, seeds rolling forecasts
    n_obs: int


def gjr_variance_path(
    returns: np.ndarray, params: GjrGarchParams, sigma2_0: float
) -> np.ndarray:
    """Conditional variance for each demeaned return; index 0 is sigma2_0.

    The recursion is linear in the variance given the observed shocks, so it
    is evaluated as an order-1 IIR filter (exact, O(n)).
    """
    returns = np.asarray(returns, dtype=float)
    if sigma2_0 <= 0.0:
        raise ValueError("sigma2_0 must be > 0")
    if returns.size == 0:
        return np.empty(0)
    if returns.size == 1:
        return np.array([sigma2_0])
    eps = returns[:-1]
    shock = params.omega + (params.alpha + params.gamma * (eps < 0.0)) * eps**2
    rest, _ = lfilter(
        [1.0], [1.0, -params.beta], shock, zi=np.array([params.beta * sigma2_0])
    )
    return np.concatenate([[sigma2_0], rest])


def gjr_loglik(returns: np.ndarray, params: GjrGarchParams, sigma2_0: float) -> float:
    """Gaussian log-likelihood of demeaned returns under the fitted variances."""
    returns = np.asarray(returns, dtype=float)
    sigma2 = gjr_variance_path(returns, params, sigma2_0)
    if not np.all(np.isfinite(sigma2)) or np.any(sigma2 <= 0.0):
        raise NonFinite("conditional variance underflowed or overflowed")
    ll = -0.5 * np.sum(_LOG_2PI + np.log(sigma2) + returns**2 / sigma2)
    if not np.isfinite(ll):
        raise NonFinite("log-likelihood is not finite")
    return float(ll)


def _sigmoid(u: float) -> float:
    u = min(500.0, max(-500.0, u))
    return 1.0 / (1.0 + math.exp(-u))


def _logit(p: float) -> float:
    p = min(1.0 - 1e-12, max(1e-12, p))
    return math.log(p / (1.0 - p))


def _theta_to_params(theta: np.ndarray) -> GjrGarchParams:
    omega = math.exp(min(700.0, max(-700.0, theta[0])))
    persistence = _PERSISTENCE_CAP * _sigmoid(theta[1])
    alpha_share = _sigmoid(theta[2])
    gamma_share = _sigmoid(theta[3])
    alpha = persistence * alpha_share
    remainder = persistence - alpha
    gamma = 2.0 * remainder * gamma_share
    beta = remainder * (1.0 - gamma_share)
    tiny = 1e-12
    return GjrGarchParams(
        omega=max(omega, tiny),
        alpha=max(alpha, tiny),
        gamma=max(gamma, tiny),
        beta=max(beta, tiny),
    )


def _params_to_theta(params: GjrGarchParams) -> np.ndarray:
    persistence = params.persistence
    return np.array(
        [
            math.log(params.omega),
            _logit(persistence / _PERSISTENCE_CAP),
            _logit(params.alpha / persistence),
            _logit(0.5 * params.gamma / (persistence - params.alpha)),
        ]
    )


def gjr_fit(
    returns: np.ndarray,
    *,
    min_obs: int = 100,
    max_iter: int = 2000,
    tol: float = 1e-8,
) -> GarchFit:
    """Constrained maximum likelihood via Nelder-Mead on the remapped space.

    Initial loadings are (alpha, gamma, beta) = (0.05, 0.05, 0.85) with
    omega set by variance targeting on the training sample. The search runs
    in two restarts within the iteration budget; ``converged`` reports the
    optimizer's own status honestly.
    """
    returns = np.asarray(returns, dtype=float)
    if returns.size < min_obs:
        raise TooFewObservations(f"{returns.size} observations < floor {min_obs}")
    mean = float(returns.mean())
    eps = returns - mean
    sample_var = float(eps.var())
    if sample_var <= 0.0:
        raise TooFewObservations("returns have zero variance")

    init = GjrGarchParams(
        omega=sample_var * (1.0 - 0.05 - 0.85 - 0.025),
        alpha=0.05,
        gamma=0.05,
        beta=0.85,
    )
    sigma2_0 = sample_var

    def objective(theta: np.ndarray) -> float:
        try:
            return -gjr_loglik(eps, _theta_to_params(theta), sigma2_0)
        except NonFinite:
            return np.inf

    theta = _params_to_theta(init)
    iterations = 0
    converged = False
    per_stage = max_iter // 2
    for _ in range(2):
        res = minimize(
            objective,
            theta,
            method="Nelder-Mead",
            options={"maxiter": per_stage, "fatol": tol, "xatol": 1e-8},
        )
        theta = res.x
        iterations += int(res.nit)
        converged = bool(res.success)

    params = _theta_to_params(theta)
    loglik = gjr_loglik(eps, params, sigma2_0)
    sigma2_path = gjr_variance_path(eps, params, sigma2_0)
    return GarchFit(
        params=params,
        loglik=loglik,
        sigma2_path=sigma2_path,
        converged=converged,
        iterations=iterations,
        mean=mean,
        last_eps=float(eps[-1]),
        n_obs=int(returns.size),
    )


def gjr_forecast_next(fit: GarchFit, last_return: float) -> float:
    """One-step-ahead volatility given the most recent raw return."""
    eps = last_return - fit.mean
    p = fit.params
    var_next = (
        p.omega
        + (p.alpha + p.gamma * (eps < 0.0)) * eps**2
        + p.beta * float(fit.sigma2_path[-1])
    )
    return math.sqrt(var_next)


def gjr_roll_forecasts(fit: GarchFit, returns: np.ndarray) -> np.ndarray:
    """One-step-ahead volatility forecasts over a post-training window.

    ``returns[k]`` is the raw return observed at hour k of the window;
    ``out[k]`` is the volatility forecast issued at hour k for the hour
    ahead, conditioning on everything through ``returns[k]``. The model is
    not refit. NaN returns (data gaps) yield NaN forecasts and leave the
    recursion state untouched.
    """
    p = fit.params
    out = np.full(len(returns), np.nan)
    prev_eps = fit.last_eps
    var = float(fit.sigma2_path[-1])
    for k, r in enumerate(returns):
        if not np.isfinite(r):
            continue
        var = p.omega + (p.alpha + p.gamma * (prev_eps < 0.0)) * prev_eps**2 + p.beta * var
        eps = r - fit.mean
        out[k] = math.sqrt(
            p.omega + (p.alpha + p.gamma * (eps < 0.0)) * eps**2 + p.beta * var
        )
        prev_eps = eps
    return out
