"""Small numerical helpers shared by the samplers."""
from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular, LinAlgError
from scipy.special import betaln, expit as _expit, logit as _logit

LOGIT_CLAMP = 35.0
_LOG_2PI = np.log(2.0 * np.pi)


class SamplerError(RuntimeError):
    pass


def expit(x):
    return _expit(np.clip(x, -LOGIT_CLAMP, LOGIT_CLAMP))


def logit(p):
    return _logit(p)


def log_expit(x):
    return -np.logaddexp(0.0, -x)


def draw_gaussian_canonical(P: np.ndarray, b: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw from N(P^{-1} b, P^{-1}) given a symmetric positive definite precision ``P``."""
    try:
        c, lower = cho_factor(P, lower=True, check_finite=False)
    except LinAlgError as exc:
        raise SamplerError(f"posterior precision is not positive definite: {exc}") from None
    mean = cho_solve((c, lower), b, check_finite=False)
    eps = rng.standard_normal(b.shape[0])
    return mean + solve_triangular(c, eps, lower=True, trans="T", check_finite=False)


def inv_gamma(rng: np.random.Generator, shape, scale, size=None):
    """Inverse-gamma draw with density proportional to x^(-shape-1) exp(-scale/x)."""
    return scale / rng.gamma(shape, 1.0, size=size)


def norm_logpdf(x, mean, var):
    return -0.5 * (_LOG_2PI + np.log(var) + (x - mean) ** 2 / var)


def beta_logpdf(x, a, b):
    with np.errstate(divide="ignore", invalid="ignore"):
        return (a - 1.0) * np.log(x) + (b - 1.0) * np.log1p(-x) - betaln(a, b)


def log1mexp(x):
    """log(1 - exp(x)) for x <= 0."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(x > -0.6931, np.log(-np.expm1(x)), np.log1p(-np.exp(x)))
