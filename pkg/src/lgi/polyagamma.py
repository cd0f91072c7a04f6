"""Exact sampling from the Polya-Gamma PG(1, z) distribution.

Devroye-style alternating-series accept/reject for J*(1, z/2), using
PG(1, z) = J*(1, z/2) / 4. The proposal mixes a truncated exponential on
(t, inf) with a truncated inverse Gaussian on (0, t), t = 0.64; acceptance
is decided by the partial sums of the series density, which bracket the
target from alternating sides so no truncation error is introduced.

All routines are vectorized over ``z``; a draw consumes random numbers from
the supplied :class:`numpy.random.Generator` only, so identical seeds give
identical sequences.
"""
from __future__ import annotations

import numpy as np
from scipy.special import log_ndtr

_T = 0.64
_PI2_8 = np.pi ** 2 / 8.0
_LOG_PI_2 = np.log(np.pi / 2.0)
_LOG_4_PI = np.log(4.0 / np.pi)
Z_CLAMP = 700.0


def pg_mean(z):
    """E[PG(1, z)] = tanh(z/2) / (2z), equal to 1/4 at z = 0."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-6
    safe = np.where(small, 1.0, z)
    out = np.where(small, 0.25 - z * z / 48.0, np.tanh(safe / 2.0) / (2.0 * safe))
    return out[()] if out.ndim == 0 else out


def pg_var(z):
    """Var[PG(1, z)] = (sinh z - z) / (4 z^3 cosh^2(z/2)), equal to 1/24 at z = 0."""
    z = np.abs(np.asarray(z, dtype=float))
    small = z < 1e-3
    safe = np.where(small, 1.0, z)
    # sinh z / cosh^2(z/2) = 2 tanh(z/2); this form stays finite for large z
    sech2 = 1.0 / np.cosh(np.minimum(safe / 2.0, 350.0)) ** 2
    big = (2.0 * np.tanh(safe / 2.0) - safe * sech2) / (4.0 * safe ** 3)
    out = np.where(small, 1.0 / 24.0 - z * z / 240.0, big)
    return out[()] if out.ndim == 0 else out


def _series_term(n: int, x: np.ndarray) -> np.ndarray:
    """n-th coefficient a_n(x) of the J*(1, 0) density series."""
    k = (n + 0.5) * np.pi
    out = np.empty_like(x)
    right = x > _T
    xr = x[right]
    out[right] = k * np.exp(-0.5 * k * k * xr)
    xl = x[~right]
    with np.errstate(divide="ignore"):
        expnt = -1.5 * (_LOG_PI_2 + np.log(xl)) + np.log(k) - 2.0 * (n + 0.5) ** 2 / xl
    out[~right] = np.where(xl > 0, np.exp(expnt), 0.0)
    return out


def _prob_exponential(c: np.ndarray) -> np.ndarray:
    """Mixture weight of the truncated-exponential piece of the proposal."""
    fz = _PI2_8 + 0.5 * c * c
    rt = np.sqrt(1.0 / _T)
    b = rt * (_T * c - 1.0)
    a = -rt * (_T * c + 1.0)
    x0 = np.log(fz) + fz * _T
    xb = x0 - c + log_ndtr(b)
    xa = x0 + c + log_ndtr(a)
    log_q_over_p = _LOG_4_PI + np.logaddexp(xb, xa)
    # 1 / (1 + q/p) computed without overflow
    return np.exp(-np.logaddexp(0.0, log_q_over_p))


def _truncated_inverse_gaussian(c: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """IG(mean 1/c, shape 1) restricted to (0, t)."""
    out = np.empty_like(c)
    low = c < 1.0 / _T  # mean above truncation: exact chi-square based rejection
    idx = np.flatnonzero(low)
    while idx.size:
        e1 = rng.standard_exponential(idx.size)
        e2 = rng.standard_exponential(idx.size)
        ok = e1 * e1 <= 2.0 * e2 / _T
        x = _T / (1.0 + _T * e1) ** 2
        accept = ok & (rng.random(idx.size) <= np.exp(-0.5 * c[idx] ** 2 * x))
        out[idx[accept]] = x[accept]
        idx = idx[~accept]

    idx = np.flatnonzero(~low)
    while idx.size:
        mu = 1.0 / c[idx]
        y = rng.standard_normal(idx.size) ** 2
        mu_y = mu * y
        x = mu + 0.5 * mu * mu_y - 0.5 * mu * np.sqrt(4.0 * mu_y + mu_y * mu_y)
        flip = rng.random(idx.size) > mu / (mu + x)
        x = np.where(flip, mu * mu / x, x)
        accept = x < _T
        out[idx[accept]] = x[accept]
        idx = idx[~accept]
    return out


def draw_pg1(z, rng: np.random.Generator):
    """Draw from PG(1, z) for every entry of ``z`` (scalar in, scalar out).

    Tilts with ``|z| > 700`` are clamped to 700.
    """
    z_arr = np.asarray(z, dtype=float)
    if not np.isfinite(z_arr).all():
        raise ValueError("draw_pg1 needs finite tilts")
    c = 0.5 * np.minimum(np.abs(z_arr.ravel()), Z_CLAMP)
    out = np.empty_like(c)
    todo = np.arange(c.size)
    while todo.size:
        cz = c[todo]
        fz = _PI2_8 + 0.5 * cz * cz
        use_exp = rng.random(todo.size) < _prob_exponential(cz)
        x = np.empty_like(cz)
        n_exp = int(use_exp.sum())
        x[use_exp] = _T + rng.standard_exponential(n_exp) / fz[use_exp]
        if n_exp < todo.size:
            x[~use_exp] = _truncated_inverse_gaussian(cz[~use_exp], rng)

        s = _series_term(0, x)
        y = rng.random(todo.size) * s
        accepted = np.zeros(todo.size, dtype=bool)
        live = np.arange(todo.size)
        n = 0
        while live.size:
            n += 1
            term = _series_term(n, x[live])
            if n % 2:
                s[live] -= term
                hit = y[live] <= s[live]
                accepted[live[hit]] = True
                live = live[~hit]
            else:
                s[live] += term
                live = live[y[live] <= s[live]]
        out[todo[accepted]] = 0.25 * x[accepted]
        todo = todo[~accepted]
    out = out.reshape(z_arr.shape)
    return out[()] if out.ndim == 0 else out
