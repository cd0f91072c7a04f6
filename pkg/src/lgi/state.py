"""Prior configuration, the MCMC parameter state and shrinkage bookkeeping."""
from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, fields

import numpy as np

from .data import InteractionData, TraitMatrix, blend_correlation


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PriorConfig:
    H: int = 10
    nu: float = 5.0
    alpha: float = 5.0
    alpha_theta: float = 2.0
    beta_theta: float = 2.0
    theta_inf: float = 0.01
    a_rho: float = 1.0
    b_rho: float = 1.0
    a_sigma: float = 1.0
    b_sigma: float = 1.0
    mu_0: float = 0.0
    sigma2_0: float = 100.0
    mh_concentration: float = 100.0

    def __post_init__(self):
        if int(self.H) != self.H or self.H < 1:
            raise ConfigError(f"H must be a positive integer, got {self.H}")
        for name in ("nu", "alpha", "alpha_theta", "beta_theta", "theta_inf", "a_rho", "b_rho",
                     "a_sigma", "b_sigma", "sigma2_0", "mh_concentration"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "PriorConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown prior keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "PriorConfig":
        return cls.from_dict(json.loads(text))


@dataclass
class ShrinkState:
    theta: np.ndarray       # (H,)
    tau_beta: np.ndarray    # (p_B, H)
    tau_gamma: np.ndarray   # (p_P, H)
    tau_lam: np.ndarray     # (H,)
    tau_delta: np.ndarray   # (H,)
    tau_zeta: np.ndarray    # (H,)
    v: np.ndarray           # (H,), v[-1] == 1
    omega: np.ndarray       # (H,)
    pi: np.ndarray          # (H,)
    z: np.ndarray           # (H,) with values in 1..H


def stick_break(v) -> tuple[np.ndarray, np.ndarray]:
    """Stick-breaking weights ``omega`` and their cumulative sums ``pi``.

    >>> stick_break([0.5, 0.5, 1.0])
    (array([0.5 , 0.25, 0.25]), array([0.5 , 0.75, 1.  ]))
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("v must be a non-empty vector")
    if v[-1] != 1.0:
        raise ValueError("the last stick fraction must equal 1")
    if ((v < 0) | (v > 1)).any():
        raise ValueError("stick fractions must lie in [0, 1]")
    remaining = np.concatenate(([1.0], np.cumprod(1.0 - v[:-1])))
    omega = v * remaining
    pi = np.cumsum(omega)
    pi[-1] = 1.0
    return omega, pi


_TAU_FIELDS = {"beta": "tau_beta", "gamma": "tau_gamma", "lambda": "tau_lam",
               "delta": "tau_delta", "zeta": "tau_zeta"}


def coefficient_prior_variance(shrink: ShrinkState, which: str, h: int, m: int | None = None) -> float:
    """Prior variance tau * theta_h of one slope coefficient.

    ``which`` is one of ``beta``, ``gamma`` (need trait index ``m``), ``lambda``,
    ``delta`` or ``zeta``; ``h`` is the 0-based factor index. Intercepts do not
    go through the shrinkage prior.
    """
    if which not in _TAU_FIELDS:
        raise ValueError(f"unknown coefficient family {which!r}")
    H = shrink.theta.size
    if not 0 <= h < H:
        raise IndexError(f"factor index {h} outside 0..{H - 1}")
    tau = getattr(shrink, _TAU_FIELDS[which])
    t = tau[m, h] if tau.ndim == 2 else tau[h]
    return float(t * shrink.theta[h])


@dataclass
class ParamState:
    """One full state of the latent-factor sampler.

    Trait coefficient matrices ``B`` (H, p_B) and ``G`` (H, p_P) follow the
    factor-by-trait layout; residual variances of binary traits are unused and
    kept at 1.
    """

    L: np.ndarray
    U: np.ndarray
    V: np.ndarray
    lam0: float
    lam: np.ndarray
    beta0: np.ndarray
    B: np.ndarray
    sigma2_X: np.ndarray
    gamma0: np.ndarray
    G: np.ndarray
    sigma2_W: np.ndarray
    delta0: float
    delta: np.ndarray
    zeta0: float
    zeta: np.ndarray
    s2_pB: float
    s2_pP: float
    p_row: np.ndarray
    p_col: np.ndarray
    rho_U: float
    rho_V: float
    shrink: ShrinkState
    X: np.ndarray   # current trait values, imputations at missing cells
    W: np.ndarray

    def copy(self) -> "ParamState":
        return copy.deepcopy(self)

    @property
    def H(self) -> int:
        return self.lam.size

    def interaction_logits(self) -> np.ndarray:
        return self.lam0 + (self.U * self.lam) @ self.V.T


def _inv_gamma(rng, shape, scale, size=None):
    return scale / rng.gamma(shape, 1.0, size=size)


def init_state(config: PriorConfig, data: InteractionData, traits_row: TraitMatrix,
               traits_col: TraitMatrix, C_U: np.ndarray, C_V: np.ndarray,
               rng: np.random.Generator) -> ParamState:
    """Random starting state; depends only on its arguments and ``rng``."""
    n_B, n_P = data.A.shape
    if traits_row.n != n_B or traits_col.n != n_P:
        raise ConfigError("trait matrices do not match the network dimensions")
    if C_U.shape != (n_B, n_B) or C_V.shape != (n_P, n_P):
        raise ConfigError("correlation matrices do not match the network dimensions")
    H = int(config.H)
    p_B, p_P = traits_row.p, traits_col.p

    v = np.append(rng.beta(1.0, config.alpha, size=H - 1), 1.0)
    omega, pi = stick_break(v)
    shrink = ShrinkState(
        theta=_inv_gamma(rng, config.alpha_theta, config.beta_theta, H),
        tau_beta=_inv_gamma(rng, config.nu / 2, config.nu / 2, (p_B, H)),
        tau_gamma=_inv_gamma(rng, config.nu / 2, config.nu / 2, (p_P, H)),
        tau_lam=_inv_gamma(rng, config.nu / 2, config.nu / 2, H),
        tau_delta=_inv_gamma(rng, config.nu / 2, config.nu / 2, H),
        tau_zeta=_inv_gamma(rng, config.nu / 2, config.nu / 2, H),
        v=v, omega=omega, pi=pi, z=np.full(H, H, dtype=np.int64),
    )

    def slopes(tau):
        # tau is (H,) or (H, p)
        th = shrink.theta if tau.ndim == 1 else shrink.theta[:, None]
        return rng.normal(size=tau.shape) * np.sqrt(tau * th)

    rho0 = config.a_rho / (config.a_rho + config.b_rho)
    U = rng.multivariate_normal(np.zeros(n_B), blend_correlation(C_U, rho0), size=H, method="cholesky").T
    V = rng.multivariate_normal(np.zeros(n_P), blend_correlation(C_V, rho0), size=H, method="cholesky").T

    L = data.A.copy()
    unrec = data.A == 0
    L[unrec] = (rng.random(int(unrec.sum())) < 0.1).astype(np.int8)

    return ParamState(
        L=L, U=U, V=V,
        lam0=float(config.mu_0), lam=slopes(shrink.tau_lam),
        beta0=np.full(p_B, float(config.mu_0)), B=slopes(shrink.tau_beta.T),
        sigma2_X=np.ones(p_B),
        gamma0=np.full(p_P, float(config.mu_0)), G=slopes(shrink.tau_gamma.T),
        sigma2_W=np.ones(p_P),
        delta0=float(config.mu_0), delta=slopes(shrink.tau_delta),
        zeta0=float(config.mu_0), zeta=slopes(shrink.tau_zeta),
        s2_pB=1.0, s2_pP=1.0,
        p_row=np.full(n_B, 0.5), p_col=np.full(n_P, 0.5),
        rho_U=rho0, rho_V=rho0,
        shrink=shrink,
        X=initial_imputation(traits_row, rng),
        W=initial_imputation(traits_col, rng),
    )


def initial_imputation(traits: TraitMatrix, rng: np.random.Generator) -> np.ndarray:
    """Fill missing cells: column mean for continuous, Bernoulli(observed rate) for binary."""
    X = traits.values.copy()
    for m in range(traits.p):
        miss = traits.missing[:, m]
        if not miss.any():
            continue
        obs = X[~miss, m]
        mean = obs.mean() if obs.size else (0.5 if traits.is_binary[m] else 0.0)
        if traits.is_binary[m]:
            X[miss, m] = (rng.random(int(miss.sum())) < mean).astype(float)
        else:
            X[miss, m] = mean
    return X
