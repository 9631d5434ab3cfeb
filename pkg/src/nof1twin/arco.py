"""Autoregressive-carryover outcome process: simulation and long-run formulas.

The structural outcome mechanism at period t > 1 is, for exposure level s:

    Y^s_t = beta0 + beta_x*s + beta_co*X_{t-1} + beta_xco*s*X_{t-1}
            + beta_ar*Y_{t-1} + beta_xar*s*Y_{t-1} + V_t . beta_ex + eps_t

with Y_1 = beta0 + V_1 . beta_ex + eps_1.  The observed outcome follows by
causal consistency, Y_t = Y^1_t X_t + Y^0_t (1 - X_t).  Exposure is either
i.i.d. Bernoulli(pi1) (randomized mode) or endogenous through
logit(pi_t) = alpha0 + alpha_en*Y_{t-1} [+ alpha_ar*X_{t-1} + V_t . alpha_ex].
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter
from scipy.special import expit

from .core import SeedSpec, TimeSeriesDataset, as_seed, validate_finite
from .errors import ConfigError, NonstationaryParamsError

# Sub-stream labels under a simulation SeedSpec.
_EPS_STREAM = 0
_X_STREAM = 1


@dataclass(frozen=True)
class ArcoParams:
    """Coefficients of the structural outcome mechanism."""

    beta0: float
    beta_x: float = 0.0
    beta_co: float = 0.0
    beta_xco: float = 0.0
    beta_ar: float = 0.0
    beta_xar: float = 0.0
    beta_ex: tuple[float, ...] = ()
    sigma_eps: float = 0.0

    def __post_init__(self) -> None:
        for name in ("beta0", "beta_x", "beta_co", "beta_xco", "beta_ar", "beta_xar", "sigma_eps"):
            validate_finite(name, getattr(self, name))
        object.__setattr__(self, "beta_ex", tuple(float(b) for b in self.beta_ex))
        if self.sigma_eps < 0:
            raise ConfigError(f"sigma_eps must be >= 0, got {self.sigma_eps}")

    def require_stationary(self) -> None:
        if abs(self.beta_ar) >= 1 or abs(self.beta_ar) + abs(self.beta_xar) >= 1:
            raise NonstationaryParamsError(
                "long-run formulas need |beta_ar| < 1 and |beta_ar| + |beta_xar| < 1 "
                f"(got beta_ar={self.beta_ar}, beta_xar={self.beta_xar})"
            )


@dataclass(frozen=True)
class PropensityParams:
    """Coefficients of the logistic exposure mechanism."""

    alpha0: float
    alpha_en: float
    alpha_ar: float = 0.0
    alpha_ex: tuple[float, ...] = ()
    pi1: float = 0.5

    def __post_init__(self) -> None:
        for name in ("alpha0", "alpha_en", "alpha_ar", "pi1"):
            validate_finite(name, getattr(self, name))
        object.__setattr__(self, "alpha_ex", tuple(float(a) for a in self.alpha_ex))
        if not 0.0 < self.pi1 < 1.0:
            raise ConfigError(f"pi1 must lie strictly between 0 and 1, got {self.pi1}")


@dataclass(frozen=True)
class SimConfig:
    """Length, burn-in, seeding, and assignment mode for one simulated series."""

    m_analysis: int
    burn_in: int = 2
    seed: SeedSpec | int = 0
    randomized_mode: bool = False

    def __post_init__(self) -> None:
        if self.m_analysis < 10:
            raise ConfigError(f"m_analysis must be >= 10, got {self.m_analysis}")
        if self.burn_in < 0:
            raise ConfigError(f"burn_in must be >= 0, got {self.burn_in}")
        object.__setattr__(self, "seed", as_seed(self.seed))


def _exog_matrix(
    params: ArcoParams,
    prop: PropensityParams,
    exog: Mapping[str, np.ndarray] | None,
    total: int,
) -> tuple[tuple[str, ...], np.ndarray]:
    names = tuple(exog.keys()) if exog else ()
    if len(params.beta_ex) not in (0, len(names)):
        raise ConfigError(
            f"beta_ex has {len(params.beta_ex)} entries but {len(names)} exogenous "
            "series were supplied"
        )
    if len(prop.alpha_ex) not in (0, len(names)):
        raise ConfigError(
            f"alpha_ex has {len(prop.alpha_ex)} entries but {len(names)} exogenous "
            "series were supplied"
        )
    if not names:
        return (), np.zeros((total, 0))
    mat = np.column_stack([np.asarray(exog[n], dtype=float) for n in names])
    if mat.shape[0] != total:
        raise ConfigError(
            f"exogenous series must cover all {total} generated periods, got {mat.shape[0]}"
        )
    return names, mat


def simulate_dataset(
    params: ArcoParams,
    prop: PropensityParams,
    cfg: SimConfig,
    exog: Mapping[str, np.ndarray] | None = None,
    return_potential: bool = False,
):
    """Generate one synthetic series and drop the leading burn-in periods.

    Both potential outcomes are generated at every period from a shared
    noise draw and the observed outcome is selected by causal consistency.
    With `return_potential=True` the retained (y1, y0) arrays are returned
    alongside the dataset for verification.
    """
    total = cfg.m_analysis + cfg.burn_in
    names, v = _exog_matrix(params, prop, exog, total)
    v_out = v @ np.asarray(params.beta_ex) if params.beta_ex else np.zeros(total)
    v_prop = v @ np.asarray(prop.alpha_ex) if prop.alpha_ex else np.zeros(total)

    seed = as_seed(cfg.seed)
    eps = seed.child(_EPS_STREAM).normals(total, params.sigma_eps)
    u = seed.child(_X_STREAM).uniforms(total)

    x = np.zeros(total, dtype=np.int64)
    x[0] = int(u[0] < prop.pi1)
    y = np.empty(total)
    y[0] = params.beta0 + v_out[0] + eps[0]
    po1 = np.empty(total)
    po0 = np.empty(total)
    po1[0] = po0[0] = y[0]

    if cfg.randomized_mode:
        x[1:] = u[1:] < prop.pi1
        base = (
            params.beta0
            + params.beta_x * x[1:]
            + params.beta_co * x[:-1]
            + params.beta_xco * x[1:] * x[:-1]
            + v_out[1:]
            + eps[1:]
        )
        if params.beta_xar == 0.0:
            # Linear recursion with constant AR coefficient: one filter pass.
            zi = np.array([params.beta_ar * y[0]])
            y[1:] = lfilter([1.0], [1.0, -params.beta_ar], base, zi=zi)[0]
        else:
            ar = params.beta_ar + params.beta_xar * x[1:]
            prev = y[0]
            base_list = base.tolist()
            ar_list = ar.tolist()
            out = y[1:]
            for i in range(total - 1):
                prev = base_list[i] + ar_list[i] * prev
                out[i] = prev
        # The observed path IS the received-arm potential outcome; only the
        # counterfactual arm is reconstructed, keeping consistency exact.
        ylag = y[:-1]
        effect = params.beta_x + params.beta_xco * x[:-1] + params.beta_xar * ylag
        po1[1:] = np.where(x[1:] == 1, y[1:], y[1:] + effect)
        po0[1:] = np.where(x[1:] == 0, y[1:], y[1:] - effect)
    else:
        for t in range(1, total):
            eta = prop.alpha0 + prop.alpha_en * y[t - 1] + prop.alpha_ar * x[t - 1] + v_prop[t]
            x[t] = int(u[t] < expit(eta))
            common = (
                params.beta0
                + params.beta_co * x[t - 1]
                + params.beta_ar * y[t - 1]
                + v_out[t]
                + eps[t]
            )
            po1[t] = common + params.beta_x + params.beta_xco * x[t - 1] + params.beta_xar * y[t - 1]
            po0[t] = common
            y[t] = po1[t] if x[t] else po0[t]

    keep = slice(cfg.burn_in, total)
    assert np.array_equal(y, po1 * x + po0 * (1 - x))
    ds = TimeSeriesDataset(
        y=y[keep],
        x=x[keep],
        exog={n: v[keep, k] for k, n in enumerate(names)} or None,
        burn_in_dropped=cfg.burn_in,
    )
    if return_potential:
        return ds, po1[keep].copy(), po0[keep].copy()
    return ds


def long_run_mean(params: ArcoParams, pi: float, mu_v: tuple[float, ...] = ()) -> float:
    """Stationary mean outcome under period-wise randomization P(X=1) = pi."""
    params.require_stationary()
    if not 0.0 <= pi <= 1.0:
        raise ConfigError(f"pi must lie in [0, 1], got {pi}")
    if len(mu_v) != len(params.beta_ex):
        raise ConfigError(
            f"mu_v has {len(mu_v)} entries but beta_ex has {len(params.beta_ex)}"
        )
    denom = 1.0 - params.beta_ar - params.beta_xar * pi
    if denom <= 0:
        raise NonstationaryParamsError(
            f"long-run mean undefined: 1 - beta_ar - beta_xar*pi = {denom} <= 0"
        )
    numer = (
        params.beta0
        + params.beta_x * pi
        + params.beta_co * pi
        + params.beta_xco * pi * pi
        + float(np.dot(mu_v, params.beta_ex))
    )
    return numer / denom


def long_run_apte(params: ArcoParams, pi: float, mu_y: float) -> float:
    """Stationary average period treatment effect under randomization."""
    params.require_stationary()
    if not 0.0 <= pi <= 1.0:
        raise ConfigError(f"pi must lie in [0, 1], got {pi}")
    return params.beta_x + params.beta_xco * pi + params.beta_xar * mu_y
