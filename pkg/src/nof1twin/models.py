"""Outcome and propensity model fits behind one common interface.

Linear least squares (QR), logistic regression via IRLS, and bagged CART
forests for both regression and classification.  Every fit is a
deterministic function of (data, config, seed).
"""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .core import LAG_QUARTILE, FeatureMatrix, SeedSpec, as_seed
from .errors import ConfigError, ConvergenceError, EstimatorError
from .forest import FlatForest, IndexSampler, build_forest, oob_predictions

INTERCEPT = "intercept"

# Logit-scale magnitude beyond which a logistic fit is treated as separated.
SEPARATION_LIMIT = 30.0
_IRLS_TOL = 1e-10
_IRLS_MAX_ITER = 50
_RANK_TOL = 1e-9


@dataclass(frozen=True)
class ForestConfig:
    """Forest hyperparameters; unset fields resolve to task defaults.

    mtry defaults to floor(p/3) for regression and ceil(sqrt(p)) for
    classification (minimum 1); min_node_size defaults to 5 / 1.  Bootstrap
    samples are drawn with replacement at the original sample size.
    """

    n_trees: int = 500
    mtry: int | None = None
    min_node_size: int | None = None
    seed: SeedSpec | int = 0

    def __post_init__(self) -> None:
        if self.n_trees < 1:
            raise ConfigError(f"n_trees must be >= 1, got {self.n_trees}")
        object.__setattr__(self, "seed", as_seed(self.seed))

    def resolve(self, p: int, classification: bool) -> tuple[int, int]:
        if self.mtry is None:
            mtry = max(1, math.ceil(math.sqrt(p))) if classification else max(1, p // 3)
        else:
            mtry = self.mtry
        if not 1 <= mtry <= max(p, 1):
            raise ConfigError(f"mtry must lie in [1, {p}], got {mtry}")
        node = self.min_node_size if self.min_node_size is not None else (1 if classification else 5)
        if node < 1:
            raise ConfigError(f"min_node_size must be >= 1, got {node}")
        return mtry, node


class _LinearPredictor:
    def __init__(self, beta: np.ndarray, keep: np.ndarray):
        self.beta = beta
        self.keep = keep  # design columns kept after any reference drop

    def __call__(self, f: np.ndarray) -> np.ndarray:
        f = np.atleast_2d(np.asarray(f, dtype=float))
        design = np.hstack([np.ones((f.shape[0], 1)), f[:, self.keep]])
        return design @ self.beta


@dataclass(frozen=True)
class FittedOutcomeModel:
    """A trained mean-outcome predictor plus its residual scale."""

    kind: str  # "linear" | "forest"
    columns: tuple[str, ...]
    resid_sd: float
    coefficients: dict[str, float] | None = None
    coefficient_se: dict[str, float] | None = None
    forest_config: ForestConfig | None = None
    _predictor: object = field(default=None, repr=False, compare=False)

    def predict_mean(self, f: np.ndarray) -> np.ndarray:
        """Mean prediction for feature rows laid out as in the fitted matrix."""
        return self._predictor(f)

    def summary(self) -> dict:
        out: dict = {"kind": self.kind, "columns": list(self.columns), "resid_sd": self.resid_sd}
        if self.coefficients is not None:
            out["coefficients"] = dict(self.coefficients)
        if self.forest_config is not None:
            out["forest"] = {
                "n_trees": self.forest_config.n_trees,
                "mtry": self.forest_config.mtry,
                "min_node_size": self.forest_config.min_node_size,
            }
        return out


@dataclass(frozen=True)
class FittedPropensityModel:
    """A trained exposure-probability predictor."""

    kind: str  # "logistic" | "forest"
    columns: tuple[str, ...]
    coefficients: dict[str, float] | None = None
    separation_warning: bool = False
    forest_config: ForestConfig | None = None
    insample_prob: np.ndarray | None = field(default=None, compare=False)
    _predictor: object = field(default=None, repr=False, compare=False)

    def predict_prob(self, f: np.ndarray) -> np.ndarray:
        return self._predictor(f)

    def summary(self) -> dict:
        out: dict = {"kind": self.kind, "columns": list(self.columns)}
        if self.coefficients is not None:
            out["coefficients"] = dict(self.coefficients)
            out["separation_warning"] = self.separation_warning
        if self.forest_config is not None:
            out["forest"] = {
                "n_trees": self.forest_config.n_trees,
                "mtry": self.forest_config.mtry,
                "min_node_size": self.forest_config.min_node_size,
            }
        return out


def _design(fm: FeatureMatrix) -> tuple[np.ndarray, list[str], np.ndarray]:
    """Intercept-augmented design matrix for the GLM fitters.

    A full quartile indicator block is collinear with the intercept, so the
    first slot is dropped as the reference level (its effect is absorbed by
    the intercept), matching standard factor coding.
    """
    cols = list(fm.columns)
    keep = np.arange(len(cols))
    if fm.spec.outcome_lag_mode == LAG_QUARTILE:
        ref = cols.index("y_lag1_q1")
        keep = np.delete(keep, ref)
        cols.pop(ref)
    design = np.hstack([np.ones((fm.n_rows, 1)), fm.values[:, keep]])
    return design, [INTERCEPT, *cols], keep


def _check_rank(design: np.ndarray, names: list[str]) -> None:
    _, r, pivot = scipy.linalg.qr(design, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = _RANK_TOL * max(design.shape) * (diag[0] if diag.size else 1.0)
    rank = int((diag > tol).sum())
    if rank < design.shape[1]:
        collinear = [names[j] for j in pivot[rank:]]
        raise EstimatorError(f"design matrix is rank deficient; collinear column(s): {collinear}")


def fit_linear_outcome(fm: FeatureMatrix, y: np.ndarray) -> FittedOutcomeModel:
    """Least-squares outcome fit with intercept.

    Coefficients minimize the sum of squared residuals via QR; resid_sd is
    the sample SD of residuals with denominator n - p.
    """
    if not fm.spec.include_current_exposure:
        raise EstimatorError("outcome models must include the current exposure feature")
    y = np.asarray(y, dtype=float)
    design, names, keep = _design(fm)
    n, p = design.shape
    if n < p + 1:
        raise EstimatorError(f"need at least {p + 1} rows to fit {p} coefficients, got {n}")
    _check_rank(design, names)
    q, r = np.linalg.qr(design)
    beta = scipy.linalg.solve_triangular(r, q.T @ y)
    resid = y - design @ beta
    ssr = float(resid @ resid)
    resid_sd = math.sqrt(max(ssr, 0.0) / (n - p))
    r_inv = scipy.linalg.solve_triangular(r, np.eye(p))
    se = resid_sd * np.sqrt((r_inv * r_inv).sum(axis=1))
    return FittedOutcomeModel(
        kind="linear",
        columns=fm.columns,
        resid_sd=resid_sd,
        coefficients=dict(zip(names, beta.tolist())),
        coefficient_se=dict(zip(names, se.tolist())),
        _predictor=_LinearPredictor(beta, keep),
    )


def linear_outcome_from_coefficients(
    spec_columns: tuple[str, ...],
    coefficients: Mapping[str, float],
    resid_sd: float,
) -> FittedOutcomeModel:
    """Assemble a linear outcome model from given coefficients (no fitting).

    `coefficients` maps "intercept" and each feature column to its weight;
    missing columns default to 0.
    """
    beta = np.array(
        [coefficients.get(INTERCEPT, 0.0)] + [coefficients.get(c, 0.0) for c in spec_columns]
    )
    return FittedOutcomeModel(
        kind="linear",
        columns=tuple(spec_columns),
        resid_sd=float(resid_sd),
        coefficients={INTERCEPT: beta[0], **{c: coefficients.get(c, 0.0) for c in spec_columns}},
        _predictor=_LinearPredictor(beta, np.arange(len(spec_columns))),
    )


class _LogisticPredictor:
    def __init__(self, beta: np.ndarray, keep: np.ndarray):
        self.beta = beta
        self.keep = keep

    def __call__(self, f: np.ndarray) -> np.ndarray:
        f = np.atleast_2d(np.asarray(f, dtype=float))
        design = np.hstack([np.ones((f.shape[0], 1)), f[:, self.keep]])
        eta = design @ self.beta
        return 1.0 / (1.0 + np.exp(-eta))


def fit_logistic_propensity(fm: FeatureMatrix, x: np.ndarray) -> FittedPropensityModel:
    """Bernoulli maximum likelihood via IRLS.

    Converges when the largest absolute coefficient change drops below 1e-10
    (at most 50 iterations).  If a coefficient passes the separation limit
    the fit stops there and the model carries a separation warning so
    downstream trimming still functions.
    """
    x = np.asarray(x, dtype=float)
    if not (np.any(x == 1) and np.any(x == 0)):
        raise EstimatorError("propensity fit needs both exposure classes present")
    design, names, keep = _design(fm)
    n, p = design.shape
    if n < p + 1:
        raise EstimatorError(f"need at least {p + 1} rows to fit {p} coefficients, got {n}")
    _check_rank(design, names)

    beta = np.zeros(p)
    separated = False
    trace: list[float] = []
    for _ in range(_IRLS_MAX_ITER):
        eta = design @ beta
        prob = 1.0 / (1.0 + np.exp(-eta))
        w = prob * (1.0 - prob)
        xtwx = design.T @ (design * w[:, None])
        score = design.T @ (x - prob)
        try:
            step = np.linalg.solve(xtwx, score)
        except np.linalg.LinAlgError:
            raise EstimatorError(
                "IRLS weighted normal equations are singular (weights collapsed)"
            ) from None
        beta = beta + step
        change = float(np.max(np.abs(step)))
        trace.append(change)
        if np.max(np.abs(beta)) > SEPARATION_LIMIT:
            separated = True
            break
        if change < _IRLS_TOL:
            break
    else:
        raise ConvergenceError(
            f"IRLS did not converge in {_IRLS_MAX_ITER} iterations; "
            f"max-step trace: {[f'{c:.3g}' for c in trace]}"
        )
    return FittedPropensityModel(
        kind="logistic",
        columns=fm.columns,
        coefficients=dict(zip(names, beta.tolist())),
        separation_warning=separated,
        _predictor=_LogisticPredictor(beta, keep),
    )


def logistic_propensity_from_coefficients(
    spec_columns: tuple[str, ...],
    coefficients: Mapping[str, float],
) -> FittedPropensityModel:
    """Assemble a logistic propensity model from given coefficients."""
    beta = np.array(
        [coefficients.get(INTERCEPT, 0.0)] + [coefficients.get(c, 0.0) for c in spec_columns]
    )
    return FittedPropensityModel(
        kind="logistic",
        columns=tuple(spec_columns),
        coefficients={INTERCEPT: beta[0], **{c: coefficients.get(c, 0.0) for c in spec_columns}},
        _predictor=_LogisticPredictor(beta, np.arange(len(spec_columns))),
    )


class _ForestPredictor:
    def __init__(self, forest: FlatForest, clip: bool):
        self.forest = forest
        self.clip = clip

    def __call__(self, f: np.ndarray) -> np.ndarray:
        pred = self.forest.predict(f)
        return np.clip(pred, 0.0, 1.0) if self.clip else pred


def fit_forest_outcome(
    fm: FeatureMatrix,
    y: np.ndarray,
    cfg: ForestConfig,
    index_sampler: IndexSampler | None = None,
) -> FittedOutcomeModel:
    """Bagged regression trees; resid_sd from out-of-bag training residuals.

    Out-of-bag averaging keeps in-sample predictions honest (an all-trees
    average would be dominated by each row's own bootstrap copies); new
    inputs are predicted with the all-trees average.  resid_sd divides by n
    (no parameter count is available for a forest).
    """
    if not fm.spec.include_current_exposure:
        raise EstimatorError("outcome models must include the current exposure feature")
    y = np.asarray(y, dtype=float)
    if fm.n_rows < 5:
        raise EstimatorError(f"forest fit needs at least 5 rows, got {fm.n_rows}")
    mtry, node = cfg.resolve(len(fm.columns), classification=False)
    forest, inbag = build_forest(
        fm.values, y, cfg.n_trees, mtry, node, as_seed(cfg.seed), index_sampler
    )
    resid = y - oob_predictions(forest, inbag, fm.values)
    resid_sd = float(np.sqrt(np.mean(resid * resid)))
    return FittedOutcomeModel(
        kind="forest",
        columns=fm.columns,
        resid_sd=resid_sd,
        forest_config=cfg,
        _predictor=_ForestPredictor(forest, clip=False),
    )


def fit_forest_propensity(
    fm: FeatureMatrix,
    x: np.ndarray,
    cfg: ForestConfig,
    index_sampler: IndexSampler | None = None,
) -> FittedPropensityModel:
    """Bagged classification trees (Gini splits).

    predict_prob averages per-tree terminal-node class-1 proportions.  The
    stored in-sample propensities use out-of-bag averaging for the same
    reason as the outcome forest's residuals.
    """
    x = np.asarray(x, dtype=float)
    if not (np.any(x == 1) and np.any(x == 0)):
        raise EstimatorError("propensity fit needs both exposure classes present")
    if fm.n_rows < 5:
        raise EstimatorError(f"forest fit needs at least 5 rows, got {fm.n_rows}")
    mtry, node = cfg.resolve(len(fm.columns), classification=True)
    forest, inbag = build_forest(
        fm.values, x, cfg.n_trees, mtry, node, as_seed(cfg.seed), index_sampler
    )
    insample = np.clip(oob_predictions(forest, inbag, fm.values), 0.0, 1.0)
    return FittedPropensityModel(
        kind="forest",
        columns=fm.columns,
        forest_config=cfg,
        insample_prob=insample,
        _predictor=_ForestPredictor(forest, clip=True),
    )
