"""OLS, two-stage least squares, ORIV, attenuation, and progressive-R2 analysis.

All solvers go through pivoted QR rather than explicit normal-equation
inversion so near-collinear designs fail loudly with the offending column
names. Standard errors are homoskedastic by default and cluster-robust
when a cluster id is present; the ORIV stack always clusters on the
original row id because its duplicated rows are not independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from .errors import DegenerateDataError, EstimationError, ValidationError

INTERCEPT = "intercept"
WEAK_INSTRUMENT_F = 10.0


@dataclass(frozen=True)
class Dataset:
    """Named numeric columns of equal length plus an optional cluster id."""

    columns: dict[str, np.ndarray]
    cluster_id: np.ndarray | None = None

    def __post_init__(self):
        if not self.columns:
            raise ValidationError("dataset has no columns")
        lengths = {name: len(col) for name, col in self.columns.items()}
        n = len(next(iter(self.columns.values())))
        bad = {name: ln for name, ln in lengths.items() if ln != n}
        if bad:
            raise ValidationError(f"column length mismatch: {bad} vs {n}")
        clean = {}
        for name, col in self.columns.items():
            arr = np.asarray(col, dtype=float)
            if arr.ndim != 1:
                raise ValidationError(f"column {name!r} is not a vector")
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"column {name!r} contains missing or non-finite values")
            clean[name] = arr
        object.__setattr__(self, "columns", clean)
        if self.cluster_id is not None:
            cid = np.asarray(self.cluster_id)
            if cid.shape != (n,):
                raise ValidationError(f"cluster_id length {cid.shape} does not match n={n}")
            object.__setattr__(self, "cluster_id", cid)

    @property
    def n_obs(self) -> int:
        return len(next(iter(self.columns.values())))

    def matrix(self, names) -> np.ndarray:
        missing = [n for n in names if n not in self.columns]
        if missing:
            raise ValidationError(f"unknown column(s): {', '.join(missing)}")
        if not names:
            return np.empty((self.n_obs, 0))
        return np.column_stack([self.columns[n] for n in names])


@dataclass(frozen=True)
class RegressionResult:
    estimator: str  # ols | tsls | oriv
    coefficients: dict[str, float]
    std_errors: dict[str, float]
    r_squared: float
    n_obs: int
    first_stage_f: float | None = None
    notes: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "estimator": self.estimator,
            "coefficients": dict(self.coefficients),
            "std_errors": dict(self.std_errors),
            "r_squared": self.r_squared,
            "n_obs": self.n_obs,
            "first_stage_f": self.first_stage_f,
            "notes": list(self.notes),
        }


@dataclass(frozen=True)
class AttenuationEstimate:
    lambda_hat: float
    var_diff: float
    var_primary: float
    correction: float  # implied 1 / lambda_hat

    def to_dict(self) -> dict:
        return {
            "lambda_hat": self.lambda_hat,
            "var_diff": self.var_diff,
            "var_primary": self.var_primary,
            "correction": self.correction,
        }


@dataclass(frozen=True)
class HorseRaceRow:
    label: str
    regressors: tuple[str, ...]
    r_squared: float
    delta_r_squared: float  # versus the controls-only model

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "regressors": list(self.regressors),
            "r_squared": self.r_squared,
            "delta_r_squared": self.delta_r_squared,
        }


def _qr_solve(X: np.ndarray, y: np.ndarray, names) -> tuple[np.ndarray, np.ndarray]:
    """Least squares via pivoted QR; returns (beta, xtx_inv).

    Raises EstimationError naming the dropped columns on rank deficiency.
    """
    n, k = X.shape
    if n <= k:
        raise EstimationError(f"{n} observations cannot identify {k} coefficients")
    Q, R, piv = sla.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    scale = diag.max() if diag.size else 0.0
    tol = scale * max(n, k) * np.finfo(float).eps
    rank = int(np.sum(diag > tol))
    if rank < k:
        dropped = [names[i] for i in piv[rank:]]
        raise EstimationError(f"design matrix is rank deficient; collinear column(s): {', '.join(dropped)}")
    beta_piv = sla.solve_triangular(R, Q.T @ y, lower=False)
    beta = np.empty(k)
    beta[piv] = beta_piv
    r_inv = sla.solve_triangular(R, np.eye(k), lower=False)
    inv_piv = r_inv @ r_inv.T
    xtx_inv = np.empty((k, k))
    xtx_inv[np.ix_(piv, piv)] = inv_piv
    return beta, xtx_inv


def _cluster_vcov(
    scores_mat: np.ndarray, resid: np.ndarray, xtx_inv: np.ndarray, cluster_id: np.ndarray
) -> np.ndarray:
    n, k = scores_mat.shape
    su = scores_mat * resid[:, None]
    _, inverse = np.unique(cluster_id, return_inverse=True)
    g = int(inverse.max()) + 1
    sums = np.zeros((g, k))
    np.add.at(sums, inverse, su)
    meat = sums.T @ sums
    if g < 2:
        raise EstimationError("cluster-robust errors need at least 2 clusters")
    correction = (g / (g - 1)) * ((n - 1) / (n - k))
    return correction * (xtx_inv @ meat @ xtx_inv)


def _r_squared(y: np.ndarray, resid: np.ndarray, centered: bool) -> float:
    rss = float(resid @ resid)
    if centered:
        yc = y - y.mean()
        tss = float(yc @ yc)
    else:
        tss = float(y @ y)
    if tss == 0.0:
        raise DegenerateDataError("outcome has zero variance; R^2 undefined")
    return 1.0 - rss / tss


def _build_result(
    estimator: str,
    names,
    beta: np.ndarray,
    X_actual: np.ndarray,
    X_proj: np.ndarray,
    y: np.ndarray,
    xtx_inv: np.ndarray,
    cluster_id: np.ndarray | None,
    centered: bool,
    first_stage_f: float | None,
    notes,
) -> RegressionResult:
    n, k = X_actual.shape
    resid = y - X_actual @ beta
    if cluster_id is not None:
        vcov = _cluster_vcov(X_proj, resid, xtx_inv, cluster_id)
    else:
        sigma2 = float(resid @ resid) / (n - k)
        vcov = sigma2 * xtx_inv
    ses = np.sqrt(np.clip(np.diag(vcov), 0.0, None))
    return RegressionResult(
        estimator=estimator,
        coefficients={name: float(b) for name, b in zip(names, beta)},
        std_errors={name: float(s) for name, s in zip(names, ses)},
        r_squared=_r_squared(y, resid, centered),
        n_obs=n,
        first_stage_f=first_stage_f,
        notes=tuple(notes),
    )


def ols(
    data: Dataset, outcome: str, regressors, add_intercept: bool = True
) -> RegressionResult:
    """OLS via pivoted QR; cluster-robust standard errors when a cluster id is set."""
    regressors = list(regressors)
    y = data.matrix([outcome])[:, 0]
    names = ([INTERCEPT] if add_intercept else []) + regressors
    X = data.matrix(regressors)
    if add_intercept:
        X = np.column_stack([np.ones(data.n_obs), X])
    if X.shape[1] == 0:
        raise ValidationError("no regressors and no intercept")
    beta, xtx_inv = _qr_solve(X, y, names)
    return _build_result(
        "ols", names, beta, X, X, y, xtx_inv, data.cluster_id, add_intercept, None, []
    )


def _rss(X: np.ndarray, y: np.ndarray, names) -> float:
    beta, _ = _qr_solve(X, y, names)
    r = y - X @ beta
    return float(r @ r)


def _first_stage_f(
    endog: np.ndarray, Z_full: np.ndarray, Z_restricted: np.ndarray, q: int
) -> float:
    """Joint F of the excluded instruments in one first-stage equation."""
    n, k_u = Z_full.shape
    rss_u = _rss(Z_full, endog, [f"z{i}" for i in range(k_u)])
    if Z_restricted.shape[1]:
        rss_r = _rss(Z_restricted, endog, [f"w{i}" for i in range(Z_restricted.shape[1])])
    else:
        rss_r = float(endog @ endog)
    if n <= k_u:
        raise EstimationError("first stage has more parameters than observations")
    denom = rss_u / (n - k_u)
    if denom == 0.0:
        return math.inf
    return ((rss_r - rss_u) / q) / denom


def _tsls_core(
    y: np.ndarray,
    X: np.ndarray,
    names,
    endog_cols,
    Z: np.ndarray,
    z_names,
    excluded_count: int,
    cluster_id: np.ndarray | None,
    centered: bool,
    estimator: str,
) -> RegressionResult:
    n = y.size
    if Z.shape[1] < X.shape[1]:
        raise EstimationError(
            f"under-identified: {Z.shape[1]} instrument columns for {X.shape[1]} regressors"
        )
    Qz, Rz, piv = sla.qr(Z, mode="economic", pivoting=True)
    diag = np.abs(np.diag(Rz))
    tol = (diag.max() if diag.size else 0.0) * max(Z.shape) * np.finfo(float).eps
    if int(np.sum(diag > tol)) < Z.shape[1]:
        dropped = [z_names[i] for i in piv[int(np.sum(diag > tol)):]]
        raise EstimationError(f"first stage rank deficient; collinear column(s): {', '.join(dropped)}")
    X_hat = X.copy()
    X_hat[:, endog_cols] = Qz @ (Qz.T @ X[:, endog_cols])

    restricted = np.delete(Z, np.arange(excluded_count), axis=1)
    f_stats = [
        _first_stage_f(X[:, c], Z, restricted, excluded_count) for c in endog_cols
    ]
    first_stage_f = min(f_stats)
    notes = []
    if first_stage_f < WEAK_INSTRUMENT_F:
        notes.append(f"weak instruments: first-stage F = {first_stage_f:.3g} < {WEAK_INSTRUMENT_F}")

    beta, xtx_inv = _qr_solve(X_hat, y, names)
    return _build_result(
        estimator, names, beta, X, X_hat, y, xtx_inv, cluster_id, centered, first_stage_f, notes
    )


def tsls(
    data: Dataset,
    outcome: str,
    endogenous,
    instruments,
    exogenous=(),
    add_intercept: bool = True,
) -> RegressionResult:
    """Two-stage least squares with excluded-instrument first-stage F.

    With more than one endogenous regressor the reported F is the smallest
    across the first-stage equations.
    """
    endogenous = list(endogenous)
    instruments = list(instruments)
    exogenous = list(exogenous)
    if len(instruments) < len(endogenous):
        raise ValidationError(
            f"{len(instruments)} instrument(s) cannot identify {len(endogenous)} endogenous regressor(s)"
        )
    y = data.matrix([outcome])[:, 0]
    names = endogenous + exogenous + ([INTERCEPT] if add_intercept else [])
    X = data.matrix(endogenous + exogenous)
    z_names = instruments + exogenous + ([INTERCEPT] if add_intercept else [])
    Z = data.matrix(instruments + exogenous)
    if add_intercept:
        ones = np.ones(data.n_obs)
        X = np.column_stack([X, ones])
        Z = np.column_stack([Z, ones])
    endog_cols = list(range(len(endogenous)))
    return _tsls_core(
        y, X, names, endog_cols, Z, z_names, len(instruments),
        data.cluster_id, add_intercept, "tsls",
    )


def oriv(
    data: Dataset, outcome: str, measure_a: str, measure_b: str, exogenous=()
) -> RegressionResult:
    """Stacked mutual-instrument estimator for two noisy measures of one latent variable.

    The n rows are duplicated; the regressor column carries measure A in the
    first copy and measure B in the second, the excluded instrument carries
    the opposite measure, and each copy gets its own intercept (which absorbs
    any level bias between the measures). Standard errors are clustered on
    the original row id because the two copies of a row share its outcome.
    """
    exogenous = list(exogenous)
    y = data.matrix([outcome])[:, 0]
    a = data.matrix([measure_a])[:, 0]
    b = data.matrix([measure_b])[:, 0]
    exog = data.matrix(exogenous)
    n = data.n_obs

    y2 = np.concatenate([y, y])
    x_meas = np.concatenate([a, b])
    z_meas = np.concatenate([b, a])
    copy1 = np.concatenate([np.ones(n), np.zeros(n)])
    copy2 = 1.0 - copy1
    exog2 = np.vstack([exog, exog])
    cluster = np.concatenate([np.arange(n), np.arange(n)])

    names = ["measure"] + exogenous + ["intercept_copy1", "intercept_copy2"]
    X = np.column_stack([x_meas, exog2, copy1, copy2])
    z_names = ["measure_swapped"] + exogenous + ["intercept_copy1", "intercept_copy2"]
    Z = np.column_stack([z_meas, exog2, copy1, copy2])
    return _tsls_core(
        y2, X, names, [0], Z, z_names, 1, cluster, True, "oriv"
    )


def attenuation_factor(scores_a, scores_b) -> AttenuationEstimate:
    """lambda_hat = 1 - var(A - B) / (2 * var(A)), assuming independent noises.

    Also reports the implied multiplicative correction 1/lambda_hat. Sample
    (1/(n-1)) variances are used throughout.
    """
    a = np.asarray(scores_a, dtype=float)
    b = np.asarray(scores_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValidationError("scores must be two aligned vectors")
    if a.size < 3:
        raise DegenerateDataError(f"attenuation needs at least 3 pairs, got {a.size}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValidationError("scores must be finite")
    var_primary = float(np.var(a, ddof=1))
    if var_primary <= 0.0:
        raise DegenerateDataError("primary measure has zero variance")
    var_diff = float(np.var(a - b, ddof=1))
    lam = 1.0 - var_diff / (2.0 * var_primary)
    if lam <= 0.0:
        raise EstimationError(f"noise dominates signal: lambda_hat = {lam:.4g} <= 0")
    return AttenuationEstimate(
        lambda_hat=lam, var_diff=var_diff, var_primary=var_primary, correction=1.0 / lam
    )


def horse_race(data: Dataset, outcome: str, controls, blocks) -> list[HorseRaceRow]:
    """Progressive R2 table: one OLS per cumulative block of regressors.

    blocks is an ordered list of (label, regressor names); each row reports
    R2 of controls plus all blocks so far and its gain over controls alone.
    Rank deficiency anywhere names the offending step.
    """
    controls = list(controls)
    try:
        base = ols(data, outcome, controls)
    except EstimationError as exc:
        raise EstimationError(f"step 'controls': {exc}") from None
    rows = [HorseRaceRow("controls", tuple(controls), base.r_squared, 0.0)]
    cumulative = list(controls)
    for label, names in blocks:
        names = list(names)
        cumulative = cumulative + [n for n in names if n not in cumulative]
        try:
            fit = ols(data, outcome, cumulative)
        except EstimationError as exc:
            raise EstimationError(f"step {label!r}: {exc}") from None
        rows.append(
            HorseRaceRow(
                label=f"+ {label}",
                regressors=tuple(cumulative),
                r_squared=fit.r_squared,
                delta_r_squared=fit.r_squared - base.r_squared,
            )
        )
    return rows
