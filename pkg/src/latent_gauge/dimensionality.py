"""Cross-index correlation matrix and principal component analysis.

PCA runs on the correlation matrix of listwise-complete rows (pairwise
matrices can fail to be positive semidefinite), while the correlation
heatmap supports pairwise-complete observations with explicit missing
entries. Component signs are fixed so repeated runs are byte-identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDataError, ValidationError
from .panel import IndexTable

EIG_NEGATIVE_TOL = 1e-10


@dataclass(frozen=True)
class CorrelationMatrix:
    names: tuple[str, ...]
    values: np.ndarray  # k x k, NaN marks an explicitly missing pairwise entry
    n_obs: np.ndarray  # k x k completed-observation counts
    missing_pairs: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        vals = [
            [None if not np.isfinite(v) else float(v) for v in row]
            for row in self.values
        ]
        return {
            "names": list(self.names),
            "values": vals,
            "n_obs": [[int(v) for v in row] for row in self.n_obs],
            "missing_pairs": list(self.missing_pairs),
        }


@dataclass(frozen=True)
class PcaResult:
    names: tuple[str, ...]
    eigenvalues: np.ndarray  # descending
    variance_shares: np.ndarray
    loadings: np.ndarray  # index x component
    n_obs_used: int

    def to_dict(self) -> dict:
        return {
            "names": list(self.names),
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "variance_shares": [float(v) for v in self.variance_shares],
            "loadings": [[float(v) for v in row] for row in self.loadings],
            "n_obs_used": self.n_obs_used,
        }


def _columns_as_array(table: IndexTable) -> tuple[list[str], np.ndarray]:
    names = list(table.columns)
    mat = np.full((len(table.occupations), len(names)), np.nan)
    for j, name in enumerate(names):
        col = table.columns[name]
        mat[:, j] = [np.nan if v is None else float(v) for v in col]
    return names, mat


def _pair_correlation(x: np.ndarray, y: np.ndarray) -> float:
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.sqrt(float(xc @ xc)) * np.sqrt(float(yc @ yc))
    if denom == 0.0:
        raise DegenerateDataError("constant column over the complete observations")
    return float(np.clip(float(xc @ yc) / denom, -1.0, 1.0))


def correlation_matrix(table: IndexTable, policy: str = "pairwise_complete") -> CorrelationMatrix:
    """Symmetric unit-diagonal Pearson matrix across index columns.

    pairwise_complete: each entry uses the rows where both columns are
    present; pairs with fewer than 3 complete rows (or a constant column)
    are marked missing. listwise: rows with any missing cell are dropped
    first and any undefined pair is a hard error.
    """
    if policy not in ("pairwise_complete", "listwise"):
        raise ValidationError(f"unknown policy {policy!r}")
    names, mat = _columns_as_array(table)
    for name, count in table.non_missing_counts().items():
        if count < 3:
            raise ValidationError(
                f"column {name!r} has only {count} non-missing values; need at least 3"
            )
    k = len(names)
    if policy == "listwise":
        keep = ~np.isnan(mat).any(axis=1)
        mat = mat[keep]
        if mat.shape[0] < 3:
            raise ValidationError(
                f"listwise deletion leaves {mat.shape[0]} complete rows; need at least 3"
            )
    values = np.eye(k)
    n_obs = np.zeros((k, k), dtype=int)
    missing = []
    for j in range(k):
        n_obs[j, j] = int(np.sum(~np.isnan(mat[:, j])))
    for i in range(k):
        for j in range(i + 1, k):
            both = ~np.isnan(mat[:, i]) & ~np.isnan(mat[:, j])
            n = int(both.sum())
            n_obs[i, j] = n_obs[j, i] = n
            if n < 3:
                if policy == "listwise":
                    raise ValidationError(
                        f"pair ({names[i]}, {names[j]}) has {n} complete observations"
                    )
                values[i, j] = values[j, i] = np.nan
                missing.append(f"{names[i]}|{names[j]}: {n} complete observations")
                continue
            try:
                r = _pair_correlation(mat[both, i], mat[both, j])
            except DegenerateDataError as exc:
                if policy == "listwise":
                    raise ValidationError(
                        f"pair ({names[i]}, {names[j]}): {exc}"
                    ) from None
                values[i, j] = values[j, i] = np.nan
                missing.append(f"{names[i]}|{names[j]}: {exc}")
                continue
            values[i, j] = values[j, i] = r
    return CorrelationMatrix(
        names=tuple(names), values=values, n_obs=n_obs, missing_pairs=tuple(missing)
    )


def pca(table: IndexTable) -> PcaResult:
    """Eigendecomposition of the correlation matrix of standardized columns.

    Components are ordered by descending eigenvalue. Sign convention: within
    each component the loading of largest magnitude is positive. Tiny negative
    eigenvalues (roundoff) are clipped at zero; rank-deficient inputs simply
    report zero eigenvalues.
    """
    names, mat = _columns_as_array(table)
    keep = ~np.isnan(mat).any(axis=1)
    data = mat[keep]
    n, k = data.shape
    if n <= k:
        raise ValidationError(
            f"PCA needs more complete rows than indices: {n} rows for {k} indices"
        )
    sds = data.std(axis=0)  # population sd: exact unit variance after scaling
    for j, sd in enumerate(sds):
        if sd == 0.0:
            raise DegenerateDataError(f"column {names[j]!r} is constant on the complete rows")
    z = (data - data.mean(axis=0)) / sds
    corr = (z.T @ z) / n
    corr = (corr + corr.T) / 2.0
    eigvals, eigvecs = np.linalg.eigh(corr)
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]
    if eigvals.min() < -EIG_NEGATIVE_TOL:
        raise DegenerateDataError(
            f"correlation matrix not PSD: eigenvalue {eigvals.min():.3e}"
        )
    eigvals = np.clip(eigvals, 0.0, None)
    for c in range(k):
        pivot = int(np.argmax(np.abs(eigvecs[:, c])))
        if eigvecs[pivot, c] < 0:
            eigvecs[:, c] = -eigvecs[:, c]
    shares = eigvals / k
    return PcaResult(
        names=tuple(names),
        eigenvalues=eigvals,
        variance_shares=shares,
        loadings=eigvecs,
        n_obs_used=int(n),
    )
