import math

import numpy as np
import pytest

from latent_gauge.dimensionality import correlation_matrix, pca
from latent_gauge.errors import DegenerateDataError, ValidationError
from latent_gauge.panel import IndexTable


def table_from_array(mat, names=None, missing=None):
    n, k = mat.shape
    names = names or [f"c{j}" for j in range(k)]
    columns = {}
    for j, name in enumerate(names):
        col = []
        for i in range(n):
            if missing is not None and (i, j) in missing:
                col.append(None)
            else:
                col.append(float(mat[i, j]))
        columns[name] = tuple(col)
    return IndexTable(occupations=tuple(f"o{i}" for i in range(n)), columns=columns)


def corr_direct(x, y):
    """Independent pairwise Pearson used to feed the eigenvalue oracle."""
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    return sxy / math.sqrt(sxx * syy)


def eig3_closed_form(m):
    """Analytic eigenvalues of a symmetric 3x3 matrix (trigonometric cubic)."""
    p1 = m[0][1] ** 2 + m[0][2] ** 2 + m[1][2] ** 2
    if p1 == 0:
        return sorted([m[0][0], m[1][1], m[2][2]], reverse=True)
    q = (m[0][0] + m[1][1] + m[2][2]) / 3.0
    p2 = sum((m[i][i] - q) ** 2 for i in range(3)) + 2 * p1
    p = math.sqrt(p2 / 6.0)
    b = [[(m[i][j] - (q if i == j else 0.0)) / p for j in range(3)] for i in range(3)]
    det_b = (
        b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1])
        - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
        + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0])
    )
    r = max(-1.0, min(1.0, det_b / 2.0))
    phi = math.acos(r) / 3.0
    e1 = q + 2.0 * p * math.cos(phi)
    e3 = q + 2.0 * p * math.cos(phi + 2.0 * math.pi / 3.0)
    e2 = 3.0 * q - e1 - e3
    return sorted([e1, e2, e3], reverse=True)


def test_duplicated_column_gives_unit_offdiagonal():
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 1, 50)
    table = table_from_array(np.column_stack([x, x, rng.uniform(0, 1, 50)]))
    corr = correlation_matrix(table)
    assert corr.values[0, 1] == pytest.approx(1.0, abs=1e-12)


def test_independent_columns_near_zero():
    rng = np.random.default_rng(1)
    table = table_from_array(rng.standard_normal((10_000, 2)))
    corr = correlation_matrix(table)
    assert abs(corr.values[0, 1]) < 0.05


def test_pairwise_policy_marks_missing_entries():
    rng = np.random.default_rng(2)
    mat = rng.standard_normal((6, 3))
    # columns 0 and 1 share only 2 complete rows
    missing = {(i, 0) for i in range(0, 4)} | {(5, 1)}
    table = table_from_array(mat, missing=missing)
    with pytest.raises(ValidationError, match="non-missing"):
        correlation_matrix(table)  # column 0 has only 2 non-missing values
    missing = {(0, 0), (1, 0), (2, 1), (3, 1)}
    table = table_from_array(mat, missing=missing)
    corr = correlation_matrix(table, policy="pairwise_complete")
    assert not np.isfinite(corr.values[0, 1])
    assert corr.missing_pairs
    with pytest.raises(ValidationError):
        correlation_matrix(table, policy="listwise")


def test_correlation_symmetric_unit_diagonal_bounded():
    rng = np.random.default_rng(3)
    table = table_from_array(rng.uniform(0, 100, (40, 5)))
    corr = correlation_matrix(table)
    assert np.allclose(corr.values, corr.values.T)
    assert np.allclose(np.diag(corr.values), 1.0)
    assert np.all(np.abs(corr.values) <= 1.0 + 1e-12)


def test_pca_two_perfectly_correlated_columns():
    rng = np.random.default_rng(4)
    x = rng.standard_normal(100)
    table = table_from_array(np.column_stack([x, 2.0 * x + 5.0]))
    result = pca(table)
    assert result.variance_shares[0] == pytest.approx(1.0, abs=1e-12)
    assert result.variance_shares[1] == pytest.approx(0.0, abs=1e-12)


def test_pca_isotropic_shares():
    rng = np.random.default_rng(5)
    k, n = 5, 100_000
    table = table_from_array(rng.standard_normal((n, k)))
    result = pca(table)
    for share in result.variance_shares:
        assert share == pytest.approx(1.0 / k, abs=0.01)


def test_pca_three_column_eigenvalues_match_cubic_oracle():
    rng = np.random.default_rng(6)
    n = 400
    f1 = rng.standard_normal(n)
    f2 = rng.standard_normal(n)
    cols = np.column_stack(
        [
            f1 + 0.3 * rng.standard_normal(n),
            f1 + 0.3 * rng.standard_normal(n),
            f2 + 0.3 * rng.standard_normal(n),
        ]
    )
    table = table_from_array(cols)
    result = pca(table)
    lists = [list(cols[:, j]) for j in range(3)]
    corr = [[corr_direct(lists[i], lists[j]) for j in range(3)] for i in range(3)]
    expected = eig3_closed_form(corr)
    assert np.allclose(result.eigenvalues, expected, atol=1e-8)


def test_pca_trace_and_reconstruction():
    rng = np.random.default_rng(7)
    k = 6
    base = rng.standard_normal((200, 2))
    mix = rng.standard_normal((2, k))
    data = base @ mix + 0.2 * rng.standard_normal((200, k))
    table = table_from_array(data)
    result = pca(table)
    assert float(np.sum(result.eigenvalues)) == pytest.approx(k, abs=1e-9)
    recon = result.loadings @ np.diag(result.eigenvalues) @ result.loadings.T
    z = (data - data.mean(axis=0)) / data.std(axis=0)
    corr = z.T @ z / data.shape[0]
    assert np.max(np.abs(recon - corr)) < 1e-8
    # loadings columns orthonormal
    gram = result.loadings.T @ result.loadings
    assert np.max(np.abs(gram - np.eye(k))) < 1e-8


def test_pca_sign_convention_deterministic():
    rng = np.random.default_rng(8)
    data = rng.standard_normal((60, 4))
    table = table_from_array(data)
    r1, r2 = pca(table), pca(table)
    assert np.array_equal(r1.loadings, r2.loadings)
    for c in range(4):
        pivot = int(np.argmax(np.abs(r1.loadings[:, c])))
        assert r1.loadings[pivot, c] > 0


def test_pca_rank_deficient_reports_zero_eigenvalues():
    rng = np.random.default_rng(9)
    x = rng.standard_normal(50)
    y = rng.standard_normal(50)
    table = table_from_array(np.column_stack([x, y, x + y, x - y]))
    result = pca(table)
    assert result.eigenvalues[-1] == pytest.approx(0.0, abs=1e-10)
    assert result.eigenvalues[-2] == pytest.approx(0.0, abs=1e-10)


def test_pca_requires_more_rows_than_columns():
    rng = np.random.default_rng(10)
    table = table_from_array(rng.standard_normal((4, 5)))
    with pytest.raises(ValidationError, match="more complete rows"):
        pca(table)


def test_pca_constant_column_errors():
    rng = np.random.default_rng(11)
    data = np.column_stack([np.full(30, 2.0), rng.standard_normal(30)])
    with pytest.raises(DegenerateDataError, match="constant"):
        pca(table_from_array(data))
