"""Weighted series least squares and linear projection utilities.

fit_series solves the weighted normal equations through an orthogonal
decomposition of the weighted design; if that is numerically singular a
ridge eps * I is added to the Gram matrix, escalating tenfold from
1e-10, and anything past 1e-2 raises UnsolvableSystem.

orthonormal_span returns an orthonormal basis of a design's column
space; projections built from it are exactly idempotent and invariant
to invertible reparameterisations of the columns, which the odds-
function criterion and the influence-function pieces rely on.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Type

import numpy as np
import scipy.linalg

from .errors import (
    AllZeroWeights,
    LengthMismatch,
    NonFiniteInput,
    UnsolvableSystem,
)
from .sieve_basis import BasisSpec, design_matrix, eval_basis

RIDGE_START = 1e-10
RIDGE_CAP = 1e-2
# design singular values below s_max * this are treated as zero
SINGULAR_RTOL = 1e-10


@dataclass
class FitDiagnostics:
    n_used: int
    dim: int
    rank: int
    cond: float
    gram_diag_ridge: float  # 0.0 when the plain solve succeeded


@dataclass
class SeriesRegressor:
    spec: BasisSpec
    coef: np.ndarray
    diagnostics: FitDiagnostics


def ridge_solve(
    gram: np.ndarray,
    rhs: np.ndarray,
    error: Type[Exception] = UnsolvableSystem,
    start: float = RIDGE_START,
    cap: float = RIDGE_CAP,
) -> tuple[np.ndarray, float]:
    """Solve (gram + eps I) x = rhs, escalating eps tenfold until it works."""
    eps = start
    dim = gram.shape[0]
    cap = max(cap, start)
    while eps <= cap * (1 + 1e-12):
        try:
            chol = scipy.linalg.cho_factor(gram + eps * np.eye(dim), lower=True)
            x = scipy.linalg.cho_solve(chol, rhs)
        except (scipy.linalg.LinAlgError, ValueError):
            eps *= 10.0
            continue
        if np.isfinite(x).all():
            return x, eps
        eps *= 10.0
    raise error(f"system stayed singular up to ridge {cap}")


def _check_inputs(
    inputs: np.ndarray, responses: np.ndarray, weights: Optional[np.ndarray]
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    pts = np.asarray(inputs, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    v = np.asarray(responses, dtype=float)
    if v.ndim != 1:
        raise LengthMismatch("responses must be 1-d")
    if len(v) != pts.shape[0]:
        raise LengthMismatch(f"{pts.shape[0]} input rows but {len(v)} responses")
    if weights is None:
        w = np.ones(len(v))
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != v.shape:
            raise LengthMismatch("weights misaligned with responses")
    if not np.isfinite(pts).all() or not np.isfinite(v).all() or not np.isfinite(w).all():
        raise NonFiniteInput("fit_series: non-finite input")
    if (w < 0).any():
        raise NonFiniteInput("fit_series: negative weight")
    return pts, v, w


def fit_series(
    spec: BasisSpec,
    inputs: np.ndarray,
    responses: np.ndarray,
    weights: Optional[np.ndarray] = None,
    ridge: Optional[float] = None,
) -> SeriesRegressor:
    """Weighted least squares of responses on the basis at inputs.

    Zero-weight rows are dropped before the solve. Passing ridge forces
    the penalised path with that starting eps; the default attempts an
    exact solve first.
    """
    pts, v, w = _check_inputs(inputs, responses, weights)
    if w.sum() <= 0.0:
        raise AllZeroWeights("fit_series: all weights are zero")
    keep = w > 0.0
    pts, v, w = pts[keep], v[keep], w[keep]

    basis = design_matrix(spec, pts)
    sw = np.sqrt(w)
    bw = basis * sw[:, None]
    vw = v * sw
    dim = spec.dim

    # economy SVD gives rank, conditioning and a stable exact solve in one pass
    u_mat, s, vt = np.linalg.svd(bw, full_matrices=False)
    smax = s[0] if len(s) else 0.0
    rank = int((s > smax * SINGULAR_RTOL).sum()) if smax > 0 else 0
    cond = float(smax / s[rank - 1]) if rank > 0 else np.inf

    if ridge is None and rank == dim:
        coef = vt.T @ ((u_mat.T @ vw) / s)
        eps = 0.0
    else:
        gram = bw.T @ bw
        rhs = bw.T @ vw
        coef, eps = ridge_solve(gram, rhs, start=ridge if ridge is not None else RIDGE_START)
    diag = FitDiagnostics(n_used=len(v), dim=dim, rank=rank, cond=cond, gram_diag_ridge=eps)
    return SeriesRegressor(spec=spec, coef=coef, diagnostics=diag)


def predict(reg: SeriesRegressor, point: np.ndarray) -> float:
    return float(eval_basis(reg.spec, point) @ reg.coef)


def predict_many(reg: SeriesRegressor, points: np.ndarray) -> np.ndarray:
    return design_matrix(reg.spec, points) @ reg.coef


def project_residual_orthogonality(
    reg: SeriesRegressor,
    inputs: np.ndarray,
    responses: np.ndarray,
    weights: Optional[np.ndarray] = None,
) -> float:
    """max_j |(1/n) sum_i w_i (v_i - fit_i) basis_ij| over the fit sample.

    Zero for an unridged solve up to floating point; ridged solves are
    allowed to drift by the penalty times the coefficient size.
    """
    pts, v, w = _check_inputs(inputs, responses, weights)
    basis = design_matrix(reg.spec, pts)
    resid = (v - basis @ reg.coef) * w
    return float(np.max(np.abs(basis.T @ resid)) / max(len(v), 1))


def orthonormal_span(matrix: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
    """Orthonormal basis of the column span, rank-truncated by SVD."""
    m = np.asarray(matrix, dtype=float)
    if m.size == 0:
        return np.zeros((m.shape[0], 0))
    u_mat, s, _ = np.linalg.svd(m, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((m.shape[0], 0))
    rank = int((s > s[0] * rtol).sum())
    return u_mat[:, :rank]


def project_onto(span: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Orthogonal projection of values onto the span (hat-matrix action)."""
    if span.shape[1] == 0:
        return np.zeros_like(values, dtype=float)
    return span @ (span.T @ values)
