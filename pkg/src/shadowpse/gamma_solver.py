"""Sieve estimation of the missingness odds function.

gamma(x, a, m, y) = f(R=0 | x, a, m, y) / f(R=1 | x, a, m, y) is the
odds of being incomplete given the full record. It is identified by the
shadow-variable restriction

    E{ R * gamma - (1 - R) | conditioning variables } = 0,

where the conditioning variables (z, x_obs, a, m, y) are observed for
every record. The estimator minimises the sample criterion

    Q_n(pi) = (1/n) sum_i [ Ehat{ R gamma_pi - 1 + R | W_i } ]^2

over the exponential sieve gamma_pi = exp(cap * tanh(q(.)' pi / cap)),
with Ehat the series projection onto the conditioning basis. The tanh
soft clamp keeps evaluations inside (exp(-cap), exp(cap)) while staying
smooth, so the analytic gradient is exact everywhere.

Projections are applied through an orthonormal basis of the
conditioning design's column span: one factorisation per fit, O(n l)
per criterion evaluation, and exact idempotence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.optimize

from .data_model import Dataset
from .errors import ConfigError, DegenerateTarget, LengthMismatch
from .sieve_basis import BasisSpec, column_coordinates, design_matrix
from .series_regression import orthonormal_span, project_onto


@dataclass(frozen=True)
class GammaOptions:
    """Solver options.

    penalty is the scale c of an n-vanishing ridge c/n * ||pi - pi0||^2
    added to Q_n, with pi0 the marginal-ratio intercept start. The
    criterion is a projected moment system, so its exact roots at small
    n can interpolate the moments with wildly oscillating odds; the
    ridge vanishes faster than any sieve approximation rate and keeps
    the fit anchored to the constant-odds solution when the data carry
    little information. penalty=0 recovers the raw criterion.
    """

    max_iter: int = 500
    grad_tol: float = 1e-6
    linear_cap: float = 10.0
    restarts: int = 0
    seed: int = 0
    penalty: float = 1.0


@dataclass
class GammaModel:
    """Fitted odds function; is_zero encodes gamma identically zero.

    The zero model is the exact minimiser when the sample has no
    incomplete records (then every complete case gets weight 1 + 0).
    """

    spec_q: Optional[BasisSpec]
    pi: Optional[np.ndarray]
    linear_cap: float
    is_zero: bool = False

    def values_at(self, points: np.ndarray) -> np.ndarray:
        if self.is_zero:
            return np.zeros(np.asarray(points).shape[0])
        u = design_matrix(self.spec_q, points) @ self.pi
        c = self.linear_cap
        return np.exp(c * np.tanh(u / c))

    def values(self, ds: Dataset) -> np.ndarray:
        """Per-record gamma with 0.0 placeholders at r = 0.

        Incomplete records have no evaluable covariates; every consumer
        multiplies these values by r, so the placeholder is never read.
        """
        out = np.zeros(ds.n)
        if self.is_zero:
            return out
        cc = ds.complete_mask
        out[cc] = self.values_at(ds.regressor_points())
        return out


@dataclass
class GammaFitReport:
    q_n: float
    grad_norm: float
    n_iter: int
    converged: bool
    n_starts: int
    best_start: int
    clamp_frac: float
    messages: list[str] = field(default_factory=list)


class _GammaProblem:
    """Prebuilt matrices for repeated criterion evaluations on one sample."""

    def __init__(self, ds: Dataset, spec_q: BasisSpec, spec_p: BasisSpec):
        self.n = ds.n
        self.cc = ds.complete_mask
        self.qmat = design_matrix(spec_q, ds.regressor_points())
        pmat = design_matrix(spec_p, ds.conditioning_points())
        self.span = orthonormal_span(pmat)
        self.rank_deficit = pmat.shape[1] - self.span.shape[1]
        self.t_base = -(1.0 - ds.r.astype(float))  # -1 at r=0, 0 at r=1

    def gamma_at(self, pi: np.ndarray, cap: float) -> tuple[np.ndarray, np.ndarray]:
        u = self.qmat @ pi
        th = np.tanh(u / cap)
        return np.exp(cap * th), th

    def residual(self, pi: np.ndarray, cap: float) -> np.ndarray:
        """Projected moment vector; Q_n is its squared length over n."""
        gam, _ = self.gamma_at(pi, cap)
        t = self.t_base.copy()
        t[self.cc] = gam
        return self.span.T @ t

    def residual_jac(self, pi: np.ndarray, cap: float) -> np.ndarray:
        gam, th = self.gamma_at(pi, cap)
        d = gam * (1.0 - th * th)
        return (self.span[self.cc].T * d) @ self.qmat

    def value_and_grad(self, pi: np.ndarray, cap: float) -> tuple[float, np.ndarray]:
        gam, th = self.gamma_at(pi, cap)
        t = self.t_base.copy()
        t[self.cc] = gam
        w = self.span.T @ t
        qn = float(w @ w) / self.n
        ht_cc = (self.span @ w)[self.cc]
        grad = (2.0 / self.n) * (self.qmat.T @ (gam * (1.0 - th * th) * ht_cc))
        return qn, grad

    def value_for_vector(self, gamma_cc: np.ndarray) -> float:
        t = self.t_base.copy()
        t[self.cc] = gamma_cc
        w = self.span.T @ t
        return float(w @ w) / self.n


def criterion_qn(pi: np.ndarray, ds: Dataset, spec_q: BasisSpec, spec_p: BasisSpec,
                 linear_cap: float = 10.0) -> float:
    """Q_n at one coefficient vector (fresh factorisation; use for tests)."""
    prob = _GammaProblem(ds, spec_q, spec_p)
    return prob.value_and_grad(np.asarray(pi, dtype=float), linear_cap)[0]


def criterion_for_model(model: GammaModel, ds: Dataset, spec_p: BasisSpec) -> float:
    """Q_n of a fitted model, including the is_zero surrogate."""
    pmat = design_matrix(spec_p, ds.conditioning_points())
    span = orthonormal_span(pmat)
    t = model.values(ds) * ds.r - (1.0 - ds.r)
    w = span.T @ t
    return float(w @ w) / ds.n


def _logistic_warm_start(prob: _GammaProblem, ds: Dataset, spec_q: BasisSpec) -> Optional[np.ndarray]:
    """Logistic fit of (1 - R) on the basis columns free of x_miss.

    log gamma equals the log-odds of R = 0 given the full record; the
    observable-column fit approximates its projection and costs one
    IRLS loop. Columns touching x_miss start at zero.
    """
    dxm = ds.dims.x_miss
    cols = column_coordinates(spec_q)
    avail = [j for j, coords in enumerate(cols) if all(c >= dxm for c in coords)]
    if not avail:
        return None
    # x_miss standardises to 0 at the center, so filling with the center
    # leaves the available columns untouched
    center = np.asarray(spec_q.standardizer.center[:dxm])
    points = ds.regressor_points(mask=np.ones(ds.n, dtype=bool))
    points[:, :dxm] = np.where(np.isnan(points[:, :dxm]), center, points[:, :dxm])
    dmat = design_matrix(spec_q, points)[:, avail]
    target = 1.0 - ds.r.astype(float)

    beta = np.zeros(len(avail))
    for _ in range(25):
        eta = np.clip(dmat @ beta, -30, 30)
        p = 1.0 / (1.0 + np.exp(-eta))
        wgt = np.maximum(p * (1.0 - p), 1e-6)
        grad = dmat.T @ (target - p)
        hess = (dmat * wgt[:, None]).T @ dmat + 1e-6 * np.eye(len(avail))
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            return None
        beta = beta + step
        if np.max(np.abs(step)) < 1e-10:
            break
    if not np.isfinite(beta).all():
        return None
    pi = np.zeros(spec_q.dim)
    pi[avail] = beta
    return pi


def _intercept_start(prob: _GammaProblem, ds: Dataset, spec_q: BasisSpec, cap: float) -> Optional[np.ndarray]:
    """Constant-odds start matching the marginal missing/complete ratio."""
    cols = column_coordinates(spec_q)
    try:
        j0 = cols.index(())
    except ValueError:
        return None
    n0 = float((ds.r == 0).sum())
    n1 = float((ds.r == 1).sum())
    target = np.log(n0 / n1)
    if abs(target) >= cap:
        return None
    # invert the soft clamp so the start hits the ratio exactly
    base = design_matrix(spec_q, ds.regressor_points()[:1])[0, j0]
    pi = np.zeros(spec_q.dim)
    pi[j0] = cap * np.arctanh(target / cap) / base
    return pi


def fit_gamma(
    ds: Dataset,
    spec_q: BasisSpec,
    spec_p: BasisSpec,
    options: GammaOptions = GammaOptions(),
) -> tuple[GammaModel, GammaFitReport]:
    """Minimise Q_n plus the n-vanishing ridge with multi-start descent.

    Starts: the zero vector, a marginal-ratio intercept, a logistic
    warm start on the observable columns, plus options.restarts random
    perturbations of the best deterministic start. Ties break on lowest
    objective (Q_n itself when penalty=0), then lowest gradient norm,
    then first start index. The reported q_n is always the raw
    criterion; grad_norm refers to the objective actually minimised.
    """
    if spec_p.dim < spec_q.dim:
        raise ConfigError(
            f"conditioning basis dim {spec_p.dim} < odds basis dim {spec_q.dim}; "
            "the projected criterion would be underdetermined"
        )
    n0 = int((ds.r == 0).sum())
    if n0 == ds.n:
        raise DegenerateTarget("no complete cases: odds function is not estimable")
    cap = options.linear_cap
    if n0 == 0:
        model = GammaModel(spec_q=None, pi=None, linear_cap=cap, is_zero=True)
        report = GammaFitReport(
            q_n=0.0, grad_norm=0.0, n_iter=0, converged=True,
            n_starts=0, best_start=-1, clamp_frac=0.0,
            messages=["no incomplete records; gamma is identically zero"],
        )
        return model, report

    prob = _GammaProblem(ds, spec_q, spec_p)
    messages = []
    if prob.rank_deficit > 0:
        messages.append(f"conditioning design rank-deficient by {prob.rank_deficit}")

    anchor = _intercept_start(prob, ds, spec_q, cap)
    starts: list[np.ndarray] = [np.zeros(spec_q.dim)]
    if anchor is not None:
        starts.append(anchor)
    warm = _logistic_warm_start(prob, ds, spec_q)
    if warm is not None:
        starts.append(warm)

    sqrt_n = np.sqrt(prob.n)
    lam = options.penalty / prob.n
    pi0 = anchor if anchor is not None else np.zeros(spec_q.dim)
    sqrt_lam = np.sqrt(lam)
    eye = np.eye(spec_q.dim)

    def residual(p: np.ndarray) -> np.ndarray:
        moment = prob.residual(p, cap) / sqrt_n
        if lam == 0.0:
            return moment
        return np.concatenate([moment, sqrt_lam * (p - pi0)])

    def jacobian(p: np.ndarray) -> np.ndarray:
        jac = prob.residual_jac(p, cap) / sqrt_n
        if lam == 0.0:
            return jac
        return np.vstack([jac, sqrt_lam * eye])

    def run(x0: np.ndarray) -> tuple[float, float, float, int, np.ndarray]:
        # Gauss-Newton on the projected moment vector: the criterion is a
        # finite sum of squares, and with dim(p basis) >= dim(q basis) the
        # system is square or overdetermined, which trust-region least
        # squares handles at quadratic convergence near the solution.
        res = scipy.optimize.least_squares(
            residual,
            x0,
            jac=jacobian,
            method="trf",
            tr_solver="exact",
            xtol=1e-14,
            ftol=1e-14,
            gtol=1e-14,
            max_nfev=options.max_iter,
        )
        qn, grad = prob.value_and_grad(res.x, cap)
        obj = qn + lam * float((res.x - pi0) @ (res.x - pi0))
        grad_obj = grad + 2.0 * lam * (res.x - pi0)
        return obj, qn, float(np.linalg.norm(grad_obj)), int(res.nfev), res.x

    results = [run(x0) for x0 in starts]
    if options.restarts > 0:
        best_so_far = min(range(len(results)), key=lambda i: (results[i][0], results[i][2], i))
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(options.seed)))
        for _ in range(options.restarts):
            x0 = results[best_so_far][4] + 0.5 * rng.standard_normal(spec_q.dim)
            starts.append(x0)
            results.append(run(x0))

    best = min(range(len(results)), key=lambda i: (results[i][0], results[i][2], i))
    _, qn, gnorm, nit, pi = results[best]
    _, th = prob.gamma_at(pi, cap)
    clamp_frac = float(np.mean(np.abs(th) > 0.9))
    if clamp_frac > 0:
        messages.append(f"soft clamp active on {clamp_frac:.1%} of complete cases")
    converged = gnorm <= options.grad_tol
    if not converged:
        messages.append(f"gradient norm {gnorm:.3e} above tolerance {options.grad_tol:.1e}")
    model = GammaModel(spec_q=spec_q, pi=pi, linear_cap=cap, is_zero=False)
    report = GammaFitReport(
        q_n=qn, grad_norm=gnorm, n_iter=nit, converged=converged,
        n_starts=len(starts), best_start=best, clamp_frac=clamp_frac,
        messages=messages,
    )
    return model, report


def weak_norm_sq(
    values_a: np.ndarray,
    values_b: np.ndarray,
    ds: Dataset,
    spec_p: BasisSpec,
) -> float:
    """Squared weak norm (1/n) || Ehat{ R (g_a - g_b) | W } ||^2.

    values_* are per-record evaluations aligned with ds (entries at
    r = 0 are ignored through the multiplication by r). The weak norm
    is the natural convergence metric for the odds function: it only
    sees differences through the conditioning projection.
    """
    va = np.asarray(values_a, dtype=float)
    vb = np.asarray(values_b, dtype=float)
    if va.shape != (ds.n,) or vb.shape != (ds.n,):
        raise LengthMismatch("weak_norm_sq: values must align with the dataset")
    pmat = design_matrix(spec_p, ds.conditioning_points())
    span = orthonormal_span(pmat)
    proj = project_onto(span, ds.r * (va - vb))
    return float(proj @ proj) / ds.n
