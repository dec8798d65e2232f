"""Influence-function based variance estimation and confidence intervals.

The influence function for one profile is

    IF_i = R_i (1 + gamma_i) phi_i - psi_hat
           - Ehat{ R rho | W_i } (R_i gamma_i - 1 + R_i)

with phi the augmented outcome built from the mu chain and the
treatment-density ratios omega_k, and rho a representer fitted over the
linear span of the odds-function basis. Incomplete records contribute
through the formula literally: the first term vanishes with R_i = 0 and
the last factor becomes -1, so their covariates are never touched.

Density-ratio fits, like the odds function, pose a conditional moment
restriction; because omega enters the moment linearly inside a linear
projection, each fit reduces to one small linear solve.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Optional, Sequence

import numpy as np

from .data_model import Dataset, ObservedRecord, covariate_vector
from .errors import DimensionMismatch, EmptyArm, LengthMismatch, SingularProjection, SingularSystem
from .estimator import (
    GammaLike,
    NuisanceFits,
    PsiEstimate,
    TreatmentProfile,
    estimate_psi,
    fit_mu_chain,
    gamma_values_for,
    validate_profile,
)
from .gamma_solver import GammaModel
from .series_regression import (
    FitDiagnostics,
    SeriesRegressor,
    orthonormal_span,
    predict,
    predict_many,
    project_onto,
    ridge_solve,
)
from .sieve_basis import BasisSpec, SpecBundle, design_matrix

OMEGA_FLOOR = 1e-3
REPRESENTER_RIDGE = 1e-2


def z_critical(level: float) -> float:
    """Two-sided normal critical value, e.g. 1.959964 at level 0.95."""
    if not 0.0 < level < 1.0:
        raise DimensionMismatch(f"confidence level must be in (0,1), got {level}")
    return NormalDist().inv_cdf(0.5 + level / 2.0)


@dataclass
class OmegaFits:
    """Treatment-density ratios omega_1..omega_{K+1} for one profile.

    identically_one[k-1] marks levels where a_k = a_{k-1} and omega_k
    is exactly one by construction (no fit is stored or consulted).
    Raw evaluations are floored at `floor`: the ratios are positive by
    definition but sieve fits can dip negative in sparse regions.
    cumulative[k-1] stores the floored product omega_1..omega_k pushed
    back onto the k-th mu basis, so the phi augmentation terms stay
    orthogonal to the fitted chain and the reweighted mean of phi
    reproduces psi_hat exactly.
    """

    profile: TreatmentProfile
    omega: list[Optional[SeriesRegressor]]
    identically_one: list[bool]
    cumulative: list[SeriesRegressor]
    floor: float
    floor_events: int
    moment_residual_sup: float


def _solve_square(gmat: np.ndarray, rhs: np.ndarray, error) -> np.ndarray:
    """Least-squares solve of gmat c = rhs with ridge escalation fallback."""
    sol, _, rank, _ = np.linalg.lstsq(gmat, rhs, rcond=1e-10)
    if rank == gmat.shape[1] and np.isfinite(sol).all():
        return sol
    sol, _ = ridge_solve(gmat.T @ gmat, gmat.T @ rhs, error=error)
    return sol


def fit_omegas(
    ds: Dataset,
    gamma: GammaLike,
    profile: Sequence[int],
    u_specs: Sequence[BasisSpec],
    floor: float = OMEGA_FLOOR,
) -> OmegaFits:
    """Fit each omega_k from its conditional moment restriction.

    omega_1 solves E[(1+gamma)(1{A=a_1} w(X) - 1) | R=1, X] = 0 and, for
    k >= 2, omega_k solves the same with target 1{A=a_{k-1}} and
    conditioning (X, M_1..M_{k-1}); both are projected onto the k-th mu
    basis over complete cases, giving a square linear system.
    """
    prof = validate_profile(profile, ds.k)
    gvals = gamma_values_for(ds, gamma)
    cc = ds.complete_mask
    a_cc = ds.a[cc]
    growth = 1.0 + gvals[cc]

    omega: list[Optional[SeriesRegressor]] = []
    ident: list[bool] = []
    raw_vals: list[np.ndarray] = []
    resid_sup = 0.0
    for k in range(1, ds.k + 2):
        spec = u_specs[k - 1]
        if k >= 2 and prof[k - 1] == prof[k - 2]:
            omega.append(None)
            ident.append(True)
            raw_vals.append(np.ones(int(cc.sum())))
            continue
        arm = a_cc == prof[k - 1]
        if not arm.any():
            raise EmptyArm(f"no complete cases with a={prof[k - 1]} for omega_{k}")
        target = np.ones_like(growth) if k == 1 else (a_cc == prof[k - 2]).astype(float)
        umat = design_matrix(spec, ds.mu_points(k))
        span = orthonormal_span(umat)
        gmat = span.T @ (umat * (growth * arm)[:, None])
        rhs = span.T @ (growth * target)
        coef = _solve_square(gmat, rhs, SingularProjection)
        resid = gmat @ coef - rhs
        resid_sup = max(resid_sup, float(np.max(np.abs(span @ resid))) if resid.size else 0.0)
        diag = FitDiagnostics(
            n_used=int(arm.sum()), dim=spec.dim, rank=span.shape[1],
            cond=float("nan"), gram_diag_ridge=0.0,
        )
        omega.append(SeriesRegressor(spec=spec, coef=coef, diagnostics=diag))
        ident.append(False)
        raw_vals.append(umat @ coef)

    # cumulative products, floored then pushed back into the k-th basis span
    floor_events = 0
    cumulative: list[SeriesRegressor] = []
    running = np.ones(int(cc.sum()))
    for k in range(1, ds.k + 2):
        vals = raw_vals[k - 1]
        if not ident[k - 1]:
            floor_events += int((vals < floor).sum())
            vals = np.maximum(vals, floor)
        running = running * vals
        spec = u_specs[k - 1]
        umat = design_matrix(spec, ds.mu_points(k))
        coef, _, _, _ = np.linalg.lstsq(umat, running, rcond=None)
        diag = FitDiagnostics(
            n_used=len(running), dim=spec.dim, rank=spec.dim,
            cond=float("nan"), gram_diag_ridge=0.0,
        )
        cumulative.append(SeriesRegressor(spec=spec, coef=coef, diagnostics=diag))
    return OmegaFits(
        profile=prof,
        omega=omega,
        identically_one=ident,
        cumulative=cumulative,
        floor=floor,
        floor_events=floor_events,
        moment_residual_sup=resid_sup,
    )


def omega_value(omegas: OmegaFits, k: int, point: np.ndarray) -> float:
    """Floored evaluation of omega_k at one (x, m_1..m_{k-1}) point."""
    if omegas.identically_one[k - 1]:
        return 1.0
    return max(predict(omegas.omega[k - 1], point), omegas.floor)


def _phi_terms(
    y: np.ndarray,
    a: np.ndarray,
    mu_vals: list[np.ndarray],
    cum_vals: list[np.ndarray],
    profile: TreatmentProfile,
) -> np.ndarray:
    kk = len(profile) - 1
    phi = mu_vals[0].copy()
    for k in range(1, kk + 1):
        phi += (a == profile[k - 1]) * cum_vals[k - 1] * (mu_vals[k] - mu_vals[k - 1])
    phi += (a == profile[kk]) * cum_vals[kk] * (y - mu_vals[kk])
    return phi


def phi_values(ds: Dataset, fits: NuisanceFits, omegas: OmegaFits) -> np.ndarray:
    """Augmented outcome phi for every record; zero placeholders at r=0.

    phi = mu_1(x)
        + sum_k 1{a=a_k} prod_{j<=k} omega_j (mu_{k+1} - mu_k)
        + 1{a=a_{K+1}} prod_{j<=K+1} omega_j (y - mu_{K+1})

    with the floored products re-projected onto the mu bases.
    """
    if fits.profile != omegas.profile:
        raise DimensionMismatch("mu chain and omega fits target different profiles")
    cc = ds.complete_mask
    mu_vals = [predict_many(fits.mu[k], ds.mu_points(k + 1)) for k in range(ds.k + 1)]
    cum_vals = [predict_many(omegas.cumulative[k], ds.mu_points(k + 1)) for k in range(ds.k + 1)]
    out = np.zeros(ds.n)
    out[cc] = _phi_terms(ds.y[cc], ds.a[cc], mu_vals, cum_vals, fits.profile)
    return out


def compute_phi(record: ObservedRecord, fits: NuisanceFits, omegas: OmegaFits) -> float:
    """Record-level phi; requires a complete case."""
    x = covariate_vector(record)
    kk = len(fits.profile) - 1
    mu_vals = []
    for k in range(kk + 1):
        point = np.concatenate([x] + [np.atleast_1d(record.m[j]) for j in range(k)])
        mu_vals.append(predict(fits.mu[k], point))
    cum_vals = []
    for k in range(kk + 1):
        point = np.concatenate([x] + [np.atleast_1d(record.m[j]) for j in range(k)])
        cum_vals.append(predict(omegas.cumulative[k], point))
    phi = mu_vals[0]
    for k in range(1, kk + 1):
        if record.a == fits.profile[k - 1]:
            phi += cum_vals[k - 1] * (mu_vals[k] - mu_vals[k - 1])
    if record.a == fits.profile[kk]:
        phi += cum_vals[kk] * (record.y - mu_vals[kk])
    return float(phi)


def fit_representer(
    ds: Dataset,
    gamma: GammaLike,
    phi: np.ndarray,
    spec_q: BasisSpec,
    spec_p: BasisSpec,
    ridge: float = REPRESENTER_RIDGE,
) -> tuple[SeriesRegressor, float]:
    """Minimise (1/2n)||Ehat{R rho | W}|| ^2 - (1/n) sum R phi rho.

    rho ranges over the linear span of the odds basis, so the first-order
    condition is a convex quadratic. Recovering rho from its smoothed
    projection is an ill-posed inverse problem: the Gram operator has
    rapidly decaying spectrum and the unregularised solution oscillates.
    The ridge is Tikhonov regularisation scaled by the mean Gram
    eigenvalue; the returned criterion value is at most zero (zero is
    feasible).
    """
    if np.asarray(phi).shape != (ds.n,):
        raise LengthMismatch("phi must align with the dataset")
    cc = ds.complete_mask
    smat = design_matrix(spec_q, ds.regressor_points())
    span = orthonormal_span(design_matrix(spec_p, ds.conditioning_points()))
    gmat = span[cc].T @ smat
    rhs = smat.T @ phi[cc]
    gram = gmat.T @ gmat
    scale = float(np.trace(gram)) / max(gram.shape[0], 1)
    eps = ridge * max(scale, 1.0)
    coef, eps_used = ridge_solve(gram, rhs, error=SingularSystem, start=eps)
    proj = gmat @ coef
    value = 0.5 * float(proj @ proj) / ds.n - float(rhs @ coef) / ds.n
    diag = FitDiagnostics(
        n_used=int(cc.sum()), dim=spec_q.dim, rank=gmat.shape[0],
        cond=float("nan"), gram_diag_ridge=eps_used,
    )
    return SeriesRegressor(spec=spec_q, coef=coef, diagnostics=diag), value


def influence_values(
    ds: Dataset,
    gamma: GammaLike,
    psi_hat: float,
    phi: np.ndarray,
    rho: Optional[SeriesRegressor],
    spec_p: BasisSpec,
) -> np.ndarray:
    """Per-record influence values; mean near zero by construction.

    rho=None is the complete-data shortcut: with gamma identically zero
    and no incomplete records the correction factor R gamma - 1 + R is
    exactly zero, so the representer term drops out.
    """
    gvals = gamma_values_for(ds, gamma)
    r = ds.r.astype(float)
    t = r * gvals - (1.0 - r)
    term1 = r * (1.0 + gvals) * phi
    if rho is None:
        if np.any(t != 0.0):
            raise DimensionMismatch("representer required when R gamma - 1 + R is not identically zero")
        return term1 - psi_hat
    cc = ds.complete_mask
    rho_r = np.zeros(ds.n)
    rho_r[cc] = predict_many(rho, ds.regressor_points())
    span = orthonormal_span(design_matrix(spec_p, ds.conditioning_points()))
    erho = project_onto(span, r * rho_r)
    return term1 - psi_hat - erho * t


@dataclass
class InferenceReport:
    """Point estimate with influence-function variance and normal CI."""

    psi_hat: float
    sigma2: float
    se: float
    ci_lo: float
    ci_hi: float
    level: float
    n: int
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "psi_hat": self.psi_hat,
            "sigma2": self.sigma2,
            "se": self.se,
            "ci_lo": self.ci_lo,
            "ci_hi": self.ci_hi,
            "level": self.level,
            "n": self.n,
            "diagnostics": self.diagnostics,
        }


def variance_and_ci(
    psi_hat: float,
    if_values: np.ndarray,
    level: float = 0.95,
    diagnostics: Optional[dict] = None,
) -> InferenceReport:
    """sigma2 = (1/n) sum IF_i^2; CI = psi_hat -+ z sigma / sqrt(n)."""
    ifv = np.asarray(if_values, dtype=float)
    n = len(ifv)
    sigma2 = float(ifv @ ifv) / n
    se = float(np.sqrt(sigma2 / n))
    z = z_critical(level)
    return InferenceReport(
        psi_hat=psi_hat, sigma2=sigma2, se=se,
        ci_lo=psi_hat - z * se, ci_hi=psi_hat + z * se,
        level=level, n=n, diagnostics=diagnostics or {},
    )


def contrast_variance(
    contrast_hat: float,
    if_a: np.ndarray,
    if_b: np.ndarray,
    level: float = 0.95,
    diagnostics: Optional[dict] = None,
) -> InferenceReport:
    """Variance of a contrast from the differenced influence values."""
    if np.asarray(if_a).shape != np.asarray(if_b).shape:
        raise LengthMismatch("contrast_variance: influence vectors misaligned")
    return variance_and_ci(contrast_hat, np.asarray(if_a) - np.asarray(if_b), level, diagnostics)


# ---- profile and contrast drivers -------------------------------------


@dataclass
class ProfileAnalysis:
    profile: TreatmentProfile
    psi: PsiEstimate
    fits: NuisanceFits
    omegas: OmegaFits
    phi: np.ndarray
    rho: Optional[SeriesRegressor]
    rho_criterion: float
    if_values: np.ndarray
    report: InferenceReport


def analyze_profile(
    ds: Dataset,
    gamma: GammaLike,
    profile: Sequence[int],
    bundle: SpecBundle,
    level: float = 0.95,
) -> ProfileAnalysis:
    """Full single-profile pipeline: chain, omegas, phi, representer, IF."""
    prof = validate_profile(profile, ds.k)
    fits = fit_mu_chain(ds, gamma, prof, bundle.u)
    psi = estimate_psi(ds, fits)
    omegas = fit_omegas(ds, gamma, prof, bundle.u)
    phi = phi_values(ds, fits, omegas)

    skip_rho = (
        isinstance(gamma, GammaModel) and gamma.is_zero and bool(ds.complete_mask.all())
    )
    if skip_rho:
        rho, rho_value = None, 0.0
    else:
        rho, rho_value = fit_representer(ds, gamma, phi, bundle.q, bundle.p)
    ifv = influence_values(ds, gamma, psi.psi_hat, phi, rho, bundle.p)
    diag = {
        "profile": list(prof),
        "if_mean": float(ifv.mean()),
        "omega_floor_events": omegas.floor_events,
        "omega_moment_residual_sup": omegas.moment_residual_sup,
        "rho_criterion": rho_value,
        "mu_ridge": [reg.diagnostics.gram_diag_ridge for reg in fits.mu],
    }
    report = variance_and_ci(psi.psi_hat, ifv, level, diag)
    return ProfileAnalysis(
        profile=prof, psi=psi, fits=fits, omegas=omegas, phi=phi,
        rho=rho, rho_criterion=rho_value, if_values=ifv, report=report,
    )


@dataclass
class ContrastAnalysis:
    profile_a: TreatmentProfile
    profile_b: TreatmentProfile
    psi_a: float
    psi_b: float
    report: InferenceReport


def analyze_contrast(
    ds: Dataset,
    gamma: GammaLike,
    profile_a: Sequence[int],
    profile_b: Sequence[int],
    bundle: SpecBundle,
    level: float = 0.95,
    cache: Optional[dict] = None,
) -> ContrastAnalysis:
    """Contrast pipeline; a shared cache reuses per-profile analyses."""
    prof_a = validate_profile(profile_a, ds.k)
    prof_b = validate_profile(profile_b, ds.k)
    if cache is None:
        cache = {}

    def analysis_for(prof: TreatmentProfile) -> ProfileAnalysis:
        if prof not in cache:
            cache[prof] = analyze_profile(ds, gamma, prof, bundle, level)
        return cache[prof]

    pa = analysis_for(prof_a)
    pb = analysis_for(prof_b)
    contrast = 0.0 if prof_a == prof_b else pa.psi.psi_hat - pb.psi.psi_hat
    diag = {
        "profile_a": list(prof_a),
        "profile_b": list(prof_b),
        "psi_a": pa.psi.psi_hat,
        "psi_b": pb.psi.psi_hat,
    }
    report = contrast_variance(contrast, pa.if_values, pb.if_values, level, diag)
    return ContrastAnalysis(
        profile_a=prof_a, profile_b=prof_b,
        psi_a=pa.psi.psi_hat, psi_b=pb.psi.psi_hat, report=report,
    )
