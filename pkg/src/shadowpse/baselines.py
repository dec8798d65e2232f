"""Estimation strategies: the shadow-variable estimator and references.

sri     fit the odds function, then the reweighted sieve pipeline
oracle  use the true covariates (simulation only), odds set to zero
cca     drop incomplete records, odds set to zero
mi      multiple imputation with a linear-Gaussian imputer and
        Rubin pooling, odds set to zero on each completed dataset

On fully observed data all four collapse to the same numbers: the odds
fit returns the zero model, complete cases are the whole sample and the
imputer has nothing to fill.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .data_model import Dataset, complete_cases
from .errors import InsufficientCompleteCases, MissingTrueX
from .estimator import TreatmentProfile, named_estimand, validate_profile
from .gamma_solver import GammaModel, GammaOptions, fit_gamma
from .inference import InferenceReport, analyze_contrast, variance_and_ci, z_critical
from .sieve_basis import build_spec_bundle

EstimandSpec = Union[str, tuple[Sequence[int], Sequence[int]]]


@dataclass
class MethodResult:
    method: str
    estimands: dict[str, InferenceReport]
    profiles: dict[TreatmentProfile, float]
    extras: dict = field(default_factory=dict)


def resolve_estimands(ds_k: int, estimands: Optional[Sequence[EstimandSpec]]) -> dict:
    """Map estimand names (or explicit profile pairs) to profile pairs."""
    if estimands is None:
        estimands = ["nde"] + [f"nie_{j}" for j in range(1, ds_k + 1)] + ["te"]
    out = {}
    for item in estimands:
        if isinstance(item, str):
            out[item] = named_estimand(item, ds_k)
        else:
            pa, pb = item
            key = "psi_" + "".join(map(str, pa)) + "_vs_" + "".join(map(str, pb))
            out[key] = (validate_profile(pa, ds_k), validate_profile(pb, ds_k))
    return out


def _zero_gamma() -> GammaModel:
    return GammaModel(spec_q=None, pi=None, linear_cap=10.0, is_zero=True)


def _run_pipeline(
    ds: Dataset,
    gamma,
    estimands: dict,
    level: float,
    degree: int,
    include_interactions: bool,
    mu_degree: int,
    mu_interactions: bool,
    method: str,
    extras: Optional[dict] = None,
) -> MethodResult:
    bundle = build_spec_bundle(ds, degree=degree, include_interactions=include_interactions,
                               mu_degree=mu_degree, mu_interactions=mu_interactions)
    cache: dict = {}
    reports = {}
    for name, (pa, pb) in estimands.items():
        reports[name] = analyze_contrast(ds, gamma, pa, pb, bundle, level, cache).report
    profiles = {prof: analysis.psi.psi_hat for prof, analysis in cache.items()}
    return MethodResult(method=method, estimands=reports, profiles=profiles,
                        extras=extras or {})


def sri_estimate(
    ds: Dataset,
    estimands: Optional[Sequence[EstimandSpec]] = None,
    level: float = 0.95,
    degree: int = 3,
    include_interactions: bool = True,
    mu_degree: int = 2,
    mu_interactions: bool = False,
    gamma_options: GammaOptions = GammaOptions(),
) -> MethodResult:
    """Shadow-variable sieve estimator on the observed data."""
    wanted = resolve_estimands(ds.k, estimands)
    bundle = build_spec_bundle(ds, degree=degree, include_interactions=include_interactions,
                               mu_degree=mu_degree, mu_interactions=mu_interactions)
    gamma, gamma_report = fit_gamma(ds, bundle.q, bundle.p, gamma_options)
    cache: dict = {}
    reports = {}
    for name, (pa, pb) in wanted.items():
        reports[name] = analyze_contrast(ds, gamma, pa, pb, bundle, level, cache).report
    profiles = {prof: analysis.psi.psi_hat for prof, analysis in cache.items()}
    extras = {
        "gamma_q_n": gamma_report.q_n,
        "gamma_grad_norm": gamma_report.grad_norm,
        "gamma_converged": gamma_report.converged,
        "gamma_n_iter": gamma_report.n_iter,
        "gamma_messages": list(gamma_report.messages),
    }
    return MethodResult(method="sri", estimands=reports, profiles=profiles, extras=extras)


def oracle_estimate(
    full: Dataset,
    estimands: Optional[Sequence[EstimandSpec]] = None,
    level: float = 0.95,
    degree: int = 3,
    include_interactions: bool = True,
    mu_degree: int = 2,
    mu_interactions: bool = False,
) -> MethodResult:
    """Estimator with the true covariates: r set to one, odds to zero."""
    if np.isnan(full.x_miss).any():
        raise MissingTrueX("oracle_estimate needs x_miss on every record")
    ds = full.with_r_set_to_one()
    wanted = resolve_estimands(ds.k, estimands)
    return _run_pipeline(ds, _zero_gamma(), wanted, level, degree,
                         include_interactions, mu_degree, mu_interactions, "oracle")


def cca_estimate(
    ds: Dataset,
    estimands: Optional[Sequence[EstimandSpec]] = None,
    level: float = 0.95,
    degree: int = 3,
    include_interactions: bool = True,
    mu_degree: int = 2,
    mu_interactions: bool = False,
) -> MethodResult:
    """Complete-case analysis: biased under nonignorable missingness."""
    cc = complete_cases(ds)
    wanted = resolve_estimands(cc.k, estimands)
    return _run_pipeline(cc, _zero_gamma(), wanted, level, degree,
                         include_interactions, mu_degree, mu_interactions, "cca")


def _impute_once(
    ds: Dataset,
    beta: np.ndarray,
    resid_sd: np.ndarray,
    rng: np.random.Generator,
) -> Dataset:
    miss = ~ds.complete_mask
    design = _imputer_design(ds, np.ones(ds.n, dtype=bool))
    filled = ds.x_miss.copy()
    for j in range(ds.dims.x_miss):
        draw = design[miss] @ beta[:, j] + resid_sd[j] * rng.standard_normal(int(miss.sum()))
        filled[miss, j] = draw
    out = ds.subset(np.ones(ds.n, dtype=bool))
    out.x_miss = filled
    out.r = np.ones(ds.n, dtype=int)
    return out


def _imputer_design(ds: Dataset, mask: np.ndarray) -> np.ndarray:
    cols = [np.ones(int(mask.sum()))[:, None], ds.z[mask], ds.x_obs[mask],
            ds.a[mask, None].astype(float)]
    cols.extend(mk[mask] for mk in ds.m)
    cols.append(ds.y[mask, None])
    return np.hstack(cols)


def mi_estimate(
    ds: Dataset,
    estimands: Optional[Sequence[EstimandSpec]] = None,
    m: int = 20,
    seed=0,
    level: float = 0.95,
    degree: int = 3,
    include_interactions: bool = True,
    mu_degree: int = 2,
    mu_interactions: bool = False,
) -> MethodResult:
    """Linear-Gaussian multiple imputation with Rubin pooling.

    Each x_miss coordinate is regressed on (1, z, x_obs, a, m, y) over
    complete cases; every imputation fills conditional means plus
    Gaussian noise at the residual sd, then the zero-odds pipeline runs
    on the completed data. Pooled variance is W + (1 + 1/m) B.
    """
    if m < 2:
        raise InsufficientCompleteCases("multiple imputation needs m >= 2")
    wanted = resolve_estimands(ds.k, estimands)
    cc_mask = ds.complete_mask
    design_cc = _imputer_design(ds, cc_mask)
    n_cc, p = design_cc.shape
    if n_cc <= p:
        raise InsufficientCompleteCases(
            f"{n_cc} complete cases cannot support a {p}-column imputer"
        )
    targets = ds.x_miss[cc_mask]
    beta, _, _, _ = np.linalg.lstsq(design_cc, targets, rcond=None)
    resid = targets - design_cc @ beta
    resid_sd = np.sqrt((resid ** 2).sum(axis=0) / (n_cc - p))

    if isinstance(seed, np.random.SeedSequence):
        rng = np.random.Generator(np.random.Philox(seed))
    else:
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))

    points: dict[str, list[float]] = {name: [] for name in wanted}
    within: dict[str, list[float]] = {name: [] for name in wanted}
    psi_acc: dict[TreatmentProfile, list[float]] = {}
    for _ in range(m):
        completed = _impute_once(ds, beta, resid_sd, rng)
        res = _run_pipeline(completed, _zero_gamma(), wanted, level, degree,
                            include_interactions, mu_degree, mu_interactions, "mi")
        for name, rep in res.estimands.items():
            points[name].append(rep.psi_hat)
            within[name].append(rep.se ** 2)
        for prof, psi in res.profiles.items():
            psi_acc.setdefault(prof, []).append(psi)

    z = z_critical(level)
    reports = {}
    for name in wanted:
        pts = np.asarray(points[name])
        point = float(pts.mean())
        w_bar = float(np.mean(within[name]))
        b_var = float(pts.var(ddof=1))
        total = w_bar + (1.0 + 1.0 / m) * b_var
        se = float(np.sqrt(total))
        reports[name] = InferenceReport(
            psi_hat=point, sigma2=total * ds.n, se=se,
            ci_lo=point - z * se, ci_hi=point + z * se,
            level=level, n=ds.n,
            diagnostics={"m": m, "within": w_bar, "between": b_var},
        )
    profiles = {prof: float(np.mean(vals)) for prof, vals in psi_acc.items()}
    return MethodResult(method="mi", estimands=reports, profiles=profiles,
                        extras={"m": m})
