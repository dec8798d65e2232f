import numpy as np
import pytest

from shadowpse.baselines import (
    MethodResult,
    cca_estimate,
    mi_estimate,
    oracle_estimate,
    resolve_estimands,
    sri_estimate,
)
from shadowpse.errors import (
    DimensionMismatch,
    EmptyResult,
    InsufficientCompleteCases,
    MissingTrueX,
)
from support import one_mediator_dataset, rng_for

ESTIMAND_NAMES = ["nde", "nie_1", "nie_2", "te"]


def test_resolve_estimands():
    mapping = resolve_estimands(2, None)
    assert list(mapping) == ESTIMAND_NAMES
    assert mapping["te"] == ((1, 1, 1), (0, 0, 0))
    pair = resolve_estimands(2, [((1, 0, 1), (0, 0, 0))])
    assert pair == {"psi_101_vs_000": ((1, 0, 1), (0, 0, 0))}
    with pytest.raises(DimensionMismatch):
        resolve_estimands(2, ["bogus"])


def test_full_data_reduction_all_methods_agree(comp2000):
    results = {
        "oracle": oracle_estimate(comp2000),
        "sri": sri_estimate(comp2000),
        "cca": cca_estimate(comp2000),
        "mi": mi_estimate(comp2000, m=3, seed=5),
    }
    base = results["oracle"]
    for name, res in results.items():
        assert isinstance(res, MethodResult)
        assert res.method == name
        for est in ESTIMAND_NAMES:
            assert abs(res.estimands[est].psi_hat
                       - base.estimands[est].psi_hat) <= 1e-10
            assert abs(res.estimands[est].se - base.estimands[est].se) <= 1e-10


def test_sri_reports_gamma_diagnostics(obs600):
    res = sri_estimate(obs600)
    assert sorted(res.extras) == ["gamma_converged", "gamma_grad_norm",
                                  "gamma_messages", "gamma_n_iter", "gamma_q_n"]
    assert res.extras["gamma_q_n"] >= 0.0
    assert set(res.profiles) == {(0, 0, 0), (0, 0, 1), (0, 1, 1), (1, 1, 1)}
    for est in ESTIMAND_NAMES:
        rep = res.estimands[est]
        assert rep.ci_lo <= rep.psi_hat <= rep.ci_hi


def test_estimand_subset_and_explicit_pair(obs600):
    res = cca_estimate(obs600, estimands=["te", ((1, 0, 1), (0, 0, 0))])
    assert sorted(res.estimands) == ["psi_101_vs_000", "te"]


def test_constant_outcome_gives_zero_contrasts():
    rng = rng_for(315)
    n = 250
    x = rng.random(n)
    a = (rng.random(n) < 0.5).astype(int)
    m1 = x + rng.standard_normal(n)
    ds = one_mediator_dataset(n, x, a, m1, np.full(n, -1.75))
    res = cca_estimate(ds, degree=2)
    for est in ("nde", "nie_1", "te"):
        assert abs(res.estimands[est].psi_hat) <= 1e-10
    for psi in res.profiles.values():
        assert abs(psi - (-1.75)) <= 1e-10


def test_oracle_requires_true_covariates(obs600):
    with pytest.raises(MissingTrueX):
        oracle_estimate(obs600)


def test_cca_needs_complete_cases():
    ds = one_mediator_dataset(
        4, np.array([0.1, 0.2, 0.3, 0.4]), np.array([0, 1, 0, 1]),
        np.array([1.0, 2.0, 3.0, 4.0]), np.array([0.5, 1.5, 2.5, 3.5]),
        r=np.zeros(4, dtype=int))
    with pytest.raises(EmptyResult):
        cca_estimate(ds)


def test_mi_guards(obs600):
    with pytest.raises(InsufficientCompleteCases):
        mi_estimate(obs600, m=1)
    # five complete cases cannot support the eight-column imputer design
    keep = np.zeros(obs600.n, dtype=bool)
    keep[np.where(obs600.r == 1)[0][:5]] = True
    keep[np.where(obs600.r == 0)[0][:3]] = True
    with pytest.raises(InsufficientCompleteCases):
        mi_estimate(obs600.subset(keep), m=3)


def test_mi_seed_determinism(obs600):
    a = mi_estimate(obs600, m=4, seed=11)
    b = mi_estimate(obs600, m=4, seed=11)
    c = mi_estimate(obs600, m=4, seed=12)
    for est in ESTIMAND_NAMES:
        assert a.estimands[est].psi_hat == b.estimands[est].psi_hat
        assert a.estimands[est].se == b.estimands[est].se
    assert any(a.estimands[e].psi_hat != c.estimands[e].psi_hat
               for e in ESTIMAND_NAMES)


def test_mi_moves_point_estimates_off_complete_cases(obs2000):
    res = mi_estimate(obs2000, m=5, seed=3)
    cca = cca_estimate(obs2000)
    for est in ESTIMAND_NAMES:
        assert res.estimands[est].se > 0.0
        assert np.isfinite(res.estimands[est].se)
    # imputation must move the point estimates away from complete cases only
    assert any(abs(res.estimands[e].psi_hat - cca.estimands[e].psi_hat) > 1e-6
               for e in ESTIMAND_NAMES)
