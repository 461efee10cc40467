import math

import numpy as np
import pytest

from bgg.fluctuation import (
    BackendUnavailable,
    NonConvergence,
    analyze_exit,
    choose_backend,
    exit_index_series,
    prob_attacker_wins,
)
from bgg.fluctuation import dense, factorized
from bgg.fluctuation.analysis import default_tail_extent
from bgg.model import NetworkParams, derive_geometric_terms

# golden values for the M=20 reference race, agreed on by both backends and
# by a 10^6-episode simulation (see test_acceptance)
REF_P_WIN = 0.0376365710945773
REF_E_NU = 0.211943882480803
REF_E_TAU = 0.174641196153935

PARAM_SETS = {
    "symmetric": dict(lambda_attacker=1.0, lambda_honest=1.0, mean_initial_observation=1.0, mean_observation_gap=1.0),
    "attacker-weak": dict(lambda_attacker=0.4, lambda_honest=1.5, mean_initial_observation=1.5, mean_observation_gap=0.8),
    "attacker-strong": dict(lambda_attacker=2.5, lambda_honest=0.9, mean_initial_observation=3.0, mean_observation_gap=0.7),
}


def _pad(x, n):
    return np.pad(x, (0, n - len(x)))


def assert_backends_agree(p, atol=1e-10):
    a = analyze_exit(p, backend="dense")
    b = analyze_exit(p, backend="factorized")
    n = max(len(a.p), len(b.p))
    np.testing.assert_allclose(_pad(a.p, n), _pad(b.p, n), rtol=0, atol=atol)
    np.testing.assert_allclose(a.prev_pmf, b.prev_pmf, rtol=0, atol=atol)
    np.testing.assert_allclose(a.exit_pmf, b.exit_pmf, rtol=0, atol=atol)
    for f in ("total_mass", "exit_index_moment", "decision_time", "prev_remainder", "exit_remainder"):
        assert abs(getattr(a, f) - getattr(b, f)) <= atol, f
    return a, b


@pytest.mark.parametrize("M", [2, 3, 5, 10, 20])
@pytest.mark.parametrize("name", sorted(PARAM_SETS))
def test_dense_and_factorized_agree(M, name):
    assert_backends_agree(NetworkParams(M, **PARAM_SETS[name]))


def test_micro_case_closed_form(micro):
    for backend in ("dense", "factorized"):
        a = analyze_exit(micro, backend=backend)
        n = np.arange(1, len(a.p))
        assert a.p[0] == pytest.approx(0.5, abs=1e-12)
        np.testing.assert_allclose(a.p[1:], 0.25 * 0.5 ** (n - 1), atol=1e-12)
        assert a.total_mass == pytest.approx(1.0, abs=1e-9)
        assert a.exit_index_moment == pytest.approx(1.0, abs=1e-9)
        # tau_{nu-1}: zero when nu = 0; else the first nu gaps, each seen without a block
        # (posterior mean 1/2), so E = sum_n n/2 * 0.25 * 0.5**(n-1) = 1/2
        assert a.decision_time == pytest.approx(0.5, abs=1e-9)
        assert a.prev_pmf[0] == pytest.approx(0.5, abs=1e-12)


def test_zero_attacker_rate_never_wins():
    p = NetworkParams(10, 0.0, 1.0, 1.0, 1.0)
    s = exit_index_series(p)
    assert np.all(s.p == 0)
    assert prob_attacker_wins(p) == 0.0


def test_zero_honest_rate_always_wins():
    p = NetworkParams(12, 0.7, 0.0, 1.3, 0.9)
    assert prob_attacker_wins(p) == pytest.approx(1.0, abs=1e-9)


def test_symmetric_race_is_at_most_half():
    p = NetworkParams(20, 1.0, 1.0, 1.0, 1.0)
    assert 0 < prob_attacker_wins(p) <= 0.5


def test_reference_golden_values(reference):
    a = analyze_exit(reference)
    assert a.backend == "dense"
    assert a.total_mass == pytest.approx(REF_P_WIN, abs=1e-13)
    assert a.exit_index_moment == pytest.approx(REF_E_NU, abs=1e-12)
    assert a.decision_time == pytest.approx(REF_E_TAU, abs=1e-12)


def test_series_properties_over_random_params():
    rng = np.random.default_rng(11)
    for _ in range(25):
        p = NetworkParams(int(rng.integers(2, 80)), *rng.uniform(0.05, 3, 2), *rng.uniform(0.2, 3, 2))
        a = analyze_exit(p)
        assert 0 <= a.total_mass <= 1 + 1e-9
        assert np.all(a.p >= 0) and np.all(np.diff(np.cumsum(a.p)) >= 0)
        assert a.converged and a.truncation_error_bound < 1e-12
        assert math.fsum(a.prev_pmf) + a.prev_remainder == pytest.approx(a.total_mass, abs=1e-9)
        assert math.fsum(a.exit_pmf) + a.exit_remainder == pytest.approx(a.total_mass, abs=1e-9)


def test_non_convergence_is_reported(reference):
    s = exit_index_series(reference, N_max=3)
    assert not s.converged and s.truncation_error_bound > 1e-3 and len(s) == 4
    with pytest.raises(NonConvergence):
        prob_attacker_wins(reference, N_max=3, strict=True)


def test_terms_must_match(reference):
    other = derive_geometric_terms(NetworkParams(20, 1.0, 2.5, 1.0, 1.0))
    with pytest.raises(ValueError):
        exit_index_series(reference, terms=other)
    assert exit_index_series(reference, terms=derive_geometric_terms(reference)).total == pytest.approx(REF_P_WIN)


def test_backend_selection():
    assert choose_backend(NetworkParams(20, 1, 1, 1, 1)) == "dense"
    assert choose_backend(NetworkParams(2000, 1, 1, 1, 1)) == "factorized"
    short_first = NetworkParams(2000, 1, 1, 0.5, 1)
    assert choose_backend(short_first) == "dense"
    with pytest.raises(BackendUnavailable):
        choose_backend(short_first, "factorized")
    with pytest.raises(ValueError):
        choose_backend(short_first, "sparse")


def test_dense_handles_short_first_gap():
    # only the dense backend covers d0 < d; check it against the d0 = d limit from above
    p = NetworkParams(10, 1.0, 1.2, 0.999999, 1.0)
    q = NetworkParams(10, 1.0, 1.2, 1.0, 1.0)
    assert dense.analyze(p, 1e-12, 10**5, 30).total_mass == pytest.approx(
        factorized.analyze(q, 1e-12, 10**5, 30).total_mass, abs=1e-6)


def test_large_threshold_runs_factorized():
    p = NetworkParams(5000, 1.0, 1.05, 1.0, 1.0)
    a = analyze_exit(p)
    assert a.backend == "factorized" and a.converged
    assert 0 < a.total_mass < 0.5


def test_tail_extent_covers_raised_thresholds():
    p = NetworkParams(20, 1.0, 2.0, 1.0, 1.0)
    assert default_tail_extent(p, 1e-12) >= 10
    assert default_tail_extent(NetworkParams(20, 0.0, 2.0, 1.0, 1.0), 1e-12) == 0
