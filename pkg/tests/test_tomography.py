import numpy as np
import pytest

from semiweak_lgi.exceptions import InsufficientSettings, NonConvergence
from semiweak_lgi.qstate import check_density_matrix, ideal_state, product_state, random_density_matrix, werner_state
from semiweak_lgi.tomography import (
    _t_from_params,
    concurrence,
    fidelity,
    linear_inversion,
    mle_reconstruct,
    parse_setting,
    preset_settings,
    purity,
    read_counts_csv,
    simulate_counts,
    write_counts_csv,
)

LABELS = [lab for lab, _ in preset_settings()]
SETTINGS = [s for _, s in preset_settings()]


def exact_counts(rho, n):
    return np.array([n * np.trace(np.kron(p1, p2) @ rho).real for p1, p2 in SETTINGS])


def test_preset_has_sixteen_independent_settings():
    assert len(SETTINGS) == 16 and LABELS[0] == "HH" and LABELS[-1] == "RR"
    effects = np.array([np.kron(a, b).reshape(-1) for a, b in SETTINGS])
    assert np.linalg.matrix_rank(effects) == 16


@pytest.mark.parametrize(
    "rho, c, p",
    [
        (ideal_state("psi"), 1.0, 1.0),
        (ideal_state("psi_double_prime"), 1.0, 1.0),
        (product_state("h", "v"), 0.0, 1.0),
        (werner_state(0.5), 0.25, 0.4375),
        (np.eye(4) / 4, 0.0, 0.25),
    ],
)
def test_metrics(rho, c, p):
    assert concurrence(rho) == pytest.approx(c, abs=1e-10)
    assert purity(rho) == pytest.approx(p, abs=1e-12)


@pytest.mark.parametrize("p", np.linspace(0, 1, 9))
def test_werner_concurrence_closed_form(p):
    assert concurrence(werner_state(p)) == pytest.approx(max(0.0, (3 * p - 1) / 2), abs=1e-10)


def test_fidelity_basics(rng):
    rho = random_density_matrix(rng)
    assert fidelity(rho, rho) == pytest.approx(1, abs=1e-8)
    assert fidelity(product_state("h", "h"), product_state("v", "v")) == pytest.approx(0, abs=1e-12)
    sigma = random_density_matrix(rng)
    assert fidelity(rho, sigma) == pytest.approx(fidelity(sigma, rho), abs=1e-8)


def test_linear_inversion_exact(rng):
    rho = random_density_matrix(rng)
    np.testing.assert_allclose(linear_inversion(np.array([np.kron(a, b) for a, b in SETTINGS]), exact_counts(rho, 1e3)), rho, atol=1e-12)


def test_noiseless_product_state():
    target = product_state("h", "v")
    run = mle_reconstruct(SETTINGS, exact_counts(target, 1e4))
    assert fidelity(run.result, target) > 1 - 1e-6
    check_density_matrix(run.result)


def test_closed_loop_psi():
    target = ideal_state("psi")
    counts = simulate_counts(target, 1e5, seed=2)
    run = mle_reconstruct(SETTINGS, counts)
    assert fidelity(run.result, target) > 0.99
    assert abs(concurrence(run.result) - 1) < 0.02
    assert abs(purity(run.result) - 1) < 0.02


def test_closed_loop_mixed_state(rng):
    target = werner_state(0.7)
    run = mle_reconstruct(SETTINGS, simulate_counts(target, 1e5, seed=4))
    assert abs(concurrence(run.result) - concurrence(target)) < 0.02
    assert abs(purity(run.result) - purity(target)) < 0.02


def test_likelihood_is_monotone():
    run = mle_reconstruct(SETTINGS, simulate_counts(werner_state(0.6), 1e3, seed=8))
    assert np.all(np.diff(run.history) >= 0)
    assert run.iterations == len(run.history) - 1


def test_every_parameter_vector_is_a_state(rng):
    for _ in range(50):
        t = _t_from_params(rng.normal(size=16))
        rho = t.conj().T @ t
        check_density_matrix(rho / np.trace(rho).real)


def test_all_zero_counts():
    with pytest.raises(InsufficientSettings):
        mle_reconstruct(SETTINGS, np.zeros(16))


def test_too_few_settings():
    with pytest.raises(InsufficientSettings):
        mle_reconstruct(SETTINGS[:15], np.ones(15))
    with pytest.raises(InsufficientSettings):
        # sixteen settings, but only eight distinct ones
        mle_reconstruct(SETTINGS[::2] * 2, np.ones(16))


def test_bad_counts():
    with pytest.raises(ValueError):
        mle_reconstruct(SETTINGS, np.ones(15))
    with pytest.raises(ValueError):
        mle_reconstruct(SETTINGS, -np.ones(16))


def test_iteration_cap():
    counts = simulate_counts(werner_state(0.5), 1e3, seed=1)
    with pytest.raises(NonConvergence):
        mle_reconstruct(SETTINGS, counts, tolerance=0.0, max_iterations=5)


def test_simulated_counts_deterministic():
    a = simulate_counts(ideal_state("psi"), 1e4, seed=3)
    np.testing.assert_array_equal(a, simulate_counts(ideal_state("psi"), 1e4, seed=3))


def test_counts_csv_round_trip(tmp_path):
    counts = simulate_counts(ideal_state("psi"), 1e4, seed=3)
    path = tmp_path / "counts.csv"
    write_counts_csv(path, LABELS, counts)
    labels, settings, back = read_counts_csv(path)
    assert labels == LABELS
    np.testing.assert_array_equal(back, counts)
    for (a, b), (c, d) in zip(settings, SETTINGS):
        np.testing.assert_allclose(a, c)
        np.testing.assert_allclose(b, d)


def test_parse_setting():
    with pytest.raises(ValueError):
        parse_setting("HVD")
    with pytest.raises(ValueError):
        parse_setting("HX")


def test_run_json(tmp_path):
    run = mle_reconstruct(SETTINGS, exact_counts(ideal_state("psi"), 1e4))
    payload = run.to_json()
    assert payload["basis"] == ["hh", "hv", "vh", "vv"]
    assert set(payload["metrics"]) == {"concurrence", "purity", "log_likelihood", "iterations"}
