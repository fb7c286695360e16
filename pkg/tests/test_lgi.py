import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semiweak_lgi.exceptions import UnsupportedSize, ZeroConditioningProbability
from semiweak_lgi.lgi import (
    BASIC_TERMS,
    FIG4_TERMS,
    FIG5_TERMS,
    CorrelationVector,
    DetectorChain,
    ca_conditions,
    chain_for_size,
    coefficient_blocks,
    conditioned_average,
    convex_sum_constraint,
    correlation_vector,
    enumerate_lgis,
    evaluate_lgi,
    standard_chain,
    find_violations,
    is_canonical,
    is_chsh_candidate,
    joint_distribution,
    joint_probability,
    lgi_count,
    make_spec,
    mr_bounds,
    projective,
    semi_weak,
    spec_from_json,
    spec_from_terms,
    spec_index,
    subsets,
)
from semiweak_lgi.meter import SemiWeakMeter
from semiweak_lgi.qstate import (
    IDENTITY,
    SIGMA_Z,
    ideal_state,
    product_state,
)

from conftest import random_states
from oracles import oracle_bounds, oracle_standard_correlations, oracle_standard_probability

PSI2 = ideal_state("psi_double_prime")


# -- enumeration and bounds --------------------------------------------------


@pytest.mark.parametrize("m, count", [(1, 1), (2, 13), (3, 1093), (4, 7_174_453)])
def test_lgi_count(m, count):
    assert lgi_count(m) == count
    assert sum(len(b) for _, b in coefficient_blocks(m)) == count


@pytest.mark.parametrize("m", [1, 2, 3])
def test_enumeration_is_canonical_unique_and_indexed(m):
    specs = list(enumerate_lgis(m))
    assert len(specs) == lgi_count(m)
    assert len({s.coeffs for s in specs}) == len(specs)
    for i, s in enumerate(specs):
        assert s.index == i == spec_index(s.coeffs)
        assert is_canonical(s.coeffs)
        assert (s.lower, s.upper) == mr_bounds(s.coeffs)


def test_enumeration_m4_streams_lazily():
    gen = enumerate_lgis(4)
    first = [next(gen) for _ in range(3)]
    assert [s.index for s in first] == [0, 1, 2]
    assert first[0].coeffs[0] == 1 and not any(first[0].coeffs[1:])


def test_blocks_cover_every_index_once_for_m4():
    start_expected = 0
    for start, block in coefficient_blocks(4, block_size=1 << 18):
        assert start == start_expected
        assert block.shape[1] == 15 and block.dtype == np.int8
        start_expected += len(block)
    assert start_expected == lgi_count(4)


def test_enumeration_rejects_large_m():
    with pytest.raises(UnsupportedSize):
        list(enumerate_lgis(5))


@pytest.mark.parametrize(
    "terms, bounds",
    [(BASIC_TERMS, (-3, 1)), ({"B1B2": 1}, (-1, 1)), (FIG5_TERMS[0], (-3, 1)), (FIG4_TERMS, (-3, 1))],
)
def test_mr_bounds_examples(meter, terms, bounds):
    spec = spec_from_terms(standard_chain(meter, 0), terms)
    assert (spec.lower, spec.upper) == bounds


def test_mr_bounds_match_second_enumerator(meter):
    rng = np.random.default_rng(5)
    chain = standard_chain(meter, 0)
    for _ in range(1000):
        c = rng.integers(-1, 2, size=7)
        if not c.any():
            continue
        terms = {s: int(x) for s, x in zip(subsets(3), c) if x}
        assert mr_bounds(c) == oracle_bounds(terms, 3)
    assert chain.subsets == subsets(3)


@settings(max_examples=200)
@given(st.lists(st.integers(-1, 1), min_size=15, max_size=15).filter(any))
def test_mr_bounds_match_second_enumerator_m4(c):
    terms = {s: x for s, x in zip(subsets(4), c) if x}
    assert mr_bounds(c) == oracle_bounds(terms, 4)


def test_spec_index_round_trip():
    specs = list(enumerate_lgis(3))
    rng = np.random.default_rng(1)
    for i in rng.integers(0, len(specs), 50):
        assert spec_index(specs[i].coeffs) == i
    with pytest.raises(ValueError):
        spec_index([-1, 0, 0, 0, 0, 0, 0])


def test_make_spec_validation():
    with pytest.raises(ValueError):
        make_spec([0] * 7)
    with pytest.raises(ValueError):
        make_spec([2, 0, 0, 0, 0, 0, 0])
    assert make_spec([-1, 0, 0, 0, 0, 0, 0]).index is None


def test_spec_names_and_json_round_trip(meter, tmp_path):
    chain = standard_chain(meter, 0)
    spec = spec_from_terms(chain, {"B2B1": -1, "A1": 1, "B1A1B2": 1})
    assert spec.name(chain) == "+A1-B1B2+A1B1B2"
    assert spec_from_json(spec.to_json(chain), chain) == spec
    bad = spec.to_json(chain) | {"upper": 2}
    with pytest.raises(ValueError):
        spec_from_json(bad, chain)
    assert json.loads(json.dumps(spec.to_json(chain)))["coefficients"]["A1B1B2"] == 1


def test_subset_label_parsing(meter):
    chain = chain_for_size(4, meter, 0)
    assert chain.labels == ("A1", "B1", "A2", "B2")
    assert chain.subset_index("B2A1") == chain.subset_labels.index("A1B2")
    with pytest.raises(ValueError):
        chain.subset_index("A1A1")
    with pytest.raises(ValueError):
        chain.subset_index("C3")


def test_chsh_candidate_flag(meter):
    chain = chain_for_size(4, meter, 0)
    chsh = spec_from_terms(chain, {"A1A2": 1, "A1B2": 1, "B1A2": 1, "B1B2": -1})
    assert is_chsh_candidate(chsh, chain)
    assert not is_chsh_candidate(spec_from_terms(chain, {"A1B1": 1, "A1B2": 1}), chain)
    assert not is_chsh_candidate(spec_from_terms(chain, {"A1": 1}), chain)


# -- chains ------------------------------------------------------------------


def test_chain_validation(meter):
    with pytest.raises(ValueError, match="semi-weak"):
        DetectorChain((semi_weak(meter, 1, "A1"), semi_weak(meter, 1, "A2")))
    with pytest.raises(ValueError, match="unique"):
        DetectorChain((semi_weak(meter, 1, "A1"), projective(SIGMA_Z, 1, "A1")))
    with pytest.raises(ValueError, match="eigenvalues"):
        projective(2 * SIGMA_Z, 1, "B1")
    with pytest.raises(ValueError):
        projective(IDENTITY, 1, "B1")
    with pytest.raises(UnsupportedSize):
        DetectorChain(tuple(projective(SIGMA_Z, 1, f"B{i}") for i in range(5)))


def test_chain_for_size_shapes(meter):
    assert [chain_for_size(m, meter, 10).m for m in (1, 2, 3, 4)] == [1, 2, 3, 4]
    assert chain_for_size(2, meter, 10).labels == ("A1", "B1")
    with pytest.raises(UnsupportedSize):
        chain_for_size(5, meter, 0)


# -- quantum predictions -----------------------------------------------------


def test_joint_probability_examples(meter):
    chain = standard_chain(meter, 0)
    assert abs(joint_probability(chain, product_state("h", "v"), ("r", 1, -1)) - 0.0390) < 1e-15
    assert abs(joint_distribution(chain, ideal_state("psi")).sum() - 1) < 1e-12
    chain45 = standard_chain(meter, 45)
    got = joint_probability(chain45, PSI2, ("r", 1, 1))
    assert abs(got - oracle_standard_probability(meter, 45, PSI2, "r", 1, 1)) < 1e-12
    with pytest.raises(ValueError):
        joint_probability(chain, PSI2, ("r", 1))
    with pytest.raises(ValueError):
        joint_probability(chain, PSI2, ("x", 1, 1))


def test_joint_matches_direct_trace_oracle(rng):
    for state in random_states(rng, 50):
        r_h, r_v = rng.uniform(0, 1, 2)
        meter = SemiWeakMeter(r_h, r_v)
        theta = rng.uniform(0, 180)
        joint = joint_distribution(standard_chain(meter, theta), state)
        assert np.all(joint >= -1e-15)
        for (i, alpha), (j, b1), (k, b2) in itertools.product(
            enumerate("rt"), enumerate((1, -1)), enumerate((1, -1))
        ):
            assert abs(joint[i, j, k] - oracle_standard_probability(meter, theta, state, alpha, b1, b2)) < 1e-12


def test_m4_joint_distribution_is_normalized(meter, rng):
    chain = chain_for_size(4, meter, 33, SemiWeakMeter(0.3, 0.1))
    for state in random_states(rng, 10):
        joint = joint_distribution(chain, state)
        assert joint.shape == (2, 2, 2, 2)
        assert abs(joint.sum() - 1) < 1e-12 and joint.min() >= -1e-15


@pytest.mark.parametrize("theta", [0, 30, 77.5, 135])
def test_correlation_vector_matches_oracle(meter, theta):
    corr = correlation_vector(standard_chain(meter, theta), PSI2)
    want = oracle_standard_correlations(meter, theta, PSI2)
    for label, value in want.items():
        assert abs(corr[label] - value) < 1e-12


def test_correlation_examples(meter):
    for theta in range(0, 180, 15):
        assert abs(correlation_vector(standard_chain(meter, theta), PSI2)["A1"]) < 1e-10
    assert correlation_vector(standard_chain(meter, 0), product_state("h", "v"))["B2"] == pytest.approx(-1, abs=1e-15)


def test_projective_limit_reproduces_sequential_expectation(rng):
    chain = standard_chain(SemiWeakMeter(0.0, 1.0), 20)
    for state in random_states(rng, 10):
        corr = correlation_vector(chain, state)
        # after a projective sigma_z, <A1 B1> = sum_a P(a) a <a|sigma_theta|a> = cos(2 theta)
        zz = np.kron(np.diag([1, 0]), IDENTITY)
        p_plus = np.trace(zz @ state).real
        assert abs(corr["A1"] - (2 * p_plus - 1)) < 1e-12
        assert abs(corr["A1B1"] - np.cos(np.deg2rad(40))) < 1e-12


def test_projective_only_specs_never_violated(meter, rng):
    chain = standard_chain(meter, 0)
    proj_mask = np.array([0 not in s for s in chain.subsets])
    specs = [s for s in enumerate_lgis(3) if not np.any(np.array(s.coeffs)[~proj_mask])]
    assert len(specs) == 13
    for state in random_states(rng, 30):
        corr = correlation_vector(standard_chain(meter, rng.uniform(0, 180)), state)
        assert not any(evaluate_lgi(s, corr).violated for s in specs)


def test_projective_entries_lie_in_unit_interval(meter, rng):
    for state in random_states(rng, 20):
        chain = standard_chain(meter, rng.uniform(0, 180))
        corr = correlation_vector(chain, state)
        for label in ("B1", "B2", "B1B2"):
            assert abs(corr[label]) <= 1 + 1e-10


def test_evaluate_lgi_zero_correlations(meter):
    chain = standard_chain(meter, 0)
    corr = CorrelationVector(chain.subset_labels, np.zeros(7))
    for spec in enumerate_lgis(3):
        v = evaluate_lgi(spec, corr)
        assert v.value == 0 and not v.violated


def test_find_violations_agrees_with_evaluate(meter):
    chain = standard_chain(meter, 130, a_sign=-1)
    corr = correlation_vector(chain, PSI2)
    hits = {i: v for i, v, _, _ in find_violations(corr, 3)}
    for spec in enumerate_lgis(3):
        ev = evaluate_lgi(spec, corr)
        assert ev.violated == (spec.index in hits)
        if ev.violated:
            assert hits[spec.index] == pytest.approx(ev.value, abs=1e-12)
    assert spec_from_terms(chain, BASIC_TERMS).index in hits


def test_find_violations_none_for_maximally_mixed(meter):
    for theta in range(0, 180, 10):
        corr = correlation_vector(standard_chain(meter, theta), np.eye(4) / 4)
        assert list(find_violations(corr, 3)) == []


# -- conditioned averages ----------------------------------------------------


def test_ca_eigenstate_gives_eigenvalue(meter):
    for theta in (0, 30, 60):
        chain = standard_chain(meter, theta)
        for _, cond in ca_conditions(chain):
            try:
                ca = conditioned_average(chain, product_state("h", "a"), cond)
            except ZeroConditioningProbability:
                continue
            assert ca == pytest.approx(1.0, abs=1e-12)


def test_ca_zero_probability(meter):
    chain = standard_chain(meter, 0)
    with pytest.raises(ZeroConditioningProbability):
        conditioned_average(chain, product_state("h", "v"), (1, 1))
    with pytest.raises(ValueError):
        conditioned_average(chain, PSI2, (1,))


def test_ca_condition_dict_form(meter):
    chain = standard_chain(meter, 40)
    assert conditioned_average(chain, PSI2, {"B1": 1, "B2": -1}) == conditioned_average(chain, PSI2, (1, -1))
    assert conditioned_average(chain, PSI2, {"B2": 1}) == conditioned_average(chain, PSI2, (None, 1))
    with pytest.raises(ValueError):
        conditioned_average(chain, PSI2, {"A1": 1})


def test_double_cas_leave_eigenvalue_range(meter):
    outside = 0
    for theta in range(180):
        chain = standard_chain(meter, theta)
        for cond in ((1, 1), (-1, -1)):
            try:
                outside += abs(conditioned_average(chain, PSI2, cond)) > 1 + 1e-9
            except ZeroConditioningProbability:
                pass
    assert outside > 0


def test_ca_conditions_labels(meter):
    names = [n for n, _ in ca_conditions(standard_chain(meter, 0))]
    assert len(names) == 8
    assert "A1|B1=+&B2=-" in names and "A1|B2=+" in names


# -- convex sum --------------------------------------------------------------


def test_convex_sum_separable_state(meter):
    for theta in range(0, 180, 7):
        cs = convex_sum_constraint(standard_chain(meter, theta), np.eye(4) / 4)
        assert -1 <= cs.lhs <= 1 and not cs.violated
        assert cs.p_plus + cs.p_minus == pytest.approx(1, abs=1e-12)


def test_convex_sum_rejects_other_shapes(meter):
    with pytest.raises(ValueError):
        convex_sum_constraint(chain_for_size(2, meter, 0), PSI2)


def test_convex_sum_identity(meter, rng):
    # <A1> + <A1 B1 B2> = 2 (P(1,1) + P(-1,-1)) lhs, since A1 (1 + b1 b2) vanishes when b1 b2 = -1
    for state in random_states(rng, 30):
        chain = standard_chain(meter, rng.uniform(0, 180), a_sign=int(rng.choice([1, -1])))
        joint = joint_distribution(chain, state)
        corr = correlation_vector(chain, state)
        cs = convex_sum_constraint(chain, state)
        s = joint[:, 0, 0].sum() + joint[:, 1, 1].sum()
        c_val = evaluate_lgi(spec_from_terms(chain, BASIC_TERMS), corr).value
        assert abs(2 * s * cs.lhs - corr["B1B2"] - c_val) < 1e-10


def test_fig4_violation_sets_coincide(meter):
    lgi_set, cs_set = set(), set()
    for theta in np.arange(0, 180, 0.5):
        chain = standard_chain(meter, theta, a_sign=-1)
        corr = correlation_vector(chain, PSI2)
        if evaluate_lgi(spec_from_terms(chain, BASIC_TERMS), corr).violated_upper:
            lgi_set.add(theta)
        if convex_sum_constraint(chain, PSI2).violated:
            cs_set.add(theta)
    assert lgi_set and lgi_set == cs_set


def test_fig4_terms_equal_eq1_with_negated_meter(meter):
    for theta in (10, 120, 150):
        neg = correlation_vector(standard_chain(meter, theta, a_sign=-1), PSI2)
        pos = correlation_vector(standard_chain(meter, theta), PSI2)
        chain = standard_chain(meter, theta)
        a = evaluate_lgi(spec_from_terms(chain, BASIC_TERMS), neg).value
        b = evaluate_lgi(spec_from_terms(chain, FIG4_TERMS), pos).value
        assert a == pytest.approx(b, abs=1e-12)
