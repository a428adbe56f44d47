import logging
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dirimult.classifier import (
    NO_EVIDENCE,
    ClassPrior,
    ClassPriorSource,
    FittedModel,
    _check_probabilities,
    classify,
    classify_batch,
    empirical_class_prior,
    explicit_class_prior,
    fit_model,
    log_predictive_likelihood,
    normalize_log_weights,
    resolve_class_prior,
    uniform_class_prior,
)
from dirimult.conjugate import (
    CountVector,
    DirichletParams,
    PriorFamily,
    Typology,
    log_multinomial_coefficient,
    perks_prior,
    posterior_update,
)
from dirimult.dataset import load_fixture, parse_query_csv
from dirimult.errors import InvariantViolation, NoEvidenceError, ValidationError
from tests.golden import DEMO_CLASSIFICATION, PERIOD_PRIOR, PERIODS, POSTERIOR_NUMERATORS, published_posterior

SEVEN = Typology([f"t{j}" for j in range(1, 8)])

small_queries = st.lists(st.integers(min_value=0, max_value=4), min_size=7, max_size=7).filter(lambda c: sum(c) > 0)


def single(j, size=7):
    counts = np.zeros(size, dtype=np.int64)
    counts[j] = 1
    return CountVector(counts)


def test_single_arrow_reduces_to_posterior_mean():
    for label in PERIODS:
        params = published_posterior(label)
        for j in range(7):
            expected = POSTERIOR_NUMERATORS[label][j] / sum(POSTERIOR_NUMERATORS[label])
            assert math.exp(log_predictive_likelihood(params, single(j))) == pytest.approx(expected, abs=1e-12)


def test_single_type_seven_arrow_under_period_five():
    value = math.exp(log_predictive_likelihood(published_posterior("P5"), single(6)))
    assert round(value, 4) == 0.5714


def test_perks_two_types_one_each():
    params = perks_prior(Typology(["a", "b"]))
    assert math.exp(log_predictive_likelihood(params, CountVector([1, 1]))) == pytest.approx(0.25, abs=1e-15)


def test_predictive_rejects_empty_query():
    with pytest.raises(NoEvidenceError):
        log_predictive_likelihood(published_posterior("P1"), CountVector(np.zeros(7, dtype=int)))


def test_predictive_dimension_mismatch():
    with pytest.raises(ValidationError):
        log_predictive_likelihood(published_posterior("P1"), CountVector([1, 2]))


@given(small_queries, small_queries)
@settings(max_examples=50)
def test_predictive_chain_rule(y, z):
    params = published_posterior("P3")
    y, z = CountVector(y), CountVector(z)
    left = (
        log_predictive_likelihood(params, y)
        + log_predictive_likelihood(posterior_update(params, y), z)
        - log_predictive_likelihood(params, y + z)
    )
    right = (
        log_multinomial_coefficient(y.counts)
        + log_multinomial_coefficient(z.counts)
        - log_multinomial_coefficient((y + z).counts)
    )
    assert left == pytest.approx(right, abs=1e-9)


@given(small_queries)
def test_more_type_seven_arrows_favour_period_five(counts):
    before = CountVector(counts)
    after = before + single(6)
    p5, p2 = published_posterior("P5"), published_posterior("P2")
    ratio_before = log_predictive_likelihood(p5, before) - log_predictive_likelihood(p2, before)
    ratio_after = log_predictive_likelihood(p5, after) - log_predictive_likelihood(p2, after)
    assert ratio_after > ratio_before


@given(small_queries)
def test_more_type_two_arrows_favour_period_one(counts):
    before = CountVector(counts)
    after = before + single(1)
    p1, p3 = published_posterior("P1"), published_posterior("P3")
    assert log_predictive_likelihood(p1, after) - log_predictive_likelihood(p3, after) > (
        log_predictive_likelihood(p1, before) - log_predictive_likelihood(p3, before)
    )


def test_predictive_is_stable_for_large_counts():
    params = published_posterior("P3")
    value = log_predictive_likelihood(params, CountVector([10**6, 0, 0, 0, 0, 0, 10**6]))
    assert math.isfinite(value)
    assert value < 0


def test_uniform_class_prior():
    np.testing.assert_array_equal(uniform_class_prior(["a", "b", "c", "d"]).probs, np.full(4, 0.25))


def test_empirical_prior_two_classes():
    np.testing.assert_allclose(empirical_class_prior(["A", "A", "B", "B"], ("A", "B")).probs, [0.5, 0.5])


def test_empirical_prior_twenty_sites():
    labels = ["P1"] * 3 + ["P2"] * 4 + ["P3"] * 7 + ["P4"] * 3 + ["P5"] * 3
    np.testing.assert_allclose(empirical_class_prior(labels, PERIODS).probs, PERIOD_PRIOR, atol=1e-15)


def test_empirical_prior_rejects_unknown_label():
    with pytest.raises(ValidationError):
        empirical_class_prior(["P1", "P9"], PERIODS)


def test_empirical_prior_single_class_warns_in_classify(period_model, caplog):
    prior = empirical_class_prior(["P3", "P3"], PERIODS)
    np.testing.assert_array_equal(prior.probs, [0.0, 0.0, 1.0, 0.0, 0.0])
    model = FittedModel(period_model.typology, PERIODS, period_model.posteriors, prior)
    with caplog.at_level(logging.WARNING, logger="dirimult"):
        result = classify(model, single(0))
    assert "prior 0" in caplog.text
    assert result.argmax == "P3"
    np.testing.assert_array_equal(result.probs, [0.0, 0.0, 1.0, 0.0, 0.0])


def test_explicit_prior_must_sum_to_one():
    with pytest.raises(ValidationError):
        explicit_class_prior([0.5, 0.6], ("a", "b"))
    with pytest.raises(ValidationError):
        explicit_class_prior([0.5, 0.5], ("a", "b", "c"))


def test_class_prior_rejects_values_outside_unit_interval():
    with pytest.raises(ValidationError):
        ClassPrior([1.5, -0.5])


@pytest.mark.parametrize(
    "source, explicit, labels, expected",
    [
        (ClassPriorSource.AUTO, (0.25, 0.75), ["a"], [0.25, 0.75]),
        (ClassPriorSource.AUTO, None, ["a", "a", "a", "b"], [0.75, 0.25]),
        (ClassPriorSource.AUTO, None, None, [0.5, 0.5]),
        (ClassPriorSource.UNIFORM, (0.25, 0.75), ["a"], [0.5, 0.5]),
        (ClassPriorSource.EMPIRICAL, (0.25, 0.75), ["a", "b", "b", "b"], [0.25, 0.75]),
        (ClassPriorSource.EXPLICIT, (0.1, 0.9), None, [0.1, 0.9]),
    ],
)
def test_resolve_class_prior(source, explicit, labels, expected):
    np.testing.assert_allclose(resolve_class_prior(source, ("a", "b"), explicit, labels).probs, expected)


def test_resolve_explicit_without_values():
    with pytest.raises(ValidationError):
        resolve_class_prior(ClassPriorSource.EXPLICIT, ("a", "b"))


def test_fit_model_uses_pooled_counts(period_model):
    assert period_model.class_labels == PERIODS
    assert period_model.prior_family is PriorFamily.PERKS
    np.testing.assert_allclose(period_model.prior.probs, PERIOD_PRIOR)


def test_fit_model_defaults_to_empirical_prior(synthetic_corpus):
    model = fit_model(synthetic_corpus)
    np.testing.assert_allclose(model.prior.probs, np.full(5, 0.2))


def test_classify_single_type_seven_arrow(period_model):
    result = classify(period_model, single(6))
    means = np.array([float(Fraction(POSTERIOR_NUMERATORS[label][6], sum(POSTERIOR_NUMERATORS[label]))) for label in PERIODS])
    expected = means * np.array(PERIOD_PRIOR)
    expected /= expected.sum()
    np.testing.assert_allclose(result.probs, expected, rtol=0, atol=1e-10)
    np.testing.assert_allclose(result.probs, [0.0120, 0.0086, 0.3861, 0.2577, 0.3356], atol=5e-5)
    assert result.argmax == "P3"
    assert result.flag is None


def test_classify_identical_posteriors_uniform_prior():
    posterior = published_posterior("P4")
    model = FittedModel(SEVEN, ("a", "b", "c"), [posterior] * 3, uniform_class_prior("abc"))
    result = classify(model, CountVector([1, 0, 2, 0, 0, 0, 3]))
    np.testing.assert_allclose(result.probs, np.full(3, 1 / 3), atol=1e-15)
    assert result.argmax == "a"


@given(small_queries, st.floats(min_value=-50, max_value=50))
def test_normalization_is_shift_invariant(counts, shift):
    params = [published_posterior(label) for label in PERIODS]
    query = CountVector(counts)
    weights = np.array([log_predictive_likelihood(p, query) for p in params]) + np.log(PERIOD_PRIOR)
    np.testing.assert_allclose(normalize_log_weights(weights), normalize_log_weights(weights + shift), atol=1e-12)


@given(counts=small_queries)
def test_classify_probabilities_sum_to_one(period_model, counts):
    result = classify(period_model, CountVector(counts))
    assert math.fsum(result.probs) == pytest.approx(1.0, abs=1e-12)
    assert np.all(result.probs >= 0)
    np.testing.assert_allclose(result.log_unnormalized, result.log_likelihoods + period_model.prior.log_probs)


def test_normalize_all_excluded():
    with pytest.raises(ValidationError):
        normalize_log_weights([-np.inf, -np.inf])


def test_probability_check_raises_invariant_violation():
    with pytest.raises(InvariantViolation) as info:
        _check_probabilities(np.array([0.5, 0.6]))
    assert info.value.exit_code == 2


def test_classify_rejects_empty_query(period_model):
    with pytest.raises(NoEvidenceError):
        classify(period_model, CountVector(np.zeros(7, dtype=int)))


def test_classify_batch_empty(period_model):
    assert classify_batch(period_model, []) == []


def test_classify_batch_single_matches_classify(period_model):
    query = CountVector([1, 0, 0, 2, 0, 0, 3])
    [result] = classify_batch(period_model, [query])
    np.testing.assert_array_equal(result.probs, classify(period_model, query).probs)


def test_classify_batch_flags_empty_queries(period_model):
    results = classify_batch(period_model, [CountVector(np.zeros(7, dtype=int)), single(6)])
    assert results[0].flag == NO_EVIDENCE
    np.testing.assert_array_equal(results[0].probs, period_model.prior.probs)
    assert results[1].flag is None


def test_classify_batch_rejects_dimension_mismatch(period_model):
    with pytest.raises(ValidationError):
        classify_batch(period_model, [single(0), CountVector([1, 1])])


def test_classify_batch_demo_corpus(period_model):
    queries = parse_query_csv(load_fixture("demo_queries.csv"))
    results = classify_batch(period_model, [q.counts for q in queries])
    assert [q.site_id for q in queries] == list(DEMO_CLASSIFICATION)
    for query, result in zip(queries, results):
        probs, argmax = DEMO_CLASSIFICATION[query.site_id]
        assert math.fsum(result.probs) == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(result.probs, probs, atol=5.01e-5)
        assert result.argmax == argmax


def test_classify_batch_threads_keep_order(period_model):
    queries = [q.counts for q in parse_query_csv(load_fixture("demo_queries.csv"))]
    sequential = classify_batch(period_model, queries)
    threaded = classify_batch(period_model, queries, workers=4)
    for a, b in zip(sequential, threaded):
        np.testing.assert_array_equal(a.probs, b.probs)


def test_own_counts_score_highest_on_synthetic_corpus(synthetic_corpus):
    model = fit_model(synthetic_corpus, class_prior=uniform_class_prior(synthetic_corpus.classes))
    for i, totals in enumerate(synthetic_corpus.class_totals()):
        result = classify(model, CountVector(totals))
        assert int(np.argmax(result.log_likelihoods)) == i


def test_fitted_model_validates_shapes():
    with pytest.raises(ValidationError):
        FittedModel(SEVEN, ("a", "b"), [perks_prior(SEVEN)], uniform_class_prior("ab"))
    with pytest.raises(ValidationError):
        FittedModel(SEVEN, ("a", "a"), [perks_prior(SEVEN)] * 2, uniform_class_prior("ab"))
    with pytest.raises(ValidationError):
        FittedModel(SEVEN, ("a", "b"), [perks_prior(SEVEN), DirichletParams([1.0, 1.0])], uniform_class_prior("ab"))


@given(small_queries, st.permutations(range(7)))
def test_predictive_is_permutation_equivariant(counts, order):
    params = published_posterior("P4")
    order = list(order)
    permuted = DirichletParams(params.alpha[order])
    query = CountVector(counts)
    assert log_predictive_likelihood(permuted, CountVector(query.counts[order])) == pytest.approx(
        log_predictive_likelihood(params, query), abs=1e-10
    )


@given(queries=st.lists(small_queries, max_size=6))
@settings(max_examples=25)
def test_batch_matches_one_by_one(period_model, queries):
    queries = [CountVector(q) for q in queries]
    batch = classify_batch(period_model, queries, workers=3)
    assert len(batch) == len(queries)
    for query, result in zip(queries, batch):
        np.testing.assert_array_equal(result.probs, classify(period_model, query).probs)
