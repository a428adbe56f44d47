"""
Posterior predictive classification.

Each class owns a Dirichlet posterior over category probabilities. A new
count vector is scored under each class by its Dirichlet-multinomial
(Polya) probability, combined with the class prior and normalised with
log-sum-exp.
"""

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
from scipy.special import gammaln, logsumexp

from dirimult.conjugate import (
    CountVector,
    PriorFamily,
    Typology,
    check_dimensions,
    log_multinomial_coefficient,
    posterior_from_counts,
)
from dirimult.errors import InvariantViolation, NoEvidenceError, ValidationError
from dirimult.threads import map_in_threads

logger = logging.getLogger(__name__)

PROBABILITY_TOLERANCE = 1e-12
EXPLICIT_PRIOR_TOLERANCE = 1e-9
NO_EVIDENCE = "no_evidence"


class ClassPriorSource(str, Enum):
    AUTO = "auto"
    EXPLICIT = "explicit"
    EMPIRICAL = "empirical"
    UNIFORM = "uniform"


@dataclass(frozen=True, eq=False)
class ClassPrior:
    probs: np.ndarray

    def __post_init__(self):
        probs = np.array(self.probs, dtype=np.float64)
        if probs.ndim != 1 or probs.size == 0:
            raise ValidationError("Class prior must be a non-empty vector.", f"Got {probs!r}.")
        if not np.all(np.isfinite(probs)) or np.any(probs < 0) or np.any(probs > 1):
            raise ValidationError("Class prior outside [0, 1].", f"Got {probs.tolist()}.")
        if abs(math.fsum(probs) - 1.0) > PROBABILITY_TOLERANCE:
            raise ValidationError(
                "Class prior does not sum to 1.", f"Sum is {math.fsum(probs)!r}."
            )
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @property
    def log_probs(self):
        with np.errstate(divide="ignore"):
            return np.log(self.probs)

    def __len__(self):
        return self.probs.size

    def __eq__(self, other):
        if not isinstance(other, ClassPrior):
            return NotImplemented
        return np.array_equal(self.probs, other.probs)

    __hash__ = None


@dataclass(frozen=True)
class FittedModel:
    typology: Typology
    class_labels: tuple
    posteriors: tuple
    prior: ClassPrior
    prior_family: PriorFamily = PriorFamily.PERKS

    def __post_init__(self):
        labels = tuple(self.class_labels)
        posteriors = tuple(self.posteriors)
        object.__setattr__(self, "class_labels", labels)
        object.__setattr__(self, "posteriors", posteriors)
        object.__setattr__(self, "prior_family", PriorFamily(self.prior_family))
        if len(labels) < 2:
            raise ValidationError("A model needs at least 2 classes.", f"Got {list(labels)}.")
        if len(set(labels)) != len(labels) or not all(labels):
            raise ValidationError("Class labels must be unique and non-empty.", f"Got {list(labels)}.")
        if len(posteriors) != len(labels) or len(self.prior) != len(labels):
            raise ValidationError(
                "Inconsistent model.",
                f"{len(labels)} classes, {len(posteriors)} posteriors, "
                f"{len(self.prior)} prior values.",
            )
        for params in posteriors:
            check_dimensions(self.typology.size, len(params))


@dataclass(frozen=True, eq=False)
class Classification:
    class_labels: tuple
    log_likelihoods: np.ndarray
    log_unnormalized: np.ndarray
    probs: np.ndarray
    argmax: str = field(init=False)
    flag: Optional[str] = None

    def __post_init__(self):
        for name in ("log_likelihoods", "log_unnormalized", "probs"):
            array = np.array(getattr(self, name), dtype=np.float64)
            array.setflags(write=False)
            object.__setattr__(self, name, array)
        # np.argmax returns the first maximum, so ties go to declared class order.
        object.__setattr__(self, "argmax", self.class_labels[int(np.argmax(self.probs))])


def uniform_class_prior(classes):
    return ClassPrior(np.full(len(classes), 1.0 / len(classes)))


def empirical_class_prior(training_site_labels, classes):
    """Proportion of training sites carrying each class label."""
    labels = list(training_site_labels)
    if not labels:
        raise ValidationError("Empty label list.", "Cannot estimate a class prior from no sites.")
    unknown = sorted(set(labels) - set(classes))
    if unknown:
        raise ValidationError("Unknown class label.", f"Labels {unknown} are not in {list(classes)}.")
    tally = Counter(labels)
    probs = np.array([tally[label] for label in classes], dtype=np.float64) / len(labels)
    return ClassPrior(probs)


def explicit_class_prior(values, classes):
    values = np.asarray(values, dtype=np.float64)
    if values.size != len(classes):
        raise ValidationError(
            "Explicit prior does not match the classes.",
            f"Got {values.size} values for {len(classes)} classes.",
        )
    total = math.fsum(values)
    if np.any(values < 0) or abs(total - 1.0) > EXPLICIT_PRIOR_TOLERANCE:
        raise ValidationError(
            "Explicit prior must be non-negative and sum to 1.",
            f"Got {values.tolist()} (sum {total!r}).",
        )
    return ClassPrior(values / total)


def resolve_class_prior(source, classes, explicit=None, labels=None):
    """Pick the class prior by precedence: explicit > empirical > uniform.

    :param source: A ``ClassPriorSource``; ``auto`` applies the precedence.
    :param explicit: Explicit prior values, if any were configured.
    :param labels: Class labels of the training sites, if known.
    """
    source = ClassPriorSource(source)
    if source is ClassPriorSource.EXPLICIT:
        if explicit is None:
            raise ValidationError("No explicit class prior given.", "Pass --explicit-prior.")
        return explicit_class_prior(explicit, classes)
    if source is ClassPriorSource.EMPIRICAL:
        return empirical_class_prior(labels or [], classes)
    if source is ClassPriorSource.UNIFORM:
        return uniform_class_prior(classes)
    if explicit is not None:
        return explicit_class_prior(explicit, classes)
    if labels:
        return empirical_class_prior(labels, classes)
    return uniform_class_prior(classes)


def fit_model(corpus, prior_family=PriorFamily.PERKS, class_prior=None):
    """Per-class posteriors from pooled class counts.

    :param class_prior: A ``ClassPrior``; empirical over the corpus records when omitted.
    """
    totals = corpus.class_totals()
    posteriors = [
        posterior_from_counts(corpus.typology, CountVector(totals[i]), prior_family)
        for i in range(len(corpus.classes))
    ]
    if class_prior is None:
        class_prior = empirical_class_prior(
            [record.class_label for record in corpus.records], corpus.classes
        )
    for label, params in zip(corpus.classes, posteriors):
        logger.debug(f"Posterior for '{label}': {params.alpha.tolist()}")
    return FittedModel(
        typology=corpus.typology,
        class_labels=corpus.classes,
        posteriors=posteriors,
        prior=class_prior,
        prior_family=prior_family,
    )


def log_predictive_likelihood(posterior, query):
    check_dimensions(len(posterior), len(query))
    if query.n < 1:
        raise NoEvidenceError("Zero-total query.", "A query without counts carries no evidence.")
    alpha = posterior.alpha
    return (
        log_multinomial_coefficient(query.counts)
        + float(gammaln(posterior.alpha_plus) - gammaln(posterior.alpha_plus + query.n))
        + float((gammaln(alpha + query.counts) - gammaln(alpha)).sum())
    )


def normalize_log_weights(log_weights):
    log_weights = np.asarray(log_weights, dtype=np.float64)
    if np.all(np.isneginf(log_weights)):
        raise ValidationError("No class can be selected.", "Every class has prior 0.")
    return np.exp(log_weights - logsumexp(log_weights))


def _check_probabilities(probs):
    total = math.fsum(probs)
    if abs(total - 1.0) > PROBABILITY_TOLERANCE:
        raise InvariantViolation(
            "Class probabilities do not sum to 1.", f"Sum is {total!r}."
        )


def classify(model, query):
    check_dimensions(model.typology.size, len(query))
    if query.n < 1:
        raise NoEvidenceError("Zero-total query.", "A query without counts carries no evidence.")
    log_prior = model.prior.log_probs
    if np.any(np.isneginf(log_prior)):
        excluded = [label for label, lp in zip(model.class_labels, log_prior) if np.isneginf(lp)]
        logger.warning(f"Classes {excluded} have prior 0 and are excluded.")
    log_likelihoods = np.array(
        [log_predictive_likelihood(params, query) for params in model.posteriors]
    )
    log_unnormalized = log_likelihoods + log_prior
    probs = normalize_log_weights(log_unnormalized)
    _check_probabilities(probs)
    logger.debug(f"Query {query.counts.tolist()}: log weights {log_unnormalized.tolist()}")
    return Classification(model.class_labels, log_likelihoods, log_unnormalized, probs)


def no_evidence_classification(model):
    """Record for an empty query: the posterior equals the class prior."""
    return Classification(
        model.class_labels,
        np.zeros(len(model.class_labels)),
        model.prior.log_probs,
        model.prior.probs,
        flag=NO_EVIDENCE,
    )


def classify_batch(model, queries, workers=1):
    """Classify every query, keeping input order.

    Zero-total queries yield a record flagged ``no_evidence`` instead of
    aborting the batch.
    """
    queries = list(queries)
    for query in queries:
        check_dimensions(model.typology.size, len(query))

    def _classify_one(query):
        try:
            return classify(model, query)
        except NoEvidenceError as e:
            logger.info(e.as_dict())
            return no_evidence_classification(model)

    return map_in_threads(_classify_one, queries, workers=workers)
