"""
Goal:
  * Check the closed-form predictive against a Monte-Carlo oracle.
  * Leave-one-out cross-validation of a training corpus.
  * Exact enumeration of the predictive support for small totals.

Random numbers come from numpy's PCG64 generator (``default_rng``).
Child seeds for folds and oracle pairs are spawned from the master seed
by index, so threaded and sequential runs draw identical streams.
"""

import csv
import io
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, xlogy

from dirimult.classifier import (
    ClassPriorSource,
    FittedModel,
    classify_batch,
    empirical_class_prior,
    fit_model,
    log_predictive_likelihood,
    resolve_class_prior,
)
from dirimult.conjugate import (
    CountVector,
    PriorFamily,
    check_dimensions,
    log_multinomial_coefficient,
    posterior_downdate,
)
from dirimult.errors import ValidationError
from dirimult.threads import map_in_threads

logger = logging.getLogger(__name__)

MIN_ORACLE_SAMPLES = 10_000
ORACLE_CHUNK = 100_000
ORACLE_LOG_TOLERANCE = 1e-2
MAX_SEED = 2**64 - 1


@dataclass(frozen=True)
class OracleComparison:
    closed_form_log: float
    mc_log: float
    mc_stderr: float
    n_samples: int
    seed: int

    @property
    def difference(self):
        return abs(self.closed_form_log - self.mc_log)

    @property
    def tolerance(self):
        return max(ORACLE_LOG_TOLERANCE, 3.0 * self.mc_stderr)

    @property
    def passed(self):
        return self.difference <= self.tolerance


@dataclass(frozen=True)
class LooRecord:
    site_id: str
    true_class: str
    predicted_class: str
    probs: tuple


@dataclass(frozen=True)
class LooReport:
    class_labels: tuple
    records: tuple
    accuracy: float
    confusion: tuple
    mean_log_score: float

    def to_csv(self):
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(
            ["site_id", "true_class", "predicted_class"] + [f"P({label})" for label in self.class_labels]
        )
        for record in self.records:
            writer.writerow(
                [record.site_id, record.true_class, record.predicted_class]
                + [f"{p:.6f}" for p in record.probs]
            )
        return buffer.getvalue()

    def to_text(self):
        width = max(len(label) for label in self.class_labels + ("true\\pred",))
        lines = [
            f"Leave-one-out over {len(self.records)} records",
            f"  accuracy:       {self.accuracy:.4f}",
            f"  mean log score: {self.mean_log_score:.4f}",
            "  confusion (rows: true class, columns: predicted class)",
            "  " + "true\\pred".ljust(width) + "".join(f" {label:>{width}}" for label in self.class_labels),
        ]
        for label, row in zip(self.class_labels, self.confusion):
            lines.append("  " + label.ljust(width) + "".join(f" {count:>{width}}" for count in row))
        return "\n".join(lines) + "\n"


def check_seed(seed):
    """Seeds are unsigned 64-bit integers."""
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) or not 0 <= seed <= MAX_SEED:
        raise ValidationError("Invalid seed.", f"Seed must be an integer in [0, {MAX_SEED}], got {seed!r}.")
    return int(seed)


def sample_dirichlet(alpha, size, rng):
    """Draw ``size`` probability vectors from Dirichlet(``alpha``).

    Gamma variates come from ``Generator.standard_gamma`` (Marsaglia-Tsang
    for shape >= 1). Shapes below 1 are boosted: Gamma(a) is drawn as
    Gamma(a + 1) * U**(1/a), combined in log space so that tiny variates
    do not underflow before normalisation.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    boosted = alpha < 1.0
    shape = np.where(boosted, alpha + 1.0, alpha)
    log_gamma = np.log(rng.standard_gamma(shape, size=(size, alpha.size)))
    uniforms = rng.random((size, alpha.size))
    log_gamma = np.where(boosted, log_gamma + np.log(uniforms) / alpha, log_gamma)
    log_gamma -= log_gamma.max(axis=1, keepdims=True)
    weights = np.exp(log_gamma)
    return weights / weights.sum(axis=1, keepdims=True)


def mc_predictive_oracle(posterior, query, n_samples=ORACLE_CHUNK, seed=0):
    """Monte-Carlo estimate of the predictive probability of ``query``.

    Averages the multinomial probability of ``query`` over probability
    vectors drawn from ``posterior``. ``mc_stderr`` is the standard error
    of ``mc_log`` (delta method).
    """
    check_dimensions(len(posterior), len(query))
    if n_samples < MIN_ORACLE_SAMPLES:
        raise ValidationError(
            "Too few oracle samples.", f"Need at least {MIN_ORACLE_SAMPLES}, got {n_samples}."
        )
    rng = np.random.default_rng(check_seed(seed))
    coefficient = log_multinomial_coefficient(query.counts)
    chunks = []
    remaining = n_samples
    while remaining > 0:
        size = min(ORACLE_CHUNK, remaining)
        theta = sample_dirichlet(posterior.alpha, size, rng)
        chunks.append(np.exp(coefficient + xlogy(query.counts, theta).sum(axis=1)))
        remaining -= size
    values = np.concatenate(chunks)
    mean = float(values.mean())
    stderr = float(values.std(ddof=1)) / (mean * math.sqrt(n_samples))
    return OracleComparison(
        closed_form_log=log_predictive_likelihood(posterior, query),
        mc_log=math.log(mean),
        mc_stderr=stderr,
        n_samples=n_samples,
        seed=seed,
    )


def spawn_seeds(seed, count):
    return [int(child.generate_state(1)[0]) for child in np.random.SeedSequence(check_seed(seed)).spawn(count)]


def random_queries(size, n_queries=10, max_total=6, seed=0):
    """Random count vectors with totals drawn uniformly from 1..max_total."""
    rng = np.random.default_rng(check_seed(seed))
    queries = []
    for _ in range(n_queries):
        total = int(rng.integers(1, max_total + 1))
        queries.append(CountVector(rng.multinomial(total, np.full(size, 1.0 / size))))
    return queries


def oracle_suite(model, queries=None, n_queries=10, max_total=6, n_samples=ORACLE_CHUNK, seed=0, workers=1):
    """Compare closed form and oracle for every (class, query) pair.

    :param queries: Count vectors to check; random ones when omitted.
    :return: List of ``(class_label, query, OracleComparison)``.
    """
    if queries is None:
        queries = random_queries(model.typology.size, n_queries, max_total, seed)
    pairs = [(label, params, query) for query in queries for label, params in zip(model.class_labels, model.posteriors)]
    seeds = spawn_seeds(seed, len(pairs))

    def _compare(job):
        (label, params, query), pair_seed = job
        return label, query, mc_predictive_oracle(params, query, n_samples, pair_seed)

    results = map_in_threads(_compare, list(zip(pairs, seeds)), workers=workers)
    for label, query, comparison in results:
        if not comparison.passed:
            logger.warning(
                {
                    "message": "Oracle disagrees with the closed form.",
                    "reason": f"|diff|={comparison.difference:.3g} > {comparison.tolerance:.3g}.",
                    "class": label,
                    "query": query.counts.tolist(),
                }
            )
    return results


def oracle_report_csv(results):
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(
        ["class", "query", "closed_form_log", "mc_log", "mc_stderr", "n_samples", "seed", "passed"]
    )
    for label, query, comparison in results:
        writer.writerow(
            [
                label,
                " ".join(str(c) for c in query.counts),
                f"{comparison.closed_form_log:.8f}",
                f"{comparison.mc_log:.8f}",
                f"{comparison.mc_stderr:.3e}",
                comparison.n_samples,
                comparison.seed,
                comparison.passed,
            ]
        )
    return buffer.getvalue()


def iter_compositions(total, parts):
    """All ordered tuples of ``parts`` non-negative integers summing to ``total``."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in iter_compositions(total - first, parts - 1):
            yield (first,) + rest


def predictive_mass(posterior, total):
    """Total predictive probability over every count vector with this total."""
    log_values = [
        log_predictive_likelihood(posterior, CountVector(np.array(counts)))
        for counts in iter_compositions(total, len(posterior))
    ]
    return float(np.exp(logsumexp(log_values)))


def leave_one_out(corpus, prior_family=PriorFamily.PERKS, class_prior_source=ClassPriorSource.AUTO, explicit=None, workers=1):
    """Refit without each record in turn and classify it.

    Refitting removes the record's counts from its class posterior; when
    the class prior is empirical it is recomputed from the remaining
    records. A class left without records falls back to its prior, and
    its empirical class prior stays at the full-corpus proportion.
    """
    records = list(corpus.records)
    if len(records) < 2:
        raise ValidationError("Leave-one-out needs at least 2 records.", f"Got {len(records)}.")
    if len(set(corpus.labels())) < 2:
        raise ValidationError("Leave-one-out needs at least 2 classes present.", f"Got {sorted(set(corpus.labels()))}.")

    source = ClassPriorSource(class_prior_source)
    if explicit is None:
        explicit = corpus.class_prior
    empirical = source is ClassPriorSource.EMPIRICAL or (source is ClassPriorSource.AUTO and explicit is None)
    full = fit_model(
        corpus, prior_family, resolve_class_prior(source, corpus.classes, explicit, corpus.labels())
    )
    index = {label: i for i, label in enumerate(corpus.classes)}

    def _fold(position):
        record = records[position]
        i = index[record.class_label]
        posteriors = list(full.posteriors)
        posteriors[i] = posterior_downdate(posteriors[i], record.counts)
        prior = full.prior
        if empirical:
            remaining = [r.class_label for k, r in enumerate(records) if k != position]
            if record.class_label in remaining:
                prior = empirical_class_prior(remaining, corpus.classes)
            else:
                # The held-out class keeps its corpus share instead of prior 0.
                logger.debug(f"Fold '{record.site_id}' empties class '{record.class_label}'.")
        model = FittedModel(corpus.typology, corpus.classes, posteriors, prior, prior_family)
        result = classify_batch(model, [record.counts])[0]
        logger.debug(f"Fold '{record.site_id}': {result.probs.tolist()} -> {result.argmax}")
        return LooRecord(record.site_id, record.class_label, result.argmax, tuple(float(p) for p in result.probs))

    loo_records = map_in_threads(_fold, range(len(records)), workers=workers)

    confusion = np.zeros((len(corpus.classes), len(corpus.classes)), dtype=np.int64)
    log_scores = []
    for record in loo_records:
        confusion[index[record.true_class], index[record.predicted_class]] += 1
        with np.errstate(divide="ignore"):
            log_scores.append(float(np.log(record.probs[index[record.true_class]])))
    accuracy = float(np.trace(confusion)) / len(loo_records)

    return LooReport(
        class_labels=corpus.classes,
        records=tuple(loo_records),
        accuracy=accuracy,
        confusion=tuple(tuple(int(c) for c in row) for row in confusion),
        mean_log_score=float(np.mean(log_scores)),
    )

