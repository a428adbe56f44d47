"""
Dirichlet-multinomial conjugate machinery.

Counts over J categories are modelled as multinomial draws whose
category probabilities follow a Dirichlet distribution. A Dirichlet prior
updated with observed counts stays Dirichlet, with each concentration
parameter increased by the matching count.

All types are immutable: the numpy arrays they hold are made read-only
on construction.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import gammaln, xlogy

from dirimult.errors import ValidationError

logger = logging.getLogger(__name__)

SIMPLEX_TOLERANCE = 1e-12


def _frozen(values, dtype):
    array = np.array(values, dtype=dtype)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class Typology:
    labels: tuple

    def __post_init__(self):
        labels = tuple(self.labels)
        object.__setattr__(self, "labels", labels)
        if len(labels) < 2:
            raise ValidationError(
                "Degenerate typology.",
                f"A model needs at least 2 categories, got {len(labels)}.",
            )
        for label in labels:
            if not isinstance(label, str) or not label.strip():
                raise ValidationError(
                    "Invalid category label.", f"Got {label!r}.", labels=list(labels)
                )
        if len(set(labels)) != len(labels):
            raise ValidationError(
                "Duplicate category labels.", f"Got {list(labels)}."
            )

    @property
    def size(self):
        return len(self.labels)

    def __len__(self):
        return len(self.labels)


@dataclass(frozen=True, eq=False)
class CountVector:
    counts: np.ndarray
    n: int = field(init=False)

    def __post_init__(self):
        raw = np.asarray(self.counts)
        if raw.ndim != 1 or raw.size == 0:
            raise ValidationError("Counts must be a non-empty vector.", f"Got shape {raw.shape}.")
        if raw.dtype.kind == "f":
            if not np.all(np.isfinite(raw)) or np.any(raw != np.round(raw)):
                raise ValidationError("Counts must be integers.", f"Got {raw.tolist()}.")
        elif raw.dtype.kind not in "iu":
            raise ValidationError("Counts must be integers.", f"Got dtype {raw.dtype}.")
        counts = _frozen(raw, np.int64)
        if np.any(counts < 0):
            raise ValidationError("Counts must be non-negative.", f"Got {counts.tolist()}.")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "n", int(counts.sum()))

    def __len__(self):
        return self.counts.size

    def __add__(self, other):
        check_dimensions(len(self), len(other))
        return CountVector(self.counts + other.counts)

    def __eq__(self, other):
        if not isinstance(other, CountVector):
            return NotImplemented
        return np.array_equal(self.counts, other.counts)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class DirichletParams:
    alpha: np.ndarray
    alpha_plus: float = field(init=False)

    def __post_init__(self):
        alpha = _frozen(self.alpha, np.float64)
        if alpha.ndim != 1 or alpha.size < 2:
            raise ValidationError(
                "Concentration parameters must be a vector of length >= 2.",
                f"Got shape {alpha.shape}.",
            )
        if not np.all(np.isfinite(alpha)) or np.any(alpha <= 0):
            raise ValidationError(
                "Concentration parameters must be strictly positive.",
                f"Got {alpha.tolist()}.",
            )
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "alpha_plus", math.fsum(alpha))

    def __len__(self):
        return self.alpha.size

    def __eq__(self, other):
        if not isinstance(other, DirichletParams):
            return NotImplemented
        return np.array_equal(self.alpha, other.alpha)

    __hash__ = None


@dataclass(frozen=True)
class BetaMarginal:
    a: float
    b: float
    mean: float = field(init=False)
    variance: float = field(init=False)

    def __post_init__(self):
        a, b = float(self.a), float(self.b)
        if not (a > 0 and b > 0):
            raise ValidationError("Beta parameters must be positive.", f"Got a={a}, b={b}.")
        total = a + b
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "mean", a / total)
        object.__setattr__(self, "variance", a * b / (total * total * (total + 1.0)))


class PriorFamily(str, Enum):
    """Non-informative symmetric Dirichlet priors."""

    PERKS = "perks"
    JEFFREYS = "jeffreys"
    LAPLACE = "laplace"
    HALDANE = "haldane"

    def pseudocount(self, size):
        if self is PriorFamily.PERKS:
            return 1.0 / size
        if self is PriorFamily.JEFFREYS:
            return 0.5
        if self is PriorFamily.LAPLACE:
            return 1.0
        return 0.0

    def denominator(self, size):
        """Denominator that makes posterior parameters integer numerators."""
        if self is PriorFamily.PERKS:
            return size
        if self is PriorFamily.JEFFREYS:
            return 2
        return 1


def check_dimensions(expected, got):
    if expected != got:
        raise ValidationError(
            "Dimension mismatch.", f"Expected {expected} categories, got {got}."
        )


def _check_simplex(theta, size):
    theta = np.asarray(theta, dtype=np.float64)
    check_dimensions(size, theta.size)
    if not np.all(np.isfinite(theta)) or np.any(theta < 0):
        raise ValidationError("Probabilities must be non-negative.", f"Got {theta.tolist()}.")
    if abs(math.fsum(theta) - 1.0) > SIMPLEX_TOLERANCE:
        raise ValidationError(
            "Probabilities outside the simplex.",
            f"Sum is {math.fsum(theta)!r}, tolerance {SIMPLEX_TOLERANCE}.",
        )
    return theta


def make_prior(typology, family=PriorFamily.PERKS):
    family = PriorFamily(family)
    if family is PriorFamily.HALDANE:
        raise ValidationError(
            "Improper prior.",
            "The haldane prior has all parameters 0 and is only usable through "
            "posterior_from_counts.",
        )
    return DirichletParams(np.full(typology.size, family.pseudocount(typology.size)))


def perks_prior(typology):
    """Symmetric Dirichlet with every parameter exactly ``1/J``."""
    return make_prior(typology, PriorFamily.PERKS)


def posterior_update(prior, data):
    check_dimensions(len(prior), len(data))
    return DirichletParams(prior.alpha + data.counts)


def posterior_downdate(posterior, data):
    """Remove counts previously added by ``posterior_update``."""
    check_dimensions(len(posterior), len(data))
    alpha = posterior.alpha - data.counts
    if np.any(alpha <= 0):
        raise ValidationError(
            "Cannot remove counts.",
            f"Removing {data.counts.tolist()} leaves non-positive parameters.",
        )
    return DirichletParams(alpha)


def posterior_from_counts(typology, data, family=PriorFamily.PERKS):
    family = PriorFamily(family)
    check_dimensions(typology.size, len(data))
    alpha = family.pseudocount(typology.size) + data.counts
    if np.any(alpha <= 0):
        empty = [typology.labels[j] for j in np.flatnonzero(alpha <= 0)]
        raise ValidationError(
            "Improper posterior.",
            f"The {family.value} prior leaves categories {empty} without mass.",
        )
    return DirichletParams(alpha)


def log_multinomial_coefficient(counts):
    counts = np.asarray(counts)
    return float(gammaln(counts.sum() + 1) - gammaln(counts + 1).sum())


def _multinomial_log_kernel(theta, counts):
    # 0 * log 0 is 0; a positive count on a zero probability gives -inf.
    return xlogy(counts, theta).sum(axis=-1)


def log_multinomial_pmf(theta, data):
    theta = _check_simplex(theta, len(data))
    return log_multinomial_coefficient(data.counts) + float(
        _multinomial_log_kernel(theta, data.counts)
    )


def log_dirichlet_pdf(params, theta):
    theta = _check_simplex(theta, len(params))
    on_boundary = theta == 0
    if np.any(on_boundary & (params.alpha < 1)):
        raise ValidationError(
            "Density is infinite on this boundary.",
            f"theta={theta.tolist()} touches a face with alpha < 1.",
        )
    return float(
        gammaln(params.alpha_plus)
        - gammaln(params.alpha).sum()
        + xlogy(params.alpha - 1.0, theta).sum()
    )


def marginal_beta(params, j):
    """Marginal distribution of component ``j`` (zero-based).

    :param j: Category index, ``0 <= j < J``.
    """
    if not 0 <= j < len(params):
        raise ValidationError(
            "Category index out of range.", f"Got {j} for {len(params)} categories."
        )
    a = float(params.alpha[j])
    return BetaMarginal(a, params.alpha_plus - a)


def posterior_mean_table(posteriors):
    """Posterior means, one row per category and one column per class."""
    posteriors = list(posteriors)
    if not posteriors:
        raise ValidationError("Empty model.", "No class posteriors given.")
    size = len(posteriors[0])
    for params in posteriors:
        check_dimensions(size, len(params))
    return np.column_stack([params.alpha / params.alpha_plus for params in posteriors])
