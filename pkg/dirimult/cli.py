"""
Goal:
  * Train, classify, plot and evaluate from the command line.

How to:
  * Get help
    - python -m dirimult -h
    - python -m dirimult train -h
  * Train on the bundled period counts and print the posterior table
    - python -m dirimult train dirimult/fixtures/period_counts.csv --out model.json
  * Classify the bundled synthetic query sites
    - python -m dirimult classify model.json dirimult/fixtures/demo_queries.csv
    - add --plot classes.svg for a bar chart of the class probabilities
  * Write figures
    - python -m dirimult plot model.json --out figures
  * Leave-one-out and oracle reports
    - python -m dirimult eval dirimult/fixtures/synthetic_sites.csv --seed 7 --out reports
  * The seed can be given as environment variable DIRIMULT_SEED.
  * If set both ways, the --seed argument has precedence.

Exit codes: 0 success, 1 validation error, 2 internal invariant violation.
"""

import csv
import io
import logging
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

from dirimult import arguments, environment_variables
from dirimult.classifier import (
    EXPLICIT_PRIOR_TOLERANCE,
    ClassPriorSource,
    classify_batch,
    explicit_class_prior,
    fit_model,
    resolve_class_prior,
    uniform_class_prior,
)
from dirimult.conjugate import PriorFamily, posterior_mean_table
from dirimult.dataset import (
    format_alpha,
    parse_model,
    parse_query_csv,
    parse_site_roster,
    parse_training_csv,
    serialize_model,
)
from dirimult.errors import DirimultError, ValidationError
from dirimult.evaluation import check_seed, leave_one_out, oracle_report_csv, oracle_suite, predictive_mass
from dirimult.plots import (
    render_classification_svg,
    render_marginals_svg,
    render_posterior_means_svg,
    write_svg,
)

logger = logging.getLogger(__name__)

DEFAULT_SEED = 0
DISPLAY_DECIMALS = 4
MASS_CHECK_TOTAL = 3


@dataclass(frozen=True)
class RunConfig:
    command: str
    inputs: tuple
    out: Optional[str] = None
    prior_family: PriorFamily = PriorFamily.PERKS
    class_prior_source: ClassPriorSource = ClassPriorSource.AUTO
    explicit_prior: Optional[tuple] = None
    seed: int = DEFAULT_SEED
    workers: int = 1
    full_precision: bool = False
    plot_means: bool = True
    plot_marginals: bool = True
    roster: Optional[str] = None
    oracle_samples: int = 100_000
    oracle_queries: int = 10
    queries: Optional[str] = None
    plot: Optional[str] = None

    def __post_init__(self):
        if self.explicit_prior is not None:
            values = self.explicit_prior
            if abs(sum(values) - 1.0) > EXPLICIT_PRIOR_TOLERANCE or any(v < 0 for v in values):
                raise ValidationError(
                    "Invalid explicit prior.", f"Values {list(values)} must be non-negative and sum to 1."
                )
        if self.workers < 1:
            raise ValidationError("Invalid worker count.", f"Got {self.workers}.")
        check_seed(self.seed)


def _choice(value, fallback, enum, default, flag):
    chosen = value if value is not None else fallback
    try:
        return enum(chosen) if chosen is not None else default
    except ValueError:
        raise ValidationError(f"Invalid {flag}.", f"Got {chosen!r}.")


def _integer(value, fallback, default, flag):
    if value is not None:
        return value
    if fallback is None:
        return default
    try:
        return int(fallback)
    except ValueError:
        raise ValidationError(f"Invalid {flag}.", f"Got {fallback!r}.")


def run_config_from_args(args):
    """Combine arguments, environment variables and defaults, in that order."""
    inputs = {
        "train": lambda: (args.training_csv,),
        "classify": lambda: (args.model, args.query_csv),
        "plot": lambda: (args.model,),
        "eval": lambda: (args.training_csv,),
    }[args.command]()

    explicit = getattr(args, "explicit_prior", None)
    if explicit is not None:
        try:
            explicit = tuple(float(v) for v in explicit.split(","))
        except ValueError:
            raise ValidationError("Invalid explicit prior.", f"Got {explicit!r}.")

    return RunConfig(
        command=args.command,
        inputs=inputs,
        out=args.out,
        prior_family=_choice(
            getattr(args, "prior", None), environment_variables.PRIOR_FAMILY, PriorFamily, PriorFamily.PERKS, "prior"
        ),
        class_prior_source=_choice(
            getattr(args, "class_prior", None),
            environment_variables.CLASS_PRIOR_SOURCE,
            ClassPriorSource,
            ClassPriorSource.AUTO,
            "class prior source",
        ),
        explicit_prior=explicit,
        seed=_integer(getattr(args, "seed", None), environment_variables.SEED, DEFAULT_SEED, "seed"),
        workers=_integer(getattr(args, "workers", None), environment_variables.WORKERS, 1, "worker count"),
        full_precision=getattr(args, "full_precision", False),
        plot_means=not getattr(args, "no_means", False),
        plot_marginals=not getattr(args, "no_marginals", False),
        roster=getattr(args, "roster", None),
        oracle_samples=getattr(args, "oracle_samples", 100_000),
        oracle_queries=getattr(args, "oracle_queries", 10),
        queries=getattr(args, "queries", None),
        plot=getattr(args, "plot", None),
    )


def _read(path):
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise ValidationError("Cannot read input.", str(e), path=str(path))


def _write(path, text):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(text if isinstance(text, bytes) else text.encode("utf-8"))
    except OSError as e:
        raise ValidationError("Cannot write output.", str(e), path=str(path))
    logger.info(f"Wrote {path}.")


def format_summary(model):
    """Posterior parameters per class and the posterior mean table."""
    denominator = model.prior_family.denominator(model.typology.size)
    lines = ["Posterior Dirichlet parameters"]
    for label, params in zip(model.class_labels, model.posteriors):
        alphas = ", ".join(format_alpha(float(a), denominator) for a in params.alpha)
        lines.append(f"  {label}: Dir({alphas})")

    table = posterior_mean_table(model.posteriors)
    width = max(8, max(len(label) for label in model.class_labels + model.typology.labels))
    lines.append("")
    lines.append("Posterior mean per category")
    lines.append("  " + "type".ljust(width) + "".join(f" {label:>{width}}" for label in model.class_labels))
    for j, label in enumerate(model.typology.labels):
        lines.append(
            "  " + label.ljust(width) + "".join(f" {table[j, i]:>{width}.{DISPLAY_DECIMALS}f}" for i in range(table.shape[1]))
        )
    lines.append("")
    lines.append(
        "Class prior: " + ", ".join(f"{label}={p:.{DISPLAY_DECIMALS}f}" for label, p in zip(model.class_labels, model.prior.probs))
    )
    return "\n".join(lines) + "\n"


def cmd_train(config):
    path = config.inputs[0]
    corpus = parse_training_csv(_read(path), source=str(path))
    labels = corpus.labels()
    if config.roster:
        labels = [label for _, label in parse_site_roster(_read(config.roster), source=config.roster)]
    explicit = config.explicit_prior if config.explicit_prior is not None else corpus.class_prior
    class_prior = resolve_class_prior(config.class_prior_source, corpus.classes, explicit, labels)
    model = fit_model(corpus, config.prior_family, class_prior)
    logger.info(f"Fitted {len(model.class_labels)} classes over {model.typology.size} categories.")

    _write(config.out, serialize_model(model))
    summary = format_summary(model)
    print(summary, end="")
    return model


def classification_csv(queries, results, full_precision=False):
    if not queries:
        return ""
    labels = results[0].class_labels
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["site_id"] + [f"P({label})" for label in labels] + ["argmax", "flag"])
    for query, result in zip(queries, results):
        probs = [repr(float(p)) if full_precision else f"{p:.{DISPLAY_DECIMALS}f}" for p in result.probs]
        writer.writerow([query.site_id] + probs + [result.argmax, result.flag or ""])
    return buffer.getvalue()


def cmd_classify(config):
    model_path, query_path = config.inputs
    model = parse_model(_read(model_path), source=str(model_path))
    queries = parse_query_csv(_read(query_path), source=str(query_path))
    if queries and queries[0].typology != model.typology:
        raise ValidationError(
            "Typology mismatch.",
            f"Model has {list(model.typology.labels)}, queries have {list(queries[0].typology.labels)}.",
            path=str(query_path),
        )

    if config.class_prior_source is ClassPriorSource.UNIFORM:
        model = replace(model, prior=uniform_class_prior(model.class_labels))
    elif config.explicit_prior is not None or config.class_prior_source is ClassPriorSource.EXPLICIT:
        if config.explicit_prior is None:
            raise ValidationError("No explicit class prior given.", "Pass --explicit-prior.")
        model = replace(model, prior=explicit_class_prior(config.explicit_prior, model.class_labels))
    elif config.class_prior_source is ClassPriorSource.EMPIRICAL:
        logger.warning("The empirical class prior is fixed at training time; using the model's prior.")

    results = classify_batch(model, [query.counts for query in queries], workers=config.workers)
    flagged = sum(1 for result in results if result.flag)
    logger.info(f"Classified {len(results)} sites ({flagged} flagged).")

    output = classification_csv(queries, results, config.full_precision)
    if config.out:
        _write(config.out, output)
    else:
        print(output, end="")
    if config.plot:
        if results:
            write_svg(config.plot, render_classification_svg([query.site_id for query in queries], results))
        else:
            logger.warning("No sites to plot.")
    return results


def cmd_plot(config):
    model = parse_model(_read(config.inputs[0]), source=str(config.inputs[0]))
    out = Path(config.out or ".")
    written = []
    if config.plot_means:
        written.append(write_svg(out / "posterior_means.svg", render_posterior_means_svg(model)))
    if config.plot_marginals:
        written.append(write_svg(out / "marginals.svg", render_marginals_svg(model)))
    return written


def format_eval_report(loo, oracle_results, masses):
    passed = sum(1 for _, _, comparison in oracle_results if comparison.passed)
    lines = [loo.to_text()]
    lines.append(f"Monte-Carlo oracle: {passed}/{len(oracle_results)} (class, query) pairs agree")
    lines.append(f"Predictive mass over all count vectors with total {MASS_CHECK_TOTAL}:")
    for label, mass in masses:
        lines.append(f"  {label}: {mass:.12f}")
    return "\n".join(lines) + "\n"


def cmd_eval(config):
    path = config.inputs[0]
    corpus = parse_training_csv(_read(path), source=str(path))
    explicit = config.explicit_prior if config.explicit_prior is not None else corpus.class_prior
    loo = leave_one_out(corpus, config.prior_family, config.class_prior_source, explicit, workers=config.workers)

    model = fit_model(
        corpus,
        config.prior_family,
        resolve_class_prior(config.class_prior_source, corpus.classes, explicit, corpus.labels()),
    )
    queries = None
    if config.queries:
        queries = [q.counts for q in parse_query_csv(_read(config.queries), source=config.queries) if q.counts.n > 0]
    oracle_results = oracle_suite(
        model,
        queries=queries,
        n_queries=config.oracle_queries,
        n_samples=config.oracle_samples,
        seed=config.seed,
        workers=config.workers,
    )
    masses = [(label, predictive_mass(params, MASS_CHECK_TOTAL)) for label, params in zip(model.class_labels, model.posteriors)]

    report = format_eval_report(loo, oracle_results, masses)
    print(report, end="")
    if config.out:
        out = Path(config.out)
        _write(out / "loo_report.csv", loo.to_csv())
        _write(out / "oracle_report.csv", oracle_report_csv(oracle_results))
        _write(out / "eval_report.txt", report)
    return loo, oracle_results


COMMANDS = {
    "train": cmd_train,
    "classify": cmd_classify,
    "plot": cmd_plot,
    "eval": cmd_eval,
}


def main(argv=None):
    logging.basicConfig()
    package_logger = logging.getLogger("dirimult")

    parser = arguments.get_cli_arguments()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 1

    if args.debug:
        package_logger.setLevel(logging.DEBUG)
    else:
        package_logger.setLevel(logging.INFO)

    try:
        config = run_config_from_args(args)
        COMMANDS[config.command](config)
    except DirimultError as e:
        logger.error(e.as_dict())
        return e.exit_code
    except OSError as e:
        logger.error({"message": "I/O error.", "reason": str(e)})
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
