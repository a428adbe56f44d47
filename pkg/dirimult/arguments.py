import argparse

from dirimult._version import __version__
from dirimult.classifier import ClassPriorSource
from dirimult.conjugate import PriorFamily


def _model_options():
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument(
        "--prior",
        choices=[family.value for family in PriorFamily],
        default=None,
        help="Dirichlet prior family. If not given, DIRIMULT_PRIOR or 'perks'.",
    )
    parser.add_argument(
        "--class-prior",
        choices=[source.value for source in ClassPriorSource],
        default=None,
        help="Class prior source. 'auto': explicit values if given, else empirical, else uniform. "
        "If not given, DIRIMULT_CLASS_PRIOR or 'auto'.",
    )
    parser.add_argument(
        "--explicit-prior",
        default=None,
        help="Explicit class prior, comma separated in class order, e.g. 0.15,0.20,0.35,0.15,0.15.",
    )
    return parser


def _run_options():
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument(
        "--workers",
        type=int,
        default=None,
        help="Worker threads. If not given, DIRIMULT_WORKERS or 1.",
    )
    return parser


def get_cli_arguments():

    parser = argparse.ArgumentParser(
        prog="dirimult",
        description="Classify count vectors with Dirichlet-multinomial posterior predictives.",
        epilog="python -m dirimult train dirimult/fixtures/period_counts.csv --out model.json",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument(
        "--version",
        action="version",
        version="%(prog)s {version}".format(version=__version__),
    )
    parser.add_argument("--debug", action="store_true", help="Show debug info.")

    subparsers = parser.add_subparsers(dest="command", required=True)

    train = subparsers.add_parser(
        "train",
        parents=[_model_options()],
        help="Fit per-class posteriors and write a model file.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    train.add_argument("training_csv", help="Training CSV: site_id,class,t1..tJ.")
    train.add_argument("--roster", default=None, help="Site roster CSV (site_id,class) for the empirical class prior.")
    train.add_argument("--out", default="model.json", help="Model file to write.")

    classify = subparsers.add_parser(
        "classify",
        parents=[_model_options(), _run_options()],
        help="Classify the sites of a query CSV.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    classify.add_argument("model", help="Model file written by 'train'.")
    classify.add_argument("query_csv", help="Query CSV: site_id,t1..tJ.")
    classify.add_argument("--out", default=None, help="Output CSV. Printed if not given.")
    classify.add_argument(
        "--full-precision", action="store_true", help="Print probabilities with full precision."
    )
    classify.add_argument(
        "--plot", default=None, help="Also write an SVG bar chart of the class probabilities to this file."
    )

    plot = subparsers.add_parser(
        "plot",
        help="Write SVG figures of a model.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    plot.add_argument("model", help="Model file written by 'train'.")
    plot.add_argument("--out", default=".", help="Directory for the SVG files.")
    plot.add_argument("--no-means", action="store_true", help="Skip the posterior mean bar chart.")
    plot.add_argument("--no-marginals", action="store_true", help="Skip the marginal density panels.")

    evaluate = subparsers.add_parser(
        "eval",
        parents=[_model_options(), _run_options()],
        help="Leave-one-out and Monte-Carlo oracle reports.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    evaluate.add_argument("training_csv", help="Training CSV: site_id,class,t1..tJ.")
    evaluate.add_argument("--seed", type=int, default=None, help="Master seed. If not given, DIRIMULT_SEED or 0.")
    evaluate.add_argument("--oracle-samples", type=int, default=100_000, help="Monte-Carlo samples per pair.")
    evaluate.add_argument("--oracle-queries", type=int, default=10, help="Random oracle queries (total <= 6).")
    evaluate.add_argument("--queries", default=None, help="Query CSV to use as oracle queries instead.")
    evaluate.add_argument("--out", default=None, help="Directory for the report files.")

    return parser
