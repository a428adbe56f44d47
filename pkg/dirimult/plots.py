"""
SVG figures without a rendering dependency.

  * ``render_posterior_means_svg``: grouped bars of posterior means, one
    group per category and one bar per class.
  * ``render_marginals_svg``: one panel per class with the marginal Beta
    density of every category.
  * ``render_classification_svg``: one stacked bar of class probabilities
    per classified site.

Coordinates are printed with fixed precision, so identical models give
byte-identical files.
"""

import logging
from pathlib import Path

import numpy as np
from scipy import stats
from scipy.integrate import trapezoid
from scipy.special import betaln, expit, logit

from dirimult.conjugate import marginal_beta, posterior_mean_table
from dirimult.errors import ValidationError

logger = logging.getLogger(__name__)

GRID_POINTS = 512
TAIL_MASS = 1e-6
MIN_LOGIT = -700.0

COLORS = [
    "#1f77b4",
    "#d62728",
    "#2ca02c",
    "#ff7f0e",
    "#9467bd",
    "#8c564b",
    "#e377c2",
    "#7f7f7f",
    "#bcbd22",
    "#17becf",
]


def _escape(text):
    return (
        text.replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
        .replace('"', "&quot;")
        .replace("'", "&#39;")
    )


def _color(index):
    return COLORS[index % len(COLORS)]


def _lower_tail_logit(a, b, tail):
    x = stats.beta.ppf(tail, a, b)
    if x > 1e-12:
        return float(logit(x))
    # Near 0 the CDF is x**a / (a * B(a, b)) and logit(x) is log(x).
    return max(MIN_LOGIT, float((np.log(tail) + np.log(a) + betaln(a, b)) / a))


def marginal_density_grid(marginal, points=GRID_POINTS, tail=TAIL_MASS):
    """Density of a marginal Beta on a grid uniform in logit space.

    The grid spans the ``tail`` and ``1 - tail`` quantiles, which keeps
    the integrable spikes of parameters below 1 inside the grid.

    :return: ``(u, x, log_density)`` with ``x = expit(u)``.
    """
    u_low = _lower_tail_logit(marginal.a, marginal.b, tail)
    u_high = -_lower_tail_logit(marginal.b, marginal.a, tail)
    u = np.linspace(u_low, u_high, points)
    x = expit(u)
    return u, x, stats.beta.logpdf(x, marginal.a, marginal.b)


def grid_mass(u, x, log_density):
    """Trapezoid integral of the density over the grid (dx = x(1-x) du)."""
    return float(trapezoid(np.exp(log_density + np.log(x) + np.log1p(-x)), u))


def _svg_document(width, height, body):
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">\n'
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>\n'
        + "".join(body)
        + "</svg>\n"
    )


def _text(x, y, text, anchor="middle", size=12):
    return (
        f'<text x="{x:.2f}" y="{y:.2f}" text-anchor="{anchor}" font-family="sans-serif" '
        f'font-size="{size}">{_escape(text)}</text>\n'
    )


def _legend(labels, left, top):
    body = []
    for index, label in enumerate(labels):
        y = top + 18 * index
        body.append(f'<rect x="{left:.2f}" y="{y:.2f}" width="12" height="12" fill="{_color(index)}"/>\n')
        body.append(_text(left + 18, y + 10, label, anchor="start", size=11))
    return body


def render_posterior_means_svg(model):
    table = posterior_mean_table(model.posteriors)
    types, classes = table.shape
    width, height = 900, 480
    left, right, top, bottom = 70, 150, 50, 60
    plot_width = width - left - right
    plot_height = height - top - bottom
    y_max = max(0.1, float(np.ceil(table.max() * 10) / 10))
    group = plot_width / types
    bar = group * 0.8 / classes

    body = [_text(width / 2, 28, "Posterior mean per category and class", size=15)]
    for tick in np.linspace(0.0, y_max, 6):
        y = top + plot_height * (1 - tick / y_max)
        body.append(f'<line x1="{left}" y1="{y:.2f}" x2="{left + plot_width}" y2="{y:.2f}" stroke="#dddddd"/>\n')
        body.append(_text(left - 8, y + 4, f"{tick:.2f}", anchor="end", size=10))
    for j, label in enumerate(model.typology.labels):
        group_left = left + group * j + group * 0.1
        for i in range(classes):
            value = float(table[j, i])
            bar_height = plot_height * value / y_max
            body.append(
                f'<rect x="{group_left + bar * i:.2f}" y="{top + plot_height - bar_height:.2f}" '
                f'width="{bar:.2f}" height="{bar_height:.2f}" fill="{_color(i)}">'
                f"<title>{_escape(model.class_labels[i])} {_escape(label)}: {value:.4f}</title></rect>\n"
            )
        body.append(_text(left + group * (j + 0.5), top + plot_height + 20, label))
    body.append(
        f'<line x1="{left}" y1="{top + plot_height}" x2="{left + plot_width}" '
        f'y2="{top + plot_height}" stroke="black"/>\n'
    )
    body.append(_text(20, top + plot_height / 2, "mean", size=11))
    body.extend(_legend(model.class_labels, width - right + 20, top))
    return _svg_document(width, height, body)


def _panel(params, class_label, typology, left, top, width, height, points):
    grids = [marginal_density_grid(marginal_beta(params, j), points) for j in range(len(params))]
    # Parameters below 1 give unbounded spikes at 0 or 1; the axis is
    # scaled on the interior and taller values are clipped.
    interior = [np.exp(logd[(x >= 0.01) & (x <= 0.99)]) for _, x, logd in grids]
    y_max = max([float(d.max()) for d in interior if d.size] + [1.0])

    body = [
        f'<rect x="{left:.2f}" y="{top:.2f}" width="{width:.2f}" height="{height:.2f}" fill="none" stroke="black"/>\n',
        _text(left + width / 2, top - 8, class_label, size=13),
        _text(left - 6, top + 10, f"{y_max:.1f}", anchor="end", size=9),
        _text(left - 6, top + height, "0", anchor="end", size=9),
    ]
    for j, (_, x, log_density) in enumerate(grids):
        density = np.minimum(np.exp(log_density), y_max)
        coords = " ".join(
            f"{left + width * xi:.2f},{top + height * (1 - di / y_max):.2f}" for xi, di in zip(x, density)
        )
        body.append(
            f'<polyline fill="none" stroke="{_color(j)}" stroke-width="1.2" points="{coords}">'
            f"<title>{_escape(typology.labels[j])}</title></polyline>\n"
        )
    return body


def render_marginals_svg(model, points=GRID_POINTS):
    panel_width, panel_height = 260, 180
    columns = min(3, len(model.class_labels))
    rows = -(-len(model.class_labels) // columns)
    width = 60 + columns * (panel_width + 50) + 120
    height = 60 + rows * (panel_height + 50)

    body = [_text(width / 2, 24, "Marginal posterior density per category", size=15)]
    for index, (label, params) in enumerate(zip(model.class_labels, model.posteriors)):
        row, column = divmod(index, columns)
        left = 60 + column * (panel_width + 50)
        top = 60 + row * (panel_height + 50)
        body.extend(_panel(params, label, model.typology, left, top, panel_width, panel_height, points))
    body.extend(_legend(model.typology.labels, width - 110, 60))
    return _svg_document(width, height, body)


def render_classification_svg(site_ids, results):
    """One horizontal bar per site, split by class probability."""
    if not results:
        raise ValidationError("Nothing to plot.", "No classified sites.")
    class_labels = results[0].class_labels
    row_height = 22
    left, right, top = 190, 140, 60
    plot_width = 520
    width = left + plot_width + right
    bottom = top + row_height * len(results)
    height = bottom + 50

    body = [_text(width / 2, 28, "Class probabilities per site", size=15)]
    for tick in np.linspace(0.0, 1.0, 6):
        x = left + plot_width * tick
        body.append(f'<line x1="{x:.2f}" y1="{top - 6}" x2="{x:.2f}" y2="{bottom}" stroke="#dddddd"/>\n')
        body.append(_text(x, bottom + 18, f"{tick:.1f}", size=10))
    for row, (site_id, result) in enumerate(zip(site_ids, results)):
        y = top + row_height * row
        label = site_id if not result.flag else f"{site_id} ({result.flag})"
        body.append(_text(left - 8, y + 14, label, anchor="end", size=11))
        offset = 0.0
        for i, p in enumerate(result.probs):
            segment = plot_width * float(p)
            body.append(
                f'<rect x="{left + offset:.2f}" y="{y + 2:.2f}" width="{segment:.2f}" height="{row_height - 4}" '
                f'fill="{_color(i)}"><title>{_escape(site_id)} {_escape(class_labels[i])}: {float(p):.4f}</title></rect>\n'
            )
            offset += segment
    body.extend(_legend(class_labels, left + plot_width + 20, top))
    return _svg_document(width, height, body)


def write_svg(path, text):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as e:
        raise ValidationError("Cannot write figure.", str(e), path=str(path))
    logger.info(f"Wrote {path}.")
    return path
