"""
Goal:
  * Read training corpora, query files and site rosters (CSV, UTF-8).
  * Write and read fitted models (JSON text with a format version).

Training CSV:
  # classes: P1,P2,...           (optional, pins the class order)
  # typology: t1,t2,...          (optional, must match the header)
  # class_prior: 0.15,0.20,...   (optional, explicit class prior)
  site_id,class,t1,...,tJ

Query CSV:
  site_id,t1,...,tJ

Lines starting with '#' are comments anywhere; directives are only read
before the header. Every error names the source, line and column.
"""

import csv
import json
import logging
import re
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np

from dirimult.classifier import ClassPrior, FittedModel, explicit_class_prior
from dirimult.conjugate import CountVector, DirichletParams, PriorFamily, Typology
from dirimult.errors import ValidationError

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
FIXTURES_DIR = Path(__file__).parent / "fixtures"
MAX_COUNT = 10**12

COUNT = re.compile(r"[0-9]+")
NEGATIVE_COUNT = re.compile(r"-[0-9]+")


@dataclass(frozen=True)
class TrainingRecord:
    site_id: str
    class_label: str
    counts: CountVector


@dataclass(frozen=True)
class QueryRecord:
    site_id: str
    counts: CountVector
    typology: Typology


@dataclass(frozen=True)
class Corpus:
    typology: Typology
    classes: tuple
    records: tuple
    class_prior: Optional[tuple] = None

    def __post_init__(self):
        classes = tuple(self.classes)
        records = tuple(self.records)
        object.__setattr__(self, "classes", classes)
        object.__setattr__(self, "records", records)
        if len(set(classes)) != len(classes) or not all(classes):
            raise ValidationError("Class labels must be unique and non-empty.", f"Got {list(classes)}.")
        seen = set()
        for record in records:
            if record.site_id in seen:
                raise ValidationError("Duplicate site_id.", "", site_id=record.site_id)
            seen.add(record.site_id)
            if record.class_label not in classes:
                raise ValidationError(
                    "Unknown class.", f"'{record.class_label}' is not in {list(classes)}.",
                    site_id=record.site_id,
                )
            if len(record.counts) != self.typology.size:
                raise ValidationError(
                    "Dimension mismatch.",
                    f"{len(record.counts)} counts for {self.typology.size} categories.",
                    site_id=record.site_id,
                )
        if self.class_prior is not None:
            object.__setattr__(self, "class_prior", tuple(float(v) for v in self.class_prior))
            explicit_class_prior(self.class_prior, classes)

    def labels(self):
        return [record.class_label for record in self.records]

    def class_totals(self):
        """Pooled counts, one row per class in declared order."""
        totals = np.zeros((len(self.classes), self.typology.size), dtype=np.int64)
        index = {label: i for i, label in enumerate(self.classes)}
        for record in self.records:
            totals[index[record.class_label]] += record.counts.counts
        return totals


def _decode(data, source):
    if isinstance(data, str):
        return data
    try:
        return data.decode("utf-8-sig")
    except UnicodeDecodeError as e:
        raise ValidationError("File is not UTF-8.", str(e), path=source)


def _split_list(value):
    return [item.strip() for item in value.split(",")]


def _read_rows(data, source):
    """Split into ``(line_number, cells)`` rows plus directives seen before the header.

    ``#`` lines are comments only before the header; after it a leading
    ``#`` is part of the site_id.
    """
    directives = {}
    rows = []
    header_seen = False
    for line_number, line in enumerate(_decode(data, source).splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#") and not header_seen:
            key, sep, value = stripped.lstrip("#").partition(":")
            if sep:
                directives[key.strip().lower()] = (line_number, value.strip())
            continue
        try:
            cells = next(csv.reader([line]))
        except csv.Error as e:
            raise ValidationError("Malformed CSV line.", str(e), path=source, line=line_number)
        rows.append((line_number, [cell.strip() for cell in cells]))
        header_seen = True
    return directives, rows


def _parse_count(cell, source, line_number, column):
    if COUNT.fullmatch(cell):
        value = int(cell)
        if value <= MAX_COUNT:
            return value
        reason = f"Count {cell} exceeds {MAX_COUNT}."
    elif NEGATIVE_COUNT.fullmatch(cell):
        reason = f"Negative count {cell}."
    else:
        reason = f"Not a non-negative integer: {cell!r}."
    raise ValidationError("Invalid count.", reason, path=source, line=line_number, column=column)


def _parse_header(rows, source, leading):
    if not rows:
        raise ValidationError("Empty file.", "No header row found.", path=source)
    line_number, header = rows[0]
    if header[: len(leading)] != list(leading):
        raise ValidationError(
            "Invalid header.",
            f"Expected it to start with {','.join(leading)}, got {','.join(header)}.",
            path=source,
            line=line_number,
        )
    try:
        return Typology(header[len(leading):])
    except ValidationError as e:
        e.context.update(path=source, line=line_number)
        raise


def _check_typology_directive(directives, typology, source):
    if "typology" not in directives:
        return
    line_number, value = directives["typology"]
    if tuple(_split_list(value)) != typology.labels:
        raise ValidationError(
            "Typology directive does not match the header.",
            f"Directive {value!r}, header {','.join(typology.labels)}.",
            path=source,
            line=line_number,
        )


def _parse_counts_row(cells, width, typology, source, line_number):
    if len(cells) != width:
        raise ValidationError(
            "Ragged row.", f"Expected {width} cells, got {len(cells)}.", path=source, line=line_number
        )
    site_id = cells[0]
    if not site_id:
        raise ValidationError("Empty site_id.", "", path=source, line=line_number)
    offset = width - typology.size
    counts = [
        _parse_count(cell, source, line_number, typology.labels[j])
        for j, cell in enumerate(cells[offset:])
    ]
    return site_id, CountVector(np.array(counts, dtype=np.int64))


def parse_training_csv(data, source="<training>"):
    directives, rows = _read_rows(data, source)
    typology = _parse_header(rows, source, ("site_id", "class"))
    _check_typology_directive(directives, typology, source)

    pinned = None
    if "classes" in directives:
        line_number, value = directives["classes"]
        pinned = [label for label in _split_list(value) if label]
        if len(set(pinned)) != len(pinned):
            raise ValidationError(
                "Duplicate class in directive.", value, path=source, line=line_number
            )

    records = []
    seen_sites = set()
    classes = list(pinned or [])
    for line_number, cells in rows[1:]:
        site_id, counts = _parse_counts_row(cells, typology.size + 2, typology, source, line_number)
        class_label = cells[1]
        if not class_label:
            raise ValidationError("Empty class label.", "", path=source, line=line_number, site_id=site_id)
        if site_id in seen_sites:
            raise ValidationError("Duplicate site_id.", "", path=source, line=line_number, site_id=site_id)
        if class_label not in classes:
            if pinned is not None:
                raise ValidationError(
                    "Unknown class.",
                    f"'{class_label}' is not listed in the classes directive {pinned}.",
                    path=source,
                    line=line_number,
                    site_id=site_id,
                )
            classes.append(class_label)
        seen_sites.add(site_id)
        records.append(TrainingRecord(site_id, class_label, counts))

    class_prior = None
    if "class_prior" in directives:
        line_number, value = directives["class_prior"]
        try:
            class_prior = tuple(float(v) for v in _split_list(value))
        except ValueError as e:
            raise ValidationError("Invalid class prior directive.", str(e), path=source, line=line_number)

    try:
        corpus = Corpus(typology, tuple(classes), tuple(records), class_prior)
    except ValidationError as e:
        e.context.setdefault("path", source)
        raise
    logger.debug(f"Parsed {len(records)} training records from {source}.")
    return corpus


def parse_query_csv(data, source="<queries>"):
    directives, rows = _read_rows(data, source)
    typology = _parse_header(rows, source, ("site_id",))
    _check_typology_directive(directives, typology, source)

    queries = []
    seen_sites = set()
    for line_number, cells in rows[1:]:
        site_id, counts = _parse_counts_row(cells, typology.size + 1, typology, source, line_number)
        if site_id in seen_sites:
            raise ValidationError("Duplicate site_id.", "", path=source, line=line_number, site_id=site_id)
        seen_sites.add(site_id)
        queries.append(QueryRecord(site_id, counts, typology))
    logger.debug(f"Parsed {len(queries)} queries from {source}.")
    return queries


def parse_site_roster(data, source="<roster>"):
    """Read ``site_id,class`` pairs of dated levels.

    A name listed under several classes is kept once per class and
    reported, since each listing stands for a separate dated level.
    """
    _, rows = _read_rows(data, source)
    if not rows:
        raise ValidationError("Empty file.", "No header row found.", path=source)
    line_number, header = rows[0]
    if header != ["site_id", "class"]:
        raise ValidationError("Invalid header.", f"Got {','.join(header)}.", path=source, line=line_number)

    entries = []
    listed = {}
    for line_number, cells in rows[1:]:
        if len(cells) != 2 or not all(cells):
            raise ValidationError("Invalid roster row.", f"Got {cells}.", path=source, line=line_number)
        site_id, class_label = cells
        if (site_id, class_label) in entries:
            raise ValidationError("Duplicate roster entry.", "", path=source, line=line_number, site_id=site_id)
        if site_id in listed:
            logger.warning(
                {
                    "message": "Site listed under several classes.",
                    "reason": f"'{site_id}' appears in {listed[site_id]} and {class_label}.",
                    "path": source,
                    "line": line_number,
                }
            )
        listed.setdefault(site_id, class_label)
        entries.append((site_id, class_label))
    return entries


def fixture_path(name):
    return FIXTURES_DIR / name


def load_fixture(name):
    return fixture_path(name).read_bytes()


def format_alpha(value, denominator):
    """``k/d`` when ``value`` is ``k/d`` within 1e-12, else a decimal."""
    k = round(value * denominator)
    if abs(value - k / denominator) <= 1e-12 * max(1.0, abs(value)):
        return f"{k}/{denominator}" if denominator > 1 else str(k)
    return f"{value:.10g}"


def _encode_alpha(value, denominator):
    k = round(value * denominator)
    if denominator > 1 and float(Fraction(k, denominator)) == value:
        return f"{k}/{denominator}"
    return repr(float(value))


def _decode_alpha(text):
    numerator, sep, denominator = text.partition("/")
    if sep:
        return float(Fraction(int(numerator), int(denominator)))
    return float(text)


def serialize_model(model):
    denominator = model.prior_family.denominator(model.typology.size)
    document = {
        "format_version": FORMAT_VERSION,
        "typology": list(model.typology.labels),
        "classes": list(model.class_labels),
        "prior_family": model.prior_family.value,
        "class_prior": [float(p) for p in model.prior.probs],
        "posteriors": [
            {
                "class": label,
                "alpha": [_encode_alpha(float(a), denominator) for a in params.alpha],
            }
            for label, params in zip(model.class_labels, model.posteriors)
        ],
    }
    return (json.dumps(document, indent=2, ensure_ascii=False) + "\n").encode("utf-8")


def parse_model(data, source="<model>"):
    try:
        document = json.loads(_decode(data, source))
    except json.JSONDecodeError as e:
        raise ValidationError("Corrupted model file.", str(e), path=source)
    if not isinstance(document, dict):
        raise ValidationError("Corrupted model file.", "Top level is not an object.", path=source)
    version = document.get("format_version", None)
    if version != FORMAT_VERSION:
        raise ValidationError(
            "Unsupported format version.",
            f"Expected {FORMAT_VERSION}, got {version!r}.",
            path=source,
        )

    field_name = None
    try:
        field_name = "typology"
        typology = Typology([str(label) for label in document["typology"]])
        field_name = "classes"
        classes = [str(label) for label in document["classes"]]
        if not classes:
            raise ValidationError("Empty model.", "No classes.", path=source)
        field_name = "prior_family"
        prior_family = PriorFamily(document["prior_family"])
        field_name = "class_prior"
        class_prior = ClassPrior([float(p) for p in document["class_prior"]])
        field_name = "posteriors"
        entries = document["posteriors"]
        if [entry["class"] for entry in entries] != classes:
            raise ValidationError(
                "Corrupted field.", "Posterior classes do not match 'classes'.", path=source, field=field_name
            )
        posteriors = [DirichletParams([_decode_alpha(str(a)) for a in entry["alpha"]]) for entry in entries]
        return FittedModel(typology, classes, posteriors, class_prior, prior_family)
    except ValidationError as e:
        e.context.setdefault("path", source)
        e.context.setdefault("field", field_name)
        raise
    except (KeyError, TypeError, ValueError, ZeroDivisionError) as e:
        raise ValidationError("Corrupted field.", repr(e), path=source, field=field_name)
