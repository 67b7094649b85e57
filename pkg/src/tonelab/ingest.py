"""Ingestion of externally released data through user-supplied column maps.

Published datasets never quite match internal file layouts, so every reader
here takes explicit column names and reports failures by file, line, and
column. A dataset manifest (dataset.json in the dataset root) names the
per-domain files and their mappings; `load_dataset` turns the whole tree
into the same DomainData objects the analyze stage builds from its own runs.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .core import InputError
from .ratings import FeatureRecord, RatingRecord, SimilarityRecord
from .report import DomainData

DATASET_MANIFEST = "dataset.json"


def _open_rows(path, delimiter=","):
    path = Path(path)
    if not path.exists():
        raise InputError(f"missing CSV: {path}")
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f, delimiter=delimiter)
        header = next(reader, None)
        if not header:
            raise InputError(f"{path}: empty file, expected a header row")
        rows = list(reader)
    return header, rows


def _column_index(path, header, column) -> int:
    try:
        return header.index(column)
    except ValueError:
        raise InputError(
            f"{path}: no column {column!r}; file has {header}") from None


def _cell(path, row, lineno, index, column) -> str:
    if index >= len(row):
        raise InputError(f"{path} line {lineno}: row ends before column "
                         f"{column!r}")
    value = row[index].strip()
    if not value:
        raise InputError(f"{path} line {lineno}: empty {column!r} cell")
    return value


def _int_cell(path, row, lineno, index, column) -> int:
    raw = _cell(path, row, lineno, index, column)
    try:
        return int(float(raw))
    except ValueError:
        raise InputError(
            f"{path} line {lineno}, column {column!r}: not a number: "
            f"{raw!r}") from None


def read_annotations_csv(path, column: str, *, delimiter=",") -> list[str]:
    """One tone annotation per row, from the named column."""
    header, rows = _open_rows(path, delimiter)
    index = _column_index(path, header, column)
    out = []
    for lineno, row in enumerate(rows, start=2):
        if not row:
            continue
        out.append(_cell(path, row, lineno, index, column))
    if not out:
        raise InputError(f"{path}: no annotation rows")
    return out


def read_sentences_csv(path, column: str, *, delimiter=",") -> list[str]:
    header, rows = _open_rows(path, delimiter)
    index = _column_index(path, header, column)
    return [_cell(path, row, lineno, index, column)
            for lineno, row in enumerate(rows, start=2) if row]


@dataclass(frozen=True)
class RatingColumns:
    tone: str = "tone"
    sentence: str = "sentence"
    rater: str = "rater_id"
    value: str = "value"


def read_rating_records_csv(path, columns: RatingColumns = RatingColumns(),
                            *, delimiter=",") -> list[RatingRecord]:
    header, rows = _open_rows(path, delimiter)
    ix = {name: _column_index(path, header, col)
          for name, col in vars(columns).items()}
    records = []
    for lineno, row in enumerate(rows, start=2):
        if not row:
            continue
        try:
            records.append(RatingRecord(
                tone=_cell(path, row, lineno, ix["tone"], columns.tone),
                sentence=_cell(path, row, lineno, ix["sentence"],
                               columns.sentence),
                rater_id=_cell(path, row, lineno, ix["rater"], columns.rater),
                value=_int_cell(path, row, lineno, ix["value"], columns.value),
            ))
        except InputError as exc:
            if "line" in str(exc):
                raise
            raise InputError(f"{path} line {lineno}: {exc}") from exc
    return records


@dataclass(frozen=True)
class SimilarityColumns:
    tone_a: str = "tone_a"
    tone_b: str = "tone_b"
    rater: str = "rater_id"
    value: str = "value"


def read_similarity_records_csv(path,
                                columns: SimilarityColumns = SimilarityColumns(),
                                *, delimiter=",") -> list[SimilarityRecord]:
    header, rows = _open_rows(path, delimiter)
    ix = {name: _column_index(path, header, col)
          for name, col in vars(columns).items()}
    records = []
    for lineno, row in enumerate(rows, start=2):
        if not row:
            continue
        try:
            records.append(SimilarityRecord(
                tone_a=_cell(path, row, lineno, ix["tone_a"], columns.tone_a),
                tone_b=_cell(path, row, lineno, ix["tone_b"], columns.tone_b),
                rater_id=_cell(path, row, lineno, ix["rater"], columns.rater),
                value=_int_cell(path, row, lineno, ix["value"], columns.value),
            ))
        except InputError as exc:
            if "line" in str(exc):
                raise
            raise InputError(f"{path} line {lineno}: {exc}") from exc
    return records


@dataclass(frozen=True)
class FeatureColumns:
    tone: str = "tone"
    feature: str = "feature"
    rater: str = "rater_id"
    value: str = "value"


def read_feature_records_csv(path, columns: FeatureColumns = FeatureColumns(),
                             *, delimiter=",") -> list[FeatureRecord]:
    header, rows = _open_rows(path, delimiter)
    ix = {name: _column_index(path, header, col)
          for name, col in vars(columns).items()}
    records = []
    for lineno, row in enumerate(rows, start=2):
        if not row:
            continue
        try:
            records.append(FeatureRecord(
                tone=_cell(path, row, lineno, ix["tone"], columns.tone),
                feature=_cell(path, row, lineno, ix["feature"],
                              columns.feature),
                rater_id=_cell(path, row, lineno, ix["rater"], columns.rater),
                value=_int_cell(path, row, lineno, ix["value"], columns.value),
            ))
        except InputError as exc:
            if "line" in str(exc):
                raise
            raise InputError(f"{path} line {lineno}: {exc}") from exc
    return records


def load_float_grid(path, *, delimiter=",") -> tuple[list[str], list[str],
                                                     np.ndarray]:
    """Labelled float matrix: header row of column labels, label-led rows.

    Failures name the first bad cell by line and column, which is the
    difference between "your CSV is wrong" and a fixable report.
    """
    header, rows = _open_rows(path, delimiter)
    if len(header) < 2:
        raise InputError(f"{path}: expected a label column plus data columns")
    labels, data = [], []
    for lineno, row in enumerate(rows, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise InputError(f"{path} line {lineno}: has {len(row)} cells, "
                             f"header has {len(header)}")
        labels.append(row[0])
        values = []
        for col, cell in zip(header[1:], row[1:]):
            try:
                values.append(float(cell))
            except ValueError:
                raise InputError(
                    f"{path} line {lineno}, column {col!r}: not a number: "
                    f"{cell!r}") from None
        data.append(values)
    if not data:
        raise InputError(f"{path}: no data rows")
    return header[1:], labels, np.array(data)


# --------------------------------------------------------------------------
# whole-dataset manifest


_COLUMN_TYPES = {
    "ratings": RatingColumns,
    "similarity": SimilarityColumns,
    "features": FeatureColumns,
}

_READERS = {
    "ratings": read_rating_records_csv,
    "similarity": read_similarity_records_csv,
    "features": read_feature_records_csv,
}

_DOMAIN_FIELDS = {
    "ratings": "rating_records",
    "similarity": "similarity_records",
    "features": "feature_records",
}


def _domain_from_manifest(root: Path, name: str, doc: dict) -> DomainData:
    ann = doc.get("annotations")
    if not ann or "path" not in ann or "column" not in ann:
        raise InputError(
            f"dataset domain {name!r} needs annotations.path and "
            "annotations.column")
    tones = read_annotations_csv(root / ann["path"], ann["column"],
                                 delimiter=ann.get("delimiter", ","))
    sentences: list[str] = []
    sent = doc.get("sentences")
    if sent:
        sentences = read_sentences_csv(root / sent["path"], sent["column"],
                                       delimiter=sent.get("delimiter", ","))
    kwargs = {}
    for kind, reader in _READERS.items():
        spec = doc.get(kind)
        if not spec:
            continue
        columns_doc = spec.get("columns", {})
        try:
            columns = _COLUMN_TYPES[kind](**columns_doc)
        except TypeError as exc:
            raise InputError(
                f"dataset domain {name!r}, {kind}: bad column map: {exc}"
            ) from exc
        kwargs[_DOMAIN_FIELDS[kind]] = reader(
            root / spec["path"], columns,
            delimiter=spec.get("delimiter", ","))
    return DomainData(domain=name, tone_annotations=tones,
                      sentences=sentences, **kwargs)


def load_dataset(root) -> tuple[dict[str, DomainData], dict]:
    """All mapped domains plus the raw manifest (for its published-values
    section). The manifest is dataset.json inside the dataset root."""
    root = Path(root)
    manifest_path = root / DATASET_MANIFEST
    if not manifest_path.exists():
        raise InputError(f"missing dataset manifest: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except ValueError as exc:
        raise InputError(f"unreadable {manifest_path}: {exc}") from exc
    domains_doc = manifest.get("domains")
    if not isinstance(domains_doc, dict) or not domains_doc:
        raise InputError(f"{manifest_path}: needs a non-empty 'domains' map")
    domains = {name: _domain_from_manifest(root, name, doc)
               for name, doc in domains_doc.items()}
    return domains, manifest
