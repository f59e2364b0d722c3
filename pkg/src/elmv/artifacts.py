"""Reading and writing pipeline artifacts, each stamped with a config hash."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .data import ObservationTable, load_table, write_table
from .ensemble import ModelRecord, Standardizer, SupportSet
from .subsets import QualifiedSubsetCollection

HASH_PREFIX = "# config_hash="


class ArtifactError(ValueError):
    """An artifact is malformed or was produced under a different configuration."""


def check_hash(name, found: str | None, expected: str) -> None:
    if found != expected:
        raise ArtifactError(
            f"{name}: config hash {found} does not match the expected {expected}; "
            "it was produced by a different configuration"
        )


def _read_json(path) -> dict:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(d, dict) or "config_hash" not in d:
        raise ArtifactError(f"{path}: missing config_hash")
    return d


def _write_json(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_hash_line(path) -> str | None:
    with open(path) as fh:
        first = fh.readline().rstrip("\n")
    return first[len(HASH_PREFIX):] if first.startswith(HASH_PREFIX) else None


def save_subsets(path, collection: QualifiedSubsetCollection, config_hash: str) -> None:
    _write_json(path, {"config_hash": config_hash, **collection.to_dict()})


def load_subsets(path) -> tuple[QualifiedSubsetCollection, str]:
    d = _read_json(path)
    try:
        return QualifiedSubsetCollection.from_dict(d), d["config_hash"]
    except (KeyError, TypeError) as exc:
        raise ArtifactError(f"{path}: malformed subset collection ({exc})") from None


def save_registry(path, records, scaler: Standardizer, support: SupportSet,
                  config_hash: str, upstream_hash: str) -> None:
    _write_json(path, {
        "config_hash": config_hash,
        "upstream_hash": upstream_hash,
        "feature_names": list(scaler.feature_names),
        "scaler": scaler.to_dict(),
        "support_ids": list(support.table.patient_ids),
        "support_seed": support.seed,
        "records": [r.to_dict() for r in records],
    })


def load_registry(path) -> tuple[list, Standardizer, dict]:
    d = _read_json(path)
    try:
        records = [ModelRecord.from_dict(r) for r in d["records"]]
        scaler = Standardizer.from_dict(d["scaler"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ArtifactError(f"{path}: malformed registry ({exc})") from None
    if not records:
        raise ArtifactError(f"{path}: registry holds no models")
    return records, scaler, d


def save_support(path, support: SupportSet, config_hash: str) -> None:
    write_table(support.table, path)
    text = Path(path).read_text()
    Path(path).write_text(f"{HASH_PREFIX}{config_hash}\n{text}")


def load_support(path, seed=None) -> tuple[SupportSet, str | None]:
    found = read_hash_line(path)
    table = load_table(path, label_column="label", id_column="patient_id", comment="#")
    return SupportSet(table, seed), found


def write_predictions(path, ids, predictions, config_hash: str, labels=None) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"{HASH_PREFIX}{config_hash}\n")
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        header = ["query_id", "predicted", "vote_tally", "n_selected", "n_eligible", "fallback"]
        if labels is not None:
            header.append("true_label")
        w.writerow(header)
        for i, (qid, p) in enumerate(zip(ids, predictions)):
            tally = ";".join(f"{c}:{n}" for c, n in sorted(p.tally.items(), key=lambda kv: str(kv[0])))
            row = [qid, p.label, tally, p.n_selected, p.n_eligible, int(p.fallback)]
            if labels is not None:
                row.append(labels[i])
            w.writerow(row)


def project_table(table: ObservationTable, feature_names) -> tuple[ObservationTable, list]:
    """Reorder ``table`` to ``feature_names``; absent columns become all-missing."""
    col = {f: j for j, f in enumerate(table.feature_names)}
    values = np.full((table.n_patients, len(feature_names)), np.nan)
    absent = []
    for j, f in enumerate(feature_names):
        if f in col:
            values[:, j] = table.values[:, col[f]]
        else:
            absent.append(f)
    return ObservationTable(table.patient_ids, list(feature_names), values, table.labels), absent
