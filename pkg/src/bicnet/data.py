"""Dataset ingestion: manifest parsing, series loading, preprocessing.

A dataset is described by a JSON manifest mapping condition names to
per-subject CSV paths::

    {
      "rest_condition": "rest",
      "conditions": {
        "rest":   {"sub01": "rest/sub01.csv", ...},
        "motor":  {"sub01": "motor/sub01.csv", ...}
      }
    }

Series files are headerless CSV with rows = time points and columns =
regions.  Relative paths resolve against the manifest's directory.
Conditions are ordered rest first, the remainder lexicographically;
subjects are ordered lexicographically.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Optional

import numpy as np

from .types import Dataset, ValidationError


def load_manifest(path: str | Path) -> Dataset:
    """Read a manifest and all series it references into a Dataset.

    Raises
    ------
    ValidationError
        On malformed JSON, missing files, inconsistent subject sets,
        ragged shapes, or non-finite values.
    """
    path = Path(path)
    try:
        with open(path) as fh:
            spec = json.load(fh)
    except FileNotFoundError:
        raise ValidationError(f"manifest not found: {path}")
    except json.JSONDecodeError as e:
        raise ValidationError(f"manifest is not valid JSON: {e}")

    if not isinstance(spec, dict) or "conditions" not in spec:
        raise ValidationError("manifest must be an object with a 'conditions' key")
    conditions = spec["conditions"]
    if not isinstance(conditions, dict) or not conditions:
        raise ValidationError("'conditions' must be a non-empty object")

    rest = spec.get("rest_condition")
    if rest is not None and rest not in conditions:
        raise ValidationError(f"rest_condition {rest!r} not among conditions")

    names = sorted(conditions)
    if rest is not None:
        names.remove(rest)
        names.insert(0, rest)

    subject_sets = {g: set(conditions[g]) for g in names}
    first = subject_sets[names[0]]
    for g, ids in subject_sets.items():
        if ids != first:
            missing = sorted(first ^ ids)
            raise ValidationError(
                f"subject sets differ between conditions {names[0]!r} and {g!r}: {missing}"
            )
    if not first:
        raise ValidationError("conditions contain no subjects")
    subjects = sorted(first)

    base = path.parent
    series: list[list[np.ndarray]] = []
    for g in names:
        per_subject = []
        for s in subjects:
            per_subject.append(read_series_csv(base / conditions[g][s]))
        series.append(per_subject)

    ds = Dataset(
        series=series,
        condition_names=names,
        subject_ids=subjects,
        rest_index=0 if rest is not None else None,
    )
    ds.validate()
    return ds


def read_series_csv(path: str | Path) -> np.ndarray:
    """Load one headerless series CSV into a (n_regions, T) float array."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"series file not found: {path}")
    try:
        raw = np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError as e:
        raise ValidationError(f"could not parse {path}: {e}")
    if raw.size == 0:
        raise ValidationError(f"empty series file: {path}")
    if not np.all(np.isfinite(raw)):
        raise ValidationError(f"non-finite values in {path}")
    # rows are time points on disk; flip to regions-by-time in memory
    return raw.T.copy()


def write_series_csv(path: str | Path, series: np.ndarray) -> None:
    """Write a (n_regions, T) array as a headerless time-by-region CSV."""
    np.savetxt(path, np.asarray(series).T, delimiter=",", fmt="%.10g")


def center_scale(series: np.ndarray) -> np.ndarray:
    """Center and scale one (n_regions, T) matrix row-wise.

    Each row comes back with sample mean 0 and sample standard deviation 1
    (T-1 denominator).  Constant rows cannot be scaled and raise an error
    naming the offending region.
    """
    y = np.asarray(series, dtype=float)
    y = y - y.mean(axis=1, keepdims=True)
    sd = y.std(axis=1, ddof=1, keepdims=True)
    bad = np.nonzero(sd.ravel() == 0.0)[0]
    if bad.size:
        raise ValidationError(f"constant region series (region {bad[0]}) cannot be scaled")
    return y / sd


def aggregate_rois(voxels: np.ndarray, membership: np.ndarray) -> np.ndarray:
    """Average voxel rows into region rows.

    ``membership[v]`` is the 0-based region index of voxel row v.  Returns
    an (n_regions, T) matrix whose row n is the mean of its member voxels;
    a region with no members is an error.
    """
    vox = np.asarray(voxels, dtype=float)
    mem = np.asarray(membership)
    if mem.shape != (vox.shape[0],):
        raise ValidationError("membership length must equal voxel row count")
    n_regions = int(mem.max()) + 1 if mem.size else 0
    out = np.empty((n_regions, vox.shape[1]))
    for n in range(n_regions):
        rows = vox[mem == n]
        if rows.shape[0] == 0:
            raise ValidationError(f"region {n} has no member voxels")
        out[n] = rows.mean(axis=0)
    return out


def preprocess(dataset: Dataset, standardize: bool = True) -> Dataset:
    """Center every region series; optionally scale to unit sample sd.

    Centering and scaling are per region, per subject, per condition.
    With ``standardize=True`` a constant region series is an error since
    it cannot be scaled.
    """
    out: list[list[np.ndarray]] = []
    for g, per_subject in enumerate(dataset.series):
        row = []
        for s, y in enumerate(per_subject):
            try:
                if standardize:
                    y = center_scale(y)
                else:
                    y = y - y.mean(axis=1, keepdims=True)
            except ValidationError as e:
                raise ValidationError(
                    f"{e} (subject {dataset.subject_ids[s]}, condition "
                    f"{dataset.condition_names[g]})"
                )
            row.append(y)
        out.append(row)
    return Dataset(
        series=out,
        condition_names=list(dataset.condition_names),
        subject_ids=list(dataset.subject_ids),
        rest_index=dataset.rest_index,
        behavioral=dict(dataset.behavioral),
    )


def load_behavioral_csv(
    path: str | Path, subject_ids: list[str]
) -> dict[str, np.ndarray]:
    """Read a behavioral table with header ``subject,<measure>...``.

    Returns a mapping measure name -> length-S vector ordered like
    ``subject_ids``.  Every subject must appear exactly once.
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"behavioral file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"behavioral file is empty: {path}")
        if len(header) < 2 or header[0].strip() != "subject":
            raise ValidationError(
                "behavioral header must be 'subject,<measure>[,...]', got "
                f"{','.join(header)!r}"
            )
        measures = [m.strip() for m in header[1:]]
        rows: dict[str, list[float]] = {}
        for line in reader:
            if not line:
                continue
            sid = line[0].strip()
            if sid in rows:
                raise ValidationError(f"duplicate behavioral row for subject {sid!r}")
            if len(line) != len(header):
                raise ValidationError(
                    f"behavioral row for {sid!r} has {len(line)} fields, "
                    f"expected {len(header)}"
                )
            try:
                rows[sid] = [float(v) for v in line[1:]]
            except ValueError:
                raise ValidationError(f"non-numeric behavioral value for {sid!r}")

    missing = [s for s in subject_ids if s not in rows]
    if missing:
        raise ValidationError(f"behavioral rows missing for subjects: {missing}")

    table = np.array([rows[s] for s in subject_ids], dtype=float)
    if not np.all(np.isfinite(table)):
        raise ValidationError("non-finite behavioral values")
    return {m: table[:, j].copy() for j, m in enumerate(measures)}


def pooled_variance(dataset: Dataset) -> float:
    """Pooled empirical variance of every centered series entry.

    Used to resolve the noise-variance prior scale when the user leaves
    it unset, so the prior mean sits on the data's own scale.
    """
    total = 0.0
    count = 0
    for per_subject in dataset.series:
        for y in per_subject:
            yc = y - y.mean(axis=1, keepdims=True)
            total += float(np.sum(yc * yc))
            count += yc.size
    var = total / max(count, 1)
    if var <= 0:
        raise ValidationError("dataset has zero pooled variance")
    return var
