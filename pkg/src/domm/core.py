"""Shared domain types, dataset manifests, and deterministic file I/O.

All types are immutable after construction and safe to share between
threads; parsing and serialization functions are pure. Serialization is
canonical (sorted keys, 17-significant-digit floats) so that identical
objects always produce identical bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np

__all__ = [
    "AnnotationSet",
    "AolSequence",
    "AolState",
    "DataError",
    "DatasetManifest",
    "ManifestEntry",
    "N_STATES",
    "Preprocessing",
    "RolSequence",
    "UtteranceFeatures",
    "canonical_json",
    "format_float",
    "load_manifest",
    "parse_annotations",
    "parse_features",
    "read_aol_csv",
    "read_rol_csv",
    "write_aol_csv",
    "write_json",
    "write_rol_csv",
]


class DataError(Exception):
    """Malformed input file, config, or inconsistent dataset."""


class AolState(IntEnum):
    """Absolute ordinal level. The total order LOW < MEDIUM < HIGH is load-bearing."""

    LOW = 0
    MEDIUM = 1
    HIGH = 2


N_STATES = 3


@dataclass(frozen=True)
class UtteranceFeatures:
    """Per-frame feature matrix (T frames x D dims) for one utterance."""

    utterance_id: str
    frames: np.ndarray
    frame_period_s: float | None = None

    def __post_init__(self):
        if self.frames.ndim != 2 or self.frames.shape[0] < 1 or self.frames.shape[1] < 1:
            raise DataError(f"{self.utterance_id}: feature matrix must be T x D with T,D >= 1")
        if not np.all(np.isfinite(self.frames)):
            raise DataError(f"{self.utterance_id}: feature matrix contains non-finite values")
        if self.frame_period_s is not None and not self.frame_period_s > 0:
            raise DataError(f"{self.utterance_id}: frame_period_s must be positive")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def n_dims(self) -> int:
        return self.frames.shape[1]


@dataclass(frozen=True)
class AnnotationSet:
    """R equal-length interval-label series for one utterance.

    ``values`` has shape (R, T); every entry lies within ``value_range``.
    """

    utterance_id: str
    values: np.ndarray
    period_s: float
    value_range: tuple[float, float]

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[0] < 1 or self.values.shape[1] < 1:
            raise DataError(f"{self.utterance_id}: annotations must be R x T with R,T >= 1")
        if not self.period_s > 0:
            raise DataError(f"{self.utterance_id}: sampling period must be positive")
        lo, hi = self.value_range
        if not np.all(np.isfinite(self.values)):
            raise DataError(f"{self.utterance_id}: annotation contains non-finite values")
        if np.any(self.values < lo) or np.any(self.values > hi):
            raise DataError(f"{self.utterance_id}: annotation value outside range [{lo}, {hi}]")

    @property
    def n_annotators(self) -> int:
        return self.values.shape[0]

    @property
    def n_samples(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class AolSequence:
    """Sequence of absolute ordinal labels (state codes 0/1/2) for one utterance."""

    utterance_id: str
    labels: np.ndarray

    def __post_init__(self):
        if self.labels.ndim != 1 or self.labels.size < 1:
            raise DataError(f"{self.utterance_id}: label sequence must be non-empty 1-D")
        if not np.all(np.isin(self.labels, (0, 1, 2))):
            raise DataError(f"{self.utterance_id}: labels must be state codes in {{0, 1, 2}}")

    def __len__(self) -> int:
        return self.labels.size


@dataclass(frozen=True)
class RolSequence:
    """Per-frame ranks within one utterance, tied-average convention.

    ``normalized`` maps ranks to [0, 1] via (rank - 1) / (T - 1), with the
    singleton convention 0.5 when T = 1; rank differences are always taken
    on the normalized form so utterances of different lengths share a scale.
    """

    utterance_id: str
    ranks: np.ndarray
    normalized: np.ndarray

    def __post_init__(self):
        t = self.ranks.size
        if self.ranks.ndim != 1 or t < 1 or self.normalized.shape != self.ranks.shape:
            raise DataError(f"{self.utterance_id}: ranks/normalized must be equal-length 1-D")
        expected = t * (t + 1) / 2.0
        if abs(self.ranks.sum() - expected) > 1e-6 * max(expected, 1.0):
            raise DataError(
                f"{self.utterance_id}: ranks are not a tied-average ranking "
                f"(sum {self.ranks.sum()} != {expected})"
            )

    @classmethod
    def from_ranks(cls, utterance_id: str, ranks) -> "RolSequence":
        ranks = np.asarray(ranks, dtype=float)
        t = ranks.size
        if t == 1:
            normalized = np.array([0.5])
        else:
            normalized = (ranks - 1.0) / (t - 1.0)
        return cls(utterance_id, ranks, normalized)

    def __len__(self) -> int:
        return self.ranks.size


@dataclass(frozen=True)
class ManifestEntry:
    utterance_id: str
    features_path: Path
    annotations_path: Path
    split: str


@dataclass(frozen=True)
class Preprocessing:
    delay_s: float
    window_s: float
    overlap: float


@dataclass(frozen=True)
class DatasetManifest:
    """Declares a dataset: utterance files, splits, thresholds, preprocessing."""

    dataset_name: str
    dimension_name: str
    value_range: tuple[float, float]
    preprocessing: Preprocessing
    thresholds: dict
    utterances: tuple[ManifestEntry, ...]

    def split_entries(self, split: str) -> list[ManifestEntry]:
        if split == "all":
            return list(self.utterances)
        return [u for u in self.utterances if u.split == split]

    def split_tags(self) -> list[str]:
        seen: dict[str, None] = {}
        for u in self.utterances:
            seen.setdefault(u.split, None)
        return list(seen)


# ---------------------------------------------------------------------------
# Canonical serialization
# ---------------------------------------------------------------------------


def format_float(x: float) -> str:
    """Format with 17 significant digits (lossless for float64), always float-typed."""
    x = float(x)
    if not np.isfinite(x):
        raise DataError(f"non-finite value {x!r} cannot be serialized")
    s = "%.17g" % x
    if "." not in s and "e" not in s:
        s += ".0"
    return s


def canonical_json(obj) -> str:
    """Serialize to JSON with sorted keys and fixed float formatting.

    Identical objects always yield identical bytes, so file-level equality
    checks and reproducibility tests can compare raw output.
    """
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=True)
    if isinstance(obj, np.ndarray):
        return canonical_json(obj.tolist())
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(canonical_json(v) for v in obj) + "]"
    if isinstance(obj, dict):
        parts = []
        for key in sorted(obj):
            if not isinstance(key, str):
                raise TypeError(f"JSON object keys must be strings, got {key!r}")
            parts.append(json.dumps(key, ensure_ascii=True) + ":" + canonical_json(obj[key]))
        return "{" + ",".join(parts) + "}"
    raise TypeError(f"cannot serialize {type(obj).__name__} canonically")


def write_json(path, obj) -> None:
    Path(path).write_text(canonical_json(obj) + "\n", encoding="ascii")


# ---------------------------------------------------------------------------
# CSV parsing
# ---------------------------------------------------------------------------


def _read_csv_lines(path) -> tuple[dict[str, str], list[str], list[list[str]]]:
    """Split a CSV file into (#key=value metadata, header cells, data rows)."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    meta: dict[str, str] = {}
    header: list[str] | None = None
    rows: list[list[str]] = []
    for line in text.splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].partition("=")
            if sep:
                meta[key.strip()] = value.strip()
            continue
        cells = [c.strip() for c in line.split(",")]
        if header is None:
            header = cells
        else:
            rows.append(cells)
    if header is None:
        raise DataError(f"{path}: empty file")
    return meta, header, rows


def _parse_matrix(path, header: list[str], rows: list[list[str]]) -> np.ndarray:
    if not rows:
        raise DataError(f"{path}: no data rows")
    width = len(header)
    out = np.empty((len(rows), width))
    for r, cells in enumerate(rows):
        if len(cells) != width:
            raise DataError(f"{path}: row {r + 1} has {len(cells)} cells, expected {width}")
        for c, cell in enumerate(cells):
            try:
                value = float(cell)
            except ValueError:
                value = np.nan
            if not np.isfinite(value):
                raise DataError(
                    f"{path}: non-numeric value {cell!r} at row {r + 1}, column {header[c]!r}"
                )
            out[r, c] = value
    return out


def parse_features(path) -> UtteranceFeatures:
    """Parse a feature CSV: optional ``#key=value`` metadata, header, one row per frame."""
    meta, header, rows = _read_csv_lines(path)
    frames = _parse_matrix(path, header, rows)
    utterance_id = meta.get("utterance_id", Path(path).stem)
    period = meta.get("frame_period_s")
    return UtteranceFeatures(
        utterance_id=utterance_id,
        frames=frames,
        frame_period_s=float(period) if period is not None else None,
    )


def parse_annotations(path, value_range: tuple[float, float]) -> AnnotationSet:
    """Parse an annotation CSV: ``#period_s=<float>`` metadata row, one column per annotator."""
    meta, header, rows = _read_csv_lines(path)
    if "period_s" not in meta:
        raise DataError(f"{path}: missing '#period_s=' metadata row")
    values = _parse_matrix(path, header, rows)
    return AnnotationSet(
        utterance_id=meta.get("utterance_id", Path(path).stem),
        values=values.T.copy(),
        period_s=float(meta["period_s"]),
        value_range=(float(value_range[0]), float(value_range[1])),
    )


# ---------------------------------------------------------------------------
# Label CSV I/O (consensus outputs and predictions)
# ---------------------------------------------------------------------------


def write_aol_csv(seq: AolSequence, path) -> None:
    lines = [f"#utterance_id={seq.utterance_id}", "aol"]
    lines.extend(str(int(v)) for v in seq.labels)
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_aol_csv(path) -> AolSequence:
    meta, header, rows = _read_csv_lines(path)
    if header != ["aol"]:
        raise DataError(f"{path}: expected single 'aol' column")
    try:
        labels = np.array([int(r[0]) for r in rows])
    except ValueError as exc:
        raise DataError(f"{path}: non-integer label: {exc}") from exc
    return AolSequence(meta.get("utterance_id", Path(path).stem), labels)


def write_rol_csv(seq: RolSequence, path) -> None:
    lines = [f"#utterance_id={seq.utterance_id}", "rank,normalized"]
    lines.extend(
        f"{format_float(r)},{format_float(n)}" for r, n in zip(seq.ranks, seq.normalized)
    )
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_rol_csv(path) -> RolSequence:
    meta, header, rows = _read_csv_lines(path)
    if header != ["rank", "normalized"]:
        raise DataError(f"{path}: expected 'rank,normalized' columns")
    values = _parse_matrix(path, header, rows)
    return RolSequence(meta.get("utterance_id", Path(path).stem), values[:, 0], values[:, 1])


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------


def load_manifest(path) -> DatasetManifest:
    """Load and structurally validate a dataset manifest.

    Referenced files are checked when they are actually opened, not here, so
    that training never has to touch (or even see) held-out split files.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot load manifest {path}: {exc}") from exc
    try:
        base = path.parent
        entries = []
        seen_ids: set[str] = set()
        for item in raw["utterances"]:
            uid = str(item["utterance_id"])
            split = str(item["split"])
            if not split:
                raise DataError(f"{path}: empty split tag for utterance {uid!r}")
            if uid in seen_ids:
                raise DataError(f"{path}: duplicate utterance id {uid!r}")
            seen_ids.add(uid)
            entries.append(
                ManifestEntry(
                    utterance_id=uid,
                    features_path=base / item["features"],
                    annotations_path=base / item["annotations"],
                    split=split,
                )
            )
        if not entries:
            raise DataError(f"{path}: manifest declares no utterances")
        pre = raw["preprocessing"]
        manifest = DatasetManifest(
            dataset_name=str(raw["dataset_name"]),
            dimension_name=str(raw["dimension_name"]),
            value_range=(float(raw["value_range"][0]), float(raw["value_range"][1])),
            preprocessing=Preprocessing(
                delay_s=float(pre["delay_s"]),
                window_s=float(pre["window_s"]),
                overlap=float(pre["overlap"]),
            ),
            thresholds=dict(raw["thresholds"]),
            utterances=tuple(entries),
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise DataError(f"{path}: malformed manifest: {exc!r}") from exc
    return manifest
