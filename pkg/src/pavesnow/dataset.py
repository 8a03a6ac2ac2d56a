"""Location-paired image inventory.

Images are ingested from label-named subdirectories into a manifest of
records. Records taken at the same place form snow / snow-free pairs, and
pairs are assigned whole to the train or val split so that both photos of a
location always land on the same side. Test records live at locations that
never appear in train/val.

The manifest is persisted as line-delimited JSON: one header line carrying
the schema version and creation timestamp, followed by one line per record
and one line per pair. Record paths are stored relative to an image root so
a manifest plus its data directory can be moved as a unit.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from PIL import Image

SNOW = "snow"
SNOW_FREE = "snow_free"
LABELS = (SNOW, SNOW_FREE)

# Probability-vector column order used across the whole toolkit:
# index 1 is always the snow class.
CLASS_ORDER = (SNOW_FREE, SNOW)

SPLITS = ("train", "val", "test", "unassigned")
SCHEMA_VERSION = 1

METADATA_FILENAME = "metadata.jsonl"
IMAGE_EXTENSIONS = {".jpg", ".jpeg", ".png", ".bmp", ".webp"}

DEFAULT_LABEL_RULE = {SNOW: SNOW, SNOW_FREE: SNOW_FREE}


class DatasetError(ValueError):
    """Raised when a manifest operation violates its contract."""


@dataclass
class ImageRecord:
    id: str
    path: str  # relative to the manifest's image root
    label: str
    location_id: str
    captured_at: str | None = None
    split: str = "unassigned"

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "path": self.path,
            "label": self.label,
            "location_id": self.location_id,
            "captured_at": self.captured_at,
            "split": self.split,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ImageRecord":
        return cls(
            id=d["id"],
            path=d["path"],
            label=d["label"],
            location_id=d["location_id"],
            captured_at=d.get("captured_at"),
            split=d.get("split", "unassigned"),
        )


@dataclass
class LocationPair:
    location_id: str
    snow_record: str
    snow_free_record: str

    def to_dict(self) -> dict:
        return {
            "location_id": self.location_id,
            "snow_record": self.snow_record,
            "snow_free_record": self.snow_free_record,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LocationPair":
        return cls(d["location_id"], d["snow_record"], d["snow_free_record"])


@dataclass
class Reject:
    """A file that looked like an image but could not be decoded."""

    path: str
    reason: str


@dataclass
class DatasetManifest:
    records: list[ImageRecord]
    pairs: list[LocationPair] = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION
    created_at: str = ""
    image_root: Path | None = None

    def records_by_id(self) -> dict[str, ImageRecord]:
        return {r.id: r for r in self.records}

    def records_in_split(self, split: str) -> list[ImageRecord]:
        return [r for r in self.records if r.split == split]

    def resolve(self, record: ImageRecord) -> Path:
        if self.image_root is None:
            raise DatasetError("manifest has no image root; cannot resolve record paths")
        return Path(self.image_root) / record.path

    def unpaired_records(self) -> list[ImageRecord]:
        """Non-test records not covered by any location pair."""
        paired = {p.snow_record for p in self.pairs} | {p.snow_free_record for p in self.pairs}
        return [r for r in self.records if r.split != "test" and r.id not in paired]

    def content_hash(self) -> str:
        """Digest of records and pairs; independent of header timestamp and layout."""
        h = hashlib.sha256()
        for rec in sorted(self.records, key=lambda r: r.id):
            h.update(json.dumps(rec.to_dict(), sort_keys=True).encode())
            h.update(b"\n")
        for pair in sorted(self.pairs, key=lambda p: p.location_id):
            h.update(json.dumps(pair.to_dict(), sort_keys=True).encode())
            h.update(b"\n")
        return h.hexdigest()


@dataclass
class IngestResult:
    manifest: DatasetManifest
    rejects: list[Reject]


def _default_location_id(filename: str) -> str:
    """Filename stem with a trailing label suffix stripped, if present."""
    stem = Path(filename).stem
    for suffix in ("_snow_free", "_snowfree", "_snow"):
        if stem.endswith(suffix):
            return stem[: -len(suffix)]
    return stem


def _load_sidecar(image_root: Path) -> dict[str, dict]:
    sidecar_path = image_root / METADATA_FILENAME
    if not sidecar_path.exists():
        return {}
    entries: dict[str, dict] = {}
    for line_no, line in enumerate(sidecar_path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            entry = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"{sidecar_path}:{line_no}: invalid metadata line: {exc}") from exc
        if "file" not in entry:
            raise DatasetError(f"{sidecar_path}:{line_no}: metadata line lacks a 'file' key")
        entries[entry["file"]] = entry
    return entries


def ingest(image_root: str | Path, label_rule: dict[str, str] | None = None) -> IngestResult:
    """Scan label-named subdirectories of ``image_root`` into a manifest.

    ``label_rule`` maps subdirectory names to labels; by default ``snow/``
    and ``snow_free/``. A ``metadata.jsonl`` sidecar in ``image_root`` may
    supply ``location_id``, ``captured_at`` and ``split`` (used to mark the
    held-out test locations) per file. Undecodable image files are returned
    as rejects, never silently dropped.
    """
    image_root = Path(image_root)
    if not image_root.is_dir():
        raise DatasetError(f"image root {image_root} is not a directory")
    rule = dict(DEFAULT_LABEL_RULE if label_rule is None else label_rule)
    for subdir, label in rule.items():
        if label not in LABELS:
            raise DatasetError(f"label rule maps {subdir!r} to unknown label {label!r}")

    sidecar = _load_sidecar(image_root)
    records: list[ImageRecord] = []
    rejects: list[Reject] = []
    found_any = False
    for subdir_name in sorted(rule):
        subdir = image_root / subdir_name
        if not subdir.is_dir():
            continue
        label = rule[subdir_name]
        for path in sorted(subdir.rglob("*")):
            if not path.is_file() or path.suffix.lower() not in IMAGE_EXTENSIONS:
                continue
            found_any = True
            rel = path.relative_to(image_root).as_posix()
            try:
                with Image.open(path) as im:
                    im.load()
            except Exception as exc:
                rejects.append(Reject(rel, f"{type(exc).__name__}: {exc}"))
                continue
            meta = sidecar.get(rel, {})
            split_value = meta.get("split", "unassigned")
            if split_value not in SPLITS:
                raise DatasetError(f"metadata for {rel} has invalid split {split_value!r}")
            records.append(
                ImageRecord(
                    id=rel,
                    path=rel,
                    label=label,
                    location_id=meta.get("location_id") or _default_location_id(path.name),
                    captured_at=meta.get("captured_at"),
                    split=split_value,
                )
            )

    if not found_any:
        raise DatasetError(f"no images found under {image_root}")

    manifest = DatasetManifest(
        records=records,
        created_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
        image_root=image_root,
    )
    _warn_on_imbalance(manifest)
    return IngestResult(manifest=manifest, rejects=rejects)


def _warn_on_imbalance(manifest: DatasetManifest) -> None:
    n_snow = sum(1 for r in manifest.records if r.label == SNOW)
    n_free = len(manifest.records) - n_snow
    if n_snow != n_free:
        warnings.warn(
            f"label imbalance: {n_snow} snow vs {n_free} snow_free records",
            stacklevel=3,
        )


def pair_by_location(manifest: DatasetManifest) -> DatasetManifest:
    """Build one snow / snow-free pair per location among non-test records.

    Locations with anything other than exactly one record of each label are
    left unpaired and reported via a warning; they can be inspected through
    ``DatasetManifest.unpaired_records``.
    """
    missing = [r.id for r in manifest.records if not r.location_id]
    if missing:
        raise DatasetError(f"records lack a location_id: {missing}")

    by_location: dict[str, dict[str, list[ImageRecord]]] = {}
    for rec in manifest.records:
        if rec.split == "test":
            continue
        by_location.setdefault(rec.location_id, {SNOW: [], SNOW_FREE: []})[rec.label].append(rec)

    pairs: list[LocationPair] = []
    flagged: list[str] = []
    for location_id in sorted(by_location):
        groups = by_location[location_id]
        if len(groups[SNOW]) == 1 and len(groups[SNOW_FREE]) == 1:
            pairs.append(
                LocationPair(
                    location_id=location_id,
                    snow_record=groups[SNOW][0].id,
                    snow_free_record=groups[SNOW_FREE][0].id,
                )
            )
        else:
            flagged.extend(r.id for r in groups[SNOW] + groups[SNOW_FREE])

    if flagged:
        warnings.warn(f"{len(flagged)} records could not be paired: {sorted(flagged)}", stacklevel=2)
    return replace(manifest, pairs=pairs)


def split(manifest: DatasetManifest, train_fraction: float = 0.8, seed: int = 0) -> DatasetManifest:
    """Assign whole pairs to train/val, shuffled deterministically by ``seed``.

    ``floor(train_fraction * pair_count)`` pairs go to train, the rest to
    val. Test records must already be marked and are left untouched.
    """
    if not 0.0 < train_fraction < 1.0:
        raise DatasetError(f"train_fraction must be in (0, 1), got {train_fraction}")
    unpaired = manifest.unpaired_records()
    if unpaired:
        raise DatasetError(
            "cannot split: unpaired non-test records present: "
            f"{sorted(r.id for r in unpaired)}"
        )

    ordered = sorted(manifest.pairs, key=lambda p: p.location_id)
    perm = np.random.default_rng(seed).permutation(len(ordered))
    n_train = math.floor(train_fraction * len(ordered))
    assignment: dict[str, str] = {}
    for rank, pair_idx in enumerate(perm):
        pair = ordered[pair_idx]
        target = "train" if rank < n_train else "val"
        assignment[pair.snow_record] = target
        assignment[pair.snow_free_record] = target

    new_records = [
        replace(rec, split=assignment.get(rec.id, rec.split)) for rec in manifest.records
    ]
    result = replace(manifest, records=new_records)
    validate_manifest(result)
    return result


def validate_manifest(manifest: DatasetManifest) -> None:
    """Check structural invariants; raises DatasetError on violation."""
    seen: set[str] = set()
    for rec in manifest.records:
        if rec.id in seen:
            raise DatasetError(f"duplicate record id {rec.id!r}")
        seen.add(rec.id)
        if rec.label not in LABELS:
            raise DatasetError(f"record {rec.id}: invalid label {rec.label!r}")
        if rec.split not in SPLITS:
            raise DatasetError(f"record {rec.id}: invalid split {rec.split!r}")

    by_id = manifest.records_by_id()
    for pair in manifest.pairs:
        for ref in (pair.snow_record, pair.snow_free_record):
            if ref not in by_id:
                raise DatasetError(f"pair at {pair.location_id} references unknown record {ref!r}")
        snow_rec = by_id[pair.snow_record]
        free_rec = by_id[pair.snow_free_record]
        if snow_rec.label != SNOW or free_rec.label != SNOW_FREE:
            raise DatasetError(f"pair at {pair.location_id} has mismatched labels")
        if not (snow_rec.location_id == free_rec.location_id == pair.location_id):
            raise DatasetError(f"pair at {pair.location_id} spans different locations")
        if snow_rec.split != free_rec.split:
            raise DatasetError(
                f"pair at {pair.location_id} is split across {snow_rec.split}/{free_rec.split}"
            )

    test_locations = {r.location_id for r in manifest.records if r.split == "test"}
    fit_locations = {r.location_id for r in manifest.records if r.split in ("train", "val")}
    overlap = test_locations & fit_locations
    if overlap:
        raise DatasetError(f"test locations also appear in train/val: {sorted(overlap)}")


def save_manifest(manifest: DatasetManifest, path: str | Path) -> Path:
    path = Path(path)
    validate_manifest(manifest)
    if manifest.image_root is None:
        raise DatasetError("manifest has no image root; cannot be saved")
    path.parent.mkdir(parents=True, exist_ok=True)
    import os

    rel_root = os.path.relpath(Path(manifest.image_root), path.parent)
    header = {
        "schema_version": manifest.schema_version,
        "created_at": manifest.created_at,
        "image_root": Path(rel_root).as_posix(),
        "record_count": len(manifest.records),
        "pair_count": len(manifest.pairs),
    }
    lines = [json.dumps(header, sort_keys=True)]
    lines += [json.dumps(r.to_dict()) for r in sorted(manifest.records, key=lambda r: r.id)]
    lines += [json.dumps(p.to_dict()) for p in sorted(manifest.pairs, key=lambda p: p.location_id)]
    path.write_text("\n".join(lines) + "\n")
    return path


def load_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if not lines:
        raise DatasetError(f"manifest {path} is empty")
    header = json.loads(lines[0])
    if header.get("schema_version") != SCHEMA_VERSION:
        raise DatasetError(
            f"manifest {path} has schema_version {header.get('schema_version')!r}, "
            f"expected {SCHEMA_VERSION}"
        )
    n_records = header["record_count"]
    n_pairs = header["pair_count"]
    if len(lines) != 1 + n_records + n_pairs:
        raise DatasetError(
            f"manifest {path} is truncated: header promises {n_records} records and "
            f"{n_pairs} pairs but the file holds {len(lines) - 1} lines"
        )
    records = [ImageRecord.from_dict(json.loads(ln)) for ln in lines[1 : 1 + n_records]]
    pairs = [LocationPair.from_dict(json.loads(ln)) for ln in lines[1 + n_records :]]
    manifest = DatasetManifest(
        records=records,
        pairs=pairs,
        schema_version=header["schema_version"],
        created_at=header.get("created_at", ""),
        image_root=(path.parent / header["image_root"]).resolve(),
    )
    validate_manifest(manifest)
    return manifest
