"""Cohort construction: modality pairing, outcome labeling, patient splits.

Clinical visits arrive as CSV rows (one per acquired image); the output is a
JSON manifest of labeled MRI+PET pairs with a patient-level train/val/test
split, consumed by the preprocessing and training stages.  Image paths in
the manifest are relative to the manifest's own directory.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass
from datetime import date

import numpy as np

from .errors import ConfigError, DataError, LabelError, MissingLabelsError, ShapeError
from .volume import RoiSpec, Volume

__all__ = [
    "DIAGNOSES",
    "MODALITIES",
    "CLASSES",
    "SubjectRecord",
    "PairedSample",
    "CohortManifest",
    "load_clinical_csv",
    "pair_modalities",
    "label_mci_outcome",
    "split_by_patient",
    "apply_roi_mode",
    "build_cohort",
]

DIAGNOSES = ("NL", "MCI", "AD")
MODALITIES = ("MRI", "PET")
CLASSES = ("NL", "AD", "sMCI", "pMCI")

MAX_PAIR_GAP_DAYS = 365     # "within one year", inclusive
CONVERSION_WINDOW_DAYS = 1095  # "within three years", inclusive

MRI_MODES = ("raw", "with_seg", "bin")
PET_GRIDS = ("origin", "dilated")


@dataclass(frozen=True)
class SubjectRecord:
    """One acquired image: who, when, what diagnosis, which modality."""

    patient_id: str
    visit_date: date
    diagnosis: str
    modality: str
    image_path: str

    def __post_init__(self):
        if self.diagnosis not in DIAGNOSES:
            raise LabelError(f"diagnosis must be one of {DIAGNOSES}, got {self.diagnosis!r}")
        if self.modality not in MODALITIES:
            raise LabelError(f"modality must be one of {MODALITIES}, got {self.modality!r}")


@dataclass
class PairedSample:
    """A matched MRI+PET acquisition with its outcome label.

    roi_center overrides the manifest-level ROI center (world mm) when the
    hippocampal center was propagated per image; pet_transform is an
    externally estimated rigid/affine PET-to-MRI world matrix, 16 values
    row-major (identity when absent).
    """

    patient_id: str
    mri_path: str
    pet_path: str
    date_gap_days: int
    label: str
    labels_path: str | None = None
    roi_center: tuple[float, float, float] | None = None
    pet_transform: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.date_gap_days < 0 or self.date_gap_days > MAX_PAIR_GAP_DAYS:
            raise DataError(f"date gap {self.date_gap_days} outside [0, {MAX_PAIR_GAP_DAYS}]")
        if self.label not in CLASSES:
            raise LabelError(f"label must be one of {CLASSES}, got {self.label!r}")


def load_clinical_csv(path) -> list[SubjectRecord]:
    """Read visit records from a CSV with the fixed clinical header."""
    expected = ["patient_id", "visit_date", "diagnosis", "modality", "image_path"]
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != expected:
            raise DataError(f"{path}: expected header {expected}, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise DataError(f"{path}:{lineno}: expected 5 fields, got {len(row)}")
            pid, visit, diag, modality, image_path = (c.strip() for c in row)
            try:
                visit_date = date.fromisoformat(visit)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: bad date {visit!r}: {exc}") from exc
            records.append(SubjectRecord(pid, visit_date, diag, modality, image_path))
    return records


def label_mci_outcome(visits: list[SubjectRecord]) -> str:
    """Classify one MCI patient's trajectory as pMCI, sMCI or excluded.

    pMCI: converts to AD within 1095 days of the MCI baseline; sMCI: at
    least 1095 days of follow-up with no conversion; excluded otherwise.
    """
    if not visits:
        raise DataError("no visits given")
    ordered = sorted(visits, key=lambda r: r.visit_date)
    baseline = ordered[0]
    if baseline.diagnosis != "MCI":
        raise DataError(f"baseline diagnosis must be MCI, got {baseline.diagnosis}")
    span = (ordered[-1].visit_date - baseline.visit_date).days
    for visit in ordered[1:]:
        delta = (visit.visit_date - baseline.visit_date).days
        if visit.diagnosis == "AD" and delta <= CONVERSION_WINDOW_DAYS:
            return "pMCI"
    if span >= CONVERSION_WINDOW_DAYS:
        return "sMCI"
    return "excluded"


def _match_patient(mris, pets):
    """Greedy min-gap matching; ties broken by earlier PET then MRI date."""
    candidates = []
    for m in mris:
        for p in pets:
            gap = abs((m.visit_date - p.visit_date).days)
            if gap <= MAX_PAIR_GAP_DAYS:
                candidates.append((gap, p.visit_date, m.visit_date, m, p))
    candidates.sort(key=lambda c: (c[0], c[1], c[2], c[4].image_path, c[3].image_path))
    used_m, used_p, matched = set(), set(), []
    for gap, _, _, m, p in candidates:
        if id(m) in used_m or id(p) in used_p:
            continue
        used_m.add(id(m))
        used_p.add(id(p))
        matched.append((m, p, gap))
    return matched


def pair_modalities(records: list[SubjectRecord]):
    """Build labeled MRI+PET pairs from visit records.

    Returns (pairs, leftovers); leftovers lists (record, reason) for images
    that did not survive (no partner within a year, conflicting pair
    diagnoses, or an MCI trajectory with insufficient follow-up).
    """
    by_patient: dict[str, list[SubjectRecord]] = {}
    for rec in records:
        by_patient.setdefault(rec.patient_id, []).append(rec)

    pairs, leftovers = [], []
    for pid in sorted(by_patient):
        visits = by_patient[pid]
        mris = [r for r in visits if r.modality == "MRI"]
        pets = [r for r in visits if r.modality == "PET"]
        matched = _match_patient(mris, pets)
        in_pair = {id(r) for m, p, _ in matched for r in (m, p)}
        for rec in visits:
            if id(rec) not in in_pair:
                leftovers.append((rec, "unmatched"))

        mci_outcome = None
        for m, p, gap in matched:
            if m.diagnosis != p.diagnosis:
                leftovers.append((m, "diagnosis-conflict"))
                leftovers.append((p, "diagnosis-conflict"))
                continue
            if m.diagnosis == "MCI":
                if mci_outcome is None:
                    mci_outcome = label_mci_outcome(visits)
                if mci_outcome == "excluded":
                    leftovers.append((m, "mci-insufficient-followup"))
                    leftovers.append((p, "mci-insufficient-followup"))
                    continue
                label = mci_outcome
            else:
                label = m.diagnosis
            pairs.append(PairedSample(pid, m.image_path, p.image_path, gap, label))
    return pairs, leftovers


def split_by_patient(samples, fractions=(0.7, 0.1, 0.2), seed=0) -> dict[str, str]:
    """Assign each patient to train/val/test with a seeded shuffle.

    Counts follow the fractions by largest remainder, so each split size is
    within one patient of its exact share; samples inherit their patient's
    split, keeping every patient in exactly one split.
    """
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9 or min(fractions) < 0:
        raise ConfigError(f"fractions must be 3 non-negative values summing to 1, got {fractions}")
    patients = sorted({s.patient_id for s in samples})
    if len(patients) < 3:
        raise DataError(f"need at least 3 patients to split, got {len(patients)}")
    rng = np.random.default_rng(seed)
    rng.shuffle(patients)

    n = len(patients)
    ideal = [f * n for f in fractions]
    counts = [int(x) for x in ideal]
    remainders = sorted(range(3), key=lambda i: ideal[i] - counts[i], reverse=True)
    for i in range(n - sum(counts)):
        counts[remainders[i % 3]] += 1

    split = {}
    cursor = 0
    for name, count in zip(("train", "val", "test"), counts):
        for pid in patients[cursor:cursor + count]:
            split[pid] = name
        cursor += count
    return split


def apply_roi_mode(image: Volume, labels: Volume | None, mode: str) -> Volume:
    """Apply one of the MRI treatments: raw, with_seg (masked) or bin."""
    if mode == "raw":
        return image
    if mode not in MRI_MODES:
        raise ConfigError(f"unknown ROI mode {mode!r}, expected one of {MRI_MODES}")
    if labels is None:
        raise MissingLabelsError(f"mode {mode!r} needs a segmentation label volume")
    if labels.dims != image.dims:
        raise ShapeError(f"label dims {labels.dims} != image dims {image.dims}")
    mask = labels.voxels
    if not np.all((mask == 0) | (mask == 1)):
        raise DataError("label volume must be binary {0,1}")
    if mode == "with_seg":
        out = image.voxels * mask
    else:  # bin
        out = mask.astype(np.float32)
    return Volume(out, image.spacing, image.affine.copy())


@dataclass
class CohortManifest:
    """Samples, patient split and preprocessing modes for one study cohort."""

    samples: list[PairedSample]
    split: dict[str, str]
    roi: dict[str, RoiSpec]
    mri_mode: str = "raw"
    pet_grid: str = "origin"
    path: str | None = None  # where this manifest was loaded from, if anywhere

    def __post_init__(self):
        if self.mri_mode not in MRI_MODES:
            raise ConfigError(f"mri_mode must be one of {MRI_MODES}, got {self.mri_mode!r}")
        if self.pet_grid not in PET_GRIDS:
            raise ConfigError(f"pet_grid must be one of {PET_GRIDS}, got {self.pet_grid!r}")
        missing = {s.patient_id for s in self.samples} - set(self.split)
        if missing:
            raise DataError(f"patients missing from split map: {sorted(missing)[:5]}")

    def root(self) -> str:
        return os.path.dirname(os.path.abspath(self.path)) if self.path else "."

    def resolve(self, rel_path: str) -> str:
        return os.path.normpath(os.path.join(self.root(), rel_path))

    def samples_in(self, split_name: str) -> list[PairedSample]:
        return [s for s in self.samples if self.split[s.patient_id] == split_name]

    def to_dict(self) -> dict:
        def roi_dict(r: RoiSpec) -> dict:
            return {
                "center_world": list(r.center_world) if r.center_world is not None else None,
                "size_voxels": list(r.size_voxels),
                "spacing": list(r.spacing),
            }

        return {
            "modes": {"mri": self.mri_mode, "pet": self.pet_grid},
            "roi": {k: roi_dict(v) for k, v in self.roi.items()},
            "samples": [
                {
                    "patient_id": s.patient_id,
                    "mri_path": s.mri_path,
                    "pet_path": s.pet_path,
                    "labels_path": s.labels_path,
                    "date_gap_days": s.date_gap_days,
                    "label": s.label,
                    "roi_center": list(s.roi_center) if s.roi_center is not None else None,
                    "pet_transform": list(s.pet_transform) if s.pet_transform is not None else None,
                }
                for s in self.samples
            ],
            "split": dict(sorted(self.split.items())),
        }

    def save(self, path) -> None:
        path = os.fspath(path)
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        self.path = path

    @classmethod
    def load(cls, path) -> "CohortManifest":
        path = os.fspath(path)
        with open(path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: not a valid manifest: {exc}") from exc
        try:
            samples = [
                PairedSample(
                    patient_id=s["patient_id"],
                    mri_path=s["mri_path"],
                    pet_path=s["pet_path"],
                    date_gap_days=s["date_gap_days"],
                    label=s["label"],
                    labels_path=s.get("labels_path"),
                    roi_center=tuple(s["roi_center"]) if s.get("roi_center") else None,
                    pet_transform=tuple(s["pet_transform"]) if s.get("pet_transform") else None,
                )
                for s in doc["samples"]
            ]
            roi = {
                k: RoiSpec(
                    center_world=tuple(r["center_world"]) if r.get("center_world") else None,
                    size_voxels=tuple(r["size_voxels"]),
                    spacing=tuple(r["spacing"]),
                )
                for k, r in doc["roi"].items()
            }
            manifest = cls(
                samples=samples,
                split=doc["split"],
                roi=roi,
                mri_mode=doc["modes"]["mri"],
                pet_grid=doc["modes"]["pet"],
                path=path,
            )
        except KeyError as exc:
            raise DataError(f"{path}: manifest is missing key {exc}") from exc
        return manifest


def build_cohort(
    records: list[SubjectRecord],
    images_root,
    fractions=(0.7, 0.1, 0.2),
    seed=0,
    roi_size=(96, 96, 48),
    mri_mode="raw",
    pet_grid="origin",
    manifest_dir=".",
):
    """Pair, label and split clinical records into a CohortManifest.

    Image paths are rewritten relative to manifest_dir; a sidecar mask named
    '<mri stem>_mask<ext>' next to an MRI is picked up as the sample's
    segmentation labels.  Returns (manifest, leftovers).
    """
    images_root = os.path.abspath(images_root)
    manifest_dir = os.path.abspath(manifest_dir)
    pairs, leftovers = pair_modalities(records)
    if not pairs:
        raise DataError("no valid MRI+PET pairs in the clinical records")

    for s in pairs:
        mri_abs = os.path.join(images_root, s.mri_path)
        pet_abs = os.path.join(images_root, s.pet_path)
        stem, ext = os.path.splitext(s.mri_path)
        if ext == ".gz":
            stem, ext2 = os.path.splitext(stem)
            ext = ext2 + ext
        mask_abs = os.path.join(images_root, stem + "_mask" + ext)
        s.mri_path = os.path.relpath(mri_abs, manifest_dir)
        s.pet_path = os.path.relpath(pet_abs, manifest_dir)
        if os.path.exists(mask_abs):
            s.labels_path = os.path.relpath(mask_abs, manifest_dir)

    split = split_by_patient(pairs, fractions=fractions, seed=seed)
    pet_spacing = (2.0, 2.0, 2.0) if pet_grid == "dilated" else (1.0, 1.0, 1.0)
    roi = {
        "mri": RoiSpec(None, roi_size, (1.0, 1.0, 1.0)),
        "pet": RoiSpec(None, roi_size, pet_spacing),
    }
    manifest = CohortManifest(pairs, split, roi, mri_mode=mri_mode, pet_grid=pet_grid)
    manifest.path = os.path.join(manifest_dir, "manifest.json")
    return manifest, leftovers
