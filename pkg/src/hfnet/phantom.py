"""Synthetic stand-in cohorts for desk-scale verification.

Each subject gets an MRI-like and a PET-like volume holding two ellipsoidal
"hippocampi" on a noisy background, plus a binary mask of those ellipsoids.
Disease severity shrinks the ellipsoid radii and dims the PET structure
intensity, so small networks can learn the classes in minutes.  Generation
is a pure function of (arguments, seed); every subject draws from its own
seed-derived stream.
"""

from __future__ import annotations

import csv
import os
from datetime import date, timedelta

import numpy as np

from .cohort import CLASSES, SubjectRecord
from .errors import ConfigError
from .nifti import write_volume
from .volume import Volume

__all__ = ["CLASS_SEVERITY", "generate_phantom_cohort"]

# Fraction of the full atrophy_delta applied per class.  The intermediate
# MCI grades sit strictly between the NL/AD extremes, which is what makes
# cross-task transfer (train on extremes, test on intermediates) non-trivial.
CLASS_SEVERITY = {"NL": 0.0, "sMCI": 0.25, "pMCI": 0.75, "AD": 1.0}

# Fractional positions/sizes of the two hippocampal ellipsoids and, when
# enabled, two off-hippocampus "cortex" blobs that carry the same class
# signal but are erased by segmentation masking.  The cortex responds to
# severity more strongly (gain > 1) so unmasked images hold an easier
# signal than the hippocampal shape alone.
_HIPPO_CENTERS = ((0.33, 0.5, 0.5), (0.67, 0.5, 0.5))
_HIPPO_RADII = (0.14, 0.16, 0.24)
_CORTEX_CENTERS = ((0.5, 0.20, 0.5), (0.5, 0.80, 0.5))
_CORTEX_RADII = (0.12, 0.08, 0.15)
_CORTEX_INTENSITY = 0.8
_CORTEX_GAIN = 4.0

_EPOCH = date(2006, 1, 1)


def _ellipsoid_mask(dims, center, radii):
    grids = np.meshgrid(*(np.arange(d, dtype=np.float64) for d in dims), indexing="ij")
    acc = np.zeros(dims, dtype=np.float64)
    for g, c, r in zip(grids, center, radii):
        acc += ((g - c) / r) ** 2
    return acc <= 1.0


def _largest_remainder_counts(fractions, total):
    ideal = [f * total for f in fractions]
    counts = [int(x) for x in ideal]
    order = sorted(range(len(fractions)), key=lambda i: ideal[i] - counts[i], reverse=True)
    for i in range(total - sum(counts)):
        counts[order[i % len(fractions)]] += 1
    return counts


def _subject_volumes(dims, severity, atrophy_delta, noise_sigma, cortex_signal,
                     radius_jitter, rng):
    dims = np.asarray(dims, dtype=np.float64)
    scale = 1.0 - severity * atrophy_delta
    cortex_scale = max(0.05, 1.0 - _CORTEX_GAIN * severity * atrophy_delta)
    shape = tuple(int(d) for d in dims)
    jitter = (1.0 - radius_jitter, 1.0 + radius_jitter)

    mask = np.zeros(shape, dtype=bool)
    for frac_center in _HIPPO_CENTERS:
        center = np.array(frac_center) * dims + rng.uniform(-1.5, 1.5, size=3)
        radii = np.array(_HIPPO_RADII) * dims * scale * rng.uniform(*jitter, size=3)
        mask |= _ellipsoid_mask(shape, center, radii)

    cortex = np.zeros(shape, dtype=bool)
    if cortex_signal:
        for frac_center in _CORTEX_CENTERS:
            center = np.array(frac_center) * dims + rng.uniform(-1.5, 1.5, size=3)
            radii = np.array(_CORTEX_RADII) * dims * cortex_scale * rng.uniform(*jitter, size=3)
            cortex |= _ellipsoid_mask(shape, center, radii)

    mri = rng.normal(0.0, noise_sigma, size=shape)
    mri[mask] += 1.0
    mri[cortex] += _CORTEX_INTENSITY * cortex_scale

    pet = rng.normal(0.0, noise_sigma, size=shape)
    pet[mask] += scale
    pet[cortex] += _CORTEX_INTENSITY * cortex_scale

    spacing = (1.0, 1.0, 1.0)
    return (
        Volume(mri.astype(np.float32), spacing),
        Volume(pet.astype(np.float32), spacing),
        Volume(mask.astype(np.float32), spacing),
    )


def _subject_visits(pid, cls, mri_name, pet_name, rng):
    baseline = _EPOCH + timedelta(days=int(rng.integers(0, 365)))
    pet_date = baseline + timedelta(days=int(rng.integers(-60, 61)))
    diagnosis = "MCI" if cls in ("sMCI", "pMCI") else cls
    visits = [
        SubjectRecord(pid, baseline, diagnosis, "MRI", mri_name),
        SubjectRecord(pid, pet_date, diagnosis, "PET", pet_name),
    ]
    # Follow-up rows drive the pMCI/sMCI outcome logic; they reuse the
    # baseline image since only their date and diagnosis matter.
    if cls == "pMCI":
        conv = baseline + timedelta(days=int(rng.integers(400, 1000)))
        visits.append(SubjectRecord(pid, conv, "AD", "MRI", mri_name))
    elif cls == "sMCI":
        last = baseline + timedelta(days=int(rng.integers(1095, 1400)))
        visits.append(SubjectRecord(pid, last, "MCI", "MRI", mri_name))
    return visits


def generate_phantom_cohort(
    out_dir,
    n_subjects,
    class_mix=(0.5, 0.5, 0.0, 0.0),
    dims=(32, 32, 16),
    atrophy_delta=0.3,
    seed=0,
    noise_sigma=0.1,
    cortex_signal=False,
    radius_jitter=0.05,
) -> list[SubjectRecord]:
    """Write a synthetic cohort (volumes + clinical.csv) and return its records.

    class_mix gives fractions over ("NL", "AD", "sMCI", "pMCI"); each subject
    contributes an MRI, a PET, a mask sidecar and the visit rows needed to
    reconstruct its label downstream.
    """
    if n_subjects < 2:
        raise ConfigError(f"need at least 2 subjects, got {n_subjects}")
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or any(d < m for d, m in zip(dims, (16, 16, 8))):
        raise ConfigError(f"dims must be at least (16, 16, 8), got {dims}")
    if len(class_mix) != len(CLASSES) or abs(sum(class_mix) - 1.0) > 1e-9 or min(class_mix) < 0:
        raise ConfigError(f"class_mix must be 4 non-negative fractions summing to 1, got {class_mix}")
    if not 0.0 <= atrophy_delta < 1.0:
        raise ConfigError(f"atrophy_delta must be in [0, 1), got {atrophy_delta}")
    if not 0.0 <= radius_jitter < 0.5:
        raise ConfigError(f"radius_jitter must be in [0, 0.5), got {radius_jitter}")

    os.makedirs(out_dir, exist_ok=True)
    counts = _largest_remainder_counts(class_mix, n_subjects)
    classes = [cls for cls, cnt in zip(CLASSES, counts) for _ in range(cnt)]
    master = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    master.shuffle(classes)

    records = []
    for i, cls in enumerate(classes):
        pid = f"P{i:04d}"
        rng = np.random.default_rng(np.random.SeedSequence([seed, 1 + i]))
        severity = CLASS_SEVERITY[cls]
        mri, pet, mask = _subject_volumes(dims, severity, atrophy_delta, noise_sigma,
                                          cortex_signal, radius_jitter, rng)
        mri_name, pet_name = f"{pid}_mri.nii", f"{pid}_pet.nii"
        write_volume(mri, os.path.join(out_dir, mri_name))
        write_volume(pet, os.path.join(out_dir, pet_name))
        write_volume(mask, os.path.join(out_dir, f"{pid}_mri_mask.nii"))
        records.extend(_subject_visits(pid, cls, mri_name, pet_name, rng))

    with open(os.path.join(out_dir, "clinical.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["patient_id", "visit_date", "diagnosis", "modality", "image_path"])
        for rec in records:
            writer.writerow([rec.patient_id, rec.visit_date.isoformat(), rec.diagnosis, rec.modality, rec.image_path])
    return records
