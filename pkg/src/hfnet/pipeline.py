"""Volume preprocessing stage: ROI extraction, alignment, normalization.

For each paired sample the MRI is cut to the hippocampal ROI (cropped when
it already lives on the ROI grid, trilinearly resampled otherwise), then
intensity-normalized and put through the configured MRI treatment (raw /
with_seg / bin).  The PET is resampled onto either the exact MRI ROI grid
("origin") or a 2 mm grid with the same center covering 8x the volume
("dilated"), applying a per-sample PET-to-MRI transform when one is given.
Processed volumes plus an updated manifest land in the output directory.
"""

from __future__ import annotations

import os

import numpy as np

from .cohort import CohortManifest, PairedSample, apply_roi_mode
from .errors import DataError
from .nifti import read_volume, write_volume
from .volume import GridSpec, RoiSpec, Volume, crop_roi, normalize_intensity, resample

__all__ = ["preprocess_cohort"]


def _to_roi_grid(v: Volume, roi: RoiSpec) -> Volume:
    if np.allclose(roi.spacing, v.spacing, rtol=1e-6, atol=1e-9):
        return crop_roi(v, roi)
    return resample(v, roi)


def _binarize(v: Volume) -> Volume:
    return Volume((v.voxels >= 0.5).astype(np.float32), v.spacing, v.affine.copy())


def _dilated_grid(mri_roi: Volume, size_voxels, spacing=(2.0, 2.0, 2.0)) -> GridSpec:
    """2 mm grid sharing the MRI ROI's center (dims/2 convention) and size."""
    center = mri_roi.world_center()
    sp = np.asarray(spacing, dtype=np.float64)
    size = np.asarray(size_voxels, dtype=np.float64)
    affine = np.diag((*spacing, 1.0))
    affine[:3, 3] = center - sp * size / 2.0
    return GridSpec(tuple(int(s) for s in size_voxels), tuple(spacing), affine)


def _pet_world_transform(sample: PairedSample):
    if sample.pet_transform is None:
        return None
    mat = np.asarray(sample.pet_transform, dtype=np.float64)
    if mat.size != 16:
        raise DataError(f"pet_transform must have 16 entries, got {mat.size}")
    return mat.reshape(4, 4)


def preprocess_cohort(manifest: CohortManifest, out_dir, mri_mode=None, pet_grid=None,
                      normalize="zscore") -> CohortManifest:
    """Apply the ROI pipeline to every sample; returns the new manifest."""
    mri_mode = mri_mode or manifest.mri_mode
    pet_grid = pet_grid or manifest.pet_grid
    os.makedirs(out_dir, exist_ok=True)

    roi_mri_spec = manifest.roi["mri"]
    roi_pet_spec = manifest.roi.get("pet", roi_mri_spec)
    new_samples = []
    for i, s in enumerate(manifest.samples):
        mri = read_volume(manifest.resolve(s.mri_path))
        center = s.roi_center
        if center is None and roi_mri_spec.center_world is not None:
            center = roi_mri_spec.center_world
        if center is None:
            center = tuple(mri.world_center())
        roi_mri = RoiSpec(center, roi_mri_spec.size_voxels, roi_mri_spec.spacing)
        mri_roi = _to_roi_grid(mri, roi_mri)

        labels_roi = None
        if s.labels_path is not None:
            labels = read_volume(manifest.resolve(s.labels_path))
            labels_roi = _binarize(_to_roi_grid(labels, roi_mri))

        # mask before normalizing so with_seg statistics depend only on
        # voxels the segmentation keeps; bin stays a clean {0,1} volume
        if mri_mode == "bin":
            mri_out = apply_roi_mode(mri_roi, labels_roi, "bin")
        else:
            mri_out = normalize_intensity(apply_roi_mode(mri_roi, labels_roi, mri_mode), normalize)

        pet = read_volume(manifest.resolve(s.pet_path))
        if pet_grid == "dilated":
            target = _dilated_grid(mri_roi, roi_pet_spec.size_voxels)
        else:
            target = GridSpec.of_volume(mri_roi)
        pet_roi = resample(pet, target, world_transform=_pet_world_transform(s))
        pet_out = normalize_intensity(pet_roi, normalize)

        mri_name, pet_name = f"s{i:04d}_mri.nii", f"s{i:04d}_pet.nii"
        write_volume(mri_out, os.path.join(out_dir, mri_name))
        write_volume(pet_out, os.path.join(out_dir, pet_name))
        new_samples.append(PairedSample(
            patient_id=s.patient_id,
            mri_path=mri_name,
            pet_path=pet_name,
            date_gap_days=s.date_gap_days,
            label=s.label,
        ))

    out = CohortManifest(
        samples=new_samples,
        split=dict(manifest.split),
        roi=dict(manifest.roi),
        mri_mode=mri_mode,
        pet_grid=pet_grid,
    )
    out.save(os.path.join(out_dir, "manifest.json"))
    return out
