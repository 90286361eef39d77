import os

import numpy as np
import pytest

from hfnet.cohort import build_cohort, load_clinical_csv
from hfnet.errors import ConfigError
from hfnet.nifti import read_volume
from hfnet.phantom import generate_phantom_cohort


def dir_digest(path):
    out = {}
    for name in sorted(os.listdir(path)):
        with open(os.path.join(path, name), "rb") as fh:
            out[name] = fh.read()
    return out


def subject_classes(records):
    """Reconstruct each subject's class from its visit rows."""
    by_pid = {}
    for r in records:
        by_pid.setdefault(r.patient_id, []).append(r)
    classes = {}
    for pid, visits in by_pid.items():
        diags = {v.diagnosis for v in visits}
        if diags == {"NL"}:
            classes[pid] = "NL"
        elif diags == {"AD"}:
            classes[pid] = "AD"
        elif "AD" in diags:
            classes[pid] = "pMCI"
        else:
            classes[pid] = "sMCI"
    return classes


class TestDeterminism:
    def test_same_seed_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        generate_phantom_cohort(a, 6, dims=(16, 16, 8), seed=3)
        generate_phantom_cohort(b, 6, dims=(16, 16, 8), seed=3)
        assert dir_digest(a) == dir_digest(b)

    def test_different_seed_differs(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        generate_phantom_cohort(a, 4, dims=(16, 16, 8), seed=3)
        generate_phantom_cohort(b, 4, dims=(16, 16, 8), seed=4)
        assert dir_digest(a) != dir_digest(b)


class TestGeometry:
    def _mean_mask_volume(self, out_dir, records, cls):
        classes = subject_classes(records)
        sizes = [
            read_volume(os.path.join(out_dir, f"{pid}_mri_mask.nii")).voxels.sum()
            for pid, c in classes.items() if c == cls
        ]
        return float(np.mean(sizes))

    def test_zero_delta_equalizes_classes(self, tmp_path):
        out = tmp_path / "c"
        records = generate_phantom_cohort(
            out, 40, class_mix=(0.5, 0.5, 0, 0), dims=(32, 32, 16), atrophy_delta=0.0, seed=5)
        nl = self._mean_mask_volume(out, records, "NL")
        ad = self._mean_mask_volume(out, records, "AD")
        assert abs(ad / nl - 1.0) < 0.05

    def test_mask_volume_scales_as_radius_cubed(self, tmp_path):
        out = tmp_path / "c"
        records = generate_phantom_cohort(
            out, 100, class_mix=(0.5, 0.5, 0, 0), dims=(32, 32, 16), atrophy_delta=0.3, seed=6)
        nl = self._mean_mask_volume(out, records, "NL")
        ad = self._mean_mask_volume(out, records, "AD")
        assert abs(ad / nl - 0.7 ** 3) < 0.05 * 0.7 ** 3

    def test_pet_intensity_scales(self, tmp_path):
        out = tmp_path / "c"
        records = generate_phantom_cohort(
            out, 40, class_mix=(0.5, 0.5, 0, 0), dims=(32, 32, 16), atrophy_delta=0.4,
            seed=7, noise_sigma=0.01)
        classes = subject_classes(records)
        means = {"NL": [], "AD": []}
        for pid, cls in classes.items():
            pet = read_volume(os.path.join(out, f"{pid}_pet.nii")).voxels
            mask = read_volume(os.path.join(out, f"{pid}_mri_mask.nii")).voxels > 0
            means[cls].append(pet[mask].mean())
        ratio = np.mean(means["AD"]) / np.mean(means["NL"])
        assert abs(ratio - 0.6) < 0.05

    def test_cortex_signal_outside_mask(self, tmp_path):
        out = tmp_path / "c"
        records = generate_phantom_cohort(
            out, 4, class_mix=(1.0, 0, 0, 0), dims=(32, 32, 16), seed=8,
            noise_sigma=0.01, cortex_signal=True)
        pid = records[0].patient_id
        mri = read_volume(os.path.join(out, f"{pid}_mri.nii")).voxels
        mask = read_volume(os.path.join(out, f"{pid}_mri_mask.nii")).voxels > 0
        outside = mri[~mask]
        assert (outside > 0.5).sum() > 50  # off-hippocampus structure exists


class TestValidation:
    def test_too_few_subjects(self, tmp_path):
        with pytest.raises(ConfigError):
            generate_phantom_cohort(tmp_path / "x", 1)

    def test_dims_too_small(self, tmp_path):
        with pytest.raises(ConfigError):
            generate_phantom_cohort(tmp_path / "x", 4, dims=(8, 8, 4))

    def test_bad_mix(self, tmp_path):
        with pytest.raises(ConfigError):
            generate_phantom_cohort(tmp_path / "x", 4, class_mix=(0.5, 0.2, 0, 0))


class TestCohortIntegration:
    def test_phantom_feeds_cohort_builder(self, tmp_path):
        out = tmp_path / "c"
        records = generate_phantom_cohort(
            out, 12, class_mix=(0.25, 0.25, 0.25, 0.25), dims=(16, 16, 8), seed=9)
        loaded = load_clinical_csv(os.path.join(out, "clinical.csv"))
        assert [(r.patient_id, r.visit_date) for r in loaded] == \
               [(r.patient_id, r.visit_date) for r in records]
        manifest, leftovers = build_cohort(loaded, out, roi_size=(16, 16, 8),
                                           manifest_dir=tmp_path)
        assert len(manifest.samples) == 12
        labels = {s.label for s in manifest.samples}
        assert labels == {"NL", "AD", "sMCI", "pMCI"}
        for s in manifest.samples:
            assert s.labels_path is not None  # mask sidecars picked up
            assert os.path.exists(manifest.resolve(s.labels_path))
        truth = subject_classes(records)
        for s in manifest.samples:
            assert s.label == truth[s.patient_id]
