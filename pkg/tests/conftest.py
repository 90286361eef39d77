
import pytest

from hfnet.cohort import build_cohort, load_clinical_csv
from hfnet.phantom import generate_phantom_cohort
from hfnet.pipeline import preprocess_cohort


@pytest.fixture(scope="session")
def tiny_cohort(tmp_path_factory):
    """A small processed NL/AD phantom cohort shared across protocol tests."""
    root = tmp_path_factory.mktemp("tiny")
    raw = root / "raw"
    generate_phantom_cohort(raw, 24, class_mix=(0.5, 0.5, 0, 0),
                            dims=(16, 16, 8), atrophy_delta=0.4, seed=13)
    records = load_clinical_csv(raw / "clinical.csv")
    manifest, _ = build_cohort(records, raw, fractions=(0.6, 0.2, 0.2), seed=1,
                               roi_size=(16, 16, 8), manifest_dir=root)
    manifest.save(root / "manifest.json")
    processed = preprocess_cohort(manifest, root / "proc")
    return processed
