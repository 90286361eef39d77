"""hfnet: multi-modality 3D CNN pipeline around the hippocampal ROI.

Lazy submodule access keeps `import hfnet` cheap so the CLI can pin BLAS
threads before numpy loads.
"""

__version__ = "0.1.0"

_SUBMODULES = (
    "volume", "nifti", "cohort", "phantom", "nn", "models", "checkpoint",
    "optim", "metrics", "train", "pipeline", "estimator", "cli", "errors",
)

# Names re-exported from submodules on first access.
_EXPORTS = {
    "Volume": "volume",
    "RoiSpec": "volume",
    "GridSpec": "volume",
    "read_volume": "nifti",
    "write_volume": "nifti",
    "CohortManifest": "cohort",
    "generate_phantom_cohort": "phantom",
    "ModelGraph": "models",
    "build_model": "models",
    "save_checkpoint": "checkpoint",
    "load_checkpoint": "checkpoint",
    "TrainConfig": "train",
    "train": "train",
    "MetricsReport": "metrics",
    "Cnn3dClassifier": "estimator",
}

__all__ = sorted({*_SUBMODULES, *_EXPORTS, "__version__"})


def __getattr__(name):
    import importlib

    if name in _SUBMODULES:
        return importlib.import_module(f".{name}", __name__)
    if name in _EXPORTS:
        module = importlib.import_module(f".{_EXPORTS[name]}", __name__)
        return getattr(module, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
