"""Command-line pipeline: phantom, cohort, preprocess, train, eval, report.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 divergence or
other runtime failure.  Every run prints its fully-resolved configuration
before acting.  Heavy imports happen after thread flags are applied, so
--threads/--deterministic can pin the BLAS pool before numpy loads.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

_USAGE_EXIT = 1
_DATA_EXIT = 2
_RUNTIME_EXIT = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(_USAGE_EXIT)


def _parse_dims(text):
    try:
        dims = tuple(int(p) for p in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"dims must look like 32x32x16, got {text!r}")
    if len(dims) != 3:
        raise argparse.ArgumentTypeError(f"dims must have 3 axes, got {text!r}")
    return dims


def _parse_fractions(text, n, name):
    parts = text.split(",")
    if len(parts) != n:
        raise argparse.ArgumentTypeError(f"{name} needs {n} comma-separated values, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{name} must be numeric, got {text!r}")


_MRI_MODE_CLI = {"raw": "raw", "withseg": "with_seg", "bin": "bin"}
_TASK_CLI = {"nl-ad": "nl_ad", "nl-pmci": "nl_pmci", "smci-pmci": "smci_pmci"}


def build_parser():
    parser = _Parser(prog="hfnet", description=__doc__.splitlines()[0])
    parser.add_argument("--threads", type=int, default=0,
                        help="BLAS thread count (0 = library default)")
    parser.add_argument("--deterministic", action="store_true",
                        help="single-threaded BLAS for bit-identical reruns")
    sub = parser.add_subparsers(dest="verb", parser_class=_Parser)

    p = sub.add_parser("phantom", help="generate a synthetic verification cohort")
    p.add_argument("--subjects", type=int, required=True)
    p.add_argument("--dims", type=_parse_dims, default=(32, 32, 16))
    p.add_argument("--delta", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--classes", default="0.5,0.5,0,0",
                   help="fractions over NL,AD,sMCI,pMCI")
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--jitter", type=float, default=0.05,
                   help="per-subject anatomical radius jitter")
    p.add_argument("--cortex-signal", action="store_true",
                   help="add off-hippocampus structures carrying class signal")

    p = sub.add_parser("cohort", help="pair, label and split clinical records")
    p.add_argument("--clinical", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--out", required=True, help="manifest JSON path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fractions", default="0.7,0.1,0.2")
    p.add_argument("--roi-size", type=_parse_dims, default=(96, 96, 48))
    p.add_argument("--mri-mode", choices=sorted(_MRI_MODE_CLI), default="raw")
    p.add_argument("--pet-grid", choices=["origin", "dilated"], default="origin")

    p = sub.add_parser("preprocess", help="extract, align and normalize ROI volumes")
    p.add_argument("--manifest", required=True)
    p.add_argument("--mri-mode", choices=sorted(_MRI_MODE_CLI), default=None)
    p.add_argument("--pet-grid", choices=["origin", "dilated"], default=None)
    p.add_argument("--normalize", choices=["zscore", "minmax"], default="zscore")
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train a classifier with the fixed-epoch protocol")
    p.add_argument("--config", default=None, help="JSON file of TrainConfig fields")
    p.add_argument("--manifest", required=True)
    p.add_argument("--arch", choices=["single", "fusionA", "fusionB1", "fusionB2"], default=None)
    p.add_argument("--task", choices=sorted(_TASK_CLI), default=None)
    p.add_argument("--modality", choices=["mri", "pet"], default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--width", type=float, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a manifest split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", choices=["train", "val", "test"], default="test")
    p.add_argument("--cross-task", choices=sorted(_TASK_CLI), default=None,
                   help="evaluate on another task's samples without retraining")
    p.add_argument("--out", default=None, help="directory (or .json path) for the report")

    p = sub.add_parser("report", help="emit metric and ROC CSVs from eval reports")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    return parser


def _print_config(verb, options):
    print(f"[hfnet {verb}] configuration:")
    print(json.dumps(options, indent=2, sort_keys=True, default=str))


def _cmd_phantom(args):
    from .phantom import generate_phantom_cohort

    class_mix = _parse_fractions(args.classes, 4, "--classes")
    options = {
        "subjects": args.subjects, "dims": args.dims, "delta": args.delta,
        "seed": args.seed, "out": args.out, "class_mix": class_mix,
        "sigma": args.sigma, "jitter": args.jitter, "cortex_signal": args.cortex_signal,
    }
    _print_config("phantom", options)
    records = generate_phantom_cohort(
        args.out, args.subjects, class_mix=class_mix, dims=args.dims,
        atrophy_delta=args.delta, seed=args.seed, noise_sigma=args.sigma,
        cortex_signal=args.cortex_signal, radius_jitter=args.jitter,
    )
    print(f"wrote {len(records)} visit records for {args.subjects} subjects to {args.out}")
    return 0


def _cmd_cohort(args):
    from .cohort import build_cohort, load_clinical_csv

    fractions = _parse_fractions(args.fractions, 3, "--fractions")
    options = {
        "clinical": args.clinical, "images": args.images, "out": args.out,
        "seed": args.seed, "fractions": fractions, "roi_size": args.roi_size,
        "mri_mode": _MRI_MODE_CLI[args.mri_mode], "pet_grid": args.pet_grid,
    }
    _print_config("cohort", options)
    records = load_clinical_csv(args.clinical)
    manifest_dir = os.path.dirname(os.path.abspath(args.out)) or "."
    os.makedirs(manifest_dir, exist_ok=True)
    manifest, leftovers = build_cohort(
        records, args.images, fractions=fractions, seed=args.seed,
        roi_size=args.roi_size, mri_mode=_MRI_MODE_CLI[args.mri_mode],
        pet_grid=args.pet_grid, manifest_dir=manifest_dir,
    )
    manifest.save(args.out)
    counts = {}
    for s in manifest.samples:
        counts[s.label] = counts.get(s.label, 0) + 1
    print(f"manifest {args.out}: {len(manifest.samples)} pairs {counts}")
    for rec, reason in leftovers:
        print(f"  left out: {rec.patient_id} {rec.modality} {rec.visit_date} ({reason})")
    return 0


def _cmd_preprocess(args):
    from .cohort import CohortManifest
    from .pipeline import preprocess_cohort

    mri_mode = _MRI_MODE_CLI[args.mri_mode] if args.mri_mode else None
    manifest = CohortManifest.load(args.manifest)
    options = {
        "manifest": args.manifest, "out": args.out,
        "mri_mode": mri_mode or manifest.mri_mode,
        "pet_grid": args.pet_grid or manifest.pet_grid,
        "normalize": args.normalize,
    }
    _print_config("preprocess", options)
    out = preprocess_cohort(manifest, args.out, mri_mode=mri_mode,
                            pet_grid=args.pet_grid, normalize=args.normalize)
    print(f"processed {len(out.samples)} samples into {args.out}")
    return 0


def _cmd_train(args):
    from .cohort import CohortManifest
    from .train import TrainConfig, load_task_data, select_best_checkpoint, train

    if args.config:
        config = TrainConfig.from_file(args.config)
    else:
        config = TrainConfig()
    overrides = {
        "arch": args.arch,
        "task": _TASK_CLI[args.task] if args.task else None,
        "modality": args.modality,
        "epochs": args.epochs,
        "width": args.width,
        "batch_size": args.batch_size,
        "learning_rate": args.lr,
        "seed": args.seed,
    }
    fields = config.to_dict()
    fields.update({k: v for k, v in overrides.items() if v is not None})
    config = TrainConfig.from_dict(fields)

    effective = config.to_dict()
    effective["batch_size"] = config.resolved_batch_size()
    effective.update({"manifest": args.manifest, "out": args.out})
    _print_config("train", effective)

    manifest = CohortManifest.load(args.manifest)
    result = train(config, manifest, args.out)
    print(f"checkpoints: {[os.path.basename(p) for p in result.checkpoint_paths]}")
    print(f"log: {result.log_path}")

    X_val, y_val = load_task_data(manifest, config.task, "val", config.arch, config.modality)
    best_path, best_report = select_best_checkpoint(result.checkpoint_paths, X_val, y_val)
    best = {
        "checkpoint": os.path.basename(best_path),
        "val_acc": best_report.acc,
        "val_auc": best_report.auc,
    }
    with open(os.path.join(args.out, "best.json"), "w") as fh:
        json.dump(best, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"best checkpoint: {best['checkpoint']} "
          f"(val ACC {best['val_acc']:.4f}, AUC {best['val_auc']:.4f})")
    return 0


def _cmd_eval(args):
    from .checkpoint import load_checkpoint
    from .cohort import CohortManifest
    from .train import cross_task_evaluate, evaluate_model, load_task_data

    manifest = CohortManifest.load(args.manifest)
    model = load_checkpoint(args.checkpoint)
    own_task = model.meta.get("task", "nl_ad")
    task = _TASK_CLI[args.cross_task] if args.cross_task else own_task
    options = {
        "checkpoint": args.checkpoint, "manifest": args.manifest, "split": args.split,
        "task": task, "arch": model.arch_id, "out": args.out,
    }
    _print_config("eval", options)

    if args.cross_task:
        report = cross_task_evaluate(args.checkpoint, manifest, task, split=args.split)
    else:
        X, y = load_task_data(manifest, task, args.split, model.arch_id,
                              model.meta.get("modality", "mri"))
        report = evaluate_model(model, X, y)

    print(f"{task} {model.arch_id} [{args.split}]: "
          f"ACC {report.acc:.4f} SEN {report.sen:.4f} SPE {report.spe:.4f} AUC {report.auc:.4f}")
    if args.out:
        tag = f"{task}_{model.arch_id}"
        if args.out.endswith(".json"):
            path = args.out
            os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        else:
            os.makedirs(args.out, exist_ok=True)
            path = os.path.join(args.out, f"report_{tag}.json")
        doc = {"task": task, "arch": model.arch_id, "tag": tag,
               "split": args.split, "metrics": report.to_dict()}
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"report written to {path}")
    return 0


def _cmd_report(args):
    from .errors import DataError
    from .metrics import MetricsReport, emit_report

    options = {"in": args.in_dir, "out": args.out}
    _print_config("report", options)
    entries = []
    for name in sorted(os.listdir(args.in_dir)):
        if not (name.startswith("report_") and name.endswith(".json")):
            continue
        with open(os.path.join(args.in_dir, name)) as fh:
            doc = json.load(fh)
        entries.append({
            "task": doc["task"], "arch": doc["arch"], "tag": doc["tag"],
            "report": MetricsReport.from_dict(doc["metrics"]),
        })
    if not entries:
        raise DataError(f"no report_*.json files under {args.in_dir}")
    written = emit_report(entries, args.out)
    for path in written:
        print(f"wrote {path}")
    return 0


_COMMANDS = {
    "phantom": _cmd_phantom,
    "cohort": _cmd_cohort,
    "preprocess": _cmd_preprocess,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "report": _cmd_report,
}


def _apply_thread_flags(argv):
    """Pin BLAS pools before numpy is imported anywhere in the process."""
    threads = 0
    if "--deterministic" in argv:
        threads = 1
    if "--threads" in argv:
        i = argv.index("--threads")
        if i + 1 < len(argv):
            try:
                threads = int(argv[i + 1])
            except ValueError:
                pass  # the parser reports this properly
    if threads > 0:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(threads)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    _apply_thread_flags(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.verb is None:
            parser.print_usage(sys.stderr)
            return _USAGE_EXIT
        return _COMMANDS[args.verb](args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except Exception as exc:  # map package errors onto the exit-code contract
        from .checkpoint import CheckpointFormatError
        from .errors import DataError, DivergenceError, HfnetError

        if isinstance(exc, DivergenceError):
            print(f"hfnet: divergence: {exc}", file=sys.stderr)
            return _RUNTIME_EXIT
        if isinstance(exc, (DataError, CheckpointFormatError, HfnetError, OSError,
                            json.JSONDecodeError, KeyError)):
            print(f"hfnet: error: {exc}", file=sys.stderr)
            return _DATA_EXIT
        print(f"hfnet: unexpected error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return _RUNTIME_EXIT


if __name__ == "__main__":
    sys.exit(main())
