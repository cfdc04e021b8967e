"""Command-line interface.

Every subcommand validates its inputs, writes outputs atomically (temp file
plus rename), records a manifest (input/output digests, seed, resolved
config) next to its primary output, and exits 0 on success, 1 on data or
runtime errors, 2 on usage errors. All randomness is governed by --seed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import __version__
from .analysis import ensemble_uncertainty, stratify_class, uncertainty_vs_likelihood
from .baseline import (
    WaveletBaseline,
    WaveletConfig,
    extract_features,
    naive_fit,
    naive_predict,
    predict_wavelet_baseline,
    train_wavelet_baseline,
)
from .bootstrap import BootstrapPlan, ci, format_pm, load_plan, make_plan, save_plan
from .hierarchy import decompose_auc, flat_table, render_tree
from .ingest import (
    ParseError,
    parse_metadata,
    parse_ontology,
    read_predictions,
    read_signal,
    write_predictions,
)
from .metrics import (
    ThresholdGrid,
    f_beta,
    fmax,
    g_beta,
    macro_auc,
    optimize_threshold,
    roc_points,
    weighted_confusion,
)
from .records import (
    LabelMatrix,
    Ontology,
    PredictionMatrix,
    Record,
    align,
    build_age_target,
    build_task,
    ensemble_average,
    make_task,
    statement_count_histogram,
)
from .shallow import TrainConfig, load_net, lrp_epsilon, save_net
from .splits import FoldAssignment, split_roles, stratified_folds, subsample_train
from .wavelets import feature_names
from . import reference

DATA_ENV = "ECGBENCH_DATA"

METADATA_NAMES = ("ptbxl_database.csv", "icbeb_database.csv", "metadata.csv")
ONTOLOGY_NAMES = ("scp_statements.csv", "ontology.csv")


class CliError(ValueError):
    """Data or runtime error; exits with status 1."""


# ---------------------------------------------------------------------------
# plumbing: atomic writes, digests, manifests, config files


def _atomic_write_bytes(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_write_text(path: Path, text: str) -> None:
    _atomic_write_bytes(path, text.encode())


def _atomic(path: Path, writer: Callable[[Path], None], extra_suffixes: Sequence[str] = ()) -> None:
    """Run a writer against temp paths, then rename into place."""
    tmp = path.with_name(path.name + ".tmp")
    writer(tmp)
    for suffix in extra_suffixes:
        os.replace(str(tmp) + suffix, str(path) + suffix)
    os.replace(tmp, path)


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(
    primary_out: Path,
    inputs: Sequence[Path],
    outputs: Sequence[Path],
    args: argparse.Namespace,
) -> None:
    config = {}
    for key, value in sorted(vars(args).items()):
        if key.startswith("_") or key in ("func",):
            continue
        if isinstance(value, (str, int, float, bool, list, tuple)) or value is None:
            config[key] = value
    manifest = {
        "tool": "ecgbench",
        "version": __version__,
        "command": sys.argv[1:],
        "config": config,
        "inputs": {str(p): _sha256(Path(p)) for p in inputs if Path(p).is_file()},
        "outputs": {str(p): _sha256(Path(p)) for p in outputs if Path(p).is_file()},
        "env": {DATA_ENV: os.environ.get(DATA_ENV, "")},
    }
    _atomic_write_text(
        primary_out.with_name(primary_out.name + ".manifest.json"),
        json.dumps(manifest, indent=2, sort_keys=True) + "\n",
    )


def _read_config_file(path: Path) -> dict[str, str]:
    """Key = value lines; blank lines and #-comments ignored."""
    out: dict[str, str] = {}
    for line_no, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CliError(f"{path}:{line_no}: expected key = value")
        key, _, value = line.partition("=")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _apply_config(args: argparse.Namespace) -> argparse.Namespace:
    """Fill options that still hold their parser default from the config file."""
    config_path = getattr(args, "config", None)
    if not config_path:
        return args
    values = _read_config_file(Path(config_path))
    defaults: dict[str, object] = getattr(args, "_defaults", {})
    for key, raw in values.items():
        if key not in defaults:
            continue
        if getattr(args, key) != defaults[key]:
            continue  # flag given explicitly; flags override the file
        current = defaults[key]
        if isinstance(current, bool):
            setattr(args, key, raw.lower() in ("1", "true", "yes"))
        elif isinstance(current, int):
            setattr(args, key, int(raw))
        elif isinstance(current, float):
            setattr(args, key, float(raw))
        else:
            setattr(args, key, raw)
    return args


def _subparser_defaults(subparser: argparse.ArgumentParser) -> dict[str, object]:
    out: dict[str, object] = {}
    for action in subparser._actions:
        if action.dest not in ("help", "command", "subcommand"):
            out[action.dest] = action.default
    return out


# ---------------------------------------------------------------------------
# dataset loading helpers


def _resolve_data_dir(args) -> Path:
    data_dir = getattr(args, "data_dir", None) or os.environ.get(DATA_ENV)
    if not data_dir:
        raise CliError(f"no data directory: pass --data-dir or set {DATA_ENV}")
    path = Path(data_dir)
    if not path.is_dir():
        raise CliError(f"data directory {path} does not exist")
    return path


def _find_file(data_dir: Path, names: Sequence[str], what: str) -> Path:
    for name in names:
        candidate = data_dir / name
        if candidate.is_file():
            return candidate
    raise CliError(f"no {what} file in {data_dir} (looked for {', '.join(names)})")


def _load_dataset(args) -> tuple[list[Record], Ontology, Path, Path]:
    data_dir = _resolve_data_dir(args)
    meta_path = _find_file(data_dir, METADATA_NAMES, "metadata")
    onto_path = _find_file(data_dir, ONTOLOGY_NAMES, "ontology")
    return parse_metadata(meta_path), parse_ontology(onto_path), meta_path, onto_path


def _parse_folds(expr: str) -> list[int]:
    """Fold expressions: "10", "1-8", "1,2,5"."""
    folds: list[int] = []
    for part in expr.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-")
            folds.extend(range(int(lo), int(hi) + 1))
        elif part:
            folds.append(int(part))
    if not folds:
        raise CliError(f"empty fold expression {expr!r}")
    return folds


def _subset_labels(labels: LabelMatrix, wanted_ids: Sequence[str]) -> LabelMatrix:
    index = {rid: i for i, rid in enumerate(labels.record_ids)}
    missing = [rid for rid in wanted_ids if rid not in index]
    if missing:
        raise CliError(f"{len(missing)} record ids missing from labels, e.g. {missing[:3]}")
    return labels.take([index[rid] for rid in wanted_ids])


def _load_record_signal(record: Record, data_dir: Path) -> np.ndarray:
    if record.signal is not None:
        return record.signal
    if not record.signal_path:
        raise CliError(f"record {record.record_id} has no signal file path")
    return read_signal(data_dir / (record.signal_path + ".hea"))


# ---------------------------------------------------------------------------
# subcommands


def cmd_ingest_validate(args) -> int:
    records, ontology, meta_path, onto_path = _load_dataset(args)
    n_patients = len({r.patient_id for r in records})
    print(f"{len(records)} records / {n_patients} patients / {len(ontology.codes)} statements")
    print(
        f"categories: {len(ontology.diagnostic)} diagnostic, "
        f"{len(ontology.form)} form, {len(ontology.rhythm)} rhythm"
    )
    print(f"superclasses: {', '.join(ontology.superclass_codes)}")
    artifact_fraction = float(np.mean([1.0 if r.quality_flags else 0.0 for r in records]))
    print(f"artifact-positive fraction: {artifact_fraction:.3f}")
    histograms = {}
    for task_name in ("diag", "sub-diag", "super-diag", "form", "rhythm", "all"):
        hist = statement_count_histogram(records, ontology, task_name)
        histograms[task_name] = hist
        n_classes = len(make_task(task_name, ontology).class_list)
        cells = "  ".join(f"{k}:{v}" for k, v in hist.items())
        print(f"{task_name:>11} ({n_classes:>2} classes)  {cells}")
    if args.expect_ptbxl:
        failures = []
        if len(records) != reference.PTBXL_N_RECORDS:
            failures.append(f"records {len(records)} != {reference.PTBXL_N_RECORDS}")
        if n_patients != reference.PTBXL_N_PATIENTS:
            failures.append(f"patients {n_patients} != {reference.PTBXL_N_PATIENTS}")
        if len(ontology.codes) != reference.PTBXL_N_STATEMENTS:
            failures.append(f"statements {len(ontology.codes)} != {reference.PTBXL_N_STATEMENTS}")
        for task_name, expected in reference.PTBXL_STATEMENT_HISTOGRAMS.items():
            if histograms[task_name] != expected:
                failures.append(f"{task_name} histogram {histograms[task_name]} != {expected}")
        for task_name, expected_classes in reference.PTBXL_CLASS_COUNTS.items():
            got = len(make_task(task_name, ontology).class_list)
            if got != expected_classes:
                failures.append(f"{task_name} classes {got} != {expected_classes}")
        if failures:
            for failure in failures:
                print(f"MISMATCH: {failure}", file=sys.stderr)
            return 1
        print("all expected dataset statistics match")
    return 0


def cmd_task_build(args) -> int:
    records, ontology, meta_path, onto_path = _load_dataset(args)
    out = Path(args.out)
    if args.task == "age":
        ids, ages = build_age_target(records)
        lines = ["record_id,age"] + [f"{rid},{age:g}" for rid, age in zip(ids, ages)]
        _atomic_write_text(out, "\n".join(lines) + "\n")
        _write_manifest(out, [meta_path, onto_path], [out], args)
        print(f"wrote {len(ids)} age targets to {out}")
        return 0
    task = make_task(args.task, ontology)
    labels, kept = build_task(records, ontology, task)
    label_preds = PredictionMatrix(
        record_ids=labels.record_ids, class_codes=labels.class_codes, scores=labels.values
    )
    _atomic(out, lambda p: write_predictions(p, label_preds, binary=out.suffix == ".bin"),
            extra_suffixes=(".ids",) if out.suffix == ".bin" else ())
    outputs = [out]
    if args.ids_out:
        ids_out = Path(args.ids_out)
        _atomic_write_text(ids_out, "\n".join(kept) + "\n")
        outputs.append(ids_out)
    _write_manifest(out, [meta_path, onto_path], outputs, args)
    print(f"task {args.task}: {labels.n_records} records x {labels.n_classes} classes -> {out}")
    return 0


def _read_labels(path: Path) -> LabelMatrix:
    matrix = read_predictions(path)
    if not np.isin(matrix.scores, (0.0, 1.0)).all():
        raise CliError(f"{path}: label file contains non-binary values")
    return LabelMatrix(
        record_ids=matrix.record_ids, class_codes=matrix.class_codes, values=matrix.scores
    )


def _eval_threshold(args, labels: LabelMatrix, metric: str) -> float:
    if args.tau is not None:
        return args.tau
    if not (args.train_preds and args.train_labels):
        raise CliError(
            f"metric {metric} needs a threshold: pass --tau or --train-preds/--train-labels"
        )
    train_preds = read_predictions(Path(args.train_preds))
    train_labels = _read_labels(Path(args.train_labels))
    return optimize_threshold(train_preds, train_labels, metric=metric, beta=args.beta)


def cmd_eval(args) -> int:
    labels = _read_labels(Path(args.labels))
    metric_names = [m.strip() for m in args.metrics.split(",") if m.strip()]
    unknown = set(metric_names) - {"auc", "fmax", "fbeta", "gbeta"}
    if unknown:
        raise CliError(f"unknown metrics: {sorted(unknown)}")

    plan: Optional[BootstrapPlan] = None
    plan_inputs: list[Path] = []
    plan_outputs: list[Path] = []
    if args.bootstrap == "plan":
        if not args.plan:
            raise CliError("--bootstrap plan needs --plan FILE")
        plan = load_plan(Path(args.plan))
        if plan.n_records != labels.n_records:
            raise CliError(
                f"plan covers {plan.n_records} records, labels have {labels.n_records}"
            )
        plan_inputs.append(Path(args.plan))
    elif args.bootstrap == "new":
        plan = make_plan(
            labels,
            n_iterations=args.iters,
            master_seed=args.seed,
            constraint=args.constraint,
        )
        if args.plan:
            plan_path = Path(args.plan)
            _atomic(plan_path, lambda p: save_plan(p, plan))
            plan_outputs.append(plan_path)

    thresholds = {}
    for metric in metric_names:
        if metric in ("fbeta", "gbeta"):
            thresholds[metric] = _eval_threshold(args, labels, metric)

    def metric_fn(name: str) -> Callable[[PredictionMatrix, LabelMatrix], float]:
        beta = args.beta
        if name == "auc":
            return lambda p, l: macro_auc(p, l)[1]
        if name == "fmax":
            return lambda p, l: fmax(p, l).fmax
        if name == "fbeta":
            tau = thresholds["fbeta"]
            return lambda p, l: f_beta(weighted_confusion(p, l, tau), beta)[1]
        tau = thresholds["gbeta"]
        return lambda p, l: g_beta(weighted_confusion(p, l, tau), beta)[1]

    header = ["method"] + metric_names
    table_lines = ["  ".join(header)]
    csv_lines = ["method,metric,point,lower,upper,formatted"]
    for preds_path in args.preds:
        preds = read_predictions(Path(preds_path))
        name = Path(preds_path).stem
        cells = [name]
        for metric in metric_names:
            fn = metric_fn(metric)
            if plan is not None:
                report = ci(fn, preds, labels, plan)
                cells.append(report.formatted)
                csv_lines.append(
                    f"{name},{metric},{report.point:.6f},{report.lower:.6f},"
                    f"{report.upper:.6f},{report.formatted}"
                )
            else:
                point = fn(preds, labels)
                cells.append(f"{point:.3f}")
                csv_lines.append(f"{name},{metric},{point:.6f},,,")
        table_lines.append("  ".join(cells))
    table = "\n".join(table_lines) + "\n"
    print(table, end="")
    outputs = list(plan_outputs)
    if args.out:
        out = Path(args.out)
        _atomic_write_text(out, table)
        csv_out = out.with_suffix(out.suffix + ".csv") if out.suffix != ".csv" else out
        _atomic_write_text(csv_out, "\n".join(csv_lines) + "\n")
        outputs += [out, csv_out]
        inputs = [Path(p) for p in args.preds] + [Path(args.labels)] + plan_inputs
        _write_manifest(out, inputs, outputs, args)
    return 0


def cmd_ensemble(args) -> int:
    matrices = [read_predictions(Path(p)) for p in args.preds]
    averaged = ensemble_average(matrices)
    out = Path(args.out)
    _atomic(out, lambda p: write_predictions(p, averaged, binary=out.suffix == ".bin"),
            extra_suffixes=(".ids",) if out.suffix == ".bin" else ())
    _write_manifest(out, [Path(p) for p in args.preds], [out], args)
    print(f"averaged {len(matrices)} prediction files -> {out}")
    return 0


def cmd_hierarchy_decompose(args) -> int:
    records, ontology, meta_path, onto_path = _load_dataset(args)
    preds = read_predictions(Path(args.preds))
    labels_all, _ = build_task(records, ontology, make_task("diag", ontology))
    labels = _subset_labels(labels_all, preds.record_ids)
    report = decompose_auc(preds, labels, ontology, mode=args.mode)
    tree = render_tree(report)
    print(tree, end="")
    out = Path(args.out)
    _atomic_write_text(out, tree)
    rows = flat_table(report)
    csv_text = "code,level,parent,auc,positives\n" + "\n".join(
        f"{r['code']},{r['level']},{r['parent']},{r['auc']},{r['positives']}" for r in rows
    )
    table_out = Path(args.table_out) if args.table_out else out.with_suffix(".csv")
    _atomic_write_text(table_out, csv_text + "\n")
    _write_manifest(out, [Path(args.preds), meta_path, onto_path], [out, table_out], args)
    return 0


def cmd_stratify(args) -> int:
    preds = read_predictions(Path(args.preds))
    labels = _read_labels(Path(args.labels))
    report = stratify_class(
        preds, labels, args.target_class, k=args.k, seed=args.seed
    )
    lines = [
        f"class {report.target_class}: overall AUC {report.overall_auc:.3f}, "
        f"{len(report.assignment.record_ids)} positives, k={report.assignment.k}"
        + (" (degenerate: identical prediction vectors)" if report.degenerate else "")
    ]
    for cluster in report.clusters:
        auc = "n/a" if cluster.auc is None else f"{cluster.auc:.3f}"
        top = sorted(cluster.cooccurrence.items(), key=lambda kv: -kv[1])[:5]
        top_txt = ", ".join(f"{code}={freq:.2f}" for code, freq in top)
        lines.append(
            f"  cluster {cluster.cluster}: size {cluster.size}, AUC {auc}, top labels: {top_txt}"
        )
    summary = "\n".join(lines) + "\n"
    print(summary, end="")
    out = Path(args.out)
    _atomic_write_text(out, summary)
    assign_csv = "record_id,cluster\n" + "\n".join(
        f"{rid},{c}" for rid, c in zip(report.assignment.record_ids, report.assignment.cluster)
    )
    assign_out = out.with_suffix(".assignments.csv")
    _atomic_write_text(assign_out, assign_csv + "\n")
    outputs = [out, assign_out]

    # per-cluster ROC point series against the common negative pool
    t = labels.class_codes.index(args.target_class)
    truth = labels.values[:, t]
    aligned = align(preds, labels)
    roc_lines = ["series,fpr,tpr"]
    fpr, tpr = roc_points(aligned.scores[:, t], truth)
    roc_lines += [f"all,{x:.6f},{y:.6f}" for x, y in zip(fpr, tpr)]
    cluster_of = dict(zip(report.assignment.record_ids, report.assignment.cluster))
    neg_idx = np.flatnonzero(truth == 0.0)
    for cluster in report.clusters:
        members = [
            i
            for i, rid in enumerate(labels.record_ids)
            if truth[i] == 1.0 and cluster_of.get(rid) == cluster.cluster
        ]
        if not members:
            continue
        subset = np.concatenate([np.array(members, dtype=int), neg_idx])
        sub_truth = np.zeros(len(subset))
        sub_truth[: len(members)] = 1.0
        fpr, tpr = roc_points(aligned.scores[subset, t], sub_truth)
        roc_lines += [
            f"cluster{cluster.cluster},{x:.6f},{y:.6f}" for x, y in zip(fpr, tpr)
        ]
    roc_out = Path(args.roc_out) if args.roc_out else out.with_suffix(".roc.csv")
    _atomic_write_text(roc_out, "\n".join(roc_lines) + "\n")
    outputs.append(roc_out)
    _write_manifest(out, [Path(args.preds), Path(args.labels)], outputs, args)
    return 0


def cmd_uncertainty(args) -> int:
    ensemble_dir = Path(args.ensemble_dir)
    pred_files = sorted(
        p for p in ensemble_dir.iterdir()
        if p.suffix in (".bin", ".csv") and not p.name.endswith(".ids")
    )
    if len(pred_files) < 2:
        raise CliError(f"{ensemble_dir}: need at least 2 prediction files, found {len(pred_files)}")
    members = [read_predictions(p) for p in pred_files]
    mean, std = ensemble_uncertainty(members)
    records, ontology, meta_path, onto_path = _load_dataset(args)
    labels_all, _ = build_task(records, ontology, make_task(args.task, ontology))
    labels = _subset_labels(labels_all, mean.record_ids)
    table = uncertainty_vs_likelihood(std, labels, means=mean.scores)
    bucket_lines = ["likelihood,count,q05,q25,q50,q75,q95"]
    for bucket in table.buckets:
        if bucket.quantiles is None:
            bucket_lines.append(f"{bucket.likelihood:g},0,,,,,")
        else:
            qs = ",".join(f"{q:.6f}" for q in bucket.quantiles)
            bucket_lines.append(f"{bucket.likelihood:g},{bucket.count},{qs}")
    out = Path(args.out)
    _atomic_write_text(out, "\n".join(bucket_lines) + "\n")
    rows_out = out.with_suffix(".rows.csv")
    row_lines = ["record_id,class,likelihood,ensemble_mean,ensemble_std"]
    row_lines += [
        f"{r.record_id},{r.class_code},{r.likelihood:g},{r.ensemble_mean:.6f},{r.ensemble_std:.6f}"
        for r in table.rows
    ]
    _atomic_write_text(rows_out, "\n".join(row_lines) + "\n")
    print("\n".join(bucket_lines))
    _write_manifest(out, pred_files + [meta_path, onto_path], [out, rows_out], args)
    return 0


def cmd_split_make(args) -> int:
    records, _, meta_path, onto_path = _load_dataset(args)
    assignment = stratified_folds(
        records, k=args.k, mode=args.mode, seed=args.seed, clean_tail=args.clean_tail
    )
    out = Path(args.out)
    _atomic(out, lambda p: assignment.save(p))
    _write_manifest(out, [meta_path], [out], args)
    sizes = [int((assignment.folds == f).sum()) for f in range(1, args.k + 1)]
    print(f"assigned {len(records)} records to {args.k} folds: sizes {sizes} -> {out}")
    return 0


def cmd_split_roles(args) -> int:
    assignment = FoldAssignment.load(Path(args.folds))
    train, val, test = split_roles(assignment)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    for name, ids in (("train", train), ("val", val), ("test", test)):
        path = out_dir / f"{name}_ids.txt"
        _atomic_write_text(path, "\n".join(ids) + "\n")
        outputs.append(path)
    _write_manifest(outputs[0], [Path(args.folds)], outputs, args)
    print(f"train {len(train)} / val {len(val)} / test {len(test)} -> {out_dir}")
    return 0


def cmd_split_subsample(args) -> int:
    records, _, meta_path, _ = _load_dataset(args)
    if "/" in args.fraction:
        num, den = args.fraction.split("/")
        fraction = float(num) / float(den)
    else:
        fraction = float(args.fraction)
    k = max(r.fold for r in records)
    if k < 3:
        raise CliError(f"dataset has {k} folds; need >= 3 for train/val/test roles")
    train_records = [r for r in records if r.fold <= k - 2]
    subset = subsample_train(train_records, fraction, seed=args.seed)
    out = Path(args.out)
    _atomic_write_text(out, "\n".join(r.record_id for r in subset) + "\n")
    _write_manifest(out, [meta_path], [out], args)
    print(f"subsampled {len(subset)} of {len(train_records)} training records -> {out}")
    return 0


def _gather_fold_records(records: Sequence[Record], folds: Sequence[int]) -> list[Record]:
    wanted = set(folds)
    out = [r for r in records if r.fold in wanted]
    if not out:
        raise CliError(f"no records in folds {sorted(wanted)}")
    return out


def cmd_baseline_naive(args) -> int:
    records, ontology, meta_path, onto_path = _load_dataset(args)
    task = make_task(args.task, ontology)
    labels, _ = build_task(records, ontology, task)
    fold_of = {r.record_id: r.fold for r in records}
    train_folds = set(_parse_folds(args.train_folds))
    test_folds = set(_parse_folds(args.test_folds))
    train_idx = [i for i, rid in enumerate(labels.record_ids) if fold_of[rid] in train_folds]
    test_idx = [i for i, rid in enumerate(labels.record_ids) if fold_of[rid] in test_folds]
    if not train_idx or not test_idx:
        raise CliError("empty train or test fold selection")
    frequencies = naive_fit(labels.take(train_idx))
    preds = naive_predict(
        frequencies,
        [labels.record_ids[i] for i in test_idx],
        labels.class_codes,
    )
    out = Path(args.out)
    _atomic(out, lambda p: write_predictions(p, preds, binary=out.suffix == ".bin"),
            extra_suffixes=(".ids",) if out.suffix == ".bin" else ())
    _write_manifest(out, [meta_path, onto_path], [out], args)
    print(f"naive baseline: {preds.n_records} test records x {preds.n_classes} classes -> {out}")
    return 0


def cmd_baseline_wavelet_train(args) -> int:
    records, ontology, meta_path, onto_path = _load_dataset(args)
    data_dir = _resolve_data_dir(args)
    task = make_task(args.task, ontology)
    labels, _ = build_task(records, ontology, task)
    fold_of = {r.record_id: r.fold for r in records}
    by_id = {r.record_id: r for r in records}
    train_folds = set(_parse_folds(args.train_folds))
    val_folds = set(_parse_folds(args.val_folds))
    train_ids = [rid for rid in labels.record_ids if fold_of[rid] in train_folds]
    val_ids = [rid for rid in labels.record_ids if fold_of[rid] in val_folds]
    if not train_ids or not val_ids:
        raise CliError("empty train or validation fold selection")
    wavelet_config = WaveletConfig(
        levels=args.levels, window_len=args.window_len if args.window_len > 0 else None
    )
    feats = {}
    for split, ids in (("train", train_ids), ("val", val_ids)):
        signals = [_load_record_signal(by_id[rid], data_dir) for rid in ids]
        crop_seed = args.seed if wavelet_config.window_len is not None else None
        feats[split] = extract_features(signals, wavelet_config, crop_seed=crop_seed)
    config = TrainConfig(
        hidden_dim=args.hidden,
        learning_rate=args.learning_rate,
        weight_decay=args.weight_decay,
        batch_size=args.batch_size,
        max_epochs=args.epochs,
        seed=args.seed,
    )
    model = train_wavelet_baseline(
        feats["train"],
        _subset_labels(labels, train_ids),
        feats["val"],
        _subset_labels(labels, val_ids),
        train_config=config,
        wavelet_config=wavelet_config,
    )
    out = Path(args.out)
    _atomic(out, lambda p: save_net(p, model.net, model.scaler))
    classes_out = Path(str(out) + ".classes")
    meta = {
        "task": args.task,
        "class_codes": list(labels.class_codes),
        "levels": wavelet_config.levels,
        "window_len": wavelet_config.window_len,
    }
    _atomic_write_text(classes_out, json.dumps(meta, indent=2) + "\n")
    _write_manifest(out, [meta_path, onto_path], [out, classes_out], args)
    result = model.train_result
    print(
        f"trained on {len(train_ids)} records ({feats['train'].shape[1]} features): "
        f"best val macro AUC {result.best_val_auc:.3f} at epoch {result.best_epoch} -> {out}"
    )
    return 0


def _load_wavelet_model(model_path: Path) -> WaveletBaseline:
    net, scaler = load_net(model_path)
    classes_path = Path(str(model_path) + ".classes")
    if not classes_path.is_file():
        raise CliError(f"missing class sidecar {classes_path}")
    meta = json.loads(classes_path.read_text())
    return WaveletBaseline(
        net=net,
        scaler=scaler,
        class_codes=tuple(meta["class_codes"]),
        config=WaveletConfig(levels=meta["levels"], window_len=meta["window_len"]),
    )


def cmd_baseline_wavelet_predict(args) -> int:
    records, ontology, meta_path, onto_path = _load_dataset(args)
    data_dir = _resolve_data_dir(args)
    model = _load_wavelet_model(Path(args.model))
    task = make_task(json.loads(Path(str(args.model) + ".classes").read_text())["task"], ontology)
    labels, _ = build_task(records, ontology, task)
    fold_of = {r.record_id: r.fold for r in records}
    by_id = {r.record_id: r for r in records}
    wanted = set(_parse_folds(args.folds))
    ids = [rid for rid in labels.record_ids if fold_of[rid] in wanted]
    if not ids:
        raise CliError(f"no task records in folds {sorted(wanted)}")
    signals = [_load_record_signal(by_id[rid], data_dir) for rid in ids]
    preds = predict_wavelet_baseline(model, signals, ids)
    out = Path(args.out)
    _atomic(out, lambda p: write_predictions(p, preds, binary=out.suffix == ".bin"),
            extra_suffixes=(".ids",) if out.suffix == ".bin" else ())
    _write_manifest(out, [Path(args.model), meta_path, onto_path], [out], args)
    print(f"wavelet baseline: {preds.n_records} records x {preds.n_classes} classes -> {out}")
    return 0


def cmd_lrp(args) -> int:
    records, ontology, meta_path, onto_path = _load_dataset(args)
    data_dir = _resolve_data_dir(args)
    model = _load_wavelet_model(Path(args.model))
    by_id = {r.record_id: r for r in records}
    if args.record not in by_id:
        raise CliError(f"unknown record id {args.record!r}")
    if args.target_class not in model.class_codes:
        raise CliError(f"class {args.target_class!r} not in model classes")
    signal = _load_record_signal(by_id[args.record], data_dir)
    from .wavelets import wavelet_features

    feats = model.scaler.transform(wavelet_features(signal, levels=model.config.levels))
    relevance = lrp_epsilon(
        model.net, feats, model.class_codes.index(args.target_class), eps=args.epsilon
    )
    names = feature_names(signal.shape[0], levels=model.config.levels)
    order = np.argsort(-np.abs(relevance))
    lines = ["feature,relevance"]
    lines += [f"{names[i]},{relevance[i]:.6g}" for i in order]
    out = Path(args.out)
    _atomic_write_text(out, "\n".join(lines) + "\n")
    _write_manifest(out, [Path(args.model), meta_path, onto_path], [out], args)
    top = ", ".join(f"{names[i]}={relevance[i]:.3g}" for i in order[:5])
    print(f"relevance for {args.record}/{args.target_class}: top {top} -> {out}")
    return 0


def cmd_report(args) -> int:
    runs_dir = Path(args.runs)
    if not runs_dir.is_dir():
        raise CliError(f"runs directory {runs_dir} does not exist")
    csv_files = sorted(runs_dir.rglob("*.csv"))
    merged = ["source,method,metric,point,lower,upper,formatted"]
    for path in csv_files:
        lines = path.read_text().splitlines()
        if not lines or lines[0] != "method,metric,point,lower,upper,formatted":
            continue
        merged += [f"{path.name},{line}" for line in lines[1:] if line]
    if len(merged) == 1:
        raise CliError(f"no evaluation tables found under {runs_dir}")
    out = Path(args.out)
    _atomic_write_text(out, "\n".join(merged) + "\n")
    text_lines = []
    for line in merged[1:]:
        source, method, metric, point, lower, upper, formatted = line.split(",")
        text_lines.append(f"{source:30} {method:20} {metric:6} {formatted or point}")
    text_out = out.with_suffix(".txt")
    _atomic_write_text(text_out, "\n".join(text_lines) + "\n")
    print(f"merged {len(merged) - 1} result rows from {runs_dir} -> {out}")
    _write_manifest(out, csv_files, [out, text_out], args)
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_common(parser: argparse.ArgumentParser, data_dir: bool = False) -> None:
    parser.add_argument("--config", help="key = value config file; flags override it")
    parser.add_argument("--seed", type=int, default=0, help="master random seed")
    parser.add_argument(
        "--threads", type=int, default=1,
        help="worker count; outputs are identical for any value",
    )
    if data_dir:
        parser.add_argument(
            "--data-dir", help=f"dataset directory (default: ${DATA_ENV})"
        )
    parser.set_defaults(_leaf_parser=parser)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ecgbench",
        description="Benchmarking and evaluation toolkit for multi-label ECG classification",
    )
    parser.add_argument("--version", action="version", version=f"ecgbench {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="dataset ingestion checks")
    ingest_sub = p.add_subparsers(dest="subcommand", required=True)
    v = ingest_sub.add_parser("validate", help="parse a data dir and report counts")
    v.add_argument("data_dir_pos", nargs="?", metavar="data-dir")
    v.add_argument("--expect-ptbxl", action="store_true",
                   help="fail unless the published dataset statistics match")
    _add_common(v, data_dir=True)
    v.set_defaults(func=cmd_ingest_validate)

    p = sub.add_parser("task", help="label matrix construction")
    task_sub = p.add_subparsers(dest="subcommand", required=True)
    b = task_sub.add_parser("build", help="build a task's label matrix")
    b.add_argument("--task", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--ids-out", help="also write the kept record ids")
    _add_common(b, data_dir=True)
    b.set_defaults(func=cmd_task_build)

    e = sub.add_parser("eval", help="score prediction files against labels")
    e.add_argument("--preds", nargs="+", required=True)
    e.add_argument("--labels", required=True)
    e.add_argument("--metrics", default="auc,fmax")
    e.add_argument("--bootstrap", choices=["new", "plan"], default=None)
    e.add_argument("--plan", help="plan file to load (plan) or store (new)")
    e.add_argument("--iters", type=int, default=1000)
    e.add_argument("--constraint", choices=["none", "every-class-positive"],
                   default="every-class-positive")
    e.add_argument("--beta", type=float, default=2.0)
    e.add_argument("--tau", type=float, default=None,
                   help="fixed threshold for fbeta/gbeta")
    e.add_argument("--train-preds", help="training predictions for threshold optimization")
    e.add_argument("--train-labels", help="training labels for threshold optimization")
    e.add_argument("--out", help="write the formatted table here (csv twin alongside)")
    _add_common(e)
    e.set_defaults(func=cmd_eval)

    en = sub.add_parser("ensemble", help="average prediction files")
    en.add_argument("--preds", nargs="+", required=True)
    en.add_argument("--out", required=True)
    _add_common(en)
    en.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("hierarchy", help="hierarchy analyses")
    h_sub = p.add_subparsers(dest="subcommand", required=True)
    h = h_sub.add_parser("decompose", help="per-node AUC decomposition report")
    h.add_argument("--preds", required=True, help="diag-level prediction file")
    h.add_argument("--mode", choices=["sum_clip", "max", "mean"], default="sum_clip")
    h.add_argument("--out", required=True)
    h.add_argument("--table-out")
    _add_common(h, data_dir=True)
    h.set_defaults(func=cmd_hierarchy_decompose)

    s = sub.add_parser("stratify", help="hidden-stratification clustering for one class")
    s.add_argument("--preds", required=True)
    s.add_argument("--labels", required=True)
    s.add_argument("--class", dest="target_class", required=True)
    s.add_argument("--k", type=int, default=2)
    s.add_argument("--out", required=True)
    s.add_argument("--roc-out")
    _add_common(s)
    s.set_defaults(func=cmd_stratify)

    u = sub.add_parser("uncertainty", help="ensemble std vs diagnosis likelihood")
    u.add_argument("--ensemble-dir", required=True)
    u.add_argument("--task", default="diag")
    u.add_argument("--out", required=True)
    _add_common(u, data_dir=True)
    u.set_defaults(func=cmd_uncertainty)

    p = sub.add_parser("split", help="fold construction")
    split_sub = p.add_subparsers(dest="subcommand", required=True)
    m = split_sub.add_parser("make", help="stratified fold assignment")
    m.add_argument("--k", type=int, default=10)
    m.add_argument("--mode", choices=["patient", "record"], default="patient")
    m.add_argument("--clean-tail", action="store_true",
                   help="restrict the last two folds to human-validated records")
    m.add_argument("--out", required=True)
    _add_common(m, data_dir=True)
    m.set_defaults(func=cmd_split_make)
    r = split_sub.add_parser("roles", help="train/val/test ids from a fold file")
    r.add_argument("--folds", required=True)
    r.add_argument("--out-dir", required=True)
    _add_common(r)
    r.set_defaults(func=cmd_split_roles)
    ss = split_sub.add_parser("subsample", help="label-stratified training subset")
    ss.add_argument("--fraction", required=True, help="in training folds, e.g. 1/8")
    ss.add_argument("--out", required=True)
    _add_common(ss, data_dir=True)
    ss.set_defaults(func=cmd_split_subsample)

    p = sub.add_parser("baseline", help="CPU-trainable baselines")
    base_sub = p.add_subparsers(dest="subcommand", required=True)
    n = base_sub.add_parser("naive", help="training-frequency predictor")
    n.add_argument("--task", default="all")
    n.add_argument("--train-folds", default="1-8")
    n.add_argument("--test-folds", default="10")
    n.add_argument("--out", required=True)
    _add_common(n, data_dir=True)
    n.set_defaults(func=cmd_baseline_naive)
    w = base_sub.add_parser("wavelet", help="wavelet features + shallow net")
    w_sub = w.add_subparsers(dest="wavelet_command", required=True)
    wt = w_sub.add_parser("train")
    wt.add_argument("--task", default="all")
    wt.add_argument("--train-folds", default="1-8")
    wt.add_argument("--val-folds", default="9")
    wt.add_argument("--levels", type=int, default=5)
    wt.add_argument("--window-len", type=int, default=0,
                    help="training crop length in samples; 0 = full record")
    wt.add_argument("--hidden", type=int, default=256)
    wt.add_argument("--epochs", type=int, default=50)
    wt.add_argument("--batch-size", type=int, default=128)
    wt.add_argument("--learning-rate", type=float, default=1e-3)
    wt.add_argument("--weight-decay", type=float, default=1e-2)
    wt.add_argument("--out", required=True)
    _add_common(wt, data_dir=True)
    wt.set_defaults(func=cmd_baseline_wavelet_train)
    wp = w_sub.add_parser("predict")
    wp.add_argument("--model", required=True)
    wp.add_argument("--folds", default="10")
    wp.add_argument("--out", required=True)
    _add_common(wp, data_dir=True)
    wp.set_defaults(func=cmd_baseline_wavelet_predict)

    l = sub.add_parser("lrp", help="relevance of wavelet features for one record/class")
    l.add_argument("--model", required=True)
    l.add_argument("--record", required=True)
    l.add_argument("--class", dest="target_class", required=True)
    l.add_argument("--epsilon", type=float, default=0.1)
    l.add_argument("--out", required=True)
    _add_common(l, data_dir=True)
    l.set_defaults(func=cmd_lrp)

    rep = sub.add_parser("report", help="consolidate evaluation tables from a runs dir")
    rep.add_argument("--runs", required=True)
    rep.add_argument("--out", required=True)
    _add_common(rep)
    rep.set_defaults(func=cmd_report)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    # remember the leaf parser's defaults so a config file can fill unset options
    leaf = getattr(args, "_leaf_parser", parser)
    args._defaults = _subparser_defaults(leaf)
    if getattr(args, "data_dir_pos", None) and not getattr(args, "data_dir", None):
        args.data_dir = args.data_dir_pos
    try:
        args = _apply_config(args)
        if getattr(args, "threads", 1) < 1:
            raise CliError("--threads must be >= 1")
        return args.func(args)
    except (CliError, ParseError, ValueError, OSError) as exc:
        print(f"ecgbench: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
