"""Headless batch interface over the library.

Subcommands orchestrate library calls and file layouts only; no
computation lives here.  A "project directory" is the artifact set
written by ``segment`` or ``phantom``: ``labels.png`` (indexed class
raster), ``objects.json`` (mitochondria state), ``meta.json`` (channel
paths, pixel size), optionally ``snapshots.json``/``snapshots.csv``.

Exit codes: 0 success, 2 validation error (arguments, filters, malformed
content), 3 I/O error (missing or unreadable files).
"""

from __future__ import annotations

import functools
import json
import logging
import sys
import time
from pathlib import Path
from types import SimpleNamespace

import click
import numpy as np

from . import imgproc, learn, morpho, structure, synth
from . import mito as mito_ops

log = logging.getLogger("mitoviz")

STRUCTURE_NAMES = {"background": 0, "dendrite": 1, "axon": 2, "cellbody": 3}

# two-character operators must be probed before their one-character prefixes
_FILTER_OPS = ("<=", ">=", "<", ">", "=")


def parse_filter(text: str):
    """Predicate tree for 'feature op value' terms joined by '&'.

    Numeric features take any of < <= > >= =; 'structure' takes '=' with
    a class name or code (comma-separated for several).  Empty text means
    no constraint and parses to None.
    """
    text = text.strip()
    if not text:
        return None
    leaves = []
    for term in text.split("&"):
        term = term.strip()
        for op in _FILTER_OPS:
            if op in term:
                feat, _, value = term.partition(op)
                break
        else:
            raise ValueError(f"cannot parse filter term {term!r}")
        feat = feat.strip().lower()
        value = value.strip()
        if feat == "structure":
            if op != "=":
                raise ValueError("structure classes only support '='")
            codes = set()
            for name in value.split(","):
                name = name.strip().lower()
                if name in STRUCTURE_NAMES:
                    codes.add(STRUCTURE_NAMES[name])
                elif name.isdigit() and int(name) <= 3:
                    codes.add(int(name))
                else:
                    raise ValueError(f"unknown structure class {name!r}")
            leaves.append(morpho.StructureIn(frozenset(codes)))
        elif feat in morpho.FEATURE_NAMES:
            v = float(value)
            if op == "<":
                leaves.append(morpho.FeatureRange(feat, None, v,
                                                  strict_hi=True))
            elif op == "<=":
                leaves.append(morpho.FeatureRange(feat, None, v))
            elif op == ">":
                leaves.append(morpho.FeatureRange(feat, v, None,
                                                  strict_lo=True))
            elif op == ">=":
                leaves.append(morpho.FeatureRange(feat, v, None))
            else:
                leaves.append(morpho.FeatureRange(feat, v, v))
        else:
            raise ValueError(f"unknown filter feature {feat!r}")
    return leaves[0] if len(leaves) == 1 else morpho.Combine("and",
                                                             tuple(leaves))


def _guarded(fn):
    """Map exceptions to the documented exit codes."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except OSError as exc:
            click.echo(f"i/o error: {exc}", err=True)
            sys.exit(3)
        except (KeyError, TypeError, ValueError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
    return wrapper


def _emit(obj, payload: dict, lines) -> None:
    if obj.as_json:
        click.echo(json.dumps(payload, indent=2, sort_keys=True))
    else:
        for line in lines:
            click.echo(line)


def _load_project(path) -> SimpleNamespace:
    root = Path(path)
    labels = structure.import_labels(root / "labels.png")
    state = mito_ops.state_from_json((root / "objects.json").read_text())
    meta = {}
    if (root / "meta.json").exists():
        meta = json.loads((root / "meta.json").read_text())
    if (labels.height, labels.width) != (state.height, state.width):
        raise ValueError(f"{root}: labels and objects disagree on frame size")
    return SimpleNamespace(root=root, labels=labels, state=state, meta=meta,
                           pixel_size=float(meta.get("pixel_size_um", 0.21)))


def _feature_table(proj):
    objects = {o.id: o for o in proj.state.objects}
    feats = {i: morpho.compute_features(o, proj.labels, proj.pixel_size)
             for i, o in objects.items()}
    return objects, feats


def _write_project(outdir: Path, labels, state, meta: dict) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    structure.export_labels(labels, outdir / "labels.png")
    (outdir / "objects.json").write_text(mito_ops.state_to_json(state))
    (outdir / "meta.json").write_text(json.dumps(meta, indent=2,
                                                 sort_keys=True))


@click.group()
@click.option("--seed", default=0, show_default=True,
              help="Seed for every stochastic step.")
@click.option("--threads", default=None, type=int,
              help="Cap numeric library thread pools.")
@click.option("--log-level", default="warning", show_default=True,
              type=click.Choice(["debug", "info", "warning", "error"]))
@click.option("--json", "as_json", is_flag=True,
              help="Machine-readable output.")
@click.pass_context
def main(ctx, seed, threads, log_level, as_json):
    """Proofreading workbench for two-channel neuronal fluorescence images."""
    logging.basicConfig(level=log_level.upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    limiter = None
    if threads is not None:
        if threads < 1:
            raise click.UsageError("--threads must be at least 1")
        import threadpoolctl
        limiter = threadpoolctl.threadpool_limits(limits=threads)
    ctx.obj = SimpleNamespace(seed=seed, as_json=as_json, _limiter=limiter)


@main.command()
@click.option("--venus", "venus_path", required=True,
              help="Structure channel image (8/16-bit PNG or TIFF).")
@click.option("--mito", "mito_path", required=True,
              help="Mitochondria channel image.")
@click.option("--labels", "labels_path", default=None,
              help="Existing indexed label PNG to import instead of "
                   "bootstrapping.")
@click.option("--out", "out_dir", required=True)
@click.option("--pixel-size-um", default=0.21, show_default=True)
@click.option("--budget-seconds", default=10.0, show_default=True,
              help="Bootstrap training budget.")
@click.pass_obj
@_guarded
def segment(obj, venus_path, mito_path, labels_path, out_dir, pixel_size_um,
            budget_seconds):
    """Predict or import structure labels and detect mitochondria."""
    venus = imgproc.load_channel(venus_path, pixel_size_um)
    mito = imgproc.load_channel(mito_path, pixel_size_um)
    imported = None
    if labels_path:
        imported = structure.import_labels(labels_path)
        if (imported.height, imported.width) != venus.values.shape:
            raise ValueError("imported labels do not match channel size")
    cfg = learn.TrainConfig(budget_seconds=budget_seconds, seed=obj.seed)
    log.info("bootstrapping labels (budget %.1fs)", budget_seconds)
    labels, mask = learn.bootstrap_initial(obj.seed, venus, mito, imported,
                                           cfg)
    state = mito_ops.detect_objects(mask)
    _write_project(Path(out_dir), labels, state, {
        "venus": str(Path(venus_path).resolve()),
        "mito": str(Path(mito_path).resolve()),
        "pixel_size_um": pixel_size_um, "seed": obj.seed})
    payload = {"objects": len(state.objects),
               "foreground_pixels": int((labels.labels > 0).sum()),
               "out": str(Path(out_dir))}
    _emit(obj, payload, [f"{len(state.objects)} objects, "
                         f"{payload['foreground_pixels']} structure pixels "
                         f"-> {out_dir}"])


@main.command()
@click.option("--spec", "spec_path", required=True,
              help="PhantomSpec JSON file.")
@click.option("--out", "out_dir", required=True)
@click.option("--corrupt", "corrupt_kinds", default=None,
              help="Comma list of error kinds to inject into the working "
                   "copy (truth is kept under truth/).")
@click.option("--corrupt-seed", default=None, type=int,
              help="Seed for corruption; defaults to --seed.")
@click.pass_obj
@_guarded
def phantom(obj, spec_path, out_dir, corrupt_kinds, corrupt_seed):
    """Generate a synthetic two-channel dataset with exact ground truth."""
    spec = synth.PhantomSpec.from_json(Path(spec_path).read_text())
    venus, mito, truth = synth.generate(spec)
    outdir = Path(out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    imgproc.save_channel(venus, outdir / "venus.png")
    imgproc.save_channel(mito, outdir / "mito.png")
    meta = {"venus": str((outdir / "venus.png").resolve()),
            "mito": str((outdir / "mito.png").resolve()),
            "pixel_size_um": venus.pixel_size_um, "seed": spec.seed}
    h, w = truth.labels.labels.shape
    truth_state = synth.state_from_pixel_sets(
        [m.pixels for m in truth.mitochondria], w, h)
    _write_project(outdir / "truth", truth.labels, truth_state, meta)

    manifest = []
    if corrupt_kinds:
        menu = [k.strip() for k in corrupt_kinds.split(",") if k.strip()]
        seed = obj.seed if corrupt_seed is None else corrupt_seed
        result = synth.corrupt(truth, menu, seed)
        work_labels = result.labels
        work_state = synth.state_from_pixel_sets(result.mitochondria, w, h)
        manifest = [{"kind": e.kind,
                     "center": [int(c) for c in e.center],
                     "info": {k: (int(v) if isinstance(v, (int, np.integer))
                                  else float(v))
                              for k, v in e.info.items()}}
                    for e in result.manifest]
        (outdir / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True))
    else:
        work_labels, work_state = truth.labels, truth_state
    _write_project(outdir, work_labels, work_state, meta)
    payload = {"out": str(outdir), "objects": len(truth_state.objects),
               "injected_errors": len(manifest)}
    _emit(obj, payload, [f"phantom {spec.width}x{spec.height}: "
                         f"{len(truth_state.objects)} mitochondria, "
                         f"{len(manifest)} injected errors -> {outdir}"])


@main.command()
@click.option("--project", "project_dir", required=True,
              help="Directory written by segment or phantom.")
@click.option("--filter", "filter_text", default="", show_default=True,
              help="e.g. 'length>0.5&structure=dendrite'")
@click.option("--snapshot", "snapshot_name", required=True,
              help="Name for the recorded snapshot.")
@click.option("--comment", default=None,
              help="CSV comment cell; defaults to the snapshot name.")
@click.option("--group", default="", help="CSV group cell.")
@click.option("--image", default=None,
              help="CSV image cell; defaults to the venus file name.")
@click.pass_obj
@_guarded
def analyze(obj, project_dir, filter_text, snapshot_name, comment, group,
            image):
    """Select a subset by filter and record a morphology snapshot."""
    proj = _load_project(project_dir)
    objects, feats = _feature_table(proj)
    node = parse_filter(filter_text)
    if node is None:
        members = tuple(sorted(objects))
    else:
        members = tuple(sorted(morpho.evaluate(node, feats, objects)))

    store_path = proj.root / "snapshots.json"
    store = json.loads(store_path.read_text()) if store_path.exists() else []
    if any(entry["name"] == snapshot_name for entry in store):
        raise ValueError(f"snapshot {snapshot_name!r} already exists")
    snapshot_id = len(store) + 1
    subset = morpho.Subset(snapshot_id, snapshot_name, members, node)
    if image is None:
        image = Path(proj.meta.get("venus", "unknown")).name
    snap = morpho.record_snapshot(
        subset, objects, feats, proj.labels,
        comment=snapshot_name if comment is None else comment,
        group=group, image=image, snapshot_id=snapshot_id,
        created_at=time.time())
    store.append({
        "name": snapshot_name,
        "filter": None if node is None else morpho.node_to_dict(node),
        "snapshot": {
            "id": snap.id, "comment": snap.comment, "group": snap.group,
            "image": snap.image, "count": snap.count,
            "density": snap.density, "mean_area": snap.mean_area,
            "mean_length": snap.mean_length,
            "mean_eccentricity": snap.mean_eccentricity,
            "mean_circularity": snap.mean_circularity,
            "members": list(snap.members), "created_at": snap.created_at}})
    store_path.write_text(json.dumps(store, indent=2, sort_keys=True))
    rows = [morpho.Snapshot(**{**e["snapshot"],
                               "members": tuple(e["snapshot"]["members"])})
            for e in store]
    (proj.root / "snapshots.csv").write_text(morpho.snapshots_to_csv(rows))
    payload = {"snapshot": snapshot_name, "count": snap.count,
               "density": snap.density, "mean_length_um": snap.mean_length}
    _emit(obj, payload,
          [f"snapshot {snapshot_name!r}: {snap.count} of "
           f"{len(objects)} objects"])


def _snapshot_features(ref: str):
    """Per-object features behind a 'PROJECT_DIR:SNAPSHOT_NAME' reference."""
    root, sep, name = ref.rpartition(":")
    if not sep or not root:
        raise ValueError(f"snapshot reference {ref!r} is not DIR:NAME")
    proj = _load_project(root)
    store_path = proj.root / "snapshots.json"
    if not store_path.exists():
        raise ValueError(f"{root}: no snapshots recorded")
    for entry in json.loads(store_path.read_text()):
        if entry["name"] == name:
            _, feats = _feature_table(proj)
            missing = [i for i in entry["snapshot"]["members"]
                       if i not in feats]
            if missing:
                raise ValueError(
                    f"{ref}: members {missing} no longer in the project")
            return [feats[i] for i in entry["snapshot"]["members"]]
    raise ValueError(f"{root}: no snapshot named {name!r}")


@main.command()
@click.option("--a", "ref_a", required=True, help="PROJECT_DIR:SNAPSHOT_NAME")
@click.option("--b", "ref_b", required=True, help="PROJECT_DIR:SNAPSHOT_NAME")
@click.pass_obj
@_guarded
def compare(obj, ref_a, ref_b):
    """Percent difference of feature means plus Welch t-tests."""
    table = morpho.compare(_snapshot_features(ref_a),
                           _snapshot_features(ref_b))
    lines = [f"{name}: {row['difference']:+.2f}%  t={row['t']:.3f}  "
             f"p={row['p']:.4g}" for name, row in table.items()]
    _emit(obj, table, lines)


def _matched_objects(pred_state, truth_state) -> int:
    """Greedy one-to-one matching on shared pixel count."""
    pairs = []
    for po in pred_state.objects:
        for to in truth_state.objects:
            shared = po.pixels.intersection_size(to.pixels)
            if shared:
                pairs.append((-shared, po.id, to.id))
    pairs.sort()
    used_pred, used_truth = set(), set()
    for _, pid, tid in pairs:
        if pid not in used_pred and tid not in used_truth:
            used_pred.add(pid)
            used_truth.add(tid)
    return len(used_pred)


def _mean_length(proj) -> float:
    _, feats = _feature_table(proj)
    if not feats:
        return None
    return float(np.mean([f.length for f in feats.values()]))


@main.command()
@click.option("--pred", "pred_dir", required=True)
@click.option("--truth", "truth_dir", required=True)
@click.pass_obj
@_guarded
def score(obj, pred_dir, truth_dir):
    """Pixel accuracy, object precision/recall, and mean-length accuracy."""
    pred = _load_project(pred_dir)
    truth = _load_project(truth_dir)
    if pred.labels.labels.shape != truth.labels.labels.shape:
        raise ValueError("prediction and truth frame sizes differ")
    pixel_acc = float((pred.labels.labels == truth.labels.labels).mean()
                      * 100.0)
    matched = _matched_objects(pred.state, truth.state)
    n_pred, n_truth = len(pred.state.objects), len(truth.state.objects)
    precision = matched / n_pred if n_pred else (1.0 if not n_truth else 0.0)
    recall = matched / n_truth if n_truth else (1.0 if not n_pred else 0.0)
    len_pred, len_truth = _mean_length(pred), _mean_length(truth)
    length_acc = None
    if len_pred is not None and len_truth is not None:
        length_acc = morpho.accuracy(len_truth, len_pred)
    payload = {"pixel_accuracy": pixel_acc, "object_precision": precision,
               "object_recall": recall, "length_accuracy": length_acc,
               "objects_pred": n_pred, "objects_truth": n_truth,
               "mean_length_pred_um": len_pred,
               "mean_length_truth_um": len_truth}
    _emit(obj, payload, [
        f"pixel accuracy:   {pixel_acc:.2f}%",
        f"object precision: {precision:.3f} ({matched}/{n_pred})",
        f"object recall:    {recall:.3f} ({matched}/{n_truth})",
        "length accuracy:  " + ("n/a" if length_acc is None
                                else f"{length_acc:.2f}%")])


@main.command()
@click.option("--config", "config_path", default=None,
              help="ServerConfig JSON file.")
@click.option("--data-root", default=None, help="Override the data root.")
@click.option("--host", default=None)
@click.option("--port", default=None, type=int)
@_guarded
def serve(config_path, data_root, host, port):
    """Run the HTTP service (blocking)."""
    from . import server
    if config_path:
        cfg = server.ServerConfig.from_json(config_path, data_root=data_root,
                                            host=host, port=port)
    elif data_root:
        extra = {k: v for k, v in (("host", host), ("port", port))
                 if v is not None}
        cfg = server.ServerConfig(data_root=data_root, **extra)
    else:
        raise click.UsageError("provide --config or --data-root")
    log.info("serving %s on %s:%d", cfg.data_root, cfg.host, cfg.port)
    server.run(cfg)


if __name__ == "__main__":
    main()
