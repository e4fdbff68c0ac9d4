"""End-to-end stages: simulate, featurize, split, train, evaluate, infer.

Each stage reads and writes plain files so that the command line and the
reproduction run share one code path. All randomness is derived from a single
root seed through named streams.
"""

from dataclasses import asdict, dataclass, fields, replace
import json
import logging
from pathlib import Path

from ._seeding import DEFAULT_SEED, stream_seed
from .domain import ClassifierKind, Face, MaterialClass, active_tags
from .evaluation import PARTS, SplitSpec, accuracy, box_stats, confusion, emit_report, pca2, split_indices
from .features import material_dataset, orientation_dataset, read_windows, window_reads, write_windows
from .ingest import ReadFormatError, read_manifest, read_reads_file, write_manifest, write_reads_file
from .learn import ForestHyperparams, MlpHyperparams, TrainReport, load_model, save_model, train_mlp
from .learn.mlp import onehot
from .pipeline import PipelineModels, infer_batch, save_bundle, write_results
from .sim import FACE_TABLE, ScenarioConfig, Session, generate_corpus

log = logging.getLogger(__name__)

MODEL_KINDS = ("orientation3", "orientation2", "material_rear", "material_side")
PAPER_COUNT_RATE = 5.0 / 3.0


@dataclass(frozen=True)
class ExperimentConfig:
    """Run settings; every field is also a command-line flag and a config key."""

    seed: int = DEFAULT_SEED
    n_tags: int = 3
    duration: float = 300.0
    reads_per_sec_per_tag: float = 5.0
    paper_count_mode: bool = False
    window_len: float = 1.0
    holdout_size: int = 1000
    n_jobs: int = 1

    def __post_init__(self):
        active_tags(self.n_tags)
        if self.window_len <= 0:
            raise ValueError("window_len must be positive")

    @property
    def read_rate(self):
        return PAPER_COUNT_RATE if self.paper_count_mode else self.reads_per_sec_per_tag

    def scenario(self):
        return ScenarioConfig(duration=self.duration, reads_per_sec_per_tag=self.read_rate)

    def split_spec(self):
        return SplitSpec(holdout_size=self.holdout_size, seed=stream_seed(self.seed, "split"))

    def to_dict(self):
        return asdict(self)

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


RunConfig = ExperimentConfig


def simulate(cfg, out_dir):
    """Write one reads CSV plus one manifest per (material, state) session."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sessions = generate_corpus(cfg.scenario(), seed=cfg.seed)
    for s in sessions:
        sid = s.manifest.session_id
        write_reads_file(out / f"{sid}.csv", s.reads, s.manifest.tags)
        write_manifest(out / f"{sid}.json", s.manifest)
    log.info("wrote %d sessions (%d reads) to %s", len(sessions), sum(len(s.reads) for s in sessions), out)
    return sessions


def load_corpus(corpus_dir):
    corpus = Path(corpus_dir)
    if not corpus.is_dir():
        raise FileNotFoundError(f"corpus directory not found: {corpus}")
    sessions = []
    for mpath in sorted(corpus.glob("*.json")):
        manifest = read_manifest(mpath)
        reads_path = mpath.with_suffix(".csv")
        if not reads_path.exists():
            raise FileNotFoundError(f"reads file missing for session {manifest.session_id}: {reads_path}")
        try:
            reads = read_reads_file(reads_path, manifest.tags)
        except ReadFormatError as e:
            raise ReadFormatError(f"{reads_path}: {e}") from None
        sessions.append(Session(manifest, reads))
    if not sessions:
        raise FileNotFoundError(f"no session manifests in {corpus}")
    return sessions


def featurize(sessions, window_len=1.0, n_tags=3):
    windows = []
    discarded = 0
    for s in sessions:
        floor = s.manifest.config.get("rx_floor_dbm", -84.0)
        res = window_reads(
            s.reads,
            n_tags=n_tags,
            window_len=window_len,
            session_id=s.manifest.session_id,
            material=s.manifest.material,
            state=s.manifest.state,
            rx_floor_dbm=floor,
        )
        windows.extend(res.windows)
        discarded += res.discarded_windows
    log.info("%d windows kept, %d discarded", len(windows), discarded)
    return windows


def make_split(windows, spec):
    idx = split_indices([(w.material.value, w.state) for w in windows], spec)
    return {p: [windows[i].key for i in idx[p]] for p in PARTS}


def write_split(path, parts, spec):
    doc = {"spec": asdict(spec), "parts": parts}
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def read_split(path):
    doc = json.loads(Path(path).read_text())
    return doc["parts"]


def partition(windows, parts):
    by_key = {w.key: w for w in windows}
    try:
        return {p: [by_key[k] for k in keys] for p, keys in parts.items()}
    except KeyError as e:
        raise ValueError(f"split refers to window {e} not present in the windows file") from None


def train(which, parts, seed=DEFAULT_SEED, n_jobs=1):
    """Fit one model on the train part; returns ``(model, TrainReport)``."""
    if which in ("orientation3", "orientation2"):
        n_tags = int(which[-1])
        hp = ForestHyperparams.for_tags(n_tags, seed=stream_seed(seed, f"forest/{n_tags}"))
        X, y = orientation_dataset(parts["train"], n_tags)
        val = orientation_dataset(parts["val"], n_tags)
        test = orientation_dataset(parts["test"], n_tags)
        model = hp.estimator().set_params(n_jobs=n_jobs).fit(X, y)
        report = TrainReport(
            train_accuracy=accuracy(model.predict(X), y),
            val_accuracy=accuracy(model.predict(val[0]), val[1]),
            test_accuracy=accuracy(model.predict(test[0]), test[1]),
            oob_score=model.oob_score_,
        )
        log.info("%s: %d trees, OOB %.4f, test accuracy %.4f", which, hp.n_trees, model.oob_score_, report.test_accuracy)
        return model, report
    if which in ("material_rear", "material_side"):
        kind = ClassifierKind.REAR if which.endswith("rear") else ClassifierKind.SIDE
        hp = MlpHyperparams.rear if kind is ClassifierKind.REAR else MlpHyperparams.side
        hp = hp(seed=stream_seed(seed, f"mlp/{kind.value.lower()}"))
        n_cls = len(MaterialClass)
        X, y = material_dataset(parts["train"], kind)
        Xv, yv = material_dataset(parts["val"], kind)
        Xt, yt = material_dataset(parts["test"], kind)
        model, report = train_mlp(X, onehot(y, n_cls), hp, (Xv, onehot(yv, n_cls)), (Xt, onehot(yt, n_cls)))
        log.info(
            "%s: layers %s, %s parameters, stopped at epoch %d, test accuracy %.4f",
            which, model.layer_sizes_, f"{model.n_params_:,}", model.stopping_epoch_, report.test_accuracy,
        )
        return model, report
    raise ValueError(f"unknown model {which!r}; choose from {', '.join(MODEL_KINDS)}")


def raw_box_groups(sessions):
    """RSSI and phase of every raw read, grouped by tag position and material."""
    groups = {}
    for s in sessions:
        m = s.manifest.material.value
        faces = FACE_TABLE[s.manifest.state]
        for r in s.reads:
            f = faces[r.tag.index]
            pos = "rear" if f is Face.REAR else "side" if f in (Face.LEFT, Face.RIGHT) else None
            if pos is None:
                continue
            groups.setdefault(f"{pos}/{m}/rssi", []).append(r.rssi)
            groups.setdefault(f"{pos}/{m}/phase", []).append(r.phase)
    return box_stats(groups)


def evaluate(models, parts, sessions=None, seed=DEFAULT_SEED):
    """Score all four models and both pipelines on their held-out parts.

    Returns ``(report, pca, boxes, predictions)``; the first three feed
    :func:`emit_report`.
    """
    n_cls = len(MaterialClass)
    report = {"seed": seed, "counts": {p: len(v) for p, v in parts.items()}, "orientation": {}, "material": {}}
    for n_tags in (3, 2):
        m = models[f"orientation{n_tags}"]
        Xt, yt = orientation_dataset(parts["test"], n_tags)
        pred = m.predict(Xt)
        report["orientation"][str(n_tags)] = {
            "n_trees": len(m.estimators_),
            "oob_score": m.oob_score_,
            "test_accuracy": accuracy(pred, yt),
            "confusion": confusion(pred, yt, 6).tolist(),
        }
    for kind in (ClassifierKind.REAR, ClassifierKind.SIDE):
        m = models[f"material_{kind.value.lower()}"]
        Xt, yt = material_dataset(parts["test"], kind)
        pred = m.predict(Xt)
        report["material"][kind.value.lower()] = {
            "layer_sizes": m.layer_sizes_,
            "n_params": m.n_params_,
            "stopping_epoch": m.stopping_epoch_,
            "best_epoch": m.best_epoch_,
            "n_test": len(yt),
            "test_accuracy": accuracy(pred, yt),
            "confusion": confusion(pred, yt, n_cls).tolist(),
        }
    report["pipeline"] = {}
    predictions = {}
    for n_tags in (3, 2):
        bundle = pipeline_models(models, n_tags)
        results, summary = infer_batch(parts["pipeline_test"], bundle)
        predictions[n_tags] = results
        truth = [w.material.index for w in parts["pipeline_test"]]
        report["pipeline"][str(n_tags)] = {
            **summary.to_dict(),
            "confusion": confusion([r.material.index for r in results], truth, n_cls).tolist(),
        }
    pca = {}
    report["pca"] = {}
    every = [w for p in PARTS for w in parts[p]]
    every.sort(key=lambda w: w.key)
    for n_tags, suffix in ((3, ""), (2, "_2tag")):
        X, y = orientation_dataset(every, n_tags)
        proj = pca2(X, labels=y)
        pca[suffix] = proj
        report["pca"][str(n_tags)] = {"explained": proj.explained, "axes": proj.axes}
    boxes = raw_box_groups(sessions) if sessions is not None else None
    return report, pca, boxes, predictions


def pipeline_models(models, n_tags):
    return PipelineModels(
        orientation=models[f"orientation{n_tags}"],
        side=models["material_side"],
        rear=models["material_rear"],
        n_tags=n_tags,
    )


def load_models(models_dir):
    d = Path(models_dir)
    if not d.is_dir():
        raise FileNotFoundError(f"models directory not found: {d}")
    out = {}
    for kind in MODEL_KINDS:
        path = d / f"{kind}.json"
        if not path.exists():
            raise FileNotFoundError(f"model file missing: {path}")
        out[kind] = load_model(path)
    return out


@dataclass
class RunArtifacts:
    out_dir: Path
    sessions: list
    windows: list
    parts: dict
    models: dict
    report: dict


def run_all(cfg, out_dir):
    """Run every stage into ``out_dir`` and return the in-memory artifacts.

    Layout::

        corpus/<session>.csv, corpus/<session>.json
        windows.jsonl, split.json
        models/<kind>.json, models/pipeline{2,3}.json
        predictions3.jsonl, predictions2.jsonl
        report.json, pca_points.csv, pca_points_2tag.csv, box_stats.csv
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    simulate(cfg, out / "corpus")
    sessions = load_corpus(out / "corpus")
    windows = featurize(sessions, cfg.window_len)
    write_windows(out / "windows.jsonl", windows)
    windows = read_windows(out / "windows.jsonl")
    spec = cfg.split_spec()
    write_split(out / "split.json", make_split(windows, spec), spec)
    parts = partition(windows, read_split(out / "split.json"))

    models, train_reports = {}, {}
    (out / "models").mkdir(exist_ok=True)
    for kind in MODEL_KINDS:
        model, rep = train(kind, parts, cfg.seed, cfg.n_jobs)
        save_model(out / "models" / f"{kind}.json", model)
        train_reports[kind] = {"train_accuracy": rep.train_accuracy, "val_accuracy": rep.val_accuracy}
    models = load_models(out / "models")
    for n_tags in (3, 2):
        save_bundle(out / "models", pipeline_models(models, n_tags))

    report, pca, boxes, predictions = evaluate(models, parts, sessions, cfg.seed)
    report["config"] = cfg.to_dict()
    report["training"] = train_reports
    for n_tags, results in predictions.items():
        write_results(out / f"predictions{n_tags}.jsonl", results)
    return RunArtifacts(out, sessions, windows, parts, models, report), pca, boxes


def config_from_mapping(mapping, base=None):
    """Build an :class:`ExperimentConfig` from string or typed values, ignoring ``None``."""
    base = base or ExperimentConfig()
    kinds = {f.name: f.type for f in fields(ExperimentConfig)}
    updates = {}
    for k, v in mapping.items():
        key = k.replace("-", "_")
        if v is None:
            continue
        if key not in kinds:
            raise ValueError(f"unknown config key {k!r}")
        updates[key] = _coerce(kinds[key], v, key)
    return replace(base, **updates)


def _coerce(kind, v, key):
    if not isinstance(v, str):
        return v
    v = v.strip()
    try:
        if kind in (bool, "bool"):
            low = v.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(v)
        if kind in (int, "int"):
            return int(v)
        if kind in (float, "float"):
            return float(v)
    except ValueError:
        raise ValueError(f"bad value {v!r} for {key}") from None
    return v
