"""Command line: ``taglabel {simulate,featurize,split,train,evaluate,infer,repro}``."""

import argparse
import configparser
import json
import logging
from pathlib import Path
import sys

from .experiment import MODEL_KINDS, ExperimentConfig, config_from_mapping
from .ingest import ReadFormatError
from .learn.serialize import ModelFormatError

log = logging.getLogger("taglabel")

# flag name -> (ExperimentConfig field, type, help)
SETTINGS = {
    "seed": (int, "root seed for every random stream"),
    "n_tags": (int, "active tags (2 or 3)"),
    "duration": (float, "session length in seconds"),
    "reads_per_sec_per_tag": (float, "read rate of each tag"),
    "paper_count_mode": (bool, "use a 5 Hz aggregate read rate shared by three tags (5/3 Hz per tag)"),
    "window_len": (float, "feature window length in seconds"),
    "holdout_size": (int, "windows held out for the end-to-end pipeline test"),
    "n_jobs": (int, "worker processes for tree fitting"),
}


class CliError(Exception):
    pass


def _add_settings(p, names):
    for name in names:
        kind, help_ = SETTINGS[name]
        flag = "--" + name.replace("_", "-")
        if kind is bool:
            p.add_argument(flag, dest=name, action="store_const", const=True, default=None, help=help_)
        else:
            p.add_argument(flag, dest=name, type=kind, default=None, help=help_)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI file with key = value settings (section [taglabel])")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("-q", "--quiet", action="store_true", help="only print warnings and errors")

    parser = argparse.ArgumentParser(prog="taglabel", description="Simulated RFID package orientation and material sensing.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="generate the 30-session corpus")
    _add_settings(p, ["seed", "duration", "reads_per_sec_per_tag", "paper_count_mode"])

    p = sub.add_parser("featurize", parents=[common], help="turn a corpus into feature windows")
    p.add_argument("corpus", type=Path)
    _add_settings(p, ["n_tags", "window_len"])

    p = sub.add_parser("split", parents=[common], help="stratified pipeline/train/val/test split")
    p.add_argument("windows", type=Path)
    _add_settings(p, ["seed", "holdout_size"])

    p = sub.add_parser("train", parents=[common], help="fit one model")
    p.add_argument("which", choices=MODEL_KINDS)
    p.add_argument("windows", type=Path)
    p.add_argument("split_file", metavar="split", type=Path)
    _add_settings(p, ["seed", "n_jobs"])

    p = sub.add_parser("evaluate", parents=[common], help="score models and both pipelines")
    p.add_argument("models", type=Path, help="directory holding the four model files")
    p.add_argument("windows", type=Path)
    p.add_argument("split_file", metavar="split", type=Path)
    p.add_argument("--corpus", type=Path, help="corpus directory, for raw-read box statistics")
    _add_settings(p, ["seed"])

    p = sub.add_parser("infer", parents=[common], help="run a pipeline bundle over windows")
    p.add_argument("bundle", type=Path, help="pipeline manifest, or a directory holding pipeline<n>.json")
    p.add_argument("windows", type=Path)
    _add_settings(p, ["n_tags"])

    p = sub.add_parser("repro", parents=[common], help="full chain plus acceptance checks")
    p.add_argument("--no-verify-determinism", dest="verify", action="store_false", help="skip the second run")
    _add_settings(p, list(SETTINGS))
    return parser


def resolve_config(args):
    mapping = {}
    if args.config is not None:
        if not args.config.is_file():
            raise CliError(f"config file not found: {args.config}")
        cp = configparser.ConfigParser()
        cp.read(args.config)
        section = cp["taglabel"] if cp.has_section("taglabel") else cp.defaults()
        mapping.update(dict(section))
    mapping.update({k: getattr(args, k) for k in SETTINGS if getattr(args, k, None) is not None})
    try:
        return config_from_mapping(mapping)
    except (TypeError, ValueError) as e:
        raise CliError(str(e)) from None


def _need(path, what):
    if path is None or not Path(path).exists():
        raise CliError(f"{what} not found: {path}")
    return Path(path)


def _out(args, default):
    out = args.out if args.out is not None else Path(default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args, cfg):
    from .experiment import simulate

    out = _out(args, "corpus")
    simulate(cfg, out)
    print(out)


def cmd_featurize(args, cfg):
    from .experiment import featurize, load_corpus
    from .features import write_windows

    sessions = load_corpus(_need(args.corpus, "corpus directory"))
    out = _out(args, ".")
    windows = featurize(sessions, cfg.window_len, cfg.n_tags)
    write_windows(out / "windows.jsonl", windows)
    print(out / "windows.jsonl")


def cmd_split(args, cfg):
    from .experiment import make_split, write_split
    from .features import read_windows

    windows = read_windows(_need(args.windows, "windows file"))
    spec = cfg.split_spec()
    parts = make_split(windows, spec)
    out = _out(args, ".")
    write_split(out / "split.json", parts, spec)
    log.info("split sizes: %s", {p: len(v) for p, v in parts.items()})
    print(out / "split.json")


def _parts(args):
    from .experiment import partition, read_split
    from .features import read_windows

    windows = read_windows(_need(args.windows, "windows file"))
    return partition(windows, read_split(_need(args.split_file, "split file")))


def cmd_train(args, cfg):
    from .experiment import train
    from .learn import save_model

    model, report = train(args.which, _parts(args), cfg.seed, cfg.n_jobs)
    out = _out(args, "models")
    save_model(out / f"{args.which}.json", model)
    (out / f"{args.which}.report.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    print(out / f"{args.which}.json")


def cmd_evaluate(args, cfg):
    from .evaluation import emit_report
    from .experiment import evaluate, load_corpus, load_models

    models = load_models(_need(args.models, "models directory"))
    parts = _parts(args)
    sessions = load_corpus(_need(args.corpus, "corpus directory")) if args.corpus is not None else None
    report, pca, boxes, _ = evaluate(models, parts, sessions, cfg.seed)
    out = _out(args, "report")
    for p in emit_report(out, report, pca, boxes):
        print(p)


def cmd_infer(args, cfg):
    from .features import read_windows
    from .pipeline import bundle_name, infer_batch, load_bundle, write_results

    bundle = _need(args.bundle, "pipeline bundle")
    if bundle.is_dir():
        bundle = _need(bundle / bundle_name(cfg.n_tags), "pipeline bundle")
    models = load_bundle(bundle)
    windows = read_windows(_need(args.windows, "windows file"))
    results, summary = infer_batch(windows, models)
    out = _out(args, ".")
    write_results(out / "predictions.jsonl", results)
    log.info("%d windows inferred with the %d-tag pipeline", summary.n, models.n_tags)
    if summary.labelled:
        log.info("pipeline accuracy %.4f, orientation accuracy %.4f", summary.accuracy, summary.orientation_accuracy)
    print(out / "predictions.jsonl")


def cmd_repro(args, cfg):
    from .acceptance import run_repro

    out = _out(args, "repro")
    results, _ = run_repro(cfg, out, verify_determinism=args.verify, echo=print)
    failed = [r.number for r in results if not r.passed]
    if failed:
        print(f"acceptance failed for criteria {failed}", file=sys.stderr)
        return 1
    print(f"all {len(results)} acceptance criteria passed; artifacts in {out}")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "featurize": cmd_featurize,
    "split": cmd_split,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "infer": cmd_infer,
    "repro": cmd_repro,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](args, cfg) or 0
    except (CliError, FileNotFoundError, ReadFormatError, ModelFormatError, ValueError, KeyError) as e:
        msg = e.args[0] if isinstance(e, KeyError) and e.args else e
        print(f"taglabel {args.command}: error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
