"""Command-line entry point wiring the full pipeline.

Subcommands: synth, pretrain, tune, eval, infer, dump. All numeric work lives
in the library modules; this file parses arguments, resolves artifacts, and
writes run manifests. Every command returns exit code 0 on success and a
documented nonzero code with one machine-parsable stderr line otherwise.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import torch

from . import eval as evalmod
from .config import ConfigError, RunConfig, config_schema, load_config
from .data import generate_synthetic, read_corpus, split_corpus, write_corpus
from .instruct import (
    CatalogEntry,
    InstructionLevel,
    default_catalog,
    load_catalog,
    predict,
    save_catalog,
)
from .textembed import TextEmbedder, load_store
from .train import (
    checkpoint_from_pretrain,
    checkpoint_from_tune,
    checkpoint_load,
    checkpoint_save,
    configs_from_checkpoint,
    banks_from_checkpoint,
    make_tune_dataset,
    model_from_checkpoint,
    run_pretrain,
    run_tune,
    trial_segments,
    write_history_csv,
    TuneDataset,
)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2  # argparse default
EXIT_MISSING = 3
EXIT_CONFIG = 4
EXIT_DIM = 5
EXIT_RESOLVE = 6
EXIT_EXISTS = 7

_EXIT_DOC = """\
exit codes:
  0  success
  1  unexpected runtime failure
  2  command-line usage error
  3  missing file (config, corpus, checkpoint, store)
  4  invalid configuration key, section, or value
  5  dimension mismatch (store vs model, montage vs data)
  6  unresolvable instruction, label, or catalog entry
  7  output directory exists and is non-empty (use --force)
"""


class CliError(Exception):
    def __init__(self, code: int, kind: str, message: str):
        super().__init__(message)
        self.code = code
        self.kind = kind


@dataclass
class RunManifest:
    command: str
    config_path: str | None
    config_snapshot: dict
    seed: int
    out_dir: str
    started_at: str
    finished_at: str = ""
    artifacts: list[str] = field(default_factory=list)

    def write(self, out_dir: Path) -> Path:
        self.finished_at = _now()
        path = out_dir / "run_manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2) + "\n", encoding="utf-8")
        return path


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _config_keys_doc() -> str:
    lines = ["configuration file keys (TOML sections):"]
    for section, keys in config_schema().items():
        lines.append(f"  [{section}]: {', '.join(keys)}")
    return "\n".join(lines)


def _load_run_config(args) -> RunConfig:
    if getattr(args, "config", None):
        try:
            cfg = load_config(args.config)
        except FileNotFoundError as exc:
            raise CliError(EXIT_MISSING, "missing-file", str(exc)) from exc
        except ConfigError as exc:
            raise CliError(EXIT_CONFIG, "config", str(exc)) from exc
    else:
        cfg = RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg.train.seed = args.seed
        cfg.data.seed = args.seed
    return cfg


def _prepare_out(args) -> Path:
    out = Path(args.out)
    if out.exists() and any(out.iterdir()) and not getattr(args, "force", False):
        raise CliError(
            EXIT_EXISTS, "exists", f"output directory {out} is non-empty (use --force)"
        )
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(args, cfg: RunConfig, out: Path) -> RunManifest:
    return RunManifest(
        command=args.command,
        config_path=getattr(args, "config", None),
        config_snapshot=cfg.to_dict(),
        seed=cfg.train.seed,
        out_dir=str(out),
        started_at=_now(),
    )


def synthetic_catalog_entry(name: str, class_names: list[str]) -> CatalogEntry:
    return CatalogEntry(
        name=name,
        task_instruction="Decode synthetic oscillations",
        task_and_targets_instruction=(
            f"Decode synthetic oscillations ({' vs '.join(class_names)})"
        ),
        targets=tuple(class_names),
    )


def _read_corpus(path: str):
    try:
        return read_corpus(path)
    except FileNotFoundError as exc:
        raise CliError(EXIT_MISSING, "missing-file", str(exc)) from exc
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, "config", str(exc)) from exc


def _resolve_entry(corpus_dir: str, name: str) -> CatalogEntry:
    local = Path(corpus_dir) / "catalog.json"
    if local.is_file():
        entries = load_catalog(local)
        if name in entries:
            return entries[name]
        if len(entries) == 1:
            return next(iter(entries.values()))
    catalog = default_catalog()
    if name in catalog:
        return catalog[name]
    raise CliError(
        EXIT_RESOLVE, "resolve", f"no instruction catalog entry for corpus {name!r}"
    )


def _load_checkpoint(path: str):
    p = Path(path)
    if not p.is_file():
        raise CliError(EXIT_MISSING, "missing-file", f"checkpoint not found: {p}")
    try:
        return checkpoint_load(p)
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, "config", str(exc)) from exc


def _make_embedder(args, cfg_dim: int, ckpt=None) -> TextEmbedder:
    """Store file if given, else pseudo-embeddings keyed by the run seed.

    When scoring a tuned checkpoint, its recorded embedding source wins so
    instruction vectors match the ones used in training.
    """
    store_path = getattr(args, "store", None)
    if store_path:
        if not Path(store_path).is_file():
            raise CliError(EXIT_MISSING, "missing-file", f"store not found: {store_path}")
        store = load_store(store_path)
        if store.dim != cfg_dim:
            raise CliError(
                EXIT_DIM,
                "dim-mismatch",
                f"store dimension {store.dim} != configured text dimension {cfg_dim}",
            )
        return TextEmbedder(store=store, fallback_seed=getattr(args, "seed", None))
    if ckpt is not None and ckpt.embed_source and ckpt.embed_source.get("kind") == "pseudo":
        return TextEmbedder(
            fallback_seed=ckpt.embed_source["seed"], dim=ckpt.embed_source["dim"]
        )
    seed = getattr(args, "seed", None)
    if seed is None:
        seed = 0
    return TextEmbedder(fallback_seed=seed, dim=cfg_dim)


def _tune_datasets_from_checkpoint(ckpt, corpora: list[str], split: str, plan):
    cfgs = configs_from_checkpoint(ckpt)
    banks = banks_from_checkpoint(ckpt)
    datasets = []
    for corpus_dir in corpora:
        name, trials = _read_corpus(corpus_dir)
        if name not in banks:
            raise CliError(
                EXIT_RESOLVE,
                "resolve",
                f"checkpoint has no prototype bank for corpus {name!r} "
                f"(has: {sorted(banks)})",
            )
        entry, bank = banks[name]
        raw = split_from_name(trials, split, plan)
        datasets.append(TuneDataset(tag=name, trials=raw, entry=entry, bank=bank))
    return datasets, cfgs


def split_from_name(trials, split: str, plan) -> list:
    if split == "all":
        return trials
    parts = split_corpus(trials, plan)
    try:
        return getattr(parts, split)
    except AttributeError:
        raise CliError(EXIT_USAGE, "usage", f"unknown split {split!r}") from None


def cmd_synth(args) -> int:
    cfg = _load_run_config(args)
    out = _prepare_out(args)
    manifest = _manifest(args, cfg, out)
    spec = cfg.data.synth_spec(cfg.signal.target_rate_hz)
    trials = generate_synthetic(spec)
    write_corpus(trials, out, name=cfg.data.name)
    entry = synthetic_catalog_entry(cfg.data.name, [c.name for c in cfg.data.classes])
    save_catalog({entry.name: entry}, out / "catalog.json")
    manifest.artifacts = ["manifest.json", "catalog.json", "trials/"]
    manifest.write(out)
    print(f"wrote {len(trials)} trials to {out}")
    return EXIT_OK


def cmd_pretrain(args) -> int:
    cfg = _load_run_config(args)
    out = _prepare_out(args)
    manifest = _manifest(args, cfg, out)
    trials = []
    for corpus_dir in args.corpus:
        _, part = _read_corpus(corpus_dir)
        trials.extend(part)
    result = run_pretrain(
        trials,
        encoder_cfg=cfg.encoder,
        tokenizer_cfg=cfg.tokenizer,
        train_cfg=cfg.train,
        signal_cfg=cfg.signal,
    )
    ckpt = checkpoint_from_pretrain(
        result,
        encoder_cfg=cfg.encoder,
        tokenizer_cfg=cfg.tokenizer,
        train_cfg=cfg.train,
        signal_cfg=cfg.signal,
    )
    checkpoint_save(ckpt, out / "checkpoint.pt")
    write_history_csv(result.history, out / "loss_curve.csv")
    manifest.artifacts = ["checkpoint.pt", "loss_curve.csv"]
    manifest.write(out)
    print(f"pretrained {result.steps_taken} steps; final loss {result.history[-1].loss:.6f}")
    return EXIT_OK


def cmd_tune(args) -> int:
    cfg = _load_run_config(args)
    out = _prepare_out(args)
    manifest = _manifest(args, cfg, out)
    pre = _load_checkpoint(args.checkpoint)
    if pre.stage != "pretrain":
        raise CliError(EXIT_CONFIG, "config", "tune requires a pretrain-stage checkpoint")
    encoder = model_from_checkpoint(pre)
    pre_cfgs = configs_from_checkpoint(pre)
    embedder = _make_embedder(args, cfg.instruct.text_dim)
    if embedder.dim != cfg.instruct.text_dim:
        raise CliError(
            EXIT_DIM,
            "dim-mismatch",
            f"embedding dim {embedder.dim} != instruct.text_dim {cfg.instruct.text_dim}",
        )
    cfg.train.stage = "tune"
    train_sets, val_sets = [], []
    for corpus_dir in args.corpus:
        name, trials = _read_corpus(corpus_dir)
        entry = _resolve_entry(corpus_dir, name)
        parts = split_corpus(trials, cfg.data.split_plan())
        try:
            train_sets.append(make_tune_dataset(name, parts.train, entry, embedder))
            if parts.val:
                val_sets.append(make_tune_dataset(name, parts.val, entry, embedder))
        except KeyError as exc:
            raise CliError(EXIT_RESOLVE, "resolve", str(exc)) from exc
    result = run_tune(
        train_sets,
        encoder,
        embedder,
        instruct_cfg=cfg.instruct,
        train_cfg=cfg.train,
        signal_cfg=pre_cfgs["signal"],
        val_datasets=val_sets or None,
    )
    ckpt = checkpoint_from_tune(
        result,
        encoder_cfg=pre_cfgs["encoder"],
        tokenizer_cfg=pre_cfgs["tokenizer"],
        instruct_cfg=cfg.instruct,
        train_cfg=cfg.train,
        signal_cfg=pre_cfgs["signal"],
        embed_source=embedder.describe(),
    )
    checkpoint_save(ckpt, out / "checkpoint.pt")
    write_history_csv(result.history, out / "loss_curve.csv")
    manifest.artifacts = ["checkpoint.pt", "loss_curve.csv"]
    manifest.write(out)
    print(f"tuned {result.steps_taken} steps; final loss {result.history[-1].loss:.6f}")
    return EXIT_OK


def _parse_levels(raw: str) -> list[InstructionLevel]:
    levels = []
    for part in raw.split(","):
        part = part.strip()
        try:
            levels.append(InstructionLevel(part))
        except ValueError:
            valid = ", ".join(l.value for l in InstructionLevel)
            raise CliError(
                EXIT_RESOLVE, "resolve", f"unknown instruction level {part!r} (valid: {valid})"
            ) from None
    return levels


def cmd_eval(args) -> int:
    cfg = _load_run_config(args)
    ckpt = _load_checkpoint(args.checkpoint)
    if ckpt.stage != "tune":
        raise CliError(EXIT_CONFIG, "config", "eval requires a tune-stage checkpoint")
    out = _prepare_out(args)
    model = model_from_checkpoint(ckpt)
    cfgs = configs_from_checkpoint(ckpt)
    embedder = _make_embedder(args, cfgs["instruct"].text_dim, ckpt=ckpt)
    datasets, _ = _tune_datasets_from_checkpoint(
        ckpt, args.corpus, args.split, cfg.data.split_plan()
    )
    levels = _parse_levels(args.levels)
    all_reports = []
    for ds in datasets:
        reports = evalmod.evaluate_instruction_levels(
            model, ds, embedder, levels, signal_cfg=cfgs["signal"]
        )
        all_reports.extend(reports)
        for rep in reports:
            print(
                f"{rep.dataset} level={rep.level.value} "
                f"b_acc={rep.balanced_accuracy:.4f} kappa={rep.kappa:.4f} "
                f"n={rep.n_samples}"
            )
    payload = [rep.to_dict() for rep in all_reports]
    (out / "reports.json").write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    with open(out / "reports.csv", "w", encoding="utf-8") as fh:
        fh.write("dataset,level,balanced_accuracy,kappa,n_samples\n")
        for rep in all_reports:
            fh.write(
                f"{rep.dataset},{rep.level.value},{rep.balanced_accuracy!r},"
                f"{rep.kappa!r},{rep.n_samples}\n"
            )
    manifest = _manifest(args, cfg, out)
    manifest.artifacts = ["reports.json", "reports.csv"]
    manifest.write(out)
    return EXIT_OK


def cmd_infer(args) -> int:
    ckpt = _load_checkpoint(args.checkpoint)
    if ckpt.stage != "tune":
        raise CliError(EXIT_CONFIG, "config", "infer requires a tune-stage checkpoint")
    model = model_from_checkpoint(ckpt)
    cfgs = configs_from_checkpoint(ckpt)
    name, trials = _read_corpus(args.corpus)
    banks = banks_from_checkpoint(ckpt)
    if name not in banks:
        raise CliError(EXIT_RESOLVE, "resolve", f"no prototype bank for corpus {name!r}")
    entry, bank = banks[name]
    matches = [t for t in trials if t.trial_id == args.trial]
    if not matches:
        raise CliError(EXIT_RESOLVE, "resolve", f"trial {args.trial!r} not in corpus {name!r}")
    trial = matches[0]
    embedder = _make_embedder(args, cfgs["instruct"].text_dim, ckpt=ckpt)
    e_vec = torch.from_numpy(embedder(args.instruction).vector).to(torch.float32)
    seg = torch.from_numpy(
        trial_segments(trial, cfgs["signal"].window_samples)
    )[None]
    model.eval()
    with torch.no_grad():
        h = model(seg, e_vec[None])[0]
    result = predict(h, bank)
    print(f"trial={trial.trial_id} predicted={result.class_name}")
    for cls, score in result.scores.items():
        print(f"  cos[{cls}] = {score:.6f}")
    return EXIT_OK


def cmd_dump(args) -> int:
    ckpt = _load_checkpoint(args.checkpoint)
    if ckpt.stage != "tune":
        raise CliError(EXIT_CONFIG, "config", "dump requires a tune-stage checkpoint")
    model = model_from_checkpoint(ckpt)
    cfgs = configs_from_checkpoint(ckpt)
    embedder = _make_embedder(args, cfgs["instruct"].text_dim, ckpt=ckpt)
    datasets, _ = _tune_datasets_from_checkpoint(
        ckpt, [args.corpus], args.split, _load_run_config(args).data.split_plan()
    )
    level = _parse_levels(args.level)[0]
    out_path = Path(args.out)
    if out_path.exists() and not args.force:
        raise CliError(EXIT_EXISTS, "exists", f"{out_path} exists (use --force)")
    try:
        evalmod.dump_embeddings(
            model, datasets[0], embedder, out_path, level=level, signal_cfg=cfgs["signal"]
        )
    except OSError as exc:
        raise CliError(EXIT_RUNTIME, "io", f"cannot write {out_path}: {exc}") from exc
    print(f"wrote embeddings for {len(datasets[0].trials)} trials to {out_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eegalign",
        description="EEG-language alignment pipeline: synthesis, pretraining, "
        "instruction tuning, evaluation, inference, and embedding dumps.",
        epilog=_config_keys_doc() + "\n\n" + _EXIT_DOC,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--threads", type=int, default=1, help="torch thread count (1 = deterministic)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True, seed=True):
        if config:
            p.add_argument("--config", help="TOML run configuration file")
        if seed:
            p.add_argument("--seed", type=int, default=None, help="override every config seed")

    p = sub.add_parser("synth", help="generate a synthetic ETRIAL corpus")
    common(p)
    p.add_argument("--out", required=True, help="output corpus directory")
    p.add_argument("--force", action="store_true", help="overwrite a non-empty output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("pretrain", help="stage-1 reconstruction pretraining")
    common(p)
    p.add_argument("--corpus", action="append", required=True, help="ETRIAL corpus directory (repeatable)")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("tune", help="stage-2 instruction tuning")
    common(p)
    p.add_argument("--corpus", action="append", required=True)
    p.add_argument("--checkpoint", required=True, help="pretrain-stage checkpoint")
    p.add_argument("--store", help="EMBTXT embedding store (default: pseudo-embeddings)")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("eval", help="instruction-level evaluation of a tuned model")
    common(p)
    p.add_argument("--checkpoint", required=True, help="tune-stage checkpoint")
    p.add_argument("--corpus", action="append", required=True)
    p.add_argument("--levels", default="none,task,task_and_targets")
    p.add_argument("--split", default="test", choices=["train", "val", "test", "all"])
    p.add_argument("--store")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", help="classify one trial under a given instruction")
    common(p, config=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--trial", required=True, help="trial_id to classify")
    p.add_argument("--instruction", required=True)
    p.add_argument("--store")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("dump", help="export trial and prototype embeddings as CSV")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--level", default="task")
    p.add_argument("--split", default="test", choices=["train", "val", "test", "all"])
    p.add_argument("--store")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_dump)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    torch.set_num_threads(max(1, args.threads))
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error code={exc.code} kind={exc.kind} msg={exc}", file=sys.stderr)
        return exc.code
    except FileNotFoundError as exc:
        print(f"error code={EXIT_MISSING} kind=missing-file msg={exc}", file=sys.stderr)
        return EXIT_MISSING
    except (KeyError, ValueError) as exc:
        print(f"error code={EXIT_RUNTIME} kind=runtime msg={exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
