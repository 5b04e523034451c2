"""Command-line entry point wiring the library into reproducible workflows.

Every subcommand is driven by a JSON config file plus ``--set key=value``
overrides (dotted keys reach into nested sections) and an optional
``--seed`` that replaces the root seed.  Each run logs the hash of the
resolved configuration so recipes can be compared and reruns verified.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import checkpoint, datasets, evaluation, model, training
from .errors import ConfigError, MoskitError, NumericError
from .utils import config_hash, derive_seed

log = logging.getLogger("moskit")

SUBCOMMANDS = (
    "featurize",
    "synth-data",
    "train",
    "finetune",
    "two-step",
    "evaluate",
    "predict",
    "export-report",
)

_DTYPES = {"float32": np.float32, "float64": np.float64}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _check_keys(section: dict, allowed, where: str) -> None:
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def _parse_override(text: str):
    if "=" not in text:
        raise UsageError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def _apply_override(cfg: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    node = cfg
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot descend into non-object config key {p!r}")
    node[parts[-1]] = value


def _resolve_config(args) -> dict:
    cfg = {}
    if args.config:
        with open(args.config) as f:
            cfg = json.load(f)
        if not isinstance(cfg, dict):
            raise ConfigError("config file must contain a JSON object")
    for item in args.set or []:
        key, value = _parse_override(item)
        _apply_override(cfg, key, value)
    if args.seed is not None:
        cfg["seed"] = args.seed
    print(f"resolved config hash: {config_hash(cfg)}", file=sys.stderr)
    return cfg


def _limit_threads() -> None:
    cap = os.environ.get("MOSKIT_NUM_THREADS")
    if not cap:
        return
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(int(cap))
    except Exception as exc:  # pragma: no cover - best effort
        log.warning("could not apply MOSKIT_NUM_THREADS=%s: %s", cap, exc)


_DATA_KEYS = ("manifest", "val_manifest", "split", "spec_cache_dir", "keep_in_memory")


def _load_datasets(data_cfg: dict, root_seed: int, need_val: bool):
    _check_keys(data_cfg, _DATA_KEYS, "data")
    manifest = data_cfg.get("manifest")
    if not manifest:
        raise ConfigError("data.manifest is required")
    entries = datasets.load_manifest(manifest)
    root = Path(manifest).parent
    kwargs = {
        "spec_cache_dir": data_cfg.get("spec_cache_dir"),
        "keep_in_memory": bool(data_cfg.get("keep_in_memory", False)),
    }
    if not need_val:
        return datasets.UtteranceDataset(entries, root, **kwargs), None
    if data_cfg.get("val_manifest"):
        val_entries = datasets.load_manifest(data_cfg["val_manifest"])
        train_ds = datasets.UtteranceDataset(entries, root, **kwargs)
        val_ds = datasets.UtteranceDataset(val_entries, Path(data_cfg["val_manifest"]).parent, **kwargs)
        return train_ds, val_ds
    split_cfg = dict(data_cfg.get("split") or {})
    _check_keys(split_cfg, ("train_fraction", "seed", "level"), "data.split")
    spec = datasets.SplitSpec(
        train_fraction=float(split_cfg.get("train_fraction", 0.8)),
        seed=int(split_cfg.get("seed", derive_seed(root_seed, "split"))),
        level=split_cfg.get("level", "system"),
    )
    train_entries, val_entries = datasets.split_by_system(entries, spec)
    base = datasets.UtteranceDataset(entries, root, **kwargs)
    return base.subset(train_entries), base.subset(val_entries)


def _train_config(section: dict, root_seed: int, component: str) -> training.TrainConfig:
    section = dict(section)
    if "seed" not in section:
        section["seed"] = derive_seed(root_seed, component)
    return training.TrainConfig.from_dict(section)


def _write_checkpoint(params, out_dir: Path, name: str) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoint.save_checkpoint_file(params, out_dir / name)
    log.info("wrote %s", out_dir / name)


def _cmd_synth_data(cfg: dict) -> int:
    _check_keys(
        cfg,
        (
            "seed",
            "out_dir",
            "n_systems",
            "utts_per_system",
            "rates",
            "feature_dim",
            "duration_seconds",
            "rater_noise_std",
            "label_scale",
            "label_offset",
        ),
        "synth-data config",
    )
    manifest = datasets.generate_synthetic(
        n_systems=int(cfg.get("n_systems", 10)),
        utts_per_system=int(cfg.get("utts_per_system", 10)),
        seed=int(cfg.get("seed", 0)),
        out_dir=cfg["out_dir"],
        rates=tuple(cfg.get("rates", datasets.CARRIER_RATES)),
        feature_dim=int(cfg.get("feature_dim", 1920)),
        duration_seconds=float(cfg.get("duration_seconds", 10.0)),
        rater_noise_std=float(cfg.get("rater_noise_std", 0.1)),
        label_scale=float(cfg.get("label_scale", 1.0)),
        label_offset=float(cfg.get("label_offset", 0.0)),
    )
    print(manifest)
    return 0


def _cmd_featurize(cfg: dict) -> int:
    _check_keys(cfg, ("seed", "manifest", "spec_cache_dir", "target_seconds"), "featurize config")
    if not cfg.get("manifest") or not cfg.get("spec_cache_dir"):
        raise ConfigError("featurize needs data keys 'manifest' and 'spec_cache_dir'")
    entries = datasets.load_manifest(cfg["manifest"])
    ds = datasets.UtteranceDataset(
        entries,
        Path(cfg["manifest"]).parent,
        target_seconds=float(cfg.get("target_seconds", 10.0)),
    )
    n_feat = ds.validate_features()
    n_spec = ds.write_spec_cache(cfg["spec_cache_dir"])
    print(f"validated {n_feat} feature files, cached {n_spec} spectrograms")
    return 0


def _cmd_train(cfg: dict, init_from: str | None = None) -> int:
    allowed = ("seed", "arch", "dtype", "train", "data", "out_dir")
    if init_from is not None:
        allowed += ("init_checkpoint",)
    _check_keys(cfg, allowed, "train config")
    root_seed = int(cfg.get("seed", 0))
    out_dir = Path(cfg.get("out_dir", "."))
    train_cfg = _train_config(cfg.get("train") or {}, root_seed, "train")
    train_ds, val_ds = _load_datasets(dict(cfg.get("data") or {}), root_seed, need_val=True)

    if init_from is not None:
        params = checkpoint.load_checkpoint_file(init_from)
    else:
        arch = model.ArchitectureConfig.from_dict(cfg.get("arch") or {})
        dtype = _DTYPES.get(cfg.get("dtype", "float32"))
        if dtype is None:
            raise ConfigError(f"unknown dtype {cfg.get('dtype')!r}")
        params = model.init_params(arch, derive_seed(root_seed, "init"), dtype=dtype)

    final, record = training.train(params, train_ds, val_ds, train_cfg)
    _write_checkpoint(final, out_dir, "checkpoint.ckpt")
    (out_dir / "run_record.json").write_text(record.to_json())
    print(record.to_json())
    return 0


def _cmd_finetune(cfg: dict) -> int:
    if not cfg.get("init_checkpoint"):
        raise ConfigError("finetune needs 'init_checkpoint'")
    return _cmd_train(cfg, init_from=cfg["init_checkpoint"])


def _cmd_two_step(cfg: dict) -> int:
    _check_keys(cfg, ("seed", "arch", "dtype", "pretrain", "finetune", "out_dir"), "two-step config")
    root_seed = int(cfg.get("seed", 0))
    out_dir = Path(cfg.get("out_dir", "."))
    arch = model.ArchitectureConfig.from_dict(cfg.get("arch") or {})
    dtype = _DTYPES.get(cfg.get("dtype", "float32"))
    if dtype is None:
        raise ConfigError(f"unknown dtype {cfg.get('dtype')!r}")

    stages = {}
    for stage in ("pretrain", "finetune"):
        section = dict(cfg.get(stage) or {})
        _check_keys(section, ("data", "train"), stage)
        stages[stage] = (
            _load_datasets(dict(section.get("data") or {}), root_seed, need_val=True),
            _train_config(section.get("train") or {}, root_seed, stage),
        )

    (pre_sets, pre_cfg) = stages["pretrain"]
    (fine_sets, fine_cfg) = stages["finetune"]
    result = training.two_step_train(
        arch, pre_sets[0], pre_sets[1], fine_sets[0], fine_sets[1], pre_cfg, fine_cfg, dtype=dtype
    )
    _write_checkpoint(result.pretrain_params, out_dir, "stage1.ckpt")
    _write_checkpoint(result.params, out_dir, "stage2.ckpt")
    records = {
        "pretrain": result.pretrain_record.to_dict(),
        "finetune": result.finetune_record.to_dict(),
    }
    (out_dir / "run_records.json").write_text(json.dumps(records, indent=2, sort_keys=True))
    print(json.dumps(records, indent=2, sort_keys=True))
    return 0


def _load_eval_inputs(cfg: dict):
    if not cfg.get("checkpoint"):
        raise ConfigError("a 'checkpoint' path is required")
    params = checkpoint.load_checkpoint_file(cfg["checkpoint"])
    ds, _ = _load_datasets(dict(cfg.get("data") or {}), int(cfg.get("seed", 0)), need_val=False)
    return params, ds


def _cmd_evaluate(cfg: dict) -> int:
    _check_keys(cfg, ("seed", "checkpoint", "data", "out_json", "out_table"), "evaluate config")
    params, ds = _load_eval_inputs(cfg)
    report = evaluation.evaluate(params, ds)
    if cfg.get("out_json"):
        Path(cfg["out_json"]).write_text(report.to_json())
    if cfg.get("out_table"):
        Path(cfg["out_table"]).write_text(report.to_table() + "\n")
    print(report.to_table())
    return 0


def _cmd_predict(cfg: dict) -> int:
    _check_keys(cfg, ("seed", "checkpoint", "data", "out_csv"), "predict config")
    params, ds = _load_eval_inputs(cfg)
    rows = evaluation.predict(params, ds)
    sink = open(cfg["out_csv"], "w", newline="") if cfg.get("out_csv") else sys.stdout
    try:
        writer = csv.writer(sink)
        writer.writerow(["utterance_id", "mu", "sigma2"])
        for utt, mu, sigma2 in rows:
            writer.writerow([utt, repr(mu), repr(sigma2)])
    finally:
        if sink is not sys.stdout:
            sink.close()
    return 0


def _cmd_export_report(cfg: dict) -> int:
    _check_keys(cfg, ("seed", "inputs", "out_json"), "export-report config")
    paths = cfg.get("inputs") or []
    if not paths:
        raise ConfigError("export-report needs a non-empty 'inputs' list of report JSONs")
    metric_keys = ("UTT_MSE", "UTT_LCC", "UTT_SRCC", "SYS_MSE", "SYS_LCC", "SYS_SRCC")
    collected: dict = {k: [] for k in metric_keys}
    for p in paths:
        with open(p) as f:
            report = json.load(f)
        for k in metric_keys:
            if report.get(k) is not None:
                collected[k].append(float(report[k]))
    aggregated = {}
    for k, values in collected.items():
        if not values:
            continue
        arr = np.asarray(values)
        std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
        aggregated[k] = {"mean": float(arr.mean()), "std": std, "n": int(arr.size)}
    text = json.dumps(aggregated, indent=2, sort_keys=True)
    if cfg.get("out_json"):
        Path(cfg["out_json"]).write_text(text)
    print(text)
    return 0


_HANDLERS = {
    "synth-data": _cmd_synth_data,
    "featurize": _cmd_featurize,
    "train": _cmd_train,
    "finetune": _cmd_finetune,
    "two-step": _cmd_two_step,
    "evaluate": _cmd_evaluate,
    "predict": _cmd_predict,
    "export-report": _cmd_export_report,
}

_HELP = {
    "synth-data": "generate a synthetic corpus (keys: out_dir, n_systems, utts_per_system, "
    "seed, rates, feature_dim, duration_seconds, rater_noise_std, label_scale, label_offset)",
    "featurize": "cache spectrograms and validate feature files (keys: manifest, "
    "spec_cache_dir, target_seconds)",
    "train": "train a model from scratch (keys: seed, arch, dtype, train.*, data.*, out_dir)",
    "finetune": "continue training from a checkpoint (train keys plus init_checkpoint)",
    "two-step": "pretrain then fine-tune (keys: seed, arch, dtype, pretrain.{data,train}, "
    "finetune.{data,train}, out_dir)",
    "evaluate": "score a checkpoint on a manifest (keys: checkpoint, data.*, out_json, out_table)",
    "predict": "emit per-utterance mu/sigma2 CSV (keys: checkpoint, data.*, out_csv)",
    "export-report": "aggregate metric reports as mean/std (keys: inputs, out_json)",
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="moskit", description=__doc__, add_help=True)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=_HELP[name], description=_HELP[name])
        p.add_argument("--config", help="JSON config file")
        p.add_argument(
            "--set",
            action="append",
            metavar="KEY=VALUE",
            help="override a config key (dotted keys reach nested sections)",
        )
        p.add_argument("--seed", type=int, help="replace the root seed")
        p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    _limit_threads()
    try:
        cfg = _resolve_config(args)
        return _HANDLERS[args.command](cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except (MoskitError, OSError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
