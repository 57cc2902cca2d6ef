"""Command-line entry point: construct, train, sweep, gencheck, genexp.

Every subcommand reads an optional JSON run config; flags override it and the
``POLARLAB_SEED`` environment variable overrides the config seed (a ``--seed``
flag still wins).  Exit codes: 0 success, 1 failed check, 2 usage or config
error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Optional

import jsonschema

from . import gradcheck
from .codebook import code_from_config, decoding_radius, min_distance
from .errors import PolarLabError, TrainingDivergedError
from .harness import DecoderSpec, SweepConfig, checkpoint_id, default_workers, emit_report, \
    run_generalization, run_paired_sweep, run_sweep
from .nnd import TrainConfig, load_checkpoint, save_checkpoint, train

EXIT_OK, EXIT_CHECK, EXIT_USAGE = 0, 1, 2
DEFAULT_CODE = {"n": 4, "K": 8, "info_set": {"method": "bhattacharyya", "p0": 0.5}}

_NUM = {"type": "number"}
_INT = {"type": "integer", "minimum": 0}

RUN_CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "seed": _INT,
        "code": {
            "type": "object",
            "additionalProperties": False,
            "required": ["n", "K"],
            "properties": {
                "n": _INT,
                "K": {"type": "integer", "minimum": 1},
                "info_set": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["method"],
                    "properties": {
                        "method": {"enum": ["bhattacharyya", "explicit", "nr"]},
                        "p0": _NUM,
                        "indices": {"type": "array", "items": {"type": "integer"}},
                    },
                },
            },
        },
        "noise": {
            "type": "object",
            "additionalProperties": False,
            "required": ["mode"],
            "properties": {"mode": {"enum": ["uniform_db", "fixed_db"]},
                           "lo": _NUM, "hi": _NUM, "value": _NUM, "seed": _INT},
        },
        "train": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "scheme": {"enum": ["selfsup", "baseline"]},
                "epochs": {"type": "integer", "minimum": 1},
                "batch_size": {"type": ["integer", "null"], "minimum": 1},
                "hidden": {"type": "array", "items": {"type": "integer", "minimum": 1},
                           "minItems": 1},
                "subset_percent": {"type": ["number", "null"]},
                "subset_seed": _INT,
                "w": _NUM, "eps": _NUM, "learn_w": {"type": "boolean"},
                "max_lr": _NUM, "warmup": _NUM, "div_initial": _NUM, "div_final": _NUM,
                "beta1": _NUM, "beta2": _NUM, "adam_eps": _NUM,
                "dtype": {"enum": ["float64", "float32"]},
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "ebn0": {"type": "array", "items": _NUM, "minItems": 1},
                "min_blocks": _INT,
                "max_blocks": {"type": "integer", "minimum": 1},
                "target_block_errors": _INT,
                "chunk_size": {"type": "integer", "minimum": 1},
                "workers": {"type": "integer", "minimum": 1},
                "bp_iters": {"type": "integer", "minimum": 1},
            },
        },
        "outputs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"dir": {"type": "string"}, "checkpoint": {"type": "string"},
                           "prefix": {"type": "string"}},
        },
    },
}


class UsageError(Exception):
    pass


def load_run_config(path: Optional[str]) -> dict:
    if path is None:
        cfg: dict = {}
    else:
        try:
            cfg = json.loads(Path(path).read_text())
        except OSError as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"malformed JSON in {path}: {exc}") from exc
    try:
        jsonschema.validate(cfg, RUN_CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(map(str, exc.absolute_path)) or "<root>"
        raise UsageError(f"invalid config at {where}: {exc.message}") from exc
    return cfg


def resolve_seed(cfg: dict, flag: Optional[int]) -> int:
    if flag is not None:
        return flag
    env = os.environ.get("POLARLAB_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise UsageError(f"POLARLAB_SEED must be an integer, got {env!r}") from exc
    return int(cfg.get("seed", 0))


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise UsageError(f"bad number list {text!r}") from exc


def _out_dir(cfg: dict, flag: Optional[str]) -> Path:
    out = Path(flag or cfg.get("outputs", {}).get("dir", "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _train_config(cfg: dict, args, seed: int) -> TrainConfig:
    block = dict(cfg.get("train", {}))
    scheme = args.scheme or block.pop("scheme", "selfsup")
    block.pop("scheme", None)
    if getattr(args, "epochs", None) is not None:
        block["epochs"] = args.epochs
    if "noise" in cfg:
        block["noise"] = dict(cfg["noise"])
    if scheme == "baseline":
        return TrainConfig.baseline_defaults(seed=seed, **block)
    return TrainConfig(scheme=scheme, seed=seed, **block)


def _sweep_config(cfg: dict, args, code, seed: int, decoder: DecoderSpec) -> SweepConfig:
    block = cfg.get("sweep", {})
    ebn0 = _parse_floats(args.ebn0) if args.ebn0 else block.get("ebn0", list(range(9)))
    workers = args.workers or block.get("workers") or default_workers()
    kw = {k: block[k] for k in ("min_blocks", "max_blocks", "target_block_errors", "chunk_size")
          if k in block}
    for k in ("min_blocks", "max_blocks"):
        if getattr(args, k, None) is not None:
            kw[k] = getattr(args, k)
    return SweepConfig(code, decoder, [float(e) for e in ebn0], seed=seed, workers=workers, **kw)


# ---------------------------------------------------------------------------
# subcommands

def cmd_construct(args, cfg: dict) -> int:
    code = code_from_config(cfg.get("code", DEFAULT_CODE))
    d = min_distance(code)
    info = {"N": code.N, "K": code.K, "info_set": list(code.info_set), "d_min": d,
            "r": decoding_radius(code)}
    print(f"{code.describe()} d_min={d} r={info['r']}")
    print(json.dumps(info, sort_keys=True))
    return EXIT_OK


def cmd_train(args, cfg: dict) -> int:
    code = code_from_config(cfg.get("code", DEFAULT_CODE))
    seed = resolve_seed(cfg, args.seed)
    tcfg = _train_config(cfg, args, seed)
    if args.p is not None:
        tcfg = replace(tcfg, subset_percent=args.p)
    out = Path(args.out or cfg.get("outputs", {}).get("checkpoint", "model.ckpt.json"))
    t0 = time.perf_counter()
    try:
        ckpt = train(tcfg, code)
    except TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(ckpt, out)
    print(f"final_loss={ckpt.loss_trace[-1]:.6g} wall_time={time.perf_counter() - t0:.1f}s "
          f"checkpoint={out}")
    return EXIT_OK


def _decoder_specs(args, cfg: dict) -> list[DecoderSpec]:
    bp_iters = args.bp_iters or cfg.get("sweep", {}).get("bp_iters", 30)
    kinds = [k.strip() for k in args.decoder.split(",") if k.strip()]
    if not kinds:
        raise UsageError("no decoder given")
    if len(kinds) > 1 and not args.paired:
        raise UsageError("several decoders need --paired")
    specs = []
    for k in kinds:
        if k not in ("map", "sc", "bp", "bdd", "nnd"):
            raise UsageError(f"unknown decoder {k!r}")
        if k == "nnd" and not args.ckpt:
            raise UsageError("--decoder nnd requires --ckpt")
        specs.append(DecoderSpec(k, bp_iters, args.ckpt if k == "nnd" else None))
    return specs


def cmd_sweep(args, cfg: dict) -> int:
    specs = _decoder_specs(args, cfg)
    if args.ckpt and not Path(args.ckpt).exists():
        raise UsageError(f"checkpoint {args.ckpt} not found")
    code = code_from_config(cfg.get("code", DEFAULT_CODE))
    if args.ckpt:
        ck_code = load_checkpoint(args.ckpt).code
        if "code" not in cfg:
            code = ck_code
        elif ck_code != code:
            raise UsageError("checkpoint was trained for a different code")
    seed = resolve_seed(cfg, args.seed)
    out = _out_dir(cfg, args.out)
    prefix = cfg.get("outputs", {}).get("prefix", "sweep")
    base = _sweep_config(cfg, args, code, seed, specs[0])
    reports = run_paired_sweep(base, specs) if args.paired else [run_sweep(base)]
    for rep in reports:
        for fmt in ("csv", "json"):
            path = out / f"{prefix}_{rep.decoder}.{fmt}"
            emit_report(rep, fmt, path)
        for p in rep.points:
            print(f"{rep.decoder:5s} ebn0={p.ebn0_db:5.2f} blocks={p.blocks:8d} "
                  f"ber={p.ber(code.K):.4e} bler={p.bler:.4e}")
    return EXIT_OK


def cmd_gencheck(args, cfg: dict) -> int:
    code = code_from_config(cfg.get("code", DEFAULT_CODE))
    seed = resolve_seed(cfg, args.seed)
    results = gradcheck.run_battery(code, points=args.points, seed=seed,
                                    corrupt=args.corrupt_gradient)
    for r in results:
        print(r.line())
    worst = max(r.max_rel_error for r in results if not r.name.startswith("sign"))
    print(f"max_rel_error={worst:.3e}")
    failed = [r.name for r in results if not r.passed]
    if failed:
        print("failed: " + ", ".join(failed), file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def cmd_genexp(args, cfg: dict) -> int:
    if not 0 < args.p <= 100:
        raise UsageError("--p must lie in (0, 100]")
    code = code_from_config(cfg.get("code", DEFAULT_CODE))
    seed = resolve_seed(cfg, args.seed)
    out = _out_dir(cfg, args.out)
    if args.ckpt:
        ckpt = load_checkpoint(args.ckpt)
        label = checkpoint_id(args.ckpt)
    else:
        tcfg = _train_config(cfg, args, seed)
        tcfg = replace(tcfg, subset_percent=args.p)
        ckpt = train(tcfg, code)
        path = out / f"genexp_p{args.p:g}.ckpt.json"
        save_checkpoint(ckpt, path)
        label = checkpoint_id(path)
    base = _sweep_config(cfg, args, ckpt.code, seed, DecoderSpec("nnd"))
    reports = run_generalization(ckpt, base, label)
    seen = len(ckpt.subset) if ckpt.subset is not None else 2**code.K
    print(f"subset: seen={seen} unseen={2**code.K - seen}")
    for name, rep in reports.items():
        path = out / f"genexp_p{args.p:g}_{name}.json"
        emit_report(rep, "json", path)
        emit_report(rep, "csv", path.with_suffix(".csv"))
        if rep.skipped:
            print(f"{name:7s} skipped (empty message set)")
        for p in rep.points:
            print(f"{name:7s} ebn0={p.ebn0_db:5.2f} blocks={p.blocks:8d} bler={p.bler:.4e}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polarlab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run config")
        p.add_argument("--seed", type=int, help="overrides config and POLARLAB_SEED")
        return p

    common(sub.add_parser("construct", help="build a code and print A, d_min and r"))

    p = common(sub.add_parser("train", help="train a neural decoder"))
    p.add_argument("--scheme", choices=["selfsup", "baseline"])
    p.add_argument("--out", help="checkpoint path")
    p.add_argument("--epochs", type=int)
    p.add_argument("--p", type=float, help="train on a fixed p%% codebook subset")

    def sweep_flags(p):
        p.add_argument("--ebn0", help="comma separated Eb/N0 points in dB")
        p.add_argument("--workers", type=int, help="worker processes (default: all cores)")
        p.add_argument("--min-blocks", type=int)
        p.add_argument("--max-blocks", type=int)
        p.add_argument("--out", help="output directory")

    p = common(sub.add_parser("sweep", help="BER/BLER sweep"))
    p.add_argument("--decoder", required=True, help="map, sc, bp, bdd or nnd (comma list with --paired)")
    p.add_argument("--bp-iters", type=int)
    p.add_argument("--ckpt")
    p.add_argument("--paired", action="store_true", help="common random numbers across decoders")
    sweep_flags(p)

    p = common(sub.add_parser("gencheck", help="finite-difference gradient checks"))
    p.add_argument("--points", type=int, default=100)
    p.add_argument("--corrupt-gradient", action="store_true", help=argparse.SUPPRESS)

    p = common(sub.add_parser("genexp", help="generalization experiment"))
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--scheme", choices=["selfsup", "baseline"])
    p.add_argument("--epochs", type=int)
    p.add_argument("--ckpt", help="evaluate this checkpoint instead of training")
    sweep_flags(p)
    return parser


COMMANDS = {"construct": cmd_construct, "train": cmd_train, "sweep": cmd_sweep,
            "gencheck": cmd_gencheck, "genexp": cmd_genexp}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_run_config(args.config)
        return COMMANDS[args.command](args, cfg)
    except (UsageError, PolarLabError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
