"""Monte Carlo BER/BLER sweeps, the generalization protocol and report files.

Blocks are simulated in fixed-size chunks.  Chunk ``c`` of Eb/N0 point ``p``
draws from its own Philox stream keyed by ``(seed, p, c)``, and chunks are
merged strictly in index order, so a report depends only on the sweep
configuration, never on how many worker processes produced it.  Decoders run
with the same seed therefore see identical messages and noise (common random
numbers).
"""
from __future__ import annotations

import csv
import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .channel import SIGMA_CONVENTION, awgn, bpsk_modulate, ebn0_to_sigma, hard_decision, \
    llr_from_awgn, make_rng
from .classic import DEFAULT_BP_ITERS, bp_decode, map_decode, sc_decode
from .codebook import CodeSpec, bounded_distance_decode_batch, encode, int_to_bits
from .errors import ConfigurationError, ValidationError
from .nn_core import MlpModel
from .nnd import Checkpoint, complement, load_checkpoint, nnd_decode

DECODER_KINDS = ("map", "sc", "bp", "bdd", "nnd")
CSV_COLUMNS = ["decoder", "ebn0_db", "blocks", "bit_errors", "block_errors", "ber", "bler",
               "seed", "code", "info_set", "checkpoint"]


@dataclass(frozen=True)
class DecoderSpec:
    kind: str
    bp_iters: int = DEFAULT_BP_ITERS
    checkpoint: Optional[str] = None

    def __post_init__(self):
        if self.kind not in DECODER_KINDS:
            raise ValidationError(f"unknown decoder {self.kind!r}")
        if self.bp_iters < 1:
            raise ValidationError("bp iterations must be >= 1")

    @property
    def label(self) -> str:
        return f"bp{self.bp_iters}" if self.kind == "bp" else self.kind


def checkpoint_id(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def make_decoder(spec: DecoderSpec, code: CodeSpec,
                 model: Optional[MlpModel] = None) -> Callable[[np.ndarray, float], np.ndarray]:
    """Return ``decode(y, sigma) -> messages`` for a batch of channel outputs."""
    if spec.kind == "map":
        return lambda y, sigma: map_decode(y, code)
    if spec.kind == "sc":
        return lambda y, sigma: sc_decode(llr_from_awgn(y, sigma), code)
    if spec.kind == "bp":
        return lambda y, sigma: bp_decode(llr_from_awgn(y, sigma), code, spec.bp_iters)
    if spec.kind == "bdd":
        return lambda y, sigma: bounded_distance_decode_batch(hard_decision(y), code)[0]
    if model is None:
        if spec.checkpoint is None:
            raise ConfigurationError("the nnd decoder needs a checkpoint")
        model = load_checkpoint(spec.checkpoint).model
    if model.dims[0] != code.N or model.dims[-1] != code.K:
        raise ConfigurationError("checkpoint does not match the code dimensions")
    return lambda y, sigma: nnd_decode(y, model)


@dataclass
class SweepConfig:
    code: CodeSpec
    decoder: DecoderSpec
    ebn0_points: Sequence[float] = tuple(float(x) for x in range(9))
    min_blocks: int = 10**4
    max_blocks: int = 10**6
    target_block_errors: int = 100
    seed: int = 0
    workers: int = 1
    chunk_size: int = 1000
    messages: Optional[Sequence[int]] = None      # restrict sources to these message integers
    source_label: str = "random"

    def __post_init__(self):
        if not len(self.ebn0_points):
            raise ValidationError("at least one Eb/N0 point is required")
        if self.min_blocks > self.max_blocks or self.min_blocks < 0 or self.max_blocks < 1:
            raise ValidationError("need 0 <= min_blocks <= max_blocks and max_blocks >= 1")
        if self.chunk_size < 1 or self.workers < 1:
            raise ValidationError("chunk_size and workers must be positive")
        if self.messages is not None and len(self.messages) == 0:
            raise ValidationError("message source is empty")


@dataclass
class PointResult:
    ebn0_db: float
    blocks: int = 0
    bit_errors: int = 0
    block_errors: int = 0

    def ber(self, K: int) -> float:
        return self.bit_errors / (self.blocks * K) if self.blocks else 0.0

    @property
    def bler(self) -> float:
        return self.block_errors / self.blocks if self.blocks else 0.0


@dataclass
class EvalReport:
    decoder: str
    code: dict
    seed: int
    points: list[PointResult] = field(default_factory=list)
    checkpoint: str = ""
    source: str = "random"
    skipped: bool = False
    sigma_convention: str = SIGMA_CONVENTION
    config_hash: str = ""

    @property
    def K(self) -> int:
        return int(self.code["K"])

    def rows(self) -> list[dict]:
        code = f"({2 ** int(self.code['n'])},{self.K})"
        info = " ".join(map(str, self.code["info_set"]))
        return [{"decoder": self.decoder, "ebn0_db": p.ebn0_db, "blocks": p.blocks,
                 "bit_errors": p.bit_errors, "block_errors": p.block_errors,
                 "ber": p.ber(self.K), "bler": p.bler, "seed": self.seed, "code": code,
                 "info_set": info, "checkpoint": self.checkpoint} for p in self.points]

    def to_dict(self) -> dict:
        d = asdict(self)
        for p, row in zip(d["points"], self.rows()):
            p["ber"], p["bler"] = row["ber"], row["bler"]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        d = dict(d)
        d["points"] = [PointResult(p["ebn0_db"], p["blocks"], p["bit_errors"], p["block_errors"])
                       for p in d["points"]]
        return cls(**d)


# ---------------------------------------------------------------------------
# simulation core

def _simulate_chunk(code: CodeSpec, decoders, seed: int, point: int, chunk: int, size: int,
                    ebn0_db: float, messages) -> list[tuple[int, int]]:
    """Errors ``(bit_errors, block_errors)`` per decoder on one chunk of blocks."""
    rng = make_rng(seed, point, chunk)
    if messages is None:
        ints = rng.integers(0, 2**code.K, size=size)
    else:
        pool = np.asarray(messages, dtype=np.int64)
        ints = pool[rng.integers(0, pool.size, size=size)]
    u = int_to_bits(ints, code.K)
    sigma = float(ebn0_to_sigma(ebn0_db, code.rate))
    y = awgn(bpsk_modulate(encode(u, code)), sigma, rng)
    out = []
    for decode in decoders:
        wrong = decode(y, sigma) != u
        out.append((int(wrong.sum()), int(wrong.any(axis=1).sum())))
    return out


_WORKER: dict = {}


def _worker_init(code, specs, models):
    _WORKER["code"] = code
    _WORKER["decoders"] = [make_decoder(s, code, m) for s, m in zip(specs, models)]


def _worker_chunk(args):
    return _simulate_chunk(_WORKER["code"], _WORKER["decoders"], *args)


def _chunk_sizes(cfg: SweepConfig):
    done, c = 0, 0
    while done < cfg.max_blocks:
        size = min(cfg.chunk_size, cfg.max_blocks - done)
        yield c, size
        done += size
        c += 1


def _run(cfg: SweepConfig, specs: list[DecoderSpec], models: list[Optional[MlpModel]]):
    """Shared driver; returns per-decoder lists of PointResult."""
    code = cfg.code
    results = [[PointResult(float(e)) for e in cfg.ebn0_points] for _ in specs]
    pool = None
    if cfg.workers > 1:
        pool = ProcessPoolExecutor(cfg.workers, initializer=_worker_init,
                                   initargs=(code, specs, models))
    else:
        decoders = [make_decoder(s, code, m) for s, m in zip(specs, models)]
    try:
        for p, ebn0 in enumerate(cfg.ebn0_points):
            chunks = iter(_chunk_sizes(cfg))
            finished = False
            while not finished:
                wave = [next(chunks, None) for _ in range(cfg.workers)]
                wave = [w for w in wave if w is not None]
                if not wave:
                    break
                args = [(cfg.seed, p, c, size, float(ebn0), cfg.messages) for c, size in wave]
                if pool is None:
                    outs = [_simulate_chunk(code, decoders, *a) for a in args]
                else:
                    outs = list(pool.map(_worker_chunk, args))
                # merge in chunk order; discard anything past the stop point
                for (c, size), per_decoder in zip(wave, outs):
                    for res, (bits, blocks) in zip(results, per_decoder):
                        r = res[p]
                        r.blocks += size
                        r.bit_errors += bits
                        r.block_errors += blocks
                    if _should_stop(cfg, [res[p] for res in results]):
                        finished = True
                        break
    finally:
        if pool is not None:
            pool.shutdown()
    return results


def _should_stop(cfg: SweepConfig, points: list[PointResult]) -> bool:
    if points[0].blocks >= cfg.max_blocks:
        return True
    return all(p.blocks >= cfg.min_blocks and p.block_errors >= cfg.target_block_errors
               for p in points)


def config_hash(obj) -> str:
    text = json.dumps(obj, sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _sweep_fingerprint(cfg: SweepConfig, specs, labels) -> dict:
    # checkpoints enter by content id, not by path
    decoders = [{"kind": s.kind, "bp_iters": s.bp_iters, "checkpoint": lab}
                for s, lab in zip(specs, labels)]
    return {"code": cfg.code.to_dict(), "decoders": decoders,
            "ebn0": list(map(float, cfg.ebn0_points)), "min_blocks": cfg.min_blocks,
            "max_blocks": cfg.max_blocks, "target": cfg.target_block_errors, "seed": cfg.seed,
            "chunk": cfg.chunk_size, "source": cfg.source_label,
            "messages": None if cfg.messages is None else list(map(int, cfg.messages))}


def _report(cfg: SweepConfig, spec: DecoderSpec, points, ckpt_label: str, chash: str) -> EvalReport:
    return EvalReport(spec.label, cfg.code.to_dict(), cfg.seed, points, ckpt_label,
                      cfg.source_label, config_hash=chash)


def run_sweep(cfg: SweepConfig, model: Optional[MlpModel] = None,
              checkpoint_label: str = "") -> EvalReport:
    """BER/BLER sweep for one decoder."""
    if cfg.decoder.kind == "nnd" and model is None:
        if cfg.decoder.checkpoint is None:
            raise ConfigurationError("the nnd decoder needs a checkpoint")
        model = load_checkpoint(cfg.decoder.checkpoint).model
        checkpoint_label = checkpoint_label or checkpoint_id(cfg.decoder.checkpoint)
    (points,) = _run(cfg, [cfg.decoder], [model])
    return _report(cfg, cfg.decoder, points, checkpoint_label,
                   config_hash(_sweep_fingerprint(cfg, [cfg.decoder], [checkpoint_label])))


def run_paired_sweep(cfg: SweepConfig, decoders: Sequence[DecoderSpec],
                     models: Optional[Sequence[Optional[MlpModel]]] = None,
                     checkpoint_labels: Optional[Sequence[str]] = None) -> list[EvalReport]:
    """Sweep several decoders over identical blocks.

    Every decoder sees the same messages and noise, and all stop together once
    each has met the stop rule (or ``max_blocks`` is hit).
    """
    decoders = list(decoders)
    models = list(models) if models is not None else [None] * len(decoders)
    labels = list(checkpoint_labels) if checkpoint_labels is not None else [""] * len(decoders)
    for i, spec in enumerate(decoders):
        if spec.kind == "nnd" and models[i] is None:
            if spec.checkpoint is None:
                raise ConfigurationError("the nnd decoder needs a checkpoint")
            models[i] = load_checkpoint(spec.checkpoint).model
            labels[i] = labels[i] or checkpoint_id(spec.checkpoint)
    results = _run(cfg, decoders, models)
    chash = config_hash(_sweep_fingerprint(cfg, decoders, labels))
    return [_report(cfg, s, pts, lab, chash) for s, pts, lab in zip(decoders, results, labels)]


# ---------------------------------------------------------------------------
# generalization protocol

def run_generalization(ckpt: Checkpoint, base: SweepConfig,
                       checkpoint_label: str = "") -> dict[str, EvalReport]:
    """Evaluate a subset-trained decoder on random, unseen and seen messages.

    ``base`` supplies the code, points and stop rule; its decoder field is
    replaced by the checkpoint's network.  When the model saw the whole
    codebook the unseen report is returned empty and marked skipped.
    """
    K = ckpt.code.K
    seen = np.arange(2**K) if ckpt.subset is None else np.asarray(ckpt.subset, dtype=np.int64)
    unseen = complement(K, seen)
    spec = DecoderSpec("nnd")
    out: dict[str, EvalReport] = {}
    for label, msgs in (("random", None), ("unseen", unseen), ("seen", seen)):
        if msgs is not None and len(msgs) == 0:
            out[label] = EvalReport(spec.label, ckpt.code.to_dict(), base.seed, [],
                                    checkpoint_label, label, skipped=True)
            continue
        cfg = SweepConfig(ckpt.code, spec, base.ebn0_points, base.min_blocks, base.max_blocks,
                          base.target_block_errors, base.seed, base.workers, base.chunk_size,
                          None if msgs is None else msgs.tolist(), label)
        out[label] = run_sweep(cfg, ckpt.model, checkpoint_label)
    return out


# ---------------------------------------------------------------------------
# report files

def emit_report(report: EvalReport, fmt: str, path) -> None:
    path = Path(path)
    if fmt == "csv":
        with path.open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
            writer.writeheader()
            for row in report.rows():
                writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    elif fmt == "json":
        path.write_text(json.dumps(report.to_dict(), sort_keys=True, indent=1))
    else:
        raise ValidationError(f"unknown report format {fmt!r}")


def load_report(path) -> EvalReport:
    return EvalReport.from_dict(json.loads(Path(path).read_text()))


def default_workers() -> int:
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1)
