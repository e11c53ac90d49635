"""Versioned binary checkpoint container.

Layout: 4-byte magic, 4-byte big-endian header length, canonical JSON
header, then the raw array payload — every tensor as little-endian float64
bytes in C order, concatenated in the header's array order (sorted by
name). Canonical JSON plus raw float64 bytes makes save/load round trips
and rerun-determinism bit-exact.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .neuralnet import QNetwork

__all__ = [
    "Checkpoint",
    "save_checkpoint",
    "load_checkpoint",
    "save_agent_checkpoint",
    "load_qnetwork",
    "architecture_of",
]

_MAGIC = b"CDQ1"
_VERSION = 1


@dataclass(eq=False)
class Checkpoint:
    kind: str
    config_hash: str
    arch: dict
    meta: dict
    arrays: dict  # name -> float64 ndarray


def save_checkpoint(
    path: str,
    kind: str,
    arch: dict,
    arrays: dict,
    config_hash: str = "",
    meta: dict | None = None,
) -> None:
    names = sorted(arrays)
    header = {
        "version": _VERSION,
        "kind": kind,
        "config_hash": config_hash,
        "arch": arch,
        "meta": meta or {},
        "arrays": [{"name": n, "shape": list(arrays[n].shape)} for n in names],
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack(">I", len(header_bytes)))
        fh.write(header_bytes)
        for n in names:
            arr = np.ascontiguousarray(arrays[n], dtype="<f8")
            fh.write(arr.tobytes(order="C"))


def load_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    (hlen,) = struct.unpack(">I", blob[4:8])
    header = json.loads(blob[8 : 8 + hlen].decode("utf-8"))
    if header.get("version") != _VERSION:
        raise ValueError(f"unsupported checkpoint version: {header.get('version')!r}")
    arrays = {}
    offset = 8 + hlen
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * 8
        chunk = blob[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise ValueError(f"{path}: truncated array payload at {entry['name']!r}")
        arrays[entry["name"]] = np.frombuffer(chunk, dtype="<f8").reshape(shape).copy()
        offset += nbytes
    if offset != len(blob):
        raise ValueError(f"{path}: {len(blob) - offset} trailing bytes")
    return Checkpoint(
        kind=header["kind"],
        config_hash=header["config_hash"],
        arch=header["arch"],
        meta=header["meta"],
        arrays=arrays,
    )


def architecture_of(net: QNetwork) -> dict:
    return {
        "embedding_dim": net.embedding_dim,
        "hidden_dim": net.hidden_dim,
        "n_actions": net.n_actions,
        "dropout_rate": net.dropout_rate,
    }


def _rng_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def save_agent_checkpoint(path: str, agent, config_hash: str = "") -> None:
    """Full training state: online and target parameters, Adam moments and
    step count, step counter, and every rng stream."""
    arrays = {}
    for k, v in agent.net.params().items():
        arrays[f"net.{k}"] = v
    for k, v in agent.target.params().items():
        arrays[f"target.{k}"] = v
    for k, v in agent.optimizer.m.items():
        arrays[f"adam_m.{k}"] = v
    for k, v in agent.optimizer.v.items():
        arrays[f"adam_v.{k}"] = v
    meta = {
        "adam_t": agent.optimizer.t,
        "learning_rate": agent.optimizer.lr,
        "global_step": agent.global_step,
        "sync_history": list(agent.sync_history),
        "rng": {
            "explore": _rng_state(agent.rng_explore),
            "replay": _rng_state(agent.rng_replay),
            "dropout": _rng_state(agent.rng_dropout),
        },
    }
    save_checkpoint(
        path, "agent", architecture_of(agent.net), arrays,
        config_hash=config_hash, meta=meta,
    )


def load_qnetwork(path: str, expected_arch: dict | None = None):
    """Rebuild the online Q-network from a checkpoint.

    When `expected_arch` is given, any disagreeing field refuses the load —
    evaluating under a config the checkpoint was not trained for is an error.
    Returns (network, checkpoint).
    """
    ckpt = load_checkpoint(path)
    arch = ckpt.arch
    if expected_arch is not None:
        bad = [
            f"{k} {arch.get(k)!r} != {expected_arch[k]!r}"
            for k in sorted(expected_arch)
            if arch.get(k) != expected_arch[k]
        ]
        if bad:
            raise ValueError("checkpoint architecture mismatch: " + "; ".join(bad))
    net = QNetwork(
        int(arch["embedding_dim"]),
        int(arch["hidden_dim"]),
        int(arch["n_actions"]),
        dropout_rate=float(arch.get("dropout_rate", 0.0)),
        rng=np.random.default_rng(0),
    )
    flat = {
        k[len("net.") :]: v for k, v in ckpt.arrays.items() if k.startswith("net.")
    }
    net.load_params(flat)
    return net, ckpt
