"""Binary checkpoint serialization.

Layout: magic "BPCK", u32 LE format version, length-prefixed UTF-8 JSON
descriptor (model config, epoch, seed, optimizer metadata), then one record
per array: length-prefixed name, u32 rank, u32 dims, raw float32 LE values.
Network buffers (batch-norm running stats) are stored alongside parameters;
optimizer arrays carry an "opt." name prefix.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .builders import ModelConfig, build_network
from .layers import Network

MAGIC = b"BPCK"
VERSION = 1


@dataclass
class Checkpoint:
    config: ModelConfig
    parameters: dict[str, np.ndarray]
    optimizer_state: dict[str, np.ndarray] = field(default_factory=dict)
    epoch: int = 0
    rng_seed: int = 0
    optimizer_meta: dict = field(default_factory=dict)


def checkpoint_from_network(net: Network, config: ModelConfig, optimizer=None,
                            epoch: int = 0, rng_seed: int = 0) -> Checkpoint:
    params = {k: np.asarray(v, dtype=np.float32).copy() for k, v in net.state_arrays().items()}
    opt_state: dict[str, np.ndarray] = {}
    meta: dict = {}
    if optimizer is not None:
        opt_state = {k: np.asarray(v, dtype=np.float32).copy()
                     for k, v in optimizer.state_arrays().items()}
        meta = {"kind": type(optimizer).__name__, "t": getattr(optimizer, "t", 0),
                "lr": optimizer.lr}
    return Checkpoint(config, params, opt_state, epoch, rng_seed, meta)


def network_from_checkpoint(ckpt: Checkpoint, dtype=np.float32) -> Network:
    net = build_network(ckpt.config, seed=0, dtype=dtype)
    net.load_state(ckpt.parameters)
    return net


def _write_array(f, name: str, arr: np.ndarray) -> None:
    nb = name.encode("utf-8")
    f.write(struct.pack("<I", len(nb)))
    f.write(nb)
    f.write(struct.pack("<I", arr.ndim))
    for d in arr.shape:
        f.write(struct.pack("<I", d))
    f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def save_checkpoint(ckpt: Checkpoint, path: str) -> None:
    desc = {
        "config": json.loads(ckpt.config.to_json()),
        "epoch": ckpt.epoch,
        "rng_seed": ckpt.rng_seed,
        "optimizer": ckpt.optimizer_meta,
    }
    blob = json.dumps(desc, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for name in sorted(ckpt.parameters):
            _write_array(f, name, ckpt.parameters[name])
        for name in sorted(ckpt.optimizer_state):
            _write_array(f, name, ckpt.optimizer_state[name])


def load_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise ValueError(f"{path} is not a BPCK checkpoint")
        (version,) = struct.unpack("<I", f.read(4))
        if version != VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        (dlen,) = struct.unpack("<I", f.read(4))
        desc = json.loads(f.read(dlen).decode("utf-8"))
        params: dict[str, np.ndarray] = {}
        opt: dict[str, np.ndarray] = {}
        while True:
            head = f.read(4)
            if not head:
                break
            (nlen,) = struct.unpack("<I", head)
            name = f.read(nlen).decode("utf-8")
            (rank,) = struct.unpack("<I", f.read(4))
            dims = struct.unpack(f"<{rank}I", f.read(4 * rank))
            count = int(np.prod(dims)) if rank else 1
            arr = np.frombuffer(f.read(4 * count), dtype="<f4").reshape(dims).copy()
            (opt if name.startswith("opt.") else params)[name] = arr
    cfg = ModelConfig.from_json(json.dumps(desc["config"]))
    return Checkpoint(cfg, params, opt, desc["epoch"], desc["rng_seed"],
                      desc.get("optimizer", {}))
