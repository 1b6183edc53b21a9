"""Metrics stream (JSON lines) and versioned checkpoints."""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Iterator

import torch

CHECKPOINT_FORMAT = "hierskill-checkpoint"
CHECKPOINT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def _default(x):
    if hasattr(x, "item"):
        return x.item()
    if hasattr(x, "tolist"):
        return x.tolist()
    raise TypeError(f"cannot serialize {type(x).__name__}")


def dumps_record(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"), default=_default)


class MetricsWriter:
    """Append-only JSON-lines writer; one flushed line per record."""

    def __init__(self, path: str | Path, keep: int = 0):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        lines = self.path.read_text().splitlines(keepends=True) if self.path.exists() else []
        if keep > len(lines):
            raise CheckpointError(f"metrics file has {len(lines)} records, checkpoint expects {keep}")
        with open(self.path, "w") as fh:
            fh.writelines(lines[:keep])
        self.count = keep
        self._fh = open(self.path, "a")

    def write(self, record: dict) -> None:
        self._fh.write(dumps_record(record) + "\n")
        self._fh.flush()
        self.count += 1

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def iter_metrics(path: str | Path) -> Iterator[dict]:
    with open(path) as fh:
        for line in fh:
            if line.strip():
                yield json.loads(line)


def read_metrics(path: str | Path) -> list[dict]:
    return list(iter_metrics(path))


def save_checkpoint(path: str | Path, config_hash: str, payload: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION, "config_hash": config_hash, **payload}
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(blob, tmp)
    os.replace(tmp, path)


def load_checkpoint(path: str | Path, config_hash: str | None = None, force: bool = False) -> dict:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"no checkpoint at {path}")
    blob = torch.load(path, weights_only=False)
    if not isinstance(blob, dict) or blob.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a checkpoint")
    if blob["version"] != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {blob['version']}")
    if config_hash is not None and blob["config_hash"] != config_hash and not force:
        raise CheckpointError(f"config hash {config_hash} does not match checkpoint {blob['config_hash']}")
    return blob
