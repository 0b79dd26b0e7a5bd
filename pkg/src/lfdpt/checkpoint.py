"""Checkpoint directories: ``manifest.txt`` plus one blob per parameter.

    ckpt/
      manifest.txt        key=value lines (model config, seed, parameter list)
      params/<name>.bin   LFT1 tensor blobs
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ConfigurationError, FormatError
from .lightfield.formats import read_blob, write_blob
from .model import DptConfig, DptModel

MANIFEST = "manifest.txt"
FORMAT_TAG = "lfdpt-checkpoint-1"


def parse_items(text: str, source: str = "<text>") -> dict[str, str]:
    """Parse ``key=value`` lines; blank lines and ``#`` comments are skipped."""
    items: dict[str, str] = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"{source}:{n}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        items[key.strip()] = value.strip()
    return items


def format_items(items: dict[str, str]) -> str:
    return "".join(f"{k}={v}\n" for k, v in items.items())


def save_checkpoint(model: DptModel, path, extra: dict[str, str] | None = None) -> Path:
    path = Path(path)
    (path / "params").mkdir(parents=True, exist_ok=True)
    names = []
    for name, p in model.named_parameters():
        write_blob(path / "params" / f"{name}.bin", name, p.data)
        names.append(name)
    items = {"format": FORMAT_TAG, "seed": str(model.seed)}
    items.update({f"model.{k}": v for k, v in model.config.to_items().items()})
    items["params"] = ",".join(names)
    items.update(extra or {})
    (path / MANIFEST).write_text(format_items(items))
    return path


def read_manifest(path) -> dict[str, str]:
    manifest = Path(path) / MANIFEST
    if not manifest.is_file():
        raise FormatError(f"{path}: no {MANIFEST}")
    items = parse_items(manifest.read_text(), str(manifest))
    if items.get("format") != FORMAT_TAG:
        raise FormatError(f"{manifest}: unknown checkpoint format {items.get('format')!r}")
    return items


def load_checkpoint(path, expect: DptConfig | None = None) -> DptModel:
    """Rebuild the model stored at ``path``.

    With ``expect`` given, a checkpoint trained under any other configuration
    is rejected. Parameter names and shapes must match the rebuilt model.
    """
    path = Path(path)
    items = read_manifest(path)
    config = DptConfig.from_items({k[6:]: v for k, v in items.items() if k.startswith("model.")})
    if expect is not None and expect != config:
        diff = [k for k, v in expect.to_items().items() if config.to_items()[k] != v]
        raise ConfigurationError(f"checkpoint config differs in {diff}")
    model = DptModel(config, seed=int(items.get("seed", "0")))
    params = dict(model.named_parameters())
    stored = [n for n in items.get("params", "").split(",") if n]
    if sorted(stored) != sorted(params):
        raise ConfigurationError("checkpoint parameters do not match the configured model")
    for name, p in params.items():
        blob_name, arr = read_blob(path / "params" / f"{name}.bin")
        if blob_name != name or arr.shape != p.data.shape:
            raise FormatError(f"{path}: blob for {name} holds {blob_name} {arr.shape}")
        p.data = np.array(arr, dtype=np.float64)
    return model
