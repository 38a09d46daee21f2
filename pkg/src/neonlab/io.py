"""Checkpoint file format and flat key=value config files.

Checkpoint layout (all integers little-endian):
  8 bytes   magic "NEONCKPT"
  1 byte    format version (currently 1)
  4 bytes   metadata byte length
  ...       UTF-8 metadata, one key=value per line
  8 bytes   parameter count
  ...       count float64 values, little-endian
"""

from __future__ import annotations

import struct

import numpy as np

from .core import Checkpoint

MAGIC = b"NEONCKPT"
VERSION = 1

RESERVED_META = ("model_kind", "seed", "budget_images", "lr")


class CheckpointFormatError(ValueError):
    """Raised for malformed or unsupported checkpoint files."""


def write_checkpoint(path, ckpt: Checkpoint) -> None:
    meta_items = [
        ("model_kind", ckpt.model_kind),
        ("seed", str(ckpt.seed)),
        ("budget_images", str(ckpt.budget_images)),
        ("lr", f"{ckpt.lr:.17g}"),
    ]
    for k, v in ckpt.meta:
        if "=" in k or "\n" in k or "\n" in v:
            raise ValueError(f"metadata key/value not serializable: {k!r}")
        meta_items.append((k, v))
    blob = "\n".join(f"{k}={v}" for k, v in meta_items).encode("utf-8")
    data = np.ascontiguousarray(ckpt.params, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<B", VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<Q", data.shape[0]))
        fh.write(data.tobytes())


def read_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(MAGIC) + 5 or raw[: len(MAGIC)] != MAGIC:
        raise CheckpointFormatError(
            f"{path}: bad magic, expected {MAGIC.decode('ascii')!r}"
        )
    pos = len(MAGIC)
    version = raw[pos]
    pos += 1
    if version != VERSION:
        raise CheckpointFormatError(
            f"{path}: unsupported checkpoint version {version}, expected {VERSION}"
        )
    (meta_len,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    if pos + meta_len + 8 > len(raw):
        raise CheckpointFormatError(f"{path}: truncated metadata block")
    meta_blob = raw[pos : pos + meta_len].decode("utf-8")
    pos += meta_len
    (count,) = struct.unpack_from("<Q", raw, pos)
    pos += 8
    if pos + 8 * count != len(raw):
        raise CheckpointFormatError(
            f"{path}: expected {count} float64 values, file size does not match"
        )
    params = np.frombuffer(raw, dtype="<f8", count=count, offset=pos).astype(np.float64)

    meta: dict[str, str] = {}
    for line in meta_blob.split("\n"):
        if not line:
            continue
        if "=" not in line:
            raise CheckpointFormatError(f"{path}: malformed metadata line {line!r}")
        k, _, v = line.partition("=")
        meta[k] = v
    try:
        kind = meta["model_kind"]
        seed = int(meta["seed"])
        budget = int(meta["budget_images"])
        lr = float(meta["lr"])
    except (KeyError, ValueError) as exc:
        raise CheckpointFormatError(f"{path}: missing/invalid core metadata") from exc
    extra = tuple((k, v) for k, v in meta.items() if k not in RESERVED_META)
    return Checkpoint(
        params=params, model_kind=kind, seed=seed,
        budget_images=budget, lr=lr, meta=extra,
    )


class ConfigError(ValueError):
    """Raised for malformed config files or unknown/invalid keys."""


def parse_config_text(text: str) -> dict[str, str]:
    """Parse flat key=value lines; '#' starts a comment; blank lines ignored."""
    out: dict[str, str] = {}
    for lineno, raw_line in enumerate(text.split("\n"), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw_line!r}")
        k, _, v = line.partition("=")
        k, v = k.strip(), v.strip()
        if not k:
            raise ConfigError(f"line {lineno}: empty key")
        if k in out:
            raise ConfigError(f"line {lineno}: duplicate key {k!r}")
        out[k] = v
    return out


def load_config(path, schema: dict[str, object]) -> dict[str, object]:
    """Read a config file and coerce values against a schema of defaults.

    schema maps key -> default value; the default's type decides coercion
    (bool accepts true/false/1/0, lists are comma-separated floats).
    Unknown keys are errors, not warnings.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = parse_config_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    out = dict(schema)
    for k, v in raw.items():
        if k not in schema:
            raise ConfigError(f"unknown config key {k!r}")
        default = schema[k]
        try:
            if isinstance(default, bool):
                if v.lower() in ("true", "1"):
                    out[k] = True
                elif v.lower() in ("false", "0"):
                    out[k] = False
                else:
                    raise ValueError(v)
            elif isinstance(default, int):
                out[k] = int(v)
            elif isinstance(default, float):
                out[k] = float(v)
            elif isinstance(default, (list, tuple)):
                out[k] = [float(x) for x in v.split(",") if x.strip() != ""]
            else:
                out[k] = v
        except ValueError as exc:
            raise ConfigError(f"config key {k!r}: cannot parse {v!r}") from exc
    return out
