"""Shared plumbing: deterministic RNG, stable CSV writing, file hashing."""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based deterministic generator; all randomness flows through here."""
    return np.random.Generator(np.random.Philox(seed))


def fmt_float(x) -> str:
    """Shortest round-trip decimal form, stable across runs."""
    return repr(float(x))


def write_csv(path, header, rows) -> None:
    """Write rows of numbers (or strings) with a fixed newline convention."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(
            ",".join(v if isinstance(v, str) else fmt_float(v) for v in row)
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()
