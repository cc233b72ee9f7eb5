"""Trajectory text format and seed derivation."""

from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Iterable

import numpy as np


def derive_seed(master_seed: int, label: str) -> int:
    """64-bit seed from sha256(master_seed:label); streams never shift when labels are added."""
    digest = hashlib.sha256(f"{int(master_seed)}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def derive_rng(master_seed: int, label: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master_seed, label))


def format_point(p) -> str:
    arr = np.asarray(p)
    if arr.ndim == 0:
        if np.issubdtype(arr.dtype, np.integer):
            return str(int(arr))
        return format(float(arr), ".17g")
    return ",".join(format(float(v), ".17g") for v in arr)


def format_state(points: Iterable) -> str:
    """One state per line: points separated by spaces, coordinates by commas."""
    return " ".join(format_point(p) for p in points)


def parse_state(line: str, discrete: bool):
    toks = line.split()
    if discrete:
        return tuple(int(t) for t in toks)
    return tuple(np.array([float(v) for v in t.split(",")]) for t in toks)


def write_trajectory(path, states: Iterable) -> None:
    with open(path, "w") as fh:
        for s in states:
            fh.write(format_state(s) + "\n")


def read_trajectory(path, discrete: bool) -> list:
    lines = Path(path).read_text().splitlines()
    return [parse_state(ln, discrete) for ln in lines if ln.strip()]
