"""Delimited-text input/output and the run manifest.

All outputs are comma-separated text with '#'-prefixed comment headers.
Every output file begins with the hash of the manifest that produced it,
followed by the full parameter set, so identical manifests yield
byte-identical files and any output can be traced back to its invocation.
Numbers are written with 17 significant digits (round-trip exact for
IEEE doubles).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from wrisk.errors import ValidationError

FLOAT_FMT = "%.17g"


def format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return FLOAT_FMT % float(value)
    return str(value)


@dataclass
class RunManifest:
    """Everything needed to reproduce a run bitwise: command, parameters, seed."""

    subcommand: str
    params: dict = field(default_factory=dict)
    seed: int | None = None
    version: str = ""
    outputs: list = field(default_factory=list)

    def to_text(self) -> str:
        lines = [f"subcommand={self.subcommand}", f"tool_version={self.version}"]
        if self.seed is not None:
            lines.append(f"seed={self.seed}")
        for key in sorted(self.params):
            lines.append(f"param.{key}={format_value(self.params[key])}")
        for name in self.outputs:
            lines.append(f"output={name}")
        return "\n".join(lines) + "\n"

    def hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()

    def write(self, path: Path) -> None:
        Path(path).write_text(self.to_text())

    def header_lines(self) -> list[str]:
        lines = [f"# manifest_hash={self.hash()}", f"# subcommand={self.subcommand}"]
        if self.seed is not None:
            lines.append(f"# seed={self.seed}")
        for key in sorted(self.params):
            lines.append(f"# {key}={format_value(self.params[key])}")
        return lines


def write_table(
    path: Path,
    manifest: RunManifest,
    column_names: Sequence[str],
    rows: Iterable[Sequence],
) -> None:
    """Write a CSV table under the manifest header."""
    lines = manifest.header_lines()
    lines.append(",".join(column_names))
    for row in rows:
        lines.append(",".join(format_value(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def write_blocks(
    path: Path,
    manifest: RunManifest,
    blocks: Sequence[tuple[str, Sequence[str], Iterable[Sequence]]],
) -> None:
    """Write named CSV blocks ('# block=<name>' separators) under one header."""
    lines = manifest.header_lines()
    for name, column_names, rows in blocks:
        lines.append(f"# block={name}")
        lines.append(",".join(column_names))
        for row in rows:
            lines.append(",".join(format_value(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def _data_lines(path: Path) -> list[str]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc
    out = []
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            out.append(line)
    return out


def _split(line: str) -> list[str]:
    if "," in line:
        return [f.strip() for f in line.split(",")]
    return line.split()


def read_matrix(path: Path) -> np.ndarray:
    """Read a numeric block: one row per line, comma or whitespace separated."""
    rows = [[float(v) for v in _split(line)] for line in _data_lines(path)]
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValidationError(f"{path}: ragged rows")
    return np.asarray(rows, dtype=float)


def read_vector(path: Path) -> np.ndarray:
    """Read a numeric vector laid out as one row, one column, or one value per line."""
    m = read_matrix(path)
    if 1 in m.shape or m.ndim == 1:
        return m.ravel()
    raise ValidationError(f"{path}: expected a vector, got shape {m.shape}")


def read_labeled_distribution(path: Path) -> tuple[tuple[str, ...], np.ndarray]:
    """Read 'labels row, probabilities row' delimited text."""
    lines = _data_lines(path)
    if len(lines) != 2:
        raise ValidationError(f"{path}: expected a header row of labels and one row of probabilities")
    labels = tuple(_split(lines[0]))
    probs = np.asarray([float(v) for v in _split(lines[1])], dtype=float)
    if len(labels) != probs.size:
        raise ValidationError(f"{path}: {len(labels)} labels but {probs.size} probabilities")
    return labels, probs


def read_grid_table(path: Path, x: np.ndarray) -> np.ndarray:
    """Read per-node values for a known grid.

    Accepts either a single column of len(x) values or two columns (x, value)
    whose first column must match the grid nodes.
    """
    m = read_matrix(path)
    if m.ndim == 1 or 1 in m.shape:
        values = m.ravel()
    elif m.shape[1] == 2:
        if m.shape[0] != x.size or not np.allclose(m[:, 0], x, atol=1e-9 * max(1.0, float(np.max(np.abs(x))))):
            raise ValidationError(f"{path}: first column does not match the grid nodes")
        values = m[:, 1]
    else:
        raise ValidationError(f"{path}: expected 1 or 2 columns, got {m.shape[1]}")
    if values.size != x.size:
        raise ValidationError(f"{path}: {values.size} values for a {x.size}-point grid")
    return values


def read_config(path: Path) -> dict[str, str]:
    """Flat key=value config; blank lines and '#' comments ignored."""
    out: dict[str, str] = {}
    for line in _data_lines(path):
        if "=" not in line:
            raise ValidationError(f"{path}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out
