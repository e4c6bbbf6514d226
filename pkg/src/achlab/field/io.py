"""Text snapshots of fields (``ACHF 1``) and grid headers shared with clusters."""

from __future__ import annotations

import numpy as np

from .grid import Field, TorusGrid

MAGIC = "ACHF 1"


def parse_header(line: str) -> dict:
    out = {}
    for token in line.split():
        key, _, val = token.partition("=")
        out[key] = val
    for key in ("n", "shape", "lengths"):
        if key not in out:
            raise ValueError(f"snapshot header lacks {key!r}")
    return out


def grid_from_header(hdr: dict) -> TorusGrid:
    shape = tuple(int(s) for s in hdr["shape"].split(","))
    lengths = tuple(float(s) for s in hdr["lengths"].split(","))
    if len(shape) != int(hdr["n"]):
        raise ValueError("header dimension disagrees with its shape")
    return TorusGrid(shape, lengths)


def field_to_text(u: Field) -> str:
    vals = " ".join(format(x, ".17g") for x in u.values.reshape(-1))
    return f"{MAGIC}\n{u.grid.header()} m={u.m}\n{vals}\n"


def field_from_text(text: str) -> Field:
    lines = text.split("\n", 2)
    if len(lines) < 3 or lines[0].strip() != MAGIC:
        raise ValueError("not an ACHF 1 snapshot")
    hdr = parse_header(lines[1])
    grid = grid_from_header(hdr)
    m = int(hdr.get("m", 1))
    data = np.array(lines[2].split(), dtype=float)
    if data.size != m * grid.size:
        raise ValueError(f"expected {m * grid.size} values, found {data.size}")
    return Field(grid, data.reshape((m,) + grid.shape))


def save_field(u: Field, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(field_to_text(u))


def load_field(path) -> Field:
    with open(path, "r", encoding="utf-8") as fh:
        return field_from_text(fh.read())
