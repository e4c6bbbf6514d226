"""Text snapshots of clusters (``ACHC 1``)."""

from __future__ import annotations

import numpy as np

from ..field.io import grid_from_header, parse_header
from .core import Cluster

MAGIC = "ACHC 1"


def cluster_to_text(c: Cluster) -> str:
    labels = " ".join(str(int(x)) for x in c.labels.reshape(-1))
    return f"{MAGIC}\n{c.grid.header()} N={c.N}\n{labels}\n"


def cluster_from_text(text: str) -> Cluster:
    lines = text.split("\n", 2)
    if len(lines) < 3 or lines[0].strip() != MAGIC:
        raise ValueError("not an ACHC 1 snapshot")
    hdr = parse_header(lines[1])
    if "N" not in hdr:
        raise ValueError("snapshot header lacks 'N'")
    grid = grid_from_header(hdr)
    labels = np.array(lines[2].split(), dtype=np.int64)
    if labels.size != grid.size:
        raise ValueError(f"expected {grid.size} labels, found {labels.size}")
    return Cluster(grid, labels.reshape(grid.shape), int(hdr["N"]))


def save_cluster(c: Cluster, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(cluster_to_text(c))


def load_cluster(path) -> Cluster:
    with open(path, "r", encoding="utf-8") as fh:
        return cluster_from_text(fh.read())
