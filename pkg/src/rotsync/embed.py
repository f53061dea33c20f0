"""Commute-time embeddings of measurement graphs, for plotting."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .crb import ANCHORED, CrbReport
from .errors import InvalidDimensionError, InvalidSourceError
from .graphcore import SpectralKernel


@dataclass(frozen=True)
class Embedding:
    """Node coordinates whose full-rank squared distances are commute-time distances."""

    coordinates: np.ndarray
    explained_ratio: float
    dim: int
    anchors: tuple = ()
    axis_scales: Optional[np.ndarray] = None
    fiedler: Optional[np.ndarray] = None

    @property
    def N(self) -> int:
        return self.coordinates.shape[0]


def ectd_embed(k: SpectralKernel, dim: int) -> Embedding:
    """Leading ``dim`` axes of X = (Lambda^+)^{1/2} V^T, sorted by decreasing 1/lambda.

    Each axis is signed so its largest-magnitude entry is positive. Axes with
    equal eigenvalues are ordered by the node index of their largest entry.
    """
    if int(dim) != dim or dim < 1:
        raise InvalidDimensionError(f"embedding dimension must be a positive integer, got {dim}")
    if dim > k.rank:
        raise InvalidDimensionError(f"embedding dimension {dim} exceeds the kernel rank {k.rank}")
    inv = k.inverse_eigenvalues
    V = k.eigenvectors
    lead = np.argmax(np.abs(V), axis=0)
    # sort by 1/lambda descending, ties by the index of the largest entry
    keys = np.round(inv, 12)
    order = np.lexsort((lead, -keys))
    order = order[inv[order] > 0][:dim]
    axes = V[:, order].copy()
    for c in range(axes.shape[1]):
        r = np.argmax(np.abs(axes[:, c]))
        if axes[r, c] < 0:
            axes[:, c] *= -1.0
    coords = axes * np.sqrt(inv[order])
    if k.anchors:
        coords[list(k.anchors)] = 0.0
    total = float(np.sum(inv))
    ratio = float(np.sum(inv[order]) / total) if total > 0 else 0.0
    fiedler = None
    if k.source == "plain" and k.N >= 2:
        f = V[:, 1].copy()
        r = np.argmax(np.abs(f))
        fiedler = f if f[r] >= 0 else -f
    return Embedding(coords, min(ratio, 1.0), int(dim), tuple(k.anchors), np.sqrt(inv[order]), fiedler)


def node_marker_sizes(report: CrbReport) -> np.ndarray:
    """Marker areas proportional to the anchored per-node bound; anchors get 0."""
    if report.mode != ANCHORED or report.per_node is None:
        raise InvalidSourceError("marker sizes need an anchored report; use pair bounds otherwise")
    return np.asarray(report.per_node, dtype=float).copy()


def embedding_rows(emb: Embedding, marker_sizes=None, one_based: bool = True) -> list:
    shift = 1 if one_based else 0
    anchors = set(emb.anchors)
    rows = []
    for i in range(emb.N):
        row = {"node_id": i + shift}
        for c in range(emb.dim):
            row[f"x{c + 1}"] = float(emb.coordinates[i, c])
        row["marker_size"] = float(marker_sizes[i]) if marker_sizes is not None else 0.0
        row["is_anchor"] = int(i in anchors)
        rows.append(row)
    return rows


def embedding_csv(emb: Embedding, marker_sizes=None, one_based: bool = True) -> str:
    rows = embedding_rows(emb, marker_sizes, one_based)
    buf = io.StringIO()
    fields = ["node_id"] + [f"x{c + 1}" for c in range(emb.dim)] + ["marker_size", "is_anchor"]
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (f"{v:.17g}" if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def embedding_json(emb: Embedding, marker_sizes=None, one_based: bool = True) -> str:
    doc = {
        "dim": emb.dim,
        "explained_ratio": emb.explained_ratio,
        "nodes": embedding_rows(emb, marker_sizes, one_based),
    }
    if emb.fiedler is not None:
        doc["fiedler_vector"] = [float(v) for v in emb.fiedler]
    return json.dumps(doc, indent=2)
