"""Per-graph topology statistics and dataset-level aggregates.

Edge counts are reported both undirected (m) and directed-equivalent (2m)
because published connectome tables are ambiguous between the conventions;
d_avg = 2m/n under both readings. Clustering is reported two ways as well:
the mean local clustering coefficient and the global transitivity
3*triangles/triples.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ValidationError
from .graph_build import StaticGraph


@dataclass
class GraphStats:
    n: int
    m_undirected: int
    m_directed_equiv: int
    d_max: int
    d_avg_undirected: float
    d_avg_table: float
    k_avg_local: float
    transitivity: float


@dataclass
class DatasetStats:
    n_graphs: int
    n_avg: float
    m_undirected_avg: float
    m_directed_equiv_avg: float
    d_max_avg: float
    d_avg: float
    k_avg_local: float
    transitivity: float


def adjacency_matrix(g: StaticGraph) -> np.ndarray:
    a = np.zeros((g.n, g.n), dtype=np.float64)
    e = g.edge_array()
    if len(e):
        a[e[:, 0], e[:, 1]] = 1.0
        a[e[:, 1], e[:, 0]] = 1.0
    return a


def compute_stats(g: StaticGraph) -> GraphStats:
    """Exact degree/triangle statistics from the undirected adjacency."""
    a = adjacency_matrix(g)
    deg = a.sum(axis=1)
    m = g.n_edges
    # triangles through node i = diag(A^3)/2, computed as ((A@A)*A) row sums
    tri_per_node = ((a @ a) * a).sum(axis=1) / 2.0
    pairs = deg * (deg - 1) / 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        local = np.where(pairs > 0, tri_per_node / np.where(pairs > 0, pairs, 1.0), 0.0)
    n_triangles = tri_per_node.sum() / 3.0
    n_triples = pairs.sum()
    transitivity = 3.0 * n_triangles / n_triples if n_triples > 0 else 0.0
    return GraphStats(
        n=g.n,
        m_undirected=m,
        m_directed_equiv=2 * m,
        d_max=int(deg.max(initial=0.0)),
        d_avg_undirected=2.0 * m / g.n,
        d_avg_table=2.0 * m / g.n,
        k_avg_local=float(local.mean()),
        transitivity=float(transitivity),
    )


def aggregate_stats(graphs: list[StaticGraph]) -> DatasetStats:
    """Arithmetic means of per-graph statistics."""
    if not graphs:
        raise ValidationError("cannot aggregate an empty dataset")
    per = [compute_stats(g) for g in graphs]
    return DatasetStats(
        n_graphs=len(per),
        n_avg=float(np.mean([s.n for s in per])),
        m_undirected_avg=float(np.mean([s.m_undirected for s in per])),
        m_directed_equiv_avg=float(np.mean([s.m_directed_equiv for s in per])),
        d_max_avg=float(np.mean([s.d_max for s in per])),
        d_avg=float(np.mean([s.d_avg_undirected for s in per])),
        k_avg_local=float(np.mean([s.k_avg_local for s in per])),
        transitivity=float(np.mean([s.transitivity for s in per])),
    )


def stats_report_json(name: str, stats: DatasetStats) -> str:
    return json.dumps({"dataset": name, **asdict(stats)}, indent=2, sort_keys=True)


_COLUMNS = [
    ("graphs", "n_graphs", "d"),
    ("N_avg", "n_avg", ".1f"),
    ("E_avg", "m_undirected_avg", ".2f"),
    ("2E_avg", "m_directed_equiv_avg", ".2f"),
    ("d_max", "d_max_avg", ".1f"),
    ("d_avg", "d_avg", ".3f"),
    ("K_local", "k_avg_local", ".3f"),
    ("transitivity", "transitivity", ".3f"),
]


def stats_table(rows: list[tuple[str, DatasetStats]]) -> str:
    """Aligned text table, one row per dataset."""
    header = ["dataset"] + [c[0] for c in _COLUMNS]
    body = []
    for name, stats in rows:
        d = asdict(stats)
        body.append([name] + [format(d[key], fmt) for _, key, fmt in _COLUMNS])
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    lines = [
        "  ".join(h.ljust(w) for h, w in zip(header, widths)),
        "  ".join("-" * w for w in widths),
    ]
    for r in body:
        lines.append("  ".join(v.ljust(w) for v, w in zip(r, widths)))
    return "\n".join(lines) + "\n"
