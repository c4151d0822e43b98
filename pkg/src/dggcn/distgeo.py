"""Distance-geometric graph construction.

Classifies node pairs by shortest-path hop count in the bond graph
(order 1 = bonds, 2 = angle edges, 3 = dihedral edges) and attaches the
Euclidean distance of the pair. Orders are exclusive: a pair gets its
shortest-path order only, so in rings no pair is double-counted.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .chemio import Graph3D
from .errors import GraphError


class Order(IntEnum):
    First = 1
    Second = 2
    Third = 3


@dataclass(frozen=True)
class GeoEdge:
    src: int
    dst: int
    order: int
    distance: float


@dataclass
class DistGeoGraph:
    """Arrays are sorted by (order, src, dst); both directed copies present."""

    x: np.ndarray                 # (N, d) node features
    edge_src: np.ndarray          # (E,) int64
    edge_dst: np.ndarray          # (E,) int64
    edge_order: np.ndarray        # (E,) int64 in {1,2,3}
    edge_dist: np.ndarray         # (E,) float64
    counts: tuple[int, int, int]  # unordered pairs per order (U, U_theta, U_phi)
    target: float | None = None
    mol_id: str = ""
    bond_orders: np.ndarray | None = None  # optional edge features, unused by layers

    @property
    def n_nodes(self) -> int:
        return self.x.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edge_src.shape[0]

    @property
    def edges(self) -> list[GeoEdge]:
        return [GeoEdge(int(s), int(d), int(o), float(w))
                for s, d, o, w in zip(self.edge_src, self.edge_dst,
                                      self.edge_order, self.edge_dist)]

    def restricted(self, max_order: int) -> "DistGeoGraph":
        """View with edges of order <= max_order only."""
        keep = self.edge_order <= max_order
        counts = tuple(c if o <= max_order else 0
                       for o, c in zip((1, 2, 3), self.counts))
        return DistGeoGraph(self.x, self.edge_src[keep], self.edge_dst[keep],
                            self.edge_order[keep], self.edge_dist[keep],
                            counts, self.target, self.mol_id,
                            None if self.bond_orders is None else self.bond_orders[keep])


def pair_distance(p, q) -> float:
    return float(np.linalg.norm(np.asarray(p, dtype=np.float64) -
                                np.asarray(q, dtype=np.float64)))


def khop_pairs(bonds, n_nodes: int, max_order: int) -> dict[tuple[int, int], int]:
    """Map each unordered pair (i<j) within `max_order` hops to its
    shortest-path hop count."""
    if max_order not in (1, 2, 3):
        raise GraphError(f"max_order must be 1, 2 or 3, got {max_order}")
    adj: list[list[int]] = [[] for _ in range(n_nodes)]
    for i, j in bonds:
        adj[i].append(j)
        adj[j].append(i)
    out: dict[tuple[int, int], int] = {}
    for start in range(n_nodes):
        # truncated BFS from each node
        dist = {start: 0}
        queue = deque([start])
        while queue:
            u = queue.popleft()
            if dist[u] == max_order:
                continue
            for v in adj[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        for v, s in dist.items():
            if start < v and s >= 1:
                out[(start, v)] = s
    return out


def build_distgeo(g: Graph3D, max_order: int) -> DistGeoGraph:
    if g.node_features is None:
        raise GraphError(f"molecule {g.mol_id!r} not featurized")
    pairs = khop_pairs(g.bonds, g.n_atoms, max_order)
    pos = g.positions
    bond_order_of = {}
    if g.bond_orders is not None:
        for (i, j), bo in zip(g.bonds, g.bond_orders):
            bond_order_of[(min(i, j), max(i, j))] = bo

    src, dst, orders, dists, bos = [], [], [], [], []
    counts = [0, 0, 0]
    for (i, j), order in pairs.items():
        d = pair_distance(pos[i], pos[j])
        if d == 0.0:
            raise GraphError(
                f"molecule {g.mol_id!r}: atoms {i} and {j} are coincident")
        counts[order - 1] += 1
        bo = bond_order_of.get((i, j), 0)
        for a, b in ((i, j), (j, i)):
            src.append(a)
            dst.append(b)
            orders.append(order)
            dists.append(d)
            bos.append(bo)

    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    orders = np.asarray(orders, dtype=np.int64)
    dists = np.asarray(dists, dtype=np.float64)
    bos = np.asarray(bos, dtype=np.int64)
    key = np.lexsort((dst, src, orders)) if src.size else np.array([], dtype=np.int64)
    return DistGeoGraph(
        x=np.asarray(g.node_features, dtype=np.float64),
        edge_src=src[key], edge_dst=dst[key],
        edge_order=orders[key], edge_dist=dists[key],
        counts=(counts[0], counts[1], counts[2]),
        target=g.target, mol_id=g.mol_id,
        bond_orders=bos[key] if g.bond_orders is not None else None)


def to_json_obj(dg: DistGeoGraph) -> dict:
    """Inspection/export format used by the CLI `prepare --dump-distgeo`."""
    return {
        "id": dg.mol_id,
        "n_nodes": int(dg.n_nodes),
        "counts": {"order1": dg.counts[0], "order2": dg.counts[1],
                   "order3": dg.counts[2]},
        "edges": [{"src": int(s), "dst": int(d), "order": int(o),
                   "distance": float(w)}
                  for s, d, o, w in zip(dg.edge_src, dg.edge_dst,
                                        dg.edge_order, dg.edge_dist)],
        "target": None if dg.target is None else float(dg.target),
    }
