"""Skeleton graphs and their propagation operators.

A skeleton is an undirected, connected graph over body joints.  From it
we build the degree-normalized adjacency with self-loops
``S = D^{-1/2} (A + I) D^{-1/2}``, the normalized Laplacian ``L = I - S``
and the cached hop powers ``S^1 .. S^K`` used by multi-hop layers.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass

import numpy as np

H36M_JOINT_NAMES = (
    "Hip",
    "RHip",
    "RKnee",
    "RAnkle",
    "LHip",
    "LKnee",
    "LAnkle",
    "Spine",
    "Thorax",
    "Neck",
    "Head",
    "LShoulder",
    "LElbow",
    "LWrist",
    "RShoulder",
    "RElbow",
    "RWrist",
)

# Pelvis-rooted tree: two legs, spine chain, and both arms off the thorax.
H36M_EDGES = (
    (0, 1),
    (1, 2),
    (2, 3),
    (0, 4),
    (4, 5),
    (5, 6),
    (0, 7),
    (7, 8),
    (8, 9),
    (9, 10),
    (8, 11),
    (11, 12),
    (12, 13),
    (8, 14),
    (14, 15),
    (15, 16),
)


@dataclass(frozen=True)
class SkeletonGraph:
    """Joint topology: undirected edges over ``num_joints`` nodes plus a root."""

    num_joints: int
    edges: tuple[tuple[int, int], ...]
    root_joint: int
    adjacency: np.ndarray
    joint_names: tuple[str, ...] | None = None

    @classmethod
    def from_edges(
        cls,
        num_joints: int,
        edges,
        root_joint: int = 0,
        weights=None,
        joint_names=None,
    ) -> "SkeletonGraph":
        """Build and validate a skeleton from an edge list.

        Edge weights default to 1; the graph must be connected, free of
        self-loops, and ``root_joint`` must be a valid node index.
        """
        if num_joints < 1:
            raise ValueError(f"num_joints must be >= 1, got {num_joints}")
        if not 0 <= root_joint < num_joints:
            raise ValueError(f"root_joint {root_joint} out of range for {num_joints} joints")
        norm_edges = []
        seen = set()
        edge_list = list(edges)
        if weights is None:
            weights = [1.0] * len(edge_list)
        if len(weights) != len(edge_list):
            raise ValueError(f"{len(weights)} weights for {len(edge_list)} edges")
        adjacency = np.zeros((num_joints, num_joints))
        for (i, j), wgt in zip(edge_list, weights):
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-loop at joint {i} is not allowed")
            if not (0 <= i < num_joints and 0 <= j < num_joints):
                raise ValueError(f"edge ({i}, {j}) out of range for {num_joints} joints")
            if wgt <= 0:
                raise ValueError(f"edge ({i}, {j}) has non-positive weight {wgt}")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise ValueError(f"duplicate edge ({i}, {j})")
            seen.add(key)
            norm_edges.append(key)
            adjacency[i, j] = adjacency[j, i] = float(wgt)
        if joint_names is not None:
            joint_names = tuple(str(n) for n in joint_names)
            if len(joint_names) != num_joints:
                raise ValueError(f"{len(joint_names)} names for {num_joints} joints")
        graph = cls(
            num_joints=num_joints,
            edges=tuple(sorted(norm_edges)),
            root_joint=root_joint,
            adjacency=adjacency,
            joint_names=joint_names,
        )
        unreachable = graph._unreachable_from_root()
        if unreachable:
            raise ValueError(f"skeleton graph is disconnected: unreachable joints {unreachable}")
        adjacency.setflags(write=False)
        return graph

    def _unreachable_from_root(self) -> list[int]:
        seen = {self.root_joint}
        frontier = deque([self.root_joint])
        neighbors = {i: [] for i in range(self.num_joints)}
        for i, j in self.edges:
            neighbors[i].append(j)
            neighbors[j].append(i)
        while frontier:
            node = frontier.popleft()
            for nxt in neighbors[node]:
                if nxt not in seen:
                    seen.add(nxt)
                    frontier.append(nxt)
        return [i for i in range(self.num_joints) if i not in seen]

    def bfs_order(self) -> tuple[list[int], list[int]]:
        """Breadth-first visit order from the root and per-joint parents.

        The parent of the root is -1.  For tree skeletons this recovers
        the kinematic hierarchy; for graphs with cycles it yields a
        spanning tree.
        """
        neighbors = {i: [] for i in range(self.num_joints)}
        for i, j in self.edges:
            neighbors[i].append(j)
            neighbors[j].append(i)
        for lst in neighbors.values():
            lst.sort()
        parents = [-1] * self.num_joints
        order = [self.root_joint]
        seen = {self.root_joint}
        frontier = deque([self.root_joint])
        while frontier:
            node = frontier.popleft()
            for nxt in neighbors[node]:
                if nxt not in seen:
                    seen.add(nxt)
                    parents[nxt] = node
                    order.append(nxt)
                    frontier.append(nxt)
        return order, parents

    def degree(self, joint: int) -> int:
        """Number of incident edges (self-loops excluded)."""
        return int(np.count_nonzero(self.adjacency[joint]))


@dataclass(frozen=True)
class GraphOperators:
    """Normalized propagation operators derived from a skeleton."""

    s_norm: np.ndarray
    laplacian: np.ndarray
    s_powers: tuple[np.ndarray, ...]

    @property
    def num_nodes(self) -> int:
        return self.s_norm.shape[0]

    @property
    def max_hop(self) -> int:
        return len(self.s_powers)


def build_operators(graph: SkeletonGraph, max_hop: int = 3) -> GraphOperators:
    """Compute S, L = I - S, and the hop powers S^1 .. S^max_hop.

    Every power is explicitly symmetrized so accumulated round-off never
    breaks the symmetry the layer gradients rely on.
    """
    if max_hop < 1:
        raise ValueError(f"max_hop must be >= 1, got {max_hop}")
    n = graph.num_joints
    a_tilde = graph.adjacency + np.eye(n)
    degrees = a_tilde.sum(axis=1)
    # a_ij / sqrt(d_i d_j): elementwise form is exactly symmetric
    s_norm = a_tilde / np.sqrt(np.outer(degrees, degrees))
    laplacian = np.eye(n) - s_norm
    powers = [s_norm]
    for _ in range(max_hop - 1):
        nxt = powers[-1] @ s_norm
        powers.append(0.5 * (nxt + nxt.T))
    for arr in (s_norm, laplacian, *powers):
        arr.setflags(write=False)
    return GraphOperators(s_norm=s_norm, laplacian=laplacian, s_powers=tuple(powers))


def default_human36m_skeleton() -> SkeletonGraph:
    """The standard 17-joint human skeleton tree (pelvis-rooted)."""
    return SkeletonGraph.from_edges(
        num_joints=17,
        edges=H36M_EDGES,
        root_joint=0,
        joint_names=H36M_JOINT_NAMES,
    )


def load_skeleton(path) -> SkeletonGraph:
    """Load a skeleton from JSON: {"num_joints", "edges", "root", ["names"]}."""
    with open(path, "r", encoding="utf-8") as fh:
        spec = json.load(fh)
    try:
        num_joints = int(spec["num_joints"])
        edges = spec["edges"]
    except KeyError as exc:
        raise ValueError(f"skeleton file {path} is missing key {exc}") from exc
    root = int(spec.get("root", 0))
    names = spec.get("names")
    return SkeletonGraph.from_edges(num_joints, edges, root_joint=root, joint_names=names)


def save_skeleton(graph: SkeletonGraph, path) -> None:
    """Write a skeleton as JSON in the format ``load_skeleton`` reads."""
    spec = {
        "num_joints": graph.num_joints,
        "edges": [list(e) for e in graph.edges],
        "root": graph.root_joint,
    }
    if graph.joint_names is not None:
        spec["names"] = list(graph.joint_names)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(spec, fh, indent=2, sort_keys=True)
        fh.write("\n")
