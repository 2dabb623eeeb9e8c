"""Skeleton graph layouts and their spatial partitioning.

A layout names the joints of a skeleton: how many there are, which pairs
are physically connected, which joint is the body center, and the
directed source -> target pairs that define bone vectors.  Two layouts
ship with the package (``ntu25`` and ``openpose18``); arbitrary layouts
load from text files with the same record grammar (see ``parse_layout``).

The three spatial configurations follow the distance-partition rule:
self connections, links toward the center (centripetal), and links away
from it (centrifugal), with equal-distance neighbors assigned to the
centripetal set.  A matrix entry (i -> j) is stored at row i, column j,
and a graph product aggregates features of j into position i.
"""

from __future__ import annotations

import importlib.resources
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .layers import Module, Parameter
from .tensor import Tensor, add


@dataclass(frozen=True)
class SkeletonLayout:
    name: str
    n_joints: int
    edges: tuple
    center_joint: int
    bone_pairs: tuple
    score_channel: int | None = None

    def __post_init__(self):
        n = self.n_joints
        if n < 1:
            raise ValueError(f"layout {self.name!r}: needs at least one joint")
        if not 0 <= self.center_joint < n:
            raise ValueError(
                f"layout {self.name!r}: center joint {self.center_joint} out of range"
            )
        for i, j in self.edges:
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"layout {self.name!r}: edge ({i}, {j}) out of range")
            if i == j:
                raise ValueError(f"layout {self.name!r}: self loop at joint {i}")
        if len({frozenset(e) for e in self.edges}) != len(self.edges):
            raise ValueError(f"layout {self.name!r}: duplicate edge")
        if not self._connected():
            raise ValueError(f"layout {self.name!r}: edge list is not connected")
        targets = [t for _, t in self.bone_pairs]
        expected = sorted(set(range(n)) - {self.center_joint})
        if sorted(targets) != expected:
            raise ValueError(
                f"layout {self.name!r}: bone targets must cover every "
                f"non-center joint exactly once"
            )
        for s, t in self.bone_pairs:
            if not (0 <= s < n and 0 <= t < n):
                raise ValueError(f"layout {self.name!r}: bone ({s}, {t}) out of range")

    def _connected(self):
        if self.n_joints == 1:
            return True
        adj = [[] for _ in range(self.n_joints)]
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        seen = {0}
        queue = deque([0])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        return len(seen) == self.n_joints

    def adjacency(self):
        """Symmetric physical adjacency without self loops."""
        a = np.zeros((self.n_joints, self.n_joints))
        for i, j in self.edges:
            a[i, j] = 1.0
            a[j, i] = 1.0
        return a

    def hop_distances(self):
        """Shortest path length from every joint to the center joint."""
        dist = np.full(self.n_joints, -1, dtype=np.int64)
        dist[self.center_joint] = 0
        adj = [[] for _ in range(self.n_joints)]
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        queue = deque([self.center_joint])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if dist[v] < 0:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        return dist


def parse_layout(text, name="layout"):
    """Parse the layout record grammar.

    One record per line; ``#`` starts a comment.  Records:

      name <str>            optional, overrides the default name
      joints <int>          required, joint count
      center <int>          required, center joint index
      score_channel <int>   optional, confidence channel position
      edge <i> <j>          undirected physical edge
      bone <source> <target> directed bone pair
    """
    joints = None
    center = None
    score_channel = None
    edges = []
    bones = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        key, args = tokens[0], tokens[1:]
        try:
            if key == "name" and len(args) == 1:
                name = args[0]
            elif key == "joints" and len(args) == 1:
                joints = int(args[0])
            elif key == "center" and len(args) == 1:
                center = int(args[0])
            elif key == "score_channel" and len(args) == 1:
                score_channel = int(args[0])
            elif key == "edge" and len(args) == 2:
                edges.append((int(args[0]), int(args[1])))
            elif key == "bone" and len(args) == 2:
                bones.append((int(args[0]), int(args[1])))
            else:
                raise ValueError(f"line {lineno}: unrecognized record {raw.strip()!r}")
        except ValueError as exc:
            if "unrecognized" in str(exc):
                raise
            raise ValueError(f"line {lineno}: malformed record {raw.strip()!r}") from exc
    if joints is None or center is None:
        raise ValueError("layout file must declare joints and center")
    return SkeletonLayout(
        name=name,
        n_joints=joints,
        edges=tuple(edges),
        center_joint=center,
        bone_pairs=tuple(bones),
        score_channel=score_channel,
    )


BUILTIN_LAYOUTS = ("ntu25", "openpose18")


def build_layout(name_or_path):
    """Load a built-in layout by name, or any layout file by path."""
    if name_or_path in BUILTIN_LAYOUTS:
        resource = importlib.resources.files("dyngcn") / "layouts" / f"{name_or_path}.layout"
        return parse_layout(resource.read_text(), name=name_or_path)
    path = Path(name_or_path)
    if path.is_file():
        return parse_layout(path.read_text(), name=path.stem)
    raise ValueError(
        f"unknown layout {name_or_path!r}: not one of {BUILTIN_LAYOUTS} and not a file"
    )


def partition_spatial_configs(layout):
    """Split the skeleton graph into K=3 spatial configuration matrices.

    Returns an array of shape (3, N, N): identity, centripetal links, and
    centrifugal links.  For each physical edge {i, j}, the directed entry
    (i -> j) lands in the centripetal matrix when j is closer to the
    center than i, in the centrifugal matrix when farther, and ties put
    both directions in the centripetal matrix.
    """
    n = layout.n_joints
    dist = layout.hop_distances()
    configs = np.zeros((3, n, n))
    configs[0] = np.eye(n)
    for i, j in layout.edges:
        for a, b in ((i, j), (j, i)):
            if dist[b] <= dist[a]:
                configs[1][a, b] = 1.0
            else:
                configs[2][a, b] = 1.0
    return configs


def normalize_adjacency(adjacency, alpha_degree=0.001):
    """Symmetric degree normalization with a degree offset.

    Given a nonnegative matrix A, the degree of node i is the i-th row
    sum plus ``alpha_degree``; the result is D^-1/2 A D^-1/2.
    """
    a = np.asarray(adjacency, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"adjacency must be square, got shape {a.shape}")
    if (a < 0).any():
        raise ValueError("adjacency entries must be nonnegative")
    degrees = a.sum(axis=1) + alpha_degree
    if (degrees <= 0).any():
        raise ValueError("every degree plus alpha_degree must be positive")
    inv_sqrt = degrees ** -0.5
    return inv_sqrt[:, None] * a * inv_sqrt[None, :]


class TopologySet(Module):
    """Frozen normalized configuration matrices plus learnable masks.

    ``configs`` holds the K degree-normalized spatial configurations and
    is read-only after construction.  ``mask`` holds K zero-initialized
    additive matrices that training is free to adjust; the combined
    static topology for branch k is ``configs[k] + mask[k]``.
    """

    def __init__(self, raw_configs, alpha_degree=0.001, dtype=np.float32):
        super().__init__()
        raw = np.asarray(raw_configs, dtype=np.float64)
        if raw.ndim != 3 or raw.shape[1] != raw.shape[2]:
            raise ValueError(f"configs must be (K, N, N), got shape {raw.shape}")
        normalized = np.stack(
            [normalize_adjacency(raw[k], alpha_degree) for k in range(raw.shape[0])]
        ).astype(dtype)
        normalized.flags.writeable = False
        self.configs = normalized
        self.alpha_degree = alpha_degree
        self.mask = [
            Parameter(np.zeros(raw.shape[1:], dtype=dtype), name=f"mask.{k}")
            for k in range(raw.shape[0])
        ]

    @classmethod
    def from_layout(cls, layout, alpha_degree=0.001, dtype=np.float32):
        return cls(partition_spatial_configs(layout), alpha_degree, dtype)

    @classmethod
    def self_loops_only(cls, n_joints, n_configs=3, alpha_degree=0.001, dtype=np.float32):
        """Degenerate set for graphs with no physical edges.

        Used after joint aggregation, where the projected joints have no
        defined physical connectivity: the first configuration is the
        identity and the rest start empty, leaving structure to the masks.
        """
        raw = np.zeros((n_configs, n_joints, n_joints))
        raw[0] = np.eye(n_joints)
        return cls(raw, alpha_degree, dtype)

    @property
    def n_configs(self):
        return self.configs.shape[0]

    @property
    def n_joints(self):
        return self.configs.shape[1]

    def static_topology(self, k):
        """Combined static graph for configuration k, as a Tensor."""
        if not 0 <= k < self.n_configs:
            raise ValueError(f"configuration index {k} out of range ({self.n_configs} configs)")
        return add(Tensor(self.configs[k]), self.mask[k].tensor)

    def fingerprint(self):
        """Stable digest of the frozen configs (masks excluded)."""
        return hash(self.configs.tobytes())
