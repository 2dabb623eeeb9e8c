"""Graph-convolutional sequence classifier with learned dynamic topology.

Each block mixes joint features along two routes and adds them:

  static route   sum over K spatial configurations of (G_k + M_k) X W_k,
                 where G_k is the frozen normalized physical graph and
                 M_k a learnable additive mask
  dynamic route  G(X) X W', where G(X) is predicted per sample by a
                 topology learner and W' is its own channel map

The fused output passes through batch norm, ReLU, a temporal convolution
(t x 1 kernel, optionally strided), a residual shortcut, and a final
ReLU.  Selected blocks then project the joint axis down with a learned
N_i x N_{i+1} matrix, shrinking the graph for everything downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .layers import BatchNorm, Conv2d, Linear, Module, Parameter
from .skeleton import TopologySet, build_layout
from .tensor import (
    Tensor,
    add,
    matmul,
    mean_pool_global,
    permute,
    relu,
    reshape,
    scale,
)
from .topology import build_topology_learner

TOPOLOGY_KINDS = (
    "context",
    "context-symmetric",
    "context-feature",
    "context-temporal",
    "nonlocal",
    "none",
)


def round_half_up(value):
    return int(math.floor(value + 0.5))


@dataclass
class ModelConfig:
    layout: str
    n_classes: int
    in_channels: int = 3
    frames: int = 64
    channels: tuple = (64, 64, 64, 64, 128, 128, 128, 256, 256, 256)
    strides: tuple = (1, 1, 1, 1, 2, 1, 1, 2, 1, 1)
    tc_kernel: int = 9
    lambda_static: float = 1.0
    aggregate_rate: float = 0.6
    aggregate_after: tuple = (5, 8)  # 1-based block positions
    topology: str = "context"
    learner_final_relu: bool = True
    learn_projection: bool = True
    alpha_degree: float = 0.001

    def __post_init__(self):
        self.channels = tuple(int(c) for c in self.channels)
        self.strides = tuple(int(s) for s in self.strides)
        self.aggregate_after = tuple(int(i) for i in self.aggregate_after)
        if self.n_classes < 1:
            raise ValueError("n_classes must be at least 1")
        if len(self.channels) != len(self.strides):
            raise ValueError(
                f"channel schedule ({len(self.channels)}) and stride schedule "
                f"({len(self.strides)}) differ in length"
            )
        if not self.channels:
            raise ValueError("at least one block is required")
        if any(s < 1 for s in self.strides):
            raise ValueError("strides must be positive")
        if self.tc_kernel < 1 or self.tc_kernel % 2 == 0:
            raise ValueError("tc_kernel must be odd")
        if not 0.0 < self.aggregate_rate <= 1.0:
            raise ValueError("aggregate_rate must be in (0, 1]")
        for pos in self.aggregate_after:
            if not 1 <= pos <= len(self.channels):
                raise ValueError(f"aggregate_after position {pos} out of range")
        if self.topology not in TOPOLOGY_KINDS:
            raise ValueError(f"unknown topology {self.topology!r}")
        if self.topology == "none" and self.lambda_static == 0.0:
            raise ValueError("a model needs at least one active branch")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**data)

    def joint_schedule(self, n_joints):
        """Joint count seen by each block, plus the projected size after it."""
        sizes = []
        current = n_joints
        for i in range(1, len(self.channels) + 1):
            after = current
            if i in self.aggregate_after:
                after = max(round_half_up(self.aggregate_rate * current), 1)
            sizes.append((current, after))
            current = after
        return sizes


def graph_apply(graph, x):
    """Aggregate joint features: out[..., i] = sum_j graph[i, j] * x[..., j].

    ``graph`` is (N, N) shared or (B, N, N) per sample; ``x`` is
    (B, C, T, N).
    """
    if graph.data.ndim == 2:
        return matmul(x, permute(graph, (1, 0)))
    if graph.data.ndim == 3:
        batch, n, _ = graph.data.shape
        if x.data.shape[0] != batch:
            raise ValueError(
                f"graph batch {batch} does not match input batch {x.data.shape[0]}"
            )
        flipped = reshape(permute(graph, (0, 2, 1)), (batch, 1, n, n))
        return matmul(x, flipped)
    raise ValueError(f"graph must be (N, N) or (B, N, N), got shape {graph.data.shape}")


def static_branch(x, topo, convs):
    """Sum of per-configuration graph aggregations, each with its own 1x1 map."""
    if len(convs) != topo.n_configs:
        raise ValueError(
            f"{len(convs)} channel maps for {topo.n_configs} configurations"
        )
    total = None
    for k, conv in enumerate(convs):
        part = conv(graph_apply(topo.static_topology(k), x))
        total = part if total is None else add(total, part)
    return total


def dynamic_branch(x, graph, conv):
    """Per-sample graph aggregation followed by its own 1x1 channel map."""
    return conv(graph_apply(graph, x))


def fuse(y_dynamic, y_static, lambda_static=1.0):
    """Combine the two routes: dynamic plus lambda times static."""
    if y_dynamic is None and y_static is None:
        raise ValueError("fuse needs at least one branch output")
    if y_static is None:
        return y_dynamic
    weighted = scale(y_static, lambda_static)
    return weighted if y_dynamic is None else add(y_dynamic, weighted)


def joint_aggregate(x, projection):
    """Project the joint axis of (B, C, T, N_i) down to N_{i+1} columns."""
    return matmul(x, projection)


class DynamicGConvBlock(Module):
    """One spatial-temporal unit: fused graph conv, temporal conv, residual."""

    def __init__(self, in_channels, out_channels, joints, frames, layout,
                 stride=1, tc_kernel=9, lambda_static=1.0, topology="context",
                 learner_final_relu=True, alpha_degree=0.001, project_to=None,
                 learn_projection=True, rng=None, dtype=np.float32):
        super().__init__()
        if rng is None:
            rng = np.random.default_rng(0)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.joints = joints
        self.frames = frames
        self.stride = stride
        self.lambda_static = float(lambda_static)

        if layout is not None and layout.n_joints == joints:
            self.topo = TopologySet.from_layout(layout, alpha_degree, dtype)
        else:
            self.topo = TopologySet.self_loops_only(joints, 3, alpha_degree, dtype)
        self.static_convs = [
            Conv2d(in_channels, out_channels, rng=rng, dtype=dtype)
            for _ in range(self.topo.n_configs)
        ]
        self.learner = build_topology_learner(
            topology, in_channels, frames, joints,
            final_relu=learner_final_relu, rng=rng, dtype=dtype,
        )
        self.dynamic_conv = (
            Conv2d(in_channels, out_channels, rng=rng, dtype=dtype)
            if self.learner is not None else None
        )
        self.bn_fused = BatchNorm(out_channels, dtype=dtype)
        pad = (tc_kernel - 1) // 2
        self.tc_conv = Conv2d(out_channels, out_channels, kernel_t=tc_kernel,
                              stride_t=stride, pad_t=pad, rng=rng, dtype=dtype)
        self.bn_tc = BatchNorm(out_channels, dtype=dtype)
        if in_channels == out_channels and stride == 1:
            self.shortcut_conv = None
            self.shortcut_bn = None
        else:
            self.shortcut_conv = Conv2d(in_channels, out_channels,
                                        stride_t=stride, rng=rng, dtype=dtype)
            self.shortcut_bn = BatchNorm(out_channels, dtype=dtype)
        if project_to is None:
            self.projection = None
        else:
            proj = (np.eye(joints, project_to) if not learn_projection
                    else None)
            init = (proj if proj is not None
                    else rng.uniform(-1, 1, (joints, project_to)) / np.sqrt(joints))
            self.projection = Parameter(init.astype(dtype), name="projection")
            self.projection.tensor.requires_grad = bool(learn_projection)
        self.out_joints = project_to if project_to is not None else joints
        self.out_frames = -(-frames // stride)  # ceil division

    def forward(self, x, record=None):
        if x.data.ndim != 4 or x.data.shape[1] != self.in_channels:
            raise ValueError(
                f"block expects (B, {self.in_channels}, T, N) input, got {x.data.shape}"
            )
        predicted = self.learner(x) if self.learner is not None else None
        y_static = (
            static_branch(x, self.topo, self.static_convs)
            if self.lambda_static != 0.0 else None
        )
        y_dynamic = (
            dynamic_branch(x, predicted, self.dynamic_conv)
            if self.learner is not None else None
        )
        y = fuse(y_dynamic, y_static, self.lambda_static)
        y = relu(self.bn_fused(y))
        y = self.bn_tc(self.tc_conv(y))
        if self.shortcut_conv is None:
            shortcut = x
        else:
            shortcut = self.shortcut_bn(self.shortcut_conv(x))
        y = relu(add(y, shortcut))
        if self.projection is not None:
            y = joint_aggregate(y, self.projection.tensor)
        if record is not None:
            entry = {
                "in_shape": tuple(x.data.shape),
                "out_shape": tuple(y.data.shape),
                "joints_in": self.joints,
                "joints_out": self.out_joints,
            }
            if predicted is not None:
                entry["adjacency"] = predicted.data
            record.append(entry)
        return y


class SkeletonClassifier(Module):
    """Stack of graph-conv blocks with input norm, pooling, and classifier.

    Input is (B, C, T, N) or (B, M, C, T, N) with M persons; persons fold
    into the batch and their pooled features average before the
    classifier.
    """

    def __init__(self, config, rng=None, dtype=np.float32):
        super().__init__()
        if rng is None:
            rng = np.random.default_rng(0)
        self.config = config
        layout = build_layout(config.layout)
        self.layout = layout
        self.input_bn = BatchNorm(config.in_channels * layout.n_joints, dtype=dtype)
        schedule = config.joint_schedule(layout.n_joints)
        self.blocks = []
        in_c = config.in_channels
        frames = config.frames
        for i, (out_c, stride) in enumerate(zip(config.channels, config.strides), start=1):
            joints, joints_after = schedule[i - 1]
            block = DynamicGConvBlock(
                in_c, out_c, joints, frames, layout,
                stride=stride, tc_kernel=config.tc_kernel,
                lambda_static=config.lambda_static, topology=config.topology,
                learner_final_relu=config.learner_final_relu,
                alpha_degree=config.alpha_degree,
                project_to=joints_after if joints_after != joints else None,
                learn_projection=config.learn_projection,
                rng=rng, dtype=dtype,
            )
            self.blocks.append(block)
            in_c = out_c
            frames = block.out_frames
        self.classifier = Linear(config.channels[-1], config.n_classes, rng=rng, dtype=dtype)

    def forward(self, x, record=None):
        config = self.config
        n = self.layout.n_joints
        if x.data.ndim == 5:
            batch, persons = x.data.shape[:2]
            x = reshape(x, (batch * persons,) + x.data.shape[2:])
        elif x.data.ndim == 4:
            batch, persons = x.data.shape[0], 1
        else:
            raise ValueError(
                f"model expects (B, C, T, N) or (B, M, C, T, N), got {x.data.shape}"
            )
        if x.data.shape[1] != config.in_channels or x.data.shape[3] != n:
            raise ValueError(
                f"model built for C={config.in_channels}, N={n}, got input {x.data.shape}"
            )
        if x.data.shape[2] != config.frames:
            raise ValueError(
                f"model built for T={config.frames}, got input {x.data.shape}; "
                f"resize sequences first"
            )
        frames = x.data.shape[2]

        # normalize over flattened (channel, joint) pairs
        folded = reshape(permute(x, (0, 1, 3, 2)), (x.data.shape[0], config.in_channels * n, frames, 1))
        folded = self.input_bn(folded)
        x = permute(reshape(folded, (x.data.shape[0], config.in_channels, n, frames)), (0, 1, 3, 2))

        for block in self.blocks:
            x = block(x, record=record)

        pooled = mean_pool_global(x)  # (B * M, C_out)
        if persons > 1:
            pooled = tensor_mean_over_persons(pooled, batch, persons)
        return self.classifier(pooled)

    def parameter_count(self):
        return sum(int(np.prod(p.data.shape)) for p in self.parameters())


def tensor_mean_over_persons(pooled, batch, persons):
    stacked = reshape(pooled, (batch, persons, pooled.data.shape[-1]))
    return stacked.mean(axis=1)


def build_model(config, seed=0, dtype=np.float32):
    return SkeletonClassifier(config, rng=np.random.default_rng(seed), dtype=dtype)
