"""Closed-form cost accounting for the graph-conv classifier.

Counts are analytical: pure functions of shapes, independent of data and
parameter values.  The convention is FLOPs = 2 x multiply-adds per
sample per body.  Element-wise work (batch norm, ReLU, pooling, row
normalization, bias adds) is tallied separately as ``minor_ops`` -- one
count per output element -- and never enters the headline total.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .model import ModelConfig
from .skeleton import build_layout

LEARNER_KINDS = ("context", "context-symmetric", "context-feature",
                 "context-temporal", "nonlocal")


@dataclass(frozen=True)
class LayerCost:
    name: str
    in_shape: tuple
    out_shape: tuple
    flops: int

    def __post_init__(self):
        if self.flops < 0:
            raise ValueError(f"negative count for layer {self.name!r}")


@dataclass
class CostReport:
    label: str
    entries: list = field(default_factory=list)
    minor_ops: int = 0

    @property
    def total(self):
        return sum(entry.flops for entry in self.entries)

    def layer_names(self):
        return [entry.name for entry in self.entries]

    def add(self, name, in_shape, out_shape, flops):
        self.entries.append(LayerCost(name, tuple(in_shape), tuple(out_shape), int(flops)))

    def as_text(self):
        rows = [(e.name, _fmt_shape(e.in_shape), _fmt_shape(e.out_shape), f"{e.flops:,}")
                for e in self.entries]
        rows.append(("total", "", "", f"{self.total:,}"))
        rows.append(("minor ops (excluded)", "", "", f"{self.minor_ops:,}"))
        widths = [max(len(r[i]) for r in rows) for i in range(4)]
        header = f"cost report: {self.label}"
        lines = [header, "-" * len(header)]
        for name, i, o, f_ in rows:
            lines.append(f"{name:<{widths[0]}}  {i:>{widths[1]}}  {o:>{widths[2]}}  {f_:>{widths[3]}}")
        return "\n".join(lines)

    def as_kv(self):
        lines = [f"label={self.label}", f"layers={len(self.entries)}"]
        for i, e in enumerate(self.entries):
            lines.append(f"layer.{i}.name={e.name}")
            lines.append(f"layer.{i}.in={_fmt_shape(e.in_shape)}")
            lines.append(f"layer.{i}.out={_fmt_shape(e.out_shape)}")
            lines.append(f"layer.{i}.flops={e.flops}")
        lines.append(f"total={self.total}")
        lines.append(f"minor_ops={self.minor_ops}")
        return "\n".join(lines) + "\n"


def _fmt_shape(shape):
    return "x".join(str(s) for s in shape)


def count_conv_flops(in_shape, kernel_shape, stride=1, pad=0):
    """Cost of one convolution over a (time, joint) grid, per sample.

    ``in_shape`` is (C_in, T, N); ``kernel_shape`` is
    (C_out, C_in, k_t, k_n).  Stride and padding apply to the time axis.
    """
    if len(in_shape) != 3 or len(kernel_shape) != 4:
        raise ValueError(
            f"expected (C_in, T, N) input and (C_out, C_in, k_t, k_n) kernel, "
            f"got {tuple(in_shape)} and {tuple(kernel_shape)}"
        )
    c_in, t, n = in_shape
    c_out, c_in_k, k_t, k_n = kernel_shape
    if min(c_in, t, n, c_out, c_in_k, k_t, k_n) < 1:
        raise ValueError("shape entries must be positive")
    if c_in != c_in_k:
        raise ValueError(f"kernel expects {c_in_k} input channels, input has {c_in}")
    if stride < 1 or pad < 0:
        raise ValueError("stride must be >= 1 and pad >= 0")
    t_out = (t + 2 * pad - k_t) // stride + 1
    n_out = n - k_n + 1
    if t_out < 1 or n_out < 1:
        raise ValueError(f"kernel {k_t}x{k_n} does not fit input {tuple(in_shape)}")
    return 2 * c_in * c_out * k_t * k_n * t_out * n_out


def count_graph_mult_flops(n_joints, channels, frames, n_graphs=1):
    """Cost of aggregating (C, T, N) features with ``n_graphs`` N x N graphs."""
    return n_graphs * 2 * n_joints * n_joints * channels * frames


def count_learner_flops(kind, channels, frames, joints):
    """Conv and matmul work inside one topology learner, per sample."""
    c, t, n = channels, frames, joints
    if kind in ("context", "context-symmetric"):
        return 2 * c * t * n + 2 * t * n + 2 * n ** 3
    if kind == "context-feature":
        return 2 * t * c * n + 2 * n * c + 2 * c * n * n
    if kind == "context-temporal":
        return 2 * c * t * n + 2 * c * t + 2 * t * n * n
    if kind == "nonlocal":
        e = max(c // 4, 4)
        return 2 * (2 * c * e * t * n) + 2 * n * n * e
    raise ValueError(f"unknown learner kind {kind!r}")


def count_learner_params(kind, channels, frames, joints):
    """Learnable scalars in one topology learner (conv kernels plus norms)."""
    c, t, n = channels, frames, joints
    n_sq = n * n
    if kind in ("context", "context-symmetric"):
        squeezes, final = c + t, n
    elif kind == "context-feature":
        squeezes, final = t + n, c
    elif kind == "context-temporal":
        squeezes, final = c + n, t
    elif kind == "nonlocal":
        return 2 * max(c // 4, 4) * c
    else:
        raise ValueError(f"unknown learner kind {kind!r}")
    return squeezes + final * n_sq + 2 * n_sq + 4


def count_model_flops(config, include_cen=True, persons=1):
    """Walk the model's layer schedule and sum per-layer costs.

    The report always carries learner and dynamic-branch rows so that a
    with/without pair over the same config stays aligned; without the
    learner those rows hold zero.
    """
    if not isinstance(config, ModelConfig):
        raise TypeError(f"expected a ModelConfig, got {type(config).__name__}")
    if persons < 1:
        raise ValueError("persons must be >= 1")
    if include_cen and config.topology == "none":
        raise ValueError("config has no topology learner to include")

    layout = build_layout(config.layout)
    schedule = config.joint_schedule(layout.n_joints)
    n_configs = 3

    label = f"{config.layout} {'with' if include_cen else 'without'} learner"
    report = CostReport(label)
    minor = 0

    c_in = config.in_channels
    frames = config.frames
    minor += c_in * layout.n_joints * frames  # input norm

    for i, (out_c, stride) in enumerate(zip(config.channels, config.strides), start=1):
        joints, joints_after = schedule[i - 1]
        t_out = -(-frames // stride)
        in_shape = (c_in, frames, joints)
        fused_shape = (out_c, frames, joints)
        out_shape = (out_c, t_out, joints)

        static = 0
        if config.lambda_static != 0.0:
            static = count_graph_mult_flops(joints, c_in, frames, n_configs)
            static += n_configs * count_conv_flops(in_shape, (out_c, c_in, 1, 1))
        report.add(f"block{i}.static", in_shape, fused_shape, static)

        learner = dynamic = 0
        if include_cen:
            learner = count_learner_flops(config.topology, c_in, frames, joints)
            dynamic = count_graph_mult_flops(joints, c_in, frames)
            dynamic += count_conv_flops(in_shape, (out_c, c_in, 1, 1))
            minor += joints * joints  # row normalization
        report.add(f"block{i}.learner", in_shape, (joints, joints), learner)
        report.add(f"block{i}.dynamic", in_shape, fused_shape, dynamic)

        pad = (config.tc_kernel - 1) // 2
        tc = count_conv_flops(fused_shape, (out_c, out_c, config.tc_kernel, 1),
                              stride=stride, pad=pad)
        report.add(f"block{i}.tc", fused_shape, out_shape, tc)

        if c_in != out_c or stride != 1:
            shortcut = count_conv_flops(in_shape, (out_c, c_in, 1, 1), stride=stride)
            report.add(f"block{i}.shortcut", in_shape, out_shape, shortcut)
            minor += out_c * t_out * joints  # shortcut norm

        minor += 3 * out_c * frames * joints + 2 * out_c * t_out * joints  # norms, relus

        if joints_after != joints:
            proj = 2 * out_c * t_out * joints * joints_after
            report.add(f"block{i}.project", out_shape, (out_c, t_out, joints_after), proj)

        c_in = out_c
        frames = t_out

    final_joints = schedule[-1][1]
    minor += c_in * frames * final_joints  # global pool
    report.add("classifier", (c_in,), (config.n_classes,),
               2 * c_in * config.n_classes)
    minor += config.n_classes  # bias

    if persons > 1:
        report.entries = [
            LayerCost(e.name, e.in_shape, e.out_shape, e.flops * persons)
            for e in report.entries
        ]
        minor *= persons
    report.minor_ops = minor
    return report


@dataclass
class OverheadReport:
    base_label: str
    other_label: str
    rows: list          # (name, base flops, other flops, diff)
    base_total: int
    other_total: int

    @property
    def ratio(self):
        return (self.other_total - self.base_total) / self.base_total

    def as_text(self):
        header = f"overhead: {self.other_label} vs {self.base_label}"
        lines = [header, "-" * len(header)]
        name_w = max(len(r[0]) for r in self.rows + [("total",)])
        for name, base, other, diff in self.rows:
            if diff == 0:
                continue
            rel = f"{diff / base:+.4f}" if base else "      +"
            lines.append(f"{name:<{name_w}}  {base:>14,}  {other:>14,}  {rel}")
        lines.append(
            f"{'total':<{name_w}}  {self.base_total:>14,}  {self.other_total:>14,}  "
            f"{self.ratio:+.4f}"
        )
        return "\n".join(lines)


def overhead_report(base, other):
    """Per-layer and total cost deltas between two aligned reports."""
    if base.layer_names() != other.layer_names():
        raise ValueError(
            f"reports cover different layers: {base.layer_names()} vs {other.layer_names()}"
        )
    rows = [
        (a.name, a.flops, b.flops, b.flops - a.flops)
        for a, b in zip(base.entries, other.entries)
    ]
    return OverheadReport(base.label, other.label, rows, base.total, other.total)
