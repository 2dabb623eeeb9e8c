"""Skeleton sequences: container, file formats, resizing, synthesis.

A sequence is a (T, M, N, D) float32 array: T frames, M persons (at most
two, absent persons all-zero), N joints, D coordinates per joint
(typically x, y, z or x, y, score).

Two on-disk formats carry the same payload:

  binary   magic ``SKSQ``, version, label, T, M, N, D, then the layout
           name and sample id as length-prefixed UTF-8, then T*M*N*D
           little-endian float32 values in (t, m, n, d) order
  text     line-oriented, hand-writable; see ``parse_sequence_text``

Datasets are described by a manifest: a text file of ``path<TAB>label``
lines with a commented header naming the layout, split, and classes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"SKSQ"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHHIHHH")

MAX_PERSONS = 2


@dataclass
class SkeletonSequence:
    data: np.ndarray          # (T, M, N, D) float32
    label: int
    layout_name: str
    sample_id: str

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 4:
            raise ValueError(f"sequence data must be (T, M, N, D), got shape {self.data.shape}")
        t, m, n, d = self.data.shape
        if t < 1:
            raise ValueError("sequence needs at least one frame")
        if not 1 <= m <= MAX_PERSONS:
            raise ValueError(f"person count must be 1..{MAX_PERSONS}, got {m}")
        if n < 1 or d < 1:
            raise ValueError(f"joint and coordinate counts must be positive, got {n}, {d}")
        if self.label < 0:
            raise ValueError(f"label must be nonnegative, got {self.label}")

    @property
    def frames(self):
        return self.data.shape[0]

    @property
    def persons(self):
        return self.data.shape[1]

    @property
    def joints(self):
        return self.data.shape[2]

    @property
    def coords(self):
        return self.data.shape[3]

    def to_model_input(self):
        """Rearrange to (M, D, T, N), the layout the classifier consumes."""
        return np.ascontiguousarray(self.data.transpose(1, 3, 0, 2))


def save_sequence(path, seq):
    path = Path(path)
    layout_bytes = seq.layout_name.encode("utf-8")
    id_bytes = seq.sample_id.encode("utf-8")
    t, m, n, d = seq.data.shape
    blob = bytearray()
    blob += _HEADER.pack(MAGIC, FORMAT_VERSION, seq.label, t, m, n, d)
    blob += struct.pack("<H", len(layout_bytes)) + layout_bytes
    blob += struct.pack("<H", len(id_bytes)) + id_bytes
    blob += np.ascontiguousarray(seq.data, dtype="<f4").tobytes()
    path.write_bytes(bytes(blob))
    return path


def _parse_binary(raw, path):
    def fail(offset, message):
        raise ValueError(f"{path}: byte {offset}: {message}")

    if len(raw) < _HEADER.size:
        fail(0, f"truncated header ({len(raw)} bytes, need {_HEADER.size})")
    magic, version, label, t, m, n, d = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        fail(0, f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        fail(4, f"unsupported version {version}")
    offset = _HEADER.size
    strings = []
    for what in ("layout name", "sample id"):
        if offset + 2 > len(raw):
            fail(offset, f"truncated {what} length")
        (length,) = struct.unpack_from("<H", raw, offset)
        offset += 2
        if offset + length > len(raw):
            fail(offset, f"truncated {what}")
        strings.append(raw[offset : offset + length].decode("utf-8"))
        offset += length
    payload = t * m * n * d * 4
    if len(raw) - offset != payload:
        fail(offset, f"payload holds {len(raw) - offset} bytes, header promises {payload} "
                     f"({t}x{m}x{n}x{d} float32)")
    data = np.frombuffer(raw, dtype="<f4", count=t * m * n * d, offset=offset)
    data = data.reshape(t, m, n, d).astype(np.float32)
    return SkeletonSequence(data, label, strings[0], strings[1])


def format_sequence_text(seq):
    t, m, n, d = seq.data.shape
    lines = [
        f"format skelseq {FORMAT_VERSION}",
        f"layout {seq.layout_name}",
        f"id {seq.sample_id}",
        f"label {seq.label}",
        f"shape {t} {m} {n} {d}",
    ]
    for ti in range(t):
        for mi in range(m):
            lines.append(f"frame {ti} {mi}")
            for ni in range(n):
                lines.append(" ".join(repr(float(v)) for v in seq.data[ti, mi, ni]))
    return "\n".join(lines) + "\n"


def save_sequence_text(path, seq):
    path = Path(path)
    path.write_text(format_sequence_text(seq))
    return path


def parse_sequence_text(text, path="<text>"):
    """Parse the hand-writable sequence format.

    Header lines ``format/layout/id/label/shape`` come first, then one
    ``frame <t> <m>`` marker per (frame, person) pair followed by exactly
    N joint lines of D floats.  ``#`` starts a comment.
    """
    header = {}
    shape = None
    blocks = {}
    current = None
    expect_joints = 0

    def fail(lineno, message):
        raise ValueError(f"{path}: line {lineno}: {message}")

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        key = tokens[0]
        if shape is None:
            if key == "format":
                if tokens[1:] != ["skelseq", str(FORMAT_VERSION)]:
                    fail(lineno, f"unsupported format declaration {line!r}")
            elif key in ("layout", "id", "label"):
                if len(tokens) != 2:
                    fail(lineno, f"{key} takes one value")
                header[key] = tokens[1]
            elif key == "shape":
                if len(tokens) != 5:
                    fail(lineno, "shape takes T M N D")
                try:
                    shape = tuple(int(v) for v in tokens[1:])
                except ValueError:
                    fail(lineno, f"bad shape entries {tokens[1:]}")
            else:
                fail(lineno, f"unexpected {key!r} before shape line")
            continue
        if key == "frame":
            if current is not None and expect_joints:
                fail(lineno, f"frame {current[0]} person {current[1]} has "
                             f"{shape[2] - expect_joints} joints, expected {shape[2]}")
            if len(tokens) != 3:
                fail(lineno, "frame takes <frame> <person>")
            try:
                current = (int(tokens[1]), int(tokens[2]))
            except ValueError:
                fail(lineno, f"bad frame indices {tokens[1:]}")
            if not (0 <= current[0] < shape[0] and 0 <= current[1] < shape[1]):
                fail(lineno, f"frame {current[0]} person {current[1]} outside shape {shape}")
            if current in blocks:
                fail(lineno, f"duplicate frame {current[0]} person {current[1]}")
            blocks[current] = []
            expect_joints = shape[2]
        else:
            if current is None:
                fail(lineno, "joint values before any frame marker")
            if expect_joints == 0:
                fail(lineno, f"frame {current[0]} person {current[1]} has more than "
                             f"{shape[2]} joints")
            try:
                values = [float(v) for v in tokens]
            except ValueError:
                fail(lineno, f"bad float in {line!r}")
            if len(values) != shape[3]:
                fail(lineno, f"joint line has {len(values)} coordinates, expected {shape[3]}")
            blocks[current].append(values)
            expect_joints -= 1

    if shape is None:
        raise ValueError(f"{path}: missing shape line")
    if current is not None and expect_joints:
        raise ValueError(
            f"{path}: frame {current[0]} person {current[1]} has "
            f"{shape[2] - expect_joints} joints, expected {shape[2]}"
        )
    t, m, n, d = shape
    missing = [(ti, mi) for ti in range(t) for mi in range(m) if (ti, mi) not in blocks]
    if missing:
        raise ValueError(f"{path}: missing frame blocks {missing[:4]}"
                         + (" ..." if len(missing) > 4 else ""))
    data = np.empty((t, m, n, d), dtype=np.float32)
    for (ti, mi), rows in blocks.items():
        data[ti, mi] = np.asarray(rows, dtype=np.float64).astype(np.float32)
    try:
        label = int(header.get("label", ""))
    except ValueError:
        raise ValueError(f"{path}: missing or bad label") from None
    return SkeletonSequence(data, label, header.get("layout", ""), header.get("id", ""))


def load_sequence(path):
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] == MAGIC:
        return _parse_binary(raw, path)
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError:
        raise ValueError(f"{path}: neither binary magic nor readable text") from None
    return parse_sequence_text(text, path=str(path))


def convert_ntu_file(path):
    """Placeholder for real-capture ingestion.

    Parsing motion-capture vendor formats is out of scope here; a
    converter would read the vendor file, zero-fill absent persons up to
    two, and emit ``SkeletonSequence`` objects through ``save_sequence``.
    """
    raise NotImplementedError("real-capture ingestion is not part of this package")


# -- transforms ---------------------------------------------------------


def resize_sequence(seq, t_target):
    """Linearly interpolate the time axis onto ``t_target`` uniform points."""
    if t_target < 1:
        raise ValueError(f"target length must be at least 1, got {t_target}")
    t = seq.frames
    if t == t_target:
        return SkeletonSequence(seq.data.copy(), seq.label, seq.layout_name, seq.sample_id)
    if t == 1:
        data = np.repeat(seq.data, t_target, axis=0)
        return SkeletonSequence(data, seq.label, seq.layout_name, seq.sample_id)
    positions = np.linspace(0.0, t - 1, t_target)
    lo = np.floor(positions).astype(int)
    hi = np.minimum(lo + 1, t - 1)
    w = (positions - lo).reshape(-1, 1, 1, 1)
    data = (seq.data[lo] * (1.0 - w) + seq.data[hi] * w).astype(np.float32)
    return SkeletonSequence(data, seq.label, seq.layout_name, seq.sample_id)


def normalize_coords(seq, layout):
    """Shift all coordinates so the first person's first-frame center joint
    sits at the origin.  The confidence channel, if the layout declares
    one, is left untouched."""
    center = seq.data[0, 0, layout.center_joint].copy()
    if layout.score_channel is not None:
        center[layout.score_channel] = 0.0
    data = seq.data - center.reshape(1, 1, 1, -1)
    return SkeletonSequence(data, seq.label, seq.layout_name, seq.sample_id)


# -- manifests ----------------------------------------------------------


@dataclass
class DatasetManifest:
    entries: list               # (relative path, label)
    class_names: list
    layout_name: str
    split: str
    root: Path = field(default_factory=Path)

    def __post_init__(self):
        self.root = Path(self.root)
        for rel, label in self.entries:
            if not 0 <= label < len(self.class_names):
                raise ValueError(
                    f"entry {rel!r} has label {label}, class table holds "
                    f"{len(self.class_names)} names"
                )

    def __len__(self):
        return len(self.entries)

    def resolve(self, rel):
        return self.root / rel

    def labels(self):
        return np.array([label for _, label in self.entries], dtype=np.int64)


def save_manifest(path, manifest):
    path = Path(path)
    lines = ["# skeleton dataset manifest",
             f"# layout {manifest.layout_name}",
             f"# split {manifest.split}"]
    for i, name in enumerate(manifest.class_names):
        lines.append(f"# class {i} {name}")
    for rel, label in manifest.entries:
        lines.append(f"{rel}\t{label}")
    path.write_text("\n".join(lines) + "\n")
    return path


def load_manifest(path, check_paths=True):
    path = Path(path)
    layout_name = ""
    split = ""
    class_names = {}
    entries = []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            tokens = line[1:].split()
            if tokens[:1] == ["layout"] and len(tokens) == 2:
                layout_name = tokens[1]
            elif tokens[:1] == ["split"] and len(tokens) == 2:
                split = tokens[1]
            elif tokens[:1] == ["class"] and len(tokens) == 3:
                class_names[int(tokens[1])] = tokens[2]
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValueError(f"{path}: line {lineno}: expected 'path<TAB>label', got {line!r}")
        try:
            entries.append((parts[0], int(parts[1])))
        except ValueError:
            raise ValueError(f"{path}: line {lineno}: bad label {parts[1]!r}") from None
    names = [class_names.get(i, f"class{i}") for i in range(len(class_names))]
    manifest = DatasetManifest(entries, names, layout_name, split, root=path.parent)
    if check_paths:
        for rel, _ in manifest.entries:
            target = manifest.resolve(rel)
            if not target.exists():
                raise FileNotFoundError(f"{path}: listed file missing: {target}")
    return manifest


# -- synthetic motion ---------------------------------------------------


@dataclass
class SynthSpec:
    n_classes: int = 5
    samples_per_class: int = 40
    test_per_class: int = 20
    layout: str = "ntu25"
    frames: int = 32
    noise_sigma: float = 0.05
    seed: int = 0
    amplitude: float = 0.5

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValueError("need at least two classes")
        if self.samples_per_class < 1 or self.test_per_class < 0:
            raise ValueError("sample counts must be positive")
        if self.frames < 2:
            raise ValueError("need at least two frames")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")


def _class_programs(spec, layout, rng):
    """Each class moves its own joint subset at its own frequency/phase."""
    n = layout.n_joints
    subset_size = max(2, n // spec.n_classes)
    order = rng.permutation(n)
    programs = []
    for c in range(spec.n_classes):
        start = (c * subset_size) % n
        idx = np.sort(order[start : start + subset_size])
        if len(idx) < subset_size:  # wrap when classes exceed the joint budget
            idx = np.sort(np.concatenate([idx, order[: subset_size - len(idx)]]))
        directions = rng.standard_normal((subset_size, 3))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        programs.append({
            "joints": idx,
            "directions": directions,
            "frequency": 2.0 + c,
            "phase": rng.uniform(0.0, 2.0 * np.pi),
        })
    return programs


def _synth_sample(spec, rest, program, sample_rng):
    t, n = spec.frames, rest.shape[0]
    phase_offset = sample_rng.uniform(0.0, 2.0 * np.pi)
    data = np.broadcast_to(rest, (t, n, 3)).copy()
    angles = (2.0 * np.pi * program["frequency"] * np.arange(t) / t
              + program["phase"] + phase_offset)
    wave = spec.amplitude * np.sin(angles)                       # (T,)
    motion = wave[:, None, None] * program["directions"][None]   # (T, S, 3)
    data[:, program["joints"], :] += motion
    if spec.noise_sigma > 0:
        data += sample_rng.normal(0.0, spec.noise_sigma, data.shape)
    return data[:, None, :, :].astype(np.float32)                # (T, 1, N, 3)


def synth_generate(out_dir, spec):
    """Write a fully seeded synthetic dataset; returns (train, test) manifests.

    A shared rest pose plus per-class kinematic programs: each class
    oscillates its own subset of joints at a class-specific frequency
    and phase, so classes are told apart by which joints move together.
    Per-sample randomness (phase offset, coordinate noise) comes from a
    seed derived as (seed, split, class, index), making every file
    reproducible in isolation.
    """
    from .skeleton import build_layout

    out_dir = Path(out_dir)
    layout = build_layout(spec.layout)
    master = np.random.default_rng(spec.seed)
    rest = master.uniform(-1.0, 1.0, (layout.n_joints, 3))
    programs = _class_programs(spec, layout, master)
    class_names = [f"pattern{c}" for c in range(spec.n_classes)]

    manifests = []
    splits = (("train", spec.samples_per_class), ("test", spec.test_per_class))
    for split_idx, (split, per_class) in enumerate(splits):
        split_dir = out_dir / split
        split_dir.mkdir(parents=True, exist_ok=True)
        entries = []
        for c in range(spec.n_classes):
            for i in range(per_class):
                sample_rng = np.random.default_rng((spec.seed, split_idx, c, i))
                data = _synth_sample(spec, rest, programs[c], sample_rng)
                sample_id = f"{split}-c{c}-{i:03d}"
                seq = SkeletonSequence(data, c, layout.name, sample_id)
                rel = f"{split}/{sample_id}.skl"
                save_sequence(out_dir / rel, seq)
                entries.append((rel, c))
        manifest = DatasetManifest(entries, class_names, layout.name, split, root=out_dir)
        save_manifest(out_dir / f"{split}.manifest", manifest)
        manifests.append(manifest)
    return tuple(manifests)
