import shutil

import numpy as np
import pytest

from dyngcn.checkpoint import load_checkpoint, save_checkpoint
from dyngcn.config import RunConfig, model_preset, run_preset
from dyngcn.data import SynthSpec, load_manifest, synth_generate
from dyngcn.model import ModelConfig, build_model
from dyngcn.skeleton import build_layout
from dyngcn.train import (
    EpochRecord,
    MetricsLog,
    collect_logits,
    ensemble_checkpoints,
    evaluate_arrays,
    evaluate_checkpoint,
    load_dataset,
    train,
)


# -- run configuration --------------------------------------------------


def test_ntu_preset_hyperparameters():
    cfg = run_preset("ntu-like")
    assert cfg.lr == 0.1
    assert cfg.milestones == (35, 55)
    assert cfg.total_epochs == 65
    assert cfg.weight_decay == 0.0004
    assert cfg.batch_size == 64
    assert cfg.momentum == 0.9 and cfg.nesterov
    assert cfg.model.channels == (64, 64, 64, 64, 128, 128, 128, 256, 256, 256)


def test_kinetics_preset_shapes():
    cfg = run_preset("kinetics-like")
    assert cfg.model.layout == "openpose18"
    assert cfg.model.frames == 150
    assert cfg.model.n_classes == 400


def test_unknown_presets():
    with pytest.raises(ValueError, match="unknown run preset"):
        run_preset("enormous")
    with pytest.raises(ValueError, match="unknown model preset"):
        model_preset("smoke2")


def test_run_config_text_round_trip():
    cfg = run_preset("smoke")
    again = RunConfig.from_text(cfg.to_text())
    assert again == cfg


def test_run_config_parse_errors():
    with pytest.raises(ValueError, match="line 1: unknown key"):
        RunConfig.from_text("warp_speed=9\n")
    with pytest.raises(ValueError, match="model.layout and model.n_classes"):
        RunConfig.from_text("lr=0.1\n")
    with pytest.raises(ValueError, match="line 2: unknown model key"):
        RunConfig.from_text("model.layout=ntu25\nmodel.flux=3\n")


def test_run_config_validation():
    model = ModelConfig(layout="ntu25", n_classes=2)
    with pytest.raises(ValueError, match="milestones"):
        RunConfig(model=model, milestones=(70,), total_epochs=65)
    with pytest.raises(ValueError, match="increasing"):
        RunConfig(model=model, milestones=(55, 35), total_epochs=65)
    with pytest.raises(ValueError, match="modality"):
        RunConfig(model=model, modality="hologram")
    with pytest.raises(ValueError, match="batch_size"):
        RunConfig(model=model, batch_size=0)


def test_with_overrides():
    cfg = run_preset("smoke")
    out = cfg.with_overrides(["lr=0.25", "milestones=1,2", "total_epochs=4",
                              "model.frames=8"])
    assert out.lr == 0.25 and out.milestones == (1, 2)
    assert out.model.frames == 8
    assert cfg.lr == 0.05  # original untouched
    with pytest.raises(ValueError, match="unknown key"):
        cfg.with_overrides(["chaos=1"])


# -- metrics log --------------------------------------------------------


def test_metrics_log_round_trip_and_no_wall_time():
    log = MetricsLog()
    log.append(EpochRecord(1, 1.5, 0.4, 0.5, 0.9, 0.1, wall_time=12.5))
    log.append(EpochRecord(2, 1.1, 0.6, 0.7, 1.0, 0.1, wall_time=11.0))
    text = log.format()
    assert "12.5" not in text and "11.0" not in text
    back = MetricsLog.parse(text)
    assert [r.epoch for r in back.records] == [1, 2]
    assert back.records[0].train_loss == 1.5
    assert back.format() == text


def test_metrics_log_requires_increasing_epochs():
    log = MetricsLog()
    log.append(EpochRecord(3, 1.0, 0.5, 0.5, 1.0, 0.1))
    with pytest.raises(ValueError, match="advance"):
        log.append(EpochRecord(3, 1.0, 0.5, 0.5, 1.0, 0.1))


# -- checkpoints --------------------------------------------------------


def tiny_model_config():
    return ModelConfig(layout="ntu25", n_classes=3, frames=8,
                       channels=(4, 8), strides=(1, 2), tc_kernel=3,
                       aggregate_after=(1,), topology="context")


def test_checkpoint_round_trip_bit_exact_logits(tmp_path):
    model = build_model(tiny_model_config(), seed=4)
    # leave a mark in the running stats so buffers matter
    x = np.random.default_rng(0).standard_normal((4, 3, 8, 25)).astype(np.float32)
    model.train()
    from dyngcn.tensor import Tensor, no_grad

    with no_grad():
        model(Tensor(x))
    path = save_checkpoint(tmp_path / "m.ckpt", model, {"modality": "joint"})
    before = collect_logits(model, x[:, None])
    again, meta = load_checkpoint(path)
    after = collect_logits(again, x[:, None])
    assert np.array_equal(before, after)
    assert meta == {"modality": "joint"}


def test_checkpoint_rejects_corruption(tmp_path):
    model = build_model(tiny_model_config(), seed=1)
    path = save_checkpoint(tmp_path / "m.ckpt", model)
    raw = bytearray(path.read_bytes())
    raw[:4] = b"NOPE"
    path.write_bytes(bytes(raw))
    with pytest.raises(ValueError, match="bad magic"):
        load_checkpoint(path)
    path2 = save_checkpoint(tmp_path / "n.ckpt", model)
    path2.write_bytes(path2.read_bytes()[:-16])
    with pytest.raises(ValueError, match=r"(truncated|buffer)"):
        load_checkpoint(path2)


# -- training harness ---------------------------------------------------


@pytest.fixture(scope="module")
def smoke_setup(tmp_path_factory):
    root = tmp_path_factory.mktemp("smoke")
    spec = SynthSpec(n_classes=2, samples_per_class=10, test_per_class=5,
                     layout="ntu25", frames=20, noise_sigma=0.05, seed=11)
    synth_generate(root / "data", spec)
    cfg = run_preset("smoke").with_overrides([
        f"train_manifest={root / 'data' / 'train.manifest'}",
        f"test_manifest={root / 'data' / 'test.manifest'}",
        f"out_dir={root / 'run'}",
        "seed=0",
    ])
    return root, cfg


@pytest.fixture(scope="module")
def smoke_run(smoke_setup):
    _, cfg = smoke_setup
    return train(cfg)


def test_smoke_run_loss_decreases(smoke_run):
    records = smoke_run.log.records
    assert len(records) == 3
    assert records[-1].train_loss < records[0].train_loss


def test_smoke_run_writes_artifacts(smoke_run):
    assert smoke_run.checkpoint_path.exists()
    assert smoke_run.metrics_path.exists()
    assert smoke_run.checkpoint_path.with_name("run.cfg").exists()


def test_identical_seed_runs_identical_metrics(smoke_setup, smoke_run, tmp_path):
    _, cfg = smoke_setup
    rerun = train(cfg.with_overrides([f"out_dir={tmp_path / 'rerun'}"]))
    assert rerun.metrics_path.read_bytes() == smoke_run.metrics_path.read_bytes()


def test_top5_never_below_top1(smoke_setup, smoke_run):
    root, cfg = smoke_setup
    result = evaluate_checkpoint(smoke_run.checkpoint_path,
                                 root / "data" / "train.manifest")
    assert result.top5 >= result.top1
    assert result.confusion.sum() == result.count == 20


def test_ensemble_of_one_equals_evaluate(smoke_setup, smoke_run):
    root, _ = smoke_setup
    manifest = root / "data" / "test.manifest"
    single = evaluate_checkpoint(smoke_run.checkpoint_path, manifest)
    streams, fused = ensemble_checkpoints([smoke_run.checkpoint_path], manifest)
    assert len(streams) == 1
    assert fused.top1 == single.top1 and fused.top5 == single.top5


def test_ensemble_duplicate_checkpoint_unchanged(smoke_setup, smoke_run, tmp_path):
    root, _ = smoke_setup
    manifest = root / "data" / "test.manifest"
    copy = tmp_path / "copy.ckpt"
    shutil.copyfile(smoke_run.checkpoint_path, copy)
    single = evaluate_checkpoint(smoke_run.checkpoint_path, manifest)
    _, fused = ensemble_checkpoints([smoke_run.checkpoint_path, copy], manifest)
    assert fused.top1 == single.top1


def test_ensemble_class_count_mismatch(smoke_setup, smoke_run, tmp_path):
    root, _ = smoke_setup
    other = build_model(ModelConfig(layout="ntu25", n_classes=7, frames=16,
                                    channels=(8,), strides=(1,), tc_kernel=3,
                                    aggregate_after=()),
                        seed=0)
    path = save_checkpoint(tmp_path / "other.ckpt", other, {"modality": "joint"})
    with pytest.raises(ValueError, match="classes"):
        ensemble_checkpoints([smoke_run.checkpoint_path, path],
                             root / "data" / "test.manifest")


def test_non_finite_loss_aborts(tmp_path):
    spec = SynthSpec(n_classes=2, samples_per_class=4, test_per_class=0,
                     layout="ntu25", frames=20, noise_sigma=0.05, seed=13)
    train_manifest, _ = synth_generate(tmp_path / "data", spec)
    # poison one sequence so the very first forward produces NaN
    from dyngcn.data import load_sequence, save_sequence

    victim = train_manifest.resolve(train_manifest.entries[0][0])
    seq = load_sequence(victim)
    seq.data[0, 0, 0, 0] = np.nan
    save_sequence(victim, seq)
    cfg = run_preset("smoke").with_overrides([
        f"train_manifest={tmp_path / 'data' / 'train.manifest'}",
        f"out_dir={tmp_path / 'hot'}",
        "total_epochs=2",
        "batch_size=8",
    ])
    with pytest.raises(RuntimeError, match="non-finite loss .* epoch 1"):
        train(cfg)


@pytest.fixture(scope="module")
def five_class_data(tmp_path_factory):
    root = tmp_path_factory.mktemp("five")
    spec = SynthSpec(n_classes=5, samples_per_class=8, test_per_class=8,
                     layout="ntu25", frames=20, noise_sigma=0.05, seed=21)
    synth_generate(root, spec)
    return root


def test_random_model_sits_at_chance(five_class_data):
    layout = build_layout("ntu25")
    manifest = load_manifest(five_class_data / "test.manifest")
    cfg = ModelConfig(layout="ntu25", n_classes=5, frames=16,
                      channels=(8, 16), strides=(1, 2), tc_kernel=5,
                      aggregate_after=(1,), topology="context")
    x, y = load_dataset(manifest, cfg.frames, layout, "joint")
    for seed in range(4):
        model = build_model(cfg, seed=seed)
        result = evaluate_arrays(model, x, y)
        assert 0.1 <= result.top1 <= 0.35
        assert result.top5 == 1.0  # five classes, top-5 covers everything
