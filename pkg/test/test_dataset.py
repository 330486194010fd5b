import numpy as np
import pytest
import yaml

from asvlab.core import AsvLabValidationError, DatasetFormatError
from asvlab.dataset import (
    SPLITS,
    DatasetConfig,
    ScanDataset,
    add_noise,
    augment_rotations,
    build_dataset,
    circular_shift,
    dataset_export,
    dataset_generate,
    generate_pilot_scans,
    generate_synthetic_scene,
    generate_synthetic_scans,
    sample_synthetic_obstacles,
    split_dataset,
    _restart,
)
from asvlab.dynamics import VesselState
from asvlab.guidance import build_path
from asvlab.world import CircleObstacle, collision_check, scan
from asvlab.utils.filesystem import read_csv, read_json


SMALL = dict(
    n_pilot=4,
    n_synth_mixed=6,
    n_synth_dyn=3,
    n_synth_stat=3,
    rotation_copies=2,
    pilot_max_per_scenario=2,
)


@pytest.fixture
def single_worker(monkeypatch):
    monkeypatch.setenv("ASVLAB_THREADS", "1")


def test_circular_shift_matches_roll(rng):
    samples = rng.uniform(size=(5, 180))
    shifts = [0, 1, 7, 90, 179]
    shifted = circular_shift(samples, shifts)
    for row, shift in enumerate(shifts):
        np.testing.assert_array_equal(shifted[row], np.roll(samples[row], shift))


def test_augment_rotations(rng):
    samples = rng.uniform(size=(10, 180))
    augmented = augment_rotations(samples, 2, rng)
    assert augmented.shape == (30, 180)
    np.testing.assert_array_equal(augmented[:10], samples)
    for copy in (augmented[10:20], augmented[20:]):
        for original, rotated in zip(samples, copy):
            matches = [k for k in range(1, 180) if np.array_equal(np.roll(original, k), rotated)]
            assert len(matches) == 1


def test_augment_rotations_rejects_negative(rng):
    with pytest.raises(AsvLabValidationError):
        augment_rotations(np.zeros((2, 180)), -1, rng)


def test_split_dataset_counts(rng):
    split = split_dataset(1000, rng)
    counts = np.bincount(split, minlength=3)
    assert counts[SPLITS.index("test")] == 300
    assert counts[SPLITS.index("val")] == 140
    assert counts[SPLITS.index("train")] == 560


def test_add_noise(rng):
    rows = np.full((200, 180), 0.5, dtype=np.float32)
    np.testing.assert_array_equal(add_noise(rows, 0.0, rng), rows)

    noisy = add_noise(rows, 0.007, rng, clip=False)
    assert noisy.dtype == np.float32
    assert np.var(noisy - rows) == pytest.approx(0.007, rel=0.05)

    edges = add_noise(np.zeros((50, 180)), 0.007, rng)
    assert edges.min() >= 0.0 and edges.max() <= 1.0

    with pytest.raises(AsvLabValidationError):
        add_noise(rows, -1.0, rng)


@pytest.mark.parametrize("kind,static,dynamic", [("mixed", 3, 2), ("dynamic_only", 0, 5), ("static_only", 5, 0)])
def test_synthetic_obstacles(kind, static, dynamic, rng):
    obstacles = sample_synthetic_obstacles(rng, kind)
    assert sum(not o.dynamic for o in obstacles) == static
    assert sum(o.dynamic for o in obstacles) == dynamic
    assert all(o.distance((0.0, 0.0)) > 0 for o in obstacles)


def test_synthetic_obstacles_unknown_kind(rng):
    with pytest.raises(AsvLabValidationError):
        sample_synthetic_obstacles(rng, "crowded")


def test_synthetic_scans_are_deterministic():
    a = generate_synthetic_scans(3, "mixed", 5, workers=1)
    b = generate_synthetic_scans(3, "mixed", 5, workers=1)
    assert a.shape == (5, 180)
    assert a.dtype == np.float32
    np.testing.assert_array_equal(a, b)
    assert a.min() >= 0.0 and a.max() <= 1.0


def test_pilot_scans():
    cfg = DatasetConfig(pilot_max_per_scenario=3)
    scans = generate_pilot_scans(1, 5, cfg, workers=1)
    assert scans.shape == (5, 180)
    assert scans.min() >= 0.0 and scans.max() <= 1.0
    assert generate_pilot_scans(1, 0, cfg).shape == (0, 180)


def test_pilot_restart_avoids_obstacles(rng):
    path = build_path([(0.0, 0.0), (100.0, 0.0)])
    # covers the path up to x = 65
    obstacles = [CircleObstacle((30.0, 0.0), 35.0)]
    for _ in range(50):
        state = _restart(rng, path, obstacles, hull_radius=1.0)
        assert not collision_check(state, obstacles, 1.0)
        assert 66.0 <= state.x_n <= 90.0
        assert state.psi == pytest.approx(0.0)

    # nowhere to go, the last draw is kept
    everywhere = [CircleObstacle((50.0, 0.0), 200.0)]
    state = _restart(rng, path, everywhere, hull_radius=1.0, tries=3)
    assert collision_check(state, everywhere, 1.0)


def test_build_dataset_layout():
    cfg = DatasetConfig(**SMALL)
    dataset = build_dataset(cfg, seed=5, workers=1)
    assert len(dataset) == 16 * 3
    assert dataset.split_counts() == {"train": 27, "val": 7, "test": 14}
    assert dataset.source_counts() == {"pilot": 12, "mixed": 18, "dynamic_only": 9, "static_only": 9}


@pytest.mark.slow
def test_build_dataset_ignores_worker_count():
    cfg = DatasetConfig(**SMALL)
    a = build_dataset(cfg, seed=5, workers=1)
    b = build_dataset(cfg, seed=5, workers=2)
    assert a.samples.tobytes() == b.samples.tobytes()
    np.testing.assert_array_equal(a.split, b.split)


def test_noise_only_touches_training_rows():
    clean = build_dataset(DatasetConfig(noise_var=0.0, **SMALL), seed=5, workers=1)
    noisy = build_dataset(DatasetConfig(**SMALL), seed=5, workers=1)
    train = clean.split == SPLITS.index("train")
    np.testing.assert_array_equal(clean.samples[~train], noisy.samples[~train])
    assert not np.array_equal(clean.samples[train], noisy.samples[train])


def test_dataset_save_and_load(tiny_dataset, tmp_path):
    file_path = str(tmp_path / "scans.bin")
    tiny_dataset.save(file_path)

    sidecar = read_json(file_path + ".json")
    assert sidecar["rows"] == 60 and sidecar["cols"] == 180
    assert sidecar["counts"]["split"] == {"train": 20, "val": 20, "test": 20}

    loaded = ScanDataset.load(file_path)
    assert loaded.samples.tobytes() == tiny_dataset.samples.tobytes()
    np.testing.assert_array_equal(loaded.source, tiny_dataset.source)
    assert loaded.meta["seed"] == 7


def test_dataset_load_truncated(tiny_dataset, tmp_path):
    file_path = str(tmp_path / "scans.bin")
    tiny_dataset.save(file_path)
    with open(file_path, "rb") as f:
        blob = f.read()
    with open(file_path, "wb") as f:
        f.write(blob[:-4])

    with pytest.raises(DatasetFormatError):
        ScanDataset.load(file_path)


def test_dataset_shape_mismatch():
    with pytest.raises(DatasetFormatError):
        ScanDataset(np.zeros((3, 180)), [0, 1], [0, 1, 2])


def test_subset(tiny_dataset):
    assert tiny_dataset.subset("val").shape == (20, 180)
    with pytest.raises(AsvLabValidationError):
        tiny_dataset.subset("holdout")


def test_dataset_generate_action(tmp_path, single_worker):
    config = str(tmp_path / "run.yml")
    with open(config, "w") as f:
        yaml.safe_dump({"dataset": SMALL}, f)
    out = str(tmp_path / "out")

    result = dataset_generate(name="scans.bin", config=config, seed=2, out=out)
    assert result["rows"] == 48
    assert result["splits"]["test"] == 14

    manifest = read_json(out + "/manifest.json")
    assert manifest["command"] == "dataset generate"
    assert manifest["seed"] == 2
    assert set(manifest["artifacts"]) == {"scans.bin", "scans.bin.json"}
    resolved = read_json(out + "/resolved_config.json")
    assert resolved["dataset"]["n_pilot"] == 4


def test_dataset_generate_rejects_unknown_key(tmp_path):
    config = str(tmp_path / "run.yml")
    with open(config, "w") as f:
        yaml.safe_dump({"dataset": {"n_lidar": 3}}, f)
    with pytest.raises(AsvLabValidationError):
        dataset_generate(config=config, out=str(tmp_path))


def test_dataset_export_action(tiny_dataset, tmp_path):
    file_path = str(tmp_path / "scans.bin")
    tiny_dataset.save(file_path)

    result = dataset_export(file_path, split="test", limit=5, out=str(tmp_path / "csv"))
    assert result["rows"] == 5
    frame = read_csv(result["csv"])
    assert list(frame.columns[:3]) == ["split", "source", "r_0"]
    assert set(frame["split"]) == {"test"}
    assert frame.shape == (5, 182)


@pytest.mark.parametrize("kind", ["mixed", "dynamic_only", "static_only"])
def test_generate_synthetic_scene(kind):
    found = generate_synthetic_scene(np.random.default_rng([3, 1]), kind)
    obstacles = sample_synthetic_obstacles(np.random.default_rng([3, 1]), kind)
    np.testing.assert_array_equal(found, scan(VesselState.at(), obstacles))
    assert found.shape == (180,)
    # the vessel is never inside an obstacle
    assert np.all((found >= 0.0) & (found < 1.0))

    with pytest.raises(AsvLabValidationError):
        generate_synthetic_scene(np.random.default_rng(0), "crowded")
