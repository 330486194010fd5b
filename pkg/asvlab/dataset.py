# -*- coding: utf-8 -*-
"""Range scan dataset

Scans come from four sources:

- pilot -- a proportional heading controller driving the vessel along
  randomly generated scenarios, one scan per environment step
- mixed -- frozen synthetic scenes with 3 static and 2 dynamic obstacles
- dynamic_only -- 5 dynamic obstacles
- static_only -- 5 static obstacles

Every scan gets rotated copies, then the rows are split into train,
validation and test sets and Gaussian noise is added to the train rows.
"""

import math
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd

from asvlab.core import AsvLabValidationError, DatasetFormatError
from asvlab.config import RunConfig
from asvlab.dynamics import ControlInput, ShipModel, SimConfig, VesselState, step
from asvlab.guidance import GuidanceConfig, PathTracker, heading_error, progress
from asvlab.world import (
    CircleObstacle,
    PolygonObstacle,
    SCENARIO_PRESETS,
    SensorConfig,
    collision_check,
    poisson_positive,
    scan,
    scenario_for,
    step_obstacles,
)
from asvlab.utils.filesystem import read_json, write_to_csv, write_to_json
from asvlab.utils.process import parallel_map
from asvlab.utils.records import read_records, write_records

logger = logging.getLogger("asvlab.dataset")

DATASET_MAGIC = b"ASVSCAN\0"
DATASET_VERSION = 1

SOURCES = ("pilot", "mixed", "dynamic_only", "static_only")
SPLITS = ("train", "val", "test")

# number of (static, dynamic) obstacles per synthetic scene kind
SYNTHETIC_KINDS = {"mixed": (3, 2), "dynamic_only": (0, 5), "static_only": (5, 0)}

# seed streams
_PILOT_STREAM = 300
_SYNTHETIC_STREAM = 200
_AUGMENT_STREAM = 101
_SPLIT_STREAM = 102
_NOISE_STREAM = 103

SYNTHETIC_CHUNK = 500


@dataclass(frozen=True)
class DatasetConfig:
    n_pilot: int = 10000
    n_synth_mixed: int = 5000
    n_synth_dyn: int = 2500
    n_synth_stat: int = 2500
    rotation_copies: int = 2
    noise_var: float = 0.007
    clip_noise: bool = True
    poisson_mean_static: float = 25.0
    poisson_mean_dynamic: float = 10.0
    dynamic_aspect: float = 0.5
    speed_low: float = 0.1
    speed_high: float = 0.2
    test_fraction: float = 0.3
    val_fraction: float = 0.2
    pilot_max_per_scenario: int = 500
    pilot_scenario: str = "full"
    pilot_thrust: float = 0.6
    pilot_gain: float = 2.0
    pilot_damping: float = 4.0
    pilot_max_steps: int = 400
    substeps: int = 10
    ship_model: Optional[str] = None

    def __post_init__(self):
        for key in ("n_pilot", "n_synth_mixed", "n_synth_dyn", "n_synth_stat", "rotation_copies"):
            if getattr(self, key) < 0:
                raise AsvLabValidationError("invalid_config_value", key=key, value=getattr(self, key))
        if self.noise_var < 0:
            raise AsvLabValidationError("invalid_config_value", key="noise_var", value=self.noise_var)
        for key in ("test_fraction", "val_fraction"):
            if not 0 <= getattr(self, key) < 1:
                raise AsvLabValidationError("invalid_config_value", key=key, value=getattr(self, key))
        if self.pilot_max_per_scenario < 1 or self.substeps < 1:
            raise AsvLabValidationError(
                "invalid_config_value",
                key="pilot_max_per_scenario",
                value=self.pilot_max_per_scenario,
            )
        if self.pilot_scenario not in SCENARIO_PRESETS:
            raise AsvLabValidationError("scenario_unknown_preset", preset=self.pilot_scenario)

    @property
    def counts(self):
        return {
            "pilot": self.n_pilot,
            "mixed": self.n_synth_mixed,
            "dynamic_only": self.n_synth_dyn,
            "static_only": self.n_synth_stat,
        }


class ScanDataset:
    """Scans with their split and source codes

    Keyword arguments:
        - samples -- (n, 180) float32 scans
        - split -- (n,) codes indexing SPLITS
        - source -- (n,) codes indexing SOURCES
        - meta -- Generation seed, configuration and counts

    """

    def __init__(self, samples, split, source, meta=None):
        self.samples = np.ascontiguousarray(samples, dtype=np.float32)
        self.split = np.asarray(split, dtype=np.int8)
        self.source = np.asarray(source, dtype=np.int8)
        self.meta = meta or {}
        if self.samples.ndim != 2 or not (len(self.samples) == len(self.split) == len(self.source)):
            raise DatasetFormatError(
                "dataset_shape_mismatch",
                path="<memory>",
                found=self.samples.shape,
                expected="%d rows" % len(self.split),
            )

    def __len__(self):
        return len(self.samples)

    def subset(self, split):
        if split not in SPLITS:
            raise AsvLabValidationError("dataset_unknown_split", split=split)
        return self.samples[self.split == SPLITS.index(split)]

    def split_counts(self):
        return {name: int(np.sum(self.split == i)) for i, name in enumerate(SPLITS)}

    def source_counts(self):
        return {name: int(np.sum(self.source == i)) for i, name in enumerate(SOURCES)}

    def save(self, file_path):
        """Write the scans and the file_path + '.json' sidecar"""
        write_records(file_path, [self.samples], DATASET_MAGIC, "<f4")
        sidecar = {
            "version": DATASET_VERSION,
            "rows": int(self.samples.shape[0]),
            "cols": int(self.samples.shape[1]),
            "seed": self.meta.get("seed"),
            "counts": {"split": self.split_counts(), "source": self.source_counts()},
            "config": self.meta.get("config", {}),
            "split": self.split.tolist(),
            "source": self.source.tolist(),
        }
        write_to_json(file_path + ".json", sidecar)

    @classmethod
    def load(cls, file_path):
        sidecar = read_json(file_path + ".json")
        if sidecar.get("version") != DATASET_VERSION:
            raise DatasetFormatError(
                "records_bad_version",
                path=file_path + ".json",
                found=sidecar.get("version"),
                expected=DATASET_VERSION,
            )
        (samples,) = read_records(file_path, DATASET_MAGIC, "<f4", count=1)
        expected = (sidecar.get("rows"), sidecar.get("cols"))
        if samples.shape != expected or len(sidecar.get("split", [])) != samples.shape[0]:
            raise DatasetFormatError(
                "dataset_shape_mismatch",
                path=file_path,
                found=samples.shape,
                expected=expected,
            )
        meta = {"seed": sidecar.get("seed"), "config": sidecar.get("config", {})}
        return cls(samples, sidecar["split"], sidecar["source"], meta)


# Pilot scans ----------------------------------------------------------


def _pilot_control(path, state, omega, model, cfg, gcfg):
    psi_err = heading_error(path, state, gcfg, omega)
    yaw = np.clip(cfg.pilot_gain * psi_err - cfg.pilot_damping * state.r, -1.0, 1.0)
    return ControlInput(cfg.pilot_thrust * model.T_u_max, float(yaw) * model.T_r_max)


def _restart(rng, path, obstacles=(), hull_radius=0.0, tries=100):
    """A random state on the first 90% of the path, clear of the obstacles"""
    for _ in range(tries):
        omega = rng.uniform(0.0, 0.9 * path.length)
        point = path.point(omega)
        state = VesselState.at(point[0], point[1], float(path.gamma(omega)))
        if not collision_check(state, obstacles, hull_radius):
            return state
    logger.debug("no collision free restart found in %d tries", tries)
    return state


def pilot_scenario_scans(job):
    """Scans recorded while piloting one scenario

    The vessel is moved to a random point of the path when it collides,
    reaches the end or runs out of steps.
    """
    seed, index, count, cfg = job
    model = ShipModel.load(cfg.ship_model)
    sim, gcfg, sensor = SimConfig(), GuidanceConfig(), SensorConfig()
    scenario = scenario_for(seed, "pilot", index, SCENARIO_PRESETS[cfg.pilot_scenario])
    rng = np.random.default_rng([int(seed), _PILOT_STREAM, int(index)])

    path, obstacles, state = scenario.path, scenario.obstacles, scenario.vessel_start
    tracker = PathTracker(path, gcfg.search_window)
    omega = tracker.reset(state.position)
    scans = np.empty((count, sensor.n_rays), dtype=np.float32)
    steps = 0
    for k in range(count):
        for _ in range(cfg.substeps):
            state = step(state, _pilot_control(path, state, omega, model, cfg, gcfg), model, sim)
            obstacles = step_obstacles(obstacles, sim.dt)
        omega = tracker.update(state.position)
        scans[k] = scan(state, obstacles, sensor)
        steps += 1

        done = (
            collision_check(state, obstacles, model.hull_radius)
            or progress(path, omega) > 0.99
            or steps >= cfg.pilot_max_steps
        )
        if done:
            state = _restart(rng, path, obstacles, model.hull_radius)
            omega = tracker.reset(state.position)
            steps = 0
    return scans


def generate_pilot_scans(seed, n, cfg: DatasetConfig = DatasetConfig(), workers=None):
    """n scans recorded over ceil(n / pilot_max_per_scenario) scenarios"""
    if n <= 0:
        return np.empty((0, SensorConfig().n_rays), dtype=np.float32)
    cap = cfg.pilot_max_per_scenario
    jobs = [(seed, j, min(cap, n - j * cap), cfg) for j in range(math.ceil(n / cap))]
    logger.debug("piloting %d scenario(s) for %d scans", len(jobs), n)
    return np.concatenate(parallel_map(pilot_scenario_scans, jobs, workers))


# Synthetic scenes -----------------------------------------------------


def _uniform_center(rng, x_max):
    return rng.uniform(-x_max, x_max, size=2)


def sample_synthetic_obstacles(rng, kind, cfg: DatasetConfig = DatasetConfig(), sensor: SensorConfig = SensorConfig()):
    """Obstacles of a synthetic scene around a vessel at the origin

    Positions are uniform over the square of side 2 * x_max centered on
    the vessel and are drawn again while the obstacle covers the vessel.
    """
    if kind not in SYNTHETIC_KINDS:
        raise AsvLabValidationError("dataset_unknown_scene", kind=kind)
    n_static, n_dynamic = SYNTHETIC_KINDS[kind]
    origin = np.zeros(2)

    obstacles = []
    for radius in np.atleast_1d(poisson_positive(rng, cfg.poisson_mean_static, size=n_static)):
        circle = CircleObstacle(_uniform_center(rng, sensor.x_max), radius)
        while circle.distance(origin) <= 0:
            circle = CircleObstacle(_uniform_center(rng, sensor.x_max), radius)
        obstacles.append(circle)

    for size in np.atleast_1d(poisson_positive(rng, cfg.poisson_mean_dynamic, size=n_dynamic)):
        heading = rng.uniform(0.0, 2.0 * math.pi)
        speed = rng.uniform(cfg.speed_low, cfg.speed_high)

        def rectangle():
            return PolygonObstacle.rectangle(
                _uniform_center(rng, sensor.x_max),
                size,
                max(size * cfg.dynamic_aspect, 1.0),
                heading=heading,
                speed=speed,
                dynamic=True,
            )

        polygon = rectangle()
        while polygon.distance(origin) <= 0:
            polygon = rectangle()
        obstacles.append(polygon)
    return obstacles


def generate_synthetic_scene(rng, kind, cfg: DatasetConfig = DatasetConfig(), sensor: SensorConfig = SensorConfig()):
    """Scan of a frozen synthetic scene seen from the origin, heading north"""
    obstacles = sample_synthetic_obstacles(rng, kind, cfg, sensor)
    return scan(VesselState.at(), obstacles, sensor)


def synthetic_scans(job):
    seed, kind, start, stop, cfg = job
    stream = _SYNTHETIC_STREAM + SOURCES.index(kind)
    scans = np.empty((stop - start, SensorConfig().n_rays), dtype=np.float32)
    for k, i in enumerate(range(start, stop)):
        rng = np.random.default_rng([int(seed), stream, i])
        scans[k] = generate_synthetic_scene(rng, kind, cfg)
    return scans


def generate_synthetic_scans(seed, kind, n, cfg: DatasetConfig = DatasetConfig(), workers=None):
    """n scenes of a kind, sample i drawn from its own seed substream"""
    if n <= 0:
        return np.empty((0, SensorConfig().n_rays), dtype=np.float32)
    jobs = [
        (seed, kind, start, min(start + SYNTHETIC_CHUNK, n), cfg)
        for start in range(0, n, SYNTHETIC_CHUNK)
    ]
    return np.concatenate(parallel_map(synthetic_scans, jobs, workers))


# Augmentation, splits and noise ---------------------------------------


def circular_shift(samples, shifts):
    """Roll row i right by shifts[i] positions"""
    n, width = samples.shape
    index = (np.arange(width)[None, :] - np.asarray(shifts)[:, None]) % width
    return samples[np.arange(n)[:, None], index]


def augment_rotations(samples, copies, rng):
    """Append `copies` randomly rotated blocks after the original rows

    Every copy of a row is a circular shift by an integer in 1..width-1.
    """
    if copies < 0:
        raise AsvLabValidationError("invalid_config_value", key="rotation_copies", value=copies)
    samples = np.asarray(samples)
    if copies == 0 or len(samples) == 0:
        return samples.copy()
    width = samples.shape[1]
    blocks = [samples]
    for _ in range(copies):
        blocks.append(circular_shift(samples, rng.integers(1, width, size=len(samples))))
    return np.concatenate(blocks)


def split_dataset(n, rng, test_fraction=0.3, val_fraction=0.2):
    """Random split codes: a test share, then a validation share of the rest"""
    n_test = int(round(n * test_fraction))
    n_val = int(round((n - n_test) * val_fraction))
    order = rng.permutation(n)
    split = np.zeros(n, dtype=np.int8)
    split[order[:n_test]] = SPLITS.index("test")
    split[order[n_test : n_test + n_val]] = SPLITS.index("val")
    return split


def add_noise(rows, noise_var, rng, clip=True):
    """Add i.i.d. N(0, noise_var) noise, clipped back to [0, 1] by default"""
    if noise_var < 0:
        raise AsvLabValidationError("invalid_config_value", key="noise_var", value=noise_var)
    rows = np.asarray(rows)
    if noise_var == 0:
        return rows.copy()
    noisy = rows + rng.normal(0.0, math.sqrt(noise_var), size=rows.shape)
    if clip:
        noisy = np.clip(noisy, 0.0, 1.0)
    return noisy.astype(rows.dtype)


def build_dataset(cfg: DatasetConfig = DatasetConfig(), seed=0, workers=None) -> ScanDataset:
    blocks, sources = [], []
    for code, name in enumerate(SOURCES):
        n = cfg.counts[name]
        if name == "pilot":
            scans = generate_pilot_scans(seed, n, cfg, workers)
        else:
            scans = generate_synthetic_scans(seed, name, n, cfg, workers)
        logger.info("%d %s scans generated", len(scans), name)
        blocks.append(scans)
        sources.append(np.full(len(scans), code, dtype=np.int8))

    base = np.concatenate(blocks)
    base_sources = np.concatenate(sources)
    augment_rng = np.random.default_rng([int(seed), _AUGMENT_STREAM])
    samples = augment_rotations(base, cfg.rotation_copies, augment_rng).astype(np.float32)
    source = np.tile(base_sources, cfg.rotation_copies + 1)

    split = split_dataset(
        len(samples),
        np.random.default_rng([int(seed), _SPLIT_STREAM]),
        cfg.test_fraction,
        cfg.val_fraction,
    )
    train = split == SPLITS.index("train")
    samples[train] = add_noise(
        samples[train],
        cfg.noise_var,
        np.random.default_rng([int(seed), _NOISE_STREAM]),
        cfg.clip_noise,
    )
    return ScanDataset(samples, split, source, {"seed": int(seed)})


# Actions --------------------------------------------------------------


def dataset_generate(name="scans.bin", config=None, seed=None, out=None):
    """Generate, augment, split and save a scan dataset

    Keyword arguments:
        - name -- File name of the dataset in the output directory

    """
    run = RunConfig.load(config, seed, out)
    cfg = run.section("dataset", DatasetConfig)
    dataset = build_dataset(cfg, run.seed)
    dataset.meta["config"] = run.resolved["dataset"]

    file_path = run.path(name)
    dataset.save(file_path)
    run.write_manifest("dataset generate", [file_path, file_path + ".json"])
    logger.success("%d scans written to %s", len(dataset), file_path)

    return {
        "dataset": file_path,
        "rows": len(dataset),
        "splits": dataset.split_counts(),
        "sources": dataset.source_counts(),
    }


def dataset_export(data, split=None, limit=None, config=None, seed=None, out=None):
    """Export scans to CSV, one row per scan"""
    run = RunConfig.load(config, seed, out)
    run.record("export", {"data": data, "split": split, "limit": limit})
    dataset = ScanDataset.load(data)

    rows = np.arange(len(dataset))
    if split is not None:
        if split not in SPLITS:
            raise AsvLabValidationError("dataset_unknown_split", split=split)
        rows = rows[dataset.split == SPLITS.index(split)]
    if limit is not None:
        rows = rows[: int(limit)]

    frame = pd.DataFrame(
        dataset.samples[rows], columns=["r_%d" % k for k in range(dataset.samples.shape[1])]
    )
    frame.insert(0, "source", [SOURCES[c] for c in dataset.source[rows]])
    frame.insert(0, "split", [SPLITS[c] for c in dataset.split[rows]])

    file_path = run.path("scans.csv")
    write_to_csv(file_path, frame)
    run.write_manifest("dataset export", [file_path])
    logger.success("%d scans exported to %s", len(frame), file_path)
    return {"rows": int(len(frame)), "csv": file_path}
