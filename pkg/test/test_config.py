import os
from dataclasses import dataclass

import pytest
import yaml

from asvlab.core import AsvLabError, AsvLabValidationError
from asvlab.config import MANIFEST, RESOLVED_CONFIG, RunConfig
from asvlab.utils.filesystem import (
    read_json,
    sha256_document,
    sha256_file,
    write_to_json,
)


@dataclass(frozen=True)
class Section:
    epochs: int = 10
    beta: float = 1.0
    sizes: tuple = (1, 2)


@pytest.fixture
def document(tmp_path):
    file_path = str(tmp_path / "run.yml")
    with open(file_path, "w") as f:
        yaml.safe_dump({"seed": 7, "train": {"epochs": 3, "sizes": [4, 5]}}, f)
    return file_path


def test_defaults(tmp_path):
    run = RunConfig.load(out=str(tmp_path / "out"))
    assert run.seed == 0
    assert os.path.isdir(run.out)
    assert run.section("train", Section) == Section()


def test_seed_precedence(document, tmp_path):
    assert RunConfig.load(document, out=str(tmp_path)).seed == 7
    assert RunConfig.load(document, seed=3, out=str(tmp_path)).seed == 3
    assert RunConfig.load(document, seed="12", out=str(tmp_path)).seed == 12


@pytest.mark.parametrize("seed", ["abc", -1, 2**64])
def test_invalid_seed(seed, tmp_path):
    with pytest.raises(AsvLabValidationError):
        RunConfig.load(seed=seed, out=str(tmp_path))


def test_section_overrides(document, tmp_path):
    run = RunConfig.load(document, out=str(tmp_path))
    section = run.section("train", Section, beta=0.5, epochs=None)
    assert section == Section(epochs=3, beta=0.5, sizes=(4, 5))
    assert run.resolved["train"] == {"epochs": 3, "beta": 0.5, "sizes": [4, 5]}


def test_unknown_key(tmp_path):
    file_path = str(tmp_path / "run.json")
    write_to_json(file_path, {"train": {"epoch": 3}})
    run = RunConfig.load(file_path, out=str(tmp_path))
    with pytest.raises(AsvLabValidationError):
        run.section("train", Section)


def test_not_a_mapping(tmp_path):
    file_path = str(tmp_path / "run.json")
    write_to_json(file_path, [1, 2])
    with pytest.raises(AsvLabValidationError):
        RunConfig.load(file_path, out=str(tmp_path))

    write_to_json(file_path, {"train": 3})
    run = RunConfig.load(file_path, out=str(tmp_path))
    with pytest.raises(AsvLabValidationError):
        run.section("train", Section)


def test_toml_document(tmp_path):
    file_path = str(tmp_path / "run.toml")
    with open(file_path, "w") as f:
        f.write("seed = 5\n\n[train]\nbeta = 3.0\n")
    run = RunConfig.load(file_path, out=str(tmp_path))
    assert run.seed == 5
    assert run.section("train", Section).beta == 3.0


def test_missing_document(tmp_path):
    with pytest.raises(AsvLabError):
        RunConfig.load(str(tmp_path / "nope.yml"), out=str(tmp_path))


def test_manifest(document, tmp_path):
    out = str(tmp_path / "out")
    run = RunConfig.load(document, out=out)
    run.section("train", Section)
    run.record("extra", {"files": ["a"]})
    artifact = run.path("result.txt")
    with open(artifact, "w") as f:
        f.write("done")

    run.write_manifest("vae train", [artifact])
    resolved = read_json(os.path.join(out, RESOLVED_CONFIG))
    assert resolved["seed"] == 7
    assert resolved["extra"] == {"files": ["a"]}

    manifest = read_json(os.path.join(out, MANIFEST))
    assert manifest["command"] == "vae train"
    assert manifest["seed"] == 7
    assert manifest["config_sha256"] == sha256_document(resolved)
    assert manifest["artifacts"] == {"result.txt": sha256_file(artifact)}
