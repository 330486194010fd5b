"""Pytest fixtures for testing."""

import json

import numpy as np
import pytest
import toml
import yaml


def patch_translate(asvlab):
    """Configure translator to raise errors when there are missing keys."""
    old_translate = asvlab.core.Translator.translate

    def new_translate(self, key, /, *args, **kwargs):
        if key not in self._translations[self.default_locale].keys():
            message = "Unable to retrieve key '%s' for default locale!" % key
            raise KeyError(message)

        return old_translate(self, key, *args, **kwargs)

    asvlab.core.Translator.translate = new_translate


def logging_configuration():
    """Log through the TTY handler and let records propagate to caplog."""
    return {
        "version": 1,
        "disable_existing_loggers": False,
        "filters": {"action": {"()": "asvlab.utils.log.ActionFilter"}},
        "handlers": {
            "tty": {
                "level": "INFO",
                "class": "asvlab.interfaces.cli.TTYHandler",
                "filters": ["action"],
            },
        },
        "loggers": {
            "asvlab": {"level": "DEBUG", "handlers": ["tty"], "propagate": True},
        },
    }


@pytest.fixture(scope="session", autouse=True)
def asvlab():
    import asvlab
    import asvlab.core
    from asvlab.utils.log import configure_logging

    patch_translate(asvlab)
    configure_logging(logging_configuration())

    return asvlab


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture(scope="session")
def ship_model():
    from asvlab.dynamics import ShipModel

    return ShipModel.load()


@pytest.fixture
def straight_path():
    from asvlab.guidance import build_path

    return build_path([(0.0, 0.0), (100.0, 0.0)])


@pytest.fixture
def corner_path():
    from asvlab.guidance import build_path

    return build_path([(0.0, 0.0), (100.0, 0.0), (100.0, 100.0)], radius=20.0)


@pytest.fixture
def numerical_gradient():
    """Central finite differences of a scalar function of one array"""

    def gradient(f, array, h=1e-6):
        grad = np.zeros_like(array, dtype=np.float64)
        it = np.nditer(array, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            saved = array[idx]
            array[idx] = saved + h
            plus = f()
            array[idx] = saved - h
            minus = f()
            array[idx] = saved
            grad[idx] = (plus - minus) / (2 * h)
        return grad

    return gradient


@pytest.fixture
def tiny_dataset():
    """A small dataset with every split and source represented"""
    from asvlab.dataset import ScanDataset

    gen = np.random.default_rng(7)
    n = 60
    samples = gen.uniform(0.0, 1.0, size=(n, 180)).astype(np.float32)
    split = np.repeat(np.array([0, 1, 2], dtype=np.int8), n // 3)
    source = np.tile(np.array([0, 1, 2, 3], dtype=np.int8), n // 4)
    return ScanDataset(samples, split, source, meta={"seed": 7})


@pytest.fixture
def test_file(tmp_path):
    test_text = "foo\nbar\n"
    test_file = tmp_path / "test.txt"
    test_file.write_bytes(test_text.encode())
    return test_file


@pytest.fixture
def test_json(tmp_path):
    test_json = json.dumps({"foo": "bar"})
    test_file = tmp_path / "test.json"
    test_file.write_bytes(test_json.encode())
    return test_file


@pytest.fixture
def test_yaml(tmp_path):
    test_yaml = yaml.dump({"foo": "bar"})
    test_file = tmp_path / "test.yml"
    test_file.write_bytes(test_yaml.encode())
    return test_file


@pytest.fixture
def test_toml(tmp_path):
    test_toml = toml.dumps({"foo": "bar"})
    test_file = tmp_path / "test.toml"
    test_file.write_bytes(test_toml.encode())
    return test_file


@pytest.fixture
def cli_logging(mocker):
    """Run the command line in English and restore the test logging after"""
    from asvlab import m18n
    from asvlab.utils.log import configure_logging

    mocker.patch("asvlab.interfaces.cli.get_locale", return_value="en")
    yield
    m18n.set_locale("en")
    configure_logging(logging_configuration())
