import os

import pandas as pd
import pytest

from asvlab import m18n
from asvlab.core import AsvLabError
from asvlab.utils.filesystem import (
    mkdir,
    read_csv,
    read_document,
    read_file,
    read_json,
    read_toml,
    read_yaml,
    sha256_document,
    sha256_file,
    write_to_csv,
    write_to_json,
)


def test_read_file(test_file):
    content = read_file(str(test_file))
    assert content == "foo\nbar\n"


def test_read_file_missing_file():
    bad_file = "doesnt-exist"

    with pytest.raises(AsvLabError) as exception:
        read_file(bad_file)

    expected_msg = m18n.g("file_not_exist", path=bad_file)
    assert expected_msg in str(exception)


def test_read_file_cannot_read_ioerror(test_file, mocker):
    error = "foobar"

    mocker.patch("builtins.open", side_effect=IOError(error))
    with pytest.raises(AsvLabError) as exception:
        read_file(str(test_file))

    expected_msg = m18n.g("cannot_open_file", file=str(test_file), error=error)
    assert expected_msg in str(exception)


def test_read_file_cannot_read_exception(test_file, mocker):
    error = "foobar"

    mocker.patch("builtins.open", side_effect=Exception(error))
    with pytest.raises(AsvLabError) as exception:
        read_file(str(test_file))

    expected_msg = m18n.g("unknown_error_reading_file", file=str(test_file), error=error)
    assert expected_msg in str(exception)


def test_read_json(test_json):
    content = read_json(str(test_json))
    assert content["foo"] == "bar"


def test_read_json_cannot_read(test_json, mocker):
    error = "foobar"

    mocker.patch("json.loads", side_effect=ValueError(error))
    with pytest.raises(AsvLabError) as exception:
        read_json(str(test_json))

    expected_msg = m18n.g("corrupted_json", ressource=str(test_json), error=error)
    assert expected_msg in str(exception)


def test_read_yaml(test_yaml):
    content = read_yaml(str(test_yaml))
    assert content["foo"] == "bar"


def test_read_yaml_cannot_read(test_yaml, mocker):
    error = "foobar"

    mocker.patch("yaml.safe_load", side_effect=Exception(error))
    with pytest.raises(AsvLabError) as exception:
        read_yaml(str(test_yaml))

    expected_msg = m18n.g("corrupted_yaml", ressource=str(test_yaml), error=error)
    assert expected_msg in str(exception)


def test_read_toml(test_toml):
    content = read_toml(str(test_toml))
    assert content["foo"] == "bar"


def test_read_toml_cannot_read(test_toml, mocker):
    error = "foobar"

    mocker.patch("toml.loads", side_effect=Exception(error))
    with pytest.raises(AsvLabError) as exception:
        read_toml(str(test_toml))

    expected_msg = m18n.g("corrupted_toml", ressource=str(test_toml), error=error)
    assert expected_msg in str(exception)


def test_read_document(test_json, test_yaml, test_toml, test_file):
    for document in (test_json, test_yaml, test_toml):
        assert read_document(str(document))["foo"] == "bar"

    with pytest.raises(AsvLabError) as exception:
        read_document(str(test_file))

    expected_msg = m18n.g("unsupported_document", path=str(test_file), ext=".txt")
    assert expected_msg in str(exception)


def test_write_dict_to_json(tmp_path):
    new_file = tmp_path / "newfile.json"

    dummy_dict = {"foo": 42, "bar": ["a", "b", "c"]}
    write_to_json(str(new_file), dummy_dict)
    _json = read_json(str(new_file))

    assert _json["foo"] == 42
    assert _json["bar"] == ["a", "b", "c"]


def test_write_list_to_json(tmp_path):
    new_file = tmp_path / "newfile.json"

    write_to_json(str(new_file), ["foo", "bar", "baz"])
    assert read_json(str(new_file)) == ["foo", "bar", "baz"]


def test_write_json_to_existing_file_bad_perms(test_file, mocker):
    error = "foobar"

    mocker.patch("builtins.open", side_effect=IOError(error))
    with pytest.raises(AsvLabError) as exception:
        write_to_json(str(test_file), {"foo": 42})

    expected_msg = m18n.g("cannot_write_file", file=str(test_file), error=error)
    assert expected_msg in str(exception)


def test_write_json_exception(test_file, mocker):
    error = "foobar"

    mocker.patch("builtins.open", side_effect=Exception(error))
    with pytest.raises(AsvLabError) as exception:
        write_to_json(str(test_file), {"foo": 42})

    expected_msg = m18n.g("error_writing_file", file=str(test_file), error=error)
    assert expected_msg in str(exception)


def test_write_json_cannot_write_folder(tmp_path):
    with pytest.raises(AssertionError):
        write_to_json(str(tmp_path), {"foo": 42})


def test_write_json_rejects_scalars(tmp_path):
    with pytest.raises(AssertionError):
        write_to_json(str(tmp_path / "scalar.json"), 42)


def test_csv_round_trip(tmp_path):
    new_file = str(tmp_path / "table.csv")

    write_to_csv(new_file, [[1, 0.1], [2, 1.0 / 3.0]], columns=["episode", "progress"])
    frame = read_csv(new_file)

    assert list(frame.columns) == ["episode", "progress"]
    assert frame["progress"][1] == pytest.approx(1.0 / 3.0, rel=1e-8)
    assert read_file(new_file).splitlines()[0] == "episode,progress"


def test_write_csv_from_frame(tmp_path):
    new_file = str(tmp_path / "table.csv")

    write_to_csv(new_file, pd.DataFrame({"a": [1, 2]}))
    assert read_file(new_file) == "a\n1\n2\n"


def test_read_csv_missing_file(tmp_path):
    bad_file = str(tmp_path / "missing.csv")

    with pytest.raises(AsvLabError) as exception:
        read_csv(bad_file)

    expected_msg = m18n.g("file_not_exist", path=bad_file)
    assert expected_msg in str(exception)


def test_sha256(test_file):
    expected = "d78931fcf2660108eec0d6674ecb4e02401b5256a6b5ee82527766ef6d198c67"
    assert sha256_file(str(test_file)) == expected
    assert sha256_file(str(test_file), chunk_size=3) == expected


def test_sha256_document_ignores_key_order():
    assert sha256_document({"a": 1, "b": [1, 2]}) == sha256_document({"b": [1, 2], "a": 1})
    assert sha256_document({"a": 1}) != sha256_document({"a": 2})


def test_mkdir(tmp_path):
    new_path = tmp_path / "new_folder"
    mkdir(str(new_path))

    assert os.path.isdir(str(new_path))


def test_mkdir_with_parent(tmp_path):
    new_path = tmp_path / "new_folder"
    mkdir(str(new_path) + "/", parents=True)

    assert os.path.isdir(str(new_path))

    new_path = tmp_path / "new_parent" / "new_folder"
    mkdir(str(new_path), parents=True)

    assert os.path.isdir(str(new_path))


def test_mkdir_existing_folder(tmp_path):
    new_path = tmp_path / "new_folder"
    os.makedirs(str(new_path))
    with pytest.raises(OSError):
        mkdir(str(new_path))

    mkdir(str(new_path), parents=True, force=True)
    assert os.path.isdir(str(new_path))
