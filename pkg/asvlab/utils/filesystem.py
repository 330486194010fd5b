import os
import json
import errno
import hashlib
from collections import OrderedDict

import yaml
import toml
import pandas as pd

from asvlab import m18n
from asvlab.core import AsvLabError

FLOAT_FORMAT = "%.9g"

# Files & directories --------------------------------------------------


def read_file(file_path, file_mode="r"):
    """
    Read a regular text file

    Keyword argument:
        file_path -- Path to the text file
    """
    assert isinstance(
        file_path, str
    ), "Error: file_path '{}' should be a string but is of type '{}' instead".format(
        file_path,
        type(file_path),
    )

    # Check file exists
    if not os.path.isfile(file_path):
        raise AsvLabError("file_not_exist", path=file_path)

    # Open file and read content
    try:
        with open(file_path, file_mode) as f:
            file_content = f.read()
    except IOError as e:
        raise AsvLabError("cannot_open_file", file=file_path, error=str(e))
    except Exception as e:
        raise AsvLabError("unknown_error_reading_file", file=file_path, error=str(e))

    return file_content


def read_json(file_path):
    """
    Read a json file

    Keyword argument:
        file_path -- Path to the json file
    """
    file_content = read_file(file_path)

    try:
        loaded_json = json.loads(file_content)
    except ValueError as e:
        raise AsvLabError("corrupted_json", ressource=file_path, error=str(e))

    return loaded_json


def read_yaml(file_):
    """
    Safely read a yaml file

    Keyword argument:
        file -- Path or stream to the yaml file
    """
    file_path = file_ if isinstance(file_, str) else file_.name
    file_content = read_file(file_) if isinstance(file_, str) else file_

    try:
        loaded_yaml = yaml.safe_load(file_content)
    except Exception as e:
        raise AsvLabError("corrupted_yaml", ressource=file_path, error=str(e))

    return loaded_yaml


def read_toml(file_path):
    """
    Safely read a toml file

    Keyword argument:
        file_path -- Path to the toml file
    """
    file_content = read_file(file_path)

    try:
        loaded_toml = toml.loads(file_content, _dict=OrderedDict)
    except Exception as e:
        raise AsvLabError("corrupted_toml", ressource=file_path, error=str(e))

    return loaded_toml


def read_document(file_path):
    """
    Read a parameter document, the parser being picked from the extension

    Keyword argument:
        file_path -- Path to a .json, .yml/.yaml or .toml file
    """
    ext = os.path.splitext(file_path)[1].lower()
    if ext == ".json":
        return read_json(file_path)
    elif ext in (".yml", ".yaml"):
        return read_yaml(file_path)
    elif ext == ".toml":
        return read_toml(file_path)
    raise AsvLabError("unsupported_document", path=file_path, ext=ext or "none")


def write_to_json(file_path, data, sort_keys=False, indent=None):
    """
    Write a dictionnary or a list to a json file

    Keyword argument:
        file_path -- Path to the output json file
        data -- The data to write (must be a dict or a list)
    """
    assert isinstance(data, dict) or isinstance(
        data, list
    ), "Error: data '{}' should be a dict or a list but is of type '{}' instead".format(
        data,
        type(data),
    )
    assert not os.path.isdir(file_path), (
        "Error: file_path '%s' point to a dir, it should be a file" % file_path
    )

    try:
        with open(file_path, "w") as f:
            json.dump(data, f, sort_keys=sort_keys, indent=indent)
    except IOError as e:
        raise AsvLabError("cannot_write_file", file=file_path, error=str(e))
    except Exception as e:
        raise AsvLabError("error_writing_file", file=file_path, error=str(e))


def read_csv(file_path, **kwargs):
    """
    Read a CSV table written by write_to_csv

    Keyword argument:
        file_path -- Path to the CSV file
    """
    if not os.path.isfile(file_path):
        raise AsvLabError("file_not_exist", path=file_path)

    try:
        return pd.read_csv(file_path, **kwargs)
    except Exception as e:
        raise AsvLabError("corrupted_csv", ressource=file_path, error=str(e))


def write_to_csv(file_path, data, columns=None):
    """
    Write a table to a CSV file with a fixed float format

    Keyword argument:
        file_path -- Path to the output CSV file
        data -- A DataFrame, a list of records or a 2-D array
        columns -- Column names when data is not a DataFrame
    """
    frame = data if isinstance(data, pd.DataFrame) else pd.DataFrame(data, columns=columns)

    try:
        frame.to_csv(file_path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    except IOError as e:
        raise AsvLabError("cannot_write_file", file=file_path, error=str(e))
    except Exception as e:
        raise AsvLabError("error_writing_file", file=file_path, error=str(e))


# Digests --------------------------------------------------------------


def sha256_file(file_path, chunk_size=1 << 20):
    """Return the hex sha256 digest of a file"""
    digest = hashlib.sha256()
    try:
        with open(file_path, "rb") as f:
            for chunk in iter(lambda: f.read(chunk_size), b""):
                digest.update(chunk)
    except IOError as e:
        raise AsvLabError("cannot_open_file", file=file_path, error=str(e))
    return digest.hexdigest()


def sha256_document(data):
    """Return the hex sha256 digest of the canonical JSON form of data"""
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


# Directories ----------------------------------------------------------


def mkdir(path, mode=0o0777, parents=False, force=False):
    """Create a directory with optional features

    If path refers to an existing path, nothing is done unless force is
    True.

    Keyword arguments:
        - path -- The directory to create
        - mode -- Numeric path mode to set
        - parents -- Make parent directories as needed
        - force -- Do not fail if the directory already exists

    """
    if os.path.exists(path) and not force:
        raise OSError(errno.EEXIST, m18n.g("folder_exists", path=path))

    try:
        if parents:
            os.makedirs(path, mode, exist_ok=force)
        else:
            os.mkdir(path, mode)
    except OSError:
        if not force or not os.path.isdir(path):
            raise
