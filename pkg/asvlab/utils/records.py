"""Binary matrix records

A records file is a sequence of records, each made of a fixed header
followed by the row-major little-endian matrix values::

    magic (8 bytes) | version (u32) | rows (u32) | cols (u32) | values

The dataset files hold a single float32 record, checkpoints hold one
float64 record per named tensor.
"""

import logging

import numpy as np

from asvlab.core import AsvLabError, DatasetFormatError

logger = logging.getLogger("asvlab.utils.records")

RECORD_VERSION = 1

HEADER = np.dtype(
    [("magic", "S8"), ("version", "<u4"), ("rows", "<u4"), ("cols", "<u4")]
)


def encode_record(matrix, magic, dtype):
    """Return the bytes of one record

    Keyword arguments:
        - matrix -- A 2-D array, or anything numpy can view as one
        - magic -- The 8 bytes identifying the file kind
        - dtype -- The little-endian value type, '<f4' or '<f8'

    """
    assert len(magic) == 8, "magic must be 8 bytes long"
    values = np.asarray(matrix)
    if values.ndim == 1:
        values = values.reshape(1, -1)
    elif values.ndim == 0:
        values = values.reshape(1, 1)
    elif values.ndim > 2:
        values = values.reshape(values.shape[0], -1)

    header = np.zeros((), dtype=HEADER)
    header["magic"] = magic
    header["version"] = RECORD_VERSION
    header["rows"], header["cols"] = values.shape
    return header.tobytes() + np.ascontiguousarray(values, dtype=dtype).tobytes()


def write_records(file_path, matrices, magic, dtype):
    """Write a list of matrices as consecutive records"""
    try:
        with open(file_path, "wb") as f:
            for matrix in matrices:
                f.write(encode_record(matrix, magic, dtype))
    except IOError as e:
        raise AsvLabError("cannot_write_file", file=file_path, error=str(e))


def read_records(file_path, magic, dtype, count=None):
    """Read every record of a file

    Keyword arguments:
        - file_path -- The file to decode
        - magic -- The expected magic bytes
        - dtype -- The expected value type
        - count -- The expected number of records, if known

    Returns:
        A list of 2-D arrays

    """
    try:
        with open(file_path, "rb") as f:
            blob = f.read()
    except FileNotFoundError:
        raise AsvLabError("file_not_exist", path=file_path)
    except IOError as e:
        raise AsvLabError("cannot_open_file", file=file_path, error=str(e))

    itemsize = np.dtype(dtype).itemsize
    records = []
    offset = 0
    while offset < len(blob):
        if len(blob) - offset < HEADER.itemsize:
            raise DatasetFormatError(
                "records_truncated", path=file_path, offset=offset
            )
        header = np.frombuffer(blob, dtype=HEADER, count=1, offset=offset)[0]
        # numpy drops the trailing NUL bytes of "S" fields
        if bytes(header["magic"]) != magic.rstrip(b"\0"):
            raise DatasetFormatError(
                "records_bad_magic",
                path=file_path,
                found=header["magic"].decode("latin-1"),
                expected=magic.rstrip(b"\0").decode("latin-1"),
            )
        if header["version"] != RECORD_VERSION:
            raise DatasetFormatError(
                "records_bad_version",
                path=file_path,
                found=int(header["version"]),
                expected=RECORD_VERSION,
            )
        rows, cols = int(header["rows"]), int(header["cols"])
        offset += HEADER.itemsize
        size = rows * cols * itemsize
        if len(blob) - offset < size:
            raise DatasetFormatError(
                "records_truncated", path=file_path, offset=offset
            )
        values = np.frombuffer(blob, dtype=dtype, count=rows * cols, offset=offset)
        records.append(values.reshape(rows, cols).copy())
        offset += size

    if count is not None and len(records) != count:
        raise DatasetFormatError(
            "records_bad_count", path=file_path, found=len(records), expected=count
        )
    logger.debug("read %d record(s) from %s", len(records), file_path)
    return records
