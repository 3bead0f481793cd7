#
# coca3d.checkpoint.py
#
# Copyright (C) 2019 Diamond Light Source and Rosalind Franklin Institute
#
# Author: James Parkhurst
#
# This code is distributed under the GPLv3 license, a copy of
# which is included in the root directory of this package.
#
import hashlib
import logging
import os
import struct
import tempfile
import numpy as np
from collections import OrderedDict
from typing import Dict
from typing import Tuple


__all__ = [
    "MAGIC",
    "VERSION",
    "Record",
    "write",
    "read",
    "save",
    "load",
    "restore",
    "payload_hash",
    "frozen_hash",
]


# Get the logger
logger = logging.getLogger(__name__)


# The file header
MAGIC = b"C3CA"
VERSION = 1


# A record is the array and its frozen flag
Record = Tuple[np.ndarray, bool]


def write(filename: str, records: Dict[str, Record]):
    """
    Write the records to a checkpoint file

    The file is written to a temporary file in the same directory and
    then renamed so a reader never sees a partial checkpoint.

    Args:
        filename: The checkpoint filename
        records: The arrays and frozen flags keyed by name

    """
    directory = os.path.dirname(os.path.abspath(filename))
    handle, temp_filename = tempfile.mkstemp(
        prefix=".%s." % os.path.basename(filename), dir=directory
    )
    try:
        with os.fdopen(handle, "wb") as outfile:
            outfile.write(MAGIC)
            outfile.write(struct.pack("<II", VERSION, len(records)))
            for name, (array, frozen) in records.items():
                array = np.ascontiguousarray(array, dtype="<f8")
                encoded = name.encode("utf-8")
                outfile.write(struct.pack("<I", len(encoded)))
                outfile.write(encoded)
                outfile.write(struct.pack("<BI", int(bool(frozen)), array.ndim))
                outfile.write(struct.pack("<%dI" % array.ndim, *array.shape))
                outfile.write(array.tobytes())
        os.replace(temp_filename, filename)
    except BaseException:
        if os.path.exists(temp_filename):
            os.remove(temp_filename)
        raise


def read(filename: str) -> Dict[str, Record]:
    """
    Read the records from a checkpoint file

    Args:
        filename: The checkpoint filename

    Returns:
        The arrays and frozen flags keyed by name

    """

    def take(buffer, offset, size):
        if offset + size > len(buffer):
            raise RuntimeError("Truncated checkpoint file %s" % filename)
        return buffer[offset : offset + size], offset + size

    if not os.path.exists(filename):
        raise FileNotFoundError("Checkpoint not found: %s" % filename)
    with open(filename, "rb") as infile:
        buffer = infile.read()

    # Check the header
    magic, offset = take(buffer, 0, 4)
    if magic != MAGIC:
        raise RuntimeError("%s is not a checkpoint file" % filename)
    header, offset = take(buffer, offset, 8)
    version, count = struct.unpack("<II", header)
    if version != VERSION:
        raise RuntimeError("Unsupported checkpoint version %d" % version)

    # Read the records
    records: Dict[str, Record] = OrderedDict()
    for _ in range(count):
        data, offset = take(buffer, offset, 4)
        (length,) = struct.unpack("<I", data)
        data, offset = take(buffer, offset, length)
        name = data.decode("utf-8")
        data, offset = take(buffer, offset, 5)
        frozen, ndim = struct.unpack("<BI", data)
        data, offset = take(buffer, offset, 4 * ndim)
        shape = struct.unpack("<%dI" % ndim, data)
        data, offset = take(buffer, offset, 8 * int(np.prod(shape, dtype=np.int64)))
        array = np.frombuffer(data, dtype="<f8").astype(np.float64).reshape(shape)
        records[name] = (array, bool(frozen))
    if offset != len(buffer):
        raise RuntimeError("Trailing bytes in checkpoint file %s" % filename)
    return records


def save(filename: str, model, extra: Dict[str, Record] = None):
    """
    Save the parameters of a model, plus any extra records

    Args:
        filename: The checkpoint filename
        model: The module
        extra: Additional records (e.g. the optimizer state)

    """
    records: Dict[str, Record] = OrderedDict(
        (name, (p.data, p.frozen)) for name, p in model.parameters().items()
    )
    if extra:
        for name, record in extra.items():
            if name in records:
                raise RuntimeError("Record %s clashes with a parameter" % name)
            records[name] = record
    write(filename, records)
    logger.debug("Wrote %d records to %s" % (len(records), filename))


def load(filename: str) -> Dict[str, Record]:
    return read(filename)


def restore(model, records: Dict[str, Record]):
    """
    Copy the parameter values and frozen flags from the records into the
    model. Records which are not parameters are ignored.

    """
    parameters = model.parameters()
    missing = [name for name in parameters if name not in records]
    if missing:
        raise RuntimeError(
            "Checkpoint is missing parameters: %s" % ", ".join(missing[:5])
        )
    for name, parameter in parameters.items():
        array, frozen = records[name]
        if array.shape != parameter.shape:
            raise RuntimeError(
                "Shape mismatch for %s: %s != %s" % (name, array.shape, parameter.shape)
            )
        parameter.data[...] = array
        if frozen:
            parameter.freeze()


def payload_hash(arrays) -> str:
    """
    Hash the raw bytes of a sequence of (name, array) pairs

    """
    digest = hashlib.sha256()
    for name, array in arrays:
        digest.update(name.encode("utf-8"))
        digest.update(np.ascontiguousarray(array, dtype="<f8").tobytes())
    return digest.hexdigest()


def frozen_hash(model) -> str:
    """
    Returns:
        The hash of the payloads of every frozen parameter of the model

    """
    return payload_hash(
        (name, p.data) for name, p in model.parameters().items() if p.frozen
    )
