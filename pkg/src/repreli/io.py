"""File formats: EMB1 embedding matrices, CSV fallbacks, labels, score
tables and the model blob used to persist fitted mixtures and heads.

EMB1 layout (little-endian)::

    magic   4 bytes  b"EMB1"
    version u16      currently 1
    dtype   u8       0 = float32, 1 = float64
    rows    u64
    cols    u64
    payload rows * cols values, row-major
"""

from __future__ import annotations

import csv
import io as _io
import json
import os
import struct
from pathlib import Path

import numpy as np

from .downstream import LinearHead
from .errors import CorruptFile, FormatError, InvalidData
from .mixture import GaussianMixture, VmfMixture

EMB_MAGIC = b"EMB1"
EMB_VERSION = 1
_HEADER = struct.Struct("<4sHBQQ")
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}

BLOB_MAGIC = b"RLMB"
BLOB_VERSION = 1
_BLOB_HEADER = struct.Struct("<4sHI")

TEXT_SUFFIXES = {".csv", ".txt"}


def write_embeddings(matrix, path, dtype: str = "f8") -> None:
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {m.shape}")
    if Path(path).suffix.lower() in TEXT_SUFFIXES:
        with open(path, "w", newline="") as f:
            for row in m:
                f.write(",".join(repr(float(v)) for v in row) + "\n")
        return
    code = {"f4": 0, "f8": 1}[dtype]
    with open(path, "wb") as f:
        f.write(_HEADER.pack(EMB_MAGIC, EMB_VERSION, code, m.shape[0], m.shape[1]))
        f.write(np.ascontiguousarray(m, dtype=_DTYPES[code]).tobytes())


def read_embeddings(path) -> np.ndarray:
    """Read an EMB1 file, or a headerless comma-separated file by suffix."""
    if Path(path).suffix.lower() in TEXT_SUFFIXES:
        return _read_csv_matrix(path)
    with open(path, "rb") as f:
        head = f.read(_HEADER.size)
        if len(head) < 4 or head[:4] != EMB_MAGIC:
            raise FormatError(f"{path}: bad magic {head[:4]!r}, expected {EMB_MAGIC!r}")
        if len(head) < _HEADER.size:
            raise CorruptFile(f"{path}: truncated header")
        _, version, code, rows, cols = _HEADER.unpack(head)
        if version != EMB_VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        if code not in _DTYPES:
            raise FormatError(f"{path}: unknown dtype code {code}")
        dt = _DTYPES[code]
        expected = rows * cols * dt.itemsize
        payload = f.read(expected + 1)
    if len(payload) != expected:
        raise CorruptFile(f"{path}: payload has {len(payload)} bytes, header implies {expected}")
    data = np.frombuffer(payload, dtype=dt).astype(np.float64).reshape(rows, cols)
    _check_finite(data, path)
    return data


def _check_finite(data: np.ndarray, path) -> None:
    if not np.all(np.isfinite(data)):
        raise InvalidData(f"{path}: payload contains NaN or Inf")


def _read_csv_matrix(path) -> np.ndarray:
    rows = []
    with open(path, newline="") as f:
        for lineno, rec in enumerate(csv.reader(f), 1):
            if not rec or all(not c.strip() for c in rec):
                continue
            try:
                rows.append([float(c) for c in rec])
            except ValueError:
                raise FormatError(f"{path}:{lineno}: non-numeric field") from None
    if not rows:
        raise FormatError(f"{path}: no data rows")
    if any(len(r) != len(rows[0]) for r in rows):
        raise FormatError(f"{path}: ragged rows")
    data = np.array(rows, dtype=np.float64)
    _check_finite(data, path)
    return data


def read_labels(path) -> np.ndarray:
    vals = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                vals.append(int(line))
            except ValueError:
                raise FormatError(f"{path}:{lineno}: label {line!r} is not an integer") from None
    return np.array(vals, dtype=np.int64)


def write_labels(labels, path) -> None:
    with open(path, "w") as f:
        f.writelines(f"{int(v)}\n" for v in labels)


def write_table(path, header, rows) -> None:
    """CSV with a fixed header; ``path=None`` or ``"-"`` returns the text instead."""
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    text = buf.getvalue()
    if path in (None, "-"):
        return text
    with open(path, "w", newline="") as f:
        f.write(text)
    return text


def read_table(path) -> list:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def fmt(x: float) -> str:
    return repr(float(x))


# -- model blobs -------------------------------------------------------------

def _model_arrays(model):
    if isinstance(model, GaussianMixture):
        return "gmm", {}, {"weights": model.weights, "means": model.means, "variances": model.variances}
    if isinstance(model, VmfMixture):
        return "vmf", {}, {"weights": model.weights, "directions": model.directions,
                           "concentrations": model.concentrations}
    if isinstance(model, LinearHead):
        return "head", {"member": int(model.member)}, {"weight": model.weight, "bias": model.bias}
    raise TypeError(f"cannot serialize {type(model).__name__}")


def save_models(models, path) -> None:
    """Write a list of mixtures / heads as one versioned binary blob."""
    entries, payload = [], []
    for model in models:
        kind, extra, arrays = _model_arrays(model)
        entries.append({"kind": kind, **extra,
                        "arrays": [[name, list(np.shape(a))] for name, a in arrays.items()]})
        payload.extend(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays.values())
    meta = json.dumps({"models": entries}, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(_BLOB_HEADER.pack(BLOB_MAGIC, BLOB_VERSION, len(meta)))
        f.write(meta)
        for chunk in payload:
            f.write(chunk)


def load_models(path) -> list:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _BLOB_HEADER.size or raw[:4] != BLOB_MAGIC:
        raise FormatError(f"{path}: not a model blob")
    _, version, meta_len = _BLOB_HEADER.unpack_from(raw)
    if version != BLOB_VERSION:
        raise FormatError(f"{path}: unsupported blob version {version}")
    start = _BLOB_HEADER.size
    try:
        meta = json.loads(raw[start:start + meta_len])
    except ValueError:
        raise CorruptFile(f"{path}: unreadable blob metadata") from None
    offset = start + meta_len
    models = []
    for entry in meta["models"]:
        arrays = {}
        for name, shape in entry["arrays"]:
            size = int(np.prod(shape)) * 8
            if offset + size > len(raw):
                raise CorruptFile(f"{path}: truncated blob payload")
            arrays[name] = np.frombuffer(raw, dtype="<f8", count=size // 8, offset=offset).reshape(shape).copy()
            offset += size
        kind = entry["kind"]
        if kind == "gmm":
            models.append(GaussianMixture(arrays["weights"], arrays["means"], arrays["variances"]))
        elif kind == "vmf":
            models.append(VmfMixture(arrays["weights"], arrays["directions"], arrays["concentrations"]))
        elif kind == "head":
            models.append(LinearHead(arrays["weight"], arrays["bias"], entry.get("member", 0)))
        else:
            raise FormatError(f"{path}: unknown model kind {kind!r}")
    if offset != len(raw):
        raise CorruptFile(f"{path}: {len(raw) - offset} trailing bytes")
    return models


def ensure_dir(path) -> Path:
    p = Path(path)
    os.makedirs(p, exist_ok=True)
    return p
