"""JSON documents for every set type and for certificates.

Matrices are nested lists with an explicit ``shape`` field so that empty
arrays (zero generators, zero constraints) survive the round trip. Floats are
written with ``repr`` precision, which is exact for finite doubles.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .exceptions import ShapeError
from .sets import (
    ConstrainedMatrixZonotope,
    ConstrainedZonotope,
    InclusionCertificate,
    MatrixInterval,
    MatrixZonotope,
    Polytope,
    Zonotope,
)


def array_to_doc(a):
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ShapeError("only finite arrays can be serialized")
    return {"shape": list(a.shape), "data": a.tolist()}


def array_from_doc(doc):
    shape = tuple(doc["shape"])
    data = np.asarray(doc["data"], dtype=float)
    return data.reshape(shape)


_FIELDS = {
    Zonotope: ("center", "generators"),
    ConstrainedZonotope: ("generators", "center", "con_A", "con_b"),
    MatrixZonotope: ("center", "generators"),
    ConstrainedMatrixZonotope: ("center", "generators", "con_A", "con_B"),
    MatrixInterval: ("lower", "upper"),
    Polytope: ("H", "h"),
    InclusionCertificate: ("Gamma", "L", "P"),
}
_BY_NAME = {cls.__name__: cls for cls in _FIELDS}


def register(cls, fields):
    """Make an additional array-field dataclass serializable."""
    _FIELDS[cls] = tuple(fields)
    _BY_NAME[cls.__name__] = cls


def to_dict(obj):
    cls = type(obj)
    if cls not in _FIELDS:
        raise TypeError(f"cannot serialize {cls.__name__}")
    doc = {"type": cls.__name__}
    for name in _FIELDS[cls]:
        doc[name] = array_to_doc(getattr(obj, name))
    return doc


def from_dict(doc):
    try:
        cls = _BY_NAME[doc["type"]]
    except KeyError as exc:
        raise TypeError(f"unknown document type {doc.get('type')!r}") from exc
    return cls(**{name: array_from_doc(doc[name]) for name in _FIELDS[cls]})


def dumps(obj, **kwargs):
    return json.dumps(to_dict(obj), **kwargs)


def loads(text):
    return from_dict(json.loads(text))


def save(obj, path):
    Path(path).write_text(dumps(obj, indent=1))


def load(path):
    return loads(Path(path).read_text())
