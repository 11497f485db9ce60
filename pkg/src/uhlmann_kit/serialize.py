"""JSON encoding helpers.

Complex matrices are stored as ``{"re": [[...]], "im": [[...]]}`` pairs of real
grids. Floats are written with Python's shortest round-trip repr, so a decoded
file reproduces every double exactly.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import InputError


def encode_matrix(a):
    a = np.asarray(a, dtype=complex)
    return {"re": a.real.tolist(), "im": a.imag.tolist()}


def decode_matrix(obj, name="matrix", n=None):
    if isinstance(obj, dict):
        if "re" not in obj:
            raise InputError(f"{name}: missing 're' grid")
        re = np.asarray(obj["re"], dtype=float)
        im = np.asarray(obj.get("im", np.zeros_like(re)), dtype=float)
    else:
        re = np.asarray(obj, dtype=float)
        im = np.zeros_like(re)
    if re.ndim != 2 or re.shape[0] != re.shape[1] or re.shape != im.shape:
        raise InputError(f"{name}: expected two equal n x n grids, got {re.shape} and {im.shape}")
    if n is not None and re.shape[0] != n:
        raise InputError(f"{name}: expected dimension {n}, got {re.shape[0]}")
    return re + 1j * im


def to_jsonable(obj):
    """Recursively convert numpy containers and scalars into JSON-ready values.

    Complex 2-D arrays become re/im grid pairs; real arrays become nested lists.
    """
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            if obj.ndim == 2:
                return encode_matrix(obj)
            return [to_jsonable(x) for x in obj]
        return obj.tolist()
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def dumps(obj) -> str:
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"
