"""JSON file formats for matrices, measures, random variables and partitions.

Matrices are stored dense and row-major as ``[re, im]`` pairs. Floats go
through Python's shortest round-trip representation, so every file re-parses
to exactly the value that was written. Files are written atomically (temp
file then rename) with sorted keys, making equal objects byte-identical on
disk.
"""

from __future__ import annotations

import json
import os
import tempfile
from typing import Any, Sequence

import numpy as np

from .errors import InvalidMatrix, ParseError, QprobError
from .povm import Povm, validate_povm
from .rv import QuantumRandomVariable
from .spaces import Filtration, PartitionSigmaAlgebra, SampleSpace, partition_from_lists


def matrix_to_obj(m: np.ndarray) -> dict:
    arr = np.asarray(m, dtype=np.complex128)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise InvalidMatrix(f"expected a square matrix, got shape {arr.shape}")
    entries = [[float(z.real), float(z.imag)] for z in arr.reshape(-1)]
    return {"dim": int(arr.shape[0]), "entries": entries}


def matrix_from_obj(obj: Any) -> np.ndarray:
    if not isinstance(obj, dict) or "dim" not in obj or "entries" not in obj:
        raise InvalidMatrix("matrix object needs 'dim' and 'entries'")
    d = int(obj["dim"])
    entries = obj["entries"]
    if not isinstance(entries, list) or len(entries) != d * d:
        raise InvalidMatrix(
            f"matrix of dimension {d} needs {d * d} entries, "
            f"got {len(entries) if isinstance(entries, list) else 'non-list'}")
    flat = np.empty(d * d, dtype=np.complex128)
    for k, pair in enumerate(entries):
        if not isinstance(pair, (list, tuple)) or len(pair) != 2:
            raise InvalidMatrix(f"entry {k} is not a [re, im] pair")
        flat[k] = complex(float(pair[0]), float(pair[1]))
    return flat.reshape(d, d)


def povm_to_obj(nu: Povm) -> dict:
    return {
        "space": list(nu.space.points),
        "dim": int(nu.dim),
        "effects": {x: matrix_to_obj(nu.effects[x]) for x in nu.space.points},
    }


def povm_from_obj(obj: Any) -> Povm:
    _require_keys(obj, ("space", "dim", "effects"), "POVM")
    space = SampleSpace(tuple(obj["space"]))
    effects = {}
    for x in space.points:
        if x not in obj["effects"]:
            raise InvalidMatrix(f"POVM object is missing the effect at {x!r}")
        effects[x] = matrix_from_obj(obj["effects"][x])
    nu = validate_povm(effects, space=space)
    if nu.dim != int(obj["dim"]):
        raise InvalidMatrix(
            f"declared dimension {obj['dim']} does not match effects ({nu.dim})")
    return nu


def qrv_to_obj(psi: QuantumRandomVariable) -> dict:
    return {
        "space": list(psi.space.points),
        "dim": int(psi.dim),
        "values": {x: matrix_to_obj(psi.values[x]) for x in psi.space.points},
    }


def qrv_from_obj(obj: Any) -> QuantumRandomVariable:
    _require_keys(obj, ("space", "dim", "values"), "random variable")
    space = SampleSpace(tuple(obj["space"]))
    values = {}
    for x in space.points:
        if x not in obj["values"]:
            raise InvalidMatrix(f"random variable is missing the value at {x!r}")
        values[x] = matrix_from_obj(obj["values"][x])
    psi = QuantumRandomVariable(space, values)
    if psi.dim != int(obj["dim"]):
        raise InvalidMatrix(
            f"declared dimension {obj['dim']} does not match values ({psi.dim})")
    return psi


def partition_to_obj(p: PartitionSigmaAlgebra) -> list:
    return [list(block) for block in p.blocks]


def partition_from_obj(obj: Any, space: SampleSpace) -> PartitionSigmaAlgebra:
    if not isinstance(obj, list):
        raise InvalidMatrix("partition object must be a list of lists of labels")
    return partition_from_lists(space, [list(b) for b in obj])


def filtration_to_obj(f: Filtration) -> list:
    return [partition_to_obj(stage) for stage in f.stages]


def filtration_from_obj(obj: Any, space: SampleSpace) -> Filtration:
    if not isinstance(obj, list):
        raise InvalidMatrix("filtration object must be a list of partitions")
    return Filtration(tuple(partition_from_obj(stage, space) for stage in obj))


def sequence_to_obj(seq: Sequence[QuantumRandomVariable]) -> dict:
    if not seq:
        raise InvalidMatrix("cannot serialize an empty sequence")
    space = seq[0].space
    return {
        "space": list(space.points),
        "dim": int(seq[0].dim),
        "terms": [
            {x: matrix_to_obj(term.values[x]) for x in space.points}
            for term in seq
        ],
    }


def sequence_from_obj(obj: Any) -> list[QuantumRandomVariable]:
    _require_keys(obj, ("space", "dim", "terms"), "sequence")
    space = SampleSpace(tuple(obj["space"]))
    out = []
    for k, term in enumerate(obj["terms"]):
        values = {}
        for x in space.points:
            if x not in term:
                raise InvalidMatrix(f"term {k} is missing the value at {x!r}")
            values[x] = matrix_from_obj(term[x])
        out.append(QuantumRandomVariable(space, values))
    if not out:
        raise InvalidMatrix("sequence file contains no terms")
    return out


def _require_keys(obj: Any, keys: tuple[str, ...], what: str) -> None:
    if not isinstance(obj, dict):
        raise InvalidMatrix(f"{what} object must be a JSON object")
    missing = [k for k in keys if k not in obj]
    if missing:
        raise InvalidMatrix(f"{what} object is missing keys {missing}")


def dump_json(path: str, obj: Any) -> None:
    """Serialize to a file atomically and deterministically."""
    text = json.dumps(obj, sort_keys=True, indent=2) + "\n"
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_json(path: str) -> Any:
    try:
        with open(path) as handle:
            return json.load(handle)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON ({exc})") from exc
