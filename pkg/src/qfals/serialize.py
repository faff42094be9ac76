"""JSON wire formats used across the toolkit.

Matrices are serialized as {"rows": n, "cols": m, "data": [[re, im], ...]}
in row-major order. Python's json round-trips floats exactly, so loads
after dumps reproduce matrices bit for bit.
"""

from __future__ import annotations

import json

import numpy as np

from .linalg import DEFAULT_TOL, LinalgError, as_matrix
from .ops import (
    Effect,
    Instrument,
    QuantumOperation,
    State,
    System,
    validate_effect,
    validate_instrument,
    validate_operation,
    validate_state,
)


class FormatError(LinalgError):
    pass


def matrix_to_json(m: np.ndarray) -> dict:
    m = as_matrix(m)
    return {
        "rows": int(m.shape[0]),
        "cols": int(m.shape[1]),
        "data": [[float(z.real), float(z.imag)] for z in m.reshape(-1)],
    }


def matrix_from_json(obj: dict) -> np.ndarray:
    try:
        rows, cols = int(obj["rows"]), int(obj["cols"])
        data = obj["data"]
    except (KeyError, TypeError) as exc:
        raise FormatError(f"malformed matrix object: {exc}") from exc
    if len(data) != rows * cols:
        raise FormatError(f"matrix data length {len(data)} != rows*cols {rows * cols}")
    flat = np.array([complex(re, im) for re, im in data], dtype=complex)
    return flat.reshape(rows, cols)


def system_to_json(s: System) -> dict:
    return {"label": s.label, "dim": s.dim}


def system_from_json(obj: dict) -> System:
    try:
        return System(str(obj["label"]), int(obj["dim"]))
    except (KeyError, TypeError) as exc:
        raise FormatError(f"malformed system object: {exc}") from exc


def state_to_json(s: State) -> dict:
    return {"system": system_to_json(s.system), "matrix": matrix_to_json(s.matrix)}


def state_from_json(obj: dict, tol: float = DEFAULT_TOL) -> State:
    s = State(system_from_json(obj["system"]), matrix_from_json(obj["matrix"]))
    validate_state(s, tol)
    return s


def effect_to_json(e: Effect) -> dict:
    return {"system": system_to_json(e.system), "matrix": matrix_to_json(e.matrix)}


def effect_from_json(obj: dict, tol: float = DEFAULT_TOL) -> Effect:
    e = Effect(system_from_json(obj["system"]), matrix_from_json(obj["matrix"]))
    validate_effect(e, tol)
    return e


def operation_to_json(op: QuantumOperation) -> dict:
    return {
        "input": system_to_json(op.input),
        "output": system_to_json(op.output),
        "kraus": [matrix_to_json(k) for k in op.kraus],
    }


def operation_from_json(obj: dict, tol: float = DEFAULT_TOL) -> QuantumOperation:
    try:
        op = QuantumOperation(
            system_from_json(obj["input"]),
            system_from_json(obj["output"]),
            tuple(matrix_from_json(k) for k in obj["kraus"]),
        )
    except (KeyError, TypeError) as exc:
        raise FormatError(f"malformed operation object: {exc}") from exc
    validate_operation(op, tol)
    return op


def instrument_to_json(inst: Instrument) -> dict:
    return {
        "input": system_to_json(inst.input),
        "output": system_to_json(inst.output),
        "outcomes": [
            {"label": label, "kraus": [matrix_to_json(k) for k in op.kraus]}
            for label, op in zip(inst.labels, inst.operations)
        ],
    }


def instrument_from_json(obj: dict, tol: float = DEFAULT_TOL) -> Instrument:
    try:
        sys_in = system_from_json(obj["input"])
        sys_out = system_from_json(obj["output"])
        outcomes = obj["outcomes"]
    except (KeyError, TypeError) as exc:
        raise FormatError(f"malformed instrument object: {exc}") from exc
    ops, labels = [], []
    for i, entry in enumerate(outcomes):
        labels.append(str(entry.get("label", i)))
        ops.append(
            QuantumOperation(
                sys_in, sys_out, tuple(matrix_from_json(k) for k in entry["kraus"])
            )
        )
    inst = Instrument(sys_in, sys_out, tuple(ops), tuple(labels))
    validate_instrument(inst, tol)
    return inst


def kraus_list_from_json(obj: dict) -> list[np.ndarray]:
    """Bare Kraus payload {"kraus": [matrix, ...]} for circuit channel files."""
    try:
        return [matrix_from_json(k) for k in obj["kraus"]]
    except (KeyError, TypeError) as exc:
        raise FormatError(f"malformed kraus payload: {exc}") from exc


def dump(obj: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def load(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
