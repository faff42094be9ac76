"""The minimal operational model: systems, states, effects, quantum
operations in Kraus/Choi form, instruments, composition, Born rule.

A quantum operation is a completely positive trace-non-increasing map.
The canonical internal representation is the Kraus set; the Choi matrix
is computed on demand and cached. The Choi convention is row-major
double-ket vectorization, Choi = sum_k |K_k>><<K_k| on output (x) input.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from .linalg import (
    DEFAULT_TOL,
    DimensionMismatch,
    LinalgError,
    NotPositiveSemidefinite,
    as_matrix,
    check_hermitian,
    dagger,
    double_ket,
    eig_hermitian,
    haar_isometry,
    hs_norm,
    kron,
    unvec_double_ket,
)


class SystemMismatch(LinalgError):
    pass


class InvalidState(LinalgError):
    pass


class InvalidEffect(LinalgError):
    pass


class InvalidOperation(LinalgError):
    pass


class InvalidInstrument(LinalgError):
    pass


@dataclass(frozen=True)
class System:
    """A labeled finite-dimensional system; dim 1 is the trivial system."""

    label: str
    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise DimensionMismatch(f"system {self.label!r} has dim {self.dim} < 1")


TRIVIAL = System("I", 1)


def tensor_system(*systems: System) -> System:
    """Composite system; trivial factors are absorbed."""
    parts = [s for s in systems if s.dim != 1]
    if not parts:
        return TRIVIAL
    if len(parts) == 1:
        return parts[0]
    label = "*".join(s.label for s in parts)
    dim = int(np.prod([s.dim for s in parts]))
    return System(label, dim)


@dataclass(eq=False)
class State:
    """Positive sub-unit-trace operator on a system."""

    system: System
    matrix: np.ndarray

    def trace(self) -> float:
        return float(np.trace(self.matrix).real)


@dataclass(eq=False)
class Effect:
    """Operator E with 0 <= E <= I on a system."""

    system: System
    matrix: np.ndarray


def validate_state(s: State, tol: float = DEFAULT_TOL) -> None:
    m = as_matrix(s.matrix)
    if m.shape != (s.system.dim, s.system.dim):
        raise InvalidState(f"state matrix shape {m.shape} != system dim {s.system.dim}")
    vals, _ = eig_hermitian(m)
    if vals.size and vals[-1] < -tol:
        raise InvalidState(f"state not PSD: min eigenvalue {vals[-1]:.3e}")
    tr = float(np.trace(m).real)
    if tr < -tol or tr > 1 + tol:
        raise InvalidState(f"state trace {tr:.6f} outside [0, 1]")


def validate_effect(e: Effect, tol: float = DEFAULT_TOL) -> None:
    m = as_matrix(e.matrix)
    if m.shape != (e.system.dim, e.system.dim):
        raise InvalidEffect(f"effect matrix shape {m.shape} != system dim {e.system.dim}")
    vals, _ = eig_hermitian(m)
    if vals.size and vals[-1] < -tol:
        raise InvalidEffect(f"effect not PSD: min eigenvalue {vals[-1]:.3e}")
    if vals.size and vals[0] > 1 + tol:
        raise InvalidEffect(f"effect exceeds identity: max eigenvalue {vals[0]:.6f}")


def is_deterministic_state(s: State, tol: float = DEFAULT_TOL) -> bool:
    return abs(s.trace() - 1.0) <= tol


def is_deterministic_effect(e: Effect, tol: float = DEFAULT_TOL) -> bool:
    return hs_norm(e.matrix - np.eye(e.system.dim)) <= tol * e.system.dim


@dataclass(eq=False)
class QuantumOperation:
    """CP trace-non-increasing map, stored as a Kraus set."""

    input: System
    output: System
    kraus: tuple

    _choi_cache: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def from_kraus(cls, input: System, output: System, kraus, tol: float = DEFAULT_TOL):
        ks = tuple(as_matrix(k) for k in kraus)
        op = cls(input, output, ks)
        validate_operation(op, tol)
        return op

    @classmethod
    def from_choi(cls, input: System, output: System, choi, tol: float = DEFAULT_TOL):
        ks = choi_to_kraus(choi, output.dim, input.dim, tol)
        return cls(input, output, tuple(ks))

    @property
    def choi(self) -> np.ndarray:
        if self._choi_cache is None:
            self._choi_cache = kraus_to_choi(self)
        return self._choi_cache


def validate_operation(op: QuantumOperation, tol: float = DEFAULT_TOL) -> None:
    if not op.kraus:
        raise InvalidOperation("operation has no Kraus operators")
    din, dout = op.input.dim, op.output.dim
    for k in op.kraus:
        if k.shape != (dout, din):
            raise InvalidOperation(f"Kraus shape {k.shape} != ({dout}, {din})")
    total = sum(dagger(k) @ k for k in op.kraus)
    vals = np.linalg.eigvalsh(check_hermitian(total))
    if vals[-1] > 1 + tol:
        raise InvalidOperation(
            f"trace-non-increasing violated: max eigenvalue of sum K^dag K = {vals[-1]:.6f}"
        )


def is_deterministic_operation(op: QuantumOperation, tol: float = DEFAULT_TOL) -> bool:
    total = sum(dagger(k) @ k for k in op.kraus)
    return hs_norm(total - np.eye(op.input.dim)) <= tol * op.input.dim


@dataclass(eq=False)
class Instrument:
    """Outcome-indexed family of operations summing to trace-preserving."""

    input: System
    output: System
    operations: tuple
    labels: tuple

    @classmethod
    def from_operations(cls, operations, labels=None, tol: float = DEFAULT_TOL):
        ops = tuple(operations)
        if labels is None:
            labels = tuple(str(i) for i in range(len(ops)))
        inst = cls(ops[0].input, ops[0].output, ops, tuple(labels))
        validate_instrument(inst, tol)
        return inst


def validate_instrument(inst: Instrument, tol: float = DEFAULT_TOL) -> None:
    if not inst.operations:
        raise InvalidInstrument("instrument has no outcomes")
    if len(inst.labels) != len(inst.operations):
        raise InvalidInstrument("labels and operations differ in length")
    for op in inst.operations:
        if op.input != inst.input or op.output != inst.output:
            raise SystemMismatch("instrument outcomes act on different systems")
        validate_operation(op, tol)
    total = sum(dagger(k) @ k for op in inst.operations for k in op.kraus)
    if hs_norm(total - np.eye(inst.input.dim)) > tol * inst.input.dim:
        raise InvalidInstrument("instrument does not sum to a trace-preserving map")


def total_channel(inst: Instrument) -> QuantumOperation:
    """Outcome-erased channel: the Kraus union over all outcomes."""
    ks = tuple(k for op in inst.operations for k in op.kraus)
    return QuantumOperation(inst.input, inst.output, ks)


# ---------------------------------------------------------------------------
# core operations


def apply(op: QuantumOperation, rho: State) -> State:
    """Apply sum_k K rho K^dag; output trace never exceeds input trace."""
    if op.input != rho.system:
        raise SystemMismatch(
            f"operation expects {op.input.label!r} (dim {op.input.dim}), "
            f"state is on {rho.system.label!r} (dim {rho.system.dim})"
        )
    out = sum(k @ rho.matrix @ dagger(k) for k in op.kraus)
    return State(op.output, out)


def born_probability(rho: State) -> float:
    """Trace of the state, clamped onto [0, 1]."""
    return float(min(max(rho.trace(), 0.0), 1.0))


def probability_of_effect(e: Effect, rho: State) -> float:
    if e.system != rho.system:
        raise SystemMismatch("effect and state act on different systems")
    p = float(np.trace(e.matrix @ rho.matrix).real)
    return min(max(p, 0.0), 1.0)


def compose_seq(t2: QuantumOperation, t1: QuantumOperation) -> QuantumOperation:
    """t2 after t1; Kraus set is all products K2_j K1_k."""
    if t1.output != t2.input:
        raise SystemMismatch(
            f"cannot compose: first map outputs {t1.output.label!r} "
            f"(dim {t1.output.dim}), second expects {t2.input.label!r} "
            f"(dim {t2.input.dim})"
        )
    ks = tuple(k2 @ k1 for k2 in t2.kraus for k1 in t1.kraus)
    return QuantumOperation(t1.input, t2.output, ks)


def compose_par(t1: QuantumOperation, t2: QuantumOperation) -> QuantumOperation:
    """Parallel composition; Kraus set is all pairwise tensor products."""
    ks = tuple(kron(k1, k2) for k1 in t1.kraus for k2 in t2.kraus)
    return QuantumOperation(
        tensor_system(t1.input, t2.input), tensor_system(t1.output, t2.output), ks
    )


def compose_par_many(ops: list[QuantumOperation]) -> QuantumOperation:
    return reduce(compose_par, ops)


def kraus_to_choi(op: QuantumOperation) -> np.ndarray:
    """Choi matrix sum_k |K_k>><<K_k| on output (x) input."""
    d = op.output.dim * op.input.dim
    choi = np.zeros((d, d), dtype=complex)
    for k in op.kraus:
        v = double_ket(k)
        choi += np.outer(v, np.conj(v))
    return choi


def choi_to_kraus(choi, d_out: int, d_in: int, tol: float = DEFAULT_TOL) -> list[np.ndarray]:
    """Kraus operators from the scaled eigenvectors of a PSD Choi matrix."""
    choi = as_matrix(choi)
    if choi.shape != (d_out * d_in, d_out * d_in):
        raise DimensionMismatch(
            f"Choi shape {choi.shape} != ({d_out * d_in}, {d_out * d_in})"
        )
    vals, vecs = eig_hermitian(choi)
    if vals.size and vals[-1] < -tol:
        raise NotPositiveSemidefinite(f"Choi has eigenvalue {vals[-1]:.3e} < -tol")
    top = vals[0] if vals.size else 0.0
    cutoff = max(tol * max(top, 0.0), 0.0)
    ks = []
    for lam, v in zip(vals, vecs.T):
        if lam > cutoff:
            ks.append(np.sqrt(lam) * unvec_double_ket(v, d_out, d_in))
    if not ks:
        ks.append(np.zeros((d_out, d_in), dtype=complex))
    return ks


def is_atomic(op: QuantumOperation, tol: float = DEFAULT_TOL) -> bool:
    """True iff the Choi matrix is rank one (single Kraus operator)."""
    vals = np.linalg.eigvalsh(check_hermitian(op.choi))[::-1]
    if vals[0] <= 0:
        return False
    return bool(vals.size == 1 or vals[1] <= tol * vals[0])


# ---------------------------------------------------------------------------
# states and effects as transformations from/to the trivial system


def state_as_preparation(s: State, tol: float = DEFAULT_TOL) -> QuantumOperation:
    """The preparation op I -> A whose output on input 1 is the state."""
    vals, vecs = eig_hermitian(s.matrix)
    ks = []
    for lam, v in zip(vals, vecs.T):
        if lam > tol:
            ks.append(np.sqrt(lam) * v.reshape(-1, 1))
    if not ks:
        ks.append(np.zeros((s.system.dim, 1), dtype=complex))
    return QuantumOperation(TRIVIAL, s.system, tuple(ks))


def effect_as_measurement(e: Effect, tol: float = DEFAULT_TOL) -> QuantumOperation:
    """The observation op A -> I with Tr applied-output = Tr[E rho]."""
    vals, vecs = eig_hermitian(e.matrix)
    ks = []
    for lam, v in zip(vals, vecs.T):
        if lam > tol:
            ks.append(np.sqrt(lam) * np.conj(v).reshape(1, -1))
    if not ks:
        ks.append(np.zeros((1, e.system.dim), dtype=complex))
    return QuantumOperation(e.system, TRIVIAL, tuple(ks))


# ---------------------------------------------------------------------------
# stock channels and instruments


def identity_channel(system: System) -> QuantumOperation:
    return QuantumOperation(system, system, (np.eye(system.dim, dtype=complex),))


def unitary_channel(system: System, u: np.ndarray, out: System | None = None) -> QuantumOperation:
    u = as_matrix(u)
    out = out if out is not None else system
    if u.shape != (out.dim, system.dim):
        raise DimensionMismatch(f"unitary shape {u.shape} != ({out.dim}, {system.dim})")
    return QuantumOperation(system, out, (u,))


def weyl_operators(d: int) -> list[np.ndarray]:
    """The d^2 clock-and-shift unitaries X^a Z^b."""
    omega = np.exp(2j * np.pi / d)
    shift = np.zeros((d, d), dtype=complex)
    for j in range(d):
        shift[(j + 1) % d, j] = 1.0
    clock = np.diag(omega ** np.arange(d))
    xs = [np.linalg.matrix_power(shift, a) for a in range(d)]
    zs = [np.linalg.matrix_power(clock, b) for b in range(d)]
    return [x @ z for x in xs for z in zs]


def depolarizing_channel(system: System) -> QuantumOperation:
    """Completely depolarizing channel rho -> Tr[rho] I/d."""
    d = system.dim
    ks = tuple(w / d for w in weyl_operators(d))
    return QuantumOperation(system, system, ks)


def projective_instrument(system: System, projectors, tol: float = DEFAULT_TOL) -> Instrument:
    """Instrument of von Neumann updates rho -> P_i rho P_i."""
    ops = []
    for p in projectors:
        p = as_matrix(p)
        ops.append(QuantumOperation(system, system, (p,)))
    return Instrument.from_operations(ops, tol=tol)


def random_instrument(
    d_in: int,
    d_out: int,
    outcomes: int,
    kraus_per_outcome: int,
    rng: np.random.Generator,
) -> Instrument:
    """Random instrument from a Haar isometry into output (x) environment,
    with the environment basis partitioned across outcomes."""
    d_env = outcomes * kraus_per_outcome
    v = haar_isometry(d_in, d_out * d_env, rng)
    sys_in = System("A", d_in)
    sys_out = System("B", d_out)
    ops = []
    for i in range(outcomes):
        ks = []
        for k in range(kraus_per_outcome):
            e = i * kraus_per_outcome + k
            # rows of v are ordered (output, environment)
            ks.append(v.reshape(d_out, d_env, d_in)[:, e, :])
        ops.append(QuantumOperation(sys_in, sys_out, tuple(ks)))
    return Instrument.from_operations(ops)
