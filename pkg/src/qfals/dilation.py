"""Constructive purification and unitary realisation.

Every construction here is deterministic: isometry completions use
Gram-Schmidt against standard basis vectors in index order, and extracted
isometries are phase-canonicalized, so identical inputs give identical
outputs across runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import (
    DEFAULT_TOL,
    DimensionMismatch,
    LinalgError,
    as_matrix,
    dagger,
    double_ket,
    eig_hermitian,
    hs_norm,
    kron,
    partial_trace,
    unvec_double_ket,
)
from .ops import (
    Effect,
    Instrument,
    QuantumOperation,
    State,
    System,
    tensor_system,
)


class NotIsometry(LinalgError):
    pass


class NotMaxEntangled(LinalgError):
    pass


class NotRankOne(LinalgError):
    pass


@dataclass(eq=False)
class PurificationResult:
    """Rank-one state on system (x) environment whose marginal over the
    environment is the purified state."""

    pure_state: State
    environment: System
    isometry_used: np.ndarray


@dataclass(eq=False)
class DilationResult:
    """Unitary realisation of an instrument: interaction unitary, pure
    ancilla, and the projective measurement on the output environment."""

    unitary: np.ndarray
    system_in: System
    system_out: System
    ancilla: System
    environment: System
    ancilla_state: State
    pvm: list
    block_map: list  # (outcome index, kraus index) per environment basis slot


def check_isometry(v: np.ndarray, tol: float = DEFAULT_TOL) -> np.ndarray:
    v = as_matrix(v)
    if v.shape[0] < v.shape[1]:
        raise NotIsometry(f"matrix {v.shape} has more columns than rows")
    gram = dagger(v) @ v
    if hs_norm(gram - np.eye(v.shape[1])) > tol * max(1.0, v.shape[1]):
        raise NotIsometry("V^dag V != I within tolerance")
    return v


def canonical_phase(m: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Rotate a global phase so the first significant entry is positive real."""
    flat = m.reshape(-1)
    mags = np.abs(flat)
    if mags.max() <= tol:
        return m
    lead = flat[int(np.argmax(mags > mags.max() * 1e-8))]
    return m * (np.conj(lead) / abs(lead))


def max_entangled_from_isometry(v: np.ndarray, tol: float = DEFAULT_TOL) -> State:
    """Unit-trace rank-one state |V>><<V| / d_B for an isometry V: B -> A.

    The double-ket of an isometry has squared norm d_B; dividing by d_B
    keeps stored states unit trace so probabilities stay in [0, 1].
    """
    v = check_isometry(v, tol)
    d_a, d_b = v.shape
    vec = double_ket(v)
    rho = np.outer(vec, np.conj(vec)) / d_b
    sys_ab = tensor_system(System("A", d_a), System("B", d_b))
    state = State(sys_ab, rho)
    marg_b = partial_trace(rho, [d_a, d_b], keep=[1])
    if hs_norm(marg_b - np.eye(d_b) / d_b) > tol * d_b:
        raise NotMaxEntangled("marginal on the small factor is not maximally mixed")
    return state


def isometry_from_max_entangled(s: State, d_a: int, d_b: int, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Recover V with V^dag V = I from a maximally entangled state.

    Inverse of max_entangled_from_isometry up to global phase; the output
    is phase-canonicalized so round trips are exact equalities.
    """
    m = as_matrix(s.matrix)
    if m.shape != (d_a * d_b, d_a * d_b):
        raise DimensionMismatch(f"state shape {m.shape} != ({d_a * d_b},)^2")
    vals, vecs = eig_hermitian(m)
    if vals.size > 1 and vals[1] > tol * max(vals[0], 1e-300):
        raise NotRankOne(f"state is not rank one: second eigenvalue {vals[1]:.3e}")
    psi = vecs[:, 0]
    w = unvec_double_ket(psi, d_a, d_b)
    # a unit double-ket rescales to an isometry by sqrt(d_b)
    v = np.sqrt(d_b) * w / np.linalg.norm(psi)
    gram = dagger(v) @ v
    if hs_norm(gram - np.eye(d_b)) > tol * d_b:
        raise NotMaxEntangled("state does not correspond to an isometry")
    return canonical_phase(v)


def purify(rho: State, d_env: int | None = None, tol: float = DEFAULT_TOL) -> PurificationResult:
    """Rank-one state on A (x) E with marginal over E equal to rho.

    The construction stacks the spectral decomposition: with rho =
    sum_k lam_k v_k v_k^dag, the purification is sum_k sqrt(lam_k)
    v_k (x) e_k, realized as (I (x) W) applied to the double-ket of
    rho^(1/2) for the row-selection map W[k, :] = v_k^T. Any d_env >=
    rank(rho) is accepted; the default is d_env = dim(A).
    """
    d_a = rho.system.dim
    if abs(rho.trace() - 1.0) > tol:
        raise LinalgError("purification requires a deterministic (unit-trace) state")
    d_env = d_a if d_env is None else int(d_env)
    vals, vecs = eig_hermitian(rho.matrix)
    rank = int(np.sum(vals > tol))
    if d_env < rank:
        raise DimensionMismatch(f"environment dim {d_env} < state rank {rank}")
    # W maps the purifying factor into E; isometric on the (conjugate)
    # support of rho, which is all Eq.-level freedom the marginal needs
    w = np.zeros((d_env, d_a), dtype=complex)
    for k in range(rank):
        w[k, :] = vecs[:, k]
    m = np.zeros((d_a, d_env), dtype=complex)
    for k in range(rank):
        m[:, k] = np.sqrt(max(vals[k], 0.0)) * vecs[:, k]
    vec = double_ket(m)
    env = System("E", d_env)
    pure = State(tensor_system(rho.system, env), np.outer(vec, np.conj(vec)))
    return PurificationResult(pure_state=pure, environment=env, isometry_used=w)


def complete_isometry(v: np.ndarray) -> np.ndarray:
    """Extend isometry columns to a unitary by Gram-Schmidt completion.

    Candidate columns are standard basis vectors taken in index order, so
    the completion is deterministic.
    """
    v = as_matrix(v)
    n, k = v.shape
    if k > n:
        raise DimensionMismatch("cannot complete: more columns than rows")
    cols = [v[:, j] for j in range(k)]
    for b in range(n):
        if len(cols) == n:
            break
        cand = np.zeros(n, dtype=complex)
        cand[b] = 1.0
        for c in cols:
            cand = cand - c * np.vdot(c, cand)
        norm = np.linalg.norm(cand)
        if norm > 1e-7:
            cand = cand / norm
            # second pass for orthogonality at working precision
            for c in cols:
                cand = cand - c * np.vdot(c, cand)
            cols.append(cand / np.linalg.norm(cand))
    if len(cols) != n:
        raise LinalgError("isometry completion failed to find a full basis")
    return np.column_stack(cols)


def stinespring_dilate(inst: Instrument, tol: float = DEFAULT_TOL) -> DilationResult:
    """Realize an instrument as U-interaction + projective readout.

    All Kraus operators K_{i,k} are stacked into an isometry A -> B (x) E
    with one environment slot per (outcome, kraus) pair; the isometry is
    completed to a unitary on A (x) F for the minimal ancilla F that makes
    the matrix square; the PVM elements project onto the outcome blocks
    of E. Padding slots of E (required when dimensions force a larger
    square) are folded into the last outcome's projector; they are never
    reached from the dilation's own ancilla state.
    """
    d_a, d_b = inst.input.dim, inst.output.dim
    block_map = [
        (i, k) for i, op in enumerate(inst.operations) for k in range(len(op.kraus))
    ]
    n_slots = len(block_map)
    # minimal environment dim >= n_slots with d_a | d_b * d_env
    d_env = n_slots
    while (d_b * d_env) % d_a != 0:
        d_env += 1
    d_anc = (d_b * d_env) // d_a

    w = np.zeros((d_b * d_env, d_a), dtype=complex)
    flat = [k for op in inst.operations for k in op.kraus]
    for slot, kmat in enumerate(flat):
        for b in range(d_b):
            # rows ordered (output, environment)
            w[b * d_env + slot, :] = kmat[b, :]
    gram = dagger(w) @ w
    if hs_norm(gram - np.eye(d_a)) > tol * d_a:
        raise NotIsometry("instrument Kraus stack is not isometric (not trace-preserving)")

    # embed the prescribed columns at ancilla slot 0: input index a*d_anc + 0
    u0 = np.zeros((d_b * d_env, d_a * d_anc), dtype=complex)
    for a in range(d_a):
        u0[:, a * d_anc] = w[:, a]
    # complete the remaining columns deterministically
    prescribed = [a * d_anc for a in range(d_a)]
    free = [j for j in range(d_a * d_anc) if j not in prescribed]
    full = complete_isometry(u0[:, prescribed])
    extra = full[:, d_a:]
    for idx, j in enumerate(free):
        u0[:, j] = extra[:, idx]

    anc = System("F", d_anc)
    env = System("E", d_env)
    sigma = np.zeros((d_anc, d_anc), dtype=complex)
    sigma[0, 0] = 1.0
    projectors = [np.zeros((d_env, d_env), dtype=complex) for _ in inst.operations]
    for slot, (out_i, _) in enumerate(block_map):
        projectors[out_i][slot, slot] = 1.0
    for slot in range(n_slots, d_env):
        projectors[-1][slot, slot] = 1.0
    pvm = [Effect(env, p) for p in projectors]

    return DilationResult(
        unitary=u0,
        system_in=inst.input,
        system_out=inst.output,
        ancilla=anc,
        environment=env,
        ancilla_state=State(anc, sigma),
        pvm=pvm,
        block_map=block_map,
    )


def instrument_from_dilation(
    d: DilationResult,
    pvm: list | None = None,
    tol: float = DEFAULT_TOL,
) -> Instrument:
    """Evaluate T_i(rho) = Tr_E[U (rho (x) sigma) U^dag (I_B (x) Z_i)].

    The formula is applied verbatim to the matrix-unit basis of input
    operators, assembling each outcome's Choi matrix. Passing a coarser
    ``pvm`` (sums of the original projectors) yields the correspondingly
    coarse-grained instrument.
    """
    pvm = list(d.pvm) if pvm is None else list(pvm)
    d_a, d_b = d.system_in.dim, d.system_out.dim
    d_anc, d_env = d.ancilla.dim, d.environment.dim
    u = as_matrix(d.unitary)
    if u.shape != (d_b * d_env, d_a * d_anc):
        raise DimensionMismatch("unitary shape inconsistent with declared systems")
    sigma = d.ancilla_state.matrix

    def outcome_map(x: np.ndarray, z: np.ndarray) -> np.ndarray:
        big = u @ kron(x, sigma) @ dagger(u) @ kron(np.eye(d_b), z)
        return partial_trace(big, [d_b, d_env], keep=[0])

    ops = []
    for z in pvm:
        zm = z.matrix if isinstance(z, Effect) else as_matrix(z)
        choi = np.zeros((d_b * d_a, d_b * d_a), dtype=complex)
        for a in range(d_a):
            for b in range(d_a):
                unit = np.zeros((d_a, d_a), dtype=complex)
                unit[a, b] = 1.0
                t_unit = outcome_map(unit, zm)
                choi += kron(t_unit, unit)
        ops.append(QuantumOperation.from_choi(d.system_in, d.system_out, choi, tol))
    return Instrument.from_operations(ops, tol=tol)
