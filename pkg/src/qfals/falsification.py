"""Falsification-test calculus for state hypotheses.

A falsification test is a binary observation test {F, I - F}: the
falsifier F has zero probability on every state satisfying the
hypothesis, so a click on F refutes it. Hypotheses are represented as
families of states exposing sampling, spanning sets and analytic
averages. Two procedures decide whether a nonzero falsifier exists:

* the average-state witness: if the family average is full rank, any
  PSD effect orthogonal to the family is zero, so no falsifier exists;
* an alternating-projection (Dykstra) search between the PSD cone and
  the affine slice {F orthogonal to the family span, Tr F = 1}, which
  either converges to an explicit falsifier or reports the residual.

Haar averages use the normalized first-moment identity: twirling one
tensor factor replaces it by I/d times the partial trace over it. An
unnormalized convention would differ by the factor d.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product as iter_product

import numpy as np

from .linalg import (
    DEFAULT_TOL,
    DimensionMismatch,
    LinalgError,
    Subspace,
    dagger,
    eig_hermitian,
    haar_isometry,
    haar_unitary,
    hs_norm,
    kron,
    partial_trace,
    permute_factors,
    random_pure,
    support_projector,
)
from .ops import (
    Effect,
    State,
    System,
    probability_of_effect,
    tensor_system,
    validate_effect,
)
from .dilation import purify

TWIRL_NOTE = (
    "averages use the normalized Haar first moment (I/d on the twirled "
    "factor); the unnormalized convention differs by the factor d"
)

NCOPY_NOTE = (
    "single-copy purity admits no falsifier, but the N-copy family average "
    "has a nontrivial kernel and the search returns a nonzero falsifier "
    "(the antisymmetric projector for two qubit copies); under the falsifier "
    "definition used here, N-copy purity is falsifiable even though "
    "single-copy purity is not"
)


class NoEffectiveFalsifier(LinalgError):
    pass


class NoAnalyticForm(LinalgError):
    pass


class SpanConstructionError(LinalgError):
    pass


@dataclass(eq=False)
class FalsificationTest:
    """Binary observation test {F, I - F}; F is the falsifier."""

    falsifier: Effect
    inconclusive: Effect
    hypothesis: str = ""

    @classmethod
    def from_falsifier(cls, f: Effect, hypothesis: str = "", tol: float = DEFAULT_TOL):
        validate_effect(f, tol)
        if hs_norm(f.matrix) <= tol:
            raise NoEffectiveFalsifier("falsifier is numerically zero")
        rest = Effect(f.system, np.eye(f.system.dim) - f.matrix)
        validate_effect(rest, tol)
        return cls(falsifier=f, inconclusive=rest, hypothesis=hypothesis)


def support_falsifier(k: Subspace, system: System | None = None, tol: float = DEFAULT_TOL) -> FalsificationTest:
    """Optimal falsifier for "the state is supported in K": the projector
    onto the orthogonal complement of K."""
    k.validate()
    if system is None:
        system = System("A", k.ambient_dim)
    if system.dim != k.ambient_dim:
        raise DimensionMismatch("system dim does not match subspace ambient dim")
    if k.dim >= k.ambient_dim:
        raise NoEffectiveFalsifier(
            "support hypothesis covers the full space; only the inconclusive test exists"
        )
    p_k = k.projector()
    f = Effect(system, np.eye(k.ambient_dim) - p_k)
    return FalsificationTest(
        falsifier=f,
        inconclusive=Effect(system, p_k),
        hypothesis=f"support within a {k.dim}-dim subspace of dim {k.ambient_dim}",
    )


def falsification_chance(t: FalsificationTest, sigma: State) -> float:
    """Probability Tr[F sigma] that the falsifier fires on the true state."""
    return probability_of_effect(t.falsifier, sigma)


def coarse_grain(falsifiers: list[Effect], inconclusives: list[Effect], tol: float = DEFAULT_TOL) -> FalsificationTest:
    """Merge a many-outcome test into the maximal binary falsification test."""
    if not falsifiers or not inconclusives:
        raise LinalgError("need at least one falsifier and one inconclusive effect")
    system = falsifiers[0].system
    for e in falsifiers + inconclusives:
        if e.system != system:
            raise DimensionMismatch("effects act on different systems")
    total = sum(e.matrix for e in falsifiers) + sum(e.matrix for e in inconclusives)
    if hs_norm(total - np.eye(system.dim)) > tol * system.dim:
        raise LinalgError("effects do not sum to the identity")
    f = Effect(system, sum(e.matrix for e in falsifiers))
    rest = Effect(system, sum(e.matrix for e in inconclusives))
    return FalsificationTest(falsifier=f, inconclusive=rest, hypothesis="coarse-grained")


def modus_tollens_transfer(t: FalsificationTest, hypothesis: str) -> FalsificationTest:
    """Relabel a test for a stronger hypothesis (caller asserts the
    implication); the effect is unchanged."""
    return FalsificationTest(
        falsifier=t.falsifier, inconclusive=t.inconclusive, hypothesis=hypothesis
    )


@dataclass(frozen=True)
class TrialCounts:
    falsified: int
    inconclusive: int


def simulate_trials(t: FalsificationTest, truth: State, n: int, rng: np.random.Generator) -> TrialCounts:
    """n independent runs of the binary test against a fixed true state."""
    if abs(truth.trace() - 1.0) > DEFAULT_TOL:
        raise LinalgError("trial simulation needs a unit-trace true state")
    p = falsification_chance(t, truth)
    hits = int(np.count_nonzero(rng.random(n) < p))
    return TrialCounts(falsified=hits, inconclusive=n - hits)


# ---------------------------------------------------------------------------
# Haar twirls


def twirl_analytic(x: np.ndarray, dims: list[int], twirled_factor: int) -> np.ndarray:
    """Exact Haar average of (U (x) I) X (U^dag (x) I) over the twirled
    factor: (I/d) inserted at that slot times the partial trace over it."""
    dims = [int(d) for d in dims]
    j = int(twirled_factor)
    if j < 0 or j >= len(dims):
        raise DimensionMismatch(f"twirled factor {j} out of range")
    keep = [i for i in range(len(dims)) if i != j]
    rest = partial_trace(x, dims, keep=keep)
    d_j = dims[j]
    y = kron(np.eye(d_j) / d_j, rest)
    # y factors are ordered [j, keep...]; permute back to the original order
    order_in_y = {j: 0}
    for t, i in enumerate(keep):
        order_in_y[i] = t + 1
    perm = [order_in_y[i] for i in range(len(dims))]
    dims_y = [dims[j]] + [dims[i] for i in keep]
    return permute_factors(y, dims_y, perm)


def twirl_monte_carlo(
    x: np.ndarray,
    dims: list[int],
    twirled_factor: int,
    n: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Empirical mean of (U (x) I) X (U^dag (x) I) over n Haar draws."""
    if n < 1:
        raise DimensionMismatch("need at least one sample")
    dims = [int(d) for d in dims]
    j = int(twirled_factor)
    d_before = int(np.prod(dims[:j])) if j > 0 else 1
    d_after = int(np.prod(dims[j + 1 :])) if j + 1 < len(dims) else 1
    acc = np.zeros_like(np.asarray(x, dtype=complex))
    for _ in range(n):
        u = haar_unitary(dims[j], rng)
        g = kron(kron(np.eye(d_before), u), np.eye(d_after))
        acc += g @ x @ dagger(g)
    return acc / n


# ---------------------------------------------------------------------------
# hypothesis families


def canonical_pure_projectors(d: int) -> list[np.ndarray]:
    """d^2 rank-one projectors spanning the Hermitian operators: basis
    projectors plus real and imaginary two-level superpositions."""
    projs = []
    eye = np.eye(d, dtype=complex)
    for j in range(d):
        projs.append(np.outer(eye[j], np.conj(eye[j])))
    for j in range(d):
        for k in range(j + 1, d):
            plus = (eye[j] + eye[k]) / np.sqrt(2)
            projs.append(np.outer(plus, np.conj(plus)))
            phase = (eye[j] + 1j * eye[k]) / np.sqrt(2)
            projs.append(np.outer(phase, np.conj(phase)))
    return projs


def symmetric_subspace_projector(d: int, copies: int) -> np.ndarray:
    """Projector onto the symmetric subspace of (C^d)^(x copies), built
    from the occupation-number basis (no permutation averaging)."""
    dim = d**copies
    groups: dict[tuple, list[int]] = {}
    for idx, word in enumerate(iter_product(range(d), repeat=copies)):
        groups.setdefault(tuple(sorted(word)), []).append(idx)
    p = np.zeros((dim, dim), dtype=complex)
    for members in groups.values():
        b = np.zeros(dim, dtype=complex)
        b[members] = 1.0 / np.sqrt(len(members))
        p += np.outer(b, np.conj(b))
    return p


class HypothesisFamily:
    """A parameterized set of states; subclasses fix the hypothesis."""

    name: str = "family"
    system: System

    def sample(self, rng: np.random.Generator) -> State:
        raise NotImplementedError

    def spanning_set(self) -> list[State]:
        """Members spanning the family's operator span, when analytically
        known; empty means the search relies on samples alone."""
        return []

    def analytic_average(self) -> State:
        raise NoAnalyticForm(f"{self.name}: no analytic average available")

    def note(self) -> str:
        return ""


class PurityFamily(HypothesisFamily):
    """All pure (rank-one, unit-trace) states of one system."""

    def __init__(self, d: int, system: System | None = None):
        self.d = int(d)
        self.system = system if system is not None else System("A", self.d)
        self.name = f"purity(d={self.d})"

    def sample(self, rng):
        v = random_pure(self.d, rng)
        return State(self.system, np.outer(v, np.conj(v)))

    def spanning_set(self):
        return [State(self.system, p) for p in canonical_pure_projectors(self.d)]

    def analytic_average(self):
        return State(self.system, np.eye(self.d, dtype=complex) / self.d)


class NCopyPurityFamily(HypothesisFamily):
    """States of the form psi^(x N) for a single unknown pure psi."""

    def __init__(self, d: int, copies: int):
        if copies < 1:
            raise DimensionMismatch("need at least one copy")
        self.d = int(d)
        self.copies = int(copies)
        single = System("A", self.d)
        self.system = tensor_system(*([single] * self.copies))
        self.name = f"purity-ncopies(d={self.d}, copies={self.copies})"

    def _power(self, m: np.ndarray) -> np.ndarray:
        out = m
        for _ in range(self.copies - 1):
            out = kron(out, m)
        return out

    def sample(self, rng):
        v = random_pure(self.d, rng)
        return State(self.system, self._power(np.outer(v, np.conj(v))))

    def spanning_set(self):
        return [
            State(self.system, self._power(p)) for p in canonical_pure_projectors(self.d)
        ]

    def analytic_average(self):
        p_sym = symmetric_subspace_projector(self.d, self.copies)
        dim_sym = math.comb(self.d + self.copies - 1, self.copies)
        return State(self.system, p_sym / dim_sym)

    def note(self):
        return NCOPY_NOTE


class MaxEntangledFamily(HypothesisFamily):
    """Maximally entangled pure states of A (x) B with d_A >= d_B, i.e.
    normalized double-kets of isometries V: B -> A."""

    def __init__(self, d_a: int, d_b: int):
        if d_a < d_b:
            raise DimensionMismatch("need d_A >= d_B for a maximally entangled family")
        self.d_a, self.d_b = int(d_a), int(d_b)
        self.system = tensor_system(System("A", self.d_a), System("B", self.d_b))
        self.name = f"max-entangled(d_A={self.d_a}, d_B={self.d_b})"

    def sample(self, rng):
        v = haar_isometry(self.d_b, self.d_a, rng)
        vec = v.reshape(-1)
        return State(self.system, np.outer(vec, np.conj(vec)) / self.d_b)

    def analytic_average(self):
        d = self.d_a * self.d_b
        return State(self.system, np.eye(d, dtype=complex) / d)

    def note(self):
        return TWIRL_NOTE


class MarginalOfPureFamily(HypothesisFamily):
    """Pure states of A (x) E whose marginal on A is a fixed state: all
    purifications of that state into an environment of dimension d_E."""

    def __init__(self, rho: State, d_env: int):
        self.base_state = rho
        self.d_env = int(d_env)
        if self.d_env < rho.system.dim:
            raise DimensionMismatch("environment must be at least as large as the system")
        self._canonical = purify(rho, d_env=self.d_env)
        self.system = self._canonical.pure_state.system
        self.name = f"marginal-of-pure(d={rho.system.dim}, d_E={self.d_env})"

    def sample(self, rng):
        u = haar_unitary(self.d_env, rng)
        g = kron(np.eye(self.base_state.system.dim), u)
        m = g @ self._canonical.pure_state.matrix @ dagger(g)
        return State(self.system, m)

    def analytic_average(self):
        avg = kron(self.base_state.matrix, np.eye(self.d_env) / self.d_env)
        return State(self.system, avg)

    def base_support_rank(self, tol: float = DEFAULT_TOL) -> int:
        vals, _ = eig_hermitian(self.base_state.matrix)
        return int(np.sum(vals > tol))


class AtomicTransformationFamily(PurityFamily):
    """Transformations with a single Kraus operator, probed by feeding one
    half of the canonical maximally entangled pair: the resulting output
    states are exactly the pure states of output (x) input, so the family
    is purity on the doubled space."""

    def __init__(self, d_in: int, d_out: int):
        self.d_in, self.d_out = int(d_in), int(d_out)
        system = tensor_system(System("B", self.d_out), System("A", self.d_in))
        super().__init__(self.d_in * self.d_out, system=system)
        self.name = f"atomic-transformation(d_in={self.d_in}, d_out={self.d_out})"

    def sample(self, rng):
        # normalized double-ket of a Ginibre Kraus operator; identical in
        # distribution to a Haar-random pure state of the doubled space
        k = rng.standard_normal((self.d_out, self.d_in)) + 1j * rng.standard_normal(
            (self.d_out, self.d_in)
        )
        vec = k.reshape(-1)
        vec = vec / np.linalg.norm(vec)
        return State(self.system, np.outer(vec, np.conj(vec)))


class IsometricTransformationFamily(MaxEntangledFamily):
    """Isometric transformations from B to A (d_A >= d_B), probed on one
    half of the canonical maximally entangled pair: their output states
    are exactly the maximally entangled states of A (x) B."""

    def __init__(self, d_in: int, d_out: int):
        if d_out < d_in:
            raise DimensionMismatch("isometric maps need output dim >= input dim")
        super().__init__(d_a=d_out, d_b=d_in)
        self.name = f"isometric-transformation(d_in={d_in}, d_out={d_out})"


class StateSupportFamily(HypothesisFamily):
    """States supported in a fixed subspace K."""

    def __init__(self, subspace: Subspace, system: System | None = None):
        subspace.validate()
        if subspace.dim < 1:
            raise DimensionMismatch("support hypothesis needs a nonzero subspace")
        self.subspace = subspace
        self.system = system if system is not None else System("A", subspace.ambient_dim)
        if self.system.dim != subspace.ambient_dim:
            raise DimensionMismatch("system dim does not match subspace ambient dim")
        self.name = f"state-support(k={subspace.dim}, d={subspace.ambient_dim})"

    def sample(self, rng):
        k = self.subspace.dim
        g = rng.standard_normal((k, k)) + 1j * rng.standard_normal((k, k))
        small = g @ dagger(g)
        small = small / np.trace(small).real
        b = self.subspace.basis
        return State(self.system, b @ small @ dagger(b))

    def spanning_set(self):
        b = self.subspace.basis
        return [
            State(self.system, b @ p @ dagger(b))
            for p in canonical_pure_projectors(self.subspace.dim)
        ]

    def analytic_average(self):
        return State(self.system, self.subspace.projector() / self.subspace.dim)


# ---------------------------------------------------------------------------
# witness and search


@dataclass(eq=False)
class WitnessVerdict:
    family: str
    method: str
    samples: int
    average_state: State
    lambda_min: float
    unfalsifiable: bool
    residual_falsifier: FalsificationTest | None = None
    note: str = ""


def family_average(
    h: HypothesisFamily,
    method: str = "analytic",
    n: int = 0,
    rng: np.random.Generator | None = None,
) -> State:
    if method == "analytic":
        return h.analytic_average()
    if method == "monte-carlo":
        if rng is None or n < 1:
            raise DimensionMismatch("monte-carlo averaging needs rng and n >= 1")
        acc = np.zeros((h.system.dim, h.system.dim), dtype=complex)
        for _ in range(n):
            acc += h.sample(rng).matrix
        return State(h.system, acc / n)
    raise LinalgError(f"unknown averaging method {method!r}")


def witness_unfalsifiable(
    h: HypothesisFamily,
    method: str = "analytic",
    n: int = 0,
    rng: np.random.Generator | None = None,
    tol: float = DEFAULT_TOL,
) -> WitnessVerdict:
    """Average-state witness: a full-rank family average leaves no room
    for a nonzero falsifier, since Tr[F avg] = 0 with F PSD forces F = 0."""
    avg = family_average(h, method, n, rng)
    vals = np.linalg.eigvalsh((avg.matrix + dagger(avg.matrix)) / 2)
    lam_min = float(vals[0])
    residual = None
    note = h.note()
    if isinstance(h, MarginalOfPureFamily) and h.base_support_rank(tol) < h.base_state.system.dim:
        supp = support_projector(h.base_state.matrix, tol)
        residual = support_falsifier(supp, system=h.base_state.system)
        extra = (
            "family average is rank-deficient; the kernel certifies a support "
            "falsifier on the system factor (partial trace of any family "
            "falsifier over the environment)"
        )
        note = f"{note}; {extra}" if note else extra
    return WitnessVerdict(
        family=h.name,
        method=method,
        samples=n if method == "monte-carlo" else 0,
        average_state=avg,
        lambda_min=lam_min,
        unfalsifiable=bool(lam_min > tol),
        residual_falsifier=residual,
        note=note,
    )


def herm_vec(m: np.ndarray) -> np.ndarray:
    """Isometric real vectorization of a Hermitian matrix."""
    d = m.shape[0]
    iu = np.triu_indices(d, 1)
    return np.concatenate(
        [
            np.real(np.diag(m)),
            np.sqrt(2.0) * np.real(m[iu]),
            np.sqrt(2.0) * np.imag(m[iu]),
        ]
    )


def herm_unvec(v: np.ndarray, d: int) -> np.ndarray:
    m = np.zeros((d, d), dtype=complex)
    m[np.diag_indices(d)] = v[:d]
    k = d * (d - 1) // 2
    iu = np.triu_indices(d, 1)
    re = v[d : d + k] / np.sqrt(2.0)
    im = v[d + k :] / np.sqrt(2.0)
    m[iu] = re + 1j * im
    m[(iu[1], iu[0])] = re - 1j * im
    return m


@dataclass(eq=False)
class SearchResult:
    test: FalsificationTest | None
    converged: bool
    residual: float
    iterations: int
    span_dim: int
    max_violation: float | None = None
    note: str = ""


def falsifier_search(
    h: HypothesisFamily,
    span_samples: int = 256,
    tol: float = 1e-8,
    max_iter: int = 5000,
    rng: np.random.Generator | None = None,
    verify_samples: int = 1000,
) -> SearchResult:
    """Search the PSD cone for a unit-trace effect orthogonal to the
    family span; a converged, verified hit is returned scaled to F <= I.

    The span is built from the family's spanning set plus sampled states,
    drawn in batches until the span dimension is stable over three
    consecutive batches (otherwise the construction is rejected). Dykstra
    alternating projections then run between the PSD cone and the affine
    slice of the span's orthocomplement with unit trace; the residual
    combines the gap between the two projected iterates with the trace
    infeasibility, so an empty affine slice shows up as a residual that
    never approaches zero.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    d = h.system.dim
    dim_herm = d * d

    vectors = [herm_vec((s.matrix + dagger(s.matrix)) / 2) for s in h.spanning_set()]
    batches = 6
    batch_size = max(4, span_samples // batches)
    ranks = []
    stack = np.array(vectors).T if vectors else np.zeros((dim_herm, 0))
    drawn = 0
    while drawn < span_samples or len(ranks) < 4:
        batch = [herm_vec(h.sample(rng).matrix) for _ in range(batch_size)]
        drawn += batch_size
        stack = np.column_stack([stack] + batch) if stack.size else np.array(batch).T
        s_vals = np.linalg.svd(stack, compute_uv=False)
        ranks.append(int(np.sum(s_vals > s_vals[0] * 1e-10)))
        if drawn > span_samples * 4:
            break
    if len(ranks) >= 4 and not (ranks[-1] == ranks[-2] == ranks[-3]):
        raise SpanConstructionError(
            f"family span kept growing across batches (ranks {ranks}); "
            "increase span_samples"
        )

    u_full, s_vals, _ = np.linalg.svd(stack, full_matrices=True)
    rank = int(np.sum(s_vals > s_vals[0] * 1e-10)) if s_vals.size else 0
    basis_perp = u_full[:, rank:]

    def proj_perp(z: np.ndarray) -> np.ndarray:
        return basis_perp @ (basis_perp.T @ z)

    vec_id = herm_vec(np.eye(d, dtype=complex))
    t = proj_perp(vec_id)
    tau = float(vec_id @ t)
    trace_feasible = tau > 1e-10 * d
    x0 = t / tau if trace_feasible else np.zeros(dim_herm)
    t_hat = t / np.linalg.norm(t) if trace_feasible else None

    def proj_affine(z: np.ndarray) -> np.ndarray:
        y = proj_perp(z - x0)
        if t_hat is not None:
            y = y - t_hat * float(t_hat @ y)
        return x0 + y

    def proj_psd(z: np.ndarray) -> np.ndarray:
        m = herm_unvec(z, d)
        vals, vecs = np.linalg.eigh((m + dagger(m)) / 2)
        vals = np.clip(vals, 0.0, None)
        return herm_vec((vecs * vals) @ dagger(vecs))

    x = x0 if trace_feasible else vec_id / d
    p = np.zeros(dim_herm)
    residual = float("inf")
    iterations = 0
    for iterations in range(1, max_iter + 1):
        y = proj_psd(x + p)
        p = x + p - y
        x_new = proj_affine(y)
        residual = float(np.linalg.norm(y - x_new)) + abs(float(vec_id @ x_new) - 1.0)
        x = x_new
        if residual < tol:
            break

    if residual >= tol:
        return SearchResult(
            test=None,
            converged=False,
            residual=residual,
            iterations=iterations,
            span_dim=rank,
            note=h.note(),
        )

    f_mat = herm_unvec(proj_psd(x), d)
    f_mat = (f_mat + dagger(f_mat)) / 2
    vals, vecs = eig_hermitian(f_mat)
    lam_max = float(vals[0]) if vals.size else 0.0
    if lam_max <= tol:
        return SearchResult(
            test=None,
            converged=False,
            residual=residual,
            iterations=iterations,
            span_dim=rank,
            note="converged to the zero effect; no effective falsifier",
        )
    f_mat = (vecs * np.clip(vals, 0.0, None)) @ dagger(vecs) / lam_max

    max_violation = 0.0
    for _ in range(verify_samples):
        sigma = h.sample(rng)
        max_violation = max(
            max_violation, abs(float(np.trace(f_mat @ sigma.matrix).real))
        )
    if max_violation > 10 * tol:
        return SearchResult(
            test=None,
            converged=False,
            residual=residual,
            iterations=iterations,
            span_dim=rank,
            max_violation=max_violation,
            note="candidate rejected: fresh family samples give nonzero chance",
        )

    test = FalsificationTest.from_falsifier(
        Effect(h.system, f_mat), hypothesis=h.name, tol=max(10 * tol, DEFAULT_TOL)
    )
    return SearchResult(
        test=test,
        converged=True,
        residual=residual,
        iterations=iterations,
        span_dim=rank,
        max_violation=max_violation,
        note=h.note(),
    )
