"""Dense complex linear algebra for desk-scale operator computations.

All matrices are square or rectangular ``numpy`` arrays with ``complex``
dtype, row-major. Vectors are 1-D arrays. Everything here is a pure
function of its inputs; random sampling takes an explicit
``numpy.random.Generator``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_TOL = 1e-9
HERM_TOL = 1e-10


class LinalgError(ValueError):
    """Base class for validation failures on matrix inputs."""


class DimensionMismatch(LinalgError):
    pass


class NotHermitian(LinalgError):
    pass


class NotPositiveSemidefinite(LinalgError):
    pass


def as_matrix(x) -> np.ndarray:
    """Coerce to a 2-D complex array, rejecting non-finite entries."""
    m = np.asarray(x, dtype=complex)
    if m.ndim != 2:
        raise DimensionMismatch(f"expected a matrix, got ndim={m.ndim}")
    if not np.all(np.isfinite(m)):
        raise LinalgError("matrix contains NaN or Inf entries")
    return m


def dagger(m: np.ndarray) -> np.ndarray:
    return np.conj(m).T


def hs_inner(a: np.ndarray, b: np.ndarray) -> complex:
    """Hilbert-Schmidt inner product Tr[a^dag b]."""
    return complex(np.sum(np.conj(a) * b))


def hs_norm(a: np.ndarray) -> float:
    return float(np.linalg.norm(a))


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Tensor product; entry ((i*rb+k), (j*cb+l)) is a[i,j]*b[k,l]."""
    return np.kron(as_matrix(a), as_matrix(b))


@dataclass(eq=False)
class Subspace:
    """A subspace of C^ambient_dim given by orthonormal basis columns."""

    ambient_dim: int
    basis: np.ndarray  # shape (ambient_dim, k), orthonormal columns

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def projector(self) -> np.ndarray:
        return self.basis @ dagger(self.basis)

    def validate(self, tol: float = 1e-12) -> None:
        if self.basis.shape[0] != self.ambient_dim:
            raise DimensionMismatch("basis rows do not match ambient dimension")
        k = self.basis.shape[1]
        gram = dagger(self.basis) @ self.basis
        if hs_norm(gram - np.eye(k)) > tol:
            raise LinalgError("subspace basis is not orthonormal")


def _check_square(x: np.ndarray) -> int:
    if x.shape[0] != x.shape[1]:
        raise DimensionMismatch(f"matrix is {x.shape[0]}x{x.shape[1]}, expected square")
    return x.shape[0]


def check_hermitian(x: np.ndarray, herm_tol: float = HERM_TOL) -> np.ndarray:
    """Validate relative Hermiticity and return the symmetrized matrix."""
    x = as_matrix(x)
    _check_square(x)
    scale = max(hs_norm(x), 1e-300)
    if hs_norm(x - dagger(x)) > herm_tol * scale:
        raise NotHermitian("matrix is not Hermitian within tolerance")
    return (x + dagger(x)) / 2


def partial_trace(x: np.ndarray, dims: list[int], keep) -> np.ndarray:
    """Trace out all tensor factors not listed in ``keep``.

    ``dims`` lists the factor dimensions in order; the result lives on the
    kept factors in their original order. Preserves the trace.
    """
    x = as_matrix(x)
    n = _check_square(x)
    dims = [int(d) for d in dims]
    if int(np.prod(dims)) != n:
        raise DimensionMismatch(f"product of dims {dims} != matrix side {n}")
    keep = sorted(set(int(k) for k in keep))
    m = len(dims)
    if any(k < 0 or k >= m for k in keep):
        raise DimensionMismatch(f"keep indices {keep} out of range for {m} factors")
    t = x.reshape(dims + dims)
    # contract row/col index pairs of every traced factor, highest first
    traced = [j for j in range(m) if j not in keep]
    for j in sorted(traced, reverse=True):
        t = np.trace(t, axis1=j, axis2=j + (t.ndim // 2))
    side = int(np.prod([dims[k] for k in keep])) if keep else 1
    return t.reshape(side, side)


def permute_factors(x: np.ndarray, dims: list[int], perm: list[int]) -> np.ndarray:
    """Reorder tensor factors; new factor j is old factor perm[j]."""
    x = as_matrix(x)
    n = _check_square(x)
    dims = [int(d) for d in dims]
    if int(np.prod(dims)) != n:
        raise DimensionMismatch(f"product of dims {dims} != matrix side {n}")
    m = len(dims)
    if sorted(perm) != list(range(m)):
        raise DimensionMismatch(f"perm {perm} is not a permutation of 0..{m - 1}")
    t = x.reshape(dims + dims)
    t = t.transpose(list(perm) + [m + p for p in perm])
    return t.reshape(n, n)


def eig_hermitian(x: np.ndarray, herm_tol: float = HERM_TOL):
    """Eigendecomposition of a Hermitian matrix, eigenvalues descending.

    Eigenvector phases are canonicalized: the first component of
    significant modulus is made positive real, so repeated runs produce
    identical output for identical input.
    """
    h = check_hermitian(x, herm_tol)
    vals, vecs = np.linalg.eigh(h)
    order = np.argsort(-vals, kind="stable")
    vals = vals[order]
    vecs = vecs[:, order]
    for j in range(vecs.shape[1]):
        col = vecs[:, j]
        mags = np.abs(col)
        lead = int(np.argmax(mags > mags.max() * 1e-8)) if mags.max() > 0 else 0
        pivot = col[lead]
        if abs(pivot) > 0:
            vecs[:, j] = col * (np.conj(pivot) / abs(pivot))
    return vals, vecs


def sqrt_psd(x: np.ndarray, tol: float = DEFAULT_TOL) -> np.ndarray:
    """PSD square root; eigenvalues in [-tol, 0) are clamped to zero."""
    vals, vecs = eig_hermitian(x)
    if vals.size and vals[-1] < -tol:
        raise NotPositiveSemidefinite(
            f"matrix has eigenvalue {vals[-1]:.3e} below -tol={-tol:.3e}"
        )
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ dagger(vecs)


def min_eigenvalue(x: np.ndarray, herm_tol: float = HERM_TOL) -> float:
    h = check_hermitian(x, herm_tol)
    return float(np.linalg.eigvalsh(h)[0])


def support_projector(x: np.ndarray, tol: float = DEFAULT_TOL) -> Subspace:
    """Span of eigenvectors with eigenvalue > tol, as a Subspace."""
    vals, vecs = eig_hermitian(x)
    if vals.size and vals[-1] < -tol:
        raise NotPositiveSemidefinite("support requested for a non-PSD matrix")
    rank = int(np.sum(vals > tol))
    return Subspace(ambient_dim=x.shape[0], basis=vecs[:, :rank].copy())


def double_ket(m: np.ndarray) -> np.ndarray:
    """Vectorize m as sum_{n,m'} m[n,m'] |n> (x) |m'> (row index first)."""
    return as_matrix(m).reshape(-1)


def unvec_double_ket(v: np.ndarray, rows: int, cols: int) -> np.ndarray:
    v = np.asarray(v, dtype=complex).reshape(-1)
    if v.size != rows * cols:
        raise DimensionMismatch(f"vector length {v.size} != {rows}x{cols}")
    return v.reshape(rows, cols)


def haar_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary: QR of a Ginibre matrix with the R-diagonal
    phases folded back in (plain QR is not measure-correct)."""
    if d < 1:
        raise DimensionMismatch("dimension must be >= 1")
    z = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    q, r = np.linalg.qr(z)
    phases = np.diag(r) / np.abs(np.diag(r))
    return q * phases


def haar_isometry(d_from: int, d_to: int, rng: np.random.Generator) -> np.ndarray:
    """First d_from columns of a Haar unitary on the larger space."""
    if d_to < d_from:
        raise DimensionMismatch("isometry needs target dimension >= source")
    return haar_unitary(d_to, rng)[:, :d_from]


def random_pure(d: int, rng: np.random.Generator) -> np.ndarray:
    """Unit vector, uniform on the sphere (normalized complex Gaussian)."""
    if d < 1:
        raise DimensionMismatch("dimension must be >= 1")
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return v / np.linalg.norm(v)


def random_density(d: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-trace PSD matrix, GG^dag for Ginibre G, trace-normalized."""
    if d < 1:
        raise DimensionMismatch("dimension must be >= 1")
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    rho = g @ dagger(g)
    return rho / np.trace(rho).real
