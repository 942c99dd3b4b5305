"""Dense complex operators: density matrices, projectors, spectra, unitary evolution.

Plain operators are ``numpy.ndarray`` of shape ``(dim, dim)``.  Density
operators and projectors are thin immutable wrappers that validate their
invariants once, at construction.
"""

from __future__ import annotations

import contextlib
import contextvars
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import RankDeficiencyError, ShapeError, ValidationError

__all__ = [
    "Tolerances",
    "get_tolerances",
    "tolerances",
    "DensityOperator",
    "Projector",
    "SpectralDecomposition",
    "as_operator",
    "check_hermitian",
    "make_density_from_ket",
    "make_projector",
    "spectral_decompose",
    "propagator",
    "evolve",
    "trace_prob",
    "decay_prob",
    "commutator",
    "dump_operator",
    "sigma_x",
    "sigma_y",
    "sigma_z",
]


@dataclass(frozen=True)
class Tolerances:
    herm: float = 1e-10
    trace: float = 1e-10
    psd: float = 1e-10
    idempotent: float = 1e-10
    rank_trace: float = 1e-8
    gram_schmidt: float = 1e-12
    eig_tie: float = 1e-12


_TOLERANCES = contextvars.ContextVar("zenodecay_tolerances", default=Tolerances())


def get_tolerances() -> Tolerances:
    return _TOLERANCES.get()


@contextlib.contextmanager
def tolerances(**overrides):
    """Temporarily override validation tolerances, e.g. ``tolerances(herm=1e-8)``."""
    token = _TOLERANCES.set(replace(_TOLERANCES.get(), **overrides))
    try:
        yield _TOLERANCES.get()
    finally:
        _TOLERANCES.reset(token)


sigma_x = np.array([[0, 1], [1, 0]], dtype=complex)
sigma_y = np.array([[0, -1j], [1j, 0]], dtype=complex)
sigma_z = np.array([[1, 0], [0, -1]], dtype=complex)
for _m in (sigma_x, sigma_y, sigma_z):
    _m.setflags(write=False)


def _frozen(a):
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


def as_operator(a, name="operator") -> np.ndarray:
    """Return ``a`` as a square, finite complex matrix or raise."""
    if isinstance(a, (DensityOperator, Projector)):
        return a.matrix
    arr = np.asarray(a, dtype=complex)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
        raise ShapeError(f"{name} must be a non-empty square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} has non-finite entries")
    return arr


def hermiticity_error(a) -> float:
    a = np.asarray(a)
    return float(np.max(np.abs(a - a.conj().T))) if a.size else 0.0


def check_hermitian(a, name="operator", tol=None) -> np.ndarray:
    arr = as_operator(a, name)
    tol = get_tolerances().herm if tol is None else tol
    err = hermiticity_error(arr)
    if err > tol:
        raise ValidationError(f"{name} is not Hermitian (max |A - A^H| = {err:.3e})")
    return arr


def _check_same_dim(*mats):
    dims = {m.shape[0] for m in mats}
    if len(dims) != 1:
        raise ShapeError(f"dimension mismatch: {sorted(dims)}")


@dataclass(frozen=True)
class DensityOperator:
    """Unit-trace, positive semidefinite Hermitian matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        m = check_hermitian(self.matrix, "density operator")
        tol = get_tolerances()
        tr = np.trace(m)
        if abs(tr - 1) > tol.trace:
            raise ValidationError(f"density operator trace is {tr.real:.15g}, expected 1")
        lo = np.linalg.eigvalsh(m)[0]
        if lo < -tol.psd:
            raise ValidationError(f"density operator has negative eigenvalue {lo:.3e}")
        object.__setattr__(self, "matrix", _frozen(m))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.array(self.matrix, dtype=dtype)


@dataclass(frozen=True)
class Projector:
    """Hermitian idempotent matrix of a given rank.  Rank 0 is allowed."""

    matrix: np.ndarray
    rank: int = field(default=-1)

    def __post_init__(self):
        m = check_hermitian(self.matrix, "projector")
        tol = get_tolerances()
        err = float(np.max(np.abs(m @ m - m)))
        if err > tol.idempotent:
            raise ValidationError(f"projector is not idempotent (max |P^2 - P| = {err:.3e})")
        tr = np.trace(m).real
        rank = int(round(tr)) if self.rank < 0 else int(self.rank)
        if abs(tr - rank) > tol.rank_trace:
            raise ValidationError(f"projector trace {tr:.12g} does not match rank {rank}")
        object.__setattr__(self, "matrix", _frozen(m))
        object.__setattr__(self, "rank", rank)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def complement(self) -> "Projector":
        return Projector(np.eye(self.dim) - self.matrix, self.dim - self.rank)

    def __array__(self, dtype=None, copy=None):
        return np.array(self.matrix, dtype=dtype)


@dataclass(frozen=True)
class SpectralDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        u = self.eigenvectors
        return (u * self.eigenvalues) @ u.conj().T

    def function(self, f) -> np.ndarray:
        """Apply a scalar function to the operator: ``U f(diag) U^H``."""
        u = self.eigenvectors
        return (u * f(self.eigenvalues)) @ u.conj().T


def _as_density(rho) -> DensityOperator:
    return rho if isinstance(rho, DensityOperator) else DensityOperator(rho)


def _as_projector(lam) -> Projector:
    return lam if isinstance(lam, Projector) else Projector(lam)


def make_density_from_ket(v) -> DensityOperator:
    """Pure state ``|v><v|`` after normalizing ``v``."""
    v = np.asarray(v, dtype=complex).ravel()
    norm = np.linalg.norm(v)
    if v.size == 0 or norm == 0 or not np.isfinite(norm):
        raise ValidationError("cannot build a density operator from a zero or non-finite vector")
    v = v / norm
    return DensityOperator(np.outer(v, v.conj()))


def _orthonormalize(vectors, tol):
    basis = []
    for i, v in enumerate(vectors):
        w = np.array(v, dtype=complex)
        # modified Gram-Schmidt, then one re-orthogonalization pass
        for _ in range(2):
            for e in basis:
                w = w - np.vdot(e, w) * e
        norm = np.linalg.norm(w)
        if norm < tol:
            raise RankDeficiencyError(
                f"vector {i} is linearly dependent on the preceding ones (residual {norm:.3e})"
            )
        basis.append(w / norm)
    return basis


def make_projector(vectors, dim=None) -> Projector:
    """Orthogonal projector onto the span of ``vectors``.

    ``dim`` is only needed for an empty list (the rank-0 projector).
    """
    vectors = [np.asarray(v, dtype=complex).ravel() for v in vectors]
    if not vectors:
        if dim is None:
            raise ShapeError("dim is required for an empty vector list")
        return Projector(np.zeros((dim, dim), dtype=complex), 0)
    n = vectors[0].size
    if any(v.size != n for v in vectors) or (dim is not None and dim != n):
        raise ShapeError("all vectors must share the projector dimension")
    if len(vectors) > n:
        raise RankDeficiencyError(f"{len(vectors)} vectors cannot be independent in dimension {n}")
    basis = np.array(_orthonormalize(vectors, get_tolerances().gram_schmidt)).T
    return Projector(basis @ basis.conj().T, len(vectors))


def _fix_phases(vecs):
    out = vecs.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-14)
        if nz.size:
            c = col[nz[0]]
            out[:, j] = col * (abs(c) / c)
    return out


def spectral_decompose(h, require_hermitian=True) -> SpectralDecomposition:
    """Eigen-decomposition of a Hermitian matrix with a deterministic gauge.

    Eigenvalues ascend.  Each eigenvector has its first nonzero component made
    real and positive, and eigenvectors of (numerically) degenerate eigenvalues
    are ordered lexicographically by their entries.
    """
    h = check_hermitian(h, "hamiltonian") if require_hermitian else as_operator(h)
    h = 0.5 * (h + h.conj().T)
    w, u = np.linalg.eigh(h)
    u = _fix_phases(u)
    scale = max(1.0, float(np.max(np.abs(w))))
    tie = get_tolerances().eig_tie * scale
    order = list(range(len(w)))
    start = 0
    for i in range(1, len(w) + 1):
        if i == len(w) or w[i] - w[i - 1] > tie:
            if i - start > 1:
                block = order[start:i]
                block.sort(key=lambda j: tuple(np.column_stack([u[:, j].real, u[:, j].imag]).ravel()))
                order[start:i] = block
            start = i
    u = u[:, order]
    w = w[order]
    u.setflags(write=False)
    w.setflags(write=False)
    return SpectralDecomposition(w, u)


def propagator(h, t, hbar=1.0, spectrum=None) -> np.ndarray:
    """``exp(-i H t / hbar)`` via the spectral decomposition of ``H``."""
    if hbar <= 0:
        raise ValidationError("hbar must be positive")
    if not np.isfinite(t):
        raise ValidationError("time must be finite")
    sd = spectrum if spectrum is not None else spectral_decompose(h)
    if t == 0:
        return np.eye(sd.eigenvalues.size, dtype=complex)
    return sd.function(lambda e: np.exp(-1j * e * (t / hbar)))


def evolve(rho, h, t, hbar=1.0) -> DensityOperator:
    """Unitary evolution ``rho(t) = U rho U^H`` with ``U = exp(-i H t / hbar)``."""
    rho = _as_density(rho)
    h = check_hermitian(h, "hamiltonian")
    _check_same_dim(rho.matrix, h)
    u = propagator(h, t, hbar)
    out = u @ rho.matrix @ u.conj().T
    return DensityOperator(0.5 * (out + out.conj().T))


def _split_probs(lam, rho):
    lam = _as_projector(lam)
    rho = _as_density(rho)
    _check_same_dim(lam.matrix, rho.matrix)
    p = float(np.real(np.vdot(lam.matrix, rho.matrix)))
    q = float(np.real(np.vdot(np.eye(lam.dim) - lam.matrix, rho.matrix)))
    return p, q


def trace_prob(lam, rho) -> float:
    """``Tr(lam rho)`` clamped to ``[0, 1]``."""
    p, _ = _split_probs(lam, rho)
    return min(1.0, max(0.0, p))


def decay_prob(lam, rho) -> float:
    """Trace-normalized complement probability ``Tr((1 - lam) rho) / Tr(rho)``.

    Computed from the complement directly, so values near zero keep their
    relative precision (``1 - trace_prob`` would not).
    """
    p, q = _split_probs(lam, rho)
    return min(1.0, max(0.0, q / (p + q)))


def commutator(a, b) -> np.ndarray:
    a = as_operator(a, "a")
    b = as_operator(b, "b")
    _check_same_dim(a, b)
    return a @ b - b @ a


def dump_operator(a) -> str:
    """Row-major text dump, one row per line, entries as ``re+imi`` with 17 significant digits."""
    a = as_operator(a)
    lines = []
    for row in a:
        lines.append(" ".join(f"{z.real:.17g}{z.imag:+.17g}i" for z in row))
    return "\n".join(lines) + "\n"
