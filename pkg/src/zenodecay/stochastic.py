"""Stochastic sequences of undecayed subspaces and Monte Carlo survival ensembles.

Each interaction step evolves the state under the Hamiltonian, draws the next
undecayed subspace, records the survival probability and updates the state.
Two environment models are provided:

``iid``
    every step draws a fresh Haar-random rank-``r`` subspace.  The per-step
    loss does not vanish as the step shrinks, so there is no continuous limit.
``drift``
    the subspace is rotated by ``exp(-i theta G)`` with ``G`` a normalized
    Gaussian Hermitian generator and ``theta = sqrt(gamma * delta)``.  The
    mean per-step loss is ``gamma * delta``, giving the limiting rate
    ``gamma`` when ``H = 0``.

Subspaces are carried as ``dim x rank`` isometries ``B`` with ``lam = B B^H``.
All random draws for trajectory ``i`` come from its own generator seeded with
``derive_seed(seed, i)``, so any trajectory can be replayed in isolation and
ensemble output does not depend on batching.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .compound import SequencePlan
from .exceptions import ValidationError
from .operators import (
    DensityOperator,
    Projector,
    _as_density,
    _as_projector,
    check_hermitian,
    propagator,
)

__all__ = [
    "InteriorEnsembleConfig",
    "TrajectoryRecord",
    "SurvivalCurve",
    "derive_seed",
    "make_rng",
    "sample_random_unitary",
    "sample_generator",
    "sample_step",
    "run_trajectory",
    "ensemble_survival",
]

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

MODES = ("iid", "drift")
POLICIES = ("luders", "resample")

TRAJ_BATCH = 1024
STEP_BATCH = 256
# survival below this is rounding noise: the step decayed with certainty
TERMINATION_TOL = 1e-14


def splitmix64(x: int) -> int:
    """SplitMix64 output function (Steele, Lea & Flood finalizer)."""
    z = x & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, index: int) -> int:
    """Seed of trajectory ``index``: the ``index``-th SplitMix64 output from ``seed``."""
    if not 0 <= seed <= MASK64:
        raise ValidationError("seed must be an unsigned 64-bit integer")
    return splitmix64(seed + (index + 1) * GOLDEN_GAMMA)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class InteriorEnsembleConfig:
    dim: int
    undecayed_rank: int
    mode: str = "drift"
    drift_strength: float = 0.0
    update_policy: str = "luders"
    hamiltonian: np.ndarray | None = None
    seed: int = 0
    hbar: float = 1.0

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 2:
            raise ValidationError("dim must be an integer >= 2 (a decayed complement must exist)")
        if not 1 <= self.undecayed_rank < self.dim:
            raise ValidationError("undecayed_rank must satisfy 1 <= rank < dim")
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}")
        if self.update_policy not in POLICIES:
            raise ValidationError(f"update_policy must be one of {POLICIES}")
        if not (np.isfinite(self.drift_strength) and self.drift_strength >= 0):
            raise ValidationError("drift_strength must be finite and >= 0")
        if not 0 <= int(self.seed) <= MASK64:
            raise ValidationError("seed must be an unsigned 64-bit integer")
        if not self.hbar > 0:
            raise ValidationError("hbar must be positive")
        h = np.zeros((self.dim, self.dim), complex) if self.hamiltonian is None else self.hamiltonian
        h = check_hermitian(h, "hamiltonian").copy()
        if h.shape[0] != self.dim:
            raise ValidationError(f"hamiltonian has dimension {h.shape[0]}, expected {self.dim}")
        h.setflags(write=False)
        object.__setattr__(self, "hamiltonian", h)
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "undecayed_rank", int(self.undecayed_rank))
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def normals_per_step(self) -> int:
        n = 2 * self.dim * self.dim
        if self.update_policy == "resample":
            n += 2 * self.undecayed_rank
        return n

    def initial_state(self):
        """Undecayed subspace spanned by the first ``rank`` basis vectors; state ``|0><0|``."""
        basis = np.eye(self.dim, self.undecayed_rank, dtype=complex)
        rho = np.zeros((self.dim, self.dim), complex)
        rho[0, 0] = 1.0
        return rho, basis


# -- random matrices ---------------------------------------------------------------


def _complex_gaussian(x, dim):
    # x: (..., 2 dim^2) standard normals -> (..., dim, dim) with E|z|^2 = 1
    n = dim * dim
    z = x[..., :n] + 1j * x[..., n : 2 * n]
    return z.reshape(x.shape[:-1] + (dim, dim)) / np.sqrt(2.0)


def _haar_from_gaussian(z):
    q, r = np.linalg.qr(z)
    d = np.diagonal(r, axis1=-2, axis2=-1)
    ph = np.where(d == 0, 1.0, d / np.abs(d))
    return q * ph[..., None, :]


def _dag(a):
    return np.conj(np.swapaxes(a, -1, -2))


def _normalized_generator(z):
    dim = z.shape[-1]
    g = 0.5 * (z + _dag(z))
    tr = np.trace(g, axis1=-2, axis2=-1).real
    tr2 = np.einsum("...ij,...ji->...", g, g).real
    # mean over Haar-random unit vectors u of <u|G^2|u> - <u|G|u>^2
    var = (dim * tr2 - tr * tr) / (dim * (dim + 1))
    return g / np.sqrt(var)[..., None, None]


def sample_random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary: QR of a complex Ginibre matrix with ``diag(R)`` made positive."""
    if int(dim) != dim or dim < 1:
        raise ValidationError("dim must be a positive integer")
    return _haar_from_gaussian(_complex_gaussian(rng.standard_normal(2 * dim * dim), dim))


def sample_generator(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Gaussian Hermitian matrix scaled so its Haar-averaged variance over unit vectors is 1."""
    if dim < 2:
        raise ValidationError("a generator with nonzero variance needs dim >= 2")
    return _normalized_generator(_complex_gaussian(rng.standard_normal(2 * dim * dim), dim))


# -- batched step kernel -----------------------------------------------------------


class _Kernel:
    """One interaction step applied to a batch of trajectories."""

    def __init__(self, config: InteriorEnsembleConfig, delta: float):
        if delta < 0:
            raise ValidationError("delta must be non-negative")
        self.config = config
        self.delta = float(delta)
        h = config.hamiltonian
        self.u_h = None if not np.any(h) else propagator(h, delta, config.hbar)
        self.theta = np.sqrt(config.drift_strength * delta)

    def rotation(self, z):
        """Batched ``exp(-i theta G)`` for generators built from Gaussian matrices ``z``."""
        g = _normalized_generator(z)
        if g.shape[-1] == 2:
            # G = a I + b.sigma  =>  exp(-i theta G) = e^{-i theta a} (cos(theta |b|) I - i sin(theta |b|) b.sigma / |b|)
            a = 0.5 * (g[:, 0, 0] + g[:, 1, 1]).real
            bz = 0.5 * (g[:, 0, 0] - g[:, 1, 1]).real
            bx, by = g[:, 1, 0].real, g[:, 1, 0].imag
            nb = np.sqrt(bx * bx + by * by + bz * bz)
            c = np.cos(self.theta * nb)
            sn = np.sin(self.theta * nb) / np.where(nb > 0, nb, 1.0)
            ph = np.exp(-1j * self.theta * a)
            out = np.empty_like(g)
            out[:, 0, 0] = ph * (c - 1j * sn * bz)
            out[:, 1, 1] = ph * (c + 1j * sn * bz)
            out[:, 0, 1] = ph * (-1j * sn * (bx - 1j * by))
            out[:, 1, 0] = ph * (-1j * sn * (bx + 1j * by))
            return out
        w, v = np.linalg.eigh(g)
        return (v * np.exp(-1j * self.theta * w)[:, None, :]) @ _dag(v)

    def step(self, rho, basis, normals, alive, with_norms=True):
        """Advance ``(rho, basis)``; returns ``(rho, basis, survival, comm_norm)``."""
        cfg = self.config
        dim, r = cfg.dim, cfg.undecayed_rank
        z = _complex_gaussian(normals[:, : 2 * dim * dim], dim)
        if cfg.mode == "iid":
            new_basis = _haar_from_gaussian(z)[:, :, :r]
        elif self.theta == 0.0:
            new_basis = basis
        else:
            new_basis = self.rotation(z) @ basis

        comm_norm = None
        if with_norms:
            lam = new_basis @ _dag(new_basis)
            comm = rho @ lam
            comm = comm - _dag(comm)
            comm_norm = np.sqrt(np.sum(np.abs(comm) ** 2, axis=(-2, -1)))

        if self.u_h is not None:
            rho = self.u_h @ rho @ self.u_h.conj().T
        block = _dag(new_basis) @ rho @ new_basis
        surv = np.clip(np.trace(block, axis1=-2, axis2=-1).real, 0.0, 1.0)
        if cfg.update_policy == "luders":
            surv = np.where(surv < TERMINATION_TOL, 0.0, surv)
        surv = np.where(alive, surv, 0.0)

        if cfg.update_policy == "luders":
            ok = surv > 0
            denom = np.where(ok, surv, 1.0)
            new_rho = new_basis @ block @ _dag(new_basis)
            new_rho = new_rho / denom[:, None, None]
            new_rho = 0.5 * (new_rho + _dag(new_rho))
            new_rho = np.where(ok[:, None, None], new_rho, rho)
        else:
            off = 2 * dim * dim
            c = normals[:, off : off + r] + 1j * normals[:, off + r : off + 2 * r]
            c = c / np.linalg.norm(c, axis=1, keepdims=True)
            psi = new_basis @ c[:, :, None]
            new_rho = psi @ _dag(psi)
        return new_rho, new_basis, surv, comm_norm


def _simulate(config, plan, seeds, keep_records):
    """Run trajectories for ``seeds``; returns per-step survivals (and norms if requested)."""
    n = len(seeds)
    kernel = _Kernel(config, plan.delta)
    rngs = [make_rng(s) for s in seeds]
    rho0, basis0 = config.initial_state()
    rho = np.broadcast_to(rho0, (n,) + rho0.shape).copy()
    basis = np.broadcast_to(basis0, (n,) + basis0.shape).copy()
    alive = np.ones(n, bool)
    k = config.normals_per_step
    surv = np.empty((n, plan.steps))
    norms = np.empty((n, plan.steps)) if keep_records else None
    for start in range(0, plan.steps, STEP_BATCH):
        stop = min(start + STEP_BATCH, plan.steps)
        draws = np.stack([g.standard_normal((stop - start, k)) for g in rngs])
        for j in range(start, stop):
            rho, basis, s, c = kernel.step(rho, basis, draws[:, j - start], alive, keep_records)
            surv[:, j] = s
            if keep_records:
                norms[:, j] = c
            if config.update_policy == "luders":
                alive &= s > 0
    return surv, norms


def _running_product(surv):
    with np.errstate(divide="ignore"):
        return np.exp(np.cumsum(np.log(surv), axis=-1))


# -- public API ------------------------------------------------------------------


@dataclass(frozen=True)
class TrajectoryRecord:
    step_survivals: np.ndarray
    running_product: np.ndarray
    projector_commutator_norms: np.ndarray
    seed_used: int
    terminated: bool = False


def sample_step(config: InteriorEnsembleConfig, previous, delta, rng):
    """One interaction: evolve, draw the next subspace, record survival, update the state.

    ``previous`` is a ``(rho, lam)`` pair.  Returns ``(rho_next, lam_next,
    survival)``.  Under the Lüders policy a zero survival means the system
    decayed with certainty; ``rho_next`` is then ``None``.

    The subspace basis is rebuilt from ``lam`` by eigendecomposition, so for
    rank > 1 it can differ from the basis a trajectory carries internally by
    a unitary within the subspace.  Drift and Lüders steps are unaffected
    (they depend on ``lam`` only); a resampled state is then equal in
    distribution to the trajectory's, not draw for draw.
    """
    rho, lam = previous
    rho = _as_density(rho).matrix
    lam = _as_projector(lam)
    if lam.rank != config.undecayed_rank or lam.dim != config.dim:
        raise ValidationError("projector does not match the configured dim and rank")
    w, v = np.linalg.eigh(lam.matrix)
    basis = v[:, w > 0.5]
    kernel = _Kernel(config, delta)
    normals = rng.standard_normal((1, config.normals_per_step))
    new_rho, new_basis, s, _ = kernel.step(rho[None], basis[None], normals, np.ones(1, bool))
    b = new_basis[0]
    lam_next = Projector(b @ b.conj().T, config.undecayed_rank)
    survival = float(s[0])
    if config.update_policy == "luders" and survival == 0.0:
        return None, lam_next, 0.0
    return DensityOperator(new_rho[0]), lam_next, survival


def run_trajectory(config: InteriorEnsembleConfig, plan: SequencePlan, rng=None) -> TrajectoryRecord:
    """Run one trajectory of ``plan.steps`` interactions.

    ``rng`` may be an integer seed; by default trajectory 0 of ``config.seed``
    is used, matching the first member of :func:`ensemble_survival`.
    """
    seed = derive_seed(config.seed, 0) if rng is None else int(rng)
    surv, norms = _simulate(config, plan, [seed], keep_records=True)
    s = surv[0]
    return TrajectoryRecord(
        step_survivals=s,
        running_product=_running_product(s),
        projector_commutator_norms=norms[0],
        seed_used=seed,
        terminated=bool(np.any(s == 0.0)) and config.update_policy == "luders",
    )


@dataclass(frozen=True)
class SurvivalCurve:
    """Ensemble-mean survival with standard errors; ``t[0] = 0`` carries the prepared state."""

    t: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    n_traj: int = 0
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        t, m, e = (np.asarray(a, float) for a in (self.t, self.mean, self.stderr))
        if not t.shape == m.shape == e.shape or t.ndim != 1:
            raise ValidationError("t, mean and stderr must be 1-d arrays of equal length")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "stderr", e)

    def rows(self):
        return list(zip(self.t.tolist(), self.mean.tolist(), self.stderr.tolist()))

    def __len__(self):
        return len(self.t)

    def to_csv(self) -> str:
        return write_csv(["t", "mean", "stderr"], [self.t, self.mean, self.stderr])

    @classmethod
    def from_csv(cls, text):
        cols = read_csv(text)
        return cls(cols["t"], cols["mean"], cols["stderr"])


def ensemble_survival(config: InteriorEnsembleConfig, plan: SequencePlan, n_traj: int) -> SurvivalCurve:
    """Mean and standard error of the running survival product over ``n_traj`` trajectories.

    Sums are folded one trajectory at a time in index order, so the result
    does not depend on how trajectories are batched.
    """
    if int(n_traj) != n_traj or n_traj < 2:
        raise ValidationError("n_traj must be an integer >= 2")
    n_traj = int(n_traj)
    # shifted sums folded one trajectory at a time, in index order
    shift = None
    total = np.zeros(plan.steps)
    total_sq = np.zeros(plan.steps)
    loss_sum = 0.0
    n_terminated = 0
    for start in range(0, n_traj, TRAJ_BATCH):
        seeds = [derive_seed(config.seed, i) for i in range(start, min(start + TRAJ_BATCH, n_traj))]
        surv, _ = _simulate(config, plan, seeds, keep_records=False)
        prod = _running_product(surv)
        if shift is None:
            shift = prod[0].copy()
        for k in range(prod.shape[0]):
            d = prod[k] - shift
            total += d
            total_sq += d * d
            loss_sum += float(np.sum(1.0 - surv[k]))
            n_terminated += int(prod[k, -1] == 0.0)
    count = n_traj
    mean = shift + total / count
    var = np.maximum(total_sq - total * total / count, 0.0) / (count - 1)
    stderr = np.sqrt(var) / np.sqrt(count)
    t = np.concatenate([[0.0], plan.times()])
    return SurvivalCurve(
        t=t,
        mean=np.concatenate([[1.0], mean]),
        stderr=np.concatenate([[0.0], stderr]),
        n_traj=count,
        diagnostics={
            # per-step loss divided by delta, averaged over the whole sequence
            "sequence_average_rate": loss_sum / (count * plan.steps * plan.delta),
            "n_terminated": n_terminated,
            "delta": plan.delta,
            "mode": config.mode,
            "update_policy": config.update_policy,
        },
    )


# -- CSV convention ----------------------------------------------------------------


def format_number(x) -> str:
    return format(float(x), ".17g")


def write_csv(header, columns) -> str:
    """CSV text with the given header, 17 significant digits and LF line endings."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in zip(*columns):
        w.writerow([v if isinstance(v, str) else format_number(v) for v in row])
    return buf.getvalue()


def read_csv(text) -> dict:
    """Columns of :func:`write_csv` output; non-numeric columns stay lists of strings."""
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], rows[1:]
    out = {}
    for i, name in enumerate(header):
        col = [r[i] for r in body]
        try:
            out[name] = np.array([float(v) for v in col])
        except ValueError:
            out[name] = col
    return out
