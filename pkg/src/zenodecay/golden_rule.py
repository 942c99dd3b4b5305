"""Bound level coupled to a discretized continuum.

The total Hamiltonian is ``H = H0 + V`` on ``M + 1`` states: index 0 is the
bound level at ``E_i`` and indices ``1..M`` are continuum levels on a
uniform grid of width ``W`` centred on ``E_i``.  ``V`` only couples the bound
level to the continuum.  Each continuum level carries a channel label; the
part of ``V`` touching one channel's levels is that channel's interaction.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .compound import RateEstimate
from .exceptions import ConditioningError, ValidationError
from .operators import spectral_decompose
from .stochastic import SurvivalCurve

__all__ = [
    "DiscretizedContinuumModel",
    "ChannelPartition",
    "build_model",
    "resonance_levels",
    "fgr_rate",
    "lippmann_schwinger_solve",
    "born_approximation",
    "channel_rates",
    "multi_channel_survival",
    "exact_survival",
    "short_time_coefficients",
    "lineshape",
    "parse_model_file",
    "format_model_file",
]

LS_CONDITION_LIMIT = 1e12
LS_RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class DiscretizedContinuumModel:
    bound_energy: float
    band_width: float
    levels: int
    couplings: np.ndarray
    channels: tuple = ()
    hbar: float = 1.0

    def __post_init__(self):
        if int(self.levels) != self.levels or self.levels < 1:
            raise ValidationError(f"M must be a positive integer, got {self.levels}")
        if not (np.isfinite(self.band_width) and self.band_width > 0):
            raise ValidationError(f"W must be positive, got {self.band_width}")
        if not np.isfinite(self.bound_energy):
            raise ValidationError("E_i must be finite")
        if not (np.isfinite(self.hbar) and self.hbar > 0):
            raise ValidationError(f"hbar must be positive, got {self.hbar}")
        m = int(self.levels)
        v = np.asarray(self.couplings, dtype=complex)
        if v.ndim == 0:
            v = np.full(m, v.item())
        if v.shape != (m,):
            raise ValidationError(f"expected {m} couplings, got {v.size}")
        if not np.all(np.isfinite(v)):
            raise ValidationError("couplings must be finite")
        v = v.copy()
        v.setflags(write=False)
        labels = tuple(self.channels) if len(self.channels) else ("0",) * m
        if len(labels) != m:
            raise ValidationError(f"expected {m} channel labels, got {len(labels)}")
        object.__setattr__(self, "levels", m)
        object.__setattr__(self, "couplings", v)
        object.__setattr__(self, "channels", tuple(str(c) for c in labels))

    @property
    def dim(self) -> int:
        return self.levels + 1

    @cached_property
    def energies(self) -> np.ndarray:
        """Continuum energies ``E_i - W/2 + (m + 1/2) W / M``."""
        m = np.arange(self.levels)
        e = self.bound_energy - self.band_width / 2 + (m + 0.5) * self.band_width / self.levels
        e.setflags(write=False)
        return e

    @property
    def density(self) -> float:
        """Density of final states ``M / W``."""
        return self.levels / self.band_width

    @property
    def heisenberg_time(self) -> float:
        return 2 * math.pi * self.hbar * self.density

    @cached_property
    def h0(self) -> np.ndarray:
        return np.diag(np.concatenate([[self.bound_energy], self.energies])).astype(complex)

    def interaction(self, mask=None) -> np.ndarray:
        """``V``, or the part of it coupling the bound level to the masked levels."""
        v = self.couplings if mask is None else np.where(mask, self.couplings, 0)
        out = np.zeros((self.dim, self.dim), complex)
        out[1:, 0] = v
        out[0, 1:] = v.conj()
        return out

    @cached_property
    def v(self) -> np.ndarray:
        return self.interaction()

    @cached_property
    def h(self) -> np.ndarray:
        return self.h0 + self.v

    @cached_property
    def spectrum(self):
        return spectral_decompose(self.h)

    def channel_labels(self):
        return list(dict.fromkeys(self.channels))

    def channel_mask(self, label) -> np.ndarray:
        return np.array([c == str(label) for c in self.channels])


@dataclass(frozen=True)
class ChannelPartition:
    """Assignment of continuum level indices to channel labels."""

    assignment: dict

    @classmethod
    def from_labels(cls, labels):
        groups = {}
        for m, lab in enumerate(labels):
            groups.setdefault(str(lab), []).append(m)
        return cls(groups)

    def validate(self, levels):
        seen = np.zeros(levels, int)
        for lab, idx in self.assignment.items():
            idx = np.asarray(idx, int)
            if idx.size == 0:
                raise ValidationError(f"channel {lab!r} is empty")
            if np.any((idx < 0) | (idx >= levels)):
                raise ValidationError(f"channel {lab!r} has out-of-range levels")
            np.add.at(seen, idx, 1)
        if np.any(seen > 1):
            raise ValidationError("channel partition is not disjoint")
        if np.any(seen == 0):
            raise ValidationError("channel partition is not exhaustive")

    def mask(self, label, levels):
        out = np.zeros(levels, bool)
        out[np.asarray(self.assignment[label], int)] = True
        return out


def build_model(bound_energy=0.0, band_width=2.0, levels=201, couplings=0.01, channels=(), hbar=1.0):
    """Return ``(model, H0, V)``; ``couplings`` may be one value for every level."""
    model = DiscretizedContinuumModel(bound_energy, band_width, levels, couplings, channels, hbar)
    return model, model.h0, model.v


def resonance_levels(model) -> np.ndarray:
    """Indices of the ``max(1, round(M/20))`` continuum levels closest to ``E_i``."""
    n_res = max(1, int(math.floor(model.levels / 20 + 0.5)))
    dist = np.abs(model.energies - model.bound_energy)
    return np.sort(np.argsort(dist, kind="stable")[:n_res])


def _window_rate(model, mask):
    window = resonance_levels(model)
    n_res = window.size
    sel = window[mask[window]]
    v2 = np.abs(model.couplings[sel]) ** 2
    rate = 2 * math.pi / model.hbar * model.density * float(np.sum(v2)) / n_res
    diag = {
        "n_res": n_res,
        "n_in_window": int(sel.size),
        "coupling_sq_spread": float(np.ptp(v2)) if v2.size else 0.0,
        "local_density": model.density * sel.size / n_res,
        "below_resonance": sel.size == 0,
    }
    return rate, diag


def fgr_rate(model, channel=None) -> RateEstimate:
    """Golden-rule rate ``(2 pi / hbar) <|v|^2> lambda`` at the bound energy.

    ``<|v|^2>`` averages the squared couplings over the resonance window
    (:func:`resonance_levels`) and ``lambda = M / W``.  With ``channel``,
    levels of other channels contribute zero, so the channel rates of any
    partition sum to the total rate.
    """
    if channel is None:
        mask = np.ones(model.levels, bool)
    else:
        mask = model.channel_mask(channel)
        if not mask.any():
            raise ValidationError(f"channel {channel!r} has no levels")
    rate, diag = _window_rate(model, mask)
    diag["channel"] = channel
    diag["density"] = model.density
    return RateEstimate(rate, "formula", diag)


def lippmann_schwinger_solve(model, level, epsilon):
    """Scattering ket for continuum level ``level`` (0-based) with ``+i epsilon`` shift.

    Solves ``(I - G0 V) x = |level>`` with ``G0 = (E - H0 + i epsilon)^-1``
    and ``E`` the level's energy.  The returned vector is indexed like ``H``
    (bound state first).
    """
    if not epsilon > 0:
        raise ValidationError("epsilon must be positive")
    if not 0 <= level < model.levels:
        raise ValidationError(f"level must be in [0, {model.levels})")
    e = model.energies[level]
    g0 = 1.0 / (e - np.diag(model.h0).real + 1j * epsilon)
    gv = g0[:, None] * model.v
    a = np.eye(model.dim) - gv
    cond = np.linalg.cond(a)
    if not cond < LS_CONDITION_LIMIT:
        raise ConditioningError(f"Lippmann-Schwinger system condition number {cond:.3e}")
    rhs = np.zeros(model.dim, complex)
    rhs[level + 1] = 1.0
    x = np.linalg.solve(a, rhs)
    resid = np.linalg.norm(x - rhs - gv @ x) / np.linalg.norm(x)
    if resid > LS_RESIDUAL_TOL:
        raise ConditioningError(f"Lippmann-Schwinger residual {resid:.3e} above tolerance")
    return x


def born_approximation(model, level, epsilon, order=1):
    """Truncated Born series ``sum_k (G0 V)^k |level>`` up to ``order``."""
    e = model.energies[level]
    g0 = 1.0 / (e - np.diag(model.h0).real + 1j * epsilon)
    term = np.zeros(model.dim, complex)
    term[level + 1] = 1.0
    total = term.copy()
    for _ in range(order):
        term = g0 * (model.v @ term)
        total = total + term
    return total


def channel_rates(model, partition=None):
    """Golden-rule rate of each channel, as ``[(label, RateEstimate), ...]``.

    Every channel is evaluated on the shared resonance window, with its own
    local density of levels there; a channel with no levels in the window has
    rate 0 and ``below_resonance`` set.  Diagnostics also carry the channel's
    global density ``M_k / W_k``.
    """
    if partition is None:
        partition = ChannelPartition.from_labels(model.channels)
    partition.validate(model.levels)
    out = []
    for label in partition.assignment:
        mask = partition.mask(label, model.levels)
        v_k = model.interaction(mask)
        # V_k must annihilate every final state outside channel k
        others = np.flatnonzero(~mask) + 1
        if others.size and np.any(v_k[:, others] != 0):
            raise ValidationError(f"channel {label!r} interaction couples to other channels")
        rate, diag = _window_rate(model, mask)
        e = model.energies[mask]
        m_k = int(mask.sum())
        w_k = (e.max() - e.min()) * m_k / (m_k - 1) if m_k > 1 else model.band_width / model.levels
        diag.update(channel=label, levels=m_k, channel_width=float(w_k), channel_density=m_k / w_k)
        out.append((label, RateEstimate(rate, "formula", diag)))
    return out


def multi_channel_survival(rates, t) -> float:
    """Product of per-channel exponentials ``prod_c exp(-t rate_c)``."""
    rates = [float(r) for r in rates]
    if any(r < 0 for r in rates):
        raise ValidationError("rates must be non-negative")
    out = 1.0
    for r in rates:
        out *= math.exp(-t * r)
    return out


def _bound_weights(model):
    u = model.spectrum.eigenvectors
    return np.abs(u[0, :]) ** 2


def exact_survival(model, times) -> SurvivalCurve:
    """Unitary survival ``|<phi| exp(-i H t / hbar) |phi>|^2`` of the bound state."""
    t = np.atleast_1d(np.asarray(times, dtype=float))
    w = _bound_weights(model)
    ev = model.spectrum.eigenvalues
    amp = np.exp(-1j * np.outer(t, ev) / model.hbar) @ w
    p = np.abs(amp) ** 2
    return SurvivalCurve(t, p, np.zeros_like(p), diagnostics={"method": "exact"})


def short_time_coefficients(model):
    """``(<H>, <H^2> - <H>^2)`` in the bound state."""
    h = model.h
    mean = h[0, 0].real
    second = float(np.real(np.vdot(h[:, 0], h[:, 0])))
    return float(mean), second - float(mean) ** 2


def lineshape(model, t):
    """Continuum populations ``|<m| exp(-i H t / hbar) |phi>|^2``; returns ``(energies, populations)``."""
    if t < 0:
        raise ValidationError("t must be non-negative")
    u = model.spectrum.eigenvectors
    ev = model.spectrum.eigenvalues
    amp = (u[1:, :] * np.exp(-1j * ev * t / model.hbar)) @ u[0, :].conj()
    return np.array(model.energies), np.abs(amp) ** 2


# -- model files -------------------------------------------------------------------

_SCALARS = {"E_i": "bound_energy", "W": "band_width", "M": "levels", "hbar": "hbar"}


def parse_model_file(text):
    """Parse the plain-text model format.

    ``key = value`` lines set ``E_i``, ``W``, ``M`` and ``hbar``; each
    ``coupling m channel v_re v_im`` line sets one continuum coupling.
    ``#`` starts a comment.  Unlisted couplings are zero on channel ``0``.
    """
    values, couplings, errors = {}, {}, []
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("coupling"):
            parts = line.split()
            if len(parts) != 5:
                errors.append(f"line {ln}: expected 'coupling m channel v_re v_im'")
                continue
            try:
                m = int(parts[1])
                couplings[m] = (parts[2], complex(float(parts[3]), float(parts[4])))
            except ValueError:
                errors.append(f"line {ln}: malformed coupling line")
            continue
        match = re.fullmatch(r"(\w+)\s*=\s*(\S+)", line)
        if not match or match.group(1) not in _SCALARS:
            errors.append(f"line {ln}: unrecognized line {raw.strip()!r}")
            continue
        try:
            val = float(match.group(2))
        except ValueError:
            errors.append(f"line {ln}: malformed number {match.group(2)!r}")
            continue
        values[_SCALARS[match.group(1)]] = val
    if errors:
        raise ValidationError("; ".join(errors))
    if "levels" not in values:
        raise ValidationError("model file must set M")
    m_levels = int(values["levels"])
    if m_levels != values["levels"] or m_levels < 1:
        raise ValidationError("M must be a positive integer")
    v = np.zeros(m_levels, complex)
    labels = ["0"] * m_levels
    for m, (lab, val) in couplings.items():
        if not 0 <= m < m_levels:
            raise ValidationError(f"coupling index {m} outside 0..{m_levels - 1}")
        v[m] = val
        labels[m] = lab
    return DiscretizedContinuumModel(
        values.get("bound_energy", 0.0),
        values.get("band_width", 2.0),
        m_levels,
        v,
        tuple(labels),
        values.get("hbar", 1.0),
    )


def format_model_file(model) -> str:
    f = "{:.17g}".format
    lines = [
        f"E_i = {f(model.bound_energy)}",
        f"W = {f(model.band_width)}",
        f"M = {model.levels}",
        f"hbar = {f(model.hbar)}",
    ]
    for m, (v, lab) in enumerate(zip(model.couplings, model.channels)):
        lines.append(f"coupling {m} {lab} {f(v.real)} {f(v.imag)}")
    return "\n".join(lines) + "\n"
