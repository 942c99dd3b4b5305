import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from zenodecay.compound import (
    SequencePlan,
    compound_product,
    compound_survival,
    convergence_sweep,
    idealized_survival,
    instantaneous_rate,
    per_step_survival,
    rate_finite_difference,
)
from zenodecay.exceptions import ValidationError
from zenodecay.experiments import random_commuting_case, two_level_example
from zenodecay.operators import DensityOperator, Projector, commutator, make_density_from_ket, sigma_x

from conftest import random_density, random_hermitian, random_projector


def expm_survival(lam, rho, h, delta):
    # independent route: Pade matrix exponential instead of the spectral propagator
    u = scipy.linalg.expm(-1j * h * delta)
    return np.trace(lam.matrix @ u @ rho.matrix @ u.conj().T).real


class TestSequencePlan:
    def test_delta(self):
        plan = SequencePlan(3.0, 12)
        assert plan.delta == 0.25
        assert plan.steps * plan.delta == plan.total_time

    @pytest.mark.parametrize("t,n", [(0, 1), (-1, 3), (1.0, 0), (1.0, 2.5)])
    def test_invalid(self, t, n):
        with pytest.raises(ValidationError):
            SequencePlan(t, n)


class TestInstantaneousRate:
    def test_commuting_diagonals(self, rng):
        lam = Projector(np.diag([1.0, 0, 0]))
        rho = DensityOperator(np.diag([0.2, 0.5, 0.3]))
        assert instantaneous_rate(lam, rho, random_hermitian(3, rng)).rate == 0.0

    def test_two_level(self):
        # s(delta) = (1 - sin(2 g delta)) / 2 for |+x>, |+z><+z|, g sigma_y  =>  -s'(0) = g
        lam, rho, h = two_level_example(0.25)
        assert abs(instantaneous_rate(lam, rho, h).rate - 0.25) < 1e-15
        for d in (0.1, 0.5):
            assert abs(expm_survival(lam, rho, h, d) - (1 - math.sin(0.5 * d)) / 2) < 1e-14

    def test_hbar(self):
        lam, rho, h = two_level_example(0.25)
        assert abs(instantaneous_rate(lam, rho, h, hbar=0.5).rate - 0.5) < 1e-15

    def test_imaginary_residue_recorded(self, rng):
        for _ in range(20):
            d = int(rng.integers(2, 9))
            est = instantaneous_rate(random_projector(d, 1, rng), random_density(d, rng), random_hermitian(d, rng))
            assert est.diagnostics["imag_residue"] < 1e-12
            assert est.method == "formula"

    def test_non_hermitian_h(self):
        lam, rho, _ = two_level_example(0.25)
        with pytest.raises(ValidationError):
            instantaneous_rate(lam, rho, np.array([[0, 1], [0, 0]]))

    @settings(max_examples=40, deadline=None)
    @given(dim=st.integers(2, 8), seed=st.integers(0, 2**32 - 1), data=st.data())
    def test_zero_when_inside_range(self, dim, seed, data):
        rng = np.random.default_rng(seed)
        rank = data.draw(st.integers(1, dim))
        lam = random_projector(dim, rank, rng)
        # a state built inside the range of lam
        b = np.linalg.eigh(lam.matrix)[1][:, dim - rank :]
        c = rng.standard_normal((rank, rank)) + 1j * rng.standard_normal((rank, rank))
        rho = b @ (c @ c.conj().T) @ b.conj().T
        rho = DensityOperator(rho / np.trace(rho).real)
        assert abs(instantaneous_rate(lam, rho, random_hermitian(dim, rng)).rate) < 1e-12

    @settings(max_examples=40, deadline=None)
    @given(dim=st.integers(2, 8), seed=st.integers(0, 2**32 - 1))
    def test_zero_when_commuting(self, dim, seed):
        rng = np.random.default_rng(seed)
        q, _ = np.linalg.qr(rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim)))
        rank = int(rng.integers(1, dim))
        lam = Projector(q[:, :rank] @ q[:, :rank].conj().T, rank)
        p = rng.dirichlet(np.ones(dim))
        rho = DensityOperator((q * p) @ q.conj().T)
        assert np.max(np.abs(commutator(rho, lam))) < 1e-12
        assert abs(instantaneous_rate(lam, rho, random_hermitian(dim, rng)).rate) < 1e-12


class TestFiniteDifference:
    def test_zero_hamiltonian(self, rng):
        for d in (1e-2, 1e-4):
            est = rate_finite_difference(random_projector(3, 1, rng), random_density(3, rng), np.zeros((3, 3)), d)
            assert est.rate == 0.0

    def test_two_level(self):
        lam, rho, h = two_level_example(0.25)
        r1 = rate_finite_difference(lam, rho, h, 1e-4).rate
        r2 = rate_finite_difference(lam, rho, h, 5e-5).rate
        assert abs(r1 - 0.25) < 1e-7
        # O(delta^2) truncation: halving delta cuts the error about fourfold
        assert abs(r2 - 0.25) < abs(r1 - 0.25) / 3
        assert r1 == pytest.approx(0.25 - 0.25**3 * 4 * 1e-8 / 6, abs=1e-11)

    def test_commuting(self):
        lam = Projector(np.diag([1.0, 0]))
        rho = DensityOperator(np.diag([0.6, 0.4]))
        assert abs(rate_finite_difference(lam, rho, np.diag([0.3, -1.0]), 1e-3).rate) < 1e-12

    def test_delta_positive(self):
        lam, rho, h = two_level_example(0.25)
        with pytest.raises(ValidationError):
            rate_finite_difference(lam, rho, h, 0.0)

    def test_agrees_with_formula(self, rng):
        for _ in range(30):
            d = int(rng.integers(2, 12))
            lam = random_projector(d, int(rng.integers(1, d)), rng)
            rho, h = random_density(d, rng), random_hermitian(d, rng)
            a = instantaneous_rate(lam, rho, h).rate
            b = rate_finite_difference(lam, rho, h, 1e-4).rate
            assert abs(a - b) < 1e-6


class TestPerStepSurvival:
    def test_zero_delta_inside(self):
        assert per_step_survival(Projector(np.diag([1.0, 0])), make_density_from_ket([1, 0]), sigma_x, 0.0) == 1.0

    def test_zero_delta_overlap(self):
        lam, rho, h = two_level_example(0.25)
        assert abs(per_step_survival(lam, rho, h, 0.0) - 0.5) < 1e-15

    @pytest.mark.parametrize("delta", [0.01, 0.3, 1.2])
    def test_rabi(self, delta):
        g = 0.7
        s = per_step_survival(Projector(np.diag([1.0, 0])), make_density_from_ket([1, 0]), g * sigma_x, delta)
        assert abs(s - math.cos(g * delta) ** 2) < 1e-12

    def test_matches_expm(self, rng):
        lam, rho, h = random_projector(5, 2, rng), random_density(5, rng), random_hermitian(5, rng)
        assert abs(per_step_survival(lam, rho, h, 0.37) - expm_survival(lam, rho, h, 0.37)) < 1e-12


class TestCompoundSurvival:
    def test_zeno_case(self, rng):
        for _ in range(10):
            lam, rho, h = random_commuting_case(6, 3, rng)
            for n in (1, 100, 10**6):
                assert abs(compound_survival(lam, rho, h, SequencePlan(50.0, n)) - 1) < 1e-9

    def test_toy_product(self):
        assert compound_product(0.9, 10) == pytest.approx(0.9**10, rel=1e-14)
        assert idealized_survival(1.0, SequencePlan(1.0, 10)) == pytest.approx(0.34867844010, abs=1e-11)

    def test_toy_limit(self):
        assert abs(idealized_survival(1.0, SequencePlan(1.0, 10**6)) - math.exp(-1)) < 1e-6

    def test_zero_step_survival(self):
        assert compound_product(0.0, 5) == 0.0

    def test_no_underflow_for_huge_n(self):
        s = idealized_survival(1.0, SequencePlan(3.0, 10**8))
        assert s == pytest.approx(math.exp(-3), rel=1e-7)

    def test_literal_matches_direct_power(self, rng):
        lam, rho, h = random_projector(4, 2, rng), random_density(4, rng), random_hermitian(4, rng)
        plan = SequencePlan(0.8, 7)
        s = expm_survival(lam, rho, h, plan.delta)
        assert compound_survival(lam, rho, h, plan) == pytest.approx(s**7, rel=1e-12)

    def test_monotone_in_t(self):
        # rho inside lam: s(delta) = cos^2(g delta) is non-increasing on [0, pi/(2g)]
        lam = Projector(np.diag([1.0, 0]))
        rho = make_density_from_ket([1, 0])
        vals = [compound_survival(lam, rho, 0.5 * sigma_x, SequencePlan(t, 20)) for t in np.linspace(0.1, 30, 40)]
        assert all(b <= a + 1e-15 for a, b in zip(vals, vals[1:]))


class TestConvergenceSweep:
    def test_zero_rate(self):
        lam = Projector(np.diag([1.0, 0]))
        res = convergence_sweep(lam, make_density_from_ket([1, 0]), sigma_x, 2.0, [10, 100, 1000])
        assert [r[1] for r in res.rows] == [1.0, 1.0, 1.0]
        assert not res.decaying

    def test_error_scaling(self):
        lam, rho, h = two_level_example(0.25)
        res = convergence_sweep(lam, rho, h, 4.0, [10**2, 10**4, 10**6])
        errs = res.errors()
        # (1 - x/N)^N = e^{-x} (1 - x^2/(2N) + O(N^-2))
        for (n, _, e) in res.rows:
            assert e == pytest.approx(math.exp(-1) / (2 * n), rel=0.02)
        assert errs[0] / errs[1] == pytest.approx(100, rel=0.2)
        assert errs[1] / errs[2] == pytest.approx(100, rel=0.2)

    def test_rate_t_two(self):
        lam, rho, h = two_level_example(0.5)
        res = convergence_sweep(lam, rho, h, 4.0, [10**6])
        assert abs(res.rows[0][1] - math.exp(-2)) < 2e-6

    def test_literal_branch_reported(self):
        lam, rho, h = two_level_example(0.25)
        res = convergence_sweep(lam, rho, h, 4.0, [10, 100], branch="literal")
        # Tr(lam rho(0)) = 1/2, so the literal product collapses rather than approaching e^{-1}
        assert res.rows[1][1] < res.rows[0][1] < 1e-2

    def test_ascending_required(self):
        lam, rho, h = two_level_example(0.25)
        with pytest.raises(ValidationError):
            convergence_sweep(lam, rho, h, 1.0, [100, 10])
