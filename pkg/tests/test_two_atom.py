"""Two-atom Hamiltonian assembly, diagonalization and pair-band physics."""

import itertools

import numpy as np
import pytest
import scipy.linalg

from conftest import diagonalized, model_for
from latticeepr import two_atom as ta
from latticeepr.constants import KB


def bound_band_edges(hop: float, vdd: float) -> tuple[float, float]:
    """Analytic pair band of the infinite lattice: the bound state at total
    quasimomentum K has energy -sqrt(vdd^2 + 16 hop^2 cos^2(K/2))."""
    u, t = abs(vdd), abs(hop)
    return -np.sqrt(u**2 + 16 * t**2), -u


class TestBuild:
    def test_hermitian(self):
        ham = ta.build(model_for(-0.0881, -0.4693))
        matrix = ham.dense()
        assert np.array_equal(matrix, matrix.T)

    def test_three_site_noninteracting_tensor_sums(self):
        ham = ta.build(model_for(-1.0, 0.0, site_count=3, boundary="open"))
        spectrum = ta.diagonalize(ham)
        single = sorted((-np.sqrt(2), 0.0, np.sqrt(2)))
        sums = sorted(a + b for a, b in itertools.product(single, repeat=2))
        assert np.allclose(spectrum.eigenvalues, sums, atol=1e-12)

    def test_noninteracting_factorization(self):
        model = model_for(-0.0881, 0.0)
        single = ta.single_atom_matrix(model.site_count, model.hop, model.boundary)
        singles = scipy.linalg.eigvalsh(single)
        sums = np.sort(np.add.outer(singles, singles).ravel())
        spectrum = ta.diagonalize(ta.build(model))
        assert np.allclose(spectrum.eigenvalues, sums, atol=1e-8)

    def test_four_site_brute_force(self):
        # enumerate the 16x16 matrix element by element, independently
        model = model_for(-0.7, -1.3, site_count=4, boundary="periodic")
        n = 4
        brute = np.zeros((16, 16))
        for j, l in itertools.product(range(n), repeat=2):
            row = j * n + l
            if j == l:
                brute[row, row] += model.vdd
            for jp in ((j + 1) % n, (j - 1) % n):
                brute[row, jp * n + l] += model.hop
            for lp in ((l + 1) % n, (l - 1) % n):
                brute[row, j * n + lp] += model.hop
        built = ta.build(model).dense()
        assert np.array_equal(brute, built)
        assert np.allclose(
            scipy.linalg.eigvalsh(brute), ta.diagonalize(ta.build(model)).eigenvalues
        )

    def test_sparse_matches_dense(self):
        model = model_for(-0.1, -0.8, site_count=10)
        dense = ta.diagonalize(ta.build(model, sparse=False))
        sparse = ta.diagonalize(ta.build(model, sparse=True), n_eigen=12)
        assert np.allclose(
            dense.eigenvalues[:12], sparse.eigenvalues[:12], atol=1e-8
        )

    def test_large_dense_rejected(self):
        model = model_for(-0.1, -0.8, site_count=50)
        with pytest.raises(ValueError, match="sparse"):
            ta.build(model, sparse=False)

    def test_spectral_sum_rule(self):
        ham = ta.build(model_for(-0.0881, -0.4693))
        spectrum = ta.diagonalize(ham)
        trace = np.trace(ham.dense())
        total = np.sum(spectrum.eigenvalues)
        assert total == pytest.approx(trace, rel=1e-8, abs=1e-10)

    def test_exchange_symmetry(self):
        spectrum = diagonalized(-0.0881, -0.4693)
        swapped = [ta.TwoAtomState(v.T.copy()) for v in spectrum.eigenvectors[:6]]
        for i, state in enumerate(swapped):
            # nondegenerate eigenvectors have definite swap parity
            gap_below = np.inf if i == 0 else spectrum.eigenvalues[i] - spectrum.eigenvalues[i - 1]
            gap_above = spectrum.eigenvalues[i + 1] - spectrum.eigenvalues[i]
            if min(gap_below, gap_above) < 1e-10:
                continue
            overlap = np.vdot(spectrum.eigenvectors[i].ravel(), state.vector())
            assert abs(abs(overlap) - 1.0) < 1e-8


class TestDiagonalize:
    def test_eigen_residuals(self):
        ham = ta.build(model_for(-0.0881, -0.4693))
        spectrum = ta.diagonalize(ham)
        matrix = ham.dense()
        scale = np.max(np.abs(spectrum.eigenvalues))
        for i in (0, 100, 600):
            vec = spectrum.eigenvectors[i].ravel()
            residual = matrix @ vec - spectrum.eigenvalues[i] * vec
            assert np.max(np.abs(residual)) <= 1e-8 * scale

    def test_no_split_band_without_interaction(self):
        assert len(diagonalized(-0.0355, 0.0).diatom_band) == 0

    def test_split_band_full_size_at_strong_binding(self):
        spectrum = diagonalized(-0.0355, -0.5)
        assert len(spectrum.diatom_band) == 25

    def test_split_band_grows_with_interaction(self):
        gaps = []
        for vdd in (0.5, 1.0, 1.5, 2.0, 2.5):
            spectrum = diagonalized(-0.0355, -vdd)
            assert len(spectrum.diatom_band) == 25
            lo, hi = spectrum.diatom_band_edges
            gaps.append(spectrum.split_gap)
            # edges track the analytic bound band
            alo, ahi = bound_band_edges(-0.0355, -vdd)
            assert lo == pytest.approx(alo, abs=2e-3)
            assert hi == pytest.approx(ahi, abs=2e-3)
        assert all(b > a for a, b in zip(gaps, gaps[1:]))

    def test_bandwidth_quadratic_in_hop(self):
        # pair bandwidth ~ hop^2 at fixed interaction (log-log slope 2 +- 0.2)
        hops = np.array([0.02, 0.04, 0.06, 0.08, 0.1])
        widths = []
        for hop in hops:
            spectrum = diagonalized(-float(hop), -2.16)
            lo, hi = spectrum.diatom_band_edges
            widths.append(hi - lo)
        slope = np.polyfit(np.log(hops), np.log(widths), 1)[0]
        assert slope == pytest.approx(2.0, abs=0.2)

    def test_lithium_point_binds_below_pair_energy(self):
        spectrum = diagonalized(-0.0881, -0.4693)
        assert spectrum.eigenvalues[0] < -0.4693
        assert spectrum.eigenvalues[0] == pytest.approx(
            bound_band_edges(-0.0881, -0.4693)[0], abs=1e-3
        )


class TestGroundState:
    def test_zero_hop_exactly_diagonal(self):
        spectrum = diagonalized(0.0, -1.0)
        state = ta.diatom_ground_state(spectrum)
        assert state.diagonal_weight() == pytest.approx(1.0, abs=1e-12)

    def test_diagonal_weight_strong_binding(self):
        state = ta.diatom_ground_state(diagonalized(-0.0355, -1.0))
        assert state.diagonal_weight() >= 0.99

    def test_diagonal_weight_weak_binding(self):
        state = ta.diatom_ground_state(diagonalized(-0.0355, -0.10))
        assert state.diagonal_weight() < 0.9

    def test_overlap_with_uniform_comb(self):
        spectrum = diagonalized(-0.0355, -1.0)
        state = ta.diatom_ground_state(spectrum)
        n = state.site_count
        uniform = np.sum(np.diag(state.amplitudes)) / np.sqrt(n)
        eta = 0.0355 / 1.0
        assert abs(uniform) ** 2 > 1 - 2.5 * 4 * eta**2

    def test_amplitude_halo_matches_bound_state(self):
        # c_{j, j+1} / c_{j, j} equals (sqrt(U^2+16t^2) - U) / 4t
        t, u = 0.05, 1.0
        state = ta.diatom_ground_state(diagonalized(-t, -u))
        c = state.amplitudes.real
        measured = c[12, 13] / c[12, 12]
        lam = (np.sqrt(u**2 + 16 * t**2) - u) / (4 * t)
        assert measured == pytest.approx(lam, rel=1e-3)


class TestPairFormulas:
    def test_hopping_value(self):
        assert ta.diatom_hopping(-0.09, -0.5) == pytest.approx(-0.0324, rel=1e-12)

    def test_hopping_zero(self):
        assert ta.diatom_hopping(0.0, -0.5) == 0.0

    def test_hopping_needs_interaction(self):
        with pytest.raises(ValueError):
            ta.diatom_hopping(-0.09, 0.0)

    def test_bandwidth_matches_diagonalization(self):
        spectrum = diagonalized(-0.0881, -0.4693)
        lo, hi = spectrum.diatom_band_edges
        assert (hi - lo) == pytest.approx(
            ta.diatom_bandwidth(-0.0881, -0.4693), rel=0.20
        )

    def test_effective_mass_value(self):
        mass = ta.diatom_effective_mass(-0.09, -0.5)
        assert mass == pytest.approx(0.5 / (4 * 0.09**2), rel=1e-12)

    def test_mass_ratio_to_single_atom(self):
        # pair mass / single-atom mass = |hop| / |pair hop|
        single = 1.0 / (2 * 0.09)
        pair = ta.diatom_effective_mass(-0.09, -0.5)
        assert pair / single == pytest.approx(0.09 / 0.0324, rel=1e-10)

    def test_mass_linear_in_interaction(self):
        assert ta.diatom_effective_mass(-0.09, -1.0) == pytest.approx(
            2 * ta.diatom_effective_mass(-0.09, -0.5), rel=1e-12
        )

    def test_mass_curvature_oracle(self):
        # compare with the curvature of the diagonalized pair band at its
        # bottom (ring quasimomenta K_n = 2 pi n / N)
        t, u, n = 0.0355, 0.5, 25
        spectrum = diagonalized(-t, -u)
        band = np.sort(spectrum.eigenvalues[list(spectrum.diatom_band)])
        dk = 2 * np.pi / n
        curvature = 2 * (band[1] - band[0]) / dk**2  # band[1] is the K = +-dk pair
        assert 1.0 / curvature == pytest.approx(
            ta.diatom_effective_mass(-t, -u), rel=0.20
        )


class TestThermalState:
    def test_zero_temperature_ground_state_only(self):
        spectrum = diagonalized(-0.0881, -0.4693)
        thermal = ta.thermal_state(spectrum, 0.0, 1.81e-28)
        assert thermal.indices[np.argmax(thermal.weights)] == 0
        assert np.max(thermal.weights) == pytest.approx(1.0, abs=1e-12)

    def test_boltzmann_ratio_at_bandwidth_temperature(self):
        spectrum = diagonalized(-0.0881, -0.4693)
        erec = 1.8101785620944626e-28
        band = spectrum.eigenvalues[list(spectrum.diatom_band)]
        temperature = (band[-1] - band[0]) * erec / KB
        thermal = ta.thermal_state(spectrum, temperature, erec)
        energies = spectrum.eigenvalues[thermal.indices]
        top = thermal.weights[np.argmax(energies)]
        bottom = thermal.weights[np.argmin(energies)]
        assert top / bottom == pytest.approx(np.exp(-1.0), rel=1e-6)

    def test_weights_normalized(self):
        spectrum = diagonalized(-0.0881, -0.4693)
        thermal = ta.thermal_state(spectrum, 1e-7, 1.81e-28, subset="full")
        assert np.sum(thermal.weights) == pytest.approx(1.0, abs=1e-12)

    def test_negative_temperature_rejected(self):
        spectrum = diagonalized(-0.0881, -0.4693)
        with pytest.raises(ValueError):
            ta.thermal_state(spectrum, -1.0, 1.81e-28)


class TestExternalPotential:
    def test_linear_site_energies(self):
        pot = ta.ExternalPotential.linear(0.04)
        energies = pot.site_energies(5, hop=-0.09)
        assert np.allclose(energies, -0.04 * np.arange(5))

    def test_harmonic_ground_state_width(self):
        # the band-mass ground state of the built well has width sigma_e
        model = model_for(-0.0881, 0.0, boundary="open")
        pot = ta.ExternalPotential.harmonic(sigma_e=3.0, center=12.0)
        ham = ta.build(model, pot)
        spectrum = ta.diagonalize(ham)
        ground = spectrum.eigenvectors[0]
        marginal = np.sum(np.abs(ground) ** 2, axis=1)
        j = np.arange(25)
        width = np.sqrt(np.sum(marginal * (j - 12.0) ** 2))
        assert width == pytest.approx(3.0, rel=0.10)

    def test_species_selection(self):
        pot = ta.ExternalPotential.linear(0.04, species="first")
        model = model_for(-0.1, 0.0, site_count=4, boundary="open")
        matrix = ta.build(model, pot).dense()
        diag = np.diag(matrix).reshape(4, 4)
        # energy depends on the first index only
        assert np.allclose(diag, diag[:, :1])

    def test_validation(self):
        with pytest.raises(ValueError):
            ta.ExternalPotential(kind="quartic")
        with pytest.raises(ValueError):
            ta.ExternalPotential.harmonic(sigma_e=0.0, center=0.0)
        with pytest.raises(ValueError):
            ta.ExternalPotential.linear(0.04, species="third")
