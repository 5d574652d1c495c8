"""Preparation protocol: initial state, tilt evolution, pair separation."""

import dataclasses
import warnings

import numpy as np
import pytest

from conftest import diagonalized, model_for, snapshot_at
from latticeepr import protocol as pr
from latticeepr import two_atom as ta
from latticeepr.constants import HBAR, KB


class TestInitialState:
    def test_diagonal_weight_matches_gaussian_sum(self):
        # sum_j alpha_j^4 ~ a / (2 sqrt(pi) sigma_E) for a centered envelope
        state = pr.initial_state(5.0, 12.0, 25)
        assert state.diagonal_weight() == pytest.approx(
            1.0 / (2 * np.sqrt(np.pi) * 5.0), rel=0.05
        )

    def test_narrow_envelope_single_site(self):
        with pytest.warns(UserWarning, match="several sites"):
            state = pr.initial_state(0.05, 12.0, 25)
        assert abs(state.amplitudes[12, 12]) == pytest.approx(1.0, abs=1e-10)

    def test_swap_symmetry(self):
        state = pr.initial_state(5.0, 12.0, 25)
        assert np.allclose(state.amplitudes, state.amplitudes.T)

    def test_boundary_clipping_warns(self):
        with pytest.warns(UserWarning, match="clipped"):
            pr.initial_state(5.0, 3.0, 25)

    def test_rejects_nonpositive_width(self):
        with pytest.raises(ValueError):
            pr.initial_state(0.0, 12.0, 25)


@pytest.fixture(scope="module")
def free_setup():
    model = model_for(-0.0881, -0.4693, boundary="open")
    hamiltonian = ta.build(model)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        state = pr.initial_state(5.0, 12.0, 25)
    return model, hamiltonian, state


class TestEvolve:
    def test_time_zero_identity(self, free_setup):
        _, hamiltonian, state = free_setup
        trace = pr.evolve(state, hamiltonian, [0.0])
        assert np.allclose(trace.final().amplitudes, state.amplitudes, atol=1e-12)

    def test_eigenstate_stationary(self, free_setup):
        model, hamiltonian, _ = free_setup
        spectrum = ta.diagonalize(hamiltonian)
        eigen = spectrum.state(3)
        trace = pr.evolve(eigen, hamiltonian, [37.5])
        overlap = abs(np.vdot(trace.final().vector(), eigen.vector()))
        assert overlap == pytest.approx(1.0, abs=1e-10)

    def test_norm_conserved(self, free_setup):
        _, hamiltonian, state = free_setup
        trace = pr.evolve(state, hamiltonian, np.linspace(0, 300, 7))
        for snapshot in trace.states:
            assert np.sum(np.abs(snapshot.amplitudes) ** 2) == pytest.approx(
                1.0, abs=1e-8
            )

    def test_energy_conserved(self, free_setup):
        _, hamiltonian, state = free_setup
        trace = pr.evolve(state, hamiltonian, np.linspace(0, 300, 5))
        energies = [hamiltonian.expectation(s) for s in trace.states]
        assert np.max(np.abs(np.diff(energies))) < 1e-8 * max(1.0, abs(energies[0]))

    def test_time_reversal(self, free_setup):
        _, hamiltonian, state = free_setup
        forward = pr.evolve(state, hamiltonian, [140.0]).final()
        back = pr.evolve(forward, hamiltonian, [-140.0]).final()
        fidelity = abs(np.vdot(back.vector(), state.vector())) ** 2
        assert fidelity == pytest.approx(1.0, abs=1e-6)

    def test_monotone_times_required(self, free_setup):
        _, hamiltonian, state = free_setup
        with pytest.raises(ValueError, match="non-decreasing"):
            pr.evolve(state, hamiltonian, [1.0, 0.5])

    def test_zero_slope_control(self, free_setup):
        # no interaction, no tilt: both centroids stay at the start site
        model = model_for(-0.0881, 0.0, boundary="open")
        hamiltonian = ta.build(model)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            state = pr.initial_state(5.0, 12.0, 25)
        trace = pr.evolve(state, hamiltonian, [150.0], origin=12.0)
        diag = trace.diagnostics[-1]
        assert diag.diatom_centroid == pytest.approx(12.0, abs=0.1)
        assert diag.single_centroid == pytest.approx(12.0, abs=0.1)


class TestSeparationRun:
    def test_displacement_ratio_tracks_hop_ratio(self, protocol_run):
        config, model, _, trace = protocol_run
        expected = abs(model.hop / model.diatom_hop())
        for t in (1.4e-4, 2.16e-4):
            _, diag = snapshot_at(trace, t)
            assert diag.displacement_ratio == pytest.approx(expected, rel=0.30)

    def test_bloch_oscillation_bound(self, protocol_run):
        config, model, _, trace = protocol_run
        bound = 4 * abs(model.hop) / config.protocol.slope_erec_per_site
        drift = [
            abs(d.single_centroid - config.protocol.center_site)
            for d in trace.diagnostics
            if np.isfinite(d.single_centroid)
        ]
        assert max(drift) <= 1.2 * bound

    def test_singles_cross_ejection_line(self, protocol_run):
        config, _, _, trace = protocol_run
        _, diag = snapshot_at(trace, 2.16e-4)
        assert diag.single_centroid > config.protocol.ejection_line_site
        assert diag.diatom_centroid < config.protocol.ejection_line_site

    def test_retained_fraction_matches_bound_capture(self, protocol_run):
        # the surviving pair fraction equals the initial overlap with the
        # split-off band (~ a / sigma_E); it is conserved by the tilt
        config, model, psi0, trace = protocol_run
        spectrum = diagonalized(model.hop, model.vdd, boundary="open")
        capture = pr.bound_band_projection(psi0, spectrum)
        assert capture == pytest.approx(0.2, rel=0.2)  # ~ a / sigma_E
        _, diag = snapshot_at(trace, 2.16e-4)
        assert diag.diagonal_weight == pytest.approx(capture, rel=0.25)

    def test_initial_ratio_undefined(self):
        # an unclipped product state sits exactly at its center: no drift,
        # no ratio
        state = pr.initial_state(5.0, 12.0, 25)
        diag = pr.separation_diagnostics(state, origin=12.0)
        assert np.isnan(diag.displacement_ratio)

    def test_heavy_mass_freezing(self, protocol_run):
        # 10x smaller hop -> 100x smaller pair hop -> pair drift drops >= 50x
        config, model, psi0, trace = protocol_run
        frozen_model = dataclasses.replace(model, hop=model.hop / 10)
        tilt = ta.ExternalPotential.linear(
            config.protocol.slope_erec_per_site, species=config.protocol.tilt_species
        )
        frozen = pr.evolve(
            psi0,
            ta.build(frozen_model, tilt),
            [1.4e-4],
            erec_joule=model.recoil_energy,
            origin=config.protocol.center_site,
        )
        _, diag = snapshot_at(trace, 1.4e-4)
        drift = abs(diag.diatom_centroid - config.protocol.center_site)
        frozen_drift = abs(
            frozen.diagnostics[-1].diatom_centroid - config.protocol.center_site
        )
        assert drift / frozen_drift >= 50


class TestPostselect:
    def test_identity_on_diagonal_state(self):
        n = 25
        amp = np.zeros((n, n), dtype=complex)
        np.fill_diagonal(amp, 1.0 / np.sqrt(n))
        state = ta.TwoAtomState(amp)
        kept, retained = pr.postselect_diatoms(state, region=None, band=0)
        assert retained == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(kept.amplitudes, state.amplitudes)

    def test_region_and_band_cut(self, protocol_run):
        config, _, psi0, trace = protocol_run
        final, _ = snapshot_at(trace, 2.16e-4)
        region = (0.0, config.protocol.ejection_line_site)
        kept, retained = pr.postselect_diatoms(final, region=region, band=1)
        assert 0.0 < retained < 1.0
        j, l = np.indices(kept.amplitudes.shape)
        outside = (np.abs(j - l) > 1) | (j > region[1]) | (l > region[1])
        assert np.max(np.abs(kept.amplitudes[outside])) == 0.0

    def test_retained_close_to_band_weight(self, protocol_run):
        config, _, _, trace = protocol_run
        final, diag = snapshot_at(trace, 2.16e-4)
        kept, retained = pr.postselect_diatoms(
            final, region=(0.0, config.protocol.ejection_line_site), band=1
        )
        assert retained <= diag.band_weight + 1e-12
        assert retained > 0.6 * diag.band_weight

    def test_surviving_comb_resembles_envelope(self, protocol_run):
        # after removing the rigid drift and boost the retained pairs carry
        # the squared initial envelope on the diagonal
        config, _, _, trace = protocol_run
        final, _ = snapshot_at(trace, 2.16e-4)
        kept, _ = pr.postselect_diatoms(
            final, region=(0.0, config.protocol.ejection_line_site), band=1
        )
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            alpha = pr.gaussian_envelope(
                config.protocol.sigma_e_sites,
                config.protocol.center_site,
                config.site_count,
            )
        fidelity = pr.diagonal_comb_fidelity(kept, alpha**2)
        assert fidelity > 0.75

    def test_empty_postselection_rejected(self):
        state = ta.TwoAtomState(
            np.eye(25, k=5, dtype=complex) / np.sqrt(20)
        )
        with pytest.raises(ValueError, match="retained"):
            pr.postselect_diatoms(state, region=None, band=1)


class TestCoolingRequirements:
    def test_initial_bound_matches_trap_frequency(self):
        # sigma_E = 5 a for lithium corresponds to a ~1 kHz trap; the bound
        # is hbar omega / (2 kB) ~ 30 nK scale
        mass, a = 1.1624e-26, 161.5e-9
        sigma_e = 5 * a
        bounds = pr.cooling_requirements(sigma_e, mass)
        omega = HBAR / (2 * mass * sigma_e**2)
        assert bounds.initial_stage == pytest.approx(
            HBAR * omega / (2 * KB), rel=1e-12
        )
        assert omega / (2 * np.pi) == pytest.approx(1000.0, rel=0.25)
        assert bounds.initial_stage == pytest.approx(30e-9, rel=0.25)

    def test_quadratic_width_scaling(self):
        mass = 1.1624e-26
        one = pr.cooling_requirements(5 * 161.5e-9, mass).initial_stage
        two = pr.cooling_requirements(10 * 161.5e-9, mass).initial_stage
        assert one / two == pytest.approx(4.0, rel=1e-12)

    def test_band_stage_bound(self):
        erec = 1.8101785620944626e-28
        bounds = pr.cooling_requirements(
            5 * 161.5e-9, 1.1624e-26, diatom_hop_erec=-0.0324, erec_joule=erec
        )
        assert bounds.band_stage == pytest.approx(4 * 0.0324 * erec / KB, rel=1e-12)

    def test_band_stage_needs_energy_scale(self):
        with pytest.raises(ValueError):
            pr.cooling_requirements(1e-6, 1e-26, diatom_hop_erec=-0.03)
