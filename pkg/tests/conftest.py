"""Shared fixtures; expensive spectra and protocol runs are session-cached."""

import warnings

import numpy as np
import pytest

from latticeepr import band_structure, distributions, protocol, two_atom
from latticeepr.parameters import ExperimentConfig, ModelParams, lithium_default


@pytest.fixture(scope="session")
def lithium_config() -> ExperimentConfig:
    return lithium_default()


@pytest.fixture(scope="session")
def lithium_model(lithium_config) -> ModelParams:
    return lithium_config.model()


def model_for(hop: float, vdd: float, site_count: int = 25, boundary: str = "periodic"):
    """Hand-tuned model point (recoil scale fixed to the lithium value)."""
    return ModelParams(
        recoil_energy=1.8101785620944626e-28,
        lattice_depth=3.93,
        hop=hop,
        vdd=vdd,
        site_count=site_count,
        lattice_constant=161.5e-9,
        boundary=boundary,
    )


_SPECTRA: dict = {}


def diagonalized(hop: float, vdd: float, site_count: int = 25, boundary: str = "periodic"):
    key = (hop, vdd, site_count, boundary)
    if key not in _SPECTRA:
        ham = two_atom.build(model_for(hop, vdd, site_count, boundary))
        _SPECTRA[key] = two_atom.diagonalize(ham)
    return _SPECTRA[key]


_WANNIER: dict = {}


def wannier_basis(u0: float, site_count: int = 25, points_per_cell: int = 64):
    key = (u0, site_count, points_per_cell)
    if key not in _WANNIER:
        spectrum = band_structure.bloch_spectrum(u0, n_k=site_count)
        _WANNIER[key] = band_structure.wannier(spectrum, points_per_cell=points_per_cell)
    return _WANNIER[key]


@pytest.fixture(scope="session")
def wannier393():
    return wannier_basis(3.93)


@pytest.fixture(scope="session")
def wannier_measure():
    # deep readout lattice of the documented working point
    return wannier_basis(13.4)


@pytest.fixture(scope="session")
def fig7a_state():
    """Ground state at the |V_hop| = 0.0355, |V_dd| = 1.0 working point."""
    return two_atom.diatom_ground_state(diagonalized(-0.0355, -1.0))


@pytest.fixture(scope="session")
def protocol_run(lithium_config):
    """The documented separation run: snapshots at 0, 1.4e-4, 2.16e-4 s."""
    config = lithium_config
    prot = config.protocol
    model = config.model(boundary=prot.boundary)
    tilt = two_atom.ExternalPotential.linear(
        prot.slope_erec_per_site, species=prot.tilt_species
    )
    hamiltonian = two_atom.build(model, tilt)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        psi0 = protocol.initial_state(
            prot.sigma_e_sites, prot.center_site, config.site_count
        )
    dense = sorted(set(np.linspace(0, 2.3e-4, 24)) | set(prot.snapshot_times_s))
    trace = protocol.evolve(
        psi0,
        hamiltonian,
        dense,
        erec_joule=model.recoil_energy,
        origin=prot.center_site,
        band=prot.diatom_band_width,
    )
    return config, model, psi0, trace


def snapshot_at(trace, t: float):
    idx = int(np.argmin(np.abs(trace.times - t)))
    assert abs(trace.times[idx] - t) < 1e-9
    return trace.states[idx], trace.diagnostics[idx]


@pytest.fixture(scope="session")
def operating_joints(lithium_config, wannier_measure):
    """Thermal position (10 nK) and momentum (100 nK) joints at the
    documented working point."""
    model = lithium_config.model()
    spectrum = diagonalized(model.hop, model.vdd)
    pos_w = two_atom.thermal_state(
        spectrum, lithium_config.temperature_position_k, model.recoil_energy
    )
    mom_w = two_atom.thermal_state(
        spectrum, lithium_config.temperature_momentum_k, model.recoil_energy
    )
    pos = distributions.joint_from_thermal(pos_w, spectrum, wannier_measure, "position")
    mom = distributions.joint_from_thermal(mom_w, spectrum, wannier_measure, "momentum")
    return model, spectrum, pos, mom
