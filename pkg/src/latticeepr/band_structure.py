"""Lowest-band physics of the 1D cosine lattice.

Everything here works in natural units: lengths in lattice constants ``a``,
energies in recoil energies ``E_rec``, ``hbar = 1``.  The reciprocal lattice
vector is ``G = 2 pi`` and the free dispersion is ``E(k) = (k/pi)^2``.

The lattice potential is ``-(U0/2) cos(2 pi x)`` so that the potential
minima (the sites) sit at integer x; this is the quantum-pendulum problem
with the origin placed on a well, which leaves the spectrum untouched and
makes the Wannier functions even about their site centers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

G = 2.0 * np.pi  # reciprocal lattice vector, 1/a


class ConvergenceError(RuntimeError):
    """Plane-wave eigenvalues failed to converge under basis doubling."""


class GaugeError(RuntimeError):
    """Could not phase-fix a Bloch function at any reference point."""


def quasimomentum_grid(n_k: int) -> np.ndarray:
    """Symmetric k grid spanning the first Brillouin zone [-pi, pi)/a.

    Always contains k = 0; for even n_k the -pi/a edge point is included
    (and is its own inversion partner modulo G).
    """
    return G / n_k * (np.arange(n_k) - n_k // 2)


def _pendulum_tridiagonal(u0: float, k: float, n_planewaves: int):
    m = n_planewaves // 2
    n = np.arange(-m, m + 1)
    diag = ((k + G * n) / np.pi) ** 2
    off = np.full(n_planewaves - 1, -u0 / 4.0)
    return diag, off


@dataclass(frozen=True)
class BlochSpectrum:
    """Bands of the lattice Hamiltonian on a discrete Brillouin-zone grid.

    ``band_energies[b, ik]`` is the b-th band at quasimomentum
    ``quasimomenta[ik]``; ``band_states[ik]`` holds the real plane-wave
    coefficients of the lowest band (coefficient n multiplies
    ``exp(i (k + n G) x)``).
    """

    u0: float
    quasimomenta: np.ndarray
    band_energies: np.ndarray
    band_states: np.ndarray
    n_planewaves: int

    @property
    def n_k(self) -> int:
        return self.quasimomenta.size

    def lowest_band(self) -> np.ndarray:
        return self.band_energies[0]


def bloch_spectrum(
    u0: float,
    n_planewaves: int = 33,
    n_k: int = 64,
    check_convergence: bool = True,
    tol: float = 1e-10,
) -> BlochSpectrum:
    """Diagonalize the plane-wave lattice Hamiltonian at every k point.

    The matrix is tridiagonal: kinetic terms ((k + nG)/pi)^2 on the
    diagonal, -U0/4 on the off-diagonals.  With ``check_convergence`` the
    lowest three bands are re-solved in a doubled basis and must agree to
    ``tol``.
    """
    if u0 < 0:
        raise ValueError(f"lattice depth must be non-negative, got {u0}")
    if n_planewaves % 2 == 0 or n_planewaves < 21:
        raise ValueError(f"n_planewaves must be odd and >= 21, got {n_planewaves}")
    if n_k < 8:
        raise ValueError(f"n_k must be >= 8, got {n_k}")

    ks = quasimomentum_grid(n_k)
    energies = np.empty((n_planewaves, n_k))
    states = np.empty((n_k, n_planewaves))
    worst = 0.0
    for ik, k in enumerate(ks):
        diag, off = _pendulum_tridiagonal(u0, k, n_planewaves)
        vals, vecs = eigh_tridiagonal(diag, off)
        energies[:, ik] = vals
        states[ik] = vecs[:, 0]
        if check_convergence:
            diag2, off2 = _pendulum_tridiagonal(u0, k, 2 * n_planewaves + 1)
            vals2 = eigh_tridiagonal(diag2, off2, eigvals_only=True)
            worst = max(worst, float(np.max(np.abs(vals[:3] - vals2[:3]))))
    if check_convergence and worst > tol:
        raise ConvergenceError(
            f"lowest bands not converged at n_planewaves={n_planewaves}: "
            f"residual {worst:.3e} E_rec > {tol:.1e}"
        )
    return BlochSpectrum(float(u0), ks, energies, states, n_planewaves)


@dataclass(frozen=True)
class HoppingResult:
    """Tight-binding reduction of the lowest band.

    ``hop`` and ``next_hop`` are the nearest- and next-nearest-neighbor
    Fourier coefficients of the dispersion, ``nn_deviation`` the relative
    mismatch between 4|hop| and the bandwidth (the part carried by longer
    hops).  ``tight_binding_valid`` is False when that mismatch exceeds 5%.
    """

    hop: float
    next_hop: float
    center_energy: float
    bandwidth: float
    nn_deviation: float
    tight_binding_valid: bool


def hopping_exact(spectrum: BlochSpectrum) -> HoppingResult:
    """Hopping from the Fourier transform of the computed lowest band.

    Negative for the cosine lattice: the band minimum is at k = 0.
    """
    band = spectrum.lowest_band()
    ks = spectrum.quasimomenta
    h0 = float(np.mean(band))
    hop = float(np.mean(band * np.cos(ks)))
    next_hop = float(np.mean(band * np.cos(2.0 * ks)))
    bandwidth = float(np.max(band) - np.min(band))
    if bandwidth > 0:
        nn_deviation = abs(4.0 * abs(hop) - bandwidth) / bandwidth
    else:
        nn_deviation = 0.0
    return HoppingResult(
        hop=hop,
        next_hop=next_hop,
        center_energy=h0,
        bandwidth=bandwidth,
        nn_deviation=nn_deviation,
        tight_binding_valid=bool(nn_deviation <= 0.05),
    )


def hopping_approx(u0: float) -> float:
    """Moderate-depth estimate |V_hop| ~ (1/4) exp(-0.26 U0), in E_rec.

    Stated for U0 up to ~15 E_rec; returns the magnitude.
    """
    if u0 < 0:
        raise ValueError(f"lattice depth must be non-negative, got {u0}")
    return 0.25 * np.exp(-0.26 * u0)


def effective_mass(bandwidth: float, lattice_constant: float = 1.0, hbar: float = 1.0) -> float:
    """Band-bottom effective mass 2 hbar^2 / (a^2 V_B).

    Unit-agnostic: pass SI values for an SI answer, or leave the defaults
    for natural units (where the bare mass is pi^2/2).
    """
    if bandwidth <= 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    return 2.0 * hbar**2 / (lattice_constant**2 * bandwidth)


def curvature_mass(spectrum: BlochSpectrum, hbar: float = 1.0) -> float:
    """hbar^2 / (d^2E/dk^2) at the bottom of the computed lowest band."""
    ks = spectrum.quasimomenta
    band = spectrum.lowest_band()
    i0 = int(np.argmin(np.abs(ks)))
    if not np.isclose(ks[i0], 0.0):
        raise ValueError("k = 0 not on the quasimomentum grid")
    dk = ks[1] - ks[0]
    d2 = (band[(i0 + 1) % ks.size] - 2.0 * band[i0] + band[i0 - 1]) / dk**2
    return hbar**2 / d2


def mathieu_band_edges(u0: float) -> tuple[float, float]:
    """Lowest-band edges from Mathieu characteristic values (test oracle).

    With x = a v / pi the lattice Schroedinger equation is Mathieu's
    equation with characteristic parameter q = U0 / (4 E_rec); the lowest
    band spans [a_0(q), b_1(q)].
    """
    from scipy.special import mathieu_a, mathieu_b

    q = u0 / 4.0
    return float(mathieu_a(0, q)), float(mathieu_b(1, q))


@dataclass(frozen=True)
class WannierBasis:
    """Lowest-band Wannier function on a grid covering the whole lattice.

    The grid spans x in [-1/2, N - 1/2) with ``points_per_cell`` samples
    per lattice constant; site j is centered at x = j and its Wannier
    function is the periodic translate of ``wannier_0`` by j cells.
    """

    grid: np.ndarray
    wannier_0: np.ndarray
    site_count: int
    points_per_cell: int
    hop: float
    center_energy: float
    u0: float
    sigma: float
    mode_freqs: np.ndarray
    mode_amps: np.ndarray

    @property
    def dx(self) -> float:
        return 1.0 / self.points_per_cell

    def centered_grid(self) -> np.ndarray:
        """Grid coordinates wrapped to [-N/2, N/2), centered on site 0."""
        n = self.site_count
        return (self.grid + n / 2.0) % n - n / 2.0

    def site_function(self, site: int) -> np.ndarray:
        """chi_j on the common grid (periodic translate of chi_0)."""
        return np.roll(self.wannier_0, site * self.points_per_cell)

    def site_matrix(self) -> np.ndarray:
        """(N, n_grid) array of all translated Wannier functions."""
        return np.stack([self.site_function(j) for j in range(self.site_count)])

    def evaluate(self, x) -> np.ndarray:
        """chi_0 at arbitrary coordinates (periodic over N cells)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        vals = np.exp(1j * np.outer(x, self.mode_freqs)) @ self.mode_amps
        return vals.real

    def momentum_transform(self, p) -> np.ndarray:
        """Fourier transform chi~(p) = (2 pi)^(-1/2) int chi_0(x) e^{-ipx} dx."""
        p = np.atleast_1d(np.asarray(p, dtype=float))
        xc = self.centered_grid()
        phases = np.exp(-1j * np.outer(p, xc))
        return (phases @ self.wannier_0) * self.dx / np.sqrt(2.0 * np.pi)


def wannier(
    spectrum: BlochSpectrum, site: int = 0, points_per_cell: int = 64
) -> WannierBasis:
    """Build the lowest-band Wannier function centered at ``site``.

    Gauge: each Bloch function is made real and positive at the site
    center, which in 1D yields the real, even, exponentially localized
    (maximally localized) Wannier function.  The lattice size equals the
    number of k points of ``spectrum``.
    """
    n = spectrum.n_k
    ks = spectrum.quasimomenta
    m = spectrum.n_planewaves // 2
    pw = np.arange(-m, m + 1)

    # Phase fix: real and positive at the site center.  If a Bloch function
    # vanishes there, retry at shifted reference points before giving up.
    coeffs = np.empty((n, spectrum.n_planewaves), dtype=complex)
    for ik in range(n):
        c = spectrum.band_states[ik].astype(complex)
        for x_ref in (0.0, 0.25, 0.125):
            value = np.sum(c * np.exp(1j * (ks[ik] + G * pw) * x_ref))
            if abs(value) > 1e-8:
                coeffs[ik] = c * (value.conjugate() / abs(value))
                break
        else:
            raise GaugeError(
                f"could not gauge-fix Bloch function at k={ks[ik]:.4f}: "
                "vanishes at all reference points"
            )

    freqs = (ks[:, None] + G * pw[None, :]).ravel()
    amps = (coeffs / n).ravel().astype(complex)

    n_grid = n * points_per_cell
    grid = -0.5 + np.arange(n_grid) / points_per_cell
    values = np.exp(1j * np.outer(grid, freqs)) @ amps
    imag_residual = float(np.max(np.abs(values.imag)))
    if imag_residual > 1e-8:
        raise GaugeError(f"Wannier function not real: residual {imag_residual:.2e}")
    chi0 = values.real

    dx = 1.0 / points_per_cell
    norm = float(np.sum(chi0**2) * dx)
    chi0 = chi0 / np.sqrt(norm)
    amps = amps / np.sqrt(norm)

    xc = (grid + n / 2.0) % n - n / 2.0
    sigma = float(np.sqrt(np.sum(xc**2 * chi0**2) * dx))

    hopping = hopping_exact(spectrum)
    basis = WannierBasis(
        grid=grid,
        wannier_0=np.roll(chi0, site * points_per_cell),
        site_count=n,
        points_per_cell=points_per_cell,
        hop=hopping.hop,
        center_energy=hopping.center_energy,
        u0=spectrum.u0,
        sigma=sigma,
        mode_freqs=freqs,
        mode_amps=amps,
    )
    return basis


def gaussian_sigma(u0: float) -> float:
    """Ground-well Gaussian width: sigma^2 = (1/pi^2) sqrt(1/(2 U0)), in a."""
    if u0 <= 0:
        raise ValueError(f"Gaussian width diverges for lattice depth {u0}")
    return (1.0 / np.pi) * (2.0 * u0) ** -0.25


def gaussian_site_function(grid: np.ndarray, center: float, sigma: float) -> np.ndarray:
    """Normalized Gaussian orbital (2 pi s^2)^(-1/4) exp(-(x-c)^2 / 4 s^2)."""
    return (2.0 * np.pi * sigma**2) ** -0.25 * np.exp(-((grid - center) ** 2) / (4.0 * sigma**2))


def gaussian_approx(
    u0: float, basis: WannierBasis | None = None
) -> tuple[float, float]:
    """Gaussian width sigma_G and overlap fidelity |<G|chi_0>|^2.

    Computes a Wannier basis on the fly when none is supplied.
    """
    sigma_g = gaussian_sigma(u0)
    if basis is None:
        spectrum = bloch_spectrum(u0, n_k=16)
        basis = wannier(spectrum)
    xc = basis.centered_grid()
    gauss = gaussian_site_function(xc, 0.0, sigma_g)
    overlap = float(np.sum(gauss * basis.wannier_0) * basis.dx)
    return sigma_g, overlap**2


def gaussian_hopping(u0: float) -> float:
    """<G_0|H|G_1> between Gaussian orbitals on neighboring sites.

    Only useful as a cautionary number: the Gaussian tails are wrong for
    tunneling, so this disagrees badly with the exact band result.
    """
    sigma = gaussian_sigma(u0)
    span = 1.0 + 10.0 * sigma
    x = np.linspace(-span, span + 1.0, 20001)
    dx = x[1] - x[0]
    g0 = gaussian_site_function(x, 0.0, sigma)
    g1 = gaussian_site_function(x, 1.0, sigma)
    # analytic second derivative of the displaced Gaussian
    g1_xx = g1 * (((x - 1.0) ** 2) / (4.0 * sigma**4) - 1.0 / (2.0 * sigma**2))
    kinetic = -np.sum(g0 * g1_xx) * dx / np.pi**2
    potential = -0.5 * u0 * np.sum(g0 * np.cos(2.0 * np.pi * x) * g1) * dx
    return float(kinetic + potential)


def dispersion_csv_rows(spectrum: BlochSpectrum, n_bands: int = 3):
    """(k, E_0(k), ..., E_{n-1}(k)) rows for the band dump."""
    for ik, k in enumerate(spectrum.quasimomenta):
        yield [k, *spectrum.band_energies[:n_bands, ik]]
