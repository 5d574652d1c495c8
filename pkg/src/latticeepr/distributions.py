"""Joint position/momentum distributions of two-atom states and the
widths that quantify their correlations.

Positions are in lattice constants a, momenta in hbar/a, hbar = 1.  The
momentum comb of a lattice state repeats with the reciprocal lattice
vector 2 pi; the figure of merit is s = 1 / (2 dx_minus dp_plus), where
dx_minus is the half-width of the central peak of the relative-position
marginal and dp_plus that of the total-momentum marginal.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .band_structure import WannierBasis
from .constants import HBAR, KB
from .two_atom import ThermalWeights, TwoAtomState

RECIPROCAL = 2.0 * np.pi  # momentum comb period, hbar/a units


@dataclass(frozen=True)
class JointDistribution:
    """2D probability density with its axes; kind is position|momentum."""

    axis1: np.ndarray
    axis2: np.ndarray
    density: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in ("position", "momentum"):
            raise ValueError(f"kind must be position or momentum, got {self.kind!r}")
        if self.density.shape != (self.axis1.size, self.axis2.size):
            raise ValueError("density shape does not match axes")
        if np.any(self.density < -1e-14):
            raise ValueError("density must be non-negative")

    @property
    def cell_area(self) -> float:
        return float((self.axis1[1] - self.axis1[0]) * (self.axis2[1] - self.axis2[0]))

    @property
    def mass(self) -> float:
        return float(np.sum(self.density) * self.cell_area)


@dataclass(frozen=True)
class Marginal:
    """1D density over a derived coordinate (difference or sum)."""

    grid: np.ndarray
    density: np.ndarray


def _site_positions(n: int) -> np.ndarray:
    return np.arange(n, dtype=float)


def _position_amplitude(state: TwoAtomState, site_matrix: np.ndarray) -> np.ndarray:
    # psi(x1, x2) = sum_{jl} c_jl chi_j(x1) chi_l(x2)
    return site_matrix.T @ state.amplitudes @ site_matrix


def position_joint(
    state: TwoAtomState,
    basis: WannierBasis,
    points_per_cell: int | None = None,
) -> JointDistribution:
    """P(x1, x2) including the Wannier cross terms."""
    return thermal_position_joint([state], [1.0], basis, points_per_cell)


def thermal_position_joint(
    states: Sequence[TwoAtomState],
    weights: Sequence[float],
    basis: WannierBasis,
    points_per_cell: int | None = None,
) -> JointDistribution:
    """Incoherent mixture of per-state joint position densities."""
    res = points_per_cell or basis.points_per_cell
    if res < 16:
        raise ValueError(f"resolution below 16 points per cell: {res}")
    if res != basis.points_per_cell:
        raise ValueError(
            "resolution must match the Wannier grid; rebuild the basis with "
            f"points_per_cell={res}"
        )
    site_matrix = basis.site_matrix()
    grid = basis.grid
    density = np.zeros((grid.size, grid.size))
    for state, weight in zip(states, weights):
        amp = _position_amplitude(state, site_matrix)
        density += weight * np.abs(amp) ** 2
    return JointDistribution(grid.copy(), grid.copy(), density, "position")


def default_momentum_grid(basis: WannierBasis) -> np.ndarray:
    """Uniform grid fine enough to resolve the 1/(N a) comb teeth
    (spacing 2 pi / 8N), spanning at least +-3 envelope widths and the
    first few reciprocal-lattice shoulders of the Wannier transform so
    the captured mass is complete to ~1e-8."""
    span = max(3.0 / basis.sigma, 3.5 * RECIPROCAL)
    spacing = RECIPROCAL / (8.0 * basis.site_count)
    n_half = int(np.ceil(span / spacing))
    return spacing * np.arange(-n_half, n_half + 1)


def momentum_joint(
    state: TwoAtomState,
    basis: WannierBasis,
    grid: np.ndarray | None = None,
) -> JointDistribution:
    """P(p1, p2) = |sum_jl c_jl e^{-i(p1 x_j + p2 x_l)} chi~(p1) chi~(p2)|^2."""
    return thermal_momentum_joint([state], [1.0], basis, grid)


def thermal_momentum_joint(
    states: Sequence[TwoAtomState],
    weights: Sequence[float],
    basis: WannierBasis,
    grid: np.ndarray | None = None,
) -> JointDistribution:
    """Incoherent mixture of per-state joint momentum densities."""
    p = default_momentum_grid(basis) if grid is None else np.asarray(grid, float)
    envelope = basis.momentum_transform(p)
    sites = _site_positions(states[0].site_count)
    phases = np.exp(-1j * np.outer(p, sites))
    density = np.zeros((p.size, p.size))
    for state, weight in zip(states, weights):
        structure = phases @ state.amplitudes @ phases.T
        amp = envelope[:, None] * structure * envelope[None, :]
        density += weight * np.abs(amp) ** 2
    return JointDistribution(p.copy(), p.copy(), density, "momentum")


def joint_from_thermal(
    thermal: ThermalWeights, spectrum, basis: WannierBasis, kind: str, **kwargs
) -> JointDistribution:
    states = thermal.states(spectrum)
    if kind == "position":
        return thermal_position_joint(states, thermal.weights, basis, **kwargs)
    return thermal_momentum_joint(states, thermal.weights, basis, **kwargs)


# ---------------------------------------------------------------------------
# Marginals over difference / sum coordinates and width extraction


def difference_marginal(joint: JointDistribution) -> Marginal:
    """Density of u = axis1 - axis2."""
    return _combined_marginal(joint, sign=-1)


def sum_marginal(joint: JointDistribution) -> Marginal:
    """Density of v = axis1 + axis2."""
    return _combined_marginal(joint, sign=+1)


def _combined_marginal(joint: JointDistribution, sign: int) -> Marginal:
    n = joint.axis1.size
    step = joint.axis1[1] - joint.axis1[0]
    i = np.arange(n)
    if sign < 0:
        index = (i[:, None] - i[None, :]) + (n - 1)
        grid = step * np.arange(-(n - 1), n)
    else:
        index = i[:, None] + i[None, :]
        grid = joint.axis1[0] * 2.0 + step * np.arange(2 * n - 1)
    density = np.bincount(
        index.ravel(), weights=joint.density.ravel(), minlength=2 * n - 1
    )
    # one factor of the cell side stays integrated out
    return Marginal(grid, density * step)


def axis_marginal(joint: JointDistribution, which_atom: int = 1) -> Marginal:
    """Single-particle marginal along one axis."""
    step = joint.axis2[1] - joint.axis2[0]
    if which_atom == 1:
        return Marginal(joint.axis1.copy(), joint.density.sum(axis=1) * step)
    if which_atom == 2:
        return Marginal(joint.axis2.copy(), joint.density.sum(axis=0) * step)
    raise ValueError(f"which_atom must be 1 or 2, got {which_atom}")


@dataclass(frozen=True)
class PeakWidth:
    hwhm: float
    center: float
    sigma: float       # second moment of the central lobe
    height: float


def central_peak_width(marginal: Marginal, near: float = 0.0) -> PeakWidth:
    """Half-width at half-maximum of the peak nearest ``near``.

    The peak must be a local maximum; the half-height crossings are found
    by linear interpolation.  The lobe-restricted second moment is
    returned alongside as a Gaussian-equivalent width.
    """
    grid, dens = marginal.grid, marginal.density
    if dens.size < 5 or np.max(dens) <= 0:
        raise ValueError("no identifiable central peak: empty density")
    inner = np.arange(1, dens.size - 1)
    is_max = (dens[inner] >= dens[inner - 1]) & (dens[inner] >= dens[inner + 1])
    peaks = inner[is_max & (dens[inner] > 0.05 * np.max(dens))]
    if peaks.size == 0:
        raise ValueError("no identifiable central peak")
    ip = peaks[np.argmin(np.abs(grid[peaks] - near))]
    height = dens[ip]
    half = height / 2.0

    def crossing(direction: int) -> float:
        i = ip
        while 0 < i < dens.size - 1 and dens[i + direction] >= half:
            i += direction
            if dens[i] > height:  # climbed into a taller neighbor peak
                raise ValueError("central peak not isolated at half height")
        j = i + direction
        if j < 0 or j >= dens.size:
            raise ValueError("half-height crossing outside the grid")
        frac = (dens[i] - half) / (dens[i] - dens[j])
        return grid[i] + frac * (grid[j] - grid[i])

    left = crossing(-1)
    right = crossing(+1)
    hwhm = 0.5 * (right - left)

    # second moment over the lobe between the surrounding minima
    lo = ip
    while lo > 0 and dens[lo - 1] < dens[lo]:
        lo -= 1
    hi = ip
    while hi < dens.size - 1 and dens[hi + 1] < dens[hi]:
        hi += 1
    lobe = slice(lo, hi + 1)
    mass = np.trapezoid(dens[lobe], grid[lobe])
    mean = np.trapezoid(grid[lobe] * dens[lobe], grid[lobe]) / mass
    var = np.trapezoid((grid[lobe] - mean) ** 2 * dens[lobe], grid[lobe]) / mass
    return PeakWidth(hwhm=float(hwhm), center=float(grid[ip]), sigma=float(np.sqrt(var)), height=float(height))


def comb_spacing(marginal: Marginal, threshold: float = 0.05) -> float:
    """Median spacing of the local maxima of a multi-peak density."""
    grid, dens = marginal.grid, marginal.density
    inner = np.arange(1, dens.size - 1)
    is_max = (dens[inner] > dens[inner - 1]) & (dens[inner] > dens[inner + 1])
    peaks = inner[is_max & (dens[inner] > threshold * np.max(dens))]
    if peaks.size < 2:
        return float("nan")
    return float(np.median(np.diff(grid[peaks])))


def conditional(
    joint: JointDistribution,
    measured_value: float,
    which_atom: int = 1,
    bin_width: float | None = None,
) -> Marginal:
    """Distribution of the unmeasured atom given the measured value.

    Slices the joint at the grid point nearest ``measured_value`` (or
    integrates over a detector bin of ``bin_width``) and renormalizes.
    """
    axis = joint.axis1 if which_atom == 1 else joint.axis2
    other = joint.axis2 if which_atom == 1 else joint.axis1
    if which_atom not in (1, 2):
        raise ValueError(f"which_atom must be 1 or 2, got {which_atom}")
    if not (axis[0] <= measured_value <= axis[-1]):
        raise ValueError(
            f"measured value {measured_value} outside grid [{axis[0]}, {axis[-1]}]"
        )
    if bin_width is None:
        idx = int(np.argmin(np.abs(axis - measured_value)))
        slc = joint.density[idx, :] if which_atom == 1 else joint.density[:, idx]
        slc = slc.copy()
    else:
        mask = np.abs(axis - measured_value) <= bin_width / 2.0
        if not np.any(mask):
            raise ValueError("detector bin contains no grid points")
        slc = (
            joint.density[mask, :].sum(axis=0)
            if which_atom == 1
            else joint.density[:, mask].sum(axis=1)
        )
    step = other[1] - other[0]
    mass = float(np.sum(slc) * step)
    if mass < 1e-12:
        raise ValueError(f"no probability mass at measured value {measured_value}")
    return Marginal(other.copy(), slc / mass)


def distribution_sigma(marginal: Marginal) -> float:
    """Standard deviation of a (normalized) 1D density."""
    mass = np.trapezoid(marginal.density, marginal.grid)
    mean = np.trapezoid(marginal.grid * marginal.density, marginal.grid) / mass
    var = np.trapezoid(
        (marginal.grid - mean) ** 2 * marginal.density, marginal.grid
    ) / mass
    return float(np.sqrt(var))


def correlation_coefficient(
    joint: JointDistribution, window: float | None = None
) -> float:
    """Pearson correlation of the two coordinates under the joint density,
    optionally restricted to |axis| <= window on both axes."""
    a1, a2, dens = joint.axis1, joint.axis2, joint.density
    if window is not None:
        m1 = np.abs(a1) <= window
        m2 = np.abs(a2) <= window
        a1, a2 = a1[m1], a2[m2]
        dens = dens[np.ix_(m1, m2)]
    mass = np.sum(dens)
    mean1 = np.sum(a1[:, None] * dens) / mass
    mean2 = np.sum(a2[None, :] * dens) / mass
    var1 = np.sum((a1[:, None] - mean1) ** 2 * dens) / mass
    var2 = np.sum((a2[None, :] - mean2) ** 2 * dens) / mass
    cov = np.sum((a1[:, None] - mean1) * (a2[None, :] - mean2) * dens) / mass
    return float(cov / np.sqrt(var1 * var2))


@dataclass(frozen=True)
class EprMetrics:
    """Correlation widths and the inferred s parameter.

    ``dx_minus``/``dp_plus`` are HWHM of the central peaks; the
    lobe-second-moment (Gaussian-equivalent) widths are reported alongside.
    """

    dx_minus: float
    dp_plus: float
    s: float
    peak_spacing_x: float
    peak_spacing_p: float
    dx_minus_sigma: float
    dp_plus_sigma: float

    def __post_init__(self):
        if min(self.dx_minus, self.dp_plus, self.s) <= 0:
            raise ValueError("widths and s must be positive")


def epr_metrics(
    pos_joint: JointDistribution, mom_joint: JointDistribution
) -> EprMetrics:
    """Extract dx_minus, dp_plus and s = 1/(2 dx dp) from the two joints."""
    if pos_joint.kind != "position" or mom_joint.kind != "momentum":
        raise ValueError("expected a position joint and a momentum joint")
    diff = difference_marginal(pos_joint)
    total = sum_marginal(mom_joint)
    wx = central_peak_width(diff)
    wp = central_peak_width(total)
    spacing_x = comb_spacing(axis_marginal(pos_joint, 1))
    spacing_p = comb_spacing(total)
    return EprMetrics(
        dx_minus=wx.hwhm,
        dp_plus=wp.hwhm,
        s=1.0 / (2.0 * wx.hwhm * wp.hwhm),
        peak_spacing_x=spacing_x,
        peak_spacing_p=spacing_p,
        dx_minus_sigma=wx.sigma,
        dp_plus_sigma=wp.sigma,
    )


# ---------------------------------------------------------------------------
# Thermal estimates


def thermal_dp_plus(sigma_e: float, temperature: float, mass: float) -> float:
    """Total-momentum spread of imperfectly cooled pairs (SI).

    dp_plus = hbar / ( sqrt(2) sigma_E tanh[ hbar^2 / (2 sigma_E^2 m k_B T) ] ),
    approaching hbar / (sqrt 2 sigma_E) as T -> 0.
    """
    if sigma_e <= 0:
        raise ValueError(f"sigma_E must be positive, got {sigma_e}")
    if temperature < 0:
        raise ValueError(f"temperature must be non-negative, got {temperature}")
    if temperature == 0:
        return HBAR / (np.sqrt(2.0) * sigma_e)
    arg = HBAR**2 / (2.0 * sigma_e**2 * mass * KB * temperature)
    return HBAR / (np.sqrt(2.0) * sigma_e * np.tanh(arg))


def s_thermal_estimate(
    sigma_e_a: float, sigma_a: float, temperature: float, erec_joule: float
) -> float:
    """s ~ (sigma_E / sqrt(2) sigma) tanh[(a/sigma_E)^2 E_rec/(pi^2 k_B T)].

    All lengths in lattice constants; equivalent to combining the thermal
    dp_plus with dx_minus = sigma.
    """
    if min(sigma_e_a, sigma_a) <= 0:
        raise ValueError("widths must be positive")
    if temperature < 0:
        raise ValueError(f"temperature must be non-negative, got {temperature}")
    prefactor = sigma_e_a / (np.sqrt(2.0) * sigma_a)
    if temperature == 0:
        return prefactor
    arg = erec_joule / (np.pi**2 * sigma_e_a**2 * KB * temperature)
    return prefactor * np.tanh(arg)


# ---------------------------------------------------------------------------
# Analytic Gaussian reference state


@dataclass(frozen=True)
class GaussianEprReference:
    """The finite-width two-particle Gaussian reference (hbar = 1).

    Amplitude ~ exp(-(x1-x2)^2/4 dx_minus^2) exp(-(x1+x2)^2/4 dx_plus^2),
    with momentum widths dp_pm = 1/dx_pm.
    """

    dx_minus: float
    dx_plus: float

    def __post_init__(self):
        if min(self.dx_minus, self.dx_plus) <= 0:
            raise ValueError("widths must be positive")

    @property
    def dp_minus(self) -> float:
        return 1.0 / self.dx_minus

    @property
    def dp_plus(self) -> float:
        return 1.0 / self.dx_plus

    @property
    def squeeze_ratio(self) -> float:
        return self.dx_minus / self.dx_plus

    def position_density(self, x1, x2) -> np.ndarray:
        x1, x2 = np.asarray(x1, float), np.asarray(x2, float)
        norm = 1.0 / (np.pi * self.dx_minus * self.dx_plus)
        return norm * np.exp(
            -((x1 - x2) ** 2) / (2.0 * self.dx_minus**2)
            - ((x1 + x2) ** 2) / (2.0 * self.dx_plus**2)
        )

    def momentum_density(self, p1, p2) -> np.ndarray:
        p1, p2 = np.asarray(p1, float), np.asarray(p2, float)
        norm = 1.0 / (np.pi * self.dp_minus * self.dp_plus)
        return norm * np.exp(
            -((p1 - p2) ** 2) / (2.0 * self.dp_minus**2)
            - ((p1 + p2) ** 2) / (2.0 * self.dp_plus**2)
        )

    def conditional_center(self, x1: float) -> float:
        """Center of x2 after measuring x1."""
        r2 = self.squeeze_ratio**2
        return x1 * (1.0 - r2) / (1.0 + r2)

    def conditional_width(self) -> float:
        """Spread of x2 after measuring x1."""
        return self.dx_minus / np.sqrt(1.0 + self.squeeze_ratio**2)


def gaussian_epr_reference(dx_minus: float, dx_plus: float) -> GaussianEprReference:
    return GaussianEprReference(dx_minus, dx_plus)
