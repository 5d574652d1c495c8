"""Simulation of dipole-dipole bound atom pairs in optical lattices.

The package follows one pipeline: SI laser/atom inputs -> dimensionless
tight-binding parameters -> single-band Bloch/Wannier physics -> two-atom
exact diagonalization -> joint position/momentum distributions and their
correlation widths -> the time-domain preparation protocol that separates
heavy pairs from light single atoms.

All modules except :mod:`latticeepr.parameters` and :mod:`latticeepr.liddi`
work in natural units: lengths in lattice constants ``a``, energies in
recoil energies ``E_rec``, momenta in ``hbar/a``, ``hbar = 1``.
"""

__version__ = "0.1.0"
