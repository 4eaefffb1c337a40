"""
Fields on a flat torus
======================

Potentials, Hermitian forms and their relative spectra on a reduced grid:
only the first real axis is resolved, the rest are constant directions.
"""

import numpy as np

from dhym.torus import (
    HermitianField,
    PotentialField,
    TorusGrid,
    complex_hessian,
    integrate,
    omega_volume,
    relative_spectrum,
)

g = TorusGrid.reduced(3, 32, active=(0,))
x = g.coords()[0]
print("grid shape", g.shape, "total volume", g.total_volume)

# i dd-bar of cos x is a rank-one form: only the first diagonal entry moves.
phi = PotentialField(g, np.cos(x))
H = complex_hessian(phi)
print("max |H_11 + cos(x)/4| =", np.abs(H.entries[..., 0, 0] + np.cos(x) / 4).max())

# Spectra of omega + i dd-bar phi relative to omega.
I = HermitianField.identity(g)
lam = relative_spectrum(I + H, I)
print("eigenvalue range", lam.min(), lam.max())

# Integrals use the omega^n density; a constant 1 integrates to the volume.
print("int 1 =", integrate(np.ones(g.shape), g, I), "volume", omega_volume(I))
