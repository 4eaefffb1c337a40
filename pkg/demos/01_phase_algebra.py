"""
Pointwise phase algebra
=======================

The equation only ever sees the eigenvalues of the unknown form relative to
omega.  This demo walks through the phase, the product identities and the
phase window on a handful of spectra.
"""

import math

import numpy as np

from dhym.phase_algebra import (
    PhaseWindow,
    arccot,
    gamma_k_membership,
    lagrangian_phase,
    operator_gradient,
    operator_value,
    sigma_product,
    window_margins,
)

# The phase is a sum of arccot values, so it lives in (0, n pi).
lam = np.array([2.0, 1.0, 0.5])
theta = lagrangian_phase(lam)
print("spectrum", lam, "phase", theta)

# prod(lambda + i) has argument equal to the phase.
re, im = sigma_product(lam)
P = np.prod(np.sqrt(1 + lam ** 2))
print("re vs cos(phase) P:", re, math.cos(theta) * P)
print("im vs sin(phase) P:", im, math.sin(theta) * P)

# The window: every (n-1)-fold phase sum below theta0, total below Theta0.
w = PhaseWindow.with_default_upper(2.0)
print("window", w, "margins", window_margins(lam, w))

# Inside the window the operator re/im is increasing in each eigenvalue.
print("operator value", operator_value(lam, 0.0), "gradient", operator_gradient(lam, 0.0))

# A spectrum with phase at most pi sits in the closed Gamma^{n-1} cone.
mu = np.array([3.0, 0.8, -0.2])
print("phase", lagrangian_phase(mu), "<= pi;", "Gamma^2 membership", gamma_k_membership(mu, 2))
print("arccot(0) =", arccot(0.0))
