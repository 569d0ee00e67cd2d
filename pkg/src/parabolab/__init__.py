"""parabolab: a numerical laboratory for 2m-order parabolic systems.

Solvers for systems with time-measurable leading coefficients on the torus
and on a clamped slab, ellipticity-constant checkers with constructive
energy certificates, reflection/extension operators, parabolic oscillation
functionals, and a reproducible sweep harness for the a priori estimates.
"""

__version__ = "0.1.0"
