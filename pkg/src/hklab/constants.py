"""Shared numerical tolerances and defaults.

Every tolerance used by more than one module lives here so the test suite
and the CLI agree on what "equal" means.
"""

# algebraic identities evaluated in closed form (wedge products, Q-matrix)
TOL_ALGEBRAIC = 1e-10

# identities that involve one finite-difference derivative
TOL_FD = 1e-5
FD_STEP = 1e-4
FD_STEP_COARSE = 1e-3

# adaptive quadrature for radial-homotopy primitives
QUAD_TOL = 1e-10

# special-function series truncation
SERIES_TOL = 1e-14

# root finding (balancing condition, r_lambda)
BISECT_TOL = 1e-12

# allowed mismatch of the glued triple across cutoff seams
SEAM_TOL = 1e-8

DEFAULT_SEED = 20260823

TWO_PI = 6.283185307179586476925286766559
