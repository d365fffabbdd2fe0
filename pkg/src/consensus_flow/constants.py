"""Numerical tolerances shared by the implementation and its tests."""

# linalg
SYMMETRY_TOL = 1e-10
JACOBI_OFFDIAG_REL = 1e-12
JACOBI_MAX_SWEEPS = 50
EIGVEC_ORTHO_TOL = 1e-10
EIGEN_RESIDUAL_REL = 1e-8
PIVOT_REL = 1e-12
RANK_PIVOT_REL = 1e-10
SOLVE_RESIDUAL_REL = 1e-9
QR_MAX_ITER = 500
GENERAL_EIG_TOL = 1e-7

# projections
PROJ_SYMMETRY_TOL = 1e-10
PROJ_IDEMPOTENT_TOL = 1e-9
PROJ_ANNIHILATE_REL = 1e-9

# graph
LAPLACIAN_PSD_TOL = 1e-10
LAMBDA2_POSITIVE_TOL = 1e-9
BOUND_TOL = 1e-9
COMPLETE_EQUALITY_TOL = 1e-7
RANDOM_EDGE_PROB = 0.3

# spectral
ZERO_EIG_REL = 1e-9
THEOREM2_TOL = 1e-9
RHO_PATHS_TOL = 1e-7
IMAG_TOL = 1e-7
SIMILAR_SPECTRA_TOL = 1e-6
IMAGE_EIG_TOL = 1e-6
GENERAL_EIG_MAX_DIM = 12

# flow / harness
DEFAULT_CONVERGENCE_TOL = 1e-8
DEFAULT_MAX_STEPS = 200_000
DEFAULT_RECORD_EVERY = 10
LYAPUNOV_TOL = 1e-12
RATE_TRANSIENT_FRACTION = 0.2
RATE_MIN_POINTS = 30
RATE_DIST_FLOOR = 1e-13
RATE_BAND = 0.1
TRACK_TAIL_FRACTION = 0.3
