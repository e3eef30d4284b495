"""Shared numerical constants."""

from __future__ import annotations


__all__ = [
    "ALS_INIT_RANGE",
    "AMN_INIT_RANGE",
    "BARRIER_ETA_FACTOR",
    "BARRIER_ETA_INIT",
    "BARRIER_ETA_MIN",
    "BARRIER_NEWTON_ITERS",
    "DEFAULT_MAX_SWEEPS",
    "DEFAULT_REGULARIZATION",
    "DEFAULT_TOLERANCE",
    "FINITE_DIFFERENCE_STEP",
    "LINE_SEARCH_MAX_HALVINGS",
    "LINE_SEARCH_SHRINK",
    "MODEL_FORMAT_VERSION",
    "POWER_ITERATION_MAX",
    "POWER_ITERATION_TOL",
    "PREDICTION_COLUMN",
    "PREDICTION_FLOOR",
    "REAL_FORMAT",
    "SPLINE_MAX_TERMS",
    "SPLINE_MIN_IMPROVEMENT",
    "TIME_COLUMN",
]

# Factor initialization ranges (uniform)
ALS_INIT_RANGE = (-0.5, 0.5)
AMN_INIT_RANGE = (0.1, 1.1)  # strictly inside the barrier domain

# Fit defaults
DEFAULT_REGULARIZATION = 1e-4
DEFAULT_MAX_SWEEPS = 100
DEFAULT_TOLERANCE = 1e-5

# Barrier schedule: eta_init, divided by eta_factor until <= eta_min
BARRIER_ETA_INIT = 10.0
BARRIER_ETA_FACTOR = 8.0
BARRIER_ETA_MIN = 1e-11
BARRIER_NEWTON_ITERS = 40

# Newton globalization
LINE_SEARCH_SHRINK = 0.5
LINE_SEARCH_MAX_HALVINGS = 30

# Rank-1 factorization of positive factor matrices
POWER_ITERATION_TOL = 1e-12
POWER_ITERATION_MAX = 1000

# Hinge spline fitting
SPLINE_MAX_TERMS = 21
SPLINE_MIN_IMPROVEMENT = 1e-12

# Predictions below this many seconds are clamped (keeps MLogQ finite)
PREDICTION_FLOOR = 1e-16

# Gradient checks
FINITE_DIFFERENCE_STEP = 1e-6

# CSV columns
TIME_COLUMN = "time"
PREDICTION_COLUMN = "predicted_time"

# Model files
MODEL_FORMAT_VERSION = 1
REAL_FORMAT = ".17g"  # 17 significant digits round-trips every IEEE double
