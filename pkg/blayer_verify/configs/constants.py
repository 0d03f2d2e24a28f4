"""
constants — Default tolerances, step sizes and plain-text names.

Everything here is a documented default.  Run configs override the
values that have a config key (see docs/CONFIG_SCHEMA.md); the rest are
fixed numerical choices shared across modules.
"""

from __future__ import annotations

import numpy as np

# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
#  Versions
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

TOOL_VERSION = "1.0.0"
CONFIG_SCHEMA_VERSION = 1
REPORT_SCHEMA_VERSION = 1

# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
#  Differentiation
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

EPS_MACH = float(np.finfo(float).eps)
# central differences: h = FD_STEP_SCALE · (1 + |U|)
FD_STEP_SCALE = EPS_MACH ** (1.0 / 3.0)
# ∂_γ̂ / ∂_ρ sign tests in the block classification
SIGN_TEST_STEP = 1e-5

# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
#  Hypothesis audit
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

SPHERE_SAMPLES_PER_DIM = 360          # N_sphere = this · d  (≥ 100·d)
SPHERE_REFINEMENT_DEPTH = 40
CLUSTER_RELATIVE_TOL = 1e-7           # τ_cluster = this · spectral radius
GRADIENT_TOL = 1e-6                   # τ_grad
SEMISIMPLE_CONDITION_MAX = 1e8
GENUINE_COUPLING_TOL = 1e-8
SYMMETRY_TOL = 1e-12

# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
#  Profile solver
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

PROFILE_TOL = 1e-10
PROFILE_NODES = 400
PROFILE_STRETCH = 3.0
PROFILE_HOMOTOPY_STEPS = 5
PROFILE_MAX_NODES = 200_000
PROFILE_DEFAULT_LENGTHS = 50.0        # L in convection-diffusion lengths
FIRST_INTEGRAL_TOL = 1e-12
NEWTON_MAX_ITER = 50

# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
#  Evans engine
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

COMPOUND_MAX_DIM = 6                  # n + r ≤ this → compound matrices
EVANS_RTOL = 1e-10
EVANS_ATOL = 1e-12
RHO_MIN = 1e-3
CONTOUR_POINTS = 96
CONTOUR_REFINEMENTS = 3
WINDING_TOL = 0.1                     # |winding − round(winding)| allowed
MAX_ARG_STEP = 0.5 * np.pi            # largest phase jump between contour samples
CONJUGATOR_BOUND = 1e6
THETA_REPORT = 1e-8

# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
#  Symbol analysis
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

RHO_MAX_LOW = 0.1
SPECTRAL_GAP_MIN = 1e-3
JORDAN_RANK_TOL = 1e-6
DIAGONALIZER_RESIDUAL = 1e-8
GLANCING_FAN_TOL = 0.05               # normalized fan error at the smallest σ

# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
#  Resolvent lab
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

THETA1 = 0.05
RHO_FLOOR = 1e-4
EPSILON_REPORT = 0.1
SLOPE_SLACK = 0.1
RESOLVENT_LENGTH = 40.0               # minimum half-line length of resolvent grids
RESOLVENT_STRETCH = 2.0
CONTINUATION_STEPS = 24               # λ-path length for continued stable sets
TAIL_NODES = 64                       # Gauss nodes for closed-form tail norms
SOBOLEV_TOL = 0.05
GREEN_WIDTH = 0.05                    # width of delta-approximating forcings
RESOLVENT_CONDITION_MAX = 1e12

# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
#  Semigroup decay
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

CFL_NUMBER = 0.4
BLOWUP_FACTOR = 10.0
BOOTSTRAP_SAMPLES = 400
BOOTSTRAP_SEED = 20080101
FIT_WINDOW_RATIO_MIN = 10.0
EDGE_THRESHOLD = 1e-6
GAUSS_ORDER = 8
PANELS_PER_DECADE = 1

# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
#  CLI / reports
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

DEFAULT_OUT_DIR = "blayer-out"
REPORT_FILE = "report.json"
PROFILE_FILE = "profile.csv"
PROFILE_META_FILE = "profile.json"

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3

SUBCOMMANDS = ("audit", "profile", "evans", "symbol", "resolvent", "decay", "all")
PIPELINE_ORDER = ("audit", "profile", "evans", "symbol", "resolvent", "decay")
