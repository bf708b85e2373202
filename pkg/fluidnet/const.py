"""Constants for the fluidnet toolkit."""

VERSION = "0.1.0"
CONFIG_SCHEMA_VERSION = 1

# Exact-integration tolerances
SIMULTANEOUS_HIT = 1e-12  # zero-hitting times closer than this are one epoch
REFLECTION_TOLERANCE = 1e-9
DOMINANCE_TOLERANCE = 1e-9
COMPLEMENTARITY_EPSILON = 1e-12

# Numeric inversion of integrated tails
INVERSION_XATOL = 1e-10
INVERSION_MAX_DOUBLINGS = 200
INVERSION_MAX_ITER = 400

# Quadrature
QUAD_RTOL = 1e-6
QUAD_EPSABS = 1e-13

# Estimation
DEFAULT_BATCHES = 20
DEFAULT_WARMUP_FRACTION = 0.05
CONFIDENCE_LEVEL = 0.95
DEFAULT_DRAWS = 1_000_000
ADMISSIBLE_CI_FACTOR = 10.0  # weak-equivalence grid needs estimate > 10 halfwidths
SERIES_RELATIVE_CUTOFF = 1e-3

# Chunking of the event loop: pre-drawn arrivals and flushed pieces
ARRIVAL_CHUNK = 65_536
PIECE_FLUSH = 50_000

# Exit codes
EXIT_PASS = 0
EXIT_INVARIANT = 2
EXIT_STATISTICAL = 3
EXIT_CONFIG = 4
