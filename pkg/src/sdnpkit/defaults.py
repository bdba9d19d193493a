"""Operating-point defaults shared by the library and the CLI.

Each value is the published operating point of the pipeline it belongs to;
all of them are overridable per call and per CLI flag.
"""

RESIDUE_KERNEL = 5          # box kernel side for noise-residue extraction
NCC_BLOCK = 21              # local NCC block side for correlation maps
MAP_SMOOTH_KERNEL = 5       # box smoothing applied on the block grid
DETECT_THRESHOLD = 0.0072   # NCC threshold for base-pattern detection
MASK_THRESHOLD = 0.07       # map threshold; mask=1 where map value <= alpha
SIMILARITY_THRESHOLD = 60.0        # baseline PRNU decision threshold
MASKED_SIMILARITY_THRESHOLD = 160.0  # mask-aware PRNU decision threshold
GRID_STEP = 0.1             # ISO-gain grid search step
SMOOTH_WINDOW = 5           # moving-average window for brightness curves
SLM_BACKGROUND = 4.0        # constant background level of stage-light images
LUMA_WEIGHTS = (0.299, 0.587, 0.114)  # RGB -> luminance conversion
HEATMAP_RANGE = (-0.2, 1.0)  # map interval rendered onto [0, 255]
CATALOG_ENV_VAR = "SDNP_CATALOG_DIR"
