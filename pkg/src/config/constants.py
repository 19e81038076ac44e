DEFAULT_SEED = 7

# Preprocessing
FULL_FRAME_COUNT = 21
DESK_FRAME_COUNT = 9
DESK_FRAME_SIZE = (64, 64)
VESSEL_AREA_THRESHOLD = 0.005
VESSEL_MARGIN = 0.15
SPLIT_FRACTIONS = (0.8, 0.1, 0.1)
SPLIT_NAMES = ("train", "val", "test")
RAW_FRAMES_RANGE = (5, 14)

# Numerics
LAYER_NORM_EPS = 1e-5
GRADCHECK_STEP = 1e-3
GRADCHECK_TOLERANCE = 1e-3
GRADCHECK_SAMPLES = 12

# Wavelet
WAVELET_LEVELS = 2

# WF-VAE
LATENT_CHANNELS = 4
TEMPORAL_COMPRESSION = 2
SPATIAL_COMPRESSION = 4
VAE_BASE_CHANNELS = 32
KL_WEIGHT = 1e-4
LOGVAR_RANGE = (-30.0, 20.0)
LEARNING_RATE = 1e-3
ADAM_BETAS = (0.9, 0.999)

# Cross-DiT
DIT_HIDDEN_SIZE = 128
DIT_DEPTH = 4
DIT_HEADS = 4
DIT_PATCH_SIZE = (1, 2, 2)
TEXT_MAX_LENGTH = 32
TEXT_BLOCKS = 2
TIMESTEP_MAX_PERIOD = 10_000

# Diffusion
TRAIN_TIMESTEPS = 1000
BETA_START = 1e-4
BETA_END = 2e-2
SAMPLING_STEPS = 50
GUIDANCE_SCALE = 3.0
P_UNCOND = 0.1

# Evaluation
RECALL_KS = (5, 10, 50)
FEATURE_DIM = 64
COVARIANCE_EPS = 1e-6
PROBE_THRESHOLD = 0.5
ALIGNMENT_GATE_P = 0.01
ALIGNMENT_METRIC = "lesion-probe (VQAScore analog)"

# Formats
TVID_MAGIC = b"TVID"
TVID_VERSION = 1
TVID_DTYPE_FLOAT32 = 0
CHECKPOINT_MAGIC = b"ADCK"
CHECKPOINT_VERSION = 1

# Exit codes
EXIT_CONFIG_ERROR = 2
EXIT_IO_ERROR = 3
EXIT_NUMERIC_ERROR = 4
EXIT_GATE_FAILURE = 5
