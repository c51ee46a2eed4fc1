"""
Default constants for the spectrogram adversarial toolkit
"""

# Signal files
PCM_SCALE_READ = 32768.0   # i16 -> [-1, 1)
PCM_SCALE_WRITE = 32767.0  # [-1, 1] -> i16
PCM_DTYPE = "<i2"          # raw little-endian signed 16-bit, no header

# Signal settings (wideband recordings run at 6.4 MHz with 1,280,000 samples per file)
DESK_SAMPLE_RATE = 800_000
NOISE_FLOOR_STD = 0.01

# STFT presets
WIDE_N_FFT = 2048
WIDE_OVERLAP = 48  # hop 2000
DESK_N_FFT = 256
DESK_OVERLAP = 6    # hop 250, same sparse overlap ratio as the wideband preset
ISTFT_FLOOR = 1e-8

# Grayscale mapping
DB_EPSILON = 1e-10
DB_DYNAMIC_RANGE = 80.0

# Detector
INPUT_SIZE = 128
GRID_SIZE = 8
N_CLASSES = 3
CHANNELS = (8, 16, 32, 32, 32)
LEAKY_SLOPE = 0.1
OBJECTNESS_PRIOR = 0.01
HEAD_INIT_SCALE = 0.01
CONF_THRESH = 0.25
NMS_IOU = 0.45
AP_CONF_THRESH = 0.001
PROB_CLAMP = 1e-7

# Training loss weights
LAMBDA_NOOBJ = 0.5
LAMBDA_BOX = 5.0
LAMBDA_CLS = 1.0

# Training
TRAIN_EPOCHS = 40
JITTER_STD = 0.02           # pixel noise added to every training batch
SYNTHETIC_PER_EPOCH = 200   # fresh generator draws per epoch on top of the dataset

# Attack
ATTACK_LAMBDA = 1.0
ATTACK_N_ITER = 50
ATTACK_DECAY = 0.5
ATTACK_STEP_FRACTION = 0.2   # step eps = 0.2 * alpha * ||y||
ATTACK_CLIP_MEDIANS = 10.0   # clip eps = 10 * median magnitude
MAX_DECAY_STEPS = 60

# Evaluation
IOU_THRESH = 0.5
REFERENCE_ROUNDTRIP_MEAN = 0.04692
RN_ALPHAS = (0.01, 0.02, 0.05, 0.1)
ATTACK_ALPHAS = (0.01, 0.02)

# Model file
MODEL_MAGIC = b"SGDETNET"
MODEL_VERSION = 1

# Exit codes
EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
