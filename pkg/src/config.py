"""Configuration for sweeps, training runs, verification checks, and tracking."""
import os
from dotenv import load_dotenv

load_dotenv()

# Reproducibility
DEFAULT_SEED = int(os.getenv("PCL_SEED", "2021"))
LOG_LEVEL = os.getenv("PCL_LOG_LEVEL", "INFO")

# Landscape sweep (tau=0.1 gives r = sqrt(10))
SWEEP_DIM = int(os.getenv("SWEEP_DIM", "128"))
SWEEP_TAU = float(os.getenv("SWEEP_TAU", "0.1"))
SWEEP_KAPPA_MIN = float(os.getenv("SWEEP_KAPPA_MIN", "0.1"))
SWEEP_KAPPA_MAX = float(os.getenv("SWEEP_KAPPA_MAX", "100"))
SWEEP_KAPPA_COUNT = int(os.getenv("SWEEP_KAPPA_COUNT", "64"))
SWEEP_COS_COUNT = int(os.getenv("SWEEP_COS_COUNT", "41"))

# Training
TRAIN_STEPS = int(os.getenv("TRAIN_STEPS", "2000"))
TRAIN_LR = float(os.getenv("TRAIN_LR", "0.05"))
TRAIN_BATCH_SIZE = int(os.getenv("TRAIN_BATCH_SIZE", "32"))
TRAIN_NEGATIVES = int(os.getenv("TRAIN_NEGATIVES", "8"))
TRAIN_TAU = float(os.getenv("TRAIN_TAU", "0.1"))
TRAIN_LOG_EVERY = int(os.getenv("TRAIN_LOG_EVERY", "100"))

# Encoder confidence head
KAPPA_MIN = float(os.getenv("KAPPA_MIN", "1e-2"))
KAPPA_MAX = float(os.getenv("KAPPA_MAX", "1e4"))
KAPPA_INIT = float(os.getenv("KAPPA_INIT", "10"))

# Verification checks
CHECK_MC_SAMPLES = int(os.getenv("CHECK_MC_SAMPLES", "1000000"))

# MLflow
MLFLOW_EXPERIMENT = os.getenv("MLFLOW_EXPERIMENT", "probabilistic-contrastive")
