import os
import logging
from dotenv import load_dotenv, find_dotenv

load_dotenv(find_dotenv())

# Directory settings
CURRENT_DIR = os.path.dirname(os.path.abspath(__file__))
DEFAULT_OUTPUT_DIR = os.getenv("EARLY_EXIT_OUTPUT_DIR", os.path.join(CURRENT_DIR, "runs"))
CONFIGS_DIR = os.path.join(CURRENT_DIR, "configs")

# Output file names
STAGE_ONE_CHECKPOINT = "stage1.ckpt"
STAGE_TWO_CHECKPOINT = "stage2.ckpt"
TRAIN_REPORT_FILE = "train_report.json"
SWEEP_CSV_FILE = "sweep.csv"
SWEEP_JSON_FILE = "sweep.json"
EXITS_JSONL_FILE = "exits.jsonl"
LAYERS_CSV_FILE = "layers.csv"
EXIT_HISTOGRAM_CSV_FILE = "exit_histogram.csv"
EXPECTED_VS_MEASURED_CSV_FILE = "expected_vs_measured.csv"
EVAL_JSON_FILE = "eval.json"

# Model settings
INIT_STD = 0.02
LAYER_NORM_EPS = 1e-12
ATTENTION_MASK_VALUE = -1e9  # exp() of this underflows to exactly 0.0 in float64
N_SEGMENTS = 2

# Training settings
DEFAULT_EPOCHS = 5
DEFAULT_BATCH_SIZE = 32
DEFAULT_LEARNING_RATE = 1e-3
DEFAULT_SEED = 42
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8

# Checkpoint format
CHECKPOINT_MAGIC = b"EEXTCKPT"
CHECKPOINT_VERSION = 1

# Sweep settings
SWEEP_GRID_SIZE = 21
SWEEP_GRID_MIN = 0.005
OPERATING_POINT_BUDGETS = [0.5, 4.0]  # quality drop budgets in absolute points
SWEEP_CSV_COLUMNS = [
    "S",
    "accuracy",
    "f1",
    "expected_saving",
    "layer_saving",
    "time_saving_pct",
    "wall_clock_s",
]
EXIT_RECORD_CSV_COLUMNS = ["sample_id", "exit_layer", "entropy", "prediction", "label"]

# Logging settings
LOG_DIR = os.getenv("EARLY_EXIT_LOG_DIR", os.path.join(CURRENT_DIR, "logs"))
LOG_LEVEL = logging.INFO
