from modeling.model_config import ModelConfig
from modeling.layers import EncoderLayer, OffRamp, pool
from modeling.early_exit_model import EarlyExitModel
from modeling.checkpoint import CheckpointError, load_model, save_model
