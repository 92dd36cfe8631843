from inference.early_exit import (
    ExitPolicy,
    ExitRecord,
    InferenceResult,
    entropy,
    infer_batch,
    infer_early_exit,
    infer_forced_exit,
    ramp_predictions,
)
from inference.exporters import write_exit_records_csv, write_exit_records_jsonl
