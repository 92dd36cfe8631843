from training.two_stage import (
    DivergenceError,
    TrainConfig,
    TrainReport,
    TwoStageTrainer,
    intermediate_ramps_loss,
    ramp_dev_quality,
    ramp_loss,
    run_two_stage,
    stage_one,
    stage_two,
)
