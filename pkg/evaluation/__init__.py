from evaluation.quality import accuracy, binary_f1, quality
from evaluation.savings import (
    ExitHistogram,
    exit_distribution,
    expected_saving,
    expected_saving_fraction,
    mean_exit_layer_by_stratum,
)
from evaluation.tradeoff import (
    ExpectedVsMeasured,
    LinearFit,
    OperatingPoint,
    SweepReport,
    TradeoffPoint,
    default_threshold_grid,
    fit_linear,
    measured_vs_expected,
    parse_threshold_grid,
    select_operating_points,
    sweep,
    turning_point,
)
from evaluation.layerwise import LayerSummary, exit_share_by_gain, layer_gains, layerwise_quality, redundant_layers
