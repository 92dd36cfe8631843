import json
import math
import os
from typing import Dict, List, Optional

from config import (
    EVAL_JSON_FILE,
    EXIT_HISTOGRAM_CSV_FILE,
    EXITS_JSONL_FILE,
    EXPECTED_VS_MEASURED_CSV_FILE,
    LAYERS_CSV_FILE,
    STAGE_ONE_CHECKPOINT,
    STAGE_TWO_CHECKPOINT,
    SWEEP_CSV_COLUMNS,
    SWEEP_CSV_FILE,
    SWEEP_JSON_FILE,
    TRAIN_REPORT_FILE,
)
from evaluation.layerwise import exit_share_by_gain, layer_gains, layerwise_quality, redundant_layers
from evaluation.quality import binary_f1, quality
from evaluation.savings import exit_distribution, expected_saving, mean_exit_layer_by_stratum
from evaluation.tradeoff import (
    default_threshold_grid,
    measured_vs_expected,
    select_operating_points,
    sweep,
    turning_point,
)
from executors.run_config import RunConfig
from helpers.artifacts import ArtifactHelper
from helpers.logger_config import LoggerManager
from inference.early_exit import ExitPolicy, infer_batch
from inference.exporters import write_exit_records_jsonl
from ingestion.schema import Dataset, DatasetError, TaskInfo
from ingestion.synthetic_task import make_synthetic_task
from ingestion.tsv_loader import load_tsv
from modeling.checkpoint import CheckpointError, load_model, save_model
from modeling.early_exit_model import EarlyExitModel
from modeling.model_config import ModelConfig
from preprocessing.batching import EncodedSplit, encode_split
from preprocessing.tokenization import Vocab
from training.two_stage import TwoStageTrainer

ANALYZE_MODES = ("layers", "exits", "expected-vs-measured")
STAGE_TWO_REPORT_KEYS = ("stage_two", "stage_two_sha256")


class Experiment:
    """
    Everything a command needs from a RunConfig: the dataset, the vocabulary
    rebuilt from the train split, encoded splits and output paths.
    """

    def __init__(self, run_config: RunConfig, logger=None, progress: bool = True):
        self.run_config = run_config
        self.logger = logger or LoggerManager().get_logger()
        self.progress = progress
        self._dataset: Optional[Dataset] = None
        self._vocab: Optional[Vocab] = None
        self._encoded: Dict[str, EncodedSplit] = {}

    @property
    def output_dir(self) -> str:
        return self.run_config.output_dir

    def path(self, file_name: str) -> str:
        return os.path.join(self.output_dir, file_name)

    @property
    def dataset(self) -> Dataset:
        if self._dataset is None:
            self._dataset = self._load_dataset()
        return self._dataset

    @property
    def task(self) -> TaskInfo:
        return self.dataset.task

    @property
    def vocab(self) -> Vocab:
        if self._vocab is None:
            self._vocab = Vocab.build(self.dataset.split("train"), min_freq=self.run_config.min_token_freq)
            self.logger.info(f"Vocabulary has {len(self._vocab)} token(s)")
        return self._vocab

    def _load_dataset(self) -> Dataset:
        config = self.run_config
        if config.synthetic is not None:
            return make_synthetic_task(config.synthetic, seed=config.seed)
        source = config.tsv
        splits = {
            "train": load_tsv(source.train_path, source.columns),
            "dev": load_tsv(source.dev_path, source.columns),
        }
        if source.test_path:
            splits["test"] = load_tsv(source.test_path, source.columns)
        task = TaskInfo(name=source.name, n_classes=source.n_classes, paired=source.paired, metric=source.metric)
        try:
            return Dataset(task=task, splits=splits)
        except ValueError as e:
            raise DatasetError(str(e)) from e

    def encoded(self, split_name: str) -> EncodedSplit:
        if split_name not in self._encoded:
            examples = self.dataset.split(split_name)
            if not examples:
                raise DatasetError(f"split {split_name!r} is empty")
            self._encoded[split_name] = encode_split(examples, self.vocab, self.run_config.model.max_seq_len)
        return self._encoded[split_name]

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            **self.run_config.model.model_dump(),
            vocab_size=len(self.vocab),
            n_classes=self.task.n_classes,
        )

    def load_checkpoint(self, checkpoint: Optional[str] = None) -> EarlyExitModel:
        path = checkpoint or self.path(STAGE_TWO_CHECKPOINT)
        model = load_model(path)
        if model.config.vocab_size != len(self.vocab):
            raise CheckpointError(
                f"{path}: model vocabulary has {model.config.vocab_size} ids but this config builds {len(self.vocab)}"
            )
        if model.config.n_classes != self.task.n_classes:
            raise CheckpointError(
                f"{path}: model predicts {model.config.n_classes} classes, task has {self.task.n_classes}"
            )
        return model

    def threshold_grid(self) -> List[float]:
        options = self.run_config.sweep
        if options.grid is not None:
            return list(options.grid)
        return default_threshold_grid(self.task.n_classes, size=options.grid_size, minimum=options.grid_min)


def _update_train_report(path: str, updates: dict, drop: tuple = ()) -> None:
    report = {}
    if os.path.isfile(path):
        with open(path, "r", encoding="utf-8") as f:
            report = json.load(f)
    for key in drop:
        report.pop(key, None)
    report.update(updates)
    ArtifactHelper.write_json(report, path)


def _discard_stage_two(experiment: Experiment) -> None:
    """A new backbone invalidates ramps trained on the old one."""
    path = experiment.path(STAGE_TWO_CHECKPOINT)
    if os.path.isfile(path):
        os.remove(path)
        experiment.logger.warning(f"Removed {path}: it was trained on a previous stage-one backbone")


def cmd_train(experiment: Experiment, stage: str = "all") -> Dict[str, str]:
    """
    Stage "1" trains the backbone and writes stage1.ckpt. Stage "2" resumes
    from stage1.ckpt and writes stage2.ckpt. "all" runs both.
    """
    if stage not in ("1", "2", "all"):
        raise ValueError(f"stage must be 1, 2 or all, got {stage!r}")
    run_config = experiment.run_config
    train_set = experiment.encoded("train")
    dev_set = experiment.encoded("dev")
    metric = experiment.task.metric
    report_path = experiment.path(TRAIN_REPORT_FILE)
    written = {}
    stale = ()

    if stage == "2":
        model = experiment.load_checkpoint(experiment.path(STAGE_ONE_CHECKPOINT))
    else:
        model = EarlyExitModel(experiment.model_config(), seed=run_config.seed)
    trainer = TwoStageTrainer(model, run_config.training, logger=experiment.logger, progress=experiment.progress)

    updates = {
        "task": experiment.task.model_dump(),
        "model_config": model.config.model_dump(),
        "training": run_config.training.model_dump(),
        "seed": run_config.seed,
        "train_size": len(train_set),
        "dev_size": len(dev_set),
    }
    if stage in ("1", "all"):
        report = trainer.stage_one(train_set, dev_set, metric)
        written["stage_one"] = save_model(model, experiment.path(STAGE_ONE_CHECKPOINT))
        updates["stage_one"] = report.model_dump()
        updates["stage_one_sha256"] = ArtifactHelper.compute_file_hash(written["stage_one"])
        if stage == "1":
            _discard_stage_two(experiment)
            stale = STAGE_TWO_REPORT_KEYS
    if stage in ("2", "all"):
        report = trainer.stage_two(train_set, dev_set, metric)
        written["stage_two"] = save_model(model, experiment.path(STAGE_TWO_CHECKPOINT))
        updates["stage_two"] = report.model_dump()
        updates["stage_two_sha256"] = ArtifactHelper.compute_file_hash(written["stage_two"])

    _update_train_report(report_path, updates, drop=stale)
    written["report"] = report_path
    return written


def cmd_sweep(experiment: Experiment, checkpoint: Optional[str] = None) -> Dict[str, str]:
    """Trade-off sweep over the dev split: sweep.csv, sweep.json and every ExitRecord in exits.jsonl."""
    options = experiment.run_config.sweep
    model = experiment.load_checkpoint(checkpoint)
    split = experiment.encoded(options.split)
    grid = experiment.threshold_grid()
    report = sweep(model, split, grid, metric=experiment.task.metric, repeats=options.repeats,
                   progress=experiment.progress)

    operating_points = select_operating_points(report, options.budgets)
    strata = experiment.dataset.split(options.split)
    summary = report.model_dump()
    summary["operating_points"] = []
    for operating in operating_points:
        records = [r for r in report.records if r.threshold == operating.point.threshold]
        entry = operating.model_dump()
        entry["mean_exit_layer_by_stratum"] = mean_exit_layer_by_stratum(records, [e.stratum for e in strata])
        summary["operating_points"].append(entry)
        experiment.logger.info(
            f"Budget {operating.max_drop} point(s): S={operating.point.threshold:.5g}, "
            f"saving {operating.point.expected_saving:.4f}, drop {operating.quality_drop:.3f}"
        )
    summary["turning_point"] = turning_point(report, options.turning_tolerance).model_dump()

    return {
        "csv": ArtifactHelper.write_csv(report.csv_rows(), SWEEP_CSV_COLUMNS, experiment.path(SWEEP_CSV_FILE)),
        "json": ArtifactHelper.write_json(summary, experiment.path(SWEEP_JSON_FILE)),
        "exits": write_exit_records_jsonl(report.records, experiment.path(EXITS_JSONL_FILE)),
    }


def _analyze_layers(experiment: Experiment, model: EarlyExitModel) -> str:
    options = experiment.run_config.sweep
    split = experiment.encoded(options.split)
    qualities = layerwise_quality(model, split, experiment.task.metric)
    chance = 1.0 / experiment.task.n_classes
    gains = layer_gains(qualities, reference=chance)
    redundant = set(redundant_layers(qualities, options.redundancy_min_gain, reference=chance))
    rows = [[layer, value, gain, layer in redundant]
            for layer, (value, gain) in enumerate(zip(qualities, gains), start=1)]
    if redundant:
        experiment.logger.info(f"Ramps adding nothing over shallower ones: {sorted(redundant)}")
    return ArtifactHelper.write_csv(rows, ["layer", "quality", "gain", "redundant"], experiment.path(LAYERS_CSV_FILE))


def _analyze_exits(experiment: Experiment, model: EarlyExitModel) -> str:
    options = experiment.run_config.sweep
    split = experiment.encoded(options.split)
    qualities = layerwise_quality(model, split, experiment.task.metric)
    chance = 1.0 / experiment.task.n_classes
    rows = []
    for threshold in experiment.threshold_grid():
        result = infer_batch(model, split, ExitPolicy(entropy_threshold=threshold))
        histogram = exit_distribution(result.records, model.n_layers)
        for summary in exit_share_by_gain(histogram, qualities, reference=chance):
            rows.append([threshold, summary.layer, histogram.counts[summary.layer - 1], summary.exit_fraction,
                         summary.gain])
    return ArtifactHelper.write_csv(rows, ["S", "layer", "count", "fraction", "gain"],
                                    experiment.path(EXIT_HISTOGRAM_CSV_FILE))


def _analyze_expected_vs_measured(experiment: Experiment, model: EarlyExitModel) -> str:
    options = experiment.run_config.sweep
    split = experiment.encoded(options.split)
    result = measured_vs_expected(model, split, experiment.threshold_grid(), repeats=options.timing_repeats,
                                  metric=experiment.task.metric, progress=experiment.progress)
    rows = [[p.threshold, p.expected_saving, p.layer_saving, p.measured_saving] for p in result.pairs]
    experiment.logger.info(f"Linear fit R^2 = {result.fit.r_squared:.4f}")
    return ArtifactHelper.write_csv(rows, ["S", "expected_saving", "layer_saving", "measured_saving"],
                                    experiment.path(EXPECTED_VS_MEASURED_CSV_FILE))


def cmd_analyze(experiment: Experiment, mode: str, checkpoint: Optional[str] = None) -> str:
    if mode not in ANALYZE_MODES:
        raise ValueError(f"unknown analyze mode {mode!r}; expected one of {ANALYZE_MODES}")
    model = experiment.load_checkpoint(checkpoint)
    if mode == "layers":
        return _analyze_layers(experiment, model)
    if mode == "exits":
        return _analyze_exits(experiment, model)
    return _analyze_expected_vs_measured(experiment, model)


def cmd_eval(experiment: Experiment, threshold: float, split_name: Optional[str] = None,
             checkpoint: Optional[str] = None) -> str:
    """One threshold on one split: quality, savings, exit histogram and per-stratum exit layers."""
    split_name = split_name or experiment.run_config.sweep.split
    model = experiment.load_checkpoint(checkpoint)
    split = experiment.encoded(split_name)
    result = infer_batch(model, split, ExitPolicy(entropy_threshold=threshold), progress=experiment.progress)
    histogram = exit_distribution(result.records, model.n_layers)
    metric = experiment.task.metric
    payload = {
        "split": split_name,
        "threshold": threshold,
        "metric": metric,
        "quality": quality(result.predictions, split.labels, metric),
        "accuracy": quality(result.predictions, split.labels, "accuracy"),
        "f1": binary_f1(result.predictions, split.labels) if experiment.task.n_classes == 2 else None,
        "expected_saving": expected_saving(histogram),
        "exit_histogram": histogram.model_dump(),
        "exit_fractions": histogram.fractions(),
        "mean_exit_layer_by_stratum": mean_exit_layer_by_stratum(
            result.records, [e.stratum for e in experiment.dataset.split(split_name)]
        ),
        "max_entropy": math.log(experiment.task.n_classes),
        "wall_clock_s": result.wall_clock_s,
    }
    return ArtifactHelper.write_json(payload, experiment.path(EVAL_JSON_FILE))
