from seqaudit.sim.analytic import AnalyticScoreModel
from seqaudit.sim.experiment import (
    ExperimentConfig,
    RateEstimate,
    TrialResult,
    estimate_rates,
    run_experiment,
    run_paired,
    run_trials,
)
from seqaudit.sim.task import SyntheticTask, TaskConfig
from seqaudit.sim.toy import ToyClassifier, TrainConfig, train_classifier
