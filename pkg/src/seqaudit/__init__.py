"""Instance-level data-use auditing with sequential rank tests."""

from seqaudit.null_rank import (
    FdrThreshold,
    NullRankSumDistribution,
    UnsatisfiableThresholdError,
    pmf,
    pmf_table_bruteforce,
    tail,
    threshold_for_fdr,
)
from seqaudit.pprm import ConfidenceSequenceState, log_likelihood_wor
from seqaudit.detector import AuditInput, DetectionOutcome, compare, detect, rank

__version__ = "0.1.0"

__all__ = [
    "AuditInput",
    "ConfidenceSequenceState",
    "DetectionOutcome",
    "FdrThreshold",
    "NullRankSumDistribution",
    "UnsatisfiableThresholdError",
    "compare",
    "detect",
    "log_likelihood_wor",
    "pmf",
    "pmf_table_bruteforce",
    "rank",
    "tail",
    "threshold_for_fdr",
]
