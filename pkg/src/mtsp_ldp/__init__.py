"""Multi-task streaming publication under w-event local differential privacy."""

from .adaptive import GroupSmoother, atc, group_smooth, theta1_threshold, theta2_threshold
from .allocation import BudgetLedger, DissimilarityWindow, oba_allocate, oba_allocate_fast
from .baselines import BaselineConfig, run_lba, run_lbd, run_lbu, run_lsp
from .domain import StreamBatch, StreamDataset, SyntheticSpec, ValueDomain, ingest_csv, synthesize_stream
from .oue import ExactOracle, OueOracle, OueParams
from .pipeline import MtspConfig, run_mtsp
from .queries import MonitorSpec, ReleaseSeries, counting_query, monitor, range_query
from .tree import PrivateTree, build_exact_tree, estimate_tree, minimum_cover

__all__ = [
    "BaselineConfig", "BudgetLedger", "DissimilarityWindow", "ExactOracle", "GroupSmoother", "MonitorSpec",
    "MtspConfig", "OueOracle", "OueParams", "PrivateTree", "ReleaseSeries", "StreamBatch", "StreamDataset",
    "SyntheticSpec", "ValueDomain", "atc", "build_exact_tree", "counting_query", "estimate_tree", "group_smooth",
    "ingest_csv", "minimum_cover", "monitor", "oba_allocate", "oba_allocate_fast", "range_query", "run_lba",
    "run_lbd", "run_lbu", "run_lsp", "run_mtsp", "synthesize_stream", "theta1_threshold", "theta2_threshold",
]
