"""Quantized gossip consensus: QC and QA protocols, hitting-time chains and bounds."""

from .bounds import bound_report, qa_time_bound, qc_time_bound
from .experiments import ExperimentConfig, TrialStats, run_ensemble, sweep
from .graph import ActivationModel, Digraph, complete_digraph, load_graph
from .markov import ChainSpec, solve_hitting_times
from .protocol_qa import QaState, qa_step, run_qa
from .protocol_qc import qc_step, run_qc

__version__ = "0.1.0"

__all__ = [
    "ActivationModel",
    "ChainSpec",
    "Digraph",
    "ExperimentConfig",
    "QaState",
    "TrialStats",
    "bound_report",
    "complete_digraph",
    "load_graph",
    "qa_step",
    "qa_time_bound",
    "qc_step",
    "qc_time_bound",
    "run_ensemble",
    "run_qa",
    "run_qc",
    "solve_hitting_times",
    "sweep",
]
