"""Causal-structure-aware multivariate forecasting: PC discovery, role decomposition and a small adapter-based forecaster."""
from .dataset import SeriesFrame, SplitSpec, load_csv, prepare, save_csv, window
from .discovery import FisherZ, OracleCI, granger_matrix, jaccard, pc, perturb, run_pc
from .graphs import Cpdag, Dag, read_adjacency_csv, write_adjacency_csv
from .roles import RoleSet, decompose, decompose_all, init_logits, prior_matrices
from .scm import LinearScm, cpdag_of, d_separated, random_dag, sample_iid, sample_lagged

__version__ = "0.1.0"

__all__ = [
    "Cpdag",
    "Dag",
    "FisherZ",
    "LinearScm",
    "OracleCI",
    "RoleSet",
    "SeriesFrame",
    "SplitSpec",
    "cpdag_of",
    "d_separated",
    "decompose",
    "decompose_all",
    "granger_matrix",
    "init_logits",
    "jaccard",
    "load_csv",
    "pc",
    "perturb",
    "prepare",
    "prior_matrices",
    "random_dag",
    "read_adjacency_csv",
    "run_pc",
    "sample_iid",
    "sample_lagged",
    "save_csv",
    "window",
    "write_adjacency_csv",
]
