from .ci import CiBackend, CiResult, FisherZ, OracleCI, fisher_z_test, partial_correlation
from .granger import GrangerResult, granger_matrix
from .pc import PcResult, meek_closure, orient_v_structures, pc, pc_skeleton, run_pc
from .perturb import jaccard, perturb

__all__ = [
    "CiBackend",
    "CiResult",
    "FisherZ",
    "GrangerResult",
    "OracleCI",
    "PcResult",
    "fisher_z_test",
    "granger_matrix",
    "jaccard",
    "meek_closure",
    "orient_v_structures",
    "partial_correlation",
    "pc",
    "pc_skeleton",
    "perturb",
    "run_pc",
]
