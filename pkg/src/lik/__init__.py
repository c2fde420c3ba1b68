"""Additive influence models: latent Gram estimation, signal recovery and evaluation.

Panels follow ``Y = S K + E`` with ``S[t, j] = g(x[t, j])`` and
``K[i, j] = kappa(z_i, z_j)`` for unobserved latent positions ``z``.
"""
from .errors import AlgorithmError, LikError
from .evalkit import EvalReport, ForecastSet, consolidate, evaluate
from .gest import PartitionSpec, build_partition, estimate_g, predict_nparam
from .kestim import GramEstimate, HintSet, estimate_k_dd, hint_consolidate
from .pvel import BoostedModel, boost, predict
from .synth import KernelSpec, LatentModel, PanelData, SignalFn, generate_panel

__version__ = "0.1.0"

__all__ = [
    "AlgorithmError", "LikError", "EvalReport", "ForecastSet", "consolidate", "evaluate",
    "PartitionSpec", "build_partition", "estimate_g", "predict_nparam", "GramEstimate",
    "HintSet", "estimate_k_dd", "hint_consolidate", "BoostedModel", "boost", "predict",
    "KernelSpec", "LatentModel", "PanelData", "SignalFn", "generate_panel",
]
