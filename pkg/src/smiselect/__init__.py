"""Targeted, budget-constrained subset selection of speech utterances using
submodular mutual information (GCMI, FLMI, LogDMI) over MFCC similarity kernels."""

from .datasets import (SelectionReport, SplitSpec, SyntheticConfig, UtteranceRecord,
                       generate_synthetic, load_manifest, random_select, report,
                       save_manifest, skyline_select, split)
from .features import AudioClip, MfccConfig, MfccFeaturizer, decode_wav, featurize
from .kernel import GaussianSimilarity, KernelConfig, SimilarityKernel, build_kernel
from .optimizer import (BudgetConstraint, GreedyConfig, SelectionResult, brute_force_select,
                        greedy_select, lazy_greedy_select)
from .selector import TargetedSubsetSelector
from .smi import SelectionState, SmiKind, evaluate

__version__ = "0.1.0"

__all__ = [
    "AudioClip", "BudgetConstraint", "GaussianSimilarity", "GreedyConfig", "KernelConfig",
    "MfccConfig", "MfccFeaturizer", "SelectionReport", "SelectionResult", "SelectionState",
    "SimilarityKernel", "SmiKind", "SplitSpec", "SyntheticConfig", "TargetedSubsetSelector",
    "UtteranceRecord", "brute_force_select", "build_kernel", "decode_wav", "evaluate",
    "featurize", "generate_synthetic", "greedy_select", "lazy_greedy_select", "load_manifest",
    "random_select", "report", "save_manifest", "skyline_select", "split",
]
