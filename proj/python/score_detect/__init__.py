"""Static script malware detection: scope-token and syntax-tree features
with sequential and graph-embedding detectors."""

from ._core import (
    Scanner,
    ScoreError,
    auroc,
    gradcheck,
    obfuscation_scan,
    scope_token_pairs,
    sha256,
    synthesize,
    threshold_at_fpr,
    tree_graph,
    unified_kinds,
)

__version__ = "0.1.0"

__all__ = [
    "Scanner",
    "ScoreError",
    "auroc",
    "gradcheck",
    "obfuscation_scan",
    "scope_token_pairs",
    "sha256",
    "synthesize",
    "threshold_at_fpr",
    "tree_graph",
    "unified_kinds",
    "__version__",
]
