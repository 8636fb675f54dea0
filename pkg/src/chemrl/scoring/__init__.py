"""Scoring functions, the diversity memory and chemistry filters."""

from .diversity import DiversityMemory, DiversitySettings
from .external import ExternalScorer, ExternalScorerProtocolError, ExternalScorerTimeout
from .filters import (
    BasicFilterConfig,
    FilterResult,
    MissingReferenceStats,
    ReferenceStats,
    chemistry_filter_basic,
    chemistry_filter_target,
    matched_alerts,
    passes_both,
    reference_stats,
    reference_stats_from_smiles,
)
from .tasks import (
    KINDS,
    Composite,
    ExternalProcess,
    MolWeightTarget,
    Oracle,
    ScoringTask,
    SimilarityToTarget,
    TaskError,
    TokenPattern,
    ValidityOnly,
    apply_diversity_filter,
    make_oracle,
    score,
)
