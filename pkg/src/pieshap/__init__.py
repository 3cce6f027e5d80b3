"""Concept-coalition Shapley explanations with a trainable per-input surrogate.

A black-box classifier's decision on one input is attributed to binary
concepts: a small surrogate (linear, or 2-layer nonlinear) is distilled from
the target's behaviour on concept coalitions, per-concept Shapley values are
computed exactly or by Monte Carlo, the positive-value subset is the
explanation, and faithfulness is scored by insertion/deletion AUC.
"""

from .coalitions import (
    Coalition,
    ConceptSet,
    coalition_from_text,
    empty_coalition,
    enumerate_coalitions,
    full_coalition,
    sample_coalition,
    with_concept,
    without_concept,
)
from .evaluate import (
    ExplanationReport,
    auc,
    build_report,
    deletion_curve,
    insertion_curve,
    rank_concepts,
    select_explanation,
)
from .fileformat import MissingEntryError, NumericalError, SchemaError
from .nets import FrozenHead, apply_head, softmax
from .oracle import (
    GameView,
    OracleCase,
    SyntheticOracleSpec,
    load_case,
    oracle_game,
    query,
    save_case,
    scalar_utility,
    synth_case,
)
from .shapley import (
    ShapleyEstimate,
    exact_shapley,
    marginal_contribution,
    mc_shapley,
)
from .surrogate import (
    LinearSurrogate,
    NonlinearSurrogate,
    TrainConfig,
    TrainReport,
    cross_entropy,
    forward,
    gradients,
    init_surrogate,
    kl_divergence,
    load_surrogate,
    save_surrogate,
    surrogate_game,
    train,
)

__version__ = "0.1.0"
