"""Adaptive-branching tree search over stochastic answer generators."""

from .conjugate import (
    DEFAULT_BETA_PRIOR,
    DEFAULT_GAUSSIAN_PRIOR,
    BetaPosterior,
    GaussianPosterior,
    beta_predictive_sample,
    beta_update,
    gaussian_predictive_sample,
    gaussian_update,
    thompson_argmax,
)
from .generators import (
    DEEP_FAVORED,
    WIDE_FAVORED,
    ExternalGenerator,
    GenerationRequest,
    GenerationResult,
    GeneratorUnavailable,
    LandscapeParams,
    LineageRecord,
    ScriptedGenerator,
    SyntheticGenerator,
    synth_generate,
)
from .harness import (
    ConfigError,
    ExperimentConfig,
    RunRecord,
    aggregate,
    read_records,
    run_experiment,
    sensitivity_sweep,
    write_records,
)
from .mixedmodel import (
    GroupedObservations,
    McmcConfig,
    MixedModelFit,
    MixedModelPriors,
    fit,
    log_posterior,
    predictive_draw,
)
from .multigen import MultiGenPolicy, usage_fractions
from .policies import (
    ExpansionTarget,
    Policy,
    PolicyConfig,
    make_policy,
    pw_should_widen,
    run_search,
    uct_select_child,
)
from .tree import (
    Node,
    NodeKind,
    SearchTree,
    TreeMetrics,
    TreeVariant,
    add_answer_node,
    backup_a,
    backup_m,
    check_invariants,
    export_tree,
    import_records,
    new_tree,
    select_best,
    tree_metrics,
    tree_prefix,
)

__version__ = "0.1.0"
