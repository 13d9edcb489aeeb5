from .errors import (  # noqa: F401
    ConfigError,
    DatasetValidationError,
    EstimationError,
    EvaluationError,
    FeedbackQualityError,
    ModelError,
    SamplerError,
)
from .types import (  # noqa: F401
    ClusterStats,
    Dataset,
    InteractionRecord,
    aggregate_from_interactions,
    prevalence,
    validate_dataset,
)
from .config import (  # noqa: F401
    DEFAULT_TARGET_ACCEPT,
    ModelVariant,
    PriorConfig,
    RunConfig,
    SamplerConfig,
    load_run_config,
    parse_run_config,
)
from .io import (  # noqa: F401
    read_cluster_csv,
    read_interaction_csv,
    write_cluster_csv,
    write_interaction_csv,
)
