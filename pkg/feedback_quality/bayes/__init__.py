from .transforms import Block, ParamLayout, ParamVector, Transform, to_constrained, to_unconstrained  # noqa: F401
from .base import ModelInstance  # noqa: F401
from .variants import (  # noqa: F401
    MODEL_CLASSES,
    BasicModel,
    CorrectedGlobalModel,
    EnhancedModel,
    HierInformedModel,
    HierSentimentModel,
    build_model,
)
from .priors import implied_channel_range, informed_priors_from_dashboard  # noqa: F401
