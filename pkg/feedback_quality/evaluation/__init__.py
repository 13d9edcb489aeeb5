from .loo import LooResult, gpdfit, loglik_matrix, psis_loo  # noqa: F401
from .compare import ComparisonRow, ComparisonTable, compare, pseudo_bma_weights, stacking_weights  # noqa: F401
from .ppc import PPCResult, ppc_check  # noqa: F401
