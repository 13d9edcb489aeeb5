from .integrator import PhaseState, leapfrog  # noqa: F401
from .nuts import NUTSKernel, TransitionStats, find_reasonable_step_size, nuts_transition  # noqa: F401
from .adaptation import DualAveraging, WindowedAdaptation, adapt, adaptation_windows  # noqa: F401
from .diagnostics import ConvergenceReport, convergence_report, ess, mcse_mean, split_rhat  # noqa: F401
from .chains import PosteriorDraws, chain_rng, run_chains, sample_chain  # noqa: F401
from .draws_io import SavedFit, load_draws, save_draws  # noqa: F401
