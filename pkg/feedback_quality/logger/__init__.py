from .logger_config import logger, run_context_filter, set_log_level
