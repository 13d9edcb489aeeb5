import logging
import sys
import threading


# Custom logging filter to include the active run context (seed / config hash)
class RunContextFilter(logging.Filter):
    def __init__(self):
        super().__init__()
        self.local = threading.local()
        self.local.run_tag = "-"

    def set_run_tag(self, run_tag=None):
        self.local.run_tag = run_tag if run_tag else "-"

    def set_context(self, seed=None, config_hash=None, model=None):
        parts = []
        if model is not None:
            parts.append(str(model))
        if seed is not None:
            parts.append(f"seed={seed}")
        if config_hash is not None:
            parts.append(f"cfg={config_hash[:10]}")
        self.set_run_tag(" ".join(parts))

    def filter(self, record):
        record.run_tag = getattr(self.local, "run_tag", "-")
        return True


class SafeFormatter(logging.Formatter):
    def format(self, record):
        if not hasattr(record, "run_tag"):
            record.run_tag = "-"
        return super().format(record)


def set_log_level(level):
    """
    Set the logging level for the package logger.
    """
    level = level.upper()
    if level not in logging._nameToLevel:
        available_levels = "\n\t".join(logging._nameToLevel.keys())
        raise ValueError(f"Invalid log level: {level}\nAvailable levels:\n{available_levels}")
    new_level = logging._nameToLevel[level]
    logging.getLogger().setLevel(new_level)
    logging.getLogger("feedback_quality").setLevel(new_level)

    return f"Log level set to {level}"


# --- Logging setup ---
formatter = SafeFormatter("[%(levelname)s] [%(run_tag)s] [%(module)s:%(funcName)s:%(lineno)d] %(message)s")

# stdout carries command output (JSON)
handler = logging.StreamHandler(sys.stderr)
handler.setFormatter(formatter)

logging.basicConfig(level=logging.INFO, handlers=[handler])

run_context_filter = RunContextFilter()
handler.addFilter(run_context_filter)
logging.getLogger("feedback_quality").addFilter(run_context_filter)

logger = logging.getLogger("feedback_quality")
