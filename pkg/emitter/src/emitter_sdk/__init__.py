"""emitter_sdk: record training runs as trace-project manifests.

The SDK stages one model version per training run, captures its learning
configuration, logs metric values, and writes everything into the project's
``artifacts/`` directory on finalize. It never trains or evaluates anything
itself; it only records what the enclosing loop reports, in the exact file
format the trace lint tool consumes.
"""

__version__ = "0.1.0"

from emitter_sdk.runs import (
    RunClosedError,
    RunHandle,
    config_digest,
    finalize_run,
    log_metric_value,
    start_run,
)

__all__ = [
    "__version__",
    "RunClosedError",
    "RunHandle",
    "config_digest",
    "finalize_run",
    "log_metric_value",
    "start_run",
]
