"""Run-length analysis of compound control charts and their standard competitors."""

import warnings

__version__ = "0.1.0"

# numba probes for TBB on import of parallel kernels; the fallback layers are fine
warnings.filterwarnings("ignore", message=".*TBB.*", category=Warning)

from .charts import (  # noqa: E402
    ChangePointModel, ChartSpec, ChartState, Family, LimitPolicy, RunsRule, SpecError,
    alarm_threshold, check_alarm, init_state, run_chart, update, weight_vector,
)
from .mc import RunLengthEstimate, SeedPlan  # noqa: E402

__all__ = [
    "ChangePointModel", "ChartSpec", "ChartState", "Family", "LimitPolicy", "RunsRule", "SpecError",
    "alarm_threshold", "check_alarm", "init_state", "run_chart", "update", "weight_vector",
    "RunLengthEstimate", "SeedPlan", "__version__",
]
