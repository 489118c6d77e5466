"""Python bindings for sgdlab.

Experiments take the same config text the CLI reads::

    import sgdlab
    est = sgdlab.run_experiment(open("configs/quadratic_msgd.cfg").read(),
                                ["run.horizon=1000", "run.replicas=8"])
    est["checkpoints"][-1]["mean_grad_sq"]
"""

import json

from ._sgdlab import (
    ConfigError,
    ExperimentFailure,
    PowerSchedule,
    canonical_config,
    check_gradient,
    classify,
    config_from_manifest,
    make_power_schedule,
    select_lambda,
    select_zeta,
)
from ._sgdlab import run_experiment as _run_experiment


def run_experiment(text, overrides=()):
    """Runs an experiment; `summary` is the parsed summary JSON."""
    out = _run_experiment(text, list(overrides))
    out["summary"] = json.loads(out["summary_json"])
    return out


__all__ = [
    "ConfigError",
    "ExperimentFailure",
    "PowerSchedule",
    "canonical_config",
    "check_gradient",
    "classify",
    "config_from_manifest",
    "make_power_schedule",
    "run_experiment",
    "select_lambda",
    "select_zeta",
]
