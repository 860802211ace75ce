"""Experiment runner: synthetic datasets, pipeline sessions, metrics, reports."""

from ..trajectory import load_csv, save_csv
from .experiments import (
    Dataset,
    build_dataset,
    dump_motions,
    fit_library,
    run_compensation_experiment,
    run_prediction_experiment,
    run_sweep_experiment,
    write_report,
)
from .metrics import basis_floor, rms_error, window
from .session import SessionTrace, run_session
from .synth import (
    ChannelTarget,
    TaskSpec,
    default_retarget_config,
    default_task_specs,
    min_jerk,
    sweep_task_specs,
    synth_demos,
    synth_robot_demos,
)

__all__ = [
    "load_csv",
    "save_csv",
    "Dataset",
    "build_dataset",
    "dump_motions",
    "fit_library",
    "run_compensation_experiment",
    "run_prediction_experiment",
    "run_sweep_experiment",
    "write_report",
    "basis_floor",
    "rms_error",
    "window",
    "SessionTrace",
    "run_session",
    "ChannelTarget",
    "TaskSpec",
    "default_retarget_config",
    "default_task_specs",
    "min_jerk",
    "sweep_task_specs",
    "synth_demos",
    "synth_robot_demos",
]
