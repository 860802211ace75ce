"""Evaluation protocols and report emission.

Three experiments mirror the toolkit's claims at desk scale: prediction
error as a function of how much of the motion has been observed, tracking
error of the compensated versus the plain delayed stream at a fixed round
trip, and the same comparison swept across round trips. Reports are plain
JSON, bit-reproducible under a fixed seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..compensator import Mode
from ..errors import ConfigurationError
from ..netsim import DelayProfile
from ..promp import BasisConfig, TaskModel, fit_task
from ..recognition import (
    DEFAULT_OBS_WINDOW,
    DEFAULT_VELOCITY_THRESHOLD,
    ObservationBuffer,
    estimate_alpha,
    recognize,
)
from ..trajectory import Trajectory, save_csv, trim_at_onset
from .metrics import basis_floor, rms_error, window
from .session import run_session
from .synth import TaskSpec, default_task_specs, synth_robot_demos

SWEEP_ROUND_TRIPS = (0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0)
DEFAULT_TRAIN_REPS = 6
DEFAULT_TEST_REPS = 10


@dataclass(frozen=True)
class Dataset:
    """Train/test split of robot-frame motions for a task library."""

    train: dict[str, list[Trajectory]]
    test: dict[str, list[Trajectory]]

    def test_pairs(self) -> list[tuple[str, Trajectory]]:
        return [(tid, m) for tid, motions in self.test.items() for m in motions]


def build_dataset(
    specs: tuple[TaskSpec, ...] | None = None,
    seed: int = 0,
    train_reps: int = DEFAULT_TRAIN_REPS,
    test_reps: int = DEFAULT_TEST_REPS,
    velocity_threshold: float = DEFAULT_VELOCITY_THRESHOLD,
) -> Dataset:
    """Generate disjoint train/test repetitions for every task.

    All motions are trimmed at the velocity-threshold onset so training
    phase zero and runtime onset detection agree.
    """
    specs = specs or default_task_specs()
    seeds = np.random.SeedSequence(seed).spawn(len(specs))
    train: dict[str, list[Trajectory]] = {}
    test: dict[str, list[Trajectory]] = {}
    for spec, ss in zip(specs, seeds):
        rng = np.random.default_rng(ss)
        from dataclasses import replace

        big = replace(spec, repetitions=train_reps + test_reps)
        motions = [
            trim_at_onset(m, velocity_threshold)
            for m in synth_robot_demos(big, rng)
        ]
        train[spec.task_id] = motions[:train_reps]
        test[spec.task_id] = motions[train_reps:]
    return Dataset(train, test)


def fit_library(dataset: Dataset, config: BasisConfig | None = None) -> list[TaskModel]:
    config = config or BasisConfig()
    return [
        fit_task(task_id, demos, config)
        for task_id, demos in sorted(dataset.train.items())
    ]


# ----------------------------------------------------------------------
# prediction protocol: error after observing portions of the motion
# ----------------------------------------------------------------------


def _buffer_from(motion: Trajectory, upto: float) -> ObservationBuffer:
    buf = ObservationBuffer()
    for t, row in zip(motion.times, motion.values):
        if t - motion.times[0] <= upto:
            buf.insert(float(t), row)
    return buf


def _condition_on_prefix(task: TaskModel, motion: Trajectory, upto: float,
                         alpha: float, obs_variance: float) -> TaskModel:
    t0 = float(motion.times[0])
    promps = list(task.promps)
    for t, row in zip(motion.times, motion.values):
        if t - t0 > upto:
            break
        phase = min(max(alpha * (t - t0) / task.mean_duration, 0.0), 1.0)
        promps = [
            p.condition(phase, float(v), obs_variance)
            for p, v in zip(promps, row)
        ]
    return task.with_promps(tuple(promps))


def _prediction_rms(task: TaskModel, motion: Trajectory, alpha: float,
                    eval_from: float) -> np.ndarray:
    """Per-channel RMS of the model mean against the motion after eval_from."""
    t0 = float(motion.times[0])
    rel = motion.times - t0
    mask = rel >= eval_from
    phases = np.clip(alpha * rel[mask] / task.mean_duration, 0.0, 1.0)
    predicted = task.mean_matrix(phases)
    return np.sqrt(np.mean((predicted - motion.values[mask]) ** 2, axis=0))


def run_prediction_experiment(
    library: list[TaskModel],
    dataset: Dataset,
    fractions: tuple[float, ...] = (0.25, 0.5),
    recognition_window: float = DEFAULT_OBS_WINDOW,
    obs_variance: float = 1e-4,
) -> dict:
    """Prediction error with no observations, after recognition, and after
    observing the given fractions of each held-out motion."""
    if not library:
        raise ConfigurationError("task library is empty")
    by_task = {t.task_id: t for t in library}
    rows = []
    recognized_correctly = 0
    for true_id, motion in dataset.test_pairs():
        duration = float(motion.times[-1] - motion.times[0])
        truth = by_task[true_id]

        # hand-selected task, prior mean, no observations
        row = {
            "task": true_id,
            "duration_s": duration,
            "no_obs": _prediction_rms(truth, motion, 1.0, 0.0).tolist(),
        }

        buf = _buffer_from(motion, recognition_window)
        result = recognize(library, buf, float(motion.times[0]), recognition_window)
        row["recognized"] = result.task_id
        recognized_correctly += result.task_id == true_id
        model = by_task[result.task_id]
        alpha = result.alpha

        posterior = _condition_on_prefix(
            model, motion, recognition_window, alpha, obs_variance
        )
        row["recognition"] = _prediction_rms(
            posterior, motion, alpha, recognition_window
        ).tolist()

        for fraction in fractions:
            upto = fraction * duration
            posterior = _condition_on_prefix(model, motion, upto, alpha, obs_variance)
            row[f"fraction_{fraction:g}"] = _prediction_rms(
                posterior, motion, alpha, upto
            ).tolist()
        rows.append(row)

    n = len(rows)
    channels = list(library[0].channel_names())
    summary = {}
    for key in ["no_obs", "recognition"] + [f"fraction_{f:g}" for f in fractions]:
        stacked = np.array([r[key] for r in rows])
        summary[key] = {
            "per_channel_mean": stacked.mean(axis=0).tolist(),
            "mean": float(stacked.mean()),
            "std": float(stacked.mean(axis=1).std()),
        }
    return {
        "channels": channels,
        "motions": rows,
        "summary": summary,
        "recognition_accuracy": recognized_correctly / n if n else 0.0,
        "n_test_motions": n,
    }


# ----------------------------------------------------------------------
# compensation protocol: full pipeline at a fixed delay profile
# ----------------------------------------------------------------------


def _evaluation_windows(trace, motion):
    """Wall-clock windows for the with-transition and post-transition errors.

    Both end where anticipation can still be compared against the ideal
    motion (its support minus the lead) or where the first revert begins.
    """
    t_pred = trace.first_transition(Mode.BLENDING)
    t_comp = trace.first_transition(Mode.COMPENSATING)
    if t_pred is None or t_comp is None:
        return None
    t_revert = trace.first_transition(Mode.REVERTING)
    t_stop = float(motion.times[-1])
    if t_revert is not None:
        t_stop = min(t_stop, t_revert)
    return t_pred, t_comp, t_stop


def run_compensation_experiment(
    library: list[TaskModel],
    dataset: Dataset,
    profile: DelayProfile,
    seed: int = 0,
    with_plant: bool = True,
    task_filter: str | None = None,
) -> dict:
    """Compensated versus plain-delayed tracking error over the test set."""
    pairs = [
        (tid, m)
        for tid, m in dataset.test_pairs()
        if task_filter is None or tid == task_filter
    ]
    seeds = np.random.SeedSequence(seed).spawn(len(pairs))
    lead = profile.backward_total
    rows = []
    all_round_trips: list[tuple[float, float]] = []
    for (true_id, motion), ss in zip(pairs, seeds):
        child_seed = int(np.random.default_rng(ss).integers(0, 2**31))
        trace = run_session(
            motion, library, profile, seed=child_seed, with_plant=with_plant
        )
        all_round_trips.extend(trace.round_trips)
        row = {
            "task": true_id,
            "reverts": trace.reverts,
            "feedback_drops": trace.feedback_drops,
            "status": "ok",
        }
        windows = _evaluation_windows(trace, motion)
        if windows is None:
            row["status"] = "no-prediction"
            rows.append(row)
            continue
        t_pred, t_comp, t_stop = windows
        refs = trace.reference_trajectory()
        delayed = trace.delayed_trajectory()
        try:
            comp_post = rms_error(window(refs, t_comp, t_stop), motion, offset=lead)
            comp_with = rms_error(window(refs, t_pred, t_stop), motion, offset=lead)
            uncomp = rms_error(window(delayed, t_comp, t_stop), motion, offset=0.0)
        except Exception:
            row["status"] = "window-too-short"
            rows.append(row)
            continue
        row["compensated_post_transition"] = comp_post.tolist()
        row["compensated_with_transition"] = comp_with.tolist()
        row["uncompensated"] = uncomp.tolist()
        rows.append(row)

    ok = [r for r in rows if r["status"] == "ok"]
    summary = {}
    for key in (
        "compensated_post_transition",
        "compensated_with_transition",
        "uncompensated",
    ):
        if ok:
            stacked = np.array([r[key] for r in ok])
            summary[key] = {
                "per_channel_mean": stacked.mean(axis=0).tolist(),
                "mean": float(stacked.mean()),
                "std": float(stacked.mean(axis=1).std()),
            }
    rt_errors = [abs(obs - exp) for obs, exp in all_round_trips]
    return {
        "profile": json.loads(profile.to_json()),
        "channels": list(library[0].channel_names()),
        "motions": rows,
        "summary": summary,
        "n_ok": len(ok),
        "round_trip_max_quantization_s": max(rt_errors) if rt_errors else None,
    }


def run_sweep_experiment(
    library: list[TaskModel],
    dataset: Dataset,
    round_trips: tuple[float, ...] = SWEEP_ROUND_TRIPS,
    seed: int = 0,
    task_filter: str | None = None,
    with_plant: bool = False,
) -> dict:
    """Compensation quality across increasing round-trip delays."""
    curves = {"round_trips_s": list(round_trips), "points": []}
    basis_cfg = library[0].config
    for k, rt in enumerate(round_trips):
        profile = DelayProfile.round_trip(rt)
        report = run_compensation_experiment(
            library,
            dataset,
            profile,
            seed=seed + k,
            with_plant=with_plant,
            task_filter=task_filter,
        )
        point = {"round_trip_s": rt}
        for key in (
            "compensated_post_transition",
            "compensated_with_transition",
            "uncompensated",
        ):
            point[key] = report["summary"].get(key, {}).get("mean")
        curves["points"].append(point)

    floors = [
        float(basis_floor(m, basis_cfg).mean())
        for _, m in dataset.test_pairs()
        if task_filter is None or _ == task_filter
    ]
    curves["basis_floor_mean"] = float(np.mean(floors)) if floors else None
    return curves


# ----------------------------------------------------------------------
# report emission
# ----------------------------------------------------------------------


def write_report(report: dict, out_dir: str | Path) -> Path:
    """Dump the report as canonical JSON; returns the file path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "report.json"
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report, f, sort_keys=True, indent=1)
        f.write("\n")
    return path


def dump_motions(dataset: Dataset, out_dir: str | Path) -> None:
    out = Path(out_dir)
    for split_name, split in (("train", dataset.train), ("test", dataset.test)):
        for task_id, motions in split.items():
            for i, motion in enumerate(motions):
                save_csv(motion, out / f"{split_name}_{task_id}_{i:02d}.csv")
