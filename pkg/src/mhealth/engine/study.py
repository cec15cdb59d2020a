"""Synthetic labelled cohorts and the three- versus four-input study.

The cohort mixes wearers of differing fitness. More active wearers run a
higher resting heart rate and temperature and a slightly lower SpO2, which
pushes their normal readings toward the clinical limits; during any
anomaly episode the wearer slows toward rest. The activity channel
therefore separates exertion from pathology, which the three vital signs
alone cannot do cleanly.
"""

from __future__ import annotations

import dataclasses
import statistics
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from mhealth.engine.features import LabeledSet
from mhealth.engine.mlp import init_model
from mhealth.engine.training import Hyperparams, evaluate, train
from mhealth.sensor.generator import (
    EpisodeKind,
    EpisodeScript,
    Episode,
    PatientProfile,
    ReportingMode,
    generate_stream,
    label_array,
)

# Medians quoted for the original prototype's (unpublished) dataset.
REFERENCE_MEDIANS = {3: 0.87, 4: 0.94}

_ANOMALY_KINDS = (EpisodeKind.HYPOXIA, EpisodeKind.TACHYCARDIA, EpisodeKind.FEVER)


@dataclass(frozen=True)
class CohortConfig:
    n_patients: int = 6
    duration_s: float = 900.0
    hz: float = 1.0
    episode_len_s: tuple[float, float] = (30.0, 90.0)
    gap_s: tuple[float, float] = (40.0, 160.0)


def cohort_profile(rng: np.random.Generator) -> PatientProfile:
    fitness = rng.uniform(0.05, 0.8)
    return PatientProfile(
        spo2_mean=float(np.clip(98.0 - 4.0 * fitness + rng.normal(0, 1.0), 91.5, 99.5)),
        hr_mean=float(np.clip(62.0 + 55.0 * fitness + rng.normal(0, 5.0), 55.0, 115.0)),
        temp_mean=float(np.clip(36.5 + 1.3 * fitness + rng.normal(0, 0.2), 36.3, 38.1)),
        activity_mean=float(fitness),
    )


def random_script(rng: np.random.Generator, cfg: CohortConfig) -> EpisodeScript:
    episodes = []
    t = 0.0
    while True:
        start = t + rng.uniform(*cfg.gap_s)
        end = start + rng.uniform(*cfg.episode_len_s)
        if end > cfg.duration_s:
            break
        kind = _ANOMALY_KINDS[int(rng.integers(len(_ANOMALY_KINDS)))]
        episodes.append(Episode(float(start), float(end), kind))
        t = end
    return EpisodeScript(tuple(episodes))


def _patient_rows(rng: np.random.Generator, cfg: CohortConfig) -> np.ndarray:
    profile = cohort_profile(rng)
    script = random_script(rng, cfg)
    stream = generate_stream(profile, script, ReportingMode.raw(), cfg.hz,
                             seed=int(rng.integers(2**63)), duration_s=cfg.duration_s)
    return np.array([[s.spo2_pct, s.hr_bpm, s.temp_c, s.activity_level] for s in stream])


def synthesize_dataset(size: int = 540, seed: int = 0, anomaly_fraction: float = 0.3,
                       cfg: CohortConfig = CohortConfig()) -> LabeledSet:
    """Draw ``size`` readings from a simulated cohort, labelled by the norms.

    Rows are sampled per label so the anomalous share is exactly
    ``round(size * anomaly_fraction) / size``.
    """
    if size < 1:
        raise ValueError("size must be >= 1")
    if not 0.0 <= anomaly_fraction <= 1.0:
        raise ValueError("anomaly_fraction must be within [0, 1]")
    rng = np.random.default_rng(seed)
    n_anom = int(round(size * anomaly_fraction))
    n_norm = size - n_anom
    chunks = []
    counts = np.zeros(2, dtype=int)
    patients = 0
    while patients < cfg.n_patients or counts[1] < n_anom or counts[0] < n_norm:
        rows = _patient_rows(rng, cfg)
        chunks.append(rows)
        counts += np.bincount(label_array(rows), minlength=2)
        patients += 1
        if patients > 1000:
            raise RuntimeError("cohort generator cannot reach the requested label mix")
    pool = np.vstack(chunks)
    labels = label_array(pool)
    pick_a = rng.choice(np.flatnonzero(labels == 1), size=n_anom, replace=False)
    pick_n = rng.choice(np.flatnonzero(labels == 0), size=n_norm, replace=False)
    idx = rng.permutation(np.concatenate([pick_a, pick_n]))
    return LabeledSet(pool[idx], labels[idx])


@dataclass(frozen=True)
class ArmResult:
    accuracy: float
    epochs: int
    converged: bool
    final_loss: float
    first_loss: float


@dataclass(frozen=True)
class TrialResult:
    trial: int
    anomaly_fraction: float
    arms: dict[int, ArmResult]


@dataclass
class StudyReport:
    seed: int
    size: int
    trials: list[TrialResult] = field(default_factory=list)

    def accuracies(self, n: int) -> list[float]:
        return [t.arms[n].accuracy for t in self.trials]

    def epochs(self, n: int) -> list[int]:
        return [t.arms[n].epochs for t in self.trials]

    def median_accuracy(self, n: int) -> float:
        return float(statistics.median(self.accuracies(n)))

    def median_epochs(self, n: int) -> float:
        return float(statistics.median(self.epochs(n)))

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "size": self.size,
            "n_trials": len(self.trials),
            "median_accuracy": {str(n): self.median_accuracy(n) for n in (3, 4)},
            "median_epochs_to_target": {str(n): self.median_epochs(n) for n in (3, 4)},
            "reference_median_accuracy": {str(k): v for k, v in REFERENCE_MEDIANS.items()},
            "trials": [
                {
                    "trial": t.trial,
                    "anomaly_fraction": t.anomaly_fraction,
                    **{f"n{n}": dataclasses.asdict(a) for n, a in sorted(t.arms.items())},
                }
                for t in self.trials
            ],
        }

    def table(self) -> str:
        lines = [f"{'trial':>5}  {'acc(3)':>7}  {'acc(4)':>7}  {'ep(3)':>6}  {'ep(4)':>6}"]
        for t in self.trials:
            a3, a4 = t.arms[3], t.arms[4]
            lines.append(f"{t.trial:>5}  {a3.accuracy:>7.3f}  {a4.accuracy:>7.3f}  "
                         f"{a3.epochs:>6}  {a4.epochs:>6}")
        lines.append(f"{'median':>5}  {self.median_accuracy(3):>7.3f}  {self.median_accuracy(4):>7.3f}"
                     f"  {self.median_epochs(3):>6.0f}  {self.median_epochs(4):>6.0f}")
        lines.append(f"{'ref':>5}  {REFERENCE_MEDIANS[3]:>7.3f}  {REFERENCE_MEDIANS[4]:>7.3f}"
                     "  (published medians, not a target)")
        return "\n".join(lines)


def run_trial(trial: int, seq: np.random.SeedSequence, size: int, anomaly_fraction: float,
              hp: Hyperparams, n_hidden: int, train_fraction: float = 0.8,
              cfg: CohortConfig = CohortConfig()) -> TrialResult:
    data_seed, split_seed, init_seed, shuffle_seed = (int(s) for s in seq.generate_state(4))
    data = synthesize_dataset(size, data_seed, anomaly_fraction, cfg)
    perm = np.random.default_rng(split_seed).permutation(len(data))
    n_train = int(round(train_fraction * len(data)))
    train_set, test_set = data.subset(perm[:n_train]), data.subset(perm[n_train:])
    arms = {}
    for n in (3, 4):
        model = init_model(n, n_hidden, init_seed, hp.init_scale)
        res = train(model, train_set, dataclasses.replace(hp, seed=shuffle_seed))
        ev = evaluate(res.model, test_set)
        arms[n] = ArmResult(
            accuracy=ev.accuracy,
            epochs=res.epochs_to_target if res.converged else hp.epochs,
            converged=res.converged,
            final_loss=res.losses[-1],
            first_loss=res.losses[0],
        )
    return TrialResult(trial, data.anomaly_fraction, arms)


def input_study(seed: int = 0, trials: int = 11, size: int = 540, anomaly_fraction: float = 0.3,
                hp: Optional[Hyperparams] = None, n_hidden: int = 5) -> StudyReport:
    """Train 3- and 4-input networks on the same fresh cohort, ``trials`` times.

    Every trial draws its seeds from its own child of ``seed``, so trials
    can run in any order (or in parallel) and still give the same report.
    A run that never reaches the target loss is counted at the epoch cap.
    """
    if trials < 1 or trials % 2 == 0:
        raise ValueError("trials must be a positive odd number")
    hp = hp or Hyperparams()
    children = np.random.SeedSequence(seed).spawn(trials)
    report = StudyReport(seed, size)
    for i, child in enumerate(children):
        report.trials.append(run_trial(i, child, size, anomaly_fraction, hp, n_hidden))
    return report


def reference_model(seed: int = 0, n_inputs: int = 4, size: int = 540,
                    hp: Optional[Hyperparams] = None, n_hidden: int = 5):
    """A network trained on one full synthetic set, for simulations and demos."""
    hp = hp or Hyperparams(seed=seed)
    data = synthesize_dataset(size, seed)
    return train(init_model(n_inputs, n_hidden, seed, hp.init_scale), data, hp).model
