"""Core EEG data containers: continuous recordings and fixed-shape epoch sets."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class ContinuousRecording:
    """A multi-channel EEG recording with stimulus onset annotations.

    data is a (channels, samples) array in microvolts. stimulus_onsets is a
    list of (sample_index, is_target) pairs marking where each stimulus was
    presented.
    """

    data: np.ndarray
    sample_rate_hz: float
    stimulus_onsets: list[tuple[int, bool]] = field(default_factory=list)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ValueError(f"recording data must be 2-D (channels, samples), got shape {self.data.shape}")
        if self.data.shape[0] < 1:
            raise ValueError("recording needs at least one channel")
        if not self.sample_rate_hz > 0:
            raise ValueError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        n = self.data.shape[1]
        for idx, _ in self.stimulus_onsets:
            if not 0 <= idx < n:
                raise ValueError(f"stimulus onset {idx} outside recording of {n} samples")

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]


@dataclass
class EpochSet:
    """A labeled collection of fixed-shape EEG trials.

    epochs is a (n_trials, channels, samples) float64 array; labels is a
    0/1 vector with one entry per trial (1 = target stimulus).
    """

    epochs: np.ndarray
    labels: np.ndarray
    sample_rate_hz: float
    subject_id: str | None = None

    def __post_init__(self):
        self.epochs = np.asarray(self.epochs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.epochs.ndim != 3:
            raise ValueError(f"epochs must be 3-D (trials, channels, samples), got shape {self.epochs.shape}")
        if self.labels.shape != (self.epochs.shape[0],):
            raise ValueError(
                f"labels shape {self.labels.shape} does not match {self.epochs.shape[0]} trials")
        if not np.isin(self.labels, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        if not np.isfinite(self.epochs).all():
            raise ValueError("epochs contain NaN or Inf values")
        if not self.sample_rate_hz > 0:
            raise ValueError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")

    @property
    def n_trials(self) -> int:
        return self.epochs.shape[0]

    @property
    def n_channels(self) -> int:
        return self.epochs.shape[1]

    @property
    def n_samples(self) -> int:
        return self.epochs.shape[2]

    def subset(self, indices) -> "EpochSet":
        """New EpochSet holding the trials selected by `indices`."""
        indices = np.asarray(indices)
        return EpochSet(self.epochs[indices].copy(), self.labels[indices].copy(),
                        self.sample_rate_hz, self.subject_id)

    def replace_data(self, epochs: np.ndarray) -> "EpochSet":
        """Same labels/rate/subject with transformed trial data."""
        return EpochSet(epochs, self.labels.copy(), self.sample_rate_hz, self.subject_id)


def concat_epoch_sets(sets: list[EpochSet]) -> EpochSet:
    """Stack several epoch sets (same channel/sample counts) into one."""
    if not sets:
        raise ValueError("cannot concatenate an empty list of epoch sets")
    shapes = {(s.n_channels, s.n_samples) for s in sets}
    if len(shapes) != 1:
        raise ValueError(f"epoch sets have mismatched shapes: {sorted(shapes)}")
    return EpochSet(
        np.concatenate([s.epochs for s in sets], axis=0),
        np.concatenate([s.labels for s in sets], axis=0),
        sets[0].sample_rate_hz,
        None,
    )
