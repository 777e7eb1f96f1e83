"""Epoch file I/O (EPO1 binary format, CSV) and the synthetic oddball
paradigm generator used in place of the original recordings."""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .epochs import EpochSet
from .signal import detrend_rows

EPO1_MAGIC = b"EPOCHSv1"


class EpochFileError(ValueError):
    """Base class for epoch-file format problems."""


class BadMagicError(EpochFileError):
    pass


class TruncatedPayloadError(EpochFileError):
    pass


class InvalidLabelError(EpochFileError):
    pass


def write_epochs(path, epochs: EpochSet) -> None:
    """Write the EPO1 binary format.

    Layout: 8-byte magic "EPOCHSv1", little-endian u32 n_trials, channels,
    samples, little-endian f32 sample rate, then n*C*S little-endian f32
    samples in trial-major channel-major order, then n label bytes (0/1).
    """
    n, c, s = epochs.epochs.shape
    with open(path, "wb") as fh:
        fh.write(EPO1_MAGIC)
        fh.write(struct.pack("<IIIf", n, c, s, float(epochs.sample_rate_hz)))
        fh.write(epochs.epochs.astype("<f4").tobytes())
        fh.write(epochs.labels.astype(np.uint8).tobytes())


def read_epochs(path) -> EpochSet:
    """Read an EPO1 file written by write_epochs; round-trips bit-exactly
    at f32 resolution."""
    raw = Path(path).read_bytes()
    if len(raw) < len(EPO1_MAGIC) or raw[:len(EPO1_MAGIC)] != EPO1_MAGIC:
        raise BadMagicError(f"{path}: not an EPO1 file (bad magic)")
    header_end = len(EPO1_MAGIC) + struct.calcsize("<IIIf")
    if len(raw) < header_end:
        raise TruncatedPayloadError(f"{path}: truncated header")
    n, c, s, rate = struct.unpack("<IIIf", raw[len(EPO1_MAGIC):header_end])
    payload = n * c * s * 4
    expected = header_end + payload + n
    if len(raw) < expected:
        raise TruncatedPayloadError(
            f"{path}: expected {expected} bytes for {n} trials of "
            f"{c}x{s}, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f4", count=n * c * s,
                         offset=header_end).reshape(n, c, s)
    labels = np.frombuffer(raw, dtype=np.uint8, count=n,
                           offset=header_end + payload)
    bad = np.flatnonzero(~np.isin(labels, (0, 1)))
    if bad.size:
        raise InvalidLabelError(
            f"{path}: label byte {labels[bad[0]]} at trial {bad[0]} is not 0/1")
    return EpochSet(data.astype(np.float64), labels.astype(np.int64), float(rate))


def read_csv_epochs(path, channels: int, samples: int,
                    sample_rate_hz: float = 256.0) -> EpochSet:
    """One trial per row: label then channels*samples values, channel-major.

    A header row is skipped if its first cell is not numeric.
    """
    width = 1 + channels * samples
    trials = []
    labels = []
    with open(path, newline="") as fh:
        for rowno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if rowno == 1:
                try:
                    float(row[0])
                except ValueError:
                    continue  # header
            if len(row) != width:
                raise EpochFileError(
                    f"{path}: row {rowno} has {len(row)} fields, expected {width}")
            values = np.asarray([float(v) for v in row], dtype=np.float64)
            label = int(values[0])
            if label not in (0, 1):
                raise InvalidLabelError(f"{path}: row {rowno} label {values[0]} is not 0/1")
            trials.append(values[1:].reshape(channels, samples))
            labels.append(label)
    data = np.stack(trials) if trials else np.zeros((0, channels, samples))
    return EpochSet(data, np.asarray(labels, dtype=np.int64), sample_rate_hz)


def write_csv_epochs(path, epochs: EpochSet) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for i in range(epochs.n_trials):
            row = [int(epochs.labels[i])]
            row += [repr(float(v)) for v in epochs.epochs[i].reshape(-1)]
            writer.writerow(row)


# ---------------------------------------------------------------------------
# synthetic oddball cohort

@dataclass
class SyntheticConfig:
    """Synthetic oddball cohort: rare target trials carry a positive bump
    around 300 ms on top of low-frequency-dominated background noise.

    Latency and amplitude are jittered per subject so within-subject
    structure is stable while cross-subject transfer stays learnable.
    """

    n_subjects: int = 22
    trials_per_subject: int = 2880
    target_ratio: float = 1.0 / 6.0
    channels: int = 6
    samples: int = 206
    sample_rate_hz: float = 256.0
    p300_latency_ms: float = 300.0
    p300_width_ms: float = 80.0
    p300_amplitude: float = 1.0
    noise_amplitude: float = 1.0
    latency_jitter_ms: float = 25.0
    amplitude_jitter: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.p300_amplitude < 0 or self.noise_amplitude < 0:
            raise ValueError("amplitudes must be >= 0")
        if not 0 < self.target_ratio < 1:
            raise ValueError("target_ratio must lie in (0, 1)")
        epoch_ms = self.samples / self.sample_rate_hz * 1000.0
        if self.p300_latency_ms + self.p300_width_ms > epoch_ms:
            raise ValueError(
                f"latency {self.p300_latency_ms} + width {self.p300_width_ms} ms "
                f"exceeds the {epoch_ms:.1f} ms epoch")


def channel_profile(channels: int) -> np.ndarray:
    """Fixed spatial weighting of the target bump, largest on the
    posterior (last) channels."""
    return np.linspace(0.4, 1.0, channels)


def _subject_rng(config: SyntheticConfig, subject_idx: int) -> np.random.Generator:
    # spawn_key makes subject data independent of how many subjects are drawn
    return np.random.default_rng(
        np.random.SeedSequence(config.seed, spawn_key=(subject_idx,)))


def generate_subject(config: SyntheticConfig, subject_idx: int) -> EpochSet:
    """One subject's trials; deterministic in (config.seed, subject_idx)."""
    rng = _subject_rng(config, subject_idx)
    latency = config.p300_latency_ms + config.latency_jitter_ms * rng.uniform(-1, 1)
    amp_factor = 1.0 + config.amplitude_jitter * rng.uniform(-1, 1)

    n = config.trials_per_subject
    n_targets = int(round(config.target_ratio * n))
    labels = np.zeros(n, dtype=np.int64)
    labels[:n_targets] = 1
    rng.shuffle(labels)

    # 1/f-shaped background: integrate white noise, remove the linear trend,
    # normalize each row to unit RMS.
    white = rng.standard_normal((n, config.channels, config.samples))
    colored = detrend_rows(np.cumsum(white, axis=-1))
    rms = np.sqrt((colored ** 2).mean(axis=-1, keepdims=True))
    rms[rms == 0] = 1.0
    data = colored / rms * config.noise_amplitude

    t_ms = np.arange(config.samples) / config.sample_rate_hz * 1000.0
    sigma = config.p300_width_ms / 2.0
    bump = np.exp(-0.5 * ((t_ms - latency) / sigma) ** 2)
    spatial = channel_profile(config.channels)
    target_mask = labels == 1
    data[target_mask] += (amp_factor * config.p300_amplitude
                          * spatial[None, :, None] * bump[None, None, :])
    return EpochSet(data, labels, config.sample_rate_hz, subject_id=f"S{subject_idx:02d}")


def synth_generate(config: SyntheticConfig, n_subjects: int | None = None) -> list[EpochSet]:
    """Generate the cohort (or its first n_subjects subjects)."""
    count = config.n_subjects if n_subjects is None else n_subjects
    return [generate_subject(config, i) for i in range(count)]
