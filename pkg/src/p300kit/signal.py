"""EEG preprocessing chain: IIR bandpass design/application, DC removal,
linear detrending, per-channel standardization, and epoch extraction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .epochs import ContinuousRecording, EpochSet

STANDARDIZE_EPS = 1e-8


class FilterDesignError(ValueError):
    """Raised when a requested filter cannot be designed."""


@dataclass
class IirFilter:
    """Digital IIR filter as transfer-function coefficients.

    b are the feedforward and a the feedback coefficients of
    H(z) = (b0 + b1 z^-1 + ...) / (1 + a1 z^-1 + ...); a[0] is required to
    be exactly 1. Design metadata is kept for provenance and is None for
    hand-built filters.

    Narrow-band designs are ill-conditioned in expanded (b, a) form: the
    poles cluster near z = 1 and rounding the polynomial coefficients
    visibly warps the response at the band edges. Designed filters
    therefore also carry `sections`, an (n, 6) array of cascaded biquads
    (b0 b1 b2 a0 a1 a2 per row), which is the representation used to apply
    and evaluate them; (b, a) stays available for inspection and pole
    checks. Hand-built filters without sections use (b, a) directly.
    """

    b: np.ndarray
    a: np.ndarray
    order: int | None = None
    low_hz: float | None = None
    high_hz: float | None = None
    sample_rate_hz: float | None = None
    sections: np.ndarray | None = None

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=np.float64)
        self.a = np.asarray(self.a, dtype=np.float64)
        if self.b.ndim != 1 or self.a.ndim != 1 or len(self.a) < 1:
            raise ValueError("filter coefficients must be 1-D arrays")
        if self.a[0] != 1.0:
            raise ValueError(f"a[0] must be exactly 1, got {self.a[0]!r}")
        if not (np.isfinite(self.b).all() and np.isfinite(self.a).all()):
            raise ValueError("filter coefficients must be finite")
        if self.sections is not None:
            self.sections = np.asarray(self.sections, dtype=np.float64)
            if self.sections.ndim != 2 or self.sections.shape[1] != 6:
                raise ValueError("sections must be an (n, 6) biquad array")

    def poles(self) -> np.ndarray:
        if len(self.a) == 1:
            return np.array([], dtype=complex)
        return np.roots(self.a)

    def is_stable(self) -> bool:
        p = self.poles()
        if p.size and np.abs(p).max() >= 1.0:
            return False
        if self.sections is not None:
            for row in self.sections:
                r = np.roots(row[3:])
                if r.size and np.abs(r).max() >= 1.0:
                    return False
        return True

    def frequency_response(self, freqs_hz, sample_rate_hz: float | None = None) -> np.ndarray:
        """Complex H(e^{j 2 pi f / fs}) evaluated at the given frequencies."""
        fs = sample_rate_hz if sample_rate_hz is not None else self.sample_rate_hz
        if fs is None:
            raise ValueError("sample_rate_hz required to evaluate the response")
        w = 2.0 * np.pi * np.asarray(freqs_hz, dtype=np.float64) / fs
        zinv = np.exp(-1j * w)
        if self.sections is not None:
            h = np.ones_like(zinv)
            for row in self.sections:
                num = row[0] + zinv * (row[1] + zinv * row[2])
                den = row[3] + zinv * (row[4] + zinv * row[5])
                h = h * num / den
            return h
        num = np.polyval(self.b[::-1], zinv)
        den = np.polyval(self.a[::-1], zinv)
        return num / den


def _butterworth_prototype_poles(order: int) -> np.ndarray:
    # Left-half-plane poles of the unit-cutoff analog lowpass prototype.
    k = np.arange(1, order + 1)
    theta = np.pi * (2 * k + order - 1) / (2 * order)
    return np.exp(1j * theta)


def design_butterworth_bandpass(order: int, low_hz: float, high_hz: float,
                                sample_rate_hz: float) -> IirFilter:
    """Design a digital Butterworth bandpass filter.

    The analog prototype is frequency pre-warped, transformed lowpass to
    bandpass, and discretized with the bilinear transform, so the -3 dB
    points land exactly on low_hz and high_hz. The numerator is built from
    the exact (z^2 - 1)^order binomial pattern, which pins the response to
    zero at DC and at Nyquist.
    """
    if order < 1 or int(order) != order:
        raise FilterDesignError(f"order must be a positive integer, got {order}")
    if not (0 < low_hz < high_hz < sample_rate_hz / 2):
        raise FilterDesignError(
            f"band edges must satisfy 0 < low ({low_hz}) < high ({high_hz}) "
            f"< Nyquist ({sample_rate_hz / 2})")
    order = int(order)

    fs2 = 2.0 * sample_rate_hz
    w1 = fs2 * np.tan(np.pi * low_hz / sample_rate_hz)
    w2 = fs2 * np.tan(np.pi * high_hz / sample_rate_hz)
    bw = w2 - w1
    w0_sq = w1 * w2

    proto = _butterworth_prototype_poles(order)
    # Lowpass-to-bandpass: each prototype pole yields a pair of poles.
    pb = proto * bw / 2.0
    disc = np.sqrt(pb * pb - w0_sq + 0j)
    analog_poles = np.concatenate([pb + disc, pb - disc])

    digital_poles = (fs2 + analog_poles) / (fs2 - analog_poles)
    # Analog gain bw^order, times the bilinear substitution factor for the
    # n zeros at s=0 against 2n poles.
    gain = (bw ** order) * (fs2 ** order) / np.prod(fs2 - analog_poles)
    gain = float(np.real(gain))
    section_gain = abs(gain) ** (1.0 / order) * (1.0 if gain >= 0 else -1.0)

    # One biquad per conjugate pole pair, numerator g_s * (z^2 - 1). The
    # expanded (b, a) polynomials are kept alongside, but the cascade is
    # what gets applied: it stays accurate where the expanded form is
    # ill-conditioned (poles clustered near z = 1 for narrow bands).
    tol = 1e-9
    upper = sorted((p for p in digital_poles if p.imag > tol * (1.0 + abs(p))),
                   key=lambda p: (p.real, p.imag))
    reals = sorted(p.real for p in digital_poles
                   if abs(p.imag) <= tol * (1.0 + abs(p)))
    if len(upper) * 2 + len(reals) != 2 * order or len(reals) % 2 != 0:
        raise FilterDesignError(
            f"order-{order} design produced an unpairable pole set for band "
            f"{low_hz}-{high_hz} Hz at {sample_rate_hz} Hz")
    sections = np.empty((order, 6), dtype=np.float64)
    for i, p in enumerate(upper):
        sections[i] = (section_gain, 0.0, -section_gain,
                       1.0, -2.0 * p.real, (p * p.conjugate()).real)
    for j in range(0, len(reals), 2):
        r1, r2 = reals[j], reals[j + 1]
        sections[len(upper) + j // 2] = (section_gain, 0.0, -section_gain,
                                         1.0, -(r1 + r2), r1 * r2)

    # (z^2 - 1)^order expanded with exact binomial coefficients.
    zeros_poly = np.zeros(2 * order + 1, dtype=np.float64)
    for i in range(order + 1):
        c = 1.0
        for j in range(1, i + 1):  # binomial(order, i)
            c = c * (order - j + 1) / j
        zeros_poly[2 * (order - i)] = c * ((-1.0) ** i)

    b = gain * zeros_poly
    a = np.poly(digital_poles).real

    if not (np.isfinite(b).all() and np.isfinite(a).all()
            and np.isfinite(sections).all()):
        raise FilterDesignError(
            f"order-{order} design overflowed double precision for band "
            f"{low_hz}-{high_hz} Hz at {sample_rate_hz} Hz")
    filt = IirFilter(b, a / a[0], order=order, low_hz=low_hz, high_hz=high_hz,
                     sample_rate_hz=sample_rate_hz, sections=sections)
    if not filt.is_stable():
        raise FilterDesignError(
            f"order-{order} design is numerically unstable for band "
            f"{low_hz}-{high_hz} Hz at {sample_rate_hz} Hz; reduce the order")
    return filt


def _difference_equation(b: np.ndarray, a: np.ndarray, flat: np.ndarray) -> np.ndarray:
    # Direct-form II transposed recursion over the sample axis, vectorized
    # across rows.
    n_rows, n = flat.shape
    m = max(len(b), len(a))
    bp = np.zeros(m)
    ap = np.zeros(m)
    bp[:len(b)] = b
    ap[:len(a)] = a
    y = np.empty_like(flat)
    if m == 1:
        y[:] = bp[0] * flat
        return y
    state = np.zeros((m - 1, n_rows))
    b_tail = bp[1:, None]
    a_tail = ap[1:, None]
    for i in range(n):
        xi = flat[:, i]
        yi = bp[0] * xi + state[0]
        new_state = b_tail * xi[None, :] - a_tail * yi[None, :]
        new_state[:-1] += state[1:]
        state = new_state
        y[:, i] = yi
    return y


def filter_rows(filt: IirFilter, x: np.ndarray) -> np.ndarray:
    """Causal single-pass IIR filtering along the last axis.

    Applied independently to each leading-axis row; output has the same
    shape as the input. Filters carrying biquad sections run as a cascade
    of direct-form difference equations, others as a single one.
    """
    x = np.asarray(x, dtype=np.float64)
    if np.isnan(x).any():
        raise ValueError("input contains NaN samples; refusing to filter")
    flat = x.reshape(-1, x.shape[-1])
    if filt.sections is not None:
        y = flat
        for row in filt.sections:
            y = _difference_equation(row[:3], row[3:], y)
    else:
        y = _difference_equation(filt.b, filt.a, flat)
    return y.reshape(x.shape)


def apply_iir_filter(filt: IirFilter, recording: ContinuousRecording) -> ContinuousRecording:
    """Filter every channel of a continuous recording (causal, single pass)."""
    if not filt.is_stable():
        raise ValueError("refusing to apply an unstable filter")
    order = max(len(filt.b), len(filt.a)) - 1
    if recording.n_samples <= order:
        raise ValueError(
            f"recording of {recording.n_samples} samples is shorter than the filter order {order}")
    return ContinuousRecording(filter_rows(filt, recording.data),
                               recording.sample_rate_hz,
                               list(recording.stimulus_onsets))


def bandpass_epochs(filt: IirFilter, epochs: EpochSet) -> EpochSet:
    """Filter each (trial, channel) row of an epoch set independently."""
    if not filt.is_stable():
        raise ValueError("refusing to apply an unstable filter")
    return epochs.replace_data(filter_rows(filt, epochs.epochs))


def remove_dc(epochs: EpochSet) -> EpochSet:
    """Subtract the mean of every (trial, channel) row."""
    data = epochs.epochs
    return epochs.replace_data(data - data.mean(axis=2, keepdims=True))


def detrend_rows(x: np.ndarray) -> np.ndarray:
    """Remove the least-squares line over the last axis of each row."""
    x = np.asarray(x, dtype=np.float64)
    s = x.shape[-1]
    if s < 2:
        raise ValueError("detrending needs at least two samples per row")
    t = np.arange(s, dtype=np.float64)
    tc = t - t.mean()
    denom = np.dot(tc, tc)
    xm = x.mean(axis=-1, keepdims=True)
    slope = ((x - xm) @ tc) / denom
    return x - xm - slope[..., None] * tc


def detrend_linear(epochs: EpochSet) -> EpochSet:
    """Remove the per-(trial, channel) linear trend over sample index."""
    return epochs.replace_data(detrend_rows(epochs.epochs))


def standardize_channels(train: EpochSet, others: list[EpochSet] | None = None
                         ) -> tuple[EpochSet, list[EpochSet]]:
    """Standardize each channel using statistics of the training set only.

    Mean and standard deviation are computed per channel over all training
    trials and samples; the identical transform is applied to every set in
    `others`, so no statistics leak from validation or test data.
    """
    if train.n_trials == 0:
        raise ValueError("training set is empty")
    mu = train.epochs.mean(axis=(0, 2))
    sigma = train.epochs.std(axis=(0, 2))
    denom = (sigma + STANDARDIZE_EPS)[None, :, None]

    def transform(es: EpochSet) -> EpochSet:
        return es.replace_data((es.epochs - mu[None, :, None]) / denom)

    return transform(train), [transform(es) for es in (others or [])]


def extract_epochs(recording: ContinuousRecording, epoch_ms: float,
                   samples_override: int | None = None) -> EpochSet:
    """Cut one fixed-length trial per stimulus onset.

    The trial length is samples_override when given, otherwise
    round(epoch_ms / 1000 * sample_rate_hz).
    """
    if samples_override is not None:
        s = int(samples_override)
    else:
        s = int(round(epoch_ms / 1000.0 * recording.sample_rate_hz))
    if s < 1:
        raise ValueError(f"epoch length of {s} samples is not usable")
    n = recording.n_samples
    trials = []
    labels = []
    for idx, is_target in recording.stimulus_onsets:
        if idx + s > n:
            raise ValueError(
                f"stimulus onset {idx} too close to recording end: needs {s} "
                f"samples but only {n - idx} remain")
        trials.append(recording.data[:, idx:idx + s])
        labels.append(1 if is_target else 0)
    epochs = np.stack(trials) if trials else np.zeros((0, recording.n_channels, s))
    return EpochSet(epochs, np.asarray(labels, dtype=np.int64), recording.sample_rate_hz)
