"""Heart-sound preprocessing: band-pass filter, windowing, normalization.

The chain per recording is: zero-phase 4th-order Butterworth band-pass
(25-400 Hz), non-overlapping 4-second windows (trailing remainder
dropped), then per-window finalization: linear-interpolation resampling to
2000 samples, mean centering, and peak normalization to max |v| = 1.
Windows containing non-finite values, or that are identically zero (so the
normalization is undefined), are rejected as a typed outcome rather than
an error.

The band-pass is realized as cascaded second-order sections obtained from
the analytic Butterworth prototype through the bilinear transform with
pre-warped corner frequencies; applying it forward and backward squares
the magnitude response and cancels the phase.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

from .errors import DataError
from .rng import Rng

SEGMENT_LENGTH = 2000
WINDOW_SECONDS = 4.0
BAND_LOW_HZ = 25.0
BAND_HIGH_HZ = 400.0
FILTER_ORDER = 4

# odd-reflection pad length: 3 x (digital order + 1); the band-pass doubles
# the analytic order, so 3 * (2*4 + 1) = 27 samples at each end
PAD_LEN = 3 * (2 * FILTER_ORDER + 1)

LABELS = ("normal", "abnormal")
LABEL_TO_INT = {"normal": 0, "abnormal": 1}


@dataclass(frozen=True)
class Recording:
    """One raw or filtered mono recording."""

    samples: np.ndarray
    sample_rate: float
    id: str
    label: str

    def __post_init__(self) -> None:
        if self.sample_rate <= 0.0:
            raise DataError(f"recording {self.id}: sample rate must be > 0")
        if len(self.samples) == 0:
            raise DataError(f"recording {self.id}: empty signal")
        if self.label not in LABELS:
            raise DataError(f"recording {self.id}: unknown label {self.label!r}")


@dataclass(frozen=True)
class Segment:
    """One preprocessed window: 2000 samples, centered, peak-normalized."""

    values: np.ndarray
    label: str
    recording_id: str
    window_index: int


@dataclass(frozen=True)
class RejectedWindow:
    """A window the pipeline refused, with the reason."""

    recording_id: str
    window_index: int
    reason: str


def butter_bandpass_sos(sample_rate: float) -> np.ndarray:
    """Second-order sections of the 4th-order Butterworth band-pass."""
    return signal.butter(FILTER_ORDER, [BAND_LOW_HZ, BAND_HIGH_HZ],
                         btype="bandpass", fs=sample_rate, output="sos")


def bandpass(rec: Recording) -> Recording:
    """Zero-phase band-pass; requires the 400 Hz edge to sit below Nyquist."""
    if rec.sample_rate <= 2.0 * BAND_HIGH_HZ:
        raise DataError(
            f"recording {rec.id}: sample rate {rec.sample_rate} Hz too low for the "
            f"{BAND_HIGH_HZ} Hz band edge (need > {2.0 * BAND_HIGH_HZ} Hz)")
    if len(rec.samples) <= PAD_LEN:
        raise DataError(
            f"recording {rec.id}: too short to filter ({len(rec.samples)} samples, "
            f"need > {PAD_LEN})")
    sos = butter_bandpass_sos(rec.sample_rate)
    filtered = signal.sosfiltfilt(sos, rec.samples, padtype="odd", padlen=PAD_LEN)
    return Recording(samples=filtered, sample_rate=rec.sample_rate,
                     id=rec.id, label=rec.label)


def segment_windows(rec: Recording, seconds: float = WINDOW_SECONDS) -> "list[np.ndarray]":
    """Consecutive non-overlapping fixed-duration windows; remainder dropped."""
    width = int(round(seconds * rec.sample_rate))
    count = len(rec.samples) // width
    return [rec.samples[i * width: (i + 1) * width] for i in range(count)]


def finalize_segment(window: np.ndarray, source_rate: float, label: str,
                     recording_id: str, window_index: int) -> "Segment | RejectedWindow":
    """Resample to 2000 points, center, normalize; reject degenerate windows."""
    window = np.asarray(window, dtype=np.float64)
    if not np.all(np.isfinite(window)):
        return RejectedWindow(recording_id, window_index, "non-finite values")
    if not np.any(window):
        return RejectedWindow(recording_id, window_index, "identically zero")
    grid = np.linspace(0.0, len(window) - 1.0, SEGMENT_LENGTH)
    values = np.interp(grid, np.arange(len(window)), window)
    values = values - values.mean()
    peak = np.max(np.abs(values))
    if peak == 0.0:
        return RejectedWindow(recording_id, window_index, "zero after centering")
    values = values / peak
    return Segment(values=values, label=label,
                   recording_id=recording_id, window_index=window_index)


def preprocess_recording(rec: Recording) -> "tuple[list[Segment], list[RejectedWindow]]":
    """Full per-recording chain: filter, window, finalize."""
    filtered = bandpass(rec)
    segments: "list[Segment]" = []
    rejected: "list[RejectedWindow]" = []
    for i, window in enumerate(segment_windows(filtered)):
        result = finalize_segment(window, filtered.sample_rate, rec.label, rec.id, i)
        if isinstance(result, Segment):
            segments.append(result)
        else:
            rejected.append(result)
    return segments, rejected


def inject_noise_snr(seg: Segment, snr_db: float, rng: Rng) -> Segment:
    """Add white Gaussian noise at the given SNR, then re-normalize.

    The noise power is P_signal / 10^(snr_db/10), measured against the
    segment before renormalization.  An infinite SNR is the no-noise
    sentinel and returns the segment unchanged.
    """
    if np.isinf(snr_db):
        return seg
    p_signal = float(np.mean(seg.values ** 2))
    p_noise = p_signal / (10.0 ** (snr_db / 10.0))
    noisy = seg.values + rng.normal(len(seg.values)) * np.sqrt(p_noise)
    noisy = noisy - noisy.mean()
    peak = np.max(np.abs(noisy))
    if peak == 0.0:
        raise DataError("noise injection produced an identically zero segment")
    return Segment(values=noisy / peak, label=seg.label,
                   recording_id=seg.recording_id, window_index=seg.window_index)
