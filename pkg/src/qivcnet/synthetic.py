"""Synthetic two-class heart-sound data for desk-scale experiments.

A recording is a pulse train of Gaussian-enveloped S1/S2 tones (randomized
rate, frequencies, and amplitudes) plus white measurement noise at a target
SNR.  The abnormal class additionally carries a murmur: band-limited
(150-350 Hz) noise under a mid-systolic envelope between S1 and S2.  The
classes are therefore separated by energy in the murmur band rather than
by any single deterministic template.

Synthesis runs at 2000 Hz so the murmur band sits below Nyquist; the
standard preprocessing chain (band-pass, windowing, resampling to 2000
samples per 4 s) is applied to produce ready segments.  ``write_wav_dataset``
instead renders raw recordings to PCM16 WAV files plus a manifest so the
full ingest path can be exercised.
"""

from __future__ import annotations

import wave
from pathlib import Path

import numpy as np

from .errors import DataError
from .preprocess import Recording, Segment, preprocess_recording
from .rng import Rng

SYNTH_RATE = 2000.0


def _bandlimited_noise(n: int, fs: float, low: float, high: float, rng: Rng) -> np.ndarray:
    """Unit-RMS white noise restricted to [low, high] Hz via FFT masking."""
    spectrum = np.fft.rfft(rng.normal(n))
    freqs = np.fft.rfftfreq(n, d=1.0 / fs)
    spectrum[(freqs < low) | (freqs > high)] = 0.0
    noise = np.fft.irfft(spectrum, n=n)
    rms = float(np.sqrt(np.mean(noise ** 2)))
    if rms == 0.0:
        raise DataError("degenerate band-limited noise (empty band)")
    return noise / rms


def synth_recording(rec_id: str, label: str, rng: Rng, *,
                    sample_rate: float = SYNTH_RATE, seconds: float = 4.0,
                    snr_db: float = 25.0) -> Recording:
    """One synthetic recording; label 'abnormal' adds the murmur component."""
    n = int(round(sample_rate * seconds))
    t = np.arange(n) / sample_rate
    # scalar draws become python floats: `beat += period` below must not
    # alias a 0-d array drawn here
    bpm = float(rng.uniform(60.0, 110.0))
    period = 60.0 / bpm
    phase = float(rng.uniform(0.0, period))
    f1 = float(rng.uniform(35.0, 55.0))
    f2 = float(rng.uniform(45.0, 65.0))
    a2 = float(rng.uniform(0.6, 0.9))
    systole = float(rng.uniform(0.28, 0.36))
    sig = np.zeros(n)
    beat = phase
    while beat < seconds + period:
        env1 = np.exp(-0.5 * ((t - beat) / 0.025) ** 2)
        sig += env1 * np.sin(2.0 * np.pi * f1 * (t - beat))
        t2 = beat + systole
        env2 = np.exp(-0.5 * ((t - t2) / 0.020) ** 2)
        sig += a2 * env2 * np.sin(2.0 * np.pi * f2 * (t - t2))
        beat += period
    if label == "abnormal":
        gain = float(rng.uniform(0.40, 0.60))
        envm = np.zeros(n)
        beat = phase
        while beat < seconds + period:
            mid = beat + 0.5 * systole
            envm += np.exp(-0.5 * ((t - mid) / (0.18 * systole)) ** 2)
            beat += period
        sig += gain * envm * _bandlimited_noise(n, sample_rate, 150.0, 350.0, rng)
    p_signal = float(np.mean(sig ** 2))
    p_noise = p_signal / (10.0 ** (snr_db / 10.0))
    sig = sig + rng.normal(n) * np.sqrt(p_noise)
    return Recording(samples=sig, sample_rate=sample_rate, id=rec_id, label=label)


def make_dataset(n_segments: int, rng: Rng, *, seconds: float = 4.0,
                 snr_db: float = 25.0) -> "list[Segment]":
    """Balanced list of preprocessed segments (labels alternate per recording)."""
    if n_segments < 2:
        raise DataError(f"need at least 2 segments, got {n_segments}")
    per_recording = max(1, int(seconds // 4.0))
    segments: "list[Segment]" = []
    i = 0
    while len(segments) < n_segments:
        label = "normal" if i % 2 == 0 else "abnormal"
        rec = synth_recording(f"syn{i:04d}", label, rng,
                              seconds=seconds, snr_db=snr_db)
        segs, _ = preprocess_recording(rec)
        if len(segs) != per_recording:
            raise DataError(f"synthetic recording {rec.id} yielded {len(segs)} segments")
        segments.extend(segs)
        i += 1
    return segments[:n_segments]


def write_wav_dataset(outdir: "str | Path", n_recordings: int, rng: Rng, *,
                      sample_rate: float = 4000.0, seconds: float = 8.0,
                      snr_db: float = 25.0) -> Path:
    """Render recordings as PCM16 WAV files plus a manifest; returns its path."""
    outdir = Path(outdir)
    wav_dir = outdir / "wavs"
    wav_dir.mkdir(parents=True, exist_ok=True)
    lines = ["recording_id,relative_path,label"]
    for i in range(n_recordings):
        label = "normal" if i % 2 == 0 else "abnormal"
        rec = synth_recording(f"syn{i:04d}", label, rng, sample_rate=sample_rate,
                              seconds=seconds, snr_db=snr_db)
        scaled = rec.samples * (0.9 * 32767.0 / np.max(np.abs(rec.samples)))
        pcm = scaled.astype("<i2")
        wav_path = wav_dir / f"{rec.id}.wav"
        with wave.open(str(wav_path), "wb") as wav:
            wav.setnchannels(1)
            wav.setsampwidth(2)
            wav.setframerate(int(sample_rate))
            wav.writeframes(pcm.tobytes())
        lines.append(f"{rec.id},wavs/{rec.id}.wav,{label}")
    manifest = outdir / "manifest.csv"
    manifest.write_text("\n".join(lines) + "\n")
    return manifest
