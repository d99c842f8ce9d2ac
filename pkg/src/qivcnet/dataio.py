"""File formats: WAV ingest, label manifests, segment cache, CSV output.

Ingest accepts RIFF/WAVE files containing 16-bit signed little-endian PCM;
stereo files are reduced to channel 0 with a warning.  Labels come from a
manifest CSV with header ``recording_id,relative_path,label`` where paths
are relative to the manifest's directory and labels are ``normal`` or
``abnormal``.

The segment cache is a little-endian binary file:

    header (16 bytes): magic "QIVC", version u16, segment count u32,
                       segment length u32 (always 2000), 2 zero pad bytes
    per segment:       label u8, recording-id length u16, id bytes (utf-8),
                       window index u32, then `length` float32 values

Floats in CSV output are rendered with ``repr``, the shortest round-trip
form, so identical runs produce byte-identical files.
"""

from __future__ import annotations

import csv
import struct
import sys
import wave
from pathlib import Path

import numpy as np

from .errors import DataError
from .preprocess import LABEL_TO_INT, LABELS, Recording, Segment, SEGMENT_LENGTH

CACHE_MAGIC = b"QIVC"
CACHE_VERSION = 1


def read_wav(path: "str | Path") -> "tuple[np.ndarray, float]":
    """Load PCM16 mono samples scaled to [-1, 1); returns (samples, rate)."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing WAV file: {path}")
    try:
        with wave.open(str(path), "rb") as wav:
            channels = wav.getnchannels()
            width = wav.getsampwidth()
            rate = wav.getframerate()
            frames = wav.readframes(wav.getnframes())
    except (wave.Error, EOFError) as exc:
        raise DataError(f"unreadable WAV file {path}: {exc}") from exc
    if width != 2:
        raise DataError(f"{path}: expected 16-bit PCM, got sample width {width}")
    data = np.frombuffer(frames, dtype="<i2")
    if channels > 1:
        print(f"warning: {path} has {channels} channels; using channel 0",
              file=sys.stderr)
        data = data[::channels]
    if data.size == 0:
        raise DataError(f"{path}: empty WAV file")
    return data.astype(np.float64) / 32768.0, float(rate)


def load_manifest(path: "str | Path") -> "list[tuple[str, Path, str]]":
    """Parse a manifest CSV into (recording_id, absolute path, label) rows."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing manifest: {path}")
    rows: "list[tuple[str, Path, str]]" = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"recording_id", "relative_path", "label"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise DataError(
                f"manifest {path} must have columns recording_id,relative_path,label")
        for line, row in enumerate(reader, start=2):
            label = row["label"].strip()
            if label not in LABELS:
                raise DataError(f"{path}:{line}: unknown label {label!r}")
            rows.append((row["recording_id"].strip(),
                         path.parent / row["relative_path"].strip(), label))
    if not rows:
        raise DataError(f"manifest {path} lists no recordings")
    return rows


def load_recordings(manifest_path: "str | Path") -> "list[Recording]":
    recordings = []
    for rec_id, wav_path, label in load_manifest(manifest_path):
        samples, rate = read_wav(wav_path)
        recordings.append(Recording(samples=samples, sample_rate=rate,
                                    id=rec_id, label=label))
    return recordings


def save_segment_cache(path: "str | Path", segments: "list[Segment]") -> None:
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<HII2x", CACHE_VERSION, len(segments), SEGMENT_LENGTH))
        for seg in segments:
            rec_id = seg.recording_id.encode("utf-8")
            fh.write(struct.pack("<BH", LABEL_TO_INT[seg.label], len(rec_id)))
            fh.write(rec_id)
            fh.write(struct.pack("<I", seg.window_index))
            fh.write(seg.values.astype("<f4").tobytes())


def load_segment_cache(path: "str | Path") -> "list[Segment]":
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing segment cache: {path}")
    blob = path.read_bytes()
    if len(blob) < 16 or blob[:4] != CACHE_MAGIC:
        raise DataError(f"{path}: not a segment cache (bad magic)")
    version, count, length = struct.unpack_from("<HII", blob, 4)
    if version != CACHE_VERSION:
        raise DataError(f"{path}: unsupported cache version {version}")
    if length != SEGMENT_LENGTH:
        raise DataError(f"{path}: unexpected segment length {length}")
    segments: "list[Segment]" = []
    offset = 16
    int_to_label = {v: k for k, v in LABEL_TO_INT.items()}
    try:
        for _ in range(count):
            label_int, id_len = struct.unpack_from("<BH", blob, offset)
            offset += 3
            rec_id = blob[offset: offset + id_len].decode("utf-8")
            offset += id_len
            (window_index,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            values = np.frombuffer(blob, dtype="<f4", count=length, offset=offset)
            offset += 4 * length
            if label_int not in int_to_label:
                raise DataError(f"{path}: bad label byte {label_int}")
            segments.append(Segment(values=values.astype(np.float64),
                                    label=int_to_label[label_int],
                                    recording_id=rec_id, window_index=window_index))
    except (struct.error, ValueError) as exc:
        # ValueError: a frombuffer read ran past the end of the blob
        raise DataError(f"{path}: truncated segment cache") from exc
    if offset != len(blob):
        raise DataError(f"{path}: trailing bytes in segment cache")
    return segments


def write_csv(path: "str | Path", header: "tuple[str, ...]",
              rows: "list[tuple]") -> None:
    """Write a headered CSV with deterministic float formatting."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else str(v) for v in row])
