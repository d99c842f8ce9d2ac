#!/usr/bin/env python3
"""Generate a synthetic demo corpus: WAV heart-sound recordings + manifest.

Half the recordings are plain S1/S2 pulse trains ("normal"), half carry an
extra murmur-band burst ("abnormal").  The manifest it prints is ready for
`qivcnet preprocess --manifest ...`.
"""

import argparse
from pathlib import Path

from qivcnet.rng import Rng
from qivcnet.synthetic import write_wav_dataset


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("outdir", type=Path, help="directory for wavs/ and manifest.csv")
    ap.add_argument("--recordings", type=int, default=50)
    ap.add_argument("--seconds", type=float, default=8.0,
                    help="length per recording (8 s -> two 4 s segments)")
    ap.add_argument("--sample-rate", type=float, default=4000.0)
    ap.add_argument("--snr-db", type=float, default=25.0,
                    help="additive-noise level baked into the recordings")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    manifest = write_wav_dataset(args.outdir, args.recordings, Rng(args.seed),
                                 sample_rate=args.sample_rate,
                                 seconds=args.seconds, snr_db=args.snr_db)
    print(f"wrote {args.recordings} recordings under {args.outdir / 'wavs'}")
    print(f"manifest: {manifest}")


if __name__ == "__main__":
    main()
