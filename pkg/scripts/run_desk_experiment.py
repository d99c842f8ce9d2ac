#!/usr/bin/env python3
"""Run the desk-scale experiment end to end in one working directory.

Generates a synthetic corpus, preprocesses it, trains one cross-validation
fold of the default architecture, then produces every report the package
knows how to make: held-out metrics, an SNR robustness sweep, a calibration
table, sampler diagnostics, and the 3-D latent export.

With the defaults (500 segments, 50 epochs max, early stopping) the whole
run takes a few minutes on one CPU core.  Pass --all-folds for the full
5-fold protocol at roughly five times the cost.
"""

import argparse
import sys
import time
from pathlib import Path

from qivcnet.cli import main as qivcnet
from qivcnet.rng import Rng
from qivcnet.synthetic import write_wav_dataset


def run(argv: "list[str]") -> None:
    argv = [str(a) for a in argv]
    print(f"$ qivcnet {' '.join(argv)}", flush=True)
    rc = qivcnet(argv)
    if rc != 0:
        sys.exit(rc)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("workdir", type=Path, help="directory for all artifacts")
    ap.add_argument("--recordings", type=int, default=250,
                    help="8 s recordings to synthesize (2 segments each)")
    ap.add_argument("--epochs", type=int, default=50)
    ap.add_argument("--patience", type=int, default=6)
    ap.add_argument("--batch", type=int, default=64)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--folds", type=int, default=5)
    ap.add_argument("--all-folds", action="store_true",
                    help="train every fold instead of just fold 0")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    w = args.workdir
    t0 = time.time()
    manifest = write_wav_dataset(w / "data", args.recordings, Rng(args.seed))
    print(f"synthesized {args.recordings} recordings -> {manifest}")

    cache = w / "segments.qivc"
    run(["preprocess", "--manifest", manifest, "--cache", cache,
         "--outdir", w / "prep"])

    train = ["train", "--cache", cache, "--outdir", w / "run",
             "--epochs", args.epochs, "--patience", args.patience,
             "--batch", args.batch, "--lr", args.lr,
             "--folds", args.folds, "--seed", args.seed]
    if not args.all_folds:
        train += ["--fold-index", "0"]
    run(train)

    checkpoint = w / "run" / "fold0" / "checkpoint.bin"
    base = ["--cache", cache, "--checkpoint", checkpoint, "--seed", args.seed]
    run(["eval", *base, "--outdir", w / "eval"])
    run(["robustness", *base, "--snr-list", "25,20,15,10,5",
         "--outdir", w / "robustness"])
    run(["calibrate", *base, "--outdir", w / "calibrate"])
    run(["noise-stats", "--seed", args.seed, "--outdir", w / "noise_stats"])
    run(["export-latent", *base, "--outdir", w / "latent"])

    print(f"done in {time.time() - t0:.0f}s; artifacts under {w}")


if __name__ == "__main__":
    main()
