"""Command-line entry point.

Subcommands::

    preprocess     manifest of WAV files -> segment cache + rejection report
    train          segment cache -> per-fold checkpoints, logs, metrics CSV
    eval           checkpoint -> validation/test metrics CSV
    robustness     checkpoint -> metrics vs additive-noise SNR sweep CSV
    calibrate      checkpoint -> reliability bins + expected calibration error
    noise-stats    structured-noise sampler diagnostics CSV
    export-latent  checkpoint -> 3-D bottleneck coordinates per segment

Every command resolves its configuration as defaults <- ``--config`` file
<- explicit flags, validates it before doing any work, echoes the resolved
form to ``<outdir>/config.txt``, and on failure removes the artifacts it
created and prints a one-line machine-parsable reason.  Exit codes:
0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt_io
from . import dataio, network, preprocess, qire, training
from .config import RunConfig, _convert, config_text, resolve_config
from .errors import (ConfigError, DataError, GraphError, NumericalError,
                     QivcError, ShapeError)
from .folds import segment_labels, stratified_kfold
from .metrics import MetricsReport, expected_calibration_error, reliability_bins
from .rng import Rng

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


class ArtifactRegistry:
    """Tracks files created by a command so failures leave no partial output."""

    def __init__(self) -> None:
        self.files: "list[Path]" = []
        self.dirs: "list[Path]" = []

    def file(self, path: "str | Path") -> Path:
        path = Path(path)
        self.files.append(path)
        return path

    def dir(self, path: "str | Path") -> Path:
        path = Path(path)
        self.dirs.append(path)
        return path

    def cleanup(self) -> None:
        for path in self.files:
            try:
                path.unlink(missing_ok=True)
            except OSError:
                pass
        for path in reversed(self.dirs):
            try:
                path.rmdir()
            except OSError:
                pass  # not empty or never created


def _echo_config(cfg: RunConfig, reg: ArtifactRegistry) -> Path:
    outdir = Path(cfg.outdir)
    if not outdir.exists():
        reg.dir(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
    path = reg.file(outdir / "config.txt")
    path.write_text(config_text(cfg))
    return outdir


def _load_cache(cfg: RunConfig):
    segments = dataio.load_segment_cache(cfg.cache)
    return segments, segment_labels(segments)


def _load_net(cfg: RunConfig, segments):
    if not cfg.checkpoint:
        raise ConfigError("this command needs --checkpoint")
    arrays, meta = ckpt_io.load_checkpoint(cfg.checkpoint)
    if meta.get("n_segments") != len(segments):
        raise DataError(
            f"checkpoint was trained on {meta.get('n_segments')} segments but the "
            f"cache holds {len(segments)}")
    net = network.QivcNet(network.config_from_dict(meta["network"]))
    net.load_state(arrays)
    return net, meta


def cmd_preprocess(cfg: RunConfig, reg: ArtifactRegistry, outdir: Path) -> None:
    if not cfg.manifest:
        raise ConfigError("preprocess needs --manifest")
    recordings = dataio.load_recordings(cfg.manifest)
    segments = []
    rejected = []
    for rec in recordings:
        segs, rej = preprocess.preprocess_recording(rec)
        segments.extend(segs)
        rejected.extend(rej)
    if not segments:
        raise DataError("no segments survived preprocessing")
    dataio.save_segment_cache(reg.file(cfg.cache), segments)
    dataio.write_csv(reg.file(outdir / "rejections.csv"),
                     ("recording_id", "window_index", "reason"),
                     [(r.recording_id, r.window_index, r.reason) for r in rejected])
    print(f"cached {len(segments)} segments from {len(recordings)} recordings "
          f"({len(rejected)} windows rejected) -> {cfg.cache}")


def cmd_train(cfg: RunConfig, reg: ArtifactRegistry, outdir: Path) -> None:
    segments, _ = _load_cache(cfg)
    split = stratified_kfold(segments, k=cfg.folds, seed=cfg.seed,
                             group_by_recording=cfg.group_by_recording)
    fold_index = None if cfg.fold_index < 0 else cfg.fold_index
    wanted = range(split.k) if fold_index is None else [fold_index]
    for i in wanted:
        fold_dir = reg.dir(outdir / f"fold{i}")
        reg.file(fold_dir / "checkpoint.bin")
        reg.file(fold_dir / "train_log.csv")
    results = training.train(segments, split, cfg.network_config(), cfg.train_hyper(),
                             cfg.seed, outdir, fold_index=fold_index, jobs=cfg.jobs)
    dataio.write_csv(reg.file(outdir / "metrics.csv"), training.METRICS_CSV_HEADER,
                     training.metrics_rows(results))
    for r in results:
        print(f"fold {r.fold}: epochs={r.state.epoch} best_val_f1={r.state.best_val_f1!r} "
              f"test_acc={r.report.accuracy!r} test_f1={r.report.f1!r}")


def cmd_eval(cfg: RunConfig, reg: ArtifactRegistry, outdir: Path) -> None:
    segments, labels = _load_cache(cfg)
    net, meta = _load_net(cfg, segments)
    rows = []
    for split_name in ("val", "test"):
        idx = np.array(meta[f"{split_name}_indices"], dtype=np.int64)
        report = training.evaluate_segments(net, [segments[i] for i in idx], labels[idx])
        rows.append((split_name,) + report.csv_row())
        print(f"{split_name}: acc={report.accuracy!r} f1={report.f1!r} auc={report.auc!r}")
    dataio.write_csv(reg.file(outdir / "eval_metrics.csv"),
                     ("split",) + MetricsReport.CSV_HEADER, rows)


def cmd_robustness(cfg: RunConfig, reg: ArtifactRegistry, outdir: Path) -> None:
    segments, labels = _load_cache(cfg)
    net, meta = _load_net(cfg, segments)
    test_idx = np.array(meta["test_indices"], dtype=np.int64)
    master = Rng(cfg.seed)
    rows = []
    for snr in cfg.snr_values():
        rng = master.fork()
        noisy = [preprocess.inject_noise_snr(segments[i], snr, rng) for i in test_idx]
        report = training.evaluate_segments(net, noisy, labels[test_idx])
        rows.append((float(snr),) + report.csv_row())
        print(f"snr={snr!r}dB acc={report.accuracy!r} auc={report.auc!r}")
    dataio.write_csv(reg.file(outdir / "robustness.csv"),
                     ("snr_db",) + MetricsReport.CSV_HEADER, rows)


def cmd_calibrate(cfg: RunConfig, reg: ArtifactRegistry, outdir: Path) -> None:
    segments, labels = _load_cache(cfg)
    net, meta = _load_net(cfg, segments)
    test_idx = np.array(meta["test_indices"], dtype=np.int64)
    probs = network.infer_probs(net, [segments[i] for i in test_idx])
    preds = probs.argmax(axis=1)
    bins = reliability_bins(labels[test_idx], preds, probs[:, 1])
    ece = expected_calibration_error(bins)
    rows = [(float(bins.edges[i]), float(bins.edges[i + 1]), int(bins.counts[i]),
             float(bins.mean_confidence[i]), float(bins.accuracy[i]))
            for i in range(len(bins.counts))]
    dataio.write_csv(reg.file(outdir / "reliability.csv"),
                     ("bin_low", "bin_high", "count", "mean_confidence", "accuracy"), rows)
    dataio.write_csv(reg.file(outdir / "ece.csv"), ("count", "ece"),
                     [(int(bins.counts.sum()), float(ece))])
    print(f"ece={ece!r} over {int(bins.counts.sum())} test segments")


def cmd_noise_stats(cfg: RunConfig, reg: ArtifactRegistry, outdir: Path) -> None:
    stats = qire.noise_statistics(cfg.qire_config(), cfg.kernel_shape_tuple(),
                                  cfg.trials, Rng(cfg.seed))
    dataio.write_csv(reg.file(outdir / "noise_stats.csv"),
                     qire.NoiseStats.CSV_HEADER, [stats.csv_row()])
    print(f"k={stats.k} p={stats.p!r} n={stats.n}: mean_norm={stats.mean_norm!r} "
          f"subspace_energy={stats.subspace_energy!r}")


def cmd_export_latent(cfg: RunConfig, reg: ArtifactRegistry, outdir: Path) -> None:
    segments, _ = _load_cache(cfg)
    net, _ = _load_net(cfg, segments)
    rows = network.export_latent(net, segments)
    dataio.write_csv(reg.file(outdir / "latent.csv"),
                     ("segment_id", "label", "z1", "z2", "z3"), rows)
    print(f"exported {len(rows)} bottleneck rows")


COMMANDS = {
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "eval": cmd_eval,
    "robustness": cmd_robustness,
    "calibrate": cmd_calibrate,
    "noise-stats": cmd_noise_stats,
    "export-latent": cmd_export_latent,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qivcnet",
        description="Variational convolution networks for heart-sound classification")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="key=value config file")
        for f in fields(RunConfig):
            flag = "--" + f.name.replace("_", "-")
            kind = {"str": str, "int": int, "float": float, "bool": bool}[str(f.type)]
            if kind is bool:
                p.add_argument(flag, default=None, metavar="BOOL",
                               type=lambda raw, n=f.name: _convert(n, bool, raw))
            else:
                p.add_argument(flag, default=None, type=kind)
    return parser


def _fail(code: int, kind: str, exc: Exception, reg: "ArtifactRegistry | None") -> int:
    if reg is not None:
        reg.cleanup()
    reason = " ".join(str(exc).split())
    print(f"error code={code} kind={kind}: {reason}", file=sys.stderr)
    return code


def main(argv: "list[str] | None" = None) -> int:
    args = _build_parser().parse_args(argv)
    overrides = {f.name: getattr(args, f.name) for f in fields(RunConfig)}
    reg = ArtifactRegistry()
    try:
        cfg = resolve_config(args.config, overrides)
        outdir = _echo_config(cfg, reg)
        COMMANDS[args.command](cfg, reg, outdir)
        return EXIT_OK
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", exc, reg)
    except ShapeError as exc:
        return _fail(EXIT_CONFIG, "config", exc, reg)
    except DataError as exc:
        return _fail(EXIT_DATA, "data", exc, reg)
    except (NumericalError, GraphError) as exc:
        return _fail(EXIT_NUMERICAL, "numerical", exc, reg)
    except QivcError as exc:  # pragma: no cover - safety net
        return _fail(EXIT_NUMERICAL, "numerical", exc, reg)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
