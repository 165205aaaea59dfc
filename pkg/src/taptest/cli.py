"""Command-line front end: synth, gate, segment, train, evaluate, sweep.

Every verb writes its artifacts plus a JSON manifest into --out-dir.
Exit codes: 0 ok, 2 usage or config error, 3 data error, 4 I/O error.
"""

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, PipelineConfig
from .gate import AmplitudeThresholds, BandSelectionError, GateReport, run_gate
from .metrics import METRIC_NAMES, fmt
from .pca import DegeneratePcaError, cumulative_energy
from .pipeline import (EmptySegmentsError, ModelBundle, evaluate, make_session, manifest,
                       matrix_digest, run_sweep, segment_signal, session_name, train)
from .segment import read_segments, write_segments
from .wavio import WavFormatError, read_truth, read_wav, write_truth, write_wav

log = logging.getLogger("taptest")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_IO = 0, 2, 3, 4


class DataError(Exception):
    """Input data that cannot be processed (maps to exit code 3)."""


def _load_config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _out(args) -> Path:
    d = Path(args.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_manifest(out: Path, cfg, stage, inputs, outputs, extra=None):
    _write_json(out / f"manifest_{stage}.json", manifest(cfg, stage, inputs, outputs, extra))


def _write_rows(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def cmd_synth(args, cfg):
    out = _out(args)
    levels = args.levels if args.levels is not None else cfg.synth.levels_deg
    written = []
    for lv in levels:
        s = make_session(cfg, lv)
        wav, truth = out / f"{session_name(lv)}.wav", out / f"{session_name(lv)}_truth.csv"
        write_wav(wav, s.signal)
        write_truth(truth, s.truth_index, s.truth_class)
        written += [wav, truth]
        log.info("%s: %d taps, %d rattle bursts", wav.name, len(s.truth_index), len(s.artifact_index))
    _write_manifest(out, cfg, "synth", [], written, {"levels_deg": list(levels)})
    return EXIT_OK


def cmd_gate(args, cfg):
    out = _out(args)
    sig = read_wav(args.wav)
    try:
        res = run_gate(sig, cfg.gate, full_band=args.full_band)
    except BandSelectionError as e:
        raise DataError(f"{e}; rerun with --full-band to gate over [0, Nyquist]") from e
    stem = Path(args.wav).stem
    report_path = out / f"{stem}_gate.json"
    report_path.write_text(res.report.to_json() + "\n")
    spl_path, psd_path = out / f"{stem}_spl.csv", out / f"{stem}_psd.csv"
    t = res.spl.window_starts / sig.sample_rate
    _write_rows(spl_path, ["time_s", "spl_db"], zip(t.tolist(), res.spl.spl.tolist()))
    _write_rows(psd_path, ["freq_hz", "psd"], zip(res.spectrum.freqs.tolist(), res.spectrum.psd.tolist()))
    r = res.report
    print(f"band {r.f_min_hz:.1f}-{r.f_max_hz:.1f} Hz  lambda [{r.lambda_min:.4g}, {r.lambda_max:.4g}]  "
          f"baseline {r.baseline_mean_db:.2f} dB +/- {r.baseline_std_db:.2f}")
    _write_manifest(out, cfg, "gate", [args.wav], [report_path, spl_path, psd_path],
                    {"nyquist_fallback": res.band.nyquist_fallback})
    return EXIT_OK


def cmd_segment(args, cfg):
    out = _out(args)
    sig = read_wav(args.wav)
    truth_index, truth_class = read_truth(args.truth) if args.truth else (None, None)
    report, bounds = None, None
    inputs = [args.wav] + ([args.truth] if args.truth else [])
    if args.bounds:
        bounds = AmplitudeThresholds(*args.bounds)
    elif args.report:
        report = GateReport.from_json(Path(args.report).read_text())
        inputs.append(args.report)
    elif not args.no_gate:
        try:
            report = run_gate(sig, cfg.gate).report
        except BandSelectionError as e:
            raise DataError(f"{e}; run the gate verb with --full-band and pass --report") from e
    stem = Path(args.wav).stem
    seg = segment_signal(sig, truth_index, truth_class, cfg, report, stem, bounds)
    path = out / f"{stem}_segments.{args.format}"
    write_segments(path, seg)
    mode = "explicit bounds" if bounds else ("gate" if report else "no-gate")
    _write_manifest(out, cfg, "segment", inputs, [path],
                    {"mode": mode, "n_segments": seg.m, "dropped_at_edges": seg.dropped})
    if seg.m == 0:
        print(f"empty: 0 segments passed ({mode}); wrote {path}")
        return EXIT_DATA
    print(f"{seg.m} segments ({mode}, {seg.dropped} dropped at the edges) -> {path}")
    return EXIT_OK


def cmd_train(args, cfg):
    out = _out(args)
    seg = read_segments(args.segments)
    if seg.m == 0:
        raise EmptySegmentsError("segment file is empty")
    bundle, test = train(seg, cfg)
    path = out / "model.json"
    path.write_text(bundle.to_json() + "\n")
    print(f"trained on {len(bundle.train_ids)} rows, k={bundle.pca.k}, "
          f"{test.m} rows held out; tree depth {bundle.tree.depth()}")
    _write_manifest(out, cfg, "train", [args.segments], [path],
                    {"split": {"train": bundle.train_ids, "test": bundle.test_ids}})
    return EXIT_OK


def _test_rows(seg, bundle: ModelBundle):
    """Held-out rows when the file is the one the model was trained from, else every row."""
    if bundle.segments_digest and bundle.segments_digest == matrix_digest(seg):
        keep = set(bundle.test_ids)
        return seg.take([i for i, s in enumerate(seg.source_ids) if s in keep])
    return seg


def cmd_evaluate(args, cfg):
    out = _out(args)
    seg = read_segments(args.segments)
    bundle = ModelBundle.from_json(Path(args.model).read_text())
    if seg.n != len(bundle.pca.mean):
        raise DataError(f"segment length {seg.n} does not match the model ({len(bundle.pca.mean)})")
    test = _test_rows(seg, bundle)
    ev = evaluate(bundle, test, cfg.train.positive_class)
    cm = ev.cm
    metrics_path, cm_path, pred_path = out / "metrics.json", out / "confusion.csv", out / "predictions.csv"
    _write_json(metrics_path, {"positive_class": cfg.train.positive_class, "n": cm.total,
                               "counts": {"tp": cm.tp, "fp": cm.fp, "fn": cm.fn, "tn": cm.tn},
                               "metrics": ev.metrics.as_dict(),
                               "kmeans_agreement": ev.kmeans_agreement})
    _write_rows(cm_path, ["actual", "predicted_positive", "predicted_negative"],
                [["positive", cm.tp, cm.fn], ["negative", cm.fp, cm.tn]])
    _write_rows(pred_path, ["source_id", "label", "predicted"],
                zip(test.source_ids, test.labels, ev.predicted))
    print(f"tp={cm.tp} fp={cm.fp} fn={cm.fn} tn={cm.tn}  " +
          "  ".join(f"{k}={v}" for k, v in ev.metrics.formatted().items()))
    _write_manifest(out, cfg, "evaluate", [args.segments, args.model], [metrics_path, cm_path, pred_path])
    return EXIT_OK


SWEEP_COLUMNS = ["vibration_level_deg", "gating_mode", "status", "n_segments", "n_train", "n_test", "k",
                 "tp", "fp", "fn", "tn", *METRIC_NAMES, "kmeans_agreement", "error"]


def cmd_sweep(args, cfg):
    out = _out(args)
    levels = args.levels if args.levels is not None else cfg.synth.levels_deg
    cells = run_sweep(cfg, levels)
    rows = [c.row() for c in cells]
    csv_path, json_path = out / "sweep.csv", out / "sweep.json"
    _write_rows(csv_path, SWEEP_COLUMNS, [[("" if r[c] is None else r[c]) for c in SWEEP_COLUMNS] for r in rows])
    _write_json(json_path, {"rows": rows})
    outputs = [csv_path, json_path]
    for c in cells:
        if c.status != "ok":
            continue
        tag = f"{session_name(c.level_deg)}_{c.gating}"
        sc = out / f"scores_{tag}.csv"
        T = c.evaluation.scores
        _write_rows(sc, [f"pc{i + 1}" for i in range(T.shape[1])] + ["label", "predicted"],
                    [list(map(float, t)) + [lab, p] for t, lab, p in zip(T, c.test.labels, c.evaluation.predicted)])
        ce = out / f"cumulative_energy_{tag}.csv"
        _write_rows(ce, ["components", "cumulative_energy"],
                    [[j, cumulative_energy(c.bundle.pca, j)] for j in range(1, c.bundle.pca.r_full + 1)])
        outputs += [sc, ce]
    for r in rows:
        acc = fmt(r["accuracy"]) if r["status"] == "ok" else "FAILED " + r["error"]
        print(f"{r['vibration_level_deg']:>4g} deg  {r['gating_mode']:<6}  accuracy {acc}")
    _write_manifest(out, cfg, "sweep", [], outputs, {"levels_deg": list(levels)})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--config", help="TOML config file (defaults are used for missing keys)")
    g.add_argument("--seed", type=int, help="override the config seed")
    g.add_argument("--out-dir", default=".", help="directory for outputs (default: .)")
    g.add_argument("--no-gate", action="store_true",
                   help="segment with the fixed naive bounds instead of the energy gate")
    g.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="taptest", description="Tap-testing signal pipeline.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="write synthetic sessions (WAV + truth CSV)")
    s.add_argument("--levels", type=float, nargs="+", help="vibration levels in degrees")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("gate", parents=[common], help="derive the band and amplitude bounds for a WAV")
    s.add_argument("wav")
    s.add_argument("--full-band", action="store_true", help="fall back to [0, Nyquist] if band selection fails")
    s.set_defaults(func=cmd_gate)

    s = sub.add_parser("segment", parents=[common], help="detect and cut taps into a segment file")
    s.add_argument("wav")
    s.add_argument("--truth", help="ground-truth CSV used to label segments")
    src = s.add_mutually_exclusive_group()
    src.add_argument("--report", help="gate report JSON from the gate verb")
    src.add_argument("--bounds", type=float, nargs=2, metavar=("MIN", "MAX"), help="explicit amplitude bounds")
    s.add_argument("--format", choices=("tapx", "csv"), default="tapx")
    s.set_defaults(func=cmd_segment)

    s = sub.add_parser("train", parents=[common], help="split, fit PCA, k-means and the tree")
    s.add_argument("segments")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", parents=[common], help="score a model on held-out segments")
    s.add_argument("segments")
    s.add_argument("model")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("sweep", parents=[common], help="all levels under both gating modes")
    s.add_argument("--levels", type=float, nargs="+")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load_config(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    try:
        return args.func(args, cfg)
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except (DataError, BandSelectionError, EmptySegmentsError, WavFormatError, DegeneratePcaError,
            ValueError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
