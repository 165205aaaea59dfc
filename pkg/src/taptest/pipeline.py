"""Stage orchestration shared by the CLI and the tests."""

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .cluster import (DecisionTree, KMeansModel, kmeans_assign, kmeans_fit, map_clusters_to_classes,
                      tree_fit, tree_predict)
from .config import PipelineConfig
from .dsp import AudioSignal
from .gate import AmplitudeThresholds, BandSelection, GateReport, band_filter, run_gate
from .metrics import METRIC_NAMES, ConfusionMatrix, MetricsReport, compute_metrics, confusion
from .pca import PcaModel, pca_fit, pca_transform
from .segment import UNKNOWN, SegmentMatrix, SplitSpec, detect_peaks, extract_segments, filter_peaks, split
from .synth import Session, synth_session
from .wavio import from_pcm16, to_pcm16

STREAM_SESSION, STREAM_SPLIT, STREAM_KMEANS = 1, 2, 3


class EmptySegmentsError(ValueError):
    pass


def derive_seed(seed: int, *keys: int) -> int:
    """Independent 63-bit seed for a named random stream."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def level_key(level_deg: float) -> int:
    return int(round(level_deg * 1000))


def make_session(cfg: PipelineConfig, level_deg: float, quantize: bool = True) -> Session:
    spec = cfg.synth.session_spec(level_deg, derive_seed(cfg.seed, STREAM_SESSION, level_key(level_deg)))
    s = synth_session(spec, *cfg.synth.templates())
    if quantize:
        # what a WAV round trip would hand back
        s.signal = AudioSignal(from_pcm16(to_pcm16(s.signal.samples)), s.signal.sample_rate)
    return s


def nearest_labels(indices, truth_index, truth_class):
    """Class of the closest ground-truth tap for each peak index."""
    truth_index = np.asarray(truth_index)
    order = np.argsort(truth_index)
    ti, tc = truth_index[order], np.asarray(truth_class, dtype=object)[order]
    idx = np.asarray(indices)
    pos = np.clip(np.searchsorted(ti, idx), 1, len(ti) - 1) if len(ti) > 1 else np.zeros(len(idx), int)
    if len(ti) > 1:
        left_closer = np.abs(idx - ti[pos - 1]) <= np.abs(ti[pos] - idx)
        pos = np.where(left_closer, pos - 1, pos)
    return tc[pos]


def session_name(level_deg: float) -> str:
    return f"session_{level_deg:g}deg"


def segment_signal(sig: AudioSignal, truth_index, truth_class, cfg: PipelineConfig,
                   report: GateReport | None = None, source: str = "",
                   bounds: AmplitudeThresholds | None = None) -> SegmentMatrix:
    """Detect, filter and cut taps. With a gate report the band-limited signal and its
    thresholds are used; without one, a fixed high-pass and the naive bounds (or the
    explicit `bounds`)."""
    sc = cfg.segment
    if report is not None:
        y = band_filter(sig, report.band)
        th = report.thresholds
    else:
        y = band_filter(sig, BandSelection(sc.naive_highpass_hz, sig.sample_rate / 2))
        th = bounds or AmplitudeThresholds(sc.naive_lambda_min, sc.naive_lambda_max)
    delta = max(1, int(round(sc.delta_s * sig.sample_rate)))
    peaks = filter_peaks(detect_peaks(y, delta), th)
    if truth_index is None or len(truth_index) == 0:
        labels = np.full(len(peaks), UNKNOWN, dtype=object)
    else:
        labels = nearest_labels(peaks.indices, truth_index, truth_class)
    parts = []
    for c in sorted(set(labels.tolist())):
        sel = labels == c
        sub = type(peaks)(peaks.indices[sel], peaks.amplitudes[sel])
        parts.append(extract_segments(y, sub, sc.L, sc.pre_fraction, c, source))
    if not parts:
        return SegmentMatrix.empty(sc.L)
    seg = SegmentMatrix.concat(parts)
    order = np.argsort([int(s.rsplit(":", 1)[1]) for s in seg.source_ids], kind="stable")
    out = seg.take(order)
    out.dropped = seg.dropped
    # float32 is the on-disk precision; rounding here keeps file and memory runs identical
    out.data = out.data.astype(np.float32).astype(float)
    return out


@dataclass
class ModelBundle:
    pca: PcaModel
    kmeans: KMeansModel
    tree: DecisionTree
    cluster_map: dict
    train_ids: list
    test_ids: list
    segments_digest: str = ""

    def to_json(self) -> str:
        return json.dumps({
            "pca": json.loads(self.pca.to_json()),
            "kmeans": self.kmeans.to_dict(),
            "tree": self.tree.to_dict(),
            "cluster_map": {str(k): v for k, v in self.cluster_map.items()},
            "train_ids": list(self.train_ids),
            "test_ids": list(self.test_ids),
            "segments_digest": self.segments_digest,
        })

    @classmethod
    def from_json(cls, text: str) -> "ModelBundle":
        d = json.loads(text)
        return cls(PcaModel.from_dict(d["pca"]), KMeansModel.from_dict(d["kmeans"]),
                   DecisionTree.from_dict(d["tree"]), {int(k): v for k, v in d["cluster_map"].items()},
                   d["train_ids"], d["test_ids"], d.get("segments_digest", ""))


def matrix_digest(m: SegmentMatrix) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(m.data, dtype="<f4").tobytes())
    h.update("\n".join(map(str, m.labels)).encode())
    h.update("\n".join(map(str, m.source_ids)).encode())
    return h.hexdigest()


def train(segments: SegmentMatrix, cfg: PipelineConfig):
    """Split, then fit PCA, k-means and the tree on the training rows. Returns (bundle, test)."""
    tc = cfg.train
    if UNKNOWN in set(segments.labels):
        raise ValueError("segments carry no ground-truth labels; cut them with a truth CSV")
    tr, te = split(segments, SplitSpec(tc.train_fraction, True, derive_seed(cfg.seed, STREAM_SPLIT)))
    missing = set(segments.labels) - set(tr.labels)
    if missing or len(set(tr.labels)) < 2:
        raise ValueError(f"training split lacks class(es): {sorted(missing) or 'need two classes'}")
    pca = pca_fit(tr, tc.variance_target)
    T = pca_transform(tr, pca)
    km = kmeans_fit(T, tc.k_clusters, derive_seed(cfg.seed, STREAM_KMEANS), tc.kmeans_tol,
                    tc.kmeans_max_iter, tc.kmeans_restarts)
    cmap = map_clusters_to_classes(kmeans_assign(T, km).tolist(), tr.labels.tolist())
    tree = tree_fit(T, tr.labels, tc.tree_max_depth, tc.tree_min_leaf)
    bundle = ModelBundle(pca, km, tree, cmap, tr.source_ids.tolist(), te.source_ids.tolist(),
                         matrix_digest(segments))
    return bundle, te


@dataclass
class Evaluation:
    cm: ConfusionMatrix
    metrics: MetricsReport
    predicted: np.ndarray
    scores: np.ndarray
    kmeans_agreement: float
    labels: np.ndarray = field(default_factory=lambda: np.zeros(0))


def evaluate(bundle: ModelBundle, test: SegmentMatrix, positive_class: str) -> Evaluation:
    if test.m == 0:
        raise EmptySegmentsError("no test rows to score")
    T = pca_transform(test, bundle.pca)
    pred = tree_predict(bundle.tree, T)
    cm = confusion(test.labels.tolist(), pred.tolist(), positive_class)
    km_pred = [bundle.cluster_map.get(int(c)) for c in kmeans_assign(T, bundle.kmeans)]
    agree = float(np.mean([a == b for a, b in zip(km_pred, pred)]))
    return Evaluation(cm, compute_metrics(cm), pred, T, agree, test.labels)


@dataclass
class CellResult:
    level_deg: float
    gating: str  # "energy" or "none"
    status: str = "ok"
    error: str = ""
    n_segments: int = 0
    n_train: int = 0
    n_test: int = 0
    k: int = 0
    cumulative_2: float = float("nan")
    cm: ConfusionMatrix | None = None
    metrics: MetricsReport | None = None
    kmeans_agreement: float = float("nan")
    report: GateReport | None = None
    evaluation: Evaluation | None = None
    bundle: ModelBundle | None = None
    test: SegmentMatrix | None = None

    def row(self) -> dict:
        r = {"vibration_level_deg": self.level_deg, "gating_mode": self.gating, "status": self.status,
             "n_segments": self.n_segments, "n_train": self.n_train, "n_test": self.n_test, "k": self.k}
        for name in ("tp", "fp", "fn", "tn"):
            r[name] = getattr(self.cm, name) if self.cm else None
        for name in METRIC_NAMES:
            r[name] = getattr(self.metrics, name) if self.metrics else None
        r["kmeans_agreement"] = self.kmeans_agreement
        r["error"] = self.error
        return r


def run_cell(cfg: PipelineConfig, level_deg: float, gated: bool, session: Session | None = None) -> CellResult:
    res = CellResult(level_deg, "energy" if gated else "none")
    try:
        s = session or make_session(cfg, level_deg)
        report = run_gate(s.signal, cfg.gate).report if gated else None
        res.report = report
        seg = segment_signal(s.signal, s.truth_index, s.truth_class, cfg, report, session_name(level_deg))
        res.n_segments = seg.m
        if seg.m == 0:
            raise EmptySegmentsError("no segments passed the gate")
        bundle, test = train(seg, cfg)
        ev = evaluate(bundle, test, cfg.train.positive_class)
        res.n_train, res.n_test = len(bundle.train_ids), test.m
        res.k = bundle.pca.k
        res.cumulative_2 = float(np.sum(bundle.pca.explained_ratio[:2]))
        res.cm, res.metrics, res.kmeans_agreement = ev.cm, ev.metrics, ev.kmeans_agreement
        res.evaluation, res.bundle, res.test = ev, bundle, test
    except Exception as e:  # a failed cell must not sink the sweep
        res.status = "failed"
        res.error = f"{type(e).__name__}: {e}"
    return res


def run_sweep(cfg: PipelineConfig, levels=None):
    """Every level under both gating modes. The no-vibration level is the shared
    base case: it is computed once (gated) and reported under both modes."""
    levels = cfg.synth.levels_deg if levels is None else levels
    cells = []
    for lv in levels:
        s = make_session(cfg, lv)
        gated = run_cell(cfg, lv, True, s)
        if lv == 0:
            base = CellResult(**{**gated.__dict__, "gating": "none"})
            cells += [base, gated]
        else:
            cells += [run_cell(cfg, lv, False, s), gated]
    return cells


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def manifest(cfg: PipelineConfig, stage: str, inputs=(), outputs=(), extra=None) -> dict:
    import datetime
    return {
        "toolkit_version": __version__,
        "stage": stage,
        "config_sha256": cfg.digest(),
        "seed": cfg.seed,
        "inputs": {str(p): file_digest(p) for p in inputs},
        "outputs": {str(p): file_digest(p) for p in outputs},
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        **(extra or {}),
    }
