"""Peak detection, amplitude filtering, segment extraction and the stratified split."""

import csv
import struct
from dataclasses import dataclass, field

import numpy as np

HEALTHY = "healthy"
UNHEALTHY = "unhealthy"
UNKNOWN = "unknown"  # segments cut without ground truth
CLASSES = (HEALTHY, UNHEALTHY)

TAPX_MAGIC = b"TAPX"
TAPX_VERSION = 1
_LABEL_CODES = {HEALTHY: 0, UNHEALTHY: 1, UNKNOWN: 2}


@dataclass(frozen=True)
class PeakSet:
    indices: np.ndarray
    amplitudes: np.ndarray

    def __len__(self):
        return len(self.indices)


@dataclass
class SegmentMatrix:
    data: np.ndarray
    labels: np.ndarray
    source_ids: np.ndarray
    dropped: int = 0

    def __post_init__(self):
        self.data = np.atleast_2d(np.asarray(self.data, dtype=float))
        self.labels = np.asarray(self.labels, dtype=object)
        self.source_ids = np.asarray(self.source_ids, dtype=object)
        if len(self.labels) != len(self.data) or len(self.source_ids) != len(self.data):
            raise ValueError("labels/source_ids must match the row count")

    @property
    def m(self):
        return self.data.shape[0]

    @property
    def n(self):
        return self.data.shape[1]

    def take(self, rows) -> "SegmentMatrix":
        rows = np.asarray(rows, dtype=int)
        return SegmentMatrix(self.data[rows], self.labels[rows], self.source_ids[rows])

    @classmethod
    def empty(cls, L: int, dropped: int = 0) -> "SegmentMatrix":
        return cls(np.zeros((0, L)), [], [], dropped)

    @classmethod
    def concat(cls, parts) -> "SegmentMatrix":
        parts = list(parts)
        return cls(np.vstack([p.data for p in parts]),
                   np.concatenate([p.labels for p in parts]),
                   np.concatenate([p.source_ids for p in parts]),
                   sum(p.dropped for p in parts))


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.6
    stratified: bool = True
    seed: int = 0


def detect_peaks(y, delta: int) -> PeakSet:
    """Strict local maxima of |y|, thinned greedily so kept peaks are >= delta apart.

    Tallest first; equal heights resolve to the lower index.
    """
    if delta < 1:
        raise ValueError("delta must be >= 1")
    a = np.abs(np.asarray(y, dtype=float))
    if len(a) < 3:
        return PeakSet(np.zeros(0, int), np.zeros(0))
    cand = np.flatnonzero((a[1:-1] > a[:-2]) & (a[1:-1] > a[2:])) + 1
    order = cand[np.lexsort((cand, -a[cand]))]
    blocked = bytearray(len(a))
    kept = []
    for p in order.tolist():
        if blocked[p]:
            continue
        kept.append(p)
        lo, hi = max(0, p - delta + 1), min(len(a), p + delta)
        blocked[lo:hi] = b"\x01" * (hi - lo)
    idx = np.sort(np.array(kept, dtype=int))
    return PeakSet(idx, a[idx])


def filter_peaks(peaks: PeakSet, thresholds) -> PeakSet:
    """Keep lambda_min < amplitude < lambda_max (strict on both sides)."""
    v = peaks.amplitudes
    keep = (v > thresholds.lambda_min) & (v < thresholds.lambda_max)
    return PeakSet(peaks.indices[keep], v[keep])


def extract_segments(y, peaks: PeakSet, L: int = 4096, pre_fraction: float = 0.1, label=HEALTHY,
                     source: str = "") -> SegmentMatrix:
    y = np.asarray(y, dtype=float)
    if L < 2 or not 0 <= pre_fraction < 1:
        raise ValueError("need L >= 2 and 0 <= pre_fraction < 1")
    if L > len(y):
        raise ValueError(f"L={L} longer than the signal ({len(y)})")
    starts = np.asarray(peaks.indices, dtype=int) - int(np.floor(pre_fraction * L))
    ok = (starts >= 0) & (starts + L <= len(y))
    starts = starts[ok]
    dropped = int(np.count_nonzero(~ok))
    if len(starts) == 0:
        return SegmentMatrix.empty(L, dropped)
    data = y[starts[:, None] + np.arange(L)]
    ids = [f"{source}:{p}" for p in np.asarray(peaks.indices)[ok]]
    return SegmentMatrix(data, [label] * len(starts), ids, dropped)


def split(matrix: SegmentMatrix, spec: SplitSpec = SplitSpec()):
    """Per-class floor(fraction * count) rows (at least one) go to train."""
    if not 0 < spec.train_fraction < 1:
        raise ValueError("train_fraction must lie in (0, 1)")
    rng = np.random.default_rng(spec.seed)
    groups = sorted(set(matrix.labels)) if spec.stratified else [None]
    train, test = [], []
    for g in groups:
        rows = np.arange(matrix.m) if g is None else np.flatnonzero(matrix.labels == g)
        if spec.stratified and len(rows) < 2:
            raise ValueError(f"class {g!r} has fewer than 2 rows")
        rows = rows[rng.permutation(len(rows))]
        k = max(1, int(np.floor(spec.train_fraction * len(rows))))
        train.extend(rows[:k])
        test.extend(rows[k:])
    train, test = np.sort(train), np.sort(test)
    return matrix.take(train), matrix.take(test)


def write_csv(path, matrix: SegmentMatrix):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "source_id"] + [f"s{i}" for i in range(matrix.n)])
        for lab, sid, row in zip(matrix.labels, matrix.source_ids, matrix.data):
            w.writerow([lab, sid] + [repr(float(v)) for v in row])


def read_csv(path) -> SegmentMatrix:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = list(r)
    n = len(header) - 2
    if not rows:
        return SegmentMatrix.empty(n)
    return SegmentMatrix(np.array([[float(v) for v in row[2:]] for row in rows]),
                         [row[0] for row in rows], [row[1] for row in rows])


def write_tapx(path, matrix: SegmentMatrix):
    """Binary form: 'TAPX', u32 version, u32 m, u32 n, then per row a label code
    (u8), an id (u16 length + utf-8) and n little-endian float32 samples."""
    with open(path, "wb") as fh:
        fh.write(TAPX_MAGIC + struct.pack("<III", TAPX_VERSION, matrix.m, matrix.n))
        for lab, sid, row in zip(matrix.labels, matrix.source_ids, matrix.data):
            b = str(sid).encode()
            fh.write(struct.pack("<BH", _LABEL_CODES[lab], len(b)) + b)
            fh.write(np.asarray(row, dtype="<f4").tobytes())


def read_tapx(path) -> SegmentMatrix:
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != TAPX_MAGIC:
        raise ValueError(f"{path}: not a TAPX file")
    version, m, n = struct.unpack_from("<III", buf, 4)
    if version != TAPX_VERSION:
        raise ValueError(f"{path}: unsupported TAPX version {version}")
    codes = {v: k for k, v in _LABEL_CODES.items()}
    pos = 16
    data = np.zeros((m, n))
    labels, ids = [], []
    try:
        for i in range(m):
            code, ln = struct.unpack_from("<BH", buf, pos)
            pos += 3
            ids.append(buf[pos:pos + ln].decode())
            pos += ln
            data[i] = np.frombuffer(buf, dtype="<f4", count=n, offset=pos)
            pos += 4 * n
            labels.append(codes[code])
    except (struct.error, ValueError, KeyError) as e:
        raise ValueError(f"{path}: truncated or corrupt TAPX file") from e
    return SegmentMatrix(data, labels, ids)


def read_segments(path) -> SegmentMatrix:
    return read_csv(path) if str(path).endswith(".csv") else read_tapx(path)


def write_segments(path, matrix: SegmentMatrix):
    (write_csv if str(path).endswith(".csv") else write_tapx)(path, matrix)
