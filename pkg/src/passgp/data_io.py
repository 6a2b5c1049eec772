"""Dataset ingestion, label transforms, scaling and translation
augmentation.

Supported formats: IDX image/label pairs (big-endian, ubyte), svmlight
sparse lines ("label idx:val ...", 1-based indices) and numeric
CSV/whitespace text with the label in the last column. Everything is
densified to float64; the sparse datasets this targets are low
dimensional, so density costs nothing.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

FORMATS = ("idx", "svmlight", "csv")


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels)
        if self.features.ndim != 2:
            raise ValueError("features must be 2-d")
        if len(self.labels) != len(self.features):
            raise ValueError("label count does not match feature rows")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features contain NaN or Inf")

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]

    def is_binary(self):
        return bool(np.all(np.isin(self.labels, (-1, 1))))


def load(path, fmt, labels_path=None, n_features=None, name=None):
    """Read a dataset from disk.

    idx needs ``labels_path`` for the companion label file; svmlight
    accepts ``n_features`` to fix the width (otherwise the maximum index
    seen wins).
    """
    if fmt == "idx":
        if labels_path is None:
            raise ValueError("idx format needs labels_path")
        ds = _load_idx(path, labels_path)
    elif fmt == "svmlight":
        ds = _load_svmlight(path, n_features)
    elif fmt == "csv":
        ds = _load_csv(path)
    else:
        raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    ds.meta["name"] = name or str(path)
    ds.meta.setdefault("scaling", None)
    return ds


def _load_idx(images_path, labels_path):
    with open(images_path, "rb") as fh:
        header = fh.read(16)
        if len(header) < 16:
            raise ParseError(f"{images_path}: truncated IDX header")
        magic, n, rows, cols = struct.unpack(">IIII", header)
        if magic != IDX_IMAGES_MAGIC:
            raise ParseError(
                f"{images_path}: bad magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}"
            )
        raw = fh.read(n * rows * cols)
        if len(raw) != n * rows * cols:
            raise ParseError(f"{images_path}: expected {n * rows * cols} pixel bytes")
    features = np.frombuffer(raw, dtype=np.uint8).astype(float).reshape(n, rows * cols)

    with open(labels_path, "rb") as fh:
        header = fh.read(8)
        if len(header) < 8:
            raise ParseError(f"{labels_path}: truncated IDX header")
        magic, n_lab = struct.unpack(">II", header)
        if magic != IDX_LABELS_MAGIC:
            raise ParseError(
                f"{labels_path}: bad magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}"
            )
        raw = fh.read(n_lab)
        if len(raw) != n_lab:
            raise ParseError(f"{labels_path}: expected {n_lab} label bytes")
    labels = np.frombuffer(raw, dtype=np.uint8).astype(np.int64)
    if n_lab != n:
        raise ParseError(f"{labels_path}: {n_lab} labels for {n} images")
    return Dataset(features, labels, {"height": rows, "width": cols})


def _normalize_labels(raw):
    values = np.asarray(raw, dtype=float)
    ints = values.astype(np.int64)
    if not np.all(ints == values):
        raise ParseError("non-integer class labels")
    return ints


def _load_svmlight(path, n_features=None):
    rows = []
    labels = []
    max_idx = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            try:
                labels.append(float(tokens[0]))
            except ValueError:
                raise ParseError(f"bad label {tokens[0]!r}", line=lineno) from None
            entries = []
            for tok in tokens[1:]:
                try:
                    idx_s, val_s = tok.split(":", 1)
                    idx, val = int(idx_s), float(val_s)
                except ValueError:
                    raise ParseError(f"bad feature token {tok!r}", line=lineno) from None
                if idx < 1:
                    raise ParseError(f"feature index {idx} must be >= 1", line=lineno)
                if n_features is not None and idx > n_features:
                    raise ParseError(
                        f"feature index {idx} exceeds n_features={n_features}",
                        line=lineno,
                    )
                entries.append((idx, val))
            max_idx = max(max_idx, max((i for i, _ in entries), default=0))
            rows.append(entries)
    d = n_features if n_features is not None else max_idx
    features = np.zeros((len(rows), d))
    for i, entries in enumerate(rows):
        for idx, val in entries:
            features[i, idx - 1] = val
    return Dataset(features, _normalize_labels(labels))


def _load_csv(path):
    with open(path) as fh:
        first = None
        for line in fh:
            if line.strip():
                first = line
                break
    if first is None:
        raise ParseError(f"{path}: empty file")
    delim = "," if "," in first else None
    try:
        table = np.loadtxt(path, delimiter=delim, ndmin=2)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None
    if table.shape[1] < 2:
        raise ParseError(f"{path}: need at least one feature column plus the label")
    return Dataset(table[:, :-1], _normalize_labels(table[:, -1]))


def write_svmlight(ds, path):
    """Sparse writer; zeros are omitted and read back as zeros."""
    with open(path, "w") as fh:
        for x, lab in zip(ds.features, ds.labels):
            parts = [repr(int(lab))]
            for j in np.nonzero(x)[0]:
                parts.append(f"{j + 1}:{float(x[j])!r}")
            fh.write(" ".join(parts) + "\n")


def scale_to_range(ds, lo=-1.0, hi=1.0):
    """Affine map sending the global feature minimum to lo and maximum to hi.

    All-constant data maps to the midpoint.
    """
    if ds.n == 0:
        raise ValueError("empty dataset")
    fmin = float(ds.features.min())
    fmax = float(ds.features.max())
    if fmax == fmin:
        features = np.full_like(ds.features, (lo + hi) / 2.0)
    else:
        features = lo + (ds.features - fmin) * ((hi - lo) / (fmax - fmin))
    meta = dict(ds.meta, scaling=(lo, hi))
    return Dataset(features, ds.labels.copy(), meta)


def one_vs_rest(ds, target_class):
    """Binary view of a multiclass dataset: target -> +1, rest -> -1."""
    if target_class not in ds.labels:
        raise ValueError(f"class {target_class} absent from the dataset")
    labels = np.where(ds.labels == target_class, 1, -1).astype(np.int64)
    return Dataset(ds.features.copy(), labels, dict(ds.meta, target=target_class))


def augment_translations(ds, height, width, directions="four"):
    """Append 1-pixel translated copies of every image row.

    "four" shifts left/up/right/down (output 5x the rows); "eight" adds
    the diagonals (9x). Pixels shifted in from outside take the dataset
    minimum as background. Original rows come first, then one block per
    direction; labels are replicated per block, so class ratios are
    preserved.
    """
    if height * width != ds.d:
        raise ValueError(f"height*width = {height * width} != feature dim {ds.d}")
    shifts = {
        "four": [(0, -1), (-1, 0), (0, 1), (1, 0)],
        "eight": [(0, -1), (-1, 0), (0, 1), (1, 0), (-1, -1), (-1, 1), (1, 1), (1, -1)],
    }.get(directions)
    if shifts is None:
        raise ValueError("directions must be 'four' or 'eight'")
    background = float(ds.features.min())
    images = ds.features.reshape(ds.n, height, width)
    blocks = [ds.features]
    for dr, dc in shifts:
        shifted = np.full_like(images, background)
        src_r = slice(max(0, -dr), height - max(0, dr))
        dst_r = slice(max(0, dr), height - max(0, -dr))
        src_c = slice(max(0, -dc), width - max(0, dc))
        dst_c = slice(max(0, dc), width - max(0, -dc))
        shifted[:, dst_r, dst_c] = images[:, src_r, src_c]
        blocks.append(shifted.reshape(ds.n, ds.d))
    features = np.vstack(blocks)
    labels = np.tile(ds.labels, len(shifts) + 1)
    return Dataset(features, labels, dict(ds.meta, augmented=directions))
