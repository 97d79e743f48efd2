"""Feature fusion, corpus -> dataset assembly and the feature file format."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import hog as hog_mod
from . import kaze as kaze_mod
from . import lbp as lbp_mod
from .errors import DeepfuseError, EmptyClass, SchemaMismatch
from .imgcore import GrayImage, load_image, log_transform, resize

log = logging.getLogger(__name__)

SCHEMES = ("lbp", "hog", "kaze", "lbp+kaze", "hog+kaze")
LABELS = {"real": 0, "fake": 1}
IMAGE_SUFFIXES = (".png", ".pgm")
FEATURE_FORMAT = "deepfuse-features"
FEATURE_VERSION = 1


@dataclass(frozen=True)
class ExtractorConfig:
    """Everything that determines a feature row, hashed into the fingerprint."""

    scheme: str = "hog+kaze"
    size: tuple = (28, 28)
    log_scale: bool = False
    lbp: lbp_mod.LbpParams = field(default_factory=lbp_mod.LbpParams)
    hog: hog_mod.HogParams = field(default_factory=hog_mod.HogParams)
    kaze: kaze_mod.KazeParams = field(default_factory=kaze_mod.KazeParams)
    # detect/describe KAZE on the source resolution instead of the resized frame
    kaze_full_resolution: bool = False

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        object.__setattr__(self, "size", tuple(int(v) for v in self.size))

    @property
    def components(self):
        return tuple(self.scheme.split("+"))

    def relevant(self) -> dict:
        """Parameters that influence the vectors of this scheme."""
        out = {"scheme": self.scheme, "size": list(self.size), "log_scale": self.log_scale}
        for part in self.components:
            out[part] = asdict(getattr(self, part))
        if "kaze" in self.components:
            out["kaze_full_resolution"] = self.kaze_full_resolution
        return out

    def fingerprint(self) -> str:
        blob = json.dumps(self.relevant(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def n_features(self) -> int:
        w, h = self.size
        n = 0
        for part in self.components:
            if part == "lbp":
                n += self.lbp.length
            elif part == "hog":
                n += self.hog.length(w, h)
            else:
                n += self.kaze.m
        return n

    def to_dict(self) -> dict:
        d = asdict(self)
        d["size"] = list(self.size)
        return d

    @classmethod
    def from_dict(cls, d) -> "ExtractorConfig":
        d = dict(d)
        return cls(scheme=d.get("scheme", "hog+kaze"), size=tuple(d.get("size", (28, 28))),
                   log_scale=d.get("log_scale", False),
                   lbp=lbp_mod.LbpParams(**d.get("lbp", {})),
                   hog=hog_mod.HogParams(**d.get("hog", {})),
                   kaze=kaze_mod.KazeParams(**d.get("kaze", {})),
                   kaze_full_resolution=d.get("kaze_full_resolution", False))


@dataclass(frozen=True, eq=False)
class FeatureVector:
    values: np.ndarray
    scheme: str
    param_fingerprint: str

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).ravel()
        if v.size == 0:
            raise ValueError("feature vectors must be non-empty")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size


@dataclass(frozen=True, eq=False)
class FusedVector:
    values: np.ndarray
    left_len: int
    right_len: int

    def __len__(self):
        return self.values.size

    @property
    def left(self):
        return self.values[:self.left_len]

    @property
    def right(self):
        return self.values[self.left_len:]


def combine(a: FeatureVector, b: FeatureVector) -> FusedVector:
    """Plain concatenation ``a || b``; no rescaling."""
    return FusedVector(np.concatenate([a.values, b.values]), len(a), len(b))


def preprocess(img: GrayImage, cfg: ExtractorConfig) -> GrayImage:
    w, h = cfg.size
    out = resize(img, w, h)
    return log_transform(out) if cfg.log_scale else out


def extract(img: GrayImage, cfg: ExtractorConfig) -> np.ndarray:
    """Feature row for one already-grayscale image, per ``cfg.scheme``."""
    small = preprocess(img, cfg)
    parts = []
    fp = cfg.fingerprint()
    for part in cfg.components:
        if part == "lbp":
            vec = lbp_mod.lbp_histogram(small, cfg.lbp)
        elif part == "hog":
            vec = hog_mod.hog_descriptor(small, cfg.hog)
        else:
            src = small
            if cfg.kaze_full_resolution and (img.width > cfg.size[0] or img.height > cfg.size[1]):
                src = log_transform(img) if cfg.log_scale else img
            vec = kaze_mod.kaze_vector(src, cfg.kaze).vector
        parts.append(FeatureVector(vec, part, fp))
    if len(parts) == 1:
        return parts[0].values
    return combine(parts[0], parts[1]).values


@dataclass(eq=False)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    sources: tuple
    scheme: str
    param_fingerprint: str
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim == 1:
            self.X = self.X.reshape(len(self.X), -1)
        self.y = np.asarray(self.y, dtype=np.int64)
        self.sources = tuple(self.sources)
        if not (self.X.shape[0] == len(self.y) == len(self.sources)):
            raise ValueError("X, y and sources must have the same number of rows")
        if self.y.size and not set(np.unique(self.y)) <= {0, 1}:
            raise ValueError("labels must be 0 (real) or 1 (fake)")

    def __len__(self):
        return len(self.y)

    @property
    def n_features(self):
        return self.X.shape[1]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.intp)
        return Dataset(self.X[rows], self.y[rows], tuple(self.sources[i] for i in rows),
                       self.scheme, self.param_fingerprint, self.config)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.scheme == other.scheme and self.param_fingerprint == other.param_fingerprint
                and self.sources == other.sources and np.array_equal(self.y, other.y)
                and self.X.shape == other.X.shape and np.array_equal(self.X, other.X))


@dataclass
class PrepareSummary:
    rows: int = 0
    skipped: list = field(default_factory=list)  # (path, reason)


def corpus_files(root):
    """``(relative path, label)`` pairs of a ``real/`` + ``fake/`` corpus.

    Real images come first, then fake; each class is in lexicographic path
    order.
    """
    root = Path(root)
    found = []
    for name, label in LABELS.items():
        d = root / name
        if not d.is_dir():
            raise EmptyClass(f"corpus {root} has no '{name}/' directory")
        for p in d.iterdir():
            if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES:
                found.append((p.relative_to(root).as_posix(), label))
    found.sort(key=lambda item: (item[1], item[0]))
    return found


def prepare_dataset(corpus_root, cfg: ExtractorConfig = ExtractorConfig(), threads: int = 1,
                    summary: PrepareSummary | None = None) -> Dataset:
    """Decode, preprocess and featurise every corpus image, one row each.

    Rows are ordered real then fake, by path within a class, regardless of ``threads``.
    Undecodable files are logged and skipped.
    """
    root = Path(corpus_root)
    files = corpus_files(root)

    def work(item):
        rel, _label = item
        try:
            return extract(load_image(root / rel), cfg), None
        except (DeepfuseError, OSError, ValueError) as exc:
            return None, str(exc)

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, files))
    else:
        results = [work(f) for f in files]

    rows, labels, sources = [], [], []
    skipped = []
    for (rel, label), (vec, err) in zip(files, results):
        if vec is None:
            log.warning("skipping %s: %s", rel, err)
            skipped.append((rel, err))
            continue
        rows.append(vec)
        labels.append(label)
        sources.append(rel)
    for name, label in LABELS.items():
        if label not in labels:
            raise EmptyClass(f"class '{name}' has no decodable images under {root / name}")
    if summary is not None:
        summary.rows = len(rows)
        summary.skipped = skipped
    return Dataset(np.vstack(rows), np.asarray(labels), tuple(sources), cfg.scheme,
                   cfg.fingerprint(), cfg.to_dict())


# -- feature files -----------------------------------------------------------

def _header(ds: Dataset) -> dict:
    return {"format": FEATURE_FORMAT, "version": FEATURE_VERSION, "scheme": ds.scheme,
            "fingerprint": ds.param_fingerprint, "dims": ds.n_features, "rows": len(ds),
            "config": ds.config}


def _format_rows(ds: Dataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for i in range(len(ds)):
        writer.writerow([int(ds.y[i]), ds.sources[i]] + [repr(float(v)) for v in ds.X[i]])
    return buf.getvalue()


def export_features(ds: Dataset, path) -> None:
    """Write ``# {json header}`` then a CSV block ``label,source,f0..f{d-1}``.

    Values are written with ``repr`` so reading them back is bit-exact.
    """
    head = json.dumps(_header(ds), sort_keys=True)
    columns = ",".join(["label", "source"] + [f"f{i}" for i in range(ds.n_features)])
    Path(path).write_text(f"# {head}\n{columns}\n{_format_rows(ds)}")


def _read_header(path):
    with open(path) as fh:
        first = fh.readline()
    if not first.startswith("# "):
        raise SchemaMismatch(f"{path}: missing feature-file header")
    try:
        head = json.loads(first[2:])
    except json.JSONDecodeError as exc:
        raise SchemaMismatch(f"{path}: unreadable header ({exc})") from None
    if head.get("format") != FEATURE_FORMAT:
        raise SchemaMismatch(f"{path}: not a {FEATURE_FORMAT} file")
    if head.get("version") != FEATURE_VERSION:
        raise SchemaMismatch(f"{path}: feature file version {head.get('version')!r}, "
                             f"expected {FEATURE_VERSION}")
    return head


def import_features(path) -> Dataset:
    head = _read_header(path)
    dims = int(head["dims"])
    with open(path, newline="") as fh:
        fh.readline()
        reader = csv.reader(fh)
        columns = next(reader)
        if len(columns) != dims + 2:
            raise SchemaMismatch(f"{path}: header says {dims} dims, column row has "
                                 f"{len(columns) - 2}")
        X, y, sources = [], [], []
        for lineno, row in enumerate(reader, start=3):
            if len(row) != dims + 2:
                raise SchemaMismatch(f"{path}:{lineno}: expected {dims + 2} fields, got {len(row)}")
            y.append(int(row[0]))
            sources.append(row[1])
            X.append([float(v) for v in row[2:]])
    if len(y) != int(head["rows"]):
        raise SchemaMismatch(f"{path}: header says {head['rows']} rows, found {len(y)}")
    X = np.asarray(X, dtype=np.float64).reshape(len(y), dims)
    return Dataset(X, y, tuple(sources), head["scheme"], head["fingerprint"],
                   head.get("config", {}))


def append_features(path, ds: Dataset) -> None:
    """Append rows to an existing feature file with the same fingerprint and width."""
    head = _read_header(path)
    if head["fingerprint"] != ds.param_fingerprint or head["scheme"] != ds.scheme:
        raise SchemaMismatch(f"{path}: fingerprint {head['fingerprint']} ({head['scheme']}) "
                             f"differs from {ds.param_fingerprint} ({ds.scheme})")
    if int(head["dims"]) != ds.n_features:
        raise SchemaMismatch(f"{path}: {head['dims']} columns, appending {ds.n_features}")
    merged = import_features(path)
    export_features(Dataset(np.vstack([merged.X, ds.X]), np.concatenate([merged.y, ds.y]),
                            merged.sources + ds.sources, ds.scheme, ds.param_fingerprint,
                            merged.config or ds.config), path)

