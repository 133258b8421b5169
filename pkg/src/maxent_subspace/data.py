"""Synthetic data, matrix / label IO and heatmap export.

File formats
------------
Binary matrix (``.mescmat``)
    8 bytes magic ``MESCMAT1``, rows and cols as little-endian uint32, then
    ``rows * cols`` little-endian float64 values in row-major order.
CSV matrix (``.csv``)
    First line ``# rows cols``, then one comma-separated row per line, each
    value written with 17 significant digits.
Labels (``.txt``)
    One base-10 integer per line, 0-based.
Heatmap (``.pgm``)
    Plain (P2) portable graymap, one pixel per matrix entry, row-major,
    values quantized from the min-max normalized matrix to 0..255.
"""

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DimensionOverflowError,
    FormatError,
    MalformedHeaderError,
    PayloadLengthError,
)
from .numerics import as_matrix, make_rng

__all__ = [
    "Dataset",
    "SyntheticSpec",
    "export_heatmap",
    "gen_images",
    "gen_subspaces",
    "load_dataset",
    "load_labels",
    "load_matrix",
    "minmax_normalize",
    "save_dataset",
    "save_labels",
    "save_matrix",
]

MATRIX_MAGIC = b"MESCMAT1"
_U32_MAX = 2**32 - 1
# refuse to allocate more than this from an untrusted header
MAX_ENTRIES = 2**31

IMAGE_OFFSET = 0.5
IMAGE_PIXEL_STD = 0.15


@dataclass(frozen=True)
class SyntheticSpec:
    """Union of ``k`` independent linear subspaces in ``R^ambient``."""

    dims: tuple = (3, 3, 3)
    samples: tuple = (40, 40, 40)
    ambient: int = 30
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "samples", tuple(int(n) for n in self.samples))
        if len(self.dims) != len(self.samples) or not self.dims:
            raise ValueError("dims and samples must be non-empty lists of equal length")
        if any(d < 1 for d in self.dims):
            raise ValueError("every subspace dimension must be >= 1")
        if any(n < d for n, d in zip(self.samples, self.dims)):
            raise ValueError("each subspace needs at least as many samples as its dimension")
        if sum(self.dims) > self.ambient:
            raise ValueError(
                f"infeasible spec: subspace dimensions sum to {sum(self.dims)} "
                f"> ambient dimension {self.ambient}"
            )
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")

    @property
    def k(self):
        return len(self.dims)

    @property
    def n(self):
        return sum(self.samples)

    @classmethod
    def uniform(cls, k, dim, samples, ambient, noise_sigma=0.0, seed=0):
        return cls((dim,) * k, (samples,) * k, ambient, noise_sigma, seed)


@dataclass
class Dataset:
    """Samples plus labels.

    ``X`` is either a (d, n) feature matrix or an (n, 1, H, W) image batch.
    """

    X: np.ndarray
    labels: np.ndarray = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            n = self.X.shape[0] if self.X.ndim == 4 else self.X.shape[1]
            if self.labels.size != n:
                raise ValueError(f"{self.labels.size} labels for {n} samples")


def _subspace_draws(spec, rng):
    total = sum(spec.dims)
    basis, _ = np.linalg.qr(rng.standard_normal((spec.ambient, total)))
    blocks, labels, start = [], [], 0
    for i, (d, n) in enumerate(zip(spec.dims, spec.samples)):
        blocks.append(basis[:, start:start + d] @ rng.standard_normal((d, n)))
        labels.append(np.full(n, i, dtype=np.int64))
        start += d
    Z = np.hstack(blocks)
    if spec.noise_sigma > 0:
        Z = Z + spec.noise_sigma * rng.standard_normal(Z.shape)
    return Z, np.concatenate(labels), basis


def gen_subspaces(spec, return_basis=False):
    """Sample ``spec.n`` points from ``spec.k`` independent subspaces.

    A random orthonormal basis (QR of a Gaussian matrix) is split column-wise
    into one basis per subspace; coefficients are standard normal and
    isotropic Gaussian noise of scale ``noise_sigma`` is added.

    Returns
    -------
    Z : ndarray, shape (ambient, n)
    labels : ndarray of int, contiguous blocks 0..k-1
    basis : ndarray, shape (ambient, sum(dims)), only if ``return_basis``
    """
    Z, labels, basis = _subspace_draws(spec, make_rng(spec.seed))
    if return_basis:
        return Z, labels, basis
    return Z, labels


def image_linear_part(spec, side):
    """Pixel-space features before offset and clipping, shape (side*side, n).

    Columns keep the subspace structure of :func:`gen_subspaces` exactly,
    since the map to pixel space is linear.
    """
    if side < 1 or side * side < spec.ambient:
        raise ValueError(
            f"image side {side} too small: side^2 must be >= ambient dimension {spec.ambient}"
        )
    rng = make_rng(spec.seed)
    Z, labels, _ = _subspace_draws(spec, rng)
    A = rng.standard_normal((side * side, spec.ambient))
    P = A @ Z
    scale = IMAGE_PIXEL_STD / max(float(np.std(P)), np.finfo(float).tiny)
    return scale * P, labels


def gen_images(spec, side):
    """Render subspace samples as ``side x side`` images with values in [0, 1].

    Pixels are ``clip(0.5 + s * A z, 0, 1)`` for a fixed Gaussian map ``A``
    and a scale ``s`` giving a pixel standard deviation of about 0.15.
    """
    P, labels = image_linear_part(spec, side)
    X = np.clip(IMAGE_OFFSET + P, 0.0, 1.0).T.reshape(-1, 1, side, side)
    meta = {
        "source": "synthetic-subspace-images",
        "seed": spec.seed,
        "image_side": side,
        "normalization": "offset 0.5, pixel std 0.15, clipped to [0,1]",
    }
    return Dataset(X, labels, meta)


def minmax_normalize(M):
    """Map entries to [0, 1] via ``(m - min) / (max - min)``.

    A constant matrix maps to all zeros.
    """
    M = np.asarray(M, dtype=np.float64)
    lo, hi = M.min(), M.max()
    if hi == lo:
        return np.zeros_like(M)
    return (M - lo) / (hi - lo)


def _is_csv(path, fmt):
    if fmt is not None:
        if fmt not in ("csv", "binary"):
            raise ValueError(f"unknown matrix format {fmt!r}")
        return fmt == "csv"
    return Path(path).suffix.lower() == ".csv"


def save_matrix(path, M, fmt=None):
    """Write a 2-D matrix; the format follows ``fmt`` or the file suffix."""
    M = as_matrix(M)
    rows, cols = M.shape
    if rows > _U32_MAX or cols > _U32_MAX:
        raise DimensionOverflowError(f"matrix {rows}x{cols} exceeds uint32 dimensions")
    path = Path(path)
    if _is_csv(path, fmt):
        lines = [f"# {rows} {cols}"]
        lines += [",".join(f"{x:.17g}" for x in row) for row in M]
        path.write_text("\n".join(lines) + "\n")
        return
    header = MATRIX_MAGIC + struct.pack("<II", rows, cols)
    path.write_bytes(header + M.astype("<f8").tobytes(order="C"))


def load_matrix(path, fmt=None):
    path = Path(path)
    if _is_csv(path, fmt):
        return _load_csv(path)
    data = path.read_bytes()
    if len(data) < 16 or data[:8] != MATRIX_MAGIC:
        raise MalformedHeaderError(f"{path}: missing MESCMAT1 header")
    rows, cols = struct.unpack("<II", data[8:16])
    if rows == 0 or cols == 0:
        raise MalformedHeaderError(f"{path}: zero dimension in header ({rows}x{cols})")
    if rows * cols > MAX_ENTRIES:
        raise DimensionOverflowError(f"{path}: header dimensions {rows}x{cols} are too large")
    expected = rows * cols * 8
    actual = len(data) - 16
    if actual != expected:
        raise PayloadLengthError(expected, actual, path)
    return np.frombuffer(data, dtype="<f8", offset=16).reshape(rows, cols).astype(np.float64)


def _load_csv(path):
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("#"):
        raise MalformedHeaderError(f"{path}: expected '# rows cols' header")
    try:
        rows, cols = (int(t) for t in lines[0][1:].split())
    except ValueError:
        raise MalformedHeaderError(f"{path}: bad header {lines[0]!r}") from None
    if rows * cols > MAX_ENTRIES:
        raise DimensionOverflowError(f"{path}: header dimensions {rows}x{cols} are too large")
    body = lines[1:]
    if len(body) != rows:
        raise FormatError(f"{path}: header says {rows} rows, found {len(body)}")
    M = np.empty((rows, cols))
    for i, ln in enumerate(body):
        parts = ln.split(",")
        if len(parts) != cols:
            raise FormatError(f"{path}: row {i} has {len(parts)} values, expected {cols}")
        try:
            M[i] = [float(p) for p in parts]
        except ValueError:
            raise FormatError(f"{path}: unparsable value in row {i}") from None
    return M


def save_labels(path, labels):
    labels = np.asarray(labels, dtype=np.int64).ravel()
    Path(path).write_text("".join(f"{int(v)}\n" for v in labels))


def load_labels(path):
    out = []
    for i, ln in enumerate(Path(path).read_text().splitlines(), 1):
        ln = ln.strip()
        if not ln:
            continue
        try:
            out.append(int(ln, 10))
        except ValueError:
            raise FormatError(f"{path}:{i}: not an integer label: {ln!r}") from None
    return np.asarray(out, dtype=np.int64)


def save_dataset(directory, ds):
    """Write a dataset as ``features.mescmat`` or ``images.mescmat`` + labels."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if ds.X.ndim == 4:
        n, _, h, w = ds.X.shape
        save_matrix(directory / "images.mescmat", ds.X.reshape(n, h * w))
        meta = dict(ds.metadata, image_height=h, image_width=w)
    else:
        save_matrix(directory / "features.mescmat", ds.X)
        meta = dict(ds.metadata)
    if ds.labels is not None:
        save_labels(directory / "labels.txt", ds.labels)
    (directory / "metadata.txt").write_text(
        "".join(f"{k}: {meta[k]}\n" for k in sorted(meta))
    )


def read_metadata(directory):
    path = Path(directory) / "metadata.txt"
    if not path.exists():
        return {}
    meta = {}
    for ln in path.read_text().splitlines():
        if ": " in ln:
            k, v = ln.split(": ", 1)
            meta[k] = v
    return meta


def load_dataset(directory, kind="features"):
    directory = Path(directory)
    meta = read_metadata(directory)
    labels_path = directory / "labels.txt"
    labels = load_labels(labels_path) if labels_path.exists() else None
    if kind == "images":
        flat = load_matrix(directory / "images.mescmat")
        h = int(meta.get("image_height", 0)) or int(round(np.sqrt(flat.shape[1])))
        w = int(meta.get("image_width", 0)) or flat.shape[1] // h
        if h * w != flat.shape[1]:
            raise FormatError(f"{directory}: image shape {h}x{w} does not match {flat.shape[1]} pixels")
        return Dataset(flat.reshape(-1, 1, h, w), labels, meta)
    return Dataset(load_matrix(directory / "features.mescmat"), labels, meta)


def export_heatmap(M, path):
    """Write ``M`` as a plain-text (P2) graymap after min-max normalization."""
    M = as_matrix(M)
    q = np.rint(minmax_normalize(M) * 255.0).astype(np.int64)
    rows, cols = q.shape
    lines = ["P2", f"{cols} {rows}", "255"]
    lines += [" ".join(str(v) for v in row) for row in q]
    Path(path).write_text("\n".join(lines) + "\n")
