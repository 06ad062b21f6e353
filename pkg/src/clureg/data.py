"""Synthetic datasets, domain shifts, IDX parsing, splits and batching.

Everything here is a pure function of its seed arguments: generators,
splits and batch iterators all draw from counter-based streams
(see streams.py), so re-running an experiment reproduces the exact
byte sequence of batches no matter what else changed around it.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .streams import rng_stream

IDX_IMAGE_MAGIC = 2051
IDX_LABEL_MAGIC = 2049


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray | None
    k: int
    name: str = ""

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if not np.isfinite(self.X).all():
            raise ValueError(f"dataset {self.name!r}: non-finite feature values")
        if self.y is not None:
            self.y = np.asarray(self.y, dtype=np.int64)
            if len(self.y) != len(self.X):
                raise ValueError("feature/label counts differ")
            if self.y.min() < 0 or self.y.max() >= self.k:
                raise ValueError(
                    f"labels outside [0, {self.k}): {self.y.min()}..{self.y.max()}"
                )
            present = np.unique(self.y)
            if len(present) != self.k:
                raise ValueError(
                    f"every class needs at least one sample; found classes {present.tolist()}"
                )

    @property
    def n(self) -> int:
        return len(self.X)

    @property
    def dim(self) -> int:
        return self.X.shape[1]


@dataclass
class SSLSplit:
    train: Dataset
    labeled_idx: np.ndarray
    unlabeled_idx: np.ndarray
    val_idx: np.ndarray
    test: Dataset

    @property
    def labeled_X(self):
        return self.train.X[self.labeled_idx]

    @property
    def labeled_y(self):
        return self.train.y[self.labeled_idx]

    @property
    def val_X(self):
        return self.train.X[self.val_idx]

    @property
    def val_y(self):
        return self.train.y[self.val_idx]


@dataclass
class DomainPair:
    source: Dataset  # labeled
    target: Dataset  # labels retained for evaluation only

    def __post_init__(self):
        if self.source.dim != self.target.dim:
            raise ValueError("source and target widths differ")
        if self.source.k != self.target.k:
            raise ValueError("source and target class counts differ")


def _simplex_vertices(k: int) -> np.ndarray:
    """K points with equal pairwise distance 1, in max(2, k-1) dims."""
    centered = np.eye(k) - 1.0 / k  # rows span a (k-1)-dim hyperplane
    # orthonormal basis of that hyperplane, deterministically via SVD
    _, s, vt = np.linalg.svd(centered)
    basis = vt[: k - 1]
    verts = centered @ basis.T / np.sqrt(2.0)  # unit pairwise distance
    if verts.shape[1] < 2:
        verts = np.hstack([verts, np.zeros((k, 1))])
    return verts


def _class_sizes(n: int, k: int) -> np.ndarray:
    sizes = np.full(k, n // k, dtype=np.int64)
    sizes[: n % k] += 1
    return sizes


def gen_synthetic(kind: str, n: int, k: int, noise_sigma: float, seed: int,
                  separation: float = 1.0) -> Dataset:
    """blobs, two_moons or rings; deterministic in `seed`."""
    if n < k:
        raise ValueError(f"need at least one sample per class ({n} < {k})")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    rng = rng_stream(seed, f"gen/{kind}")
    sizes = _class_sizes(n, k)
    y = np.repeat(np.arange(k), sizes)

    if kind == "blobs":
        centers = _simplex_vertices(k) * separation
        X = centers[y] + noise_sigma * rng.standard_normal((n, centers.shape[1]))
    elif kind == "two_moons":
        if k != 2:
            raise ValueError("two_moons is a two-class dataset")
        t0 = np.linspace(0.0, np.pi, sizes[0])
        t1 = np.linspace(0.0, np.pi, sizes[1])
        upper = np.column_stack([np.cos(t0), np.sin(t0)])
        lower = np.column_stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)])
        X = np.vstack([upper, lower]) * separation
        X += noise_sigma * rng.standard_normal(X.shape)
    elif kind == "rings":
        parts = []
        for c in range(k):
            t = np.linspace(0.0, 2 * np.pi, sizes[c], endpoint=False)
            r = (c + 1) * separation
            parts.append(np.column_stack([r * np.cos(t), r * np.sin(t)]))
        X = np.vstack(parts)
        X += noise_sigma * rng.standard_normal(X.shape)
    else:
        raise ValueError(f"unknown synthetic kind {kind!r}")

    perm = rng_stream(seed, f"gen/{kind}/shuffle").permutation(n)
    return Dataset(X[perm], y[perm], k, name=f"{kind}(n={n},k={k},s={seed})")


def shift_domain(ds: Dataset, rotation_deg: float, translation, extra_noise: float,
                 seed: int) -> Dataset:
    """Rotate (2-D only), translate and jitter a dataset; labels survive."""
    X = ds.X
    if rotation_deg != 0.0:
        if ds.dim != 2:
            raise ValueError(f"rotation needs 2-D data, got width {ds.dim}")
        theta = np.deg2rad(rotation_deg)
        rot = np.array([[np.cos(theta), -np.sin(theta)],
                        [np.sin(theta), np.cos(theta)]])
        X = X @ rot.T
    t = np.zeros(ds.dim) if translation is None else np.asarray(translation, dtype=np.float64)
    if t.shape != (ds.dim,):
        raise ValueError(f"translation width {t.shape} does not match data {ds.dim}")
    X = X + t
    if extra_noise < 0:
        raise ValueError("extra_noise must be >= 0")
    if extra_noise > 0:
        X = X + extra_noise * rng_stream(seed, "shift/noise").standard_normal(X.shape)
    return Dataset(X, None if ds.y is None else ds.y.copy(), ds.k,
                   name=ds.name + "/shifted")


def _read_be32(buf: bytes, offset: int, path) -> int:
    if offset + 4 > len(buf):
        raise ValueError(f"{path}: truncated header at byte {offset}")
    return struct.unpack_from(">i", buf, offset)[0]


def load_idx(images_path, labels_path) -> Dataset:
    """Parse the big-endian IDX pair used by the classic digits corpus."""
    with open(images_path, "rb") as f:
        img = f.read()
    with open(labels_path, "rb") as f:
        lab = f.read()

    magic = _read_be32(img, 0, images_path)
    if magic != IDX_IMAGE_MAGIC:
        raise ValueError(
            f"{images_path}: expected magic {IDX_IMAGE_MAGIC} at byte 0, got {magic}"
        )
    n = _read_be32(img, 4, images_path)
    rows = _read_be32(img, 8, images_path)
    cols = _read_be32(img, 12, images_path)
    if min(n, rows, cols) < 1:
        raise ValueError(f"{images_path}: bad dimensions {n}x{rows}x{cols}")
    need = 16 + n * rows * cols
    if len(img) < need:
        raise ValueError(
            f"{images_path}: payload truncated at byte {len(img)}, expected {need}"
        )

    magic = _read_be32(lab, 0, labels_path)
    if magic != IDX_LABEL_MAGIC:
        raise ValueError(
            f"{labels_path}: expected magic {IDX_LABEL_MAGIC} at byte 0, got {magic}"
        )
    n_lab = _read_be32(lab, 4, labels_path)
    if n_lab != n:
        raise ValueError(
            f"label count {n_lab} does not match image count {n}"
        )
    if len(lab) < 8 + n:
        raise ValueError(
            f"{labels_path}: payload truncated at byte {len(lab)}, expected {8 + n}"
        )

    pixels = np.frombuffer(img, dtype=np.uint8, count=n * rows * cols, offset=16)
    X = pixels.reshape(n, rows * cols).astype(np.float64) / 255.0
    y = np.frombuffer(lab, dtype=np.uint8, count=n, offset=8).astype(np.int64)
    if y.max() > 9:
        bad = int(np.argmax(y > 9))
        raise ValueError(
            f"{labels_path}: label byte {y[bad]} at item {bad} outside digit range 0-9"
        )
    return Dataset(X, y, 10, name=f"idx({images_path})")


def save_idx(ds: Dataset, images_path, labels_path, rows: int = 28, cols: int = 28) -> None:
    """Write a dataset back out as an IDX pair (inverse of load_idx)."""
    if ds.y is None:
        raise ValueError("IDX export needs labels")
    if ds.dim != rows * cols:
        raise ValueError(f"width {ds.dim} does not factor as {rows}x{cols}")
    pixels = np.clip(np.rint(ds.X * 255.0), 0, 255).astype(np.uint8)
    with open(images_path, "wb") as f:
        f.write(struct.pack(">iiii", IDX_IMAGE_MAGIC, ds.n, rows, cols))
        f.write(pixels.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">ii", IDX_LABEL_MAGIC, ds.n))
        f.write(ds.y.astype(np.uint8).tobytes())


def make_ssl_split(ds: Dataset, labels_per_class: int, val_fraction: float,
                   seed: int, test: Dataset) -> SSLSplit:
    """Stratified labeled pick; the rest of the train pool is unlabeled."""
    if ds.y is None:
        raise ValueError("SSL split needs a labeled dataset")
    if not 0.0 <= val_fraction < 1.0:
        raise ValueError("val_fraction must be in [0, 1)")
    n = ds.n
    perm = rng_stream(seed, "split/perm").permutation(n)
    n_val = int(round(val_fraction * n))
    val_idx = perm[:n_val]
    pool = perm[n_val:]

    labeled = []
    for c in range(ds.k):
        members = pool[ds.y[pool] == c]
        if len(members) < labels_per_class:
            raise ValueError(
                f"class {c} has {len(members)} train samples, need {labels_per_class}"
            )
        labeled.append(members[:labels_per_class])
    labeled_idx = np.concatenate(labeled)
    unlabeled_idx = np.setdiff1d(pool, labeled_idx, assume_unique=True)
    return SSLSplit(ds, labeled_idx, unlabeled_idx, val_idx, test)


def _stream_take(indices: np.ndarray, count: int, seed: int, purpose: str,
                 step: int) -> np.ndarray:
    """Positions [step*count, (step+1)*count) of the infinite stream formed
    by concatenating per-epoch permutations of `indices`."""
    size = len(indices)
    if count > size:
        # documented fallback: sample with replacement
        return indices[rng_stream(seed, purpose + "/replace", step).integers(0, size, count)]
    start = step * count
    positions = np.arange(start, start + count)
    out = np.empty(count, dtype=np.int64)
    for epoch in np.unique(positions // size):
        sel = positions // size == epoch
        perm = rng_stream(seed, purpose, int(epoch)).permutation(size)
        out[sel] = indices[perm[positions[sel] % size]]
    return out


def next_batch(split: SSLSplit, n_l: int, n_u: int, seed: int, step: int):
    """Labeled and unlabeled batches for one step, reshuffled per epoch.

    A pure function of (seed, step); the two streams are independent.
    """
    if n_l < 1:
        raise ValueError("need at least one labeled sample per batch")
    li = _stream_take(split.labeled_idx, n_l, seed, "batch/labeled", step)
    X_l, y_l = split.train.X[li], split.train.y[li]
    if n_u == 0 or len(split.unlabeled_idx) == 0:
        X_u = np.zeros((0, split.train.dim))
    else:
        ui = _stream_take(split.unlabeled_idx, n_u, seed, "batch/unlabeled", step)
        X_u = split.train.X[ui]
    return X_l, y_l, X_u


def next_unlabeled_batch(ds: Dataset, n_u: int, seed: int, step: int,
                         purpose: str = "batch/target") -> np.ndarray:
    """Unlabeled-only stream over a whole dataset (UDA target batches)."""
    if n_u < 1:
        raise ValueError("need at least one sample per batch")
    idx = _stream_take(np.arange(ds.n), n_u, seed, purpose, step)
    return ds.X[idx]


def shift_crop(X: np.ndarray, rng: np.random.Generator, max_shift: int = 2,
               side: int = 28) -> np.ndarray:
    """Random per-image integer translation up to max_shift pixels, with
    zero fill; the augmentation used for consistency passes on image
    rows (flattened side x side)."""
    X = np.asarray(X, dtype=np.float64)
    n, width = X.shape
    if width != side * side:
        raise ValueError(f"width {width} does not factor as {side}x{side}")
    images = X.reshape(n, side, side)
    out = np.zeros_like(images)
    shifts = rng.integers(-max_shift, max_shift + 1, size=(n, 2))
    for i, (dy, dx) in enumerate(shifts):
        src = images[i]
        ys = slice(max(0, dy), side + min(0, dy))
        xs = slice(max(0, dx), side + min(0, dx))
        yd = slice(max(0, -dy), side + min(0, -dy))
        xd = slice(max(0, -dx), side + min(0, -dx))
        out[i][ys, xs] = src[yd, xd]
    return out.reshape(n, width)


def to_csv(ds: Dataset, path) -> None:
    if ds.y is None:
        raise ValueError("CSV export needs labels")
    header = ",".join([f"x{i}" for i in range(ds.dim)] + ["y"])
    body = np.column_stack([ds.X, ds.y.astype(np.float64)])
    np.savetxt(path, body, delimiter=",", header=header, comments="",
               fmt=["%.17g"] * ds.dim + ["%d"])
