"""Multi-view dataset container, on-disk formats, and synthetic generation.

A dataset directory holds ``manifest.json`` plus one matrix file per view and
an optional ``labels.txt``:

* manifest keys: ``n``, ``v``, ``c``, ``view_files``, ``normalize``,
  ``labels_file`` (null when absent).
* ``.csv`` view files: one sample per line, comma-separated float64 values
  printed with 17 significant digits so they round-trip exactly.
* ``.dmx`` view files: magic ``DMX1``, then little-endian u64 rows and cols,
  then row-major little-endian float64 data.
* ``labels.txt``: one integer per line.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

_DMX_MAGIC = b"DMX1"
MANIFEST_NAME = "manifest.json"


@dataclass
class MultiViewDataset:
    """Feature matrices over the same samples, one matrix per view."""

    views: list[np.ndarray]
    n_clusters: int
    labels: np.ndarray | None = None

    def __post_init__(self):
        if not self.views:
            raise ValueError("a dataset needs at least one view")
        self.views = [np.ascontiguousarray(v, dtype=np.float64) for v in self.views]
        n = self.views[0].shape[0]
        for i, v in enumerate(self.views):
            if v.ndim != 2:
                raise ValueError(f"view {i} is not a matrix (ndim={v.ndim})")
            if v.shape[0] != n:
                raise ValueError(
                    f"view {i} has {v.shape[0]} rows but view 0 has {n}; "
                    "all views must cover the same samples"
                )
        if self.n_clusters < 2:
            raise ValueError(f"cluster count must be at least 2, got {self.n_clusters}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (n,):
                raise ValueError(
                    f"labels have shape {self.labels.shape}, expected ({n},)"
                )
            if self.labels.min() < 0 or self.labels.max() >= self.n_clusters:
                raise ValueError(
                    f"labels must lie in [0, {self.n_clusters}), "
                    f"found range [{self.labels.min()}, {self.labels.max()}]"
                )

    @property
    def n(self) -> int:
        return self.views[0].shape[0]

    @property
    def n_views(self) -> int:
        return len(self.views)


@dataclass
class SyntheticSpec:
    """Gaussian blob generator: per cluster and view, a random center plus
    isotropic noise."""

    n: int
    n_views: int
    n_clusters: int
    dims: tuple[int, ...] = ()
    center_spread: float = 10.0
    noise_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.dims, int):
            self.dims = (self.dims,)
        if not self.dims:
            self.dims = (20,) * self.n_views
        elif len(self.dims) == 1 and self.n_views > 1:
            self.dims = tuple(self.dims) * self.n_views
        else:
            self.dims = tuple(self.dims)
        if len(self.dims) != self.n_views:
            raise ValueError(
                f"got {len(self.dims)} view dimensions for {self.n_views} views"
            )
        if self.n < self.n_clusters:
            raise ValueError(f"need n >= clusters, got n={self.n}, c={self.n_clusters}")
        if self.center_spread <= 0:
            raise ValueError("center_spread must be positive")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be nonnegative")


def l2_normalize_rows(x: np.ndarray) -> np.ndarray:
    """Scale each row to unit Euclidean norm; zero rows pass through with a warning."""
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    zero = norms[:, 0] == 0.0
    if zero.any():
        warnings.warn(
            f"{int(zero.sum())} zero row(s) left unnormalized", RuntimeWarning, stacklevel=2
        )
    safe = np.where(norms == 0.0, 1.0, norms)
    return x / safe


def generate_synthetic(spec: SyntheticSpec) -> MultiViewDataset:
    """Draw per-cluster centers for each view and scatter samples around them."""
    rng = np.random.default_rng(spec.seed)
    base = np.repeat(np.arange(spec.n_clusters), -(-spec.n // spec.n_clusters))[: spec.n]
    labels = rng.permutation(base)
    views = []
    for d in spec.dims:
        centers = rng.normal(0.0, spec.center_spread, size=(spec.n_clusters, d))
        noise = rng.normal(0.0, spec.noise_scale, size=(spec.n, d)) if spec.noise_scale > 0 else 0.0
        views.append(centers[labels] + noise)
    return MultiViewDataset(views=views, n_clusters=spec.n_clusters, labels=labels)


def _write_dmx(path: Path, x: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(_DMX_MAGIC)
        f.write(np.uint64(x.shape[0]).astype("<u8").tobytes())
        f.write(np.uint64(x.shape[1]).astype("<u8").tobytes())
        f.write(np.ascontiguousarray(x, dtype="<f8").tobytes())


def _read_dmx(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    if raw[:4] != _DMX_MAGIC:
        raise ValueError(f"{path}: not a DMX1 matrix file (bad magic {raw[:4]!r})")
    rows, cols = np.frombuffer(raw[4:20], dtype="<u8")
    expect = 20 + 8 * int(rows) * int(cols)
    if len(raw) != expect:
        raise ValueError(f"{path}: truncated matrix file ({len(raw)} of {expect} bytes)")
    data = np.frombuffer(raw[20:], dtype="<f8").reshape(int(rows), int(cols))
    return np.ascontiguousarray(data)


def _write_csv(path: Path, x: np.ndarray) -> None:
    # %.17g round-trips every float64 exactly
    np.savetxt(path, x, fmt="%.17g", delimiter=",")


def _read_csv(path: Path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)


def save_dataset(
    dataset: MultiViewDataset,
    path: str | Path,
    fmt: str = "dmx",
    normalize: bool = False,
) -> Path:
    """Write a dataset directory; ``normalize`` only sets the manifest flag,
    the data itself is stored as given."""
    if fmt not in ("dmx", "csv"):
        raise ValueError(f"unknown view format {fmt!r}, expected 'dmx' or 'csv'")
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    view_files = []
    for i, v in enumerate(dataset.views):
        name = f"view{i}.{fmt}"
        (_write_dmx if fmt == "dmx" else _write_csv)(out / name, v)
        view_files.append(name)
    labels_file = None
    if dataset.labels is not None:
        labels_file = "labels.txt"
        (out / labels_file).write_text("".join(f"{y}\n" for y in dataset.labels))
    manifest = {
        "n": dataset.n,
        "v": dataset.n_views,
        "c": dataset.n_clusters,
        "view_files": view_files,
        "normalize": bool(normalize),
        "labels_file": labels_file,
    }
    (out / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out


def load_labels(path: str | Path) -> np.ndarray:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    return np.array([int(ln) for ln in lines], dtype=np.int64)


def load_dataset(path: str | Path) -> MultiViewDataset:
    """Read and validate a dataset directory written by :func:`save_dataset`."""
    root = Path(path)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.is_file():
        raise ValueError(f"{root}: no {MANIFEST_NAME} found")
    manifest = json.loads(manifest_path.read_text())
    for key in ("n", "v", "c", "view_files"):
        if key not in manifest:
            raise ValueError(f"{manifest_path}: manifest is missing key {key!r}")
    n, v, c = int(manifest["n"]), int(manifest["v"]), int(manifest["c"])
    view_files = manifest["view_files"]
    if len(view_files) != v:
        raise ValueError(
            f"{manifest_path}: manifest declares v={v} but lists {len(view_files)} view files"
        )
    views = []
    for name in view_files:
        vp = root / name
        if not vp.is_file():
            raise ValueError(f"missing view file {vp}")
        x = _read_dmx(vp) if vp.suffix == ".dmx" else _read_csv(vp)
        if x.shape[0] != n:
            raise ValueError(
                f"{vp}: has {x.shape[0]} rows, manifest expects n={n} "
                "(row counts must match across views)"
            )
        views.append(x)
    labels = None
    if manifest.get("labels_file"):
        lp = root / manifest["labels_file"]
        if not lp.is_file():
            raise ValueError(f"missing labels file {lp}")
        labels = load_labels(lp)
    if manifest.get("normalize"):
        views = [l2_normalize_rows(x) for x in views]
    return MultiViewDataset(views=views, n_clusters=c, labels=labels)
