"""Gaussian radial basis function inverse model: readings -> forces."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ..errors import DomainError, SolverError

MODEL_FORMAT = "hallforce-grbf"
MODEL_VERSION = 1


@dataclass(frozen=True)
class GRBFConfig:
    centers: int = 200
    ridge: float = 1e-8
    input_axes: tuple[int, ...] = (0, 1, 2)


@dataclass(eq=False)
class GRBFModel:
    centers: np.ndarray  # normalized reading space, (k, d)
    width: float
    weights: np.ndarray  # (k + 1, 2), last row is the bias
    ridge: float
    in_mean: np.ndarray
    in_scale: np.ndarray
    out_mean: np.ndarray
    out_scale: np.ndarray
    input_axes: tuple[int, ...] = (0, 1, 2)
    train_dataset: str = ""
    train_split: str = ""

    def __post_init__(self):
        if not self.width > 0:
            raise DomainError("kernel width must be positive")
        if self.weights.shape != (len(self.centers) + 1, 2):
            raise DomainError("weights must have shape (centers + 1, outputs)")

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "centers": self.centers.tolist(),
            "width": self.width,
            "weights": self.weights.tolist(),
            "ridge": self.ridge,
            "in_mean": self.in_mean.tolist(),
            "in_scale": self.in_scale.tolist(),
            "out_mean": self.out_mean.tolist(),
            "out_scale": self.out_scale.tolist(),
            "input_axes": list(self.input_axes),
            "train_dataset": self.train_dataset,
            "train_split": self.train_split,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GRBFModel":
        if d.get("format") != MODEL_FORMAT:
            raise DomainError("not a GRBF model file")
        if d.get("version") != MODEL_VERSION:
            raise DomainError(f"unsupported GRBF model version {d.get('version')!r}")
        arr = lambda k: np.asarray(d[k], dtype=float)  # noqa: E731
        return cls(
            arr("centers"),
            float(d["width"]),
            arr("weights"),
            float(d["ridge"]),
            arr("in_mean"),
            arr("in_scale"),
            arr("out_mean"),
            arr("out_scale"),
            tuple(int(a) for a in d["input_axes"]),
            d.get("train_dataset", ""),
            d.get("train_split", ""),
        )


def _scale(x: np.ndarray) -> np.ndarray:
    s = x.std(axis=0)
    return np.where(s > 0, s, 1.0)


def farthest_point_sampling(points: np.ndarray, k: int) -> np.ndarray:
    """Indices of ``k`` points, greedily maximizing the distance to those
    already chosen. Starts from the point nearest the centroid."""
    start = int(np.argmin(np.sum((points - points.mean(axis=0)) ** 2, axis=1)))
    chosen = [start]
    d2 = np.sum((points - points[start]) ** 2, axis=1)
    for _ in range(k - 1):
        nxt = int(np.argmax(d2))
        chosen.append(nxt)
        d2 = np.minimum(d2, np.sum((points - points[nxt]) ** 2, axis=1))
    return np.array(chosen)


def _kernel(x: np.ndarray, centers: np.ndarray, width: float) -> np.ndarray:
    d2 = (x * x).sum(1)[:, None] - 2 * x @ centers.T + (centers * centers).sum(1)[None, :]
    return np.exp(-np.maximum(d2, 0.0) / (2 * width * width))


def _design(x, centers, width):
    phi = _kernel(x, centers, width)
    return np.hstack([phi, np.ones((len(x), 1))])


def grbf_fit_arrays(
    readings: np.ndarray,
    forces: np.ndarray,
    centers: int = 200,
    ridge: float = 1e-8,
    input_axes=(0, 1, 2),
    center_points: np.ndarray | None = None,
) -> GRBFModel:
    """Fit on arrays of readings (gauss) and forces (newtons).

    ``center_points`` overrides farthest-point sampling and is given in
    gauss over the selected axes.
    """
    x = np.asarray(readings, dtype=float)[:, list(input_axes)]
    y = np.asarray(forces, dtype=float)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DomainError("training data must be finite")
    if ridge < 0:
        raise DomainError("ridge must be non-negative")
    in_mean, in_scale = x.mean(axis=0), _scale(x)
    out_mean, out_scale = y.mean(axis=0), _scale(y)
    xn = (x - in_mean) / in_scale
    yn = (y - out_mean) / out_scale
    if center_points is not None:
        c = (np.asarray(center_points, dtype=float) - in_mean) / in_scale
    else:
        distinct = np.unique(xn, axis=0)
        if len(distinct) < centers:
            raise DomainError(f"only {len(distinct)} distinct readings for {centers} centers")
        c = np.ascontiguousarray(distinct[farthest_point_sampling(distinct, centers)])
    if len(c) >= 2:
        i, j = np.triu_indices(len(c), 1)
        width = float(np.median(np.linalg.norm(c[i] - c[j], axis=1)))
    else:
        width = 1.0
    if not width > 0:
        raise DomainError("centers are not distinct")
    phi = _design(xn, c, width)
    gram = phi.T @ phi
    reg = np.eye(len(gram)) * ridge
    reg[-1, -1] = 0.0  # bias is not shrunk
    try:
        w = scipy.linalg.solve(gram + reg, phi.T @ yn, assume_a="sym")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise SolverError(f"singular normal equations ({exc}); use ridge > 0") from None
    rcond = 1.0 / np.linalg.cond(gram + reg)
    if not np.all(np.isfinite(w)) or (ridge == 0 and rcond < np.finfo(float).eps):
        raise SolverError("singular normal equations; use ridge > 0", residual=rcond)
    return GRBFModel(c, width, np.ascontiguousarray(w), ridge, in_mean, in_scale, out_mean, out_scale, tuple(input_axes))


def grbf_fit(dataset, centers: int = 200, ridge: float = 1e-8, split: str | None = "train", input_axes=(0, 1, 2)):
    """Fit on one split of a :class:`Dataset` (all rows when ``split`` is None)."""
    ds = dataset if split is None else dataset.subset(split)
    if len(ds) == 0:
        raise DomainError(f"dataset has no {split!r} rows")
    model = grbf_fit_arrays(ds.readings, ds.force, centers, ridge, input_axes)
    model.train_dataset = dataset.id
    model.train_split = split or "all"
    return model


def grbf_predict(model: GRBFModel, reading) -> np.ndarray:
    """Forces for one reading ``(3,)`` or a batch ``(n, 3)`` in gauss."""
    r = np.asarray(reading, dtype=float)
    single = r.ndim == 1
    x = np.atleast_2d(r)[:, list(model.input_axes)]
    if not np.all(np.isfinite(x)):
        raise DomainError("reading must be finite")
    xn = (x - model.in_mean) / model.in_scale
    y = _design(xn, model.centers, model.width) @ model.weights
    y = y * model.out_scale + model.out_mean
    return y[0] if single else y
