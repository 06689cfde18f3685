"""Error metrics for inverse models against held-out ground truth."""
from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass

import numpy as np

from ..errors import DomainError
from .dataset import Dataset
from .grbf import GRBFModel, grbf_predict
from .gru import GRUModel, gru_forward

METRIC_COLUMNS = (
    "model",
    "fx_rmse_n",
    "fz_rmse_n",
    "fx_mean_error_n",
    "fz_mean_error_n",
    "fx_variance_n2",
    "fz_variance_n2",
    "inference_us",
)


@dataclass(frozen=True)
class EvalMetrics:
    rmse: tuple[float, float]
    mean_error: tuple[float, float]
    variance: tuple[float, float]
    inference_us: float
    samples: int

    def row(self, name: str, timing: bool = True) -> list[str]:
        vals = [*self.rmse, *self.mean_error, *self.variance]
        t = repr(self.inference_us) if timing else ""
        return [name] + [repr(float(v)) for v in vals] + [t]


@dataclass(frozen=True)
class Prediction:
    force: np.ndarray  # (n, 2)
    sigma: np.ndarray | None
    seconds: float


def error_metrics(pred: np.ndarray, truth: np.ndarray, inference_us: float = 0.0) -> EvalMetrics:
    """Per-axis RMSE, mean error and population variance of the error."""
    err = np.asarray(pred, dtype=float) - np.asarray(truth, dtype=float)
    if err.size == 0:
        raise DomainError("no samples to evaluate")
    mean = err.mean(axis=0)
    var = err.var(axis=0)
    rmse = np.sqrt(np.mean(err * err, axis=0))
    return EvalMetrics(tuple(rmse.tolist()), tuple(mean.tolist()), tuple(var.tolist()), inference_us, len(err))


def predict(model, readings: np.ndarray) -> Prediction:
    """Run a model over a full reading sequence (gauss)."""
    t0 = time.perf_counter()
    if isinstance(model, GRBFModel):
        f, s = grbf_predict(model, readings), None
    elif isinstance(model, GRUModel):
        f, s, _ = gru_forward(model, readings)
    else:
        raise DomainError(f"unsupported model type {type(model).__name__}")
    return Prediction(f, s, time.perf_counter() - t0)


def check_split(model, dataset: Dataset, split: str) -> None:
    """Refuse to score a model on rows it was trained on."""
    trained_on = getattr(model, "train_dataset", "")
    trained_split = getattr(model, "train_split", "")
    if trained_on and trained_on == dataset.id and trained_split in ("all", split):
        raise DomainError(f"model was trained on split {trained_split!r} of this dataset; evaluation split overlaps")


def evaluate(model, dataset: Dataset, split: str = "test", ground_truth_only: bool = True):
    """Score ``model`` on one split.

    The model runs over every reading of the split in order; errors are taken
    at the ground-truth sample instants when ``ground_truth_only`` is set, so
    no interpolation error enters the metrics. Returns ``(metrics, errors)``.
    """
    check_split(model, dataset, split)
    ds = dataset.subset(split)
    if len(ds) == 0:
        raise DomainError(f"dataset has no {split!r} rows")
    pred = predict(model, ds.readings)
    mask = ds.gt_marker if ground_truth_only else np.ones(len(ds), dtype=bool)
    if not np.any(mask):
        raise DomainError("no ground-truth samples in the evaluation split")
    err = pred.force[mask] - ds.force[mask]
    m = error_metrics(pred.force[mask], ds.force[mask], pred.seconds / len(ds) * 1e6)
    return m, err


def histogram(errors: np.ndarray, bins: int = 41, limit: float | None = None):
    """Normalized error histograms per axis on shared symmetric bins.

    Returns ``(edges, densities)``; each density column integrates to 1.
    """
    e = np.asarray(errors, dtype=float)
    if e.size == 0:
        raise DomainError("no errors to bin")
    if limit is None:
        limit = float(np.max(np.abs(e))) or 1.0
    edges = np.linspace(-limit, limit, bins + 1)
    dens = np.stack([np.histogram(e[:, k], bins=edges, density=True)[0] for k in range(e.shape[1])], axis=1)
    return edges, dens


def histogram_csv_text(named_errors: dict, bins: int = 41) -> str:
    """One row per bin: edges then a normalized density per model and axis."""
    names = list(named_errors)
    limit = max(float(np.max(np.abs(named_errors[n]))) for n in names) or 1.0
    cols = ["bin_lo_n", "bin_hi_n"]
    dens = []
    for n in names:
        edges, d = histogram(named_errors[n], bins, limit)
        dens.append(d)
        cols += [f"{n}_fx_density", f"{n}_fz_density"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for i in range(bins):
        row = [repr(float(edges[i])), repr(float(edges[i + 1]))]
        for d in dens:
            row += [repr(float(d[i, 0])), repr(float(d[i, 1]))]
        w.writerow(row)
    return buf.getvalue()


def metrics_csv_text(named: dict, timing: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_COLUMNS)
    for name, m in named.items():
        w.writerow(m.row(name, timing))
    return buf.getvalue()


def disturbance_response(model: GRUModel, dataset: Dataset, split: str = "test") -> tuple[float, float]:
    """Mean predicted sigma (averaged over axes) inside and outside the
    disturbed intervals of ``split``."""
    check_split(model, dataset, split)
    ds = dataset.subset(split)
    _, sigma, _ = gru_forward(model, ds.readings)
    s = sigma.mean(axis=1)
    d = ds.disturbed
    if not np.any(d) or np.all(d):
        raise DomainError("split needs both disturbed and nominal samples")
    return float(s[d].mean()), float(s[~d].mean())
