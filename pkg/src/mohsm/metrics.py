"""Evaluation metrics and their aggregated report."""

import json
import math
from dataclasses import dataclass, field

import numpy as np

LOG_2PI = math.log(2 * math.pi)


class MetricError(ValueError):
    """A metric's precondition does not hold for the given data."""

    def __init__(self, metric, message):
        super().__init__(f"{metric}: {message}")
        self.metric = metric


def _pair(y_true, y_pred, metric):
    y_true = np.asarray(y_true, dtype=float).reshape(-1)
    y_pred = np.asarray(y_pred, dtype=float).reshape(-1)
    if y_true.shape != y_pred.shape:
        raise MetricError(metric, f"length mismatch {y_true.size} vs {y_pred.size}")
    if y_true.size == 0:
        raise MetricError(metric, "empty input")
    return y_true, y_pred


def cmd(K1, K2):
    """Correlation matrix distance ``1 - tr(K1 K2) / (|K1|_F |K2|_F)``."""
    K1 = np.asarray(K1, dtype=float)
    K2 = np.asarray(K2, dtype=float)
    if K1.shape != K2.shape or K1.ndim != 2 or K1.shape[0] != K1.shape[1]:
        raise MetricError("cmd", f"need square matrices of equal shape, got {K1.shape} and {K2.shape}")
    n1 = np.linalg.norm(K1)
    n2 = np.linalg.norm(K2)
    if n1 == 0 or n2 == 0:
        raise MetricError("cmd", "zero matrix")
    # tr(K1 K2) without forming the product
    return float(1.0 - np.sum(K1 * K2.T) / (n1 * n2))


def mape(y_true, y_pred):
    y_true, y_pred = _pair(y_true, y_pred, "mape")
    if np.any(y_true == 0):
        raise MetricError("mape", "y_true contains zeros")
    return float(100.0 * np.mean(np.abs(y_true - y_pred) / np.abs(y_true)))


def rmse(y_true, y_pred):
    y_true, y_pred = _pair(y_true, y_pred, "rmse")
    return float(np.sqrt(np.mean((y_true - y_pred) ** 2)))


def mae(y_true, y_pred):
    y_true, y_pred = _pair(y_true, y_pred, "mae")
    return float(np.mean(np.abs(y_true - y_pred)))


def nmae(y_true, y_pred):
    """Mean absolute error divided by the range of ``y_true``."""
    y_true, y_pred = _pair(y_true, y_pred, "nmae")
    span = np.ptp(y_true)
    if span == 0:
        raise MetricError("nmae", "y_true is constant")
    return float(np.mean(np.abs(y_true - y_pred)) / span)


def nll(y_true, mean, variance):
    """Mean negative log predictive density under independent Gaussians."""
    y_true, mean = _pair(y_true, mean, "nll")
    variance = np.asarray(variance, dtype=float).reshape(-1)
    if np.any(variance <= 0):
        raise MetricError("nll", "predictive variance must be positive")
    return float(np.mean(0.5 * (LOG_2PI + np.log(variance) + (y_true - mean) ** 2 / variance)))


POINTWISE = {"mape": mape, "rmse": rmse, "nmae": nmae, "mae": mae}


def _json_float(v):
    return None if v is None or not math.isfinite(v) else float(v)


@dataclass
class MetricReport:
    """Flat list of ``(method, metric, channel)`` aggregates over trials."""

    records: list = field(default_factory=list)
    incomplete: bool = False

    def add(self, method, metric, channel, values):
        values = [float(v) for v in values]
        n = len(values)
        mean = float(np.mean(values)) if n else float("nan")
        std = float(np.std(values, ddof=1)) if n > 1 else (0.0 if n == 1 else float("nan"))
        self.records.append({"method": method, "metric": metric, "channel": channel,
                             "mean": mean, "std": std, "trials": n, "values": values})

    def get(self, method, metric, channel="overall"):
        for r in self.records:
            if (r["method"], r["metric"], r["channel"]) == (method, metric, channel):
                return r
        raise KeyError((method, metric, channel))

    def to_json(self):
        out = []
        for r in self.records:
            out.append({"method": r["method"], "metric": r["metric"], "channel": r["channel"],
                        "mean": _json_float(r["mean"]), "std": _json_float(r["std"]), "trials": r["trials"],
                        "values": [_json_float(v) for v in r["values"]]})
        return json.dumps({"incomplete": self.incomplete, "records": out}, indent=2)
