"""
CSV datasets, experiment configuration and the optional series fetcher.

Two CSV layouts are understood, both UTF-8 and comma-separated with a header
row:

* long form  ``channel,x,y`` (one observation per row; ``x`` may also be
  split into ``x0,x1,...`` for multi-dimensional inputs);
* wide form  ``x,<name1>,<name2>,...`` where an empty cell marks a missing
  observation.
"""

import csv
import hashlib
import json
import logging
import os
import time
import urllib.parse
import urllib.request
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .gp import Dataset
from .kernels import KERNELS
from .synth import ConfigError

log = logging.getLogger(__name__)

CACHE_ENV = "MOHSM_CACHE"
SCHEMAS = ("long", "wide", "auto")


class DataFormatError(ValueError):
    """Malformed data file; ``line`` is 1-based when known."""

    def __init__(self, path, line, message):
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {message}")
        self.path = str(path)
        self.line = line


class FetchError(OSError):
    def __init__(self, url, attempts, cause):
        super().__init__(f"fetching {url} failed after {attempts} attempt(s): {cause}")
        self.url = url
        self.attempts = attempts


def _float(text, path, line, what):
    try:
        v = float(text)
    except ValueError:
        raise DataFormatError(path, line, f"cannot parse {what} {text!r} as a number") from None
    if not np.isfinite(v):
        raise DataFormatError(path, line, f"non-finite {what} {text!r}")
    return v


def _detect(header):
    low = [h.strip().lower() for h in header]
    if low[:1] == ["channel"] and "y" in low:
        return "long"
    return "wide"


def load_csv(path, schema="auto", channels=None):
    """Read a long- or wide-form CSV into a ``Dataset``.

    ``channels`` optionally fixes the channel names (and their order); any
    channel found in the file but not listed is an error.
    """
    path = Path(path)
    if schema not in SCHEMAS:
        raise ValueError(f"schema must be one of {SCHEMAS}, got {schema!r}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataFormatError(path, None, "empty file (a header row is required)")
    header = [h.strip() for h in rows[0]]
    if schema == "auto":
        schema = _detect(header)
    body = [(k + 2, r) for k, r in enumerate(rows[1:]) if any(c.strip() for c in r)]
    if schema == "long":
        return _load_long(path, header, body, channels)
    return _load_wide(path, header, body, channels)


def _load_long(path, header, body, channels):
    low = [h.lower() for h in header]
    if "channel" not in low or "y" not in low:
        raise DataFormatError(path, 1, "long form needs 'channel' and 'y' columns")
    ic, iy = low.index("channel"), low.index("y")
    ix = [k for k, h in enumerate(low) if h == "x" or (h.startswith("x") and h[1:].isdigit())]
    if not ix:
        raise DataFormatError(path, 1, "long form needs an 'x' column")
    names = list(channels) if channels is not None else []
    cid, xs, ys = [], [], []
    for line, r in body:
        if len(r) != len(header):
            raise DataFormatError(path, line, f"expected {len(header)} fields, found {len(r)}")
        name = r[ic].strip()
        if name not in names:
            if channels is not None:
                raise DataFormatError(path, line, f"unknown channel {name!r}")
            names.append(name)
        cid.append(names.index(name))
        xs.append([_float(r[k], path, line, "x") for k in ix])
        ys.append(_float(r[iy], path, line, "y"))
    x = np.array(xs, dtype=float).reshape(len(xs), len(ix))
    return Dataset(np.array(cid, dtype=int), x, np.array(ys, dtype=float), names)


def _load_wide(path, header, body, channels):
    if len(header) < 2:
        raise DataFormatError(path, 1, "wide form needs an x column and at least one channel")
    names = header[1:]
    if len(set(names)) != len(names):
        raise DataFormatError(path, 1, "duplicate channel names in header")
    if channels is not None:
        unknown = [n for n in names if n not in channels]
        if unknown:
            raise DataFormatError(path, 1, f"unknown channel {unknown[0]!r}")
        names_out = list(channels)
    else:
        names_out = names
    cid, xs, ys = [], [], []
    for line, r in body:
        if len(r) != len(header):
            raise DataFormatError(path, line, f"expected {len(header)} fields, found {len(r)}")
        xv = _float(r[0], path, line, "x")
        for k, cell in enumerate(r[1:]):
            if not cell.strip():
                continue
            cid.append(names_out.index(names[k]))
            xs.append(xv)
            ys.append(_float(cell, path, line, names[k]))
    return Dataset(np.array(cid, dtype=int), np.array(xs, dtype=float)[:, None], np.array(ys, dtype=float),
                   names_out)


def save_csv(data, path):
    """Write ``data`` in long form; values round-trip exactly through ``repr``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = data.input_dim
    xcols = ["x"] if n == 1 else [f"x{d}" for d in range(n)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["channel", *xcols, "y"])
        for c, x, y in zip(data.channel, data.x, data.y):
            w.writerow([data.channel_names[c], *(repr(float(v)) for v in x), repr(float(y))])
    return path


def apply_masks(data, masks):
    """Split off points inside per-channel closed intervals.

    ``masks`` maps a channel (name or id) to a list of ``(lo, hi)`` intervals
    on the first input dimension.  Returns ``(train_pool, heldout)``.
    """
    inside = np.zeros(len(data), dtype=bool)
    for key, intervals in (masks or {}).items():
        c = data.channel_names.index(key) if isinstance(key, str) else int(key)
        sel = data.channel == c
        for lo, hi in intervals:
            if lo > hi:
                raise ValueError(f"mask interval ({lo}, {hi}) is not ordered")
            inside |= sel & (data.x[:, 0] >= lo) & (data.x[:, 0] <= hi)
    return data.subset(np.flatnonzero(~inside)), data.subset(np.flatnonzero(inside))


def random_split(data, fraction, seed):
    """Random ``(train, test)`` split keeping ``round(fraction * N)`` for training."""
    if fraction >= 1.0:
        return data, data.subset(np.array([], dtype=int))
    perm = np.random.default_rng(seed).permutation(len(data))
    k = int(round(fraction * len(data)))
    return data.subset(np.sort(perm[:k])), data.subset(np.sort(perm[k:]))


@dataclass
class OptimizerConfig:
    algorithm: str = "adam"
    max_iters: int = 500
    lr: float = 0.02
    grad_tol: float = 1e-5


@dataclass
class ExperimentConfig:
    """One JSON document describing a training run (see the README)."""

    data: str
    schema: str = "auto"
    channels: list = None
    method: str = "mohsm"
    P: int = 2
    Q: int = 2
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    masks: dict = field(default_factory=dict)
    train_fraction: float = 1.0
    seed: int = 0
    out: str = "out"
    base_dir: str = field(default=".", repr=False)

    def validate(self):
        if self.method not in KERNELS:
            raise ConfigError("method", f"expected one of {KERNELS}, got {self.method!r}")
        if self.schema not in SCHEMAS:
            raise ConfigError("schema", f"expected one of {SCHEMAS}, got {self.schema!r}")
        if int(self.P) < 1 or int(self.Q) < 1:
            raise ConfigError("P" if int(self.P) < 1 else "Q", "must be at least 1")
        if not 0 < self.train_fraction <= 1:
            raise ConfigError("train_fraction", "must lie in (0, 1]")
        if self.optimizer.algorithm not in ("adam", "lbfgs", "l-bfgs"):
            raise ConfigError("optimizer.algorithm", f"unknown algorithm {self.optimizer.algorithm!r}")
        if int(self.optimizer.max_iters) < 0:
            raise ConfigError("optimizer.max_iters", "must be nonnegative")
        for ch, intervals in self.masks.items():
            for iv in intervals:
                if len(iv) != 2 or iv[0] > iv[1]:
                    raise ConfigError(f"masks.{ch}", f"interval {iv} must be [lo, hi] with lo <= hi")
        if self.channels is not None:
            missing = [c for c in self.masks if c not in self.channels]
            if missing:
                raise ConfigError(f"masks.{missing[0]}", "channel not listed in 'channels'")
        return self

    @property
    def data_path(self):
        p = Path(self.data)
        return p if p.is_absolute() else Path(self.base_dir) / p

    @classmethod
    def from_dict(cls, d, base_dir="."):
        d = dict(d)
        known = set(cls.__dataclass_fields__) - {"base_dir"}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(unknown[0], "unknown field")
        if "data" not in d:
            raise ConfigError("data", "missing required field")
        opt = d.pop("optimizer", {}) or {}
        bad = sorted(set(opt) - set(OptimizerConfig.__dataclass_fields__))
        if bad:
            raise ConfigError(f"optimizer.{bad[0]}", "unknown field")
        try:
            cfg = cls(**d, optimizer=OptimizerConfig(**opt), base_dir=str(base_dir))
        except TypeError as err:
            raise ConfigError("config", str(err)) from err
        return cfg.validate()

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            d = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as err:
            raise ConfigError("config", f"{path}: invalid JSON ({err})") from err
        if not isinstance(d, dict):
            raise ConfigError("config", f"{path}: top level must be an object")
        return cls.from_dict(d, base_dir=path.parent)

    def to_dict(self):
        d = asdict(self)
        d.pop("base_dir")
        return d


def _default_transport(url, timeout=30.0):
    with urllib.request.urlopen(url, timeout=timeout) as resp:
        return resp.read()


def fetch_series(url, cache_dir=None, transport=None, retries=3, backoff=1.0):
    """Download ``url`` once and return the cached file path.

    The cache directory defaults to ``$MOHSM_CACHE`` or ``~/.cache/mohsm``.
    ``transport(url) -> bytes`` can be injected for testing.
    """
    cache_dir = Path(cache_dir or os.environ.get(CACHE_ENV) or Path.home() / ".cache" / "mohsm")
    name = Path(urllib.parse.urlparse(url).path).name or "series"
    target = cache_dir / f"{hashlib.sha256(url.encode()).hexdigest()[:12]}-{name}"
    if target.exists():
        log.debug("cache hit for %s", url)
        return target
    transport = transport or _default_transport
    last = None
    for attempt in range(1, retries + 1):
        try:
            payload = transport(url)
            break
        except OSError as err:
            last = err
            log.warning("fetch %s attempt %d/%d failed: %s", url, attempt, retries, err)
            if attempt < retries:
                time.sleep(backoff * attempt)
    else:
        raise FetchError(url, retries, last)
    cache_dir.mkdir(parents=True, exist_ok=True)
    tmp = target.with_suffix(target.suffix + ".part")
    tmp.write_bytes(payload)
    tmp.replace(target)
    return target
