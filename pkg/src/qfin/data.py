"""Close-price ingestion, percentile clipping, qubit-grid discretization, histograms.

Joint bin words pack feature 0 into the least-significant bits: with
resolutions ``[k0, k1, ...]`` the joint index is
``b0 + (b1 << k0) + (b2 << (k0 + k1)) + ...``.
"""
from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np
import requests

from .errors import ParseError, TransportError

log = logging.getLogger(__name__)

BASE_URL_ENV = "QFIN_KLINES_BASE_URL"
DEFAULT_BASE_URL = "https://api.binance.com"
KLINES_PATH = "/api/v3/klines"
MAX_KLINES_PER_REQUEST = 1000
# Public kline schema: position 4 is the close price, position 6 the close time.
CLOSE_PRICE_FIELD = 4
CLOSE_TIME_FIELD = 6
KLINE_FIELDS = 12


@dataclass(frozen=True)
class RawSeries:
    symbol: str
    close_time: np.ndarray
    close: np.ndarray

    def __len__(self) -> int:
        return len(self.close)


def parse_klines(payload) -> list[list]:
    """Validate a klines payload (decoded JSON or text); rows are returned unchanged."""
    if isinstance(payload, (str, bytes)):
        try:
            payload = json.loads(payload)
        except json.JSONDecodeError as exc:
            raise ParseError(f"klines payload is not JSON: {exc}") from exc
    if not isinstance(payload, list):
        raise ParseError(f"klines payload must be a JSON array, got {type(payload).__name__}")
    for i, row in enumerate(payload):
        if not isinstance(row, list) or len(row) < KLINE_FIELDS:
            raise ParseError(f"kline row {i}: expected an array of {KLINE_FIELDS} fields")
        try:
            close = float(row[CLOSE_PRICE_FIELD])
            close_time = row[CLOSE_TIME_FIELD]
        except (TypeError, ValueError) as exc:
            raise ParseError(f"kline row {i}: bad close price {row[CLOSE_PRICE_FIELD]!r}") from exc
        if not isinstance(close_time, int) or isinstance(close_time, bool):
            raise ParseError(f"kline row {i}: bad close time {close_time!r}")
        if not close > 0:
            raise ParseError(f"kline row {i}: close price must be positive, got {close!r}")
    return payload


def dump_klines(rows: Sequence[list]) -> str:
    """Serialize rows in the exchange's compact wire format."""
    return json.dumps(list(rows), separators=(",", ":"))


def klines_to_series(symbol: str, rows: Sequence[list]) -> RawSeries:
    by_time = {int(r[CLOSE_TIME_FIELD]): float(r[CLOSE_PRICE_FIELD]) for r in rows}
    times = np.array(sorted(by_time), dtype=np.int64)
    return RawSeries(symbol, times, np.array([by_time[t] for t in times], dtype=float))


def _get(session, url: str, params: dict, timeout: float) -> list:
    try:
        resp = session.get(url, params=params, timeout=timeout)
    except requests.RequestException as exc:
        raise TransportError(f"GET {url} failed: {exc}") from exc
    if resp.status_code != 200:
        raise TransportError(f"GET {url} returned HTTP {resp.status_code}: {resp.text[:200]}",
                             status_code=resp.status_code)
    return parse_klines(resp.text)


def fetch_klines(symbol: str, interval: str = "1d", limit: int = 500,
                 base_url: Optional[str] = None, session=None,
                 timeout: float = 10.0) -> RawSeries:
    """Fetch the most recent ``limit`` klines, paging backwards 1000 at a time."""
    if limit < 1:
        raise ValueError(f"limit must be >= 1, got {limit}")
    base = (base_url or os.environ.get(BASE_URL_ENV) or DEFAULT_BASE_URL).rstrip("/")
    session = session or requests.Session()
    rows: list[list] = []
    end_time = None
    while len(rows) < limit:
        want = min(MAX_KLINES_PER_REQUEST, limit - len(rows))
        params = {"symbol": symbol, "interval": interval, "limit": want}
        if end_time is not None:
            params["endTime"] = end_time
        page = _get(session, base + KLINES_PATH, params, timeout)
        rows = page + rows
        if len(page) < want:
            log.warning("%s: only %d of %d requested klines available", symbol, len(rows), limit)
            break
        end_time = int(page[0][0]) - 1
    return klines_to_series(symbol, rows)


def align_series(series: Sequence[RawSeries]) -> tuple[np.ndarray, np.ndarray]:
    """Inner-join series on close_time; returns (times, matrix[rows, assets])."""
    common = set(series[0].close_time.tolist())
    for s in series[1:]:
        common &= set(s.close_time.tolist())
    times = np.array(sorted(common), dtype=np.int64)
    cols = []
    for s in series:
        lookup = dict(zip(s.close_time.tolist(), s.close.tolist()))
        cols.append([lookup[t] for t in times.tolist()])
    return times, np.array(cols, dtype=float).T.reshape(len(times), len(series))


def format_csv(symbols: Sequence[str], times: np.ndarray, matrix: np.ndarray) -> str:
    lines = [",".join(["close_time", *symbols])]
    for t, row in zip(times.tolist(), matrix):
        lines.append(",".join([str(t), *(repr(float(v)) for v in row)]))
    return "\n".join(lines) + "\n"


def load_csv(path) -> dict[str, RawSeries]:
    """Read ``close_time,<SYM>,...`` into one series per asset column, in column order."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if len(header) < 2 or header[0] != "close_time":
            raise ParseError(f"{path}: line 1: header must be close_time,<SYMBOL>,...")
        times, rows = [], []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}: line {line}: expected {len(header)} fields, got {len(row)}")
            try:
                times.append(int(row[0]))
                rows.append([float(c) for c in row[1:]])
            except ValueError as exc:
                raise ParseError(f"{path}: line {line}: non-numeric cell ({exc})") from exc
    matrix = np.array(rows, dtype=float).reshape(len(rows), len(header) - 1)
    t = np.array(times, dtype=np.int64)
    order = np.argsort(t, kind="stable")
    return {sym: RawSeries(sym, t[order], matrix[order, j]) for j, sym in enumerate(header[1:])}


@dataclass(frozen=True)
class ClippedSeries:
    values: np.ndarray
    lo_quantile: float
    hi_quantile: float
    q_lo: float
    q_hi: float


def _quantile_band(values: np.ndarray, lo: float, hi: float) -> tuple[float, float]:
    if not 0 <= lo < hi <= 1:
        raise ValueError(f"need 0 <= lo < hi <= 1, got lo={lo}, hi={hi}")
    if values.size < 2:
        raise ValueError("percentile clipping needs at least 2 values")
    # Linear interpolation between order statistics at position q*(N-1).
    q_lo, q_hi = np.quantile(values, [lo, hi], method="linear")
    return float(q_lo), float(q_hi)


def percentile_clip(values, lo: float = 0.05, hi: float = 0.95) -> ClippedSeries:
    """Drop values strictly outside the [lo, hi] quantile band.

    A ClippedSeries clipped again at its own quantiles keeps its stored band,
    so re-clipping is idempotent.
    """
    if isinstance(values, ClippedSeries) and (values.lo_quantile, values.hi_quantile) == (lo, hi):
        return values
    values = np.asarray(values, dtype=float).reshape(-1)
    q_lo, q_hi = _quantile_band(values, lo, hi)
    kept = values[(values >= q_lo) & (values <= q_hi)]
    return ClippedSeries(kept, lo, hi, q_lo, q_hi)


def bin_edges(lo: float, hi: float, k: int) -> np.ndarray:
    if lo == hi:
        return np.array([lo, hi])
    return np.linspace(lo, hi, 2 ** k + 1)


def assign_bins(values: np.ndarray, edges: np.ndarray, k: int) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if edges[0] == edges[-1]:
        return np.zeros(values.shape, dtype=np.int64)
    bins = np.searchsorted(edges, values, side="right") - 1
    return np.clip(bins, 0, 2 ** k - 1).astype(np.int64)


def discretize(clipped, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Map values onto ``2**k`` uniform-width bins over [min, max].

    The last bin is closed on the right.  If every value is equal the edges
    collapse to a single pair ``[v, v]`` and everything lands in bin 0.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    values = np.asarray(getattr(clipped, "values", clipped), dtype=float).reshape(-1)
    if values.size == 0:
        raise ValueError("cannot discretize an empty series")
    edges = bin_edges(float(values.min()), float(values.max()), k)
    return assign_bins(values, edges, k), edges


def bin_centers(edges: np.ndarray) -> np.ndarray:
    if edges[0] == edges[-1]:
        return edges[:1].copy()
    return 0.5 * (edges[:-1] + edges[1:])


def pack_index(bins: Sequence[int], resolutions: Sequence[int]) -> int:
    index, offset = 0, 0
    for b, k in zip(bins, resolutions):
        index |= int(b) << offset
        offset += k
    return index


def unpack_index(index: int, resolutions: Sequence[int]) -> tuple[int, ...]:
    out = []
    for k in resolutions:
        out.append(index & ((1 << k) - 1))
        index >>= k
    return tuple(out)


def unpack_all(resolutions: Sequence[int]) -> np.ndarray:
    """Per-feature bin indices of every joint index, shape (2**sum(k), F)."""
    idx = np.arange(2 ** sum(resolutions))
    cols, offset = [], 0
    for k in resolutions:
        cols.append((idx >> offset) & ((1 << k) - 1))
        offset += k
    return np.stack(cols, axis=1)


@dataclass(frozen=True)
class DiscretizedDataset:
    resolutions: tuple[int, ...]
    bin_edges: tuple[np.ndarray, ...]
    samples: np.ndarray  # (M, F) per-feature bin indices
    features: tuple[str, ...] = ()

    @property
    def n_total_qubits(self) -> int:
        return sum(self.resolutions)

    @property
    def n_features(self) -> int:
        return len(self.resolutions)

    def __len__(self) -> int:
        return self.samples.shape[0]

    def joint_indices(self) -> np.ndarray:
        out = np.zeros(len(self), dtype=np.int64)
        offset = 0
        for f, k in enumerate(self.resolutions):
            out |= self.samples[:, f].astype(np.int64) << offset
            offset += k
        return out

    def dequantize(self, joint_index: int) -> tuple[float, ...]:
        out = []
        for b, edges in zip(unpack_index(joint_index, self.resolutions), self.bin_edges):
            centers = bin_centers(edges)
            out.append(float(centers[min(b, centers.size - 1)]))
        return tuple(out)


def build_dataset(columns, resolutions: Sequence[int], lo: float = 0.05, hi: float = 0.95,
                  features: Sequence[str] = ()) -> DiscretizedDataset:
    """Clip each feature to its quantile band (dropping rows outside any band), then bin."""
    matrix = np.asarray(columns, dtype=float)
    if matrix.ndim == 1:
        matrix = matrix[:, None]
    resolutions = tuple(int(k) for k in resolutions)
    if matrix.shape[1] != len(resolutions):
        raise ValueError(f"{matrix.shape[1]} features but {len(resolutions)} resolutions")
    keep = np.ones(matrix.shape[0], dtype=bool)
    for f in range(matrix.shape[1]):
        q_lo, q_hi = _quantile_band(matrix[:, f], lo, hi)
        keep &= (matrix[:, f] >= q_lo) & (matrix[:, f] <= q_hi)
    kept = matrix[keep]
    samples, edges = [], []
    for f, k in enumerate(resolutions):
        b, e = discretize(kept[:, f], k)
        samples.append(b)
        edges.append(e)
    return DiscretizedDataset(resolutions, tuple(edges), np.stack(samples, axis=1), tuple(features))


@dataclass(frozen=True)
class Histogram:
    probabilities: np.ndarray
    counts: np.ndarray

    @property
    def n_qubits(self) -> int:
        return int(np.log2(self.probabilities.size))

    def entropy(self) -> float:
        p = self.probabilities[self.probabilities > 0]
        return float(-np.sum(p * np.log(p)))


def histogram_from_indices(indices: Sequence[int], dim: int) -> Histogram:
    counts = np.bincount(np.asarray(indices, dtype=np.int64), minlength=dim)
    if counts.size != dim:
        raise ValueError(f"index out of range for {dim} bins")
    if counts.sum() == 0:
        raise ValueError("histogram needs at least one sample")
    return Histogram(counts / counts.sum(), counts)


def histogram_from_counts(counts: Mapping[int, int], dim: int) -> Histogram:
    arr = np.zeros(dim, dtype=np.int64)
    for i, c in counts.items():
        arr[i] += c
    return Histogram(arr / arr.sum(), arr)


def build_histogram(dataset: DiscretizedDataset) -> Histogram:
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    return histogram_from_indices(dataset.joint_indices(), 2 ** dataset.n_total_qubits)


def format_histogram_csv(hist: Histogram) -> str:
    lines = ["index,probability,count"]
    for i, (p, c) in enumerate(zip(hist.probabilities, hist.counts)):
        lines.append(f"{i},{float(p)!r},{int(c)}")
    return "\n".join(lines) + "\n"


def dataset_metadata(dataset: DiscretizedDataset) -> dict:
    return {
        "features": list(dataset.features),
        "resolutions": list(dataset.resolutions),
        "bin_edges": [e.tolist() for e in dataset.bin_edges],
        "n_samples": len(dataset),
        "n_total_qubits": dataset.n_total_qubits,
        "packing": "feature 0 in least-significant bits",
    }


def synthetic_lognormal(n_samples: int, seed: int, mean: float = 0.0, sigma: float = 0.5) -> np.ndarray:
    """Log-normal draws standing in for a close-price series."""
    return np.random.default_rng(seed).lognormal(mean, sigma, size=n_samples)


def load_features(path, features: Sequence[str]) -> np.ndarray:
    table = load_csv(Path(path))
    missing = [f for f in features if f not in table]
    if missing:
        raise ValueError(f"features not in {path}: {', '.join(missing)}")
    return np.stack([table[f].close for f in features], axis=1)
