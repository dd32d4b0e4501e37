"""Accuracy and throughput benchmarks for the noise mechanisms.

Accuracy follows the random-interval methodology: sample uniform interval
(or rectangle) queries, answer them through a mechanism, and report the L1
distance between true and noisy counts.  The identity baseline adds
Lap(1/eps) per quantum; the hierarchical mechanism is the production
synopsis.  All noise is PRF-deterministic, so a recorded seed reproduces a
report bit for bit.
"""

from __future__ import annotations

import hashlib
import struct
import time
from dataclasses import dataclass

import numpy as np

from .engine import (
    Dataset,
    _quantum_indices,
    dataset_from_arrays,
    quantized_heatmap,
    quantized_histogram,
    raw_histogram,
)
from .errors import InvalidParameterError
from .policy import NumericQuantization, Quantization, bucket_to_quantum_ranges
from .synopsis import (
    QuantumRange,
    SecretKey,
    SynopsisParams,
    TAG_TREE_NODE,
    TreeNode,
    confidence_interval,
    encode_message,
    laplace_from_uniform,
    laplace_scale,
    prf_uniform,
    range_noise,
)

MECHANISMS = ("hierarchical", "identity")


def derive_key(seed: int, index: int | None = None) -> SecretKey:
    """Deterministic benchmark key; a distinct index yields an independent noise draw."""
    material = struct.pack(">q", seed)
    if index is not None:
        material += struct.pack(">q", index)
    return SecretKey(hashlib.sha256(b"privhist-bench" + material).digest())


def sample_intervals(
    domain_size: int,
    count: int,
    rng: np.random.Generator,
    min_length: int = 1,
) -> np.ndarray:
    """Uniform random intervals: endpoints drawn from quantum indices with lo < hi."""
    if min_length < 1 or min_length > domain_size:
        raise InvalidParameterError("min_length must lie in [1, domain_size]")
    out = np.empty((count, 2), dtype=np.int64)
    filled = 0
    while filled < count:
        lo = rng.integers(0, domain_size + 1, size=2 * count)
        hi = rng.integers(0, domain_size + 1, size=2 * count)
        keep = (hi - lo) >= min_length
        take = min(int(keep.sum()), count - filled)
        out[filled : filled + take, 0] = lo[keep][:take]
        out[filled : filled + take, 1] = hi[keep][:take]
        filled += take
    return out


def quantum_counts(dataset: Dataset, column: str, q: Quantization) -> np.ndarray:
    """Per-quantum exact counts (benchmark precomputation, not a query path)."""
    idx, in_range = _quantum_indices(dataset.column(column), q)
    return np.bincount(idx[in_range], minlength=q.domain_size).astype(np.int64)


def uniform_counts(rows: int, domain_size: int, seed: int) -> np.ndarray:
    """Quantum counts of a synthetic dataset with uniformly distributed rows."""
    rng = np.random.default_rng(seed)
    return np.bincount(
        rng.integers(0, domain_size, size=rows), minlength=domain_size
    ).astype(np.int64)


def identity_interval_noise(
    key: SecretKey, column_set_id: int, lo: int, hi: int, epsilon: float
) -> float:
    """Sum of per-quantum Lap(1/eps) draws over [lo, hi), PRF-deterministic."""
    scale = 1.0 / epsilon
    total = 0.0
    for quantum in range(lo, hi):
        message = encode_message(TAG_TREE_NODE, column_set_id, (TreeNode(quantum, 1),))
        total += laplace_from_uniform(prf_uniform(key, message), scale)
    return total


def identity_prefix_noise(
    key: SecretKey, column_set_id: int, domain_size: int, epsilon: float
) -> np.ndarray:
    """Prefix sums of the identity mechanism's unit noises; interval noise in O(1)."""
    scale = 1.0 / epsilon
    noise = np.empty(domain_size)
    for quantum in range(domain_size):
        message = encode_message(TAG_TREE_NODE, column_set_id, (TreeNode(quantum, 1),))
        noise[quantum] = laplace_from_uniform(prf_uniform(key, message), scale)
    return np.concatenate([[0.0], np.cumsum(noise)])


@dataclass
class AccuracyReport:
    """Per-query L1 errors of one mechanism on one recorded workload."""

    mechanism: str
    domain_size: int
    epsilon: float
    branching: int
    queries: int
    seed: int
    independent_keys: bool
    lengths: np.ndarray
    abs_errors: np.ndarray
    wall_seconds: float

    @property
    def mean_l1(self) -> float:
        return float(self.abs_errors.mean())

    @property
    def median_l1(self) -> float:
        return float(np.median(self.abs_errors))

    @property
    def total_l1(self) -> float:
        return float(self.abs_errors.sum())

    def mean_l1_where(self, min_length: int) -> float:
        selected = self.abs_errors[self.lengths >= min_length]
        if selected.size == 0:
            raise InvalidParameterError(f"no sampled interval has length >= {min_length}")
        return float(selected.mean())

    def to_dict(self, detail: bool = False) -> dict:
        doc = {
            "mechanism": self.mechanism,
            "domain_size": self.domain_size,
            "epsilon": self.epsilon,
            "branching": self.branching,
            "queries": self.queries,
            "seed": self.seed,
            "independent_keys": self.independent_keys,
            "mean_l1": self.mean_l1,
            "median_l1": self.median_l1,
            "total_l1": self.total_l1,
            "wall_seconds": self.wall_seconds,
        }
        if detail:
            doc["lengths"] = self.lengths.tolist()
            doc["abs_errors"] = self.abs_errors.tolist()
        return doc


def run_accuracy(
    counts: np.ndarray,
    epsilon: float,
    mechanism: str,
    queries: int = 5000,
    seed: int = 0,
    branching: int = 2,
    column_set_id: int = 0,
    independent_keys: bool = False,
    key: SecretKey | None = None,
    min_length: int = 1,
) -> AccuracyReport:
    """Random-interval L1 error of one mechanism over precomputed quantum counts.

    With ``independent_keys`` each query draws noise under its own derived
    key, making the report a Monte-Carlo estimate of the mechanism's expected
    error rather than one realization of a single table key.
    """
    if mechanism not in MECHANISMS:
        raise InvalidParameterError(f"unknown mechanism {mechanism!r}")
    counts = np.asarray(counts, dtype=np.int64)
    m = len(counts)
    rng = np.random.default_rng(seed)
    workload = sample_intervals(m, queries, rng, min_length=min_length)
    prefix = np.concatenate([[0], np.cumsum(counts)])
    params = SynopsisParams(branching, (m,), epsilon, column_set_id)
    shared_key = key if key is not None else derive_key(seed)

    identity_prefix = None
    if mechanism == "identity" and not independent_keys:
        identity_prefix = identity_prefix_noise(shared_key, column_set_id, m, epsilon)

    lengths = (workload[:, 1] - workload[:, 0]).astype(np.int64)
    abs_errors = np.empty(queries)
    started = time.perf_counter()
    for i, (lo, hi) in enumerate(workload):
        lo, hi = int(lo), int(hi)
        query_key = derive_key(seed, i) if independent_keys else shared_key
        if mechanism == "hierarchical":
            noise, _ = range_noise(query_key, params, [QuantumRange(lo, hi)])
        elif identity_prefix is not None:
            noise = float(identity_prefix[hi] - identity_prefix[lo])
        else:
            noise = identity_interval_noise(query_key, column_set_id, lo, hi, epsilon)
        abs_errors[i] = abs(noise)
    wall = time.perf_counter() - started
    return AccuracyReport(
        mechanism, m, epsilon, branching, queries, seed, independent_keys,
        lengths, abs_errors, wall,
    )


def mean_abs_error_fixed_length(
    mechanism: str,
    domain_size: int,
    epsilon: float,
    length: int,
    samples: int,
    seed: int = 0,
    branching: int = 2,
) -> float:
    """Monte-Carlo mean |error| of a mechanism at one interval length.

    Each sample uses a fresh derived key so draws are independent even though
    every one is PRF-deterministic.
    """
    if not 1 <= length <= domain_size:
        raise InvalidParameterError("length must lie in [1, domain_size]")
    rng = np.random.default_rng(seed)
    params = SynopsisParams(branching, (domain_size,), epsilon, 0)
    positions = rng.integers(0, domain_size - length + 1, size=samples)
    total = 0.0
    for i, lo in enumerate(positions):
        lo = int(lo)
        key = derive_key(seed ^ 0x5EED, i)
        if mechanism == "hierarchical":
            noise, _ = range_noise(key, params, [QuantumRange(lo, lo + length)])
        else:
            noise = identity_interval_noise(key, 0, lo, lo + length, epsilon)
        total += abs(noise)
    return total / samples


@dataclass
class PerfReport:
    """Wall-clock comparison of raw vs quantized+noisy scans."""

    rows: int
    domain_size: int
    buckets: int
    runs: int
    raw_seconds: list[float]
    private_seconds: list[float]
    kind: str = "histogram"

    @property
    def median_raw(self) -> float:
        return float(np.median(self.raw_seconds))

    @property
    def median_private(self) -> float:
        return float(np.median(self.private_seconds))

    @property
    def slowdown(self) -> float:
        return self.median_private / self.median_raw

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "rows": self.rows,
            "domain_size": self.domain_size,
            "buckets": self.buckets,
            "runs": self.runs,
            "raw_seconds": self.raw_seconds,
            "private_seconds": self.private_seconds,
            "median_raw": self.median_raw,
            "median_private": self.median_private,
            "slowdown": self.slowdown,
        }


def run_perf(
    rows: int,
    domain_size: int = 1024,
    buckets: int = 50,
    epsilon: float = 1.0,
    runs: int = 5,
    warmup: int = 3,
    seed: int = 0,
    kind: str = "histogram",
) -> PerfReport:
    """Time a non-private scan against the quantize-at-scan private path.

    Both paths share the bucketing machinery; the private path adds the
    quantization arithmetic, per-bucket synopsis noise, and confidence radii.
    ``kind`` selects the 1-D histogram or the 2-D heatmap variant.
    """
    if kind not in ("histogram", "heatmap"):
        raise InvalidParameterError(f"unknown perf benchmark kind {kind!r}")
    rng = np.random.default_rng(seed)
    span = 1000.0
    q = NumericQuantization(0.0, span, span / domain_size)
    key = derive_key(seed)

    if kind == "histogram":
        dataset = dataset_from_arrays("perf", {"x": rng.uniform(0.0, span, size=rows)})
        boundaries = np.linspace(0.0, span, buckets + 1).tolist()
        ranges = bucket_to_quantum_ranges(boundaries, q)
        params = SynopsisParams(2, (q.domain_size,), epsilon, 0)
        scale = laplace_scale(params)

        def run_raw() -> None:
            raw_histogram(dataset, "x", boundaries)

        def run_private() -> None:
            hist = quantized_histogram(dataset, "x", q, ranges)
            for rng_, true in zip(ranges, hist.counts):
                noise, n_vars = range_noise(key, params, [rng_])
                if n_vars:
                    confidence_interval(n_vars, scale, 0.99)
                _ = float(true) + noise

    else:
        side = max(2, int(round(buckets ** 0.5)))
        dataset = dataset_from_arrays(
            "perf",
            {"x": rng.uniform(0.0, span, size=rows), "y": rng.uniform(0.0, span, size=rows)},
        )
        boundaries = np.linspace(0.0, span, side + 1).tolist()
        ranges = bucket_to_quantum_ranges(boundaries, q)
        params = SynopsisParams(2, (q.domain_size, q.domain_size), epsilon, 0)
        scale = laplace_scale(params)

        edges = np.asarray(boundaries)

        def run_raw() -> None:
            # Raw 2-D bucketing: same machinery as the private path minus
            # the quantization arithmetic and noise.
            xs = dataset.columns["x"].values
            ys = dataset.columns["y"].values
            px = np.searchsorted(edges, xs, side="right") - 1
            py = np.searchsorted(edges, ys, side="right") - 1
            keep = (px >= 0) & (px < side) & (py >= 0) & (py < side)
            np.bincount(px[keep] * side + py[keep], minlength=side * side)

        def run_private() -> None:
            heat = quantized_heatmap(dataset, "x", "y", q, q, ranges, ranges)
            for i, rx in enumerate(ranges):
                for j, ry in enumerate(ranges):
                    noise, n_vars = range_noise(key, params, [rx, ry])
                    if n_vars:
                        confidence_interval(n_vars, scale, 0.99)
                    _ = float(heat.counts[i, j]) + noise

    raw_times, private_times = [], []
    for i in range(warmup + runs):
        started = time.perf_counter()
        run_raw()
        raw_elapsed = time.perf_counter() - started
        started = time.perf_counter()
        run_private()
        private_elapsed = time.perf_counter() - started
        if i >= warmup:
            raw_times.append(raw_elapsed)
            private_times.append(private_elapsed)
    return PerfReport(rows, domain_size, buckets, runs, raw_times, private_times, kind)
