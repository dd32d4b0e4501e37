"""Keyed noise synopsis: deterministic per-node Laplace noise for range counts.

Nothing here ever touches the data.  A 32-byte secret key plus public
parameters (branching factor, quantized domain sizes, privacy level) define
the noise value of every node in a hierarchical interval tree over the
domain.  Noise is recomputed on demand from a keyed PRF instead of being
stored, so repeated queries always observe the same draw and the persistent
state is just the key.

The PRF is HMAC-SHA256 over a fixed-width message encoding; the first
8 output bytes are mapped to a uniform in (0, 1) which is pushed through
the inverse Laplace CDF.
"""

from __future__ import annotations

import hashlib
import hmac
import itertools
import math
import secrets
import struct
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidParameterError

ENCODING_VERSION = 0x01

# Message tags: one namespace of noise streams per table key.
TAG_TREE_NODE = 0x01
TAG_NULL_COUNT = 0x02
TAG_DISTINCT_COUNT = 0x03

KEY_SIZE = 32
DEFAULT_CI_SAMPLES = 10_000


class SecretKey:
    """32 opaque bytes identifying a table's noise stream.

    The raw bytes must never appear in analyst-visible output; ``repr`` is
    redacted so the key cannot leak through logging or error messages.
    """

    __slots__ = ("_raw",)

    def __init__(self, raw: bytes):
        if not isinstance(raw, (bytes, bytearray)) or len(raw) != KEY_SIZE:
            raise InvalidParameterError(f"secret key must be exactly {KEY_SIZE} bytes")
        self._raw = bytes(raw)

    @classmethod
    def generate(cls) -> "SecretKey":
        return cls(secrets.token_bytes(KEY_SIZE))

    @property
    def raw(self) -> bytes:
        return self._raw

    def __eq__(self, other) -> bool:
        return isinstance(other, SecretKey) and hmac.compare_digest(self._raw, other._raw)

    def __hash__(self) -> int:
        return hash(self._raw)

    def __repr__(self) -> str:
        return "SecretKey(<redacted>)"


def read_key_file(path: str | Path) -> SecretKey:
    """Load a hex-encoded key file (root-only storage, separate from the policy)."""
    text = Path(path).read_text().strip()
    try:
        raw = bytes.fromhex(text)
    except ValueError as exc:
        raise InvalidParameterError(f"key file {path} is not valid hex") from exc
    return SecretKey(raw)


def write_key_file(path: str | Path, key: SecretKey) -> None:
    path = Path(path)
    path.write_text(key.raw.hex() + "\n")
    try:
        path.chmod(0o600)
    except OSError:
        pass


@dataclass(frozen=True, slots=True)
class TreeNode:
    """One aligned interval of a quantized domain: ``size`` quanta from ``start``.

    ``size`` must be a power of the tree's branching factor and ``start``
    must be a multiple of ``size``; alignment is checked where the branching
    factor is known (see :func:`node_noise`).
    """

    start: int
    size: int

    def __post_init__(self):
        if self.start < 0 or self.size < 1:
            raise InvalidParameterError(f"invalid tree node ({self.start}, {self.size})")

    @property
    def end(self) -> int:
        return self.start + self.size


@dataclass(frozen=True, slots=True)
class QuantumRange:
    """Half-open index range [lo, hi) over a quantized domain."""

    lo: int
    hi: int

    def __post_init__(self):
        if not (0 <= self.lo <= self.hi):
            raise InvalidParameterError(f"invalid quantum range [{self.lo}, {self.hi})")

    @property
    def length(self) -> int:
        return self.hi - self.lo


@dataclass(frozen=True)
class SynopsisParams:
    """Public parameters of one released column set.

    ``column_set_id`` is the immutable 32-bit identifier that keeps noise
    streams of different releases under the same table key disjoint.
    """

    branching: int
    domain_sizes: tuple[int, ...]
    epsilon: float
    column_set_id: int

    def __post_init__(self):
        if self.branching < 2:
            raise InvalidParameterError("branching factor must be >= 2")
        sizes = tuple(int(m) for m in self.domain_sizes)
        object.__setattr__(self, "domain_sizes", sizes)
        if not sizes or any(m < 1 for m in sizes):
            raise InvalidParameterError("domain sizes must be positive integers")
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise InvalidParameterError("epsilon must be positive and finite")
        if not (0 <= self.column_set_id < 2**32):
            raise InvalidParameterError("column_set_id must be a 32-bit unsigned integer")

    @property
    def dimensions(self) -> int:
        return len(self.domain_sizes)


@dataclass(frozen=True, slots=True)
class NoiseSample:
    """Deterministic Laplace draw attached to one tree node (per dimension)."""

    value: float
    nodes: tuple[TreeNode, ...]
    scale: float


def b_adic_decomposition(rng: QuantumRange, branching: int) -> list[TreeNode]:
    """Minimal cover of [lo, hi) by aligned power-of-``branching`` blocks.

    Nodes are returned sorted by start, pairwise disjoint, and their union
    is exactly the input range.  An empty range yields an empty list.
    """
    if branching < 2:
        raise InvalidParameterError("branching factor must be >= 2")
    nodes: list[TreeNode] = []
    pos = rng.lo
    end = rng.hi
    while pos < end:
        # Largest power of branching that fits in the remainder.
        fit = 1
        rem = end - pos
        while fit * branching <= rem:
            fit *= branching
        if pos > 0:
            # Largest power of branching dividing pos (alignment constraint).
            align = 1
            while pos % (align * branching) == 0:
                align *= branching
            size = min(align, fit)
        else:
            size = fit
        nodes.append(TreeNode(pos, size))
        pos += size
    return nodes


def tree_depth(domain_size: int, branching: int) -> int:
    """Number of tree levels above the leaves: ceil(log_b(m)), via integer math."""
    depth = 0
    reach = 1
    while reach < domain_size:
        reach *= branching
        depth += 1
    return depth


def laplace_scale(params: SynopsisParams) -> float:
    """Noise scale for one node: max(1, prod_i ceil(log_b(m_i))) / epsilon.

    The product counts how many cross-product nodes a single row can touch;
    the floor at 1 keeps degenerate single-quantum domains at Lap(1/eps).
    """
    depth_product = 1
    for m in params.domain_sizes:
        depth_product *= tree_depth(m, params.branching)
    return max(1, depth_product) / params.epsilon


def encode_message(tag: int, column_set_id: int, nodes: tuple[TreeNode, ...] | list[TreeNode]) -> bytes:
    """Fixed-width PRF message: version, tag, id, dimension count, (start, size) pairs.

    All integers big-endian; starts and sizes are 8 bytes each, so the
    encoding is injective over (tag, id, node list).
    """
    if not (0 <= column_set_id < 2**32):
        raise InvalidParameterError("column_set_id must be a 32-bit unsigned integer")
    if len(nodes) > 255:
        raise InvalidParameterError("at most 255 dimensions are encodable")
    parts = [struct.pack(">BBIB", ENCODING_VERSION, tag, column_set_id, len(nodes))]
    for node in nodes:
        parts.append(struct.pack(">QQ", node.start, node.size))
    return b"".join(parts)


def prf_uniform(key: SecretKey, message: bytes) -> float:
    """Keyed-PRF output mapped to a uniform strictly inside (0, 1).

    Top 53 bits of the first 8 HMAC-SHA256 output bytes, then
    (bits + 0.5) * 2**-53, which avoids both endpoints and therefore the
    infinite tails of the inverse CDF.
    """
    digest = hmac.new(key.raw, message, hashlib.sha256).digest()
    bits = int.from_bytes(digest[:8], "big") >> 11
    return (bits + 0.5) * 2.0**-53


def laplace_from_uniform(u: float, scale: float) -> float:
    """Inverse CDF of the centered Laplace distribution with the given scale."""
    if not (0.0 < u < 1.0):
        raise InvalidParameterError(f"uniform input must lie in (0, 1), got {u}")
    if not (scale > 0 and math.isfinite(scale)):
        raise InvalidParameterError(f"scale must be positive and finite, got {scale}")
    centered = u - 0.5
    sign = (centered > 0) - (centered < 0)
    return -scale * sign * math.log1p(-2.0 * abs(centered))


def _check_node(node: TreeNode, domain_size: int, branching: int) -> None:
    if node.end > domain_size:
        raise InvalidParameterError(
            f"node ({node.start}, {node.size}) exceeds domain of size {domain_size}"
        )
    size = node.size
    while size % branching == 0:
        size //= branching
    if size != 1:
        raise InvalidParameterError(f"node size {node.size} is not a power of {branching}")
    if node.start % node.size != 0:
        raise InvalidParameterError(f"node start {node.start} is not aligned to size {node.size}")


def node_noise(key: SecretKey, params: SynopsisParams, nodes: tuple[TreeNode, ...] | list[TreeNode]) -> NoiseSample:
    """Deterministic Laplace noise for one cross-product node of the synopsis tree."""
    nodes = tuple(nodes)
    if len(nodes) != params.dimensions:
        raise InvalidParameterError(
            f"expected {params.dimensions} nodes (one per dimension), got {len(nodes)}"
        )
    for node, m in zip(nodes, params.domain_sizes):
        _check_node(node, m, params.branching)
    scale = laplace_scale(params)
    u = prf_uniform(key, encode_message(TAG_TREE_NODE, params.column_set_id, nodes))
    return NoiseSample(laplace_from_uniform(u, scale), nodes, scale)


def range_noise(key: SecretKey, params: SynopsisParams, ranges: list[QuantumRange]) -> tuple[float, int]:
    """Total noise and noise-term count for a multidimensional range.

    The noise terms are the Cartesian product of the per-dimension
    decompositions; an empty range in any dimension contributes zero terms.
    """
    if len(ranges) != params.dimensions:
        raise InvalidParameterError(
            f"expected {params.dimensions} ranges (one per dimension), got {len(ranges)}"
        )
    per_dim: list[list[TreeNode]] = []
    for rng, m in zip(ranges, params.domain_sizes):
        if rng.hi > m:
            raise InvalidParameterError(f"range [{rng.lo}, {rng.hi}) exceeds domain of size {m}")
        per_dim.append(b_adic_decomposition(rng, params.branching))
    total = 0.0
    count = 0
    for combo in itertools.product(*per_dim):
        total += node_noise(key, params, combo).value
        count += 1
    return total, count


def noisy_range_count(
    key: SecretKey,
    params: SynopsisParams,
    ranges: list[QuantumRange],
    true_count: float,
) -> float:
    """True count plus the synopsis noise for the given range."""
    noise, _ = range_noise(key, params, ranges)
    return float(true_count) + noise


def tagged_count_noise(key: SecretKey, tag: int, release_id: int, epsilon: float) -> float:
    """Lap(1/epsilon) noise for a scalar count release (null / distinct counts)."""
    if tag not in (TAG_NULL_COUNT, TAG_DISTINCT_COUNT):
        raise InvalidParameterError(f"unknown count-release tag {tag:#x}")
    if not (epsilon > 0 and math.isfinite(epsilon)):
        raise InvalidParameterError("epsilon must be positive and finite")
    u = prf_uniform(key, encode_message(tag, release_id, ()))
    return laplace_from_uniform(u, 1.0 / epsilon)


_ci_cache: dict[tuple[int, float, float], float] = {}
_ci_lock = threading.Lock()


def _ci_seed(n_vars: int, scale: float, alpha: float, samples: int) -> int:
    packed = struct.pack(">qddq", n_vars, scale, alpha, samples)
    return int.from_bytes(hashlib.sha256(packed).digest()[:8], "big")


def confidence_interval(
    n_vars: int,
    scale: float,
    alpha: float,
    mc_samples: int = DEFAULT_CI_SAMPLES,
) -> float:
    """Symmetric radius c with P(|sum of n_vars Laplace(scale)| <= c) = alpha.

    Estimated by Monte Carlo from a deterministically seeded generator and
    cached by (n_vars, scale, alpha).  The interval is display post-processing
    of public parameters, so it does not need the keyed PRF; the seeding only
    keeps responses byte-identical across service restarts.
    """
    if n_vars < 1:
        raise InvalidParameterError("n_vars must be a positive integer")
    if not (scale > 0 and math.isfinite(scale)):
        raise InvalidParameterError("scale must be positive and finite")
    if not (0.0 < alpha < 1.0):
        raise InvalidParameterError("alpha must lie in (0, 1)")
    if mc_samples < 1:
        raise InvalidParameterError("mc_samples must be a positive integer")
    cache_key = (n_vars, float(scale), float(alpha))
    with _ci_lock:
        cached = _ci_cache.get(cache_key)
    if cached is not None:
        return cached
    rng = np.random.default_rng(_ci_seed(n_vars, scale, alpha, mc_samples))
    sums = rng.laplace(scale=scale, size=(mc_samples, n_vars)).sum(axis=1)
    radius = float(np.quantile(np.abs(sums), alpha))
    with _ci_lock:
        # Concurrent computations of the same key agree (same seed); first write wins.
        return _ci_cache.setdefault(cache_key, radius)


def clear_confidence_cache() -> None:
    with _ci_lock:
        _ci_cache.clear()


def min_epsilon_subpixel(pixels: int, ymax: float, alpha: float) -> float:
    """Smallest epsilon keeping a single Laplace draw below one vertical pixel.

    With p vertical pixels and y-axis maximum y, one pixel represents y/p
    counts.  Requiring the one-sided alpha-quantile of Lap(1/eps) to stay
    below y/p gives eps = ln(1/(2(1-alpha))) * p / y; at alpha = 0.95 the
    constant is 2.3026.  For alpha <= 0.5 the quantile is non-positive and
    any epsilon qualifies, so the demand degenerates to zero.
    """
    if pixels < 1:
        raise InvalidParameterError("pixels must be a positive integer")
    if not (ymax > 0 and math.isfinite(ymax)):
        raise InvalidParameterError("ymax must be positive and finite")
    if not (0.0 < alpha < 1.0):
        raise InvalidParameterError("alpha must lie in (0, 1)")
    return max(0.0, math.log(1.0 / (2.0 * (1.0 - alpha)))) * pixels / ymax
