"""Curator-authored privacy metadata for one table.

A table policy names the public quantization of each released column, the
privacy level of each released column set, optional per-column count
releases, and a one-way publish latch.  Policies serialize to JSON; the
32-byte table key is stored separately and never inside the document.
"""

from __future__ import annotations

import bisect
import hashlib
import json
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InvalidParameterError, PolicyError, PublishConflictError
from .synopsis import QuantumRange

DEFAULT_BRANCHING = 2
DEFAULT_ALPHA = 0.99
DEFAULT_EPSILON = 1.0

COLUMN_TYPES = ("real", "string")


@dataclass(frozen=True)
class NumericQuantization:
    """Uniform grid over [qmin, qmax] with step ``granularity``.

    Quantum k represents values in [qmin + k*g, qmin + (k+1)*g); values equal
    to qmax fold into the last quantum (range endpoints are inclusive, like
    SQL BETWEEN).
    """

    qmin: float
    qmax: float
    granularity: float

    def __post_init__(self):
        if not (math.isfinite(self.qmin) and math.isfinite(self.qmax)) or self.qmin >= self.qmax:
            raise InvalidParameterError("quantization requires qmin < qmax, both finite")
        if not (self.granularity > 0 and math.isfinite(self.granularity)):
            raise InvalidParameterError("quantization granularity must be positive")

    @property
    def domain_size(self) -> int:
        return max(1, math.ceil((self.qmax - self.qmin) / self.granularity))

    def representative(self, index: int) -> float:
        return self.qmin + index * self.granularity


@dataclass(frozen=True)
class StringQuantization:
    """Sorted boundary strings; quantum k covers [boundaries[k], boundaries[k+1]).

    Comparisons are byte-lexicographic over UTF-8.  ``include_upper`` keeps
    strings beyond the last boundary in the last quantum instead of treating
    them as missing.
    """

    boundaries: tuple[str, ...]
    include_upper: bool = True
    _encoded: tuple[bytes, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        bounds = tuple(self.boundaries)
        object.__setattr__(self, "boundaries", bounds)
        if not bounds:
            raise InvalidParameterError("string quantization requires at least one boundary")
        encoded = tuple(b.encode("utf-8") for b in bounds)
        if any(encoded[i] >= encoded[i + 1] for i in range(len(encoded) - 1)):
            raise InvalidParameterError("string boundaries must be strictly increasing (byte order)")
        object.__setattr__(self, "_encoded", encoded)

    @property
    def domain_size(self) -> int:
        return len(self.boundaries)

    def representative(self, index: int) -> str:
        return self.boundaries[index]


Quantization = NumericQuantization | StringQuantization


def quantize_numeric(value: float | None, q: NumericQuantization) -> int | None:
    """Quantum index of a numeric value, or None when missing / out of range."""
    if value is None:
        return None
    value = float(value)
    if math.isnan(value) or value < q.qmin or value > q.qmax:
        return None
    index = math.floor((value - q.qmin) / q.granularity)
    return min(index, q.domain_size - 1)


def quantize_string(value: str | None, q: StringQuantization) -> int | None:
    """Index of the greatest boundary <= value, or None when below the first.

    Values strictly beyond the last boundary map to the last quantum when
    ``include_upper`` is set, otherwise to None.
    """
    if value is None:
        return None
    encoded = value.encode("utf-8")
    index = bisect.bisect_right(q._encoded, encoded) - 1
    if index < 0:
        return None
    if not q.include_upper and encoded > q._encoded[-1]:
        return None
    return index


def quantize_value(value, q: Quantization) -> int | None:
    if isinstance(q, NumericQuantization):
        return quantize_numeric(value, q)
    return quantize_string(value, q)


def _first_index_at_or_above(boundary, q: Quantization) -> int:
    """Smallest quantum index whose representative is >= boundary, clamped to [0, m]."""
    m = q.domain_size
    if isinstance(q, StringQuantization):
        return bisect.bisect_left(q._encoded, str(boundary).encode("utf-8"))
    boundary = float(boundary)
    guess = math.floor((boundary - q.qmin) / q.granularity)
    k = max(0, min(guess - 1, m))
    while k < m and q.representative(k) < boundary:
        k += 1
    return k


def bucket_to_quantum_ranges(bucket_boundaries, q: Quantization) -> list[QuantumRange]:
    """Map sorted bucket boundaries to index ranges of quanta whose representative falls inside.

    Bucket [h_i, h_{i+1}) covers quanta k with h_i <= representative(k) < h_{i+1}.
    Adjacent buckets therefore partition the quanta they span; empty ranges
    are permitted.
    """
    boundaries = list(bucket_boundaries)
    if len(boundaries) < 2:
        raise InvalidParameterError("at least two bucket boundaries are required")
    if isinstance(q, NumericQuantization):
        if any(
            isinstance(b, bool) or not isinstance(b, (int, float)) or not math.isfinite(float(b))
            for b in boundaries
        ):
            raise InvalidParameterError("numeric quantization requires finite numeric boundaries")
    else:
        if any(not isinstance(b, str) for b in boundaries):
            raise InvalidParameterError("string quantization requires string boundaries")
    for left, right in zip(boundaries, boundaries[1:]):
        if not _strictly_less(left, right, q):
            raise InvalidParameterError("bucket boundaries must be strictly sorted")
    cuts = [_first_index_at_or_above(b, q) for b in boundaries]
    return [QuantumRange(lo, hi) for lo, hi in zip(cuts, cuts[1:])]


def _strictly_less(a, b, q: Quantization) -> bool:
    if isinstance(q, StringQuantization):
        return str(a).encode("utf-8") < str(b).encode("utf-8")
    return float(a) < float(b)


@dataclass(frozen=True)
class ColumnPolicy:
    """Type tag and public quantization of one released column."""

    type: str
    quantization: Quantization

    def __post_init__(self):
        if self.type not in COLUMN_TYPES:
            raise InvalidParameterError(f"unknown column type {self.type!r}")
        expected = NumericQuantization if self.type == "real" else StringQuantization
        if not isinstance(self.quantization, expected):
            raise InvalidParameterError(f"quantization kind does not match column type {self.type!r}")


@dataclass(frozen=True)
class ColumnSetPolicy:
    """Privacy level of one released set of columns."""

    columns: tuple[str, ...]
    epsilon: float
    column_set_id: int

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        if not self.columns:
            raise InvalidParameterError("a column set must name at least one column")
        if len(set(self.columns)) != len(self.columns):
            raise InvalidParameterError("a column set must not repeat columns")
        if not (0 <= self.column_set_id < 2**32):
            raise InvalidParameterError("column_set_id must be a 32-bit unsigned integer")


@dataclass(frozen=True)
class CountReleasePolicy:
    """Optional per-column privacy levels for null-count and distinct-count releases."""

    null_epsilon: float | None = None
    distinct_epsilon: float | None = None


def count_release_id(column: str) -> int:
    """Stable 32-bit identifier for a column's count-release noise stream."""
    return zlib.crc32(column.encode("utf-8")) & 0xFFFFFFFF


class TablePolicy:
    """Mutable until published, then latched read-only."""

    def __init__(
        self,
        table: str,
        branching: int = DEFAULT_BRANCHING,
        alpha: float = DEFAULT_ALPHA,
        published: bool = False,
    ):
        if not table:
            raise InvalidParameterError("table name must be nonempty")
        self.table = table
        self.branching = int(branching)
        self.alpha = float(alpha)
        self.published = bool(published)
        self.columns: dict[str, ColumnPolicy] = {}
        self.column_sets: list[ColumnSetPolicy] = []
        self.count_releases: dict[str, CountReleasePolicy] = {}

    # -- mutations (all rejected once published) ---------------------------

    def _ensure_mutable(self) -> None:
        if self.published:
            raise PublishConflictError(f"table {self.table!r} is published; policy is frozen")

    def set_branching(self, branching: int) -> None:
        self._ensure_mutable()
        if branching < 2:
            raise InvalidParameterError("branching factor must be >= 2")
        self.branching = int(branching)

    def set_alpha(self, alpha: float) -> None:
        self._ensure_mutable()
        if not (0.0 < alpha < 1.0):
            raise InvalidParameterError("alpha must lie in (0, 1)")
        self.alpha = float(alpha)

    def set_column(self, name: str, column: ColumnPolicy) -> None:
        self._ensure_mutable()
        self.columns[name] = column

    def remove_column(self, name: str) -> None:
        self._ensure_mutable()
        if any(name in cs.columns for cs in self.column_sets) or name in self.count_releases:
            raise PolicyError(f"column {name!r} is still referenced by a release")
        self.columns.pop(name, None)

    def add_column_set(self, columns, epsilon: float = DEFAULT_EPSILON, column_set_id: int | None = None) -> ColumnSetPolicy:
        self._ensure_mutable()
        if column_set_id is None:
            taken = {cs.column_set_id for cs in self.column_sets}
            column_set_id = 0
            while column_set_id in taken:
                column_set_id += 1
        cs = ColumnSetPolicy(tuple(columns), float(epsilon), column_set_id)
        if any(existing.column_set_id == cs.column_set_id for existing in self.column_sets):
            raise PolicyError(f"column_set_id {cs.column_set_id} already in use")
        if any(frozenset(existing.columns) == frozenset(cs.columns) for existing in self.column_sets):
            raise PolicyError(f"columns {cs.columns} are already released as a set")
        self.column_sets.append(cs)
        return cs

    def set_epsilon(self, column_set_id: int, epsilon: float) -> None:
        self._ensure_mutable()
        for i, cs in enumerate(self.column_sets):
            if cs.column_set_id == column_set_id:
                self.column_sets[i] = ColumnSetPolicy(cs.columns, float(epsilon), cs.column_set_id)
                return
        raise PolicyError(f"no column set with id {column_set_id}")

    def remove_column_set(self, column_set_id: int) -> None:
        self._ensure_mutable()
        before = len(self.column_sets)
        self.column_sets = [cs for cs in self.column_sets if cs.column_set_id != column_set_id]
        if len(self.column_sets) == before:
            raise PolicyError(f"no column set with id {column_set_id}")

    def set_count_release(self, column: str, release: CountReleasePolicy) -> None:
        self._ensure_mutable()
        self.count_releases[column] = release

    # -- queries ------------------------------------------------------------

    def column_set_for(self, columns) -> ColumnSetPolicy | None:
        wanted = frozenset(columns)
        for cs in self.column_sets:
            if frozenset(cs.columns) == wanted:
                return cs
        return None

    def quantization(self, column: str) -> Quantization:
        if column not in self.columns:
            raise PolicyError(f"column {column!r} is not covered by the policy")
        return self.columns[column].quantization

    def total_epsilon(self) -> float:
        """Composed privacy cost: sum over column sets plus count releases."""
        total = sum(cs.epsilon for cs in self.column_sets)
        for release in self.count_releases.values():
            if release.null_epsilon is not None:
                total += release.null_epsilon
            if release.distinct_epsilon is not None:
                total += release.distinct_epsilon
        return total

    def validation_errors(self) -> list[str]:
        problems: list[str] = []
        if self.branching < 2:
            problems.append(f"branching factor {self.branching} is below 2")
        if not (0.0 < self.alpha < 1.0):
            problems.append(f"alpha {self.alpha} outside (0, 1)")
        seen_ids: set[int] = set()
        seen_sets: set[frozenset[str]] = set()
        for cs in self.column_sets:
            label = f"column set {cs.column_set_id} {list(cs.columns)}"
            if cs.column_set_id in seen_ids:
                problems.append(f"{label}: duplicate column_set_id")
            seen_ids.add(cs.column_set_id)
            key = frozenset(cs.columns)
            if key in seen_sets:
                problems.append(f"{label}: duplicate column list")
            seen_sets.add(key)
            if not (cs.epsilon > 0 and math.isfinite(cs.epsilon)):
                problems.append(f"{label}: epsilon must be positive")
            for column in cs.columns:
                if column not in self.columns:
                    problems.append(f"{label}: column {column!r} has no quantization")
        release_ids: dict[int, str] = {}
        for column, release in self.count_releases.items():
            if column not in self.columns:
                problems.append(f"count release for unquantized column {column!r}")
            for kind, value in (("null", release.null_epsilon), ("distinct", release.distinct_epsilon)):
                if value is not None and not (value > 0 and math.isfinite(value)):
                    problems.append(f"count release {column!r}: {kind} epsilon must be positive")
            if release.null_epsilon is None and release.distinct_epsilon is None:
                problems.append(f"count release {column!r} specifies no epsilon")
            rid = count_release_id(column)
            if rid in release_ids:
                problems.append(
                    f"count release id collision between {release_ids[rid]!r} and {column!r}"
                )
            release_ids[rid] = column
        return problems

    def validate(self) -> None:
        problems = self.validation_errors()
        if problems:
            raise PolicyError("; ".join(problems))

    def publish(self) -> "TablePolicy":
        """Validate and latch; repeated publishes are idempotent."""
        if self.published:
            return self
        self.validate()
        self.published = True
        return self

    # -- serialization -------------------------------------------------------

    def to_document(self) -> dict:
        columns = {}
        for name in sorted(self.columns):
            cp = self.columns[name]
            if isinstance(cp.quantization, NumericQuantization):
                quant = {
                    "kind": "numeric",
                    "qmin": cp.quantization.qmin,
                    "qmax": cp.quantization.qmax,
                    "granularity": cp.quantization.granularity,
                }
            else:
                quant = {
                    "kind": "string",
                    "boundaries": list(cp.quantization.boundaries),
                    "include_upper": cp.quantization.include_upper,
                }
            columns[name] = {"type": cp.type, "quantization": quant}
        doc = {
            "table": self.table,
            "branching": self.branching,
            "alpha": self.alpha,
            "published": self.published,
            "columns": columns,
            "column_sets": [
                {"id": cs.column_set_id, "columns": list(cs.columns), "epsilon": cs.epsilon}
                for cs in self.column_sets
            ],
            "count_releases": {
                name: {
                    k: v
                    for k, v in (
                        ("null_epsilon", release.null_epsilon),
                        ("distinct_epsilon", release.distinct_epsilon),
                    )
                    if v is not None
                }
                for name, release in sorted(self.count_releases.items())
            },
        }
        return doc

    @classmethod
    def from_document(cls, doc: dict) -> "TablePolicy":
        try:
            policy = cls(
                table=doc["table"],
                branching=doc.get("branching", DEFAULT_BRANCHING),
                alpha=doc.get("alpha", DEFAULT_ALPHA),
                published=doc.get("published", False),
            )
            for name, entry in doc.get("columns", {}).items():
                quant = entry["quantization"]
                if quant["kind"] == "numeric":
                    q: Quantization = NumericQuantization(
                        float(quant["qmin"]), float(quant["qmax"]), float(quant["granularity"])
                    )
                elif quant["kind"] == "string":
                    q = StringQuantization(
                        tuple(quant["boundaries"]), bool(quant.get("include_upper", True))
                    )
                else:
                    raise InvalidParameterError(f"unknown quantization kind {quant['kind']!r}")
                policy.columns[name] = ColumnPolicy(entry["type"], q)
            for entry in doc.get("column_sets", []):
                policy.column_sets.append(
                    ColumnSetPolicy(tuple(entry["columns"]), float(entry["epsilon"]), int(entry["id"]))
                )
            for name, entry in doc.get("count_releases", {}).items():
                policy.count_releases[name] = CountReleasePolicy(
                    null_epsilon=entry.get("null_epsilon"),
                    distinct_epsilon=entry.get("distinct_epsilon"),
                )
        except (KeyError, TypeError, ValueError) as exc:
            raise PolicyError(f"malformed policy document: {exc}") from exc
        return policy

    def to_json(self) -> str:
        return json.dumps(self.to_document(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "TablePolicy":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise PolicyError(f"policy document is not valid JSON: {exc}") from exc
        return cls.from_document(doc)

    def snapshot_id(self) -> str:
        """Hash of the policy document; lets clients detect mid-session edits."""
        canonical = json.dumps(self.to_document(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def load_policy(path: str | Path) -> TablePolicy:
    return TablePolicy.from_json(Path(path).read_text())


def save_policy(path: str | Path, policy: TablePolicy) -> None:
    Path(path).write_text(policy.to_json())
