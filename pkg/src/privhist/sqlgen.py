"""SQL text generation for range stats, quantized views, and histogram queries.

These generators let an unmodified relational database serve as the exact
count backend: the emitted statements use only portable aggregate syntax
plus nested IF expressions for string bucketing.  Generation is pure text
rewriting over curator-configured identifiers; values are embedded as
literals because every parameter is public policy metadata.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import InvalidParameterError

_IDENTIFIER_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")

# Words that pass the identifier regex but collide with SQL syntax.
_RESERVED = frozenset(
    """
    select from where group by order as and or not between if case when then
    else end cast floor count min max sum avg distinct create view table
    binary unsigned integer insert update delete join on union all limit
    """.split()
)


@dataclass(frozen=True)
class SqlDialect:
    """Rendering knobs for one SQL flavor; the shipped default is MySQL-style."""

    name: str = "mysql"
    if_function: str = "IF"
    unsigned_cast: str = "UNSIGNED"
    identifier_quote: str = "`"
    byte_compare_prefix: str = "BINARY "
    # MySQL requires an alias on derived tables; the reference listings omit
    # it, so golden tests declare this suffix as a known textual deviation.
    derived_table_alias: str = "buckets"


REFERENCE_DIALECT = SqlDialect()


@dataclass(frozen=True)
class SqlQueryPlan:
    """Statement text plus the shape of the expected result and audit parameters."""

    statement: str
    result_columns: tuple[tuple[str, str], ...]
    parameters: dict = field(default_factory=dict)


def render_identifier(name: str, dialect: SqlDialect = REFERENCE_DIALECT) -> str:
    """Validate an identifier; quote reserved words, reject anything else unusual.

    There is deliberately no general escaping engine: these queries target
    curator-configured schemas, not untrusted input.
    """
    if not _IDENTIFIER_RE.match(name or ""):
        raise InvalidParameterError(f"invalid SQL identifier {name!r}")
    if name.lower() in _RESERVED:
        q = dialect.identifier_quote
        return f"{q}{name}{q}"
    return name


def _string_literal(value: str) -> str:
    return "'" + value.replace("'", "''") + "'"


def _number_literal(value: float) -> str:
    value = float(value)
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def gen_range_query(table: str, column: str, dialect: SqlDialect = REFERENCE_DIALECT) -> SqlQueryPlan:
    """Exact min/max plus total and non-null row counts of one column."""
    t = render_identifier(table, dialect)
    c = render_identifier(column, dialect)
    statement = f"SELECT min({c}), max({c}), count(*), count({c})\nFROM {t}"
    return SqlQueryPlan(
        statement,
        (("min", "real"), ("max", "real"), ("total_rows", "int"), ("non_null_rows", "int")),
        {"table": table, "column": column},
    )


def gen_histogram_query(
    source: str,
    column: str,
    lower: float,
    upper: float,
    buckets: int,
    quantized_view: bool = False,
    dialect: SqlDialect = REFERENCE_DIALECT,
) -> SqlQueryPlan:
    """Equal-width bucket histogram via CAST(FLOOR((C - l) * scale)).

    ``scale`` is computed statically as buckets / (upper - lower).  With
    ``quantized_view`` the query reads from the quantized view and carries
    the explanatory comments of the private-histogram pattern.
    """
    if not lower < upper:
        raise InvalidParameterError("histogram range requires lower < upper")
    if buckets < 1:
        raise InvalidParameterError("bucket count must be >= 1")
    s = render_identifier(source, dialect)
    c = render_identifier(column, dialect)
    scale = buckets / (upper - lower)
    lo, hi, sc = _number_literal(lower), _number_literal(upper), _number_literal(scale)
    alias = f" AS {dialect.derived_table_alias}" if dialect.derived_table_alias else ""
    from_line = f"  FROM {s} -- quantized view" if quantized_view else f"  FROM {s}"
    head = "-- compute histogram\n" if quantized_view else ""
    inner_comment = "  -- compute buckets\n" if quantized_view else ""
    statement = (
        f"{head}"
        f"SELECT bucket, COUNT(bucket) FROM (\n"
        f"{inner_comment}"
        f"  SELECT CAST(FLOOR(({c} - {lo}) * {sc})\n"
        f"     AS {dialect.unsigned_cast}) AS bucket\n"
        f"{from_line}\n"
        f"  WHERE {c} between {lo} AND {hi}){alias}\n"
        f"GROUP BY bucket"
    )
    return SqlQueryPlan(
        statement,
        (("bucket", "int"), ("count", "int")),
        {"source": source, "column": column, "l": lower, "r": upper, "scale": scale, "buckets": buckets},
    )


def gen_quantized_view_numeric(
    table: str,
    column: str,
    qmin: float,
    qmax: float,
    granularity: float,
    view_name: str = "QV",
    materialized: bool = False,
    dialect: SqlDialect = REFERENCE_DIALECT,
) -> SqlQueryPlan:
    """View mapping a numeric column onto its quantization grid representatives."""
    if not qmin < qmax:
        raise InvalidParameterError("quantization requires qmin < qmax")
    if not granularity > 0:
        raise InvalidParameterError("quantization granularity must be positive")
    t = render_identifier(table, dialect)
    c = render_identifier(column, dialect)
    v = render_identifier(view_name, dialect)
    lo, hi, g = _number_literal(qmin), _number_literal(qmax), _number_literal(granularity)
    kind = "table" if materialized else "view"
    statement = (
        f"CREATE {kind} {v} as\n"
        f"  (SELECT {lo} + FLOOR(({c}-{lo})/{g})*{g} AS {c}\n"
        f"   FROM {t} WHERE {c} between {lo} AND {hi})"
    )
    return SqlQueryPlan(
        statement,
        (),
        {"table": table, "column": column, "qmin": qmin, "qmax": qmax, "g": granularity,
         "view": view_name, "materialized": materialized},
    )


def _validate_boundaries(boundaries) -> list[str]:
    bounds = list(boundaries)
    if not bounds:
        raise InvalidParameterError("at least one boundary is required")
    encoded = [b.encode("utf-8") for b in bounds]
    if any(encoded[i] >= encoded[i + 1] for i in range(len(encoded) - 1)):
        raise InvalidParameterError("boundaries must be strictly sorted (byte order)")
    return bounds


def _if_tree(
    boundaries: list[str],
    column_expr: str,
    leaf,
    dialect: SqlDialect,
    byte_compare: bool,
) -> str:
    """Balanced nested-IF binary search assigning one leaf per bucket.

    Buckets are the gaps between consecutive boundaries (a single boundary
    is one unbounded bucket); the comparison at each split tests the
    boundary where the right half begins.
    """
    marker = dialect.byte_compare_prefix if byte_compare else ""
    n_buckets = max(1, len(boundaries) - 1)

    def build(lo: int, hi: int) -> str:
        if hi - lo == 1:
            return leaf(lo)
        mid = (lo + hi) // 2
        cmp = f"{marker}{column_expr}<{_string_literal(boundaries[mid])}"
        return f"{dialect.if_function}({cmp},{build(lo, mid)},{build(mid, hi)})"

    return build(0, n_buckets)


def gen_string_bucket_expr(
    boundaries,
    column: str = "C",
    byte_compare: bool = False,
    dialect: SqlDialect = REFERENCE_DIALECT,
) -> str:
    """Bucket-index expression over sorted string boundaries.

    Boundary list [b0, ..., bk] yields buckets [b0,b1), ..., [b_{k-1}, bk]
    numbered from 0; the expression assumes rows are pre-filtered to
    BETWEEN b0 AND bk.  Tree depth is ceil(log2(bucket count)).
    """
    bounds = _validate_boundaries(boundaries)
    c = render_identifier(column, dialect)
    return _if_tree(bounds, c, lambda i: str(i), dialect, byte_compare)


def gen_string_histogram_query(
    source: str,
    column: str,
    boundaries,
    quantized_view: bool = False,
    byte_compare: bool = False,
    dialect: SqlDialect = REFERENCE_DIALECT,
) -> SqlQueryPlan:
    """Histogram over explicit string bucket boundaries via the nested-IF tree."""
    bounds = _validate_boundaries(boundaries)
    if len(bounds) < 2:
        raise InvalidParameterError("a string histogram requires at least two boundaries")
    s = render_identifier(source, dialect)
    c = render_identifier(column, dialect)
    expr = gen_string_bucket_expr(bounds, column, byte_compare=byte_compare, dialect=dialect)
    alias = f" AS {dialect.derived_table_alias}" if dialect.derived_table_alias else ""
    from_line = f"  FROM {s} -- query the quantized view" if quantized_view else f"  FROM {s}"
    statement = (
        f"SELECT bucket, count(bucket)\n"
        f"FROM (\n"
        f"  SELECT ({expr}) AS bucket\n"
        f"{from_line}\n"
        f"  WHERE {c} BETWEEN {_string_literal(bounds[0])} AND {_string_literal(bounds[-1])}){alias}\n"
        f"GROUP BY bucket"
    )
    return SqlQueryPlan(
        statement,
        (("bucket", "int"), ("count", "int")),
        {"source": source, "column": column, "boundaries": list(bounds)},
    )


def gen_quantized_view_string(
    table: str,
    column: str,
    boundaries,
    view_name: str = "QV",
    materialized: bool = False,
    byte_compare: bool = False,
    dialect: SqlDialect = REFERENCE_DIALECT,
) -> SqlQueryPlan:
    """View folding a string column onto its quantization boundary labels.

    Rows are filtered to BETWEEN the first and last boundary; everything in
    [b_{k-1}, bk] collapses onto the b_{k-1} label, mirroring the histogram
    bucketing above.
    """
    bounds = _validate_boundaries(boundaries)
    if len(bounds) < 2:
        raise InvalidParameterError("a quantized string view requires at least two boundaries")
    t = render_identifier(table, dialect)
    c = render_identifier(column, dialect)
    v = render_identifier(view_name, dialect)
    expr = _if_tree(bounds, c, lambda i: _string_literal(bounds[i]), dialect, byte_compare)
    kind = "table" if materialized else "view"
    statement = (
        f"CREATE {kind} {v} as\n"
        f"  (SELECT {expr} AS {c}\n"
        f"   FROM {t}\n"
        f"   WHERE {c} BETWEEN {_string_literal(bounds[0])} AND {_string_literal(bounds[-1])})"
    )
    return SqlQueryPlan(
        statement,
        (),
        {"table": table, "column": column, "boundaries": list(bounds), "view": view_name,
         "materialized": materialized},
    )


def gen_distinct_values_query(
    table: str,
    column: str,
    dialect: SqlDialect = REFERENCE_DIALECT,
) -> SqlQueryPlan:
    """Sorted distinct values of a string column, compared bytewise.

    The byte-comparison marker is load-bearing here: bucket assignment in
    generated expressions and database-side sorting must agree, so default
    case-insensitive collations are explicitly bypassed.
    """
    t = render_identifier(table, dialect)
    c = render_identifier(column, dialect)
    b = dialect.byte_compare_prefix
    statement = f"SELECT DISTINCT {b}{c} AS {c} FROM {t}\nORDER BY {b}{c}"
    return SqlQueryPlan(statement, ((column, "string"),), {"table": table, "column": column})
