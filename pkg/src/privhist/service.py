"""The trusted root: privacy pipeline plus the HTTP/JSON query service.

The pipeline functions are pure given a (dataset, policy, key) snapshot and
are shared by the HTTP layer and the CLI, so both surfaces return identical
numbers.  Noise enters exactly once, here, on top of exact backend counts;
everything below this module is noise-free and everything above is
post-processing.
"""

from __future__ import annotations

import hmac as _hmac
import json
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .backend import CountBackend, MemBackend
from .engine import Dataset, load_csv, load_schema
from .errors import (
    AccessDeniedError,
    InvalidParameterError,
    NotFoundError,
    PolicyError,
    PrivhistError,
    PublishConflictError,
)
from .policy import (
    NumericQuantization,
    TablePolicy,
    bucket_to_quantum_ranges,
    count_release_id,
    load_policy,
    save_policy,
)
from .synopsis import (
    QuantumRange,
    SecretKey,
    SynopsisParams,
    TAG_DISTINCT_COUNT,
    TAG_NULL_COUNT,
    confidence_interval,
    laplace_scale,
    range_noise,
    read_key_file,
    tagged_count_noise,
    write_key_file,
)

ROLE_CURATOR = "curator"
ROLE_ANALYST = "analyst"

KEY_FILE_ENV = "PRIVHIST_KEY_FILE"


# --------------------------------------------------------------------------
# Pure pipeline
# --------------------------------------------------------------------------


def _released_params(policy: TablePolicy, columns: list[str]) -> tuple[SynopsisParams, tuple[str, ...]]:
    """Synopsis parameters for the released set covering ``columns``.

    Dimension order follows the policy's declared column order, which fixes
    the PRF message encoding independently of request orientation.
    """
    column_set = policy.column_set_for(columns)
    if column_set is None:
        raise PolicyError(f"no released column set covers {sorted(columns)}")
    sizes = tuple(policy.quantization(c).domain_size for c in column_set.columns)
    params = SynopsisParams(policy.branching, sizes, column_set.epsilon, column_set.column_set_id)
    return params, column_set.columns


def _noisy_bucket(key, params, ranges, true_count, alpha):
    noise, n_vars = range_noise(key, params, ranges)
    radius = confidence_interval(n_vars, laplace_scale(params), alpha) if n_vars else 0.0
    return float(true_count) + noise, radius, n_vars


def compute_histogram(
    backend: CountBackend,
    policy: TablePolicy,
    key: SecretKey,
    column: str,
    boundaries: list,
    include_cdf: bool = False,
) -> dict:
    """Noisy 1-D histogram (optionally with noisy CDF prefix counts).

    Pipeline: bucket boundaries -> quantum index ranges -> exact backend
    counts -> per-bucket synopsis noise and confidence radius.  CDF points
    are prefix ranges [domain start, boundary) through the same synopsis.
    """
    params, _ = _released_params(policy, [column])
    q = policy.quantization(column)
    ranges = bucket_to_quantum_ranges(boundaries, q)

    lead_range = QuantumRange(0, ranges[0].lo)
    hist = backend.histogram(column, q, [lead_range] + ranges if include_cdf else ranges)
    if include_cdf:
        lead, bucket_counts = int(hist.counts[0]), hist.counts[1:]
    else:
        lead, bucket_counts = 0, hist.counts

    counts, radii, n_vars = [], [], []
    for rng, true_count in zip(ranges, bucket_counts):
        value, radius, n = _noisy_bucket(key, params, [rng], int(true_count), policy.alpha)
        counts.append(value)
        radii.append(radius)
        n_vars.append(n)

    response = {
        "table": policy.table,
        "columns": [column],
        "boundaries": list(boundaries),
        "counts": counts,
        "radii": radii,
        "n_vars": n_vars,
        "null_count": int(hist.null_count),
        "alpha": policy.alpha,
        "epsilon": params.epsilon,
        "total_epsilon": policy.total_epsilon(),
        "policy_snapshot": policy.snapshot_id(),
        "published": policy.published,
    }
    if include_cdf:
        cuts = [rng.lo for rng in ranges] + [ranges[-1].hi]
        prefix_true = lead
        cdf_counts, cdf_radii, cdf_n_vars = [], [], []
        for j, cut in enumerate(cuts):
            if j > 0:
                prefix_true += int(bucket_counts[j - 1])
            value, radius, n = _noisy_bucket(
                key, params, [QuantumRange(0, cut)], prefix_true, policy.alpha
            )
            cdf_counts.append(value)
            cdf_radii.append(radius)
            cdf_n_vars.append(n)
        response["cdf"] = {
            "boundaries": list(boundaries),
            "counts": cdf_counts,
            "radii": cdf_radii,
            "n_vars": cdf_n_vars,
        }
    return response


def compute_heatmap(
    backend: CountBackend,
    policy: TablePolicy,
    key: SecretKey,
    column_x: str,
    column_y: str,
    boundaries_x: list,
    boundaries_y: list,
) -> dict:
    """Noisy 2-D histogram; noise terms are the Cartesian product of per-axis decompositions."""
    if column_x == column_y:
        raise InvalidParameterError("heatmap requires two distinct columns")
    params, ordered = _released_params(policy, [column_x, column_y])
    q_x = policy.quantization(column_x)
    q_y = policy.quantization(column_y)
    ranges_x = bucket_to_quantum_ranges(boundaries_x, q_x)
    ranges_y = bucket_to_quantum_ranges(boundaries_y, q_y)
    heat = backend.heatmap(column_x, column_y, q_x, q_y, ranges_x, ranges_y)

    counts, radii, n_vars = [], [], []
    for i, rx in enumerate(ranges_x):
        row_counts, row_radii, row_n = [], [], []
        for j, ry in enumerate(ranges_y):
            by_column = {column_x: rx, column_y: ry}
            cell_ranges = [by_column[c] for c in ordered]
            value, radius, n = _noisy_bucket(
                key, params, cell_ranges, int(heat.counts[i, j]), policy.alpha
            )
            row_counts.append(value)
            row_radii.append(radius)
            row_n.append(n)
        counts.append(row_counts)
        radii.append(row_radii)
        n_vars.append(row_n)

    return {
        "table": policy.table,
        "columns": [column_x, column_y],
        "boundaries_x": list(boundaries_x),
        "boundaries_y": list(boundaries_y),
        "counts": counts,
        "radii": radii,
        "n_vars": n_vars,
        "null_count": int(heat.null_count),
        "alpha": policy.alpha,
        "epsilon": params.epsilon,
        "total_epsilon": policy.total_epsilon(),
        "policy_snapshot": policy.snapshot_id(),
        "published": policy.published,
    }


def compute_counts(backend: CountBackend, policy: TablePolicy, key: SecretKey, column: str) -> dict:
    """Noisy null-count and distinct-count releases for one column."""
    release = policy.count_releases.get(column)
    if release is None:
        raise PolicyError(f"no count release configured for column {column!r}")
    q = policy.quantization(column)
    rid = count_release_id(column)
    response: dict = {
        "table": policy.table,
        "column": column,
        "alpha": policy.alpha,
        "total_epsilon": policy.total_epsilon(),
        "policy_snapshot": policy.snapshot_id(),
    }
    if release.null_epsilon is not None:
        true = backend.null_count(column, q)
        response["null_count"] = true + tagged_count_noise(key, TAG_NULL_COUNT, rid, release.null_epsilon)
        response["null_radius"] = confidence_interval(1, 1.0 / release.null_epsilon, policy.alpha)
    if release.distinct_epsilon is not None:
        true = backend.distinct_count(column)
        response["distinct_count"] = true + tagged_count_noise(
            key, TAG_DISTINCT_COUNT, rid, release.distinct_epsilon
        )
        response["distinct_radius"] = confidence_interval(
            1, 1.0 / release.distinct_epsilon, policy.alpha
        )
    return response


def policy_schema_view(policy: TablePolicy) -> dict:
    """Public view of the policy: everything in it is public metadata; the key never is."""
    doc = policy.to_document()
    return {
        "table": policy.table,
        "published": policy.published,
        "branching": policy.branching,
        "alpha": policy.alpha,
        "columns": doc["columns"],
        "column_sets": doc["column_sets"],
        "count_releases": doc["count_releases"],
        "total_epsilon": policy.total_epsilon(),
        "policy_snapshot": policy.snapshot_id(),
    }


def policy_range_view(policy: TablePolicy, column: str) -> dict:
    """Public range of a column as declared by the policy, not the data."""
    q = policy.quantization(column)
    if isinstance(q, NumericQuantization):
        return {"column": column, "min": q.qmin, "max": q.qmax, "source": "policy"}
    return {
        "column": column,
        "min": q.boundaries[0],
        "max": q.boundaries[-1],
        "source": "policy",
    }


# --------------------------------------------------------------------------
# Table store
# --------------------------------------------------------------------------


@dataclass
class TableState:
    name: str
    dataset: Dataset
    backend: CountBackend
    policy: TablePolicy | None
    key: SecretKey
    policy_path: Path
    lock: threading.Lock = field(default_factory=threading.Lock)


def table_paths(data_dir: str | Path, table: str) -> dict[str, Path]:
    data_dir = Path(data_dir)
    return {
        "csv": data_dir / f"{table}.csv",
        "schema": data_dir / f"{table}.schema.json",
        "policy": data_dir / f"{table}.policy.json",
        "key": data_dir / f"{table}.key",
    }


def resolve_key_path(data_dir: str | Path, table: str) -> Path:
    override = os.environ.get(KEY_FILE_ENV)
    if override:
        return Path(override)
    return table_paths(data_dir, table)["key"]


def load_table_state(data_dir: str | Path, table: str, create_key: bool = True) -> TableState:
    paths = table_paths(data_dir, table)
    if not paths["csv"].exists() or not paths["schema"].exists():
        raise NotFoundError(f"no table {table!r} under {data_dir}")
    schema = load_schema(paths["schema"])
    dataset = load_csv(paths["csv"], schema, name=table)
    policy = load_policy(paths["policy"]) if paths["policy"].exists() else None
    if policy is not None:
        _check_policy_against_schema(policy, dict(schema))
    key_path = resolve_key_path(data_dir, table)
    if key_path.exists():
        key = read_key_file(key_path)
    elif create_key:
        key = SecretKey.generate()
        write_key_file(key_path, key)
    else:
        raise NotFoundError(f"no key file for table {table!r}")
    return TableState(table, dataset, MemBackend(dataset), policy, key, paths["policy"])


def _check_policy_against_schema(policy: TablePolicy, schema: dict[str, str]) -> None:
    problems = []
    for name, column in policy.columns.items():
        if name not in schema:
            problems.append(f"policy column {name!r} missing from dataset")
        elif schema[name] != column.type:
            problems.append(
                f"policy column {name!r} is {column.type}, dataset has {schema[name]}"
            )
    if problems:
        raise PolicyError("; ".join(problems))


class TableStore:
    """All tables under one data directory; the unit the service mounts."""

    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        self.tables: dict[str, TableState] = {}
        for csv_path in sorted(self.data_dir.glob("*.csv")):
            table = csv_path.stem
            if table_paths(self.data_dir, table)["schema"].exists():
                self.tables[table] = load_table_state(self.data_dir, table)

    def get(self, table: str) -> TableState:
        state = self.tables.get(table)
        if state is None:
            raise NotFoundError(f"unknown table {table!r}")
        return state

    def listing(self) -> list[dict]:
        return [
            {
                "name": state.name,
                "published": bool(state.policy.published) if state.policy else False,
                "has_policy": state.policy is not None,
            }
            for state in self.tables.values()
        ]

    def replace_policy(self, table: str, document: dict) -> TablePolicy:
        """Atomically swap in a new policy document (curator path)."""
        state = self.get(table)
        with state.lock:
            if state.policy is not None and state.policy.published:
                raise PublishConflictError(f"table {table!r} is published; policy is frozen")
            if document.get("published"):
                raise InvalidParameterError("set published via the publish endpoint, not the document")
            if document.get("table") != table:
                raise InvalidParameterError("policy document names a different table")
            policy = TablePolicy.from_document(document)
            policy.validate()
            schema = {name: col.kind for name, col in state.dataset.columns.items()}
            _check_policy_against_schema(policy, schema)
            _atomic_write(state.policy_path, policy.to_json())
            state.policy = policy
            return policy

    def publish(self, table: str) -> TablePolicy:
        state = self.get(table)
        with state.lock:
            if state.policy is None:
                raise PolicyError(f"table {table!r} has no policy to publish")
            state.policy.publish()
            _atomic_write(state.policy_path, state.policy.to_json())
            return state.policy


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


# --------------------------------------------------------------------------
# HTTP layer
# --------------------------------------------------------------------------


@dataclass
class ServiceConfig:
    data_dir: Path
    curator_token: str
    analyst_token: str
    port: int = 8788
    host: str = "127.0.0.1"
    ui_dir: Path | None = None

    @classmethod
    def from_file(cls, path: str | Path) -> "ServiceConfig":
        doc = json.loads(Path(path).read_text())
        return cls(
            data_dir=Path(doc["data_dir"]),
            curator_token=doc["curator_token"],
            analyst_token=doc["analyst_token"],
            port=int(doc.get("port", 8788)),
            host=doc.get("host", "127.0.0.1"),
            ui_dir=Path(doc["ui_dir"]) if doc.get("ui_dir") else None,
        )


class _Unauthorized(PrivhistError):
    pass


def _require_published_or_curator(state: TableState, role: str) -> TablePolicy:
    policy = state.policy
    if policy is None:
        raise PolicyError(f"table {state.name!r} has no privacy policy")
    if not policy.published and role != ROLE_CURATOR:
        raise AccessDeniedError(f"table {state.name!r} is not published")
    return policy


def create_app(config: ServiceConfig) -> FastAPI:
    store = TableStore(config.data_dir)
    app = FastAPI(title="privhist", docs_url=None, redoc_url=None, openapi_url=None)
    app.state.store = store

    def role_of(request: Request) -> str:
        header = request.headers.get("authorization", "")
        if not header.startswith("Bearer "):
            raise _Unauthorized("missing bearer token")
        token = header[len("Bearer "):]
        if _hmac.compare_digest(token, config.curator_token):
            return ROLE_CURATOR
        if _hmac.compare_digest(token, config.analyst_token):
            return ROLE_ANALYST
        raise _Unauthorized("unrecognized token")

    status_of = [
        (_Unauthorized, 401, "unauthorized"),
        (AccessDeniedError, 403, "access_denied"),
        (NotFoundError, 404, "not_found"),
        (PublishConflictError, 409, "published_conflict"),
        (PolicyError, 400, "policy_error"),
        (InvalidParameterError, 400, "invalid_parameter"),
        (PrivhistError, 400, "error"),
    ]

    @app.exception_handler(PrivhistError)
    async def _handle_error(request: Request, exc: PrivhistError):
        for klass, status, code in status_of:
            if isinstance(exc, klass):
                return JSONResponse(
                    {"code": code, "message": str(exc), "detail": type(exc).__name__},
                    status_code=status,
                )
        raise exc

    @app.get("/tables")
    def list_tables(request: Request):
        role_of(request)
        return {"tables": store.listing()}

    @app.get("/tables/{table}/schema")
    def table_schema(table: str, request: Request):
        role = role_of(request)
        state = store.get(table)
        policy = state.policy
        if policy is None or (not policy.published and role != ROLE_CURATOR):
            # Metadata-only stub until the table is published.
            return {"table": table, "published": False, "has_policy": policy is not None}
        view = policy_schema_view(policy)
        if role == ROLE_CURATOR and not policy.published:
            view["dataset_columns"] = {
                name: column.kind for name, column in state.dataset.columns.items()
            }
        return view

    async def _json_body(request: Request) -> dict:
        try:
            body = await request.json()
        except Exception as exc:
            raise InvalidParameterError(f"request body is not valid JSON: {exc}") from exc
        if not isinstance(body, dict):
            raise InvalidParameterError("request body must be a JSON object")
        return body

    @app.post("/tables/{table}/histogram")
    async def histogram(table: str, request: Request):
        role = role_of(request)
        state = store.get(table)
        policy = _require_published_or_curator(state, role)
        body = await _json_body(request)
        column = body.get("column")
        boundaries = body.get("boundaries")
        if not isinstance(column, str) or not isinstance(boundaries, list):
            raise InvalidParameterError("histogram body requires 'column' and 'boundaries'")
        return compute_histogram(
            state.backend,
            policy,
            state.key,
            column,
            boundaries,
            include_cdf=bool(body.get("include_cdf", False)),
        )

    @app.post("/tables/{table}/heatmap")
    async def heatmap(table: str, request: Request):
        role = role_of(request)
        state = store.get(table)
        policy = _require_published_or_curator(state, role)
        body = await _json_body(request)
        for field_name in ("column_x", "column_y", "boundaries_x", "boundaries_y"):
            if field_name not in body:
                raise InvalidParameterError(f"heatmap body requires {field_name!r}")
        return compute_heatmap(
            state.backend,
            policy,
            state.key,
            body["column_x"],
            body["column_y"],
            body["boundaries_x"],
            body["boundaries_y"],
        )

    @app.post("/tables/{table}/counts/{column}")
    def counts(table: str, column: str, request: Request):
        role = role_of(request)
        state = store.get(table)
        policy = _require_published_or_curator(state, role)
        return compute_counts(state.backend, policy, state.key, column)

    @app.get("/tables/{table}/range-stats/{column}")
    def range_stats(table: str, column: str, request: Request, raw: bool = False):
        role = role_of(request)
        state = store.get(table)
        policy = state.policy
        if raw:
            if role != ROLE_CURATOR:
                raise AccessDeniedError("raw range statistics are curator-only")
            if policy is not None and policy.published:
                raise PublishConflictError("raw range statistics are unavailable after publish")
            stats = state.backend.range_stats(column)
            return {
                "column": column,
                "min": stats.minimum,
                "max": stats.maximum,
                "total_rows": stats.total_rows,
                "non_null_rows": stats.non_null_rows,
                "source": "raw",
            }
        if policy is None:
            raise PolicyError(f"table {table!r} has no privacy policy; curators may query raw=true")
        if not policy.published and role != ROLE_CURATOR:
            raise AccessDeniedError(f"table {table!r} is not published")
        return policy_range_view(policy, column)

    @app.put("/tables/{table}/policy")
    async def put_policy(table: str, request: Request):
        role = role_of(request)
        if role != ROLE_CURATOR:
            raise AccessDeniedError("policy updates are curator-only")
        body = await _json_body(request)
        policy = store.replace_policy(table, body)
        return {"table": table, "policy_snapshot": policy.snapshot_id(), "published": policy.published}

    @app.post("/tables/{table}/publish")
    def publish(table: str, request: Request):
        role = role_of(request)
        if role != ROLE_CURATOR:
            raise AccessDeniedError("publishing is curator-only")
        policy = store.publish(table)
        return {"table": table, "published": policy.published, "policy_snapshot": policy.snapshot_id()}

    if config.ui_dir is not None and Path(config.ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(config.ui_dir), html=True), name="ui")

    return app
