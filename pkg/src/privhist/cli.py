"""Operator command line: ingest data, manage policies, query, serve, benchmark.

The query commands bypass HTTP but run the same pipeline as the service, so
their numbers match service responses for the same table files.
"""

from __future__ import annotations

import functools
import json
import shutil
from pathlib import Path

import click

from .bench import (
    mean_abs_error_fixed_length,
    quantum_counts,
    run_accuracy,
    run_perf,
    uniform_counts,
)
from .engine import load_csv, load_schema
from .errors import PrivhistError, PublishConflictError
from .policy import TablePolicy, load_policy, save_policy
from .service import (
    ServiceConfig,
    compute_counts,
    compute_heatmap,
    compute_histogram,
    create_app,
    load_table_state,
    policy_schema_view,
    resolve_key_path,
    table_paths,
)
from .synopsis import SecretKey, write_key_file


def _cli_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except PrivhistError as exc:
            raise click.ClickException(str(exc)) from exc

    return wrapper


def _emit(payload: dict, as_json: bool, render=None) -> None:
    if as_json or render is None:
        click.echo(json.dumps(payload, indent=2, sort_keys=True))
    else:
        render(payload)


data_dir_option = click.option(
    "--data-dir",
    required=True,
    type=click.Path(file_okay=False, path_type=Path),
    help="Directory holding <table>.csv / .schema.json / .policy.json / .key files.",
)
table_option = click.option("--table", required=True, help="Table name.")
json_option = click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")


@click.group()
def main():
    """Differentially private histogram service tooling."""


@main.command()
@click.argument("csv_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.argument("schema_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@data_dir_option
@click.option("--table", default=None, help="Table name (defaults to the CSV stem).")
@json_option
@_cli_errors
def ingest(csv_path: Path, schema_path: Path, data_dir: Path, table: str | None, as_json: bool):
    """Copy a CSV plus schema into the data directory and create the table key."""
    table = table or csv_path.stem
    schema = load_schema(schema_path)
    dataset = load_csv(csv_path, schema, name=table)
    data_dir.mkdir(parents=True, exist_ok=True)
    paths = table_paths(data_dir, table)
    shutil.copyfile(csv_path, paths["csv"])
    shutil.copyfile(schema_path, paths["schema"])
    key_path = resolve_key_path(data_dir, table)
    if not key_path.exists():
        write_key_file(key_path, SecretKey.generate())
    summary = {
        "table": table,
        "rows": dataset.row_count,
        "columns": {name: col.kind for name, col in dataset.columns.items()},
        "missing": {name: int(col.missing.sum()) for name, col in dataset.columns.items()},
        "parse_warnings": dataset.parse_warnings,
    }

    def render(doc):
        click.echo(f"ingested table {doc['table']!r}: {doc['rows']} rows")
        for name, kind in doc["columns"].items():
            missing = doc["missing"][name]
            warn = doc["parse_warnings"].get(name, 0)
            note = f", {warn} parse warnings" if warn else ""
            click.echo(f"  {name}: {kind}, {missing} missing{note}")

    _emit(summary, as_json, render)


@main.group()
def policy():
    """Author, inspect, validate, and publish table policies."""


@policy.command("show")
@table_option
@data_dir_option
@json_option
@_cli_errors
def policy_show(table: str, data_dir: Path, as_json: bool):
    doc = load_policy(table_paths(data_dir, table)["policy"]).to_document()
    _emit(doc, True)


@policy.command("validate")
@table_option
@data_dir_option
@_cli_errors
def policy_validate(table: str, data_dir: Path):
    state = load_table_state(data_dir, table)
    if state.policy is None:
        raise click.ClickException(f"table {table!r} has no policy file")
    problems = state.policy.validation_errors()
    if problems:
        for problem in problems:
            click.echo(f"invalid: {problem}", err=True)
        raise SystemExit(1)
    click.echo("policy is valid")


@policy.command("set")
@table_option
@data_dir_option
@click.option("--file", "policy_file", required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="JSON policy document replacing the current one.")
@_cli_errors
def policy_set(table: str, data_dir: Path, policy_file: Path):
    """Replace the table's policy; rejected once the table is published."""
    paths = table_paths(data_dir, table)
    if paths["policy"].exists() and load_policy(paths["policy"]).published:
        raise PublishConflictError(f"table {table!r} is published; policy is frozen")
    incoming = TablePolicy.from_json(policy_file.read_text())
    if incoming.table != table:
        raise click.ClickException(
            f"policy document names table {incoming.table!r}, expected {table!r}"
        )
    if incoming.published:
        raise click.ClickException("set the publish latch with 'policy publish', not a document")
    incoming.validate()
    save_policy(paths["policy"], incoming)
    click.echo(f"policy for {table!r} updated (snapshot {incoming.snapshot_id()})")


@policy.command("publish")
@table_option
@data_dir_option
@_cli_errors
def policy_publish(table: str, data_dir: Path):
    """Latch the policy; afterwards dataset, policy, and key are immutable."""
    state = load_table_state(data_dir, table)
    if state.policy is None:
        raise click.ClickException(f"table {table!r} has no policy file")
    state.policy.publish()
    save_policy(state.policy_path, state.policy)
    click.echo(f"table {table!r} published (total epsilon {state.policy.total_epsilon()})")


def _parse_boundaries(raw: str, kind: str) -> list:
    parts = [part.strip() for part in raw.split(",")]
    if kind == "real":
        return [float(part) for part in parts]
    return parts


@main.group()
def query():
    """Ad-hoc noisy queries against a table in the data directory."""


@query.command("histogram")
@table_option
@data_dir_option
@click.option("--column", required=True)
@click.option("--boundaries", required=True, help="Comma-separated bucket boundaries.")
@click.option("--cdf", is_flag=True, help="Include noisy CDF prefix counts.")
@json_option
@_cli_errors
def query_histogram(table: str, data_dir: Path, column: str, boundaries: str, cdf: bool, as_json: bool):
    state = load_table_state(data_dir, table)
    if state.policy is None:
        raise click.ClickException(f"table {table!r} has no policy")
    kind = state.policy.columns[column].type if column in state.policy.columns else "real"
    bounds = _parse_boundaries(boundaries, kind)
    response = compute_histogram(state.backend, state.policy, state.key, column, bounds, include_cdf=cdf)

    def render(doc):
        click.echo(f"{doc['table']}.{column}  (epsilon {doc['epsilon']}, alpha {doc['alpha']})")
        for i, count in enumerate(doc["counts"]):
            lo, hi = doc["boundaries"][i], doc["boundaries"][i + 1]
            click.echo(f"  [{lo}, {hi}): {count:.2f} +/- {doc['radii'][i]:.2f}")
        if "cdf" in doc:
            for boundary, count, radius in zip(
                doc["cdf"]["boundaries"], doc["cdf"]["counts"], doc["cdf"]["radii"]
            ):
                click.echo(f"  cdf < {boundary}: {count:.2f} +/- {radius:.2f}")

    _emit(response, as_json, render)


@query.command("heatmap")
@table_option
@data_dir_option
@click.option("--column-x", required=True)
@click.option("--column-y", required=True)
@click.option("--boundaries-x", required=True)
@click.option("--boundaries-y", required=True)
@json_option
@_cli_errors
def query_heatmap(table, data_dir, column_x, column_y, boundaries_x, boundaries_y, as_json):
    state = load_table_state(data_dir, table)
    if state.policy is None:
        raise click.ClickException(f"table {table!r} has no policy")

    def kind(col):
        return state.policy.columns[col].type if col in state.policy.columns else "real"

    response = compute_heatmap(
        state.backend, state.policy, state.key,
        column_x, column_y,
        _parse_boundaries(boundaries_x, kind(column_x)),
        _parse_boundaries(boundaries_y, kind(column_y)),
    )

    def render(doc):
        click.echo(f"{doc['table']} heatmap {column_x} x {column_y}")
        for i, row in enumerate(doc["counts"]):
            cells = "  ".join(
                f"{value:.1f}+/-{doc['radii'][i][j]:.1f}" for j, value in enumerate(row)
            )
            click.echo(f"  [{doc['boundaries_x'][i]}, {doc['boundaries_x'][i+1]}): {cells}")

    _emit(response, as_json, render)


@query.command("counts")
@table_option
@data_dir_option
@click.option("--column", required=True)
@json_option
@_cli_errors
def query_counts(table: str, data_dir: Path, column: str, as_json: bool):
    state = load_table_state(data_dir, table)
    if state.policy is None:
        raise click.ClickException(f"table {table!r} has no policy")
    response = compute_counts(state.backend, state.policy, state.key, column)

    def render(doc):
        if "null_count" in doc:
            click.echo(f"null count: {doc['null_count']:.2f} +/- {doc['null_radius']:.2f}")
        if "distinct_count" in doc:
            click.echo(f"distinct count: {doc['distinct_count']:.2f} +/- {doc['distinct_radius']:.2f}")

    _emit(response, as_json, render)


@query.command("schema")
@table_option
@data_dir_option
@_cli_errors
def query_schema(table: str, data_dir: Path):
    state = load_table_state(data_dir, table)
    if state.policy is None:
        raise click.ClickException(f"table {table!r} has no policy")
    _emit(policy_schema_view(state.policy), True)


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="JSON config with data_dir, tokens, port.")
@click.option("--data-dir", type=click.Path(file_okay=False, path_type=Path))
@click.option("--port", type=int, default=8788, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--curator-token")
@click.option("--analyst-token")
@click.option("--ui-dir", type=click.Path(file_okay=False, path_type=Path))
@_cli_errors
def serve(config_path, data_dir, port, host, curator_token, analyst_token, ui_dir):
    """Run the HTTP query service."""
    import uvicorn

    if config_path is not None:
        config = ServiceConfig.from_file(config_path)
    else:
        if not (data_dir and curator_token and analyst_token):
            raise click.ClickException("--config or (--data-dir, --curator-token, --analyst-token) required")
        config = ServiceConfig(
            data_dir=data_dir,
            curator_token=curator_token,
            analyst_token=analyst_token,
            port=port,
            host=host,
            ui_dir=ui_dir,
        )
    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")


@main.group()
def bench():
    """Accuracy and throughput benchmarks."""


@bench.command("accuracy")
@click.option("--mechanism", type=click.Choice(["hierarchical", "identity", "both"]), default="both",
              show_default=True)
@click.option("--queries", type=int, default=5000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--epsilon", type=float, default=1.0, show_default=True)
@click.option("--branching", type=int, default=2, show_default=True)
@click.option("--min-length", type=int, default=1, show_default=True)
@click.option("--independent-keys", is_flag=True,
              help="Fresh derived key per query (Monte-Carlo over noise draws).")
@click.option("--synthetic-rows", type=int, default=None,
              help="Benchmark a synthetic uniform dataset with this many rows.")
@click.option("--domain", type=int, default=1024, show_default=True,
              help="Quantized domain size for synthetic data.")
@click.option("--table", default=None, help="Benchmark a real ingested table instead.")
@click.option("--column", default=None)
@click.option("--data-dir", type=click.Path(file_okay=False, path_type=Path))
@json_option
@_cli_errors
def bench_accuracy(mechanism, queries, seed, epsilon, branching, min_length, independent_keys,
                   synthetic_rows, domain, table, column, data_dir, as_json):
    """Random-interval L1 error per the random-workload methodology."""
    if table is not None:
        if not (column and data_dir):
            raise click.ClickException("--table requires --column and --data-dir")
        state = load_table_state(data_dir, table)
        if state.policy is None or column not in state.policy.columns:
            raise click.ClickException(f"column {column!r} is not quantized by the policy")
        counts = quantum_counts(state.dataset, column, state.policy.quantization(column))
    else:
        rows = synthetic_rows or 1_000_000
        counts = uniform_counts(rows, domain, seed)
    mechanisms = ["hierarchical", "identity"] if mechanism == "both" else [mechanism]
    reports = {
        name: run_accuracy(
            counts, epsilon, name, queries=queries, seed=seed, branching=branching,
            independent_keys=independent_keys, min_length=min_length,
        )
        for name in mechanisms
    }
    payload = {name: report.to_dict() for name, report in reports.items()}

    def render(doc):
        for name, entry in doc.items():
            click.echo(
                f"{name}: mean L1 {entry['mean_l1']:.3f}, median {entry['median_l1']:.3f} "
                f"({entry['queries']} queries, seed {entry['seed']}, "
                f"domain {entry['domain_size']}, epsilon {entry['epsilon']}, "
                f"b {entry['branching']}, wall {entry['wall_seconds']:.2f}s)"
            )

    _emit(payload, as_json, render)


@bench.command("sqrt-growth")
@click.option("--lengths", default="4,64,1024", show_default=True)
@click.option("--samples", type=int, default=300, show_default=True)
@click.option("--domain", type=int, default=1024, show_default=True)
@click.option("--epsilon", type=float, default=0.5, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@json_option
@_cli_errors
def bench_sqrt_growth(lengths, samples, domain, epsilon, seed, as_json):
    """Identity-mechanism error versus interval length (expected sqrt growth)."""
    values = {}
    for raw in lengths.split(","):
        length = int(raw)
        values[length] = mean_abs_error_fixed_length(
            "identity", domain, epsilon, length, samples, seed=seed
        )
    payload = {"samples": samples, "epsilon": epsilon, "mean_abs_error": values}

    def render(doc):
        for length, err in doc["mean_abs_error"].items():
            click.echo(f"t={length}: mean |error| {err:.3f}")

    _emit(payload, as_json, render)


@bench.command("perf")
@click.option("--rows", type=int, default=10_000_000, show_default=True)
@click.option("--domain", type=int, default=1024, show_default=True)
@click.option("--buckets", type=int, default=50, show_default=True)
@click.option("--runs", type=int, default=5, show_default=True)
@click.option("--warmup", type=int, default=3, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@json_option
@_cli_errors
def bench_perf(rows, domain, buckets, runs, warmup, seed, as_json):
    """Privacy slowdown of histogram scans on the in-memory backend."""
    report = run_perf(rows, domain_size=domain, buckets=buckets, runs=runs, warmup=warmup, seed=seed)
    payload = report.to_dict()

    def render(doc):
        click.echo(
            f"raw median {doc['median_raw']*1e3:.1f} ms, private median "
            f"{doc['median_private']*1e3:.1f} ms, slowdown {doc['slowdown']:.2f}x "
            f"({doc['rows']} rows, {doc['runs']} runs)"
        )

    _emit(payload, as_json, render)


if __name__ == "__main__":
    main()
