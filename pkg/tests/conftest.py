"""Shared fixtures: a populated data directory and service apps over it."""

import json

import numpy as np
import pytest

from privhist.policy import (
    ColumnPolicy,
    ColumnSetPolicy,
    CountReleasePolicy,
    NumericQuantization,
    StringQuantization,
    TablePolicy,
)
from privhist.service import ServiceConfig, create_app
from privhist.synopsis import SecretKey, clear_confidence_cache, write_key_file

CURATOR_TOKEN = "curator-secret"
ANALYST_TOKEN = "analyst-secret"
FIXED_KEY = SecretKey(bytes([7]) * 32)

CITY_BOUNDARIES = tuple(chr(ord("A") + i) for i in range(26))


def people_policy(published=False, epsilon=1.0) -> TablePolicy:
    policy = TablePolicy("people")
    policy.set_column("age", ColumnPolicy("real", NumericQuantization(0.0, 100.0, 1.0)))
    policy.set_column("city", ColumnPolicy("string", StringQuantization(CITY_BOUNDARIES)))
    policy.add_column_set(["age"], epsilon=epsilon, column_set_id=1)
    policy.add_column_set(["age", "city"], epsilon=0.5, column_set_id=2)
    policy.set_count_release("city", CountReleasePolicy(null_epsilon=0.1, distinct_epsilon=0.1))
    if published:
        policy.publish()
    return policy


def write_people_table(data_dir, published=True, epsilon=1.0, rows=400, seed=12):
    """Create people.csv / .schema.json / .policy.json / .key under data_dir."""
    data_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    ages = rng.uniform(0, 110, size=rows)  # some rows beyond the policy range
    cities = rng.choice([c + "town" for c in CITY_BOUNDARIES] + [""], size=rows)
    lines = ["age,city"]
    for age, city in zip(ages, cities):
        cell = "" if rng.random() < 0.03 else f"{age:.3f}"
        lines.append(f"{cell},{city}")
    (data_dir / "people.csv").write_text("\n".join(lines) + "\n")
    (data_dir / "people.schema.json").write_text(
        json.dumps([{"name": "age", "type": "real"}, {"name": "city", "type": "string"}])
    )
    (data_dir / "people.policy.json").write_text(people_policy(published, epsilon).to_json())
    write_key_file(data_dir / "people.key", FIXED_KEY)
    return data_dir


@pytest.fixture
def data_dir(tmp_path):
    return write_people_table(tmp_path / "data")


@pytest.fixture
def unpublished_data_dir(tmp_path):
    return write_people_table(tmp_path / "data", published=False)


def make_app(data_dir):
    clear_confidence_cache()
    return create_app(
        ServiceConfig(data_dir=data_dir, curator_token=CURATOR_TOKEN, analyst_token=ANALYST_TOKEN)
    )


def auth(token):
    return {"Authorization": f"Bearer {token}"}


@pytest.fixture
def client(data_dir):
    from fastapi.testclient import TestClient

    with TestClient(make_app(data_dir)) as test_client:
        yield test_client


@pytest.fixture
def unpublished_client(unpublished_data_dir):
    from fastapi.testclient import TestClient

    with TestClient(make_app(unpublished_data_dir)) as test_client:
        yield test_client
