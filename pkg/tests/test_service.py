"""Service tests: roles, publish lifecycle, determinism, redaction, pipeline."""

import json
import random

import numpy as np
import pytest

from conftest import ANALYST_TOKEN, CURATOR_TOKEN, FIXED_KEY, auth, make_app, people_policy, write_people_table
from privhist.backend import MemBackend
from privhist.engine import dataset_from_arrays
from privhist.policy import bucket_to_quantum_ranges, count_release_id
from privhist.service import compute_counts, compute_histogram
from privhist.synopsis import (
    QuantumRange,
    TAG_DISTINCT_COUNT,
    TAG_NULL_COUNT,
    b_adic_decomposition,
    tagged_count_noise,
)

HISTOGRAM_BODY = {"column": "age", "boundaries": [0.0, 25.0, 50.0, 75.0, 100.0]}
HEATMAP_BODY = {
    "column_x": "age",
    "column_y": "city",
    "boundaries_x": [0.0, 50.0, 100.0],
    "boundaries_y": ["A", "M", "Z"],
}


def test_authentication_required(client):
    assert client.get("/tables").status_code == 401
    assert client.get("/tables", headers=auth("wrong")).status_code == 401
    body = client.get("/tables", headers=auth("wrong")).json()
    assert body["code"] == "unauthorized"


def test_table_listing(client):
    body = client.get("/tables", headers=auth(ANALYST_TOKEN)).json()
    assert body == {"tables": [{"name": "people", "published": True, "has_policy": True}]}


def test_histogram_deterministic_and_repeatable(client):
    first = client.post("/tables/people/histogram", json=HISTOGRAM_BODY, headers=auth(ANALYST_TOKEN))
    second = client.post("/tables/people/histogram", json=HISTOGRAM_BODY, headers=auth(ANALYST_TOKEN))
    assert first.status_code == 200
    assert first.content == second.content
    doc = first.json()
    assert len(doc["counts"]) == 4
    assert len(doc["radii"]) == 4
    assert all(r > 0 for r in doc["radii"])
    assert doc["total_epsilon"] == pytest.approx(1.0 + 0.5 + 0.1 + 0.1)


def test_histogram_near_truth_at_huge_epsilon(tmp_path):
    data_dir = write_people_table(tmp_path / "d", published=True, epsilon=1e12)
    from fastapi.testclient import TestClient

    with TestClient(make_app(data_dir)) as client:
        doc = client.post(
            "/tables/people/histogram", json=HISTOGRAM_BODY, headers=auth(ANALYST_TOKEN)
        ).json()
        state_dir = data_dir
        # Recompute the exact counts with the engine directly.
        from privhist.engine import load_csv, load_schema, quantized_histogram

        ds = load_csv(state_dir / "people.csv", load_schema(state_dir / "people.schema.json"))
        policy = people_policy(True, 1e12)
        q = policy.quantization("age")
        hist = quantized_histogram(ds, "age", q, bucket_to_quantum_ranges(HISTOGRAM_BODY["boundaries"], q))
        for noisy, true in zip(doc["counts"], hist.counts):
            assert abs(noisy - int(true)) < 1e-3


def test_histogram_validation_errors(client):
    bad = dict(HISTOGRAM_BODY, boundaries=[50.0, 10.0])
    resp = client.post("/tables/people/histogram", json=bad, headers=auth(ANALYST_TOKEN))
    assert resp.status_code == 400
    assert resp.json()["code"] == "invalid_parameter"

    unknown = {"column": "salary", "boundaries": [0.0, 1.0]}
    resp = client.post("/tables/people/histogram", json=unknown, headers=auth(ANALYST_TOKEN))
    assert resp.status_code == 400
    assert resp.json()["code"] == "policy_error"

    resp = client.post("/tables/nope/histogram", json=HISTOGRAM_BODY, headers=auth(ANALYST_TOKEN))
    assert resp.status_code == 404


def test_cdf_prefix_counts(client):
    body = dict(HISTOGRAM_BODY, include_cdf=True)
    doc = client.post("/tables/people/histogram", json=body, headers=auth(ANALYST_TOKEN)).json()
    cdf = doc["cdf"]
    assert len(cdf["counts"]) == len(HISTOGRAM_BODY["boundaries"])
    # The first prefix [0, 0) carries no noise terms and is exactly zero.
    assert cdf["n_vars"][0] == 0
    assert cdf["counts"][0] == 0.0
    assert cdf["radii"][0] == 0.0


def test_heatmap_n_vars_matches_decomposition_product(client):
    doc = client.post("/tables/people/heatmap", json=HEATMAP_BODY, headers=auth(ANALYST_TOKEN)).json()
    policy = people_policy(True)
    q_age = policy.quantization("age")
    q_city = policy.quantization("city")
    ranges_x = bucket_to_quantum_ranges(HEATMAP_BODY["boundaries_x"], q_age)
    ranges_y = bucket_to_quantum_ranges(HEATMAP_BODY["boundaries_y"], q_city)
    for i, rx in enumerate(ranges_x):
        for j, ry in enumerate(ranges_y):
            expected = len(b_adic_decomposition(rx, 2)) * len(b_adic_decomposition(ry, 2))
            assert doc["n_vars"][i][j] == expected


def test_heatmap_orientation_transposes(client):
    doc_xy = client.post("/tables/people/heatmap", json=HEATMAP_BODY, headers=auth(ANALYST_TOKEN)).json()
    flipped = {
        "column_x": "city",
        "column_y": "age",
        "boundaries_x": HEATMAP_BODY["boundaries_y"],
        "boundaries_y": HEATMAP_BODY["boundaries_x"],
    }
    doc_yx = client.post("/tables/people/heatmap", json=flipped, headers=auth(ANALYST_TOKEN)).json()
    a = np.array(doc_xy["counts"])
    b = np.array(doc_yx["counts"])
    assert np.allclose(a, b.T)


def test_counts_deterministic_and_golden(client):
    first = client.post("/tables/people/counts/city", headers=auth(ANALYST_TOKEN))
    second = client.post("/tables/people/counts/city", headers=auth(ANALYST_TOKEN))
    assert first.content == second.content
    doc = first.json()
    rid = count_release_id("city")
    null_noise = tagged_count_noise(FIXED_KEY, TAG_NULL_COUNT, rid, 0.1)
    distinct_noise = tagged_count_noise(FIXED_KEY, TAG_DISTINCT_COUNT, rid, 0.1)
    assert doc["null_count"] - null_noise == pytest.approx(round(doc["null_count"] - null_noise))
    assert doc["distinct_count"] - distinct_noise == pytest.approx(
        round(doc["distinct_count"] - distinct_noise)
    )


def test_counts_requires_release(client):
    resp = client.post("/tables/people/counts/age", headers=auth(ANALYST_TOKEN))
    assert resp.status_code == 400
    assert resp.json()["code"] == "policy_error"


def test_schema_view_and_redaction(client):
    resp = client.get("/tables/people/schema", headers=auth(ANALYST_TOKEN))
    doc = resp.json()
    assert doc["published"] is True
    assert doc["total_epsilon"] == pytest.approx(1.7)
    assert "age" in doc["columns"]
    assert FIXED_KEY.raw.hex() not in resp.text
    assert "key" not in {k.lower() for k in doc}


def test_range_stats_rules(client):
    # Analyst sees the policy range, not the data.
    doc = client.get("/tables/people/range-stats/age", headers=auth(ANALYST_TOKEN)).json()
    assert doc == {"column": "age", "min": 0.0, "max": 100.0, "source": "policy"}
    # Raw stats are curator-only and unavailable after publish.
    resp = client.get("/tables/people/range-stats/age?raw=true", headers=auth(ANALYST_TOKEN))
    assert resp.status_code == 403
    resp = client.get("/tables/people/range-stats/age?raw=true", headers=auth(CURATOR_TOKEN))
    assert resp.status_code == 409


def test_unpublished_flow(unpublished_client):
    client = unpublished_client
    # Analyst: stub schema, no queries.
    stub = client.get("/tables/people/schema", headers=auth(ANALYST_TOKEN)).json()
    assert stub == {"table": "people", "published": False, "has_policy": True}
    resp = client.post("/tables/people/histogram", json=HISTOGRAM_BODY, headers=auth(ANALYST_TOKEN))
    assert resp.status_code == 403

    # Curator: previews work, raw range stats work.
    preview = client.post("/tables/people/histogram", json=HISTOGRAM_BODY, headers=auth(CURATOR_TOKEN))
    assert preview.status_code == 200
    raw = client.get("/tables/people/range-stats/age?raw=true", headers=auth(CURATOR_TOKEN)).json()
    assert raw["source"] == "raw"
    assert raw["total_rows"] == 400
    assert 100.0 < raw["max"] <= 110.0

    # Curator edits epsilon; previews change scale accordingly.
    new_policy = people_policy(False, epsilon=0.1).to_document()
    put = client.put("/tables/people/policy", json=new_policy, headers=auth(CURATOR_TOKEN))
    assert put.status_code == 200
    wider = client.post("/tables/people/histogram", json=HISTOGRAM_BODY, headers=auth(CURATOR_TOKEN)).json()
    assert wider["policy_snapshot"] != preview.json()["policy_snapshot"]
    ratio = wider["radii"][0] / preview.json()["radii"][0]
    assert ratio == pytest.approx(10.0, rel=0.05)

    # Analyst cannot mutate.
    resp = client.put("/tables/people/policy", json=new_policy, headers=auth(ANALYST_TOKEN))
    assert resp.status_code == 403
    resp = client.post("/tables/people/publish", headers=auth(ANALYST_TOKEN))
    assert resp.status_code == 403

    # Publish latches; double publish is idempotent; further mutation conflicts.
    assert client.post("/tables/people/publish", headers=auth(CURATOR_TOKEN)).status_code == 200
    again = client.post("/tables/people/publish", headers=auth(CURATOR_TOKEN))
    assert again.status_code == 200
    assert again.json()["published"] is True
    resp = client.put("/tables/people/policy", json=new_policy, headers=auth(CURATOR_TOKEN))
    assert resp.status_code == 409
    # Analyst can query now.
    assert client.post("/tables/people/histogram", json=HISTOGRAM_BODY, headers=auth(ANALYST_TOKEN)).status_code == 200


def test_policy_put_validation(unpublished_client):
    client = unpublished_client
    doc = people_policy(False).to_document()
    doc["table"] = "other"
    assert client.put("/tables/people/policy", json=doc, headers=auth(CURATOR_TOKEN)).status_code == 400
    doc = people_policy(False).to_document()
    doc["published"] = True
    assert client.put("/tables/people/policy", json=doc, headers=auth(CURATOR_TOKEN)).status_code == 400
    doc = people_policy(False).to_document()
    doc["column_sets"][0]["epsilon"] = 0.0
    resp = client.put("/tables/people/policy", json=doc, headers=auth(CURATOR_TOKEN))
    assert resp.status_code == 400
    assert "epsilon" in resp.json()["message"]


def test_determinism_across_restart(data_dir):
    from fastapi.testclient import TestClient

    recorded = []
    queries = []
    rng = random.Random(3)
    for _ in range(40):
        lo = rng.uniform(0, 50)
        hi = rng.uniform(51, 100)
        queries.append(("/tables/people/histogram", {
            "column": "age",
            "boundaries": [round(lo, 2), round(hi, 2)],
            "include_cdf": rng.random() < 0.5,
        }))
    queries.append(("/tables/people/heatmap", HEATMAP_BODY))

    with TestClient(make_app(data_dir)) as client:
        for path, body in queries:
            recorded.append(client.post(path, json=body, headers=auth(ANALYST_TOKEN)).content)
    # Fresh app over the same files, cold confidence cache: byte-identical replies.
    with TestClient(make_app(data_dir)) as client:
        for (path, body), expected in zip(queries, recorded):
            assert client.post(path, json=body, headers=auth(ANALYST_TOKEN)).content == expected


def test_unlimited_queries_no_budget_errors(client):
    body = {"column": "age", "boundaries": [0.0, 100.0]}
    baseline = client.post("/tables/people/histogram", json=body, headers=auth(ANALYST_TOKEN))
    assert baseline.status_code == 200
    for _ in range(300):
        resp = client.post("/tables/people/histogram", json=body, headers=auth(ANALYST_TOKEN))
        assert resp.status_code == 200
        assert resp.content == baseline.content


def test_postprocessing_purity_same_counts_same_responses():
    # Two datasets with identical quantized counts produce bit-identical
    # noisy histograms under the same key and policy.
    policy = people_policy(True)
    q = policy.quantization("age")
    a = dataset_from_arrays("people", {"age": np.array([10.0, 10.4, 80.0])})
    b = dataset_from_arrays("people", {"age": np.array([10.2, 10.9, 80.7])})
    boundaries = [0.0, 50.0, 100.0]
    resp_a = compute_histogram(MemBackend(a), policy, FIXED_KEY, "age", boundaries)
    resp_b = compute_histogram(MemBackend(b), policy, FIXED_KEY, "age", boundaries)
    assert resp_a == resp_b


def test_role_mutation_interleaving(unpublished_data_dir):
    from fastapi.testclient import TestClient

    rng = random.Random(99)
    published = False
    with TestClient(make_app(unpublished_data_dir)) as client:
        for step in range(120):
            op = rng.choice(["query", "put_analyst", "put_curator", "publish_analyst", "publish_curator"])
            if op == "query":
                role = rng.choice([ANALYST_TOKEN, CURATOR_TOKEN])
                resp = client.post("/tables/people/histogram", json=HISTOGRAM_BODY, headers=auth(role))
                if role == CURATOR_TOKEN or published:
                    assert resp.status_code == 200
                else:
                    assert resp.status_code == 403
            elif op == "put_analyst":
                resp = client.put(
                    "/tables/people/policy",
                    json=people_policy(False, epsilon=rng.uniform(0.1, 2)).to_document(),
                    headers=auth(ANALYST_TOKEN),
                )
                assert resp.status_code == 403
            elif op == "put_curator":
                resp = client.put(
                    "/tables/people/policy",
                    json=people_policy(False, epsilon=round(rng.uniform(0.1, 2), 3)).to_document(),
                    headers=auth(CURATOR_TOKEN),
                )
                assert resp.status_code == (409 if published else 200)
            elif op == "publish_analyst":
                assert client.post("/tables/people/publish", headers=auth(ANALYST_TOKEN)).status_code == 403
            else:
                assert client.post("/tables/people/publish", headers=auth(CURATOR_TOKEN)).status_code == 200
                published = True
