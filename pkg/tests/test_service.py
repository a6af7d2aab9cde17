import json
import warnings

import numpy as np
import pytest

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    from starlette.testclient import TestClient

from treepot.service.app import app


@pytest.fixture(scope="module")
def client():
    return TestClient(app)


def test_health(client):
    r = client.get("/health")
    assert r.status_code == 200 and r.json()["status"] == "ok"


def test_verify_inverse(client):
    r = client.post("/tree/verify-inverse", json={"tree": {"fixture": "f1"}, "depth": 2})
    body = r.json()
    assert r.status_code == 200
    assert body["residual"] <= 1e-12 and body["certified"] and body["nodes"] == 5


def test_verify_inverse_inline_spec(client):
    spec = {"kind": "finite", "children": {"": 2, "0": 2},
            "weights": {"prefix": [1.0, 2.0, 4.0], "tail": None}}
    r = client.post("/tree/verify-inverse", json={"tree": {"spec": spec}, "depth": 2})
    assert r.status_code == 200 and r.json()["certified"]


def test_potential_deterministic_csv(client):
    req = {"tree": {"fixture": "f1"}, "depth": 1}
    a = client.post("/tree/potential", json=req).json()
    b = client.post("/tree/potential", json=req).json()
    assert a["csv"] == b["csv"]
    assert a["order"] == ["", "0", "1"]
    assert abs(a["potential"][0][0] - 2.0 / 3.0) <= 1e-12


def test_harmonic_decomp(client):
    r = client.post("/tree/harmonic-decomp", json={"tree": {"fixture": "f1"}, "depth": 1})
    body = r.json()
    assert body["rank"] == 1 and body["btilde"] == ["0"]
    assert body["qbar_residual"] <= 1e-12


def test_chain_endpoints(client):
    r = client.post("/chain/classify", json={"tree": {"fixture": "homog2"}})
    assert r.json()["classification"] == "transient"
    r2 = client.post("/chain/simulate",
                     json={"tree": {"fixture": "homog2"}, "seed": 5, "paths": 200,
                           "max_level": 12, "resolution": 1,
                           "include_trajectory": True})
    body = r2.json()
    assert sum(body["status_counts"].values()) == 200
    assert body["trajectory_csv"].splitlines()[0] == "step,node,holding"
    r3 = client.post("/chain/absorption", json={"tree": {"fixture": "homog2"}})
    assert abs(r3.json()["mid"] - 0.4) <= 1e-8
    r4 = client.post("/chain/hitting",
                     json={"tree": {"fixture": "homog2"}, "source": "0",
                           "target": "1", "mode": "reflected"})
    assert abs(r4.json()["mid"] - 0.25) <= 1e-8


def test_exit_measure_endpoint_and_domain_error(client):
    r = client.post("/boundary/exit-measure",
                    json={"tree": {"fixture": "homog2"}, "resolution": 2})
    body = r.json()
    assert body["converged"]
    assert abs(body["masses"]["0"][0] - 1.0 / 3.0) <= 1e-10
    bad = client.post("/boundary/exit-measure",
                      json={"tree": {"fixture": "single_ray"}, "resolution": 1})
    assert bad.status_code == 422
    err = bad.json()
    assert err["code"] == "domain" and err["module"] == "boundary_measure"


def test_boundary_kernel_endpoint(client):
    r = client.post("/boundary/kernel",
                    json={"tree": {"fixture": "homog2"}, "t": 0.7,
                          "xi": {"prefix": [0], "repeat": [0]},
                          "eta": {"prefix": [1], "repeat": [0]}})
    body = r.json()
    assert body["meet_level"] == 0
    assert abs(body["p"] - (np.exp(-0.42) - np.exp(-1.05))) <= 1e-10
    assert body["green_residual"] <= 1e-10


def test_boundary_simulate_endpoint(client):
    r = client.post("/boundary/simulate",
                    json={"tree": {"fixture": "homog2"}, "seed": 4, "paths": 500,
                          "resolution": 3, "horizon": 30.0})
    body = r.json()
    assert body["paths"] == 500
    assert body["killed"] == 500
    assert abs(body["mean_lifetime"] - 5.0 / 3.0) <= 4 * (5.0 / 3.0) / np.sqrt(500)


def test_martin_endpoint(client):
    r = client.post("/martin/kernel",
                    json={"tree": {"fixture": "homog2"}, "node": "0",
                          "mode": "reflected", "ray": {"prefix": [0], "repeat": [0]}})
    assert abs(r.json()["value"] - 2.0) <= 1e-9


def test_ultra_endpoints(client):
    ok = client.post("/ultra/check", json={"matrix": {"fixture": "f4"}}).json()
    assert ok["ultrametric"] and ok["H1"]
    viol = client.post("/ultra/check",
                       json={"matrix": {"values": [[1, 0.3, 0.5], [0.3, 1, 0.4],
                                                   [0.5, 0.4, 1]]}}).json()
    assert viol["ultrametric"] is False
    emb = client.post("/ultra/embed", json={"matrix": {"fixture": "f4"}}).json()
    assert emb["embedding"] == {"0": "", "1": "0", "2": "1.0"}
    assert emb["restriction_residual"] == 0.0
    gen = client.post("/ultra/generator", json={"matrix": {"fixture": "f4"}}).json()
    assert gen["certified"]
    fam = client.post("/ultra/check", json={"family": {"fixture": "words_ex2"}}).json()
    assert fam["boundary"]["boundary_empty_flag"]


def test_schema_error_code(client):
    r = client.post("/tree/verify-inverse",
                    json={"tree": {"spec": {"kind": "nope"}}, "depth": 1})
    assert r.status_code == 422
    assert r.json()["code"] == "schema"


def test_hypothesis_error_code(client):
    r = client.post("/ultra/embed",
                    json={"matrix": {"values": [[1.0, 1.0], [1.0, 1.0]]}})
    assert r.status_code == 422 and r.json()["code"] == "hypothesis"


def test_report_endpoint_fast(client):
    r = client.post("/report/all", json={"fast": True})
    body = r.json()
    assert r.status_code == 200
    assert len(body["criteria"]) == 10
    assert body["passed"], [c for c in body["criteria"] if not c["passed"]]
