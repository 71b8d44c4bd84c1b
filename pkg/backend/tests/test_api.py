from app import verification
from app.schemas import Verdict, VerificationReport


def test_root(client):
    assert client.get("/").json() == {"name": "pseudodyn", "docs": "/docs"}


def test_list_systems(client):
    body = client.get("/api/systems").json()
    assert "family-b" in body["systems"]
    assert "tq" in body["lemmas"]
    assert body["probes"] == ["transitivity", "dpo", "sensitivity", "halo", "naive-demo", "orbit"]


def test_build_system_manifest(client):
    response = client.post("/api/systems/cat-map", json={"params": {}})
    assert response.status_code == 200
    manifest = response.json()
    assert manifest["space"] == "torus"
    assert manifest["compact_generation"]["sigma_sq"] == {"a": "1/64", "b": "0/1"}


def test_unknown_system_is_404(client):
    response = client.post("/api/systems/nowhere", json={})
    assert response.status_code == 404
    assert response.json()["error"] == "UnknownSystem"


def test_bad_system_params_are_400(client):
    response = client.post("/api/systems/family-b", json={"params": {"n_max": 0}})
    assert response.status_code == 400
    assert response.json()["error"] == "BadParams"


def test_verify_lemma(client):
    response = client.post("/api/verify/tq", json={"params": {"n": 2, "m": 1}, "seed": 3})
    assert response.status_code == 200
    body = response.json()
    assert body["verdict"] == "Established"
    assert body["run"]["target"] == "tq"


def test_failed_verification_is_409(client, monkeypatch):
    failing = VerificationReport(lemma="tq", claim="nothing holds", verdict=Verdict.COUNTEREXAMPLE)
    monkeypatch.setitem(verification.LEMMAS, "tq", lambda **_: failing)
    response = client.post("/api/verify/tq", json={})
    assert response.status_code == 409
    assert response.json()["report"]["verdict"] == "CounterexampleFound"


def test_unknown_lemma_is_400(client):
    assert client.post("/api/verify/nope", json={}).status_code == 400


def test_probe_dpo_on_the_line(client):
    response = client.post("/api/probe/dpo", json={"system": "line", "params": {"u": "0:3/2", "samples": 4}})
    assert response.status_code == 200
    body = response.json()
    assert body["verdict"] == "Established"
    assert body["metrics"]["witnessed"] == 4
    assert body["run"]["system"] == "line"


def test_probe_sensitivity_takes_radius_strings(client):
    payload = {"system": "cat-map", "params": {"samples": 2, "depth": 4, "radius": "1/64,1/256"}, "seed": 1}
    body = client.post("/api/probe/sensitivity", json=payload).json()
    assert body["params"]["radius_schedule"] == ["1/64", "1/256"]
    assert body["run"]["seed"] == 1


def test_orbit_route_returns_the_graph(client):
    body = client.post("/api/probe/orbit", json={"params": {"point": "1/5,2/5", "max_nodes": 10}}).json()
    assert body["verdict"] == "Established"
    graph = body["witnesses"][0]
    assert graph["status"] == "Complete"
    assert len(graph["nodes"]) == 2
    assert sorted(graph["edges"]) == [[0, "f", -1, 1], [0, "f", 1, 1], [1, "f", -1, 0], [1, "f", 1, 0]]
    assert body["params"]["max_nodes"] == 10


def test_unsupported_probe_is_422(client):
    response = client.post("/api/probe/transitivity", json={"system": "line"})
    assert response.status_code == 422
    assert response.json()["error"] == "UnsupportedRegion"
