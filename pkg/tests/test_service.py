"""HTTP API: prediction contract, error codes, model listing, dataset browsing."""

import json
import threading

import pytest
from fastapi.testclient import TestClient

from toxspan import corpus
from toxspan.registry import Registry
from toxspan.service import ServiceSettings, create_app

from conftest import DATA_DIR, make_span_dataset


@pytest.fixture
def registry(tmp_path, trained_model_dir):
    reg = Registry(cache_dir=tmp_path / "cache", registry_url=None, offline=False)
    reg.register_local("en-base", trained_model_dir)
    return reg


@pytest.fixture
def datasets(table1):
    greek = corpus.parse_span_csv(DATA_DIR / "greek.csv", name="greek-fixture", language="el")
    return {"tsd-trial-fixture": table1, "greek-fixture": greek}


@pytest.fixture
def client(registry, datasets):
    settings = ServiceSettings(max_text_length=500, datasets=datasets)
    app = create_app(registry=registry, settings=settings)
    with TestClient(app) as c:
        yield c


class TestPredictEndpoint:
    def test_known_toxic_sentence(self, client):
        resp = client.post("/api/spans", json={"text": "this is fucking crazy!!", "model": "en-base"})
        assert resp.status_code == 200
        body = resp.json()
        assert body["spans"] == [[8, 15]]
        assert body["offsets"] == list(range(8, 15))
        assert body["model"] == "en-base"
        assert body["latency_ms"] >= 0

    def test_empty_text(self, client):
        resp = client.post("/api/spans", json={"text": "", "model": "en-base"})
        assert resp.status_code == 200
        assert resp.json()["spans"] == []
        assert resp.json()["offsets"] == []

    def test_unknown_model_404_lists_available(self, client):
        resp = client.post("/api/spans", json={"text": "x", "model": "nope"})
        assert resp.status_code == 404
        assert "en-base" in resp.json()["detail"]

    def test_malformed_body_400(self, client):
        assert client.post("/api/spans", json={"text": "x"}).status_code == 400
        assert client.post("/api/spans", json={"model": "en-base"}).status_code == 400
        assert (
            client.post(
                "/api/spans", content=b"{not json", headers={"content-type": "application/json"}
            ).status_code
            == 400
        )

    def test_oversize_text_400(self, client):
        resp = client.post("/api/spans", json={"text": "x" * 501, "model": "en-base"})
        assert resp.status_code == 400
        assert "limit" in resp.json()["detail"]

    def test_response_spans_bound_valid(self, client):
        text = "you're a stupid pathetic idiot."
        resp = client.post("/api/spans", json={"text": text, "model": "en-base"})
        for start, end in resp.json()["spans"]:
            assert 0 <= start < end <= len(text)

    def test_deterministic_for_fixed_model_and_text(self, client):
        payload = {"text": "the stupid window again", "model": "en-base"}
        first = client.post("/api/spans", json=payload).json()["offsets"]
        second = client.post("/api/spans", json=payload).json()["offsets"]
        assert first == second

    def test_contract_matches_library_predict(self, client, registry, table1, fixture_dataset):
        model = registry.resolve("en-base")
        texts = [p.text for p in table1.posts] + [p.text for p in fixture_dataset.posts][:46]
        assert len(texts) == 50
        for text in texts:
            resp = client.post("/api/spans", json={"text": text, "model": "en-base"})
            assert resp.status_code == 200
            body = resp.json()
            spans, _ = model.predict(text)
            assert json.dumps(body["offsets"]) == json.dumps(list(spans.offsets))
            assert json.dumps(body["spans"]) == json.dumps([[s, e] for s, e in spans.to_ranges()])

    def test_merge_adjacent_flag_honored(self, client, registry):
        text = "stupid idiot weather"
        merged = client.post(
            "/api/spans", json={"text": text, "model": "en-base", "merge_adjacent": True}
        ).json()
        plain = client.post("/api/spans", json={"text": text, "model": "en-base"}).json()
        assert set(map(tuple, plain["spans"])).issubset(
            {(s, e) for s, e in merged["spans"]} | set(map(tuple, plain["spans"]))
        )
        model = registry.resolve("en-base")
        assert merged["offsets"] == list(model.predict(text, merge_adjacent=True)[0].offsets)


class TestLoadingState:
    def test_second_request_gets_503_while_loading(self, tmp_path, trained_model_dir, datasets):
        inner = Registry(cache_dir=tmp_path / "cache", offline=False)
        inner.register_local("en-base", trained_model_dir)
        started = threading.Event()
        release = threading.Event()

        class GatedRegistry:
            offline = False

            def resolve(self, name):
                model = inner.resolve("en-base")
                if name == "slow-model":
                    started.set()
                    assert release.wait(timeout=10)
                return model

            def list_models(self):
                return inner.list_models()

            def is_cached(self, name):
                return inner.is_cached(name)

        app = create_app(registry=GatedRegistry(), settings=ServiceSettings(datasets=datasets))
        with TestClient(app) as client:
            results = {}

            def first_request():
                results["first"] = client.post(
                    "/api/spans", json={"text": "hello", "model": "slow-model"}
                )

            thread = threading.Thread(target=first_request)
            thread.start()
            assert started.wait(timeout=10)
            blocked = client.post("/api/spans", json={"text": "hello", "model": "slow-model"})
            assert blocked.status_code == 503
            assert "Retry-After" in blocked.headers
            release.set()
            thread.join(timeout=30)
            assert results["first"].status_code == 200


class TestModelsEndpoint:
    def test_lists_builtins_plus_registered(self, client):
        resp = client.get("/api/models")
        assert resp.status_code == 200
        entries = {e["name"]: e for e in resp.json()}
        assert {"en-base", "en-large", "multilingual-base", "multilingual-large"} <= set(entries)
        assert entries["en-base"]["available"] is True
        # en-base is overridden by the local registration; en-large keeps its card
        assert entries["en-large"]["reported_span_f1"] == 0.6886

    def test_offline_empty_cache_flags_unavailable(self, tmp_path, datasets):
        registry = Registry(cache_dir=tmp_path / "empty-cache", offline=True)
        app = create_app(registry=registry, settings=ServiceSettings(datasets=datasets))
        with TestClient(app) as client:
            entries = client.get("/api/models").json()
        assert entries and all(e["available"] is False for e in entries)


class TestDatasetsEndpoint:
    def test_dataset_index(self, client):
        resp = client.get("/api/datasets")
        assert resp.status_code == 200
        entries = {e["name"]: e for e in resp.json()}
        assert set(entries) == {"tsd-trial-fixture", "greek-fixture"}
        assert entries["tsd-trial-fixture"]["total"] == 4
        assert entries["greek-fixture"]["language"] == "el"

    def test_first_page_in_file_order(self, client, table1):
        resp = client.get("/api/datasets/tsd-trial-fixture", params={"page": 0, "size": 4})
        assert resp.status_code == 200
        body = resp.json()
        assert body["total"] == 4
        assert [p["id"] for p in body["posts"]] == [p.id for p in table1.posts]
        assert body["posts"][3]["spans"] == [12, 13, 14, 15, 16]
        assert body["posts"][3]["span_pairs"] == [[12, 17]]

    def test_page_beyond_end_is_empty_200(self, client):
        resp = client.get("/api/datasets/tsd-trial-fixture", params={"page": 9, "size": 4})
        assert resp.status_code == 200
        assert resp.json()["posts"] == []

    def test_unknown_dataset_404(self, client):
        assert client.get("/api/datasets/nope").status_code == 404

    def test_bad_pagination_400(self, client):
        assert (
            client.get("/api/datasets/tsd-trial-fixture", params={"page": -1}).status_code == 400
        )
        assert (
            client.get("/api/datasets/tsd-trial-fixture", params={"size": 0}).status_code == 400
        )

    def test_greek_fixture_code_points(self, client):
        body = client.get("/api/datasets/greek-fixture", params={"size": 2}).json()
        first = body["posts"][0]
        assert first["text"] == "Είσαι εντελώς ηλίθιος."
        assert first["spans"] == list(range(14, 21))
        start, end = first["span_pairs"][0]
        assert first["text"][start:end] == "ηλίθιος"


class TestModelPool:
    def test_lru_eviction(self, tmp_path, trained_model_dir, datasets):
        registry = Registry(cache_dir=tmp_path / "cache", offline=False)
        registry.register_local("en-base", trained_model_dir)
        registry.register_local("second", trained_model_dir)
        settings = ServiceSettings(datasets=datasets, model_lru_size=1)
        app = create_app(registry=registry, settings=settings)
        with TestClient(app) as client:
            client.post("/api/spans", json={"text": "a", "model": "en-base"})
            assert app.state.manager.loaded_names() == ["en-base"]
            client.post("/api/spans", json={"text": "a", "model": "second"})
            assert app.state.manager.loaded_names() == ["second"]
