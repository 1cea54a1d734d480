"""REST service: endpoint contracts, status-code mapping, background jobs."""

from __future__ import annotations

import time
from types import SimpleNamespace

import pytest
from fastapi.testclient import TestClient

from motifdex.classifiers import ThresholdModel
from motifdex.config import ProjectConfig
from motifdex.corpus import SentenceRecord, normalize, tokenize
from motifdex.motif_index import load_index
from motifdex.providers import (
    MockEmbeddingProvider,
    MockGenerator,
    MockPairScorer,
    ProviderTimeout,
)
from motifdex.service import create_app
from motifdex.store import AnnotationStore

INDEX_CSV = """motif_id,description,theme,conceptual,graph_node_count,page_refs
B3,Viper with human face,B,simple,2,burton:1:14
B3.1,Viper speaks to the king,B,simple,2,
C1,Maiden finds a treasure in the sea,C,complex,4,burton:3:120
"""

SENTENCES = [
    ("s1", "The viper hissed at the king.", 1),
    ("s2", "The king spoke to the maiden.", 1),
    ("s3", "A serpent slid into the sea.", 1),
    ("s4", "The maiden found a treasure of jewels.", 2),
    ("s5", "A viper with a human face.", 2),
    ("s6", "The fish leapt from the sea.", 2),
]

QUEUE = [("B3", "s1"), ("B3", "s5"), ("C1", "s4"), ("B3.1", "s2")]


@pytest.fixture()
def world(toy_resource, tmp_path):
    index_path = tmp_path / "motifs.csv"
    index_path.write_text(INDEX_CSV, encoding="utf-8")
    index = load_index(index_path)

    sentences = []
    for sid, text, page_no in SENTENCES:
        clean = normalize(text)
        sentences.append(
            SentenceRecord(
                sentence_id=sid,
                volume_no=1,
                page_no=page_no,
                char_start=0,
                char_end=len(clean),
                text=clean,
                tokens=tokenize(clean, toy_resource),
            )
        )

    config = ProjectConfig(project_id="test-project", batch_size=4, double_rate=0.5)
    config.thresholds["mock-embed"] = ThresholdModel("mock-embed", 0.5)

    store = AnnotationStore(
        known_motifs={"B3", "B3.1", "C1"},
        known_sentences={s.sentence_id for s in sentences},
    )
    store.enqueue_candidates(QUEUE)

    app = create_app(
        store,
        motif_index=index,
        sentences=sentences,
        resource=toy_resource,
        config=config,
        embedder=MockEmbeddingProvider(toy_resource),
        scorer=MockPairScorer(toy_resource),
        generator=MockGenerator(toy_resource),
    )
    return SimpleNamespace(client=TestClient(app), store=store, config=config)


def wait_job(client: TestClient, job_id: str, timeout: float = 10.0) -> dict:
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        body = client.get(f"/api/jobs/{job_id}").json()
        if body["status"] in ("done", "error"):
            return body
        time.sleep(0.01)
    raise AssertionError(f"job {job_id} did not finish within {timeout}s")


def label_body(motif_id, sentence_id, annotator_id, label, expression=None, **extra):
    body = {
        "motif_id": motif_id,
        "sentence_id": sentence_id,
        "annotator_id": annotator_id,
        "label": label,
    }
    if expression is not None:
        body["expression"] = expression
    body.update(extra)
    return body


def make_disagreement(world):
    """Assign (B3, s1) to two annotators and give it conflicting labels."""
    first = world.client.get(
        "/api/batches/next", params={"annotator": "ann-a", "size": 4}
    ).json()
    second = world.client.get(
        "/api/batches/next", params={"annotator": "ann-b", "size": 4}
    ).json()
    assert {"motif_id": "B3", "sentence_id": "s1"} in second["double_subset"]
    world.client.post(
        "/api/labels", json=label_body("B3", "s1", "ann-a", "positive", "simple")
    ).raise_for_status()
    world.client.post(
        "/api/labels", json=label_body("B3", "s1", "ann-b", "negative")
    ).raise_for_status()
    return first, second


class TestWorkflow:
    def test_health(self, world):
        body = world.client.get("/api/health").json()
        assert body == {"status": "ok", "project_id": "test-project"}

    def test_next_batch_draws_from_queue(self, world):
        response = world.client.get(
            "/api/batches/next", params={"annotator": "ann-a", "size": 2}
        )
        assert response.status_code == 200
        body = response.json()
        assert body["batch_id"] == "batch-00000"
        assert body["annotator_id"] == "ann-a"
        assert body["pairs"] == [
            {"motif_id": "B3", "sentence_id": "s1"},
            {"motif_id": "B3", "sentence_id": "s5"},
        ]
        assert body["double_subset"] == []  # nothing singly-assigned yet

    def test_empty_queue_conflict(self, world):
        world.client.get("/api/batches/next", params={"annotator": "ann-a"})
        # ann-a drew the whole queue; a double for ann-a itself is not allowed
        response = world.client.get(
            "/api/batches/next", params={"annotator": "ann-a"}
        )
        assert response.status_code == 409
        assert response.json()["code"] == "EMPTY_QUEUE"

    def test_label_roundtrip(self, world):
        world.client.get("/api/batches/next", params={"annotator": "ann-a"})
        response = world.client.post(
            "/api/labels", json=label_body("B3", "s1", "ann-a", "positive", "simple")
        )
        assert response.status_code == 201
        created = response.json()
        assert created["label"] == "positive"
        assert created["expression"] == "simple"
        assert created["timestamp"]
        listed = world.client.get("/api/labels", params={"motif_id": "B3"}).json()
        assert [r["sentence_id"] for r in listed["records"]] == ["s1"]
        remaining = world.client.get(
            "/api/batches/remaining", params={"annotator": "ann-a"}
        ).json()
        assert {"motif_id": "B3", "sentence_id": "s1"} not in remaining["pairs"]
        assert len(remaining["pairs"]) == 3

    def test_label_without_assignment_conflict(self, world):
        response = world.client.post(
            "/api/labels", json=label_body("B3", "s1", "ann-x", "negative")
        )
        assert response.status_code == 409
        assert response.json()["code"] == "NOT_ASSIGNED"

    def test_duplicate_label_conflict(self, world):
        world.client.get("/api/batches/next", params={"annotator": "ann-a"})
        body = label_body("B3", "s1", "ann-a", "negative")
        assert world.client.post("/api/labels", json=body).status_code == 201
        response = world.client.post("/api/labels", json=body)
        assert response.status_code == 409
        assert response.json()["code"] == "DUPLICATE_RECORD"

    def test_invalid_enum_is_schema_violation(self, world):
        response = world.client.post(
            "/api/labels", json=label_body("B3", "s1", "ann-a", "maybe")
        )
        assert response.status_code == 400
        assert response.json()["code"] == "SCHEMA_VIOLATION"

    def test_positive_without_expression_is_domain_error(self, world):
        world.client.get("/api/batches/next", params={"annotator": "ann-a"})
        response = world.client.post(
            "/api/labels", json=label_body("B3", "s1", "ann-a", "positive")
        )
        assert response.status_code == 422
        assert response.json()["code"] == "MISSING_EXPRESSION"

    def test_disagreement_then_adjudication(self, world):
        make_disagreement(world)
        listed = world.client.get("/api/disagreements").json()["disagreements"]
        assert len(listed) == 1
        assert listed[0]["motif_id"] == "B3"
        assert {r["annotator_id"] for r in listed[0]["records"]} == {"ann-a", "ann-b"}

        response = world.client.post(
            "/api/adjudications",
            json={
                "motif_id": "B3",
                "sentence_id": "s1",
                "final_label": "positive",
                "final_expression": "simple",
                "resolver_id": "resolver-1",
                "note": "clear match",
            },
        )
        assert response.status_code == 201
        assert response.json()["final_label"] == "positive"
        assert world.client.get("/api/disagreements").json()["disagreements"] == []

    def test_adjudicating_clean_pair_conflict(self, world):
        response = world.client.post(
            "/api/adjudications",
            json={
                "motif_id": "B3",
                "sentence_id": "s1",
                "final_label": "negative",
                "resolver_id": "resolver-1",
            },
        )
        assert response.status_code == 409
        assert response.json()["code"] == "NOT_IN_QUEUE"


class TestReferenceData:
    def test_motifs_listing(self, world):
        body = world.client.get("/api/motifs").json()
        assert [m["motif_id"] for m in body["motifs"]] == ["B3", "B3.1", "C1"]
        single = world.client.get("/api/motifs/C1").json()
        assert single["conceptual"] == "complex"
        assert single["graph_node_count"] == 4
        assert single["page_refs"] == ["burton:3:120"]

    def test_unknown_motif_404(self, world):
        response = world.client.get("/api/motifs/Z9")
        assert response.status_code == 404
        assert response.json()["code"] == "NOT_FOUND"

    def test_pair_context_neighbours(self, world):
        body = world.client.get("/api/pairs/B3|s3/context").json()
        assert body["motif_description"] == "Viper with human face"
        assert body["sentence_text"] == "a serpent slid into the sea."
        assert body["before"] == [
            "the viper hissed at the king.",
            "the king spoke to the maiden.",
        ]
        assert body["after"] == [
            "the maiden found a treasure of jewels.",
            "a viper with a human face.",
        ]

    def test_pair_context_clamps_at_volume_start(self, world):
        body = world.client.get("/api/pairs/B3|s1/context").json()
        assert body["before"] == []
        assert len(body["after"]) == 2

    def test_pair_context_bad_ids(self, world):
        assert world.client.get("/api/pairs/no-separator/context").status_code == 404
        assert world.client.get("/api/pairs/B3|zz/context").status_code == 404


class TestMonitoring:
    def test_agreement_grid_has_nine_cells(self, world):
        make_disagreement(world)
        # add an agreeing double on the same batches
        world.client.post(
            "/api/labels", json=label_body("B3", "s5", "ann-a", "negative")
        ).raise_for_status()
        world.client.post(
            "/api/labels", json=label_body("B3", "s5", "ann-b", "negative")
        ).raise_for_status()
        body = world.client.get("/api/agreement").json()
        assert body["double_pairs"] == 2
        assert len(body["cells"]) == 9
        overall = next(
            c
            for c in body["cells"]
            if c["conceptual"] == "overall" and c["expression"] == "overall"
        )
        assert overall["pairs"] == 2
        # doubles: one agree + one disagree, second rater constant-negative
        assert overall["kappa"] == 0.0
        assert overall["degenerate"] is False

    def test_progress_accounting(self, world):
        world.client.get("/api/batches/next", params={"annotator": "ann-a"})
        world.client.post(
            "/api/labels", json=label_body("B3", "s1", "ann-a", "positive", "simple")
        ).raise_for_status()
        body = world.client.get("/api/progress").json()
        assert body["project_id"] == "test-project"
        accounting = body["accounting"]
        assert accounting["records"] == 1
        assert accounting["positives"] == 1
        assert accounting["assigned_pairs"] == 4
        assert body["thresholds"]["mock-embed"] == {
            "threshold": 0.5,
            "provenance": "locally-calibrated",
        }

    def test_recalibrate_updates_threshold_table(self, world):
        response = world.client.post(
            "/api/recalibrate",
            json={
                "provider_id": "new-embed",
                "positive_scores": [0.8, 0.9],
                "negative_scores": [0.1, 0.2],
            },
        )
        assert response.status_code == 200
        assert response.json() == {
            "provider_id": "new-embed",
            "threshold": 0.5,
            "provenance": "locally-calibrated",
        }
        progress = world.client.get("/api/progress").json()
        assert progress["thresholds"]["new-embed"]["threshold"] == 0.5

    def test_recalibrate_needs_both_classes(self, world):
        response = world.client.post(
            "/api/recalibrate",
            json={"provider_id": "new-embed", "positive_scores": [0.8]},
        )
        assert response.status_code == 422


class TestJobs:
    def test_rerank_job(self, world):
        submitted = world.client.post(
            "/api/jobs/classify",
            json={
                "method": "rerank",
                "pairs": [
                    {"motif_id": "B3", "sentence_id": "s1"},
                    {"motif_id": "B3", "sentence_id": "s2"},
                ],
            },
        )
        assert submitted.status_code == 202
        job = wait_job(world.client, submitted.json()["job_id"])
        assert job["status"] == "done"
        verdicts = job["result"]["verdicts"]
        assert [v["label"] for v in verdicts] == ["positive", "negative"]
        assert all(v["method"] == "rerank" for v in verdicts)

    def test_threshold_job(self, world):
        submitted = world.client.post(
            "/api/jobs/classify",
            json={
                "method": "threshold",
                "provider_id": "mock-embed",
                "pairs": [
                    {"motif_id": "B3", "sentence_id": "s5"},
                    {"motif_id": "B3", "sentence_id": "s2"},
                ],
            },
        )
        job = wait_job(world.client, submitted.json()["job_id"])
        assert job["status"] == "done"
        verdicts = job["result"]["verdicts"]
        assert verdicts[0]["label"] == "positive"  # near-verbatim restatement
        assert verdicts[0]["score"] > 0.5
        assert verdicts[1]["label"] == "negative"
        assert verdicts[1]["score"] < 0.5

    def test_threshold_job_unknown_provider(self, world):
        submitted = world.client.post(
            "/api/jobs/classify",
            json={
                "method": "threshold",
                "provider_id": "no-such-provider",
                "pairs": [{"motif_id": "B3", "sentence_id": "s1"}],
            },
        )
        job = wait_job(world.client, submitted.json()["job_id"])
        assert job["status"] == "error"
        assert job["error"]["code"] == "BAD_CONFIG"

    def test_generative_job(self, world):
        submitted = world.client.post(
            "/api/jobs/classify",
            json={
                "method": "zero-shot",
                "pairs": [
                    {"motif_id": "B3", "sentence_id": "s1"},
                    {"motif_id": "B3", "sentence_id": "s6"},
                ],
            },
        )
        job = wait_job(world.client, submitted.json()["job_id"])
        assert job["status"] == "done"
        labels = [v["label"] for v in job["result"]["verdicts"]]
        assert labels == ["positive", "negative"]
        assert job["result"]["failures"] == []

    def test_job_unknown_reference(self, world):
        submitted = world.client.post(
            "/api/jobs/classify",
            json={
                "method": "rerank",
                "pairs": [{"motif_id": "Z9", "sentence_id": "s1"}],
            },
        )
        job = wait_job(world.client, submitted.json()["job_id"])
        assert job["status"] == "error"
        assert job["error"]["code"] == "UNKNOWN_REFERENCE"

    def test_retrieve_job(self, world):
        submitted = world.client.post(
            "/api/jobs/retrieve", json={"motif_id": "B3"}
        )
        assert submitted.status_code == 202
        job = wait_job(world.client, submitted.json()["job_id"])
        assert job["status"] == "done"
        rows = job["result"]["candidates"]
        assert all(row["motif_id"] == "B3" for row in rows)
        retrieved = {row["sentence_id"] for row in rows}
        assert "s5" in retrieved  # lexical overlap with the description
        assert {row["stage"] for row in rows} <= {"lex", "sem", "both"}

    def test_unknown_job_404(self, world):
        assert world.client.get("/api/jobs/job-99999").status_code == 404


class TestErrorMapping:
    def test_provider_failure_maps_to_502(self, world, monkeypatch):
        def boom(*args, **kwargs):
            raise ProviderTimeout("backend stalled", request_id="r-1")

        monkeypatch.setattr(world.store, "next_batch", boom)
        response = world.client.get(
            "/api/batches/next", params={"annotator": "ann-a"}
        )
        assert response.status_code == 502
        assert response.json()["code"] == "PROVIDER_TIMEOUT"

    def test_missing_body_field_is_400(self, world):
        response = world.client.post("/api/labels", json={"motif_id": "B3"})
        assert response.status_code == 400
        body = response.json()
        assert body["code"] == "SCHEMA_VIOLATION"
        assert body["detail"]["errors"]

    def test_error_body_shape(self, world):
        response = world.client.post(
            "/api/labels", json=label_body("B3", "s1", "ann-x", "negative")
        )
        assert set(response.json()) == {"module", "code", "message", "detail"}


class TestAuth:
    @pytest.fixture()
    def guarded(self, toy_resource):
        config = ProjectConfig(bearer_token="sekrit")
        store = AnnotationStore()
        app = create_app(store, config=config)
        return TestClient(app)

    def test_missing_token_401(self, guarded):
        response = guarded.get("/api/health")
        assert response.status_code == 401
        assert response.json()["code"] == "UNAUTHORIZED"

    def test_wrong_token_401(self, guarded):
        response = guarded.get(
            "/api/health", headers={"Authorization": "Bearer wrong"}
        )
        assert response.status_code == 401

    def test_valid_token_ok(self, guarded):
        response = guarded.get(
            "/api/health", headers={"Authorization": "Bearer sekrit"}
        )
        assert response.status_code == 200
