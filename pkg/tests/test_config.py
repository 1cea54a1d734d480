"""Project config parsing: JSON/TOML documents, defaults, env overrides."""

from __future__ import annotations

import json

import pytest

from motifdex.config import ConfigError, load_config


def write_json(tmp_path, doc, name="project.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


class TestParsing:
    def test_json_defaults(self, tmp_path):
        config = load_config(write_json(tmp_path, {}), environ={})
        assert config.project_id == "motifdex"
        assert config.scoring.match_score == 1.0
        assert config.scoring.partial_score == 0.8
        assert config.scoring.gap_penalty == -0.5
        assert config.bm25.k1 == 1.5
        assert config.bm25.b == 0.75
        assert config.caps.lexical == 100
        assert config.window_words == 100
        assert config.double_rate == 0.5
        assert config.batch_size == 1500
        assert config.seeds == {"resample": 13, "split": 13}
        assert config.base_dir == tmp_path

    def test_toml_document(self, tmp_path):
        path = tmp_path / "project.toml"
        path.write_text(
            "\n".join(
                [
                    'project_id = "nights"',
                    "window_words = 50",
                    "[scoring]",
                    "match = 2.0",
                    "gap = -1.0",
                    "[bm25]",
                    "k1 = 1.2",
                    "[caps]",
                    "lexical = 10",
                    "semantic = 20",
                    "[seeds]",
                    "resample = 99",
                ]
            ),
            encoding="utf-8",
        )
        config = load_config(path, environ={})
        assert config.project_id == "nights"
        assert config.window_words == 50
        assert config.scoring.match_score == 2.0
        assert config.scoring.gap_penalty == -1.0
        assert config.scoring.partial_score == 0.8  # untouched default
        assert config.bm25.k1 == 1.2
        assert config.caps.semantic == 20
        assert config.seeds == {"resample": 99, "split": 13}

    def test_suffixless_file_tries_json_then_toml(self, tmp_path):
        path = tmp_path / "conf"
        path.write_text('project_id = "from-toml"', encoding="utf-8")
        assert load_config(path, environ={}).project_id == "from-toml"
        path.write_text('{"project_id": "from-json"}', encoding="utf-8")
        assert load_config(path, environ={}).project_id == "from-json"

    def test_garbage_document_rejected(self, tmp_path):
        path = tmp_path / "conf"
        path.write_text("{not json\nnot = = toml", encoding="utf-8")
        with pytest.raises(ConfigError) as exc:
            load_config(path, environ={})
        assert exc.value.code == "BAD_CONFIG"

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.json", environ={})

    def test_non_object_document(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(write_json(tmp_path, [1, 2, 3]), environ={})


class TestThresholds:
    def test_paper_defaults_present(self, tmp_path):
        config = load_config(write_json(tmp_path, {}), environ={})
        model = config.thresholds["mistral-embed"]
        assert model.threshold == 0.73
        assert model.provenance == "paper-published"

    def test_scalar_override_is_locally_calibrated(self, tmp_path):
        doc = {"thresholds": {"my-embed": 0.5}}
        config = load_config(write_json(tmp_path, doc), environ={})
        model = config.thresholds["my-embed"]
        assert model.threshold == 0.5
        assert model.provenance == "locally-calibrated"
        # published entries survive alongside overrides
        assert config.thresholds["sentence-t5-base"].threshold == 0.77

    def test_mapping_override_keeps_provenance(self, tmp_path):
        doc = {"thresholds": {"mistral-embed": {"threshold": 0.9, "provenance": "paper-published"}}}
        config = load_config(write_json(tmp_path, doc), environ={})
        assert config.thresholds["mistral-embed"].threshold == 0.9
        assert config.thresholds["mistral-embed"].provenance == "paper-published"


class TestShots:
    def test_shots_file_loaded(self, tmp_path):
        shots = [
            {
                "motif_description": "Viper",
                "positive_sentence": "a viper rose",
                "negative_sentence": "the king spoke",
            }
        ]
        (tmp_path / "shots.json").write_text(json.dumps(shots), encoding="utf-8")
        config = load_config(
            write_json(tmp_path, {"shots_file": "shots.json"}), environ={}
        )
        assert len(config.shots) == 1
        assert config.shots[0].motif_description == "Viper"

    def test_default_shot_set_when_unset(self, tmp_path):
        config = load_config(write_json(tmp_path, {}), environ={})
        assert len(config.shots) >= 1

    def test_missing_shots_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(write_json(tmp_path, {"shots_file": "absent.json"}), environ={})

    def test_non_array_shots_file(self, tmp_path):
        (tmp_path / "shots.json").write_text('{"oops": 1}', encoding="utf-8")
        with pytest.raises(ConfigError):
            load_config(write_json(tmp_path, {"shots_file": "shots.json"}), environ={})


class TestProviders:
    def test_provider_slots(self, tmp_path):
        doc = {
            "providers": {
                "embed": {"provider_id": "mock-embed", "base_url": "mock://embed"},
                "generate": {
                    "provider_id": "llama",
                    "base_url": "http://gpu:8000",
                    "timeout_ms": 5000,
                    "retries": 4,
                },
            }
        }
        config = load_config(write_json(tmp_path, doc), environ={})
        assert config.providers["embed"].kind == "EMBED"
        assert config.providers["embed"].base_url == "mock://embed"
        assert config.providers["generate"].kind == "GENERATE"
        assert config.providers["generate"].timeout_ms == 5000
        assert config.providers["generate"].retries == 4

    def test_unknown_slot_rejected(self, tmp_path):
        doc = {"providers": {"rerank": {"provider_id": "x", "base_url": "http://x"}}}
        with pytest.raises(ConfigError):
            load_config(write_json(tmp_path, doc), environ={})

    def test_env_overrides_base_url_and_token(self, tmp_path):
        doc = {
            "bearer_token": "from-file",
            "providers": {
                "embed": {"provider_id": "mock-embed", "base_url": "mock://embed"}
            },
        }
        environ = {
            "MOTIFDEX_EMBED_BASE_URL": "http://real-embedder:9000",
            "MOTIFDEX_BEARER_TOKEN": "from-env",
        }
        config = load_config(write_json(tmp_path, doc), environ=environ)
        assert config.providers["embed"].base_url == "http://real-embedder:9000"
        assert config.providers["embed"].provider_id == "mock-embed"
        assert config.bearer_token == "from-env"

    def test_env_url_ignored_without_slot(self, tmp_path):
        environ = {"MOTIFDEX_EMBED_BASE_URL": "http://real:9000"}
        config = load_config(write_json(tmp_path, {}), environ=environ)
        assert config.providers == {}


class TestValidation:
    @pytest.mark.parametrize(
        "doc",
        [
            {"window_words": 0},
            {"double_rate": 1.5},
            {"double_rate": -0.1},
            {"batch_size": 0},
            {"caps": {"lexical": 0}},
        ],
    )
    def test_out_of_range_values(self, tmp_path, doc):
        with pytest.raises(ConfigError):
            load_config(write_json(tmp_path, doc), environ={})

    def test_referenced_files_must_exist(self, tmp_path):
        with pytest.raises(ConfigError) as exc:
            load_config(write_json(tmp_path, {"index_file": "nope.csv"}), environ={})
        assert "nope.csv" in exc.value.detail["path"]

    def test_relative_paths_resolve_against_config_dir(self, tmp_path):
        (tmp_path / "motifs.csv").write_text(
            "motif_id,description,theme,conceptual,graph_node_count,page_refs\n",
            encoding="utf-8",
        )
        config = load_config(
            write_json(tmp_path, {"index_file": "motifs.csv"}), environ={}
        )
        assert config.resolve(config.index_file) == tmp_path / "motifs.csv"
        assert config.resolve(None) is None

    def test_store_log_not_required_to_exist(self, tmp_path):
        config = load_config(
            write_json(tmp_path, {"store_log": "will-be-created.jsonl"}), environ={}
        )
        assert config.store_log == "will-be-created.jsonl"
