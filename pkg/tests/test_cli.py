"""End-to-end command tests: prepare -> train -> predict -> evaluate.

Everything runs in-process through main(argv) on a small synthetic corpus,
so the full pipeline stays fast enough for the default suite.
"""

import json
import os

import numpy as np
import pytest

from abusekit.cli import main
from abusekit.corpus import read_dataset
from abusekit.embeddings import write_vector_file
from abusekit.synthetic import (make_marker_corpus, make_vector_file,
                                vocabulary_of, write_gold_csv, write_test_csv,
                                write_uli_csv)

MODEL_SECTION = {
    "seq_len": 12, "embed_dim": 16, "conv_filters": 8, "conv_kernel": 2,
    "lstm_units": 8, "dense_units": 8, "lstm_dropout": 0.0,
    "lstm_recurrent_dropout": 0.0, "spatial_dropout_rate": 0.0,
    "final_dropout_rate": 0.0,
}


def write_config(path, train_jsonl, embeddings, out_dir=None, **train_overrides):
    train = {"task": 1, "language": "en", "folds": 3, "epochs": 8,
             "batch_size": 8, "seed": 5, "optimizer": {"lr": 5e-3}}
    train.update(train_overrides)
    config = {
        "data": {"train": str(train_jsonl), "embeddings": str(embeddings)},
        "model": dict(MODEL_SECTION),
        "train": train,
    }
    if out_dir is not None:
        config["output_dir"] = str(out_dir)
    path.write_text(json.dumps(config, indent=2), encoding="utf-8")
    return path


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One full prepare->train->predict run shared by the assertion tests."""
    saved_env = os.environ.pop("ABUSE_DETECT_THREADS", None)
    root = tmp_path_factory.mktemp("cli")
    examples = make_marker_corpus(80, seed=3, pool_size=30)
    uli_csv = root / "uli.csv"
    write_uli_csv(uli_csv, examples, language="en", drop_first_n=2)

    vectors = make_vector_file(vocabulary_of(examples), dim=16, seed=1)
    emb_path = root / "vectors.txt"
    write_vector_file(vectors, emb_path)

    prep_dir = root / "prep"
    rc = main(["prepare", "--input", str(uli_csv), "--language", "en",
               "--task", "1", "--out", str(prep_dir), "--seed", "0"])
    assert rc == 0

    config_path = write_config(root / "run.json", prep_dir / "train.jsonl",
                               emb_path, out_dir=root / "run")
    rc = main(["train", "--config", str(config_path)])
    assert rc == 0

    test_examples = read_dataset(prep_dir / "test.jsonl")
    test_csv = root / "test_posts.csv"
    ids = write_test_csv(test_csv, test_examples)
    gold_csv = root / "gold.csv"
    write_gold_csv(gold_csv, ids, [ex.labels["1"] for ex in test_examples])

    sub_csv = root / "submission.csv"
    rc = main(["predict", "--run-dir", str(root / "run"),
               "--input", str(test_csv), "--out", str(sub_csv)])
    assert rc == 0

    yield {
        "root": root, "examples": examples, "uli_csv": uli_csv,
        "emb_path": emb_path, "prep_dir": prep_dir, "config": config_path,
        "run_dir": root / "run", "test_csv": test_csv, "gold_csv": gold_csv,
        "sub_csv": sub_csv, "test_count": len(test_examples),
    }
    if saved_env is not None:
        os.environ["ABUSE_DETECT_THREADS"] = saved_env


class TestPrepare:
    def test_split_files_and_manifest(self, pipeline):
        prep = pipeline["prep_dir"]
        train = read_dataset(prep / "train.jsonl")
        test = read_dataset(prep / "test.jsonl")
        manifest = json.loads((prep / "prepare.json").read_text(encoding="utf-8"))
        assert manifest["posts_parsed"] == 80
        assert manifest["posts_dropped"] == 2
        assert manifest["posts_kept"] == 78
        assert len(train) == manifest["train_count"] == round(78 * 0.8)
        assert len(test) == manifest["test_count"] == 78 - round(78 * 0.8)
        assert all(set(ex.labels) == {"1"} for ex in train + test)

    def test_no_rows_for_language(self, pipeline, tmp_path, capsys):
        rc = main(["prepare", "--input", str(pipeline["uli_csv"]),
                   "--language", "ta", "--task", "1",
                   "--out", str(tmp_path / "none")])
        assert rc == 2
        assert "error:" in capsys.readouterr().err

    def test_external_merged_into_train_only(self, pipeline, tmp_path):
        macd = tmp_path / "macd.csv"
        # macd polarity is inverted on load: 0 means abusive
        macd.write_text("text,label\nfoo bar,0\nbaz qux,1\n", encoding="utf-8")
        out = tmp_path / "prep_ext"
        rc = main(["prepare", "--input", str(pipeline["uli_csv"]),
                   "--language", "en", "--task", "2",
                   "--external", f"macd={macd}", "--out", str(out)])
        assert rc == 0
        manifest = json.loads((out / "prepare.json").read_text(encoding="utf-8"))
        assert manifest["external_counts"] == {"macd": 2}
        train = read_dataset(out / "train.jsonl")
        test = read_dataset(out / "test.jsonl")
        merged = [ex for ex in train if ex.source == "macd"]
        assert len(merged) == 2
        assert {ex.text for ex in merged} == {"foo bar", "baz qux"}
        assert {ex.labels["1"] for ex in merged if ex.text == "foo bar"} == {1}
        assert all(ex.source != "macd" for ex in test)
        assert len(train) == round(78 * 0.8) + 2

    def test_bad_external_spec(self, pipeline, tmp_path, capsys):
        rc = main(["prepare", "--input", str(pipeline["uli_csv"]),
                   "--language", "en", "--task", "1",
                   "--external", "nonsense", "--out", str(tmp_path / "x")])
        assert rc == 2
        capsys.readouterr()


class TestTrain:
    def test_artifacts_written(self, pipeline):
        run = pipeline["run_dir"]
        for name in ("run_report.json", "curves.csv", "curves.svg",
                     "vocab.txt", "preprocess.json", "ensemble.json"):
            assert (run / name).exists(), name
        for fold in range(3):
            assert (run / f"fold{fold}" / "manifest.json").exists()
            assert (run / f"fold{fold}" / "weights.bin").exists()

    def test_report_contents(self, pipeline):
        report = json.loads(
            (pipeline["run_dir"] / "run_report.json").read_text(encoding="utf-8"))
        assert report["task"] == 1
        assert report["train_config"]["batch_size"] == 8
        assert report["train_config"]["epochs"] == 8
        assert len(report["folds"]) == 3
        assert all(len(f["epochs"]) == 8 for f in report["folds"])
        assert report["embedding_coverage"] == 1.0

    def test_curves_rows(self, pipeline):
        lines = (pipeline["run_dir"] / "curves.csv").read_text(
            encoding="utf-8").splitlines()
        assert len(lines) == 1 + 3 * 8

    def test_summary_printed(self, pipeline, tmp_path, capsys):
        config = write_config(tmp_path / "c.json",
                              pipeline["prep_dir"] / "train.jsonl",
                              pipeline["emb_path"], epochs=1, folds=2)
        rc = main(["train", "--config", str(config),
                   "--out-dir", str(tmp_path / "run")])
        assert rc == 0
        out = capsys.readouterr().out
        assert "task 1 (en)" in out
        assert "macro_f1" in out and " avg " in out

    def test_seed_override_determinism(self, pipeline, tmp_path):
        config = write_config(tmp_path / "c.json",
                              pipeline["prep_dir"] / "train.jsonl",
                              pipeline["emb_path"], epochs=2, folds=2)
        reports = []
        for name in ("a", "b"):
            rc = main(["train", "--config", str(config), "--seed", "7",
                       "--out-dir", str(tmp_path / name)])
            assert rc == 0
            reports.append(
                (tmp_path / name / "run_report.json").read_bytes())
        assert reports[0] == reports[1]

    def test_unknown_config_key(self, pipeline, tmp_path, capsys):
        config_path = tmp_path / "bad.json"
        data = json.loads(pipeline["config"].read_text(encoding="utf-8"))
        data["surprise"] = True
        config_path.write_text(json.dumps(data), encoding="utf-8")
        rc = main(["train", "--config", str(config_path),
                   "--out-dir", str(tmp_path / "x")])
        assert rc == 2
        assert "unknown keys" in capsys.readouterr().err

    def test_num_heads_rejected(self, pipeline, tmp_path, capsys):
        config_path = tmp_path / "bad.json"
        data = json.loads(pipeline["config"].read_text(encoding="utf-8"))
        data["model"]["num_heads"] = 2
        config_path.write_text(json.dumps(data), encoding="utf-8")
        rc = main(["train", "--config", str(config_path),
                   "--out-dir", str(tmp_path / "x")])
        assert rc == 2
        assert "num_heads" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path, capsys):
        rc = main(["train", "--config", str(tmp_path / "absent.json"),
                   "--out-dir", str(tmp_path / "x")])
        assert rc == 2
        capsys.readouterr()

    def test_env_thread_fallback(self, pipeline, tmp_path, monkeypatch):
        config = write_config(tmp_path / "c.json",
                              pipeline["prep_dir"] / "train.jsonl",
                              pipeline["emb_path"], epochs=1, folds=2)
        monkeypatch.setenv("ABUSE_DETECT_THREADS", "2")
        rc = main(["train", "--config", str(config),
                   "--out-dir", str(tmp_path / "run")])
        assert rc == 0
        report = json.loads(
            (tmp_path / "run" / "run_report.json").read_text(encoding="utf-8"))
        assert report["train_config"]["threads"] == 2

    def test_env_thread_garbage(self, pipeline, tmp_path, monkeypatch, capsys):
        config = write_config(tmp_path / "c.json",
                              pipeline["prep_dir"] / "train.jsonl",
                              pipeline["emb_path"], epochs=1, folds=2)
        monkeypatch.setenv("ABUSE_DETECT_THREADS", "many")
        rc = main(["train", "--config", str(config),
                   "--out-dir", str(tmp_path / "run")])
        assert rc == 2
        assert "ABUSE_DETECT_THREADS" in capsys.readouterr().err

    def test_numeric_blowup_exits_3(self, pipeline, tmp_path, capsys):
        config = write_config(tmp_path / "c.json",
                              pipeline["prep_dir"] / "train.jsonl",
                              pipeline["emb_path"], epochs=2, folds=2,
                              optimizer={"lr": 1e25})
        with np.errstate(all="ignore"):
            rc = main(["train", "--config", str(config),
                       "--out-dir", str(tmp_path / "run")])
        assert rc == 3
        assert "numeric failure" in capsys.readouterr().err


class TestPredict:
    def test_submission_format_exact(self, pipeline):
        blob = pipeline["sub_csv"].read_bytes()
        assert b"\r" not in blob
        assert blob.endswith(b"\n")
        lines = blob.decode("utf-8").splitlines()
        assert lines[0] == "id,label"
        assert len(lines) == 1 + pipeline["test_count"]
        for line in lines[1:]:
            post_id, label = line.split(",")
            assert label in ("0", "1")
            int(post_id)

    def test_rerun_byte_identical(self, pipeline, tmp_path):
        again = tmp_path / "again.csv"
        rc = main(["predict", "--run-dir", str(pipeline["run_dir"]),
                   "--input", str(pipeline["test_csv"]), "--out", str(again)])
        assert rc == 0
        assert again.read_bytes() == pipeline["sub_csv"].read_bytes()

    def test_best_fold_mode(self, pipeline, tmp_path):
        best = tmp_path / "best.csv"
        rc = main(["predict", "--run-dir", str(pipeline["run_dir"]),
                   "--input", str(pipeline["test_csv"]),
                   "--out", str(best), "--ensemble", "best"])
        assert rc == 0
        lines = best.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "id,label"
        assert len(lines) == 1 + pipeline["test_count"]

    def test_missing_run_dir(self, pipeline, tmp_path, capsys):
        rc = main(["predict", "--run-dir", str(tmp_path / "ghost"),
                   "--input", str(pipeline["test_csv"]),
                   "--out", str(tmp_path / "out.csv")])
        assert rc == 2
        capsys.readouterr()

    def test_missing_fold_checkpoint(self, pipeline, tmp_path, capsys):
        import shutil
        clone = tmp_path / "run_clone"
        shutil.copytree(pipeline["run_dir"], clone)
        shutil.rmtree(clone / "fold1")
        rc = main(["predict", "--run-dir", str(clone),
                   "--input", str(pipeline["test_csv"]),
                   "--out", str(tmp_path / "out.csv")])
        assert rc == 2
        assert "fold1" in capsys.readouterr().err


class TestEvaluate:
    def test_report_on_real_predictions(self, pipeline, capsys):
        rc = main(["evaluate", "--gold", str(pipeline["gold_csv"]),
                   "--pred", str(pipeline["sub_csv"])])
        assert rc == 0
        report = json.loads(capsys.readouterr().out)
        for key in ("macro_precision", "macro_recall", "macro_f1",
                    "accuracy", "confusion"):
            assert key in report
        assert 0.0 <= report["macro_f1"] <= 1.0

    def test_gold_vs_gold_is_perfect(self, pipeline, capsys):
        rc = main(["evaluate", "--gold", str(pipeline["gold_csv"]),
                   "--pred", str(pipeline["gold_csv"])])
        assert rc == 0
        report = json.loads(capsys.readouterr().out)
        assert report["macro_f1"] == 1.0 and report["accuracy"] == 1.0

    def test_hand_case(self, tmp_path, capsys):
        gold = tmp_path / "gold.csv"
        pred = tmp_path / "pred.csv"
        gold.write_text("id,label\n1,1\n2,1\n3,1\n4,0\n5,0\n",
                        encoding="utf-8")
        pred.write_text("id,label\n1,1\n2,0\n3,1\n4,0\n5,1\n",
                        encoding="utf-8")
        rc = main(["evaluate", "--gold", str(gold), "--pred", str(pred)])
        assert rc == 0
        report = json.loads(capsys.readouterr().out)
        assert abs(report["macro_f1"] - 7 / 12) < 1e-12

    def test_id_mismatch_lists_offenders(self, tmp_path, capsys):
        gold = tmp_path / "gold.csv"
        pred = tmp_path / "pred.csv"
        gold.write_text("id,label\n1,1\n2,0\n3,1\n", encoding="utf-8")
        pred.write_text("id,label\n2,0\n3,1\n999,0\n", encoding="utf-8")
        rc = main(["evaluate", "--gold", str(gold), "--pred", str(pred)])
        assert rc == 2
        err = capsys.readouterr().err
        # ids on either side only: gold-only 1 and pred-only 999 both shown
        assert "offenders" in err and "1" in err and "999" in err

    def test_bad_label_value(self, tmp_path, capsys):
        gold = tmp_path / "gold.csv"
        gold.write_text("id,label\n1,1\n", encoding="utf-8")
        pred = tmp_path / "pred.csv"
        pred.write_text("id,label\n1,2\n", encoding="utf-8")
        rc = main(["evaluate", "--gold", str(gold), "--pred", str(pred)])
        assert rc == 2
        assert "label must be 0 or 1" in capsys.readouterr().err


class TestInspectEmbeddings:
    def test_plain_file(self, pipeline, capsys):
        rc = main(["inspect-embeddings", "--file", str(pipeline["emb_path"])])
        assert rc == 0
        out = capsys.readouterr().out
        assert "dimension: 16" in out
        assert "header: no" in out
        assert "entries:" in out

    def test_header_file_and_coverage(self, pipeline, tmp_path, capsys):
        examples = pipeline["examples"]
        vectors = make_vector_file(vocabulary_of(examples), dim=16, seed=1)
        with_header = tmp_path / "with_header.txt"
        write_vector_file(vectors, with_header, header=True)
        rc = main(["inspect-embeddings", "--file", str(with_header),
                   "--vocab", str(pipeline["run_dir"] / "vocab.txt")])
        assert rc == 0
        out = capsys.readouterr().out
        assert "header: yes" in out
        assert "coverage: 1.0" in out

    def test_disjoint_vocab_coverage_zero(self, pipeline, tmp_path, capsys):
        vocab_path = tmp_path / "vocab.txt"
        vocab_path.write_text("unrelated\nwords\n", encoding="utf-8")
        rc = main(["inspect-embeddings", "--file", str(pipeline["emb_path"]),
                   "--vocab", str(vocab_path)])
        assert rc == 0
        assert "coverage: 0.0" in capsys.readouterr().out

    def test_parse_error_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.txt"
        bad.write_text("word 1 2\nother 1\n", encoding="utf-8")
        rc = main(["inspect-embeddings", "--file", str(bad)])
        assert rc == 2
        assert ":2:" in capsys.readouterr().err
