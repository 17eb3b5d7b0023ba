"""The whole command-line workflow on generated data.

Runs prepare -> train -> predict -> evaluate exactly as a user would,
printing each command before executing it in-process.  Everything lands
in a temporary directory; nothing outlives the script.
"""

import json
import tempfile
from pathlib import Path

from abusekit.cli import main as cli
from abusekit.corpus import read_dataset
from abusekit.embeddings import write_vector_file
from abusekit.synthetic import (make_marker_corpus, make_vector_file,
                                vocabulary_of, write_gold_csv, write_test_csv,
                                write_uli_csv)


def run(argv):
    print(f"\n$ abusekit {' '.join(argv)}")
    code = cli(argv)
    assert code == 0, f"exit code {code}"


def main():
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        examples = make_marker_corpus(120, seed=3, pool_size=30)
        raw_csv = tmp / "annotations.csv"
        write_uli_csv(raw_csv, examples)
        vectors = make_vector_file(vocabulary_of(examples), dim=16, seed=1)
        emb = tmp / "vectors.txt"
        write_vector_file(vectors, emb)
        print(f"generated {raw_csv.name} (120 posts, 3 annotation rows each) "
              f"and {emb.name}")

        prep = tmp / "prep"
        run(["prepare", "--input", str(raw_csv), "--language", "en",
             "--task", "1", "--out", str(prep)])

        config = {
            "data": {"train": str(prep / "train.jsonl"), "embeddings": str(emb)},
            "model": {"seq_len": 12, "embed_dim": 16, "conv_filters": 8,
                      "lstm_units": 8, "dense_units": 8,
                      "lstm_dropout": 0.0, "lstm_recurrent_dropout": 0.0,
                      "spatial_dropout_rate": 0.0, "final_dropout_rate": 0.0},
            "train": {"task": 1, "language": "en", "folds": 3, "epochs": 10,
                      "batch_size": 8, "seed": 5, "optimizer": {"lr": 5e-3}},
            "output_dir": str(tmp / "run"),
        }
        config_path = tmp / "run.json"
        config_path.write_text(json.dumps(config, indent=2))
        run(["train", "--config", str(config_path)])

        test_examples = read_dataset(prep / "test.jsonl")
        test_csv = tmp / "test_posts.csv"
        ids = write_test_csv(test_csv, test_examples)
        gold_csv = tmp / "gold.csv"
        write_gold_csv(gold_csv, ids, [ex.labels["1"] for ex in test_examples])

        sub = tmp / "submission.csv"
        run(["predict", "--run-dir", str(tmp / "run"),
             "--input", str(test_csv), "--out", str(sub)])
        print("submission head:")
        for line in sub.read_text().splitlines()[:4]:
            print(f"  {line}")

        run(["evaluate", "--gold", str(gold_csv), "--pred", str(sub)])


if __name__ == "__main__":
    main()
