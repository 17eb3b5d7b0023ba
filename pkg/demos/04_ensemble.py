"""Fold ensembling: averaged probabilities versus the single best fold.

Trains 5 folds on a synthetic corpus, then labels fresh unseen posts two
ways: averaging softmax probabilities over all fold models, and using only
the fold with the highest validation macro-F1.  Also shows the tie rule on
a constructed 50/50 probability split.
"""

import numpy as np

from abusekit.layers import AdamConfig
from abusekit.model import ModelConfig, labels_from_probs, predict
from abusekit.synthetic import make_marker_corpus, make_vector_file, vocabulary_of
from abusekit.text import encode_batch
from abusekit.text import preprocess as preprocess_text
from abusekit.training import (TrainConfig, best_fold_index, ensemble_predict,
                               run_cv)


def main():
    train = make_marker_corpus(200, seed=11, pool_size=30)
    held_out = make_marker_corpus(40, seed=99, pool_size=30)
    all_tokens = vocabulary_of(train + held_out)
    vectors = make_vector_file(all_tokens, dim=16, seed=1)

    train_config = TrainConfig.for_task(
        1, "en", folds=5, epochs=12, batch_size=8, seed=4,
        optimizer=AdamConfig(lr=5e-3))
    model_config = ModelConfig(
        seq_len=12, embed_dim=16, conv_filters=8, lstm_units=8,
        dense_units=8, lstm_dropout=0.0, lstm_recurrent_dropout=0.0,
        spatial_dropout_rate=0.0, final_dropout_rate=0.0)
    result = run_cv(train, train_config, vectors, model_config)

    token_lists = [preprocess_text(ex.text, ex.language, result.prep_config)
                   for ex in held_out]
    sequences = encode_batch(token_lists, result.vocab, max_len=12)
    gold = np.array([ex.labels["1"] for ex in held_out])

    averaged = ensemble_predict(result.fold_states, sequences)[0]
    best = best_fold_index(result.report)
    solo = predict(result.fold_states[best], sequences)[0]

    print(f"40 unseen posts, gold positives: {gold.sum()}")
    print(f"ensemble of 5 folds accuracy:   {(averaged == gold).mean():.3f}")
    print(f"best single fold ({best}) accuracy: {(solo == gold).mean():.3f}")
    disagree = int((averaged != solo).sum())
    print(f"posts where the two modes disagree: {disagree}")

    probs = np.array([[0.5, 0.5], [0.6, 0.4], [0.4, 0.6]], dtype=np.float32)
    print(f"\ntie handling: probabilities {probs[0]} decode to label "
          f"{labels_from_probs(probs)[0]} (exact ties go to 1)")


if __name__ == "__main__":
    main()
