"""How much dialogue history does reward prediction need?

Distorts a generated corpus by replacing a fraction of each dialogue's
agent turns with randomly sourced sentences (fractions 0, .25, .5, .75, 1),
labels each distorted dialogue with the episode reward it would earn, and
trains a recurrent regressor to predict that label from the first h
sentences. Test-set Pearson correlation is reported per history length h:
short histories are nearly uninformative, long ones correlate strongly.

Run from the repo root:  python3 demos/history_length_trend.py
"""

from chatdqn import make_toy_corpus, make_toy_embeddings
from chatdqn.reward_predictor import PredictorConfig, history_length_study


def main():
    table = make_toy_embeddings(10, dim=10, seed=55)
    train_corpus = make_toy_corpus(150, topics=range(10), seed=55,
                                   turns_range=(8, 12), id_prefix="tr")
    test_corpus = make_toy_corpus(60, topics=range(10), seed=56,
                                  turns_range=(8, 12), id_prefix="te")
    cfg = PredictorConfig(hidden_dim=24, batch_size=32, epochs=3, runs=3,
                          learning_rate=1e-3, seed=7)
    print(f"{len(train_corpus)} train / {len(test_corpus)} test dialogues, "
          f"5 distortion fractions each -> "
          f"{5 * len(train_corpus)} training examples\n")

    # dialogues here run 8-12 turns, so h=12 already covers every sentence
    rows = history_length_study(train_corpus, test_corpus, table, cfg,
                                lengths=(1, 3, 5, 10, 12))
    print("history h   test Pearson r (mean over runs)   std")
    for row in rows:
        bar = "#" * max(0, int(40 * row.mean_r))
        print(f"{row.h:9d}   {row.mean_r:+28.4f}   {row.std_r:.4f}  {bar}")
    print("\ncorrelations rise sharply once the history covers ~10 sentences")
    print("(3 short training runs per h, so expect some run-to-run spread)")


if __name__ == "__main__":
    main()
