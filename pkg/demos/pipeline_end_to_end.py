"""Drive the staged experiment pipeline end to end on generated data.

Writes a small corpus and two embedding tables (dims 10 and 16) to a temp
directory, then runs every stage: ingest, embed, sentence/dialogue
clustering, splitting, per-split training for each embedding size, greedy
evaluation, the aggregate report, and the paired signed-rank comparison
between embedding sizes. Rerunning against the same output directory is a
no-op; the artifacts carry the config hash.

Run from the repo root:  python3 demos/pipeline_end_to_end.py
"""

import json
import os
import tempfile

from chatdqn import AgentConfig, make_toy_corpus, make_toy_embeddings, save_embeddings_file
from chatdqn.corpus import save_corpus
from chatdqn.experiment import ExperimentConfig, run_experiment, save_experiment_config
from chatdqn.reward_predictor import PredictorConfig


def main():
    root = tempfile.mkdtemp(prefix="chatdqn-demo-")
    print(f"workspace: {root}\n")

    save_embeddings_file(make_toy_embeddings(8, dim=10, seed=41, spread=0.5),
                         os.path.join(root, "emb10.txt"))
    save_embeddings_file(make_toy_embeddings(8, dim=16, seed=42, spread=0.5),
                         os.path.join(root, "emb16.txt"))
    save_corpus(make_toy_corpus(24, topics=range(8), seed=40, id_prefix="tr"),
                os.path.join(root, "corpus.jsonl"))
    save_corpus(make_toy_corpus(10, topics=range(8), seed=43, id_prefix="te"),
                os.path.join(root, "test.jsonl"))

    cfg = ExperimentConfig(
        corpus=os.path.join(root, "corpus.jsonl"),
        test_corpus=os.path.join(root, "test.jsonl"),
        embeddings={10: os.path.join(root, "emb10.txt"),
                    16: os.path.join(root, "emb16.txt")},
        out_dir=os.path.join(root, "out"),
        k_splits=3,
        agent=AgentConfig(
            n_actions=4, embedding_dim=10, hidden_dim=8, burn_in=40,
            batch_size=8, target_sync_period=50, learn_steps=80,
            test_steps=400, memory_capacity=200, seed=0,
        ),
        predictor=PredictorConfig(hidden_dim=4, epochs=1, runs=1, batch_size=8),
        seed=5,
    )
    save_experiment_config(cfg, os.path.join(root, "experiment.json"))

    out = run_experiment(cfg, log=lambda m: print(f"  {m}"))

    print("\n--- report.csv ---")
    with open(os.path.join(out, "report.csv"), encoding="utf-8") as fh:
        print(fh.read().rstrip())

    print("\n--- comparisons.json (dim 10 vs dim 16, paired per split) ---")
    with open(os.path.join(out, "comparisons.json"), encoding="utf-8") as fh:
        print(json.dumps(json.load(fh), indent=2, sort_keys=True))

    print("\nrerunning: every stage below should be skipped")
    run_experiment(cfg, log=lambda m: print(f"  {m}"))
    print(f"\nartifacts live under {out}")


if __name__ == "__main__":
    main()
