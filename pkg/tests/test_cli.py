"""Command-line interface: every subcommand's happy path plus the error
exits (code 1 with an `error:` line on stderr)."""

import csv
import io
import json
import os

import pytest

from chatdqn import AgentConfig, make_toy_corpus, make_toy_embeddings, save_embeddings_file
from chatdqn.cli import main
from chatdqn.corpus import save_corpus
from chatdqn.experiment import ExperimentConfig, save_experiment_config
from chatdqn.reward_predictor import PredictorConfig

PARLAI_SAMPLE = """\
1 your persona: i like pie.
2 hello how are you\ti am fine thanks\t\tcand1|cand2
3 what do you do\ti drive a big truck
1 hi there\thello friend
"""


@pytest.fixture(scope="module")
def cli_world(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    table = make_toy_embeddings(4, dim=6, seed=41)
    save_embeddings_file(table, str(root / "emb6.txt"))
    save_corpus(make_toy_corpus(16, topics=range(4), seed=41, id_prefix="tr"),
                str(root / "corpus.jsonl"))
    save_corpus(make_toy_corpus(6, topics=range(4), seed=42, id_prefix="te"),
                str(root / "test.jsonl"))
    cfg = ExperimentConfig(
        corpus="corpus.jsonl",
        test_corpus="test.jsonl",
        embeddings={6: "emb6.txt"},
        out_dir="run",
        k_splits=2,
        agent=AgentConfig(
            n_actions=4, embedding_dim=6, hidden_dim=8, burn_in=20,
            batch_size=8, target_sync_period=50, learn_steps=120,
            test_steps=400, memory_capacity=200, seed=0,
        ),
        predictor=PredictorConfig(hidden_dim=4, epochs=1, runs=2, batch_size=8),
        seed=5,
    )
    cpath = root / "exp.json"
    save_experiment_config(cfg, str(cpath))
    rc = main(["run", "--config", str(cpath)])
    assert rc == 0
    return root, str(cpath), str(root / "run")


def _first_run_dir(out):
    base = os.path.join(out, "runs", "dim6")
    return os.path.join(base, sorted(os.listdir(base))[0])


# ----------------------------------------------------------- pipeline

def test_run_writes_markers(cli_world, capsys):
    root, cpath, out = cli_world
    assert os.path.exists(os.path.join(out, "report.csv"))
    # resume is a quiet no-op with exit code 0
    assert main(["run", "--config", cpath]) == 0
    assert capsys.readouterr().out.strip().endswith("run")


def test_report_prints_csv(cli_world, capsys):
    _, cpath, _ = cli_world
    assert main(["report", "--config", cpath]) == 0
    outp = capsys.readouterr().out
    assert "row,dim,episodes" in outp
    assert "Random Sel." in outp


def test_eval_checkpoint(cli_world, capsys):
    _, cpath, out = cli_world
    ckpt = os.path.join(_first_run_dir(out), "checkpoint.bin")
    assert main(["eval", "--config", cpath, "--checkpoint", ckpt,
                 "--dialogues", "train"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["dim"] == 6
    assert "mean_reward" in payload and payload["episodes"] > 0


def test_eval_arch_mismatch_refused(cli_world, tmp_path, capsys):
    root, cpath, out = cli_world
    cfg_bad = json.load(open(cpath))
    cfg_bad["agent"]["hidden_dim"] = 99
    cfg_bad["out_dir"] = str(tmp_path / "bad")
    # referenced data paths are relative to the config file's directory
    bad_path = root / "exp_bad.json"
    bad_path.write_text(json.dumps(cfg_bad))
    ckpt = os.path.join(_first_run_dir(out), "checkpoint.bin")
    rc = main(["eval", "--config", str(bad_path), "--checkpoint", ckpt,
               "--dialogues", "train"])
    err = capsys.readouterr().err
    assert rc == 1
    assert "error:" in err and "architecture mismatch" in err


def test_train_single_split(cli_world, tmp_path, capsys):
    _, cpath, _ = cli_world
    out = str(tmp_path / "t")
    rc = main(["train", "--config", cpath, "--split", "0", "--dim", "6",
               "--steps", "60", "--out", out])
    assert rc == 0
    rdir = capsys.readouterr().out.strip().splitlines()[-1]
    assert os.path.exists(os.path.join(rdir, "checkpoint.bin"))


def test_plot_run_dir(cli_world, capsys):
    _, _, out = cli_world
    rdir = _first_run_dir(out)
    assert main(["plot", "--run-dir", rdir]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].endswith("curve.csv") and lines[1].endswith("curve.svg")


def test_plot_missing_dir(tmp_path, capsys):
    rc = main(["plot", "--run-dir", str(tmp_path / "void")])
    assert rc == 1
    assert capsys.readouterr().err.startswith("error:")


def test_predict_reward_study(cli_world, capsys):
    root, cpath, _ = cli_world
    out_csv = str(root / "study.csv")
    rc = main(["predict-reward", "study", "--config", cpath,
               "--lengths", "1,3", "--out", out_csv])
    assert rc == 0
    assert "best h=" in capsys.readouterr().out
    assert os.path.isfile(out_csv)
    with open(out_csv) as fh:
        rows = list(csv.reader(line for line in fh if not line.startswith("#")))
    assert rows[0] == ["h", "run", "pearson"]
    assert len(rows) == 1 + 2 * 2  # 2 lengths x 2 runs
    assert {r[0] for r in rows[1:]} == {"1", "3"}


# --------------------------------------------------------------- chat

def test_chat_scripted_session(cli_world, tmp_path, monkeypatch, capsys):
    root, cpath, out = cli_world
    ckpt = os.path.join(_first_run_dir(out), "checkpoint.bin")
    clusters = os.path.join(out, "sentence_clusters_dim6.json")
    transcript = str(tmp_path / "t.jsonl")
    monkeypatch.setattr("sys.stdin", io.StringIO("hello there\n\n:quit\n"))
    rc = main(["chat", "--config", cpath, "--checkpoint", ckpt,
               "--clusters", clusters, "--transcript", transcript])
    assert rc == 0
    outp = capsys.readouterr().out
    assert "q: " in outp and "transcript ->" in outp
    lines = [json.loads(l) for l in open(transcript)]
    assert [l["speaker"] for l in lines] == ["env", "agent"]


def test_chat_cluster_count_mismatch(cli_world, tmp_path, monkeypatch, capsys):
    root, cpath, out = cli_world
    ckpt = os.path.join(_first_run_dir(out), "checkpoint.bin")
    clusters = os.path.join(out, "dialogue_clusters.json")  # k=2, not 4
    monkeypatch.setattr("sys.stdin", io.StringIO(":quit\n"))
    rc = main(["chat", "--config", cpath, "--checkpoint", ckpt,
               "--clusters", clusters,
               "--transcript", str(tmp_path / "t.jsonl")])
    assert rc == 1
    assert "cluster model" in capsys.readouterr().err


# ----------------------------------------------------- data utilities

def test_ingest_roundtrip(tmp_path, capsys):
    raw = tmp_path / "raw.txt"
    raw.write_text(PARLAI_SAMPLE, encoding="utf-8")
    out = str(tmp_path / "c.jsonl")
    assert main(["ingest", str(raw), out]) == 0
    stats = json.loads(capsys.readouterr().out)
    assert stats["dialogues"] == 2
    assert os.path.exists(out)


def test_ingest_unknown_format(tmp_path, capsys):
    raw = tmp_path / "raw.txt"
    raw.write_text(PARLAI_SAMPLE, encoding="utf-8")
    rc = main(["ingest", "--from", "opensubtitles", str(raw),
               str(tmp_path / "c.jsonl")])
    assert rc == 1
    assert "unknown ingest format" in capsys.readouterr().err


def test_embed_coverage(cli_world, capsys):
    root, _, _ = cli_world
    rc = main(["embed", "--embeddings", str(root / "emb6.txt"), "--dim", "6",
               "--corpus", str(root / "corpus.jsonl")])
    assert rc == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["dim"] == 6
    assert payload["coverage"] == pytest.approx(1.0)
    assert payload["all_oov_sentences"] == 0


def test_embed_dim_mismatch(cli_world, capsys):
    root, _, _ = cli_world
    rc = main(["embed", "--embeddings", str(root / "emb6.txt"), "--dim", "9"])
    assert rc == 1
    assert capsys.readouterr().err.startswith("error:")


def test_cluster_sentences_and_dialogues(cli_world, tmp_path, capsys):
    root, _, _ = cli_world
    for what, k in (("sentences", "4"), ("dialogues", "2")):
        out = str(tmp_path / f"{what}.json")
        rc = main(["cluster", what, "--k", k,
                   "--corpus", str(root / "corpus.jsonl"),
                   "--embeddings", str(root / "emb6.txt"), "--dim", "6",
                   "--out", out])
        assert rc == 0
        assert os.path.exists(out)
        assert f"k={k}" in capsys.readouterr().out


def test_project_sentences(cli_world, tmp_path, capsys):
    root, _, _ = cli_world
    out = str(tmp_path / "xy.csv")
    rc = main(["project", "--what", "sentences",
               "--corpus", str(root / "corpus.jsonl"),
               "--embeddings", str(root / "emb6.txt"), "--dim", "6",
               "--out", out])
    assert rc == 0
    lines = open(out).read().splitlines()
    assert lines[0] == "x,y"
    assert len(lines) > 16
    assert all(len(l.split(",")) == 2 for l in lines[1:])


def test_project_centroids_needs_clusters(cli_world, tmp_path, capsys):
    root, _, _ = cli_world
    rc = main(["project", "--what", "centroids",
               "--embeddings", str(root / "emb6.txt"), "--dim", "6",
               "--out", str(tmp_path / "xy.csv")])
    assert rc == 1
    assert "needs --clusters" in capsys.readouterr().err


def test_split_command(cli_world, tmp_path, capsys):
    root, _, _ = cli_world
    out = str(tmp_path / "splits.json")
    model_out = str(tmp_path / "dmodel.json")
    rc = main(["split", "--k", "2", "--corpus", str(root / "corpus.jsonl"),
               "--embeddings", str(root / "emb6.txt"), "--dim", "6",
               "--out", out, "--model-out", model_out])
    assert rc == 0
    assert os.path.exists(out) and os.path.exists(model_out)
    assert "2 splits" in capsys.readouterr().out


# --------------------------------------------------------- exit codes

def test_missing_config_is_error(tmp_path, capsys):
    rc = main(["run", "--config", str(tmp_path / "none.json")])
    assert rc == 1
    assert capsys.readouterr().err.startswith("error:")


def test_unknown_command_exits_2():
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == 2
