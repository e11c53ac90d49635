"""Binary checkpoint container: bit-exact roundtrips and corruption checks."""

import numpy as np
import pytest

from chatdqn import AgentConfig, ChatDQNAgent
from chatdqn.checkpoint import (
    architecture_of,
    load_checkpoint,
    load_qnetwork,
    save_agent_checkpoint,
    save_checkpoint,
)
from chatdqn.neuralnet import QNetwork


def _arrays(seed=0):
    rng = np.random.default_rng(seed)
    return {
        "w": rng.normal(size=(3, 4)),
        "b": rng.normal(size=(4,)),
        "scalar": np.array(1.2345678901234567),
        "deep": rng.normal(size=(2, 3, 5)),
    }


def test_roundtrip_bit_exact(tmp_path):
    path = str(tmp_path / "c.ckpt")
    arrays = _arrays()
    save_checkpoint(path, "test", {"n": 3}, arrays,
                    config_hash="abc123", meta={"note": "hi", "k": 7})
    ckpt = load_checkpoint(path)
    assert ckpt.kind == "test"
    assert ckpt.config_hash == "abc123"
    assert ckpt.arch == {"n": 3}
    assert ckpt.meta == {"note": "hi", "k": 7}
    assert set(ckpt.arrays) == set(arrays)
    for k in arrays:
        assert ckpt.arrays[k].shape == arrays[k].shape
        assert ckpt.arrays[k].dtype == np.float64
        np.testing.assert_array_equal(ckpt.arrays[k], arrays[k])


def test_rewrite_is_byte_identical(tmp_path):
    p1, p2 = str(tmp_path / "a.ckpt"), str(tmp_path / "b.ckpt")
    arrays = _arrays(4)
    save_checkpoint(p1, "k", {}, arrays, config_hash="h")
    save_checkpoint(p2, "k", {}, arrays, config_hash="h")
    assert open(p1, "rb").read() == open(p2, "rb").read()


def test_bad_magic_rejected(tmp_path):
    path = str(tmp_path / "x.ckpt")
    with open(path, "wb") as fh:
        fh.write(b"NOPE" + b"\x00" * 64)
    with pytest.raises(ValueError, match="not a checkpoint"):
        load_checkpoint(path)


def test_bad_version_rejected(tmp_path):
    path = str(tmp_path / "v.ckpt")
    save_checkpoint(path, "k", {}, {"a": np.zeros(2)})
    blob = bytearray(open(path, "rb").read())
    # bump the version digit inside the JSON header
    idx = blob.find(b'"version":1')
    assert idx > 0
    blob[idx : idx + len(b'"version":1')] = b'"version":9'
    open(path, "wb").write(bytes(blob))
    with pytest.raises(ValueError, match="version"):
        load_checkpoint(path)


def test_truncated_payload_rejected(tmp_path):
    path = str(tmp_path / "t.ckpt")
    save_checkpoint(path, "k", {}, {"a": np.arange(8, dtype=np.float64)})
    blob = open(path, "rb").read()
    open(path, "wb").write(blob[:-16])
    with pytest.raises(ValueError, match="truncated"):
        load_checkpoint(path)


def test_trailing_bytes_rejected(tmp_path):
    path = str(tmp_path / "g.ckpt")
    save_checkpoint(path, "k", {}, {"a": np.arange(4, dtype=np.float64)})
    with open(path, "ab") as fh:
        fh.write(b"\x00" * 9)
    with pytest.raises(ValueError, match="trailing"):
        load_checkpoint(path)


def test_empty_arrays_ok(tmp_path):
    path = str(tmp_path / "e.ckpt")
    save_checkpoint(path, "k", {"d": 1}, {})
    ckpt = load_checkpoint(path)
    assert ckpt.arrays == {}


def test_architecture_of_fields():
    net = QNetwork(6, 8, 5, dropout_rate=0.3, rng=np.random.default_rng(1))
    arch = architecture_of(net)
    assert arch == {
        "embedding_dim": 6,
        "hidden_dim": 8,
        "n_actions": 5,
        "dropout_rate": 0.3,
    }


def _small_agent(seed=3):
    cfg = AgentConfig(
        n_actions=4, embedding_dim=5, hidden_dim=6, burn_in=0,
        learn_steps=1, batch_size=2, memory_capacity=8,
        target_sync_period=100, test_steps=4, seed=seed,
    )
    return ChatDQNAgent(cfg)


def test_agent_checkpoint_contents(tmp_path):
    path = str(tmp_path / "agent.ckpt")
    agent = _small_agent()
    save_agent_checkpoint(path, agent, config_hash="deadbeef")
    ckpt = load_checkpoint(path)
    assert ckpt.kind == "agent"
    assert ckpt.config_hash == "deadbeef"
    assert ckpt.arch == architecture_of(agent.net)
    prefixes = {k.split(".", 1)[0] for k in ckpt.arrays}
    assert prefixes == {"net", "target", "adam_m", "adam_v"}
    assert ckpt.meta["adam_t"] == agent.optimizer.t
    assert ckpt.meta["global_step"] == agent.global_step
    assert set(ckpt.meta["rng"]) == {"explore", "replay", "dropout"}
    for k, v in agent.net.params().items():
        np.testing.assert_array_equal(ckpt.arrays[f"net.{k}"], v)
    for k, v in agent.target.params().items():
        np.testing.assert_array_equal(ckpt.arrays[f"target.{k}"], v)


def test_load_qnetwork_roundtrip(tmp_path):
    path = str(tmp_path / "agent.ckpt")
    agent = _small_agent(seed=9)
    save_agent_checkpoint(path, agent)
    net, ckpt = load_qnetwork(path)
    assert architecture_of(net) == architecture_of(agent.net)
    for k, v in agent.net.params().items():
        np.testing.assert_array_equal(net.params()[k], v)
    # loaded net computes identical q-values
    rng = np.random.default_rng(0)
    X = rng.normal(size=(2, 4, 5))
    lengths = np.array([4, 2])
    np.testing.assert_array_equal(
        net.forward(X, lengths, train_mode=False),
        agent.net.forward(X, lengths, train_mode=False),
    )


def test_load_qnetwork_arch_match_accepted(tmp_path):
    path = str(tmp_path / "a.ckpt")
    agent = _small_agent()
    save_agent_checkpoint(path, agent)
    net, _ = load_qnetwork(path, expected_arch=architecture_of(agent.net))
    assert net.n_actions == agent.net.n_actions


def test_load_qnetwork_arch_mismatch_refused(tmp_path):
    path = str(tmp_path / "a.ckpt")
    agent = _small_agent()
    save_agent_checkpoint(path, agent)
    want = architecture_of(agent.net)
    want["hidden_dim"] = 999
    with pytest.raises(ValueError, match="architecture mismatch"):
        load_qnetwork(path, expected_arch=want)
    want = architecture_of(agent.net)
    want["n_actions"] = 2
    with pytest.raises(ValueError, match="architecture mismatch"):
        load_qnetwork(path, expected_arch=want)


def test_missing_file_raises(tmp_path):
    with pytest.raises(OSError):
        load_checkpoint(str(tmp_path / "nope.ckpt"))
