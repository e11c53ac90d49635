"""Seeded end-to-end experiment pipeline and report emission.

Stages: ingest -> embed -> cluster_sentences -> cluster_dialogues -> split
-> train -> evaluate -> report -> compare. Each stage leaves a marker file
carrying the config hash; re-running a completed stage is a no-op, and a
failed run can resume from its partial artifacts. Any stage failure is
re-raised as StageError naming the stage.

Reports, checkpoints, and markers never contain wall-clock values, so a
rerun with the same config and seed reproduces every artifact byte for
byte.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .agent import AgentConfig, evaluate, train
from .checkpoint import load_qnetwork, save_agent_checkpoint
from .clustering import (
    dialogue_vector,
    fit,
    load_cluster_model,
    save_cluster_model,
)
from .corpus import (
    Corpus,
    DataSplit,
    ingest_personachat,
    load_corpus,
    load_splits,
    save_corpus,
    save_splits,
    split_corpus,
)
from .embeddings import embed_sentence, load_embeddings, tokenize
from .environment import baseline_bounds
from .reward_predictor import (
    DISTORTION_FRACTIONS,
    HISTORY_LENGTHS,
    PredictorConfig,
    history_length_study,
    stable_seed,
)
from .stats import wilcoxon_signed_rank

__all__ = [
    "ExperimentConfig",
    "StageError",
    "STAGES",
    "config_hash",
    "save_experiment_config",
    "load_experiment_config",
    "run_experiment",
    "train_single",
    "evaluate_checkpoint",
    "emit_learning_curve",
    "reward_study",
]

STAGES = (
    "ingest",
    "embed",
    "cluster_sentences",
    "cluster_dialogues",
    "split",
    "train",
    "evaluate",
    "report",
    "compare",
)

SEED_ENV_VAR = "CHATDQN_SEED"


class StageError(RuntimeError):
    """A pipeline stage failed; `.stage` names it for the CLI exit message."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class ExperimentConfig:
    """Everything one run needs; round-trips losslessly through JSON.

    Exactly one of `corpus` (internal JSONL) or `ingest_from` (parl.ai text
    export) must be set. `embeddings` maps embedding size -> table path; the
    smallest size drives dialogue clustering so the data splits are shared
    across sizes (paired comparisons need identical split membership).
    """

    corpus: str | None = None
    ingest_from: str | None = None
    test_corpus: str | None = None
    embeddings: dict = field(default_factory=dict)  # dim (int) -> path
    out_dir: str = "run"
    k_splits: int = 20
    agent: AgentConfig = field(default_factory=AgentConfig)
    predictor: PredictorConfig = field(default_factory=PredictorConfig)
    seed: int = 0

    def __post_init__(self):
        if (self.corpus is None) == (self.ingest_from is None):
            raise ValueError("set exactly one of corpus / ingest_from")
        if not self.embeddings:
            raise ValueError("at least one embedding table is required")
        if self.k_splits < 1:
            raise ValueError("k_splits must be >= 1")

    @property
    def dims(self) -> tuple:
        return tuple(sorted(int(d) for d in self.embeddings))

    def to_dict(self) -> dict:
        d = {
            "version": 1,
            "corpus": self.corpus,
            "ingest_from": self.ingest_from,
            "test_corpus": self.test_corpus,
            "embeddings": {str(k): v for k, v in sorted(self.embeddings.items())},
            "out_dir": self.out_dir,
            "k_splits": self.k_splits,
            "agent": vars(self.agent).copy(),
            "predictor": vars(self.predictor).copy(),
            "seed": self.seed,
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if d.get("version") != 1:
            raise ValueError(f"unsupported config version: {d.get('version')!r}")
        known = {
            "version", "corpus", "ingest_from", "test_corpus", "embeddings",
            "out_dir", "k_splits", "agent", "predictor", "seed",
        }
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        try:
            agent = AgentConfig(**d.get("agent", {}))
            predictor = PredictorConfig(**d.get("predictor", {}))
        except TypeError as exc:
            raise ValueError(f"bad agent/predictor config: {exc}") from None
        return cls(
            corpus=d.get("corpus"),
            ingest_from=d.get("ingest_from"),
            test_corpus=d.get("test_corpus"),
            embeddings={int(k): v for k, v in d.get("embeddings", {}).items()},
            out_dir=d.get("out_dir", "run"),
            k_splits=d.get("k_splits", 20),
            agent=agent,
            predictor=predictor,
            seed=d.get("seed", 0),
        )


def config_hash(cfg: ExperimentConfig) -> str:
    """First 16 hex chars of the sha256 of the canonical config JSON.

    out_dir is excluded: where artifacts land is plumbing, not experiment
    identity, so the same inputs+seed hash identically in any directory.
    """
    d = cfg.to_dict()
    d.pop("out_dir", None)
    blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def save_experiment_config(cfg: ExperimentConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cfg.to_dict(), fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_experiment_config(path: str, apply_env: bool = True) -> ExperimentConfig:
    """Load, validate referenced paths, and apply the CHATDQN_SEED override."""
    with open(path, "r", encoding="utf-8") as fh:
        cfg = ExperimentConfig.from_dict(json.load(fh))
    if apply_env and os.environ.get(SEED_ENV_VAR):
        raw = os.environ[SEED_ENV_VAR]
        try:
            cfg.seed = int(raw)
        except ValueError:
            raise ValueError(f"{SEED_ENV_VAR} must be an integer, got {raw!r}") from None
    base = os.path.dirname(os.path.abspath(path))

    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    for name in ("corpus", "ingest_from", "test_corpus"):
        p = getattr(cfg, name)
        if p is not None:
            p = resolve(p)
            setattr(cfg, name, p)
            if not os.path.exists(p):
                raise ValueError(f"config {name} path does not exist: {p}")
    emb = {}
    for dim, p in cfg.embeddings.items():
        p = resolve(p)
        if not os.path.exists(p):
            raise ValueError(f"embedding table for dim {dim} does not exist: {p}")
        emb[dim] = p
    cfg.embeddings = emb
    cfg.out_dir = resolve(cfg.out_dir)
    return cfg


# ---------------------------------------------------------------------------
# stage plumbing


@dataclass(eq=False)
class _Context:
    cfg: ExperimentConfig
    h: str
    out: str
    log: object = None
    corpus: Corpus | None = None
    test_corpus: Corpus | None = None
    tables: dict = field(default_factory=dict)      # dim -> WordEmbeddingTable
    smodels: dict = field(default_factory=dict)     # dim -> sentence ClusterModel
    dmodel: object = None                           # dialogue ClusterModel
    splits: list = field(default_factory=list)
    test_splits: list = field(default_factory=list)
    trained: list = field(default_factory=list)     # [dim, split_id] pairs
    skipped: list = field(default_factory=list)


def _say(ctx: _Context, msg: str) -> None:
    if ctx.log is not None:
        ctx.log(msg)


def _marker_path(out: str, stage: str) -> str:
    return os.path.join(out, f"{stage}.done.json")


def _write_json(path: str, obj: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def _read_json(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _write_marker(ctx: _Context, stage: str, **extra) -> None:
    _write_json(_marker_path(ctx.out, stage), {"stage": stage, "config_hash": ctx.h, **extra})


def _marker_ok(ctx: _Context, stage: str) -> bool:
    path = _marker_path(ctx.out, stage)
    if not os.path.exists(path):
        return False
    found = _read_json(path).get("config_hash")
    if found != ctx.h:
        raise ValueError(
            f"{stage}: output dir holds artifacts for config {found!r}, "
            f"current config is {ctx.h!r}; use a fresh --out directory"
        )
    return True


def _run_stage(name: str, fn) -> None:
    try:
        fn()
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


# ---------------------------------------------------------------------------
# stages


def _stage_ingest(ctx: _Context) -> None:
    cfg = ctx.cfg
    cpath = os.path.join(ctx.out, "corpus.jsonl")
    tpath = os.path.join(ctx.out, "test_corpus.jsonl")
    if _marker_ok(ctx, "ingest"):
        ctx.corpus = load_corpus(cpath)
        ctx.test_corpus = load_corpus(tpath) if os.path.exists(tpath) else None
        return
    if cfg.ingest_from is not None:
        ctx.corpus = ingest_personachat(cfg.ingest_from)
    else:
        ctx.corpus = load_corpus(cfg.corpus)
    save_corpus(ctx.corpus, cpath)
    if cfg.test_corpus is not None:
        ctx.test_corpus = load_corpus(cfg.test_corpus)
        save_corpus(ctx.test_corpus, tpath)
    _say(ctx, f"ingest: {len(ctx.corpus)} dialogues"
              + (f", {len(ctx.test_corpus)} test" if ctx.test_corpus else ""))
    _write_marker(
        ctx, "ingest",
        dialogues=len(ctx.corpus),
        test_dialogues=len(ctx.test_corpus) if ctx.test_corpus else None,
    )


def _stage_embed(ctx: _Context) -> None:
    for dim in ctx.cfg.dims:
        ctx.tables[dim] = load_embeddings(ctx.cfg.embeddings[dim], dim)
    if not _marker_ok(ctx, "embed"):
        _write_marker(
            ctx, "embed",
            vocab={str(d): len(t) for d, t in ctx.tables.items()},
        )


def _sentence_points(corpus: Corpus, table) -> np.ndarray:
    return np.stack(
        [
            embed_sentence(tokenize(t.text), table).values
            for d in corpus
            for t in d.turns
        ]
    )


def _stage_cluster_sentences(ctx: _Context) -> None:
    cfg = ctx.cfg
    done = _marker_ok(ctx, "cluster_sentences")
    for dim in cfg.dims:
        path = os.path.join(ctx.out, f"sentence_clusters_dim{dim}.json")
        if done:
            ctx.smodels[dim] = load_cluster_model(path)
            continue
        points = _sentence_points(ctx.corpus, ctx.tables[dim])
        model = fit(
            points, cfg.agent.n_actions,
            rng=np.random.default_rng([cfg.seed, 20, dim]),
        )
        save_cluster_model(model, path, extra={"config_hash": ctx.h})
        ctx.smodels[dim] = model
        _say(ctx, f"cluster_sentences dim={dim}: k={model.k} inertia={model.inertia:.4f}")
    if not done:
        _write_marker(ctx, "cluster_sentences", dims=list(cfg.dims))


def _stage_cluster_dialogues(ctx: _Context) -> None:
    cfg = ctx.cfg
    path = os.path.join(ctx.out, "dialogue_clusters.json")
    if _marker_ok(ctx, "cluster_dialogues"):
        ctx.dmodel = load_cluster_model(path)
        return
    base = cfg.dims[0]
    points = np.stack([dialogue_vector(d, ctx.tables[base]) for d in ctx.corpus])
    ctx.dmodel = fit(points, cfg.k_splits, rng=np.random.default_rng([cfg.seed, 21]))
    save_cluster_model(ctx.dmodel, path, extra={"config_hash": ctx.h, "base_dim": base})
    _write_marker(ctx, "cluster_dialogues", k=cfg.k_splits, base_dim=base)


def _stage_split(ctx: _Context) -> None:
    cfg = ctx.cfg
    spath = os.path.join(ctx.out, "splits.json")
    tpath = os.path.join(ctx.out, "test_splits.json")
    if _marker_ok(ctx, "split"):
        ctx.splits = load_splits(spath)
        ctx.test_splits = load_splits(tpath) if os.path.exists(tpath) else []
        return
    base = cfg.dims[0]
    ctx.splits = split_corpus(ctx.corpus, ctx.dmodel, ctx.tables[base])
    save_splits(ctx.splits, spath, extra={"config_hash": ctx.h})
    if ctx.test_corpus is not None:
        ctx.test_splits = split_corpus(ctx.test_corpus, ctx.dmodel, ctx.tables[base])
        save_splits(ctx.test_splits, tpath, extra={"config_hash": ctx.h})
    sizes = [len(s.dialogue_ids) for s in ctx.splits]
    _say(ctx, f"split: sizes {sizes}")
    _write_marker(ctx, "split", sizes=sizes)


def _run_dir(out: str, dim: int, split_id: int) -> str:
    return os.path.join(out, "runs", f"dim{dim}", f"split{split_id:03d}")


def _agent_cfg(cfg: ExperimentConfig, dim: int, split_id: int) -> AgentConfig:
    return replace(
        cfg.agent,
        embedding_dim=dim,
        seed=stable_seed(cfg.seed, dim, split_id),
    )


def _expected_arch(cfg: ExperimentConfig, dim: int) -> dict:
    return {
        "embedding_dim": dim,
        "hidden_dim": cfg.agent.hidden_dim,
        "n_actions": cfg.agent.n_actions,
        "dropout_rate": cfg.agent.dropout_rate,
    }


def _train_one(ctx: _Context, dim: int, split: DataSplit) -> str:
    cfg = ctx.cfg
    rdir = _run_dir(ctx.out, dim, split.split_id)
    os.makedirs(rdir, exist_ok=True)
    acfg = _agent_cfg(cfg, dim, split.split_id)
    report, agent_, _env = train(
        ctx.corpus, acfg, ctx.smodels[dim], ctx.tables[dim],
        dialogue_ids=split.dialogue_ids, config_hash=ctx.h, log=ctx.log,
    )
    _write_json(
        os.path.join(rdir, "report.json"),
        {
            "config_hash": ctx.h,
            "dim": dim,
            "split": split.split_id,
            "seed": acfg.seed,
            "episodes": report.episodes,
            "steps": report.steps,
            "episode_rewards": report.episode_rewards,
            "moving_avg": report.moving_avg,
            "sync_steps": list(agent_.sync_history),
        },
    )
    save_agent_checkpoint(os.path.join(rdir, "checkpoint.bin"), agent_, ctx.h)
    emit_learning_curve(rdir)
    _write_json(os.path.join(rdir, "done.json"), {"config_hash": ctx.h})
    _say(
        ctx,
        f"train dim={dim} split={split.split_id}: "
        f"{report.episodes} episodes, {report.steps} steps",
    )
    return rdir


def _stage_train(ctx: _Context) -> None:
    cfg = ctx.cfg
    ctx.trained, ctx.skipped = [], []
    for dim in cfg.dims:
        for split in ctx.splits:
            if len(split.dialogue_ids) < 2:
                ctx.skipped.append([dim, split.split_id])
                continue
            rdir = _run_dir(ctx.out, dim, split.split_id)
            done = os.path.join(rdir, "done.json")
            if not (os.path.exists(done) and _read_json(done).get("config_hash") == ctx.h):
                _train_one(ctx, dim, split)
            ctx.trained.append([dim, split.split_id])
    if not ctx.trained:
        raise ValueError("no split has the >= 2 dialogues needed to train")
    if not _marker_ok(ctx, "train"):
        _write_marker(ctx, "train", trained=ctx.trained, skipped=ctx.skipped)


def _eval_dict(ev) -> dict:
    return {
        "mean_reward": ev.mean_reward,
        "episodes": len(ev.episode_rewards),
        "episode_rewards": ev.episode_rewards,
        "steps_used": ev.steps_used,
        "truncated": ev.truncated,
        "dialogue_ids": ev.dialogue_ids,
    }


def _stage_evaluate(ctx: _Context) -> None:
    cfg = ctx.cfg
    if _marker_ok(ctx, "evaluate"):
        return
    test_by_id = {s.split_id: s for s in ctx.test_splits}
    for dim, sid in ctx.trained:
        rdir = _run_dir(ctx.out, dim, sid)
        epath = os.path.join(rdir, "evals.json")
        if os.path.exists(epath) and _read_json(epath).get("config_hash") == ctx.h:
            continue
        acfg = _agent_cfg(cfg, dim, sid)
        net, _ck = load_qnetwork(
            os.path.join(rdir, "checkpoint.bin"), expected_arch=_expected_arch(cfg, dim)
        )
        split = next(s for s in ctx.splits if s.split_id == sid)
        ev_train = evaluate(
            net, ctx.corpus, acfg, ctx.smodels[dim], ctx.tables[dim],
            dialogue_ids=split.dialogue_ids, seed=cfg.seed,
        )
        ev_test = None
        tsplit = test_by_id.get(sid)
        if ctx.test_corpus is not None and tsplit and len(tsplit.dialogue_ids) >= 2:
            ev_test = evaluate(
                net, ctx.test_corpus, acfg, ctx.smodels[dim], ctx.tables[dim],
                dialogue_ids=tsplit.dialogue_ids, seed=cfg.seed,
            )
        _write_json(
            epath,
            {
                "config_hash": ctx.h,
                "eval_budget_steps": cfg.agent.test_steps,
                "eval_train": _eval_dict(ev_train),
                "eval_test": _eval_dict(ev_test) if ev_test is not None else None,
            },
        )
        _say(
            ctx,
            f"evaluate dim={dim} split={sid}: train {ev_train.mean_reward:+.3f}"
            + (f", test {ev_test.mean_reward:+.3f}" if ev_test else ""),
        )
    _write_marker(ctx, "evaluate")


def _fmt(v) -> str:
    if v is None or v == "":
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.6f}"


def _stage_report(ctx: _Context) -> None:
    cfg = ctx.cfg
    if _marker_ok(ctx, "report"):
        return
    rows = []  # (label, dim, episodes, steps, ma, ev_train, ev_test)
    train_ids: set = set()
    test_ids: set = set()
    for dim in cfg.dims:
        dim_rows = []
        for d, sid in ctx.trained:
            if d != dim:
                continue
            rdir = _run_dir(ctx.out, dim, sid)
            rep = _read_json(os.path.join(rdir, "report.json"))
            evs = _read_json(os.path.join(rdir, "evals.json"))
            ma = rep["moving_avg"][-1] if rep["episodes"] else None
            ev_tr = evs["eval_train"]
            ev_te = evs["eval_test"]
            train_ids.update(ev_tr["dialogue_ids"])
            if ev_te:
                test_ids.update(ev_te["dialogue_ids"])
            dim_rows.append(
                (
                    f"split {sid}", dim, rep["episodes"], rep["steps"], ma,
                    ev_tr["mean_reward"], ev_te["mean_reward"] if ev_te else None,
                )
            )
        rows.extend(dim_rows)

        def col(i):
            vals = [r[i] for r in dim_rows if r[i] is not None]
            return vals

        rows.append(
            (
                "Average", dim,
                float(np.mean(col(2))), float(np.mean(col(3))),
                float(np.mean(col(4))) if col(4) else None,
                float(np.mean(col(5))),
                float(np.mean(col(6))) if col(6) else None,
            )
        )
        rows.append(
            (
                "Sum", dim,
                int(np.sum(col(2))), int(np.sum(col(3))),
                float(np.sum(col(4))) if col(4) else None,
                float(np.sum(col(5))),
                float(np.sum(col(6))) if col(6) else None,
            )
        )
    bounds_tr = baseline_bounds(
        (ctx.corpus.get(i) for i in sorted(train_ids)), cfg.agent.candidates
    )
    bounds_te = (
        baseline_bounds((ctx.test_corpus.get(i) for i in sorted(test_ids)), cfg.agent.candidates)
        if test_ids
        else (None, None, None)
    )
    for label, i in (("Upper Bound", 0), ("Lower Bound", 1), ("Random Sel.", 2)):
        rows.append((label, None, None, None, bounds_tr[i], bounds_tr[i], bounds_te[i]))

    path = os.path.join(ctx.out, "report.csv")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# config_hash={ctx.h}\n")
        fh.write(f"# eval_budget_steps={cfg.agent.test_steps}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "dim", "episodes", "steps", "train_ma100", "eval_train", "eval_test"])
        for label, dim, eps, steps, ma, ev_tr, ev_te in rows:
            w.writerow(
                [
                    label,
                    "" if dim is None else str(dim),
                    _fmt(eps),
                    _fmt(steps),
                    _fmt(ma),
                    _fmt(ev_tr),
                    _fmt(ev_te),
                ]
            )
    _write_marker(ctx, "report")
    _say(ctx, f"report: {path}")


def _cmp_samples(a: list, b: list) -> dict:
    if len(a) < 2:
        return {"note": "fewer than 2 paired splits", "a": a, "b": b}
    try:
        r = wilcoxon_signed_rank(a, b)
    except ValueError as exc:
        return {"note": str(exc), "a": a, "b": b}
    return {
        "a": a,
        "b": b,
        "n_effective": r.n_effective,
        "w_statistic": r.w_statistic,
        "p_value": r.p_value,
        "significant_at_0_05": r.significant_at_0_05,
        "method": r.method,
    }


def _stage_compare(ctx: _Context) -> None:
    cfg = ctx.cfg
    if _marker_ok(ctx, "compare"):
        return
    path = os.path.join(ctx.out, "comparisons.json")
    if len(cfg.dims) < 2:
        _write_json(path, {"config_hash": ctx.h, "note": "single embedding size; nothing to compare"})
        _write_marker(ctx, "compare")
        return
    d1, d2 = cfg.dims[0], cfg.dims[1]
    splits1 = {sid for d, sid in ctx.trained if d == d1}
    splits2 = {sid for d, sid in ctx.trained if d == d2}
    common = sorted(splits1 & splits2)
    tr_a, tr_b, te_a, te_b = [], [], [], []
    for sid in common:
        e1 = _read_json(os.path.join(_run_dir(ctx.out, d1, sid), "evals.json"))
        e2 = _read_json(os.path.join(_run_dir(ctx.out, d2, sid), "evals.json"))
        tr_a.append(e1["eval_train"]["mean_reward"])
        tr_b.append(e2["eval_train"]["mean_reward"])
        if e1["eval_test"] and e2["eval_test"]:
            te_a.append(e1["eval_test"]["mean_reward"])
            te_b.append(e2["eval_test"]["mean_reward"])
    _write_json(
        path,
        {
            "config_hash": ctx.h,
            "dims": [d1, d2],
            "eval_train": _cmp_samples(tr_a, tr_b),
            "eval_test": _cmp_samples(te_a, te_b),
        },
    )
    _write_marker(ctx, "compare")
    _say(ctx, f"compare: {path}")


# ---------------------------------------------------------------------------
# entry points


def _make_context(cfg: ExperimentConfig, log=None) -> _Context:
    h = config_hash(cfg)
    os.makedirs(cfg.out_dir, exist_ok=True)
    cpath = os.path.join(cfg.out_dir, "config.resolved.json")
    payload = {"config_hash": h, "config": cfg.to_dict()}
    if os.path.exists(cpath):
        found = _read_json(cpath).get("config_hash")
        if found != h:
            raise ValueError(
                f"output dir {cfg.out_dir} was produced by config {found!r}, "
                f"current config is {h!r}; use a fresh --out directory"
            )
    else:
        _write_json(cpath, payload)
    return _Context(cfg=cfg, h=h, out=cfg.out_dir, log=log)


def run_experiment(cfg: ExperimentConfig, log=None, until: str | None = None) -> str:
    """Execute the pipeline (or resume it) inside cfg.out_dir.

    `until` stops after the named stage. Returns the output directory.
    """
    if until is not None and until not in STAGES:
        raise ValueError(f"unknown stage {until!r}; stages are {STAGES}")
    ctx = _make_context(cfg, log)
    bodies = {
        "ingest": _stage_ingest,
        "embed": _stage_embed,
        "cluster_sentences": _stage_cluster_sentences,
        "cluster_dialogues": _stage_cluster_dialogues,
        "split": _stage_split,
        "train": _stage_train,
        "evaluate": _stage_evaluate,
        "report": _stage_report,
        "compare": _stage_compare,
    }
    for stage in STAGES:
        _run_stage(stage, lambda s=stage: bodies[s](ctx))
        if stage == until:
            break
    return ctx.out


def train_single(cfg: ExperimentConfig, dim: int, split_id: int, log=None) -> str:
    """Prepare data stages, then train exactly one (dim, split) run."""
    if dim not in cfg.dims:
        raise ValueError(f"dim {dim} not among configured embeddings {cfg.dims}")
    ctx = _make_context(cfg, log)
    for stage in ("ingest", "embed", "cluster_sentences", "cluster_dialogues", "split"):
        _run_stage(stage, lambda s=stage: {
            "ingest": _stage_ingest,
            "embed": _stage_embed,
            "cluster_sentences": _stage_cluster_sentences,
            "cluster_dialogues": _stage_cluster_dialogues,
            "split": _stage_split,
        }[s](ctx))
    split = next((s for s in ctx.splits if s.split_id == split_id), None)
    if split is None:
        raise ValueError(f"no split {split_id}; splits are 0..{len(ctx.splits) - 1}")
    if len(split.dialogue_ids) < 2:
        raise ValueError(f"split {split_id} has {len(split.dialogue_ids)} dialogues; need >= 2")

    def body():
        rdir = _run_dir(ctx.out, dim, split_id)
        done = os.path.join(rdir, "done.json")
        if os.path.exists(done) and _read_json(done).get("config_hash") == ctx.h:
            return
        _train_one(ctx, dim, split)

    _run_stage("train", body)
    return _run_dir(ctx.out, dim, split_id)


def evaluate_checkpoint(
    cfg: ExperimentConfig, checkpoint_path: str, which: str, log=None
) -> dict:
    """Evaluate a saved Q-network on `train`, `test`, or a JSONL file path.

    The checkpoint's architecture must agree with the current config.
    """
    ctx = _make_context(cfg, log)
    for stage in ("ingest", "embed", "cluster_sentences"):
        _run_stage(stage, lambda s=stage: {
            "ingest": _stage_ingest,
            "embed": _stage_embed,
            "cluster_sentences": _stage_cluster_sentences,
        }[s](ctx))
    ck_arch = None
    net = None
    err = None
    for dim in cfg.dims:
        try:
            net, ck = load_qnetwork(checkpoint_path, expected_arch=_expected_arch(cfg, dim))
            ck_arch = ck.arch
            break
        except ValueError as exc:
            err = exc
    if net is None:
        raise err
    dim = ck_arch["embedding_dim"]
    if which == "train":
        corpus = ctx.corpus
    elif which == "test":
        if ctx.test_corpus is None:
            raise ValueError("config has no test_corpus")
        corpus = ctx.test_corpus
    else:
        corpus = load_corpus(which)
    acfg = replace(cfg.agent, embedding_dim=dim)
    ev = evaluate(net, corpus, acfg, ctx.smodels[dim], ctx.tables[dim], seed=cfg.seed)
    return {
        "checkpoint": checkpoint_path,
        "dialogues": which,
        "dim": dim,
        **_eval_dict(ev),
    }


# ---------------------------------------------------------------------------
# learning-curve emission


def _svg_learning_curve(rewards, moving_avg, config_hash_: str) -> str:
    width, height = 640, 400
    ml, mr, mt, mb = 56, 14, 14, 34
    pw, ph = width - ml - mr, height - mt - mb
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f"<!-- config_hash: {config_hash_} -->",
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="white" stroke="black"/>',
    ]
    if rewards:
        lo = min(min(rewards), min(moving_avg))
        hi = max(max(rewards), max(moving_avg))
        if hi == lo:
            lo, hi = lo - 1.0, hi + 1.0
        n = len(rewards)

        def px(i):
            return ml + (pw * i / (n - 1) if n > 1 else pw / 2)

        def py(v):
            return mt + ph * (hi - v) / (hi - lo)

        raw = " ".join(f"{px(i):.2f},{py(v):.2f}" for i, v in enumerate(rewards))
        ma = " ".join(f"{px(i):.2f},{py(v):.2f}" for i, v in enumerate(moving_avg))
        parts.append(f'<polyline points="{raw}" fill="none" stroke="#bbbbbb" stroke-width="1"/>')
        parts.append(f'<polyline points="{ma}" fill="none" stroke="#000000" stroke-width="2"/>')
        parts.append(
            f'<text x="{ml - 6}" y="{mt + 5}" text-anchor="end" font-size="11">{hi:.2f}</text>'
        )
        parts.append(
            f'<text x="{ml - 6}" y="{mt + ph}" text-anchor="end" font-size="11">{lo:.2f}</text>'
        )
        parts.append(
            f'<text x="{ml}" y="{height - 10}" text-anchor="middle" font-size="11">1</text>'
        )
        parts.append(
            f'<text x="{ml + pw}" y="{height - 10}" text-anchor="middle" font-size="11">{n}</text>'
        )
    parts.append(
        f'<text x="{ml + pw / 2:.0f}" y="{height - 10}" text-anchor="middle" font-size="11">'
        "episode</text>"
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_learning_curve(run_dir: str):
    """Write curve.csv (episode,reward,moving_avg) and curve.svg next to a
    run's report.json; the moving average uses a trailing window of 100."""
    rpath = os.path.join(run_dir, "report.json")
    if not os.path.exists(rpath):
        raise FileNotFoundError(f"missing report: {rpath}")
    rep = _read_json(rpath)
    rewards = rep["episode_rewards"]
    moving = rep["moving_avg"]
    h = rep.get("config_hash", "")
    cpath = os.path.join(run_dir, "curve.csv")
    with open(cpath, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# config_hash={h}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["episode", "reward", "moving_avg"])
        for i, (r, m) in enumerate(zip(rewards, moving), start=1):
            w.writerow([i, r, f"{m:.6f}"])
    spath = os.path.join(run_dir, "curve.svg")
    with open(spath, "w", encoding="utf-8") as fh:
        fh.write(_svg_learning_curve(rewards, moving, h))
    return cpath, spath


# ---------------------------------------------------------------------------
# reward-prediction study


def reward_study(
    cfg: ExperimentConfig,
    out_path: str | None = None,
    lengths=HISTORY_LENGTHS,
    fractions=DISTORTION_FRACTIONS,
    log=None,
) -> list:
    """Run the history-length study and write `h,run,pearson` CSV rows.

    Uses the smallest configured embedding size; the global seed drives the
    predictor seeds. Requires a test corpus (correlations are measured on
    held-out dialogues).
    """
    if cfg.test_corpus is None:
        raise ValueError("reward study needs a test_corpus in the config")
    ctx = _make_context(cfg, log)
    for stage in ("ingest", "embed"):
        _run_stage(stage, lambda s=stage: {
            "ingest": _stage_ingest, "embed": _stage_embed,
        }[s](ctx))
    base = cfg.dims[0]
    pcfg = replace(cfg.predictor, seed=cfg.seed)
    rows = history_length_study(
        ctx.corpus, ctx.test_corpus, ctx.tables[base], pcfg,
        lengths=lengths, fractions=fractions,
    )
    path = out_path or os.path.join(ctx.out, "study.csv")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# config_hash={ctx.h}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["h", "run", "pearson"])
        for row in rows:
            for run, score in enumerate(row.scores):
                w.writerow([row.h, run, f"{score:.6f}"])
    if log is not None:
        for row in rows:
            log(f"h={row.h}: mean r={row.mean_r:.4f} (std {row.std_r:.4f})")
    return rows
