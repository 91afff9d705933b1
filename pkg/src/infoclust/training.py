"""Adam training with early stopping, and grid-based model selection.

Randomness: every run derives its streams from ``numpy.random.SeedSequence(seed)``
spawned into four children (parameter init, corruption permutations, cluster
initialisation, data splits), each driving a PCG64 ``Generator``. The spawn
order is part of the reproducibility contract and must not change.
"""

from __future__ import annotations

import itertools
import logging
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import model as M
from .cluster import sign_value
from .graph import AttributedGraph, normalize_adjacency
from .kernels import NonFiniteError

log = logging.getLogger(__name__)

STREAMS = ("init", "corrupt", "cluster", "split")

TASK_EMBED_DIM = {"classification": 64, "link": 16, "clustering": 32}


def rng_streams(seed: int) -> dict[str, np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.Generator(np.random.PCG64(ss)) for name, ss in zip(STREAMS, children)}


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 0.5
    beta: float = 10.0
    num_clusters: int = 32
    embed_dim: int = 64
    learning_rate: float = 0.001
    max_epochs: int = 2000
    patience: int = 50
    seed: int = 0
    assign_sign: str = "plus"

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        for name in ("num_clusters", "embed_dim", "max_epochs", "patience"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        sign_value(self.assign_sign)

    @property
    def reduces_to_dgi(self) -> bool:
        return self.alpha == 1.0

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_update(params: dict, grads: dict, state: AdamState, lr: float) -> None:
    """One bias-corrected Adam step, applied in place to ``params``."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for {name!r} at step {state.step + 1}")
    state.step += 1
    t = state.step
    for name, g in grads.items():
        if name not in state.m:
            state.m[name] = np.zeros_like(params[name])
            state.v[name] = np.zeros_like(params[name])
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        m_hat = m / (1.0 - state.beta1 ** t)
        v_hat = v / (1.0 - state.beta2 ** t)
        params[name] -= lr * m_hat / (np.sqrt(v_hat) + state.eps)


def adam_step(params: M.ModelParams, grads: M.Gradients, state: AdamState, lr: float) -> M.ModelParams:
    arrays = {"theta": params.theta, "slope": np.array([params.slope]), "w": params.w}
    adam_update(arrays, grads.arrays(), state, lr)
    params.slope = float(arrays["slope"][0])
    return params


# ---------------------------------------------------------------------------
# training


class EarlyStopping:
    """Tracks the best (strictly lowest) loss; stops after ``patience`` epochs
    without improvement."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best_loss = np.inf
        self.best_epoch = -1
        self.bad_epochs = 0

    def update(self, epoch: int, loss: float) -> bool:
        if loss < self.best_loss:
            self.best_loss, self.best_epoch, self.bad_epochs = loss, epoch, 0
            return True
        self.bad_epochs += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.bad_epochs >= self.patience


@dataclass
class TrainResult:
    params: M.ModelParams
    history: list[float]
    best_epoch: int
    config: TrainConfig
    wall_time: float = 0.0

    @property
    def best_loss(self) -> float:
        return self.history[self.best_epoch]

    def report(self) -> dict:
        stable = {
            "config": self.config.to_dict(),
            "reduces_to_dgi": self.config.reduces_to_dgi,
            "epochs_run": len(self.history),
            "best_epoch": self.best_epoch,
            "best_loss": self.best_loss,
            "loss_history": self.history,
        }
        return {"stable": stable, "volatile": {"wall_time_sec": self.wall_time}}


def train(graph: AttributedGraph, config: TrainConfig) -> TrainResult:
    """Full-graph training; returns the parameters with the lowest loss seen."""
    t0 = time.perf_counter()
    streams = rng_streams(config.seed)
    norm_adj = normalize_adjacency(graph)
    x = M.feature_operand(graph.features)
    n = graph.num_nodes
    if config.alpha < 1.0 and config.num_clusters > n:
        raise ValueError(f"num_clusters={config.num_clusters} exceeds {n} nodes")
    sign = sign_value(config.assign_sign)

    params = M.ModelParams.init(graph.num_features, config.embed_dim, streams["init"])
    adam = AdamState()
    stopper = EarlyStopping(config.patience)
    best = params.copy()
    history: list[float] = []

    for epoch in range(config.max_epochs):
        perm = streams["corrupt"].permutation(n)
        loss, grads, _ = M.loss_and_grad(
            params, norm_adj, x, perm, config.alpha,
            beta=config.beta, num_clusters=config.num_clusters,
            cluster_rng=streams["cluster"], sign=sign,
        )
        if not np.isfinite(loss):
            raise NonFiniteError(f"non-finite training loss at epoch {epoch}")
        history.append(loss)
        if stopper.update(epoch, loss):
            best = params.copy()
        if stopper.should_stop:
            break
        adam_step(params, grads, adam, config.learning_rate)
        if epoch % 100 == 0:
            log.debug("epoch %d loss %.6f", epoch, loss)

    log.info("trained %d epochs, best %d (loss %.6f)", len(history), stopper.best_epoch, stopper.best_loss)
    return TrainResult(best, history, stopper.best_epoch, config, time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# model selection


def selection_grid() -> list[dict]:
    """The 12 (alpha, beta, K) triplets in selection order."""
    return [
        {"alpha": a, "beta": b, "num_clusters": k}
        for a, b, k in itertools.product((0.25, 0.5, 0.75), (10.0, 100.0), (32, 128))
    ]


def expand_grid(spec) -> list[dict]:
    """Accepts a list of override dicts or a dict of value lists."""
    if isinstance(spec, dict):
        keys = list(spec)
        values = [v if isinstance(v, (list, tuple)) else [v] for v in spec.values()]
        return [dict(zip(keys, combo)) for combo in itertools.product(*values)]
    return [dict(entry) for entry in spec]


@dataclass
class SelectionResult:
    config: TrainConfig
    result: TrainResult
    records: list[dict]


def select_model(
    graph: AttributedGraph,
    task: str,
    grid: list[dict] | None = None,
    seed: int = 0,
    base: TrainConfig | None = None,
) -> SelectionResult:
    """Train one model per grid entry, keep the best validation score.

    Ties go to the earliest entry. Validation: accuracy on a held-out
    imbalanced split (classification), AUC on validation edges (link), and
    matched clustering accuracy over all labelled nodes (clustering).
    """
    from . import evaluate as ev

    grid = selection_grid() if grid is None else grid
    if not grid:
        raise ValueError("empty selection grid")
    base = base or TrainConfig(embed_dim=TASK_EMBED_DIM[task_key(task)], seed=seed)
    split_rng = rng_streams(seed)["split"]
    task = task_key(task)

    if task == "classification":
        split = ev.classification_split_for(graph, "imbalanced", split_rng)
        train_graph = graph
    elif task == "link":
        from .graph import make_link_split
        link = make_link_split(graph, split_rng)
        train_graph = link.train_graph
    else:
        if graph.labels is None:
            raise ValueError("clustering selection requires labels")
        train_graph = graph

    records = []
    best_score, best = -np.inf, None
    for i, overrides in enumerate(grid):
        cfg = replace(base, **overrides)
        res = train(train_graph, cfg)
        emb = ev.embeddings(res.params, train_graph)
        eval_rng = np.random.default_rng([seed, i])
        if task == "classification":
            score = ev.classify_nodes(emb, split, graph.labels, eval_rng, eval_ids=split.val)
        elif task == "link":
            score = ev.auc(ev.link_scores(emb, link.val_pos), ev.link_scores(emb, link.val_neg))
        else:
            pred = ev.kmeans_cluster(emb, graph.num_classes, eval_rng)
            score = ev.clustering_metrics(pred, graph.labels)["acc"]
        records.append({"overrides": overrides, "val_score": float(score),
                        "best_epoch": res.best_epoch, "epochs_run": len(res.history)})
        log.info("grid %d/%d %s -> %.4f", i + 1, len(grid), overrides, score)
        if score > best_score:
            best_score, best = score, (cfg, res)
    return SelectionResult(best[0], best[1], records)


def task_key(task: str) -> str:
    aliases = {"classify": "classification", "classification": "classification",
               "link": "link", "cluster": "clustering", "clustering": "clustering"}
    try:
        return aliases[task]
    except KeyError:
        raise ValueError(f"unknown task {task!r}") from None
