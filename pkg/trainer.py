"""Training loop, evaluation points, checkpoints and the AM-only sampler run."""
import csv
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Tuple

import numpy as np
import torch

from config import ExperimentConfig
from environment import Environment, TorusPotential, make_env
from errors import ArtifactIOError, ConfigError, GridFormatError, NonFiniteLossError
from evaluation import DensityGrid, empirical_histogram, l1_error
from exploration import Explorer, StrategyKind, make_am_state
from gfn_core import GfnModel, Trajectories, make_loss, rollout_forward
from metadynamics import run_adapted_metadynamics
from replay_buffer import ReplayBuffer
from seeding import stream, torch_seed
from tensor_nn import GfnOptimizer, load_checkpoint, lr_at, save_checkpoint

logger = logging.getLogger(__name__)

METRIC_COLUMNS = ("episode", "loss_mean", "l1_error", "wall_ms", "strategy_branch")
EVAL_CHUNK = 4096

__all__ = ["lr_at", "train", "run_sample_am", "evaluate_policy", "build_env", "build_model"]


@dataclass
class MetricRow:
    episode: int
    loss_mean: float
    l1_error: float
    wall_ms: float
    strategy_branch: str


@dataclass
class RunArtifacts:
    out_dir: Path
    seed: int
    metrics: List[MetricRow] = field(default_factory=list)
    checkpoints: List[Path] = field(default_factory=list)

    @property
    def final_l1(self) -> Optional[float]:
        return self.metrics[-1].l1_error if self.metrics else None


# =========================
# Construction
# =========================
def build_env(cfg: ExperimentConfig) -> Environment:
    kwargs = {"spacing": cfg.evaluation.spacing}
    # 설정 파일 경로가 없으면 METAGFN_TORUS_POTENTIAL, 그 다음 합성 FES
    if cfg.run.env == "torus" and cfg.run.torus_potential:
        path = cfg.run.torus_potential
        try:
            kwargs["potential"] = TorusPotential.from_file(path)
        except GridFormatError:
            raise
        except ValueError as exc:
            raise ConfigError(f"torus potential {path}: {exc}") from exc
    return make_env(cfg.run.env, **kwargs)


def build_model(cfg: ExperimentConfig, env: Environment, seed: int) -> GfnModel:
    torch.manual_seed(torch_seed(seed, "init"))
    return GfnModel(
        dim=env.dim,
        kind=env.policy_kind,
        horizon=env.horizon,
        hidden=cfg.train.hidden,
        layers=cfg.train.layers,
        dropout=cfg.train.dropout,
        forward_heads=cfg.strategy.forward_heads,
    )


# =========================
# Evaluation
# =========================
def evaluate_policy(model: GfnModel, env: Environment, n: int, rng: np.random.Generator) -> Tuple[DensityGrid, float]:
    """On-policy terminal histogram and its L1 error against the target."""
    terminals = []
    remaining = n
    while remaining > 0:
        b = min(EVAL_CHUNK, remaining)
        heads = None
        if model.forward_heads > 1:
            heads = rng.integers(0, model.forward_heads, size=b)
        terminals.append(rollout_forward(model, env, b, rng, heads=heads).terminals)
        remaining -= b
    hist = empirical_histogram(np.concatenate(terminals), env)
    return hist, l1_error(hist, env.target_density())


def write_metrics(path: Path, rows: List[MetricRow]) -> None:
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS)
            writer.writeheader()
            for row in rows:
                d = asdict(row)
                d["loss_mean"] = "%.17g" % row.loss_mean
                d["l1_error"] = "%.17g" % row.l1_error
                d["wall_ms"] = "%.3f" % row.wall_ms
                writer.writerow(d)
    except OSError as exc:
        raise ArtifactIOError(f"cannot write metrics {path}: {exc}") from exc


def _dump_offending(path: Path, traj: Trajectories) -> None:
    b = len(traj)
    table = np.concatenate(
        [traj.states.reshape(b, -1), traj.logpf, traj.logpb, traj.log_reward[:, None], traj.heads[:, None]],
        axis=1,
    )
    np.savetxt(path, table, delimiter=",", fmt="%.17g")


# =========================
# Training
# =========================
def train(
    cfg: ExperimentConfig,
    seed: int,
    out_dir: Path,
    env: Optional[Environment] = None,
    record_wall_time: bool = True,
    on_metric: Optional[Callable[[MetricRow], None]] = None,
) -> RunArtifacts:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    env = env or build_env(cfg)
    tc = cfg.train
    total = tc.batches

    model = build_model(cfg, env, seed)
    torch.manual_seed(torch_seed(seed, "dropout"))
    optimizer = GfnOptimizer(model.network_parameters(), [model.log_z], tc.optimizer_params())
    loss_fn = make_loss(tc.loss, tc.stb_lambda)
    buffer = ReplayBuffer(tc.buffer_threshold, tc.capacity)
    metad = cfg.metadynamics.params() if cfg.strategy.kind == StrategyKind.METAGFN else None
    explorer = Explorer(
        cfg.strategy, env, model, buffer, total, tc.batch_size,
        metad=metad, walker_rng=stream(seed, "walkers"),
    )
    rollout_rng = stream(seed, "rollout")
    thompson_rng = stream(seed, "thompson")
    eval_rng = stream(seed, "eval")

    artifacts = RunArtifacts(out_dir, seed)
    spec = model.spec

    def checkpoint(episode: int) -> None:
        path = out_dir / f"checkpoint_{episode:06d}.pt"
        save_checkpoint(path, model, optimizer, spec, {"episode": episode, "seed": seed, "env": env.name})
        artifacts.checkpoints.append(path)

    checkpoint(0)
    logger.info(
        "seed %d: %s on %s, loss %s, %d batches of %d",
        seed, cfg.strategy.kind.value, env.name, tc.loss, total, tc.batch_size,
    )

    start = time.perf_counter()
    losses: List[float] = []
    for episode in range(1, total + 1):
        batch = explorer.next_batch(episode, rollout_rng)
        model.train()
        optimizer.zero_grad()
        loss = explorer.loss(batch, loss_fn, thompson_rng)
        value = float(loss.detach())
        if not np.isfinite(value):
            dump = out_dir / f"nonfinite_episode_{episode:06d}.csv"
            _dump_offending(dump, batch.trajectories)
            raise NonFiniteLossError(f"non-finite loss at episode {episode} ({batch.branch.value} batch)", str(dump))
        loss.backward()
        optimizer.step()
        losses.append(value / len(batch.trajectories))

        if episode % cfg.evaluation.every == 0 or episode == total:
            _, err = evaluate_policy(model, env, cfg.evaluation.samples, eval_rng)
            wall = (time.perf_counter() - start) * 1e3 if record_wall_time else 0.0
            row = MetricRow(episode, float(np.mean(losses)), err, wall, batch.branch.value)
            artifacts.metrics.append(row)
            losses = []
            logger.info("episode %d [%s]: loss %.4g, L1 %.4f", episode, row.strategy_branch, row.loss_mean, err)
            if on_metric is not None:
                on_metric(row)

        if episode % tc.checkpoint_every == 0 or episode == total:
            checkpoint(episode)

    write_metrics(out_dir / "metrics.csv", artifacts.metrics)
    buffer.dump(out_dir / "replay_buffer.csv")
    if explorer.am_state is not None:
        explorer.am_state.grids.save(out_dir / "am_grids.txt")
    return artifacts


# =========================
# AM-only sampling
# =========================
def run_sample_am(cfg: ExperimentConfig, seed: int, out_dir: Path, env: Optional[Environment] = None) -> List[Tuple[int, float]]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    env = env or build_env(cfg)
    mc = cfg.metadynamics
    params = mc.params()
    rng = stream(seed, "walkers")
    state = make_am_state(env, mc.walkers, params, rng)
    logger.info("seed %d: adapted metadynamics on %s, %d walkers x %d iterations", seed, env.name, mc.walkers, mc.iterations)

    series = run_adapted_metadynamics(state, env, params, mc.iterations, rng, mc.report_every)
    state.grids.save(out_dir / "am_grids.txt")
    try:
        with open(out_dir / "am_l1.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "l1_error"])
            writer.writerows((it, "%.17g" % err) for it, err in series)
        header = ",".join([f"x{i}" for i in range(env.dim)] + [f"p{i}" for i in range(env.dim)])
        np.savetxt(
            out_dir / "am_walkers.csv",
            np.hstack([state.walkers.x, state.walkers.p]),
            delimiter=",", header=header, comments="", fmt="%.17g",
        )
    except OSError as exc:
        raise ArtifactIOError(f"cannot write AM artifacts to {out_dir}: {exc}") from exc
    logger.info("final implied-density L1 %.4f", series[-1][1])
    return series


def load_model(path) -> Tuple[GfnModel, dict]:
    payload = load_checkpoint(path)
    model = GfnModel.from_spec(payload["model_spec"])
    model.load_state_dict(payload["model"])
    model.eval()
    return model, payload.get("extra", {})
