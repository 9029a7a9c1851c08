# =========================
# Imports
# =========================
import csv
import functools
import logging
import math
from contextlib import contextmanager
from pathlib import Path
from typing import Dict, List, Optional

import click
import numpy as np
from sqlalchemy.exc import SQLAlchemyError

from config import ExperimentConfig, configure_logging, load_config, write_config
from db import Base, database_url, make_engine, make_session_factory
from errors import ArtifactIOError, ConfigError, MetaGfnError
from evaluation import mode_coverage
from models import MetricPoint, Run
from seeding import stream
from trainer import MetricRow, RunArtifacts, build_env, evaluate_policy, load_model, run_sample_am, train

logger = logging.getLogger("metagfn")


# =========================
# Registry (get_db)
# =========================
@contextmanager
def get_db(session_factory):
    db = session_factory()
    try:
        yield db
    finally:
        db.close()


class Registry:
    """Queryable mirror of run outcomes; the CSV artifacts stay authoritative."""

    def __init__(self, url: str):
        engine = make_engine(url)
        Base.metadata.create_all(engine)
        self.SessionLocal = make_session_factory(engine)

    @classmethod
    def open(cls, cfg: ExperimentConfig, out_dir: Path) -> Optional["Registry"]:
        if not cfg.run.registry:
            return None
        try:
            return cls(database_url(out_dir))
        except SQLAlchemyError as exc:
            logger.warning("run registry unavailable, continuing without it: %s", exc)
            return None

    def start_run(self, cfg: ExperimentConfig, run_id: str, seed: int, out_dir: Path) -> int:
        with get_db(self.SessionLocal) as db:
            r = Run(
                run_id=run_id,
                seed=seed,
                env=cfg.run.env,
                loss=cfg.train.loss,
                strategy=cfg.strategy.kind.value,
                mode=cfg.run.mode,
                status="RUNNING",
                out_dir=str(out_dir),
            )
            db.add(r)
            db.commit()
            db.refresh(r)
            return r.id

    def record_metric(self, run_pk: int, row: MetricRow) -> None:
        with get_db(self.SessionLocal) as db:
            db.add(
                MetricPoint(
                    run_pk=run_pk,
                    episode=row.episode,
                    loss_mean=row.loss_mean,
                    l1_error=row.l1_error,
                    wall_ms=row.wall_ms,
                    strategy_branch=row.strategy_branch,
                )
            )
            db.commit()

    def finish_run(self, run_pk: int, status: str, final_l1: Optional[float] = None) -> None:
        with get_db(self.SessionLocal) as db:
            r = db.query(Run).filter(Run.id == run_pk).first()
            if not r:
                return
            r.status = status
            r.final_l1 = final_l1
            db.commit()


# =========================
# Campaign summary
# =========================
def summarize(runs: List[RunArtifacts], out_dir: Path) -> Dict[str, object]:
    """Mean and standard error of L1 and loss per eval point across seeds."""
    by_episode: Dict[int, List[MetricRow]] = {}
    for art in runs:
        for row in art.metrics:
            by_episode.setdefault(row.episode, []).append(row)

    def mean_se(values):
        values = np.asarray(values, dtype=np.float64)
        se = values.std(ddof=1) / math.sqrt(len(values)) if len(values) > 1 else 0.0
        return float(values.mean()), float(se)

    finished = [a for a in runs if a.final_l1 is not None]
    ranked = sorted(finished, key=lambda a: a.final_l1)
    try:
        with open(out_dir / "summary.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["episode", "runs", "l1_mean", "l1_se", "loss_mean", "loss_se"])
            for episode in sorted(by_episode):
                rows = by_episode[episode]
                l1_mean, l1_se = mean_se([r.l1_error for r in rows])
                loss_mean, loss_se = mean_se([r.loss_mean for r in rows])
                writer.writerow([episode, len(rows), "%.17g" % l1_mean, "%.17g" % l1_se, "%.17g" % loss_mean, "%.17g" % loss_se])
        with open(out_dir / "seeds.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["rank", "seed", "final_l1", "out_dir"])
            for rank, art in enumerate(ranked, start=1):
                writer.writerow([rank, art.seed, "%.17g" % art.final_l1, str(art.out_dir)])
    except OSError as exc:
        raise ArtifactIOError(f"cannot write campaign summary to {out_dir}: {exc}") from exc

    summary = {
        "runs": len(runs),
        "best_seed": ranked[0].seed if ranked else None,
        "worst_seed": ranked[-1].seed if ranked else None,
    }
    if ranked:
        logger.info(
            "campaign of %d: best seed %d (L1 %.4f), worst seed %d (L1 %.4f)",
            len(runs), ranked[0].seed, ranked[0].final_l1, ranked[-1].seed, ranked[-1].final_l1,
        )
    return summary


# =========================
# Helpers
# =========================
def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except MetaGfnError as exc:
            logger.error("%s", exc.detail)
            click.echo(f"error: {exc.detail}", err=True)
            raise SystemExit(exc.exit_code)

    return wrapper


def _load(config_path, mode: str, seed=None, out=None, repeats=None, batches=None, wall_time=None) -> ExperimentConfig:
    configure_logging(config_path)
    overrides = {"run": {"mode": mode, "seed": seed, "out": out, "repeats": repeats, "wall_time": wall_time}}
    if batches is not None:
        if mode == "sample_am":
            overrides["metadynamics"] = {"iterations": batches}
        else:
            overrides["train"] = {"batches": batches}
    cfg = load_config(config_path, overrides)
    out_dir = cfg.out_dir
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ArtifactIOError(f"cannot create output directory {out_dir}: {exc}") from exc
    write_config(cfg, out_dir / "effective_config.ini")
    return cfg


def _run_id(cfg: ExperimentConfig) -> str:
    return cfg.run.run_id or f"{cfg.run.env}-{cfg.train.loss}-{cfg.strategy.kind.value}"


def _latest_checkpoints(path: Path) -> List[Path]:
    if path.is_file():
        return [path]
    found: Dict[Path, Path] = {}
    for ckpt in sorted(path.rglob("checkpoint_*.pt")):
        # 같은 디렉터리에서는 마지막 에피소드만
        found[ckpt.parent] = ckpt
    if not found:
        raise ArtifactIOError(f"no checkpoints under {path}")
    return [found[k] for k in sorted(found)]


# =========================
# Commands
# =========================
seed_option = click.option("--seed", type=int, default=None, help="Base seed (overrides [run] seed).")
out_option = click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory.")
repeats_option = click.option("--repeats", type=int, default=None, help="Number of seeds in the campaign.")
batches_option = click.option("--batches", type=int, default=None, help="Training batches (AM iterations for sample-am).")
wall_time_option = click.option(
    "--wall-time/--no-wall-time", default=None, help="Record elapsed time in metrics (overrides [run] wall_time)."
)


@click.group()
def cli():
    """MetaGFN experiments: training campaigns, AM-only sampling and evaluation."""


@cli.command()
@click.argument("config_path", metavar="CONFIG", type=click.Path(dir_okay=False))
@seed_option
@out_option
@repeats_option
@batches_option
@wall_time_option
@handle_errors
def run(config_path, seed, out, repeats, batches, wall_time):
    """Train one model per seed and summarise the campaign."""
    cfg = _load(config_path, "train", seed, out, repeats, batches, wall_time)
    env = build_env(cfg)
    registry = Registry.open(cfg, cfg.out_dir)
    run_id = _run_id(cfg)

    results: List[RunArtifacts] = []
    for r in range(cfg.run.repeats):
        s = cfg.run.seed + r
        seed_dir = cfg.out_dir / f"seed_{s}"
        run_pk = registry.start_run(cfg, run_id, s, seed_dir) if registry else None
        on_metric = functools.partial(registry.record_metric, run_pk) if registry else None
        try:
            art = train(cfg, s, seed_dir, env=env, record_wall_time=cfg.run.wall_time, on_metric=on_metric)
        except MetaGfnError:
            if registry:
                registry.finish_run(run_pk, "FAILED")
            raise
        if registry:
            registry.finish_run(run_pk, "FINISHED", art.final_l1)
        results.append(art)

    summary = summarize(results, cfg.out_dir)
    click.echo(f"{summary['runs']} run(s) written to {cfg.out_dir}")


@cli.command("sample-am")
@click.argument("config_path", metavar="CONFIG", type=click.Path(dir_okay=False))
@seed_option
@out_option
@repeats_option
@batches_option
@handle_errors
def sample_am(config_path, seed, out, repeats, batches):
    """Run adapted metadynamics alone and dump its grids."""
    cfg = _load(config_path, "sample_am", seed, out, repeats, batches)
    env = build_env(cfg)
    for r in range(cfg.run.repeats):
        s = cfg.run.seed + r
        series = run_sample_am(cfg, s, cfg.out_dir / f"seed_{s}", env=env)
        click.echo(f"seed {s}: implied-density L1 {series[-1][1]:.4f} after {series[-1][0]} iterations")


@cli.command("eval")
@click.argument("checkpoint", type=click.Path(exists=True))
@click.argument("config_path", metavar="CONFIG", type=click.Path(dir_okay=False))
@seed_option
@out_option
@handle_errors
def evaluate(checkpoint, config_path, seed, out):
    """Histogram, L1 and mode coverage for one checkpoint or a directory of runs."""
    cfg = _load(config_path, "eval", seed, out)
    env = build_env(cfg)
    names = env.mode_names
    basins = env.basins()

    rows = []
    for i, path in enumerate(_latest_checkpoints(Path(checkpoint))):
        model, extra = load_model(path)
        if model.dim != env.dim or model.kind != env.policy_kind:
            raise ConfigError(f"{path} was trained for a different environment ({extra.get('env')})")
        hist, err = evaluate_policy(model, env, cfg.evaluation.samples, stream(cfg.run.seed, "eval", i))
        flags = mode_coverage(hist, basins)
        rows.append((path, err, flags))
        hist.save(cfg.out_dir / f"policy_hist_{i}.txt")
        click.echo(f"{path}: L1 {err:.4f}, modes covered {sum(flags)}/{len(flags)}")

    try:
        with open(cfg.out_dir / "eval_report.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["checkpoint", "l1_error", *names])
            for path, err, flags in rows:
                writer.writerow([str(path), "%.17g" % err, *(int(f) for f in flags)])
        with open(cfg.out_dir / "mode_coverage.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["mode", "covered", "runs"])
            for k, name in enumerate(names):
                writer.writerow([name, sum(flags[k] for _, _, flags in rows), len(rows)])
    except OSError as exc:
        raise ArtifactIOError(f"cannot write evaluation report to {cfg.out_dir}: {exc}") from exc


if __name__ == "__main__":
    cli()
