"""Command-line interface: train, compare, matsqrt, and selftest subcommands.

Exit codes: 0 success, 1 failed selftest, 2 invalid configuration (message
names the bad key), 3 missing data files.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, TrainConfig, load_train_config
from .data import Dataset, gen_blobs, load_idx, split_train_val, write_metrics
from .linalg import SolverError, db_sqrt, ns_invsqrt, random_spd, spd_invsqrt_oracle
from .network import MLPModel, build_mlp
from .selftest import run_all
from .training import OptimizerKind, evaluate, train_run

DATA_DIR_ENV = "FISHERFLOW_DATA_DIR"

# The validation split must not move between runs or configs, so it is cut
# with its own fixed seed rather than the experiment seed.
VAL_SPLIT_SEED = 7
MNIST_VAL_SIZE = 10000

BLOBS_PER_CLASS = 500
BLOBS_SEPARATION = 8.0

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_DATA = 3


class DataNotFoundError(FileNotFoundError):
    """A configured dataset file is missing or unusable."""


def _mnist_path(data_dir: Path, stem: str) -> Path:
    for name in (stem, stem + ".gz"):
        candidate = data_dir / name
        if candidate.exists():
            return candidate
    raise DataNotFoundError(f"missing MNIST file {stem}[.gz] under {data_dir}")


def resolve_data_dir(config: TrainConfig) -> Path:
    raw = config.data_dir or os.environ.get(DATA_DIR_ENV, "")
    if not raw:
        raise DataNotFoundError(
            f"dataset=mnist needs data_dir in the config or {DATA_DIR_ENV} in the environment"
        )
    return Path(raw)


def load_datasets(config: TrainConfig) -> tuple[Dataset, Dataset, Dataset | None]:
    """Build (train, val, test) for the configured dataset.

    MNIST: IDX pairs from the data dir, validation carved from the training
    file. Blobs: generated from the experiment seed with the feature count
    and class count taken from the arch ends, 20% held out for validation.
    """
    if config.dataset == "mnist":
        data_dir = resolve_data_dir(config)
        try:
            train_full = load_idx(
                _mnist_path(data_dir, "train-images-idx3-ubyte"),
                _mnist_path(data_dir, "train-labels-idx1-ubyte"),
                split="train",
            )
            test = load_idx(
                _mnist_path(data_dir, "t10k-images-idx3-ubyte"),
                _mnist_path(data_dir, "t10k-labels-idx1-ubyte"),
                split="test",
            )
            train, val = split_train_val(train_full, MNIST_VAL_SIZE, VAL_SPLIT_SEED)
        except ValueError as exc:
            raise DataNotFoundError(f"unusable MNIST data under {data_dir}: {exc}") from None
        return train, val, test
    if config.arch[-1] < 2:
        raise ConfigError(f"arch: blobs need a last width of at least 2, got {config.arch[-1]}")
    blobs = gen_blobs(
        config.seed,
        n_per_class=BLOBS_PER_CLASS,
        d=config.arch[0],
        num_classes=config.arch[-1],
        separation=BLOBS_SEPARATION,
    )
    train, val = split_train_val(blobs, blobs.n // 5, VAL_SPLIT_SEED)
    return train, val, None


def weight_hash(model: MLPModel) -> str:
    digest = hashlib.sha256()
    for layer in model.layers:
        digest.update(np.ascontiguousarray(layer.w).tobytes())
        digest.update(np.ascontiguousarray(layer.b).tobytes())
    return digest.hexdigest()[:16]


def _build_model(
    config: TrainConfig, train: Dataset, optimizer: str, rng: np.random.Generator
) -> MLPModel:
    if config.arch[0] != train.x.shape[0]:
        raise ConfigError(
            f"arch: first width {config.arch[0]} does not match the data's {train.x.shape[0]} features"
        )
    if config.arch[-1] < train.num_classes:
        raise ConfigError(
            f"arch: last width {config.arch[-1]} is smaller than the {train.num_classes} classes present"
        )
    return build_mlp(
        config.arch,
        config.hidden_activation(),
        config.l2,
        rng,
        dtype=config.dtype(),
        fisher_options=config.fisher_options(),
        frozen=(optimizer == "sgd"),
    )


def _run_one(
    config: TrainConfig,
    optimizer: str,
    datasets: tuple[Dataset, Dataset, Dataset | None],
    out_path: str,
    per_step: bool,
):
    """Train one model end to end and write its metrics file."""
    train, val, test = datasets
    # One generator per run: init consumes it first, the epoch shuffles
    # continue the stream. Neither draw depends on the optimizer kind, so
    # equal seeds mean equal init weights and equal batch order.
    rng = np.random.default_rng(config.seed)
    model = _build_model(config, train, optimizer, rng)
    print(f"{optimizer}: arch {config.arch} seed {config.seed} init_hash {weight_hash(model)}")
    opt = replace(config.optimizer_config(), kind=OptimizerKind(optimizer))
    started = time.perf_counter()
    rows = train_run(
        model,
        train,
        val,
        opt,
        epochs=config.epochs,
        batch_size=config.batch_size,
        rng=rng,
        per_step=per_step,
        log=print,
    )
    elapsed = time.perf_counter() - started
    write_metrics(rows, out_path)
    val_loss, val_acc = evaluate(model, val)
    summary = f"{optimizer}: final val_acc {val_acc:.4f}"
    if test is not None:
        _, test_acc = evaluate(model, test)
        summary += f"  test_acc {test_acc:.4f}"
    print(f"{summary}  elapsed {elapsed:.1f}s  wrote {out_path} ({len(rows)} rows)")
    return rows, model


def cmd_train(config: TrainConfig, per_step: bool = False) -> int:
    """Train the configured optimizer once; metrics land at config.out."""
    datasets = load_datasets(config)
    _run_one(config, config.optimizer, datasets, config.out, per_step)
    return EXIT_OK


def cmd_compare(config: TrainConfig, per_step: bool = False) -> int:
    """Run sgd and sngd with identical seed/init/data order, side by side."""
    datasets = load_datasets(config)
    results = {}
    stem = config.out[:-4] if config.out.endswith(".csv") else config.out
    for optimizer in ("sgd", "sngd"):
        out_path = f"{stem}.{optimizer}.csv"
        rows, _ = _run_one(config, optimizer, datasets, out_path, per_step)
        results[optimizer] = rows
    epoch_sgd = {row.epoch: row for row in results["sgd"]}
    epoch_sngd = {row.epoch: row for row in results["sngd"]}
    print("epoch  val_acc(sgd)  val_acc(sngd)  delta")
    for epoch in sorted(epoch_sgd):
        a, b = epoch_sgd[epoch], epoch_sngd[epoch]
        print(f"{epoch:5d}  {a.val_acc:12.4f}  {b.val_acc:13.4f}  {b.val_acc - a.val_acc:+.4f}")
    return EXIT_OK


def cmd_matsqrt(dim: int, trials: int, seed: int) -> int:
    """Spot-check the inverse-root solvers on random SPD matrices."""
    if dim < 1 or trials < 1:
        raise ConfigError("matsqrt: dim and trials must be positive")
    rng = np.random.default_rng(seed)
    print(f"dim {dim}, {trials} trials, seed {seed}")
    print(f"{'trial':>5}  {'method':<16} {'iters':>5}  {'residual':>12}  {'ms':>8}")
    worst = 0.0
    for trial in range(trials):
        a = random_spd(dim, rng, cond=10.0 ** rng.uniform(1.0, 4.0), scale=10.0 ** rng.uniform(-3.0, 1.0))
        t0 = time.perf_counter()
        z_ns, report_ns = ns_invsqrt(a, iters=20)
        ms_ns = (time.perf_counter() - t0) * 1e3
        t0 = time.perf_counter()
        _, z_db, report_db = db_sqrt(a)
        ms_db = (time.perf_counter() - t0) * 1e3
        t0 = time.perf_counter()
        want = spd_invsqrt_oracle(a)
        ms_or = (time.perf_counter() - t0) * 1e3
        eye = np.eye(dim)
        res_or = float(np.linalg.norm(want @ a @ want - eye))
        print(f"{trial:5d}  {'newton_schulz':<16} {report_ns.iterations_used:5d}  {report_ns.residual:12.3e}  {ms_ns:8.2f}")
        print(f"{trial:5d}  {'denman_beavers':<16} {report_db.iterations_used:5d}  {report_db.residual:12.3e}  {ms_db:8.2f}")
        print(f"{trial:5d}  {'jacobi_oracle':<16} {'-':>5}  {res_or:12.3e}  {ms_or:8.2f}")
        norm = float(np.linalg.norm(want))
        worst = max(
            worst,
            float(np.linalg.norm(z_ns - want)) / norm,
            float(np.linalg.norm(z_db - want)) / norm,
        )
    print(f"max relative error vs oracle: {worst:.3e}")
    return EXIT_OK


def cmd_selftest(seed: int = 0) -> int:
    """Run the built-in checks; exit 1 if any fails."""
    results = run_all(seed=seed)
    failed = 0
    for result in results:
        mark = "PASS" if result.passed else "FAIL"
        print(f"[{mark}] {result.name}: {result.detail}")
        failed += 0 if result.passed else 1
    if failed:
        print(f"{failed} of {len(results)} checks failed", file=sys.stderr)
        return EXIT_FAILED
    print(f"all {len(results)} checks passed")
    return EXIT_OK


def _load_config(args: argparse.Namespace) -> TrainConfig:
    config = load_train_config(args.config) if args.config else TrainConfig()
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    return config


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="fisherflow",
        description="Train dense nets with per-layer Fisher whitening and compare against plain SGD.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("train", "train one model from a TOML config"),
        ("compare", "train sgd and sngd side by side from one config"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, default=None, help="TOML config path (defaults apply otherwise)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--per-step", action="store_true", help="log one row per step instead of per epoch")

    p_mat = sub.add_parser("matsqrt", help="spot-check the matrix inverse-root solvers")
    p_mat.add_argument("--dim", type=int, default=32)
    p_mat.add_argument("--trials", type=int, default=5)
    p_mat.add_argument("--seed", type=int, default=0)

    p_self = sub.add_parser("selftest", help="run the built-in correctness checks")
    p_self.add_argument("--seed", type=int, default=0)

    args = parser.parse_args(argv)
    try:
        if args.command == "train":
            return cmd_train(_load_config(args), per_step=args.per_step)
        if args.command == "compare":
            return cmd_compare(_load_config(args), per_step=args.per_step)
        if args.command == "matsqrt":
            return cmd_matsqrt(args.dim, args.trials, args.seed)
        return cmd_selftest(seed=args.seed)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (SolverError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    raise SystemExit(main())
