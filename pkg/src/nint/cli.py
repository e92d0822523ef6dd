"""Command-line surface: fit, compare, dump-ntk.

Configuration is TOML with sections mirroring the module configs
(input, output, network, sampler, train); any key can be overridden on
the command line as --section.key=value. The effective (fully resolved)
config is written next to the run outputs so a run can be reproduced
from its own artifacts.

Exit codes: 0 success, 1 configuration error, 2 I/O error, 3 training
divergence. The NINT_THREADS environment variable caps parallelism in
`compare`; 0 (the default) means fully sequential, deterministic runs.

All CSV output is comma-separated, '.'-decimal, LF-terminated UTF-8
with a "# nint-csv v1" version comment. Infinities serialize as "inf";
absent values as empty fields. Wall-clock columns live in their own
files (timings.csv, thresholds.csv) so metrics.csv is bit-reproducible.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import os
import statistics
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

try:
    import tomllib
except ImportError:  # Python 3.10
    import tomli as tomllib

from .codecs import CodecError
from .network import NetworkConfig, init, load_checkpoint, save_checkpoint
from .ntk import dump_kernel_binary, dump_kernel_csv, ntk_patch
from .sampler import SamplerConfig, STRATEGIES
from .signal import SignalDataset, load_audio, load_image
from .trainer import TrainConfig, TrainLog, TrainingDiverged, train

CSV_VERSION = "# nint-csv v1"

DEFAULTS: dict[str, dict] = {
    "input": {"path": "", "modality": "auto", "grayscale": False},
    "output": {"dir": "runs/fit"},
    "network": {
        "depth": 5,
        "width": 256,
        "activation": "sine",
        "omega0": 30.0,
        "fourier_count": 0,
        "fourier_scale": 10.0,
    },
    "sampler": {
        "strategy": "nint",
        "batch_fraction": 0.2,
        "xi": 0.7,
        "alpha": 10,
        "lambda_decay": 1.0,
        "scheduler": "constant",
    },
    "train": {
        "learning_rate": 1e-4,
        "iterations": 2000,
        "optimizer": "adam",
        "beta1": 0.9,
        "beta2": 0.999,
        "eps": 1e-8,
        "eval_every": 100,
        "snapshot_every": 0,
        "thresholds": [25.0, 30.0, 35.0],
        "seed": 0,
    },
}


# ---------------------------------------------------------------------------
# Config loading
# ---------------------------------------------------------------------------


def _coerce(section: str, key: str, default, value):
    """Coerce a TOML value to the default's type, strictly."""
    where = f"{section}.{key}"
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ValueError(f"{where} must be a boolean")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError(f"{where} must be an integer")
        if float(value) != int(value):
            raise ValueError(f"{where} must be an integer")
        return int(value)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError(f"{where} must be a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ValueError(f"{where} must be a string")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ValueError(f"{where} must be a list")
        return [float(v) for v in value]
    raise AssertionError(f"unhandled default type for {where}")


def _merge_settings(base: dict, updates: dict) -> None:
    for section, body in updates.items():
        if section not in base:
            raise ValueError(f"unknown config section [{section}]")
        if not isinstance(body, dict):
            raise ValueError(f"[{section}] must be a table")
        for key, value in body.items():
            if key not in base[section]:
                raise ValueError(f"unknown config key {section}.{key}")
            base[section][key] = _coerce(section, key, DEFAULTS[section][key], value)


def _parse_override(raw: str) -> tuple[str, str, object]:
    body = raw[2:] if raw.startswith("--") else raw
    key_part, sep, value_part = body.partition("=")
    section, dot, key = key_part.partition(".")
    if not sep or not dot or not section or not key:
        raise ValueError(f"bad override {raw!r}; expected --section.key=value")
    try:
        value = tomllib.loads(f"v = {value_part}")["v"]
    except tomllib.TOMLDecodeError:
        value = value_part  # bare string
    return section, key, value


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved run settings; network dims come from the data."""

    input_path: str
    modality: str
    grayscale: bool
    out_dir: str
    network: dict
    sampler: SamplerConfig
    train: TrainConfig

    def network_config(self, dataset: SignalDataset) -> NetworkConfig:
        return NetworkConfig(
            depth=self.network["depth"],
            width=self.network["width"],
            in_dim=dataset.coord_dim,
            out_dim=dataset.attr_dim,
            activation=self.network["activation"],
            omega0=self.network["omega0"],
            fourier_count=self.network["fourier_count"],
            fourier_scale=self.network["fourier_scale"],
            init_seed=self.train.seed,
        )


def load_run_config(config_file: str | None, overrides: list[str]) -> RunConfig:
    settings = copy.deepcopy(DEFAULTS)
    if config_file is not None:
        try:
            with open(config_file, "rb") as f:
                file_settings = tomllib.load(f)
        except tomllib.TOMLDecodeError as e:
            raise ValueError(f"bad TOML in {config_file}: {e}") from e
        _merge_settings(settings, file_settings)
    for raw in overrides:
        section, key, value = _parse_override(raw)
        _merge_settings(settings, {section: {key: value}})
    return _build_run_config(settings)


def _build_run_config(settings: dict) -> RunConfig:
    seed = settings["train"]["seed"]
    sampler = SamplerConfig(seed=seed, **settings["sampler"])
    train_section = dict(settings["train"])
    train_section["thresholds"] = tuple(train_section["thresholds"])
    train_cfg = TrainConfig(**train_section)
    return RunConfig(
        input_path=settings["input"]["path"],
        modality=settings["input"]["modality"],
        grayscale=settings["input"]["grayscale"],
        out_dir=settings["output"]["dir"],
        network=dict(settings["network"]),
        sampler=sampler,
        train=train_cfg,
    )


def resolve_modality(path: str, modality: str) -> str:
    if modality != "auto":
        return modality
    suffix = Path(path).suffix.lower()
    if suffix in (".wav",):
        return "audio"
    if suffix in (".png", ".pgm", ".ppm", ".pnm"):
        return "image"
    try:
        with open(path, "rb") as f:
            magic = f.read(4)
    except OSError:
        magic = b""
    if magic[:4] == b"RIFF":
        return "audio"
    if magic[:2] in (b"P5", b"P6") or magic[:4] == b"\x89PNG"[:4]:
        return "image"
    raise ValueError(f"cannot infer modality of {path}; set input.modality")


def load_signal(config: RunConfig) -> SignalDataset:
    if not config.input_path:
        raise ValueError("input.path is not set")
    modality = resolve_modality(config.input_path, config.modality)
    if modality == "audio":
        return load_audio(config.input_path)
    return load_image(config.input_path, grayscale=config.grayscale)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _write_csv(path: Path, header: str, rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(CSV_VERSION + "\n")
        f.write(header + "\n")
        for row in rows:
            f.write(",".join(v if isinstance(v, str) else _fmt(v) for v in row) + "\n")


def write_metrics_csv(path: Path, log: TrainLog) -> None:
    rows = [
        [r.iteration, r.mse, r.psnr, r.ssim, r.si_snr, r.batch_size, r.r_ntk, r.r_err,
         r.n_score_recomputes]
        for r in log.records
    ]
    _write_csv(path, "iteration,mse,psnr,ssim,si_snr,batch_size,r_ntk,r_err,n_score_recomputes", rows)


def write_timings_csv(path: Path, log: TrainLog) -> None:
    _write_csv(path, "iteration,wall_ms", [[r.iteration, r.wall_ms] for r in log.records])


def write_thresholds_csv(path: Path, log: TrainLog) -> None:
    rows = [[c.metric, c.target, c.iteration, c.wall_ms] for c in log.crossings]
    _write_csv(path, "metric,target,iteration,wall_ms", rows)


def _toml_scalar(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_scalar(v) for v in value) + "]"
    raise AssertionError(f"unhandled TOML value {value!r}")


def write_effective_config(path: Path, config: RunConfig, modality: str) -> None:
    sections = {
        "input": {
            "path": config.input_path,
            "modality": modality,
            "grayscale": config.grayscale,
        },
        "output": {"dir": config.out_dir},
        "network": config.network,
        "sampler": {
            "strategy": config.sampler.strategy,
            "batch_fraction": config.sampler.batch_fraction,
            "xi": config.sampler.xi,
            "alpha": config.sampler.alpha,
            "lambda_decay": config.sampler.lambda_decay,
            "scheduler": config.sampler.scheduler,
        },
        "train": {
            "learning_rate": config.train.learning_rate,
            "iterations": config.train.iterations,
            "optimizer": config.train.optimizer,
            "beta1": config.train.beta1,
            "beta2": config.train.beta2,
            "eps": config.train.eps,
            "eval_every": config.train.eval_every,
            "snapshot_every": config.train.snapshot_every,
            "thresholds": list(config.train.thresholds),
            "seed": config.train.seed,
        },
    }
    lines = []
    for name, body in sections.items():
        lines.append(f"[{name}]")
        for key, value in body.items():
            lines.append(f"{key} = {_toml_scalar(value)}")
        lines.append("")
    path.write_text("\n".join(lines), encoding="utf-8")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _run_one(config: RunConfig, out_dir: Path) -> tuple[TrainLog, "np.ndarray"]:
    """Train per config, write all run artifacts, return (log, theta0)."""
    dataset = load_signal(config)
    net_config = config.network_config(dataset)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_effective_config(
        out_dir / "effective_config.toml",
        replace(config, out_dir=str(out_dir)),
        resolve_modality(config.input_path, config.modality),
    )
    theta0 = init(net_config).theta
    params, log = train(dataset, net_config, config.sampler, config.train, out_dir=out_dir)
    write_metrics_csv(out_dir / "metrics.csv", log)
    write_timings_csv(out_dir / "timings.csv", log)
    write_thresholds_csv(out_dir / "thresholds.csv", log)
    save_checkpoint(out_dir / "checkpoint.ckpt", params, net_config)
    return log, theta0


def _summary_line(label: str, log: TrainLog) -> str:
    final = log.records[-1]
    parts = [f"iteration {final.iteration}", f"psnr {_fmt(final.psnr)} dB"]
    if final.ssim is not None:
        parts.append(f"ssim {_fmt(final.ssim)}")
    if final.si_snr is not None:
        parts.append(f"si_snr {_fmt(final.si_snr)} dB")
    parts.append(f"wall {final.wall_ms / 1000.0:.1f} s")
    return f"{label}: " + ", ".join(parts)


def cmd_fit(args: argparse.Namespace, overrides: list[str]) -> int:
    config = load_run_config(args.config, overrides)
    if args.out is not None:
        config = replace(config, out_dir=args.out)
    if args.seed is not None:
        config = _reseed(config, args.seed)
    if args.strategy is not None:
        config = replace(config, sampler=replace(config.sampler, strategy=args.strategy))
    if args.threshold:
        config = replace(config, train=replace(config.train, thresholds=tuple(args.threshold)))
    log, _ = _run_one(config, Path(config.out_dir))
    print(_summary_line("fit", log))
    return 0


def _reseed(config: RunConfig, seed: int) -> RunConfig:
    return replace(
        config,
        sampler=replace(config.sampler, seed=seed),
        train=replace(config.train, seed=seed),
    )


def _num_threads() -> int:
    raw = os.environ.get("NINT_THREADS", "0")
    try:
        threads = int(raw)
    except ValueError:
        raise ValueError(f"NINT_THREADS must be an integer, got {raw!r}") from None
    return max(threads, 0)


def cmd_compare(args: argparse.Namespace, overrides: list[str]) -> int:
    config = load_run_config(args.config, overrides)
    if args.out is not None:
        config = replace(config, out_dir=args.out)
    if args.threshold:
        config = replace(config, train=replace(config.train, thresholds=tuple(args.threshold)))
    strategies = args.strategy or []
    if len(strategies) < 2:
        raise ValueError("need at least two strategies")
    for s in strategies:
        if s not in STRATEGIES:
            raise ValueError(f"unknown strategy {s!r}")
    seeds = args.seed or [config.train.seed]
    out_root = Path(config.out_dir)
    cells = [
        (strategy, seed, _reseed(
            replace(config, sampler=replace(config.sampler, strategy=strategy)), seed
        ))
        for seed in seeds
        for strategy in strategies
    ]

    def run_cell(cell):
        strategy, seed, cell_config = cell
        cell_dir = out_root / f"{strategy}_seed{seed}"
        log, theta0 = _run_one(replace(cell_config, out_dir=str(cell_dir)), cell_dir)
        return strategy, seed, log, hashlib.sha256(theta0.tobytes()).hexdigest()

    threads = _num_threads()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_cell, cells))
    else:
        results = [run_cell(cell) for cell in cells]

    # One theta0 per seed: every strategy must start from the same point.
    by_seed: dict[int, set[str]] = {}
    for strategy, seed, _, digest in results:
        by_seed.setdefault(seed, set()).add(digest)
    for seed, digests in by_seed.items():
        if len(digests) != 1:
            raise RuntimeError(f"initial parameters differ across strategies for seed {seed}")

    rows: list[list] = []
    crossings: dict[tuple[str, float], list[tuple[int, float]]] = {}
    metric_name = "si_snr" if results[0][2].records[-1].si_snr is not None else "psnr"
    for strategy, seed, log, _ in results:
        found = {(c.metric, c.target): c for c in log.crossings}
        for target in config.train.thresholds:
            cross = found.get((metric_name, target))
            if cross is None:
                rows.append([strategy, str(seed), metric_name, target, "", ""])
            else:
                rows.append(
                    [strategy, str(seed), metric_name, target, cross.iteration, cross.wall_ms]
                )
                crossings.setdefault((strategy, target), []).append(
                    (cross.iteration, cross.wall_ms)
                )
    for strategy in strategies:
        for target in config.train.thresholds:
            hits = crossings.get((strategy, target), [])
            if hits:
                med_iter = statistics.median(h[0] for h in hits)
                med_wall = statistics.median(h[1] for h in hits)
                rows.append([strategy, "median", metric_name, target, med_iter, med_wall])
            else:
                rows.append([strategy, "median", metric_name, target, "", ""])
    out_root.mkdir(parents=True, exist_ok=True)
    _write_csv(out_root / "comparison.csv", "strategy,seed,metric,target,iteration,wall_ms", rows)
    for strategy, seed, log, _ in results:
        print(_summary_line(f"{strategy} seed {seed}", log))
    print(f"comparison written to {out_root / 'comparison.csv'}")
    return 0


def _parse_region(region: str, dims: list[int]) -> np.ndarray:
    """Parse 'a:b' (1-D) or 'r0:r1,c0:c1' (2-D) into flat indices."""
    parts = region.split(",")
    if len(parts) != len(dims):
        raise ValueError(f"region must have {len(dims)} axis ranges, got {len(parts)}")
    spans = []
    for part, dim in zip(parts, dims):
        lo_s, sep, hi_s = part.partition(":")
        try:
            lo, hi = int(lo_s), int(hi_s)
        except ValueError:
            raise ValueError(f"bad region span {part!r}; expected start:stop") from None
        if not sep or not 0 <= lo < hi <= dim:
            raise ValueError(f"region span {part!r} out of bounds for axis size {dim}")
        spans.append(np.arange(lo, hi))
    if len(spans) == 1:
        return spans[0]
    return (spans[0][:, None] * dims[1] + spans[1][None, :]).ravel()


def cmd_dump_ntk(args: argparse.Namespace) -> int:
    params, net_config = load_checkpoint(args.checkpoint)
    modality = resolve_modality(args.input, "auto")
    if modality == "audio":
        dataset = load_audio(args.input)
        dims = [dataset.shape_meta["num_samples"]]
    else:
        dataset = load_image(args.input, grayscale=net_config.out_dim == 1)
        dims = [dataset.shape_meta["height"], dataset.shape_meta["width"]]
    if dataset.coord_dim != net_config.in_dim or dataset.attr_dim != net_config.out_dim:
        raise ValueError("input signal does not match the checkpoint's network shape")
    indices = _parse_region(args.region, dims)
    patch = ntk_patch(params, net_config, dataset.coords, indices)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    dump_kernel_csv(out_dir / "ntk_patch.csv", patch)
    dump_kernel_binary(out_dir / "ntk_patch.bin", patch)
    n = patch.out_dim
    leverage = np.array([np.trace(patch.block(k, k)) for k in range(patch.num_examples)])
    if len(dims) == 2:
        shape = [s.stop - s.start for s in _region_slices(args.region)]
        leverage = leverage.reshape(shape)
    else:
        leverage = leverage.reshape(1, -1)
    np.savetxt(out_dir / "self_leverage.csv", leverage, fmt="%.17g", delimiter=",", newline="\n")
    side = patch.num_examples * n
    print(f"wrote {side}x{side} kernel patch and self-leverage map to {out_dir}")
    return 0


def _region_slices(region: str) -> list[slice]:
    spans = []
    for part in region.split(","):
        lo, _, hi = part.partition(":")
        spans.append(slice(int(lo), int(hi)))
    return spans


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # config errors must exit 1, not argparse's 2
        raise ValueError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="nint", description="NTK-guided coordinate sampling for INR training")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit one signal with one strategy")
    fit.add_argument("--config", help="TOML config file")
    fit.add_argument("--out", help="output directory")
    fit.add_argument("--seed", type=int, help="run seed (init, sampling)")
    fit.add_argument("--strategy", choices=STRATEGIES, help="selection strategy")
    fit.add_argument(
        "--threshold", type=float, action="append",
        help="metric target in dB; repeatable, replaces config thresholds",
    )

    comp = sub.add_parser("compare", help="run several strategies head-to-head")
    comp.add_argument("--config", help="TOML config file")
    comp.add_argument("--out", help="output directory")
    comp.add_argument("--seed", type=int, action="append", help="run seed; repeatable")
    comp.add_argument(
        "--strategy", action="append", help="selection strategy; give at least two"
    )
    comp.add_argument("--threshold", type=float, action="append")

    dump = sub.add_parser("dump-ntk", help="dump an exact NTK patch from a checkpoint")
    dump.add_argument("checkpoint", help="checkpoint file from fit")
    dump.add_argument("input", help="signal the checkpoint was trained on")
    dump.add_argument("--region", required=True, help="'r0:r1,c0:c1' (image) or 'a:b' (audio)")
    dump.add_argument("--out", default=".", help="output directory")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args, extras = parser.parse_known_args(argv)
        overrides = []
        for extra in extras:
            if not extra.startswith("--") or "=" not in extra:
                raise ValueError(f"unrecognized argument {extra!r}")
            overrides.append(extra)
        if args.command == "fit":
            return cmd_fit(args, overrides)
        if args.command == "compare":
            return cmd_compare(args, overrides)
        if overrides:
            raise ValueError(f"unrecognized argument {overrides[0]!r}")
        return cmd_dump_ntk(args)
    except TrainingDiverged as e:
        print(f"error: training diverged: {e}", file=sys.stderr)
        return 3
    except CodecError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
