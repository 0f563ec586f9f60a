"""Command-line entry point: ``nlanc <command> ...`` or ``python -m nlanc``.

Exit codes: 0 on success, 2 for configuration or input problems, 3 when a
computation fails numerically.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .acoustics import Geometry, build_plant, simulate_rir, write_rir_csv
from .core import ConfigError, FormatError, NumericalError, Signal
from .data_io import NOISE_KINDS, synthetic_corpus, write_wav

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

log = logging.getLogger("nlanc")


def _eta2_list(text):
    from .harness import parse_eta2

    return tuple(parse_eta2(v) for v in text.split(",") if v.strip())


def cmd_rir(args) -> int:
    """Benchmark primary and secondary paths as CSV (and optionally WAV)."""
    geometry = Geometry(t60=args.t60, path_length=args.length)
    plant = build_plant(geometry=geometry)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"primary": plant.primary, "secondary": plant.secondary}
    if args.raw:
        paths = {"primary": simulate_rir(geometry.room(geometry.reference_mic, geometry.error_mic)),
                 "secondary": simulate_rir(geometry.room(geometry.control_source,
                                                         geometry.error_mic))}
    for name, h in paths.items():
        write_rir_csv(h, out / f"{name}.csv")
        if args.wav:
            write_wav(Signal(h, geometry.sample_rate), out / f"{name}.wav")
        print(f"{name}: {len(h)} taps -> {out / (name + '.csv')}")
    return EXIT_OK


def cmd_run(args) -> int:
    from .harness import emit_results, format_table, load_config, run_experiment

    config = load_config(args.config)
    if args.output_dir:
        config = dataclasses.replace(config, output_dir=args.output_dir)
    table = run_experiment(config)
    emit_results(table, config.output_dir, stem=args.stem)
    print(format_table(table.rows, table.metadata), end="")
    failed = [r for r in table.rows if r.status == "failed"]
    return EXIT_NUMERIC if failed and args.strict else EXIT_OK


def _single_config(args, algorithms):
    from .harness import ExperimentConfig

    return ExperimentConfig(algorithms=algorithms, noise_sources=(args.noise,),
                            eta2_grid=_eta2_list(args.eta2), seed=args.seed,
                            duration=args.duration, output_dir=args.output_dir or "results")


def cmd_wiener(args) -> int:
    """Design Wiener filters for one noise and report their metrics."""
    from .adaptive import wiener_design
    from .harness import AlgorithmSpec, build_scenario, format_table, noise_signal, run_cell

    specs = tuple(AlgorithmSpec(f"w{t}", "wiener", t) for t in args.taps)
    config = _single_config(args, specs)
    noise = noise_signal(args.noise, config)
    rows = []
    for eta2 in config.eta2_grid:
        for spec in specs:
            rows.append(run_cell(spec, args.noise, noise, eta2, config).metrics)
    print(format_table(rows), end="")
    if args.weights:
        scenario = build_scenario(noise, config.eta2_grid[0], config)
        w = wiener_design(scenario.x, scenario.plant, specs[0].taps, disturbance=scenario.d)
        write_rir_csv(w, args.weights)
        print(f"weights ({len(w)} taps) -> {args.weights}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .wavenet import ModelConfig, TrainConfig, dump_csv, save_checkpoint, train_model

    kinds = [k.strip() for k in args.noises.split(",") if k.strip()]
    for kind in kinds:
        if kind not in NOISE_KINDS:
            raise ConfigError(f"unknown noise kind {kind!r}; choose from {NOISE_KINDS}")
    eta2 = _eta2_list(args.eta2)
    if len(eta2) != 1:
        raise ConfigError("train takes a single eta2 value")
    dataset = synthetic_corpus(kinds, args.seconds, seed=args.seed)
    model = ModelConfig(channels=args.channels, skip_channels=args.channels, stacks=args.stacks,
                        layers_per_stack=args.layers)
    config = TrainConfig(model=model, epochs=args.epochs, learning_rate=args.lr,
                         lr_decay=args.lr_decay, crop=args.crop, seed=args.seed,
                         batch_size=args.batch_size, checkpoint_dir=args.checkpoint_dir,
                         time_budget=args.time_budget)

    def report(epoch, params, loss):
        print(f"epoch {epoch:3d}  loss {loss:8.3f} dB", flush=True)

    result = train_model(dataset, build_plant(eta2[0]), config, callback=report)
    save_checkpoint(result.params, args.output)
    if args.csv:
        dump_csv(result.params, args.csv)
    print(f"{len(result.epoch_losses)} epochs, final loss "
          f"{result.epoch_losses[-1]:.3f} dB -> {args.output}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .harness import AlgorithmSpec, emit_results, format_table, run_experiment

    if not Path(args.checkpoint).is_file():
        raise ConfigError(f"checkpoint {args.checkpoint} not found")
    spec = AlgorithmSpec("net", "wavenet_vnn", options=(("checkpoint", args.checkpoint),))
    config = dataclasses.replace(_single_config(args, (spec,)),
                                 noise_sources=tuple(s.strip() for s in args.noise.split(",")))
    table = run_experiment(config)
    if args.output_dir:
        emit_results(table, args.output_dir, stem="eval")
    print(format_table(table.rows, table.metadata), end="")
    return EXIT_OK


def cmd_spectrogram(args) -> int:
    """Run one cell of a configured grid and export ANC-off/on spectrograms."""
    from .harness import eta2_label, export_spectrograms, load_config, noise_signal, run_cell

    config = load_config(args.config)
    spec = config.algorithm(args.algorithm)
    eta2 = _eta2_list(args.eta2)
    if len(eta2) != 1:
        raise ConfigError("spectrogram takes a single eta2 value")
    noise = args.noise or config.noise_sources[0]
    res = run_cell(spec, noise, noise_signal(noise, config), eta2[0], config)
    if res.report is None:
        raise NumericalError(f"{spec.label} failed: {res.metrics.note}")
    stem = f"{spec.name}_{Path(noise).stem}_{eta2_label(eta2[0])}"
    off, on = export_spectrograms(res.report.error, res.report.disturbance,
                                  args.output_dir or config.output_dir, stem,
                                  frame=args.frame, hop=args.hop,
                                  sample_rate=config.geometry.sample_rate)
    print(f"NMSE {res.metrics.nmse_db:.2f} dB, dBA {res.metrics.dba_delta_db:.2f} dB")
    print(f"{off}\n{on}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nlanc", description="Nonlinear active noise control experiments.")
    parser.add_argument("--version", action="version", version=f"nlanc {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rir", help="export the benchmark room impulse responses")
    p.add_argument("--output-dir", default="rir")
    p.add_argument("--t60", type=float, default=0.2)
    p.add_argument("--length", type=int, default=512)
    p.add_argument("--raw", action="store_true", help="skip the path normalization")
    p.add_argument("--wav", action="store_true", help="also write float32 WAV files")
    p.set_defaults(func=cmd_rir)

    p = sub.add_parser("run", help="run an experiment grid from an INI config")
    p.add_argument("config")
    p.add_argument("--output-dir")
    p.add_argument("--stem", default="results")
    p.add_argument("--strict", action="store_true", help="exit 3 if any cell failed")
    p.set_defaults(func=cmd_run)

    def cell_args(p, eta2="inf"):
        p.add_argument("--noise", default="pink", help="noise kind or WAV path")
        p.add_argument("--eta2", default=eta2, help="comma-separated eta2 values (inf = linear)")
        p.add_argument("--duration", type=float, default=10.0)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--output-dir")

    p = sub.add_parser("wiener", help="one-shot Wiener design and metrics")
    cell_args(p)
    p.add_argument("--taps", type=int, nargs="+", default=[512])
    p.add_argument("--weights", help="write the first filter's taps to this CSV")
    p.set_defaults(func=cmd_wiener)

    p = sub.add_parser("train", help="train a WaveNet-VNN controller on synthetic noise")
    p.add_argument("--output", required=True, help="checkpoint path")
    p.add_argument("--noises", default="pink,engine_harmonics")
    p.add_argument("--seconds", type=float, default=60.0, help="seconds of each noise kind")
    p.add_argument("--eta2", default="0.5")
    p.add_argument("--channels", type=int, default=8)
    p.add_argument("--stacks", type=int, default=1)
    p.add_argument("--layers", type=int, default=10)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=3e-3)
    p.add_argument("--lr-decay", type=float, default=0.97)
    p.add_argument("--crop", type=int, default=8000)
    p.add_argument("--batch-size", type=int, default=1)
    p.add_argument("--time-budget", type=float, help="stop after this many seconds")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--checkpoint-dir", help="save a checkpoint after every epoch")
    p.add_argument("--csv", help="also dump the parameters as CSV")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint over noises and eta2 values")
    p.add_argument("checkpoint")
    cell_args(p, eta2="inf,0.5,0.1")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("spectrogram", help="export ANC off/on spectrograms for one cell")
    p.add_argument("config")
    p.add_argument("--algorithm", required=True, help="section name after 'algorithm:'")
    p.add_argument("--noise")
    p.add_argument("--eta2", default="inf")
    p.add_argument("--frame", type=int, default=512)
    p.add_argument("--hop", type=int, default=256)
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_spectrogram)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
