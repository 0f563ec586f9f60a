"""Experiment grid: plant construction, convergence, step search and reports.

A configuration is an INI file::

    [experiment]
    seed = 0
    output_dir = results
    eta2_grid = inf, 0.5, 0.1
    noise_sources = pink, engine_harmonics     ; synthetic kinds or WAV paths
    duration = 10                              ; seconds of synthetic noise
    reference_mode = source                    ; or ref_mic
    convergence_tol = 0.1
    max_passes = 20

    [room]                                     ; every key optional
    dimensions = 3, 4, 2
    t60 = 0.2

    [step_search]
    enabled = true
    bracket = 1e-5, 2
    iterations = 20
    search_passes = 3

    [algorithm:td512]
    type = td_fxlms                            ; see ALGORITHMS
    taps = 512
    mu = 1e-4                                  ; fixes the step, skipping the search

Unknown keys are rejected so typos surface as configuration errors.
"""
from __future__ import annotations

import configparser
import csv
import dataclasses
import datetime
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .acoustics import LINEAR, Geometry, PlantModel, build_plant, simulate_rir
from .adaptive import (
    RunReport,
    fd_felms_whitened_run,
    fd_fxnlms_run,
    stability_bound,
    td_fxlms_run,
    thf_fxlms_run,
    wiener_run,
)
from .core import AncError, ConfigError, NumericalError, as_1d
from .data_io import NOISE_KINDS, peak_normalize, read_wav, resample, synth_noise
from .dsp import MetricsReport, convolve, evaluate, stft_spectrogram

log = logging.getLogger(__name__)

ALGORITHMS = ("td_fxlms", "thf_fxlms", "fd_fxnlms", "fd_felms", "wiener", "wavenet_vnn")
ADAPTIVE = ("td_fxlms", "thf_fxlms", "fd_fxnlms", "fd_felms")
_LABELS = {
    "td_fxlms": "TD-FxLMS",
    "thf_fxlms": "THF-FxLMS",
    "fd_fxnlms": "FD-FxNLMS",
    "fd_felms": "FD-FeLMS-W",
    "wiener": "Wiener",
    "wavenet_vnn": "WaveNet-VNN",
}
_OPTION_TYPES = {
    "forgetting": float,
    "regularization": float,
    "update_frames": int,
    "lam": float,
    "checkpoint": str,
}
DIVERGED_PENALTY = 1e3
DRIFT_PASSES = 3
MAX_BACKOFF = 4
"""Times the step is halved when the full convergence run turns out unstable."""


def eta2_label(eta2: float) -> str:
    return "inf" if math.isinf(eta2) else f"{eta2:g}"


def parse_eta2(text: str) -> float:
    text = text.strip().lower()
    if text in ("inf", "linear", "∞"):
        return LINEAR
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(f"bad eta2 value {text!r}") from None
    if not value > 0:
        raise ConfigError(f"eta2 must be positive, got {text}")
    return value


@dataclass(frozen=True)
class AlgorithmSpec:
    name: str
    kind: str
    taps: int = 512
    mu: float | None = None
    options: tuple[tuple[str, object], ...] = ()

    def __post_init__(self):
        if self.kind not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm type {self.kind!r}; choose from {ALGORITHMS}")
        if self.taps < 1:
            raise ConfigError(f"{self.name}: taps must be >= 1")
        if self.mu is not None and not self.mu > 0:
            raise ConfigError(f"{self.name}: mu must be positive")
        if self.kind == "wavenet_vnn" and "checkpoint" not in dict(self.options):
            raise ConfigError(f"{self.name}: wavenet_vnn needs a checkpoint path")

    @property
    def label(self) -> str:
        if self.kind == "wavenet_vnn":
            return _LABELS[self.kind]
        return f"{_LABELS[self.kind]}({self.taps})"

    def option(self, key, default=None):
        return dict(self.options).get(key, default)


@dataclass(frozen=True)
class StepSearch:
    enabled: bool = True
    bracket: tuple[float, float] = (1e-5, 2.0)
    """Multipliers of the algorithm's nominal step (see :func:`nominal_step`)."""
    iterations: int = 20
    search_passes: int = 3


@dataclass(frozen=True)
class ExperimentConfig:
    algorithms: tuple[AlgorithmSpec, ...]
    noise_sources: tuple[str, ...] = ("pink",)
    eta2_grid: tuple[float, ...] = (LINEAR, 0.5, 0.1)
    geometry: Geometry = field(default_factory=Geometry)
    seed: int = 0
    duration: float = 10.0
    output_dir: str = "results"
    reference_mode: str = "source"
    noise_source_position: tuple[float, float, float] = (1.5, 0.5, 1.0)
    """Only used with ``reference_mode = ref_mic``."""
    convergence_tol: float = 0.1
    max_passes: int = 20
    steady_fraction: float = 0.2
    step_search: StepSearch = field(default_factory=StepSearch)

    def __post_init__(self):
        if not self.algorithms:
            raise ConfigError("no algorithms configured")
        if not self.noise_sources:
            raise ConfigError("no noise sources configured")
        if not self.eta2_grid:
            raise ConfigError("eta2 grid is empty")
        names = [a.name for a in self.algorithms]
        if len(set(names)) != len(names):
            raise ConfigError("algorithm names must be unique")
        if self.reference_mode not in ("source", "ref_mic"):
            raise ConfigError(f"reference_mode must be source or ref_mic, not {self.reference_mode!r}")
        if self.duration <= 0 or self.max_passes < 1:
            raise ConfigError("duration and max_passes must be positive")
        if not 0 < self.steady_fraction <= 1:
            raise ConfigError("steady_fraction must lie in (0, 1]")
        for src in self.noise_sources:
            if src not in NOISE_KINDS and not Path(src).is_file():
                raise ConfigError(f"noise source {src!r} is neither a known kind nor a file")

    def to_dict(self) -> dict:
        data = dataclasses.asdict(self)
        data["eta2_grid"] = [eta2_label(e) for e in self.eta2_grid]
        return data

    @property
    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def algorithm(self, name: str) -> AlgorithmSpec:
        for spec in self.algorithms:
            if spec.name == name:
                return spec
        raise ConfigError(f"no algorithm named {name!r}")


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _take(section, key, conv, default):
    if key not in section:
        return default
    raw = section[key]
    try:
        return conv(raw)
    except (ValueError, configparser.Error):
        raise ConfigError(f"[{section.name}] {key} = {raw!r} is invalid") from None


def _check_keys(section, allowed):
    extra = set(section.keys()) - set(allowed)
    if extra:
        raise ConfigError(f"[{section.name}] unknown keys: {', '.join(sorted(extra))}")


def _bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


def parse_config(text: str, base_dir: Path | None = None) -> ExperimentConfig:
    """Build an :class:`ExperimentConfig` from INI text (see module docstring)."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"),
                                       default_section="__defaults__")
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    known = {"experiment", "room", "step_search"}
    for name in parser.sections():
        if name not in known and not name.startswith("algorithm:"):
            raise ConfigError(f"unknown section [{name}]")
    if "experiment" not in parser:
        raise ConfigError("missing [experiment] section")
    exp = parser["experiment"]
    _check_keys(exp, ("seed", "output_dir", "eta2_grid", "noise_sources", "duration",
                      "reference_mode", "convergence_tol", "max_passes", "steady_fraction",
                      "noise_source_position"))

    def resolve(src):
        src = src.strip()
        if src in NOISE_KINDS or base_dir is None or Path(src).is_absolute():
            return src
        return str(base_dir / src)

    geom_kw = {}
    if "room" in parser:
        room = parser["room"]
        _check_keys(room, ("dimensions", "reference_mic", "error_mic", "control_source",
                           "t60", "sample_rate", "path_length"))
        for key in ("dimensions", "reference_mic", "error_mic", "control_source"):
            if key in room:
                vec = _floats(room[key])
                if len(vec) != 3:
                    raise ConfigError(f"[room] {key} needs three values")
                geom_kw[key] = vec
        for key, conv in (("t60", float), ("sample_rate", float), ("path_length", int)):
            if key in room:
                geom_kw[key] = _take(room, key, conv, None)

    search = StepSearch()
    if "step_search" in parser:
        sec = parser["step_search"]
        _check_keys(sec, ("enabled", "bracket", "iterations", "search_passes"))
        bracket = _take(sec, "bracket", _floats, search.bracket)
        if len(bracket) != 2 or not 0 < bracket[0] < bracket[1]:
            raise ConfigError("[step_search] bracket needs two increasing positive values")
        search = StepSearch(_take(sec, "enabled", _bool, True), bracket,
                            _take(sec, "iterations", int, 20),
                            _take(sec, "search_passes", int, 3))

    algorithms = []
    for name in parser.sections():
        if not name.startswith("algorithm:"):
            continue
        sec = parser[name]
        _check_keys(sec, ("type", "taps", "mu", *_OPTION_TYPES))
        if "type" not in sec:
            raise ConfigError(f"[{name}] needs a type")
        options = []
        for key, conv in _OPTION_TYPES.items():
            if key in sec:
                value = _take(sec, key, conv, None)
                if key == "checkpoint":
                    value = resolve(value)
                options.append((key, value))
        algorithms.append(AlgorithmSpec(
            name=name.split(":", 1)[1].strip(),
            kind=sec["type"].strip(),
            taps=_take(sec, "taps", int, 512),
            mu=_take(sec, "mu", float, None),
            options=tuple(options),
        ))

    noise = tuple(resolve(s) for s in exp.get("noise_sources", "pink").split(",") if s.strip())
    grid = tuple(parse_eta2(v) for v in exp.get("eta2_grid", "inf, 0.5, 0.1").split(",")
                 if v.strip())
    pos = _take(exp, "noise_source_position", _floats, (1.5, 0.5, 1.0))
    return ExperimentConfig(
        algorithms=tuple(algorithms),
        noise_sources=noise,
        eta2_grid=grid,
        geometry=Geometry(**geom_kw),
        seed=_take(exp, "seed", int, 0),
        duration=_take(exp, "duration", float, 10.0),
        output_dir=exp.get("output_dir", "results"),
        reference_mode=exp.get("reference_mode", "source").strip(),
        noise_source_position=pos,
        convergence_tol=_take(exp, "convergence_tol", float, 0.1),
        max_passes=_take(exp, "max_passes", int, 20),
        steady_fraction=_take(exp, "steady_fraction", float, 0.2),
        step_search=search,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, base_dir=path.parent)


# -- signals and plants ------------------------------------------------------

def noise_signal(source: str, config: ExperimentConfig) -> np.ndarray:
    """Test noise for one grid column, peak-normalized over the whole record."""
    if source in NOISE_KINDS:
        seed = config.seed * 1000 + NOISE_KINDS.index(source)
        return np.asarray(synth_noise(source, config.duration, seed,
                                      config.geometry.sample_rate))
    sig = resample(read_wav(source), config.geometry.sample_rate)
    return peak_normalize(np.asarray(sig))


@dataclass(frozen=True)
class Scenario:
    """Reference, disturbance and plant for one (noise, eta2) cell."""

    x: np.ndarray
    d: np.ndarray
    plant: PlantModel


def build_scenario(noise: np.ndarray, eta2: float, config: ExperimentConfig) -> Scenario:
    """Route the noise to the reference and error microphones.

    In ``source`` mode the noise waveform itself is the reference and the
    primary path runs from the reference-microphone position to the error
    microphone. In ``ref_mic`` mode the noise starts at
    ``noise_source_position``; the reference is what the reference
    microphone picks up and the disturbance is what reaches the error
    microphone. Paths share the primary-path normalization.
    """
    geometry = config.geometry
    plant = build_plant(eta2, geometry)
    if config.reference_mode == "source":
        return Scenario(noise, plant.disturbance(noise), plant)
    scale = plant.meta["path_scale"]
    src = config.noise_source_position
    to_ref = simulate_rir(geometry.room(src, geometry.reference_mic)) * scale
    to_err = simulate_rir(geometry.room(src, geometry.error_mic)) * scale
    return Scenario(convolve(noise, to_ref), convolve(noise, to_err), plant)


# -- convergence and step search ---------------------------------------------

def _adaptive_call(spec: AlgorithmSpec, scenario: Scenario, mu: float, w0=None) -> RunReport:
    kw = {"w0": w0, "disturbance": scenario.d}
    x, plant, taps = scenario.x, scenario.plant, spec.taps
    if spec.kind == "td_fxlms":
        return td_fxlms_run(x, plant, taps, mu, **kw)
    if spec.kind == "thf_fxlms":
        return thf_fxlms_run(x, plant, taps, mu, spec.option("lam"), **kw)
    block = {k: spec.option(k) for k in ("forgetting", "regularization")
             if spec.option(k) is not None}
    if spec.kind == "fd_fxnlms":
        return fd_fxnlms_run(x, plant, taps, mu, **block, **kw)
    if spec.kind == "fd_felms":
        return fd_felms_whitened_run(x, plant, taps, mu,
                                     update_frames=spec.option("update_frames", 4), **block, **kw)
    raise ConfigError(f"{spec.kind} is not an adaptive algorithm")


def nominal_step(spec: AlgorithmSpec, scenario: Scenario) -> float:
    """Scale against which the step-search bracket is expressed.

    TD and THF use the classic LMS bound ``2 / (L * power of r)``; the
    normalized FD-FxNLMS uses 1; the filtered-error variant divides by the
    number of accumulated frames and the peak secondary-path power gain.
    """
    if spec.kind in ("td_fxlms", "thf_fxlms"):
        return stability_bound(scenario.x, scenario.plant, spec.taps)
    if spec.kind == "fd_fxnlms":
        return 1.0
    gain = np.max(np.abs(np.fft.rfft(scenario.plant.secondary, 2 * spec.taps)) ** 2)
    return 1.0 / (spec.option("update_frames", 4) * gain)


@dataclass
class Converged:
    report: RunReport
    mu: float
    passes: int
    drifted: bool = False
    """The steady state kept getting worse from pass to pass."""

    @property
    def unstable(self) -> bool:
        return self.report.diverged or self.drifted


def converge(spec: AlgorithmSpec, scenario: Scenario, mu: float, *, max_passes: int = 20,
             tol: float = 0.1, fraction: float = 0.2) -> Converged:
    """Replay the record, carrying the weights over, until the steady state settles.

    Stops when the trailing-``fraction`` NMSE moves by less than ``tol`` dB
    between passes, on divergence, after ``max_passes``, or when the NMSE
    has worsened by more than ``tol`` on ``DRIFT_PASSES`` passes in a row
    (a slow instability that never trips the per-run divergence flag).
    """
    report = _adaptive_call(spec, scenario, mu)
    passes, level, rising = 1, report.steady_state_nmse(fraction), 0
    while passes < max_passes and not report.diverged:
        nxt = _adaptive_call(spec, scenario, mu, w0=report.final_weights)
        passes += 1
        new_level = nxt.steady_state_nmse(fraction)
        rising = rising + 1 if new_level > level + tol else 0
        report = nxt
        if abs(new_level - level) < tol:
            break
        level = new_level
        if rising >= DRIFT_PASSES:
            return Converged(report, mu, passes, drifted=True)
    return Converged(report, mu, passes)


def _objective(result: Converged, fraction: float) -> float:
    if result.unstable:
        # keeps the search unimodal: among diverged steps, smaller is better
        return DIVERGED_PENALTY + math.log10(result.mu)
    return result.report.steady_state_nmse(fraction)


def search_step(spec: AlgorithmSpec, scenario: Scenario, search: StepSearch,
                *, tol: float = 0.1, fraction: float = 0.2) -> float:
    """Golden-section search over log step size; returns the best non-diverging step.

    Raises :class:`NumericalError` when every probed step diverges.
    """
    nominal = nominal_step(spec, scenario)
    a, b = (math.log(v * nominal) for v in search.bracket)
    ratio = (math.sqrt(5) - 1) / 2
    cache = {}

    def f(log_mu):
        if log_mu not in cache:
            res = converge(spec, scenario, math.exp(log_mu), max_passes=search.search_passes,
                           tol=tol, fraction=fraction)
            cache[log_mu] = res
        return _objective(cache[log_mu], fraction)

    c, d = b - ratio * (b - a), a + ratio * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max(0, search.iterations - 2)):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - ratio * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + ratio * (b - a)
            fd = f(d)
    ok = [(k, _objective(v, fraction)) for k, v in cache.items() if not v.unstable]
    if not ok:
        raise NumericalError(f"{spec.label}: every probed step size diverged")
    best = min(ok, key=lambda kv: (kv[1], kv[0]))[0]
    return math.exp(best)


# -- grid --------------------------------------------------------------------

@dataclass
class CellResult:
    metrics: MetricsReport
    report: RunReport | None = None
    mu: float | None = None
    passes: int | None = None


def _load_model(path):
    from .wavenet import load_checkpoint

    return load_checkpoint(path)


def run_cell(spec: AlgorithmSpec, noise_label: str, noise: np.ndarray, eta2: float,
             config: ExperimentConfig) -> CellResult:
    """One (algorithm, noise, eta2) cell; numerical failures become a failed row."""
    label = eta2_label(eta2)
    fs = config.geometry.sample_rate
    try:
        scenario = build_scenario(noise, eta2, config)
        mu = passes = None
        unstable = False
        if spec.kind == "wiener":
            report = wiener_run(scenario.x, scenario.plant, spec.taps, disturbance=scenario.d)
        elif spec.kind == "wavenet_vnn":
            from .wavenet import evaluate_controller

            params = _load_model(spec.option("checkpoint"))
            e, d = evaluate_controller(scenario.x, scenario.plant, params, scenario.d)
            report = RunReport(e, d, np.zeros_like(e), np.zeros(0), False, 0, spec.label)
        else:
            mu = spec.mu
            if mu is None:
                if not config.step_search.enabled:
                    raise ConfigError(f"{spec.name}: no mu given and step search disabled")
                mu = search_step(spec, scenario, config.step_search,
                                 tol=config.convergence_tol, fraction=config.steady_fraction)
            res = converge(spec, scenario, mu, max_passes=config.max_passes,
                           tol=config.convergence_tol, fraction=config.steady_fraction)
            # the search only sees a few passes; back off if the long run is unstable
            for _ in range(MAX_BACKOFF if spec.mu is None else 0):
                if not res.unstable:
                    break
                mu *= 0.5
                res = converge(spec, scenario, mu, max_passes=config.max_passes,
                               tol=config.convergence_tol, fraction=config.steady_fraction)
            report, passes, unstable = res.report, res.passes, res.unstable
        metrics = evaluate(report.error, report.disturbance, algorithm=spec.label,
                           noise=_noise_name(noise_label), eta2=label, sample_rate=fs)
        if report.diverged or unstable:
            metrics = dataclasses.replace(metrics, status="diverged")
        note = f"mu={mu:.6g} passes={passes}" if mu is not None else ""
        metrics = dataclasses.replace(metrics, note=note)
        return CellResult(metrics, report, mu, passes)
    except ConfigError:
        raise
    except (AncError, FloatingPointError, np.linalg.LinAlgError) as exc:
        log.warning("%s / %s / %s failed: %s", spec.label, noise_label, label, exc)
        metrics = MetricsReport(spec.label, _noise_name(noise_label), label, math.nan, math.nan,
                                "failed", str(exc))
        return CellResult(metrics)


def _noise_name(source: str) -> str:
    return source if source in NOISE_KINDS else Path(source).stem


def _eta2_sort_key(label: str) -> float:
    return -math.inf if label == "inf" else -float(label)


def sort_rows(rows):
    return sorted(rows, key=lambda r: (r.algorithm, r.noise, _eta2_sort_key(r.eta2)))


@dataclass
class ResultsTable:
    rows: list[MetricsReport]
    metadata: dict = field(default_factory=dict)


def run_experiment(config: ExperimentConfig) -> ResultsTable:
    """Every algorithm on every (noise, eta2) cell; deterministic given the seed."""
    started = datetime.datetime.now(datetime.timezone.utc)
    rows = []
    for source in config.noise_sources:
        noise = noise_signal(source, config)
        for eta2 in config.eta2_grid:
            for spec in config.algorithms:
                log.info("running %s on %s at eta2=%s", spec.label, source, eta2_label(eta2))
                rows.append(run_cell(spec, source, noise, eta2, config).metrics)
    meta = {
        "config_hash": config.hash,
        "code_version": __version__,
        "reference_mode": config.reference_mode,
        "started": started.isoformat(timespec="seconds"),
        "finished": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
    }
    return ResultsTable(sort_rows(rows), meta)


# -- output ------------------------------------------------------------------

CSV_HEADER = ("algorithm", "noise", "eta2", "nmse_db", "dba_db", "status")


def _fmt(value: float) -> str:
    return "nan" if math.isnan(value) else f"{value:.2f}"


def emit_results(table: ResultsTable, output_dir, stem: str = "results",
                 formats=("csv", "text")) -> list[Path]:
    """Write ``<stem>.csv`` and/or the aligned ``<stem>.txt``; returns the paths.

    The CSV holds only the sorted rows so reruns compare byte for byte;
    run metadata goes to the header of the text file.
    """
    if not table.rows:
        raise ConfigError("results table is empty")
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = sort_rows(table.rows)
    written = []
    if "csv" in formats:
        path = out / f"{stem}.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for r in rows:
                writer.writerow((r.algorithm, r.noise, r.eta2, _fmt(r.nmse_db),
                                 _fmt(r.dba_delta_db), r.status))
        written.append(path)
    if "text" in formats:
        path = out / f"{stem}.txt"
        path.write_text(format_table(rows, table.metadata))
        written.append(path)
    return written


def format_table(rows, metadata=None) -> str:
    """Algorithms down, (noise, eta2) across, each cell a ``dBA / NMSE`` pair."""
    rows = sort_rows(rows)
    cols = sorted({(r.noise, r.eta2) for r in rows}, key=lambda c: (c[0], _eta2_sort_key(c[1])))
    algs = sorted({r.algorithm for r in rows})
    cell = {(r.algorithm, r.noise, r.eta2): r for r in rows}
    head = ["algorithm"] + [f"{n} eta2={e}" for n, e in cols]
    body = []
    for alg in algs:
        line = [alg]
        for n, e in cols:
            r = cell.get((alg, n, e))
            if r is None:
                line.append("")
            elif r.status == "failed":
                line.append("failed")
            else:
                mark = " *" if r.status != "ok" else ""
                line.append(f"{_fmt(r.dba_delta_db)} / {_fmt(r.nmse_db)}{mark}")
        body.append(line)
    widths = [max(len(row[i]) for row in [head] + body) for i in range(len(head))]
    lines = []
    for key, value in (metadata or {}).items():
        lines.append(f"# {key}: {value}")
    lines.append("# cells: dBA / NMSE (dB); * marks a diverged run")
    for row in [head] + body:
        lines.append("  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip())
    notes = [r for r in rows if r.note]
    for r in notes:
        lines.append(f"# {r.algorithm} {r.noise} eta2={r.eta2}: {r.note}")
    return "\n".join(lines) + "\n"


def read_results_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def export_spectrograms(e, d, output_dir, stem: str, *, frame: int = 512, hop: int = 256,
                        sample_rate: float = 16000) -> tuple[Path, Path]:
    """Before/after spectrogram CSVs: ANC off (disturbance) and ANC on (error)."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    off = out / f"{stem}_anc_off.csv"
    on = out / f"{stem}_anc_on.csv"
    stft_spectrogram(as_1d(d, "d"), frame, hop, sample_rate).to_csv(off)
    stft_spectrogram(as_1d(e, "e"), frame, hop, sample_rate).to_csv(on)
    return off, on
