"""Experiment orchestration: config documents, ensemble sweeps, report files.

Configuration grammar: an INI-style document whose first line is the format
header `# reflectx-format v1`, with sections [run], [coefficients], [initial],
[experiment].  Field-valued entries (initial data, forcing, noise amplitudes)
use a small field language:

    zero
    modes: kx ky amp phase; kx ky amp phase; ...
    random: decay=<d> rms=<r> seed=<s>
    file: <path relative to the config file>

Common random numbers: member k of the ensemble always draws its Brownian
path from a seed derived from (base seed, k) only, never from the penalty
level, so every level sees the identical driving noise.  Under the scaled dt
policy the levels run on nested grids; each member's increments are block
sums of one master sequence on the least-common-multiple grid, which is the
discrete meaning of sharing one Brownian path across resolutions.
"""

from __future__ import annotations

import concurrent.futures
import configparser
import dataclasses
import hashlib
import io
import math
import os
import time
from typing import Callable, Optional, Sequence

import numpy as np
import scipy

from . import __version__
from .diagnostics import (
    DiagnosticsReport,
    Estimate,
    cauchy_gap,
    moment_estimates,
    probe_basis,
)
from .fields import FORMAT_HEADER, SpectralField, load_field, mode_field, \
    norm_h, random_field, save_field, zero_field
from .integrator import (
    PenaltyRunConfig,
    ReflectionPath,
    brownian_increments,
    simulate_ensemble,
)
from .operators import CoefficientSet

__all__ = [
    "ConfigError",
    "ExperimentError",
    "ExperimentSpec",
    "ExperimentResult",
    "parse_config",
    "print_config",
    "member_seed",
    "run_experiment",
    "emit_report",
    "run_and_emit",
    "write_path_csv",
    "SEED_ENV_VAR",
]

SEED_ENV_VAR = "REFLECTX_SEED"

PATH_CSV_COLUMNS = "t,|u|_H,‖u‖,penetration,|ΔL|_H,var_L,v_norm_integral"

# members per engine batch; fixed so results never depend on worker count
MEMBER_CHUNK = 16

_MASTER_GRID_LIMIT = 10_000_000


class ConfigError(ValueError):
    """Malformed or invalid configuration document."""


class ExperimentError(RuntimeError):
    """Experiment-level failure (too many failed paths, bad level grid)."""


@dataclasses.dataclass(frozen=True)
class ExperimentSpec:
    """A full sweep: base run, penalty levels, ensemble size, output policy."""

    base: PenaltyRunConfig
    penalty_levels: tuple
    ensemble_size: int
    dt_policy: str = "fixed"
    outputs: str = "reflectx-out"
    emit_fields: bool = False
    field_sources: tuple = ()  # ((key, canonical field spec string), ...)

    def __post_init__(self):
        levels = tuple(float(n) for n in self.penalty_levels)
        if not levels:
            raise ConfigError("penalty_levels must be nonempty")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ConfigError("penalty_levels must be strictly increasing")
        if any(not (n > 0 and np.isfinite(n)) for n in levels):
            raise ConfigError("penalty levels must be positive and finite")
        object.__setattr__(self, "penalty_levels", levels)
        if int(self.ensemble_size) < 1:
            raise ConfigError(
                f"ensemble_size must be >= 1, got {self.ensemble_size}"
            )
        object.__setattr__(self, "ensemble_size", int(self.ensemble_size))
        if self.dt_policy not in ("fixed", "scaled"):
            raise ConfigError(
                f"dt_policy must be 'fixed' or 'scaled', got {self.dt_policy!r}"
            )

    def level_config(self, n: float) -> PenaltyRunConfig:
        """Per-level run config: dt and snapshot stride from the dt policy.

        The scaled policy keeps n*dt constant (dt = dt0 * n0/n with n0 the
        first level), refining the grid as the penalty stiffens; snapshot
        strides are rescaled so every level shares one snapshot time grid.
        """
        base = self.base
        if self.dt_policy == "fixed" or n == self.penalty_levels[0]:
            dt = base.dt
        else:
            dt = base.dt * (self.penalty_levels[0] / n)
        stride_exact = base.snapshot_stride * (base.dt / dt)
        stride = max(1, round(stride_exact))
        if abs(stride - stride_exact) > 1e-9:
            raise ExperimentError(
                f"snapshot grids do not align across levels: level n = {n:g} "
                f"needs stride {stride_exact}, not an integer"
            )
        return dataclasses.replace(
            base, n_penalty=float(n), dt=dt, snapshot_stride=stride
        )


@dataclasses.dataclass(frozen=True)
class ExperimentResult:
    """Per-level reports, the cross-level gap table, failures, seeds."""

    spec: ExperimentSpec
    reports: tuple  # (n, DiagnosticsReport) in level order
    cauchy_table: tuple  # (n, m, Estimate) for consecutive level pairs
    failures: tuple  # (n, member, PathFailure)
    member_seeds: tuple

    def report_for(self, n: float) -> DiagnosticsReport:
        for level, rep in self.reports:
            if level == n:
                return rep
        raise KeyError(f"no report for penalty level {n}")


def member_seed(base_seed: int, k: int) -> int:
    """Seed for ensemble member k; injective in k, independent of the level."""
    ss = np.random.SeedSequence((int(base_seed), int(k)))
    return int(ss.generate_state(1, np.uint64)[0])


# -- configuration documents --------------------------------------------------

_RUN_KEYS = {
    "cutoff": True, "dt": True, "horizon": True, "n_penalty": True,
    "seed": False, "snapshot_stride": False, "lambda_weight": False,
}
_COEFF_KEYS = {"nu": True, "gamma": True, "f_lin": False, "sigma_lin": False,
               "noise_dim": False, "f_const": False, "sigma_const": False}
_INITIAL_KEYS = {"u0": False}
_EXPERIMENT_KEYS = {"penalty_levels": False, "ensemble_size": False,
                    "dt_policy": False, "outputs": False, "emit_fields": False}


def _line_of(text: str, section: str, key: str) -> int:
    """Best-effort line number of `key = ...` inside `section`."""
    current = None
    for i, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if stripped.startswith("[") and stripped.endswith("]"):
            current = stripped[1:-1].strip().lower()
        elif current == section and stripped.split("=", 1)[0].strip() == key:
            return i
    return 0


def _parse_field_spec(spec_str: str, cutoff: int, base_dir: str) -> SpectralField:
    s = spec_str.strip()
    if s == "zero":
        return zero_field(cutoff)
    kind, sep, rest = s.partition(":")
    kind = kind.strip().lower()
    if not sep:
        raise ConfigError(
            f"field value {spec_str!r} must be 'zero', 'modes: ...', "
            f"'random: ...', or 'file: ...'"
        )
    if kind == "modes":
        entries = []
        for chunk in rest.split(";"):
            parts = chunk.split()
            if not parts:
                continue
            if len(parts) not in (3, 4):
                raise ConfigError(
                    f"mode entry {chunk.strip()!r} needs 'kx ky amp [phase]'"
                )
            entries.append(tuple(float(p) for p in parts))
        if not entries:
            raise ConfigError("modes field needs at least one entry")
        return mode_field(cutoff, entries)
    if kind == "random":
        opts = {"decay": 2.0, "rms": 1.0, "seed": 0}
        for token in rest.split():
            k, sep2, v = token.partition("=")
            if not sep2 or k not in opts:
                raise ConfigError(
                    f"random field option {token!r} not one of decay=/rms=/seed="
                )
            opts[k] = float(v)
        rng = np.random.default_rng(int(opts["seed"]))
        return random_field(cutoff, rng, decay=opts["decay"], rms=opts["rms"])
    if kind == "file":
        path = rest.strip()
        if not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        field = load_field(path)
        if field.cutoff != cutoff:
            raise ConfigError(
                f"field file {rest.strip()!r} has cutoff {field.cutoff}, "
                f"run uses {cutoff}"
            )
        return field
    raise ConfigError(f"unknown field kind {kind!r} in {spec_str!r}")


def _canonical_field_spec(spec_str: str) -> str:
    s = " ".join(spec_str.split())
    if s == "zero":
        return s
    kind, _, rest = s.partition(":")
    return f"{kind.strip().lower()}: {rest.strip()}"


def parse_config(text: str, base_dir: str = ".") -> ExperimentSpec:
    """Parse and fully validate a configuration document.

    Raises ConfigError naming the offending key (with its line number) or the
    violated invariant in plain language.
    """
    lines = text.splitlines()
    if not lines or lines[0].strip() != FORMAT_HEADER:
        raise ConfigError(
            f"line 1: configuration must start with the header {FORMAT_HEADER!r}"
        )
    parser = configparser.ConfigParser(
        interpolation=None, delimiters=("=",), inline_comment_prefixes=("#",),
        strict=True,
    )
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"parse error: {exc}") from exc

    allowed = {
        "run": _RUN_KEYS, "coefficients": _COEFF_KEYS,
        "initial": _INITIAL_KEYS, "experiment": _EXPERIMENT_KEYS,
    }
    for section in parser.sections():
        if section not in allowed:
            raise ConfigError(f"unknown section [{section}]")
        for key in parser[section]:
            if key not in allowed[section]:
                line = _line_of(text, section, key)
                raise ConfigError(
                    f"line {line}: unknown key {key!r} in section [{section}]"
                )
    for section, keys in allowed.items():
        required = [k for k, req in keys.items() if req]
        if required and section not in parser:
            raise ConfigError(f"missing section [{section}]")
        for key in required:
            if key not in parser[section]:
                raise ConfigError(
                    f"section [{section}] is missing required key {key!r}"
                )

    def get(section, key, cast, default=None):
        if section not in parser or key not in parser[section]:
            return default
        raw = parser[section][key]
        try:
            return cast(raw)
        except (ValueError, TypeError) as exc:
            line = _line_of(text, section, key)
            raise ConfigError(
                f"line {line}: key {key!r}: cannot read {raw!r} ({exc})"
            ) from exc

    def get_bool(section, key, default):
        if section not in parser or key not in parser[section]:
            return default
        try:
            return parser.getboolean(section, key)
        except ValueError as exc:
            line = _line_of(text, section, key)
            raise ConfigError(f"line {line}: key {key!r}: {exc}") from exc

    cutoff = get("run", "cutoff", int)
    if cutoff is None or cutoff < 1:
        raise ConfigError("run.cutoff must be a positive integer")
    dt = get("run", "dt", float)
    horizon = get("run", "horizon", float)
    n_penalty = get("run", "n_penalty", float)
    seed = get("run", "seed", int, 0)
    stride = get("run", "snapshot_stride", int, 1)
    lam = get("run", "lambda_weight", float, 8.0)

    nu = get("coefficients", "nu", float)
    gamma = get("coefficients", "gamma", float)
    f_lin = get("coefficients", "f_lin", float, 0.0)
    sigma_lin = get("coefficients", "sigma_lin", float, 0.0)
    noise_dim = get("coefficients", "noise_dim", int, 1)

    field_sources = []

    def field_of(section, key, default_spec):
        raw = parser[section].get(key, default_spec) if section in parser \
            else default_spec
        canonical = _canonical_field_spec(raw)
        field_sources.append((key, canonical))
        try:
            return _parse_field_spec(raw, cutoff, base_dir)
        except ConfigError as exc:
            line = _line_of(text, section, key)
            prefix = f"line {line}: " if line else ""
            raise ConfigError(f"{prefix}key {key!r}: {exc}") from exc

    f_const = field_of("coefficients", "f_const", "zero")
    sigma_const = field_of("coefficients", "sigma_const", "zero")
    u0 = field_of("initial", "u0", "zero")

    try:
        cset = CoefficientSet(
            nu=nu, gamma=gamma, f_const=f_const, f_lin=f_lin,
            sigma_const=sigma_const, sigma_lin=sigma_lin, noise_dim=noise_dim,
        )
        base = PenaltyRunConfig(
            n_penalty=n_penalty, dt=dt, T=horizon, cutoff=cutoff, seed=seed,
            coefficient_set=cset, u0=u0, snapshot_stride=stride,
            lambda_weight=lam,
        )
    except ValueError as exc:
        raise ConfigError(f"invalid run parameters: {exc}") from exc

    levels_raw = (
        parser["experiment"].get("penalty_levels")
        if "experiment" in parser else None
    )
    if levels_raw is None:
        levels = (n_penalty,)
    else:
        raw = levels_raw.strip()
        if raw.startswith("[") and raw.endswith("]"):
            raw = raw[1:-1]
        try:
            levels = tuple(float(tok) for tok in raw.split(",") if tok.strip())
        except ValueError as exc:
            line = _line_of(text, "experiment", "penalty_levels")
            raise ConfigError(f"line {line}: penalty_levels: {exc}") from exc

    try:
        return ExperimentSpec(
            base=base,
            penalty_levels=levels,
            ensemble_size=get("experiment", "ensemble_size", int, 1),
            dt_policy=get("experiment", "dt_policy", str, "fixed").strip(),
            outputs=get("experiment", "outputs", str, "reflectx-out").strip(),
            emit_fields=get_bool("experiment", "emit_fields", False),
            field_sources=tuple(field_sources),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def print_config(spec: ExperimentSpec) -> str:
    """Canonical document for a spec; parse(print_config(s)) reproduces s."""
    base = spec.base
    cset = base.coefficient_set
    fields = dict(spec.field_sources)
    out = io.StringIO()
    w = out.write
    w(FORMAT_HEADER + "\n")
    w("[run]\n")
    w(f"cutoff = {base.cutoff}\n")
    w(f"dt = {repr(base.dt)}\n")
    w(f"horizon = {repr(base.T)}\n")
    w(f"n_penalty = {repr(base.n_penalty)}\n")
    w(f"seed = {base.seed}\n")
    w(f"snapshot_stride = {base.snapshot_stride}\n")
    w(f"lambda_weight = {repr(base.lambda_weight)}\n")
    w("\n[coefficients]\n")
    w(f"nu = {repr(cset.nu)}\n")
    w(f"gamma = {repr(cset.gamma)}\n")
    w(f"f_lin = {repr(cset.f_lin)}\n")
    w(f"sigma_lin = {repr(cset.sigma_lin)}\n")
    w(f"noise_dim = {cset.noise_dim}\n")
    w(f"f_const = {fields.get('f_const', 'zero')}\n")
    w(f"sigma_const = {fields.get('sigma_const', 'zero')}\n")
    w("\n[initial]\n")
    w(f"u0 = {fields.get('u0', 'zero')}\n")
    w("\n[experiment]\n")
    w("penalty_levels = " + ", ".join(repr(n) for n in spec.penalty_levels) + "\n")
    w(f"ensemble_size = {spec.ensemble_size}\n")
    w(f"dt_policy = {spec.dt_policy}\n")
    w(f"outputs = {spec.outputs}\n")
    w(f"emit_fields = {'true' if spec.emit_fields else 'false'}\n")
    return out.getvalue()


# -- execution -----------------------------------------------------------------

def _master_grid(spec: ExperimentSpec) -> tuple:
    """(master step count, per-level block factors) for nested increments."""
    level_steps = [spec.level_config(n).steps for n in spec.penalty_levels]
    master = 1
    for s in level_steps:
        master = master * s // math.gcd(master, s)
        if master > _MASTER_GRID_LIMIT:
            raise ExperimentError(
                "penalty levels need a common Brownian grid of more than "
                f"{_MASTER_GRID_LIMIT} steps; choose commensurable dt levels"
            )
    factors = [master // s for s in level_steps]
    return master, factors


def _level_increments(seeds: Sequence[int], master_steps: int, factor: int,
                      horizon: float, noise_dim: int) -> np.ndarray:
    """Block-summed increments on a level grid from each member's master path."""
    dt_master = horizon / master_steps
    steps = master_steps // factor
    out = np.empty((len(seeds), steps, noise_dim))
    for b, s in enumerate(seeds):
        fine = brownian_increments(s, master_steps, dt_master, noise_dim)
        out[b] = fine.reshape(steps, factor, noise_dim).sum(axis=1)
    return out


def run_experiment(spec: ExperimentSpec, workers: int = 1,
                   path_sink: Optional[Callable] = None,
                   vi_trials: int = 100,
                   failure_threshold: float = 0.1) -> ExperimentResult:
    """Run the full sweep and aggregate per-level and cross-level diagnostics.

    Every level drives member k with the same underlying Brownian path
    (common random numbers).  path_sink(n, member, path), when given, is
    called for every completed path in (level, member) order, before the
    level's fields are released; used for report emission.  The variational
    inequality is sampled on the first level, where probe recording is cheap.
    Raises ExperimentError when more than failure_threshold of all runs fail.
    """
    seeds = tuple(member_seed(spec.base.seed, k)
                  for k in range(spec.ensemble_size))
    master_steps, factors = _master_grid(spec)
    horizon = spec.base.T
    noise_dim = spec.base.coefficient_set.noise_dim

    reports = []
    cauchy_rows = []
    failures = []
    total_runs = 0
    prev: Optional[tuple] = None  # (n, paths aligned by member)

    for li, n in enumerate(spec.penalty_levels):
        cfg = spec.level_config(n)
        probes = probe_basis(cfg.cutoff) if li == 0 and vi_trials > 0 else ()

        chunks = [
            (start, seeds[start:start + MEMBER_CHUNK])
            for start in range(0, len(seeds), MEMBER_CHUNK)
        ]

        def run_chunk(item):
            start, chunk_seeds = item
            inc = _level_increments(
                chunk_seeds, master_steps, factors[li], horizon, noise_dim
            )
            return simulate_ensemble(
                cfg, chunk_seeds, increments=inc, probes=probes,
                chunk_size=MEMBER_CHUNK,
            )

        if workers > 1 and len(chunks) > 1:
            with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as ex:
                results = list(ex.map(run_chunk, chunks))
        else:
            results = [run_chunk(c) for c in chunks]

        level_paths: list = []
        for (start, _), res in zip(chunks, results):
            level_paths.extend(res.paths)
            for f in res.failures:
                failures.append((n, start + f.member, f))
        total_runs += len(seeds)

        if path_sink is not None:
            for k, p in enumerate(level_paths):
                if p is not None:
                    path_sink(n, k, p)

        completed = [p for p in level_paths if p is not None]
        if not completed:
            raise ExperimentError(
                f"every path failed at penalty level n = {n:g}"
            )
        report = moment_estimates(
            completed, cfg, support_eps=0.05,
            vi_trials=vi_trials if li == 0 else 0,
            vi_seed=spec.base.seed,
        )

        if prev is not None:
            prev_n, prev_paths = prev
            gaps = [
                cauchy_gap(pa, pb, spec.base.lambda_weight)
                for pa, pb in zip(prev_paths, level_paths)
                if pa is not None and pb is not None
            ]
            if gaps:
                est = Estimate.from_samples(gaps)
                cauchy_rows.append((prev_n, n, est))
                report = dataclasses.replace(
                    report, cauchy_gaps={(prev_n, n): est}
                )
        reports.append((n, report))
        prev = (n, level_paths)

    if len(failures) > failure_threshold * total_runs:
        raise ExperimentError(
            f"{len(failures)} of {total_runs} paths failed, above the "
            f"{failure_threshold:.0%} threshold"
        )
    return ExperimentResult(
        spec=spec,
        reports=tuple(reports),
        cauchy_table=tuple(cauchy_rows),
        failures=tuple(failures),
        member_seeds=seeds,
    )


# -- report emission -----------------------------------------------------------

def _fmt(x) -> str:
    return repr(float(x))


def write_path_csv(path: ReflectionPath, fh) -> None:
    """Per-path scalar series on the snapshot grid, with the format header."""
    fh.write(FORMAT_HEADER + "\n")
    fh.write(PATH_CSV_COLUMNS + "\n")
    idx = path.snapshot_indices
    prev_l = None
    for s, j in enumerate(idx):
        dl = 0.0 if s == 0 else norm_h(path.L_snapshots[s] - prev_l)
        prev_l = path.L_snapshots[s]
        row = (
            path.times[j], path.energy_series[j], path.v_norm_series[j],
            path.penetration_series[j], dl, path.var_L[j],
            path.v_norm_integral[j],
        )
        fh.write(",".join(_fmt(x) for x in row) + "\n")


def _level_label(n: float) -> str:
    return format(n, "g").replace("+", "")


def _report_text(n: float, report: DiagnosticsReport) -> str:
    out = io.StringIO()
    out.write(FORMAT_HEADER + "\n")
    out.write(f"n_penalty = {_fmt(n)}\n")
    out.write(f"sample_count = {report.sample_count}\n")
    for name, value, stderr, count in report.estimator_rows():
        out.write(f"{name}.value = {_fmt(value)}\n")
        out.write(f"{name}.stderr = {_fmt(stderr)}\n")
        out.write(f"{name}.n_samples = {count}\n")
    out.write(f"support_eps = {_fmt(report.support_eps)}\n")
    out.write(f"vi_trials = {report.vi_trials}\n")
    out.write(f"vi_tol = {_fmt(report.vi_tol)}\n")
    if report.vi_min is None:
        out.write("vi_min = null\nvi_violations = null\n")
    else:
        out.write(f"vi_min = {_fmt(report.vi_min)}\n")
        out.write(f"vi_violations = {report.vi_violations}\n")
    for (a, b), est in sorted(report.cauchy_gaps.items()):
        key = f"cauchy_gap.{_level_label(a)}.{_level_label(b)}"
        out.write(f"{key}.value = {_fmt(est.value)}\n")
        out.write(f"{key}.stderr = {_fmt(est.stderr)}\n")
        out.write(f"{key}.n_samples = {est.n_samples}\n")
    return out.getvalue()


def emit_report(result: ExperimentResult, spec: ExperimentSpec,
                out_dir: Optional[str] = None,
                wall_time: Optional[float] = None) -> list:
    """Write summary CSV, per-level estimator CSVs and reports, the Cauchy
    table, and a manifest whose content hash is stable across reruns.

    Returns the list of written file paths.  Per-path CSVs are written during
    the run through the path_sink; this emits the aggregates.
    """
    if not result.reports:
        raise ValueError("cannot emit a report for an empty ensemble")
    root = out_dir if out_dir is not None else spec.outputs
    os.makedirs(root, exist_ok=True)
    written = []

    def emit(name: str, text: str):
        full = os.path.join(root, name)
        with open(full, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        written.append(full)

    summary = io.StringIO()
    summary.write(FORMAT_HEADER + "\n")
    summary.write("n_penalty,estimator,value,stderr,n_samples\n")
    for n, report in result.reports:
        for name, value, stderr, count in report.estimator_rows():
            summary.write(
                f"{_fmt(n)},{name},{_fmt(value)},{_fmt(stderr)},{count}\n"
            )
    emit("summary.csv", summary.getvalue())

    for n, report in result.reports:
        label = _level_label(n)
        est = io.StringIO()
        est.write(FORMAT_HEADER + "\n")
        est.write("name,estimate,stderr,n_samples\n")
        for name, value, stderr, count in report.estimator_rows():
            est.write(f"{name},{_fmt(value)},{_fmt(stderr)},{count}\n")
        emit(f"level_{label}_estimates.csv", est.getvalue())
        emit(f"level_{label}_report.txt", _report_text(n, report))

    cauchy = io.StringIO()
    cauchy.write(FORMAT_HEADER + "\n")
    cauchy.write("n_small,n_large,gap_mean,gap_stderr,n_pairs\n")
    for a, b, est in result.cauchy_table:
        cauchy.write(
            f"{_fmt(a)},{_fmt(b)},{_fmt(est.value)},{_fmt(est.stderr)},"
            f"{est.n_samples}\n"
        )
    emit("cauchy_table.csv", cauchy.getvalue())

    config_echo = print_config(spec)
    hasher = hashlib.sha256()
    hasher.update(config_echo.encode("utf-8"))
    for full in sorted(written):
        with open(full, "rb") as fh:
            hasher.update(os.path.basename(full).encode("utf-8"))
            hasher.update(fh.read())
    content_hash = hasher.hexdigest()

    manifest = io.StringIO()
    manifest.write(FORMAT_HEADER + "\n")
    manifest.write("[manifest]\n")
    manifest.write(f"package_version = {__version__}\n")
    manifest.write(f"numpy_version = {np.__version__}\n")
    manifest.write(f"scipy_version = {scipy.__version__}\n")
    manifest.write(f"base_seed = {spec.base.seed}\n")
    manifest.write(
        "member_seeds = " + ", ".join(str(s) for s in result.member_seeds) + "\n"
    )
    manifest.write(
        "penalty_levels = "
        + ", ".join(_level_label(n) for n in spec.penalty_levels) + "\n"
    )
    manifest.write(f"failed_paths = {len(result.failures)}\n")
    manifest.write(f"content_hash = sha256:{content_hash}\n")
    if wall_time is not None:
        # excluded from the content hash: timing varies between reruns
        manifest.write(f"wall_time_seconds = {wall_time:.3f}\n")
    manifest.write("\n[config]\n")
    manifest.write("".join("; " + line + "\n"
                           for line in config_echo.splitlines()))
    emit("manifest.txt", manifest.getvalue())
    return written


def run_and_emit(spec: ExperimentSpec, out_dir: Optional[str] = None,
                 workers: int = 1, emit_fields: Optional[bool] = None):
    """Full pipeline: run the sweep, stream per-path CSVs, emit aggregates.

    Returns (ExperimentResult, list of written files).
    """
    root = out_dir if out_dir is not None else spec.outputs
    os.makedirs(root, exist_ok=True)
    do_fields = spec.emit_fields if emit_fields is None else emit_fields
    started = time.monotonic()
    path_files = []

    def sink(n, k, path: ReflectionPath):
        label = _level_label(n)
        level_dir = os.path.join(root, f"paths_level_{label}")
        os.makedirs(level_dir, exist_ok=True)
        name = os.path.join(level_dir, f"path_{k:04d}.csv")
        with open(name, "w", encoding="utf-8", newline="") as fh:
            write_path_csv(path, fh)
        path_files.append(name)
        if do_fields:
            for tag, snaps in (("u", path.u_snapshots), ("L", path.L_snapshots)):
                arr = np.stack([f.coeffs for f in snaps])
                np.save(os.path.join(level_dir, f"path_{k:04d}_{tag}.npy"), arr)

    result = run_experiment(spec, workers=workers, path_sink=sink)
    written = emit_report(
        result, spec, out_dir=root, wall_time=time.monotonic() - started
    )
    return result, path_files + written
