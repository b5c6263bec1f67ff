"""Command line entry points.

Subcommands:
    run <config>            run the full experiment sweep and emit reports
    print-config <config>   echo the parsed configuration in canonical form
    single-path <config> --n <val> --seed <val>
                            integrate one trajectory and write its CSV
    check                   run the built-in property suites

Exit codes: 0 success, 2 configuration error, 3 simulation failure (a failed
run, the ensemble failure threshold, or a failed built-in check).  The
environment variable REFLECTX_SEED, when set to an integer, overrides the
base seed of any loaded configuration.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import os
import sys
import tempfile
from typing import Optional

import numpy as np

from .diagnostics import (
    moment_estimates,
    probe_basis,
    stieltjes_integral,
    total_variation,
    variational_inequality_check,
)
from .fields import mode_field, norm_h, random_field, zero_field
from .harness import (
    SEED_ENV_VAR,
    ConfigError,
    ExperimentError,
    ExperimentSpec,
    parse_config,
    print_config,
    run_and_emit,
    write_path_csv,
)
from .integrator import (
    IntegrationError,
    PenaltyRunConfig,
    penalty_resolvent,
    simulate_path,
)
from .operators import CoefficientSet

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SIMULATION = 3


def _load_spec(path: str) -> ExperimentSpec:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    spec = parse_config(text, base_dir=os.path.dirname(os.path.abspath(path)))
    override = os.environ.get(SEED_ENV_VAR)
    if override is not None:
        try:
            seed = int(override)
        except ValueError as exc:
            raise ConfigError(
                f"{SEED_ENV_VAR}={override!r} is not an integer seed"
            ) from exc
        spec = dataclasses.replace(
            spec, base=dataclasses.replace(spec.base, seed=seed)
        )
    return spec


def _cmd_run(args) -> int:
    spec = _load_spec(args.config)
    result, files = run_and_emit(
        spec, out_dir=args.out_dir, workers=args.workers,
        emit_fields=True if args.emit_fields else None,
    )
    for n, report in result.reports:
        pen = report.sup_penetration4
        print(
            f"level n={n:g}: {report.sample_count} paths, "
            f"sup_penetration4 = {pen.value:.6g} (stderr {pen.stderr:.2g})"
        )
    for a, b, est in result.cauchy_table:
        print(f"cauchy gap ({a:g}, {b:g}): {est.value:.6g} "
              f"(stderr {est.stderr:.2g})")
    if result.failures:
        print(f"warning: {len(result.failures)} failed paths excluded",
              file=sys.stderr)
        for n, k, f in result.failures:
            print(f"  n={n:g} member={k}: {f.reason} at step {f.step_index}",
                  file=sys.stderr)
    root = args.out_dir if args.out_dir is not None else spec.outputs
    print(f"wrote {len(files)} files under {root}")
    return EXIT_OK


def _cmd_print_config(args) -> int:
    spec = _load_spec(args.config)
    sys.stdout.write(print_config(spec))
    return EXIT_OK


def _cmd_single_path(args) -> int:
    spec = _load_spec(args.config)
    try:
        cfg = dataclasses.replace(
            spec.base, n_penalty=float(args.n), seed=int(args.seed)
        )
    except ValueError as exc:
        raise ConfigError(f"invalid run parameters: {exc}") from exc
    path = simulate_path(cfg)
    root = args.out_dir if args.out_dir is not None else spec.outputs
    os.makedirs(root, exist_ok=True)
    name = os.path.join(root, f"single_n{cfg.n_penalty:g}_seed{cfg.seed}.csv")
    with open(name, "w", encoding="utf-8", newline="") as fh:
        write_path_csv(path, fh)
    if args.emit_fields:
        for tag, snaps in (("u", path.u_snapshots), ("L", path.L_snapshots)):
            arr = np.stack([f.coeffs for f in snaps])
            np.save(name[:-4] + f"_{tag}.npy", arr)
    report = moment_estimates([path], cfg)
    print(f"wrote {name}")
    print(f"final |u|_H = {path.energy_series[-1]:.6g}, "
          f"Var(L) = {path.var_L_total:.6g}, "
          f"max penetration = {float(path.penetration_max[-1]):.3g}, "
          f"v-norm budget = {report.v_norm_budget.value:.6g}")
    return EXIT_OK


# -- built-in property suites ---------------------------------------------------

def _check_resolvent() -> Optional[str]:
    v, dl = penalty_resolvent(mode_field(4, [(1, 0, 2.0)]), 1.0)
    if abs(norm_h(v) - 1.5) > 1e-12 or abs(norm_h(dl) - 0.5) > 1e-12:
        return f"closed form broke: |v| = {norm_h(v)}, |dl| = {norm_h(dl)}"
    for r in np.linspace(0.05, 10.0, 15):
        for a in np.geomspace(1e-3, 1e6, 15):
            u = mode_field(2, [(1, 1, float(r))])
            v, dl = penalty_resolvent(u, float(a))
            expected = r if r <= 1.0 else (r + a) / (1.0 + a)
            if abs(norm_h(v) - expected) > 1e-12:
                return f"|v| off at r = {r:.3g}, a = {a:.3g}"
            if abs(norm_h(dl) - abs(r - norm_h(v))) > 1e-12:
                return f"increment norm off at r = {r:.3g}, a = {a:.3g}"
    return None


def _small_coeffs(cutoff: int, **kw) -> CoefficientSet:
    base = dict(nu=0.1, gamma=0.5, f_const=zero_field(cutoff),
                f_lin=0.0, sigma_const=zero_field(cutoff), sigma_lin=0.0)
    base.update(kw)
    return CoefficientSet(**base)


def _check_energy_decay() -> Optional[str]:
    rng = np.random.default_rng(11)
    cfg = PenaltyRunConfig(
        n_penalty=50.0, dt=1e-3, T=0.3, cutoff=4, seed=11,
        coefficient_set=_small_coeffs(4),
        u0=random_field(4, rng, decay=2.5, rms=0.9),
    )
    path = simulate_path(cfg)
    growth = float(np.max(np.diff(path.energy_series)))
    if growth > 10.0 * cfg.dt**2:
        return f"norm grew by {growth:.3g} in one unforced step"
    return None


def _check_variational_inequality() -> Optional[str]:
    cutoff = 3
    # forcing aligned with u0 so the boundary is reached early in the run
    cfg = PenaltyRunConfig(
        n_penalty=400.0, dt=1e-3, T=0.4, cutoff=cutoff, seed=7,
        coefficient_set=_small_coeffs(
            cutoff,
            f_const=mode_field(cutoff, [(1, 0, 1.5), (0, 1, 0.4, 0.7)]),
            sigma_const=mode_field(cutoff, [(1, 1, 0.1)]),
        ),
        u0=mode_field(cutoff, [(1, 0, 0.9), (2, 1, 0.2)]),
    )
    path = simulate_path(cfg, probes=probe_basis(cutoff))
    if path.var_L_total <= 0.0:
        return "penalty never activated; check forcing"
    vi_min, violations = variational_inequality_check(path, 25, seed=3)
    if violations != 0:
        return f"{violations} trials fell below tolerance"
    if vi_min < -1e-8 * path.var_L_total:
        return f"vi_min = {vi_min:.3g} below tolerance"
    return None


def _check_stieltjes() -> Optional[str]:
    e = mode_field(2, [(1, 0, 1.0)])
    zero = zero_field(2)
    flat = total_variation((e, e, e), (0, 1, 2))
    if abs(flat) > 1e-15:
        return f"constant path has variation {flat}"
    spike = total_variation((zero, e, zero), (0, 1, 2))
    if abs(spike - 2.0) > 1e-14:
        return f"two unit jumps gave {spike}"
    integrand = (2.0 * e, 2.0 * e, 2.0 * e)
    val = stieltjes_integral(integrand, (zero, -1.0 * e, -1.0 * e))
    if abs(val + 2.0) > 1e-14:
        return f"single-jump pairing gave {val}"
    return None


_CHECK_CONFIG = """\
# reflectx-format v1
[run]
cutoff = 3
dt = 0.002
horizon = 0.2
n_penalty = 50
seed = 20

[coefficients]
nu = 0.1
gamma = 0.5
f_const = modes: 1 0 1.1; 0 1 0.8 0.6

[initial]
u0 = random: decay=2.0 rms=0.7 seed=5

[experiment]
penalty_levels = 50, 200
ensemble_size = 2
dt_policy = scaled
"""


def _hash_tree(root: str) -> dict:
    """Per-file SHA-256 over an output tree.

    The manifest is reduced to its content_hash line: the wall-time entry is
    the one field allowed to vary between reruns.
    """
    out = {}
    for dirpath, _, names in os.walk(root):
        for name in names:
            full = os.path.join(dirpath, name)
            rel = os.path.relpath(full, root)
            with open(full, "rb") as fh:
                data = fh.read()
            if name == "manifest.txt":
                data = b"".join(
                    ln for ln in data.splitlines(keepends=True)
                    if ln.startswith(b"content_hash")
                )
            out[rel] = hashlib.sha256(data).hexdigest()
    return out


def _check_determinism() -> Optional[str]:
    spec = parse_config(_CHECK_CONFIG)
    hashes = []
    for _ in range(2):
        with tempfile.TemporaryDirectory() as tmp:
            run_and_emit(spec, out_dir=tmp, workers=1)
            hashes.append(_hash_tree(tmp))
    if hashes[0] != hashes[1]:
        diff = sorted(
            k for k in set(hashes[0]) | set(hashes[1])
            if hashes[0].get(k) != hashes[1].get(k)
        )
        return f"reruns differ in {', '.join(diff)}"
    return None


_CHECKS = (
    ("penalty-resolvent", _check_resolvent),
    ("energy-decay", _check_energy_decay),
    ("variational-inequality", _check_variational_inequality),
    ("variation-and-pairing", _check_stieltjes),
    ("determinism-hash", _check_determinism),
)


def _cmd_check(args) -> int:
    failed = 0
    for name, fn in _CHECKS:
        try:
            problem = fn()
        except Exception as exc:  # a crashed suite is a failed suite
            problem = f"{type(exc).__name__}: {exc}"
        if problem is None:
            print(f"PASS {name}")
        else:
            failed += 1
            print(f"FAIL {name}: {problem}")
    return EXIT_OK if failed == 0 else EXIT_SIMULATION


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reflectx",
        description="Penalized reflected dynamics in the unit ball: "
                    "simulation sweeps and diagnostics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment sweep")
    run.add_argument("config", help="configuration document path")
    run.add_argument("--workers", type=int, default=1,
                     help="concurrent member chunks (default 1)")
    run.add_argument("--out-dir", default=None,
                     help="output directory (default: outputs key)")
    run.add_argument("--emit-fields", action="store_true",
                     help="also write field snapshots as .npy")
    run.set_defaults(fn=_cmd_run)

    echo = sub.add_parser("print-config", help="echo the parsed configuration")
    echo.add_argument("config")
    echo.set_defaults(fn=_cmd_print_config)

    single = sub.add_parser("single-path", help="integrate one trajectory")
    single.add_argument("config")
    single.add_argument("--n", required=True, type=float,
                        help="penalty strength for this run")
    single.add_argument("--seed", required=True, type=int,
                        help="Brownian seed for this run")
    single.add_argument("--out-dir", default=None)
    single.add_argument("--emit-fields", action="store_true")
    single.set_defaults(fn=_cmd_single_path)

    check = sub.add_parser("check", help="run the built-in property suites")
    check.set_defaults(fn=_cmd_check)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IntegrationError as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return EXIT_SIMULATION
    except ExperimentError as exc:
        print(f"experiment failed: {exc}", file=sys.stderr)
        return EXIT_SIMULATION


if __name__ == "__main__":
    sys.exit(main())
