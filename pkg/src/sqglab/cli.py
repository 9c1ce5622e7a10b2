"""Command-line entry point: one subcommand per laboratory module.

Every run writes its data files plus a ``<output>.manifest.json`` recording
the subcommand, a SHA-256 of the configuration, the tool version, the seed
and the wall time.  Data outputs are byte-deterministic for a fixed
(subcommand, config, seed, version): floats are printed with 17 significant
digits and exact rationals as "p/q" strings.  Files are written atomically
(temp file + rename).  The SQGLAB_THREADS environment variable sets the
number of enumeration worker threads used by the resonance searches.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import time

from . import __version__, evolve, resonance, waves
from .dispersion import dispersion, smoothing_symbol
from .field import SpectralField


class ConfigError(ValueError):
    """Invalid configuration; the message names every offending field."""


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _atomic_write_text(path: str, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as handle:
        handle.write(text)
    os.replace(tmp, path)


def _write_csv(path: str, header: list, rows: list) -> None:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    _atomic_write_text(path, buffer.getvalue())


def _write_json(path: str, data: dict) -> None:
    _atomic_write_text(path, json.dumps(data, sort_keys=True, indent=2) + "\n")


def emit_manifest(
    primary_output: str,
    subcommand: str,
    config_bytes: bytes,
    outputs: list,
    seed: int | None,
    started: float,
) -> str:
    """Write the run manifest next to the primary output; returns its path."""
    path = f"{primary_output}.manifest.json"
    _write_json(
        path,
        {
            "subcommand": subcommand,
            "config_sha256": hashlib.sha256(config_bytes).hexdigest(),
            "version": __version__,
            "wall_time_seconds": time.monotonic() - started,
            "outputs": [os.path.basename(p) for p in outputs],
            "seed": seed,
        },
    )
    return path


_EVOLVE_DEFAULTS = {
    "m": 3,
    "n_max": 24,
    "s": 3.0,
    "dt": 0.01,
    "t_end": 10.0,
    "epsilon": 0.1,
    "seed": 0,
    "initial_profile": "random_band",
    "diagnostics_stride": 10,
    "linear_only": False,
    "corrected_energies": True,
}


def validate_config(path: str, extra_defaults: dict | None = None) -> dict:
    """Load a JSON run config, fill defaults, and check every range.

    Raises ConfigError naming each violated field.  Returns the normalized
    config dictionary.
    """
    try:
        with open(path) as handle:
            raw = json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path}: top level must be a JSON object")

    defaults = dict(_EVOLVE_DEFAULTS)
    if extra_defaults:
        defaults.update(extra_defaults)
    known = set(defaults) | {"initial_state"}
    problems = [f"{key}: unknown field" for key in raw if key not in known]
    cfg = {**defaults, **raw}

    def check(name, ok, message):
        if not ok:
            problems.append(f"{name}: {message}")

    check("m", isinstance(cfg["m"], int) and cfg["m"] >= 3, "must be an integer >= 3")
    if isinstance(cfg["m"], int) and cfg["m"] >= 3:
        check(
            "n_max",
            isinstance(cfg["n_max"], int)
            and cfg["n_max"] >= cfg["m"]
            and cfg["n_max"] % cfg["m"] == 0,
            f"must be a positive multiple of m={cfg['m']}",
        )
    check("s", isinstance(cfg["s"], (int, float)) and cfg["s"] >= 0, "must be >= 0")
    dt_ok = isinstance(cfg["dt"], (int, float)) and not isinstance(cfg["dt"], bool) and cfg["dt"] > 0
    check("dt", dt_ok, "must be > 0")
    check(
        "t_end",
        isinstance(cfg["t_end"], (int, float))
        and (not dt_ok or cfg["t_end"] >= cfg["dt"]),
        "must be at least dt",
    )
    check(
        "epsilon",
        isinstance(cfg["epsilon"], (int, float)) and cfg["epsilon"] > 0,
        "must be > 0",
    )
    check("seed", isinstance(cfg["seed"], int), "must be an integer")
    check(
        "initial_profile",
        cfg["initial_profile"] in ("single_mode", "random_band"),
        "must be single_mode or random_band",
    )
    check(
        "diagnostics_stride",
        isinstance(cfg["diagnostics_stride"], int) and cfg["diagnostics_stride"] >= 1,
        "must be an integer >= 1",
    )
    check("linear_only", isinstance(cfg["linear_only"], bool), "must be a boolean")
    check(
        "corrected_energies",
        isinstance(cfg["corrected_energies"], bool),
        "must be a boolean",
    )
    if "eps_list" in defaults:
        eps = cfg["eps_list"]
        ok = (
            isinstance(eps, list)
            and len(eps) >= 2
            and all(isinstance(e, (int, float)) and e > 0 for e in eps)
            and all(b < a for a, b in zip(eps, eps[1:]))
        )
        check("eps_list", ok, "must be a strictly decreasing list of >= 2 amplitudes")

    if problems:
        raise ConfigError(f"invalid config {path}: " + "; ".join(sorted(problems)))
    return cfg


def _sim_config(cfg: dict) -> evolve.SimConfig:
    return evolve.SimConfig(
        m=cfg["m"],
        n_max=cfg["n_max"],
        s=float(cfg["s"]),
        dt=float(cfg["dt"]),
        t_end=float(cfg["t_end"]),
        epsilon=float(cfg["epsilon"]),
        seed=cfg["seed"],
        initial_profile=cfg["initial_profile"],
        diagnostics_stride=cfg["diagnostics_stride"],
        linear_only=cfg["linear_only"],
        corrected_energies=cfg["corrected_energies"],
    )


def _trajectory_rows(trajectory: evolve.Trajectory, prefix: tuple = ()) -> list:
    rows = []
    for i, t in enumerate(trajectory.times):
        rows.append(
            list(prefix)
            + [_fmt(t)]
            + [_fmt(trajectory.table[name][i]) for name in evolve.DIAGNOSTIC_COLUMNS]
        )
    return rows


_TRAJ_HEADER = ["t", "Es", "Es_c3", "Es_c34", "Es_c345", "hs_norm", "mean_res", "sym_res"]


def cmd_dispersion(args) -> int:
    started = time.monotonic()
    rows = []
    for n in range(3, args.n_max + 1):
        lam = dispersion(n)
        sig = smoothing_symbol(n)
        rows.append(
            [
                n,
                f"{lam.numerator}/{lam.denominator}",
                f"{sig.numerator}/{sig.denominator}",
                _fmt(lam),
                _fmt(sig),
            ]
        )
    _write_csv(
        args.out,
        ["n", "lambda_exact", "sigma_exact", "lambda_float", "sigma_float"],
        rows,
    )
    config = json.dumps({"n_max": args.n_max}, sort_keys=True).encode()
    emit_manifest(args.out, "dispersion", config, [args.out], None, started)
    return 0


def cmd_resonance(args) -> int:
    started = time.monotonic()
    if args.p == 6:
        report = resonance.search_resonances_p6(args.bound)
    else:
        report = resonance.min_denominator(args.p, args.bound)
    resonance.certify(report, args.out)
    config = json.dumps({"p": args.p, "bound": args.bound}, sort_keys=True).encode()
    emit_manifest(args.out, "resonance", config, [args.out], None, started)
    return 0


def cmd_evolve(args) -> int:
    started = time.monotonic()
    cfg = validate_config(args.config)
    initial = None
    if cfg.get("initial_state"):
        try:
            with open(cfg["initial_state"]) as handle:
                initial = SpectralField.from_dict(json.load(handle))
        except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
            raise ConfigError(f"initial_state: {exc}") from exc
    trajectory = evolve.run(_sim_config(cfg), initial=initial)
    _write_csv(args.out, _TRAJ_HEADER, _trajectory_rows(trajectory))
    outputs = [args.out]
    if args.state_out:
        _write_json(args.state_out, trajectory.states[-1].to_dict())
        outputs.append(args.state_out)
    with open(args.config, "rb") as handle:
        config_bytes = handle.read()
    emit_manifest(args.out, "evolve", config_bytes, outputs, cfg["seed"], started)
    return 0


def cmd_normalform(args) -> int:
    started = time.monotonic()
    cfg = validate_config(args.config, extra_defaults={"eps_list": [0.1, 0.05, 0.025]})
    sim = _sim_config(cfg)

    series_path = f"{args.out_prefix}.series.csv"
    slopes_path = f"{args.out_prefix}.slopes.json"
    report = evolve.lifespan_experiment(cfg["eps_list"], sim, keep_trajectories=True)
    rows = []
    for eps, trajectory in zip(report.epsilons, report.trajectories):
        rows.extend(_trajectory_rows(trajectory, prefix=(_fmt(eps),)))
    _write_csv(series_path, ["eps"] + _TRAJ_HEADER, rows)
    _write_json(slopes_path, report.to_dict())
    with open(args.config, "rb") as handle:
        config_bytes = handle.read()
    emit_manifest(
        slopes_path,
        "normalform",
        config_bytes,
        [series_path, slopes_path],
        cfg["seed"],
        started,
    )
    return 0


def cmd_waves(args) -> int:
    started = time.monotonic()
    branch = waves.continue_branch(
        args.m, args.xi_max, args.steps, num_harmonics=args.harmonics
    )
    header = ["xi", "v", "residual", "decay_c"] + [
        f"a_{k}" for k in range(1, branch.num_harmonics + 1)
    ]
    rows = []
    for point in branch.points:
        try:
            decay = _fmt(waves.decay_rate(point))
        except ValueError:
            decay = "nan"
        rows.append(
            [_fmt(point.xi), _fmt(point.speed), _fmt(point.residual_norm), decay]
            + [_fmt(c) for c in point.cosine_coeffs]
        )
    _write_csv(args.out, header, rows)
    outputs = [args.out]
    if args.json_out:
        _write_json(args.json_out, branch.to_dict())
        outputs.append(args.json_out)
    config = json.dumps(
        {
            "m": args.m,
            "xi_max": args.xi_max,
            "steps": args.steps,
            "harmonics": args.harmonics,
        },
        sort_keys=True,
    ).encode()
    emit_manifest(args.out, "waves", config, outputs, None, started)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sqglab",
        description="numerical laboratory for the 1D dispersive transport model",
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_disp = sub.add_parser("dispersion", help="tabulate the exact symbols")
    p_disp.add_argument("--n-max", type=int, required=True, dest="n_max")
    p_disp.add_argument("--out", required=True)
    p_disp.set_defaults(func=cmd_dispersion)

    p_res = sub.add_parser("resonance", help="exact resonance search")
    p_res.add_argument("--p", type=int, required=True, choices=(3, 4, 5, 6))
    p_res.add_argument("--bound", type=int, required=True)
    p_res.add_argument("--out", required=True)
    p_res.set_defaults(func=cmd_resonance)

    p_evo = sub.add_parser("evolve", help="integrate one configured run")
    p_evo.add_argument("--config", required=True)
    p_evo.add_argument("--out", required=True)
    p_evo.add_argument("--state-out", dest="state_out", default=None,
                       help="also dump the final state (restart format)")
    p_evo.set_defaults(func=cmd_evolve)

    p_nf = sub.add_parser(
        "normalform", help="corrected-energy series and scaling slopes"
    )
    p_nf.add_argument("--config", required=True)
    p_nf.add_argument("--out-prefix", required=True, dest="out_prefix")
    p_nf.set_defaults(func=cmd_normalform)

    p_wav = sub.add_parser("waves", help="continue a travelling-wave branch")
    p_wav.add_argument("--m", type=int, required=True)
    p_wav.add_argument("--xi-max", type=float, required=True, dest="xi_max")
    p_wav.add_argument("--steps", type=int, required=True)
    p_wav.add_argument("--harmonics", type=int, default=None)
    p_wav.add_argument("--out", required=True)
    p_wav.add_argument("--json-out", dest="json_out", default=None)
    p_wav.set_defaults(func=cmd_waves)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, evolve.InstabilityError, waves.NewtonError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
