"""``hilbert-da <command> --config <path> [--seed S] [--out DIR]``.

Configs are flat ``key = value`` files; ``#`` starts a comment. Every key
has a default except ``seed``, which must come from the file or ``--seed``.
Exit status: 0 pass, 1 threshold violation, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import sys
import warnings
from pathlib import Path

import numpy as np

from . import experiments as ex
from .ensemble_stats import cov_convergence_experiment, lln_experiment
from .errors import ConfigError, SingularR
from .gaussian import GaussianSpec
from .rect_field import (InversePower, RectDomain, covariance_eigs, format_law, parse_law,
                         sample_field, sobolev_energy, trace_partial_sums, write_series_csv)
from .rng import INITIAL, stream

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
SEED_MAX = 2**64 - 1


# Value parsers ------------------------------------------------------------------

def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.replace(",", " ").split()]


def _str_list(text: str) -> list[str]:
    return [t for t in text.replace(",", " ").split()]


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _pow2(lo: int, hi: int) -> str:
    return ",".join(str(2**k) for k in range(lo, hi + 1))


_COMMON = {"seed": (int, None), "workers": (int, "1"), "experiment": (str, ""), "out": (str, "")}

SCHEMAS: dict[str, dict] = {
    "field": {
        "law": (str, "inverse_power:2.0"), "a": (float, "1.0"), "b": (float, "1.0"),
        "m": (int, "64"), "n": (int, "64"), "modes": (int, "16384"),
        "sobolev_s": (float, "1.0"), "discrete": (_bool, "false"),
    },
    "lln": {
        "dim": (int, "5"), "sizes": (_int_list, _pow2(4, 12)), "replicates": (int, "100"),
        "p": (float, "2"), "slope_tol": (float, "0.1"),
    },
    "cov-lln": {
        "dim": (int, "5"), "sizes": (_int_list, _pow2(4, 12)), "replicates": (int, "100"),
        "p": (float, "2"), "slope_tol": (float, "0.1"),
    },
    "enkf-converge": {
        "dim": (int, "10"), "model": (str, "default"), "cycles": (int, "3"),
        "sizes": (_int_list, _pow2(3, 10)), "replicates": (int, "100"),
        "slope_tol": (float, "0.15"),
    },
    "curse": {
        "laws": (_str_list, "const,inv,inv_sq"), "dims": (_int_list, "50,100,200,400"),
        "N": (int, "10"), "m_obs": (int, "25"), "obs_std": (float, "1.0"),
        "replicates": (int, "50"),
    },
    "etkf-check": {
        "trials": (int, "100"), "max_state": (int, "20"), "max_members": (int, "40"),
        "tol": (float, "1e-10"), "osi_tol": (float, "1e-8"), "r_skew": (float, "0.0"),
    },
    "char-fn": {
        "dims": (_int_list, "1,2,5"), "draws": (int, "100000"), "n_h": (int, "20"),
        "h_max": (float, "3.0"),
    },
}


# Config -------------------------------------------------------------------------

def read_config(path) -> dict[str, str]:
    """Raw ``key -> value`` strings from a flat config file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected key = value")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value.strip()
    return raw


def resolve_config(command: str, raw: dict[str, str], seed: int | None = None) -> dict:
    """Typed config for ``command``: rejects unknown keys, fills defaults, requires a seed."""
    schema = {**_COMMON, **SCHEMAS[command]}
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"unknown key(s) for {command}: {', '.join(unknown)}")
    if raw.get("experiment") and raw["experiment"] != command:
        raise ConfigError(f"config is for {raw['experiment']!r}, not {command!r}")
    cfg = {}
    for key, (conv, default) in schema.items():
        text = raw.get(key, default)
        if text is None:
            continue
        try:
            cfg[key] = conv(text)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {text!r}") from exc
    if seed is not None:
        cfg["seed"] = seed
    if "seed" not in cfg:
        raise ConfigError("seed is required (config key 'seed' or --seed)")
    if not 0 <= cfg["seed"] <= SEED_MAX:
        raise ConfigError("seed must be a 64-bit unsigned integer")
    if cfg["workers"] < 1:
        raise ConfigError("workers must be >= 1")
    _validate(command, cfg)
    return cfg


def _increasing(name: str, values: list[int], minimum: int = 1) -> None:
    if not values:
        raise ConfigError(f"{name} must not be empty")
    if values[0] < minimum or any(b <= a for a, b in zip(values, values[1:])):
        raise ConfigError(f"{name} must be strictly increasing and >= {minimum}")


def _validate(command: str, cfg: dict) -> None:
    if "replicates" in cfg:
        if cfg["replicates"] < 1:
            raise ConfigError("replicates must be >= 1")
        if cfg["replicates"] == 1:
            warnings.warn("replicates=1: no standard errors, the fitted slope is noisy",
                          stacklevel=3)
    if command == "field":
        try:
            cfg["law"] = parse_law(cfg["law"])
            cfg["domain"] = RectDomain(cfg["a"], cfg["b"], cfg["m"], cfg["n"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if cfg["modes"] < 2:
            raise ConfigError("modes must be >= 2")
    elif command in ("lln", "cov-lln"):
        _increasing("sizes", cfg["sizes"])
        if cfg["dim"] < 1 or cfg["p"] < 1:
            raise ConfigError("dim must be >= 1 and p >= 1")
    elif command == "enkf-converge":
        _increasing("sizes", cfg["sizes"], minimum=2)
        if not 1 <= cfg["cycles"] <= 5:
            raise ConfigError("cycles must be between 1 and 5")
        if cfg["model"] not in ("default", "identity"):
            raise ConfigError("model must be 'default' or 'identity'")
    elif command == "curse":
        _increasing("dims", cfg["dims"])
        bad = [law for law in cfg["laws"] if law not in ("const", "inv", "inv_sq")]
        if bad or not cfg["laws"]:
            raise ConfigError(f"laws must be chosen from const, inv, inv_sq; got {bad}")
        if cfg["N"] < 2 or cfg["m_obs"] < 1 or cfg["obs_std"] <= 0:
            raise ConfigError("need N >= 2, m_obs >= 1, obs_std > 0")
    elif command == "char-fn":
        _increasing("dims", cfg["dims"])


# Commands -----------------------------------------------------------------------

def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def cmd_field(cfg: dict, out: Path) -> int:
    law, dom = cfg["law"], cfg["domain"]
    cov = covariance_eigs(law, dom, discrete=cfg["discrete"])
    sample_field(cov, dom, rng=stream(cfg["seed"], INITIAL)).to_csv(out / "field.csv")
    trace = trace_partial_sums(law, dom, cfg["modes"])
    write_series_csv(trace, out / "trace_sums.csv")
    ok = trace.consistent
    print(f"law: {format_law(law)}")
    print(f"trace: {trace.verdict}")
    if isinstance(law, InversePower):
        sob = sobolev_energy(law, cfg["sobolev_s"], dom, cfg["modes"])
        write_series_csv(sob, out / "sobolev_sums.csv")
        print(f"sobolev s={cfg['sobolev_s']:g}: {sob.verdict}")
        ok = ok and sob.consistent
    else:
        print("sobolev: not defined for this law")
    if not ok:
        print("partial sums inconsistent with the analytic tail bound", file=sys.stderr)
    return EXIT_PASS if ok else EXIT_FAIL


def _standard_normal(dim: int) -> GaussianSpec:
    return GaussianSpec(np.zeros(dim), np.eye(dim))


def _report_slope(rep, tol: float) -> bool:
    ok = rep.slope_within(-0.5, tol)
    print(f"slope: {rep.slope:.4f} (target -0.5 +/- {tol:g}) {'PASS' if ok else 'FAIL'}")
    print(f"empirical constant: {rep.empirical_constant:.4f}")
    return ok


def cmd_lln(cfg: dict, out: Path) -> int:
    rep = lln_experiment(_standard_normal(cfg["dim"]), cfg["sizes"], cfg["replicates"],
                         cfg["p"], cfg["seed"], cfg["workers"])
    rep.to_csv(out / "lln.csv")
    ok = _report_slope(rep, cfg["slope_tol"])
    if cfg["p"] == 2:
        held = rep.bound_holds(3.0)
        print(f"bound 2|X1|_2/sqrt(n): {'PASS' if held else 'FAIL'}")
        ok = ok and held
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_cov_lln(cfg: dict, out: Path) -> int:
    rep = cov_convergence_experiment(_standard_normal(cfg["dim"]), cfg["sizes"],
                                     cfg["replicates"], cfg["p"], cfg["seed"], cfg["workers"])
    op = rep.extra["op_errors"]
    _write_rows(out / "cov_lln.csv", ["size", "hs_error", "hs_stderr", "op_error"],
                [[int(n), repr(float(e)), repr(float(s)), repr(float(o))]
                 for n, e, s, o in zip(rep.sizes, rep.errors, rep.stderr, op)])
    ok = _report_slope(rep, cfg["slope_tol"])
    dom = rep.extra["hs_dominates_op"]
    print(f"hs >= op at every size: {'PASS' if dom else 'FAIL'}")
    return EXIT_PASS if ok and dom else EXIT_FAIL


def cmd_enkf_converge(cfg: dict, out: Path) -> int:
    reps = ex.enkf_convergence_experiment(cfg["sizes"], cfg["cycles"], cfg["replicates"],
                                          cfg["seed"], cfg["dim"], cfg["model"], cfg["workers"])
    rows = []
    ok = True
    for rep in reps:
        c = rep.extra["cycle"]
        rows += [[c, int(n), repr(float(e)), repr(float(s))]
                 for n, e, s in zip(rep.sizes, rep.errors, rep.stderr)]
        good = rep.slope_within(-0.5, cfg["slope_tol"])
        ok = ok and good
        print(f"cycle {c}: slope {rep.slope:.4f} {'PASS' if good else 'FAIL'}")
    _write_rows(out / "enkf_converge.csv", ["cycle", "N", "error", "stderr"], rows)
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_curse(cfg: dict, out: Path) -> int:
    rep = ex.curse_experiment(cfg["laws"], cfg["dims"], cfg["N"], cfg["m_obs"],
                              cfg["obs_std"], cfg["replicates"], cfg["seed"])
    rep.to_csv(out / "curse.csv")
    print(f"N={rep.N} m={rep.m_obs}")
    ok = True
    for law in cfg["laws"]:
        print(f"{law}: " + " ".join(f"{r.dim}:{r.rmse:.4f}" for r in rep.series(law)))
    if "inv_sq" in cfg["laws"] and len(cfg["dims"]) > 1:
        flat = rep.flat_within_noise("inv_sq")
        print(f"inv_sq bounded within noise: {'PASS' if flat else 'FAIL'}")
        ok = ok and flat
    if "const" in cfg["laws"] and len(cfg["dims"]) > 1:
        grows = rep.strictly_increasing("const")
        print(f"const strictly increasing: {'PASS' if grows else 'FAIL'}")
        ok = ok and grows
    return EXIT_PASS if ok else EXIT_FAIL


def _suite_csv(path: Path, results) -> None:
    _write_rows(path, ["check", "residual", "tol", "pass"],
                [[r.name, repr(r.value), repr(r.tol), int(r.passed)] for r in results])


def cmd_etkf_check(cfg: dict, out: Path) -> int:
    results = ex.etkf_suite(cfg["trials"], cfg["seed"], cfg["max_state"], cfg["max_members"],
                            cfg["tol"], cfg["r_skew"])
    results += ex.osi_suite(cfg["trials"], cfg["seed"], tol=cfg["osi_tol"])
    _suite_csv(out / "etkf_check.csv", results)
    for r in results:
        print(r.line())
    return EXIT_PASS if all(r.passed for r in results) else EXIT_FAIL


def cmd_char_fn(cfg: dict, out: Path) -> int:
    results = ex.char_fn_suite(cfg["dims"], cfg["draws"], cfg["n_h"], cfg["h_max"], cfg["seed"])
    _suite_csv(out / "char_fn.csv", results)
    for r in results:
        print(r.line())
    return EXIT_PASS if all(r.passed for r in results) else EXIT_FAIL


COMMANDS = {
    "field": cmd_field, "lln": cmd_lln, "cov-lln": cmd_cov_lln,
    "enkf-converge": cmd_enkf_converge, "curse": cmd_curse,
    "etkf-check": cmd_etkf_check, "char-fn": cmd_char_fn,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hilbert-da", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="flat key = value config file")
    ap.add_argument("--seed", type=int, help="master seed, overrides the config")
    ap.add_argument("--out", help="output directory (default: config key 'out' or .)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args.command, read_config(args.config), args.seed)
        out = Path(args.out or cfg["out"] or ".")
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SingularR as exc:
        # R comes straight from the config, so a bad R is a bad config
        print(f"config error: SingularR: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
