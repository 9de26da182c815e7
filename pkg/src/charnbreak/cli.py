"""Command-line entry point ``charnbreak``.

Every subcommand reads its parameters from an optional flat config file
(``--config``) overlaid with command-line flags, validates them against a
schema (unknown keys are rejected), and writes a structured result file whose
``inputs`` block can be fed back through ``--config`` to repeat the run.

Exit codes: 0 success, 1 computation error, 2 configuration or usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
import time
from typing import Any, Callable, Sequence

import numpy as np

from . import io
from .detect import DetectionConfig, detect_s1, detect_s2, detect_s3, s1_scan
from .errors import CharnError, ConfigError, ParseError
from .estimation import fit_gamma0
from .lr_test import test_statistic, z_alpha
from .model_core import CharnSpec, MeanShiftParams, Segmentation, residuals, simulate
from .montecarlo import Scenario, empirical_size_power, lan_diagnostic, location_estimate_mean
from .noise import GaussianNoise, KdeConfig, ShiftedExponentialNoise, kde_fit
from .power import estimate_beta, grid_candidates, power_surface

_REQUIRED = object()


def _opt(conv: Callable) -> Callable:
    return lambda v: None if str(v).strip().lower() in ("", "none") else conv(v)


def _choice(*options: str) -> Callable[[str], str]:
    def conv(v):
        v = str(v).strip().lower()
        if v not in options:
            raise ConfigError(f"expected one of {options}, got {v!r}")
        return v

    return conv


def _grids(text: str) -> str:
    """Validate ``"30:50;110:130"`` (one range list per break); kept as text for echoing."""
    parts = [p.strip() for p in str(text).split(";") if p.strip()]
    if not parts:
        raise ConfigError("grids must describe at least one break")
    for p in parts:
        _expand_range(p)
    return ";".join(parts)


def _expand_range(text: str) -> list[int]:
    out: list[int] = []
    for item in text.split(","):
        item = item.strip()
        if ":" in item:
            lo, hi = (int(v) for v in item.split(":", 1))
            if hi < lo:
                raise ConfigError(f"empty range {item!r}")
            out.extend(range(lo, hi + 1))
        elif item:
            out.append(int(item))
    return out


MODEL_KEYS = {
    "trend": (_choice("constant", "linear_ar", "expar"), "constant"),
    "rho": (io.float_list, []),
    "vol": (_choice("constant", "exparch"), "constant"),
    "theta": (io.float_list, [1.0]),
}

NOISE_KEYS = {
    "noise": (_choice("gaussian", "kde", "shifted_exponential"), "gaussian"),
    "rate": (float, 1.25),
    "fisher_override": (_opt(float), None),
    "kde_bandwidth": (_opt(float), None),
}

DETECT_KEYS = {
    "strategy": (_choice("s1", "s2", "s3"), "s2"),
    "priors": (_opt(io.int_list), None),
    "halfwidth": (int, 10),
    "m": (int, 20),
    "h": (int, 20),
    "zeta": (float, 0.01),
    "k_max": (_opt(int), None),
    "known_k": (_opt(int), None),
    "circular": (io.parse_bool, False),
    "reference": (_choice("previous", "first"), "previous"),
}

SCHEMAS: dict[str, dict[str, tuple[Callable, Any]]] = {
    "simulate": {
        "n": (int, 200),
        "breaks": (io.int_list, []),
        "gamma0": (_opt(io.float_list), None),
        "beta": (_opt(io.float_list), None),
        **MODEL_KEYS,
        **NOISE_KEYS,
        "seed": (int, 0),
        "burn_in": (int, 100),
        "output": (str, "series.csv"),
        "result": (str, "result.jsonl"),
    },
    "test": {
        "input": (str, _REQUIRED),
        "breaks": (io.int_list, _REQUIRED),
        "gamma0": (_opt(io.float_list), None),
        "beta": (_opt(io.float_list), None),
        **MODEL_KEYS,
        **NOISE_KEYS,
        "alpha": (float, 0.05),
        "result": (str, "result.jsonl"),
    },
    "power-surface": {
        "input": (str, _REQUIRED),
        "grids": (_grids, _REQUIRED),
        **MODEL_KEYS,
        **NOISE_KEYS,
        "alpha": (float, 0.05),
        "reference": (_choice("previous", "first"), "previous"),
        "table": (str, "surface.csv"),
        "result": (str, "result.jsonl"),
    },
    "detect": {
        "input": (str, _REQUIRED),
        **DETECT_KEYS,
        **MODEL_KEYS,
        **NOISE_KEYS,
        "alpha": (float, 0.05),
        "table": (_opt(str), None),
        "result": (str, "result.jsonl"),
    },
    "mc": {
        "kind": (_choice("rate", "lan", "location"), "rate"),
        "method": (_choice("lrt", "s1", "s2", "s3", "scusum"), "lrt"),
        "n": (int, 200),
        "breaks": (io.int_list, []),
        "gamma0": (_opt(io.float_list), None),
        "beta": (_opt(io.float_list), None),
        "test_beta": (_opt(io.float_list), None),
        **MODEL_KEYS,
        **NOISE_KEYS,
        **{k: v for k, v in DETECT_KEYS.items() if k != "strategy"},
        "alpha": (float, 0.05),
        "reps": (int, 500),
        "seed": (int, 0),
        "burn_in": (int, 100),
        "table": (str, "mc.csv"),
        "result": (str, "result.jsonl"),
    },
    "detrend": {
        "input": (str, _REQUIRED),
        "order": (int, 5),
        "endpoints": (_choice("shrink", "drop"), "shrink"),
        "output": (str, "residuals.csv"),
        "trend_output": (_opt(str), None),
        "result": (str, "result.jsonl"),
    },
}

HELP = {
    "simulate": "simulate a CHARN path with mean shifts",
    "test": "likelihood-ratio test at given break locations",
    "power-surface": "estimated power over a grid of candidate breaks",
    "detect": "estimate the number and locations of breaks",
    "mc": "Monte Carlo size/power, LAN or location study",
    "detrend": "moving-average detrending",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="charnbreak", description="Weak mean-shift detection in CHARN series.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, schema in SCHEMAS.items():
        sp = sub.add_parser(name, help=HELP[name])
        sp.add_argument("--config", help="flat key = value file (flags override it)")
        if name == "mc":
            sp.add_argument("--scenario", dest="config", help="alias of --config")
            sp.add_argument("--workers", type=int, default=1, help="worker processes")
        sp.add_argument("--timing", action="store_true", help="add wall-clock timing to the result file")
        for key, (conv, _) in schema.items():
            flag = "--" + key.replace("_", "-")
            if conv is io.parse_bool:
                sp.add_argument(flag, dest=key, nargs="?", const="true", default=None)
            else:
                sp.add_argument(flag, dest=key, default=None)
    return parser


def resolve(command: str, ns: argparse.Namespace) -> dict[str, Any]:
    schema = SCHEMAS[command]
    raw: dict[str, Any] = io.load_config(ns.config) if ns.config else {}
    for key in schema:
        v = getattr(ns, key, None)
        if v is not None:
            raw[key] = v
    values = io.validate_config(raw, schema)
    missing = [k for k, v in values.items() if v is _REQUIRED]
    if missing:
        raise ConfigError(f"missing required parameter(s): {', '.join(missing)}")
    if "seed" in values:
        values["seed"] = io.resolve_seed(values["seed"])
    return values


# ----------------------------------------------------------- construction


def make_spec(cfg: dict[str, Any]) -> CharnSpec:
    p = len(cfg["rho"]) if cfg["trend"] == "linear_ar" else 1
    return CharnSpec(p=max(p, 1), trend=cfg["trend"], rho=tuple(cfg["rho"]), vol=cfg["vol"], theta=tuple(cfg["theta"]))


def make_noise(cfg: dict[str, Any], series=None, spec: CharnSpec | None = None, seg: Segmentation | None = None):
    kind = cfg["noise"]
    if kind == "gaussian":
        return GaussianNoise()
    if kind == "shifted_exponential":
        return ShiftedExponentialNoise(cfg["rate"], cfg["fisher_override"])
    if series is None:
        raise ConfigError("kernel noise needs observed data")
    seg = seg or Segmentation(series.n)
    gamma = fit_gamma0(series, seg, spec)
    return kde_fit(residuals(series, spec, gamma, seg), KdeConfig(bandwidth=cfg["kde_bandwidth"]))


def _vector(v, k1: int, name: str) -> np.ndarray:
    if v is None:
        return np.zeros(k1)
    if len(v) != k1:
        raise ConfigError(f"{name} needs {k1} values (one per segment)")
    return np.asarray(v, dtype=np.float64)


def _detection_config(cfg: dict[str, Any]) -> DetectionConfig:
    return DetectionConfig(
        m=cfg["m"],
        h=cfg["h"],
        zeta=cfg["zeta"],
        alpha=cfg["alpha"],
        K=cfg["k_max"],
        priors=tuple(cfg["priors"]) if cfg["priors"] else None,
        candidate_halfwidth=cfg["halfwidth"],
        known_k=cfg["known_k"],
        circular=cfg["circular"],
        reference=cfg["reference"],
    )


def _digest(path: str) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


# --------------------------------------------------------------- commands


def cmd_simulate(cfg):
    n = cfg["n"]
    seg = Segmentation(n, tuple(cfg["breaks"]))
    k1 = seg.k + 1
    spec = make_spec(cfg)
    shift = MeanShiftParams(_vector(cfg["gamma0"], k1, "gamma0"), _vector(cfg["beta"], k1, "beta"))
    x = simulate(spec, seg, shift, make_noise(cfg), seed=cfg["seed"], burn_in=cfg["burn_in"])
    io.save_csv(x, cfg["output"])
    return {"n": n, "series_file": cfg["output"], "sha256": _digest(cfg["output"]),
            "mean": float(x.values.mean()), "std": float(x.values.std())}


def cmd_test(cfg):
    x = io.load_csv(cfg["input"])
    seg = Segmentation(x.n, tuple(cfg["breaks"]))
    spec = make_spec(cfg)
    noise = make_noise(cfg, x, spec)
    gamma0 = fit_gamma0(x, Segmentation(x.n), spec)[[0] * (seg.k + 1)] if cfg["gamma0"] is None \
        else _vector(cfg["gamma0"], seg.k + 1, "gamma0")
    beta = estimate_beta(x, seg, spec=spec) if cfg["beta"] is None else _vector(cfg["beta"], seg.k + 1, "beta")
    out = test_statistic(x, spec, gamma0, beta, seg, noise, cfg["alpha"])
    return {"input_sha256": _digest(cfg["input"]), "gamma0": gamma0, "beta": beta,
            "delta_n": out.delta_n, "varpi_hat": out.varpi_hat, "t_n": out.t_n,
            "z_alpha": z_alpha(cfg["alpha"]), "reject": out.reject}


def cmd_power_surface(cfg):
    x = io.load_csv(cfg["input"])
    spec = make_spec(cfg)
    noise = make_noise(cfg, x, spec)
    grids = [_expand_range(g) for g in cfg["grids"].split(";")]
    surf = power_surface(x, spec, grid_candidates(*grids), noise, cfg["alpha"], reference=cfg["reference"])
    k = len(grids)
    rows = [[*key, vp, p] for key, vp, p in surf.rows()]
    io.write_table(cfg["table"], [f"t{j + 1}" for j in range(k)] + ["varpi_hat", "power"], rows)
    best = surf.argmax() if len(surf) else None
    return {"input_sha256": _digest(cfg["input"]), "table": cfg["table"], "candidates": len(surf),
            "errors": len(surf.errors), "argmax": best, "max_power": surf[best].power if best else None}


def cmd_detect(cfg):
    x = io.load_csv(cfg["input"])
    spec = make_spec(cfg)
    noise = make_noise(cfg, x, spec)
    dc = _detection_config(cfg)
    out: dict[str, Any] = {"input_sha256": _digest(cfg["input"]), "strategy": cfg["strategy"]}
    if cfg["strategy"] == "s1":
        t1, power, _ = s1_scan(x, spec, noise, dc)
        out.update(change=detect_s1(x, spec, noise, dc), max_power=float(power.max()),
                   argmax=int(t1[int(np.argmax(power))]))
        if cfg["table"]:
            io.write_table(cfg["table"], ["t1", "power"], [[int(t), float(p)] for t, p in zip(t1, power)])
        return out
    res = (detect_s2 if cfg["strategy"] == "s2" else detect_s3)(x, spec, noise, dc)
    if cfg["table"]:
        width = max((len(c) for c, _ in res.trace), default=1)
        io.write_table(cfg["table"], [f"t{j + 1}" for j in range(width)] + ["power"],
                       [[*c, *([""] * (width - len(c))), p] for c, p in res.trace])
    out.update(k_hat=res.k_hat, t_hat=list(res.t_hat), beta_hat=list(res.beta_hat),
               max_power=res.max_power, evaluations=len(res.trace), notes=res.notes)
    return out


def _scenario(cfg) -> Scenario:
    seg = Segmentation(cfg["n"], tuple(cfg["breaks"]))
    k1 = seg.k + 1
    method = cfg["method"].upper()
    det = None
    if method in ("S1", "S2", "S3"):
        det = _detection_config(cfg)
    return Scenario(
        spec=make_spec(cfg),
        seg=seg,
        gamma0=tuple(_vector(cfg["gamma0"], k1, "gamma0")),
        beta=tuple(_vector(cfg["beta"], k1, "beta")),
        noise=make_noise(cfg),
        reps=cfg["reps"],
        master_seed=cfg["seed"],
        method=method,
        test_beta=None if cfg["test_beta"] is None else tuple(_vector(cfg["test_beta"], k1, "test_beta")),
        detection=det,
        burn_in=cfg["burn_in"],
    )


def cmd_mc(cfg, workers: int = 1):
    sc = _scenario(cfg)
    if cfg["kind"] == "rate":
        r = empirical_size_power(sc, cfg["alpha"], workers)
        io.write_table(cfg["table"], ["method", "reps", "rejections", "rate", "ci_low", "ci_high"],
                       [[r.method, r.reps, r.rejections, r.rate, r.ci_low, r.ci_high]])
        return r.as_dict()
    if cfg["kind"] == "lan":
        s = lan_diagnostic(sc, workers)
        d = s.as_dict()
        io.write_table(cfg["table"], ["quantity", "value"], [[k, float(v)] for k, v in d.items()])
        return d
    s = location_estimate_mean(sc, workers)
    io.write_table(cfg["table"], ["break", "truth", "mean", "mode", "hit_rate", "mean_abs_error"],
                   [[j + 1, s.truth[j], s.mean[j], s.mode[j], s.hit_rate[j], s.mean_abs_error[j]]
                    for j in range(len(s.truth))])
    return s.as_dict()


def cmd_detrend(cfg):
    x = io.load_csv(cfg["input"])
    resid, trend = io.detrend_ma(x, cfg["order"], cfg["endpoints"])
    io.save_csv(resid, cfg["output"])
    if cfg["trend_output"]:
        io.save_csv(trend, cfg["trend_output"])
    return {"input_sha256": _digest(cfg["input"]), "n": resid.n, "residual_file": cfg["output"],
            "residual_mean": float(resid.values.mean())}


COMMANDS = {
    "simulate": cmd_simulate,
    "test": cmd_test,
    "power-surface": cmd_power_surface,
    "detect": cmd_detect,
    "mc": cmd_mc,
    "detrend": cmd_detrend,
}


def run_command(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    started = time.perf_counter()
    try:
        cfg = resolve(ns.command, ns)
        fn = COMMANDS[ns.command]
        outputs = fn(cfg, ns.workers) if ns.command == "mc" else fn(cfg)
        timing = {"seconds": time.perf_counter() - started} if ns.timing else None
        io.write_result(cfg["result"], ns.command, cfg, outputs, timing)
    except (ConfigError, ParseError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"charnbreak {ns.command}: configuration error: {exc}", file=sys.stderr)
        return 2
    except (CharnError, ArithmeticError, ValueError) as exc:
        print(f"charnbreak {ns.command}: computation error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
