"""Command-line pipeline: simulate, sample, reconstruct, analyze, sweep.

Exit codes: 0 success, 2 input contract violation (including refusing to
overwrite artifacts without ``--force``), 3 unheraldable configuration,
4 numerical failure or failed internal check. Log events are single-line
JSON on stderr; results only ever go to files in ``--out``.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ContractError, DomainError, NumericalError, UnheraldableError
from .fock import FockState, fidelity, from_json
from .gps import GpsConfig, HeraldedState, analytic_target, build_input, extract_s0, herald_ideal, herald_realistic
from .homodyne import DEFAULT_PHASES, read_dataset, sample
from .phase_space import (
    GridAxis,
    fringe_contrast,
    marginal,
    negativity_metrics,
    phase_averaged_marginal,
    wigner,
)
from .tomography import bin_dataset, build_povm, mle_reconstruct

log = logging.getLogger("gpslab")

EXIT_OK = 0
EXIT_CONTRACT = 2
EXIT_UNHERALDABLE = 3
EXIT_NUMERICAL = 4

DEFAULT_CONFIG = {
    "gps": {k: v for k, v in GpsConfig().to_dict().items() if k not in ("r1", "r2")},
    "herald": {"model": "click"},
    "homodyne": {"phases": list(DEFAULT_PHASES), "samples_per_phase": 20000, "eta_hd": 1.0},
    "tomography": {
        "dim": 15,
        "bin_edges": {"min": -6.0, "max": 6.0, "bins": 120},
        "eta": 1.0,
        "max_iter": 2000,
        "tol": 1e-9,
    },
    "output": {
        "wigner_axis": {"min": -7.0, "max": 7.0, "n": 281},
        "marginal_axis": {"min": -8.0, "max": 8.0, "n": 1601},
        "cut_theta": 0.0,
    },
    "seed": 0,
}


class CliFailure(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


class _JsonFormatter(logging.Formatter):
    def format(self, record):
        event = {"level": record.levelname.lower(), "event": record.getMessage()}
        event.update(getattr(record, "fields", {}))
        return json.dumps(event, default=str)


def _log(msg, **fields):
    log.info(msg, extra={"fields": fields})


# ---------------------------------------------------------------------------
# Configuration


def _merge(base, override, path=""):
    for key, val in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ContractError(f"unknown config key '{where}'", field=where)
        if isinstance(base[key], dict) and key != "gps":
            if not isinstance(val, dict):
                raise ContractError(f"'{where}' must be an object", field=where)
            _merge(base[key], val, where + ".")
        elif key == "gps":
            if not isinstance(val, dict):
                raise ContractError("'gps' must be an object", field="gps")
            base[key] = dict(val)
        else:
            base[key] = val


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _gps_defaults():
    data = GpsConfig().to_dict()
    data.pop("r1")
    data.pop("r2")
    return data


def load_config(path=None, overrides=(), seed=None):
    """Defaults <- config file <- ``--set`` overrides <- ``--seed``."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ContractError(f"config file {path} not found", field="config") from None
        except json.JSONDecodeError as exc:
            raise ContractError(f"config is not valid JSON: {exc}", field="config") from None
        if not isinstance(doc, dict):
            raise ContractError("config must be a JSON object", field="config")
        _merge(cfg, doc)
        cfg["gps"] = {**_gps_defaults(), **cfg["gps"]}
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ContractError(f"--set expects key=value, got '{item}'", field=item)
        *parents, leaf = key.strip().split(".")
        node = cfg
        for part in parents:
            if not isinstance(node, dict) or part not in node:
                raise ContractError(f"unknown config key '{key}'", field=key)
            node = node[part]
        # unknown gps keys are left for GpsConfig to reject by name
        if not isinstance(node, dict) or (leaf not in node and node is not cfg["gps"]):
            raise ContractError(f"unknown config key '{key}'", field=key)
        node[leaf] = _parse_value(raw)
        if node is cfg["gps"] and leaf in ("gain1", "gain2"):
            node.pop("r1", None)
            node.pop("r2", None)
    if seed is not None:
        cfg["seed"] = seed
    if cfg["herald"].get("model") not in ("click", "ideal"):
        raise ContractError("herald.model must be 'click' or 'ideal'", field="herald.model")
    return cfg


def gps_config(cfg) -> GpsConfig:
    return GpsConfig.from_dict(cfg["gps"])


def _axis(spec, name) -> GridAxis:
    try:
        axis = GridAxis(float(spec["min"]), float(spec["max"]), int(spec["n"]))
    except (KeyError, TypeError, ValueError):
        raise ContractError(f"'{name}' needs numeric min, max, n", field=name) from None
    if axis.n < 3 or axis.max <= axis.min:
        raise ContractError(f"'{name}' is degenerate", field=name)
    return axis


def _bin_edges(cfg):
    spec = cfg["tomography"]["bin_edges"]
    if isinstance(spec, list):
        return np.asarray(spec, dtype=float)
    return np.linspace(float(spec["min"]), float(spec["max"]), int(spec["bins"]) + 1)


# ---------------------------------------------------------------------------
# Artifacts


class ArtifactWriter:
    def __init__(self, out_dir: Path, force: bool):
        self.out_dir = out_dir
        self.force = force
        self.written = []

    def claim(self, names):
        """Refuse to clobber existing artifacts unless forced."""
        if not self.force:
            clash = [n for n in names if (self.out_dir / n).exists()]
            if clash:
                raise ContractError(f"refusing to overwrite {clash[0]} (use --force)", field="out")
        self.out_dir.mkdir(parents=True, exist_ok=True)

    def write(self, name, text):
        path = self.out_dir / name
        path.write_text(text)
        self.written.append(name)
        _log("artifact_written", path=str(path))
        return path

    def manifest(self, command, config_path, seed, started):
        arts = []
        for name in self.written:
            data = (self.out_dir / name).read_bytes()
            arts.append({"path": name, "sha256": hashlib.sha256(data).hexdigest()})
        doc = {
            "config_path": None if config_path is None else str(config_path),
            "command": command,
            "seed": seed,
            "output_dir": str(self.out_dir),
            "artifacts": arts,
            "wall_time": time.time() - started,
            "version": __version__,
        }
        (self.out_dir / f"manifest_{command}.json").write_text(json.dumps(doc, indent=2))
        for art in arts:
            data = (self.out_dir / art["path"]).read_bytes()
            if hashlib.sha256(data).hexdigest() != art["sha256"]:
                raise CliFailure(EXIT_NUMERICAL, f"artifact {art['path']} changed during run")
        return doc


def _read_state(path):
    try:
        text = Path(path).read_text()
    except FileNotFoundError:
        raise ContractError(f"input {path} not found", field="input") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ContractError(f"{path} is not valid JSON: {exc}", field="input") from None
    state = from_json(doc)
    rho = state.density() if isinstance(state, FockState) else state
    try:
        rho.check(herm_tol=1e-8, trace_tol=1e-6, psd_tol=1e-6)
    except DomainError as exc:
        raise ContractError(f"{path}: {exc}", field="re") from None
    return rho, doc


def _herald(cfg):
    gcfg = gps_config(cfg)
    k = gcfg.herald_n
    if cfg["herald"]["model"] == "ideal":
        state = build_input(gcfg)
        ket, prob = herald_ideal(state, k)
        heralded = HeraldedState(ket.density(), prob, prob * gcfg.mode_rate)
    else:
        heralded = herald_realistic(gcfg, k)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fit = extract_s0(heralded.state, k) if k >= 1 else None
    return gcfg, HeraldedState(heralded.state, heralded.herald_prob, heralded.event_rate_cps, fit)


def _state_reports(rho, cfg, writer, prefix=""):
    out = cfg["output"]
    grid = wigner(rho, _axis(out["wigner_axis"], "output.wigner_axis"))
    if abs(grid.total() - 1.0) > 1e-3:
        raise CliFailure(EXIT_NUMERICAL, f"Wigner normalization {grid.total():.6f} off by > 1e-3")
    metrics = negativity_metrics(grid, float(out["cut_theta"]))
    writer.write(f"{prefix}wigner.csv", grid.to_csv())
    writer.write(f"{prefix}wigner.json", grid.to_json())
    xs = _axis(out["marginal_axis"], "output.marginal_axis").points
    for theta in cfg["homodyne"]["phases"]:
        dist = marginal(rho, float(theta), xs)
        if abs(dist.integral() - 1.0) > 1e-6:
            raise CliFailure(EXIT_NUMERICAL, f"marginal at {theta} deg not normalized")
        writer.write(f"{prefix}marginal_theta{int(round(float(theta))):03d}.csv", dist.to_csv())
    return grid, metrics


def _json(obj):
    return json.dumps(obj, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# Commands


def cmd_simulate(cfg, writer):
    gcfg, heralded = _herald(cfg)
    rho = heralded.state
    rho.check()
    names = ["heralded_state.json", "wigner.csv", "wigner.json", "negativity.json", "s0_fit.json"]
    names += [f"marginal_theta{int(round(float(t))):03d}.csv" for t in cfg["homodyne"]["phases"]]
    writer.claim(names)
    writer.write("heralded_state.json", heralded.to_json())
    _, metrics = _state_reports(rho, cfg, writer)
    writer.write("negativity.json", _json({"cut_theta": cfg["output"]["cut_theta"], **metrics.as_dict()}))
    fit = heralded.s0_fit
    writer.write(
        "s0_fit.json",
        _json({
            "herald_n": gcfg.herald_n,
            "reflectivity": gcfg.reflectivity,
            "herald_model": cfg["herald"]["model"],
            "herald_prob": heralded.herald_prob,
            "event_rate_cps": heralded.event_rate_cps,
            "s0_fit": None if fit is None else fit.as_dict(),
        }),
    )
    _log("simulated", s0=None if fit is None else fit.s0, herald_prob=heralded.herald_prob)


def cmd_sample(cfg, writer, input_path):
    rho, _ = _read_state(input_path)
    hd = cfg["homodyne"]
    writer.claim(["dataset.csv"])
    ds = sample(rho, tuple(float(t) for t in hd["phases"]), int(hd["samples_per_phase"]), float(hd["eta_hd"]), int(cfg["seed"]))
    if not np.all(np.isfinite(ds.values)):
        raise CliFailure(EXIT_NUMERICAL, "non-finite samples")
    writer.write("dataset.csv", ds.to_csv())
    _log("sampled", records=len(ds))


def cmd_reconstruct(cfg, writer, input_path):
    try:
        text = Path(input_path).read_text()
    except FileNotFoundError:
        raise ContractError(f"input {input_path} not found", field="input") from None
    ds = read_dataset(text)
    if len(ds) == 0:
        raise ContractError("dataset has no records", field="x")
    tomo = cfg["tomography"]
    edges = _bin_edges(cfg)
    binned = bin_dataset(ds, edges)
    povm = build_povm(binned.phases, edges, int(tomo["dim"]), float(tomo["eta"]))
    writer.claim(["mle_result.json"])
    result = mle_reconstruct(binned, povm, int(tomo["max_iter"]), float(tomo["tol"]))
    result.rho.check()
    steps = np.diff(result.loglik_trace)
    if steps.size and steps.min() < -1e-9:
        raise CliFailure(EXIT_NUMERICAL, f"log-likelihood decreased by {-steps.min():.3g}")
    writer.write("mle_result.json", result.to_json())
    _log("reconstructed", iterations=result.iterations, converged=result.converged)


def cmd_analyze(cfg, writer, input_path):
    rho, _ = _read_state(input_path)
    gcfg = gps_config(cfg)
    n = gcfg.herald_n
    writer.claim(["analysis.json"])
    grid = wigner(rho, _axis(cfg["output"]["wigner_axis"], "output.wigner_axis"))
    metrics = negativity_metrics(grid, float(cfg["output"]["cut_theta"]))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fit = extract_s0(rho, n) if n >= 1 else None
    target_fid = None
    if fit is not None:
        target = analytic_target(n, fit.s0, rho.dim, fit.scale)
        target_fid = fidelity(target, rho)
    xs = _axis(cfg["output"]["marginal_axis"], "output.marginal_axis").points
    table = []
    for theta in cfg["homodyne"]["phases"]:
        dist = marginal(rho, float(theta), xs)
        table.append({
            "theta_deg": float(theta),
            "fringe_contrast": fringe_contrast(rho, float(theta), xs),
            "variance": dist.variance(),
        })
    doc = {
        "herald_n": n,
        "s0_fit": None if fit is None else fit.as_dict(),
        "fidelity_vs_analytic_target": target_fid,
        "negativity": {"cut_theta": cfg["output"]["cut_theta"], **metrics.as_dict()},
        "wigner_total": grid.total(),
        "phase_averaged_variance": phase_averaged_marginal(rho, xs).variance(),
        "fringe_table": table,
    }
    writer.write("analysis.json", _json(doc))
    _log("analyzed", dip_count=metrics.dip_count)


SWEEP_COLUMNS = ("R", "s0", "herald_prob", "event_rate_cps", "min_wigner", "dip_count", "status")


def sweep_rows(cfg, r_list):
    rows = []
    for r in sorted(float(v) for v in r_list):
        sub = copy.deepcopy(cfg)
        sub["gps"]["reflectivity"] = r
        try:
            _, heralded = _herald(sub)
            grid = wigner(heralded.state, _axis(cfg["output"]["wigner_axis"], "output.wigner_axis"))
            metrics = negativity_metrics(grid, float(cfg["output"]["cut_theta"]))
            s0 = heralded.s0_fit.s0 if heralded.s0_fit else float("nan")
            rows.append((r, s0, heralded.herald_prob, heralded.event_rate_cps, metrics.min_value, metrics.dip_count, "ok"))
        except UnheraldableError:
            rows.append((r, float("nan"), 0.0, 0.0, float("nan"), 0, "unheraldable"))
    return rows


def cmd_sweep(cfg, writer, r_list):
    if any(not 0.0 < r < 1.0 for r in r_list):
        raise ContractError("every R must lie in (0, 1)", field="R")
    writer.claim(["sweep.csv"])
    lines = [",".join(SWEEP_COLUMNS)]
    for row in sweep_rows(cfg, r_list):
        lines.append(",".join(repr(float(v)) if isinstance(v, float) else str(v) for v in row))
    writer.write("sweep.csv", "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config with gps/herald/homodyne/tomography/output sections")
    common.add_argument("--seed", type=int, help="RNG seed (overrides the config)")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry, e.g. gps.reflectivity=0.3 (repeatable)")
    common.add_argument("--force", action="store_true", help="overwrite existing artifacts")

    parser = argparse.ArgumentParser(prog="gpslab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="herald a state and write its plot data")
    for name, helptext in (
        ("sample", "draw homodyne data from a state JSON"),
        ("reconstruct", "MLE reconstruction from a dataset CSV"),
        ("analyze", "fit, negativity and fringe report for a state JSON"),
    ):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--input", type=Path, required=True)
    p = sub.add_parser("sweep", parents=[common], help="scan the beam-splitter reflectivity")
    p.add_argument("--R", dest="r_list", default="0.5,0.4,0.3", help="comma-separated reflectivities")
    return parser


def _setup_logging():
    if not any(getattr(h, "_gpslab", False) for h in log.handlers):
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(_JsonFormatter())
        handler._gpslab = True
        log.addHandler(handler)
    log.setLevel(logging.INFO)
    log.propagate = False


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    started = time.time()
    try:
        cfg = load_config(args.config, args.overrides, args.seed)
        gps_config(cfg)
        writer = ArtifactWriter(args.out, args.force)
        if args.command == "simulate":
            cmd_simulate(cfg, writer)
        elif args.command == "sample":
            cmd_sample(cfg, writer, args.input)
        elif args.command == "reconstruct":
            cmd_reconstruct(cfg, writer, args.input)
        elif args.command == "analyze":
            cmd_analyze(cfg, writer, args.input)
        else:
            try:
                r_list = [float(v) for v in args.r_list.split(",") if v.strip()]
            except ValueError:
                raise ContractError("--R must be comma-separated numbers", field="R") from None
            cmd_sweep(cfg, writer, r_list)
        writer.manifest(args.command, args.config, cfg["seed"], started)
    except ContractError as exc:
        log.error("input_contract", extra={"fields": {"field": exc.field, "detail": str(exc)}})
        return EXIT_CONTRACT
    except UnheraldableError as exc:
        log.error("unheraldable", extra={"fields": {"probability": exc.probability, "detail": str(exc)}})
        return EXIT_UNHERALDABLE
    except (NumericalError, DomainError, FloatingPointError) as exc:
        log.error("numerical_failure", extra={"fields": {"detail": str(exc)}})
        return EXIT_NUMERICAL
    except CliFailure as exc:
        log.error("check_failed", extra={"fields": {"detail": str(exc)}})
        return exc.code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
