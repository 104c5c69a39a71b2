"""Command-line experiment runner.

Every subcommand takes an optional JSON config (``--config``); flags override
file values.  Outputs go to ``output.directory`` together with a
``manifest.json`` that is itself a valid config, so re-running a manifest
reproduces the outputs byte for byte.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
import argparse
from concurrent.futures import ThreadPoolExecutor
import copy
import csv
import json
import math
import os
import sys
import tempfile

import jsonschema
import numpy as np

from . import __version__, rates, se
from ._rng import stream
from .denoiser import make_prior, mutual_information, phi_se
from .spectrum import (
    SystemDims,
    assemble_matrix,
    db_to_linear,
    identity_spectrum,
    make_geometric_singulars,
    spectrum_of,
    write_matrix,
    write_spectrum_csv,
)

THREADS_ENV = "OAMPLAB_THREADS"
LN2 = math.log(2.0)

DEFAULTS = {
    "config_version": 1,
    "system": {"n": 500, "m": None, "beta": 1.0, "kappa": 10.0, "identity": False, "snr_db": 0.0,
               "snr_db_grid": None},
    "prior": {"kind": "discrete", "constellation": "qpsk"},
    "algorithm": {"max_iters": 50, "stop_eps": 1e-6, "variance_mode": "estimated", "clamp_policy": "clamp"},
    "code": {"preset": None, "n_bits": 10000, "decoder_iters": 1, "curve_iters": 200,
             "rho_grid": None},
    "montecarlo": {"trials": 20, "max_trials": 1000, "seed": 0, "target_errors": 100},
    "output": {"directory": "out", "formats": ["csv", "json"]},
}

_num = {"type": "number"}
_opt_num = {"type": ["number", "null"]}
_grid = {"type": ["array", "null"], "items": _num, "minItems": 1}
CONFIG_SCHEMA = {
    "type": "object",
    "required": ["config_version"],
    "additionalProperties": False,
    "properties": {
        "config_version": {"const": 1},
        "subcommand": {"type": "string"},
        "version": {"type": "string"},
        "system": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n": {"type": "integer", "minimum": 1},
                "m": {"type": ["integer", "null"], "minimum": 1},
                "beta": {"type": "number", "exclusiveMinimum": 0},
                "kappa": {"type": "number", "minimum": 1},
                "identity": {"type": "boolean"},
                "snr_db": _num,
                "snr_db_grid": _grid,
            },
        },
        "prior": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["gaussian", "discrete"]},
                "constellation": {"enum": ["bpsk", "qpsk", "8psk", "16qam", None]},
            },
        },
        "algorithm": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "max_iters": {"type": "integer", "minimum": 1},
                "stop_eps": {"type": "number", "exclusiveMinimum": 0},
                "variance_mode": {"enum": ["estimated", "genie", "se_predicted"]},
                "clamp_policy": {"enum": ["clamp", "abort"]},
            },
        },
        "code": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "preset": {"type": ["string", "null"]},
                "n_bits": {"type": "integer", "minimum": 2},
                "decoder_iters": {"type": "integer", "minimum": 1},
                "curve_iters": {"type": "integer", "minimum": 1},
                "rho_grid": _grid,
            },
        },
        "montecarlo": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "trials": {"type": "integer", "minimum": 1},
                "max_trials": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
                "target_errors": {"type": "integer", "minimum": 0},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "directory": {"type": "string"},
                "formats": {"type": "array", "items": {"enum": ["csv", "json"]}},
            },
        },
    },
}


class ConfigError(ValueError):
    pass


def _merge(base, override):
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def validate_config(cfg):
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.path))
    if errors:
        msgs = [f"{'/'.join(str(p) for p in e.path) or '<root>'}: {e.message}" for e in errors]
        raise ConfigError("invalid config:\n  " + "\n  ".join(msgs))


def _parse_grid(text):
    """``"a:b:step"`` (inclusive) or a comma-separated list."""
    if text is None:
        return None
    if ":" in text:
        a, b, step = (float(t) for t in text.split(":"))
        if step <= 0:
            raise ConfigError("grid step must be positive")
        k = int(math.floor((b - a) / step + 1e-9))
        return [round(a + i * step, 12) for i in range(k + 1)]
    return [float(t) for t in text.split(",") if t.strip()]


def _flag_overrides(args):
    """Map parsed flags onto config sections (only flags that were given)."""
    table = {
        "n": ("system", "n"), "m": ("system", "m"), "beta": ("system", "beta"), "kappa": ("system", "kappa"),
        "snr_db": ("system", "snr_db"), "identity": ("system", "identity"),
        "max_iters": ("algorithm", "max_iters"), "stop_eps": ("algorithm", "stop_eps"),
        "variance_mode": ("algorithm", "variance_mode"), "clamp_policy": ("algorithm", "clamp_policy"),
        "code_preset": ("code", "preset"), "n_bits": ("code", "n_bits"), "decoder_iters": ("code", "decoder_iters"),
        "curve_iters": ("code", "curve_iters"),
        "trials": ("montecarlo", "trials"), "max_trials": ("montecarlo", "max_trials"),
        "seed": ("montecarlo", "seed"), "target_errors": ("montecarlo", "target_errors"),
        "out": ("output", "directory"),
    }
    over = {}
    for attr, (sec, key) in table.items():
        val = getattr(args, attr, None)
        if val is not None:
            over.setdefault(sec, {})[key] = val
    if getattr(args, "prior", None) is not None:
        kind = "gaussian" if args.prior == "gaussian" else "discrete"
        over["prior"] = {"kind": kind, "constellation": None if kind == "gaussian" else args.prior}
    if getattr(args, "snr_db_grid", None) is not None:
        over.setdefault("system", {})["snr_db_grid"] = _parse_grid(args.snr_db_grid)
    if getattr(args, "rho_grid", None) is not None:
        over.setdefault("code", {})["rho_grid"] = _parse_grid(args.rho_grid)
    return over


def resolve_config(args):
    cfg = copy.deepcopy(DEFAULTS)
    if args.config:
        try:
            with open(args.config) as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        validate_config(file_cfg)
        cfg = _merge(cfg, file_cfg)
    cfg = _merge(cfg, _flag_overrides(args))
    cfg["subcommand"] = args.command
    cfg["version"] = f"oamplab {__version__}"
    validate_config(cfg)
    return cfg


# -- building blocks from a config -----------------------------------------------


def system_dims(cfg):
    s = cfg["system"]
    n = s["n"]
    m = s["m"] if s["m"] is not None else max(1, int(round(n / s["beta"])))
    return SystemDims(n, m)


def prior_of(cfg):
    p = cfg["prior"]
    return make_prior("gaussian" if p["kind"] == "gaussian" else p["constellation"] or "qpsk")


def spectrum_for(cfg, snr_db=None):
    snr = float(db_to_linear(cfg["system"]["snr_db"] if snr_db is None else snr_db))
    if cfg["system"]["identity"]:
        return identity_spectrum(cfg["system"]["n"], snr)
    dims = system_dims(cfg)
    return spectrum_of(make_geometric_singulars(dims, cfg["system"]["kappa"]), snr, dims)


def snr_grid(cfg):
    g = cfg["system"]["snr_db_grid"]
    return g if g else [cfg["system"]["snr_db"]]


def thread_count(args):
    if getattr(args, "threads", None):
        return max(1, args.threads)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return 1


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


class OutputSet:
    """Collects output files in a temp area; moved into place only on success."""

    def __init__(self, directory):
        self.directory = directory
        os.makedirs(directory, exist_ok=True)
        self._tmp = tempfile.mkdtemp(prefix=".partial-", dir=directory)
        self.files = []

    def path(self, name):
        self.files.append(name)
        return os.path.join(self._tmp, name)

    def csv(self, name, header, rows):
        with open(self.path(name), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])

    def json(self, name, obj):
        with open(self.path(name), "w") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")

    def commit(self):
        for name in self.files:
            os.replace(os.path.join(self._tmp, name), os.path.join(self.directory, name))
        os.rmdir(self._tmp)

    def abort(self):
        for name in os.listdir(self._tmp):
            os.remove(os.path.join(self._tmp, name))
        os.rmdir(self._tmp)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o)}")


# -- subcommands --------------------------------------------------------------------


def cmd_se(cfg, out, pool):
    sp = spectrum_for(cfg)
    prior = prior_of(cfg)
    traj = se.se_trajectory(sp, prior, cfg["algorithm"]["max_iters"], cfg["algorithm"]["stop_eps"])
    fp = se.find_fixed_point(sp, prior)
    out.csv("se_trajectory.csv", ["t", "rho", "v", "v_perp"],
            [(t, s.rho, s.v, s.v_perp) for t, s in enumerate(traj.steps)])
    result = {"rho_star": fp.rho_star, "v_star": fp.v_star, "v_perp_star": fp.v_perp_star, "unique": fp.unique,
              "iterations": len(traj.steps), "converged": traj.converged,
              "all_roots": [list(r) for r in fp.all_roots]}
    out.json("fixed_point.json", result)
    return result


def cmd_capacity(cfg, out, pool):
    sp = spectrum_for(cfg)
    prior = prior_of(cfg)
    fp = se.find_fixed_point(sp, prior)
    result = {"snr_db": cfg["system"]["snr_db"], "unique": fp.unique,
              "rho_star": fp.rho_star, "v_star": fp.v_star,
              "c_gauss_bits": rates.gaussian_capacity(sp) / LN2,
              "r_cas_bits": rates.cascade_rate(sp, prior, fp) / LN2}
    if fp.unique:
        rep = rates.area_report(sp, prior, fp)
        result["c_luis_bits"] = rep.a_adgo / LN2
        result["c_luis_rtransform_bits"] = rates.capacity_rtransform(sp, prior) / LN2
        result["areas_bits"] = {k: v for k, v in rep.bits().items() if k.startswith("a_")}
        result["identity_residuals"] = rep.identity_residuals()
    else:
        result["c_luis_bits"] = None
        result["candidates_bits"] = [rates._capacity_at(sp, prior, r, v) / LN2 for r, v in fp.all_roots]
    out.json("capacity.json", result)
    return result


def cmd_rates(cfg, out, pool):
    grid = snr_grid(cfg)
    prior = prior_of(cfg)
    rows = rates.rate_curve(spectrum_for(cfg), prior, grid, executor=pool)
    table = []
    for snr_db, r in zip(grid, rows):
        cap = r.capacity / LN2 if r.unique else ";".join(repr(c / LN2) for c, _ in r.candidates)
        table.append((snr_db, cap, r.cascade / LN2, r.gaussian / LN2, r.unique))
    out.csv("rates.csv", ["snr_db", "c_luis_bits", "r_cas_bits", "c_gauss_bits", "unique"], table)
    return {"rows": len(table)}


def cmd_phi_curve(cfg, out, pool, rho_min=1e-3, rho_max=1e2, points=60):
    prior = prior_of(cfg)
    grid = cfg["code"]["rho_grid"] or np.logspace(math.log10(rho_min), math.log10(rho_max), points).tolist()

    def row(r):
        mi = mutual_information(prior, r)
        return (r, phi_se(prior, r), mi, mi / LN2)

    rows = list(pool.map(row, grid)) if pool else [row(r) for r in grid]
    out.csv("phi_curve.csv", ["rho", "phi", "mi_nats", "mi_bits"], rows)
    return {"points": len(rows)}


def _code_for(cfg, tag="code"):
    from .ldpc import build_code, preset

    name = cfg["code"]["preset"] or "regular-3-6"
    return build_code(preset(name), cfg["code"]["n_bits"], stream(cfg["montecarlo"]["seed"], 0, tag))


def cmd_phi_c(cfg, out, pool):
    from .ldpc import trace_decoder_curve
    from .ldpc.curve import default_curve_grid

    code = _code_for(cfg)
    prior = prior_of(cfg)
    grid = cfg["code"]["rho_grid"] or default_curve_grid(10.0).tolist()
    mc = cfg["montecarlo"]

    def one(i):
        c = trace_decoder_curve(code, prior, [grid[i]], trials=mc["trials"], seed=mc["seed"],
                                max_iters=cfg["code"]["curve_iters"], point_offset=i)
        return (c.rho[0], c.phi[0], c.stderr[0])

    idx = range(len(grid))
    rows = list(pool.map(one, idx)) if pool else [one(i) for i in idx]
    out.csv("phi_c.csv", ["rho", "phi_c", "stderr"], rows)
    return {"points": len(rows), "code_rate": code.design_rate}


def _oamp_config(cfg):
    from .oamp import OampConfig

    a = cfg["algorithm"]
    return OampConfig(max_iters=a["max_iters"], stop_eps=a["stop_eps"], variance_mode=a["variance_mode"],
                      clamp_policy=a["clamp_policy"], seed=cfg["montecarlo"]["seed"],
                      decoder_iters=cfg["code"]["decoder_iters"])


def _matrix_for(cfg, rng):
    dims = system_dims(cfg) if not cfg["system"]["identity"] else SystemDims(cfg["system"]["n"], cfg["system"]["n"])
    if cfg["system"]["identity"]:
        return assemble_matrix(np.ones(dims.n), dims, deterministic=True)
    return assemble_matrix(make_geometric_singulars(dims, cfg["system"]["kappa"]), dims, rng)


def cmd_oamp_mc(cfg, out, pool):
    from .oamp import simulate_uncoded_trial

    prior = prior_of(cfg)
    snr = float(db_to_linear(cfg["system"]["snr_db"]))
    ocfg = _oamp_config(cfg)
    seed = cfg["montecarlo"]["seed"]

    def trial(k):
        rng = stream(seed, k, "oamp-mc")
        traj, _, _ = simulate_uncoded_trial(_matrix_for(cfg, rng), prior, snr, ocfg, rng)
        return traj

    ks = range(cfg["montecarlo"]["trials"])
    trajs = list(pool.map(trial, ks)) if pool else [trial(k) for k in ks]
    cols = ["rho_t", "v_t", "v_perp_t", "empirical_mse", "orth_stat", "ser_or_ber"]
    rows = []
    for t in range(max(len(tr.records) for tr in trajs)):
        # a converged trial keeps contributing its final state
        recs = [tr.records[min(t, len(tr.records) - 1)] for tr in trajs]
        rows.append([t] + [math.fsum(getattr(r, c) for r in recs) / len(recs) for c in cols])
    out.csv("oamp_mc.csv", ["t", "rho", "v", "v_perp", "emp_mse", "orth_stat", "ber"], rows)
    return {"trials": len(trajs), "iterations": len(rows)}


def coded_trial(cfg, code, snr, k, prior):
    """One coded OAMP transmission; returns ``(bit_errors, frame_error, iterations)``."""
    from .ldpc.mapping import bits_per_symbol, bits_to_symbols
    from .oamp import run_oamp_coded

    seed = cfg["montecarlo"]["seed"]
    rng = stream(seed, k, "ldpc-ber")
    n = cfg["system"]["n"]
    bps = bits_per_symbol(prior)
    if code.n_bits % (bps * n):
        raise ConfigError(f"code length {code.n_bits} is not a multiple of {bps} x n={n}")
    blocks = code.n_bits // (bps * n)
    bits = code.random_codewords(1, rng)[0]
    x = bits_to_symbols(bits, prior).reshape(blocks, n)
    mats = [_matrix_for(cfg, rng) for _ in range(blocks)]
    m = mats[0].dims.m
    noise = (rng.standard_normal((blocks, m)) + 1j * rng.standard_normal((blocks, m))) * math.sqrt(0.5 / snr)
    y = np.stack([a.assembled @ xb for a, xb in zip(mats, x)]) + noise
    traj = run_oamp_coded(mats, code, prior, y, snr, _oamp_config(cfg), true_bits=bits)
    ber = traj.records[-1].ser_or_ber
    errs = int(round(ber * code.n_bits))
    return errs, int(errs > 0), len(traj.records)


def cmd_ldpc_ber(cfg, out, pool):
    prior = prior_of(cfg)
    code = _code_for(cfg)
    mc = cfg["montecarlo"]
    width = getattr(pool, "_max_workers", 1) if pool else 1
    rows = []
    for snr_db in snr_grid(cfg):
        snr = float(db_to_linear(snr_db))
        bit_err = frames = frame_err = 0
        k = 0
        done = False
        while not done:
            ks = list(range(k, min(k + width, mc["max_trials"])))
            run = lambda j: coded_trial(cfg, code, snr, (j + 1) * 7919 + int(round(snr_db * 1000)), prior)
            results = list(pool.map(run, ks)) if pool else [run(j) for j in ks]
            # the stopping rule is applied in trial order so results do not depend on the pool width
            for e, fe, _ in results:
                bit_err += e
                frame_err += fe
                frames += 1
                if frames >= mc["trials"] and (bit_err >= mc["target_errors"] or frames >= mc["max_trials"]):
                    done = True
                    break
            k += len(ks)
            if k >= mc["max_trials"]:
                done = True
        rows.append((snr_db, bit_err / (frames * code.n_bits), frame_err / frames, frames))
    out.csv("ldpc_ber.csv", ["snr_db", "ber", "fer", "trials"], rows)
    return {"points": len(rows), "code_rate": code.design_rate}


def cmd_matgen(cfg, out, pool):
    rng = stream(cfg["montecarlo"]["seed"], 0, "matgen")
    a = _matrix_for(cfg, rng)
    snr = float(db_to_linear(cfg["system"]["snr_db"]))
    write_matrix(out.path("matrix.bin"), a)
    write_spectrum_csv(out.path("spectrum.csv"), spectrum_of(a, snr))
    return {"m": a.dims.m, "n": a.dims.n}


COMMANDS = {
    "se": (cmd_se, "state evolution trajectory and fixed point"),
    "capacity": (cmd_capacity, "constrained capacity and area report"),
    "rates": (cmd_rates, "capacity / cascade / Gaussian rate curves over an snr grid"),
    "phi-curve": (cmd_phi_curve, "MMSE transfer function and mutual information of a prior"),
    "phi-c": (cmd_phi_c, "Monte-Carlo decoder transfer curve of an LDPC code"),
    "oamp-mc": (cmd_oamp_mc, "uncoded OAMP Monte-Carlo trajectory"),
    "ldpc-ber": (cmd_ldpc_ber, "coded OAMP bit error rate"),
    "matgen": (cmd_matgen, "export a sensing matrix and its spectrum"),
}


def build_parser():
    p = argparse.ArgumentParser(prog="oamplab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"oamplab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", help="JSON config file (flags override it)")
        s.add_argument("--out", help="output directory")
        s.add_argument("--threads", type=int, help=f"worker threads (default ${THREADS_ENV} or 1)")
        s.add_argument("--n", type=int)
        s.add_argument("--m", type=int)
        s.add_argument("--beta", type=float)
        s.add_argument("--kappa", type=float)
        s.add_argument("--identity", action="store_const", const=True)
        s.add_argument("--snr-db", type=float, dest="snr_db")
        s.add_argument("--snr-db-grid", dest="snr_db_grid", help="start:stop:step or comma list")
        s.add_argument("--prior", choices=["gaussian", "bpsk", "qpsk", "8psk", "16qam"])
        s.add_argument("--max-iters", type=int, dest="max_iters")
        s.add_argument("--stop-eps", type=float, dest="stop_eps")
        s.add_argument("--variance-mode", dest="variance_mode", choices=["estimated", "genie", "se_predicted"])
        s.add_argument("--clamp-policy", dest="clamp_policy", choices=["clamp", "abort"])
        s.add_argument("--code", dest="code_preset")
        s.add_argument("--n-bits", type=int, dest="n_bits")
        s.add_argument("--decoder-iters", type=int, dest="decoder_iters")
        s.add_argument("--curve-iters", type=int, dest="curve_iters")
        s.add_argument("--rho-grid", dest="rho_grid", help="start:stop:step or comma list")
        s.add_argument("--trials", type=int)
        s.add_argument("--max-trials", type=int, dest="max_trials")
        s.add_argument("--seed", type=int)
        s.add_argument("--target-errors", type=int, dest="target_errors")
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        threads = thread_count(args)
    except ConfigError as exc:
        print(f"oamplab: {exc}", file=sys.stderr)
        return 2
    fn = COMMANDS[args.command][0]
    out = OutputSet(cfg["output"]["directory"])
    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        result = fn(cfg, out, pool)
        out.json("manifest.json", cfg)
        out.commit()
    except ConfigError as exc:
        out.abort()
        print(f"oamplab: {exc}", file=sys.stderr)
        return 2
    except (ArithmeticError, FloatingPointError, np.linalg.LinAlgError) as exc:
        out.abort()
        print(f"oamplab: numerical failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        out.abort()
        print(f"oamplab: {exc}", file=sys.stderr)
        return 2
    finally:
        if pool is not None:
            pool.shutdown()
    if "json" in cfg["output"]["formats"]:
        print(json.dumps(result, indent=2, sort_keys=True, default=_json_default))
    return 0


if __name__ == "__main__":
    sys.exit(main())
