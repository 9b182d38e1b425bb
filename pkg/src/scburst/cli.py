"""Command-line driver: ``scburst <command> [flags]``.

Every artifact starts with ``#`` metadata lines listing the command, all
parameters, the seed and the package version, so a run can be repeated from
its own output.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .de_density import (DensityControls, LLRGrid, avg_error_over_start_bms, biawgn_capacity,
                         max_burst_length_awgn, n0_for_capacity)
from .de_scalar import DEControls, avg_error_over_start, max_burst_length
from .ensemble import EnsembleParams, design_rate, sample_code, save_edgelist
from .errors import GraphSamplingError, ParameterError
from .peeling import SimConfig, floor_vs_sim_report, run_sweep
from .stopping_sets import error_floor_estimate, stopping_set_report

COMMANDS = ("sample", "de-bec", "de-awgn", "threshold", "threshold-awgn",
            "ss-stats", "floor", "simulate", "compare")

EXIT_OK, EXIT_IO, EXIT_PARAM, EXIT_STRICT = 0, 1, 2, 3

# flag name -> (type, default); None means "required by some commands"
_FLAGS = {
    "dv": (int, 3), "dc": (int, 6), "w": (int, 3), "L": (int, 100), "M": (int, None),
    "eps": (float, 0.0), "b": (str, None), "s": (float, None), "n0": (float, None),
    "capacity": (float, None), "delta": (float, 0.01), "stop_tol": (float, 1e-5),
    "success_tol": (float, 1e-6), "t_max": (int, 100_000), "bracket": (float, 0.005),
    "seed": (int, 0), "workers": (int, 1), "out": (str, None), "figure": (str, None),
    "w_list": (str, "3,4,5"), "eps_grid": (str, "0:0.5:0.01"), "cap_grid": (str, "0.1:0.4:0.1"),
    "n_codes": (int, 1000), "target_failures": (int, 400), "max_trials": (int, 10_000_000),
    "fixed_code": (bool, False), "starts": (str, "full"), "bin_width": (float, 0.1),
    "half_range": (float, 15.0), "margin": (int, 6), "checkpoint": (str, None),
    "strict": (bool, False),
}


class StrictFailure(Exception):
    pass


def parse_grid(text: str) -> list[float]:
    """``"a:b:step"`` (inclusive) or a comma-separated list."""
    text = text.strip()
    if not text:
        return []
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ParameterError(f"range {text!r} must be start:stop:step")
        a, b, step = map(float, parts)
        if step <= 0:
            raise ParameterError("grid step must be positive")
        n = int(np.floor((b - a) / step + 1e-9))
        return [round(a + k * step, 12) for k in range(n + 1)]
    return [float(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="scburst", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="flat key=value file; flags given on the command line win")
    ap.add_argument("--replay", help="earlier artifact whose metadata header gives the options")
    for name, (typ, _) in _FLAGS.items():
        flag = "--" + name.replace("_", "-")
        if typ is bool:
            ap.add_argument(flag, dest=name, action="store_const", const=True, default=None)
        else:
            ap.add_argument(flag, dest=name, type=typ, default=None)
    return ap


def _read_config(path) -> dict:
    text = Path(path).read_text()
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp.read_string("[run]\n" + text)
    return _parse_section(cp["run"])


def header_options(path) -> tuple[str, dict]:
    """Command and options recorded in the metadata of an earlier artifact."""
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        meta = json.loads(text)["metadata"]
        items = [(k.strip(), v) for k, v in meta.items()]
    else:
        items = [tuple(l[2:].split("=", 1)) for l in text.splitlines()
                 if l.startswith("# ") and "=" in l]
    items = dict(items)
    command = items.pop("command", None)
    lines = [f"{k}={v}" for k, v in items.items() if k in _FLAGS and v != "None"]
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp.read_string("[run]\n" + "\n".join(lines))
    return command, _parse_section(cp["run"])


def _parse_section(section) -> dict:
    out = {}
    for key, raw in section.items():
        key = key.replace("-", "_")
        if key not in _FLAGS:
            raise ParameterError(f"unknown config key {key!r}")
        typ = _FLAGS[key][0]
        if typ is bool:
            out[key] = raw.strip().lower() in ("1", "true", "yes", "on")
        else:
            out[key] = typ(raw.strip())
    return out


def resolve_options(ns: argparse.Namespace) -> dict:
    opts = {k: d for k, (_, d) in _FLAGS.items()}
    if ns.replay:
        command, recorded = header_options(ns.replay)
        if command != ns.command:
            raise ParameterError(f"{ns.replay} was written by {command!r}, not {ns.command!r}")
        opts.update(recorded)
    if ns.config:
        opts.update(_read_config(ns.config))
    for k in _FLAGS:
        v = getattr(ns, k)
        if v is not None:
            opts[k] = v
    opts["command"] = ns.command
    return opts


def _params(o, need_M=False) -> EnsembleParams:
    if need_M and o["M"] is None:
        raise ParameterError("--M is required for this command")
    return EnsembleParams(o["dv"], o["dc"], o["w"], o["L"], o["M"])


def _controls(o) -> DEControls:
    return DEControls(stop_tol=o["stop_tol"], t_max=o["t_max"], delta=o["delta"],
                      success_tol=o["success_tol"], bracket=o["bracket"])


def _density_controls(o) -> DensityControls:
    return DensityControls(LLRGrid(o["bin_width"], o["half_range"]), _controls(o),
                           None if o["margin"] < 0 else o["margin"], o["starts"])


def _n0(o) -> float:
    if o["n0"] is not None:
        return o["n0"]
    if o["capacity"] is not None:
        return n0_for_capacity(o["capacity"])
    raise ParameterError("give --n0 or --capacity")


def metadata_lines(o: dict, keys) -> list[str]:
    lines = [f"# scburst {__version__}", f"# command={o['command']}"]
    keys = list(keys) + ([] if "seed" in keys else ["seed"])
    lines += [f"# {k}={o[k]}" for k in keys]
    return lines


class Artifact:
    """Collects a metadata header, a table or a JSON body and writes it out."""

    def __init__(self, o: dict, keys):
        self.o = o
        self.header = metadata_lines(o, keys)
        self.columns: list[str] = []
        self.rows: list[list] = []
        self.json: dict | None = None

    def text(self) -> str:
        buf = io.StringIO()
        if self.json is not None:
            body = {"metadata": {l.split("=", 1)[0][2:]: l.split("=", 1)[1]
                                 for l in self.header if "=" in l},
                    "version": __version__, **self.json}
            return json.dumps(body, indent=2, sort_keys=True) + "\n"
        buf.write("\n".join(self.header) + "\n")
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(self.columns)
        for r in self.rows:
            wr.writerow([repr(v) if isinstance(v, float) else v for v in r])
        return buf.getvalue()

    def write(self):
        data = self.text()
        out = self.o["out"]
        if out is None or out == "-":
            sys.stdout.write(data)
        else:
            Path(out).write_text(data)


_ENS = ["dv", "dc", "w", "L", "M"]
_DE = ["delta", "stop_tol", "success_tol", "t_max", "bracket", "starts"]


def cmd_sample(o):
    p = _params(o, need_M=True)
    p.require_finite()
    g = sample_code(p, o["seed"])
    if o["out"] is None:
        raise ParameterError("sample needs --out for the edge list")
    save_edgelist(g, o["out"])
    print(f"wrote {g.vn_count} VNs, {g.cn_count} CNs, rate {float(design_rate(g)):.4f} to {o['out']}",
          file=sys.stderr)
    return None


def _b_value(o):
    if o["b"] is None:
        return None
    vals = parse_grid(o["b"])
    if len(vals) != 1:
        raise ParameterError("--b takes a single value for this command")
    return vals[0]


def cmd_de_bec(o):
    p, c = _params(o), _controls(o)
    b = _b_value(o)
    art = Artifact(o, _ENS + ["eps", "b", "s"] + _DE)
    if b is None:
        r = max_burst_length(o["eps"], p, c, starts=o["starts"], workers=o["workers"])
        art.columns = ["eps", "b_bp", "lo", "hi", "above_threshold", "converged"]
        art.rows = [[o["eps"], r.b_bp, r.lo, r.hi, int(r.above_threshold), int(r.converged)]]
        return art, r.converged
    starts = o["starts"] if o["s"] is None else np.array([o["s"]])
    avg = avg_error_over_start(b, o["eps"], p, c, starts=starts, workers=o["workers"])
    art.columns = ["s", "pe", "iterations"]
    art.rows = [[float(s), float(pe), int(t)] for s, pe, t in zip(avg.starts, avg.per_start, avg.iterations)]
    art.header.append(f"# pe_avg={avg.pe!r}")
    return art, avg.converged


def cmd_de_awgn(o):
    p, dc = _params(o), _density_controls(o)
    n0 = _n0(o)
    o["n0"] = n0
    b = _b_value(o)
    art = Artifact(o, _ENS + ["n0", "b", "bin_width", "half_range", "margin"] + _DE)
    art.header.append(f"# one_minus_capacity={1.0 - biawgn_capacity(n0)!r}")
    if b is None:
        r = max_burst_length_awgn(n0, p, dc)
        art.columns = ["n0", "one_minus_capacity", "b_bp", "lo", "hi", "above_threshold", "converged"]
        art.rows = [[n0, 1.0 - biawgn_capacity(n0), r.b_bp, r.lo, r.hi, int(r.above_threshold), int(r.converged)]]
        return art, r.converged
    avg = avg_error_over_start_bms(b, n0, p, dc)
    art.columns = ["s", "pe"]
    art.rows = [[float(s), float(pe)] for s, pe in zip(avg.starts, avg.per_start)]
    art.header.append(f"# pe_avg={avg.pe!r}")
    return art, avg.converged


def _w_list(o):
    ws = [int(v) for v in parse_grid(o["w_list"])]
    if not ws:
        raise ParameterError("--w-list is empty")
    return ws


def cmd_threshold(o):
    ws = _w_list(o)
    eps_grid = parse_grid(o["eps_grid"])
    if not eps_grid:
        raise ParameterError("--eps-grid is empty")
    c = _controls(o)
    art = Artifact(o, ["dv", "dc", "L", "w_list", "eps_grid"] + _DE)
    art.columns = ["eps"] + [f"b_bp_w{w}" for w in ws]
    ok = True
    for eps in eps_grid:
        row = [eps]
        for w in ws:
            p = EnsembleParams(o["dv"], o["dc"], w, o["L"])
            r = max_burst_length(eps, p, c, starts=o["starts"], workers=o["workers"])
            ok = ok and r.converged
            row.append(r.b_bp)
        art.rows.append(row)
    return art, ok


def cmd_threshold_awgn(o):
    ws = _w_list(o)
    caps = parse_grid(o["cap_grid"])
    if not caps:
        raise ParameterError("--cap-grid is empty")
    dc = _density_controls(o)
    art = Artifact(o, ["dv", "dc", "L", "w_list", "cap_grid", "bin_width", "half_range", "margin"] + _DE)
    art.columns = ["one_minus_capacity", "n0"] + [f"b_bp_w{w}" for w in ws]
    ok = True
    for cap in caps:
        n0 = n0_for_capacity(1.0 - cap)
        row = [cap, n0]
        for w in ws:
            r = max_burst_length_awgn(n0, EnsembleParams(o["dv"], o["dc"], w, o["L"]), dc)
            ok = ok and r.converged
            row.append(r.b_bp)
        art.rows.append(row)
    return art, ok


def cmd_ss_stats(o):
    p = _params(o, need_M=True)
    p.require_finite()
    b_vals = parse_grid(o["b"]) if o["b"] else []
    art = Artifact(o, _ENS + ["n_codes", "seed", "b"])
    art.json = stopping_set_report(p, o["n_codes"], o["seed"], b_vals)
    return art, True


def cmd_floor(o):
    p = _params(o, need_M=True)
    b_vals = parse_grid(o["b"] or "")
    if not b_vals:
        raise ParameterError("floor needs a nonempty --b grid")
    art = Artifact(o, _ENS + ["b"])
    art.columns = ["b", "bits", "floor_estimate"]
    for b in b_vals:
        e = error_floor_estimate(b, p)
        art.rows.append([b, e.bits, e.value])
    return art, True


def _sim_config(o) -> SimConfig:
    p = _params(o, need_M=True)
    b_vals = parse_grid(o["b"] or "")
    return SimConfig(p, b_vals, eps=o["eps"], target_failures=o["target_failures"],
                     max_trials=o["max_trials"], seed=o["seed"],
                     resample_code_per_trial=not o["fixed_code"])


_SIM = _ENS + ["eps", "b", "target_failures", "max_trials", "fixed_code", "seed"]


def _progress(b, trials, failures):
    print(f"b={b:g} trials={trials} failures={failures}", file=sys.stderr)


def cmd_simulate(o):
    cfg = _sim_config(o)
    pts = run_sweep(cfg, o["workers"], o["checkpoint"], _progress)
    art = Artifact(o, _SIM)
    art.columns = ["b", "trials", "failures", "p_b", "ci_lo", "ci_hi", "floor_estimate", "censored"]
    for pt in pts:
        est = error_floor_estimate(pt.b, cfg.params).value
        art.rows.append([pt.b, pt.trials, pt.failures, pt.p_b, pt.ci_lo, pt.ci_hi, est, int(pt.censored)])
    return art, not any(pt.censored for pt in pts)


def cmd_compare(o):
    cfg = _sim_config(o)
    pts = run_sweep(cfg, o["workers"], o["checkpoint"], _progress)
    rows = floor_vs_sim_report(cfg, points=pts)
    art = Artifact(o, _SIM)
    art.columns = ["b", "trials", "failures", "p_b", "ci_lo", "ci_hi", "floor_estimate",
                   "ratio", "overlap", "censored"]
    for r in rows:
        art.rows.append([r.b, r.trials, r.failures, r.p_b, r.ci_lo, r.ci_hi, r.floor_estimate,
                         r.ratio, int(r.overlap), int(r.censored)])
    return art, not any(r.censored for r in rows)


_DISPATCH = {
    "sample": cmd_sample, "de-bec": cmd_de_bec, "de-awgn": cmd_de_awgn,
    "threshold": cmd_threshold, "threshold-awgn": cmd_threshold_awgn,
    "ss-stats": cmd_ss_stats, "floor": cmd_floor, "simulate": cmd_simulate,
    "compare": cmd_compare,
}


def dispatch(o: dict) -> int:
    result = _DISPATCH[o["command"]](o)
    if result is None:
        return EXIT_OK
    art, ok = result
    art.write()
    if o["figure"]:
        from .plots import render
        try:
            render(art, o["figure"])
        except ValueError as exc:
            raise ParameterError(str(exc)) from exc
    if o["strict"] and not ok:
        raise StrictFailure("result censored or DE not converged")
    return EXIT_OK


def main(argv=None) -> int:
    ap = build_parser()
    ns = ap.parse_args(argv)
    try:
        return dispatch(resolve_options(ns))
    except (ParameterError, GraphSamplingError, configparser.Error, ValueError) as exc:
        print(f"scburst: error: {exc}", file=sys.stderr)
        return EXIT_PARAM
    except StrictFailure as exc:
        print(f"scburst: strict: {exc}", file=sys.stderr)
        return EXIT_STRICT
    except OSError as exc:
        print(f"scburst: i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())


__all__ = ["main", "dispatch", "build_parser", "resolve_options", "parse_grid", "COMMANDS"]
