"""Command-line front end.

Usage::

    logsob <subcommand> [--config run.json] [--family power --alpha 1.5 ...] [--set key=value]

Subcommands: ``check-h``, ``transform``, ``normalize``, ``criteria``,
``lsi-scan``, ``concentration``, ``lemmas``, ``sample``.

Each run writes ``<subcommand>.json`` (and a CSV where relevant) into the
output directory and prints the JSON document on stdout.  The exit status is
0 iff every check of the subcommand passed; errors are reported as a single
JSON line on stderr.

Tabulated potentials (``family = "table"``, ``table = path``) are plain text
files with two or three whitespace- or comma-separated columns
``x, phi(x)[, phi'(x)]``, ``#`` comments allowed, strictly increasing ``x``
starting at 0.  The potential is extended evenly to negative ``x`` and
interpolated with a monotone cubic.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from .concentration import TailBound, empirical_deviation
from .convex import LegendreEngine, build_H
from .criteria import bakry_emery, barthe_roberto, muckenhoupt_poincare
from .functionals import Family, TestFunction, default_family, estimate_best_constant
from .lemma_lab import run_battery
from .measure import normalize
from .potential import check_hypothesis_H, load_table, make_builtin

SCHEMA_VERSION = 1
COMMANDS = ("check-h", "transform", "normalize", "criteria", "lsi-scan", "concentration", "lemmas", "sample")


@dataclass
class RunConfig:
    """All run parameters; defaults are the documented defaults."""

    family: str = "power"            # power | power-log | table
    alpha: float = 1.5
    beta: float = 0.0
    scale: float = 1.0
    table: Optional[str] = None
    epsilon: float = 0.5
    big_m: float = 1.0
    b_const: float = 1.0
    d_const: Optional[float] = None
    quad_panels: int = 32
    quad_rtol: float = 1e-10
    seed: int = 7
    threads: Optional[int] = None
    out_dir: str = "."
    lam: float = 1.0                 # lambda of psi / tau2
    form: str = "eq-cor"
    a_fixed: float = 1.0
    kappa: float = 1.0
    refine: int = 1
    a_const: Optional[float] = None  # LSI constant for concentration; estimated when unset
    n_list: list = field(default_factory=lambda: [1, 10, 100])
    trials: int = 100000
    clamp: float = 5.0
    lam_grid: Optional[list] = None  # deviations of the sqrt(n)-scaled mean
    transform_points: int = 201
    transform_x_max: Optional[float] = None
    n_samples: int = 1000

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ValueError(f"unknown config keys: {unknown}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def validate(self):
        if self.family not in ("power", "power-log", "power_log", "table"):
            raise ValueError(f"unknown family {self.family!r}")
        if self.family == "table" and not self.table:
            raise ValueError("family 'table' needs a table path")
        for name in ("quad_panels", "trials", "transform_points", "n_samples", "refine", "seed"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool):
                raise ValueError(f"{name} must be an integer")
        if self.threads is not None and (not isinstance(self.threads, int) or self.threads < 1):
            raise ValueError("threads must be a positive integer")
        if not isinstance(self.n_list, list) or not all(isinstance(n, int) and n >= 1 for n in self.n_list):
            raise ValueError("n_list must be a list of positive integers")

    def artifact_dict(self) -> dict:
        """Config as recorded in artifacts: thread count and output directory
        do not affect results and are left out."""
        d = self.to_dict()
        d.pop("threads")
        d.pop("out_dir")
        return d

    def config_hash(self) -> str:
        return hashlib.sha256(canonical_json(self.artifact_dict()).encode()).hexdigest()[:16]


def load_config(path: str) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError("config must be a JSON object")
    return RunConfig.from_dict(data)


def save_config(cfg: RunConfig, path: str):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_json(cfg.to_dict(), indent=2) + "\n")


# -- serialisation -------------------------------------------------------------


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def canonical_json(obj, indent=None) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=indent, ensure_ascii=False, allow_nan=False)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if v is None:
        return ""
    return str(v)


def csv_text(cfg: RunConfig, command: str, columns, rows) -> str:
    buf = io.StringIO()
    buf.write(f"# logsob {command} schema_version={SCHEMA_VERSION} config_hash={cfg.config_hash()} seed={cfg.seed}\n")
    buf.write(f"# potential: {canonical_json(potential_spec(cfg))}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def potential_spec(cfg: RunConfig) -> dict:
    if cfg.family == "table":
        return {"family": "table", "table": cfg.table}
    return {"family": cfg.family, "alpha": cfg.alpha, "beta": cfg.beta, "scale": cfg.scale}


# -- building blocks -------------------------------------------------------------


def build_potential(cfg: RunConfig):
    if cfg.family == "table":
        return load_table(cfg.table)
    return make_builtin(cfg.family, cfg.alpha, cfg.beta, cfg.scale)


def build_measure(cfg: RunConfig, p=None):
    return normalize(p or build_potential(cfg), panels=cfg.quad_panels, rtol=cfg.quad_rtol)


def build_hfun(cfg: RunConfig, p):
    return build_H(LegendreEngine(p), cfg.b_const, cfg.d_const)


def concentration_family(m, clamp: float) -> Family:
    """Default family plus clamped tilts ``t in +-[0.1, 6]`` (the Herbst test functions)."""
    base = default_family(m)
    ts = [round(0.1 * k, 10) for k in range(1, 61)]
    tilts = [TestFunction("exp_tilt", (s * t, clamp)) for t in ts for s in (-1.0, 1.0)]
    return Family(base.members + tilts, base.description + f"; clamped tilts |t|<=6 step 0.1, clamp {clamp:g}")


# -- subcommands -----------------------------------------------------------------


def cmd_check_h(cfg):
    rep = check_hypothesis_H(build_potential(cfg), cfg.epsilon, cfg.big_m)
    return rep.to_dict(), None, rep.passed


def cmd_transform(cfg):
    p = build_potential(cfg)
    eng = LegendreEngine(p)
    hf = build_hfun(cfg, p)
    x_max = cfg.transform_x_max or p.truncation()
    xs = np.linspace(0.0, x_max, cfg.transform_points)
    rows = [{"x": x, "phi": float(p.phi(x)), "dphi": float(p.dphi(x)),
             "phi_star": float(eng.legendre(x)) + 0.0, "H": float(hf(x))} for x in xs]
    csv_out = ("transform.csv", ["x", "phi", "dphi", "phi_star", "H"], rows)
    return {"potential": p.describe(), "h_function": hf.describe(), "points": len(xs),
            "x_max": x_max}, csv_out, True


def cmd_normalize(cfg):
    m = build_measure(cfg)
    s = m.summary()
    ok = abs(s["mass_check"] - 1.0) <= 1e-9 and abs(s["cdf_at_zero"] - 0.5) <= 1e-9
    return s, None, ok


def cmd_criteria(cfg):
    p = build_potential(cfg)
    m = build_measure(cfg, p)
    out = {"poincare": muckenhoupt_poincare(m).to_dict()}
    br = barthe_roberto(m, cfg.big_m)
    out["barthe_roberto"] = br.to_dict()
    if p.second_deriv is not None:
        out["bakry_emery"] = bakry_emery(p).to_dict()
    ok = all(r["status"] in ("finite", "sup_at_infinity", "not_applicable") for r in out.values())
    return out, None, ok


def cmd_lsi_scan(cfg):
    p = build_potential(cfg)
    m = build_measure(cfg, p)
    hf = build_hfun(cfg, p)
    rep = estimate_best_constant(m, hf, default_family(m, cfg.refine), cfg.form, cfg.a_fixed,
                                 cfg.kappa, cfg.threads)
    rows = [{"kind": r["function"]["kind"], "params": ";".join(_fmt(v) for v in r["function"]["params"]),
             "numerator": r["numerator"], "denominator": r["denominator"], "ratio": r["ratio"],
             "status": r["status"]} for r in rep.members]
    csv_out = ("lsi-scan.csv", ["kind", "params", "numerator", "denominator", "ratio", "status"], rows)
    ok = not rep.counterexamples and math.isfinite(rep.best_ratio)
    return rep.to_dict(), csv_out, ok


def cmd_concentration(cfg):
    p = build_potential(cfg)
    m = build_measure(cfg, p)
    hf = build_hfun(cfg, p)
    if cfg.a_const is None:
        rep = estimate_best_constant(m, hf, concentration_family(m, cfg.clamp), "eq-cor",
                                     threads=cfg.threads)
        a_const, a_source = rep.best_ratio, rep.family
    else:
        a_const, a_source = cfg.a_const, "config"
    tb = TailBound(a_const, hf)
    f = lambda x: np.clip(x, -cfg.clamp, cfg.clamp)  # noqa: E731
    scaled = cfg.lam_grid or [0.25 * k for k in range(1, 17)]
    rows, ok = [], True
    for n in cfg.n_list:
        lams = [s / math.sqrt(n) for s in scaled]
        emp = empirical_deviation(m, f, n, lams, cfg.trials, cfg.seed + n, threads=cfg.threads)
        for s, lam, e in zip(scaled, lams, emp):
            raw = tb.bound(lam, n, 1.0 / n)
            row = {"n": n, "lam": lam, "lam_sqrt_n": s, "raw_bound": raw, "capped_bound": min(1.0, raw),
                   "empirical": e["empirical"], "stderr": e["stderr"], "regime": tb.regime(lam, n, 1.0 / n)}
            row["dominated"] = e["empirical"] <= min(1.0, raw) + 3 * e["stderr"]
            ok &= row["dominated"]
            rows.append(row)
    cols = ["n", "lam", "lam_sqrt_n", "raw_bound", "capped_bound", "empirical", "stderr", "regime", "dominated"]
    summary = {"a_const": a_const, "a_source": a_source, "h_function": hf.describe(),
               "observable": f"clamp(x, -{cfg.clamp:g}, {cfg.clamp:g}) averaged over n draws",
               "regime_split_mean": {str(n): tb.split(n, 1.0 / n) for n in cfg.n_list},
               "all_dominated": ok, "rows": len(rows)}
    return summary, ("concentration.csv", cols, rows), ok


def cmd_lemmas(cfg):
    p = build_potential(cfg)
    rep = check_hypothesis_H(p, cfg.epsilon, cfg.big_m)
    if not rep.passed:
        raise PreconditionError(f"hypothesis (H) fails: {rep.reason}")
    m = build_measure(cfg, p)
    c_h = barthe_roberto(m, cfg.big_m).bracket_high
    verdicts = [v.to_dict() for v in run_battery(p, rep, c_h, cfg.lam)]
    return {"c_h": c_h, "verdicts": verdicts}, None, all(v["passed"] for v in verdicts)


def cmd_sample(cfg):
    m = build_measure(cfg)
    xs = m.sample(cfg.n_samples, cfg.seed)
    rows = [{"x": float(v)} for v in xs]
    return {"n": cfg.n_samples, "seed": cfg.seed, "mean": float(np.mean(xs))}, ("sample.csv", ["x"], rows), True


HANDLERS = {"check-h": cmd_check_h, "transform": cmd_transform, "normalize": cmd_normalize,
            "criteria": cmd_criteria, "lsi-scan": cmd_lsi_scan, "concentration": cmd_concentration,
            "lemmas": cmd_lemmas, "sample": cmd_sample}


class PreconditionError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


class UsageError(Exception):
    pass


def _parse_set(items):
    out = {}
    for it in items or []:
        if "=" not in it:
            raise UsageError(f"--set expects key=value, got {it!r}")
        k, v = it.split("=", 1)
        try:
            out[k] = json.loads(v)
        except json.JSONDecodeError:
            out[k] = v
    return out


def make_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="logsob", description="Modified log-Sobolev toolkit for log-concave measures on the line.")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="JSON key-value config file")
    ap.add_argument("--family")
    ap.add_argument("--alpha", type=float)
    ap.add_argument("--beta", type=float)
    ap.add_argument("--table")
    ap.add_argument("--epsilon", type=float)
    ap.add_argument("--big-m", dest="big_m", type=float)
    ap.add_argument("--b-const", dest="b_const", type=float)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--threads", type=int)
    ap.add_argument("--out", dest="out_dir")
    ap.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key (JSON value)")
    ap.add_argument("--dump-config", action="store_true", help="print the effective config and exit")
    return ap


def resolve_config(args) -> RunConfig:
    base = load_config(args.config).to_dict() if args.config else RunConfig().to_dict()
    for k in ("family", "alpha", "beta", "table", "epsilon", "big_m", "b_const", "seed", "threads", "out_dir"):
        v = getattr(args, k)
        if v is not None:
            base[k] = v
    base.update(_parse_set(args.set))
    if base.get("threads") is None and os.environ.get("LOGSOB_THREADS"):
        base["threads"] = int(os.environ["LOGSOB_THREADS"])
    return RunConfig.from_dict(base)


def run(command: str, cfg: RunConfig) -> int:
    result, csv_out, ok = HANDLERS[command](cfg)
    doc = {"schema_version": SCHEMA_VERSION, "command": command, "config": cfg.artifact_dict(),
           "config_hash": cfg.config_hash(), "passed": bool(ok), "result": result}
    os.makedirs(cfg.out_dir, exist_ok=True)
    text = canonical_json(doc, indent=2) + "\n"
    with open(os.path.join(cfg.out_dir, f"{command}.json"), "w", encoding="utf-8") as fh:
        fh.write(text)
    if csv_out is not None:
        name, cols, rows = csv_out
        body = csv_text(cfg, command, cols, rows)
        with open(os.path.join(cfg.out_dir, name), "w", encoding="utf-8", newline="") as fh:
            fh.write(body)
    sys.stdout.write(text)
    return 0 if ok else 1


def _fail(kind: str, message: str, command=None, code: int = 2) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "command": command}, sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    try:
        args = make_parser().parse_args(argv)
    except UsageError as e:
        return _fail("usage", str(e))
    try:
        cfg = resolve_config(args)
    except (ValueError, TypeError, OSError, UsageError, json.JSONDecodeError) as e:
        return _fail("config", str(e), args.command)
    if args.dump_config:
        sys.stdout.write(canonical_json(cfg.to_dict(), indent=2) + "\n")
        return 0
    try:
        return run(args.command, cfg)
    except PreconditionError as e:
        return _fail("precondition", str(e), args.command, 3)
    except Exception as e:  # noqa: BLE001 - reported as one machine-readable line
        return _fail(type(e).__name__, str(e), args.command, 4)


if __name__ == "__main__":
    sys.exit(main())
