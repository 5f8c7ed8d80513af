"""Configuration-driven runner: ``python -m pathbv {run, list, calibrate-c1}``.

A configuration is a YAML mapping::

    seed: 20240601            # mandatory root seed
    domain: "ball:d=2,r=1"    # default domain for every check
    output_dir: out           # artifacts directory (overridden by --out)
    workers: 1                # process count (overridden by --workers)
    calibration:              # C1 calibration, run once when a check needs it
      c1: 0.35                # optional fixed value, skips the calibration
      distances: [0.05, 0.1, 0.2, 0.4]
      n_paths: 20000
      n_steps: 1024
      n_times: 12
    checks:
      - name: stay_bound
        domain: "ball:d=3,r=1"   # optional override
        mandatory: true          # or a mapping {record_name: bool}
        params: {depth: 0.1, u: 1.0}

Exit status: 0 if every mandatory record passes, 1 if one fails, 2 on a
configuration error, 3 on an internal error.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import sys
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import checks as ck
from .capacity import discretize
from .geometry import CATALOG_EXAMPLES, parse_domain
from .mcverify import calibrate_c1

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_INTERNAL = 0, 1, 2, 3

TOP_KEYS = {"seed", "domain", "output_dir", "workers", "calibration", "checks"}
CHECK_KEYS = {"name", "domain", "mandatory", "params"}
CALIBRATION_KEYS = {"c1", "distances", "r", "n_paths", "n_steps", "n_times"}
DEFAULT_DOMAIN = "ball:d=2,r=1"
CSV_FIELDS = ("index", "check", "domain", "estimate", "ci_low", "ci_high", "bound", "slack",
              "pass", "mandatory")


class ConfigError(ValueError):
    """Invalid configuration; the message carries the offending line."""


@dataclass
class CheckSpec:
    name: str
    domain: str
    params: dict
    mandatory: bool | dict = True
    line: int = 0


@dataclass
class ExperimentConfig:
    seed: int
    domain: str = DEFAULT_DOMAIN
    output_dir: str = "pathbv-out"
    workers: int = 1
    calibration: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# parsing


def _line(node) -> int:
    return node.start_mark.line + 1


def _err(node, msg, source):
    return ConfigError(f"{source}:{_line(node)}: {msg}")


def _mapping_items(node, source, what):
    if not isinstance(node, yaml.MappingNode):
        raise _err(node, f"{what} must be a mapping", source)
    return [(k.value, k, v) for k, v in node.value]


def _value(node):
    return yaml.safe_load(yaml.serialize(node))


def _check_keys(node, allowed, source, what):
    out = {}
    for key, knode, vnode in _mapping_items(node, source, what):
        if key not in allowed:
            raise _err(knode, f"unknown key {key!r} in {what}", source)
        if key in out:
            raise _err(knode, f"duplicate key {key!r} in {what}", source)
        out[key] = vnode
    return out


def _validate_domain(spec, node, source):
    if not isinstance(spec, str):
        raise _err(node, "domain must be a string id", source)
    try:
        parse_domain(spec)
    except (KeyError, ValueError, OSError) as exc:
        raise _err(node, f"unknown domain {spec!r}: {exc}", source) from None


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    """Validate YAML text and build an :class:`ExperimentConfig`."""
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}" if mark else source
        raise ConfigError(f"{where}: {getattr(exc, 'problem', exc)}") from None
    if root is None:
        raise ConfigError(f"{source}:1: empty configuration, 'seed' is mandatory")
    top = _check_keys(root, TOP_KEYS, source, "configuration")
    if "seed" not in top:
        raise _err(root, "missing mandatory key 'seed'", source)
    seed = _value(top["seed"])
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise _err(top["seed"], "seed must be a non-negative integer", source)
    cfg = ExperimentConfig(seed=seed)
    if "domain" in top:
        cfg.domain = _value(top["domain"])
        _validate_domain(cfg.domain, top["domain"], source)
    if "output_dir" in top:
        cfg.output_dir = str(_value(top["output_dir"]))
    if "workers" in top:
        w = _value(top["workers"])
        if isinstance(w, bool) or not isinstance(w, int) or w < 1:
            raise _err(top["workers"], "workers must be a positive integer", source)
        cfg.workers = w
    if "calibration" in top:
        cal = _check_keys(top["calibration"], CALIBRATION_KEYS, source, "calibration")
        cfg.calibration = {k: _value(v) for k, v in cal.items()}
    checks_node = top.get("checks")
    if checks_node is not None and not (isinstance(checks_node, yaml.ScalarNode)
                                        and _value(checks_node) is None):
        if not isinstance(checks_node, yaml.SequenceNode):
            raise _err(checks_node, "checks must be a list", source)
        for item in checks_node.value:
            cfg.checks.append(_parse_check(item, cfg.domain, source))
    return cfg


def _parse_check(node, default_domain, source) -> CheckSpec:
    fields = _check_keys(node, CHECK_KEYS, source, "check")
    if "name" not in fields:
        raise _err(node, "check without 'name'", source)
    name = _value(fields["name"])
    if name not in ck.CHECKS:
        raise _err(fields["name"], f"unknown check {name!r}; known: "
                   + ", ".join(sorted(ck.CHECKS)), source)
    domain = default_domain
    if "domain" in fields:
        domain = _value(fields["domain"])
        _validate_domain(domain, fields["domain"], source)
    params = {}
    if "params" in fields:
        allowed = set(ck.parameter_names(name))
        pnodes = _check_keys(fields["params"], allowed, source, f"params of {name}")
        params = {k: _value(v) for k, v in pnodes.items()}
        if name == "capacity" and "set" in params:
            try:
                discretize(params["set"], 8)
            except (KeyError, ValueError, OSError) as exc:
                raise _err(pnodes["set"], f"unknown set {params['set']!r}: {exc}",
                           source) from None
    mandatory = True
    if "mandatory" in fields:
        mandatory = _value(fields["mandatory"])
        ok = isinstance(mandatory, bool) or (
            isinstance(mandatory, dict) and all(isinstance(v, bool) for v in mandatory.values()))
        if not ok:
            raise _err(fields["mandatory"], "mandatory must be a bool or a mapping of bools",
                       source)
    return CheckSpec(name, domain, params, mandatory, _line(node))


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return parse_config(text, str(path))


def bundled_suite() -> Path:
    return Path(__file__).with_name("suites") / "paper-suite.yaml"


# ---------------------------------------------------------------------------
# execution


def check_seed(root: int, index: int) -> int:
    """Seed of the check at ``index``; depends on nothing but the two integers."""
    return int(np.random.SeedSequence([root, index]).generate_state(1)[0])


def run_calibration(cfg: ExperimentConfig, domain: str | None = None) -> dict:
    cal = dict(cfg.calibration)
    if "c1" in cal:
        return {"c1": float(cal["c1"]), "source": "config"}
    dom = domain or cfg.domain
    res = calibrate_c1(parse_domain(dom), tuple(cal.get("distances", (0.05, 0.1, 0.2, 0.4))),
                       float(cal.get("r", 0.0)), int(cal.get("n_paths", 20_000)),
                       int(cal.get("n_steps", 1024)), int(cal.get("n_times", 12)),
                       seed=check_seed(cfg.seed, 1 << 20))
    return {**ck._plain(res), "domain": dom, "source": "calibrated"}


def _execute(args):
    index, name, domain, params, seed, c1 = args
    t0 = time.perf_counter()
    try:
        recs = ck.run_check(name, domain, params, seed, c1)
        err = None
    except Exception:  # reported as an internal error of this check
        recs, err = [], traceback.format_exc()
    return index, recs, err, time.perf_counter() - t0


def _is_mandatory(spec: CheckSpec, record_name: str) -> bool:
    if isinstance(spec.mandatory, bool):
        return spec.mandatory
    return bool(spec.mandatory.get(record_name, True))


def run_suite(cfg: ExperimentConfig, out_dir=None, workers=None, echo=print) -> int:
    """Run every check, write artifacts and return the exit status."""
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    workers = workers or cfg.workers
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    c1 = None
    calibration = None
    if any(s.name in ck.NEEDS_C1 for s in cfg.checks):
        calibration = run_calibration(cfg)
        c1 = calibration["c1"]
        echo(f"calibration  C1={c1:.6g}  C2={4 * c1 + 2:.6g}  ({calibration['source']})")
    jobs = [(i, s.name, s.domain, s.params, check_seed(cfg.seed, i), c1)
            for i, s in enumerate(cfg.checks)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_execute, jobs))
    else:
        results = [_execute(j) for j in jobs]

    records, timings, status = [], [], EXIT_OK
    for (index, recs, err, secs), spec in zip(results, cfg.checks):
        timings.append({"index": index, "check": spec.name, "seconds": secs})
        if err is not None:
            rec = {"check": spec.name, "domain": spec.domain, "params": ck._plain(spec.params),
                   "estimate": None, "ci": None, "bound": None, "slack": None, "pass": False,
                   "detail": {"error": err.strip().splitlines()[-1]}}
            recs = [rec]
            status = EXIT_INTERNAL
            echo(f"ERROR  {spec.name:<20s} {spec.domain}  {rec['detail']['error']}")
        for rec in recs:
            rec["index"] = index
            rec["seed"] = check_seed(cfg.seed, index)
            rec["mandatory"] = _is_mandatory(spec, rec["check"])
            records.append(rec)
            if err is None:
                if not rec["pass"] and rec["mandatory"] and status == EXIT_OK:
                    status = EXIT_FAIL
                echo(_verdict_line(rec))
    _write_artifacts(out, cfg, records, calibration)
    meta = {"started": started,
            "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "workers": workers, "timings": timings, "exit_status": status}
    (out / "metadata.json").write_text(json.dumps(meta, indent=1) + "\n")
    echo(f"{len(records)} records, exit status {status}")
    return status


def _fmt(v):
    if v is None:
        return "-"
    if isinstance(v, str):
        return v
    return f"{v:.6g}"


def _verdict_line(rec) -> str:
    tag = "PASS" if rec["pass"] else ("FAIL" if rec["mandatory"] else "FAIL (advisory)")
    return (f"{tag:<16s} {rec['check']:<20s} {rec['domain']:<22s} "
            f"estimate={_fmt(rec['estimate'])} bound={_fmt(rec['bound'])} "
            f"slack={_fmt(rec['slack'])}")


def _write_artifacts(out: Path, cfg, records, calibration):
    payload = {"seed": cfg.seed, "calibration": calibration, "records": records}
    (out / "results.json").write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for r in records:
            lo, hi = (r["ci"] or [None, None])[:2]
            w.writerow([r["index"], r["check"], r["domain"], r["estimate"], lo, hi, r["bound"],
                        r["slack"], r["pass"], r["mandatory"]])


def list_catalog() -> str:
    lines = ["domains:"]
    lines += [f"  {d}" for d in CATALOG_EXAMPLES]
    lines.append("checks:")
    for name in sorted(ck.CHECKS):
        lines.append(f"  {name}({', '.join(ck.parameter_names(name))})")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# entry point


def _parser():
    p = argparse.ArgumentParser(prog="pathbv", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, hlp in (("run", "run a check suite"),
                      ("calibrate-c1", "calibrate C1 and store it as JSON")):
        s = sub.add_parser(name, help=hlp)
        s.add_argument("--config", type=Path, default=None,
                       help="YAML configuration (default: the bundled suite)")
        s.add_argument("--seed", type=int, default=None, help="override the root seed")
        s.add_argument("--workers", type=int, default=None, help="worker processes")
        s.add_argument("--out", type=Path, default=None, help="output directory")
    sub.add_parser("list", help="print domain ids and check names")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "list":
        print(list_catalog())
        return EXIT_OK
    try:
        cfg = load_config(args.config or bundled_suite())
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be non-negative")
            cfg.seed = args.seed
        if args.workers is not None and args.workers < 1:
            raise ConfigError("--workers must be positive")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "calibrate-c1":
            out = Path(args.out or cfg.output_dir)
            out.mkdir(parents=True, exist_ok=True)
            res = run_calibration(cfg)
            (out / "c1.json").write_text(json.dumps(res, indent=1, sort_keys=True) + "\n")
            print(f"C1={res['c1']:.6g}  C2={4 * res['c1'] + 2:.6g}  -> {out / 'c1.json'}")
            return EXIT_OK
        return run_suite(cfg, args.out, args.workers)
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
