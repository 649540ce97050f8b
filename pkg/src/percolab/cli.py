"""Command-line entry point.

Exit status: 0 success, 2 configuration or I/O error, 3 validity flag raised
(too many discarded samples), 4 internal invariant violated.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import tempfile
import time
from importlib.metadata import PackageNotFoundError, packages_distributions, version
from pathlib import Path

from . import experiments as ex
from .bypass import DetourInvariantError, write_trace_jsonl
from .chemdist import ap_tail_estimate, calibrate_beta
from .percolation import QuantileDistribution
from .renorm import GOOD, BAD, UNEVALUATED
from .shells import ShellInvariantError

log = logging.getLogger("percolab")

EXIT_OK, EXIT_CONFIG, EXIT_INVALID, EXIT_INVARIANT = 0, 2, 3, 4

# config keys that are not ExperimentConfig fields
EXTRA_KEYS = {"F", "G", "ap_tail", "planted", "inject", "growth"}
VERDICTS = {"good": GOOD, "bad": BAD, "unevaluated": UNEVALUATED}


class ValidityError(RuntimeError):
    pass


@dataclasses.dataclass
class RunManifest:
    subcommand: str
    config: dict
    config_hash: str
    started: str
    finished: str = ""
    outputs: list = dataclasses.field(default_factory=list)
    verdicts: dict = dataclasses.field(default_factory=dict)
    version: str = ""

    def write(self, out_dir: Path) -> Path:
        """Atomic write: a temp file in the target directory, then rename."""
        missing = [p for p in self.outputs if not (out_dir / p).exists()]
        if missing:
            raise OSError(f"manifest references missing outputs: {missing}")
        target = out_dir / "manifest.json"
        fd, tmp = tempfile.mkstemp(dir=out_dir, prefix=".manifest.", suffix=".json")
        with os.fdopen(fd, "w") as fh:
            json.dump(dataclasses.asdict(self), fh, indent=2, sort_keys=True, default=ex._json_default)
        os.replace(tmp, target)
        return target


def _version() -> str:
    try:
        dist = packages_distributions().get("percolab", ["percolab"])[0]
        return version(dist)
    except PackageNotFoundError:
        return "0+unknown"


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(doc: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = doc
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ex.ConfigError(f"override {dotted}: {k} is not an object")
    node[keys[-1]] = value


def load_config(args) -> tuple[ex.ExperimentConfig, dict]:
    doc: dict = {}
    if args.config:
        try:
            with open(args.config) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ex.ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ex.ConfigError("config must be a JSON object")
    for item in args.set or []:
        if "=" not in item:
            raise ex.ConfigError(f"override {item!r} is not key=value")
        key, val = item.split("=", 1)
        apply_override(doc, key, _parse_value(val))
    flag_map = {"seed": "seed", "p": "p", "q": "q", "trials": "trials", "N1": "l1", "beta": "beta"}
    for flag, key in flag_map.items():
        if getattr(args, flag) is not None:
            doc[key] = getattr(args, flag)
    if args.n is not None:
        doc["n"] = [args.n]
    extras = {k: doc.pop(k) for k in list(doc) if k in EXTRA_KEYS}
    try:
        cfg = ex.ExperimentConfig.from_dict(doc)
    except TypeError as exc:
        raise ex.ConfigError(str(exc)) from exc
    cfg.validate()
    return cfg, extras


def _distribution(spec: dict | None, default: dict, finite_mass: float) -> QuantileDistribution:
    spec = {**default, **(spec or {})}
    try:
        return QuantileDistribution.atoms(spec["values"], spec["weights"], spec.get("finite_mass", finite_mass))
    except (KeyError, ValueError) as exc:
        raise ex.ConfigError(f"distribution table: {exc}") from exc


DEFAULT_F = {"values": [1.0, 2.0], "weights": [0.5, 0.5]}
DEFAULT_G = {"values": [1.5, 2.5], "weights": [0.5, 0.5]}


# -- subcommands: each returns (outputs, verdicts) ------------------------------------

def cmd_estimate_mu(cfg, extras, out, threads):
    rows, verdicts = [], {}
    for n in cfg.n:
        rec = ex.estimate_mu(cfg, cfg.p, n=n, threads=threads)
        rows += ex.estimate_rows(rec)
        verdicts[f"n={n}"] = {"mean_ratio": rec.mean, "half_width": rec.half_width,
                              "discarded": rec.discarded, "valid": rec.valid}
    ex.write_csv(out / "estimate-mu.csv", ex.ESTIMATE_HEADER, rows)
    if not all(v["valid"] for v in verdicts.values()):
        raise ValidityError("discard rate above 50%")
    return ["estimate-mu.csv"], verdicts


def cmd_lipschitz_scan(cfg, extras, out, threads):
    rep = ex.lipschitz_scan(cfg, threads=threads)
    emit_plot_data(rep, out / "lipschitz-scan.csv")
    verdicts = {"kappa_hat": rep.kappa, "monotone": rep.monotone, "sample_violations": rep.sample_violations}
    if rep.sample_violations:
        raise AssertionError(f"{rep.sample_violations} per-sample monotonicity violations")
    if not all(r.valid for r in rep.records):
        raise ValidityError("discard rate above 50% at some grid point")
    return ["lipschitz-scan.csv"], verdicts


def cmd_goodbox_decay(cfg, extras, out, threads):
    cfg.require_coupled()
    res = ex.goodbox_decay(cfg, cfg.p, cfg.q, threads=threads)
    ex.write_csv(out / "goodbox-decay.csv", ["N", "bad", "trials", "p_hat", "half_width", "one_sided"],
                 res["rows"])
    return ["goodbox-decay.csv"], {"slope": res["slope"], "strictly_decreasing": res["strictly_decreasing"]}


def cmd_ap_tail(cfg, extras, out, threads):
    spec = {"beta_grid": [round(1.0 + 0.1 * k, 10) for k in range(21)], "threshold": 0.01, **extras.get("ap_tail", {})}
    n = cfg.n[0]
    x = tuple(n * int(c) for c in cfg.x)
    table = ap_tail_estimate(cfg.p, cfg.window(n), cfg.trials, x, spec["beta_grid"], cfg.seed)
    ex.write_csv(out / "ap-tail.csv", ["beta", "frequency", "hits", "trials", "half_width"], table)
    try:
        beta = calibrate_beta(table, spec["threshold"])
    except ValueError:
        beta = None
    return ["ap-tail.csv"], {"calibrated_beta": beta, "threshold": spec["threshold"]}


def cmd_budget_report(cfg, extras, out, threads):
    cfg.require_coupled()
    res = ex.budget_report(cfg, cfg.p, cfg.q, cfg.n[0], cfg.trials, threads)
    ex.write_csv(out / "budget-report.csv", ["trial", "status", "D_q", "M", "n_k", "weighted_sum", "bad_event"],
                 res["rows"])
    return ["budget-report.csv"], {"bad_event_frequency": res["bad_event_frequency"], "delta": res["delta"]}


REGIME_HEADER = ["trial", "status", "reason", "violation", "D_q", "D_p", "added", "stitch", "closed",
                 "avoided", "trimmed", "dropped", "horizon", "components", "shell_sum", "ledger_bound",
                 "holds"]


def _regime(cfg, extras, threads):
    cfg.require_coupled()
    if "planted" in extras or "inject" in extras:
        inject = [(int(i["scale"]), tuple(i["site"]), VERDICTS[i["verdict"]]) for i in extras.get("inject", [])]
        return ex.planted_regime(extras.get("planted"), inject)
    return ex.bypass_regime(cfg, cfg.p, cfg.q, cfg.n[0], cfg.trials, threads)


def _regime_verdicts(res) -> dict:
    return {k: v for k, v in res.items() if k not in ("rows", "trace")}


def _write_regime(res, out, name):
    ex.write_csv(out / f"{name}.csv", REGIME_HEADER, res["rows"])
    files = [f"{name}.csv"]
    if res.get("trace"):
        write_trace_jsonl(res["trace"], out / f"{name}.trace.jsonl")
        files.append(f"{name}.trace.jsonl")
    return files


def _raise_on_violations(res):
    if res["violations"]:
        first = next(r["violation"] for r in res["rows"] if r["violation"])
        raise AssertionError(f"{res['violations']} samples violated an invariant; first: {first}")


def cmd_shell_verify(cfg, extras, out, threads):
    res = _regime(cfg, extras, threads)
    files = _write_regime(res, out, "shell-verify")
    _raise_on_violations(res)
    if res["edge_discard_rate"] > cfg.max_discard:
        raise ValidityError(f"edge discard rate {res['edge_discard_rate']:.3f} above {cfg.max_discard}")
    return files, _regime_verdicts(res)


def cmd_bypass_verify(cfg, extras, out, threads):
    res = _regime(cfg, extras, threads)
    files = _write_regime(res, out, "bypass-verify")
    _raise_on_violations(res)
    if res["ledger_failures"]:
        raise AssertionError(f"{res['ledger_failures']} detours exceed the length ledger")
    return files, _regime_verdicts(res)


def cmd_constructive_bound(cfg, extras, out, threads):
    res = _regime(cfg, extras, threads)
    files = _write_regime(res, out, "constructive-bound")
    _raise_on_violations(res)
    if res["inequality_failures"]:
        raise AssertionError(f"{res['inequality_failures']} samples break D_p <= D_q + added + stitch")
    if res["discarded_samples"] > cfg.max_discard * res["samples"]:
        raise ValidityError("too many discarded samples")
    return files, _regime_verdicts(res)


def cmd_general_scan(cfg, extras, out, threads):
    cfg.require_coupled()
    F = _distribution(extras.get("F"), DEFAULT_F, cfg.p)
    G = _distribution(extras.get("G"), DEFAULT_G, cfg.q)
    try:
        res = ex.general_distribution_scan(cfg, F, G, cfg.p, cfg.q, cfg.n[0], cfg.trials, threads)
    except ex.ClassMembershipError as exc:
        raise ex.ConfigError(str(exc)) from exc
    ex.write_csv(out / "general-scan.csv",
                 ["trial", "status", "T_F", "T_G", "len_F", "len_G", "gap", "diff", "bound", "violation"],
                 res["rows"])
    if res["violations"]:
        raise AssertionError(f"{res['violations']} samples break |T_F - T_G| <= |g| * gap")
    if res["discarded"] > cfg.max_discard * cfg.trials:
        raise ValidityError("too many discarded samples")
    return ["general-scan.csv"], {"violations": res["violations"], "discarded": res["discarded"]}


def cmd_class_check(cfg, extras, out, threads):
    verdicts = {}
    for name, default, mass in (("F", DEFAULT_F, cfg.p), ("G", DEFAULT_G, cfg.q)):
        dist = _distribution(extras.get(name), default, mass)
        v = ex.class_membership(dist, cfg.p0, cfg.p1, cfg.M_class, cfg.eps0, delta0=cfg.delta0)
        verdicts[name] = {"member": v.member, "clauses": v.clauses}
    with open(out / "class-check.json", "w") as fh:
        json.dump(verdicts, fh, indent=2, sort_keys=True)
    return ["class-check.json"], verdicts


COMMANDS = {
    "estimate-mu": cmd_estimate_mu,
    "lipschitz-scan": cmd_lipschitz_scan,
    "goodbox-decay": cmd_goodbox_decay,
    "ap-tail": cmd_ap_tail,
    "budget-report": cmd_budget_report,
    "shell-verify": cmd_shell_verify,
    "bypass-verify": cmd_bypass_verify,
    "constructive-bound": cmd_constructive_bound,
    "general-scan": cmd_general_scan,
    "class-check": cmd_class_check,
}


def emit_plot_data(records, path) -> None:
    """Tidy CSV for an EstimateRecord, a list of them, or a LipschitzReport."""
    if isinstance(records, ex.LipschitzReport):
        ex.write_csv(path, ex.LIPSCHITZ_HEADER, ex.lipschitz_rows(records))
        return
    if isinstance(records, ex.EstimateRecord):
        records = [records]
    if not records:
        raise ValueError("no records to emit")
    ex.write_csv(path, ex.ESTIMATE_HEADER, [row for rec in records for row in ex.estimate_rows(rec)])


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="percolab", description="Chemical-distance experiments on Z^d")
    ap.add_argument("subcommand", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="JSON configuration file")
    ap.add_argument("--set", action="append", metavar="KEY=VALUE",
                    help="dotted-path override, value parsed as JSON when possible")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    ap.add_argument("--out", default=os.environ.get("PERCOLAB_OUT", "percolab-out"))
    ap.add_argument("--p", type=float)
    ap.add_argument("--q", type=float)
    ap.add_argument("--n", type=int)
    ap.add_argument("--trials", type=int)
    ap.add_argument("--N1", type=int)
    ap.add_argument("--beta", type=float)
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    try:
        cfg, extras = load_config(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
    except (ex.ConfigError, OSError) as exc:
        print(f"percolab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    manifest = RunManifest(args.subcommand, {**cfg.to_dict(), **extras}, cfg.content_hash(), started,
                           version=_version())
    status = EXIT_OK
    try:
        files, verdicts = COMMANDS[args.subcommand](cfg, extras, out, max(1, args.threads))
        manifest.outputs, manifest.verdicts = files, verdicts
    except ex.ConfigError as exc:
        print(f"percolab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"percolab: I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValidityError as exc:
        print(f"percolab: validity flag: {exc}", file=sys.stderr)
        manifest.verdicts = {"validity": str(exc)}
        manifest.outputs = [f.name for f in out.glob(f"{args.subcommand}*") if f.is_file()]
        status = EXIT_INVALID
    except (AssertionError, ShellInvariantError, DetourInvariantError) as exc:
        print(f"percolab: invariant violated: {exc}", file=sys.stderr)
        manifest.verdicts = {"invariant": str(exc)}
        manifest.outputs = [f.name for f in out.glob(f"{args.subcommand}*") if f.is_file()]
        status = EXIT_INVARIANT
    manifest.finished = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    try:
        manifest.write(out)
    except OSError as exc:
        print(f"percolab: I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    log.info("%s finished with status %d", args.subcommand, status)
    print(json.dumps({"subcommand": args.subcommand, "status": status, "verdicts": manifest.verdicts},
                     default=ex._json_default, sort_keys=True))
    return status


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
