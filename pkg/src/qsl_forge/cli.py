"""Command-line harness: ``qsl-forge run | report-tables | case-studies | plot-data | gate``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import cases, config, gates
from .config import ConfigError, ExperimentConfig
from .controls import write_schedule_csv
from .optimize import OptimizationAborted, crab_optimize, pmp_optimize
from .propagate import write_operator_csv, write_trajectory_csv

log = logging.getLogger("qsl_forge")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2, 3
HISTORY_COLUMNS = ("iter", "J", "fidelity", "j_plane", "j_phase", "epsilon")
METRICS = ("fidelity", "j_plane", "j_phase", "eta_bar")


class CsvFormatError(ValueError):
    def __init__(self, path, line, msg):
        super().__init__(f"{path}:{line}: {msg}")
        self.path, self.line = str(path), line


def read_numeric_csv(path, required=()):
    """Header plus float rows; raises CsvFormatError naming the offending line."""
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as e:
        raise CsvFormatError(path, 0, f"cannot open ({e.strerror})") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise CsvFormatError(path, 1, "missing header row")
        missing = [c for c in required if c not in header]
        if missing:
            raise CsvFormatError(path, 1, f"missing columns {missing}")
        rows = []
        for row in reader:
            line = reader.line_num
            if len(row) != len(header):
                raise CsvFormatError(path, line, f"expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(x) for x in row])
            except ValueError:
                raise CsvFormatError(path, line, "non-numeric field") from None
    return header, np.array(rows, dtype=float).reshape(-1, len(header))


def write_numeric_csv(path, header, columns):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([repr(float(x)) for x in row])
    return Path(path)


def _write_history(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(HISTORY_COLUMNS)
        for r in rows:
            w.writerow([r["iter"], *(repr(float(r[k])) for k in HISTORY_COLUMNS[1:])])


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, np.integer):
        return int(x)
    return x


# ---------------------------------------------------------------------------
# run


def run_one(cfg: ExperimentConfig, name: str, outdir: Path) -> dict:
    target = gates.gate(name).matrix
    model = cfg.model()
    if cfg.optimizer == "pmp":
        res = pmp_optimize(model, target, cfg.cost_weights(), cfg.step_policy(), n_iters=cfg.iterations,
                           n_t=cfg.n_t, t_f=cfg.t_f, smooth_block=cfg.post.get("smooth_block", 20),
                           fine_dt=cfg.post.get("fine_dt", 1e-4))
    else:
        c = cfg.crab
        res = crab_optimize(model, target, cfg.cost_weights(), n_modes=c.get("n_modes", 10),
                            rng_seed=cfg.rng_seed, eval_budget=cfg.budget, n_t=cfg.n_t, t_f=cfg.t_f,
                            method=c.get("method", "powell"), fine_n_t=c.get("fine_n_t", 10000),
                            a0=c.get("a0", 0.01))
    stem = (f"t{cfg.table}_" if cfg.table else "") + gates.slug(name)
    files = {
        "schedule": f"{stem}.schedule.csv",
        "fine_schedule": f"{stem}.fine_schedule.csv",
        "trajectory": f"{stem}.trajectory.csv",
        "cost_history": f"{stem}.cost_history.csv",
        "operator": f"{stem}.operator.csv",
    }
    write_schedule_csv(res.schedule, outdir / files["schedule"])
    write_schedule_csv(res.fine_schedule, outdir / files["fine_schedule"])
    write_trajectory_csv(res.trajectory, outdir / files["trajectory"])
    _write_history(res.cost_history, outdir / files["cost_history"])
    write_operator_csv(res.trajectory.final, outdir / files["operator"], target)
    doc = {
        "schema_version": config.SCHEMA_VERSION,
        "gate": name,
        "table": cfg.table,
        "config": cfg.for_gate(name),
        "result": res.summary(),
        "files": files,
    }
    path = outdir / f"{stem}.result.json"
    path.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return doc


def _apply_overrides(raw: dict, a) -> dict:
    raw = dict(raw)
    for key in ("gate", "control", "optimizer", "iterations", "budget", "n_t", "rng_seed", "output_dir", "table"):
        v = getattr(a, key, None)
        if v is not None:
            raw[key] = v
    if a.weights is not None:
        raw["weights"] = list(a.weights)
    if a.t_f is not None:
        raw["t_f"] = a.t_f
    step = dict(raw.get("step", {}))
    if a.step_mode is not None:
        step["mode"] = a.step_mode
    if a.epsilon0 is not None:
        step["epsilon0"] = a.epsilon0
    if step:
        raw["step"] = step
    if a.n_modes is not None:
        raw["crab"] = {**raw.get("crab", {}), "n_modes": a.n_modes}
    return raw


def cmd_run(a) -> int:
    try:
        if a.config:
            with open(a.config, encoding="utf-8") as fh:
                raw = json.load(fh)
        elif a.preset:
            raw = config.preset(a.preset)
        else:
            raise ConfigError("give --config FILE or --preset TABLE")
        if a.config and a.preset:
            raise ConfigError("--config and --preset are mutually exclusive")
        cfg = config.from_dict(_apply_overrides(raw, a))
    except json.JSONDecodeError as e:
        print(f"config error: {a.config}:{e.lineno}: invalid JSON ({e.msg})", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"config error: cannot read {a.config}: {e.strerror}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, TypeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    for name in cfg.gates:
        try:
            doc = run_one(cfg, name, outdir)
        except OptimizationAborted as e:
            print(f"optimizer aborted on {name}: {e}", file=sys.stderr)
            snap = outdir / f"{gates.slug(name)}.abort.json"
            snap.write_text(json.dumps(_jsonable(e.snapshot), sort_keys=True), encoding="utf-8")
            return EXIT_ABORT
        r = doc["result"]
        print(f"{name:10s} F={r['fidelity']:.5f} J_plane={r['j_plane']:.4f} "
              f"J_phase={r['j_phase']:.4f} eta_bar={r['eta_bar']:.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# report-tables


def collect_results(directory) -> list[dict]:
    out = []
    for p in sorted(Path(directory).glob("*.result.json")):
        try:
            out.append(json.loads(p.read_text(encoding="utf-8")))
        except json.JSONDecodeError as e:
            log.warning("skipping %s: %s", p, e)
    return out


def comparison_rows(results: list[dict]) -> list[dict]:
    """One row per (table, gate), joined against the reference values."""
    ref = config.reference_values()["tables"]
    seen = {}
    for doc in results:
        seen[(doc.get("table"), doc["gate"])] = doc["result"]
    tables = sorted({t for t, _ in seen}, key=lambda t: (t is None, str(t)))
    rows = []
    for t in tables:
        order = list(ref[t]["rows"]) if t in ref else []
        order += [g for (tt, g) in seen if tt == t and g not in order]
        for g in order:
            got = seen.get((t, g))
            want = ref.get(t, {}).get("rows", {}).get(g)
            row = {"table": t or "-", "gate": g, "status": "ok" if got and want else
                   ("MISSING" if want else "NO-REFERENCE")}
            for i, m in enumerate(METRICS):
                row[m] = None if got is None else float(got[m])
                row["ref_" + m] = None if want is None else float(want[i])
                row["d_" + m] = (None if got is None or want is None
                                 else abs(row[m] - row["ref_" + m]))
            rows.append(row)
    return rows


REPORT_COLUMNS = ("table", "gate", *METRICS, *("ref_" + m for m in METRICS),
                  *("d_" + m for m in METRICS), "status")


def _fmt(v):
    if v is None:
        return "--"
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def cmd_report(a) -> int:
    d = Path(a.dir)
    if not d.is_dir():
        print(f"no such results directory: {d}", file=sys.stderr)
        return EXIT_CONFIG
    rows = comparison_rows(collect_results(d))
    if a.csv:
        with open(a.csv, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(REPORT_COLUMNS)
            for r in rows:
                w.writerow(["" if r[c] is None else r[c] for c in REPORT_COLUMNS])
    cells = [list(REPORT_COLUMNS)] + [[_fmt(r[c]) for c in REPORT_COLUMNS] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(REPORT_COLUMNS))]
    for row in cells:
        print("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    return EXIT_OK


# ---------------------------------------------------------------------------
# case-studies


def cmd_cases(a) -> int:
    checks = cases.run_all()
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.value:.3e} (threshold {c.threshold:g}) {c.detail}")
    failed = sum(not c.passed for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return EXIT_OK if not failed else EXIT_FAIL


# ---------------------------------------------------------------------------
# plot-data

PANELS = {
    "a": "panel_a_eta.csv",
    "b": "panel_b_costs.csv",
    "c": "panel_c_rabi_1j.csv",
    "d": "panel_d_rabi_rest.csv",
    "e": "panel_e_detunings.csv",
    "f": "panel_f_operator.csv",
}


def _pair(name):
    return name.split("_", 1)[1] if name.startswith("Omega") else ""


# (c) couplings of level 1, (d) the remaining Rabi couplings, (e) detunings
PANEL_GROUPS = {
    "c": lambda h: _pair(h).startswith("1"),
    "d": lambda h: _pair(h) != "" and not _pair(h).startswith("1"),
    "e": lambda h: h.startswith("Delta_"),
}


def _sibling(traj: Path, kind: str) -> Path:
    name = traj.name
    base = name[: -len(".trajectory.csv")] if name.endswith(".trajectory.csv") else traj.stem
    return traj.with_name(f"{base}.{kind}.csv")


def plot_data(traj_path, out_dir, schedule_path=None, operator_path=None) -> dict[str, Path]:
    traj_path = Path(traj_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    header, tr = read_numeric_csv(traj_path, required=("t", "eta", "f_plane", "f_phase", "fidelity"))
    col = {h: tr[:, i] for i, h in enumerate(header)}
    written = {
        "a": write_numeric_csv(out / PANELS["a"], ("t", "eta"), (col["t"], col["eta"])),
        "b": write_numeric_csv(out / PANELS["b"], ("t", "fidelity", "f_plane", "f_phase"),
                               (col["t"], col["fidelity"], col["f_plane"], col["f_phase"])),
    }
    sched = Path(schedule_path) if schedule_path else _sibling(traj_path, "fine_schedule")
    if sched.exists():
        sh, sv = read_numeric_csv(sched, required=("t",))
        for panel, keep in PANEL_GROUPS.items():
            idx = [i for i, h in enumerate(sh) if keep(h)]
            written[panel] = write_numeric_csv(out / PANELS[panel], ["t", *(sh[i] for i in idx)],
                                               [sv[:, 0], *(sv[:, i] for i in idx)])
    else:
        log.warning("no schedule file %s; skipping panels c-e", sched)
    op = Path(operator_path) if operator_path else _sibling(traj_path, "operator")
    if op.exists():
        oh, ov = read_numeric_csv(op, required=("row", "col", "re_aligned", "im_aligned"))
        c = {h: ov[:, i] for i, h in enumerate(oh)}
        written["f"] = write_numeric_csv(out / PANELS["f"], ("row", "col", "re", "im"),
                                         (c["row"], c["col"], c["re_aligned"], c["im_aligned"]))
    else:
        log.warning("no operator file %s; skipping panel f", op)
    return written


def cmd_plot(a) -> int:
    try:
        written = plot_data(a.input, a.out, a.schedule, a.operator)
    except CsvFormatError as e:
        print(f"parse error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    for k in sorted(written):
        print(f"panel {k}: {written[k]}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# gate


def cmd_gate(a) -> int:
    if a.name is None:
        for e in gates.CATALOG.values():
            print(f"{e.name:10s} {e.provenance}")
        return EXIT_OK
    try:
        e = gates.gate(a.name)
    except KeyError as err:
        print(err.args[0], file=sys.stderr)
        return EXIT_CONFIG
    print(e.name)
    for row in e.matrix:
        print("  ".join(f"{z.real:+.4f}{z.imag:+.4f}j" for z in row))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qsl-forge", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="run one experiment config")
    r.add_argument("--config")
    r.add_argument("--preset", help="reference table number (1-7)")
    r.add_argument("--gate", action="append", help="gate name; repeat for several")
    r.add_argument("--control", choices=("full16", "limited7"))
    r.add_argument("--weights", nargs=2, type=float, metavar=("P1", "P2"))
    r.add_argument("--optimizer", choices=("pmp", "crab"))
    r.add_argument("--iterations", type=int)
    r.add_argument("--budget", type=int)
    r.add_argument("--n-t", dest="n_t", type=int)
    r.add_argument("--t-f", dest="t_f", type=float)
    r.add_argument("--step-mode", choices=("fixed", "adaptive"))
    r.add_argument("--epsilon0", type=float)
    r.add_argument("--n-modes", type=int)
    r.add_argument("--rng-seed", type=int)
    r.add_argument("--output-dir")
    r.add_argument("--table")
    r.set_defaults(func=cmd_run)

    t = sub.add_parser("report-tables", help="compare results against the reference tables")
    t.add_argument("--dir", required=True)
    t.add_argument("--csv", help="also write the comparison as CSV")
    t.set_defaults(func=cmd_report)

    c = sub.add_parser("case-studies", help="run the geometric case-study checks")
    c.set_defaults(func=cmd_cases)

    pl = sub.add_parser("plot-data", help="write figure-ready panel CSVs from a trajectory")
    pl.add_argument("--in", dest="input", required=True)
    pl.add_argument("--out", required=True)
    pl.add_argument("--schedule")
    pl.add_argument("--operator")
    pl.set_defaults(func=cmd_plot)

    g = sub.add_parser("gate", help="print a catalog gate (no name: list the catalog)")
    g.add_argument("name", nargs="?")
    g.set_defaults(func=cmd_gate)
    return p


def main(argv=None) -> int:
    a = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return a.func(a)


if __name__ == "__main__":
    sys.exit(main())
