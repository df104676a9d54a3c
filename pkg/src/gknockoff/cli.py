"""Command-line front end.

Subcommands::

    gknockoff simulate --config study.cfg --out results/
    gknockoff detect data.csv --config detect.cfg --out results/
    gknockoff screen data.csv --config screen.cfg --out results/
    gknockoff template [NAME]

Exit codes: 0 success, 2 bad configuration or input data, 3 numerical
failure, 4 routing impossible (for example a group without rows).
"""

import argparse
import csv
import dataclasses
import os
import sys
import time
from importlib import resources

import numpy as np

from . import _jsonio, config, fusis, pipeline, simulation, structural
from .exceptions import (
    AllDegenerateError,
    GramCheckError,
    InvalidInputError,
    NonFiniteError,
    NotPDError,
    NotPSDError,
    RankDeficientError,
    RoutingError,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_ROUTING = 4

DGP_FIELDS = {f.name for f in dataclasses.fields(simulation.DGPConfig)}


# -- input ------------------------------------------------------------------


def read_table(path):
    """Header and rows of a comma-separated UTF-8 file."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            rows = [r for r in reader if r]
    except OSError as exc:
        raise config.ConfigError(f"cannot read {path}: {exc}") from None
    if not header:
        raise config.ConfigError(f"{path}: missing header row")
    header = [h.strip() for h in header]
    if len(set(header)) != len(header):
        raise config.ConfigError(f"{path}: duplicate column names in header")
    for i, r in enumerate(rows, 2):
        if len(r) != len(header):
            raise config.ConfigError(
                f"{path}: line {i} has {len(r)} fields, header has {len(header)}"
            )
    return header, rows


def numeric_column(header, rows, name, path="<csv>"):
    if name not in header:
        raise config.ConfigError(f"{path}: column {name!r} not found")
    j = header.index(name)
    out = np.empty(len(rows))
    for i, r in enumerate(rows):
        try:
            out[i] = float(r[j])
        except ValueError:
            raise config.ConfigError(
                f"{path}: non-numeric value {r[j]!r} at line {i + 2}, column {name!r}"
            ) from None
        if not np.isfinite(out[i]):
            raise config.ConfigError(
                f"{path}: non-finite value {r[j]!r} at line {i + 2}, column {name!r}"
            )
    return out


def _group_order(labels, requested):
    present = list(dict.fromkeys(labels))
    if requested is None:
        try:
            return sorted(present, key=float)
        except ValueError:
            return sorted(present)
    unknown = sorted(set(present) - set(requested))
    if unknown:
        raise config.ConfigError(f"groups missing from group_order: {', '.join(unknown)}")
    if len(set(requested)) != len(requested):
        raise config.ConfigError("group_order lists a group twice")
    empty = [g for g in requested if g not in present]
    if empty:
        raise RoutingError(f"group(s) without rows: {', '.join(empty)}")
    return list(requested)


def grouped_design(x, groups, order):
    """Block design with one slope block per group, rows sorted by group."""
    n, q = x.shape
    index = {g: k for k, g in enumerate(order)}
    g_idx = np.array([index[g] for g in groups])
    rows = np.argsort(g_idx, kind="stable")
    X = np.zeros((n, len(order) * q))
    for r, k in enumerate(g_idx[rows]):
        X[r, k * q:(k + 1) * q] = x[rows[r]]
    return X, rows


# -- output -----------------------------------------------------------------


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_jsonio.dumps(payload))
        fh.write("\n")


def _cell(v):
    if v is None or (isinstance(v, float) and not np.isfinite(v)):
        return ""
    return format(v, ".17g") if isinstance(v, float) else str(v)


def _write_csv(path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(row[c]) for c in columns])


def _envelope(resolved, command, body, elapsed):
    return {
        "command": command,
        "config": resolved,
        "config_hash": config.config_hash(resolved),
        "result": body,
        "timing": {"elapsed_seconds": elapsed},
    }


# -- commands ---------------------------------------------------------------

CURVE_COLUMNS = ("sweep_value", "fdr_hat", "se_fdr", "power_hat", "se_power")
COVERAGE_COLUMNS = ("sweep_value", "coverage", "coverage_all", "mean_bandwidth")


def _dgp(resolved):
    kw = {k: v for k, v in resolved.items() if k in DGP_FIELDS}
    if kw.get("change_locations") is not None:
        kw["change_locations"] = tuple(kw["change_locations"])
    return simulation.DGPConfig(**kw)


def _detectors(resolved):
    out = {}
    for name in resolved["methods"]:
        if name in out:
            raise config.ConfigError(f"method {name!r} listed twice")
        extra = {"lcd_fraction": resolved["lcd_fraction"]} if name in ("gknockoff", "knockoff") else {}
        try:
            out[name] = simulation.make_detector(name, resolved["q"], resolved["stat"], **extra)
        except InvalidInputError as exc:
            raise config.ConfigError(str(exc)) from None
    return out


def _sweep_values(resolved):
    param, values = resolved["sweep"], resolved["values"]
    if (param is None) != (values is None):
        raise config.ConfigError("set both 'sweep' and 'values' or neither")
    if param is None:
        return None, [None]
    if param not in DGP_FIELDS or param in ("scenario", "cov_kind", "seed", "reps"):
        raise config.ConfigError(f"cannot sweep over {param!r}")
    if not values:
        raise config.ConfigError("'values' is empty")
    return param, values


def cmd_simulate(config_path, out_dir=".", seed=None, threads=1):
    """Run a simulation study and write ``<name>.json`` plus CSV curves.

    Piecewise, integration and hgk scenarios write one ``<name>_<method>.csv``
    per method; the coverage scenario writes ``<name>_coverage.csv``.
    """
    resolved = config.load(config_path, "simulate", {"seed": seed})
    param, values = _sweep_values(resolved)
    try:
        base = _dgp(resolved)
    except InvalidInputError as exc:
        raise config.ConfigError(str(exc)) from None
    os.makedirs(out_dir, exist_ok=True)
    name = resolved["name"]
    start = time.perf_counter()
    written = []
    if base.scenario == "fusis_coverage":
        rows, reps = [], []
        for v in values:
            cfg = base if param is None else dataclasses.replace(base, **{param: v})
            rep = simulation.coverage_study(
                cfg, resolved["bandwidth"], resolved["bandwidths"], resolved["keep_top"], threads
            )
            reps.append({"sweep_value": v, "report": rep})
            rows.append({"sweep_value": v, "coverage": rep.coverage,
                         "coverage_all": rep.coverage_all,
                         "mean_bandwidth": float(np.mean(rep.bandwidths))})
        body = {"coverage": reps}
        path = os.path.join(out_dir, f"{name}_coverage.csv")
        _write_csv(path, COVERAGE_COLUMNS, rows)
        written.append(path)
    else:
        detectors = _detectors(resolved)
        if param is None:
            out = simulation.run_comparison(base, detectors, threads)
            curves = {m: [{"sweep_value": None, "fdr_hat": r.fdr_hat, "se_fdr": r.se_fdr,
                           "power_hat": r.power_hat, "se_power": r.se_power}]
                      for m, r in out.items()}
            reports = [out]
        else:
            curves, reports = simulation.sweep(base, param, values, detectors, threads)
        body = {"curves": curves, "studies": [
            {"sweep_value": v, "reports": {
                m: {k: val for k, val in r.to_dict().items() if k != "elapsed"}
                for m, r in rep.items()}}
            for v, rep in zip(values, reports)
        ]}
        for method, rows in curves.items():
            path = os.path.join(out_dir, f"{name}_{method}.csv")
            _write_csv(path, CURVE_COLUMNS, rows)
            written.append(path)
    elapsed = time.perf_counter() - start
    path = os.path.join(out_dir, f"{name}.json")
    _write_json(path, _envelope(resolved, "simulate", body, elapsed))
    return [path] + written


def _detect_inputs(data_path, resolved):
    header, rows = read_table(data_path)
    if not rows:
        raise config.ConfigError(f"{data_path}: no data rows")
    y = numeric_column(header, rows, resolved["response"], data_path)
    x = np.column_stack([numeric_column(header, rows, c, data_path) for c in resolved["exposure"]])
    names_u = resolved["unpenalized"] or []
    U = (np.column_stack([numeric_column(header, rows, c, data_path) for c in names_u])
         if names_u else None)
    groups = None
    if resolved["group"] is not None:
        if resolved["group"] not in header:
            raise config.ConfigError(f"{data_path}: column {resolved['group']!r} not found")
        j = header.index(resolved["group"])
        groups = [r[j].strip() for r in rows]
    return y, x, U, groups


def _request(X, y, spec, U, resolved):
    try:
        return pipeline.DetectRequest(
            X=X, y=y, spec=spec, q=resolved["q"], method=resolved["method"],
            stat=resolved["stat"], split_fraction=resolved["split_fraction"],
            seed=resolved["seed"], sigma_override=resolved["sigma"], unpenalized=U,
            lcd_fraction=resolved["lcd_fraction"], offset=resolved["offset"],
        )
    except InvalidInputError as exc:
        raise config.ConfigError(str(exc)) from None


def detect_report(data_path, resolved):
    """Detection on a CSV file; returns the JSON-ready result block."""
    y, x, U, groups = _detect_inputs(data_path, resolved)
    exposures = list(resolved["exposure"])
    q_e = len(exposures)
    names_u = resolved["unpenalized"] or []
    body = {"n_rows": int(y.size), "exposure": exposures, "unpenalized": names_u}
    if groups is None:
        if q_e < 2:
            raise config.ConfigError("a profile without groups needs at least two exposure columns")
        spec = structural.spec_for("difference", q_e)
        report = pipeline.detect(_request(x, y, spec, U, resolved))
        sel = np.sort(report.selected)
        changes = [{"position": int(r) + 1, "between": [exposures[r], exposures[r + 1]]}
                   for r in sel]
        beta, alpha = structural.refit(x, y, spec, sel, U)
        coefs = {"profile": dict(zip(exposures, beta.tolist()))}
    else:
        order = _group_order(groups, resolved["group_order"])
        body["groups"] = order
        body["group_sizes"] = [int(sum(g == o for g in groups)) for o in order]
        X, rows = grouped_design(x, groups, order)
        y, U = y[rows], None if U is None else U[rows]
        if len(order) == 1:
            design = x[rows] if U is None else np.hstack([x[rows], U])
            coef, *_ = np.linalg.lstsq(design, y, rcond=None)
            body.update(method_used="none", threshold=None, selected_rows=[], changes=[],
                        coefficients={order[0]: dict(zip(exposures, coef[:q_e].tolist()))},
                        unpenalized_coefficients=dict(zip(names_u, coef[q_e:].tolist())),
                        diagnostics={})
            return body
        spec = structural.spec_for("integration", q_e, len(order))
        report = pipeline.detect(_request(X, y, spec, U, resolved))
        sel = np.sort(report.selected)
        changes = [{"position": int(r) // q_e + 1, "exposure": exposures[int(r) % q_e],
                    "between": [order[r // q_e], order[r // q_e + 1]]} for r in sel]
        beta, alpha = structural.refit(X, y, spec, sel, U)
        coefs = {g: dict(zip(exposures, beta[k * q_e:(k + 1) * q_e].tolist()))
                 for k, g in enumerate(order)}
    body.update(
        method_used=report.method_used, threshold=report.threshold,
        selected_rows=sel.tolist(), changes=changes, coefficients=coefs,
        unpenalized_coefficients=dict(zip(names_u, alpha.tolist())),
        w=None if report.w_stats is None else report.w_stats.w.tolist(),
        diagnostics=report.diagnostics,
    )
    return body


def cmd_detect(data_path, config_path, out_dir=".", seed=None):
    """Detect structural changes in a CSV file and write ``detect_report.json``."""
    resolved = config.load(config_path, "detect", {"seed": seed})
    start = time.perf_counter()
    body = detect_report(data_path, resolved)
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "detect_report.json")
    _write_json(path, _envelope(resolved, "detect", body, time.perf_counter() - start))
    return path, body


def screen_report(data_path, resolved):
    header, rows = read_table(data_path)
    if not rows:
        raise config.ConfigError(f"{data_path}: no data rows")
    cols = resolved["exposure"]
    if cols == ["*"]:
        cols = [h for h in header if h != resolved["response"]]
    y = numeric_column(header, rows, resolved["response"], data_path)
    X = np.column_stack([numeric_column(header, rows, c, data_path) for c in cols])
    keep = resolved["keep_top"]
    if keep is None and resolved["threshold"] is None:
        keep = X.shape[0] - 1
    try:
        cfg = fusis.ScreenConfig(
            None if resolved["bandwidths"] is None else tuple(resolved["bandwidths"]),
            resolved["threshold"], keep, resolved["r2_breaks"],
        )
        res = fusis.select_bandwidth(X, y, cfg)
    except InvalidInputError as exc:
        raise config.ConfigError(str(exc)) from None
    return {
        "exposure": cols,
        "selected": res.selected.tolist(),
        "selected_positions": (res.selected + 1).tolist(),
        "chosen_bandwidth": res.chosen_bandwidth,
        "bandwidths": list(cfg.grid_for(X.shape[1])),
        "r2_by_bandwidth": res.r2_by_bandwidth.tolist(),
        "first_location": res.first_location,
        "statistics": res.statistics.tolist(),
    }


def cmd_screen(data_path, config_path, out_dir=".", seed=None):
    """Screen change locations and write ``screen_report.json``."""
    resolved = config.load(config_path, "screen", {"seed": seed})
    start = time.perf_counter()
    body = screen_report(data_path, resolved)
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "screen_report.json")
    _write_json(path, _envelope(resolved, "screen", body, time.perf_counter() - start))
    return path, body


def template_names():
    files = resources.files("gknockoff").joinpath("templates").iterdir()
    return sorted(f.name[:-4] for f in files if f.name.endswith(".cfg"))


def template_text(name):
    if name not in template_names():
        raise config.ConfigError(
            f"unknown template {name!r}; available: {', '.join(template_names())}"
        )
    return resources.files("gknockoff").joinpath("templates").joinpath(f"{name}.cfg").read_text("utf-8")


# -- entry point --------------------------------------------------------------


def exit_code(exc):
    """Map an exception raised by a command to the process exit code."""
    if isinstance(exc, RoutingError):
        return EXIT_ROUTING
    numeric = (NotPDError, NotPSDError, RankDeficientError, GramCheckError,
               NonFiniteError, AllDegenerateError, np.linalg.LinAlgError)
    if isinstance(exc, numeric):
        return EXIT_NUMERIC
    if isinstance(exc, (config.ConfigError, InvalidInputError)):
        return EXIT_CONFIG
    return None


def _u64(text):
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text):
    v = int(text)
    if v < 1 and v != -1:
        raise argparse.ArgumentTypeError("threads must be >= 1 (or -1 for all cores)")
    return v


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gknockoff", description="Structural-change detection with knockoff FDR control."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=False):
        if data:
            p.add_argument("data", help="input CSV with a header row")
        p.add_argument("--config", required=True, help="key = value config file")
        p.add_argument("--out", default=".", help="output directory (default: .)")
        p.add_argument("--seed", type=_u64, default=None, help="override the config seed")
        return p

    sim = common(sub.add_parser("simulate", help="run a Monte-Carlo study"))
    sim.add_argument("--threads", type=_positive, default=1, help="worker processes")
    common(sub.add_parser("detect", help="detect changes in a CSV file"), data=True)
    common(sub.add_parser("screen", help="screen change locations in a CSV file"), data=True)
    tpl = sub.add_parser("template", help="print a shipped config template")
    tpl.add_argument("name", nargs="?", help="template name; omit to list them")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "template":
            if args.name is None:
                print("\n".join(template_names()))
            else:
                sys.stdout.write(template_text(args.name))
        elif args.command == "simulate":
            for path in cmd_simulate(args.config, args.out, args.seed, args.threads):
                print(path)
        elif args.command == "detect":
            path, body = cmd_detect(args.data, args.config, args.out, args.seed)
            print(path)
            print("changes:", ", ".join(str(c["position"]) for c in body["changes"]) or "none")
        else:
            path, body = cmd_screen(args.data, args.config, args.out, args.seed)
            print(path)
    except Exception as exc:
        code = exit_code(exc)
        if code is None:
            raise
        print(f"error: {exc}", file=sys.stderr)
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
