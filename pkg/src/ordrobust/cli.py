"""Command-line entry point: ``ordrobust analyze|batch|meta|scale-use|oracle``.

Exit codes: 0 success, 2 invalid input (diagnostic JSON on stderr),
3 numerical non-convergence (partial output still written).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import audit as aud
from .cost import alpha_for, cost_from_variance, default_epsilon
from .dataset import DataError, load_dataset, load_elicitation
from .inference import p_bounds, p_from_t
from .optimize import MAX_ORACLE_K, ConvergenceError, InfeasibleError, zoom_oracle
from .regression import build_kernel, fit_battery
from .reversal import beta_range_at_budget, min_cost_sign_reversal
from .scaleuse import METHODS, N_BOOT, estimate_from_records

log = logging.getLogger("ordrobust")

EXIT_OK, EXIT_INVALID, EXIT_NONCONVERGED = 0, 2, 3
ORACLE_BUDGETS = (0.05, 0.1, 0.2, 0.4, 0.8)


class Invalid(Exception):
    """Input problem reported with exit code 2."""


def load_schema(name: str) -> dict:
    text = resources.files("ordrobust").joinpath("schemas", f"{name}.schema.json").read_text("utf-8")
    return json.loads(text)


def _validate(doc: dict, schema: str) -> None:
    try:
        jsonschema.validate(doc, load_schema(schema))
    except jsonschema.ValidationError as exc:
        raise Invalid(f"{schema}: {exc.message}") from None


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False, default=_json_default) + "\n"


def _emit(doc, out: str | None) -> None:
    text = dumps(doc)
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise Invalid(f"{path}: invalid JSON ({exc})") from None


def _threads() -> int:
    raw = os.environ.get("ORDROBUST_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise Invalid(f"ORDROBUST_THREADS must be an integer, got {raw!r}") from None


def _dataset_config(path, args) -> dict:
    cfg = _read_json(path)
    if getattr(args, "alpha_policy", None):
        cfg["alpha_policy"] = args.alpha_policy
    if getattr(args, "se_type", None):
        cfg["se_type"] = args.se_type
    _validate(cfg, "dataset_config")
    return cfg


# -- subcommands -----------------------------------------------------------------------

def cmd_analyze(args) -> int:
    cfg = _dataset_config(args.config, args)
    if args.grid_step:
        cfg["budget_step"] = args.grid_step
    data = load_dataset(args.data, cfg)
    report = aud.audit_dataset(data, cfg, label=cfg.get("label"))
    _validate(report, "audit_report")
    _emit(report, args.out)
    return EXIT_OK if report["converged"] else EXIT_NONCONVERGED


def cmd_batch(args) -> int:
    manifest_path = Path(args.config)
    manifest = _read_json(manifest_path)
    _validate(manifest, "manifest")
    base = manifest_path.parent
    step = args.grid_step or manifest.get("grid_step", aud.CURVE_STEP)

    def run(item):
        cfg = _dataset_config(base / item["config"], args)
        data = load_dataset(base / item["data"], cfg)
        return aud.audit_dataset(data, cfg, label=item.get("label"))

    reports = aud.run_batch(manifest["items"], run, _threads())
    ok = [r for r in reports if r is not None]
    if not ok:
        raise Invalid("no batch item succeeded")
    coefficients = []
    for item, rep in zip(manifest["items"], reports):
        if rep is None:
            continue
        for c in rep["coefficients"]:
            coefficients.append({**c, "label": item.get("label"), "stratum": item.get("stratum")})
    sign_rows, sig_rows = aud.reversal_curves(coefficients, step)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    aud.write_curve_csv(sign_rows, out / "sign_reversal_curves.csv")
    aud.write_curve_csv(sig_rows, out / "significance_reversal_curves.csv")
    reversible = [c for c in coefficients if c["reversible"]]
    summary = {
        "schema_version": aud.SCHEMA_VERSION,
        "n_items": len(reports),
        "n_failed": len(reports) - len(ok),
        "failed": [it.get("label", i) for i, (it, r) in enumerate(zip(manifest["items"], reports))
                   if r is None],
        "n_coefficients": len(coefficients),
        "reversible_share": len(reversible) / len(coefficients) if coefficients else 0.0,
        "grid_step": step,
        "converged": all(r["converged"] for r in ok),
        "audits": ok,
    }
    _validate(summary, "batch_summary")
    (out / "summary.json").write_text(dumps(summary), encoding="utf-8")
    return EXIT_OK if summary["converged"] else EXIT_NONCONVERGED


def cmd_meta(args) -> int:
    cfg = _read_json(args.config)
    _validate(cfg, "meta_config")
    base = Path(args.config).parent
    audits = []
    for p in cfg["audits"]:
        doc = _read_json(base / p)
        # batch summaries carry their audits inline
        audits.extend(doc["audits"] if "audits" in doc else [doc])
    num, den = cfg["pair"]
    try:
        result = aud.meta_summary(audits, num, den)
    except KeyError as exc:
        raise Invalid(str(exc)) from None
    _emit(result, args.out)
    return EXIT_OK


def cmd_scale_use(args) -> int:
    cfg = _read_json(args.config)
    _validate(cfg, "elicitation_config")
    records = load_elicitation(args.data, cfg)
    labels = np.asarray(cfg["labels"], dtype=float)
    policy = args.alpha_policy or cfg.get("alpha_policy", "fixed2")
    alpha = alpha_for(labels.size, policy)
    n_boot = int(cfg.get("n_boot", N_BOOT))
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    methods = cfg.get("methods") or [m for m in METHODS if m != "preset"]
    results = {}
    for m in methods:
        results[m] = estimate_from_records(records, labels, m, alpha, n_boot, seed).to_dict()
    _emit({"schema_version": aud.SCHEMA_VERSION, "seed": seed, "estimates": results}, args.out)
    return EXIT_OK


def oracle_comparison(data, resolution: int, budgets=ORACLE_BUDGETS) -> dict:
    """Optimizer results against the (zoomed) lattice oracle for every focal."""
    battery = fit_battery(data)
    K, L = battery.K, battery.L
    if K > MAX_ORACLE_K:
        raise Invalid(f"oracle comparison needs K <= {MAX_ORACLE_K}, got {K}")
    alpha = alpha_for(K, data.alpha_policy)
    eps = default_epsilon(K, L)

    def costs(W):
        return cost_from_variance(np.var(W, axis=1), K, L, alpha)

    focals = list(data.design.focal_names) or [n for n in battery.names if n != "const"]
    rows, worst = [], 0.0
    for f in focals:
        b = battery.b(f)
        kernel = build_kernel(battery, f, data.se_type)
        row = {"focal": f}
        rev = min_cost_sign_reversal(battery, f, alpha, eps)
        if rev.reversible and rev.min_cost is not None:
            s = np.sign(rev.beta_at_identity)
            _, oc = zoom_oracle(lambda W: np.where(s * (W @ b) <= 0, costs(W), np.inf),
                                K, L, resolution, eps=eps)
            row["reversal_cost"] = {"optimizer": rev.min_cost.c, "oracle": oc,
                                    "diff": abs(rev.min_cost.c - oc)}
            worst = max(worst, row["reversal_cost"]["diff"])
        ranges = []
        for c in budgets:
            lo, hi, _, _ = beta_range_at_budget(battery, f, c, alpha, eps)
            feas = lambda W, c=c: costs(W) <= c  # noqa: E731
            _, olo = zoom_oracle(lambda W: np.where(feas(W), W @ b, np.inf), K, L, resolution,
                                 eps=eps)
            _, ohi = zoom_oracle(lambda W: np.where(feas(W), W @ b, -np.inf), K, L, resolution,
                                 maximize=True, eps=eps)
            d = max(abs(lo - olo), abs(hi - ohi))
            worst = max(worst, d)
            ranges.append({"c": c, "lo": lo, "hi": hi, "oracle_lo": olo, "oracle_hi": ohi,
                           "diff": d})
        row["beta_ranges"] = ranges
        p_min, p_max, *_ = p_bounds(kernel, eps)
        def tabs(W):
            q = np.einsum("ij,jk,ik->i", W, kernel.V, W)
            return np.abs(W @ b) / np.sqrt(q)

        _, tmax = zoom_oracle(tabs, K, L, resolution, maximize=True, eps=eps)
        _, tmin = zoom_oracle(tabs, K, L, resolution, eps=eps)
        op_min, op_max = p_from_t(tmax, kernel.dof_t), p_from_t(tmin, kernel.dof_t)
        d = max(abs(p_min - op_min), abs(p_max - op_max))
        worst = max(worst, d)
        row["p_bounds"] = {"p_min": p_min, "p_max": p_max, "oracle_p_min": op_min,
                           "oracle_p_max": op_max, "diff": d}
        rows.append(row)
    return {"resolution": resolution, "K": K, "max_discrepancy": worst, "focals": rows}


def cmd_oracle(args) -> int:
    cfg = _dataset_config(args.config, args)
    data = load_dataset(args.data, cfg)
    _emit(oracle_comparison(data, args.resolution), args.out)
    return EXIT_OK


# -- plumbing --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ordrobust", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True):
        p.add_argument("--config", required=True)
        if data:
            p.add_argument("--data", required=True)
        p.add_argument("--out")
        p.add_argument("--seed", type=int)
        p.add_argument("--alpha-policy", choices=("fixed2", "log10"))
        p.add_argument("--se-type", choices=("homoskedastic", "robust", "clustered"))
        p.add_argument("--grid-step", type=float)
        return p

    common(sub.add_parser("analyze", help="audit one regression")).set_defaults(func=cmd_analyze)
    common(sub.add_parser("batch", help="audit a manifest of regressions"),
           data=False).set_defaults(func=cmd_batch)
    common(sub.add_parser("meta", help="meta-summarize audits"), data=False).set_defaults(func=cmd_meta)
    common(sub.add_parser("scale-use", help="estimate scale-use non-linearity")).set_defaults(
        func=cmd_scale_use)
    p = common(sub.add_parser("oracle", help="compare optimizers with the grid oracle"))
    p.add_argument("--resolution", type=int, default=100)
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (Invalid, DataError, InfeasibleError, FileNotFoundError, KeyError, ValueError) as exc:
        sys.stderr.write(dumps({"error": type(exc).__name__, "message": str(exc)}))
        return EXIT_INVALID
    except ConvergenceError as exc:
        sys.stderr.write(dumps({"error": "ConvergenceError", "message": str(exc)}))
        return EXIT_NONCONVERGED


if __name__ == "__main__":
    sys.exit(main())
