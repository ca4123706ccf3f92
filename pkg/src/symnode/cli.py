"""Command-line entry point: simulate | train | audit-symmetry | grad-check | compare.

Exit codes: 0 success, 2 training did not converge, 3 input or validation
error, 4 numerical failure (including failed audit or gradient checks).

Primary outputs (CSV tables, JSON reports) depend only on the resolved
config and inputs. Wall-clock data goes to a separate ``*_meta.json``.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import config as config_mod
from .adjoint import AdjointState, adjoint_gradient, fd_gradient, mse_loss
from .datagen import generate_dataset, load_dataset, perturb_dataset, save_dataset
from .errors import ConfigError, DatasetError, NumericalError, SymNodeError
from .lie import (
    GroupConstants,
    determining_residual_forward,
    determining_residuals_backward,
    epsilon_scaling_audit,
)
from .model import ModelParams
from .ode import SolverConfig
from .training import LossWeights, compare_runs, train

log = logging.getLogger("symnode")

EXIT_OK, EXIT_NOT_CONVERGED, EXIT_INPUT, EXIT_NUMERICAL = 0, 2, 3, 4

CONVERGENCE_COLUMNS = [
    "iter", "theta1", "theta2", "mse", "reg_f", "reg_g", "reg_h", "reg_i",
    "total", "grad_norm", "adjoint_fd_gap",
]


def _clean(obj):
    """Replace non-finite floats by None so reports stay strict JSON."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj


def write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(_clean(doc), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def write_meta(out, name, started):
    write_json(
        out / f"{name}_meta.json",
        {
            "command": name,
            "started": started.isoformat(),
            "wall_time_s": (datetime.datetime.now() - started).total_seconds(),
            "python": sys.version.split()[0],
            "numpy": np.__version__,
        },
    )


def _dataset_path(cfg, out):
    return Path(cfg["data.path"]) if cfg["data.path"] else out / "dataset.json"


def _params(p):
    return {"theta1": p.theta1, "theta2": p.theta2}


# ---- commands ---------------------------------------------------------------

def cmd_simulate(cfg, out: Path) -> int:
    ds = generate_dataset(
        config_mod.true_params(cfg),
        cfg["data.n"],
        (cfg["data.z0_min"], cfg["data.z0_max"]),
        cfg["data.obs_times"],
        cfg["data.noise_sigma"],
        cfg["data.seed"],
        cfg["data.margin"],
    )
    path = out / "dataset.json"
    save_dataset(ds, path)
    print(f"wrote {path}: n={len(ds)} sigma={cfg['data.noise_sigma']} seed={cfg['data.seed']}")
    return EXIT_OK


def _path_rows(report):
    for e in report.theta_path:
        l = e.loss
        yield [e.iter, e.theta1, e.theta2, l.mse, l.reg_f, l.reg_g, l.reg_h, l.reg_i,
               l.total, e.grad_norm, e.adjoint_fd_gap]


def _report_doc(report, truth):
    doc = {
        "converged": report.converged,
        "failure": report.failure,
        "iterations": report.iterations,
        "final_params": _params(report.final_params),
        "final_loss": report.final_loss.as_dict(),
        "theta_path": [
            {"iter": e.iter, "theta1": e.theta1, "theta2": e.theta2, "loss": e.loss.as_dict(),
             "grad_norm": e.grad_norm, "adjoint_fd_gap": e.adjoint_fd_gap}
            for e in report.theta_path
        ],
    }
    if truth is not None:
        doc["param_error_inf"] = max(
            abs(report.final_params.theta1 - truth.theta1),
            abs(report.final_params.theta2 - truth.theta2),
        )
    return doc


def cmd_train(cfg, out: Path) -> int:
    ds = load_dataset(_dataset_path(cfg, out))
    tcfg = config_mod.train_config(cfg)
    report = train(ds, config_mod.initial_params(cfg), tcfg)
    write_csv(out / "convergence.csv", CONVERGENCE_COLUMNS, _path_rows(report))
    doc = _report_doc(report, ds.true_params())
    doc["config"] = cfg
    doc["dataset"] = {"n_experiments": len(ds), "n_observations": ds.n_observations}
    write_json(out / "train_report.json", doc)
    p = report.final_params
    print(
        f"{'converged' if report.converged else 'not converged'} after {report.iterations} "
        f"iterations: theta1={p.theta1:.8f} theta2={p.theta2:.8f} "
        f"loss={report.final_loss.total:.3e}"
    )
    if report.failure:
        print(f"training aborted: {report.failure}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK if report.converged else EXIT_NOT_CONVERGED


def _audit_forward(cfg):
    rows = []
    cs = cfg["audit.c_values"]
    for th1, th2 in cfg["audit.theta_grid"]:
        p = ModelParams(th1, th2)
        for t in cfg["audit.t_grid"]:
            for phi in cfg["audit.phi_grid"]:
                z = (phi - th2) / th1
                for c1 in cs:
                    for c2 in cs:
                        for c3 in cs:
                            gc = GroupConstants(c1=c1, c2=c2, c3=c3)
                            r = determining_residual_forward(t, z, p, gc)
                            rows.append([th1, th2, t, phi, z, c1, c2, c3, r])
    return rows


def _audit_backward(cfg, group):
    sets = {
        "exact": GroupConstants(k2=group.k2, k3=group.k3, k4=0.0,
                                g_coeffs=group.g_coeffs[:1], h_coeffs=group.h_coeffs[:1]),
        "k4": GroupConstants(k4=1.0),
    }
    rows = []
    for label, gc in sets.items():
        for th1, th2 in cfg["audit.theta_grid"]:
            p = ModelParams(th1, th2)
            for phi in cfg["audit.phi_grid"]:
                z = (phi - th2) / th1
                closed = th1 * gc.k4 * (1 + math.sin(phi) ** 2) / math.cos(phi)
                for u in cfg["audit.u_grid"]:
                    for v in cfg["audit.vw_grid"]:
                        for w in cfg["audit.vw_grid"]:
                            r = determining_residuals_backward(AdjointState(u, v, w, z), p, gc)
                            rows.append([label, th1, th2, phi, z, u, v, w, gc.k2, gc.k3, gc.k4, *r, closed])
    return rows


def cmd_audit_symmetry(cfg, out: Path) -> int:
    group = config_mod.group_constants(cfg)
    fwd = _audit_forward(cfg)
    write_csv(out / "audit_forward.csv",
              ["theta1", "theta2", "t", "phi", "z", "c1", "c2", "c3", "residual"], fwd)
    bwd = _audit_backward(cfg, group)
    write_csv(out / "audit_backward.csv",
              ["group", "theta1", "theta2", "phi", "z", "u", "v", "w", "k2", "k3", "k4",
               "r1", "r2", "r3", "r4", "r4_closed_form"], bwd)

    th1, th2 = cfg["audit.theta_grid"][0]
    p = ModelParams(th1, th2)
    phi_max, npts = cfg["audit.scaling_phi_max"], cfg["audit.scaling_points"]
    grid = [(phi - th2) / th1 for phi in np.linspace(-phi_max, phi_max, npts).tolist()]
    scaling_sets = {
        "F": GroupConstants(c1=cfg["audit.scaling_c1"], c3=cfg["audit.scaling_c3"]),
        "G": GroupConstants(k4=1.0),
        "H": GroupConstants(k4=1.0),
        "I": GroupConstants(k4=1.0),
    }
    scaling_rows, slopes = [], {}
    for which, gc in scaling_sets.items():
        audit = epsilon_scaling_audit(p, gc, cfg["audit.eps_list"], grid, which=which)
        slopes[which] = audit.slope
        scaling_rows.extend([which, eps, m] for eps, m in audit.rows)
    write_csv(out / "audit_scaling.csv", ["residual", "epsilon", "max_abs"], scaling_rows)

    fwd_max = max(abs(r[-1]) for r in fwd)
    exact_max = max(max(abs(x) for x in r[11:15]) for r in bwd if r[0] == "exact")
    r4_gap = max(abs(r[14] - r[15]) for r in bwd if r[0] == "k4")
    checks = {
        "forward_residual_le_1e-10": fwd_max <= 1e-10,
        "exact_subgroup_residuals_le_1e-10": exact_max <= 1e-10,
        "k4_r4_matches_closed_form_1e-9": r4_gap <= 1e-9,
        "F_slope_in_1.9_2.1": 1.9 <= slopes["F"] <= 2.1,
    }
    write_json(out / "audit_report.json", {
        "config": cfg,
        "forward_max_residual": fwd_max,
        "exact_subgroup_max_residual": exact_max,
        "k4_r4_max_gap_to_closed_form": r4_gap,
        "k4_max_residuals": [max(abs(r[11 + j]) for r in bwd if r[0] == "k4") for j in range(4)],
        "scaling_slopes": slopes,
        "checks": checks,
    })
    for name, ok in checks.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    return EXIT_OK if all(checks.values()) else EXIT_NUMERICAL


def linear_branch_gradient(records, theta2):
    """Closed-form MSE gradient at theta1 = 0, where z(t) = z0 + t*cos(theta2)."""
    n_total = sum(len(r.observations) for r in records)
    c, s = math.cos(theta2), math.sin(theta2)
    g1 = g2 = 0.0
    for rec in records:
        for t, z_obs in rec.observations:
            res = rec.z0 + t * c - z_obs
            g1 += 2 * res * (-s) * (rec.z0 * t + 0.5 * t * t * c) / n_total
            g2 += 2 * res * (-t * s) / n_total
    return g1, g2


def cmd_grad_check(cfg, out: Path) -> int:
    ds = load_dataset(_dataset_path(cfg, out))
    records = list(ds.experiments)
    scfg = SolverConfig(method=cfg["gradcheck.method"], h=cfg["solver.h"],
                        rtol=cfg["gradcheck.rtol"], atol=cfg["gradcheck.atol"],
                        max_steps=cfg["solver.max_steps"])
    tol, step = cfg["gradcheck.rel_tol"], cfg["gradcheck.fd_step"]
    rng = np.random.default_rng(cfg["gradcheck.seed"])
    points = []
    for _ in range(cfg["gradcheck.n_points"]):
        sign = 1.0 if rng.uniform() < 0.5 else -1.0
        points.append(("random", ModelParams(sign * rng.uniform(0.5, 2.0), rng.uniform(-0.5, 0.5))))
    truth = ds.true_params()
    if truth is not None:
        points.append(("optimum", truth))
    points.append(("linear", ModelParams(0.0, 0.3)))

    rows, all_pass = [], True
    for k, (kind, p) in enumerate(points):
        g_adj = adjoint_gradient(records, p, scfg).gradient.as_array()
        g_fd = fd_gradient(lambda q: mse_loss(records, q, scfg), p, step).as_array()
        ref = np.array(linear_branch_gradient(records, p.theta2)) if kind == "linear" else g_fd
        err = np.abs(g_adj - ref) / (1 + np.abs(ref))
        ok = bool(np.all(err <= tol))
        all_pass &= ok
        rows.append([k, kind, p.theta1, p.theta2, *g_adj.tolist(), *g_fd.tolist(),
                     *ref.tolist(), float(err.max()), int(ok)])
    write_csv(out / "gradcheck.csv",
              ["point", "kind", "theta1", "theta2", "adj_g1", "adj_g2", "fd_g1", "fd_g2",
               "ref_g1", "ref_g2", "max_rel_err", "pass"], rows)
    write_json(out / "gradcheck_report.json", {
        "config": cfg, "n_points": len(rows), "all_pass": all_pass,
        "max_rel_err": max(r[-2] for r in rows),
    })
    print(f"{sum(r[-1] for r in rows)}/{len(rows)} gradient checks passed (tol {tol})")
    return EXIT_OK if all_pass else EXIT_NUMERICAL


def cmd_compare(cfg, out: Path) -> int:
    ds = load_dataset(_dataset_path(cfg, out))
    cfg_reg = config_mod.train_config(cfg)
    cfg_plain = cfg_reg.replace(weights=LossWeights.zero())
    p0 = config_mod.initial_params(cfg)
    sigma = cfg["compare.noise_sigma"]
    rows, per_seed = [], []
    for seed in cfg["compare.seeds"]:
        data = perturb_dataset(ds, sigma, seed) if sigma > 0 else ds
        cmp = compare_runs(data, p0, cfg_plain, cfg_reg)
        for arm, rep in (("plain", cmp.plain), ("regularized", cmp.regularized)):
            err = cmp.deltas[f"param_error_{'plain' if arm == 'plain' else 'reg'}"]
            l = rep.final_loss
            rows.append([seed, arm, cmp.mode, rep.final_params.theta1, rep.final_params.theta2,
                         err, l.mse, l.reg_f, l.reg_g, l.reg_h, l.reg_i, l.total,
                         rep.iterations, int(rep.converged)])
        per_seed.append({"seed": seed, "deltas": cmp.deltas,
                         "plain": _report_doc(cmp.plain, data.true_params()) | {"theta_path": None},
                         "regularized": _report_doc(cmp.regularized, data.true_params()) | {"theta_path": None}})
    write_csv(out / "compare.csv",
              ["seed", "arm", "mode", "theta1", "theta2", "param_error_inf", "mse", "reg_f",
               "reg_g", "reg_h", "reg_i", "total", "iterations", "converged"], rows)
    mean_plain = float(np.mean([r[5] for r in rows if r[1] == "plain"]))
    mean_reg = float(np.mean([r[5] for r in rows if r[1] == "regularized"]))
    write_json(out / "compare_report.json", {
        "config": cfg, "noise_sigma": sigma, "seeds": cfg["compare.seeds"],
        "mean_param_error_plain": mean_plain, "mean_param_error_regularized": mean_reg,
        "runs": per_seed,
    })
    print(f"mean |theta - theta*|_inf: plain {mean_plain:.3e}, regularized {mean_reg:.3e}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "audit-symmetry": cmd_audit_symmetry,
    "grad-check": cmd_grad_check,
    "compare": cmd_compare,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="symnode", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="TOML or JSON config file with dotted keys")
        sp.add_argument("--out", default=".", help="output directory (default: .)")
        sp.add_argument("--seed", type=int, help="override data/train/gradcheck seeds")
        sp.add_argument("-v", "--verbose", action="store_true")
    return parser


def run(command, cfg, out) -> int:
    """Run a command with a resolved config dict; returns the exit code."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    started = datetime.datetime.now()
    try:
        code = COMMANDS[command](cfg, out)
    except (ConfigError, DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalError, SymNodeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    write_meta(out, command.replace("-", "_"), started)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        cfg = config_mod.load(args.config) if args.config else config_mod.resolve()
        if args.seed is not None:
            cfg = config_mod.resolve({**cfg, "data.seed": args.seed, "train.seed": args.seed,
                                      "gradcheck.seed": args.seed})
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    out = Path(args.out)
    (out).mkdir(parents=True, exist_ok=True)
    with open(out / f"{args.command.replace('-', '_')}_config.toml", "w") as fh:
        fh.write(config_mod.dumps(cfg))
    return run(args.command, cfg, out)


if __name__ == "__main__":
    sys.exit(main())
