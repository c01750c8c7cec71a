"""Command-line front end: protocol evaluation, figure sweeps, validation.

Subcommands: ``protocol`` (one-shot evaluation), ``sweep`` (loss grids for
the gate figures, threshold curve, finite-offline-gain study), ``cluster``
(edge-node nullifier variance), ``validate`` (invariant suite).  Sweeps
write CSV or JSON with a fixed 12-significant-digit float format so a
given configuration reproduces byte-identical files; ``--plot`` renders a
PNG next to the data file.

Exit codes: 0 success, 1 usage error, 2 numerical failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from . import __version__
from .elements import OpaParams
from .gstate import ContractViolation
from .metrics import asymptotics, log_negativity_closed, max_tolerable_noise
from .optimize import (
    GP_G1_FLOOR,
    OptimizationFailure,
    analytic_optimum_ideal,
    optimize_gains,
    threshold_eta_gp,
)
from .oracle import integrate_opa_moments
from .protocols import (
    BmParams,
    EbParams,
    GpParams,
    SbParams,
    build,
    closed_form_noise,
    verify_gate_shape,
)

GENERATOR_ID = f"qndlink {__version__}"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2
EXIT_IO = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fmt(value):
    """Fixed CSV cell formatting: 12 significant digits, '.' decimal."""
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def _parse_grid(text):
    """Comma list or start:stop:step (inclusive stop within half a step)."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"grid {text!r} must be start:stop:step")
        start, stop, step = (float(p) for p in parts)
        if step <= 0:
            raise ValueError("grid step must be positive")
        out = []
        v = start
        while v <= stop + step / 2:
            out.append(round(v, 12))
            v += step
    else:
        out = [float(p) for p in text.split(",") if p]
    if not out:
        raise ValueError(f"empty grid {text!r}")
    return out


def _loss_grid(args):
    """(loss_db, T) pairs from --loss-db or --T flags."""
    if args.loss_db and args.T:
        raise ValueError("give either --loss-db or --T, not both")
    if args.T:
        ts = _parse_grid(args.T)
        return [(-10.0 * math.log10(t), t) for t in ts]
    text = args.loss_db or "0:10:0.5"
    dbs = _parse_grid(text)
    return [(db, 10.0 ** (-db / 10.0)) for db in dbs]


# ---------------------------------------------------------------------------
# output writers


def _write_rows(path, fieldnames, rows, fmt, meta, plot=None):
    if fmt == "json":
        payload = {"meta": meta, "rows": rows}
        text = json.dumps(payload, indent=1, sort_keys=True)
    else:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row.get(k)) for k in fieldnames})
        text = buf.getvalue()
    try:
        if path == "-":
            sys.stdout.write(text)
        else:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
    except OSError as exc:
        raise _IoFailure(str(exc)) from exc
    if plot is not None and path != "-":
        plot(os.path.splitext(path)[0] + ".png", rows)


class _IoFailure(Exception):
    pass


def _plot_gates(png_path, rows):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6))
    series = {}
    for row in rows:
        key = (row["scheme"], row["case"], row["eta"])
        series.setdefault(key, []).append(row)
    for (scheme, case, eta), pts in sorted(series.items()):
        pts = sorted(pts, key=lambda r: r["loss_db"])
        x = [p["loss_db"] for p in pts]
        label = f"{scheme} {case}" + (f" eta={eta:g}" if case != "ideal" else "")
        axes[0].plot(x, [p["E_N"] for p in pts], label=label)
        axes[1].plot(x, [p["xi"] for p in pts], label=label)
    axes[0].set_xlabel("channel losses [dB]")
    axes[0].set_ylabel("logarithmic negativity")
    axes[1].set_xlabel("channel losses [dB]")
    axes[1].set_ylabel("excess noise")
    axes[0].legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(png_path, dpi=160)
    plt.close(fig)


def _plot_threshold(png_path, rows):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.4))
    pts = sorted(rows, key=lambda r: r["loss_db"])
    ax.plot([p["loss_db"] for p in pts], [p["eta_threshold"] for p in pts])
    ax.set_xlabel("channel losses [dB]")
    ax.set_ylabel("threshold amplifier efficiency")
    fig.tight_layout()
    fig.savefig(png_path, dpi=160)
    plt.close(fig)


def _plot_finite_g1(png_path, rows):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.4))
    multi_g1 = len({r["G1"] for r in rows}) > 1
    series = {}
    for row in rows:
        key = row["nbar"] if multi_g1 else (row["nbar"], row["G1"])
        series.setdefault(key, []).append(row)
    for key, pts in sorted(series.items()):
        if multi_g1:
            pts = sorted(pts, key=lambda r: r["G1"])
            ax.plot([p["G1"] for p in pts], [p["E_N"] for p in pts], label=f"nbar={key:g}")
            ax.set_xscale("log")
            ax.set_xlabel("offline amplifier gain G1")
        else:
            pts = sorted(pts, key=lambda r: r["loss_db"])
            ax.plot([p["loss_db"] for p in pts], [p["E_N"] for p in pts],
                    label=f"nbar={key[0]:g} G1={key[1]:g}")
            ax.set_xlabel("channel losses [dB]")
    ax.set_ylabel("logarithmic negativity")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(png_path, dpi=160)
    plt.close(fig)


def _plot_cluster(png_path, rows):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.4))
    series = {}
    for row in rows:
        series.setdefault(row["S"], []).append(row)
    for s, pts in sorted(series.items()):
        pts = sorted(pts, key=lambda r: r["loss_db"])
        ax.plot([p["loss_db"] for p in pts], [p["var_edge"] for p in pts], label=f"S={s:g}")
    if rows:
        ax.axhline(rows[0]["threshold"], color="k", lw=0.8, ls="--")
    ax.set_xlabel("channel losses [dB]")
    ax.set_ylabel("edge-node nullifier variance")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(png_path, dpi=160)
    plt.close(fig)


# ---------------------------------------------------------------------------
# sweep evaluation (module-level for the process pool)

_GATE_FIELDS = ["scheme", "case", "g", "loss_db", "T", "eta", "xi", "E_N", "E_N_log2",
                "ratio", "g_A", "g_0", "g_B", "G1", "G2", "G3", "evaluations"]


def _eval_gate_point(task):
    scheme, case, g, loss_db, T, eta, starts = task
    res = optimize_gains(scheme, g, T, eta, case, starts=starts)
    _, xi_ideal = analytic_optimum_ideal("gp" if scheme == "gp" else "sb", g, T)
    e_ideal = log_negativity_closed(g, xi_ideal)
    ratio = res.E_N / e_ideal if e_ideal > 0 else None
    bp = res.best_params
    return {
        "scheme": scheme, "case": case, "g": g, "loss_db": loss_db, "T": T,
        "eta": eta if case != "ideal" else 1.0,
        "xi": res.xi, "E_N": res.E_N,
        "E_N_log2": res.E_N / math.log(2.0),
        "ratio": ratio,
        "g_A": bp.get("g_A"), "g_0": bp.get("g_0"), "g_B": bp.get("g_B"),
        "G1": bp.get("G1"), "G2": bp.get("G2"), "G3": bp.get("G3"),
        "evaluations": res.evaluations,
    }


def _eval_threshold_point(task):
    g, loss_db, T, starts = task
    res = threshold_eta_gp(g, T, starts=starts)
    return {
        "g": g, "loss_db": loss_db, "T": T,
        "eta_threshold": res.eta_star if res.converged else None,
        "xi_on_at_threshold": res.xi_on if res.converged else None,
        "xi_off": res.xi_off,
        "converged": res.converged,
    }


def _eval_finite_g1_point(task):
    g, loss_db, T, eta, case, G1, nbar, starts = task
    res = optimize_gains("gp", g, T, eta, case, nbar=nbar, G1=G1, starts=starts)
    bp = res.best_params
    return {
        "g": g, "loss_db": loss_db, "T": T, "eta": eta if case != "ideal" else 1.0,
        "case": case, "G1": G1, "nbar": nbar,
        "xi": res.xi, "E_N": res.E_N, "E_N_log2": res.E_N / math.log(2.0),
        "g_A": bp.get("g_A"), "g_B": bp.get("g_B"), "G2": bp.get("G2"),
        "evaluations": res.evaluations,
    }


def _pool_map(fn, tasks, workers):
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


# ---------------------------------------------------------------------------
# subcommands


def cmd_protocol(args):
    scheme = args.scheme
    if args.T is not None and args.loss_db is not None:
        raise ValueError("give either --T or --loss-db")
    T = args.T if args.T is not None else 10.0 ** (-(args.loss_db or 0.0) / 10.0)
    case = "ideal" if args.ideal else args.case
    eta = 1.0 if args.ideal else args.eta

    if args.optimal:
        res = optimize_gains(scheme, args.g, T, eta, case, nbar=args.nbar,
                             G1=args.G1 if scheme == "gp" else None)
        params = res.params_record()
    else:
        params = _explicit_params(scheme, args, T, eta, case)
    realization = build(scheme, params)
    budget = realization.budget
    closed = closed_form_noise(scheme, params)
    residual = verify_gate_shape(realization)
    e_n = log_negativity_closed(args.g, 0.5 * (budget.xi_x + budget.xi_p))

    print(f"scheme: {scheme}   case: {case}   g = {args.g:g}   T = {T:.6g}   eta = {eta:g}")
    print(f"parameters: {params}")
    print(f"xi_x = {budget.xi_x:.12g}")
    print(f"xi_p = {budget.xi_p:.12g}")
    print(f"closed-form xi_x = {closed.xi_x:.12g}, xi_p = {closed.xi_p:.12g}")
    print(f"E_N = {e_n:.12g}   (max tolerable noise 2g = {max_tolerable_noise(args.g):g})")
    print(f"gate-shape residual = {residual:.3e}")
    print("per-source noise contributions (x, p):")
    for label, (cx, cp) in sorted(budget.per_source.items()):
        print(f"  {label:>8s}: {cx:.12g}  {cp:.12g}")
    return EXIT_OK


def _explicit_params(scheme, args, T, eta, case):
    def opa(G, position):
        if case == "ideal":
            e = 1.0
        elif case == "off":
            e = eta if position == 1 else 1.0
        else:
            e = eta
        if case == "off" and position > 1:
            G = 1.0
        return OpaParams(G, e)

    if scheme == "sb":
        if None in (args.g_a, args.G1, args.G2):
            raise ValueError("sb without --optimal needs --g-a, --G1, --G2")
        return SbParams(args.g, args.g_a, opa(args.G1, 1), opa(args.G2, 2), T)
    if scheme == "eb":
        if None in (args.g_a, args.g0, args.G1, args.G2, args.G3):
            raise ValueError("eb without --optimal needs --g-a, --g0, --G1, --G2, --G3")
        return EbParams(args.g, args.g_a, args.g0, opa(args.G1, 1),
                        opa(args.G2, 2), opa(args.G3, 3), T)
    if scheme == "bm":
        if None in (args.g_a, args.g_b, args.G1, args.G2, args.G3):
            raise ValueError("bm without --optimal needs --g-a, --g-b, --G1, --G2, --G3")
        return BmParams(args.g, args.g_a, args.g_b, opa(args.G1, 1),
                        opa(args.G2, 2), opa(args.G3, 3), T)
    if scheme == "gp":
        if None in (args.g_b, args.G2):
            raise ValueError("gp without --optimal needs --g-b and --G2")
        g1 = args.G1 if args.G1 is not None else GP_G1_FLOOR
        return GpParams(args.g, args.g_b, opa(g1, 1), opa(args.G2, 2), T,
                        mediator_nbar=args.nbar, g_A=args.g_a)
    raise ValueError(f"unknown scheme {scheme!r}")


def cmd_sweep(args):
    losses = _loss_grid(args)
    meta = {"version": __version__, "generator": GENERATOR_ID,
            "config": {k: v for k, v in sorted(vars(args).items())
                       if k not in ("func",) and v is not None}}

    if args.mode == "gates":
        schemes = [s.strip() for s in args.schemes.split(",") if s.strip()]
        cases = [c.strip() for c in args.cases.split(",") if c.strip()]
        etas = _parse_grid(args.etas)
        tasks = []
        for scheme in schemes:
            for case in cases:
                for eta in (etas if case != "ideal" else [1.0]):
                    for loss_db, T in losses:
                        tasks.append((scheme, case, args.g, loss_db, T, eta, args.starts))
        rows = _pool_map(_eval_gate_point, tasks, args.workers)
        rows.sort(key=lambda r: (r["scheme"], r["case"], r["eta"], r["loss_db"]))
        _write_rows(args.out, _GATE_FIELDS, rows, args.format, meta,
                    _plot_gates if args.plot else None)
    elif args.mode == "threshold":
        tasks = [(args.g, loss_db, T, args.starts) for loss_db, T in losses if T < 1.0]
        rows = _pool_map(_eval_threshold_point, tasks, args.workers)
        rows.sort(key=lambda r: r["loss_db"])
        fields = ["g", "loss_db", "T", "eta_threshold", "xi_on_at_threshold",
                  "xi_off", "converged"]
        _write_rows(args.out, fields, rows, args.format, meta,
                    _plot_threshold if args.plot else None)
    elif args.mode == "finite-g1":
        g1s = _parse_grid(args.g1_grid)
        nbars = _parse_grid(args.nbars)
        cases = [c.strip() for c in args.cases.split(",") if c.strip()]
        etas = _parse_grid(args.etas)
        tasks = []
        for case in cases:
            for eta in (etas if case != "ideal" else [1.0]):
                for g1 in g1s:
                    for nbar in nbars:
                        for loss_db, T in losses:
                            tasks.append((args.g, loss_db, T, eta, case, g1, nbar, args.starts))
        rows = _pool_map(_eval_finite_g1_point, tasks, args.workers)
        rows.sort(key=lambda r: (r["case"], r["eta"], r["nbar"], r["G1"], r["loss_db"]))
        fields = ["case", "g", "loss_db", "T", "eta", "G1", "nbar", "xi", "E_N",
                  "E_N_log2", "g_A", "g_B", "G2", "evaluations"]
        _write_rows(args.out, fields, rows, args.format, meta,
                    _plot_finite_g1 if args.plot else None)
    else:
        raise ValueError(f"unknown sweep mode {args.mode!r}")
    return EXIT_OK


def cmd_cluster(args):
    losses = _loss_grid(args)
    s_values = _parse_grid(args.S)
    case = "ideal" if args.ideal else args.case
    eta = 1.0 if args.ideal else args.eta
    meta = {"version": __version__, "generator": GENERATOR_ID,
            "config": {k: v for k, v in sorted(vars(args).items())
                       if k not in ("func",) and v is not None}}
    rows = []
    for s in s_values:
        for loss_db, T in losses:
            if case == "ideal":
                _, xi = analytic_optimum_ideal("sb", args.g, T)
            else:
                xi = optimize_gains("sb", args.g, T, eta, case, starts=args.starts).xi
            var_edge = s + xi
            thr = 2.0 * args.g
            rows.append({"S": s, "g": args.g, "loss_db": loss_db, "T": T,
                         "eta": eta, "case": case, "xi_gate": xi,
                         "var_edge": var_edge, "threshold": thr,
                         "entangled": var_edge < thr})
    rows.sort(key=lambda r: (r["S"], r["loss_db"]))
    fields = ["S", "g", "loss_db", "T", "eta", "case", "xi_gate", "var_edge",
              "threshold", "entangled"]
    _write_rows(args.out, fields, rows, args.format, meta,
                _plot_cluster if args.plot else None)
    return EXIT_OK


# ---------------------------------------------------------------------------
# validation suite


def _check_engine_equivalence():
    import numpy as np
    rng = np.random.Generator(np.random.PCG64(20240917))
    worst = 0.0
    detail = ""
    for _ in range(5):
        T = rng.uniform(0.4, 0.95)
        g = rng.uniform(0.5, 2.0)
        opas = [OpaParams(rng.uniform(0.5, 2.5), rng.uniform(0.6, 1.0)) for _ in range(3)]
        cases = {
            "sb": SbParams(g, rng.uniform(0.5, 2.0), opas[0], opas[1], T),
            "eb": EbParams(g, rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0),
                           opas[0], opas[1], opas[2], T),
            "bm": BmParams(g, rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0),
                           opas[0], opas[1], opas[2], T),
            "gp": GpParams(g, rng.uniform(0.8, 2.0), opas[0], opas[1], T,
                           mediator_nbar=rng.uniform(0.0, 3.0), g_A=rng.uniform(0.5, 2.0)),
        }
        for scheme, params in cases.items():
            r = build(scheme, params)
            cf = closed_form_noise(scheme, params)
            cm_x, cm_p = r.cm_excess_noise()
            for a, b in ((r.budget.xi_x, cf.xi_x), (r.budget.xi_p, cf.xi_p),
                         (r.budget.xi_x, cm_x), (r.budget.xi_p, cm_p)):
                rel = abs(a - b) / max(abs(a), abs(b), 1e-12)
                if rel > worst:
                    worst, detail = rel, f"{scheme}: {a!r} vs {b!r}"
    return bool(worst < 1e-10), f"worst relative deviation {worst:.3e} {detail}"


def _check_opa_oracle():
    worst = 0.0
    for chi, gamma, t in [(0.34657359027997264, 0.35667494393873245, 1.0),
                          (0.0, 0.5, 2.0), (0.3, 0.0, 1.5),
                          (1e-9, 0.4, 1.0), (0.2, 0.4, 1.0), (-0.3, 0.3, 1.2)]:
        from .elements import PhysicalOpaParams, opa_from_physical, opa_noise_variances
        eff = opa_from_physical(PhysicalOpaParams(chi, gamma, t))
        vx, vp = opa_noise_variances(eff)
        want_x = eff.eta * eff.G * 1.0 + (1.0 - eff.eta) * vx
        want_p = eff.eta / eff.G * 1.0 + (1.0 - eff.eta) * vp
        got = integrate_opa_moments(chi, gamma, t, steps=600).final()
        for a, b in ((got[0], want_x), (got[1], want_p)):
            worst = max(worst, abs(a - b) / max(abs(b), 1e-12))
    return bool(worst < 1e-8), f"worst relative deviation {worst:.3e}"


def _check_analytic_optima():
    worst = 0.0
    for g in (0.5, 1.0):
        for T in (0.5, 0.9):
            for scheme in ("sb", "gp"):
                _, xi_ref = analytic_optimum_ideal(scheme, g, T)
                res = optimize_gains(scheme, g, T, 1.0, "ideal")
                worst = max(worst, abs(res.xi - xi_ref))
    return bool(worst < 1e-6), f"worst |xi - analytic| = {worst:.3e}"


def _check_asymptotics():
    g = 1.0
    h = 1e-6
    t0 = 1.0 - 1e-4

    def en(scheme, T):
        _, xi = analytic_optimum_ideal(scheme, g, T)
        return log_negativity_closed(g, xi)

    slope_sb = (en("sb", t0 + h) - en("sb", t0 - h)) / (2 * h)
    slope_gp = (en("gp", t0 + h) - en("gp", t0 - h)) / (2 * h)
    ratio = slope_gp / slope_sb
    _, gamma_sb = asymptotics("sb", g)
    ok = bool(abs(ratio - 0.5) < 0.01 and abs(slope_sb - gamma_sb) / gamma_sb < 0.01)
    return ok, f"slope ratio {ratio:.6f}, slope {slope_sb:.6f} vs gamma {gamma_sb:.6f}"


def _check_gate_shape():
    worst = 0.0
    params = {
        "sb": SbParams(1.0, 1.2, OpaParams(2.0, 0.8), OpaParams(1.5, 0.9), 0.7),
        "eb": EbParams(1.0, 0.9, 1.1, OpaParams(2.0, 0.8), OpaParams(0.7, 0.9),
                       OpaParams(1.2, 0.85), 0.7),
        "bm": BmParams(1.0, 0.9, 1.3, OpaParams(2.0, 0.8), OpaParams(1.5, 0.9),
                       OpaParams(1.2, 0.85), 0.7),
        "gp": GpParams(1.0, 1.4, OpaParams(0.4, 0.9), OpaParams(0.7, 0.9), 0.7,
                       mediator_nbar=1.0, g_A=0.8),
    }
    for scheme, p in params.items():
        worst = max(worst, verify_gate_shape(build(scheme, p)))
    return bool(worst < 1e-12), f"worst gate-shape residual {worst:.3e}"


def _check_gp_threshold():
    res = threshold_eta_gp(1.0, 0.8)
    if not res.converged:
        return False, res.note
    err = abs(res.xi_on - res.xi_off)
    return bool(err < 1e-6), f"eta* = {res.eta_star:.8f}, |xi_on - xi_off| = {err:.2e}"


VALIDATION_CHECKS = [
    ("engine-equivalence", _check_engine_equivalence),
    ("opa-moment-oracle", _check_opa_oracle),
    ("analytic-optima", _check_analytic_optima),
    ("asymptotics", _check_asymptotics),
    ("gate-shape", _check_gate_shape),
    ("gp-threshold", _check_gp_threshold),
]


def run_validation_suite():
    results = []
    for name, fn in VALIDATION_CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failed check, not a crash of the suite
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        results.append((name, ok, detail))
    return results


def cmd_validate(_args):
    results = run_validation_suite()
    failed = 0
    for name, ok, detail in results:
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        failed += 0 if ok else 1
    if failed:
        print(f"{failed} of {len(results)} checks failed")
        return EXIT_NUMERICAL
    print(f"all {len(results)} checks passed")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument plumbing


def _add_common_loss_flags(p):
    p.add_argument("--loss-db", help="loss grid in dB: list or start:stop:step")
    p.add_argument("--T", help="transmissivity grid (alternative to --loss-db)")


def build_parser():
    parser = _Parser(prog="qndlink",
                     description="nonlocal QND gates over lossy optical links")
    parser.add_argument("--version", action="version", version=GENERATOR_ID)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("protocol", help="evaluate one protocol realization")
    p.add_argument("scheme", choices=["sb", "eb", "bm", "gp"])
    p.add_argument("--g", type=float, default=1.0)
    p.add_argument("--T", type=float)
    p.add_argument("--loss-db", type=float)
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--case", choices=["ideal", "off", "on"], default="on")
    p.add_argument("--ideal", action="store_true", help="shorthand for --case ideal")
    p.add_argument("--optimal", action="store_true", help="use optimized gains")
    p.add_argument("--g-a", type=float, dest="g_a")
    p.add_argument("--g-b", type=float, dest="g_b")
    p.add_argument("--g0", type=float)
    p.add_argument("--G1", type=float)
    p.add_argument("--G2", type=float)
    p.add_argument("--G3", type=float)
    p.add_argument("--nbar", type=float, default=0.0)
    p.set_defaults(func=cmd_protocol)

    p = sub.add_parser("sweep", help="loss-grid sweeps for the gate figures")
    p.add_argument("--mode", choices=["gates", "threshold", "finite-g1"], default="gates")
    p.add_argument("--schemes", default="sb,gp")
    p.add_argument("--cases", default="ideal")
    p.add_argument("--g", type=float, default=1.0)
    p.add_argument("--etas", default="0.7")
    _add_common_loss_flags(p)
    p.add_argument("--g1-grid", default="0.5", help="offline gains for finite-g1 mode")
    p.add_argument("--nbars", default="0", help="mediator thermal occupations (finite-g1)")
    p.add_argument("--out", default="-")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--plot", action="store_true", help="render a PNG next to the output")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--starts", type=int, default=8, help="optimizer multi-start count")
    p.add_argument("--config", help="INI config file; flags override its values")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("cluster", help="edge-node nullifier variance sweep")
    p.add_argument("--S", default="1,0.5,0.25", help="input squeezing grid")
    p.add_argument("--g", type=float, default=1.0)
    _add_common_loss_flags(p)
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--case", choices=["ideal", "off", "on"], default="ideal")
    p.add_argument("--ideal", action="store_true")
    p.add_argument("--out", default="-")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--plot", action="store_true")
    p.add_argument("--starts", type=int, default=8)
    p.add_argument("--config", help="INI config file; flags override its values")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("validate", help="run the invariant suite")
    p.set_defaults(func=cmd_validate)
    return parser


def _apply_config_file(argv, parser):
    """Merge an INI config section as parser defaults; flags still override."""
    if "--config" not in argv:
        return
    idx = argv.index("--config")
    if idx + 1 >= len(argv) or not argv[0:1]:
        return
    path = argv[idx + 1]
    command = argv[0]
    cfg = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            cfg.read_file(fh)
    except OSError as exc:
        parser.exit(EXIT_IO, f"qndlink: cannot read config {path}: {exc}\n")
    if not cfg.has_section(command):
        return
    defaults = {}
    for key, value in cfg.items(command):
        dest = key.replace("-", "_")
        defaults[dest] = value
    # find the subparser and coerce through its own option types
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            sub = action.choices.get(command)
            if sub is None:
                return
            typed = {}
            for a in sub._actions:
                if a.dest in defaults:
                    raw = defaults[a.dest]
                    if a.type is not None:
                        typed[a.dest] = a.type(raw)
                    elif isinstance(a.const, bool) or isinstance(a.default, bool):
                        typed[a.dest] = raw.strip().lower() in ("1", "true", "yes", "on")
                    else:
                        typed[a.dest] = raw
            sub.set_defaults(**typed)


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    _apply_config_file(argv, parser)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_USAGE
    try:
        return args.func(args)
    except _IoFailure as exc:
        print(f"qndlink: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError) as exc:
        print(f"qndlink: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ContractViolation, OptimizationFailure, ArithmeticError) as exc:
        print(f"qndlink: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
