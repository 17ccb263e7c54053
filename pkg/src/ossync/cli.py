"""Command-line frontend.

    ossync design   --scenario S --out DIR
    ossync simulate --scenario S --out DIR
    ossync verify   --scenario S --out DIR [--tol X]
    ossync report   --scenario S --out DIR [--plots]

Each command reads the artifacts of the previous ones from DIR.  Exit codes:
0 success, 1 input error or missing artifact, 2 infeasible design or failed
verification, 3 numerical failure.  ``OSSYNC_LOG`` sets the log level.
"""

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import design as design_mod
from . import eboss, massim, netgraph, scenario
from .exceptions import (ImaginaryAxisHamiltonian, InfeasibleInitialPoint, NoFeasibleQ,
                         NoSolution, NoSpanningTree, NoStabilizingSolution, NotStabilizable,
                         OssyncError, ScenarioError, SigmaTooLarge)

log = logging.getLogger("ossync")

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_NUMERIC = 0, 1, 2, 3
INFEASIBLE = (NoSolution, NoFeasibleQ, InfeasibleInitialPoint, NotStabilizable,
              NoStabilizingSolution, ImaginaryAxisHamiltonian, NoSpanningTree, SigmaTooLarge)
ENERGY_MATCH_TOL = 0.005


class MissingArtifact(Exception):
    pass


def _need(path):
    if not path.exists():
        raise MissingArtifact(f"missing artifact {path}; run the earlier commands first")
    return path


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _read_rows(path):
    with open(_need(path), newline="") as fh:
        return list(csv.DictReader(fh))


def _fmt(x):
    return repr(float(x))


def load_designs(out):
    with open(_need(out / "designs.json")) as fh:
        return [design_mod.AgentDesign.from_dict(d) for d in json.load(fh)["agents"]]


def cmd_design(scen, out, args):
    xbar0 = design_mod.consensus_point(scen)
    designs = []
    for spec in scen.agents:
        log.info("designing %s (%s)", spec.name, spec.strategy)
        try:
            d = design_mod.design_agent(spec, scen.exo, xbar0)
        except INFEASIBLE as exc:
            print(f"design failed for {spec.name} ({spec.strategy}): {exc}", file=sys.stderr)
            return EXIT_INFEASIBLE
        except OssyncError as exc:
            print(f"numerical failure for {spec.name} ({spec.strategy}): {exc}", file=sys.stderr)
            return EXIT_NUMERIC
        if d.history is not None:
            d.history.to_csv(out / f"path_{d.name}.csv")
        designs.append(d)
    with open(out / "designs.json", "w") as fh:
        json.dump({"scenario": scen.name, "xbar0": xbar0.tolist(),
                   "agents": [d.to_dict() for d in designs]}, fh, indent=1)
    rows = []
    for d in designs:
        q = "" if d.Q is None else " ".join(_fmt(v) for v in np.asarray(d.Q).ravel())
        rows.append([d.name, d.strategy, _fmt(d.objective), _fmt(d.energy), q])
    _write_rows(out / "design_summary.csv", ["agent", "strategy", "objective", "energy", "Q"], rows)
    for r in rows:
        print(f"{r[0]:>10}  {r[1]:<5}  objective {float(r[2]):10.4f}  J_u {float(r[3]):10.4f}")
    return EXIT_OK


def cmd_simulate(scen, out, args):
    designs = load_designs(out)
    net = design_mod.network(scen, designs)
    rec = massim.simulate(net)
    rec.to_csv(out / "trace.csv", every=args.stride)
    T = scen.exo.period
    window = (scen.t_settle, scen.t_settle + T)
    rows = []
    residuals = massim.transition_check(rec, designs)
    for i, d in enumerate(designs):
        measured = massim.measure_energy(rec, d.Gamma, d.R, T, window=window, agent=i)
        rows.append([d.name, _fmt(d.energy), _fmt(measured), _fmt(residuals[i])])
    _write_rows(out / "energy.csv", ["agent", "closed_form", "measured", "transition_residual"], rows)
    disagreement = float(rec.exo_disagreement()[-1])
    consensus_err = float(np.max(np.abs(np.array([x[-1] for x in rec.xbar]) - rec.consensus[-1])))
    _write_rows(out / "sync.csv", ["quantity", "value"],
                [["exo_disagreement_t_end", _fmt(disagreement)],
                 ["consensus_prediction_error_t_end", _fmt(consensus_err)],
                 ["t_end", _fmt(rec.t[-1])]])
    print(f"simulated {rec.t[-1]:.1f} s, exosystem disagreement {disagreement:.2e}")
    return EXIT_OK


def _expected(scen, name, default_tol):
    val = scen.expectations.get("energies", {}).get(name)
    if val is None:
        return None
    if isinstance(val, list):
        return float(val[0]), float(val[1])
    return float(val), default_tol


def cmd_verify(scen, out, args):
    designs = load_designs(out)
    energy = {r["agent"]: r for r in _read_rows(out / "energy.csv")}
    sync = {r["quantity"]: float(r["value"]) for r in _read_rows(out / "sync.csv")}
    tol = args.tol if args.tol is not None else scen.expectations.get("energy_rel_tol", 0.02)
    rows = []

    def check(name, agent, value, threshold, ok):
        rows.append([name, agent, _fmt(value), _fmt(threshold), "PASS" if ok else "FAIL"])

    L = netgraph.laplacian(scen.graph)
    K = netgraph.sync_gain(scen.exo.A, scen.Bbar, scen.sigma, L).K
    lam = np.linalg.eigvals(L)
    worst = max(float(np.max(np.linalg.eigvals(scen.exo.A - li * scen.Bbar @ K).real))
                for li in lam[np.argsort(np.abs(lam))[1:]])
    check("sync_gain_max_real_eig", "-", worst, 0.0, worst < 0)
    check("exo_disagreement_t_end", "-", sync["exo_disagreement_t_end"], 1e-6,
          sync["exo_disagreement_t_end"] < 1e-6)
    check("consensus_prediction_error", "-", sync["consensus_prediction_error_t_end"], 1e-6,
          sync["consensus_prediction_error_t_end"] < 1e-6)
    for spec, d in zip(scen.agents, designs):
        e = energy[d.name]
        closed, measured = float(e["closed_form"]), float(e["measured"])
        rel = abs(measured - closed) / max(abs(closed), 1e-300)
        check("energy_measured_vs_closed", d.name, rel, ENERGY_MATCH_TOL, rel <= ENERGY_MATCH_TOL)
        exp = _expected(scen, d.name, tol)
        if exp is not None:
            rel = abs(closed - exp[0]) / exp[0]
            check("energy_vs_expected", d.name, rel, exp[1], rel <= exp[1])
        res = float(e["transition_residual"])
        check("transition_residual", d.name, res, 1e-4, res <= 1e-4)
        eps = d.eps if d.eps is not None else np.zeros(spec.model.p)
        rep = massim.verify_error_bounds(spec.model, d.Pi, scen.exo, eps)
        for j in range(spec.model.p):
            if d.eps is not None:
                check(f"bound_y{j}", d.name, rep.sampled[j], eps[j] + rep.tol,
                      rep.sampled[j] <= eps[j] + rep.tol)
            elif d.strategy == "EXS":
                check(f"stationary_error_y{j}", d.name, rep.exact[j], 1e-6, rep.exact[j] <= 1e-6)
            else:
                check(f"stationary_error_y{j}", d.name, rep.exact[j], float("inf"), True)
        if d.eps is not None and d.P is not None:
            es = eboss.EbossSpec(spec.model, scen.exo, d.R, d.eps)
            cert = float(eboss.bound_certificate(es, d.Pi, d.P).min())
            check("bound_certificate_min_eig", d.name, cert, 0.0, cert >= -1e-9)
    order = scen.expectations.get("ordering", [])
    if order:
        vals = [float(energy[n]["closed_form"]) for n in order]
        ok = all(a > b for a, b in zip(vals, vals[1:]))
        check("energy_ordering", ">".join(order), vals[-1], vals[0], ok)
    _write_rows(out / "verify.csv", ["check", "agent", "value", "threshold", "result"], rows)
    for r in rows:
        print(f"{r[4]}  {r[0]:<30} {r[1]:<22} {float(r[2]):12.6g}  (threshold {float(r[3]):.6g})")
    failed = sum(r[4] == "FAIL" for r in rows)
    print(f"{len(rows) - failed}/{len(rows)} checks passed")
    return EXIT_OK if not failed else EXIT_INFEASIBLE


def _plots(scen, out, designs):
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        log.warning("matplotlib not available, skipping plots")
        return []
    rows = _read_rows(out / "trace.csv")
    t = np.array([float(r["t"]) for r in rows])
    files = []
    p = scen.exo.p
    fig, axes = plt.subplots(p, 1, figsize=(8, 2.6 * p), sharex=True)
    axes = np.atleast_1d(axes)
    for d in designs:
        for j in range(p):
            e = np.array([float(r[f"{d.name}_e{j}"]) for r in rows])
            line, = axes[j].plot(t, e, lw=0.8, label=d.name)
            if d.eps is not None:
                axes[j].axhline(d.eps[j], color=line.get_color(), ls="--", lw=0.6)
                axes[j].axhline(-d.eps[j], color=line.get_color(), ls="--", lw=0.6)
    for j, ax in enumerate(axes):
        ax.set_ylabel(f"sync error y{j}")
    axes[-1].set_xlabel("t [s]")
    axes[0].legend(fontsize=7, ncol=len(designs))
    fig.tight_layout()
    fig.savefig(out / "sync_errors.svg")
    plt.close(fig)
    files.append("sync_errors.svg")

    fig, ax = plt.subplots(figsize=(8, 3))
    for d in designs:
        xb = np.array([[float(r[f"{d.name}_xbar{k}"]) for k in range(scen.exo.n)] for r in rows])
        W = d.Gamma.T @ d.R @ d.Gamma
        power = 0.5 * np.einsum("ti,ij,tj->t", xb, W, xb)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (power[1:] + power[:-1]) * np.diff(t))])
        ax.plot(t, cum, lw=0.8, label=d.name)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("stationary input energy")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(out / "energy.svg")
    plt.close(fig)
    files.append("energy.svg")
    return files


def _table(rows, cols):
    lines = ["| " + " | ".join(cols) + " |", "|" + "---|" * len(cols)]
    lines += ["| " + " | ".join(r[c] for c in cols) + " |" for r in rows]
    return "\n".join(lines)


def cmd_report(scen, out, args):
    summary = _read_rows(out / "design_summary.csv")
    energy = _read_rows(out / "energy.csv")
    checks = _read_rows(out / "verify.csv")
    sync = _read_rows(out / "sync.csv")
    designs = load_designs(out)
    parts = [f"# Report: {scen.name}", "",
             "All numbers below are copied verbatim from the CSV files in this directory.", "",
             "## Designs (design_summary.csv)", "", _table(summary, ["agent", "strategy", "objective", "energy", "Q"]),
             "", "## Energies (energy.csv)", "",
             _table(energy, ["agent", "closed_form", "measured", "transition_residual"]),
             "", "## Synchronization (sync.csv)", "", _table(sync, ["quantity", "value"]),
             "", "## Verification (verify.csv)", "",
             _table(checks, ["check", "agent", "value", "threshold", "result"])]
    paths = sorted(out.glob("path_*.csv"))
    if paths:
        parts += ["", "## Path-following (path_*.csv)", ""]
        for path in paths:
            rows = _read_rows(path)
            acc = [r for r in rows if r["accepted"] == "1"]
            parts.append(f"- {path.name}: {len(rows) - 1} iterations, {len(acc) - 1} accepted, "
                         f"final objective {rows[-1]['objective']}, last delta_rel {rows[-1]['delta_rel']}")
    if args.plots:
        files = _plots(scen, out, designs)
        if files:
            parts += ["", "## Plots", ""] + [f"- {f}" for f in files]
    (out / "report.md").write_text("\n".join(parts) + "\n")
    print(f"wrote {out / 'report.md'}")
    return EXIT_OK


COMMANDS = {"design": cmd_design, "simulate": cmd_simulate, "verify": cmd_verify,
            "report": cmd_report}


def build_parser():
    ap = argparse.ArgumentParser(prog="ossync", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--scenario", required=True, help="scenario JSON file")
    ap.add_argument("--out", required=True, help="artifact directory")
    ap.add_argument("--plots", action="store_true", help="write SVG plots with the report")
    ap.add_argument("--tol", type=float, default=None,
                    help="relative tolerance for energies against the scenario expectations")
    ap.add_argument("--stride", type=int, default=10, help="time-step stride of trace.csv")
    return ap


def main(argv=None):
    level = os.environ.get("OSSYNC_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    out = Path(args.out)
    try:
        scen = scenario.load(args.scenario)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](scen, out, args)
    except (ScenarioError, MissingArtifact, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except INFEASIBLE as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except OssyncError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
