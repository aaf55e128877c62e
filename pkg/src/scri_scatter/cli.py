"""
Command-line orchestration.

Usage::

    scri-scatter [--config PATH] [--out DIR] [--threads N] [--seed S] SUBCOMMAND

``SUBCOMMAND`` is one of ``chart-audit``, ``evolve-cauchy``, ``evolve-goursat``,
``scatter``, ``energy-audit``, ``lab {sobolev,density,lipschitz,slowdown,picard}``
or ``converge <subcommand>``.  Every run writes ``manifest.json`` next to its
CSV/JSON outputs.  Module errors exit with status 2 and print an error JSON
on stderr (also written to ``error.json``).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import analysis as an
from . import io as sio
from . import scatter as sc
from .cauchygrid import make_lattice
from .chart import chart_audit
from .config import RunConfig, data_function, load_config, make_profile
from .energy import stokes_audit
from .errors import ScriScatterError
from .nullgrid import solve_goursat

LABS = ("sobolev", "density", "lipschitz", "slowdown", "picard")


@dataclass
class RunOutput:
    files: dict
    summary: dict
    ok: bool = True
    # quantity compared across resolutions by ``converge``
    probe: Optional[np.ndarray] = None
    probe_kind: Optional[str] = None
    extra: dict = field(default_factory=dict)


def scatter_config(cfg: RunConfig) -> sc.ScatterConfig:
    g, t = cfg.grid, cfg.tolerance
    return sc.ScatterConfig(
        rstar_extract=g.rstar_extract, extraction_tol=t["extraction_tol"], dr=g.dr, cfl=g.cfl,
        NR=g.Nu + 1, NR_extract=g.NR_extract, edge_margin=g.edge_margin,
        contraction_gate=t["contraction_gate"], picard_max_iter=int(t["picard_max_iter"]),
        taper_width=g.taper_width,
    )


# ---------------------------------------------------------------------------
# Runners
# ---------------------------------------------------------------------------

def run_chart_audit(cfg: RunConfig, level: int = 0) -> RunOutput:
    n = 200 * 2 ** level
    audit = chart_audit(cfg.chart, n, n)
    return RunOutput({"chart_audit.json": json.dumps(audit.to_dict(), indent=2, sort_keys=True)},
                     {"passed": audit.passed, "violations": len(audit.violations)}, audit.passed)


def run_evolve_cauchy(cfg: RunConfig, level: int = 0) -> RunOutput:
    """Outgoing pulse ``f(t - r*)`` on the slice, traced to future null infinity."""
    f = data_function(cfg.data) if cfg.data.family != "random" else None
    if f is None:
        raise ValueError("evolve-cauchy needs a closed-form data family")
    scfg = scatter_config(cfg)
    rs = make_lattice(cfg.chart.rstar_wall, cfg.grid.rstar_extract, cfg.grid.dr)
    h = 1e-6
    psi = f(-rs)
    psi_t = (f(-rs + h) - f(-rs - h)) / (2.0 * h)
    data = sc.SigmaData.from_cauchy(rs, psi, psi_t, cfg.grid.l, cfg.chart.m)
    u = np.linspace(cfg.data.u_range[0], cfg.data.u_range[1], cfg.grid.Nu + 1)
    prof = sc.trace_T0_plus(data, cfg.b, cfg.chart, u, scfg)
    summary = {"h1_norm": prof.norm, "sigma_energy": sc.sigma_energy(data, cfg.b)}
    if cfg.chart.m == 0.0 and cfg.grid.l == 0 and cfg.b_spec["family"] == "zero":
        ex = f(u)
        den = np.trapezoid(ex ** 2, u)
        summary["rel_l2_vs_exact"] = float(np.sqrt(np.trapezoid((prof.theta - ex) ** 2, u) / den)) if den > 0 else 0.0
    files = sio.profile_files(prof, "scri_plus")
    files.update(sio.sigma_files(data, "sigma0"))
    return RunOutput(files, summary, True, prof.theta[:: 2 ** level], "field")


def run_evolve_goursat(cfg: RunConfig, level: int = 0) -> RunOutput:
    theta = make_profile(cfg)
    fld = solve_goursat(theta, "past", cfg.b, cfg.chart, cfg.grid.NR)
    k = 2 ** level
    stride_u = max(1, (fld.x.size - 1) // 128)
    stride_R = max(1, (fld.R.size - 1) // 128)
    U, RR = np.meshgrid(fld.x[::stride_u], fld.R[::stride_R], indexing="ij")
    files = {"field.csv": sio.table_csv(["u", "R", "psi"], [U.ravel(), RR.ravel(), fld.values[::stride_u, ::stride_R].ravel()])}
    files.update(sio.profile_files(theta, "scri_plus"))
    summary = {"worldtube_flux": fld.meta["worldtube_flux"], "max_abs": float(np.max(np.abs(fld.values)))}
    return RunOutput(files, summary, True, fld.values[::k, ::k], "field")


def run_scatter(cfg: RunConfig, level: int = 0) -> RunOutput:
    theta = make_profile(cfg, side="minus")
    b = cfg.b
    scfg = scatter_config(cfg)
    sigma = sc.trace_T_minus_0(theta, b, cfg.chart, scfg)
    out = sc.trace_T0_plus(sigma, b, cfg.chart, -theta.u[::-1], scfg)
    energies = {"sigma_energy": sc.sigma_energy(sigma, b), "h1_in": theta.norm, "h1_out": out.norm,
                "sigma_edge_amplitude": sigma.edge_amplitude}
    files = {}
    files.update(sio.profile_files(theta, "scri_minus"))
    files.update(sio.sigma_files(sigma, "sigma0"))
    files.update(sio.profile_files(out, "scri_plus"))
    files["energies.json"] = json.dumps(energies, indent=2, sort_keys=True)
    links = {"input": "scri_minus.csv", "intermediate": "sigma0.csv", "output": "scri_plus.csv",
             "energy_reports": ["energies.json"]}
    return RunOutput(files, energies, True, out.theta[:: 2 ** level], "field", {"links": links})


def run_energy_audit(cfg: RunConfig, level: int = 0) -> RunOutput:
    theta = make_profile(cfg)
    fld = solve_goursat(theta, "past", cfg.b, cfg.chart, cfg.grid.NR)
    rep = stokes_audit(fld, cfg.b, cfg.chart, n_leaves=cfg.grid.n_leaves)
    # eps and u0 must also pass the coordinate inequalities on the audited region
    audit = chart_audit(cfg.chart)
    files = {"energy_report.json": rep.to_json(), "leaves.csv": rep.leaves_csv(),
             "chart_audit.json": json.dumps(audit.to_dict(), indent=2, sort_keys=True)}
    summary = {"stokes_residual": rep.stokes_residual, "gronwall_constant": rep.gronwall_constant,
               "envelope_ok": rep.envelope_ok, "chart_audit_passed": audit.passed}
    return RunOutput(files, summary, audit.passed, np.array([rep.stokes_residual]), "error")


def _lab_output(res: an.LabResult) -> RunOutput:
    files = {f"lab_{res.name}.json": res.to_json(), f"lab_{res.name}.csv": res.to_csv()}
    return RunOutput(files, {"passed": res.passed, "fit": res.fit}, res.passed)


def run_lab(name: str, cfg: RunConfig, level: int = 0) -> RunOutput:
    lab = cfg.lab
    if name == "sobolev":
        res = an.sobolev_cone_lab(cfg.lab_floats("t_values"), lab.get("family", "constant"),
                                  float(lab.get("band", 2.0)), float(lab.get("slope_tol", 0.1)))
    elif name == "density":
        res = an.density_cutoff_lab([int(v) for v in cfg.lab_floats("n_values")], float(lab.get("exponent_tol", 0.05)))
    elif name == "lipschitz":
        n = int(lab.get("n_pairs", 20))
        side = "minus" if lab.get("map", "T+0") == "S" else "plus"
        u = np.linspace(cfg.data.u_range[0], cfg.data.u_range[1], cfg.grid.Nu + 1)
        support = cfg.data.support
        if side == "minus":
            # past data live on the reflected lattice so that S sees the same geometry
            u, support = -u[::-1], (-support[1], -support[0])
        pool = an.random_profiles(u, n + 1, cfg.seed, support, cfg.data.amplitude, cfg.grid.l, side,
                                  cfg.data.n_bumps)
        pairs = [(pool[i], pool[i + 1]) for i in range(n)]
        res = an.lipschitz_lab(pairs, lab.get("map", "T+0"), cfg.b, cfg.chart, scatter_config(cfg))
    elif name == "slowdown":
        res = an.slowdown_lab(make_profile(cfg), cfg.lab_floats("lambdas"), cfg.b, cfg.chart,
                              float(lab.get("R_lab", 0.05)), int(lab.get("n_samples", 11)), cfg.grid.NR)
    elif name == "picard":
        res = an.picard_lab(make_profile(cfg), cfg.b, cfg.chart, cfg.lab_floats("scales"), cfg.grid.NR,
                            int(cfg.tolerance["picard_max_iter"]))
    else:
        raise ValueError(f"unknown lab {name!r}")
    return _lab_output(res)


RUNNERS: dict = {
    "chart-audit": run_chart_audit,
    "evolve-cauchy": run_evolve_cauchy,
    "evolve-goursat": run_evolve_goursat,
    "scatter": run_scatter,
    "energy-audit": run_energy_audit,
}
for _lab in LABS:
    RUNNERS[f"lab {_lab}"] = (lambda name: lambda cfg, level=0: run_lab(name, cfg, level))(_lab)


# ---------------------------------------------------------------------------
# Convergence sweeps
# ---------------------------------------------------------------------------

def observed_order(outputs: list) -> Optional[float]:
    """
    Order from three runs at refinement levels 0, 1, 2.

    Fields use the self-convergence ratio ``|f0 - f1| / |f1 - f2|`` on the
    coarse lattice; error probes use the mean of the two successive ratios.
    """
    kinds = {o.probe_kind for o in outputs}
    if kinds == {None} or len(kinds) != 1:
        return None
    if kinds == {"field"}:
        a, b, c = (np.asarray(o.probe, dtype=float) for o in outputs)
        num, den = np.linalg.norm(a - b), np.linalg.norm(b - c)
        if den == 0.0:
            return None
        return float(math.log2(num / den))
    e = [float(np.abs(o.probe).max()) for o in outputs]
    if min(e) <= 0.0:
        return None
    return float(0.5 * (math.log2(e[0] / e[1]) + math.log2(e[1] / e[2])))


def run_converge(sub: str, cfg: RunConfig) -> RunOutput:
    runner = RUNNERS[sub]
    cfgs = [cfg.refined(k) for k in range(3)]
    with ThreadPoolExecutor(max_workers=cfg.threads) as ex:
        outs = list(ex.map(lambda k: runner(cfgs[k], k), range(3)))
    order = observed_order(outs)
    files = {}
    for k, o in enumerate(outs):
        for name, text in o.files.items():
            files[f"level{k}_{name}"] = text
    summary = {"subcommand": sub, "order": order, "levels": [o.summary for o in outs]}
    files["convergence.json"] = json.dumps(summary, indent=2, sort_keys=True, default=float)
    return RunOutput(files, summary, all(o.ok for o in outs))


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="scri-scatter", description="Conformal scattering laboratory.")
    p.add_argument("--config", help="INI file with [chart] [grid] [b] [data] [lab] [tolerance] [run] sections")
    p.add_argument("--out", default="scri_scatter_out", help="output directory (SCRI_SCATTER_OUT overrides)")
    p.add_argument("--threads", type=int, default=None, help="worker threads for sweeps")
    p.add_argument("--seed", type=int, default=None, help="unsigned 64-bit seed")
    p.add_argument("command", nargs="+", help="subcommand, e.g. 'scatter', 'lab density', 'converge evolve-goursat'")
    return p


def _split_command(words: list) -> tuple:
    converge = words[0] == "converge"
    rest = words[1:] if converge else words
    if not rest:
        raise ValueError("converge needs a subcommand")
    sub = " ".join(rest[:2]) if rest[0] == "lab" else rest[0]
    if len(rest) > (2 if rest[0] == "lab" else 1):
        raise ValueError(f"unexpected arguments {rest}")
    if sub not in RUNNERS:
        raise ValueError(f"unknown subcommand {sub!r}")
    return converge, sub


def run(words: list, config_path: Optional[str], out_dir: str, threads: Optional[int] = None,
        seed: Optional[int] = None) -> int:
    """Run one command and write its artifacts; returns the exit status."""
    start = time.time()
    try:
        converge, sub = _split_command(words)
        cfg = load_config(sub, config_path, seed, threads)
        np.random.seed(cfg.seed % 2 ** 32)
        out = run_converge(sub, cfg) if converge else RUNNERS[sub](cfg)
    except (ScriScatterError, ValueError, OSError) as exc:
        err = exc.to_dict() if isinstance(exc, ScriScatterError) else {"error": type(exc).__name__, "message": str(exc), "details": {}}
        text = json.dumps(err, sort_keys=True, default=str)
        print(text, file=sys.stderr)
        try:
            sio.write_files(out_dir, {"error.json": text})
        except OSError:
            pass
        return 2
    names = sio.write_files(out_dir, out.files)
    manifest = {
        "command": ("converge " if converge else "") + sub,
        "config": json.loads(cfg.canonical()),
        "config_sha256": cfg.digest(),
        "versions": sio.versions(),
        "wall_time_s": time.time() - start,
        "outputs": names,
        "summary": out.summary,
        "ok": out.ok,
    }
    manifest.update(out.extra)
    sio.write_files(out_dir, {"manifest.json": json.dumps(manifest, indent=2, sort_keys=True, default=float)})
    print(json.dumps({"ok": out.ok, "out": out_dir, "summary": out.summary}, sort_keys=True, default=float))
    return 0 if out.ok else 1


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    out_dir = os.environ.get("SCRI_SCATTER_OUT") or args.out
    return run(args.command, args.config, out_dir, args.threads, args.seed)


if __name__ == "__main__":
    sys.exit(main())
