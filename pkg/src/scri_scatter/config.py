"""
Run configuration: flat INI sections, per-subcommand desk defaults and validation.

A config file only needs the keys it changes; everything else comes from
the defaults of the subcommand being run.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .chart import ChartParams
from .coeff import CoeffB, b_from_config
from .nullgrid import ScriProfile

SECTIONS = ("chart", "grid", "b", "data", "lab", "tolerance", "run")

BASE = {
    "chart": {"m": "1.0", "u_min": "-170", "u_max": "-70", "R_max": "0.0125", "eps": "0.1", "u0": "-100"},
    "grid": {
        "Nu": "256", "NR": "257", "l": "0", "dr": "0.12", "cfl": "0.5", "NR_extract": "129",
        "rstar_extract": "80", "taper_width": "10", "n_leaves": "32", "edge_margin": "40",
    },
    "b": {"family": "zero"},
    "data": {"family": "gaussian", "amplitude": "1.0", "centre": "-105", "width": "4",
             "support_lo": "-135", "support_hi": "-75", "u_lo": "-170", "u_hi": "-70", "n_bumps": "3"},
    "lab": {},
    "tolerance": {"contraction_gate": "0.9", "picard_max_iter": "60", "extraction_tol": "1e-3"},
    "run": {"seed": "0", "threads": "1"},
}

# desk configurations; each entry overrides BASE section by section
PROFILES = {
    "chart-audit": {},
    "evolve-cauchy": {
        "chart": {"m": "0.0", "R_max": "0.1"},
        "grid": {"Nu": "256", "NR_extract": "257", "dr": "0.2"},
        "data": {"centre": "-40", "width": "3", "support_lo": "-70", "support_hi": "-10",
                 "u_lo": "-70", "u_hi": "-10"},
    },
    "evolve-goursat": {
        "chart": {"R_max": "0.1"},
        "grid": {"Nu": "128", "NR": "129", "l": "1"},
        "data": {"centre": "-120", "width": "10", "support_lo": "-165", "support_hi": "-75"},
    },
    "scatter": {
        "chart": {"R_max": "0.1"},
        "grid": {"Nu": "384", "dr": "0.12"},
        "data": {"family": "bump", "amplitude": "0.1", "support_lo": "28", "support_hi": "52",
                 "u_lo": "-100", "u_hi": "80"},
    },
    "energy-audit": {},
    "lab sobolev": {"lab": {"family": "constant", "t_values": "0.1,0.2,0.5,1,2,5", "band": "2", "slope_tol": "0.1"}},
    "lab density": {"lab": {"n_values": "2,4,8,16,32,64", "exponent_tol": "0.05"}},
    "lab lipschitz": {
        "chart": {"R_max": "0.1"},
        "grid": {"Nu": "384", "dr": "0.12"},
        "data": {"family": "random", "amplitude": "0.1", "support_lo": "-52", "support_hi": "-28",
                 "u_lo": "-80", "u_hi": "100"},
        "lab": {"map": "T+0", "n_pairs": "20"},
    },
    "lab slowdown": {
        "chart": {"R_max": "0.4"},
        "grid": {"Nu": "400", "NR": "513"},
        "data": {"family": "bump", "support_lo": "-55", "support_hi": "-25", "u_lo": "-60", "u_hi": "-20"},
        "lab": {"lambdas": "0.6,0.7,0.8,0.9,0.95,0.99", "R_lab": "0.05", "n_samples": "11"},
    },
    "lab picard": {
        "chart": {"R_max": "0.1"},
        "grid": {"Nu": "400", "NR": "257"},
        "b": {"family": "cutoff", "c": "1", "R1": "0.01", "R2": "0.02"},
        "data": {"family": "random", "support_lo": "-60", "support_hi": "-30", "u_lo": "-80", "u_hi": "0"},
        "lab": {"scales": "0.003,0.01,0.02,0.05,0.3"},
    },
}


@dataclass(frozen=True)
class GridSpec:
    Nu: int
    NR: int
    l: int
    dr: float
    cfl: float
    NR_extract: int
    rstar_extract: float
    taper_width: float
    n_leaves: int
    edge_margin: float


@dataclass(frozen=True)
class DataSpec:
    family: str
    amplitude: float
    centre: float
    width: float
    support: tuple
    u_range: tuple
    n_bumps: int


@dataclass
class RunConfig:
    """Validated, merged configuration of one run."""

    subcommand: str
    chart: ChartParams
    grid: GridSpec
    b_spec: dict
    data: DataSpec
    lab: dict
    tolerance: dict
    seed: int
    threads: int
    raw: dict = field(repr=False, default_factory=dict)

    @property
    def b(self) -> CoeffB:
        spec = dict(self.b_spec)
        return b_from_config(spec.pop("family"), **spec)

    def canonical(self) -> str:
        """Sorted JSON of the merged sections; the config hash is taken over this string."""
        return json.dumps({"subcommand": self.subcommand, **self.raw}, sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def lab_floats(self, key: str) -> list:
        return [float(v) for v in str(self.lab[key]).split(",") if v.strip()]

    def refined(self, level: int) -> "RunConfig":
        """Copy with every resolution knob refined by ``2**level``."""
        k = 2 ** level
        raw = {s: dict(v) for s, v in self.raw.items()}
        g = raw["grid"]
        g["Nu"] = str(self.grid.Nu * k)
        g["NR"] = str((self.grid.NR - 1) * k + 1)
        g["NR_extract"] = str((self.grid.NR_extract - 1) * k + 1)
        g["dr"] = repr(self.grid.dr / k)
        return _build(self.subcommand, raw)


def _merged(subcommand: str, parser: Optional[configparser.ConfigParser]) -> dict:
    if subcommand not in PROFILES:
        raise ValueError(f"unknown subcommand {subcommand!r}")
    raw = {s: dict(BASE[s]) for s in SECTIONS}
    for s, vals in PROFILES[subcommand].items():
        raw[s].update(vals)
    if parser is not None:
        for s in parser.sections():
            if s not in SECTIONS:
                raise ValueError(f"unknown config section [{s}]")
            if s == "b":
                # a new family replaces the old parameters
                raw["b"] = {}
            raw[s].update(dict(parser.items(s)))
    return raw


def _build(subcommand: str, raw: dict) -> RunConfig:
    c, g, d = raw["chart"], raw["grid"], raw["data"]
    chart = ChartParams(m=float(c["m"]), u_min=float(c["u_min"]), u_max=float(c["u_max"]),
                        R_max=float(c["R_max"]), eps=float(c["eps"]), u0=float(c["u0"]))
    grid = GridSpec(Nu=int(g["Nu"]), NR=int(g["NR"]), l=int(g["l"]), dr=float(g["dr"]), cfl=float(g["cfl"]),
                    NR_extract=int(g["NR_extract"]), rstar_extract=float(g["rstar_extract"]),
                    taper_width=float(g["taper_width"]), n_leaves=int(g["n_leaves"]),
                    edge_margin=float(g["edge_margin"]))
    if grid.Nu < 8 or grid.NR < 5 or grid.NR_extract < 5:
        raise ValueError("grid too coarse: need Nu >= 8, NR >= 5 and NR_extract >= 5")
    if grid.l < 0:
        raise ValueError("l must be non-negative")
    if not 0 < grid.cfl <= 0.5:
        raise ValueError("cfl must lie in (0, 1/2]")
    if grid.dr <= 0 or grid.n_leaves < 2:
        raise ValueError("dr must be positive and n_leaves at least 2")
    data = DataSpec(family=d["family"].lower(), amplitude=float(d["amplitude"]), centre=float(d["centre"]),
                    width=float(d["width"]), support=(float(d["support_lo"]), float(d["support_hi"])),
                    u_range=(float(d["u_lo"]), float(d["u_hi"])), n_bumps=int(d["n_bumps"]))
    if data.family not in ("gaussian", "bump", "zero", "random"):
        raise ValueError(f"unknown data family {data.family!r}")
    lo, hi = data.support
    if not data.u_range[0] <= lo < hi <= data.u_range[1]:
        raise ValueError("data support must lie inside [u_lo, u_hi]")
    if data.family == "gaussian" and data.width <= 0:
        raise ValueError("gaussian width must be positive")
    b_spec = dict(raw["b"])
    if "family" not in b_spec:
        raise ValueError("[b] needs a family")
    spec = dict(b_spec)
    b_from_config(spec.pop("family"), **spec)
    if grid.l > 0 and b_spec["family"].lower() != "zero":
        raise ValueError("nonlinear runs are restricted to l = 0")
    tol = {k: float(v) for k, v in raw["tolerance"].items()}
    run = raw["run"]
    seed = int(run["seed"])
    if not 0 <= seed < 2 ** 64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    threads = int(run["threads"])
    if threads < 1:
        raise ValueError("threads must be at least 1")
    return RunConfig(subcommand, chart, grid, b_spec, data, dict(raw["lab"]), tol, seed, threads, raw)


def load_config(subcommand: str, path: Optional[str] = None, seed: Optional[int] = None,
                threads: Optional[int] = None) -> RunConfig:
    """
    Merge defaults, an optional INI file and command-line overrides, then validate.

    Raises
    ------
    ValueError
        On unknown sections, subcommands or families, and on values that
        violate a module precondition.
    """
    parser = None
    if path is not None:
        parser = configparser.ConfigParser()
        parser.optionxform = str
        with open(path) as fh:
            parser.read_file(fh)
    raw = _merged(subcommand, parser)
    if seed is not None:
        raw["run"]["seed"] = str(seed)
    if threads is not None:
        raw["run"]["threads"] = str(threads)
    return _build(subcommand, raw)


def bump_profile(u, lo: float, hi: float):
    """Smooth bump on ``[lo, hi]`` with peak value 1."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = (u > lo) & (u < hi)
    z = (u[inside] - lo) / (hi - lo)
    out[inside] = np.exp(4.0 - 1.0 / (z * (1.0 - z)))
    return out


def data_function(spec: DataSpec):
    """The data family as a function of one lattice variable (zero outside the support)."""
    lo, hi = spec.support
    a = spec.amplitude
    if spec.family == "gaussian":
        return lambda x: a * np.exp(-(((np.asarray(x) - spec.centre) / spec.width) ** 2)) * ((x >= lo) & (x <= hi))
    if spec.family == "bump":
        return lambda x: a * bump_profile(x, lo, hi)
    if spec.family == "zero":
        return lambda x: np.zeros_like(np.asarray(x, dtype=float))
    raise ValueError("random data have no closed form")


def make_profile(cfg: RunConfig, side: str = "plus", index: int = 0) -> ScriProfile:
    """Scri data on ``Nu + 1`` lattice points over ``[u_lo, u_hi]``."""
    spec = cfg.data
    u = np.linspace(spec.u_range[0], spec.u_range[1], cfg.grid.Nu + 1)
    if spec.family == "random":
        from .analysis import random_profiles

        return random_profiles(u, index + 1, cfg.seed, spec.support, spec.amplitude, cfg.grid.l, side,
                               spec.n_bumps)[index]
    return ScriProfile.from_function(data_function(spec), u, spec.support, cfg.grid.l, side)

