"""
Plain-text persistence: CSV payloads with JSON sidecars, and run manifests.

Numbers in CSV payloads are written with 17 significant digits so that a
rerun with the same config reproduces the files byte for byte.
"""

from __future__ import annotations

import csv
import io
import json
import os
import platform
from typing import Iterable, Sequence

import numpy as np

from .nullgrid import ScriProfile
from .scatter import SigmaData


def fmt(x) -> str:
    return f"{float(x):.17g}"


def table_csv(header: Sequence[str], columns: Iterable) -> str:
    """CSV text from equal-length numeric columns."""
    cols = [np.asarray(c, dtype=float) for c in columns]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(header))
    for row in zip(*cols):
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def read_table(path: str) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    return {h: np.array([float(r[i]) for r in body]) for i, h in enumerate(header)}


def profile_files(theta: ScriProfile, stem: str) -> dict:
    """``{stem}.csv`` (u, theta) and ``{stem}.json`` (mode, side, support, norm)."""
    side = {"l": theta.l, "side": theta.side,
            "support": list(theta.support) if theta.support is not None else None,
            "h1_norm": theta.norm, "n": int(theta.u.size)}
    return {f"{stem}.csv": table_csv(["u", "theta"], [theta.u, theta.theta]),
            f"{stem}.json": json.dumps(side, indent=2, sort_keys=True)}


def sigma_files(data: SigmaData, stem: str) -> dict:
    """``{stem}.csv`` (rstar, psi, xi, dpsi) and ``{stem}.json`` (mode, mass, chart)."""
    side = {"l": data.l, "m": data.m, "chart": data.chart, "n": int(data.rstar.size)}
    return {f"{stem}.csv": table_csv(["rstar", "psi", "xi", "dpsi"], [data.rstar, data.psi, data.xi, data.dpsi]),
            f"{stem}.json": json.dumps(side, indent=2, sort_keys=True)}


def read_profile(csv_path: str) -> ScriProfile:
    cols = read_table(csv_path)
    with open(os.path.splitext(csv_path)[0] + ".json") as fh:
        side = json.load(fh)
    sup = tuple(side["support"]) if side["support"] is not None else None
    return ScriProfile(cols["u"], cols["theta"], side["l"], sup, side["side"])


def read_sigma(csv_path: str) -> SigmaData:
    cols = read_table(csv_path)
    with open(os.path.splitext(csv_path)[0] + ".json") as fh:
        side = json.load(fh)
    return SigmaData(cols["rstar"], cols["psi"], cols["xi"], cols["dpsi"], side["l"], side["m"], side["chart"])


def write_files(out_dir: str, files: dict) -> list:
    os.makedirs(out_dir, exist_ok=True)
    names = []
    for name, text in sorted(files.items()):
        with open(os.path.join(out_dir, name), "w", newline="") as fh:
            fh.write(text)
        names.append(name)
    return names


def versions() -> dict:
    import scipy

    from . import __version__

    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__,
            "scri_scatter": __version__}
