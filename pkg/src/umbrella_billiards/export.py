"""Writers for the CSV, JSON and PGM files produced by the command line."""
from __future__ import annotations

import csv
import io
import json
import math

import numpy as np

from .dynamics import Orbit
from .periodic import PeriodicOrbit
from .tables import BilliardTable, boundary_eval

__all__ = [
    "fmt",
    "csv_text",
    "write_text",
    "orbit_rows",
    "cycle_polyline",
    "outline_rows",
    "pgm_text",
    "density_raster",
    "orbit_json",
]


def fmt(x) -> str:
    """Shortest round-trip text for floats, plain ``str`` otherwise."""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def csv_text(config: dict, header: list[str], rows) -> str:
    """CSV body led by a ``# config:`` comment line and a header row."""
    buf = io.StringIO()
    buf.write("# config: " + json.dumps(config, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_text(path, text: str) -> None:
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write(text)


def orbit_rows(table: BilliardTable, orbit: Orbit, normalized: bool = False):
    """``(step, s, theta, arc_index)`` rows; ``normalized`` divides by ``|dQ|`` and ``pi``."""
    L = table.total_length
    for step, (p, arc) in enumerate(zip(orbit.points, orbit.arc_indices)):
        if normalized:
            yield step, p.s / L, p.theta / math.pi, arc
        else:
            yield step, p.s, p.theta, arc


def cycle_polyline(table: BilliardTable, orbit: PeriodicOrbit) -> np.ndarray:
    """Collision points of a periodic orbit as a closed Cartesian polyline."""
    pts = [boundary_eval(table, p.s)[0] for p in orbit.cycle]
    pts.append(pts[0])
    return np.array(pts)


def outline_rows(table: BilliardTable, points_per_arc: int = 64):
    return [tuple(p) for p in table.outline(points_per_arc)]


def pgm_text(values: np.ndarray, maxval: int = 255) -> str:
    """Plain (P2) greymap; ``values`` in ``[0, 1]`` with row 0 printed first."""
    img = np.clip(np.rint(np.asarray(values, dtype=float) * maxval), 0, maxval).astype(int)
    h, w = img.shape
    lines = ["P2", f"{w} {h}", str(maxval)]
    lines += [" ".join(map(str, row)) for row in img]
    return "\n".join(lines) + "\n"


def density_raster(s_norm, theta_norm, bins: int = 200) -> np.ndarray:
    """Visit counts on a ``bins x bins`` grid scaled to ``[0, 1]``, theta increasing upward."""
    hist, _, _ = np.histogram2d(theta_norm, s_norm, bins=bins, range=[[0, 1], [0, 1]])
    hist = hist[::-1]
    top = hist.max()
    return hist / top if top > 0 else hist


def orbit_json(orbit: PeriodicOrbit) -> str:
    return json.dumps(orbit.to_dict(), indent=2)
