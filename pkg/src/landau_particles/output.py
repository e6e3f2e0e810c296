"""CSV emission for diagnostics and snapshots, plus the run manifest.

All floats are written with shortest round-trip formatting (Python repr), so
files parse back bit-exactly and deterministic reruns are byte-identical.
"""

import json
import time as _time
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import DiagnosticsRecord, blob_eval, blob_on_grid


def _fmt(x):
    return repr(float(x))


def write_diagnostics(records, path):
    """One CSV row per DiagnosticsRecord, full float round-trip precision."""
    if not records:
        raise ValueError("no diagnostics records to write")
    dim = len(records[0].momentum)
    mom_cols = ",".join(f"mom_{s + 1}" for s in range(dim))
    header = (
        f"step,time,mass,{mom_cols},energy,entropy,rel_entropy,"
        "dissipation,min_dist,escaped"
    )
    lines = [header]
    for rec in records:
        parts = [str(rec.step), _fmt(rec.time), _fmt(rec.mass)]
        parts += [_fmt(m) for m in rec.momentum]
        parts += [
            _fmt(rec.energy), _fmt(rec.entropy), _fmt(rec.relative_entropy),
            _fmt(rec.dissipation), _fmt(rec.min_pair_distance), str(rec.escaped_count),
        ]
        lines.append(",".join(parts))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def read_diagnostics(path):
    """Parse a diagnostics CSV back into DiagnosticsRecord objects."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    header = lines[0].split(",")
    dim = sum(1 for name in header if name.startswith("mom_"))
    records = []
    for ln in lines[1:]:
        parts = ln.split(",")
        records.append(
            DiagnosticsRecord(
                step=int(parts[0]),
                time=float(parts[1]),
                mass=float(parts[2]),
                momentum=np.array([float(p) for p in parts[3 : 3 + dim]]),
                energy=float(parts[3 + dim]),
                entropy=float(parts[4 + dim]),
                relative_entropy=float(parts[5 + dim]),
                dissipation=float(parts[6 + dim]),
                min_pair_distance=float(parts[7 + dim]),
                escaped_count=int(parts[8 + dim]),
            )
        )
    return records


def axis_slice_points(grid, axis):
    """Grid-axis points along `axis` through the origin (other coords zero)."""
    pts = np.zeros((grid.cells_per_dim, grid.dim))
    pts[:, axis] = grid.axis
    return pts


def write_snapshot(ens, grid, mol, time, outdir, tag):
    """Particles, blob-on-grid, and per-axis origin slices as three CSV groups.

    Returns the list of file paths written. Slice values are blob_eval at the
    slice points exactly.
    """
    outdir = str(outdir)
    dim = grid.dim
    paths = []

    path = f"{outdir}/particles_{tag}.csv"
    vcols = ",".join(f"v_{s + 1}" for s in range(dim))
    lines = [f"w,{vcols}"]
    for w, v in zip(ens.weights, ens.velocities):
        lines.append(",".join([_fmt(w)] + [_fmt(c) for c in v]))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    paths.append(path)

    path = f"{outdir}/blob_{tag}.csv"
    blob = blob_on_grid(ens, grid, mol)
    lines = [f"{vcols},blob"]
    for center, val in zip(grid.centers, blob):
        lines.append(",".join([_fmt(c) for c in center] + [_fmt(val)]))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    paths.append(path)

    for axis in range(dim):
        path = f"{outdir}/slice_axis{axis + 1}_{tag}.csv"
        pts = axis_slice_points(grid, axis)
        vals = blob_eval(ens, mol, pts)
        lines = [f"v_{axis + 1},blob"]
        for coord, val in zip(grid.axis, vals):
            lines.append(f"{_fmt(coord)},{_fmt(val)}")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
        paths.append(path)
    return paths


@dataclass
class RunManifest:
    """Reproducibility record: the resolved config plus every emitted file."""

    config_text: str
    version: str
    wall_seconds: float
    outputs: list = field(default_factory=list)
    started_unix: float = field(default_factory=_time.time)

    def write(self, path):
        payload = {
            "version": self.version,
            "wall_seconds": self.wall_seconds,
            "started_unix": self.started_unix,
            "config": self.config_text,
            "outputs": sorted(str(p) for p in self.outputs),
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
        return path
