"""
Files written by a run: ledger CSV, VTK field snapshots, SVG plots and run metadata.
"""

import csv
import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from cdlab.energy import LEDGER_COLUMNS, EnergyLedger, LocalDissipationField
from cdlab.quadrature import QuadratureGrid
from cdlab.small_scales import SmallScaleField
from cdlab.spline_space import SplineSpace2D

logger = logging.getLogger(__name__)

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    HAS_MATPLOTLIB = True
except ImportError:
    HAS_MATPLOTLIB = False

SAMPLES_PER_ELEMENT = 4


def ensure_directory(path) -> Path:
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"Output directory {path} is not writable: {e}") from e
    return path


def format_value(value: float) -> str:
    return "%.17g" % value


def write_ledger_csv(ledger: EnergyLedger, path) -> Path:
    """One header line and one row per recorded step, 17 significant digits."""
    path = Path(path)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(LEDGER_COLUMNS)
        for row in ledger.rows:
            writer.writerow([format_value(row[name]) for name in LEDGER_COLUMNS])
    return path


def read_ledger_csv(path) -> Dict[str, np.ndarray]:
    """Columns of a ledger file as arrays."""
    with open(path, "r", newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    data = np.array(rows).reshape(len(rows), len(header))
    return {name: data[:, i] for i, name in enumerate(header)}


def sample_field(space: SplineSpace2D, coefficients: np.ndarray,
                 samples_per_element: int = SAMPLES_PER_ELEMENT):
    """Field values on the closed (s m_x + 1) x (s m_y + 1) sampling grid."""
    mx, my = space.shape
    x = np.linspace(0.0, space.space_x.length, samples_per_element * mx + 1)
    y = np.linspace(0.0, space.space_y.length, samples_per_element * my + 1)
    return x, y, space.evaluate(coefficients, x, y)


def write_vtk(path, space: SplineSpace2D, coefficients: np.ndarray,
              local: Optional[LocalDissipationField] = None, title: str = "cdlab field") -> Path:
    """
    Legacy VTK 3.0 ASCII structured-points file.

    Point data holds phi^h on the sampling grid; cell data repeats each element value of the
    local fields on the sampling cells inside the element.
    """
    s = SAMPLES_PER_ELEMENT
    mx, my = space.shape
    x, y, values = sample_field(space, coefficients, s)
    hx, hy = space.h
    lines = [
        "# vtk DataFile Version 3.0",
        title[:255],
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {len(x)} {len(y)} 1",
        "ORIGIN 0 0 0",
        f"SPACING {format_value(hx / s)} {format_value(hy / s)} 1",
        f"POINT_DATA {values.size}",
        "SCALARS phi double 1",
        "LOOKUP_TABLE default",
    ]
    lines.extend(format_value(v) for v in values.ravel())
    if local is not None:
        lines.append(f"CELL_DATA {s * mx * s * my}")
        for name in LocalDissipationField.FIELDS:
            refined = np.kron(local.as_grid(name), np.ones((s, s)))
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(format_value(v) for v in refined.ravel())
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def snapshot_filename(t: float) -> str:
    return f"field_{t:.4f}.vtk"


def write_small_scales_csv(path, grid: QuadratureGrid, field: SmallScaleField) -> Path:
    """Debug dump of the small-scale field: element, point, value, rate."""
    order = np.argsort(grid.point_element, kind="stable")
    counters = {}
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["element", "point", "value", "rate"])
        for i in order:
            e = int(grid.point_element[i])
            k = counters.get(e, 0)
            counters[e] = k + 1
            writer.writerow([e, k, format_value(field.value[i]), format_value(field.rate[i])])
    return Path(path)


def write_meta(path, meta: dict) -> Path:
    path = Path(path)
    with open(path, "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True, default=_json_default)
    return path


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"Cannot serialize {type(value).__name__}")


def plot_columns(path, ledger: EnergyLedger, columns: Sequence[str], title: str, ylabel: str) -> Optional[Path]:
    """Line plot of ledger columns against time (skipped without matplotlib)."""
    if not HAS_MATPLOTLIB:
        logger.warning("matplotlib not installed; skipping plots. Install with 'pip install cdlab[plot]'")
        return None
    t = ledger.column("t")
    fig, ax = plt.subplots(figsize=(6, 4))
    for name in columns:
        ax.plot(t, ledger.column(name), label=name.replace("_", " "))
    ax.set_xlabel("t")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return Path(path)


def plot_curves(path, curves: Dict[str, tuple], title: str, ylabel: str) -> Optional[Path]:
    """Overlay of several (t, values) curves, e.g. a mesh family."""
    if not HAS_MATPLOTLIB:
        logger.warning("matplotlib not installed; skipping plots. Install with 'pip install cdlab[plot]'")
        return None
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, (t, values) in curves.items():
        style = "k-" if "reference" in label else "-"
        ax.plot(t, values, style, label=label)
    ax.set_xlabel("t")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return Path(path)


def emit_outputs(result, output_dir) -> List[Path]:
    """
    Write every artifact of a finished run.

    Args:
        result (RunResult): The finished run.
        output_dir: Target directory (created if missing).

    Returns:
        List[Path]: The files written.
    """
    out = ensure_directory(output_dir)
    written = [write_ledger_csv(result.ledger, out / "ledger.csv")]
    for snapshot in result.snapshots:
        written.append(write_vtk(out / snapshot_filename(snapshot.t), result.space, snapshot.phi,
                                 snapshot.local, title=f"{result.kind.value} t={snapshot.t:.4f}"))
    if len(result.ledger):
        name = result.kind.value.upper()
        for path in (
            plot_columns(out / "energy.svg", result.ledger,
                         ["energy_total", "energy_large", "energy_small"], f"{name} energy", "energy"),
            plot_columns(out / "dissipation.svg", result.ledger,
                         ["small_scale_dissipation", "large_scale_dissipation", "physical_dissipation"],
                         f"{name} dissipation", "dissipation"),
        ):
            if path is not None:
                written.append(path)
    written.append(write_meta(out / "meta.json", result.meta))
    logger.info(f"Wrote {len(written)} files to {out}")
    return written
