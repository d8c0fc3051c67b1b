"""
Tests for the output writers.
"""

import json

import numpy as np
import pytest
from unittest.mock import patch

from cdlab import output
from cdlab.energy import LEDGER_COLUMNS, EnergyLedger, LocalDissipationField
from cdlab.output import (read_ledger_csv, snapshot_filename, write_ledger_csv, write_meta,
                          write_small_scales_csv, write_vtk)
from cdlab.quadrature import QuadratureGrid
from cdlab.small_scales import SmallScaleField
from cdlab.spline_space import SplineSpace2D


def make_ledger():
    ledger = EnergyLedger({"energy_total": 1.0}, True)
    for i in range(3):
        ledger.append({name: (i + 1) * 0.1 + j / 3.0 for j, name in enumerate(LEDGER_COLUMNS)})
    return ledger


def test_ledger_csv(tmp_path):
    """The ledger file has the column header and full-precision rows."""
    ledger = make_ledger()
    path = write_ledger_csv(ledger, tmp_path / "ledger.csv")
    lines = path.read_text().splitlines()
    assert lines[0].split(",") == LEDGER_COLUMNS
    assert len(lines) == 4
    data = read_ledger_csv(path)
    np.testing.assert_array_equal(data["energy_total"], ledger.column("energy_total"))


def test_snapshot_filename():
    """Snapshot files carry the time with four decimals."""
    assert snapshot_filename(0.25) == "field_0.2500.vtk"
    assert snapshot_filename(1.0) == "field_1.0000.vtk"


def test_vtk_point_data(tmp_path):
    """Structured points on the 4x refined closed grid."""
    space = SplineSpace2D.uniform(2, 8)
    path = write_vtk(tmp_path / "field.vtk", space, np.ones(space.num_functions))
    lines = path.read_text().splitlines()
    assert lines[0] == "# vtk DataFile Version 3.0"
    assert "DIMENSIONS 33 33 1" in lines
    assert "POINT_DATA 1089" in lines
    values = np.array(lines[10:], dtype=float)
    assert len(values) == 1089
    np.testing.assert_allclose(values, 1.0, atol=1e-13)
    assert not any(line.startswith("CELL_DATA") for line in lines)


def test_vtk_cell_data(tmp_path):
    """Local dissipation fields appear as cell data on the sampling cells."""
    space = SplineSpace2D.uniform(2, 4, 6)
    local = LocalDissipationField.zeros((4, 6), 0.5)
    local.fields["tau_dissipation"] = np.arange(24, dtype=float)
    text = write_vtk(tmp_path / "field.vtk", space, np.zeros(space.num_functions), local).read_text()
    assert "CELL_DATA 384" in text
    for name in LocalDissipationField.FIELDS:
        assert f"SCALARS {name} double 1" in text


def test_small_scales_csv(tmp_path):
    """One row per quadrature point, grouped by element."""
    grid = QuadratureGrid(SplineSpace2D.uniform(2, 4))
    field = SmallScaleField(grid.num_points, value=np.arange(grid.num_points, dtype=float))
    lines = write_small_scales_csv(tmp_path / "ss.csv", grid, field).read_text().splitlines()
    assert lines[0] == "element,point,value,rate"
    assert len(lines) == grid.num_points + 1
    assert lines[1].startswith("0,0,")
    assert lines[10].startswith("1,0,")


def test_meta_serializes_numpy(tmp_path):
    """numpy scalars and arrays are written as plain JSON."""
    path = write_meta(tmp_path / "meta.json", {"dt": np.float64(0.5), "mesh": np.array([8, 8])})
    assert json.loads(path.read_text()) == {"dt": 0.5, "mesh": [8, 8]}


def test_plots_skipped_without_matplotlib(tmp_path):
    """Plot helpers return None when matplotlib is missing."""
    with patch.object(output, "HAS_MATPLOTLIB", False):
        assert output.plot_columns(tmp_path / "e.svg", make_ledger(), ["energy_total"], "E", "E") is None
        assert output.plot_curves(tmp_path / "c.svg", {}, "c", "c") is None
    assert not (tmp_path / "e.svg").exists()


def test_plot_columns(tmp_path):
    """An SVG is written when matplotlib is available."""
    pytest.importorskip("matplotlib")
    path = output.plot_columns(tmp_path / "e.svg", make_ledger(), ["energy_total"], "E", "energy")
    assert path.exists()
    assert "<svg" in path.read_text()
