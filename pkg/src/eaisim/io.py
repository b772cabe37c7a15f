"""Plain CSV output for spectra, scans, H matrices and mode tables."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .interferometry import HMatrix, ModeSet


@dataclass
class Table:
    """Rectangular table; complex columns are split on writing.

    ``complex_format`` is ``"reim"`` (``name_re``, ``name_im``) or
    ``"ampphase"`` (``name_amp``, ``name_phase_deg``).
    """

    columns: list[str]
    rows: list[list] = field(default_factory=list)
    complex_format: str = "reim"

    def __post_init__(self):
        if self.complex_format not in ("reim", "ampphase"):
            raise ValueError(f"unknown complex format {self.complex_format!r}")
        for k, row in enumerate(self.rows):
            if len(row) != len(self.columns):
                raise ValueError(f"row {k} has {len(row)} values, expected {len(self.columns)}")

    @classmethod
    def from_array(cls, columns: Sequence[str], data, complex_format: str = "reim") -> "Table":
        arr = np.asarray(data)
        if arr.size == 0:
            return cls(list(columns), [], complex_format)
        return cls(list(columns), [list(r) for r in np.atleast_2d(arr)], complex_format)

    def _complex_columns(self) -> list[bool]:
        return [any(isinstance(r[j], (complex, np.complexfloating)) for r in self.rows)
                for j in range(len(self.columns))]


def format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_csv(table: Table, path: str | Path) -> Path:
    """Write ``table`` with a header row and 17 significant digits per float."""
    path = Path(path)
    is_complex = table._complex_columns()
    suffix = ("_re", "_im") if table.complex_format == "reim" else ("_amp", "_phase_deg")
    header = []
    for name, cplx in zip(table.columns, is_complex):
        header.extend([name + suffix[0], name + suffix[1]] if cplx else [name])
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in table.rows:
            out = []
            for v, cplx in zip(row, is_complex):
                if not cplx:
                    out.append(format_value(v))
                    continue
                c = complex(v)
                if table.complex_format == "reim":
                    pair = (c.real, c.imag)
                else:
                    pair = (abs(c), float(np.degrees(np.angle(c))))
                out.extend(format_value(float(x)) for x in pair)
            w.writerow(out)
    return path


def read_csv(path: str | Path) -> Table:
    """Read a table written by `write_csv`; numeric cells become floats."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path} is empty")
    header, body = rows[0], rows[1:]

    def conv(cell: str):
        try:
            return float(cell)
        except ValueError:
            return cell

    return Table(header, [[conv(c) for c in r] for r in body])


def h_matrix_table(H: HMatrix, modes: ModeSet | None = None, resonances: Sequence[float] | None = None) -> Table:
    """Amplitude block, then phase block in degrees, then optional mode rows.

    The ``block`` column labels each row: ``amplitude``, ``phase_deg``,
    ``eigenvalue`` (relative to the largest) and ``resonance_ghz``.
    """
    S = H.size
    cols = ["block", "row"] + [f"p{j}" for j in range(S)]
    rows = []
    amp, ph = H.amplitudes(), H.phases_deg()
    for i in range(S):
        rows.append(["amplitude", i, *amp[i]])
    for i in range(S):
        rows.append(["phase_deg", i, *ph[i]])
    if modes is not None:
        vals = np.full(S, np.nan)
        rel = modes.eigenvalues / modes.eigenvalues[0]
        vals[:min(S, len(rel))] = rel[:S]
        rows.append(["eigenvalue", 0, *vals])
    if resonances is not None:
        res = np.full(S, np.nan)
        res[:min(S, len(resonances))] = np.asarray(resonances)[:S]
        rows.append(["resonance_ghz", 0, *res])
    return Table(cols, rows)


def mode_table(modes: ModeSet, use: str = "dipole_moments") -> Table:
    """One row per dipole site and mode: z component as amplitude and phase."""
    data = getattr(modes, use)
    n = data.shape[0] // 3
    rows = []
    for m in range(len(modes)):
        for i in range(n):
            rows.append([m, float(modes.eigenvalues[m]), i, complex(data[3 * i + 2, m])])
    return Table(["mode", "eigenvalue", "site", "z"], rows, "ampphase")
