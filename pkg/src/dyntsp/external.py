"""Optional file-interop bridge to an external ATSP solver binary.

Off by default; the native exact/heuristic solvers are the supported path.
The bridge writes a TSPLIB problem plus an LKH-style parameter file, invokes
the binary and reads the tour file back.
"""

from __future__ import annotations

import subprocess
import tempfile
from pathlib import Path

from .atsp import export_tsplib, import_tour
from .errors import UsageError


def solve_external(inst, solver_path, timeout=600):
    solver = Path(solver_path)
    if not solver.exists():
        raise UsageError(f"external solver not found: {solver}")
    with tempfile.TemporaryDirectory(prefix="dyntsp-lkh-") as tmp:
        tmp = Path(tmp)
        problem = tmp / "problem.atsp"
        tour_file = tmp / "problem.tour"
        par_file = tmp / "problem.par"
        export_tsplib(inst, problem)
        par_file.write_text(
            f"PROBLEM_FILE = {problem}\n"
            f"TOUR_FILE = {tour_file}\n"
            "RUNS = 1\n"
        )
        proc = subprocess.run([str(solver), str(par_file)],
                              capture_output=True, text=True, timeout=timeout)
        if proc.returncode != 0 or not tour_file.exists():
            raise UsageError(f"external solver failed (exit {proc.returncode}): "
                             f"{proc.stderr.strip()[:500]}")
        return import_tour(tour_file)
