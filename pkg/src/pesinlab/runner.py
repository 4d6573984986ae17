"""Run a scenario and write results.json and samples.csv."""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ExperimentFailed, PesinLabError
from .experiments import COLUMNS, RUNNERS
from .scenario import Scenario


@dataclass
class RunReport:
    scenario_digest: str
    wall_time: float
    verdicts: list
    artifacts: list
    results: dict = field(default_factory=dict, repr=False)

    @property
    def passed(self) -> bool:
        return all(v["passed"] for v in self.verdicts)


def jsonable(obj):
    """Plain JSON data: complex -> [re, im], non-finite floats -> null, arrays -> lists."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, (complex, np.complexfloating)):
        return [jsonable(obj.real), jsonable(obj.imag)]
    if obj is None or isinstance(obj, str):
        return obj
    return repr(obj)


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def write_csv(path: Path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            if len(row) != len(columns):
                raise ValueError(f"row has {len(row)} cells, expected {len(columns)}")
            w.writerow([_cell(v) for v in row])


def run_scenario(s: Scenario, output_dir=None) -> RunReport:
    """Dispatch to the experiment, write both artifacts and return the report."""
    out_dir = Path(output_dir) if output_dir is not None else s.resolved_output_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        outcome = RUNNERS[s.experiment](s)
    except PesinLabError as exc:
        label = s.name or s.experiment
        raise ExperimentFailed(f"scenario {label!r}: {type(exc).__name__}: {exc}", scenario=label, cause=exc) from exc
    wall = time.perf_counter() - t0
    csv_path = out_dir / "samples.csv"
    json_path = out_dir / "results.json"
    write_csv(csv_path, COLUMNS[s.experiment], outcome.rows)
    report = RunReport(s.digest(), wall, outcome.verdicts, [str(json_path), str(csv_path)], outcome.results)
    payload = {
        "scenario": s.canonical(),
        "scenario_digest": report.scenario_digest,
        "wall_time": wall,
        "passed": report.passed,
        "verdicts": outcome.verdicts,
        "artifacts": report.artifacts,
        "csv_columns": COLUMNS[s.experiment],
        "results": outcome.results,
    }
    json_path.write_text(json.dumps(jsonable(payload), indent=2, sort_keys=True))
    return report
