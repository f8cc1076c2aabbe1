# src/risic/services/harness.py
import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from ..config import (
    AoConfig,
    ConfigFile,
    SolverSettings,
    SystemConfig,
    db_to_linear,
    linear_to_db,
)
from ..exceptions import ConfigError, IcInfeasibleError, IcUnavailableError, RisError
from ..scenario import Drop, child, draw_drop, stream_for
from ..sinr import evaluate
from ..solvers import make_solver
from .ic import InterferenceCanceller, IcResult
from .maxmin import AlternatingOptimizer

CSV_COLUMNS = [
    "method",
    "sweep_value",
    "trial",
    "min_sinr_db",
    "outer_iterations",
    "sdp_solves",
    "wall_ms",
    "status",
]


class Method(str, Enum):
    AO = "AO"
    IC = "IC"
    ICAO = "ICAO"


class SweepKind(str, Enum):
    POWER = "power"
    ELEMENTS = "elements"
    ITERS = "iters"


class RecordStatus(str, Enum):
    OK = "ok"
    IC_UNAVAILABLE = "ic_unavailable"
    SOLVER_FAIL = "solver_fail"


# power in dBm, RIS sizes, outer-iteration caps
DEFAULT_SWEEPS: Dict[SweepKind, List[float]] = {
    SweepKind.POWER: [20.0, 25.0, 30.0, 35.0, 40.0],
    SweepKind.ELEMENTS: [40, 60, 64, 80],
    SweepKind.ITERS: [1, 2, 3, 5, 10, 20],
}


@dataclass
class Experiment:
    base: SystemConfig = field(default_factory=SystemConfig)
    sweep: SweepKind = SweepKind.POWER
    values: Optional[List[float]] = None
    methods: List[Method] = field(default_factory=lambda: [Method.AO, Method.IC, Method.ICAO])
    trials: int = 1
    ao: AoConfig = field(default_factory=AoConfig)
    solver: SolverSettings = field(default_factory=SolverSettings)
    workers: int = int(os.getenv("RISIC_WORKERS", "1"))
    output_path: Optional[str] = None

    def __post_init__(self):
        try:
            self.sweep = SweepKind(self.sweep)
            self.methods = [Method(m) for m in self.methods]
        except ValueError as e:
            raise ConfigError("Invalid sweep kind or method", e)
        if self.values is None:
            self.values = list(DEFAULT_SWEEPS[self.sweep])
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if not self.values or list(self.values) != sorted(self.values):
            raise ConfigError(f"Sweep values must be nonempty and sorted, got {self.values}")
        if not self.methods:
            raise ConfigError("At least one method is required")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")

    @classmethod
    def from_config(cls, config: ConfigFile, **overrides: Any) -> "Experiment":
        """Experiment from a loaded config file; non-None overrides win over [experiment]."""
        section = dict(config.experiment)
        section.update({k: v for k, v in overrides.items() if v is not None})
        known = {"sweep", "values", "methods", "trials", "workers", "output_path"}
        unknown = set(section) - known
        if unknown:
            raise ConfigError(f"Unknown keys in [experiment]: {sorted(unknown)}")
        return cls(base=config.system, ao=config.ao, solver=config.solver, **section)

    def point(self, value: float):
        """(SystemConfig, AoConfig) for one sweep value."""
        if self.sweep is SweepKind.POWER:
            return self.base.replace(p_user=float(value), p_dev=float(value)), self.ao
        if self.sweep is SweepKind.ELEMENTS:
            return self.base.replace(N=int(value)), self.ao
        return self.base, self.ao.replace(max_outer_iters=int(value))


@dataclass
class RunRecord:
    method: str
    sweep_value: float
    trial: int
    min_sinr_db: Optional[float]
    per_link_sinrs_db: List[float]
    outer_iterations: int
    sdp_solves: int
    wall_ms: float
    status: str

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunRecord":
        return cls(**data)

    @property
    def ok(self) -> bool:
        return self.status == RecordStatus.OK.value


def _failure(
    method: Method, value: float, trial: int, status: RecordStatus, wall_ms: float, solves: int
) -> RunRecord:
    return RunRecord(
        method=method.value,
        sweep_value=float(value),
        trial=trial,
        min_sinr_db=None,
        per_link_sinrs_db=[],
        outer_iterations=0,
        sdp_solves=solves,
        wall_ms=wall_ms,
        status=status.value,
    )


def run_trial(e: Experiment, sweep_index: int, trial: int) -> List[RunRecord]:
    """
    Evaluate every requested method on one drop.

    The drop, the AO start, the IC-AO start and the randomizations all come
    from indexed children of stream_for(seed, sweep_index, trial).
    """
    value = e.values[sweep_index]
    cfg, ao = e.point(value)
    seq = stream_for(cfg.seed, sweep_index, trial)
    drop: Drop = draw_drop(cfg, child(seq, 0))
    records = []

    ic_result: Optional[IcResult] = None
    ic_error: Optional[RisError] = None
    ic_ms = 0.0
    ic_solves = 0
    if Method.IC in e.methods or Method.ICAO in e.methods:
        solver = make_solver(e.solver)
        start = time.perf_counter()
        try:
            ic_result = InterferenceCanceller(solver, ao.num_randomizations).optimize(
                drop, seq=child(seq, 3)
            )
        except RisError as err:
            ic_error = err
            logging.warning(f"IC failed at sweep value {value}, trial {trial}: {err}")
        ic_ms = 1e3 * (time.perf_counter() - start)
        ic_solves = solver.solve_count

    for method in e.methods:
        start = time.perf_counter()
        if method is not Method.AO and ic_result is None:
            status = (
                RecordStatus.IC_UNAVAILABLE
                if isinstance(ic_error, (IcUnavailableError, IcInfeasibleError))
                else RecordStatus.SOLVER_FAIL
            )
            records.append(_failure(method, value, trial, status, ic_ms, ic_solves))
            continue

        if method is Method.IC:
            report = ic_result.report
            records.append(
                RunRecord(
                    method=method.value,
                    sweep_value=float(value),
                    trial=trial,
                    min_sinr_db=report.min_sinr_db,
                    per_link_sinrs_db=report.links_db(),
                    outer_iterations=0,
                    sdp_solves=ic_result.sdp_solves,
                    wall_ms=ic_ms,
                    status=RecordStatus.OK.value,
                )
            )
            continue

        solver = make_solver(e.solver)
        optimizer = AlternatingOptimizer(solver, ao)
        try:
            if method is Method.AO:
                result = optimizer.optimize(drop, seq=child(seq, 1))
            else:
                result = optimizer.optimize(drop, seq=child(seq, 2), initial=ic_result.phi)
        except RisError as err:
            logging.error(f"{method.value} failed at sweep value {value}, trial {trial}: {err}")
            records.append(
                _failure(
                    method,
                    value,
                    trial,
                    RecordStatus.SOLVER_FAIL,
                    1e3 * (time.perf_counter() - start),
                    solver.solve_count,
                )
            )
            continue

        report = evaluate(drop.budget, drop.channels, drop.cascaded, result.phi, result.W)
        extra_solves, extra_ms = (ic_result.sdp_solves, ic_ms) if method is Method.ICAO else (0, 0.0)
        records.append(
            RunRecord(
                method=method.value,
                sweep_value=float(value),
                trial=trial,
                min_sinr_db=report.min_sinr_db,
                per_link_sinrs_db=report.links_db(),
                outer_iterations=result.trace.iterations,
                sdp_solves=solver.solve_count + extra_solves,
                wall_ms=1e3 * (time.perf_counter() - start) + extra_ms,
                status=RecordStatus.OK.value,
            )
        )

    for record in records:
        logging.info(
            f"{record.method} value={record.sweep_value} trial={record.trial}: "
            f"{record.status} min-SINR {record.min_sinr_db} dB, {record.outer_iterations} iterations"
        )
    return records


def sort_records(records: Sequence[RunRecord]) -> List[RunRecord]:
    return sorted(records, key=lambda r: (r.sweep_value, r.trial, r.method))


def run_experiment(e: Experiment) -> List[RunRecord]:
    """Run every (sweep value, trial) pair; the record order does not depend on scheduling."""
    tasks = [(i, t) for i in range(len(e.values)) for t in range(e.trials)]
    if e.workers > 1:
        with ThreadPoolExecutor(max_workers=e.workers) as pool:
            batches = list(pool.map(lambda task: run_trial(e, *task), tasks))
    else:
        batches = [run_trial(e, *task) for task in tasks]
    return sort_records([r for batch in batches for r in batch])


def summarize(records: Sequence[RunRecord]) -> pd.DataFrame:
    """
    Per (method, sweep_value): mean and median min-SINR in dB and mean outer iterations.

    Means are taken over linear SINRs and converted to dB afterwards. Groups
    without any ok record are left out; their number is in attrs["omitted"].
    """
    columns = [
        "method",
        "sweep_value",
        "count",
        "failed",
        "mean_min_sinr_db",
        "median_min_sinr_db",
        "mean_outer_iterations",
        "mean_sdp_solves",
    ]
    if not records:
        empty = pd.DataFrame(columns=columns)
        empty.attrs["omitted"] = 0
        return empty

    frame = pd.DataFrame([r.to_dict() for r in records])
    frame["ok"] = frame["status"] == RecordStatus.OK.value
    frame["linear"] = db_to_linear(frame["min_sinr_db"].astype(float))

    rows = []
    omitted = 0
    for (method, value), group in frame.groupby(["method", "sweep_value"], sort=True):
        ok = group[group["ok"]]
        if ok.empty:
            omitted += 1
            continue
        rows.append(
            {
                "method": method,
                "sweep_value": value,
                "count": len(ok),
                "failed": int(len(group) - len(ok)),
                "mean_min_sinr_db": float(linear_to_db(ok["linear"].mean())),
                "median_min_sinr_db": float(linear_to_db(ok["linear"].median())),
                "mean_outer_iterations": float(ok["outer_iterations"].mean()),
                "mean_sdp_solves": float(ok["sdp_solves"].mean()),
            }
        )
    summary = pd.DataFrame(rows, columns=columns)
    summary.attrs["omitted"] = omitted
    return summary


def emit(records: Sequence[RunRecord], path: str, fmt: str = "csv") -> None:
    """
    Write records to path.

    CSV has the fixed columns method, sweep_value, trial, min_sinr_db,
    outer_iterations, sdp_solves, wall_ms, status (min_sinr_db empty when the
    record failed). JSON is an array of full records, per-link SINRs included.
    """
    records = list(records)
    if fmt == "json":
        with open(path, "w") as fh:
            json.dump([r.to_dict() for r in records], fh, indent=2)
        return
    if fmt != "csv":
        raise ConfigError(f"Unknown output format: {fmt}")
    frame = pd.DataFrame([{c: getattr(r, c) for c in CSV_COLUMNS} for r in records], columns=CSV_COLUMNS)
    frame.to_csv(path, index=False)


def _optional(value: Any) -> Optional[float]:
    if value is None:
        return None
    value = float(value)
    return None if math.isnan(value) else value


def load_records(path: str, fmt: Optional[str] = None) -> List[RunRecord]:
    """Read records written by emit; the format defaults to the file suffix."""
    fmt = fmt or ("json" if path.endswith(".json") else "csv")
    if fmt == "json":
        with open(path) as fh:
            return [RunRecord.from_dict(item) for item in json.load(fh)]
    frame = pd.read_csv(path, dtype={"method": str, "status": str})
    return [
        RunRecord(
            method=str(row["method"]),
            sweep_value=float(row["sweep_value"]),
            trial=int(row["trial"]),
            min_sinr_db=_optional(row["min_sinr_db"]),
            per_link_sinrs_db=[],
            outer_iterations=int(row["outer_iterations"]),
            sdp_solves=int(row["sdp_solves"]),
            wall_ms=float(row["wall_ms"]),
            status=str(row["status"]),
        )
        for _, row in frame.iterrows()
    ]


def any_failed(records: Sequence[RunRecord]) -> bool:
    return any(not r.ok for r in records)


def paired(records: Sequence[RunRecord], first: str, second: str) -> pd.DataFrame:
    """min_sinr_db and outer_iterations of two methods side by side per (sweep_value, trial)."""
    frame = pd.DataFrame([r.to_dict() for r in records if r.ok])
    if frame.empty:
        return frame
    cols = ["sweep_value", "trial", "min_sinr_db", "outer_iterations"]
    a = frame[frame["method"] == first][cols]
    b = frame[frame["method"] == second][cols]
    return a.merge(b, on=["sweep_value", "trial"], suffixes=(f"_{first}", f"_{second}"))


def mean_db(values: Sequence[float]) -> float:
    """dB of the mean of linear values given in dB."""
    return float(linear_to_db(np.mean(db_to_linear(values))))
