"""Monte-Carlo harness: paired runs of several solvers, errors and CDF tables."""
from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .baselines import ORACLE_DEFAULT, solve_oracle_los, solve_pocs, solve_raw_huber, solve_relaxed_nls
from .core import CORNER_ANCHORS, Network, build_topology
from .measurement import MeasurementSet, NoiseModel, synthesize
from .solver import (STAGE1_DEFAULT, STAGE2_DEFAULT, DivergenceError, EstimateState, Schedule,
                     StageConfig, gaussian_init, run_stage, solve_two_stage)


def network_error(estimates, truth) -> float:
    """Root of the mean squared per-sensor position error."""
    est = np.asarray(estimates, dtype=float).reshape(-1, 2)
    tru = np.asarray(truth, dtype=float).reshape(-1, 2)
    if est.shape != tru.shape:
        raise ValueError(f"estimates {est.shape} and truth {tru.shape} differ in length")
    if est.shape[0] == 0:
        raise ValueError("no sensors")
    return float(math.sqrt(np.mean(np.sum((est - tru) ** 2, axis=1))))


def sensor_errors(estimates, truth) -> np.ndarray:
    est = np.asarray(estimates, dtype=float).reshape(-1, 2)
    tru = np.asarray(truth, dtype=float).reshape(-1, 2)
    if est.shape != tru.shape:
        raise ValueError("estimates and truth differ in length")
    return np.hypot(*(est - tru).T)


@dataclass
class ScenarioConfig:
    """Simulation setup; defaults: 50 sensors in a 10 m square with corner anchors."""

    num_sensors: int = 50
    area: float = 10.0
    anchors: list = field(default_factory=lambda: CORNER_ANCHORS.tolist())
    comm_radius: float = math.inf
    noise: NoiseModel = field(default_factory=NoiseModel)
    init_std: float = 10.0
    mc_runs: int = 500
    stage1: StageConfig = STAGE1_DEFAULT
    stage2: StageConfig = STAGE2_DEFAULT
    oracle: StageConfig = ORACLE_DEFAULT
    pocs_iters: int = 50
    schedule: Schedule = Schedule.JACOBI
    fixed_placement: bool = False

    def __post_init__(self):
        if isinstance(self.noise, dict):
            self.noise = NoiseModel(**self.noise)
        for name in ("stage1", "stage2", "oracle"):
            v = getattr(self, name)
            if isinstance(v, dict):
                setattr(self, name, StageConfig(**v))
        self.schedule = Schedule(self.schedule)
        self.anchors = [list(map(float, a)) for a in self.anchors]
        self.comm_radius = float(self.comm_radius)
        if self.num_sensors < 1:
            raise ValueError("num_sensors: must be >= 1")
        if not self.area > 0:
            raise ValueError("area: must be > 0")
        if any(len(a) != 2 for a in self.anchors):
            raise ValueError("anchors: each anchor needs two coordinates")
        if not self.comm_radius >= 0:
            raise ValueError("comm_radius: must be >= 0")
        if not self.init_std >= 0:
            raise ValueError("init_std: must be >= 0")
        if int(self.mc_runs) != self.mc_runs or self.mc_runs < 1:
            raise ValueError("mc_runs: must be an integer >= 1")
        if self.pocs_iters < 0:
            raise ValueError("pocs_iters: must be >= 0")

    @property
    def num_anchors(self) -> int:
        return len(self.anchors)

    def to_dict(self) -> dict:
        return {
            "num_sensors": self.num_sensors, "area": self.area, "anchors": self.anchors,
            "comm_radius": self.comm_radius, "noise": dataclasses.asdict(self.noise),
            "init_std": self.init_std, "mc_runs": self.mc_runs,
            "stage1": self.stage1.to_dict(), "stage2": self.stage2.to_dict(),
            "oracle": self.oracle.to_dict(), "pocs_iters": self.pocs_iters,
            "schedule": self.schedule.value, "fixed_placement": self.fixed_placement,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown scenario field(s): {sorted(unknown)}")
        prefix = ""
        try:
            kw = dict(d)
            for name in ("noise", "stage1", "stage2", "oracle"):
                if name in kw and isinstance(kw[name], dict):
                    prefix = name + "."
                    sub = kw[name]
                    kw[name] = NoiseModel(**sub) if name == "noise" else StageConfig(**sub)
            prefix = ""
            return cls(**kw)
        except (TypeError, ValueError) as exc:
            raise ValueError(f"{prefix}{exc}") from exc


def run_seeds(master_seed: int, k: int, fixed_placement: bool = False):
    """Placement, measurement and init seed sequences for run ``k``."""
    placement = (np.random.SeedSequence([master_seed, 0, 0]) if fixed_placement
                 else np.random.SeedSequence([master_seed, k, 0]))
    return placement, np.random.SeedSequence([master_seed, k, 1]), np.random.SeedSequence([master_seed, k, 2])


def make_instance(scenario: ScenarioConfig, master_seed: int, k: int):
    """Network, measurements and initial estimates for MC run ``k``."""
    s_place, s_meas, s_init = run_seeds(master_seed, k, scenario.fixed_placement)
    sensors = np.random.default_rng(s_place).uniform(0.0, scenario.area, (scenario.num_sensors, 2))
    positions = np.vstack([sensors, np.asarray(scenario.anchors, dtype=float).reshape(-1, 2)])
    net = build_topology(positions, scenario.comm_radius, scenario.num_anchors)
    ms = synthesize(net, scenario.noise, s_meas)
    init = gaussian_init(net, scenario.init_std, s_init)
    return net, ms, init


# Each method maps (net, ms, init, scenario) to (state, [traces]).
def _m_stage1(net, ms, init, sc):
    s, t = run_stage(net, ms, init, sc.stage1, sc.noise.sigma_n, sc.schedule)
    return s, [t]


def _m_two_stage(net, ms, init, sc):
    s, t1, t2 = solve_two_stage(net, ms, init, sc.stage1, sc.stage2, sc.noise.sigma_n,
                                sc.schedule, strict=False)
    return s, [t1, t2]


def _m_relaxed_nls(net, ms, init, sc):
    s, t = solve_relaxed_nls(net, ms, init, sc.stage1, sc.noise.sigma_n, sc.schedule)
    return s, [t]


def _m_raw_huber(net, ms, init, sc):
    s, t = solve_raw_huber(net, ms, init, sc.stage1, sc.noise.sigma_n, sc.schedule)
    return s, [t]


def _m_pocs(net, ms, init, sc):
    s, t = solve_pocs(net, ms, init, sc.pocs_iters)
    return s, [t]


def _m_oracle(net, ms, init, sc):
    s, t = solve_oracle_los(net, ms, init, sc.oracle, sc.noise.sigma_n, sc.schedule, sc.pocs_iters)
    return s, [t]


METHODS = {
    "stage1": _m_stage1,
    "two_stage": _m_two_stage,
    "relaxed_nls": _m_relaxed_nls,
    "raw_huber": _m_raw_huber,
    "pocs": _m_pocs,
    "oracle_los": _m_oracle,
}


@dataclass
class RunRecord:
    run: int
    error: float | None
    sensor_errors: list[float]
    traces: list[dict]
    measurement_digest: str
    failed: bool = False
    message: str = ""


@dataclass
class RunReport:
    method: str
    runs: list[RunRecord] = field(default_factory=list)
    scenario: dict = field(default_factory=dict)
    master_seed: int | None = None
    label: str = ""

    @property
    def errors(self) -> np.ndarray:
        """Sorted network errors of the successful runs (the empirical CDF samples)."""
        return np.sort(np.array([r.error for r in self.runs if not r.failed], dtype=float))

    @property
    def failures(self) -> int:
        return sum(r.failed for r in self.runs)

    def paired_errors(self) -> np.ndarray:
        """Per-run errors in run order, with failed runs as +inf."""
        return np.array([math.inf if r.failed else r.error for r in self.runs], dtype=float)

    def summary(self) -> dict:
        e = self.errors
        out = {"method": self.method, "runs": len(self.runs), "failures": self.failures}
        if e.size:
            q = np.quantile(e, [0.1, 0.25, 0.5, 0.75, 0.9])
            out.update(mean=float(e.mean()), median=float(q[2]), q10=float(q[0]),
                       q25=float(q[1]), q75=float(q[3]), q90=float(q[4]), max=float(e[-1]))
        return out

    def __eq__(self, other):
        if not isinstance(other, RunReport):
            return NotImplemented
        return (self.method, self.runs, self.scenario, self.master_seed, self.label) == \
            (other.method, other.runs, other.scenario, other.master_seed, other.label)


def _solve_one(method_name, fn, net, ms, init, scenario, k) -> RunRecord:
    truth = net.true_sensor_positions
    try:
        state, traces = fn(net, ms, init, scenario)
    except DivergenceError as exc:
        return RunRecord(k, None, [], [exc.trace.to_dict()], ms.digest(), True, str(exc))
    se = sensor_errors(state.positions, truth)
    return RunRecord(k, network_error(state.positions, truth), se.tolist(),
                     [t.to_dict() for t in traces], ms.digest())


def _run_one(args):
    scenario, methods, master_seed, k = args
    net, ms, init = make_instance(scenario, master_seed, k)
    return [_solve_one(m, METHODS[m], net, ms, EstimateState(init.positions.copy()), scenario, k)
            for m in methods]


def run_monte_carlo(scenario: ScenarioConfig, methods, master_seed: int,
                    parallel: int = 1) -> dict[str, RunReport]:
    """Paired MC evaluation: every method sees the same network, ranges and init per run."""
    methods = list(methods)
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; choose from {sorted(METHODS)}")
    jobs = [(scenario, methods, master_seed, k) for k in range(scenario.mc_runs)]
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            results = list(pool.map(_run_one, jobs, chunksize=max(1, len(jobs) // (4 * parallel))))
    else:
        results = [_run_one(j) for j in jobs]
    echo = scenario.to_dict()
    reports = {m: RunReport(m, [], echo, master_seed) for m in methods}
    for per_run in results:
        for m, rec in zip(methods, per_run):
            reports[m].runs.append(rec)
    return reports


def run_reinit_trials(net: Network, ms: MeasurementSet, scenario: ScenarioConfig, methods,
                      master_seed: int, trials: int, label: str = "") -> dict[str, RunReport]:
    """Fixed network and ranges, ``trials`` random re-initializations (real-data protocol).

    Initial estimates are Gaussian around the truth with ``scenario.init_std``.
    """
    methods = list(methods)
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; choose from {sorted(METHODS)}")
    echo = scenario.to_dict()
    reports = {m: RunReport(m, [], echo, master_seed, label) for m in methods}
    for k in range(trials):
        init = gaussian_init(net, scenario.init_std, np.random.SeedSequence([master_seed, k, 2]))
        for m in methods:
            reports[m].runs.append(_solve_one(m, METHODS[m], net, ms,
                                              EstimateState(init.positions.copy()), scenario, k))
    return reports


def empirical_cdf(samples, grid) -> list[tuple[float, float]]:
    s = np.sort(np.asarray(samples, dtype=float))
    if s.size == 0:
        raise ValueError("empty sample set")
    g = np.asarray(grid, dtype=float)
    frac = np.searchsorted(s, g, side="right") / s.size
    return [(float(x), float(f)) for x, f in zip(g, frac)]


def cdf_table(report: RunReport, grid=None) -> list[tuple[float, float]]:
    """Empirical CDF of the report's network errors at ``grid`` (default: the samples)."""
    e = report.errors
    if e.size == 0:
        raise ValueError(f"{report.method}: no successful runs")
    return empirical_cdf(e, e if grid is None else grid)


def default_grid(reports, points: int = 101) -> np.ndarray:
    hi = max((r.errors.max() for r in reports if r.errors.size), default=1.0)
    return np.linspace(0.0, float(hi), points)
