"""Single runs, seed ensembles, parameter sweeps and monetary shocks.

Every run is a pure function of ``(params, policy, T, seed)``. Sweep cells
derive their seeds from the base seed and the cell coordinates, so results
do not depend on the number of workers or the order cells finish in.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Callable, Sequence

import numpy as np

from .economy import (
    K_RHO_STAR,
    N_RECORD,
    ConsistencyError,
    advance,
    init_economy,
    pack_knobs,
)
from .observables import (
    PHASES,
    RunRecord,
    RunSummary,
    majority_phase,
    summarize,
)
from .params import (
    MODEL_FIELDS,
    POLICY_FIELDS,
    ModelParams,
    ParameterError,
    PolicyParams,
    as_dict,
    with_overrides,
)

DEFAULT_T = 20_000
DEFAULT_T_EQ = 5_000
DEFAULT_GRID_STEPS = 21
DEFAULT_SHOCK_WINDOW = 2_000


class RunFailure(RuntimeError):
    """A run aborted; ``step`` is the offending step index."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


def derive_seed(base_seed: int, *key: int) -> int:
    """64-bit seed for a task, hashed from the base seed and integer coordinates.

    Uses numpy's ``SeedSequence`` over ``[base_seed, *key]``.
    """
    words = [int(base_seed), *(int(k) for k in key)]
    return int(np.random.SeedSequence(words).generate_state(1, np.uint64)[0])


def run_simulation(
    params: ModelParams,
    policy: PolicyParams,
    T: int,
    seed: int | None = None,
    rho_star_change: tuple[int, float] | None = None,
) -> RunRecord:
    """Run ``T`` steps from a fresh economy and return the macro record.

    ``rho_star_change=(t_s, value)`` switches the natural rate to ``value``
    after ``t_s`` steps.
    """
    if int(T) != T or T < 1:
        raise ParameterError("T must be a positive integer")
    params.validate()
    policy.validate()
    T = int(T)
    seed = params.seed if seed is None else int(seed)
    state = init_economy(params, policy, seed=seed)
    knobs = pack_knobs(params, policy)
    rows = np.empty((T, N_RECORD))
    try:
        if rho_star_change is None:
            advance(state, knobs, T, rows)
        else:
            t_s, value = rho_star_change
            t_s = min(int(t_s), T)
            advance(state, knobs, t_s, rows)
            knobs[K_RHO_STAR] = value
            advance(state, knobs, T - t_s, rows, t_s)
    except ConsistencyError as exc:
        raise RunFailure(f"seed {seed}: {exc}", step=state.t) from exc
    return RunRecord.from_array(rows)


@dataclass
class EnsembleResult:
    """Per-seed summaries with their mean, spread and majority label."""

    seeds: list[int]
    summaries: list[RunSummary | None]
    failures: dict[int, str] = field(default_factory=dict)

    @property
    def completed(self) -> list[RunSummary]:
        return [s for s in self.summaries if s is not None]

    def _stat(self, name: str, fn) -> float:
        vals = [getattr(s, name) for s in self.completed]
        return float(fn(vals)) if vals else math.nan

    @property
    def mean_u(self) -> float:
        return self._stat("mean_u", np.mean)

    @property
    def amplitude(self) -> float:
        return self._stat("amplitude", np.mean)

    @property
    def mean_pi(self) -> float:
        return self._stat("mean_pi", np.mean)

    @property
    def var_eps(self) -> float:
        return self._stat("var_eps", np.mean)

    @property
    def std_u(self) -> float:
        return self._stat("mean_u", np.std)

    @property
    def std_amplitude(self) -> float:
        return self._stat("amplitude", np.std)

    @property
    def std_pi(self) -> float:
        return self._stat("mean_pi", np.std)

    @property
    def labels(self) -> list[str]:
        return [s.phase for s in self.completed]

    @property
    def phase(self) -> str:
        return majority_phase(self.labels) if self.completed else "none"

    @property
    def max_drift(self) -> float:
        return self._stat("max_drift", max)

    @property
    def max_bank_residual(self) -> float:
        return self._stat("max_bank_residual", max)

    @property
    def ok(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict[str, Any]:
        return {
            "seeds": list(self.seeds),
            "mean_u": self.mean_u,
            "std_u": self.std_u,
            "amplitude": self.amplitude,
            "std_amplitude": self.std_amplitude,
            "mean_pi": self.mean_pi,
            "std_pi": self.std_pi,
            "var_eps": self.var_eps,
            "phase": self.phase,
            "labels": {p: self.labels.count(p) for p in PHASES},
            "runs": [None if s is None else asdict(s) for s in self.summaries],
            "failures": {str(k): v for k, v in self.failures.items()},
        }


def _summary_task(args) -> tuple[int, RunSummary | None, str | None]:
    params, policy, T, t_eq, seed = args
    try:
        rec = run_simulation(params, policy, T, seed)
    except RunFailure as exc:
        return seed, None, str(exc)
    return seed, summarize(rec, t_eq), None


def _map(fn: Callable, tasks: list, jobs: int, progress: Callable | None = None):
    if jobs <= 1 or len(tasks) <= 1:
        out = []
        for task in tasks:
            out.append(fn(task))
            if progress:
                progress(len(out), len(tasks))
        return out
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        out = []
        for res in pool.map(fn, tasks):
            out.append(res)
            if progress:
                progress(len(out), len(tasks))
        return out


def ensemble(
    params: ModelParams,
    policy: PolicyParams,
    T: int,
    seeds: Sequence[int],
    t_eq: int = DEFAULT_T_EQ,
    jobs: int = 1,
) -> EnsembleResult:
    """Summaries of one run per seed; failed runs are reported, not dropped."""
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ParameterError("ensemble needs at least one seed")
    if t_eq >= T:
        raise ParameterError("t_eq must be smaller than T")
    results = _map(_summary_task, [(params, policy, T, t_eq, s) for s in seeds], jobs)
    summaries = [r[1] for r in results]
    failures = {r[0]: r[2] for r in results if r[2] is not None}
    return EnsembleResult(seeds, summaries, failures)


@dataclass(frozen=True)
class Axis:
    name: str
    min: float
    max: float
    steps: int

    @property
    def values(self) -> np.ndarray:
        return np.linspace(self.min, self.max, self.steps)


@dataclass(frozen=True)
class SweepSpec:
    """A 2-D grid over two parameters, with ``ensemble_size`` runs per cell."""

    x: Axis
    y: Axis
    fixed: dict = field(default_factory=dict)
    ensemble_size: int = 4
    T: int = DEFAULT_T
    t_eq: int = DEFAULT_T_EQ
    base_seed: int = 0

    def validate(self) -> "SweepSpec":
        known = set(MODEL_FIELDS) | set(POLICY_FIELDS)
        for axis in (self.x, self.y):
            if axis.name not in known or axis.name == "seed":
                raise ParameterError(f"unknown sweep axis {axis.name!r}")
            if axis.steps < 1:
                raise ParameterError(f"axis {axis.name} needs at least one step")
        if self.x.name == self.y.name:
            raise ParameterError("sweep axes must differ")
        for key in self.fixed:
            if key not in known:
                raise ParameterError(f"unknown parameter {key!r}")
        if self.ensemble_size < 1:
            raise ParameterError("ensemble_size must be >= 1")
        if not 0 <= self.t_eq < self.T:
            raise ParameterError("need 0 <= t_eq < T")
        return self

    def cell_params(self, params: ModelParams, policy: PolicyParams, ix: int, iy: int):
        over = dict(self.fixed)
        over[self.x.name] = float(self.x.values[ix])
        over[self.y.name] = float(self.y.values[iy])
        return with_overrides(params, policy, over)

    def cell_seeds(self, ix: int, iy: int) -> list[int]:
        return [derive_seed(self.base_seed, ix, iy, r) for r in range(self.ensemble_size)]

    def to_dict(self) -> dict[str, Any]:
        return {
            "x": asdict(self.x),
            "y": asdict(self.y),
            "fixed": dict(self.fixed),
            "ensemble_size": self.ensemble_size,
            "T": self.T,
            "t_eq": self.t_eq,
            "base_seed": self.base_seed,
        }


@dataclass
class PhaseGrid:
    """Ensemble aggregates per cell; arrays are indexed ``[iy, ix]``."""

    spec: SweepSpec
    x_values: np.ndarray
    y_values: np.ndarray
    cells: list[list[EnsembleResult]]
    config: dict = field(default_factory=dict)

    def _field(self, name: str) -> np.ndarray:
        return np.array([[getattr(c, name) for c in row] for row in self.cells])

    @property
    def mean_u(self) -> np.ndarray:
        return self._field("mean_u")

    @property
    def amplitude(self) -> np.ndarray:
        return self._field("amplitude")

    @property
    def mean_pi(self) -> np.ndarray:
        return self._field("mean_pi")

    @property
    def phase(self) -> np.ndarray:
        return self._field("phase")

    @property
    def complete(self) -> bool:
        return all(
            c.ok and len(c.completed) == self.spec.ensemble_size
            for row in self.cells for c in row
        )

    def cell(self, ix: int, iy: int) -> EnsembleResult:
        return self.cells[iy][ix]


def _cell_task(args):
    spec, params, policy, ix, iy = args
    p, q = spec.cell_params(params, policy, ix, iy)
    seeds = spec.cell_seeds(ix, iy)
    runs = [_summary_task((p, q, spec.T, spec.t_eq, s)) for s in seeds]
    failures = {s: msg for s, _, msg in runs if msg is not None}
    return ix, iy, EnsembleResult(seeds, [r[1] for r in runs], failures)


def sweep(
    spec: SweepSpec,
    params: ModelParams | None = None,
    policy: PolicyParams | None = None,
    jobs: int = 1,
    progress: Callable[[int, int], None] | None = None,
) -> PhaseGrid:
    """Run every cell of ``spec``; cells may run in parallel worker processes."""
    spec.validate()
    params = params or ModelParams()
    policy = policy or PolicyParams()
    # reject bad overrides before any run starts
    for ix in (0, spec.x.steps - 1):
        for iy in (0, spec.y.steps - 1):
            spec.cell_params(params, policy, ix, iy)
    tasks = [(spec, params, policy, ix, iy)
             for iy in range(spec.y.steps) for ix in range(spec.x.steps)]
    cells: list[list[EnsembleResult | None]] = [[None] * spec.x.steps for _ in range(spec.y.steps)]
    for ix, iy, res in _map(_cell_task, tasks, jobs, progress):
        cells[iy][ix] = res
    return PhaseGrid(spec, spec.x.values, spec.y.values, cells, config=as_dict(params, policy))


@dataclass(frozen=True)
class ShockSpec:
    """A permanent step in the natural rate at ``t_shock``.

    Responses are relative variations against the mean over the
    ``window_before`` steps preceding the shock.
    """

    rho_before: float = 0.02
    rho_after: float = 0.018
    t_shock: int = 7_000
    window_before: int = DEFAULT_SHOCK_WINDOW
    window_after: int = DEFAULT_SHOCK_WINDOW
    relative: bool = True
    t_eq: int = DEFAULT_T_EQ

    def validate(self) -> "ShockSpec":
        if self.t_shock <= self.t_eq:
            raise ParameterError("t_shock must be later than t_eq")
        if self.window_before < 1 or self.window_after < 1:
            raise ParameterError("shock windows must be positive")
        if self.window_before > self.t_shock:
            raise ParameterError("window_before reaches past the start of the run")
        return self

    @property
    def T(self) -> int:
        return self.t_shock + self.window_after


@dataclass
class ShockResponse:
    """Ensemble-mean relative responses on ``lag = t - t_shock``."""

    lag: np.ndarray
    output: np.ndarray
    wages: np.ndarray
    prices: np.ndarray
    per_seed_output: np.ndarray
    seeds: list[int]
    max_drift: float = 0.0
    max_bank_residual: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.column_stack([self.lag, self.output, self.wages, self.prices])


def _shock_task(args):
    spec, params, policy, seed = args
    rec = run_simulation(params, policy, spec.T, seed, (spec.t_shock, spec.rho_after))
    lo, hi = spec.t_shock - spec.window_before, spec.T
    series = []
    for x in (rec.epsilon, rec.wbar, rec.pbar):
        pre = x[spec.t_shock - spec.window_before:spec.t_shock].mean()
        w = x[lo:hi]
        series.append(w / pre - 1.0 if spec.relative else w - pre)
    series.append(float(np.abs(rec.drift).max()))
    series.append(float(np.abs(rec.bank_residual).max()))
    return series


def monetary_shock(
    spec: ShockSpec,
    params: ModelParams,
    seeds: Sequence[int],
    policy: PolicyParams | None = None,
    jobs: int = 1,
) -> ShockResponse:
    """Ensemble response of output, wages and prices to a natural-rate step.

    The Taylor feedback must be off so the base rate is set by the shock alone.
    """
    spec.validate()
    policy = replace(policy or PolicyParams(), rho_star=spec.rho_before)
    if policy.phi_pi != 0 or policy.phi_eps != 0:
        raise ParameterError("a monetary shock needs phi_pi = phi_eps = 0")
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ParameterError("monetary_shock needs at least one seed")
    runs = _map(_shock_task, [(spec, params, policy, s) for s in seeds], jobs)
    out = np.array([r[0] for r in runs])
    wages = np.mean([r[1] for r in runs], axis=0)
    prices = np.mean([r[2] for r in runs], axis=0)
    lag = np.arange(-spec.window_before, spec.window_after)
    return ShockResponse(lag, out.mean(axis=0), wages, prices, out, seeds,
                         max(r[3] for r in runs), max(r[4] for r in runs))


def collapses(params: ModelParams, policy: PolicyParams, T: int, seeds: Sequence[int],
              t_eq: int, threshold: float = 0.5) -> bool:
    """True when the majority of runs end with mean employment below ``threshold``."""
    low = 0
    for s in seeds:
        rec = run_simulation(params, policy, T, s)
        if rec.epsilon[t_eq:].mean() < threshold:
            low += 1
    return 2 * low > len(seeds)


def locate_critical_R(
    params: ModelParams,
    policy: PolicyParams,
    lo: float,
    hi: float,
    T: int,
    t_eq: int,
    seeds: Sequence[int] = (0,),
    tol: float = 0.005,
) -> float:
    """Bisect on ``R`` for the collapse boundary between ``lo`` (collapsed) and ``hi``."""
    at = lambda R: replace(params, R=R)
    if not collapses(at(lo), policy, T, seeds, t_eq):
        raise ParameterError(f"R={lo} does not collapse")
    if collapses(at(hi), policy, T, seeds, t_eq):
        raise ParameterError(f"R={hi} collapses")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if collapses(at(mid), policy, T, seeds, t_eq):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
