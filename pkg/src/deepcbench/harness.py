"""Closed-loop runner and benchmark plumbing.

A Scenario names a plant, a controller, a reference, and a data budget;
run_closed_loop drives the receding-horizon loop and reports tracking and
timing metrics. Every controller sees exactly the same offline dataset
for a given (plant, data spec, seed), so suite comparisons isolate the
algorithm, not the data draw. All randomness flows from the scenario seed
through two named substreams (offline data, online loop noise), which
makes every number except wall-clock timing reproducible bit for bit.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import variants
from .deene import build_deene, deene_step
from .deepc import DeepcConfig, deepc_step
from .fft_hankel import FftHankelOperator, matfree_deepc_unconstrained
from .hankel import min_data_length, partition, svd_reduce
from .mpc import BoxConstraints, CostWeights, mpc_step
from .plants import (Excitation, NoiseSpec, collect_dataset,
                     estimate_state_from_history, get_plant, lag)

CONTROLLERS = ("mpc", "deepc", "spc", "nullspace", "reduced", "kernel",
               "rangespace", "dft", "deene")


@dataclass(frozen=True)
class ReferenceSpec:
    """Reference generator: constant level, sinusoid, or piecewise steps.

    piecewise pieces are (start_step, level) pairs; before the first start
    the constant level applies.
    """
    kind: str = "constant"
    level: float = 1.0
    amplitude: float = 1.0
    period: float = 40.0
    pieces: tuple = ()

    def __post_init__(self):
        if self.kind not in ("constant", "sinusoid", "piecewise"):
            raise ValueError(f"unknown reference kind {self.kind!r}")
        if self.kind == "sinusoid" and self.period <= 0:
            raise ValueError("sinusoid period must be positive")

    def value(self, t: int) -> float:
        if self.kind == "constant":
            return self.level
        if self.kind == "sinusoid":
            return self.amplitude * math.sin(2.0 * math.pi * t / self.period)
        out = self.level
        for start, level in sorted(self.pieces):
            if t >= start:
                out = level
        return out

    def window(self, t0: int, N: int, p: int) -> np.ndarray:
        vals = np.array([self.value(t0 + k) for k in range(N)])
        return np.repeat(vals[:, None], p, axis=1)


@dataclass(frozen=True)
class Scenario:
    """One closed-loop experiment: plant, controller, data budget, loop."""
    plant: str
    controller: str
    T_ini: int = 4
    N: int = 10
    steps: int = 50
    seed: int = 0
    data_length: int = 200
    episodes: int = 1
    excitation_amplitude: float = 1.0
    excitation_kind: str = "gaussian"
    reference: ReferenceSpec = field(default_factory=ReferenceSpec)
    constraints: BoxConstraints | None = None
    noise: NoiseSpec | None = None
    q_weight: float = 1.0
    r_weight: float = 0.1
    lambda_g: float = 0.0
    lambda_y: float = 1e3
    lambda_u: float = 1e3
    hard_past: bool = True
    use_input_slack: bool = False
    plant_params: tuple = ()
    controller_params: tuple = ()

    def resolve_plant(self):
        return get_plant(self.plant, **dict(self.plant_params))

    def deepc_config(self, model) -> DeepcConfig:
        weights = CostWeights.make(self.q_weight, self.r_weight, model.p, model.m)
        return DeepcConfig(T_ini=self.T_ini, N=self.N, weights=weights,
                           lambda_g=self.lambda_g, lambda_y=self.lambda_y,
                           lambda_u=self.lambda_u, hard_past=self.hard_past,
                           use_input_slack=self.use_input_slack)

    def validate(self, model):
        if self.controller not in CONTROLLERS:
            raise ValueError(f"unknown controller {self.controller!r}")
        if self.steps < 1:
            raise ValueError("steps must be positive")
        need = min_data_length(model.m, self.T_ini + self.N, model.n,
                               self.episodes)
        if self.data_length * self.episodes < need:
            raise ValueError(
                f"total data budget {self.data_length * self.episodes} below "
                f"the informativity bound {need} for this plant and horizon")


def collect_scenario_data(scenario: Scenario, model=None):
    """Offline excitation records for a scenario, substream [seed, 0]."""
    if model is None:
        model = scenario.resolve_plant()
    exc = Excitation(length=scenario.data_length,
                     amplitude=scenario.excitation_amplitude,
                     kind=scenario.excitation_kind,
                     episodes=scenario.episodes)
    return collect_dataset(model, exc, noise=scenario.noise,
                           seed=[scenario.seed, 0])


class _StepResult:
    """Minimal controller-step record for paths that bypass the QP."""

    def __init__(self, u, status="optimal"):
        self.u = u
        self.status = status


class _MpcController:
    """Certainty-equivalent baseline with the same information as DeePC.

    The state is re-estimated from the (u_ini, y_ini) window every step,
    so the comparison with data-driven controllers is information-fair.
    """

    def __init__(self, model, scenario: Scenario):
        if not model.is_linear:
            raise ValueError("the model-based baseline needs a linear plant")
        self.model = model
        self.weights = CostWeights.make(scenario.q_weight, scenario.r_weight,
                                        model.p, model.m)
        self.N = scenario.N
        self.constraints = scenario.constraints
        self.stored_entries = (model.A.size + model.B.size
                               + model.C.size + model.D.size)

    def step(self, u_ini, y_ini, r):
        x = estimate_state_from_history(self.model, u_ini, y_ini)
        return mpc_step(self.model, x, r, self.weights, self.N,
                        constraints=self.constraints)


class _DeepcController:
    def __init__(self, blocks, config, constraints):
        self.blocks = blocks
        self.config = config
        self.constraints = constraints
        self.stored_entries = blocks.H.size

    def step(self, u_ini, y_ini, r):
        return deepc_step(self.blocks, self.config, u_ini, y_ini, r,
                          constraints=self.constraints)


class _SpcController:
    def __init__(self, blocks, config, constraints):
        self.pred = variants.fit_spc(blocks)
        self.config = config
        self.constraints = constraints
        # the multistep predictor is the whole footprint unless the
        # combiner-regularization term keeps the pseudoinverse maps alive
        self.stored_entries = self.pred.S_ini.size + self.pred.S_u.size
        if config.lambda_g > 0:
            self.stored_entries += self.pred.H_ini.size + self.pred.H_u.size

    def step(self, u_ini, y_ini, r):
        return variants.spc_step(self.pred, self.config, u_ini, y_ini, r,
                                 constraints=self.constraints)


class _NullSpaceController:
    def __init__(self, blocks, config, constraints):
        self.param = variants.build_null_space(blocks)
        self.blocks = blocks
        self.config = config
        self.constraints = constraints
        self.stored_entries = (self.param.null_basis.size
                               + self.param.pinv_past.size
                               + blocks.H.size)

    def step(self, u_ini, y_ini, r):
        return variants.null_space_step(self.param, self.blocks, self.config,
                                        u_ini, y_ini, r,
                                        constraints=self.constraints)


class _ReducedController:
    def __init__(self, blocks, config, constraints, r_a="auto"):
        self.red = svd_reduce(blocks, r_a=r_a)
        self.config = config
        self.constraints = constraints
        self.stored_entries = self.red.blocks.H.size

    def step(self, u_ini, y_ini, r):
        return variants.reduced_order_step(self.red, self.config,
                                           u_ini, y_ini, r,
                                           constraints=self.constraints)


class _KernelController:
    def __init__(self, model, data, scenario: Scenario, config, constraints,
                 params):
        if not model.is_linear:
            raise ValueError("kernel representation needs a linear plant "
                             "(lag and order must be known)")
        M = params.get("M", lag(model) + 1)
        Z = scenario.T_ini + scenario.N
        rep = variants.build_kernel_rep([tr.w for tr in data], model.m,
                                        M, Z, n=model.n)
        self.blocks = rep.as_blocks(scenario.T_ini, scenario.N)
        self.config = config
        self.constraints = constraints
        self.stored_entries = rep.P.size

    def step(self, u_ini, y_ini, r):
        return deepc_step(self.blocks, self.config, u_ini, y_ini, r,
                          constraints=self.constraints)


class _RangeSpaceController:
    def __init__(self, blocks, config, constraints):
        self.rs = variants.build_range_space(blocks)
        self.config = config
        self.constraints = constraints
        self.stored_entries = self.rs.G.size

    def step(self, u_ini, y_ini, r):
        return variants.range_space_step(self.rs, self.config,
                                         u_ini, y_ini, r,
                                         constraints=self.constraints)


class _DftController:
    """Matrix-free controller: one FFT operator, conjugate-gradient solves."""

    def __init__(self, data, model, config, constraints):
        if constraints is not None and not constraints.is_trivial():
            raise ValueError("matrix-free path is unconstrained only")
        if len(data) != 1:
            raise ValueError("matrix-free path needs a single episode")
        self.op = FftHankelOperator(data[0], config.T_ini + config.N)
        self.m = model.m
        self.config = config
        self.stored_entries = self.op.stored_entries

    def step(self, u_ini, y_ini, r):
        return matfree_deepc_unconstrained(self.op, self.m, self.config,
                                           u_ini, y_ini, r)


class _DeeneController:
    """Sensitivity-update controller: full solves only on refresh."""

    def __init__(self, blocks, config, constraints, params):
        self.blocks = blocks
        self.config = config
        self.constraints = constraints
        self.refresh_every = params.get("refresh_every", 25)
        self.trust_radius = params.get("trust_radius")
        self.gains = None
        self.refreshes = 0
        self.stored_entries = blocks.H.size

    def _rebuild(self, u_ini, y_ini, r):
        nominal = deepc_step(self.blocks, self.config, u_ini, y_ini, r,
                             constraints=self.constraints)
        self.gains = build_deene(nominal, self.blocks, self.config,
                                 u_ini, y_ini, r,
                                 constraints=self.constraints,
                                 trust_radius=self.trust_radius,
                                 refresh_every=self.refresh_every)
        self.refreshes += 1
        self.stored_entries = (self.blocks.H.size + self.gains.K1.size
                               + self.gains.K2.size + self.gains.M1.size
                               + self.gains.M2.size)
        return nominal

    def step(self, u_ini, y_ini, r):
        if self.gains is None:
            return self._rebuild(u_ini, y_ini, r)
        u_star, refresh = deene_step(self.gains, u_ini, y_ini, r)
        if refresh:
            return self._rebuild(u_ini, y_ini, r)
        return _StepResult(u_star.reshape(self.blocks.N, self.blocks.m))


def make_controller(scenario: Scenario, model, data):
    """Instantiate the named controller on a shared dataset."""
    name = scenario.controller
    params = dict(scenario.controller_params)
    config = scenario.deepc_config(model)
    cons = scenario.constraints
    if name == "mpc":
        return _MpcController(model, scenario)
    blocks = partition(data, scenario.T_ini, scenario.N)
    if name == "deepc":
        return _DeepcController(blocks, config, cons)
    if name == "spc":
        return _SpcController(blocks, config, cons)
    if name == "nullspace":
        return _NullSpaceController(blocks, config, cons)
    if name == "reduced":
        return _ReducedController(blocks, config, cons,
                                  r_a=params.get("r_a", "auto"))
    if name == "kernel":
        return _KernelController(model, data, scenario, config, cons, params)
    if name == "rangespace":
        return _RangeSpaceController(blocks, config, cons)
    if name == "dft":
        return _DftController(data, model, config, cons)
    if name == "deene":
        return _DeeneController(blocks, config, cons, params)
    raise ValueError(f"unknown controller {name!r}")


@dataclass
class ClosedLoopResult:
    """Per-step logs plus the headline metrics of one closed-loop run."""
    u: np.ndarray
    y: np.ndarray
    r: np.ndarray
    solve_times: np.ndarray
    rmse: float
    total_cost: float
    violations: int
    max_violation: float
    solver_failures: int
    stored_entries: int

    @property
    def steps(self) -> int:
        return self.u.shape[0]


def _violation(u, y, cons: BoxConstraints | None, tol=1e-9) -> float:
    if cons is None or cons.is_trivial():
        return 0.0
    worst = 0.0
    for vec, lo, hi in ((u, cons.u_min, cons.u_max), (y, cons.y_min, cons.y_max)):
        if lo is not None:
            worst = max(worst, float(np.max(lo - vec)))
        if hi is not None:
            worst = max(worst, float(np.max(vec - hi)))
    return worst if worst > tol else 0.0


def run_closed_loop(scenario: Scenario, data=None) -> ClosedLoopResult:
    """Drive one controller against one plant for scenario.steps loops.

    The initial window comes from a zero-input open-loop rollout of length
    T_ini from the origin; afterwards each loop solves the controller,
    applies the first input, measures, and shifts the window. Online noise
    uses substream [seed, 1] so it is independent of the offline data.
    """
    model = scenario.resolve_plant()
    scenario.validate(model)
    if data is None:
        data = collect_scenario_data(scenario, model)
    controller = make_controller(scenario, model, data)

    rng = np.random.default_rng([scenario.seed, 1])
    noise = scenario.noise
    meas = noise.measurement_std if noise else 0.0
    proc = noise.process_std if noise else 0.0
    m, p, n = model.m, model.p, model.n

    x = np.zeros(n)
    u_ini = np.zeros((scenario.T_ini, m))
    y_ini = np.zeros((scenario.T_ini, p))
    for t in range(scenario.T_ini):
        y_t = model.output(x, u_ini[t])
        if meas:
            y_t = y_t + meas * rng.standard_normal(p)
        y_ini[t] = y_t
        x = model.step_state(x, u_ini[t])
        if proc:
            x = x + proc * rng.standard_normal(n)

    weights = CostWeights.make(scenario.q_weight, scenario.r_weight, p, m)
    u_log = np.zeros((scenario.steps, m))
    y_log = np.zeros((scenario.steps, p))
    r_log = np.zeros((scenario.steps, p))
    times = np.zeros(scenario.steps)
    failures = 0
    max_viol = 0.0
    violations = 0

    for k in range(scenario.steps):
        r_win = scenario.reference.window(k, scenario.N, p)
        t0 = time.perf_counter()
        try:
            sol = controller.step(u_ini, y_ini, r_win)
        except Exception as exc:
            raise RuntimeError(
                f"controller {scenario.controller!r} failed at step {k}: {exc}"
            ) from exc
        times[k] = time.perf_counter() - t0
        if getattr(sol, "status", "optimal") != "optimal":
            failures += 1
        u_k = np.asarray(sol.u, dtype=float).reshape(scenario.N, m)[0]

        y_k = model.output(x, u_k)
        if meas:
            y_k = y_k + meas * rng.standard_normal(p)
        x = model.step_state(x, u_k)
        if proc:
            x = x + proc * rng.standard_normal(n)

        u_log[k] = u_k
        y_log[k] = y_k
        r_log[k] = r_win[0]
        viol = _violation(u_k, y_k, scenario.constraints)
        if viol > 0.0:
            violations += 1
            max_viol = max(max_viol, viol)
        u_ini = np.vstack([u_ini[1:], u_k])
        y_ini = np.vstack([y_ini[1:], y_k])

    err = y_log - r_log
    rmse = float(np.sqrt(np.sum(err ** 2) / (scenario.steps * p)))
    cost = float(np.sum((err @ weights.Q) * err) + np.sum((u_log @ weights.R) * u_log))
    return ClosedLoopResult(
        u=u_log, y=y_log, r=r_log, solve_times=times, rmse=rmse,
        total_cost=cost, violations=violations, max_violation=max_viol,
        solver_failures=failures,
        stored_entries=int(controller.stored_entries))


def summarize(result: ClosedLoopResult) -> dict:
    """Headline metrics of a run as a flat record."""
    st = result.solve_times
    return {
        "steps": result.steps,
        "rmse": result.rmse,
        "total_cost": result.total_cost,
        "violations": result.violations,
        "max_violation": result.max_violation,
        "solver_failures": result.solver_failures,
        "solve_time_mean_ms": float(np.mean(st) * 1e3),
        "solve_time_median_ms": float(np.median(st) * 1e3),
        "solve_time_max_ms": float(np.max(st) * 1e3),
        "stored_entries": result.stored_entries,
    }


def _data_key(s: Scenario):
    noise = (s.noise.process_std, s.noise.measurement_std) if s.noise else None
    return (s.plant, s.plant_params, s.data_length, s.episodes,
            s.excitation_amplitude, s.excitation_kind, noise, s.seed)


def run_suite(scenarios, jobs: int = 1):
    """Run many scenarios, sharing datasets across controllers.

    Returns one record per scenario with identity columns, metrics, and a
    status field; a failing row reports its error without stopping the
    rest. Rows with identical (plant, data spec, seed) reuse the same
    trajectory objects, which makes cross-controller comparisons exact.
    """
    scenarios = list(scenarios)
    cache = {}
    for s in scenarios:
        key = _data_key(s)
        if key not in cache:
            cache[key] = collect_scenario_data(s)

    def one(s: Scenario) -> dict:
        row = {
            "plant": s.plant, "controller": s.controller,
            "T_ini": s.T_ini, "N": s.N, "steps": s.steps,
            "seed": s.seed, "data_length": s.data_length,
        }
        try:
            result = run_closed_loop(s, data=cache[_data_key(s)])
            row.update(summarize(result))
            row["status"] = "ok"
        except Exception as exc:
            row["status"] = f"error: {exc}"
        return row

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(one, scenarios))
    return [one(s) for s in scenarios]
