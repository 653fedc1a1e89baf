"""Command-line front end: suite configs in, CSV/JSON artifacts out.

The config is a single TOML document; every key is schema-checked and an
unknown key is an error that names the key, so typos cannot silently fall
back to defaults. All numeric outputs are reproducible from summary.json
alone (it embeds the resolved config and its hash); only wall-clock
timing columns vary between runs.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, replace

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from .harness import (CONTROLLERS, ReferenceSpec, Scenario,
                      collect_scenario_data, run_closed_loop, summarize,
                      _data_key)
from .mpc import BoxConstraints
from .plants import NoiseSpec, plant_registry

CSV_COLUMNS = ("plant", "controller", "T_ini", "N", "steps", "seed",
               "data_length", "status", "rmse", "total_cost", "violations",
               "max_violation", "solver_failures", "solve_time_mean_ms",
               "solve_time_median_ms", "solve_time_max_ms", "stored_entries")

_SCENARIO_SCALARS = {
    "T_ini": int, "N": int, "steps": int, "seed": int,
    "data_length": int, "episodes": int,
    "excitation_amplitude": float, "excitation_kind": str,
    "q_weight": float, "r_weight": float,
    "lambda_g": float, "lambda_y": float, "lambda_u": float,
    "hard_past": bool, "use_input_slack": bool,
}
_SCENARIO_TABLES = ("reference", "constraints", "noise",
                    "plant_params", "controller_params")
_REFERENCE_KEYS = ("kind", "level", "amplitude", "period", "pieces")
_CONSTRAINT_KEYS = ("u_min", "u_max", "y_min", "y_max")
_NOISE_KEYS = ("process_std", "measurement_std")
_EMIT_KEYS = ("csv", "json", "plotdata")


class ConfigError(ValueError):
    pass


def _reject_unknown(table: dict, allowed, where: str):
    for key in table:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in {where}")


@dataclass(frozen=True)
class SuiteConfig:
    scenarios: tuple
    out: str = "results"
    emit_csv: bool = True
    emit_json: bool = True
    emit_plotdata: bool = False

    def canonical(self) -> dict:
        """Fully resolved config as plain data, stable across parses."""
        return {
            "out": self.out,
            "emit": {"csv": self.emit_csv, "json": self.emit_json,
                     "plotdata": self.emit_plotdata},
            "scenarios": [_scenario_dict(s) for s in self.scenarios],
        }


def _scenario_dict(s: Scenario) -> dict:
    cons = None
    if s.constraints is not None:
        cons = {k: (None if v is None else list(np.asarray(v, dtype=float)))
                for k, v in (("u_min", s.constraints.u_min),
                             ("u_max", s.constraints.u_max),
                             ("y_min", s.constraints.y_min),
                             ("y_max", s.constraints.y_max))}
    noise = None
    if s.noise is not None:
        noise = {"process_std": s.noise.process_std,
                 "measurement_std": s.noise.measurement_std}
    return {
        "plant": s.plant, "controller": s.controller,
        "T_ini": s.T_ini, "N": s.N, "steps": s.steps, "seed": s.seed,
        "data_length": s.data_length, "episodes": s.episodes,
        "excitation_amplitude": s.excitation_amplitude,
        "excitation_kind": s.excitation_kind,
        "q_weight": s.q_weight, "r_weight": s.r_weight,
        "lambda_g": s.lambda_g, "lambda_y": s.lambda_y,
        "lambda_u": s.lambda_u, "hard_past": s.hard_past,
        "use_input_slack": s.use_input_slack,
        "reference": {"kind": s.reference.kind, "level": s.reference.level,
                      "amplitude": s.reference.amplitude,
                      "period": s.reference.period,
                      "pieces": [list(pc) for pc in s.reference.pieces]},
        "constraints": cons, "noise": noise,
        "plant_params": dict(s.plant_params),
        "controller_params": dict(s.controller_params),
    }


def _build_scenario(table: dict, defaults: dict, where: str) -> list:
    """One [[scenario]] table -> one Scenario per listed controller."""
    allowed = (set(_SCENARIO_SCALARS) | set(_SCENARIO_TABLES)
               | {"plant", "controller", "controllers"})
    _reject_unknown(table, allowed, where)
    if "plant" not in table:
        raise ConfigError(f"{where} is missing the required key 'plant'")
    names = table.get("controllers")
    if names is None:
        names = [table["controller"]] if "controller" in table else None
    if not names:
        raise ConfigError(f"{where} needs 'controller' or 'controllers'")
    for name in names:
        if name not in CONTROLLERS:
            known = ", ".join(CONTROLLERS)
            raise ConfigError(
                f"unknown controller {name!r} in {where}; available: {known}")

    kwargs = dict(defaults)
    for key, cast in _SCENARIO_SCALARS.items():
        if key in table:
            kwargs[key] = cast(table[key])
    kwargs["plant"] = table["plant"]
    kwargs["plant_params"] = tuple(sorted(table.get("plant_params", {}).items()))
    kwargs["controller_params"] = tuple(
        sorted(table.get("controller_params", {}).items()))

    if "reference" in table:
        ref = dict(table["reference"])
        _reject_unknown(ref, _REFERENCE_KEYS, f"{where}.reference")
        if "pieces" in ref:
            ref["pieces"] = tuple((int(a), float(b)) for a, b in ref["pieces"])
        kwargs["reference"] = ReferenceSpec(**ref)
    if "noise" in table:
        noise = dict(table["noise"])
        _reject_unknown(noise, _NOISE_KEYS, f"{where}.noise")
        kwargs["noise"] = NoiseSpec(**noise)

    out = []
    for name in names:
        sc = Scenario(controller=name, **kwargs)
        model = sc.resolve_plant()
        if "constraints" in table:
            cons = dict(table["constraints"])
            _reject_unknown(cons, _CONSTRAINT_KEYS, f"{where}.constraints")
            sc = replace(sc, constraints=BoxConstraints.make(
                m=model.m, p=model.p, **cons))
        sc.validate(model)
        out.append(sc)
    return out


def parse_config(path: str) -> SuiteConfig:
    """Load and validate a TOML suite description."""
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    _reject_unknown(doc, ("out", "emit", "defaults", "scenario"), "config root")
    emit = dict(doc.get("emit", {}))
    _reject_unknown(emit, _EMIT_KEYS, "[emit]")
    defaults = dict(doc.get("defaults", {}))
    _reject_unknown(defaults, _SCENARIO_SCALARS, "[defaults]")
    defaults = {k: _SCENARIO_SCALARS[k](v) for k, v in defaults.items()}
    tables = doc.get("scenario", [])
    if not tables:
        raise ConfigError("config defines no [[scenario]] tables")
    scenarios = []
    for i, table in enumerate(tables):
        scenarios.extend(_build_scenario(table, defaults, f"[[scenario]] #{i + 1}"))
    return SuiteConfig(
        scenarios=tuple(scenarios),
        out=doc.get("out", "results"),
        emit_csv=emit.get("csv", True),
        emit_json=emit.get("json", True),
        emit_plotdata=emit.get("plotdata", False),
    )


def _config_hash(config: SuiteConfig) -> str:
    blob = json.dumps(config.canonical(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def _write_plotdata(path: str, result) -> None:
    p = result.r.shape[1]
    m = result.u.shape[1]
    header = (["step"] + [f"r{i}" for i in range(p)]
              + [f"y{i}" for i in range(p)] + [f"u{i}" for i in range(m)]
              + ["solve_time_s"])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for k in range(result.steps):
            writer.writerow([k, *result.r[k], *result.y[k], *result.u[k],
                             f"{result.solve_times[k]:.9f}"])


def cmd_run(args) -> int:
    config = parse_config(args.config)
    if args.out:
        config = replace(config, out=args.out)
    scenarios = config.scenarios
    if args.seed is not None:
        scenarios = tuple(replace(s, seed=args.seed) for s in scenarios)
        config = replace(config, scenarios=scenarios)
    os.makedirs(config.out, exist_ok=True)

    cache = {}
    for s in scenarios:
        key = _data_key(s)
        if key not in cache:
            cache[key] = collect_scenario_data(s)

    reps = max(1, args.timing_reps)

    def one(item):
        idx, s = item
        row = {"plant": s.plant, "controller": s.controller,
               "T_ini": s.T_ini, "N": s.N, "steps": s.steps,
               "seed": s.seed, "data_length": s.data_length}
        try:
            result = run_closed_loop(s, data=cache[_data_key(s)])
            if reps > 1:
                stack = [result.solve_times]
                for _ in range(reps - 1):
                    stack.append(run_closed_loop(s, data=cache[_data_key(s)]).solve_times)
                result.solve_times = np.median(np.stack(stack), axis=0)
            row.update(summarize(result))
            row["status"] = "ok"
            if config.emit_plotdata:
                name = f"plot_{idx:03d}_{s.plant}_{s.controller}_seed{s.seed}.csv"
                _write_plotdata(os.path.join(config.out, name), result)
        except Exception as exc:
            row["status"] = f"error: {exc}"
        return row

    items = list(enumerate(scenarios))
    if args.jobs and args.jobs > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(one, items))
    else:
        rows = [one(item) for item in items]
    failed = 0
    for s, row in zip(scenarios, rows):
        failed += row["status"] != "ok"
        print(f"{s.plant}/{s.controller} seed={s.seed}: {row['status']}")

    if config.emit_csv:
        with open(os.path.join(config.out, "results.csv"), "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS,
                                    extrasaction="ignore")
            writer.writeheader()
            for row in rows:
                writer.writerow({k: row.get(k, "") for k in CSV_COLUMNS})
    if config.emit_json:
        payload = {
            "config": config.canonical(),
            "config_sha256": _config_hash(config),
            "seed_override": args.seed,
            "generated_unix": int(time.time()),
            "rows": rows,
        }
        with open(os.path.join(config.out, "summary.json"), "w") as fh:
            json.dump(payload, fh, indent=2, default=float)
    return 1 if failed else 0


def cmd_verify(args) -> int:
    """Self-contained equivalence battery, printed one property per line."""
    from . import variants
    from .deepc import decomposed_step, deepc_step, unconstrained_deepc_gains
    from .fft_hankel import FftHankelOperator
    from .hankel import build_hankel, partition, svd_reduce
    from .plants import Excitation, collect_dataset, lag, make_random_lti, simulate

    seed = args.seed if args.seed is not None else 0
    rng = np.random.default_rng([seed, 7])
    model = make_random_lti(seed=seed, n=3, m=2, p=2)
    data = collect_dataset(model, Excitation(length=160), seed=[seed, 0])
    T_ini, N = max(2, lag(model)), 8
    blocks = partition(data, T_ini, N)
    sc = Scenario(plant="random_lti", controller="deepc", T_ini=T_ini, N=N)
    cfg = sc.deepc_config(model)
    cons = BoxConstraints.make(m=model.m, p=model.p, u_min=-0.4, u_max=0.4)
    # the hard-past regime needs a window that really is a plant trajectory
    u_ini = 0.1 * rng.standard_normal((T_ini, model.m))
    ini = simulate(model, 0.2 * rng.standard_normal(model.n), u_ini)
    y_ini = ini.y
    r = 0.5 * np.ones((N, model.p))
    ref = deepc_step(blocks, cfg, u_ini, y_ini, r, constraints=cons)

    checks = []

    def against(name, sol, tol=1e-6):
        err = max(np.max(np.abs(sol.u - ref.u)), np.max(np.abs(sol.y - ref.y)))
        checks.append((name, err < tol, f"max dev {err:.2e}"))

    against("multistep-predictor matches direct solve",
            variants.spc_step(variants.fit_spc(blocks), cfg, u_ini, y_ini, r,
                              constraints=cons))
    against("kernel-coefficient parametrization matches",
            variants.null_space_step(variants.build_null_space(blocks), blocks,
                                     cfg, u_ini, y_ini, r, constraints=cons))
    against("full-rank reduced blocks match",
            variants.reduced_order_step(svd_reduce(blocks), cfg, u_ini, y_ini,
                                        r, constraints=cons))
    rep = variants.build_kernel_rep([tr.w for tr in data], model.m,
                                    lag(model) + 1, T_ini + N, n=model.n)
    against("annihilator-built blocks match",
            deepc_step(rep.as_blocks(T_ini, N), cfg, u_ini, y_ini, r,
                       constraints=cons))
    against("Gram-matrix form matches",
            variants.range_space_step(variants.build_range_space(blocks), cfg,
                                      u_ini, y_ini, r, constraints=cons))
    against("two-stage decomposition matches",
            decomposed_step(blocks, cfg, u_ini, y_ini, r, constraints=cons),
            tol=1e-7)

    H = build_hankel(data[0].w, T_ini + N)
    op = FftHankelOperator(data[0], T_ini + N)
    g = rng.standard_normal(op.L)
    v = rng.standard_normal(op.shape[0])
    fft_err = max(np.max(np.abs(op.matvec(g) - H @ g)),
                  np.max(np.abs(op.rmatvec(v) - H.T @ v)))
    checks.append(("fft operator matches dense products", fft_err < 1e-10,
                   f"max dev {fft_err:.2e}"))

    gains = unconstrained_deepc_gains(blocks, cfg)
    u_lin = gains.predict(u_ini, y_ini, r)
    free = deepc_step(blocks, cfg, u_ini, y_ini, r)
    gain_err = float(np.max(np.abs(u_lin - free.u)))
    checks.append(("closed-form gains match unconstrained solve",
                   gain_err < 1e-8, f"max dev {gain_err:.2e}"))

    ok = True
    for name, passed, detail in checks:
        print(f"[{'PASS' if passed else 'FAIL'}] {name} ({detail})")
        ok &= passed
    return 0 if ok else 1


def cmd_list_plants(_args) -> int:
    for name in sorted(plant_registry()):
        print(name)
    return 0


def cmd_list_controllers(_args) -> int:
    for name in CONTROLLERS:
        print(name)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="deepcbench",
        description="Data-driven predictive control benchmark runner")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a suite config")
    p_run.add_argument("--config", required=True, help="TOML suite file")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument("--seed", type=int, default=None,
                       help="override every scenario seed")
    p_run.add_argument("--jobs", type=int, default=os.cpu_count(),
                       help="parallel rows (timing is trustworthy at 1)")
    p_run.add_argument("--timing-reps", type=int, default=1,
                       help="timing repetitions; medians reported")
    p_run.set_defaults(func=cmd_run)

    p_verify = sub.add_parser("verify",
                              help="run the cross-method equivalence battery")
    p_verify.add_argument("--seed", type=int, default=None)
    p_verify.set_defaults(func=cmd_verify)

    sub.add_parser("list-plants", help="print plant registry names") \
       .set_defaults(func=cmd_list_plants)
    sub.add_parser("list-controllers", help="print controller names") \
       .set_defaults(func=cmd_list_controllers)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
