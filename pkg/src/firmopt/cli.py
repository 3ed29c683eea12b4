"""Batch command-line front end.

One JSON config file per run (keeps runs reproducible and diffable);
commands: solve, verify, simulate, chain, brute-force.  Reports are
plain text with machine-parsable ``key = value`` lines; trajectories go
to CSV.  Output is byte-identical across repeated runs with the same
config.

Exit codes: 0 success, 1 infeasibility or failed certification,
2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import chain as chain_mod
from . import solver, verify
from .dynamics import Trajectory, integrate_exact
from .model import (
    ModelParams,
    PolicyInfeasibleError,
    State,
    UncoveredInitialConditionError,
    classify_scenario,
    validate_params,
)

EXIT_OK = 0
EXIT_INFEASIBLE = 1
EXIT_CONFIG = 2

CSV_GRID_POINTS = 1000
REPORT_FMT = "%.6g"
CSV_FMT = "%.9g"

COMMANDS = ("solve", "verify", "simulate", "chain", "brute-force")

_PARAM_KEYS = (
    "p", "r", "A", "alpha", "K", "B",
    "u_max", "v_max", "w_max", "S_max", "T",
)
_INIT_KEYS = ("N0", "D0", "S0")
_OPTION_KEYS = ("rk4_step", "brute_nt", "brute_levels", "chain_breakpoints", "out_dir")


class ConfigError(ValueError):
    """Schema violation; the message carries the offending key path."""


@dataclass(frozen=True)
class RunOptions:
    rk4_step: float = 1e-3
    brute_nt: int = 200
    brute_levels: dict | None = None
    chain_breakpoints: tuple[float, ...] | None = None
    out_dir: str = "."


@dataclass(frozen=True)
class RunConfig:
    params: ModelParams
    init: State
    jump_mode: bool = False
    options: RunOptions = field(default_factory=RunOptions)


def _expect_number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number")
    out = float(value)
    if not math.isfinite(out):
        raise ConfigError(f"{path}: must be finite")
    return out


def _reject_unknown(doc: dict, allowed: tuple[str, ...], path: str) -> None:
    for key in doc:
        if key not in allowed:
            where = f"{path}.{key}" if path else key
            raise ConfigError(f"unknown key {where}")


def parse_config(text: str) -> RunConfig:
    """Parse and validate a JSON run configuration.

    Unknown keys are rejected with their full path; parameter-invariant
    violations are reported against params.<field>.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("top level must be an object")
    _reject_unknown(doc, ("params", "init", "jump_mode", "options"), "")
    for required in ("params", "init"):
        if required not in doc:
            raise ConfigError(f"missing required key {required}")
        if not isinstance(doc[required], dict):
            raise ConfigError(f"{required}: expected an object")

    _reject_unknown(doc["params"], _PARAM_KEYS, "params")
    values = {}
    for key in _PARAM_KEYS:
        if key not in doc["params"]:
            raise ConfigError(f"missing required key params.{key}")
        values[key] = _expect_number(doc["params"][key], f"params.{key}")
    params = ModelParams(**values)

    _reject_unknown(doc["init"], _INIT_KEYS, "init")
    ivals = {}
    for key in _INIT_KEYS:
        if key not in doc["init"]:
            raise ConfigError(f"missing required key init.{key}")
        ivals[key] = _expect_number(doc["init"][key], f"init.{key}")
    init = State(N=ivals["N0"], D=ivals["D0"], S=ivals["S0"])

    jump_mode = doc.get("jump_mode", False)
    if not isinstance(jump_mode, bool):
        raise ConfigError("jump_mode: expected a boolean")

    opt = doc.get("options", {})
    if not isinstance(opt, dict):
        raise ConfigError("options: expected an object")
    _reject_unknown(opt, _OPTION_KEYS, "options")
    kwargs = {}
    if "rk4_step" in opt:
        step = _expect_number(opt["rk4_step"], "options.rk4_step")
        if step <= 0.0:
            raise ConfigError("options.rk4_step: must be positive")
        kwargs["rk4_step"] = step
    if "brute_nt" in opt:
        nt = opt["brute_nt"]
        if isinstance(nt, bool) or not isinstance(nt, int) or nt < 1:
            raise ConfigError("options.brute_nt: expected a positive integer")
        kwargs["brute_nt"] = nt
    if "brute_levels" in opt:
        levels = opt["brute_levels"]
        if not isinstance(levels, dict):
            raise ConfigError("options.brute_levels: expected an object")
        _reject_unknown(levels, ("u", "v", "w"), "options.brute_levels")
        parsed: dict = {}
        for comp, arr in levels.items():
            if not isinstance(arr, list) or not arr:
                raise ConfigError(
                    f"options.brute_levels.{comp}: expected a nonempty array"
                )
            parsed[comp] = tuple(
                _expect_number(x, f"options.brute_levels.{comp}") for x in arr
            )
        kwargs["brute_levels"] = parsed
    if "chain_breakpoints" in opt:
        arr = opt["chain_breakpoints"]
        if not isinstance(arr, list) or len(arr) < 2:
            raise ConfigError(
                "options.chain_breakpoints: expected an array of at least two times"
            )
        kwargs["chain_breakpoints"] = tuple(
            _expect_number(x, "options.chain_breakpoints") for x in arr
        )
    if "out_dir" in opt:
        if not isinstance(opt["out_dir"], str):
            raise ConfigError("options.out_dir: expected a string")
        kwargs["out_dir"] = opt["out_dir"]

    report = validate_params(params)
    if not report.ok:
        fld, msg = report.violations[0]
        raise ConfigError(f"params.{fld}: {msg}")
    if init.N < 0.0 or init.D < 0.0:
        raise ConfigError("init: N0 and D0 must be nonnegative")
    if not 0.0 <= init.S <= params.S_max:
        raise ConfigError("init.S0: must lie in [0, S_max]")

    return RunConfig(
        params=params, init=init, jump_mode=jump_mode, options=RunOptions(**kwargs)
    )


def _fmt(value: float) -> str:
    return REPORT_FMT % value


def _policy_lines(policy) -> list[str]:
    lines = ["policy:"]
    for seg in policy.segments:
        lines.append(
            "  [%s, %s]  u = %s  v = %s  w = %s"
            % (
                _fmt(seg.t_start),
                _fmt(seg.t_end),
                _fmt(seg.value.u),
                _fmt(seg.value.v),
                _fmt(seg.value.w),
            )
        )
    return lines


def _times_lines(times: solver.SwitchingTimes) -> list[str]:
    t_s = _fmt(times.t_s) if times.t_s_within_horizon else "never"
    if times.t_d is None:
        t_d = "n/a"
    elif not times.t_d_within_horizon:
        t_d = "never"
    else:
        t_d = _fmt(times.t_d)
    return [f"t_S = {t_s}", f"t_D = {t_d}"]


def _jump_lines(jump) -> list[str]:
    if jump is None:
        return []
    return [
        "jump: delta_N = %s, delta_D = %s (post N = %s, D = %s)"
        % (
            _fmt(jump.delta_N),
            _fmt(jump.delta_D),
            _fmt(jump.post_state.N),
            _fmt(jump.post_state.D),
        )
    ]


def _trajectory_csv(traj: Trajectory) -> str:
    """CSV rows at all breakpoints plus a uniform grid; a jump at time t
    is emitted as two rows sharing t (pre- and post-jump)."""
    T = traj.t_final
    times = set(traj.breakpoints)
    if T > 0.0:
        for k in range(CSV_GRID_POINTS):
            times.add(k * T / (CSV_GRID_POINTS - 1))
    grid = sorted(times)
    jump_at = {j.t: j for j in traj.jumps}
    scale = max(1.0, traj.params.S_max)
    lines = ["t,N,D,S,u,v,w,feasible"]

    def row(t: float, state: State) -> str:
        control = _control_at(traj, t)
        feasible = (
            state.N >= -1e-9 * scale
            and state.D >= -1e-9 * scale
            and -1e-9 * scale <= state.S <= traj.params.S_max + 1e-9 * scale
        )
        cells = [CSV_FMT % x for x in (t, state.N, state.D, state.S, *control)]
        cells.append("true" if feasible else "false")
        return ",".join(cells)

    for t in grid:
        if t in jump_at:
            j = jump_at[t]
            pre = State(
                N=j.post_state.N - j.delta_N,
                D=j.post_state.D - j.delta_D,
                S=j.post_state.S,
            )
            lines.append(row(t, pre))
        lines.append(row(t, traj.sample(t)))
    return "\n".join(lines) + "\n"


def _control_at(traj: Trajectory, t: float) -> tuple[float, float, float]:
    i = 0
    for k, seg in enumerate(traj.segments):
        if t < seg.t_end:
            i = k
            break
    else:
        i = len(traj.segments) - 1
    c = traj.segments[i].control
    return (c.u, c.v, c.w)


def _write(out_dir: str, name: str, text: str) -> Path:
    path = Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    target = path / name
    target.write_text(text, encoding="utf-8")
    return target


def _synthesize(config: RunConfig):
    kind = classify_scenario(config.params, config.init, config.jump_mode)
    synth = solver.synthesize_policy(config.params, config.init, kind)
    return kind, synth


def _solve_trajectory(config: RunConfig, synth) -> Trajectory:
    start = synth.jump.post_state if synth.jump is not None else config.init
    zeros = chain_mod._expected_zeros(synth.times)
    return integrate_exact(
        config.params, start, synth.policy, jump=synth.jump, expected_zeros=zeros
    )


def cmd_solve(config: RunConfig) -> tuple[int, str]:
    kind, synth = _synthesize(config)
    objective = solver.objective_value(config.params, config.init, kind)
    lines = [f"scenario = {kind.value}"]
    lines += _times_lines(synth.times)
    lines.append(f"objective = {_fmt(objective)}")
    lines += _jump_lines(synth.jump)
    lines += _policy_lines(synth.policy)
    text = "\n".join(lines) + "\n"
    _write(config.options.out_dir, "solve_report.txt", text)
    return EXIT_OK, text


def cmd_simulate(config: RunConfig) -> tuple[int, str]:
    if config.params.T == 0.0:
        state = config.init
        lines = ["t,N,D,S,u,v,w,feasible"]
        cells = [CSV_FMT % x for x in (0.0, state.N, state.D, state.S, 0.0, 0.0, 0.0)]
        feasible = state.N >= 0.0 and state.D >= 0.0 and 0.0 <= state.S <= config.params.S_max
        cells.append("true" if feasible else "false")
        lines.append(",".join(cells))
        csv_text = "\n".join(lines) + "\n"
    else:
        _, synth = _synthesize(config)
        traj = _solve_trajectory(config, synth)
        csv_text = _trajectory_csv(traj)
    _write(config.options.out_dir, "trajectory.csv", csv_text)
    return EXIT_OK, csv_text


def cmd_verify(config: RunConfig) -> tuple[int, str]:
    kind, synth = _synthesize(config)
    cert = verify.certify_policy(config.params, config.init, kind)
    closed = solver.objective_value(config.params, config.init, kind)
    start = synth.jump.post_state if synth.jump is not None else config.init
    grid = verify.BruteForceGrid(n_t=config.options.brute_nt)
    if config.options.brute_levels:
        grid = verify.BruteForceGrid(
            n_t=config.options.brute_nt,
            u_levels=config.options.brute_levels.get("u"),
            v_levels=config.options.brute_levels.get("v"),
            w_levels=config.options.brute_levels.get("w"),
        )
    _, best = verify.brute_force_best(config.params, start, grid)
    gap = max(0.0, best - closed)
    brute_ok = gap <= 1e-4

    def verdict(ok: bool) -> str:
        return "PASS" if ok else "FAIL"

    n_sing = len(cert.hamiltonian_argmax.singular_segments)
    lines = [
        f"scenario = {kind.value}",
        f"slackness: {verdict(cert.slackness.passed)}",
        f"transversality: {verdict(cert.transversality.passed)}",
        "hamiltonian-argmax: %s (%d singular segment%s)"
        % (
            verdict(cert.hamiltonian_argmax.passed),
            n_sing,
            "" if n_sing == 1 else "s",
        ),
        f"multipliers-nonnegative: {verdict(cert.multipliers_nonnegative)}",
        f"brute-force gap <= tol: {verdict(brute_ok)}",
        f"closed_form = {_fmt(closed)}",
        f"brute_force_best = {_fmt(best)}",
    ]
    ok = cert.passed and brute_ok
    text = "\n".join(lines) + "\n"
    _write(config.options.out_dir, "verify_report.txt", text)
    return (EXIT_OK if ok else EXIT_INFEASIBLE), text


def cmd_chain(config: RunConfig) -> tuple[int, str]:
    breakpoints = config.options.chain_breakpoints
    if breakpoints is None:
        breakpoints = (0.0, config.params.T)
    plan = chain_mod.chain_plan(
        config.params, config.init, list(breakpoints), config.jump_mode
    )
    traj, objective = chain_mod.evaluate_chain(config.params, plan)
    lines = [f"objective = {_fmt(objective)}"]
    for idx, iv in enumerate(plan.intervals):
        lines.append(
            "interval %d: [%s, %s] scenario = %s exit N = %s D = %s S = %s"
            % (
                idx,
                _fmt(iv.t_start),
                _fmt(iv.t_end),
                iv.kind.value,
                _fmt(iv.exit_state.N),
                _fmt(iv.exit_state.D),
                _fmt(iv.exit_state.S),
            )
        )
        lines += ["  " + ln for ln in _jump_lines(iv.jump)]
    text = "\n".join(lines) + "\n"
    _write(config.options.out_dir, "chain_report.txt", text)
    _write(config.options.out_dir, "chain_trajectory.csv", _trajectory_csv(traj))
    return EXIT_OK, text


def cmd_brute_force(config: RunConfig) -> tuple[int, str]:
    kind, synth = _synthesize(config)
    closed = solver.objective_value(config.params, config.init, kind)
    start = synth.jump.post_state if synth.jump is not None else config.init
    grid = verify.BruteForceGrid(n_t=config.options.brute_nt)
    if config.options.brute_levels:
        grid = verify.BruteForceGrid(
            n_t=config.options.brute_nt,
            u_levels=config.options.brute_levels.get("u"),
            v_levels=config.options.brute_levels.get("v"),
            w_levels=config.options.brute_levels.get("w"),
        )
    policy, best = verify.brute_force_best(config.params, start, grid)
    lines = [
        f"scenario = {kind.value}",
        f"closed_form = {_fmt(closed)}",
        f"brute_force_best = {_fmt(best)}",
        f"gap = {_fmt(best - closed)}",
    ]
    lines += _policy_lines(policy)
    text = "\n".join(lines) + "\n"
    _write(config.options.out_dir, "brute_force_report.txt", text)
    return EXIT_OK, text


def execute_command(config: RunConfig, command: str) -> int:
    """Dispatch one command; prints the report and returns the exit code."""
    handlers = {
        "solve": cmd_solve,
        "verify": cmd_verify,
        "simulate": cmd_simulate,
        "chain": cmd_chain,
        "brute-force": cmd_brute_force,
    }
    if command not in handlers:
        raise ConfigError(f"unknown command {command!r}")
    report = validate_params(config.params)
    needs_policy = not (command == "simulate" and config.params.T == 0.0)
    if not report.profitable and needs_policy:
        print(
            "infeasible: parameters are not profitable "
            "(p*w_max must exceed (A+K)*w_max + B)",
            file=sys.stderr,
        )
        return EXIT_INFEASIBLE
    try:
        code, text = handlers[command](config)
    except (PolicyInfeasibleError, UncoveredInitialConditionError,
            chain_mod.ChainJunctionError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    sys.stdout.write(text)
    return code


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="firmopt",
        description="Optimal production, sales and debt-repayment planning "
        "for a single-product firm with linear dynamics.",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("config", help="path to a JSON run configuration")
    args = parser.parse_args(argv)
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        config = parse_config(text)
        return execute_command(config, args.command)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
