"""Command implementations shared by the command line and the test-suite.

Each command returns a :class:`CommandResult` holding the exit code and the
text of every output file; nothing touches the disk until
:func:`write_outputs`. Outputs carry no timestamps, so identical
configurations give identical files.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, build_state, flow_params
from .engine import run, trajectory_csv, trajectory_json
from .expr import evaluate
from .grid import GridState
from .grid import identities as ident
from .grid.spectral import random_band_limited
from .types import NumericalAbort, cluster_ranges
from .verifier import (
    NotApplicable,
    check_max_principle,
    check_monn,
    check_step_inequalities,
    check_T2,
    evolution_report,
    fvl_on_path,
    lambda_via_a9,
    minimal_A,
)

EXIT_OK, EXIT_CONFIG, EXIT_HYPOTHESIS, EXIT_RESIDUAL, EXIT_ABORT = 0, 1, 2, 3, 4


@dataclass
class CommandResult:
    command: str
    exit_code: int
    files: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(x) for x in row])
    return buf.getvalue()


def _cell(x):
    if isinstance(x, (bool, np.bool_)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return x


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialize {type(x).__name__}")


def resolved_config(cfg: RunConfig, command: str) -> str:
    return _json({"command": command, "config": cfg.to_dict(), "version": __version__})


def write_outputs(result: CommandResult, out_dir, cfg: RunConfig | None = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if cfg is not None:
        (out / "resolved_config.json").write_text(resolved_config(cfg, result.command))
    for name, text in result.files.items():
        (out / name).write_text(text)
    return out


# --- spectrum ------------------------------------------------------------
def cmd_spectrum(cfg: RunConfig) -> CommandResult:
    """Eigenvalues of ``-(L + cR)`` for the initial state."""
    state = build_state(cfg)
    c = float(cfg["flow"]["c"])
    m = cfg["run"]["m"]
    if m < 1:
        raise ConfigError("spectrum needs run.m >= 1")
    pairs = state.eigensolve(c, m)
    values = np.array([p.value for p in pairs])
    rows = []
    if isinstance(state, GridState) or hasattr(state, "topology"):
        for cid, r in enumerate(cluster_ranges(values)):
            for k in r:
                rows.append((k, values[k], len(r), cid))
    else:
        # analytic backends return one pair per distinct eigenvalue
        for k, p in enumerate(pairs):
            rows.append((k, p.value, p.multiplicity, k))
    files = {"spectrum.csv": _csv(["k", "lambda", "multiplicity", "cluster_id"], rows)}
    return CommandResult("spectrum", EXIT_OK, files, {"eigenvalues": values.tolist()})


# --- evolve --------------------------------------------------------------
def _trajectory(cfg: RunConfig, state=None):
    params = flow_params(cfg)
    params.warn_if_unmonotone()
    state = build_state(cfg) if state is None else state
    r = cfg["run"]
    dt = None if r["dt"] == "auto" else float(r["dt"])
    return run(state, params, float(r["t_end"]), dt, r["m"], params.c, r["overlap_threshold"], r["safety"])


def cmd_evolve(cfg: RunConfig) -> CommandResult:
    """Run the flow and compare eigenvalue velocities with every formula."""
    traj = _trajectory(cfg)
    files = {"trajectory.csv": trajectory_csv(traj), "trajectory.json": trajectory_json(traj)}
    tol = cfg["tolerance"]
    summary = {"aborted": traj.aborted, "slices": len(traj.slices)}
    if len(traj.slices) < 3:
        code = EXIT_ABORT if traj.aborted else EXIT_RESIDUAL
        return CommandResult("evolve", code, files, summary)
    report = evolution_report(traj, tol["tier"], stride=cfg["run"]["stride"], tolerance=tol["formula"], checks=tol["slice_checks"])
    files["evolution_report.csv"] = report.to_csv()
    files["slice_checks.csv"] = _csv(
        ["t", "aaw_relative", "measure_relative", "gauss_bonnet", "passed"],
        [(s.t, s.aaw_relative, s.measure_relative, s.gauss_bonnet, s.passed) for s in report.slices],
    )
    files["evolution_report.json"] = report.to_json() + "\n"
    summary["passed"] = report.passed
    if traj.aborted:
        code = EXIT_ABORT
    else:
        code = report.exit_code()
    return CommandResult("evolve", code, files, summary)


# --- verify --------------------------------------------------------------
RANDOM_FIELD_CHECKS = ("product-rule", "ibp", "cvx", "aav", "bochner", "reilly")


def _grid_only(state, check):
    if not isinstance(state, GridState):
        raise ConfigError(f"check {check!r} runs on the grid backend")


def _draw_state(base: GridState, v: dict, rng) -> GridState:
    w = random_band_limited(base.grid, rng, v["kmax"], v["w_amplitude"]) if "w" in v["randomize"] else None
    eta = random_band_limited(base.grid, rng, v["kmax"], v["eta_amplitude"]) if "eta" in v["randomize"] else None
    if w is None and eta is None:
        return base
    return base.with_fields(w=w, eta=eta)


def cmd_verify(cfg: RunConfig, checks=None) -> CommandResult:
    """Run the selected identity and inequality checkers.

    A broken-sign fixture (``verify.break_c_sign``) solves the eigenproblem
    for ``c`` but evaluates the identities with ``-c``, which must fail.
    """
    v, tol = cfg["verify"], cfg["tolerance"]
    checks = list(v["checks"] if checks is None else checks)
    if not checks:
        raise ConfigError("no checks selected; set verify.checks")
    base = build_state(cfg)
    params = flow_params(cfg)
    c = params.c
    c_check = -c if v["break_c_sign"] else c
    rows = []

    def record(check, draw, item, res_abs, scale, rel, limit, ok=None):
        passed = bool(rel <= limit) if ok is None else bool(ok)
        rows.append((check, draw, item, float(res_abs), float(scale), float(rel), float(limit), passed))

    random_checks = [ch for ch in checks if ch in RANDOM_FIELD_CHECKS]
    if random_checks:
        _grid_only(base, random_checks[0])
        for d in range(v["draws"]):
            rng = np.random.default_rng([int(v["seed"]), d])
            state = _draw_state(base, v, rng)
            f1 = random_band_limited(state.grid, rng, v["kmax"], v["amplitude"])
            f2 = random_band_limited(state.grid, rng, v["kmax"], v["amplitude"])
            limit = tol["identity"]
            for ch in random_checks:
                if ch == "product-rule":
                    res = [("f1*f2", ident.check_product_rule(state, f1, f2))]
                elif ch == "ibp":
                    res = [("f1,f2", ident.check_ibp(state, f1, f2))]
                elif ch == "cvx":
                    res = [("f1^2", ident.check_L_square_integral(state, f1))]
                elif ch == "bochner":
                    res = [("f1", ident.check_bochner(state, f1, c_check))]
                elif ch == "reilly":
                    res = [("f1", ident.check_reilly(state, f1, c_check))]
                else:  # aav
                    pairs = state.eigensolve(c, v["pairs"])
                    res = [(f"pair {k}", ident.check_aav(state, p, c_check)) for k, p in enumerate(pairs)]
                for item, r in res:
                    record(ch, d, item, r.absolute, r.scale, r.relative, limit)

    if "lprime" in checks or "bbf" in checks:
        _grid_only(base, "lprime")
        X, Y = base.grid.coords()
        vfield = evaluate(v["v"], {"x": X, "y": Y}, cfg["constants"])
        rng = np.random.default_rng([int(v["seed"]), 0])
        f = random_band_limited(base.grid, rng, v["kmax"], v["amplitude"])
        for ch in ("lprime", "bbf"):
            if ch not in checks:
                continue
            deltas = sorted(float(x) for x in v["deltas"])[::-1]
            if len(deltas) < 2:
                raise ConfigError("verify.deltas needs at least two steps")
            residuals = []
            for delta in deltas:
                if ch == "lprime":
                    # absolute sup residual
                    r = ident.check_Lprime(base, f, vfield, c_check, delta)
                    err = r.absolute
                else:
                    # relative to the largest term, like the curvature-evolution check
                    r = ident.check_bbf(base, vfield, delta)
                    err = r.relative
                residuals.append(r.absolute)
                # the tolerance applies at the finest step; coarser steps feed the order estimate
                ok = delta != deltas[-1] or err <= tol[ch]
                record(ch, 0, f"delta={delta!r}", r.absolute, r.scale, err, tol[ch], ok)
            orders = [
                math.log(residuals[i] / residuals[i + 1]) / math.log(deltas[i] / deltas[i + 1])
                for i in range(len(deltas) - 1)
                if residuals[i + 1] > 0
            ]
            order = min(orders) if orders else math.inf
            record(ch, 0, "observed order", 0.0, 0.0, order, tol["min_order"], order >= tol["min_order"])

    if "a9" in checks:
        _grid_only(base, "a9")
        X, Y = base.grid.coords()
        vfield = evaluate(v["v"], {"x": X, "y": Y}, cfg["constants"])
        k = int(v["pair_index"])
        pairs = base.eigensolve(c, k + 2)
        ranges = cluster_ranges(np.array([p.value for p in pairs]))
        if not any(len(r) == 1 and r.start == k for r in ranges):
            raise ConfigError(f"eigenvalue {k} is not simple; pick another verify.pair_index")
        delta = float(v["delta"])
        lhs = lambda_via_a9(base, pairs[k], vfield, c_check, delta)
        rhs = fvl_on_path(base, pairs[k], vfield, c, delta)
        diff = abs(lhs - rhs)
        rel = diff / max(1.0, abs(rhs))
        record("a9", 0, f"pair {k}", diff, abs(rhs), rel, tol["a9"])

    if "step-inequalities" in checks:
        m = max(1, cfg["run"]["m"])
        for k, pair in enumerate(base.eigensolve(c, m)):
            margins = check_step_inequalities(base, pair, params, float(v["A"]))
            for name, margin in margins.items():
                ok = margin > 0 if name == "STEP1" else margin >= -1e-10
                record("step-inequalities", 0, f"pair {k} {name}", margin, 0.0, margin, 0.0, ok)

    header = ["check", "draw", "item", "absolute", "scale", "relative", "tolerance", "passed"]
    passed = all(r[-1] for r in rows)
    failed = sorted({r[0] for r in rows if not r[-1]})
    summary = {"passed": passed, "checks": checks, "rows": len(rows), "failed": failed}
    files = {"verify_report.csv": _csv(header, rows), "verify_report.json": _json(summary)}
    return CommandResult("verify", EXIT_OK if passed else EXIT_RESIDUAL, files, summary)


# --- check-hypotheses ------------------------------------------------------
def cmd_check_hypotheses(cfg: RunConfig) -> CommandResult:
    """Evaluate a theorem's hypotheses along a run and compare with the observed behaviour."""
    h = cfg["hypotheses"]
    theorem = h["theorem"]
    if theorem is None:
        raise ConfigError("hypotheses.theorem is required")
    params = flow_params(cfg)
    traj = _trajectory(cfg)
    if traj.aborted:
        files = {"trajectory.csv": trajectory_csv(traj)}
        return CommandResult("check-hypotheses", EXIT_ABORT, files, {"aborted": traj.aborted})
    try:
        if theorem == "max_principle":
            K = h["K"]
            if K == "initial_min":
                K = float(np.min(traj.slices[0].curvature.scalar))
            report = check_max_principle(traj, params, float(K))
        else:
            A = h["A"]
            if A == "minimal":
                A = minimal_A(traj, params, theorem)
            report = (check_T2 if theorem == "T2" else check_monn)(traj, params, float(A))
    except NotApplicable as exc:
        raise ConfigError(str(exc)) from None
    rows = [(name, p.margin, p.passed, p.note) for name, p in report.predicates.items()]
    files = {
        "hypothesis_report.csv": _csv(["predicate", "margin", "passed", "note"], rows),
        "hypothesis_report.json": _json(report.to_dict()),
        "trajectory.csv": trajectory_csv(traj),
    }
    return CommandResult("check-hypotheses", report.exit_code(), files, report.to_dict())


COMMAND_FUNCS = {
    "spectrum": cmd_spectrum,
    "evolve": cmd_evolve,
    "verify": cmd_verify,
    "check-hypotheses": cmd_check_hypotheses,
}


def run_command(cfg: RunConfig, command: str | None = None) -> CommandResult:
    """Dispatch a command; configuration problems and aborts become exit codes."""
    command = command or cfg[""]["command"]
    if command not in COMMAND_FUNCS:
        raise ConfigError(f"no command given for {cfg.name!r}")
    try:
        return COMMAND_FUNCS[command](cfg)
    except NumericalAbort as exc:
        return CommandResult(command, EXIT_ABORT, {}, {"aborted": str(exc)})
