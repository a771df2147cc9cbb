"""Closed-loop simulation, metrics and result aggregation."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .baselines import GuidanceTracker, TrackingMPC
from .config import ExperimentConfig, SweepItem
from .gp import GPModel
from .lbfblc import control_step
from .mpfc import MPFCSolver, OcpSolution, path_state_at, reference_for_period
from .paths import PathDomainError, min_distance
from .qp import QPInfeasible
from .quadrotor import E3, DegenerateThrust, FirstOrderLag, IntegrationFault, PlantState, acceleration, attitude_commands, step

log = logging.getLogger(__name__)

# name -> width; a width of 0 marks a scalar column
FIELDS: dict[str, int] = {
    "t": 0, "p": 3, "v": 3, "x_d": 6, "a_d": 3, "u": 3, "u_raw": 3, "a": 3, "r": 3,
    "k_c": 0, "slack": 0, "mu": 3, "sigma": 3, "d_min": 0, "theta": 0, "theta_vel": 0,
    "V": 0, "margin": 0, "saturated": 0, "thrust": 0, "roll": 0, "pitch": 0,
    "plan_iterations": 0, "plan_min_theta_vel": 0, "plan_bound_violation": 0,
}
_SUFFIX = {3: ("x", "y", "z"), 6: ("px", "py", "pz", "vx", "vy", "vz")}


def csv_columns() -> list[str]:
    """Column order of the per-run CSV."""
    cols = ["step"]
    for name, width in FIELDS.items():
        cols += [name] if width == 0 else [f"{name}_{s}" for s in _SUFFIX[width]]
    return cols


@dataclass
class RunLog:
    """Per-step records plus scenario metadata.

    ``records[name]`` has shape ``(M,)`` or ``(M, width)``. A run aborted by
    a fault keeps the rows completed before the fault and sets ``error``.
    """

    records: dict[str, np.ndarray]
    meta: dict[str, Any] = field(default_factory=dict)
    error: str | None = None

    def __len__(self) -> int:
        return len(self.records["t"])

    def __getitem__(self, name: str) -> np.ndarray:
        return self.records[name]

    @property
    def complete(self) -> bool:
        return self.error is None and len(self) == self.meta.get("steps", len(self))

    def digest(self) -> str:
        h = hashlib.sha256()
        for name in FIELDS:
            h.update(name.encode())
            h.update(np.ascontiguousarray(self.records[name]).tobytes())
        h.update(str(self.error).encode())
        return h.hexdigest()

    def identical(self, other: "RunLog") -> bool:
        """Bitwise equality of every record (NaNs compare equal)."""
        if len(self) != len(other) or self.error != other.error:
            return False
        return all(
            self.records[n].tobytes() == other.records[n].tobytes() for n in FIELDS
        )

    def write_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(csv_columns())
            for k in range(len(self)):
                row: list[Any] = [k]
                for name, width in FIELDS.items():
                    val = self.records[name][k]
                    row += [repr(float(val))] if width == 0 else [repr(float(x)) for x in val]
                w.writerow(row)
        return path


def _empty(steps: int) -> dict[str, np.ndarray]:
    out = {}
    for name, width in FIELDS.items():
        shape = (steps,) if width == 0 else (steps, width)
        out[name] = np.full(shape, np.nan)
    return out


class _HighLevel:
    """Uniform wrapper: returns ``(x_d, a_d, theta, theta_vel, plan)`` where
    ``plan`` is the freshly solved OCP or ``None``."""

    def __init__(self, config: ExperimentConfig) -> None:
        self.config = config
        self.kind = config.high_level
        path = config.path
        self.theta, self.theta_vel = path.theta0, 1.0
        self.plan: OcpSolution | None = None
        self.k0 = 0
        if self.kind == "mpfc":
            self.solver = MPFCSolver(path, config.ocp)
        elif self.kind == "mpc":
            self.solver = TrackingMPC(path, config.ocp, config.guidance.theta_vel)
        else:
            self.tracker = GuidanceTracker(path, config.guidance, self.kind)

    def __call__(self, k: int, state: PlantState):
        cfg = self.config
        if self.kind in ("carrot", "nlgl"):
            x_d, a_d, theta = self.tracker(state.p)
            return x_d, a_d, theta, cfg.guidance.theta_vel, None
        fresh = None
        if self.plan is None or k - self.k0 >= cfg.plan_every:
            if self.plan is not None:
                # advance the virtual path state by one OCP step
                self.theta, self.theta_vel = float(self.plan.theta[1]), float(self.plan.theta_vel[1])
            if self.kind == "mpfc":
                fresh = self.solver.solve(state.x, self.theta, self.theta_vel, warm=self.plan)
            else:
                fresh = self.solver.solve(state.x, k * cfg.dt)
            self.plan, self.k0 = fresh, k
        tau = (k - self.k0) * cfg.dt
        x_d, a_d = reference_for_period(self.plan, tau)
        theta, theta_vel = path_state_at(self.plan, tau)
        return x_d, a_d, theta, theta_vel, fresh


def _plan_bound_violation(plan: OcpSolution, config: ExperimentConfig) -> float:
    ocp = config.ocp
    a = plan.controls
    worst = max(np.max(np.asarray(ocp.a_min) - a), np.max(a - np.asarray(ocp.a_max)))
    if config.high_level == "mpfc":
        worst = max(worst, np.max(ocp.theta_acc_min - plan.theta_acc), np.max(plan.theta_acc - ocp.theta_acc_max))
    return float(max(worst, 0.0))


_FAULTS = (IntegrationFault, QPInfeasible, np.linalg.LinAlgError, PathDomainError, DegenerateThrust)


def run_scenario(config: ExperimentConfig) -> RunLog:
    """Simulate one closed-loop scenario at the configured control period."""
    path, params = config.path, config.quad
    wind = config.wind.build()
    gains = config.build_gains()
    gp = GPModel(config.gp)
    noise_rng = np.random.default_rng([config.seed, 0x4E4F4953])
    feedback = config.low_level in ("lb-fblc", "fblc")
    learning = config.low_level in ("lb-fblc", "lb-fflc")
    high = _HighLevel(config)
    M, dt = config.steps, config.dt
    dt_sub = dt / config.n_sub

    th0 = path.theta0
    state = PlantState(path.eval(th0), path.eval_derivative(th0) * 1.0)
    lag = FirstOrderLag(config.actuator_lag, params.hover_force) if config.actuator_lag > 0 else None
    rec = _empty(M)
    meta = {
        "name": config.name, "config_hash": config.config_hash(), "seed": config.seed,
        "wind_seed": config.wind.seed, "steps": M, "dt": dt,
        "high_level": config.high_level, "low_level": config.low_level, "path": path.kind,
    }
    error = None
    filled = 0
    try:
        for k in range(M):
            t = k * dt
            x = state.x
            x_d, a_d, theta, theta_vel, fresh = high(k, state)
            out = control_step(x, x_d, a_d, gp, gains, params, config.gp.beta, feedback, learning)
            u = lag(out.u, dt) if lag is not None else out.u
            # pseudo-acceleration the controller believes it commanded; any
            # actuator lag therefore shows up in the learned residual
            a_eff = out.u / params.mass - params.g * E3
            att = attitude_commands(out.u, a_eff, 0.0, params.g)

            rec["t"][k] = t
            rec["p"][k], rec["v"][k] = state.p, state.v
            rec["x_d"][k], rec["a_d"][k] = x_d, a_d
            rec["u"][k], rec["u_raw"][k], rec["a"][k], rec["r"][k] = u, out.u_raw, out.a, out.r
            rec["k_c"][k], rec["slack"][k] = out.k_c, out.slack
            rec["mu"][k], rec["sigma"][k] = out.mu, out.sigma
            rec["d_min"][k] = min_distance(path, state.p)[0]
            rec["theta"][k], rec["theta_vel"][k] = theta, theta_vel
            # the stability margin is only meaningful with a GP in the loop
            rec["V"][k], rec["margin"][k] = out.V, out.margin if learning else np.nan
            rec["saturated"][k] = float(out.saturated)
            rec["thrust"][k], rec["roll"][k], rec["pitch"][k] = att.thrust, att.roll, att.pitch
            if fresh is not None:
                rec["plan_iterations"][k] = fresh.iterations
                rec["plan_min_theta_vel"][k] = float(np.min(fresh.theta_vel))
                rec["plan_bound_violation"][k] = _plan_bound_violation(fresh, config)
            filled = k + 1

            state = step(state, u, wind, t, dt_sub, config.n_sub, params)
            if learning:
                # measure every period, refresh the posterior at the GP update rate
                v_dot = acceleration(state, u, wind.velocity(t + dt), params)
                v_dot = v_dot + config.measurement_noise * noise_rng.standard_normal(3)
                gp.push(state.x, v_dot - a_eff, refit=(k + 1) % config.gp_update_every == 0)
    except _FAULTS as exc:
        error = f"{type(exc).__name__}: {exc}"
        log.warning("scenario %s aborted at step %d: %s", config.name, filled, error)
        rec = {n: v[:filled] for n, v in rec.items()}
    return RunLog(rec, meta, error)


# ---------------------------------------------------------------- metrics


def rmse(log_: RunLog) -> float:
    """Root mean square of the per-step minimum distance to the path."""
    d = np.asarray(log_["d_min"], dtype=float)
    if d.size == 0:
        raise ValueError("empty log")
    return float(np.sqrt(np.mean(d * d)))


def max_error(log_: RunLog) -> float:
    return float(np.max(log_["d_min"]))


def mean_iterations(log_: RunLog) -> float:
    it = log_["plan_iterations"]
    it = it[np.isfinite(it)]
    return float(np.mean(it)) if it.size else float("nan")


def violations(log_: RunLog, config: ExperimentConfig, tol: float = 1e-9) -> dict[str, int]:
    """Count invariant violations in a log."""
    params = config.quad
    u = log_["u"]
    scale = np.maximum(np.abs(params.u_max), 1.0)
    out = {
        "input_bounds": int(np.sum(np.any((u < params.u_min - tol * scale) | (u > params.u_max + tol * scale), axis=1))),
        "plan_theta_vel": 0,
        "plan_bounds": int(np.sum(log_["plan_bound_violation"] > tol)),
        "theta_monotone": 0,
        "aborted": int(log_.error is not None),
    }
    if config.high_level == "mpfc":
        tv = log_["plan_min_theta_vel"]
        out["plan_theta_vel"] = int(np.sum(tv[np.isfinite(tv)] < config.ocp.eps_theta - tol))
    if config.high_level in ("mpfc", "carrot", "nlgl"):
        out["theta_monotone"] = int(np.sum(np.diff(log_["theta"]) < -tol))
    return out


def lyapunov_increases(log_: RunLog, tol: float = 1e-6) -> tuple[int, int]:
    """``(increases, candidates)`` over unsaturated steps with non-negative margin.

    ``V`` at the next step is taken from the same reference flow; steps that
    start a new plan reset the reference and are skipped.
    """
    V, margin, sat = log_["V"], log_["margin"], log_["saturated"]
    fresh = np.isfinite(log_["plan_iterations"])
    cand = (margin[:-1] >= 0) & (sat[:-1] == 0) & ~fresh[1:]
    inc = cand & (V[1:] - V[:-1] > tol)
    return int(np.sum(inc)), int(np.sum(cand))


@dataclass(frozen=True)
class RunSummary:
    id: str
    variant: str
    high_level: str
    low_level: str
    disturbance: str
    path: str
    rmse: float
    max_error: float
    mean_iterations: float
    violations: int
    error: str | None
    digest: str


@dataclass(frozen=True)
class ComparisonRow:
    variant: str
    high_level: str
    low_level: str
    rmse: dict[str, float]
    max_error: dict[str, float]
    mean_iterations: float
    violations: int
    runs: int


@dataclass
class MetricsReport:
    rows: list[ComparisonRow]
    runs: list[RunSummary]

    @property
    def violations(self) -> int:
        return sum(r.violations for r in self.runs)

    def row(self, high: str, low: str, variant: str = "") -> ComparisonRow:
        for r in self.rows:
            if (r.high_level, r.low_level, r.variant) == (high, low, variant):
                return r
        raise KeyError((high, low, variant))

    def to_dict(self) -> dict[str, Any]:
        return {
            "rows": [r.__dict__ for r in self.rows],
            "runs": [r.__dict__ for r in self.runs],
            "violations": self.violations,
        }

    def format_table(self) -> str:
        labels = sorted({d for r in self.rows for d in r.rmse})
        head = f"{'variant':<14}{'high':<8}{'low':<9}" + "".join(f"{'rmse[' + d + ']':>22}{'max[' + d + ']':>22}" for d in labels)
        lines = [head + f"{'iters':>8}{'viol':>6}"]
        for r in self.rows:
            cells = "".join(f"{r.rmse.get(d, float('nan')):>22.4f}{r.max_error.get(d, float('nan')):>22.4f}" for d in labels)
            lines.append(f"{r.variant:<14}{r.high_level:<8}{r.low_level:<9}{cells}{r.mean_iterations:>8.2f}{r.violations:>6d}")
        return "\n".join(lines)


def summarize(item: SweepItem, log_: RunLog) -> RunSummary:
    cfg = item.config
    n_viol = sum(violations(log_, cfg).values()) if len(log_) else 1
    return RunSummary(
        id=item.id, variant=item.variant, high_level=cfg.high_level, low_level=cfg.low_level,
        disturbance=item.disturbance, path=cfg.path.kind,
        rmse=rmse(log_) if len(log_) else float("nan"),
        max_error=max_error(log_) if len(log_) else float("nan"),
        mean_iterations=mean_iterations(log_) if len(log_) else float("nan"),
        violations=n_viol, error=log_.error, digest=log_.digest(),
    )


def aggregate(runs: Sequence[RunSummary]) -> MetricsReport:
    """Average run summaries into one row per (variant, high, low)."""
    runs = sorted(runs, key=lambda r: r.id)
    groups: dict[tuple[str, str, str], list[RunSummary]] = {}
    for r in runs:
        groups.setdefault((r.variant, r.high_level, r.low_level), []).append(r)
    rows = []
    for (variant, high, low), members in sorted(groups.items()):
        by_dist: dict[str, list[RunSummary]] = {}
        for r in members:
            by_dist.setdefault(r.disturbance, []).append(r)
        its = [r.mean_iterations for r in members if np.isfinite(r.mean_iterations)]
        rows.append(ComparisonRow(
            variant=variant, high_level=high, low_level=low,
            rmse={d: float(np.mean([r.rmse for r in rs])) for d, rs in by_dist.items()},
            max_error={d: float(np.mean([r.max_error for r in rs])) for d, rs in by_dist.items()},
            mean_iterations=float(np.mean(its)) if its else float("nan"),
            violations=sum(r.violations for r in members), runs=len(members),
        ))
    return MetricsReport(rows, list(runs))


def _run_item(item: SweepItem) -> tuple[RunSummary, RunLog]:
    log_ = run_scenario(item.config)
    return summarize(item, log_), log_


def run_sweep(items: Sequence[SweepItem], workers: int = 1, keep_logs: bool = False):
    """Run every item; returns ``(report, logs)`` with ``logs`` keyed by id
    (empty unless ``keep_logs``). Results are sorted by id, so the report does
    not depend on ``workers``."""
    items = sorted(items, key=lambda it: it.id)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_item, items))
    else:
        results = []
        for item in items:
            log.info("running %s", item.id)
            results.append(_run_item(item))
    logs = {s.id: lg for s, lg in results} if keep_logs else {}
    return aggregate([s for s, _ in results]), logs


def compare(items: Sequence[SweepItem], workers: int = 1) -> MetricsReport:
    return run_sweep(items, workers)[0]


def write_outputs(log_: RunLog, config: ExperimentConfig, out_dir: str | Path) -> tuple[Path, Path]:
    """Per-run CSV plus a JSON metrics summary."""
    out_dir = Path(out_dir)
    stem = "".join(c if c.isalnum() or c in "-_." else "_" for c in config.name)
    csv_path = log_.write_csv(out_dir / f"{stem}.csv")
    inc, cand = lyapunov_increases(log_) if len(log_) > 1 else (0, 0)
    summary = {
        **log_.meta,
        "error": log_.error,
        "rows": len(log_),
        "rmse": rmse(log_) if len(log_) else None,
        "max_error": max_error(log_) if len(log_) else None,
        "mean_iterations": mean_iterations(log_) if len(log_) else None,
        "violations": violations(log_, config) if len(log_) else None,
        "lyapunov_increases": inc,
        "lyapunov_candidates": cand,
        "digest": log_.digest(),
        "config": config.to_dict(),
    }
    json_path = out_dir / f"{stem}.json"
    json_path.write_text(json.dumps(summary, indent=2, default=_json_default))
    return csv_path, json_path


def _json_default(v: Any) -> Any:
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(type(v))


def tune_guidance(base: ExperimentConfig, law: str, grid: Sequence[float]) -> tuple[float, list[tuple[float, float]]]:
    """Grid-search the lead distance of one guidance law by RMSE.

    ``carrot`` tunes ``d1``, ``nlgl`` tunes ``d2``; ties keep the smaller
    distance.
    """
    key = {"carrot": "d1", "nlgl": "d2"}[law]
    table = []
    for d in grid:
        cfg = base.with_overrides(high_level=law, guidance={key: float(d)})
        lg = run_scenario(cfg)
        table.append((float(d), rmse(lg) if lg.error is None else float("inf")))
    best = min(table, key=lambda r: (r[1], r[0]))[0]
    return best, table
