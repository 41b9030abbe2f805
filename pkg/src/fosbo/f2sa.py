"""Double-loop fully first-order solver.

Each outer iteration runs T inner gradient steps tracking the lower-level
minimizer (z) and the penalized minimizer (y), then takes one x step along
the penalty-proxy direction

    grad_x f(x, y) + lambda * (grad_x g(x, y) - grad_x g(x, z))

and grows the multiplier by the scheduled increment.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, NumericFailure
from .oracles import BilevelProblem, SampleToken, Vector, draw_token
from .reference import Diagnostics
from .runs import RunResult, TraceBuilder, checkpoint_cadence, guard_state
from .schedule import (Algorithm, ScheduleParams, ScheduleState, advance,
                       check_theorem_conditions, make_schedule)


@dataclass
class SolverState:
    """Mutable per-run state owned by a single run."""

    x: Vector
    y: Vector
    z: Vector
    schedule: ScheduleState
    k: int
    rng: np.random.Generator
    R: int | None = None
    last_direction: Vector | None = field(default=None, repr=False)


def init_state(problem: BilevelProblem, params: ScheduleParams, seed: int,
               x0: Vector | None = None, y0: Vector | None = None,
               z0: Vector | None = None, K: int | None = None,
               check_constants: bool = True) -> SolverState:
    """Fresh state at k=0.

    When ``K`` is given, the uniform evaluation index R is drawn immediately
    as the stream's first value, so token sequences line up with a full run.
    ``check_constants=False`` skips the multiplier-floor precondition, for
    problems whose attached constants are too coarse to tune against.
    """
    schedule = make_schedule(params,
                             problem.constants if check_constants else None)
    rng = np.random.default_rng(seed)
    R = None
    if K is not None:
        R = int(rng.integers(0, K)) if K > 0 else 0
    x = np.zeros(problem.dim_x) if x0 is None else np.array(x0, dtype=float).reshape(problem.dim_x)
    y = np.zeros(problem.dim_y) if y0 is None else np.array(y0, dtype=float).reshape(problem.dim_y)
    z = np.zeros(problem.dim_y) if z0 is None else np.array(z0, dtype=float).reshape(problem.dim_y)
    return SolverState(x=x, y=y, z=z, schedule=schedule, k=0, rng=rng, R=R)


def _maybe_token(state: SolverState, noisy: bool, batch_size: int) -> SampleToken | None:
    return draw_token(state.rng, batch_size) if noisy else None


def inner_z_step(state: SolverState, problem: BilevelProblem,
                 params: ScheduleParams, t: int = 0,
                 batch_size: int = 1) -> Vector:
    """One tracking step for the lower-level minimizer: z -= gamma_k * grad_g_y."""
    tok = _maybe_token(state, problem.noise_regime.g_noisy, batch_size)
    z = state.z - state.schedule.gamma_k * problem.grad_g_y(state.x, state.z, tok)
    if not np.all(np.isfinite(z)):
        raise NumericFailure("z update produced non-finite values",
                             k=state.k, t=t)
    state.z = z
    return z


def inner_y_step(state: SolverState, problem: BilevelProblem,
                 params: ScheduleParams, t: int = 0,
                 batch_size: int = 1) -> Vector:
    """One penalized step: y -= alpha_k * (grad_f_y + lambda_k * grad_g_y).

    The two channels draw independent samples.
    """
    s = state.schedule
    nr = problem.noise_regime
    tf = _maybe_token(state, nr.f_noisy, batch_size)
    tg = _maybe_token(state, nr.g_noisy, batch_size)
    y = state.y - s.alpha_k * (problem.grad_f_y(state.x, state.y, tf)
                               + s.lambda_k * problem.grad_g_y(state.x, state.y, tg))
    if not np.all(np.isfinite(y)):
        raise NumericFailure("y update produced non-finite values",
                             k=state.k, t=t)
    state.y = y
    return y


def outer_x_step(state: SolverState, problem: BilevelProblem,
                 params: ScheduleParams, batch_size: int = 1,
                 share_x_token: bool = False) -> Vector:
    """The x update along the penalty-proxy direction.

    By default the two grad_g_x evaluations draw independent samples;
    ``share_x_token`` reuses one sample for both, which makes the noise
    cancel in their difference.
    """
    s = state.schedule
    nr = problem.noise_regime
    tfx = _maybe_token(state, nr.f_noisy, batch_size)
    tg1 = _maybe_token(state, nr.g_noisy, batch_size)
    tg2 = tg1 if share_x_token else _maybe_token(state, nr.g_noisy, batch_size)
    direction = (problem.grad_f_x(state.x, state.y, tfx)
                 + s.lambda_k * (problem.grad_g_x(state.x, state.y, tg1)
                                 - problem.grad_g_x(state.x, state.z, tg2)))
    x = state.x - params.xi * s.alpha_k * direction
    if not np.all(np.isfinite(x)):
        raise NumericFailure("x update produced non-finite values", k=state.k)
    state.x = x
    state.last_direction = direction
    return x


def f2sa_step(state: SolverState, problem: BilevelProblem,
              params: ScheduleParams, batch_size: int = 1,
              share_x_token: bool = False) -> SolverState:
    """One full outer iteration: T inner (z, y) steps, x step, multiplier
    increment."""
    for t in range(params.T):
        inner_z_step(state, problem, params, t, batch_size)
        inner_y_step(state, problem, params, t, batch_size)
    outer_x_step(state, problem, params, batch_size, share_x_token)
    state.schedule = advance(state.schedule, params)
    state.k += 1
    return state


def warn_condition_violations(params: ScheduleParams, problem: BilevelProblem,
                              state: ScheduleState) -> list[str]:
    """Emit a warning naming each violated step-size condition (non-fatal so
    ablation runs stay possible)."""
    violations = check_theorem_conditions(state, params, problem.constants)
    if violations:
        warnings.warn(
            "schedule violates step-size conditions at k=0: "
            + ", ".join(violations), RuntimeWarning, stacklevel=3)
    return violations


def f2sa_run(problem: BilevelProblem, params: ScheduleParams, K: int,
             seed: int, x0: Vector | None = None, y0: Vector | None = None,
             z0: Vector | None = None, *, batch_size: int = 1,
             checkpoint_every: int | None = None, callbacks=(),
             share_x_token: bool = False, grad_mode: str = "auto",
             check_constants: bool = True) -> RunResult:
    """Run K outer iterations from a seeded stream and collect a trace.

    Checkpoint rows record the state entering that iteration; the row's
    ``proxy_sq`` is the squared norm of the x direction computed during it.
    A final row at index K (present when the cadence divides K) records the
    post-run state.  Callbacks receive (k, row) after the row is complete and
    must not mutate solver state.
    """
    if params.algorithm is not Algorithm.F2SA:
        raise InvalidArgumentError("params are not for the double-loop solver")
    if K < 0:
        raise InvalidArgumentError("iteration budget must be nonnegative")
    t_start = time.perf_counter()
    state = init_state(problem, params, seed, x0, y0, z0, K=K,
                       check_constants=check_constants)
    warn_condition_violations(params, problem, state.schedule)
    cadence = checkpoint_cadence(K, checkpoint_every)
    diag = Diagnostics(problem, grad_mode)
    builder = TraceBuilder()
    x_R: Vector | None = None

    def record(k: int) -> dict:
        guard_state(k, builder, x=state.x, y=state.y, z=state.z)
        s = state.schedule
        row = builder.add(k, alpha=s.alpha_k, gamma=s.gamma_k, beta=s.beta_k,
                          **{"lambda": s.lambda_k},
                          **diag.state_row(state.x, state.y, state.z, s.lambda_k))
        return row

    for k in range(K):
        row = record(k) if k % cadence == 0 else None
        if k == state.R:
            x_R = state.x.copy()
        f2sa_step(state, problem, params, batch_size, share_x_token)
        if row is not None:
            d = state.last_direction
            row["proxy_sq"] = float(d @ d)
            for cb in callbacks:
                cb(k, row)
    if K > 0 and K % cadence == 0:
        row = record(K)
        for cb in callbacks:
            cb(K, row)
    checkpoints, series = builder.finalize()
    return RunResult(
        algorithm="F2SA", problem_name=problem.name, seed=seed, K=K,
        R=state.R if state.R is not None else 0, x_R=x_R,
        x_final=state.x, y_final=state.y, z_final=state.z,
        lambda_final=state.schedule.lambda_k,
        checkpoints=checkpoints, series=series, grad_estimator=diag.kind,
        wall_time_s=time.perf_counter() - t_start)
