"""Step-size, penalty-multiplier and momentum schedules.

Both solvers run on polynomially decaying step sizes

    alpha_k = c_alpha / (k + k0)^a        (y and x steps)
    gamma_k = c_gamma / (k + k0)^c        (z steps)

with a slowly increasing penalty multiplier lambda_k.  The multiplier is
updated incrementally, lambda_{k+1} = lambda_k + delta_k, where delta_k is
chosen so that with default constants lambda_k equals gamma_k / (2 alpha_k)
for the double-loop solver and gamma_k / alpha_k for the momentum solver,
exactly, for every k.  The momentum solver additionally carries an averaging
weight eta_k = (k+1)^(-2c), forced to 1 on the first two steps.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np

from .errors import InvalidArgumentError, PreconditionViolation
from .oracles import NoiseRegime, RegularityConstants

_REL_TOL = 1e-9  # slack for float-edge comparisons in the condition checker


class Algorithm(enum.Enum):
    F2SA = "F2SA"
    F3SA = "F3SA"


# Default decay exponents (a, c) per algorithm and noise regime.
_DEFAULT_EXPONENTS = {
    Algorithm.F2SA: {
        NoiseRegime.BOTH_NOISY: (5.0 / 7.0, 4.0 / 7.0),
        NoiseRegime.UPPER_ONLY: (3.0 / 5.0, 2.0 / 5.0),
        NoiseRegime.DETERMINISTIC: (1.0 / 3.0, 0.0),
    },
    Algorithm.F3SA: {
        NoiseRegime.BOTH_NOISY: (3.0 / 5.0, 2.0 / 5.0),
        NoiseRegime.UPPER_ONLY: (1.0 / 2.0, 1.0 / 4.0),
        NoiseRegime.DETERMINISTIC: (1.0 / 3.0, 0.0),
    },
}


@dataclass(frozen=True)
class ScheduleParams:
    """Complete schedule configuration for one run.

    All fields are concrete numbers; use :func:`default_params` to fill them
    from problem constants.  ``T`` is the inner-loop length (always 1 for the
    momentum solver).  ``c_xi`` and ``c_eta`` are the absolute constants in
    the step-size conditions; their defaults (1.0) are a design choice and
    may be overridden.  ``eta_override`` forces a constant momentum weight,
    which with 1.0 disables momentum entirely.
    """

    algorithm: Algorithm
    noise_regime: NoiseRegime
    a: float
    c: float
    k0: int
    lambda0: float
    xi: float
    T: int
    c_alpha: float
    c_gamma: float
    mu_g: float
    c_eta: float = 1.0
    c_xi: float = 1.0
    eta_override: float | None = None

    def __post_init__(self):
        if not (0.0 <= self.c <= self.a <= 1.0):
            raise InvalidArgumentError(
                f"exponents must satisfy 0 <= c <= a <= 1, got a={self.a}, c={self.c}")
        if self.k0 < 1 or int(self.k0) != self.k0:
            raise InvalidArgumentError(f"k0 must be a positive integer, got {self.k0}")
        for name in ("lambda0", "xi", "c_alpha", "c_gamma", "mu_g", "c_eta", "c_xi"):
            if getattr(self, name) <= 0:
                raise InvalidArgumentError(f"{name} must be positive")
        if self.T < 1 or int(self.T) != self.T:
            raise InvalidArgumentError(f"T must be a positive integer, got {self.T}")
        if self.eta_override is not None and not (0.0 < self.eta_override <= 1.0):
            raise InvalidArgumentError(
                f"eta_override must lie in (0, 1], got {self.eta_override}")

    # ---- closed-form laws (k may be an integer or an array) ----

    def alpha_at(self, k):
        return self.c_alpha / (np.asarray(k, dtype=float) + self.k0) ** self.a

    def gamma_at(self, k):
        return self.c_gamma / (np.asarray(k, dtype=float) + self.k0) ** self.c

    def lambda_target(self, k):
        """The ratio the multiplier tracks: gamma/(2 alpha) for F2SA,
        gamma/alpha for F3SA."""
        ratio = self.gamma_at(k) / self.alpha_at(k)
        return ratio / 2.0 if self.algorithm is Algorithm.F2SA else ratio

    def eta_at(self, k):
        k = np.asarray(k, dtype=float)
        if self.eta_override is not None:
            return np.full_like(k, self.eta_override) if k.ndim else float(self.eta_override)
        out = np.where(k <= 1.0, 1.0, (k + 1.0) ** (-2.0 * self.c))
        return out if k.ndim else float(out)

    # Incremental iteration (advance, run_schedule) goes through the plain
    # float helpers below.  numpy's vectorized power can differ from the
    # scalar path by one ulp, which would break bitwise agreement between
    # the per-step and whole-run schedules that the solvers rely on.

    def _scalar_step(self, k: int) -> tuple[float, float, float]:
        """(alpha_k, gamma_k, target_k) computed with Python-float pow."""
        base = float(k + self.k0)
        alpha = self.c_alpha / base ** self.a
        gamma = self.c_gamma / base ** self.c
        ratio = gamma / alpha
        if self.algorithm is Algorithm.F2SA:
            ratio /= 2.0
        return alpha, gamma, ratio

    def _scalar_eta(self, k: int) -> float:
        if self.eta_override is not None:
            return float(self.eta_override)
        return 1.0 if k <= 1 else (k + 1.0) ** (-2.0 * self.c)

    def delta_at(self, k: int, lambda_k: float) -> float:
        """Multiplier increment applied when leaving step k.

        The second candidate uses the step-(k+1) ratio so that adding it
        lands the multiplier exactly on the target ratio at k+1.
        """
        alpha_k = self._scalar_step(k)[0]
        catch_up = self._scalar_step(k + 1)[2] - lambda_k
        if self.algorithm is Algorithm.F2SA:
            cap = (self.T * self.mu_g / 16.0) * alpha_k * lambda_k**2
            return max(0.0, min(cap, catch_up))
        return max(0.0, catch_up)

    def to_dict(self) -> dict:
        d = {
            "algorithm": self.algorithm.value,
            "noise_regime": self.noise_regime.value,
            "a": self.a, "c": self.c, "k0": self.k0, "lambda0": self.lambda0,
            "xi": self.xi, "T": self.T, "c_alpha": self.c_alpha,
            "c_gamma": self.c_gamma, "mu_g": self.mu_g,
            "c_eta": self.c_eta, "c_xi": self.c_xi,
        }
        if self.eta_override is not None:
            d["eta_override"] = self.eta_override
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScheduleParams":
        d = dict(d)
        d["algorithm"] = Algorithm(d["algorithm"])
        d["noise_regime"] = NoiseRegime(d["noise_regime"])
        return cls(**d)


@dataclass(frozen=True)
class ScheduleState:
    """Schedule values at one outer step.

    ``delta_k`` is the multiplier increment that will be applied when
    advancing to k+1; ``eta_k`` is None for the double-loop solver.
    """

    k: int
    lambda_k: float
    alpha_k: float
    gamma_k: float
    beta_k: float
    delta_k: float
    eta_k: float | None


def default_params(algorithm: Algorithm, constants: RegularityConstants,
                   noise_regime: NoiseRegime | None = None, **overrides) -> ScheduleParams:
    """Fill a full schedule from problem constants.

    Keyword overrides replace individual fields; derived quantities are
    recomputed around them (for example overriding ``k0`` changes the default
    ``c_alpha`` and ``c_gamma``).
    """
    if noise_regime is None:
        noise_regime = NoiseRegime.DETERMINISTIC
    mu = constants.mu_g
    a, c = overrides.pop("a", None), overrides.pop("c", None)
    a_def, c_def = _DEFAULT_EXPONENTS[algorithm][noise_regime]
    if a is None:
        a = a_def
    if c is None:
        c = c_def
    c_xi = overrides.pop("c_xi", 1.0)
    c_eta = overrides.pop("c_eta", 1.0)

    if algorithm is Algorithm.F2SA:
        xi = overrides.pop("xi", 1.0)
        T_needed = max(constants.l_g1 * constants.l_star0**2,
                       math.sqrt(constants.M) * constants.l_star1) / (c_xi * mu)
        T = overrides.pop("T", max(32, math.ceil(T_needed)))
        k0_needed = (4.0 / mu) * max(xi * constants.l_F1 / 2.0,
                                     T * constants.l_g1, constants.l_f1)
        k0 = overrides.pop("k0", max(1, math.ceil(k0_needed)))
        lambda0 = overrides.pop("lambda0", max(constants.lambda_min, 1.0))
        c_gamma = overrides.pop("c_gamma", 1.0 / (mu * k0 ** (1.0 - c)))
        c_alpha = overrides.pop("c_alpha", 1.0 / (2.0 * lambda0 * mu * k0 ** (1.0 - a)))
    else:
        xi = overrides.pop("xi", min(1.0, c_xi * mu / (constants.l_g1 * constants.l_star0**2)))
        T = overrides.pop("T", 1)
        k0_needed = (128.0 / mu) * max(xi * constants.l_F1,
                                       constants.l_g1 * math.sqrt(c_eta * constants.l_g1 / mu))
        k0 = overrides.pop("k0", max(1, math.ceil(k0_needed)))
        lambda0 = overrides.pop("lambda0", max(constants.lambda_min, 1.0))
        c_gamma = overrides.pop("c_gamma", 8.0 / (mu * k0 ** (1.0 - c)))
        c_alpha = overrides.pop("c_alpha", 8.0 / (mu * lambda0 * k0 ** (1.0 - a)))

    eta_override = overrides.pop("eta_override", None)
    if overrides:
        raise InvalidArgumentError(f"unknown schedule overrides: {sorted(overrides)}")
    return ScheduleParams(
        algorithm=algorithm, noise_regime=noise_regime, a=a, c=c, k0=k0,
        lambda0=lambda0, xi=xi, T=T, c_alpha=c_alpha, c_gamma=c_gamma,
        mu_g=mu, c_eta=c_eta, c_xi=c_xi, eta_override=eta_override)


def make_schedule(params: ScheduleParams,
                  constants: RegularityConstants | None = None) -> ScheduleState:
    """Initial schedule state at k = 0.

    With constants supplied, rejects multipliers below the strong-convexity
    threshold 2 l_f1 / mu_g.  Always rejects beta_0 > gamma_0.
    """
    if constants is not None and params.lambda0 < constants.lambda_min * (1 - 1e-12):
        raise PreconditionViolation(
            f"lambda0 = {params.lambda0} is below 2 l_f1 / mu_g = {constants.lambda_min}")
    alpha0, gamma0, _ = params._scalar_step(0)
    beta0 = alpha0 * params.lambda0
    if beta0 > gamma0 * (1 + 1e-12):
        raise PreconditionViolation(
            f"beta_0 = {beta0} exceeds gamma_0 = {gamma0}; "
            "the effective y step must not outrun the z step")
    return ScheduleState(k=0, lambda_k=params.lambda0, alpha_k=alpha0,
                         gamma_k=gamma0, beta_k=beta0,
                         delta_k=params.delta_at(0, params.lambda0),
                         eta_k=params._scalar_eta(0) if params.algorithm is Algorithm.F3SA else None)


def advance(state: ScheduleState, params: ScheduleParams) -> ScheduleState:
    """Move the schedule from step k to step k+1 (total on valid states)."""
    k1 = state.k + 1
    lam = state.lambda_k + state.delta_k
    alpha, gamma, _ = params._scalar_step(k1)
    return ScheduleState(k=k1, lambda_k=lam, alpha_k=alpha, gamma_k=gamma,
                         beta_k=alpha * lam, delta_k=params.delta_at(k1, lam),
                         eta_k=params._scalar_eta(k1) if params.algorithm is Algorithm.F3SA else None)


def run_schedule(params: ScheduleParams, K: int) -> dict[str, np.ndarray]:
    """Iterate the schedule K steps and return all values as arrays.

    Uses the real incremental multiplier update, and the same float
    arithmetic as :func:`advance`, so the arrays match a step-by-step run
    bitwise.
    """
    ks = np.arange(K)
    alpha = np.empty(K)
    gamma = np.empty(K)
    lam = np.empty(K)
    delta = np.empty(K)
    lam_k = params.lambda0
    f2sa = params.algorithm is Algorithm.F2SA
    cap_coeff = params.T * params.mu_g / 16.0
    step = params._scalar_step
    a_k, g_k, _ = step(0) if K else (0.0, 0.0, 0.0)
    for k in range(K):
        alpha[k] = a_k
        gamma[k] = g_k
        lam[k] = lam_k
        a_next, g_next, target_next = step(k + 1)
        d = target_next - lam_k
        if f2sa:
            cap = cap_coeff * a_k * lam_k**2
            if cap < d:
                d = cap
        if d < 0.0:
            d = 0.0
        delta[k] = d
        lam_k += d
        a_k, g_k = a_next, g_next
    out = {"k": ks, "lambda": lam, "delta": delta, "alpha": alpha,
           "gamma": gamma, "beta": alpha * lam}
    if params.algorithm is Algorithm.F3SA:
        out["eta"] = np.array([params._scalar_eta(k) for k in range(K)])
    return out


def check_theorem_conditions(state: ScheduleState, params: ScheduleParams,
                             constants: RegularityConstants) -> list[str]:
    """Named violations of the step-size conditions at one state.

    Empty list means every inequality required by the convergence analysis
    holds at this step.  Callers treat violations as warnings so ablation
    runs remain possible.
    """
    cons = constants
    tol = 1.0 + _REL_TOL
    out: list[str] = []
    if params.lambda0 < cons.lambda_min * (1 - _REL_TOL):
        out.append("lambda0_below_threshold")
    if state.beta_k > state.gamma_k * tol:
        out.append("beta_exceeds_gamma")

    if params.algorithm is Algorithm.F2SA:
        if state.gamma_k > tol / (4.0 * cons.l_g1):
            out.append("gamma_exceeds_quarter_inv_lg1")
        if state.gamma_k > tol / (4.0 * params.T * params.mu_g):
            out.append("gamma_exceeds_quarter_inv_Tmu")
        if cons.l_f1 > 0 and state.alpha_k > tol / (8.0 * cons.l_f1):
            out.append("alpha_exceeds_eighth_inv_lf1")
        if cons.l_F1 > 0 and state.alpha_k > tol / (2.0 * params.xi * cons.l_F1):
            out.append("alpha_exceeds_half_inv_xi_lF1")
        cap = params.c_xi * params.mu_g / max(cons.l_g1 * cons.l_star0**2,
                                              cons.l_star1 * math.sqrt(cons.M))
        if params.xi / params.T >= cap * tol:
            out.append("xi_over_T_too_large")
        if state.delta_k > (params.T * params.mu_g / 16.0) * state.beta_k * state.lambda_k * tol:
            out.append("delta_exceeds_T_mu_beta_lambda_over_16")
    else:
        if state.gamma_k > tol / (16.0 * cons.l_g1):
            out.append("gamma_exceeds_sixteenth_inv_lg1")
        if cons.l_F1 > 0 and params.xi * state.alpha_k > tol / cons.l_F1:
            out.append("xi_alpha_exceeds_inv_lF1")
        if params.xi > tol * params.c_xi * params.mu_g / (cons.l_g1 * cons.l_star0**2):
            out.append("xi_exceeds_momentum_bound")
        if state.delta_k > (params.mu_g / 8.0) * state.beta_k * state.lambda_k * tol:
            out.append("delta_exceeds_mu_beta_lambda_over_8")
        out.extend(_eta_violations(state.k, params, cons))
    return out


def _eta_violations(k: int, params: ScheduleParams, cons: RegularityConstants) -> list[str]:
    out: list[str] = []
    tol = 1.0 + _REL_TOL
    if k == 0:
        if float(params.eta_at(0)) != 1.0 or float(params.eta_at(1)) != 1.0:
            out.append("eta_first_two_steps_not_one")
        return out
    eta_next = float(params.eta_at(k + 1))
    if eta_next > tol:
        out.append("eta_above_one")
    gamma_prev = float(params.gamma_at(k - 1))
    gamma_k = float(params.gamma_at(k))
    lower = max(2.0 * (gamma_prev - gamma_k) / gamma_prev,
                params.c_eta * cons.l_g1**3 / params.mu_g * gamma_k**2)
    if eta_next * tol < lower:
        out.append("eta_below_window")
    return out


def first_eta_admissible_k(params: ScheduleParams, constants: RegularityConstants,
                           k_max: int = 100_000) -> int | None:
    """Smallest k1 such that the momentum-weight window holds for every
    k in [k1, k_max]; None if it never stabilizes within the horizon."""
    ks = np.arange(1, k_max)
    eta_next = np.atleast_1d(params.eta_at(ks + 1))
    g_prev = params.gamma_at(ks - 1)
    g_k = params.gamma_at(ks)
    lower = np.maximum(2.0 * (g_prev - g_k) / g_prev,
                       params.c_eta * constants.l_g1**3 / params.mu_g * g_k**2)
    ok = (eta_next * (1 + _REL_TOL) >= lower) & (eta_next <= 1 + _REL_TOL)
    if not ok[-1]:
        return None
    # last index where the window fails, +1; admissible from there onward
    bad = np.nonzero(~ok)[0]
    return int(ks[bad[-1]] + 1) if bad.size else 0


def check_sweep(params: ScheduleParams, constants: RegularityConstants,
                K: int) -> dict[str, int]:
    """Run the schedule K steps and report each violation with the first k at
    which it occurs (empty dict: all conditions hold everywhere).

    Vectorized version of :func:`check_theorem_conditions` over a whole run.
    """
    cons = constants
    tol = 1.0 + _REL_TOL
    arrays = run_schedule(params, K)
    alpha, gamma = arrays["alpha"], arrays["gamma"]
    beta, lam, delta = arrays["beta"], arrays["lambda"], arrays["delta"]
    found: dict[str, int] = {}

    def record(name: str, mask) -> None:
        idx = np.nonzero(mask)[0]
        if idx.size:
            found[name] = int(idx[0])

    if params.lambda0 < cons.lambda_min * (1 - _REL_TOL):
        found["lambda0_below_threshold"] = 0
    record("beta_exceeds_gamma", beta > gamma * tol)
    if params.algorithm is Algorithm.F2SA:
        record("gamma_exceeds_quarter_inv_lg1", gamma > tol / (4 * cons.l_g1))
        record("gamma_exceeds_quarter_inv_Tmu", gamma > tol / (4 * params.T * params.mu_g))
        if cons.l_f1 > 0:
            record("alpha_exceeds_eighth_inv_lf1", alpha > tol / (8 * cons.l_f1))
        if cons.l_F1 > 0:
            record("alpha_exceeds_half_inv_xi_lF1", alpha > tol / (2 * params.xi * cons.l_F1))
        cap = params.c_xi * params.mu_g / max(cons.l_g1 * cons.l_star0**2,
                                              cons.l_star1 * math.sqrt(cons.M))
        if params.xi / params.T >= cap * tol:
            found["xi_over_T_too_large"] = 0
        record("delta_exceeds_T_mu_beta_lambda_over_16",
               delta > (params.T * params.mu_g / 16.0) * beta * lam * tol)
    else:
        record("gamma_exceeds_sixteenth_inv_lg1", gamma > tol / (16 * cons.l_g1))
        if cons.l_F1 > 0:
            record("xi_alpha_exceeds_inv_lF1", params.xi * alpha > tol / cons.l_F1)
        if params.xi > tol * params.c_xi * params.mu_g / (cons.l_g1 * cons.l_star0**2):
            found["xi_exceeds_momentum_bound"] = 0
        record("delta_exceeds_mu_beta_lambda_over_8",
               delta > (params.mu_g / 8.0) * beta * lam * tol)
        if float(params.eta_at(0)) != 1.0 or float(params.eta_at(1)) != 1.0:
            found["eta_first_two_steps_not_one"] = 0
        ks = np.arange(1, K)
        eta_next = np.atleast_1d(params.eta_at(ks + 1))
        lower = np.maximum(2.0 * (gamma[ks - 1] - gamma[ks]) / gamma[ks - 1],
                           params.c_eta * cons.l_g1**3 / params.mu_g * gamma[ks]**2)
        bad = np.nonzero(eta_next * tol < lower)[0]
        if bad.size:
            found["eta_below_window"] = int(ks[bad[0]])
        bad = np.nonzero(eta_next > tol)[0]
        if bad.size:
            found["eta_above_one"] = int(ks[bad[0]])
    return found
