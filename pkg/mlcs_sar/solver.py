"""Group-sparse multilook reconstruction by iterative thresholding.

The unknown is a LookStack X of L complex subimages. Pixel j across all
looks forms row j of the (pixels x L) matrix; the L2,1 penalty sums the row
norms, so a pixel is either active in every look or zero in all of them.
Each iteration takes a gradient step on the data fidelity and applies the
row-wise group soft threshold with tau = lambda * mu.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from .config import SolverConfig
from .core import LookStack, Seed
from .errors import SolverDivergenceError
from .mlrda import LookPlan, RdaFilters, SensingOperator
from .sim import CompressedData

logger = logging.getLogger(__name__)

STEP_SAFETY = 0.99
DIVERGENCE_FACTOR = 10.0

TRACE_COLUMNS = ["iteration", "objective", "fidelity", "regularizer", "rel_change", "active_rows"]


@dataclass
class SolverTrace:
    """Per-iteration diagnostics; entry 0 is the initial iterate"""
    objective: List[float] = field(default_factory=list)
    fidelity: List[float] = field(default_factory=list)
    regularizer: List[float] = field(default_factory=list)
    rel_change: List[float] = field(default_factory=list)
    active_rows: List[int] = field(default_factory=list)
    step_size: float = float("nan")
    stop_reason: str = ""

    def record(self, fidelity: float, regularizer: float, rel_change: float, active_rows: int):
        objective = fidelity + regularizer
        if not math.isfinite(objective):
            raise SolverDivergenceError(f"objective became non-finite at iteration {len(self)}")
        self.objective.append(objective)
        self.fidelity.append(fidelity)
        self.regularizer.append(regularizer)
        self.rel_change.append(rel_change)
        self.active_rows.append(active_rows)

    def __len__(self) -> int:
        return len(self.objective)

    @property
    def iterations(self) -> int:
        return len(self) - 1

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "iteration": np.arange(len(self)),
            "objective": self.objective,
            "fidelity": self.fidelity,
            "regularizer": self.regularizer,
            "rel_change": self.rel_change,
            "active_rows": self.active_rows,
        }, columns=TRACE_COLUMNS)


@dataclass(frozen=True, eq=False)
class MultilookImage:
    """Root-sum-square of the looks, shape (n_azimuth / L, n_range)"""
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float, copy=True)
        if values.ndim != 2:
            raise ValueError(f"multilook image must be 2D, got shape {values.shape}")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValueError("multilook image values must be finite and nonnegative")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class StepEstimate:
    mu: float
    sigma_max_sq: float
    iterations: int
    converged: bool


def soft_threshold(x, tau: float):
    """sgn(x) * max(|x| - tau, 0); complex inputs keep their phase"""
    if tau < 0:
        raise ValueError(f"threshold must be nonnegative, got {tau}")
    x = np.asarray(x)
    magnitude = np.abs(x)
    scale = np.divide(
        np.maximum(magnitude - tau, 0.0), magnitude,
        out=np.zeros(magnitude.shape), where=magnitude > 0,
    )
    out = x * scale
    return out if out.ndim else out.item()


def _pixel_norms(data: np.ndarray) -> np.ndarray:
    """Cross-look Euclidean norm of every pixel of an (L, n, n_range) array"""
    return np.sqrt(np.sum(np.abs(data) ** 2, axis=0))


def group_threshold(rows: Union[LookStack, np.ndarray], tau: float):
    """Scale every pixel row by max(1 - tau / ||row||, 0); zero rows stay zero.

    Accepts a LookStack or a (pixels x L) row matrix and returns the same kind.
    """
    if tau < 0:
        raise ValueError(f"threshold must be nonnegative, got {tau}")
    if isinstance(rows, LookStack):
        norms = _pixel_norms(rows.data)
        return LookStack(rows.data * _shrink_factors(norms, tau)[None, :, :])
    rows = np.asarray(rows)
    norms = np.sqrt(np.sum(np.abs(rows) ** 2, axis=1))
    return rows * _shrink_factors(norms, tau)[:, None]


def _shrink_factors(norms: np.ndarray, tau: float) -> np.ndarray:
    return np.divide(
        np.maximum(norms - tau, 0.0), norms,
        out=np.zeros(norms.shape), where=norms > 0,
    )


def l21_norm(rows: Union[LookStack, np.ndarray]) -> float:
    """Sum over pixels of the cross-look Euclidean norm"""
    if isinstance(rows, LookStack):
        return float(np.sum(multilook_sum(rows).values))
    rows = np.asarray(rows)
    return float(np.sum(np.sqrt(np.sum(np.abs(rows) ** 2, axis=1))))


def multilook_sum(looks: LookStack) -> MultilookImage:
    return MultilookImage(_pixel_norms(looks.data))


def estimate_step(
    operator: SensingOperator,
    seed: Seed,
    iterations: int = 50,
    tol: float = 1e-4,
) -> StepEstimate:
    """Power iteration on A^H A for A = Theta*G, returning mu = 0.99 / sigma_max^2.

    Falls back to the analytic norm bound, flagged as not converged, when the
    Rayleigh quotient has not settled after `iterations` steps.
    """
    rng = seed.generator("power-iteration")
    shape = (operator.look_count,) + tuple(operator.look_shape)
    x = LookStack(rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    x = x * (1.0 / x.norm())

    previous = math.inf
    estimate = 0.0
    for k in range(1, iterations + 1):
        y = operator.adjoint(operator.forward(x))
        estimate = float(np.real(np.vdot(x.data, y.data)))
        norm = y.norm()
        if norm == 0.0:
            break
        if abs(estimate - previous) <= tol * estimate:
            mu = STEP_SAFETY / estimate
            logger.debug("power iteration settled after %d steps: sigma_max^2=%.6g", k, estimate)
            return StepEstimate(mu, estimate, k, True)
        previous = estimate
        x = y * (1.0 / norm)

    bound = operator.norm_bound() ** 2
    logger.warning(
        "power iteration did not converge (last estimate %.6g); using norm bound %.6g",
        estimate, bound,
    )
    return StepEstimate(STEP_SAFETY / bound, bound, iterations, False)


def _objective_terms(residual: CompressedData, looks: LookStack, lam: float) -> Tuple[float, float]:
    return 0.5 * residual.norm() ** 2, lam * l21_norm(looks)


def reconstruct(
    data: CompressedData,
    filters: RdaFilters,
    plan: LookPlan,
    config: SolverConfig,
    step: Optional[StepEstimate] = None,
) -> Tuple[LookStack, SolverTrace]:
    """Minimise 1/2 ||y - Theta G(X)||^2 + lambda ||X||_2,1 by group thresholding.

    Stops after `max_iterations` or once the relative iterate change falls
    below `rel_change_tol`. Raises SolverDivergenceError when the objective
    climbs to ten times its running minimum.
    """
    if config.look_count != plan.look_count:
        raise ValueError(
            f"solver configured for {config.look_count} looks, plan has {plan.look_count}"
        )
    if filters.adjoint_mode != config.adjoint_mode:
        filters = filters.with_adjoint_mode(config.adjoint_mode)
    operator = SensingOperator(filters, plan, data.mask)
    lam = config.regularization
    if config.mu is not None:
        mu = config.mu
    else:
        step = step or estimate_step(operator, Seed(config.seed))
        mu = step.mu
    tau = lam * mu
    logger.info(
        "reconstructing %d looks of %s from %d samples: lambda=%.4g mu=%.4g",
        plan.look_count, operator.look_shape, len(data.mask), lam, mu,
    )

    if config.warm_start == "adjoint":
        looks = operator.adjoint(data)
    else:
        looks = LookStack.zeros(plan.look_count, operator.look_shape)
    predicted = operator.forward(looks)

    trace = SolverTrace(step_size=mu)
    residual = data.with_values(data.values - predicted.values)
    trace.record(*_objective_terms(residual, looks, lam), 0.0, _active_rows(looks))
    best = trace.objective[0]

    for k in range(1, config.max_iterations + 1):
        gradient_step = looks + operator.adjoint(residual) * mu
        updated = group_threshold(gradient_step, tau)
        change = (updated - looks).norm()
        scale = updated.norm()
        rel_change = change / scale if scale > 0 else (0.0 if change == 0 else math.inf)
        looks = updated

        predicted = operator.forward(looks)
        residual = data.with_values(data.values - predicted.values)
        trace.record(*_objective_terms(residual, looks, lam), rel_change, _active_rows(looks))
        objective = trace.objective[-1]
        logger.debug("iteration %d: objective=%.6e rel_change=%.3e", k, objective, rel_change)

        if best > 0 and objective > DIVERGENCE_FACTOR * best:
            raise SolverDivergenceError(
                f"objective {objective:.6g} at iteration {k} exceeds {DIVERGENCE_FACTOR:g}x "
                f"its minimum {best:.6g}; step size mu={mu:.4g} is too large"
            )
        best = min(best, objective)
        if rel_change < config.rel_change_tol:
            trace.stop_reason = "rel_change"
            break
    else:
        trace.stop_reason = "max_iterations"

    logger.info(
        "solver stopped after %d iterations (%s): objective=%.6e",
        trace.iterations, trace.stop_reason, trace.objective[-1],
    )
    return looks, trace


def _active_rows(looks: LookStack) -> int:
    return int(np.count_nonzero(_pixel_norms(looks.data)))
