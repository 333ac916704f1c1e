"""Steepest descent on the Stiefel manifold St(k, d).

Tangent projection uses the embedded metric, retraction is a sign-fixed thin
QR, and step sizes come from an Armijo backtracking line search whose first
trial is ``initial_step`` and later trials are extrapolated from the previous
decrease (the usual manopt/pymanopt heuristic).
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .core import ValidationError

log = logging.getLogger(__name__)


class RetractionError(ArithmeticError):
    """V + t*xi lost rank, so the QR factor is not a valid Stiefel point."""


class OptimizationError(RuntimeError):
    """Every restart of the solver failed."""


@dataclass(frozen=True)
class SolverOptions:
    max_iter: int = 500
    grad_tol: float = 1e-6
    armijo_c: float = 1e-4
    backtrack_factor: float = 0.5
    initial_step: float = 1.0
    restarts: int = 1
    seed: int = 0
    max_backtracks: int = 60
    min_step: float = 1e-12
    optimism: float = 2.0

    def __post_init__(self):
        if not 0 < self.backtrack_factor < 1:
            raise ValidationError("backtrack_factor must lie in (0, 1)")
        if not 0 < self.armijo_c < 1:
            raise ValidationError("armijo_c must lie in (0, 1)")
        if self.max_iter < 0 or self.restarts < 1:
            raise ValidationError("max_iter must be >= 0 and restarts >= 1")
        if self.grad_tol <= 0 or self.initial_step <= 0:
            raise ValidationError("grad_tol and initial_step must be positive")


@dataclass
class RestartResult:
    restart_index: int
    V: Optional[np.ndarray]
    objective_value: float
    iterations: int
    converged: bool
    trace: List[float] = field(default_factory=list)
    grad_norms: List[float] = field(default_factory=list)
    stop_reason: str = ""
    error: Optional[str] = None
    initial_value: float = float("nan")
    seconds: float = 0.0


@dataclass
class SolveReport:
    V_star: np.ndarray
    objective_value: float
    iterations: int
    converged: bool
    restart_index: int
    restarts: List[RestartResult] = field(default_factory=list)

    @property
    def trace(self) -> List[float]:
        return self.restarts[self.restart_index].trace


def random_stiefel(d: int, k: int, seed=None) -> np.ndarray:
    """Haar-distributed d x k matrix with orthonormal columns."""
    if k > d or k < 1:
        raise ValidationError(f"need 1 <= k <= d, got d={d}, k={k}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    G = rng.standard_normal((d, k))
    return _qr_positive(G)


def _qr_positive(M: np.ndarray) -> np.ndarray:
    Q, R = np.linalg.qr(M)
    diag = np.diag(R)
    scale = max(np.abs(diag).max(), np.finfo(float).tiny)
    if np.abs(diag).min() <= 1e-13 * scale * M.shape[0]:
        raise RetractionError("matrix is numerically rank deficient")
    return Q * np.sign(diag)


def tangent_project(V: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Project an ambient d x k matrix onto the tangent space at V."""
    V = np.asarray(V, dtype=float)
    G = np.asarray(G, dtype=float)
    if V.shape != G.shape:
        raise ValidationError(f"shape mismatch: V {V.shape}, G {G.shape}")
    VtG = V.T @ G
    return G - V @ ((VtG + VtG.T) / 2)


def retract_qr(V: np.ndarray, xi: np.ndarray, step: float = 1.0) -> np.ndarray:
    """QR retraction with R's diagonal made positive."""
    V = np.asarray(V, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if V.shape != xi.shape:
        raise ValidationError(f"shape mismatch: V {V.shape}, xi {xi.shape}")
    return _qr_positive(V + step * xi)


def _safe_cost(cost, V):
    try:
        value = float(cost(V))
    except (np.linalg.LinAlgError, ArithmeticError):
        return np.inf
    return value if np.isfinite(value) else np.inf


def _descend(cost, euclid_grad, V, opts: SolverOptions, restart_index: int) -> RestartResult:
    started = time.perf_counter()
    f = _safe_cost(cost, V)
    result = RestartResult(restart_index, None, f, 0, False, initial_value=f)
    if not np.isfinite(f):
        result.error = "non-finite cost at initial point"
        return result
    result.trace.append(f)
    prev_decrease = None
    for it in range(opts.max_iter + 1):
        try:
            G = np.asarray(euclid_grad(V), dtype=float)
        except (np.linalg.LinAlgError, ArithmeticError) as exc:
            result.error = f"gradient evaluation failed: {exc}"
            break
        if not np.all(np.isfinite(G)):
            result.error = "non-finite gradient"
            break
        rgrad = tangent_project(V, G)
        gnorm = float(np.linalg.norm(rgrad))
        result.grad_norms.append(gnorm)
        if gnorm < opts.grad_tol:
            result.converged = True
            result.stop_reason = "grad_tol"
            break
        if it == opts.max_iter:
            result.stop_reason = "max_iter"
            break
        slope = -gnorm ** 2
        if prev_decrease is None:
            step = opts.initial_step / gnorm
        else:
            step = opts.optimism * 2.0 * prev_decrease / gnorm ** 2
        accepted = False
        for _ in range(opts.max_backtracks):
            try:
                V_new = retract_qr(V, -rgrad, step)
            except RetractionError:
                step *= opts.backtrack_factor
                continue
            f_new = _safe_cost(cost, V_new)
            # strict decrease guards against steps lost in rounding of f
            if f_new < f and f_new <= f + opts.armijo_c * step * slope:
                accepted = True
                break
            step *= opts.backtrack_factor
            if step * gnorm < opts.min_step:
                break
        if not accepted:
            result.stop_reason = "stalled"
            break
        prev_decrease = f - f_new
        V, f = V_new, f_new
        result.trace.append(f)
        result.iterations = it + 1
    result.seconds = time.perf_counter() - started
    if result.error is None:
        result.V = V
        result.objective_value = f
    return result


def minimize(
    cost: Callable[[np.ndarray], float],
    euclid_grad: Callable[[np.ndarray], np.ndarray],
    d: int,
    k: int,
    opts: SolverOptions = SolverOptions(),
    initial: Optional[np.ndarray] = None,
) -> SolveReport:
    """Minimise ``cost`` over St(k, d) from ``opts.restarts`` random starts.

    The restart with the lowest final cost wins. ``initial``, when given,
    replaces the random start of restart 0.
    """
    seeds = np.random.SeedSequence(opts.seed).spawn(opts.restarts)
    results = []
    for r, ss in enumerate(seeds):
        if r == 0 and initial is not None:
            V0 = _qr_positive(np.asarray(initial, dtype=float))
        else:
            V0 = random_stiefel(d, k, np.random.default_rng(ss))
        res = _descend(cost, euclid_grad, V0, opts, r)
        if res.error:
            log.warning("restart %d failed: %s", r, res.error)
        else:
            log.debug("restart %d: f=%.6g after %d iterations (%s)",
                      r, res.objective_value, res.iterations, res.stop_reason)
        results.append(res)
    ok = [res for res in results if res.error is None]
    if not ok:
        raise OptimizationError("; ".join(f"restart {res.restart_index}: {res.error}" for res in results))
    best = min(ok, key=lambda res: res.objective_value)
    return SolveReport(best.V, best.objective_value, best.iterations, best.converged,
                       best.restart_index, results)
