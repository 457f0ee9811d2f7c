"""Small numeric kernels: pivoted rank detection and damped Newton iteration.

Both routines are deterministic for fixed inputs; the Newton restarts draw
from a generator seeded per call, never from global state.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NewtonError


def rank_and_pivots(matrix, rel_tol=1e-9):
    """Numeric rank via Gaussian elimination with complete pivoting.

    A pivot counts while its magnitude exceeds rel_tol times the largest
    absolute entry of the input matrix.  Returns (rank, pivot_columns) with
    columns listed in selection order; the greedy order is what callers use
    to pick a regular velocity block.
    """
    a = np.array(matrix, dtype=float)
    if a.ndim != 2:
        raise ValueError("rank_and_pivots expects a matrix")
    scale = float(np.max(np.abs(a))) if a.size else 0.0
    if scale == 0.0:
        return 0, []
    threshold = rel_tol * scale
    rows = list(range(a.shape[0]))
    cols = list(range(a.shape[1]))
    pivot_cols = []
    while rows and cols:
        sub = np.abs(a[np.ix_(rows, cols)])
        flat = int(np.argmax(sub))
        ri, ci = divmod(flat, sub.shape[1])
        if sub[ri, ci] <= threshold:
            break
        pr, pc = rows[ri], cols[ci]
        pivot_cols.append(pc)
        rows.pop(ri)
        cols.pop(ci)
        if rows:
            ratios = a[rows, pc] / a[pr, pc]
            a[np.ix_(rows, cols)] -= np.outer(ratios, a[pr, cols])
    return len(pivot_cols), pivot_cols


@dataclass(frozen=True)
class NewtonConfig:
    """Damped Newton settings shared by velocity resolution and the PDE solver."""

    max_iter: int = 50
    tol: float = 1e-12
    damping: float = 0.5
    retries: int = 8
    max_backtracks: int = 40


def damped_newton(residual, jacobian, x0, cfg=NewtonConfig()):
    """Solve residual(x) = 0 with Newton steps and residual-norm backtracking.

    A step is halved (cfg.damping) whenever it raises a DomainError or grows
    the residual norm.  Raises NewtonError when out of iterations or the
    Jacobian goes singular.
    """
    x = np.array(x0, dtype=float)
    fx = np.asarray(residual(x), dtype=float)
    norm = float(np.max(np.abs(fx))) if fx.size else 0.0
    for _ in range(cfg.max_iter):
        if norm <= cfg.tol:
            return x
        jac = np.asarray(jacobian(x), dtype=float)
        try:
            step = np.linalg.solve(jac, -fx)
        except np.linalg.LinAlgError as exc:
            raise NewtonError(f"singular jacobian: {exc}", residual=norm) from exc
        if not np.all(np.isfinite(step)):
            raise NewtonError("non-finite newton step", residual=norm)
        scale = 1.0
        for _ in range(cfg.max_backtracks):
            trial = x + scale * step
            try:
                ftrial = np.asarray(residual(trial), dtype=float)
            except DomainError:
                scale *= cfg.damping
                continue
            new_norm = float(np.max(np.abs(ftrial))) if ftrial.size else 0.0
            if not np.isfinite(new_norm):
                scale *= cfg.damping
                continue
            if new_norm < norm or new_norm <= cfg.tol:
                x, fx, norm = trial, ftrial, new_norm
                break
            scale *= cfg.damping
        else:
            raise NewtonError("newton line search stalled", residual=norm)
    if norm <= cfg.tol:
        return x
    raise NewtonError("newton did not converge", residual=norm, iterations=cfg.max_iter)


def newton_with_restarts(residual, jacobian, x0, cfg=NewtonConfig(), box=1.0, seed=0):
    """Newton from x0, then from cfg.retries seeded random points in [-box, box]^n."""
    try:
        return damped_newton(residual, jacobian, x0, cfg)
    except (NewtonError, DomainError) as first_failure:
        failure = first_failure
    rng = np.random.default_rng(seed)
    dim = len(np.atleast_1d(x0))
    for _ in range(cfg.retries):
        start = rng.uniform(-box, box, size=dim)
        try:
            return damped_newton(residual, jacobian, start, cfg)
        except (NewtonError, DomainError) as exc:
            failure = exc
    if isinstance(failure, NewtonError):
        raise NewtonError(
            f"newton failed from initial guess and {cfg.retries} restarts: {failure}",
            residual=failure.residual,
        ) from failure
    raise NewtonError(
        f"newton failed from initial guess and {cfg.retries} restarts: {failure}"
    ) from failure
