"""Solution families for the scalar equation y = Sum_j x_j dy/dx_j - f(dy/dx).

Differentiating the equation shows that at every x either the Hessian of
y or the factor x_i - df/dz_i must vanish, index by index.  Killing the
first factor everywhere gives the general solution (an affine function
with free slopes c); killing the second everywhere gives the envelope
solution, which needs the Hessian of f to be invertible so the slope
conditions x_i = df/dz_i can be resolved; doing each on a complementary
block of indices gives the s-mixed family.  The velocity Hessian of a
degenerate Lagrangian plays the role of f's Hessian, which is why these
three families track the regular/degenerate split elsewhere in the
package.
"""

import numpy as np

from .errors import ModelError, RankDeficiencyError
from .expressions import (
    compile_evaluator,
    differentiate,
    free_symbols,
    parse_expression,
    simplify,
)
from .numerics import NewtonConfig, newton_with_restarts, rank_and_pivots

RESIDUAL_STEP = 1e-6


class ClairautProblem:
    """Problem data: dimension n and the function f over z1..zn."""

    def __init__(self, n, f):
        n = int(n)
        if n < 1:
            raise ModelError("a Clairaut problem needs at least one variable")
        self.n = n
        self.names = tuple(f"z{j + 1}" for j in range(n))
        expr = parse_expression(f) if isinstance(f, str) else f
        extra = free_symbols(expr) - set(self.names)
        if extra:
            raise ModelError(
                f"f may only use {', '.join(self.names)}; found {', '.join(sorted(extra))}")
        self.f = simplify(expr)
        grad = [simplify(differentiate(self.f, z)) for z in self.names]
        hess = [simplify(differentiate(g, z)) for g in grad for z in self.names]
        self._f = compile_evaluator(self.f, self.names)
        self._grad = compile_evaluator(grad, self.names)
        self._hess = compile_evaluator(hess, self.names)

    def f_value(self, z):
        return self._f(z)

    def f_gradient(self, z):
        return np.array(self._grad(z))

    def f_hessian(self, z):
        return np.array(self._hess(z)).reshape(self.n, self.n)

    def hessian_rank(self, z):
        rank, _ = rank_and_pivots(self.f_hessian(z))
        return rank


def general_solution(prob, c):
    """Affine solution with slope vector c; returns an evaluator of x."""
    c = np.asarray(c, dtype=float)
    if c.shape != (prob.n,):
        raise ModelError(f"expected {prob.n} slope constants, got {c.shape}")
    fc = prob.f_value(c)

    def value(x):
        return float(np.asarray(x, dtype=float) @ c - fc)

    return value


def envelope_solution(prob, x, cfg=NewtonConfig()):
    """Resolve every slope condition x_i = df/dz_i and evaluate the result.

    Only exists when f's Hessian has full rank: the conditions are solved
    for z by Newton iteration and a rank-deficient Hessian at the
    solution (or at the initial guess when Newton cannot even start)
    leaves some condition unresolvable.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (prob.n,):
        raise ModelError(f"expected a point with {prob.n} components, got {x.shape}")
    z = _resolve_slopes(prob, np.arange(prob.n), (), x, cfg)
    return float(x @ z - prob.f_value(z))


def mixed_solution(prob, s, c_tail, x, cfg=NewtonConfig()):
    """Resolve the first s slope conditions, keep constants for the rest.

    The resolvable block must lead: the top-left s-by-s Hessian minor of
    f has to be nonsingular along the Newton path.  s = 0 reduces to the
    general solution and s = n to the envelope.
    """
    s = int(s)
    if not 0 <= s <= prob.n:
        raise ModelError(f"s must lie in [0, {prob.n}], got {s}")
    c_tail = np.asarray(c_tail, dtype=float)
    if c_tail.shape != (prob.n - s,):
        raise ModelError(f"expected {prob.n - s} tail constants, got {c_tail.shape}")
    x = np.asarray(x, dtype=float)
    if x.shape != (prob.n,):
        raise ModelError(f"expected a point with {prob.n} components, got {x.shape}")
    if s == 0:
        return general_solution(prob, c_tail)(x)
    head = _resolve_slopes(prob, np.arange(s), c_tail, x, cfg)
    z = np.concatenate([head, c_tail])
    return float(x @ z - prob.f_value(z))


def _resolve_slopes(prob, idx, c_tail, x, cfg):
    """Newton solve x_i = df/dz_i over the index block idx, tail frozen."""
    s = len(idx)

    def assemble(head):
        return np.concatenate([head, c_tail])

    def residual(head):
        return prob.f_gradient(assemble(head))[idx] - x[idx]

    def jacobian(head):
        return prob.f_hessian(assemble(head))[np.ix_(idx, idx)]

    guess = x[idx] / 2.0
    rank, _ = rank_and_pivots(jacobian(guess))
    if rank < s:
        raise RankDeficiencyError(
            f"slope conditions unresolvable: Hessian block rank {rank} < {s}")
    head = newton_with_restarts(residual, jacobian, guess, cfg,
                                box=1.0 + float(np.max(np.abs(x))))
    rank, _ = rank_and_pivots(jacobian(head))
    if rank < s:
        raise RankDeficiencyError(
            f"slope conditions unresolvable: Hessian block rank {rank} < {s}")
    return head


def pde_residual(prob, y_fn, x, step=RESIDUAL_STEP):
    """Defect |y - Sum x_j dy/dx_j + f(dy/dx)| with central-difference dy/dx."""
    x = np.asarray(x, dtype=float)
    grad = np.empty(prob.n)
    for j in range(prob.n):
        h = step * (1 + abs(x[j]))
        xp, xm = x.copy(), x.copy()
        xp[j] += h
        xm[j] -= h
        grad[j] = (y_fn(xp) - y_fn(xm)) / (2 * h)
    return abs(y_fn(x) - x @ grad + prob.f_value(grad))
