"""Vectorized safeguarded Newton iteration for monotone scalar equations."""
import numpy as np

from .errors import NoConvergence


def bracketed_newton(fun, lo, hi, x0=None, tol=1e-13, maxiter=60, xtol=0.0):
    """Solve fun(x) = 0 elementwise on brackets [lo, hi].

    ``fun`` returns ``(F, dF)``.  Each component must change sign on its
    bracket.  A Newton step is accepted only if it stays strictly inside the
    current bracket, otherwise the midpoint is taken.  Convergence is declared
    when |F| <= tol or the bracket has shrunk below ``xtol``.
    """
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.array(hi, dtype=float, copy=True)
    lo, hi = np.broadcast_arrays(lo, hi)
    lo = lo.copy()
    hi = hi.copy()
    x = 0.5 * (lo + hi) if x0 is None else np.array(np.broadcast_to(x0, lo.shape), dtype=float)
    f_lo, _ = fun(lo)
    sign_lo = np.sign(f_lo)
    active = np.ones(lo.shape, dtype=bool)
    for _ in range(maxiter):
        F, dF = fun(x)
        done = (np.abs(F) <= tol) | (hi - lo <= xtol)
        active &= ~done
        if not active.any():
            return x
        same = np.sign(F) == sign_lo
        lo = np.where(active & same, x, lo)
        hi = np.where(active & ~same, x, hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = x - F / dF
        ok = np.isfinite(step) & (step > lo) & (step < hi)
        x = np.where(active, np.where(ok, step, 0.5 * (lo + hi)), x)
    F, _ = fun(x)
    bad = active & (np.abs(F) > tol) & (hi - lo > max(xtol, 4 * np.finfo(float).eps * np.max(np.abs(hi))))
    if bad.any():
        raise NoConvergence(f"{int(bad.sum())} components did not converge; max |F| = {np.abs(F[bad]).max():.3e}")
    return x
