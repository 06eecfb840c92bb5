"""
Maximum-likelihood training of kernel hyperparameters.

The optimizer works on the unconstrained vector produced by ``ParamLayout``.
Adam is the default; L-BFGS (via scipy) is available for refinement.  Both
return the best spec seen during the run.
"""

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize as sopt

from .gp import build_gram, nll_and_adjoint
from .gradients import kernel_grad
from .kernels import default_kernel, mohsm_gram
from .params import ParamLayout

log = logging.getLogger(__name__)

MAX_REJECTIONS = 10


class TrainingError(RuntimeError):
    """Optimization could not make progress (non-finite objective)."""


@dataclass
class TrainReport:
    iterations: int
    nll_trace: np.ndarray
    final_nll: float
    grad_norm: float
    converged: bool
    wall_time: float
    raw_trace: np.ndarray = field(default=None, repr=False)
    grad_trace: np.ndarray = field(default=None, repr=False)

    def to_rows(self):
        """``(iteration, nll, grad_norm)`` rows for CSV export."""
        g = self.grad_trace if self.grad_trace is not None else np.full(len(self.nll_trace), np.nan)
        return [(k, float(f), float(gn)) for k, (f, gn) in enumerate(zip(self.nll_trace, g))]


def nll_and_grad(spec, data, kernel=None):
    """NLL and its gradient with respect to the natural parameters."""
    kernel = default_kernel(spec) if kernel is None else kernel
    terms = None
    if kernel in ("mohsm", "mosm"):
        K, terms = mohsm_gram(spec, data.channel, data.x, stationary=kernel == "mosm", keep_terms=True)
    else:
        K = build_gram(spec, data.inputs, kernel=kernel)
    value, G, _ = nll_and_adjoint(K, spec.noise[data.channel], data.y_normalized)
    return value, kernel_grad(spec, kernel, G, data.channel, data.x, terms=terms)


class Objective:
    """NLL as a function of the unconstrained vector."""

    def __init__(self, layout, data):
        self.layout = layout
        self.data = data

    def __call__(self, v):
        spec = self.layout.unpack(v)
        value, grads = nll_and_grad(spec, self.data, self.layout.kernel)
        return value, self.layout.chain(v, grads)


def gradient(v, data, layout):
    return Objective(layout, data)(v)[1]


def _safe_eval(obj, v):
    try:
        f, g = obj(v)
    except (np.linalg.LinAlgError, ValueError, FloatingPointError):
        return None
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        return None
    return f, g


def _adam(obj, v0, max_iters, grad_tol, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    first = _safe_eval(obj, v0)
    if first is None:
        raise TrainingError("objective is not finite at the initial point")
    v, (f, g) = v0.copy(), first
    best = (f, v.copy(), float(np.linalg.norm(g)))
    trace, raw, gtrace = [f], [f], [best[2]]
    m = np.zeros_like(v)
    s = np.zeros_like(v)
    t = 0
    rejections = 0
    converged = best[2] < grad_tol
    it = 0
    while not converged and it < max_iters:
        it += 1
        m_new = beta1 * m + (1 - beta1) * g
        s_new = beta2 * s + (1 - beta2) * g**2
        t_new = t + 1
        step = lr * (m_new / (1 - beta1**t_new)) / (np.sqrt(s_new / (1 - beta2**t_new)) + eps)
        res = _safe_eval(obj, v - step)
        if res is None:
            rejections += 1
            lr *= 0.5
            log.debug("rejected step %d, learning rate now %g", it, lr)
            if rejections >= MAX_REJECTIONS:
                raise TrainingError(
                    f"{MAX_REJECTIONS} consecutive non-finite steps at iteration {it}; "
                    f"best nll {best[0]:.6g}, learning rate {lr:.3g}")
            trace.append(best[0])
            raw.append(np.nan)
            gtrace.append(np.nan)
            continue
        rejections = 0
        v = v - step
        m, s, t = m_new, s_new, t_new
        f, g = res
        gn = float(np.linalg.norm(g))
        if f < best[0]:
            best = (f, v.copy(), gn)
        trace.append(best[0])
        raw.append(f)
        gtrace.append(gn)
        if gn < grad_tol:
            converged = True
    return best, it, converged, trace, raw, gtrace


def _lbfgs(obj, v0, max_iters, grad_tol):
    first = _safe_eval(obj, v0)
    if first is None:
        raise TrainingError("objective is not finite at the initial point")
    best = [first[0], v0.copy(), float(np.linalg.norm(first[1]))]
    trace, gtrace = [first[0]], [best[2]]

    def fun(v):
        res = _safe_eval(obj, v)
        if res is None:
            return np.inf, np.zeros_like(v)
        f, g = res
        if f < best[0]:
            best[:] = [f, v.copy(), float(np.linalg.norm(g))]
        return f, g

    def callback(intermediate_result):
        trace.append(best[0])
        gtrace.append(best[2])

    result = sopt.minimize(fun, v0, jac=True, method="L-BFGS-B", callback=callback,
                           options={"maxcor": 10, "maxiter": max_iters, "gtol": grad_tol})
    converged = bool(result.success) or best[2] < grad_tol
    return tuple(best), int(result.nit), converged, trace, list(trace), gtrace


def optimize(init, data, kernel=None, max_iters=500, grad_tol=1e-5, algorithm="adam", lr=0.02, order=None):
    """Minimize the NLL from ``init``; returns ``(best_spec, TrainReport)``.

    ``data`` must already carry its normalization; the spec lives in
    normalized units.
    """
    kernel = default_kernel(init) if kernel is None else kernel
    layout = ParamLayout(init, kernel, order=order)
    obj = Objective(layout, data)
    v0 = layout.pack(init)
    start = time.perf_counter()
    if algorithm == "adam":
        best, its, converged, trace, raw, gtrace = _adam(obj, v0, max_iters, grad_tol, lr)
    elif algorithm in ("lbfgs", "l-bfgs"):
        best, its, converged, trace, raw, gtrace = _lbfgs(obj, v0, max_iters, grad_tol)
    else:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    report = TrainReport(
        iterations=its,
        nll_trace=np.asarray(trace),
        final_nll=float(best[0]),
        grad_norm=best[2],
        converged=converged,
        wall_time=time.perf_counter() - start,
        raw_trace=np.asarray(raw),
        grad_trace=np.asarray(gtrace),
    )
    log.info("%s/%s: nll %.4f after %d iterations (%.1fs)", kernel, algorithm, report.final_nll, its, report.wall_time)
    return layout.unpack(best[1]), report


def wrap_phases(spec):
    """Copy of a MOHSM/MOSM spec with phases wrapped to (-pi, pi]."""
    out = spec.copy()
    for g in out.shifts:
        g.phi = np.pi - np.mod(np.pi - g.phi, 2 * np.pi)
    return out
