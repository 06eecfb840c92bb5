"""
Packing kernel specs into unconstrained parameter vectors.

Positive quantities pass through a softplus so the optimizer works on the
whole real line; everything else is stored as is.  A frequency lengthscale of
``1e-12`` corresponds to a raw value of about ``-27.6``, so the stationary
limit stays reachable.
"""

import numpy as np

from .kernels import HSMComponent, HSMSpec, KernelSpec, LMCSpec, ShiftGroup

POSITIVE = {"sigma", "noise", "ell", "l", "w"}


def softplus(v):
    return np.logaddexp(0.0, v)


def softplus_inv(y):
    y = np.maximum(np.asarray(y, dtype=float), 1e-300)
    return y + np.log(-np.expm1(-y))


def softplus_grad(v):
    # derivative of softplus is the logistic function
    return 0.5 * (1.0 + np.tanh(0.5 * v))


def natural_params(spec, kernel):
    """Ordered dict of the trainable arrays of ``spec`` under ``kernel``."""
    out = {}
    if isinstance(spec, KernelSpec):
        for p, g in enumerate(spec.shifts):
            for name in ("w", "mu", "sigma", "theta", "phi"):
                out[f"s{p}.{name}"] = getattr(g, name)
            if kernel != "mosm":
                out[f"s{p}.ell"] = g.ell
                out[f"s{p}.center"] = g.center
    elif isinstance(spec, HSMSpec):
        for c, comps in enumerate(spec.channels):
            for q, comp in enumerate(comps):
                for name in ("w", "l", "c", "sigma", "mu"):
                    out[f"c{c}.{q}.{name}"] = np.atleast_1d(getattr(comp, name))
    elif isinstance(spec, LMCSpec):
        out["mixing"] = spec.mixing
        for q, comps in enumerate(spec.latents):
            for r, comp in enumerate(comps):
                for name in ("w", "l", "c", "sigma", "mu"):
                    out[f"l{q}.{r}.{name}"] = np.atleast_1d(getattr(comp, name))
    else:
        raise TypeError(f"not a kernel spec: {type(spec).__name__}")
    out["noise"] = spec.noise
    return out


def _is_positive(spec, key):
    return key.rsplit(".", 1)[-1] in POSITIVE


def _rebuild(template, values):
    if isinstance(template, KernelSpec):
        shifts = []
        for p, g in enumerate(template.shifts):
            kw = {f: values.get(f"s{p}.{f}", getattr(g, f)) for f in ("center", "ell", "w", "mu", "sigma", "theta", "phi")}
            shifts.append(ShiftGroup(**{k: np.array(v, dtype=float) for k, v in kw.items()}))
        return KernelSpec(shifts, values["noise"])

    def comp(prefix):
        return HSMComponent(**{f: np.array(values[f"{prefix}.{f}"], dtype=float).reshape(-1)
                               if f in ("c", "sigma", "mu") else float(np.squeeze(values[f"{prefix}.{f}"]))
                               for f in ("w", "l", "c", "sigma", "mu")})

    if isinstance(template, HSMSpec):
        channels = [[comp(f"c{c}.{q}") for q in range(len(comps))] for c, comps in enumerate(template.channels)]
        return HSMSpec(channels, values["noise"])
    latents = [[comp(f"l{q}.{r}") for r in range(len(comps))] for q, comps in enumerate(template.latents)]
    return LMCSpec(values["mixing"], latents, values["noise"])


class ParamLayout:
    """Bijection between a kernel spec and a flat unconstrained vector.

    ``order`` optionally permutes the blocks inside the vector; it changes the
    storage layout only, never the model.
    """

    def __init__(self, template, kernel, order=None):
        self.template = template.copy()
        self.kernel = kernel
        nat = natural_params(template, kernel)
        keys = list(nat)
        if order is not None:
            if sorted(order) != sorted(keys):
                raise ValueError("order must be a permutation of the parameter keys")
            keys = list(order)
        self.keys = keys
        self.shapes = {k: np.shape(nat[k]) for k in keys}
        self.positive = {k: _is_positive(template, k) for k in keys}
        self.slices = {}
        start = 0
        for k in keys:
            size = int(np.prod(self.shapes[k], dtype=int))
            self.slices[k] = slice(start, start + size)
            start += size
        self.size = start

    def pack(self, spec):
        nat = natural_params(spec, self.kernel)
        v = np.empty(self.size)
        for k in self.keys:
            a = np.asarray(nat[k], dtype=float).reshape(-1)
            v[self.slices[k]] = softplus_inv(a) if self.positive[k] else a
        return v

    def unpack(self, v):
        v = np.asarray(v, dtype=float)
        values = {}
        for k in self.keys:
            raw = v[self.slices[k]]
            values[k] = (softplus(raw) if self.positive[k] else raw.copy()).reshape(self.shapes[k])
        return _rebuild(self.template, values)

    def chain(self, v, grads):
        """Map natural-parameter gradients to a gradient in ``v``."""
        out = np.empty(self.size)
        for k in self.keys:
            g = np.asarray(grads[k], dtype=float).reshape(-1)
            if self.positive[k]:
                g = g * softplus_grad(v[self.slices[k]])
            out[self.slices[k]] = g
        return out
