"""Evaluatable maps with first-derivative access."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from miranda.errors import DimensionError, EvaluationError, ParseError
from miranda.funcmodel import expr as ex

FORWARD = "forward"
CENTRAL = "central"


@dataclass(frozen=True)
class Provenance:
    kind: str  # "parsed" | "builtin" | "bernstein" | "derived"
    detail: str = ""


@dataclass(frozen=True)
class JacobianEvaluation:
    point: np.ndarray
    matrix: np.ndarray
    method: str
    step: float | None = None


def _as_point(x, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != n:
        raise DimensionError(f"expected a point of dimension {n}, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise EvaluationError(f"non-finite input point {x}")
    return x


class MapModel:
    """A map R^n_in -> R^n_out.

    Subclasses implement ``_value`` and ``_value_jac`` on a validated float
    vector; ``_value_many`` may be overridden with a vectorized version.
    """

    n_in: int
    n_out: int
    smooth: bool = True
    provenance: Provenance = Provenance("derived")

    # -- subclass hooks --------------------------------------------------
    def _value(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _value_jac(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def _value_many(self, X: np.ndarray) -> np.ndarray:
        out = np.full((X.shape[0], self.n_out), np.nan)
        for k, x in enumerate(X):
            try:
                out[k] = self._value(x)
            except EvaluationError:
                pass
        return out

    def _value_jac_many(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        F = np.full((X.shape[0], self.n_out), np.nan)
        J = np.full((X.shape[0], self.n_out, self.n_in), np.nan)
        for k, x in enumerate(X):
            try:
                F[k], J[k] = self._value_jac(x)
            except EvaluationError:
                pass
        return F, J

    # -- public API ------------------------------------------------------
    def evaluate(self, x) -> np.ndarray:
        return self._value(_as_point(x, self.n_in))

    __call__ = evaluate

    def evaluate_many(self, X) -> np.ndarray:
        """Evaluate at the rows of ``X``; rows that fail to evaluate come back as NaN."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_in:
            raise DimensionError(f"expected an (N, {self.n_in}) array, got {X.shape}")
        return self._value_many(X)

    def value_and_jacobian(self, x) -> tuple[np.ndarray, np.ndarray]:
        return self._value_jac(_as_point(x, self.n_in))

    def value_and_jacobian_many(self, X) -> tuple[np.ndarray, np.ndarray]:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_in:
            raise DimensionError(f"expected an (N, {self.n_in}) array, got {X.shape}")
        return self._value_jac_many(X)

    def jacobian(self, x, method: str = FORWARD, step: float = 1e-5) -> JacobianEvaluation:
        x = _as_point(x, self.n_in)
        if method == FORWARD:
            return JacobianEvaluation(x, self._value_jac(x)[1], FORWARD)
        if method == CENTRAL:
            J = np.empty((self.n_out, self.n_in))
            for j in range(self.n_in):
                h = step * max(1.0, abs(x[j]))
                xp, xm = x.copy(), x.copy()
                xp[j] += h
                xm[j] -= h
                J[:, j] = (self._value(xp) - self._value(xm)) / (2.0 * h)
            return JacobianEvaluation(x, J, CENTRAL, step)
        raise ValueError(f"unknown differentiation method {method!r}")

    # -- derived maps ----------------------------------------------------
    def select(self, components: Sequence[int]) -> "MapModel":
        """Keep only the listed output components (0-based)."""
        return SliceMap(self, components=components)

    def restrict(self, axis: int, value: float) -> "MapModel":
        """Freeze input coordinate ``axis`` (0-based) at ``value``."""
        free = [i for i in range(self.n_in) if i != axis]
        return SliceMap(self, free_axes=free, fixed={axis: float(value)})

    def permute(self, order: Sequence[int]) -> "MapModel":
        """Map y -> (f_{order[k]}(x))_k with x[order[k]] = y[k]."""
        order = list(order)
        if sorted(order) != list(range(self.n_in)) or self.n_in != self.n_out:
            raise DimensionError(f"invalid axis permutation {order}")
        return SliceMap(self, components=order, free_axes=order)

    def scaled(self, factor: float) -> "MapModel":
        return ScaledMap(self, factor)


class SliceMap(MapModel):
    """Component selection and coordinate freezing/reordering of a parent map."""

    def __init__(self, parent: MapModel, components=None, free_axes=None, fixed=None):
        self.parent = parent
        self.components = list(range(parent.n_out)) if components is None else list(components)
        self.free_axes = list(range(parent.n_in)) if free_axes is None else list(free_axes)
        self.fixed = dict(fixed or {})
        self.n_in = len(self.free_axes)
        self.n_out = len(self.components)
        self.smooth = parent.smooth
        self._template = np.zeros(parent.n_in)
        for axis, value in self.fixed.items():
            self._template[axis] = value

    def _full(self, x):
        xf = self._template.copy()
        xf[self.free_axes] = x
        return xf

    def _value(self, x):
        return self.parent._value(self._full(x))[self.components]

    def _value_jac(self, x):
        F, J = self.parent._value_jac(self._full(x))
        return F[self.components], J[np.ix_(self.components, self.free_axes)]

    def _value_many(self, X):
        XF = np.tile(self._template, (X.shape[0], 1))
        XF[:, self.free_axes] = X
        return self.parent._value_many(XF)[:, self.components]

    def _value_jac_many(self, X):
        XF = np.tile(self._template, (X.shape[0], 1))
        XF[:, self.free_axes] = X
        F, J = self.parent._value_jac_many(XF)
        return F[:, self.components], J[:, self.components][:, :, self.free_axes]


class ScaledMap(MapModel):
    def __init__(self, parent: MapModel, factor: float):
        self.parent = parent
        self.factor = float(factor)
        self.n_in, self.n_out = parent.n_in, parent.n_out
        self.smooth = parent.smooth

    def _value(self, x):
        return self.factor * self.parent._value(x)

    def _value_jac(self, x):
        F, J = self.parent._value_jac(x)
        return self.factor * F, self.factor * J

    def _value_many(self, X):
        return self.factor * self.parent._value_many(X)

    def _value_jac_many(self, X):
        F, J = self.parent._value_jac_many(X)
        return self.factor * F, self.factor * J


_SCALAR_FAULTS = (ZeroDivisionError, OverflowError, ValueError)


class ExprMap(MapModel):
    """Map defined by expression trees, compiled to straight-line code."""

    def __init__(self, exprs: Sequence[ex.Node], n_in: int, provenance: Provenance | None = None):
        self.exprs = tuple(exprs)
        self.n_in = int(n_in)
        self.n_out = len(self.exprs)
        self.provenance = provenance or Provenance("derived")
        top = max((ex.max_var_index(e) for e in self.exprs), default=0)
        if top > self.n_in:
            raise DimensionError(f"x{top} referenced but the map has dimension {self.n_in}")
        self.smooth = not any(ex.has_abs(e) for e in self.exprs)
        src = ex.generate_source(self.exprs, self.n_in, with_tangent=False)
        src_t = ex.generate_source(self.exprs, self.n_in, with_tangent=True)
        self._f = ex.compile_source(src, ex.SCALAR_NAMESPACE)
        self._fj = ex.compile_source(src_t, ex.SCALAR_NAMESPACE)
        self._vf = ex.compile_source(src, ex.ARRAY_NAMESPACE)
        self._vfj = ex.compile_source(src_t, ex.ARRAY_NAMESPACE)

    def __repr__(self):
        return f"ExprMap({self.text()!r}, n_in={self.n_in})"

    def text(self) -> str:
        return " ; ".join(ex.to_text(e) for e in self.exprs)

    def _value(self, x):
        try:
            vals = self._f(*x.tolist())
        except _SCALAR_FAULTS as err:
            raise EvaluationError(f"evaluation failed at {x.tolist()}: {err}") from None
        if not all(math.isfinite(v) for v in vals):
            raise EvaluationError(f"non-finite value at {x.tolist()}")
        return np.array(vals, dtype=float)

    def _value_jac(self, x):
        try:
            vals, rows = self._fj(*x.tolist())
        except _SCALAR_FAULTS as err:
            raise EvaluationError(f"evaluation failed at {x.tolist()}: {err}") from None
        F = np.array(vals, dtype=float)
        J = np.array(rows, dtype=float)
        if not (np.all(np.isfinite(F)) and np.all(np.isfinite(J))):
            raise EvaluationError(f"non-finite value at {x.tolist()}")
        return F, J

    def _value_many(self, X):
        out = np.empty((X.shape[0], self.n_out))
        with np.errstate(all="ignore"):
            vals = self._vf(*X.T)
        for i, v in enumerate(vals):
            out[:, i] = v
        out[~np.isfinite(out)] = np.nan
        return out

    def _value_jac_many(self, X):
        F = np.empty((X.shape[0], self.n_out))
        J = np.empty((X.shape[0], self.n_out, self.n_in))
        with np.errstate(all="ignore"):
            vals, rows = self._vfj(*X.T)
        for i, v in enumerate(vals):
            F[:, i] = v
            for j, d in enumerate(rows[i]):
                J[:, i, j] = d
        bad = ~(np.all(np.isfinite(F), axis=1) & np.all(np.isfinite(J), axis=(1, 2)))
        F[bad] = np.nan
        J[bad] = np.nan
        return F, J

    def select(self, components):
        return ExprMap([self.exprs[i] for i in components], self.n_in, Provenance("derived"))

    def restrict(self, axis, value):
        value = float(value)

        def sub(k):
            if k - 1 == axis:
                return ex.Num(value)
            return ex.Var(k - 1 if k - 1 > axis else k)

        exprs = [ex.substitute(e, sub) for e in self.exprs]
        return ExprMap(exprs, self.n_in - 1, Provenance("derived"))

    def permute(self, order):
        order = list(order)
        if sorted(order) != list(range(self.n_in)) or self.n_in != self.n_out:
            raise DimensionError(f"invalid axis permutation {order}")
        inv = {old: new for new, old in enumerate(order)}
        exprs = [ex.substitute(self.exprs[o], lambda k: ex.Var(inv[k - 1] + 1)) for o in order]
        return ExprMap(exprs, self.n_in, Provenance("derived"))

    def scaled(self, factor):
        c = ex.Num(float(factor))
        return ExprMap([ex.Bin("*", c, e) for e in self.exprs], self.n_in, Provenance("derived"))


def parse_map(text: str, dim: int | None = None) -> ExprMap:
    """Parse ``text`` into a map.

    Without ``dim`` the input dimension is the larger of the highest variable
    index and the number of components (so ``"x1 ; 1"`` is a map on R^2).
    """
    exprs = ex.parse_exprs(text)
    top = max(ex.max_var_index(e) for e in exprs)
    if dim is None:
        dim = max(top, len(exprs))
    elif top > dim:
        m = re.search(rf"x{top}(?![0-9])", text)
        raise ParseError(f"x{top} referenced but dimension {dim} was declared", m.start() if m else 0)
    return ExprMap(exprs, dim, Provenance("parsed", text))
