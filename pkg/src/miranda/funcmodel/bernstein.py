"""Tensor-product Bernstein approximation of continuous maps on a cuboid."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import comb

from miranda.errors import EvaluationError, SmoothingError
from miranda.funcmodel.maps import MapModel, Provenance


def basis(degree: int, u) -> np.ndarray:
    """Bernstein basis values B_k^degree(u), shape (len(u), degree + 1)."""
    u = np.atleast_1d(np.asarray(u, dtype=float))[:, None]
    k = np.arange(degree + 1)
    return comb(degree, k) * u ** k * (1.0 - u) ** (degree - k)


def basis_derivative(degree: int, u) -> np.ndarray:
    """d/du of :func:`basis`, via N (B_{k-1}^{N-1} - B_k^{N-1})."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    low = basis(degree - 1, u)
    out = np.zeros((u.size, degree + 1))
    out[:, 1:] += low
    out[:, :-1] -= low
    return degree * out


class BernsteinMap(MapModel):
    """Polynomial map with coefficient tensor of shape (n_out, N_1+1, ..., N_n+1)."""

    def __init__(self, coeffs: np.ndarray, lower, upper, provenance: Provenance | None = None,
                 sup_error: float | None = None):
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        self.n_out = self.coeffs.shape[0]
        self.n_in = self.coeffs.ndim - 1
        self.degrees = tuple(s - 1 for s in self.coeffs.shape[1:])
        self.provenance = provenance or Provenance("bernstein", f"degrees={self.degrees}")
        self.sup_error = sup_error
        self.smooth = True

    def __repr__(self):
        return f"BernsteinMap(degrees={self.degrees}, n_out={self.n_out})"

    def _u(self, X):
        return (X - self.lower) / (self.upper - self.lower)

    def _contract(self, vectors) -> np.ndarray:
        C = self.coeffs
        for vec in reversed(vectors):
            C = C @ vec
        return C

    def _value(self, x):
        u = self._u(x)
        out = self._contract([basis(d, ui)[0] for d, ui in zip(self.degrees, u)])
        if not np.all(np.isfinite(out)):
            raise EvaluationError(f"non-finite value at {x.tolist()}")
        return out

    def _value_jac(self, x):
        u = self._u(x)
        B = [basis(d, ui)[0] for d, ui in zip(self.degrees, u)]
        dB = [basis_derivative(d, ui)[0] for d, ui in zip(self.degrees, u)]
        F = self._contract(B)
        J = np.empty((self.n_out, self.n_in))
        width = self.upper - self.lower
        for j in range(self.n_in):
            vecs = list(B)
            vecs[j] = dB[j]
            J[:, j] = self._contract(vecs) / width[j]
        return F, J

    def _value_many(self, X):
        U = self._u(X)
        mats = [basis(d, U[:, j]) for j, d in enumerate(self.degrees)]
        letters = "abcdefghijklmnopqrstuvw"[: self.n_in]
        subscripts = "z" + letters + "," + ",".join(f"y{c}" for c in letters) + "->yz"
        return np.einsum(subscripts, self.coeffs, *mats, optimize=True)

    def select(self, components):
        return BernsteinMap(self.coeffs[list(components)], self.lower, self.upper,
                            Provenance("derived", "bernstein selection"), self.sup_error)

    def restrict(self, axis, value):
        u = (float(value) - self.lower[axis]) / (self.upper[axis] - self.lower[axis])
        vec = basis(self.degrees[axis], u)[0]
        coeffs = np.tensordot(self.coeffs, vec, axes=([axis + 1], [0]))
        keep = [i for i in range(self.n_in) if i != axis]
        return BernsteinMap(coeffs, self.lower[keep], self.upper[keep],
                            Provenance("derived", "bernstein restriction"), self.sup_error)


@dataclass(frozen=True)
class SmoothingRequest:
    source: MapModel
    degree: object  # int, or one int per axis
    eta: float = math.inf

    def degrees(self, dim: int) -> tuple:
        if isinstance(self.degree, (int, np.integer)):
            return (int(self.degree),) * dim
        degs = tuple(int(d) for d in self.degree)
        if len(degs) != dim:
            raise ValueError(f"need {dim} degrees, got {len(degs)}")
        return degs


def dense_samples_per_axis(dim: int) -> int:
    """Per-axis density of the error-scan grid: 101 up to 2-D, ~10^4 points beyond."""
    if dim <= 2:
        return 101
    return max(9, int(round(10201 ** (1.0 / dim))))


def sup_error(source: MapModel, approx: MapModel, cuboid, per_axis: int | None = None) -> float:
    """Largest Euclidean distance between the two maps over a dense tensor grid."""
    pts = cuboid.grid(per_axis or dense_samples_per_axis(cuboid.dim))
    a = source.evaluate_many(pts)
    b = approx.evaluate_many(pts)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise EvaluationError("non-finite value on the error-scan grid")
    return float(np.max(np.linalg.norm(a - b, axis=1)))


def bernstein_smooth(request: SmoothingRequest, cuboid, samples_per_axis: int | None = None,
                     check_samples: int = 33) -> BernsteinMap:
    """Bernstein approximant of ``request.source`` with its measured sup error attached.

    Raises :class:`SmoothingError` when the measured error exceeds ``eta / 2``
    or when the source satisfies the face sign condition but the approximant
    does not.
    """
    from miranda.geometry import check_miranda

    src = request.source
    degs = request.degrees(cuboid.dim)
    if min(degs) < 1:
        raise ValueError("Bernstein degree must be at least 1")
    if src.n_in != cuboid.dim:
        raise ValueError(f"source has {src.n_in} inputs, cuboid has dimension {cuboid.dim}")
    axes = [np.linspace(a, b, d + 1) for a, b, d in zip(cuboid.lower, cuboid.upper, degs)]
    # exact endpoints: linspace already returns a and b at the ends
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.reshape(-1) for m in mesh], axis=1)
    vals = src.evaluate_many(pts)
    if not np.all(np.isfinite(vals)):
        raise EvaluationError("source is not finite on the Bernstein grid")
    coeffs = vals.T.reshape((src.n_out,) + tuple(d + 1 for d in degs))
    approx = BernsteinMap(coeffs, cuboid.lower, cuboid.upper,
                          Provenance("bernstein", f"degrees={degs}"))
    err = sup_error(src, approx, cuboid, samples_per_axis)
    approx.sup_error = err
    if err > request.eta / 2:
        raise SmoothingError(
            f"measured sup error {err:.3g} exceeds eta/2 = {request.eta / 2:.3g}; raise the degree")
    if src.n_out == cuboid.dim:
        if check_miranda(src, cuboid, check_samples).passed and \
                not check_miranda(approx, cuboid, check_samples).passed:
            raise SmoothingError(f"approximant of degree {degs} loses the boundary sign condition")
    return approx
