"""Maps: expression parsing, forward-mode Jacobians, Bernstein smoothing, test corpus."""

from miranda.funcmodel.bernstein import BernsteinMap, SmoothingRequest, bernstein_smooth
from miranda.funcmodel.corpus import BUILTIN_NAMES, builtin, random_folded_map, random_polynomial_map
from miranda.funcmodel.maps import (
    CENTRAL,
    FORWARD,
    ExprMap,
    JacobianEvaluation,
    MapModel,
    Provenance,
    parse_map,
)


def evaluate(map_, x):
    return map_.evaluate(x)


def jacobian(map_, x, method=FORWARD, step=1e-5):
    return map_.jacobian(x, method=method, step=step)


__all__ = [
    "BUILTIN_NAMES",
    "BernsteinMap",
    "CENTRAL",
    "ExprMap",
    "FORWARD",
    "JacobianEvaluation",
    "MapModel",
    "Provenance",
    "SmoothingRequest",
    "bernstein_smooth",
    "builtin",
    "evaluate",
    "jacobian",
    "parse_map",
    "random_folded_map",
    "random_polynomial_map",
]
