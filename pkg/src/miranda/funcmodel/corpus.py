"""Built-in test maps and a seeded generator of random polynomial maps."""

from __future__ import annotations

import itertools

import numpy as np

from miranda.errors import DimensionError
from miranda.funcmodel.maps import ExprMap, Provenance, parse_map

# name -> (fixed dimension or None, builder(n) -> expression text)
_CORPUS = {
    "identity": (None, lambda n: " ; ".join(f"x{i}" for i in range(1, n + 1))),
    "scaled_identity": (None, lambda n: " ; ".join(f"2*x{i}" for i in range(1, n + 1))),
    "separable_cubic": (None, lambda n: " ; ".join(f"x{i}*(x{i}^2 - 0.25)" for i in range(1, n + 1))),
    "cubic2d": (2, lambda n: "x1^3 - 0.25*x1 + 0.1*x2 ; x2"),
    # same map read as a vector field on [-1,1]^2
    "cubic_field": (2, lambda n: "x1^3 - 0.25*x1 + 0.1*x2 ; x2"),
    "nonsmooth_abs": (2, lambda n: "x1 + 0.3*abs(x2) - 0.15 ; x2"),
    "tanh_step": (2, lambda n: "tanh(10*x1) ; x2"),
    # level set {f1 = 0}: the line x1 ~ -0.6 plus a closed loop around (0.5, 0)
    "loop2d": (2, lambda n: "x1 + 0.6 - 2*exp((-(x1 - 0.5)^2 - x2^2)/0.05) ; x2"),
}

BUILTIN_NAMES = tuple(_CORPUS)
NONSMOOTH_NAMES = ("nonsmooth_abs",)


def builtin(name: str, n: int | None = None) -> ExprMap:
    """Named corpus map; fixed-dimension maps ignore ``n`` only when it matches."""
    try:
        fixed, build = _CORPUS[name]
    except KeyError:
        raise ValueError(f"unknown builtin map {name!r}; choose from {', '.join(_CORPUS)}") from None
    if fixed is not None:
        if n is not None and n != fixed:
            raise DimensionError(f"builtin {name!r} exists only in dimension {fixed}")
        n = fixed
    if n is None or n < 1:
        raise DimensionError(f"builtin {name!r} needs a dimension n >= 1")
    m = parse_map(build(n), n)
    return ExprMap(m.exprs, n, Provenance("builtin", f"{name}/{n}"))


def _monomials(n: int, max_degree: int):
    for total in range(max_degree + 1):
        for combo in itertools.combinations_with_replacement(range(n), total):
            yield combo


def random_polynomial_map(n: int, seed: int, max_degree: int = 3, check=None,
                          max_doublings: int = 40, initial_diagonal: float = 1.0 / 16) -> ExprMap:
    """Random polynomial map whose diagonal terms are scaled up until ``check`` passes.

    Component i is ``D * x_i + p_i(x)`` with ``p_i`` a dense polynomial of total
    degree <= ``max_degree`` with coefficients uniform in [-1, 1]. ``D`` starts
    at ``initial_diagonal`` and doubles until ``check(map)`` is true (default: the sampled face
    sign condition on [-1, 1]^n).
    """
    if check is None:
        from miranda.geometry import Cuboid, check_miranda
        box = Cuboid.symmetric(n)

        def check(m):
            return check_miranda(m, box).passed

    rng = np.random.default_rng([int(seed), n, max_degree])
    polys = []
    for _ in range(n):
        terms = []
        for mono in _monomials(n, max_degree):
            c = float(rng.uniform(-1.0, 1.0))
            factors = [repr(c)] + [f"x{k + 1}" for k in mono]
            terms.append("*".join(factors))
        polys.append(" + ".join(terms))
    diag = float(initial_diagonal)
    for _ in range(max_doublings):
        text = " ; ".join(f"{diag!r}*x{i + 1} + {p}" for i, p in enumerate(polys))
        m = parse_map(text.replace("+ -", "- "), n)
        m = ExprMap(m.exprs, n, Provenance("builtin", f"random_poly/n={n}/seed={seed}"))
        if check(m):
            return m
        diag *= 2.0
    raise RuntimeError(f"no diagonal scaling made the random map (n={n}, seed={seed}) pass")


def random_folded_map(n: int, seed: int, amplitude: float = 0.05, check=None,
                      max_halvings: int = 30) -> ExprMap:
    """Perturbed separable cubic ``x_i^3 - a_i x_i + amplitude * p_i(x)``.

    ``a_i`` is uniform in [0.1, 0.6] and ``p_i`` is a dense cubic with
    coefficients in [-1, 1], so the map typically has many zeros. The
    amplitude is halved until ``check`` passes (default as above).
    """
    if check is None:
        from miranda.geometry import Cuboid, check_miranda
        box = Cuboid.symmetric(n)

        def check(m):
            return check_miranda(m, box).passed

    rng = np.random.default_rng([int(seed), n, 7919])
    folds = [float(v) for v in rng.uniform(0.1, 0.6, size=n)]
    polys = []
    for _ in range(n):
        terms = []
        for mono in _monomials(n, 3):
            c = float(rng.uniform(-1.0, 1.0))
            terms.append("*".join([repr(c)] + [f"x{k + 1}" for k in mono]))
        polys.append(" + ".join(terms))
    amp = float(amplitude)
    for _ in range(max_halvings):
        text = " ; ".join(f"x{i + 1}^3 - {folds[i]!r}*x{i + 1} + {amp!r}*({p})" for i, p in enumerate(polys))
        m = parse_map(text.replace("+ -", "- "), n)
        m = ExprMap(m.exprs, n, Provenance("builtin", f"random_folded/n={n}/seed={seed}"))
        if check(m):
            return m
        amp *= 0.5
    raise RuntimeError(f"no amplitude made the folded map (n={n}, seed={seed}) pass")
