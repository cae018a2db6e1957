"""
Symbolic presets for initial data, analytic forcings, manufactured solutions and BVP sources.
"""

from collections.abc import Callable
from typing import NamedTuple

import sympy as sp

X, Y, Z, T = sp.symbols("x y z t", real=True)

# x^3 (1-x)^2 satisfies u(0) = u(1) = u_x(1) = u_xx(0) = 0
BUMP: sp.Expr = X**3 * (1 - X) ** 2


class Preset(NamedTuple):
    arity: int
    build: Callable[[tuple[float, ...], sp.Expr], sp.Expr]


def transverse_profile(d: int, periodic: bool) -> sp.Expr:
    """
    cos(y)[cos(z)] on Dirichlet walls (u = u_yy = 0 there), cos(2y)[cos(2z)] with period pi.
    """
    k: int = 2 if periodic else 1
    profile: sp.Expr = sp.cos(k * Y)
    if d == 2:
        profile = profile * sp.cos(k * Z)
    return profile


# Initial data a * shape; the single coefficient is the amplitude a
INITIAL_PRESETS: dict[str, Preset] = {
    "zero": Preset(1, lambda coeffs, profile: sp.Integer(0)),
    "poly-bump": Preset(1, lambda coeffs, profile: coeffs[0] * BUMP * profile),
    "two-bump": Preset(
        1, lambda coeffs, profile: coeffs[0] * BUMP * sp.sin(2 * sp.pi * X) * profile
    ),
    # Exact solution of the configured manufactured forcing at t = 0
    "manufactured": Preset(1, lambda coeffs, profile: sp.Integer(0)),
}

ANALYTIC_FORCINGS: dict[str, Preset] = {
    # [a, rate]
    "exp-decay": Preset(
        2,
        lambda coeffs, profile: coeffs[0]
        * sp.exp(-coeffs[1] * T)
        * X
        * (1 - X)
        * profile,
    ),
    # [a]
    "steady": Preset(1, lambda coeffs, profile: coeffs[0] * X * (1 - X) * profile),
    # [a, omega]
    "oscillating": Preset(
        2,
        lambda coeffs, profile: coeffs[0]
        * sp.sin(coeffs[1] * T)
        * X
        * (1 - X)
        * profile,
    ),
    # [a, rate]: growing forcing for probing the blowup guard
    "pump": Preset(
        2, lambda coeffs, profile: coeffs[0] * sp.exp(coeffs[1] * T) * BUMP * profile
    ),
}

MANUFACTURED_SOLUTIONS: dict[str, Callable[[sp.Expr], sp.Expr]] = {
    "zero": lambda profile: sp.Integer(0),
    "poly-exp": lambda profile: sp.exp(-T) * BUMP * profile,
    "poly-steady": lambda profile: BUMP * profile,
    # u_x(0) = 1 with u(0) = u(1) = u_x(1) = u_xx(0) = 0
    "slope-steady": lambda profile: (X - 3 * X**3 + 2 * X**4) * profile,
}

# Right-hand sides g(x) of the two-point problem
BVP_SOURCES: dict[str, Preset] = {
    "constant": Preset(1, lambda coeffs, profile: sp.Float(coeffs[0])),
    "linear": Preset(1, lambda coeffs, profile: coeffs[0] * X),
    "cosine": Preset(1, lambda coeffs, profile: coeffs[0] * sp.cos(sp.pi * X)),
}
