"""Independent reference values, computed symbolically with sympy."""
from functools import lru_cache

import sympy as sp

x = sp.Symbol("x", positive=True)


@lru_cache(maxsize=None)
def manufactured_rhs(weight: str, exact: str) -> str:
    """zeta = -(n v')' as an expression string in the package grammar."""
    n = sp.sympify(weight.replace("^", "**"), locals={"x": x})
    v = sp.sympify(exact.replace("^", "**"), locals={"x": x})
    zeta = sp.simplify(-sp.diff(n * sp.diff(v, x), x))
    return sp.sstr(zeta).replace("**", "^")


@lru_cache(maxsize=None)
def definite_integral(integrand: str, a=0, b=1) -> float:
    f = sp.sympify(integrand.replace("^", "**"), locals={"x": x})
    return float(sp.integrate(f, (x, a, b)))
