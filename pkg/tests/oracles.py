"""Independent reference implementations used only by the tests.

Nothing here shares code with the package: eigenvalues come from Sturm
bisection, the gap densities from scipy.integrate quadrature on the raw
nested integrals with the exponents folded so every factor stays in
[0, 1].  Slow and simple on purpose.
"""

import numpy as np
from scipy.integrate import dblquad, quad
from scipy.special import gamma as gamma_fn


def sturm_count(d, e2, x):
    # eigenvalues of tridiag(d, e) strictly below x, via the LDL^T sign count
    count = 0
    q = 1.0
    for i in range(len(d)):
        correction = e2[i - 1] / q if i > 0 else 0.0
        q = d[i] - x - correction
        if q == 0.0:
            q = -1e-300
        if q < 0.0:
            count += 1
    return count


def sturm_eigenvalues(d, e, tol=1e-13):
    """All eigenvalues of a symmetric tridiagonal matrix by bisection."""
    d = np.asarray(d, dtype=float)
    e = np.asarray(e, dtype=float)
    n = len(d)
    e2 = e * e
    radius = np.zeros(n)
    radius[:-1] += np.abs(e)
    radius[1:] += np.abs(e)
    lo_all = float(np.min(d - radius)) - 1.0
    hi_all = float(np.max(d + radius)) + 1.0
    out = np.empty(n)
    for k in range(n):
        lo, hi = lo_all, hi_all
        # invariant: count(lo) <= k < count(hi)
        while hi - lo > tol * max(1.0, abs(lo), abs(hi)):
            mid = 0.5 * (lo + hi)
            if sturm_count(d, e2, mid) <= k:
                lo = mid
            else:
                hi = mid
        out[k] = 0.5 * (lo + hi)
    return out


def brody_constants(q):
    b = gamma_fn((q + 2.0) / (q + 1.0)) ** (q + 1.0)
    return (q + 1.0) * b, b


def quad_p1(s, q, b1):
    """Order-1 gap density via scipy.integrate.quad on the folded integrand."""
    if s <= 0.0:
        return 0.0
    a, b = brody_constants(q)
    a1 = (2.0 * q + 1.0) * b1
    s_hi = s ** (2.0 * q + 1.0)

    def integrand(x):
        return x ** q * np.exp(-b * x ** (q + 1.0) + b1 * (x ** (2.0 * q + 1.0) - s_hi))

    val, err = quad(integrand, 0.0, s, epsabs=1e-13, epsrel=1e-12, limit=200)
    return a * a1 * s ** (2.0 * q) * val


def quad_p2(s, q, b1, b2):
    """Order-2 gap density via scipy dblquad on the doubly folded integrand."""
    if s <= 0.0:
        return 0.0
    a, b = brody_constants(q)
    a1 = (2.0 * q + 1.0) * b1
    a2 = (3.0 * q + 1.0) * b2
    s_hi = s ** (3.0 * q + 1.0)

    def integrand(y, x):
        expo = (-b * y ** (q + 1.0)
                + b1 * (y ** (2.0 * q + 1.0) - x ** (2.0 * q + 1.0))
                + b2 * (x ** (3.0 * q + 1.0) - s_hi))
        return x ** (2.0 * q) * y ** q * np.exp(expo)

    val, err = dblquad(integrand, 0.0, s, 0.0, lambda x: x,
                       epsabs=1e-12, epsrel=1e-11)
    return a * a1 * a2 * s ** (3.0 * q) * val


# mean-condition roots of the order-1/2 densities, frozen from an
# independent scipy.quad + brentq root search (good to ~5e-7 relative,
# limited by the outer quadrature tolerance of that search)
SOLVED_B1 = {0.1: 0.7640498954760295, 0.3: 0.47524104516367627,
             0.5: 0.31069337700962785, 0.8: 0.17342302817578423,
             1.0: 0.12048160540679398}
SOLVED_B2 = {0.3: 0.22351772726814534, 0.5: 0.09382663901977623,
             0.8: 0.027890118392900717}
