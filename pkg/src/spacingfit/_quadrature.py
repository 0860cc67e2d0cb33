"""Panel-cached Gauss-Legendre quadrature for the order-1 and order-2 gap densities.

The densities evaluated here are

    p1(s) = a*a1 * s^(2q) * exp(-b1*s^(2q+1)) * I1(s)
    I1(s) = integral_0^s x^q * exp(-b*x^(q+1) + b1*x^(2q+1)) dx

    p2(s) = a*a1*a2 * s^(3q) * exp(-b2*s^(3q+1)) * I2(s)
    I2(s) = integral_0^s x^(2q) * exp(-b1*x^(2q+1) + b2*x^(3q+1)) * I1(x) dx

with a = (q+1)*b, a1 = (2q+1)*b1, a2 = (3q+1)*b2 and b the Brody constant.
The substitution u = x^(q+1) removes the x^q endpoint singularity and puts
both integrals on a shared axis:

    I1(s) = G1(S) / (q+1),        S = s^(q+1)
    G1(U) = integral_0^U E1(u) du,            E1(u) = exp(-b*u + b1*u^gamma)
    I2(s) = G2(S) / (q+1)^2
    G2(U) = integral_0^U u^(q/(q+1)) * E2(u) * G1(u) du,
                                   E2(u) = exp(-b1*u^gamma + b2*u^eta)

where gamma = (2q+1)/(q+1) and eta = (3q+1)/(q+1).  G1 and G2 are tabulated
once per (q, b1, b2) as cumulative sums over graded Gauss-Legendre panels;
arbitrary points are finished with a partial-panel rule, vectorized over s.

Both densities decay like exp(-b*s^(q+1)) (the inner integral is dominated by
its upper endpoint), so the tables stop where b*U reaches EXP_CUTOFF and the
evaluators return 0 beyond; the truncated values are below e^-70, far under
the 1e-8 / 1e-6 absolute tolerances.  Intermediate table entries grow at most
like e^150 on q in [0, 1], well inside double range; build() asserts the
bound rather than switching to log space.
"""

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import gamma as _gamma_fn

EXP_CUTOFF = 82.0
_MAX_SAFE_EXPONENT = 600.0

_GL16_X, _GL16_W = leggauss(16)
_GL8_X, _GL8_W = leggauss(8)


def brody_b(q):
    """Brody scale constant b = Gamma((q+2)/(q+1))^(q+1)."""
    return _gamma_fn((q + 2.0) / (q + 1.0)) ** (q + 1.0)


def graded_edges(hi, first_frac=1e-7, n_geom=40, n_lin=48, knee_frac=0.12):
    """Panel edges on [0, hi]: geometric near 0, then uniform.

    The geometric part resolves integrable x^alpha endpoint factors; the
    uniform part keeps panel widths small enough for the exponential growth
    of the integrands near the cutoff.
    """
    knee = hi * knee_frac
    geom = np.geomspace(hi * first_frac, knee, n_geom + 1)
    lin = np.linspace(knee, hi, n_lin + 1)
    return np.concatenate(([0.0], geom, lin[1:]))


def _panel_nodes(edges, x):
    # maps reference nodes x in [-1,1] onto every panel; returns (P, len(x))
    lo = edges[:-1, None]
    half = 0.5 * np.diff(edges)[:, None]
    return lo + half * (x + 1.0), half


class QuadTables:
    """Immutable per-(q, b1, b2) tables; p1/p2 evaluation vectorized over s."""

    __slots__ = ("q", "b", "b1", "b2", "a", "a1", "a2", "gamma", "eta",
                 "u_max", "edges", "_c1", "_c2")

    def __init__(self, q, b1, b2):
        if not 0.0 <= q <= 1.0:
            raise ValueError(f"q must be in [0, 1], got {q}")
        self.q = float(q)
        self.b = float(brody_b(q))
        self.b1 = float(b1)
        self.b2 = float(b2)
        self.a = (q + 1.0) * self.b
        self.a1 = (2.0 * q + 1.0) * self.b1
        self.a2 = (3.0 * q + 1.0) * self.b2
        self.gamma = (2.0 * q + 1.0) / (q + 1.0)
        self.eta = (3.0 * q + 1.0) / (q + 1.0)
        self.u_max = EXP_CUTOFF / self.b
        self._build()

    def _e1_exponent(self, u):
        return -self.b * u + self.b1 * u ** self.gamma

    def _e2_exponent(self, u):
        return -self.b1 * u ** self.gamma + self.b2 * u ** self.eta

    def _build(self):
        edges = graded_edges(self.u_max)
        self.edges = edges
        nodes16, half = _panel_nodes(edges, _GL16_X)

        exp1 = self._e1_exponent(nodes16)
        if exp1.max() > _MAX_SAFE_EXPONENT:
            raise FloatingPointError("inner-integrand exponent exceeds the double-safe bound")
        e1 = np.exp(exp1)
        panel1 = half[:, 0] * (e1 @ _GL16_W)
        c1 = np.concatenate(([0.0], np.cumsum(panel1)))

        # G1 at every panel node: cumulative at the panel's left edge plus a
        # GL-8 partial over [edge, node] (nodes never leave their own panel)
        g1_nodes = c1[:-1, None] + self._g1_partial(edges[:-1, None], nodes16)

        frac = self.q / (self.q + 1.0)
        exp2 = self._e2_exponent(nodes16)
        with np.errstate(divide="ignore"):
            log_pow = frac * np.log(nodes16)
        total = exp2 + log_pow + np.log(np.maximum(g1_nodes, 1e-300))
        if total.max() > _MAX_SAFE_EXPONENT:
            raise FloatingPointError("outer-integrand exponent exceeds the double-safe bound")
        f2 = nodes16 ** frac * np.exp(exp2) * g1_nodes
        panel2 = half[:, 0] * (f2 @ _GL16_W)
        self._c1 = c1
        self._c2 = np.concatenate(([0.0], np.cumsum(panel2)))

    def _g1_partial(self, lo, t):
        # integral of E1 over [lo, t] by GL-8; lo and t broadcast together
        h = 0.5 * (t - lo)
        sub = lo[..., None] + h[..., None] * (_GL8_X + 1.0)
        return h * (np.exp(self._e1_exponent(sub)) @ _GL8_W)

    def _locate(self, big_s):
        idx = np.searchsorted(self.edges, big_s, side="right") - 1
        return np.clip(idx, 0, len(self.edges) - 2)

    def g1(self, big_s):
        """Cumulative inner integral G1 at arbitrary points of the u axis."""
        big_s = np.asarray(big_s, dtype=float)
        idx = self._locate(big_s)
        lo = self.edges[idx]
        return self._c1[idx] + self._g1_partial(lo, big_s)

    def p1(self, s):
        """Order-1 gap density, vectorized; 0 beyond the support cutoff."""
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        big_s = np.where(s > 0.0, s, 0.0) ** (self.q + 1.0)
        live = (s > 0.0) & (big_s < self.u_max)
        if not live.any():
            return out
        sv = s[live]
        big = big_s[live]
        g1 = self.g1(big)
        out[live] = (self.a * self.a1 / (self.q + 1.0)
                     * sv ** (2.0 * self.q)
                     * np.exp(-self.b1 * big ** self.gamma) * g1)
        return out

    def p2(self, s):
        """Order-2 gap density, vectorized; 0 beyond the support cutoff."""
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        big_s = np.where(s > 0.0, s, 0.0) ** (self.q + 1.0)
        live = (s > 0.0) & (big_s < self.u_max)
        if not live.any():
            return out
        sv = s[live]
        big = big_s[live]
        idx = self._locate(big)
        lo = self.edges[idx]

        h = 0.5 * (big - lo)
        t = lo[:, None] + h[:, None] * (_GL16_X + 1.0)            # (M, 16)
        g1_t = self._c1[idx][:, None] + self._g1_partial(lo[:, None], t)
        frac = self.q / (self.q + 1.0)
        f2 = t ** frac * np.exp(self._e2_exponent(t)) * g1_t
        partial = h * (f2 @ _GL16_W)

        g2 = self._c2[idx] + partial
        out[live] = (self.a * self.a1 * self.a2 / (self.q + 1.0) ** 2
                     * sv ** (3.0 * self.q)
                     * np.exp(-self.b2 * big ** self.eta) * g2)
        return out

    def s_support(self):
        """Upper end of the effective support in s."""
        return self.u_max ** (1.0 / (self.q + 1.0))


def gl_moments(fn, s_hi, powers=(0, 1), n_geom=36, n_lin=44, first_frac=1e-7):
    """Integrals of s^p * fn(s) over [0, s_hi] on graded GL-16 panels.

    fn must accept a 1-D array.  Returns one float per entry of powers.
    """
    edges = graded_edges(s_hi, first_frac=first_frac, n_geom=n_geom, n_lin=n_lin)
    nodes, half = _panel_nodes(edges, _GL16_X)
    vals = fn(nodes.ravel()).reshape(nodes.shape)
    out = []
    for p in powers:
        integ = vals if p == 0 else vals * nodes ** p
        out.append(float(np.sum(half[:, 0] * (integ @ _GL16_W))))
    return out
