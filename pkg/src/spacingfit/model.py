"""The two-parameter observed-spacing density and its ingredients.

The observed nearest-neighbor spacing density for a unit-mean sequence with
mixing parameter q and observed fraction f is a geometric mixture over the
order-n gap densities of the complete sequence, all evaluated at u = s / f:

    P(s; q, f) = P_brody(u) + sum_{n>=1} (1-f)^n p(n, u)

The n = 1 and n = 2 terms are the quadrature-defined generalizations of the
Brody form (see _quadrature); terms n >= 3 use a Gaussian stand-in with mean
n + 1 and a calibrated variance looked up from a SigmaTable.  The series is
truncated at k_max (default 150) and terms with (1-f)^n < 1e-16 are skipped.
No overall 1/f factor appears: the geometric weights alone make the density
normalized with unit mean (sum (1-f)^n = 1/f and sum (1-f)^n (n+1) = 1/f^2).

The b1, b2 constants inside p(1, s) and p(2, s) are the mean-condition
solutions shipped in data/bn_table.csv (see calibration.solve_bn); the
polynomial approximations returned by brody_coefficients are kept for
reference and cross-checks but are not accurate enough for the <s> = n + 1
moment identities this module guarantees.
"""

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np
from scipy.interpolate import CubicSpline

from ._quadrature import QuadTables, brody_b
from .calibration import (load_bn_table, load_sigma_table, printed_b1, printed_b2,
                          sigma_lookup)
from .stats import SpacingSample

_WEIGHT_FLOOR = 1e-16


class ModelError(ValueError):
    pass


def _readonly(arr):
    out = np.array(arr, dtype=float, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class ModelParams:
    """Mixing parameter q in [0, 1] and observed fraction f in (0, 1]."""
    q: float
    f: float

    def __post_init__(self):
        if not 0.0 <= self.q <= 1.0:
            raise ModelError(f"q must be in [0, 1], got {self.q}")
        if not 0.0 < self.f <= 1.0:
            raise ModelError(f"f must be in (0, 1], got {self.f}")


@dataclass(frozen=True)
class BrodyCoefficients:
    """Closed-form constants of the Brody family and its order-1/2 extensions."""
    a: float
    b: float
    a1: float
    b1: float
    a2: float
    b2: float


@dataclass(frozen=True, eq=False)
class ModelCurve:
    """Model density sampled on an ascending grid."""
    grid: np.ndarray
    values: np.ndarray
    params: ModelParams

    def __post_init__(self):
        object.__setattr__(self, "grid", _readonly(self.grid))
        object.__setattr__(self, "values", _readonly(self.values))
        if self.grid.shape != self.values.shape:
            raise ModelError("grid and values must have matching shapes")
        if (np.diff(self.grid) <= 0).any():
            raise ModelError("grid must be strictly ascending")
        if (self.values < -1e-12).any():
            raise ModelError("curve values must be nonnegative")


def brody_coefficients(q):
    """All six closed-form constants at mixing parameter q.

    b comes from the Gamma-function expression that gives the Brody density
    unit mean; b1 and b2 are the fitted polynomial approximations (the
    mean-exact values used inside p1/p2 differ from these by up to ~13%;
    see calibration.solve_bn).
    """
    if not 0.0 <= q <= 1.0:
        raise ModelError(f"q must be in [0, 1], got {q}")
    b = brody_b(q)
    b1 = printed_b1(q)
    b2 = printed_b2(q)
    return BrodyCoefficients(a=(q + 1.0) * b, b=b, a1=(2.0 * q + 1.0) * b1, b1=b1,
                             a2=(3.0 * q + 1.0) * b2, b2=b2)


def _brody_vec(s, q):
    b = brody_b(q)
    s = np.asarray(s, dtype=float)
    return (q + 1.0) * b * s ** q * np.exp(-b * s ** (q + 1.0))


def brody_ps(s, q):
    """Brody density a * s^q * exp(-b * s^(q+1)); Poisson at q=0, Wigner at q=1."""
    if not 0.0 <= q <= 1.0:
        raise ModelError(f"q must be in [0, 1], got {q}")
    if np.isscalar(s) or np.ndim(s) == 0:
        if s < 0:
            raise ModelError("s must be >= 0")
        return float(_brody_vec(s, q))
    return _brody_vec(s, q)


@lru_cache(maxsize=1)
def _bn_splines():
    path = resources.files("spacingfit").joinpath("data/bn_table.csv")
    with resources.as_file(path) as p:
        q_grid, b1_vals, b2_vals = load_bn_table(p)
    return CubicSpline(q_grid, b1_vals), CubicSpline(q_grid, b2_vals)


def solved_bn(q):
    """Mean-exact (b1, b2) at q, interpolated from the packaged table."""
    s1, s2 = _bn_splines()
    return float(s1(q)), float(s2(q))


@lru_cache(maxsize=128)
def _tables(q):
    b1, b2 = solved_bn(q)
    return QuadTables(q, b1, b2)


def p1(s, q):
    """Order-1 gap density at s (absolute quadrature accuracy ~1e-10)."""
    if not 0.0 <= q <= 1.0:
        raise ModelError(f"q must be in [0, 1], got {q}")
    tables = _tables(q)
    if np.isscalar(s) or np.ndim(s) == 0:
        if s < 0:
            raise ModelError("s must be >= 0")
        return float(tables.p1(np.array([s]))[0])
    return tables.p1(np.asarray(s, dtype=float))


def p2(s, q):
    """Order-2 gap density at s (absolute quadrature accuracy ~1e-10)."""
    if not 0.0 <= q <= 1.0:
        raise ModelError(f"q must be in [0, 1], got {q}")
    tables = _tables(q)
    if np.isscalar(s) or np.ndim(s) == 0:
        if s < 0:
            raise ModelError("s must be >= 0")
        return float(tables.p2(np.array([s]))[0])
    return tables.p2(np.asarray(s, dtype=float))


def _require_table(table):
    if not table.provenance and not table.unverified_ok:
        raise ModelError("refusing a variance table without provenance "
                         "(load it with allow_unverified to override)")


def gaussian_term(n, s, q, table):
    """Gaussian stand-in for the order-n gap density, n >= 3.

    Mean n + 1 and calibrated variance from the table; used unnormalized on
    the half line (the mass below s = 0 is a documented approximation).
    """
    if n < 3:
        raise ModelError(f"gaussian terms start at n = 3, got {n}")
    if s < 0:
        raise ModelError("s must be >= 0")
    _require_table(table)
    var = sigma_lookup(table, n, q)
    return float(np.exp(-(s - (n + 1.0)) ** 2 / (2.0 * var)) / np.sqrt(2.0 * np.pi * var))


def _series_length(f, k_max):
    # largest n with (1-f)^n >= the weight floor, capped at k_max
    if f == 1.0:
        return 0
    return min(k_max, int(np.floor(np.log(_WEIGHT_FLOOR) / np.log1p(-f))))


def _ps_missing_vec(s, q, f, table, k_max):
    u = np.asarray(s, dtype=float) / f
    out = _brody_vec(u, q)
    n_top = _series_length(f, k_max)
    if n_top >= 1:
        out = out + (1.0 - f) * _tables(q).p1(u)
    if n_top >= 2:
        out = out + (1.0 - f) ** 2 * _tables(q).p2(u)
    if n_top >= 3:
        if n_top > table.n_max:
            raise ModelError(f"series needs n up to {n_top} but table stops at {table.n_max}")
        nn = np.arange(3, n_top + 1, dtype=float)
        weights = (1.0 - f) ** nn
        var = table.variances_at(q)[:n_top - 2]
        norm = weights / np.sqrt(2.0 * np.pi * var)
        z = (u[None, :] - (nn[:, None] + 1.0)) ** 2 / (2.0 * var[:, None])
        out = out + norm @ np.exp(-z)
    return out


def ps_missing(s, params, table, k_max=150):
    """Observed-spacing density P(s; q, f) with the series truncated at k_max."""
    if k_max < 3:
        raise ModelError(f"k_max must be >= 3, got {k_max}")
    _require_table(table)
    if np.isscalar(s) or np.ndim(s) == 0:
        if s < 0:
            raise ModelError("s must be >= 0")
        return float(_ps_missing_vec(np.array([s]), params.q, params.f, table, k_max)[0])
    return _ps_missing_vec(np.asarray(s, dtype=float), params.q, params.f, table, k_max)


def model_curve(params, grid_spec, table=None, k_max=150):
    """ps_missing evaluated on a grid, with the per-q quadrature tables reused.

    grid_spec is either an ascending array of s values or a (s_max, step)
    pair expanded to step/2, 3*step/2, ... (bin centers).
    """
    if table is None:
        table = default_sigma_table()
    if isinstance(grid_spec, tuple):
        s_max, step = grid_spec
        grid = (np.arange(int(round(s_max / step))) + 0.5) * step
    else:
        grid = np.asarray(grid_spec, dtype=float)
    if grid.ndim != 1 or len(grid) == 0:
        raise ModelError("grid must be a nonempty 1-D array")
    if (grid < 0).any():
        raise ModelError("grid must be nonnegative")
    _require_table(table)
    values = _ps_missing_vec(grid, params.q, params.f, table, k_max)
    return ModelCurve(grid=grid, values=np.maximum(values, 0.0), params=params)


def _sampling_reach(params, table, k_max):
    # s beyond which the remaining model mass is < ~1e-6
    q, f = params.q, params.f
    b = brody_b(q)
    reach = (18.0 / b) ** (1.0 / (q + 1.0))          # brody/p1/p2 net tails
    n_top = _series_length(f, k_max)
    if n_top >= 3:
        n_top = min(n_top, table.n_max)
        n_tail = min(n_top, int(np.ceil(np.log(5e-7) / np.log1p(-f))))
        n_tail = max(n_tail, 3)
        var = table.variances_at(q)[n_tail - 3]
        reach = max(reach, n_tail + 1.0 + 6.0 * np.sqrt(var))
    return f * reach


def sample_spacings(params, count, seed, table, k_max=150):
    """Draw spacings from the model by inverse-CDF sampling.

    The cumulative is built on a graded 4096-point grid covering all but
    ~1e-6 of the mass, inverted by monotone linear interpolation, and fed
    uniform variates from a generator seeded with `seed`; fixed seeds give
    bit-identical samples.
    """
    if count < 1:
        raise ModelError(f"count must be >= 1, got {count}")
    _require_table(table)
    s_hi = _sampling_reach(params, table, k_max)
    grid = s_hi * np.linspace(0.0, 1.0, 4096) ** 1.35
    dens = _ps_missing_vec(grid, params.q, params.f, table, k_max)
    steps = 0.5 * (dens[1:] + dens[:-1]) * np.diff(grid)
    cdf = np.concatenate(([0.0], np.cumsum(steps)))
    if (np.diff(cdf) < -1e-12).any():
        raise ModelError("cumulative of the model density is not monotone")
    cdf = np.maximum.accumulate(cdf)
    if cdf[-1] <= 0.0:
        raise ModelError("model density integrates to zero on the sampling grid")
    cdf /= cdf[-1]
    rng = np.random.default_rng(np.uint64(seed))
    draws = np.interp(rng.random(count), cdf, grid)
    return SpacingSample(order=0, values=np.maximum(draws, 1e-12))


@lru_cache(maxsize=1)
def default_sigma_table():
    """The packaged calibrated variance table."""
    path = resources.files("spacingfit").joinpath("data/sigma_table.csv")
    with resources.as_file(path) as p:
        return load_sigma_table(p)


# ---------------------------------------------------------------------------
# persistence

def write_curve(curve, path, k_max=150, extra_meta=None):
    lines = [f"# q={curve.params.q}", f"# f={curve.params.f}", f"# k_max={k_max}",
             "# tol_p1=1e-8", "# tol_p2=1e-6"]
    for key, val in (extra_meta or {}).items():
        lines.append(f"# {key}={val}")
    lines.append("s,density")
    for s, v in zip(curve.grid, curve.values):
        lines.append(f"{repr(float(s))},{repr(float(v))}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_curve(path):
    meta, rows = {}, []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                meta[key.strip()] = val.strip()
            elif not line.startswith("s,"):
                s, v = line.split(",")
                rows.append((float(s), float(v)))
    if not rows:
        raise ModelError(f"no curve rows in {path}")
    arr = np.array(rows)
    params = ModelParams(q=float(meta["q"]), f=float(meta["f"]))
    return ModelCurve(grid=arr[:, 0], values=arr[:, 1], params=params)
