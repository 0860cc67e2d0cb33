"""Variance table calibration and moment-condition coefficient solving.

The Gaussian terms of the composite spacing model need the variance of the
order-n gap as a function of the mixing parameter q.  calibrate_sigma builds
that table by Monte Carlo over tridiagonal ensembles with beta = q; the q = 0
column is the analytic Poisson value n + 1 (a sum of n + 1 independent unit
exponentials).  Lookups interpolate along q with a shape-preserving piecewise
cubic and never interpolate in n.  The interpolant must be shape-preserving:
the analytic q = 0 anchor sits two orders of magnitude above its Monte Carlo
neighbor at high n, and a global cubic overshoots that cliff into negative
variances between knots, which the Gaussian terms cannot absorb.

solve_bn determines the b_n constants of the order-1/2 gap densities from
their defining moment condition <s> = n + 1 (the normalization integral is 1
identically for any b_n > 0, so the mean is the only condition with content;
the normalization residual is reported as a consistency diagnostic).
"""

from dataclasses import dataclass, field
from multiprocessing import Pool

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from . import __version__
from ._quadrature import QuadTables, gl_moments
from .ensemble import EnsembleConfig, sample_beta_hermite, eigenvalues, \
    unfold_semicircle, unfold_gaussian
from .stats import spacings

DEFAULT_Q_GRID = np.round(np.arange(0, 11) / 10.0, 10)
DEFAULT_N_MAX = 150


class CalibrationError(ValueError):
    pass


def printed_b1(q):
    """Closed-form polynomial approximation of b1(q)."""
    return 1.0 / (1.0 + 2.7 * q + 3.5 * q ** 2)


def printed_b2(q):
    """Closed-form polynomial approximation of b2(q)."""
    return 1.0 / (1.0 + 6.7 * q + 1.3 * q ** 2 + 51.0 * q ** 3)


@dataclass(frozen=True, eq=False)
class SigmaTable:
    """Calibrated variance of the order-n gap on a (n, q) grid.

    variances has shape (len(n_range), len(q_grid)).  provenance records the
    generating ensemble, seed, and tool version; consumers refuse a table with
    empty provenance unless it was loaded with an explicit override.
    """
    q_grid: np.ndarray
    n_range: np.ndarray
    variances: np.ndarray
    provenance: dict = field(default_factory=dict)
    unverified_ok: bool = False
    _spline: PchipInterpolator = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        q = np.array(self.q_grid, dtype=float)
        n = np.array(self.n_range, dtype=int)
        v = np.array(self.variances, dtype=float)
        for name, arr in (("q_grid", q), ("n_range", n), ("variances", v)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if v.shape != (len(n), len(q)):
            raise CalibrationError("variances shape must be (len(n_range), len(q_grid))")
        if (np.diff(q) <= 0).any():
            raise CalibrationError("q_grid must be strictly increasing")
        if (v <= 0).any():
            raise CalibrationError("variances must be positive")
        if (np.diff(v, axis=0) < 0).any():
            raise CalibrationError("variances must be nondecreasing in n at fixed q")
        # shape-preserving: interpolated variances stay inside the hull of
        # adjacent knots, so positive knots give a positive interpolant
        object.__setattr__(self, "_spline", PchipInterpolator(q, v, axis=1))

    @property
    def n_max(self):
        return int(self.n_range[-1])

    def variances_at(self, q):
        """Spline-interpolated variances for every n at one q (vectorized lookup)."""
        if not 0.0 <= q <= 1.0:
            raise CalibrationError(f"q must be in [0, 1], got {q}")
        return self._spline(q)


def sigma_lookup(table, n, q):
    """Variance of the order-n gap at mixing parameter q.

    n is integer-indexed (never interpolated); q interpolates with the
    table's monotone piecewise cubic and reproduces the stored knot values.
    """
    n = int(n)
    if n < table.n_range[0] or n > table.n_max:
        raise CalibrationError(f"n={n} outside table range [{table.n_range[0]}, {table.n_max}]")
    return float(table.variances_at(q)[n - int(table.n_range[0])])


def _per_matrix_moments(seed, n_dim, beta, index, n_max, trim):
    # one matrix -> per-n (count, sum, sum of squares) of gap - (n+1)
    cfg = EnsembleConfig(n_dim=n_dim, beta=beta, count=index + 1, master_seed=seed)
    spec = eigenvalues(sample_beta_hermite(cfg, index))
    seq = unfold_semicircle(spec, trim=trim) if beta > 0 else unfold_gaussian(spec, trim=trim)
    pos = seq.positions
    out = np.zeros((n_max - 2, 3))
    for n in range(3, n_max + 1):
        v = pos[n + 1:] - pos[:len(pos) - n - 1] - (n + 1.0)
        out[n - 3] = (len(v), v.sum(), v @ v)
    return out


def _calib_task(args):
    return _per_matrix_moments(*args)


def calibrate_sigma(config, q_grid=None, n_max=DEFAULT_N_MAX, trim=0.05,
                    workers=1, min_count=100_000):
    """Monte Carlo variance table over ensembles with beta = q.

    For each q > 0 in the grid, config.count matrices of size config.n_dim are
    generated (config.beta is ignored; the column's beta is its q), unfolded,
    and pooled into per-n gap variances.  The q = 0 column is set analytically
    to n + 1.  Per-q seeds derive from config.master_seed and the column
    index, and per-matrix contributions are reduced in index order, so the
    result is identical for any worker count.

    Raises CalibrationError listing the deficient (n, q) cells if any pooled
    count falls below min_count.
    """
    q_grid = DEFAULT_Q_GRID if q_grid is None else np.array(q_grid, dtype=float)
    if n_max < 3:
        raise CalibrationError("n_max must be >= 3")
    n_range = np.arange(3, n_max + 1)
    variances = np.empty((len(n_range), len(q_grid)))
    deficient = []

    for qi, q in enumerate(q_grid):
        if q == 0.0:
            variances[:, qi] = n_range + 1.0
            continue
        seed = int(np.random.SeedSequence(config.master_seed, spawn_key=(qi,))
                   .generate_state(1, np.uint64)[0])
        tasks = [(seed, config.n_dim, float(q), idx, n_max, trim)
                 for idx in range(config.count)]
        if workers > 1:
            with Pool(workers) as pool:
                results = pool.map(_calib_task, tasks)
        else:
            results = [_calib_task(t) for t in tasks]
        moments = np.zeros((len(n_range), 3))
        for res in results:          # fixed index order: schedule-invariant
            moments += res
        counts = moments[:, 0]
        short = counts < min_count
        if short.any():
            deficient.extend((int(n), float(q)) for n in n_range[short])
        var = (moments[:, 2] - moments[:, 1] ** 2 / counts) / (counts - 1.0)
        # Monte Carlo noise can locally break the monotone growth in n;
        # enforce it with a running maximum (changes values within noise)
        variances[:, qi] = np.maximum.accumulate(var)

    if deficient:
        cells = ", ".join(f"(n={n}, q={q})" for n, q in deficient[:12])
        raise CalibrationError(f"insufficient statistics in {len(deficient)} cells: {cells}")

    provenance = {
        "generator": "beta-hermite",
        "n_dim": config.n_dim,
        "count_per_q": config.count,
        "master_seed": config.master_seed,
        "trim": trim,
        "n_max": n_max,
        "min_count": min_count,
        "tool_version": __version__,
    }
    return SigmaTable(q_grid=q_grid, n_range=n_range, variances=variances,
                      provenance=provenance)


def save_sigma_table(table, path):
    lines = [f"# {k}={v}" for k, v in table.provenance.items()]
    lines.append("# q_grid=" + ",".join(repr(float(q)) for q in table.q_grid))
    lines.append("n,q,variance")
    for i, n in enumerate(table.n_range):
        for j, q in enumerate(table.q_grid):
            lines.append(f"{n},{repr(float(q))},{repr(float(table.variances[i, j]))}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_sigma_table(path, allow_unverified=False):
    """Read a variance table; refuses one without provenance unless overridden."""
    meta, rows = {}, []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                meta[key.strip()] = val.strip()
            elif not line.startswith("n,"):
                n, q, v = line.split(",")
                rows.append((int(n), float(q), float(v)))
    if not rows:
        raise CalibrationError(f"no table rows in {path}")
    meta.pop("q_grid", None)
    if not meta and not allow_unverified:
        raise CalibrationError(
            f"table {path} has no provenance header; pass allow_unverified to accept it")
    n_vals = np.array(sorted({r[0] for r in rows}))
    q_vals = np.array(sorted({r[1] for r in rows}))
    variances = np.full((len(n_vals), len(q_vals)), np.nan)
    n_pos = {n: i for i, n in enumerate(n_vals)}
    q_pos = {q: j for j, q in enumerate(q_vals)}
    for n, q, v in rows:
        variances[n_pos[n], q_pos[q]] = v
    if np.isnan(variances).any():
        raise CalibrationError(f"table {path} is missing (n, q) cells")
    return SigmaTable(q_grid=q_vals, n_range=n_vals, variances=variances,
                      provenance=meta, unverified_ok=allow_unverified)


# ---------------------------------------------------------------------------
# moment-condition solving for b1, b2

def _mean_of_p1(q, b1):
    tables = QuadTables(q, b1, printed_b2(q))
    norm, mean = gl_moments(tables.p1, tables.s_support())
    return norm, mean


def _mean_of_p2(q, b1, b2):
    tables = QuadTables(q, b1, b2)
    norm, mean = gl_moments(tables.p2, tables.s_support())
    return norm, mean


def _bracket_root(fn, center):
    lo, hi = 0.6 * center, 1.6 * center
    flo, fhi = fn(lo), fn(hi)
    for _ in range(60):
        if flo * fhi <= 0.0:
            return lo, hi
        lo *= 0.7
        hi *= 1.4
        flo, fhi = fn(lo), fn(hi)
    raise CalibrationError("could not bracket the moment-condition root")


def solve_bn(n, q, b1=None):
    """b_n from the mean condition of the order-n gap density.

    With a_n tied to b_n, the normalization integral equals 1 for every
    b_n > 0, so the mean <s> = n + 1 is the root target.  For n = 2 the inner
    integral needs b1; it defaults to the solved (not the polynomial) value
    so the chain is self-consistent.  At q = 0 both constants are exactly 1.
    """
    if n not in (1, 2):
        raise CalibrationError(f"n must be 1 or 2, got {n}")
    if not 0.0 <= q <= 1.0:
        raise CalibrationError(f"q must be in [0, 1], got {q}")
    if q == 0.0:
        return 1.0
    if n == 1:
        fn = lambda b: _mean_of_p1(q, b)[1] - 2.0
        lo, hi = _bracket_root(fn, printed_b1(q))
    else:
        if b1 is None:
            b1 = solve_bn(1, q)
        fn = lambda b: _mean_of_p2(q, b1, b)[1] - 3.0
        lo, hi = _bracket_root(fn, printed_b2(q))
    return float(brentq(fn, lo, hi, xtol=1e-12, rtol=4e-15))


def solve_bn_report(n, q):
    """solve_bn plus the residuals of both moment conditions at the solution."""
    bn = solve_bn(n, q)
    if n == 1:
        norm, mean = _mean_of_p1(q, bn)
        target = 2.0
    else:
        b1 = solve_bn(1, q) if q > 0 else 1.0
        norm, mean = _mean_of_p2(q, b1, bn)
        target = 3.0
    report = {"n": n, "q": q, "bn": bn, "target": "mean",
              "mean_residual": mean - target, "norm_residual": norm - 1.0,
              "printed": printed_b1(q) if n == 1 else printed_b2(q)}
    if abs(report["norm_residual"]) > 1e-2:
        raise CalibrationError(
            f"normalization residual {report['norm_residual']:.3e} inconsistent with "
            f"the moment solution at n={n}, q={q}")
    return report


def build_bn_table(n_points=51):
    """Solved (b1, b2) on a uniform q grid, for the packaged coefficient table."""
    q_grid = np.linspace(0.0, 1.0, n_points)
    b1_vals = np.empty(n_points)
    b2_vals = np.empty(n_points)
    for i, q in enumerate(q_grid):
        b1_vals[i] = solve_bn(1, q)
        b2_vals[i] = solve_bn(2, q, b1=b1_vals[i])
    return q_grid, b1_vals, b2_vals


def save_bn_table(path, q_grid, b1_vals, b2_vals):
    lines = ["# kind=bn_table",
             f"# tool_version={__version__}",
             "# target=mean",
             "q,b1,b2"]
    for q, v1, v2 in zip(q_grid, b1_vals, b2_vals):
        lines.append(f"{repr(float(q))},{repr(float(v1))},{repr(float(v2))}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_bn_table(path):
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("q,"):
                continue
            q, v1, v2 = line.split(",")
            rows.append((float(q), float(v1), float(v2)))
    if not rows:
        raise CalibrationError(f"no rows in coefficient table {path}")
    arr = np.array(rows)
    return arr[:, 0], arr[:, 1], arr[:, 2]
