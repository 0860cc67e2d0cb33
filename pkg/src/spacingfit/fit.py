"""Least-squares estimation of (q, f) from an empirical spacing histogram.

fit_ps minimizes the squared-density distance between a histogram and the
two-parameter model over the box [0, 1] x [0.05, 1] with a multi-start
Nelder-Mead refinement.  Uncertainty is not reported per fit; instead
ensemble_fit repeats the whole generate/unfold/thin/fit pipeline across an
ensemble and histograms the fitted pairs, which is where the spread of the
estimates actually shows.
"""

import json
from dataclasses import dataclass
from multiprocessing import Pool

import numpy as np
from scipy.optimize import minimize

from .calibration import CalibrationError
from .ensemble import (EnsembleConfig, derive_seed, eigenvalues, sample_beta_hermite,
                       thin, unfold_gaussian, unfold_semicircle)
from .model import _ps_missing_vec, _require_table, ModelError
from .stats import histogram, spacings, StatsError

DEFAULT_Q_STARTS = (0.1, 0.3, 0.5, 0.7, 0.9)
DEFAULT_F_STARTS = (0.2, 0.4, 0.6, 0.8, 1.0)
_BOX = ((0.0, 1.0), (0.05, 1.0))


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class FitResult:
    """Optimum of one multi-start fit.

    `ambiguous` is set when another start converged to an objective within
    110% of the best but more than 0.1 away in either parameter; `trace`
    (optional) lists every start as (q0, f0, q, f, objective, converged).
    """
    q_hat: float
    f_hat: float
    objective: float
    starts: int
    ambiguous: bool
    trace: tuple = None

    def __post_init__(self):
        if not 0.0 <= self.q_hat <= 1.0:
            raise FitError(f"q_hat out of box: {self.q_hat}")
        if not 0.05 <= self.f_hat <= 1.0:
            raise FitError(f"f_hat out of box: {self.f_hat}")
        if self.objective < 0:
            raise FitError("objective must be nonnegative")


@dataclass(frozen=True, eq=False)
class FitDistribution:
    """Joint histogram of fitted (q_hat, f_hat) over an ensemble."""
    q_edges: np.ndarray
    f_edges: np.ndarray
    counts: np.ndarray
    results: tuple
    failures: tuple
    summary: dict

    def __post_init__(self):
        for name in ("q_edges", "f_edges", "counts"):
            arr = np.array(getattr(self, name), dtype=float, copy=True)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if self.counts.shape != (len(self.q_edges) - 1, len(self.f_edges) - 1):
            raise FitError("counts shape does not match the bin edges")
        if int(self.counts.sum()) != len(self.results):
            raise FitError("counts must sum to the number of successful fits")


def _clip_box(x):
    return (min(max(x[0], _BOX[0][0]), _BOX[0][1]),
            min(max(x[1], _BOX[1][0]), _BOX[1][1]))


def fit_ps(hist, table, q_starts=DEFAULT_Q_STARTS, f_starts=DEFAULT_F_STARTS,
           k_max=150, xatol=1e-3, maxiter=600, trace=False):
    """Fit (q, f) to a unit-mean spacing histogram.

    Minimizes sum((density - model)^2) * bin_width over the bins up to the
    last occupied one (structural zeros beyond the data's reach would
    otherwise dominate at small f).  Starts a bounded Nelder-Mead run from
    every (q0, f0) pair in the start grids and keeps the best converged
    optimum; disagreement between well-scoring starts raises the ambiguity
    flag instead of pretending the problem has one basin.
    """
    _require_table(table)
    occupied = np.nonzero(hist.densities > 0)[0]
    if len(occupied) < 10:
        raise FitError(f"histogram has {len(occupied)} nonempty bins, need >= 10")
    upto = occupied[-1] + 1
    grid = hist.bin_centers()[:upto]
    data = hist.densities[:upto]
    width = hist.bin_width

    def objective(x):
        q, f = _clip_box(x)
        model = _ps_missing_vec(grid, q, f, table, k_max)
        return float(np.sum((data - model) ** 2) * width)

    runs = []
    for q0 in q_starts:
        for f0 in f_starts:
            res = minimize(objective, x0=np.array([q0, f0], dtype=float),
                           method="Nelder-Mead", bounds=_BOX,
                           options={"xatol": xatol, "fatol": 1e-10,
                                    "maxiter": maxiter, "maxfev": 2 * maxiter})
            q_opt, f_opt = _clip_box(res.x)
            runs.append((q0, f0, q_opt, f_opt, float(res.fun), bool(res.success)))
    converged = [r for r in runs if r[5]]
    if not converged:
        raise FitError(f"no start converged within {maxiter} iterations")
    best = min(converged, key=lambda r: r[4])
    cutoff = max(1.1 * best[4], best[4] + 1e-12)
    ambiguous = any(r[4] <= cutoff and (abs(r[2] - best[2]) > 0.1 or abs(r[3] - best[3]) > 0.1)
                    for r in converged)
    return FitResult(q_hat=best[2], f_hat=best[3], objective=best[4],
                     starts=len(runs), ambiguous=ambiguous,
                     trace=tuple(runs) if trace else None)


def _fit_task(args):
    (config, index, f, trim, bin_width, s_max, k_max, table, fit_kwargs) = args
    try:
        spectrum = eigenvalues(sample_beta_hermite(config, index))
        if config.beta > 0:
            seq = unfold_semicircle(spectrum, trim=trim)
        else:
            seq = unfold_gaussian(spectrum, trim=trim)
        seq = thin(seq, f, derive_seed(config.master_seed, index, 1))
        hist = histogram(spacings(seq), bin_width=bin_width, s_max=s_max)
        result = fit_ps(hist, table, k_max=k_max, **fit_kwargs)
        return index, result, None
    except (ValueError, ArithmeticError) as exc:
        return index, None, f"{type(exc).__name__}: {exc}"


def ensemble_fit(config, f, table, bin_width=0.1, s_max=5.0, k_max=150,
                 trim=0.05, q_bins=20, f_bins=20, workers=1, **fit_kwargs):
    """Generate, unfold, thin, and fit every spectrum of an ensemble.

    Per-spectrum failures are recorded with their index and excluded from
    the counts, never silently dropped.  Seeds for each index are derived
    from the master seed, so the result is identical for any worker count.
    """
    if config.count < 10:
        raise FitError(f"ensemble fits need count >= 10, got {config.count}")
    if not 0.0 < f <= 1.0:
        raise FitError(f"f must be in (0, 1], got {f}")
    _require_table(table)
    tasks = [(config, index, f, trim, bin_width, s_max, k_max, table, fit_kwargs)
             for index in range(config.count)]
    if workers > 1:
        with Pool(workers) as pool:
            rows = pool.map(_fit_task, tasks, chunksize=1)
    else:
        rows = [_fit_task(t) for t in tasks]
    results, failures = [], []
    for index, result, message in rows:          # already in index order
        if result is None:
            failures.append((index, message))
        else:
            results.append(result)
    if not results:
        raise FitError("every spectrum in the ensemble failed to fit")
    q_edges = np.linspace(0.0, 1.0, q_bins + 1)
    f_edges = np.linspace(0.0, 1.0, f_bins + 1)
    q_hats = np.array([r.q_hat for r in results])
    f_hats = np.array([r.f_hat for r in results])
    counts, _, _ = np.histogram2d(q_hats, f_hats, bins=[q_edges, f_edges])
    q_lo, q_med, q_hi = np.percentile(q_hats, [25, 50, 75])
    f_lo, f_med, f_hi = np.percentile(f_hats, [25, 50, 75])
    summary = {"n_success": len(results), "n_failed": len(failures),
               "q_median": float(q_med), "q_iqr": float(q_hi - q_lo),
               "f_median": float(f_med), "f_iqr": float(f_hi - f_lo),
               "q_sd": float(np.std(q_hats, ddof=1)) if len(results) > 1 else 0.0,
               "f_sd": float(np.std(f_hats, ddof=1)) if len(results) > 1 else 0.0}
    return FitDistribution(q_edges=q_edges, f_edges=f_edges, counts=counts,
                           results=tuple(results), failures=tuple(failures),
                           summary=summary)


# ---------------------------------------------------------------------------
# persistence

def write_fit_result(result, path, provenance=None):
    doc = {"q_hat": result.q_hat, "f_hat": result.f_hat,
           "objective": result.objective, "starts": result.starts,
           "ambiguous": result.ambiguous,
           "trace": [list(r) for r in result.trace] if result.trace else None,
           "provenance": provenance or {}}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_fit_result(path):
    with open(path) as fh:
        doc = json.load(fh)
    trace = tuple(tuple(r) for r in doc["trace"]) if doc.get("trace") else None
    return FitResult(q_hat=doc["q_hat"], f_hat=doc["f_hat"],
                     objective=doc["objective"], starts=doc["starts"],
                     ambiguous=doc["ambiguous"], trace=trace)


def write_fit_distribution(dist, path, summary_path=None, provenance=None):
    lines = []
    for key, val in (provenance or {}).items():
        lines.append(f"# {key}={val}")
    lines.append(f"# q_edges={','.join(repr(float(e)) for e in dist.q_edges)}")
    lines.append(f"# f_edges={','.join(repr(float(e)) for e in dist.f_edges)}")
    lines.append("q_bin,f_bin,count")
    for i in range(dist.counts.shape[0]):
        for j in range(dist.counts.shape[1]):
            lines.append(f"{repr(float(dist.q_edges[i]))},"
                         f"{repr(float(dist.f_edges[j]))},{int(dist.counts[i, j])}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    if summary_path is not None:
        doc = dict(dist.summary)
        doc["failures"] = [{"index": i, "error": m} for i, m in dist.failures]
        with open(summary_path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
