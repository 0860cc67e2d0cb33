"""Order-n spacings, density histograms, moments, and curve distances."""

from dataclasses import dataclass

import numpy as np


class StatsError(ValueError):
    pass


class InsufficientStatistics(StatsError):
    pass


def _readonly(arr):
    out = np.array(arr, dtype=float, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class SpacingSample:
    """Gaps between levels order+1 apart; order 0 is the NNSD sample."""
    order: int
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _readonly(self.values))
        if self.order < 0:
            raise StatsError("order must be >= 0")
        if (self.values <= 0).any():
            raise StatsError("spacing values must be positive")

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True, eq=False)
class SpacingHistogram:
    """Density-normalized histogram on [0, s_max) with uniform bins.

    Values at or beyond s_max are dropped from the bins but kept in
    total_count, so sum(densities) * bin_width is the in-range mass and
    densities stay comparable across heavy-tailed samples.
    """
    bin_width: float
    s_max: float
    densities: np.ndarray
    total_count: int

    def __post_init__(self):
        object.__setattr__(self, "densities", _readonly(self.densities))
        if self.bin_width <= 0:
            raise StatsError("bin_width must be positive")
        if (self.densities < 0).any():
            raise StatsError("densities must be nonnegative")
        if self.densities.sum() * self.bin_width > 1.0 + 1e-12:
            raise StatsError("histogram mass exceeds 1")

    @property
    def n_bins(self):
        return len(self.densities)

    def bin_centers(self):
        return (np.arange(self.n_bins) + 0.5) * self.bin_width


def spacings(seq, order=0):
    """Order-n spacing sample of an observed sequence.

    values[i] = positions[i + order + 1] - positions[i]; the sample has
    len(seq) - order - 1 entries.
    """
    if order < 0:
        raise StatsError("order must be >= 0")
    pos = seq.positions
    if len(pos) < order + 2:
        raise StatsError(f"need at least {order + 2} levels for order {order}")
    return SpacingSample(order=order, values=pos[order + 1:] - pos[:len(pos) - order - 1])


def histogram(sample, bin_width=0.1, s_max=5.0):
    """Density histogram of a spacing sample.

    s_max is snapped down to an exact multiple of bin_width so the bins tile
    [0, s_max) exactly; density in bin j is count_j / (total_count * bin_width).
    """
    if len(sample) == 0:
        raise StatsError("empty sample")
    if bin_width <= 0 or s_max < bin_width:
        raise StatsError("need bin_width > 0 and s_max >= bin_width")
    n_bins = int(round(s_max / bin_width))
    if n_bins * bin_width > s_max + 1e-9 * bin_width:
        n_bins -= 1
    s_max_eff = n_bins * bin_width
    v = sample.values
    inside = v < s_max_eff
    idx = np.clip(np.floor(v[inside] / bin_width).astype(int), 0, n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    dens = counts / (len(v) * bin_width)
    return SpacingHistogram(bin_width=bin_width, s_max=s_max_eff,
                            densities=dens, total_count=len(v))


def chi2_distance(hist, model_curve):
    """Discretized squared L2 distance sum_j (density_j - model_j)^2 * bin_width.

    model_curve holds the model density at the bin centers of hist.  Zero iff
    the curves agree on every bin; its square root is a metric on bin vectors.
    """
    curve = np.asarray(model_curve, dtype=float)
    if curve.shape != hist.densities.shape:
        raise StatsError(f"curve length {curve.shape} != bins {hist.densities.shape}")
    return float(np.sum((hist.densities - curve) ** 2) * hist.bin_width)


def empirical_sigma(samples, min_count=10_000):
    """Pooled sample variance of spacing samples sharing one order.

    Raises InsufficientStatistics when the pooled count is below min_count;
    a variance from too little data would silently poison any table built
    from it.
    """
    samples = list(samples)
    if not samples:
        raise StatsError("no samples")
    order = samples[0].order
    if any(s.order != order for s in samples):
        raise StatsError("samples must share a common order")
    pooled = np.concatenate([s.values for s in samples])
    if len(pooled) < min_count:
        raise InsufficientStatistics(
            f"pooled count {len(pooled)} below floor {min_count} for order {order}")
    return float(np.var(pooled, ddof=1))


# ---------------------------------------------------------------------------
# persistence

def write_histogram(hist, path, extra_meta=None):
    lines = [f"# bin_width={hist.bin_width}", f"# s_max={hist.s_max}",
             f"# total_count={hist.total_count}"]
    for key, val in (extra_meta or {}).items():
        lines.append(f"# {key}={val}")
    lines.append("bin_left,bin_right,density")
    for j, d in enumerate(hist.densities):
        lines.append(f"{repr(j * hist.bin_width)},{repr((j + 1) * hist.bin_width)},{repr(float(d))}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_histogram(path):
    meta, rows = {}, []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                meta[key.strip()] = val.strip()
            elif not line.startswith("bin_left"):
                rows.append([float(x) for x in line.split(",")])
    if not rows:
        raise StatsError(f"no histogram rows in {path}")
    dens = np.array([r[2] for r in rows])
    return SpacingHistogram(bin_width=float(meta["bin_width"]), s_max=float(meta["s_max"]),
                            densities=dens, total_count=int(meta["total_count"]))


def write_sample(sample, path, extra_meta=None):
    lines = [f"# order={sample.order}", f"# count={len(sample)}"]
    for key, val in (extra_meta or {}).items():
        lines.append(f"# {key}={val}")
    lines.extend(repr(float(v)) for v in sample.values)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_sample(path):
    meta, values = {}, []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                meta[key.strip()] = val.strip()
            else:
                values.append(float(line))
    return SpacingSample(order=int(meta.get("order", 0)), values=np.array(values))
