"""Tridiagonal random-matrix ensembles: sampling, spectra, unfolding, thinning.

The ensemble interpolates Poisson (beta=0) and GOE-like (beta=1) level
statistics with a real symmetric tridiagonal matrix: diagonal entries are
unit-variance Gaussians, off-diagonal entry k (k = 1..N-1) is a chi variate
with nu = beta*(N-k) degrees of freedom divided by sqrt(2).  The mean level
density is the semicircle of radius R = sqrt(2*N*beta), which gives a
closed-form unfolding; beta=0 matrices are diagonal with Gaussian(0, 2)
entries and are unfolded with the Gaussian cumulative instead.

File formats: spectra and observed sequences persist as text with `# key=value`
header lines followed by one level per line (>= 15 significant digits).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigvalsh_tridiagonal
from scipy.special import ndtr


class EnsembleError(ValueError):
    pass


def _readonly(arr):
    out = np.array(arr, dtype=float, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class EnsembleConfig:
    """Size, repulsion parameter, matrix count, and master seed of one ensemble."""
    n_dim: int
    beta: float
    count: int
    master_seed: int

    def __post_init__(self):
        if self.n_dim < 2:
            raise EnsembleError(f"n_dim must be >= 2, got {self.n_dim}")
        if not 0.0 <= self.beta <= 1.0:
            raise EnsembleError(f"beta must be in [0, 1], got {self.beta}")
        if self.count < 1:
            raise EnsembleError(f"count must be >= 1, got {self.count}")
        if not 0 <= int(self.master_seed) < 2 ** 64:
            raise EnsembleError("master_seed must fit in 64 bits")


@dataclass(frozen=True, eq=False)
class TridiagonalMatrix:
    """Real symmetric tridiagonal matrix; beta records ensemble provenance."""
    diag: np.ndarray
    offdiag: np.ndarray
    beta: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "diag", _readonly(self.diag))
        object.__setattr__(self, "offdiag", _readonly(self.offdiag))
        if self.offdiag.shape != (self.diag.shape[0] - 1,):
            raise EnsembleError("offdiag must have length len(diag) - 1")
        if not (np.isfinite(self.diag).all() and np.isfinite(self.offdiag).all()):
            raise EnsembleError("matrix entries must be finite")
        if (self.offdiag < 0).any():
            raise EnsembleError("offdiag entries must be nonnegative")


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Sorted eigenvalues with their (N, beta) provenance."""
    levels: np.ndarray
    n_dim: int
    beta: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "levels", _readonly(self.levels))
        if self.levels.shape != (self.n_dim,):
            raise EnsembleError("levels length must equal n_dim")
        if (np.diff(self.levels) < 0).any():
            raise EnsembleError("levels must be sorted ascending")


@dataclass(frozen=True, eq=False)
class ObservedSequence:
    """Unfolded, possibly thinned level positions with unit mean spacing."""
    positions: np.ndarray
    f_true: float | None = None
    source_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "positions", _readonly(self.positions))
        if len(self.positions) < 2:
            raise EnsembleError("an observed sequence needs at least 2 levels")
        d = np.diff(self.positions)
        if (d <= 0).any():
            raise EnsembleError("positions must be strictly increasing")
        if abs(d.mean() - 1.0) > 1e-12:
            raise EnsembleError("mean consecutive spacing must be 1 within 1e-12")

    def __len__(self):
        return len(self.positions)


def sample_beta_hermite(config, index):
    """Draw matrix number `index` of the ensemble.

    The per-matrix stream is SeedSequence(master_seed, spawn_key=(index,)),
    so matrices are independent and any parallel schedule reproduces them
    bit-identically.  Off-diagonal chi_nu / sqrt(2) variates are drawn as
    sqrt(Gamma(nu/2, scale=1)); nu = 0 is degenerate at 0, which makes the
    beta=0 matrix exactly diagonal.
    """
    if not 0 <= index < config.count:
        raise EnsembleError(f"index {index} outside [0, {config.count})")
    ss = np.random.SeedSequence(config.master_seed, spawn_key=(index,))
    rng = np.random.default_rng(ss)
    diag = rng.standard_normal(config.n_dim)
    nu = config.beta * np.arange(config.n_dim - 1, 0, -1, dtype=float)
    offdiag = np.sqrt(rng.standard_gamma(0.5 * nu))
    return TridiagonalMatrix(diag=diag, offdiag=offdiag, beta=config.beta)


def derive_seed(master_seed, *key):
    """Deterministic child seed for pipeline stage `key` of one run.

    SeedSequence(master_seed, spawn_key=key) hashed to a single uint64.
    Matrix `index` draws use key (index,); downstream consumers add a
    second component, e.g. (index, 1) for thinning, so no stage ever
    shares a stream with another.
    """
    ss = np.random.SeedSequence(master_seed, spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


def eigenvalues(m):
    """All eigenvalues of a tridiagonal matrix, sorted ascending.

    Eigenvalues only (LAPACK sterf path); eigenvectors are never formed.
    """
    if len(m.diag) == 1:
        levels = np.array([m.diag[0]])
    else:
        levels = eigvalsh_tridiagonal(m.diag, m.offdiag)
    return Spectrum(levels=levels, n_dim=len(m.diag), beta=m.beta)


def _strictify(pos, eps=1e-9):
    # clamping can produce ties at the support edge; spread them by a
    # deterministic ladder so the sequence is strictly increasing
    ramp = eps * np.arange(len(pos))
    return np.maximum.accumulate(pos - ramp) + ramp


def _renormalize(pos):
    msp = (pos[-1] - pos[0]) / (len(pos) - 1)
    return pos / msp


def _trim_levels(levels, trim):
    if not 0.0 <= trim < 0.5:
        raise EnsembleError(f"trim must be in [0, 0.5), got {trim}")
    k = int(round(trim * len(levels)))
    out = levels[k:len(levels) - k] if k else levels
    if len(out) < 3:
        raise EnsembleError("trimming leaves fewer than 3 levels")
    return out


def unfold_semicircle(s, trim=0.05):
    """Unfold a beta > 0 spectrum with the closed-form semicircle cumulative.

    Parameters
    ----------
    s : Spectrum
    trim : float
        Fraction of levels dropped at each spectral edge before unfolding,
        where the semicircle approximation is least accurate.

    The cumulative count of the semicircle density of radius R = sqrt(2*N*beta)
    is N_bar(E) = (1/(pi*beta)) * (E*sqrt(R^2-E^2)/2 + (R^2/2)*(arcsin(E/R) + pi/2)).
    Levels outside [-R, R] are clamped to the boundary.  Output positions are
    renormalized to unit mean consecutive spacing.
    """
    if s.beta is None or s.beta <= 0.0:
        raise EnsembleError("unfold_semicircle needs beta > 0 (use unfold_gaussian at beta=0)")
    radius = np.sqrt(2.0 * s.n_dim * s.beta)
    levels = np.clip(_trim_levels(s.levels, trim), -radius, radius)
    ratio = levels / radius
    nbar = (levels * np.sqrt(radius ** 2 - levels ** 2) / 2.0
            + (radius ** 2 / 2.0) * (np.arcsin(ratio) + np.pi / 2.0)) / (np.pi * s.beta)
    pos = _renormalize(_strictify(nbar))
    meta = {"n_dim": s.n_dim, "beta": s.beta, "unfold": "semicircle", "trim": trim}
    return ObservedSequence(positions=pos, f_true=1.0, source_meta=meta)


def unfold_gaussian(s, trim=0.05):
    """Unfold a beta = 0 spectrum with the Gaussian cumulative N * Phi(E).

    The beta=0 matrix is diagonal with independent unit-variance Gaussian
    entries, so this cumulative is exact and the resulting spacings are
    Poissonian.
    """
    if s.beta is None or s.beta != 0.0:
        raise EnsembleError("unfold_gaussian needs beta = 0")
    levels = _trim_levels(s.levels, trim)
    nbar = s.n_dim * ndtr(levels)
    pos = _renormalize(_strictify(nbar))
    meta = {"n_dim": s.n_dim, "beta": s.beta, "unfold": "gaussian", "trim": trim}
    return ObservedSequence(positions=pos, f_true=1.0, source_meta=meta)


def thin(seq, f, seed, exact=True):
    """Keep a random fraction f of the positions and renormalize.

    Removes exactly round(len * (1 - f)) positions chosen uniformly without
    replacement (set exact=False for per-level Bernoulli thinning).  The
    survivors are renormalized to unit mean consecutive spacing and f_true is
    multiplied by f.
    """
    if not 0.0 < f <= 1.0:
        raise EnsembleError(f"f must be in (0, 1], got {f}")
    m = len(seq)
    if m < 3:
        raise EnsembleError("sequence too short to thin")
    rng = np.random.default_rng(np.uint64(seed))
    if exact:
        n_remove = int(round(m * (1.0 - f)))
        if n_remove == 0:
            keep = np.arange(m)
        else:
            removed = rng.choice(m, size=n_remove, replace=False)
            keep = np.setdiff1d(np.arange(m), removed)
    else:
        keep = np.flatnonzero(rng.random(m) < f)
    if len(keep) < 2:
        raise EnsembleError("thinning left fewer than 2 levels")
    pos = _renormalize(seq.positions[keep])
    prior = 1.0 if seq.f_true is None else seq.f_true
    meta = dict(seq.source_meta)
    meta.update({"thin_f": f, "thin_seed": int(seed)})
    return ObservedSequence(positions=pos, f_true=prior * f, source_meta=meta)


# ---------------------------------------------------------------------------
# text persistence: `# key=value` headers, one level per line

def _format_header(meta):
    lines = []
    for key, val in meta.items():
        lines.append(f"# {key}={val!r}" if isinstance(val, str) else f"# {key}={val}")
    return lines


def _parse_header_line(line):
    body = line[1:].strip()
    key, _, val = body.partition("=")
    return key.strip(), val.strip()


def write_spectrum(spectrum, path, extra_meta=None):
    meta = {"kind": "spectrum", "n_dim": spectrum.n_dim, "beta": spectrum.beta}
    meta.update(extra_meta or {})
    lines = _format_header(meta) + [repr(float(v)) for v in spectrum.levels]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_sequence(seq, path, extra_meta=None):
    meta = {"kind": "sequence", "f_true": seq.f_true}
    meta.update(seq.source_meta)
    meta.update(extra_meta or {})
    lines = _format_header(meta) + [repr(float(v)) for v in seq.positions]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _read_levels_file(path):
    meta, values = {}, []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, val = _parse_header_line(line)
                meta[key] = val
            else:
                values.append(float(line))
    return meta, np.array(values)


def _meta_float(meta, key):
    raw = meta.get(key)
    if raw in (None, "None"):
        return None
    return float(raw)


def read_spectrum(path):
    meta, values = _read_levels_file(path)
    n_dim = int(meta.get("n_dim", len(values)))
    return Spectrum(levels=values, n_dim=n_dim, beta=_meta_float(meta, "beta"))


def read_sequence(path):
    meta, values = _read_levels_file(path)
    f_true = _meta_float(meta, "f_true")
    keep = {k: v for k, v in meta.items() if k not in ("kind", "f_true")}
    return ObservedSequence(positions=values, f_true=f_true, source_meta=keep)
