"""Command-line pipeline: generate, unfold, thin, bin, model, calibrate, fit.

Every subcommand maps onto exactly one library operation and communicates
through the documented text formats, so externally produced data can enter
the pipeline at any stage.  Output files carry `#` provenance headers (full
command line, seed, version); rerunning a recorded command reproduces the
file byte for byte.  Exit status is 0 on success, 2 for option errors, 1
for runtime failures, with a machine-readable `error kind=... message=...`
line on stderr.
"""

import json
import os
import shlex
import sys
from dataclasses import dataclass, fields
from multiprocessing import Pool

import numpy as np

from . import __version__
from .calibration import (CalibrationError, calibrate_sigma, load_sigma_table,
                          save_sigma_table, solve_bn_report)
from .ensemble import (EnsembleConfig, eigenvalues, read_sequence,
                       read_spectrum, sample_beta_hermite, thin, unfold_gaussian,
                       unfold_semicircle, write_sequence, write_spectrum)
from .fit import ensemble_fit, fit_ps, write_fit_distribution, write_fit_result
from .model import (ModelParams, default_sigma_table, model_curve, read_curve,
                    write_curve)
from .stats import (chi2_distance, histogram, read_histogram, read_sample,
                    spacings, write_histogram, write_sample)

COMMANDS = ("generate", "unfold", "thin", "spacings", "hist", "model", "chi2",
            "calibrate-sigma", "solve-bn", "fit", "ensemble-fit")


class UsageError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """One fully validated invocation; None means not applicable."""
    command: str
    n_dim: int = None
    beta: float = None
    count: int = None
    seed: int = None
    f: float = None
    q: float = None
    n: int = None
    order: int = 0
    trim: float = 0.05
    bin_width: float = 0.1
    s_max: float = 5.0
    step: float = 0.01
    k_max: int = 150
    n_max: int = 150
    min_count: int = 100_000
    q_grid: tuple = None
    q_bins: int = 20
    f_bins: int = 20
    xatol: float = 1e-3
    workers: int = 1
    method: str = "auto"
    input: str = None
    curve: str = None
    table: str = None
    out: str = None
    summary_out: str = None
    trace: bool = False
    gnuplot: bool = False
    allow_unverified: bool = False


# which options each subcommand accepts, and which of those are required
_OPTS = {
    "generate": ({"n_dim", "beta", "count", "seed", "out", "workers"},
                 {"n_dim", "beta", "count", "seed", "out"}),
    "unfold": ({"input", "out", "trim", "method"}, {"input", "out"}),
    "thin": ({"input", "out", "f", "seed"}, {"input", "out", "f", "seed"}),
    "spacings": ({"input", "out", "order"}, {"input", "out"}),
    "hist": ({"input", "out", "bin_width", "s_max", "gnuplot"}, {"input", "out"}),
    "model": ({"q", "f", "s_max", "step", "k_max", "table", "out", "gnuplot",
               "allow_unverified"}, {"q", "f", "out"}),
    "chi2": ({"input", "curve"}, {"input", "curve"}),
    "calibrate-sigma": ({"n_dim", "count", "seed", "out", "q_grid", "n_max",
                         "trim", "min_count", "workers"},
                        {"n_dim", "count", "seed", "out"}),
    "solve-bn": ({"n", "q", "out"}, {"n", "q"}),
    "fit": ({"input", "table", "out", "k_max", "xatol", "trace",
             "allow_unverified"}, {"input", "out"}),
    "ensemble-fit": ({"n_dim", "beta", "count", "seed", "f", "table", "out",
                      "summary_out", "bin_width", "s_max", "k_max", "trim",
                      "q_bins", "f_bins", "xatol", "workers",
                      "allow_unverified"},
                     {"n_dim", "beta", "count", "seed", "f", "out"}),
}

# option name -> (flag, parser, help)
_SPEC = {
    "n_dim": ("--n", int, "matrix dimension N"),
    "beta": ("--beta", float, "Dyson index in [0, 1]"),
    "count": ("--count", int, "number of matrices"),
    "seed": ("--seed", int, "master seed (uint64)"),
    "f": ("--f", float, "observed fraction in (0, 1]"),
    "q": ("--q", float, "mixing parameter in [0, 1]"),
    "n": ("--order-n", int, "coefficient order (1 or 2)"),
    "order": ("--order", int, "spacing order k (0 = nearest neighbor)"),
    "trim": ("--trim", float, "fraction trimmed from each spectrum edge"),
    "bin_width": ("--bin-width", float, "histogram bin width"),
    "s_max": ("--smax", float, "histogram/curve upper edge"),
    "step": ("--step", float, "curve grid step"),
    "k_max": ("--kmax", int, "series truncation order"),
    "n_max": ("--nmax", int, "largest calibrated order n"),
    "min_count": ("--min-count", int, "minimum pooled spacings per (n, q) cell"),
    "q_grid": ("--q-grid", str, "comma-separated q values to calibrate"),
    "q_bins": ("--q-bins", int, "q bins of the joint fit histogram"),
    "f_bins": ("--f-bins", int, "f bins of the joint fit histogram"),
    "xatol": ("--xatol", float, "simplex parameter tolerance"),
    "workers": ("--workers", int, "process count (never changes outputs)"),
    "method": ("--method", str, "unfolding density: auto|semicircle|gaussian"),
    "input": ("--in", str, "input file"),
    "curve": ("--curve", str, "model curve file"),
    "table": ("--table", str, "variance table file (default: packaged)"),
    "out": ("--out", str, "output file or directory"),
    "summary_out": ("--summary-out", str, "JSON summary path"),
    "trace": ("--trace", bool, "record every start in the fit result"),
    "gnuplot": ("--gnuplot", bool, "emit a plot script next to the output"),
    "allow_unverified": ("--allow-unverified", bool,
                         "accept variance tables without provenance"),
}
_FLAG_TO_OPT = {flag: name for name, (flag, _, _) in _SPEC.items()}


def _parse_value(name, raw):
    kind = _SPEC[name][1]
    if kind is bool:
        if isinstance(raw, bool):
            return raw
        if raw.lower() in ("1", "true", "yes"):
            return True
        if raw.lower() in ("0", "false", "no"):
            return False
        raise UsageError(f"{_SPEC[name][0]} expects a boolean, got {raw!r}")
    try:
        return kind(raw)
    except ValueError:
        raise UsageError(f"{_SPEC[name][0]} expects {kind.__name__}, got {raw!r}") from None


def _parse_flags(command, argv):
    allowed, _ = _OPTS[command]
    values, config_path = {}, None
    i = 0
    while i < len(argv):
        flag = argv[i]
        if flag == "--config":
            if i + 1 >= len(argv):
                raise UsageError("--config expects a path")
            config_path = argv[i + 1]
            i += 2
            continue
        if flag not in _FLAG_TO_OPT:
            raise UsageError(f"unknown option {flag!r} for {command!r}")
        name = _FLAG_TO_OPT[flag]
        if name not in allowed:
            raise UsageError(f"option {flag!r} does not apply to {command!r}")
        if _SPEC[name][1] is bool:
            values[name] = True
            i += 1
            continue
        if i + 1 >= len(argv):
            raise UsageError(f"{flag} expects a value")
        values[name] = _parse_value(name, argv[i + 1])
        i += 2
    return values, config_path


def _read_config_file(command, path):
    allowed, _ = _OPTS[command]
    values = {}
    try:
        lines = open(path).read().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from None
    for ln, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if not sep or not key:
            raise UsageError(f"{path}:{ln}: expected key=value, got {line!r}")
        if key not in _SPEC:
            raise UsageError(f"{path}:{ln}: unknown key {key!r}")
        if key not in allowed:
            raise UsageError(f"{path}:{ln}: key {key!r} does not apply to {command!r}")
        values[key] = _parse_value(key, raw)
    return values


def _validate(config):
    _, required = _OPTS[config.command]
    for name in sorted(required):
        if getattr(config, name) is None:
            raise UsageError(f"{config.command} requires {_SPEC[name][0]}")
    checks = (("beta", lambda v: 0.0 <= v <= 1.0, "in [0, 1]"),
              ("f", lambda v: 0.0 < v <= 1.0, "in (0, 1]"),
              ("q", lambda v: 0.0 <= v <= 1.0, "in [0, 1]"),
              ("n_dim", lambda v: v >= 2, ">= 2"),
              ("count", lambda v: v >= 1, ">= 1"),
              ("seed", lambda v: 0 <= v < 2 ** 64, "a uint64"),
              ("order", lambda v: v >= 0, ">= 0"),
              ("trim", lambda v: 0.0 <= v < 0.5, "in [0, 0.5)"),
              ("bin_width", lambda v: v > 0, "> 0"),
              ("s_max", lambda v: v > 0, "> 0"),
              ("step", lambda v: v > 0, "> 0"),
              ("k_max", lambda v: v >= 3, ">= 3"),
              ("n_max", lambda v: v >= 3, ">= 3"),
              ("min_count", lambda v: v >= 1, ">= 1"),
              ("q_bins", lambda v: v >= 1, ">= 1"),
              ("f_bins", lambda v: v >= 1, ">= 1"),
              ("xatol", lambda v: v > 0, "> 0"),
              ("workers", lambda v: v >= 1, ">= 1"),
              ("n", lambda v: v in (1, 2), "1 or 2"))
    for name, ok, bound in checks:
        value = getattr(config, name)
        if value is not None and not ok(value):
            raise UsageError(f"{_SPEC[name][0]} must be {bound}, got {value}")
    if config.method not in ("auto", "semicircle", "gaussian"):
        raise UsageError(f"--method must be auto|semicircle|gaussian, got {config.method}")
    return config


def load_config(command, argv):
    """Build a validated RunConfig from flags plus an optional key=value file.

    Flags override file values; keys unknown to the subcommand are rejected
    rather than ignored.
    """
    if command not in COMMANDS:
        raise UsageError(f"unknown subcommand {command!r}")
    flag_values, config_path = _parse_flags(command, argv)
    values = {}
    if config_path is not None:
        values.update(_read_config_file(command, config_path))
    values.update(flag_values)
    if "q_grid" in values and isinstance(values["q_grid"], str):
        try:
            values["q_grid"] = tuple(float(tok) for tok in values["q_grid"].split(","))
        except ValueError:
            raise UsageError(f"--q-grid expects comma-separated reals") from None
    field_names = {f.name for f in fields(RunConfig)}
    assert set(values) <= field_names
    return _validate(RunConfig(command=command, **values))


def _provenance(argv, extra=None):
    # the worker count steers execution, not content: it is stripped from
    # the recorded command so parallel and serial runs emit identical bytes
    recorded, skip = [], False
    for token in argv:
        if skip:
            skip = False
            continue
        if token == "--workers":
            skip = True
            continue
        recorded.append(token)
    meta = {"command": shlex.join(["spacingfit"] + recorded),
            "version": __version__}
    meta.update(extra or {})
    return meta


def _load_table(config):
    if config.table is None:
        return default_sigma_table()
    return load_sigma_table(config.table, allow_unverified=config.allow_unverified)


def _gnuplot_script(out_path, kind):
    lines = ["set datafile separator ','", "set xlabel 's'", "set ylabel 'P(s)'"]
    if kind == "hist":
        lines.append(f"plot '{out_path}' using (($1+$2)/2):3 with boxes title 'data'")
    else:
        lines.append(f"plot '{out_path}' using 1:2 with lines title 'model'")
    with open(str(out_path) + ".gnuplot", "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _eig_task(args):
    config, index = args
    return eigenvalues(sample_beta_hermite(config, index))


def _cmd_generate(config, argv):
    ens = EnsembleConfig(n_dim=config.n_dim, beta=config.beta,
                         count=config.count, master_seed=config.seed)
    os.makedirs(config.out, exist_ok=True)
    tasks = [(ens, index) for index in range(config.count)]
    if config.workers > 1:
        with Pool(config.workers) as pool:
            spectra = pool.map(_eig_task, tasks, chunksize=1)
    else:
        spectra = [_eig_task(t) for t in tasks]
    width = max(4, len(str(config.count - 1)))
    for index, spectrum in enumerate(spectra):
        meta = _provenance(argv, {"seed": config.seed, "index": index})
        write_spectrum(spectrum, os.path.join(config.out, f"spectrum_{index:0{width}d}.txt"),
                       extra_meta=meta)
    return 0


def _cmd_unfold(config, argv):
    spectrum = read_spectrum(config.input)
    method = config.method
    if method == "auto":
        if spectrum.beta is None:
            raise UsageError("spectrum file lacks beta; pass --method explicitly")
        method = "semicircle" if spectrum.beta > 0 else "gaussian"
    unfolder = unfold_semicircle if method == "semicircle" else unfold_gaussian
    seq = unfolder(spectrum, trim=config.trim)
    write_sequence(seq, config.out, extra_meta=_provenance(argv))
    return 0


def _cmd_thin(config, argv):
    seq = thin(read_sequence(config.input), config.f, config.seed)
    write_sequence(seq, config.out,
                   extra_meta=_provenance(argv, {"seed": config.seed}))
    return 0


def _cmd_spacings(config, argv):
    sample = spacings(read_sequence(config.input), order=config.order)
    write_sample(sample, config.out, extra_meta=_provenance(argv))
    return 0


def _cmd_hist(config, argv):
    hist = histogram(read_sample(config.input), bin_width=config.bin_width,
                     s_max=config.s_max)
    write_histogram(hist, config.out, extra_meta=_provenance(argv))
    if config.gnuplot:
        _gnuplot_script(config.out, "hist")
    return 0


def _cmd_model(config, argv):
    table = _load_table(config)
    params = ModelParams(q=config.q, f=config.f)
    curve = model_curve(params, (config.s_max, config.step), table=table,
                        k_max=config.k_max)
    write_curve(curve, config.out, k_max=config.k_max,
                extra_meta=_provenance(argv))
    if config.gnuplot:
        _gnuplot_script(config.out, "curve")
    return 0


def _cmd_chi2(config, argv):
    hist = read_histogram(config.input)
    curve = read_curve(config.curve)
    centers = hist.bin_centers()
    lo, hi = curve.grid[0], curve.grid[-1]
    if centers[0] < lo - 1e-9 or centers[-1] > hi + 1e-9:
        raise UsageError("curve grid does not cover the histogram bin centers")
    values = np.interp(centers, curve.grid, curve.values)
    print(f"chi2={chi2_distance(hist, values)!r}")
    return 0


def _cmd_calibrate_sigma(config, argv):
    ens = EnsembleConfig(n_dim=config.n_dim, beta=1.0, count=config.count,
                         master_seed=config.seed)
    q_grid = None if config.q_grid is None else np.array(config.q_grid, dtype=float)
    table = calibrate_sigma(ens, q_grid=q_grid, n_max=config.n_max,
                            trim=config.trim, workers=config.workers,
                            min_count=config.min_count)
    table.provenance.update(_provenance(argv))
    save_sigma_table(table, config.out)
    return 0


def _cmd_solve_bn(config, argv):
    report = solve_bn_report(config.n, config.q)
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if config.out:
        with open(config.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_fit(config, argv):
    table = _load_table(config)
    hist = read_histogram(config.input)
    result = fit_ps(hist, table, k_max=config.k_max, xatol=config.xatol,
                    trace=config.trace)
    provenance = _provenance(argv, {"input": config.input,
                                    "table": dict(table.provenance)})
    write_fit_result(result, config.out, provenance=provenance)
    return 0


def _cmd_ensemble_fit(config, argv):
    table = _load_table(config)
    ens = EnsembleConfig(n_dim=config.n_dim, beta=config.beta,
                         count=config.count, master_seed=config.seed)
    dist = ensemble_fit(ens, config.f, table, bin_width=config.bin_width,
                        s_max=config.s_max, k_max=config.k_max,
                        trim=config.trim, q_bins=config.q_bins,
                        f_bins=config.f_bins, workers=config.workers,
                        xatol=config.xatol)
    write_fit_distribution(dist, config.out, summary_path=config.summary_out,
                           provenance=_provenance(argv, {"seed": config.seed}))
    return 0


_HANDLERS = {
    "generate": _cmd_generate,
    "unfold": _cmd_unfold,
    "thin": _cmd_thin,
    "spacings": _cmd_spacings,
    "hist": _cmd_hist,
    "model": _cmd_model,
    "chi2": _cmd_chi2,
    "calibrate-sigma": _cmd_calibrate_sigma,
    "solve-bn": _cmd_solve_bn,
    "fit": _cmd_fit,
    "ensemble-fit": _cmd_ensemble_fit,
}


def _usage(stream):
    stream.write("usage: spacingfit [--version] <subcommand> [options] [--config FILE]\n"
                 f"subcommands: {', '.join(COMMANDS)}\n"
                 "options are subcommand-specific; flags override --config values\n")


def _print_version():
    print(f"spacingfit {__version__}")
    try:
        table = default_sigma_table()
        for key, val in sorted(table.provenance.items()):
            print(f"sigma_table.{key}={val}")
    except (OSError, CalibrationError, ModuleNotFoundError):
        print("sigma_table=none")


def dispatch(argv):
    """Run one subcommand; returns the process exit status."""
    if not argv or argv[0] in ("-h", "--help"):
        _usage(sys.stdout)
        return 0 if argv else 2
    if argv[0] == "--version":
        _print_version()
        return 0
    try:
        config = load_config(argv[0], argv[1:])
    except UsageError as exc:
        sys.stderr.write(f"error kind=usage message={str(exc)!r}\n")
        _usage(sys.stderr)
        return 2
    try:
        return _HANDLERS[config.command](config, argv)
    except UsageError as exc:
        sys.stderr.write(f"error kind=usage message={str(exc)!r}\n")
        return 2
    except ValueError as exc:
        sys.stderr.write(f"error kind={type(exc).__name__} message={str(exc)!r}\n")
        return 1
    except OSError as exc:
        sys.stderr.write(f"error kind=OSError message={str(exc)!r}\n")
        return 1


def main(argv=None):
    sys.exit(dispatch(sys.argv[1:] if argv is None else list(argv)))
