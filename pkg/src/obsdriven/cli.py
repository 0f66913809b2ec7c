"""Command-line interface.

    obsdriven {simulate,fit,diagnose,select,verify} --config CONFIG.json
              [--seed N] [--threads N] [--force] [--out DIR]

Randomness: ``--seed`` (or the config ``seed``, default 0) seeds one
``numpy.random.SeedSequence``; its spawned children feed, in order, the
simulated path, multistart perturbations, PIT randomization, the
coupled-chain contraction estimate and the mixing check.

Exit codes: 0 success, 2 stability refusal, 3 I/O error, 4 parse or
configuration error, 5 fitted model does not match the configuration.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
from importlib import resources
from pathlib import Path
import sys
import warnings

import jsonschema
import numpy as np

from obsdriven import __version__
from obsdriven.data import ParseError, read_series_csv
from obsdriven.dynamics import check_stationarity, dynamics_from_dict
from obsdriven.expfamily import FamilySpec, check_observations
from obsdriven.exceptions import (
    InvalidObservationError,
    InvalidParameterError,
    NonContractingError,
    ObsDrivenError,
)
from obsdriven.simulate import ModelSpec, gmc_estimate, mixing_bound_check, simulate_path

EXIT_OK = 0
EXIT_UNSTABLE = 2
EXIT_IO = 3
EXIT_PARSE = 4
EXIT_MISMATCH = 5

# child stream indices of the root SeedSequence
STREAM_SIMULATE, STREAM_FIT, STREAM_PIT, STREAM_GMC, STREAM_MIXING = range(5)


class CLIError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def load_schema():
    text = resources.files("obsdriven").joinpath("schemas/config.schema.json").read_text()
    return json.loads(text)


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise CLIError(f"cannot read config: {exc}", EXIT_IO) from None
    except json.JSONDecodeError as exc:
        raise CLIError(f"config is not valid JSON (line {exc.lineno}): {exc.msg}", EXIT_PARSE) from None
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    try:
        jsonschema.validate(cfg, load_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise CLIError(f"invalid config at {where}: {exc.message}", EXIT_PARSE) from None


def _streams(seed: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(5)]


def _write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, allow_nan=False)
        fh.write("\n")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _clean(v):
    """JSON-safe copy with non-finite floats replaced by None."""
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, (float, np.floating)):
        return float(v) if math.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def _fit_config(cfg: dict, threads: int):
    from obsdriven.inference import FitConfig

    d = dict(cfg.get("fit", {}))
    d["threads"] = threads
    try:
        return FitConfig.from_dict(d)
    except (InvalidParameterError, TypeError) as exc:
        raise CLIError(f"invalid fit settings: {exc}", EXIT_PARSE) from None


def _model(cfg: dict) -> ModelSpec:
    try:
        return ModelSpec.from_dict(cfg["model"])
    except (ObsDrivenError, KeyError, TypeError, ValueError) as exc:
        raise CLIError(f"invalid model: {exc}", EXIT_PARSE) from None


def _input(cfg: dict, family: FamilySpec) -> np.ndarray:
    path = cfg.get("input_path")
    if path is None:
        raise CLIError("config needs input_path", EXIT_PARSE)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            y = read_series_csv(path)
        return check_observations(family, y)
    except OSError as exc:
        raise CLIError(f"cannot read input: {exc}", EXIT_IO) from None
    except ParseError as exc:
        raise CLIError(f"cannot parse input: {exc}", EXIT_PARSE) from None
    except InvalidObservationError as exc:
        raise CLIError(f"invalid observations: {exc}", EXIT_PARSE) from None


def _out_dir(args, cfg) -> Path:
    out = Path(args.out or cfg.get("output_path", "."))
    if not out.is_dir():
        raise CLIError(f"output directory {out} does not exist", EXIT_IO)
    return out


def cmd_simulate(args, cfg) -> Path:
    model = _model(cfg)
    n = cfg.get("simulate", {}).get("n")
    if n is None:
        raise CLIError("config needs simulate.n", EXIT_PARSE)
    out = _out_dir(args, cfg)
    try:
        path = simulate_path(model, n, _streams(args.seed)[STREAM_SIMULATE], force=args.force)
    except NonContractingError as exc:
        raise CLIError(f"refusing to simulate: {exc} (use --force)", EXIT_UNSTABLE) from None
    target = out / "simulated.csv"
    path.to_csv(target, discrete=model.family.is_discrete)
    _write_json(out / "simulated.json", {
        "schema_version": 1,
        "version": __version__,
        "seed": args.seed,
        "n": n,
        "model": model.to_dict(),
        "stationarity": _clean(check_stationarity(model.dynamics, model.family).to_dict()),
    })
    return target


def cmd_fit(args, cfg) -> Path:
    from obsdriven.inference import fit_mle, profile_r

    model = _model(cfg)
    fcfg = _fit_config(cfg, args.threads)
    y = _input(cfg, model.family)
    out = _out_dir(args, cfg)
    opts = cfg.get("fit_options", {})
    rng = _streams(args.seed)[STREAM_FIT]
    profile = None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        if opts.get("r_grid"):
            pr = profile_r(model, y, opts["r_grid"], fcfg, rng)
            fit = pr.fits[pr.r_hat]
            profile = {"r_hat": pr.r_hat, "table": pr.table()}
        else:
            fit = fit_mle(model, y, fcfg, rng)
    report = fit.to_dict()
    report["version"] = __version__
    report["seed"] = args.seed
    report["warnings"] = [str(w.message) for w in caught]
    if profile is not None:
        report["profile_r"] = profile
    _write_json(out / "fit.json", _clean(report))
    if opts.get("fitted_means"):
        _write_csv(out / "fitted_means.csv", ["t", "y", "x_hat"],
                   [(t, _fmt_y(v, model.family), repr(float(x)))
                    for t, (v, x) in enumerate(zip(y, fit.fitted_means), start=1)])
    return out / "fit.json"


def _fmt_y(v, family):
    return int(v) if family.is_discrete else repr(float(v))


def _load_fit(path, model: ModelSpec):
    """Coefficients and X_1 from a fit report, checked against the configured model."""
    try:
        with open(path) as fh:
            rep = json.load(fh)
    except OSError as exc:
        raise CLIError(f"cannot read fit report: {exc}", EXIT_IO) from None
    except json.JSONDecodeError as exc:
        raise CLIError(f"fit report is not valid JSON: {exc.msg}", EXIT_PARSE) from None
    try:
        fam = FamilySpec.from_dict(rep["family"])
        dyn = dynamics_from_dict(rep["dynamics"])
        theta = np.asarray(rep["theta_hat"], dtype=float)
        x1 = float(rep["x1"])
    except (KeyError, TypeError, ValueError, ObsDrivenError) as exc:
        raise CLIError(f"malformed fit report: {exc}", EXIT_PARSE) from None
    cfg_dyn = model.dynamics
    if fam != model.family:
        raise CLIError(f"family mismatch: fit has {fam.to_dict()}, config has "
                       f"{model.family.to_dict()}", EXIT_MISMATCH)
    if type(dyn) is not type(cfg_dyn) or not np.array_equal(dyn.knots_array, cfg_dyn.knots_array):
        raise CLIError(f"dynamics mismatch: fit has {rep['dynamics'].get('kind')} with knots "
                       f"{dyn.knots_array.tolist()}", EXIT_MISMATCH)
    return theta, x1


def cmd_diagnose(args, cfg) -> Path:
    from obsdriven.diagnostics import diagnose, pit_histogram
    from obsdriven.inference import FitConfig

    model = _model(cfg)
    opts = cfg.get("diagnose", {})
    y = _input(cfg, model.family)
    out = _out_dir(args, cfg)
    fcfg = _fit_config(cfg, args.threads)
    if "fit_path" in opts:
        theta, x1 = _load_fit(opts["fit_path"], model)
        fcfg = FitConfig.from_dict({**fcfg.to_dict(), "x1_policy": x1})
    else:
        theta = model.dynamics.params
    rep = diagnose(model, theta, y, _streams(args.seed)[STREAM_PIT],
                   max_lag=opts.get("max_lag", 20), cfg=fcfg)
    body = rep.to_dict()
    body.update({"version": __version__, "seed": args.seed, "theta": theta.tolist()})
    _write_json(out / "diagnostics.json", _clean(body))
    edges, counts, density = pit_histogram(rep.pit, opts.get("pit_bins", 10))
    _write_csv(out / "pit_histogram.csv", ["bin_lo", "bin_hi", "count", "density"],
               [(repr(float(edges[i])), repr(float(edges[i + 1])), int(counts[i]), repr(float(density[i])))
                for i in range(counts.size)])
    _write_csv(out / "residual_acf.csv", ["lag", "acf"],
               [(h, repr(float(v))) for h, v in enumerate(rep.residual_acf)])
    return out / "diagnostics.json"


def cmd_select(args, cfg) -> Path:
    from obsdriven.selection import select_knot_count

    model = _model(cfg)
    opts = cfg.get("select", {})
    fcfg = _fit_config(cfg, args.threads)
    y = _input(cfg, model.family)
    out = _out_dir(args, cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = select_knot_count(
            model, y, opts.get("K_max", 4), fcfg,
            placement=opts.get("placement", "quantile"),
            p_offset=opts.get("p_offset", 0),
            min_per_regime=opts.get("min_per_regime", 30),
            rng=_streams(args.seed)[STREAM_FIT],
        )
    body = res.to_dict()
    body.update({"version": __version__, "seed": args.seed})
    _write_json(out / "selection.json", _clean(body))
    _write_csv(out / "selection.csv", ["K", "knots", "p", "loglik", "aic", "bic"],
               [(c.K, " ".join(repr(float(k)) for k in c.knots), c.p, repr(c.fit.loglik),
                 repr(c.aic), repr(c.bic)) for c in res.candidates])
    return out / "selection.json"


def cmd_verify(args, cfg) -> Path:
    model = _model(cfg)
    opts = cfg.get("verify", {})
    out = _out_dir(args, cfg)
    rep = check_stationarity(model.dynamics, model.family)
    if not rep.is_contracting and not args.force:
        raise CLIError("refusing to verify non-contracting dynamics (use --force)", EXIT_UNSTABLE)
    streams = _streams(args.seed)
    n_steps = opts.get("n_steps", 20)
    gmc = gmc_estimate(model, n_steps, opts.get("n_rep", 10_000), streams[STREAM_GMC],
                       starts=opts.get("starts"))
    body = {
        "schema_version": 1,
        "version": __version__,
        "seed": args.seed,
        "model": model.to_dict(),
        "stationarity": _clean(rep.to_dict()),
        "gmc": _clean(gmc.to_dict()),
        "gmc_within_bound": bool(np.all(gmc.within_bound)),
    }
    _write_csv(out / "decay.csv", ["n", "mean_abs_diff", "se", "bound"],
               [(i, repr(float(gmc.mean_abs_diff[i])), repr(float(gmc.se[i])), repr(float(gmc.bound[i])))
                for i in range(n_steps + 1)])
    if model.family.is_discrete and opts.get("mixing_steps", 40) > 0:
        mix = mixing_bound_check(model, opts.get("mixing_steps", 40), opts.get("mixing_rep", 10_000),
                                 streams[STREAM_MIXING])
        body["mixing"] = _clean(mix.to_dict())
        _write_csv(out / "mixing.csv", ["n", "disagreement", "tail_sum", "tail_se", "bound"],
                   [(i + 1, repr(float(mix.disagreement[i])), repr(float(mix.tail_sums[i])),
                     repr(float(mix.tail_se[i])), repr(float(mix.bound[i])))
                    for i in range(mix.disagreement.size)])
    _write_json(out / "verify.json", body)
    return out / "verify.json"


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "diagnose": cmd_diagnose,
    "select": cmd_select,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="obsdriven", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--seed", type=int, default=None, help="root seed (overrides config)")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--force", action="store_true", help="run non-contracting models anyway")
    p.add_argument("--out", default=None, help="existing output directory")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is None:
            args.seed = int(cfg.get("seed", 0))
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            target = COMMANDS[args.command](args, cfg)
    except CLIError as exc:
        print(f"obsdriven: error: {exc}", file=sys.stderr)
        return exc.code
    except NonContractingError as exc:
        print(f"obsdriven: error: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    except OSError as exc:
        print(f"obsdriven: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ObsDrivenError as exc:
        print(f"obsdriven: error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    print(target)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
