"""Command line driver: ``erhoq {thermalize,evolve,exact,run} --config run.yaml``.

Exit codes: 1 configuration or usage error, 2 population explosion, 3 zero
trace, 4 malformed population file, 5 system too large for the dense oracle.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
from pathlib import Path

from . import dmqmc
from ._util import atomic_write_text
from .config import RunConfig, load_config
from .errors import (
    ConfigError,
    DimensionTooLarge,
    DivisionByZeroAtT0,
    PopulationExplosion,
    PopulationFileError,
    ZeroTrace,
)
from .estimator import (
    EvolutionJob,
    ObservableSeries,
    bootstrap,
    calibrate,
    evaluate_keys,
    reference_series,
    rescale_by_t0,
)
from .oracle import MAX_DENSE_SITES
from .plotting import series_svg

EXIT_CONFIG = 1
EXIT_EXPLOSION = 2
EXIT_ZERO_TRACE = 3
EXIT_BAD_POPULATION = 4
EXIT_TOO_LARGE = 5


def thermalize(cfg: RunConfig, out=None) -> dmqmc.PsipPopulation:
    pop = dmqmc.run(cfg.dmqmc_params, cfg.h0, cfg.lattice)
    trace = dmqmc.trace_estimate(pop)
    path = out or cfg.population_file
    dmqmc.write_population(pop, path)
    print(f"wrote {path}: total weight {pop.total_weight}, trace {trace:g}, entries {len(pop)}")
    return pop


def evolve(cfg: RunConfig, pop: dmqmc.PsipPopulation, population_sha256: str) -> ObservableSeries:
    if pop.n != cfg.n_sites:
        raise ConfigError(f"population has N={pop.n} but config has n_sites={cfg.n_sites}")
    job = EvolutionJob(pop, cfg.schedule, cfg.times, cfg.trotter_dt, cfg.noise, cfg.mode, cfg.per_psip)
    evaluation = evaluate_keys(job)
    series = bootstrap(job, cfg.bootstrap_resamples, cfg.resample_seed, evaluation)
    if cfg.rescale:
        series = rescale_by_t0(series)
    if cfg.calibrate:
        cal = calibrate(job, rescale=cfg.rescale)
        series.sys_err[:] = cal.systematic
        series.meta["calibration_systematic"] = repr(cal.systematic)
    series.meta["population_sha256"] = population_sha256
    return series


def exact(cfg: RunConfig) -> ObservableSeries:
    if cfg.n_sites > MAX_DENSE_SITES:
        raise DimensionTooLarge(f"dense oracle supports at most {MAX_DENSE_SITES} sites, got {cfg.n_sites}")
    discretized = cfg.reference == "discretized"
    values = reference_series(
        cfg.schedule, cfg.lattice, cfg.beta, cfg.times,
        delta_beta=cfg.delta_beta if discretized else None,
        trotter_dt=cfg.trotter_dt if discretized else None,
    )
    meta = {"reference": cfg.reference, "beta": cfg.beta}
    if discretized:
        meta.update(delta_beta=cfg.delta_beta, trotter_dt=cfg.trotter_dt)
    series = ObservableSeries(list(cfg.times), values, 0.0, 0.0, meta)
    return rescale_by_t0(series) if cfg.rescale else series


def _write_series(series: ObservableSeries, path):
    atomic_write_text(path, series.to_csv())
    print(f"wrote {path} ({len(series)} rows)")


def _default_exact_path(out: str) -> str:
    p = Path(out)
    return str(p.with_name(p.stem + "_exact" + (p.suffix or ".csv")))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="erhoq", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="YAML run configuration")
    common.add_argument("--seed", type=int, help="DMQMC seed (also default shot and bootstrap seed)")
    common.add_argument("--shots", type=int, help="shots per program; omit for exact expectation values")
    common.add_argument("--noise-readout", type=float, dest="readout_flip", help="symmetric readout flip probability")
    common.add_argument("--noise-angle-bias", type=float, dest="angle_bias", help="constant gate-angle error")
    common.add_argument("--rescale", action="store_true", default=None, help="divide the series by its t=0 value")
    common.add_argument("--calibrate", action="store_true", default=None,
                        help="attach the diagonal-Hamiltonian calibration systematic")
    common.add_argument("--svg", help="write an SVG plot (run only)")
    common.add_argument("--out", help="output path")
    common.add_argument("--population", help="population file to read (evolve) or write (run)")
    common.add_argument("--exact-out", dest="exact_out", help="reference CSV path (run)")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("thermalize", parents=[common], help="sample the thermal density matrix")
    sub.add_parser("evolve", parents=[common], help="time-evolve a population file")
    sub.add_parser("exact", parents=[common], help="dense oracle reference")
    sub.add_parser("run", parents=[common], help="thermalize, evolve and exact in sequence")
    return parser


def _overrides(args) -> dict:
    keys = ("seed", "shots", "readout_flip", "angle_bias", "rescale", "calibrate", "svg", "exact_out")
    out = {k: getattr(args, k) for k in keys}
    if args.population:
        out["population_file"] = args.population
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, _overrides(args))
        if args.command == "thermalize":
            thermalize(cfg, out=args.out)
        elif args.command == "evolve":
            text = Path(cfg.population_file).read_text(encoding="utf-8")
            pop = dmqmc.parse_population(text)
            series = evolve(cfg, pop, hashlib.sha256(text.encode()).hexdigest())
            _write_series(series, args.out or cfg.out)
        elif args.command == "exact":
            _write_series(exact(cfg), args.out or "exact.csv")
        else:
            if cfg.n_sites > MAX_DENSE_SITES:
                raise DimensionTooLarge(f"dense oracle supports at most {MAX_DENSE_SITES} sites, got {cfg.n_sites}")
            pop = thermalize(cfg)
            digest = hashlib.sha256(dmqmc.format_population(pop).encode()).hexdigest()
            series = evolve(cfg, pop, digest)
            out = args.out or cfg.out
            _write_series(series, out)
            reference = exact(cfg)
            _write_series(reference, cfg.exact_out or _default_exact_path(out))
            if cfg.svg:
                atomic_write_text(cfg.svg, series_svg(series, reference))
                print(f"wrote {cfg.svg}")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PopulationExplosion as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EXPLOSION
    except ZeroTrace as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ZERO_TRACE
    except PopulationFileError as exc:
        print(f"error: malformed population file: {exc}", file=sys.stderr)
        return EXIT_BAD_POPULATION
    except DimensionTooLarge as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TOO_LARGE
    except (DivisionByZeroAtT0, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


if __name__ == "__main__":
    sys.exit(main())
