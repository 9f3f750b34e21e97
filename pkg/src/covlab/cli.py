"""Command-line driver.

Usage: ``covlab [global flags] EXPERIMENT [flags]``. Settings are resolved as
built-in defaults, then the ``--config`` file, then command-line flags.

Config files are TOML (or JSON; a previously written ``<experiment>.json``
report is accepted as-is, which replays it)::

    seed = 42
    trials = 100000
    alpha = 0.05
    theta = 0.0
    out_dir = "covlab-reports"
    workers = 1
    batch_size = 1000            # batches
    checkpoints = [10, 100, 1000] # coverage
    grid_width = 2.0              # recurrence; "none" for the continuous case
    target_center = 0.0           # recurrence
    level = "ancillary"           # forecast
    input = "forecasts.csv"       # forecast: score this file instead of simulating
    n_bins = 10                   # forecast
    fixtures = "path/to/dir"      # examples

    [procedure]
    family = "uniform_pair"       # z_known_sigma | trivial | uniform_pair
    c = 0.3882                    # uniform_pair; defaults to the alpha-calibrated value
    # sigma = 1.0, n = 4          # z_known_sigma

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 a check failed.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from covlab import exactprob as ep
from covlab import forecaster as fc
from covlab import microstate as ms
from covlab import procedures as pr
from covlab import thought_experiments as te
from covlab.reports import Check, Report, band_check, format_table

EXPERIMENTS = ("examples", "coverage", "pairs", "batches", "recurrence", "forecast", "ladder")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_CHECK = 0, 2, 3, 4

FAMILY_ALIASES = {"z": "z_known_sigma", "normal": "z_known_sigma", "uniform": "uniform_pair"}


class ConfigError(ValueError):
    pass


class LoadError(OSError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str
    procedure: dict = field(default_factory=dict)
    theta: float = 0.0
    alpha: float = 0.05
    seed: int = 42
    trials: int = 100_000
    workers: int = 1
    out_dir: str = "covlab-reports"
    batch_size: int = 1000
    checkpoints: list | None = None
    grid_width: float | None = 2.0
    target_center: float | None = None
    level: str | None = None
    input: str | None = None
    n_bins: int = 10
    fixtures: str | None = None

    @classmethod
    def keys(cls):
        return set(cls.__dataclass_fields__)

    def spec(self) -> pr.ProcedureSpec:
        return pr.ProcedureSpec.from_dict({**self.procedure, "alpha": self.alpha})

    def validate(self) -> "ExperimentConfig":
        """Check and normalize every field; raises ConfigError."""
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        try:
            self.theta = float(self.theta)
            self.alpha = float(self.alpha)
            self.seed = _as_int(self.seed, "seed")
            self.trials = _as_int(self.trials, "trials")
            self.workers = _as_int(self.workers, "workers")
            self.batch_size = _as_int(self.batch_size, "batch_size")
            self.n_bins = _as_int(self.n_bins, "n_bins")
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        if not math.isfinite(self.theta):
            raise ConfigError("theta must be finite")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must lie in [0, 2**64)")
        if self.trials < 1 or self.workers < 1 or self.batch_size < 1 or self.n_bins < 1:
            raise ConfigError("trials, workers, batch_size and n_bins must be >= 1")

        proc = dict(self.procedure)
        if "alpha" in proc:
            raise ConfigError("set alpha at top level, not inside [procedure]")
        fam = proc.get("family") or _default_family(self.experiment)
        proc["family"] = FAMILY_ALIASES.get(fam, fam)
        try:
            spec = pr.ProcedureSpec.from_dict({**proc, "alpha": self.alpha})
        except (pr.ContractError, TypeError, ValueError) as exc:
            raise ConfigError(f"procedure: {exc}") from None
        resolved = spec.to_dict()
        resolved.pop("alpha")
        self.procedure = resolved

        if isinstance(self.grid_width, str):
            if self.grid_width.strip().lower() not in ("none", "null", ""):
                raise ConfigError(f"grid_width must be a positive number or 'none', got {self.grid_width!r}")
            self.grid_width = None
        if self.grid_width is not None:
            self.grid_width = float(self.grid_width)
            if not self.grid_width > 0:
                raise ConfigError("grid_width must be positive (use 'none' for no grid)")
        if self.target_center is not None:
            self.target_center = float(self.target_center)

        if self.checkpoints is not None:
            try:
                cps = [_as_int(c, "checkpoint") for c in self.checkpoints]
            except (TypeError, ValueError) as exc:
                raise ConfigError(str(exc)) from None
            if not cps or cps != sorted(cps) or cps[0] < 1 or cps[-1] > self.trials:
                raise ConfigError(f"checkpoints must be sorted integers within [1, trials], got {self.checkpoints}")
            self.checkpoints = cps

        if self.experiment == "batches" and self.trials % self.batch_size:
            raise ConfigError(f"batch_size {self.batch_size} does not divide trials {self.trials}")
        if self.experiment == "pairs" and self.trials < 2:
            raise ConfigError("pairs needs trials >= 2")
        if self.experiment == "recurrence" and not isinstance(spec.family, pr.ZKnownSigma):
            raise ConfigError("recurrence needs procedure family z_known_sigma")
        if self.level is not None:
            try:
                level = fc.InformationLevel.parse(self.level)
            except pr.ContractError as exc:
                raise ConfigError(str(exc)) from None
            if self.experiment == "forecast" and self.input is None and level not in fc.levels_for(spec):
                raise ConfigError(f"level {level.label} is not available for {spec.name}")
            self.level = level.label
        return self

    def to_dict(self) -> dict:
        return asdict(self)


def _as_int(v, name):
    if isinstance(v, bool):
        raise ValueError(f"{name} must be an integer")
    if isinstance(v, float):
        if not v.is_integer():
            raise ValueError(f"{name} must be an integer, got {v}")
        return int(v)
    return int(v)


def _default_family(experiment):
    return "uniform_pair" if experiment in ("forecast", "ladder") else "z_known_sigma"


def read_config_file(path) -> dict:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise LoadError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    try:
        if path.suffix == ".json":
            data = json.loads(raw)
            if isinstance(data, dict) and "config" in data and "experiment" in data:
                data = data["config"]  # a report: replay its config
        else:
            data = tomllib.loads(raw.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a table")
    unknown = set(data) - ExperimentConfig.keys()
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    if "procedure" in data and not isinstance(data["procedure"], dict):
        raise ConfigError(f"{path}: procedure must be a table")
    return data


def resolve_config(experiment, file_values: dict, flags: dict) -> ExperimentConfig:
    values = dict(file_values)
    file_exp = values.pop("experiment", None)
    if file_exp is not None and file_exp != experiment:
        raise ConfigError(f"config file is for experiment {file_exp!r}, not {experiment!r}")
    proc = dict(values.pop("procedure", {}) or {})
    proc_flags = {k: flags.pop(k) for k in ("family", "sigma", "n", "c") if k in flags}
    if "family" in proc_flags:
        fam = FAMILY_ALIASES.get(proc_flags["family"], proc_flags["family"])
        if FAMILY_ALIASES.get(proc.get("family"), proc.get("family")) != fam:
            proc = {}
        proc_flags["family"] = fam
    proc.update(proc_flags)
    values.update(flags)
    cfg = ExperimentConfig(experiment=experiment, procedure=proc, **values)
    return cfg.validate()


# experiments -----------------------------------------------------------------------


def _default_checkpoints(n):
    cps, c = [], 10
    while c < n:
        cps.append(c)
        c *= 10
    return cps + [n]


def exp_examples(cfg: ExperimentConfig) -> Report:
    try:
        outcomes = te.run_all(cfg.fixtures)
    except ep.ModelError as exc:
        raise LoadError(f"fixture load failed: {exc}") from exc
    report = Report("examples", _config_for(cfg, ("fixtures", "out_dir")))
    rows = []
    for o in outcomes:
        q = o.quantity
        value = "undefined" if o.value is None else str(o.value)
        status = "PASS" if o.passed else "FAIL"
        detail = "" if o.value is None else f"~{float(o.value):.6f}"
        if not o.passed:
            detail += f" expected {q.expected}" + (f" ({o.error})" if o.error else "")
        elif o.rounding_note:
            detail += f" ({o.rounding_note})"
        rows.append((f"{q.label} = {value} {status}", detail.strip()))
        report.results[q.label] = {
            "model": q.model, "exact": value, "passed": o.passed,
            "decimal": None if o.value is None else float(o.value),
            "expected": str(q.expected), "reported": q.reported,
        }
    report.lines.extend(format_table(rows))
    # per-quantity status is in the rows above; one summary check drives the exit code
    report.checks.append(Check("all quantities exact", sum(o.passed for o in outcomes), len(outcomes), 0,
                               all(o.passed for o in outcomes)))
    return report


def _config_for(cfg, keys):
    d = cfg.to_dict()
    return {"experiment": cfg.experiment, **{k: d[k] for k in keys}}


MC_KEYS = ("procedure", "theta", "alpha", "seed", "trials", "workers", "out_dir")


def _run(cfg):
    return ms.run_stream(cfg.spec(), cfg.theta, cfg.seed, cfg.trials, cfg.workers)


def exp_coverage(cfg: ExperimentConfig) -> Report:
    spec = cfg.spec()
    run = _run(cfg)
    cov = pr.analytic_coverage(spec)
    checkpoints = cfg.checkpoints or _default_checkpoints(cfg.trials)
    trace = ms.slln_trace(run, checkpoints)
    ie = ms.iterated_expectation_check(run)
    report = Report("coverage", _config_for(cfg, MC_KEYS + ("checkpoints",)))
    report.config["checkpoints"] = checkpoints
    report.results = {
        "analytic_coverage": cov,
        "trace": [{"n": n, "mean": m, "band": ms.band(cov, n)} for n, m in trace],
        "design_mean": ie.design_mean,
        "conditional_mean": ie.conditional_mean,
        "design_var": ie.design_var,
        "conditional_var": ie.conditional_var,
    }
    report.lines.append("running coverage")
    report.lines.extend(format_table(
        [("n", "mean(z)", "|mean - cov|", "4-sigma band")]
        + [(n, f"{m:.6f}", f"{abs(m - cov):.6f}", f"{ms.band(cov, n):.6f}") for n, m in trace], indent=2))
    report.lines.append("")
    report.lines.append(f"analytic coverage {cov:.6f}; mean conditional coverage {ie.conditional_mean:.6f}")
    tol = ms.band(cov, cfg.trials)
    report.checks.append(band_check("final mean(z)", ie.design_mean, cov, tol))
    report.checks.append(band_check("mean conditional coverage", ie.conditional_mean, cov, tol))
    return report


def exp_pairs(cfg: ExperimentConfig) -> Report:
    spec = cfg.spec()
    pc = ms.pair_coverage(_run(cfg))
    cov = pr.analytic_coverage(spec)
    report = Report("pairs", _config_for(cfg, MC_KEYS))
    report.results = {
        "n_pairs": pc.n_pairs, "both": pc.both, "target_both": cov**2,
        "first_covered_pairs": pc.first_covered_pairs,
        "second_given_first_covered": pc.second_given_first_covered,
        "first_missed_pairs": pc.first_missed_pairs,
        "both_given_first_missed": pc.both_given_first_missed,
    }
    report.lines.extend(format_table([
        ("quantity", "observed", "target"),
        ("P(both cover)", f"{pc.both:.6f}", f"{cov**2:.6f}"),
        ("P(second | first covered)", _f6(pc.second_given_first_covered), f"{cov:.6f}"),
        ("P(both | first missed)", _f6(pc.both_given_first_missed), "0"),
    ]))
    report.checks.append(band_check("both cover", pc.both, cov**2, ms.band(cov**2, pc.n_pairs)))
    if pc.first_covered_pairs:
        report.checks.append(band_check("second covers | first covered", pc.second_given_first_covered, cov,
                                        ms.band(cov, pc.first_covered_pairs)))
    if pc.first_missed_pairs:
        report.checks.append(Check("both cover | first missed", pc.both_given_first_missed, 0.0, 0.0,
                                   pc.both_given_first_missed == 0.0))
    return report


def _f6(v):
    return "-" if v is None else f"{v:.6f}"


def exp_batches(cfg: ExperimentConfig) -> Report:
    spec = cfg.spec()
    bc = ms.batch_coverage_count(_run(cfg), cfg.batch_size)
    cov = pr.analytic_coverage(spec)
    target = cfg.batch_size * cov
    tol = 4 * math.sqrt(cfg.batch_size * cov * (1 - cov) / bc.n_batches)
    report = Report("batches", _config_for(cfg, MC_KEYS + ("batch_size",)))
    hist = bc.histogram()
    report.results = {"n_batches": bc.n_batches, "mean_count": bc.mean, "target_mean": target,
                      "histogram": {str(k): v for k, v in hist.items()}, "counts": bc.counts}
    report.lines.append(f"{bc.n_batches} batches of {cfg.batch_size}; mean covered count {bc.mean:.3f} "
                        f"(binomial mean {target:.3f})")
    report.lines.append("")
    report.lines.extend(format_table([("covered", "batches")] + sorted(hist.items()), indent=2))
    report.checks.append(band_check("mean covered count", bc.mean, target, tol))
    return report


def exp_recurrence(cfg: ExperimentConfig) -> Report:
    spec = cfg.spec()
    rr = ms.recurrence_experiment(spec, cfg.theta, cfg.grid_width, cfg.seed, cfg.trials,
                                  cfg.target_center, cfg.workers)
    report = Report("recurrence", _config_for(cfg, MC_KEYS + ("grid_width", "target_center")))
    report.results = rr.to_dict()
    if cfg.grid_width is None:
        report.lines.append(f"continuous data: {rr.distinct_values} distinct intervals in {rr.n_trials}, "
                            f"{rr.repeats} exact repeats")
        report.checks.append(Check("exact repeats (continuous)", rr.repeats, 0, 0, rr.repeats == 0))
        return report
    report.lines.append(f"grid {cfg.grid_width}: {rr.distinct_values} distinct interval values; "
                        f"target [{rr.target[0]:.6g}, {rr.target[1]:.6g}] mass ~{rr.design_mass:.4f}")
    report.lines.extend(format_table([("n", "hits")] + list(rr.checkpoint_hits), indent=2))
    (n1, h1), (n2, h2) = rr.checkpoint_hits[0], rr.checkpoint_hits[-1]
    if rr.design_mass >= 0.1 and h1 > 0 and n1 < n2:
        ratio = h2 / h1
        expected = n2 / n1
        report.results["hit_ratio"] = ratio
        report.checks.append(Check("hit ratio n vs n/2", ratio, [0.9 * expected, 1.1 * expected], None,
                                   0.9 * expected <= ratio <= 1.1 * expected))
    else:
        report.lines.append("target mass below 0.1 or too few trials: ratio check skipped")
    return report


def _forecast_stream(cfg, spec):
    if cfg.input is not None:
        try:
            records = fc.read_forecast_csv(cfg.input)
        except OSError as exc:
            raise LoadError(f"cannot read forecasts {cfg.input}: {exc.strerror or exc}") from exc
        except pr.ContractError as exc:
            raise ConfigError(str(exc)) from None
        if not records:
            raise ConfigError(f"{cfg.input}: no forecast rows")
        return fc.as_stream(records)
    level = fc.InformationLevel.parse(cfg.level) if cfg.level else fc.levels_for(spec)[min(1, len(fc.levels_for(spec)) - 1)]
    if cfg.level is None:
        cfg.level = level.label
    return fc.forecast_run(level, _run(cfg))


def exp_forecast(cfg: ExperimentConfig) -> Report:
    spec = cfg.spec()
    stream = _forecast_stream(cfg, spec)
    brier, logs = fc.brier_score(stream), fc.log_score(stream)
    table = fc.calibration_table(stream, cfg.n_bins)
    keys = ("input", "n_bins", "out_dir") if cfg.input else MC_KEYS + ("level", "n_bins")
    report = Report("forecast", _config_for(cfg, keys))
    report.results = {"brier": brier.to_dict(), "log": logs.to_dict(), "calibration": table.to_dict()}
    report.lines.append(f"brier {brier.mean_score:.6f}   log {logs.mean_score:.6f}   n {brier.n}")
    report.lines.append("")
    report.lines.extend(format_table(
        [("bin", "n", "mean p", "freq(z=1)", "gap", "band")]
        + [(f"[{b.lo:.2f}, {b.hi:.2f})", b.n, _f6(b.mean_forecast), _f6(b.frequency), _f6(b.gap), _f6(b.band))
           for b in table.bins], indent=2))
    for b in table.occupied():
        report.checks.append(Check(f"calibration [{b.lo:.2f}, {b.hi:.2f})", b.gap, 0.0, b.band, b.gap <= b.band))
    return report


def exp_ladder(cfg: ExperimentConfig) -> Report:
    spec = cfg.spec()
    ladder = fc.compare_levels(spec, cfg.theta, cfg.seed, cfg.trials, cfg.workers)
    report = Report("ladder", _config_for(cfg, MC_KEYS))
    report.results = ladder.to_dict()
    report.lines.extend(format_table(
        [("level", "brier", "log")]
        + [(ls.level.label, f"{ls.brier.mean_score:.6f}", f"{ls.log.mean_score:.6f}") for ls in ladder.levels]))
    report.checks.append(Check("brier non-increasing with information", ladder.monotone, True, None, ladder.monotone))
    for coarse, fine, diff, bw in ladder.gaps:
        if coarse == "design_only" and fine == "ancillary":
            report.checks.append(Check("design_only - ancillary brier > 4 sigma", diff, ">0", bw, diff > bw))
    return report


RUNNERS = {
    "examples": exp_examples, "coverage": exp_coverage, "pairs": exp_pairs, "batches": exp_batches,
    "recurrence": exp_recurrence, "forecast": exp_forecast, "ladder": exp_ladder,
}


# argument parsing ---------------------------------------------------------------------


def _global_flags(p: argparse.ArgumentParser):
    S = argparse.SUPPRESS
    p.add_argument("--config", default=S, help="TOML or JSON config (a JSON report replays its config)")
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--trials", type=int, default=S)
    p.add_argument("--alpha", type=float, default=S)
    p.add_argument("--theta", type=float, default=S)
    p.add_argument("--out-dir", dest="out_dir", default=S)
    p.add_argument("--workers", type=int, default=S)
    p.add_argument("--procedure", dest="family", default=S,
                   help="z_known_sigma (z) | trivial | uniform_pair (uniform)")
    p.add_argument("--sigma", type=float, default=S)
    p.add_argument("--sample-size", dest="n", type=int, default=S)
    p.add_argument("--c", type=float, default=S, help="uniform-pair half-width")


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    parser = argparse.ArgumentParser(prog="covlab", description=__doc__.split("\n")[0])
    _global_flags(parser)
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="EXPERIMENT")
    helps = {
        "examples": "exact values of the three bundled discrete models",
        "coverage": "running coverage fraction and iterated-expectation check",
        "pairs": "joint coverage of consecutive interval pairs",
        "batches": "covered counts per batch of intervals",
        "recurrence": "exact recurrences of a discretized interval value",
        "forecast": "score and calibrate a coverage forecaster (or a CSV of forecasts)",
        "ladder": "Brier/log scores across information levels",
    }
    for name in EXPERIMENTS:
        sp = sub.add_parser(name, help=helps[name], argument_default=S)
        _global_flags(sp)
        if name == "examples":
            sp.add_argument("--fixtures", help="directory with flu.model, cat.model, truffle.model")
        elif name == "coverage":
            sp.add_argument("--checkpoints", type=lambda s: [int(x) for x in s.split(",")],
                            help="comma-separated trial counts")
        elif name == "batches":
            sp.add_argument("--batch-size", dest="batch_size", type=int)
        elif name == "recurrence":
            sp.add_argument("--grid-width", dest="grid_width", help="positive number or 'none'")
            sp.add_argument("--target-center", dest="target_center", type=float)
        elif name == "forecast":
            sp.add_argument("--level", help="design_only | ancillary | full_outcome")
            sp.add_argument("--input", help="CSV with columns index,p,z,level")
            sp.add_argument("--n-bins", dest="n_bins", type=int)
    return parser


def _grid_flag(v):
    try:
        return float(v)
    except ValueError:
        return v


def main(argv=None) -> int:
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    experiment = args.pop("experiment")
    config_path = args.pop("config", None)
    if "grid_width" in args:
        args["grid_width"] = _grid_flag(args["grid_width"])
    try:
        file_values = read_config_file(config_path) if config_path else {}
        cfg = resolve_config(experiment, file_values, args)
        report = RUNNERS[experiment](cfg)
    except ConfigError as exc:
        print(f"covlab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (LoadError, OSError) as exc:
        print(f"covlab: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        jpath, tpath = report.write(cfg.out_dir)
    except OSError as exc:
        print(f"covlab: cannot write reports to {cfg.out_dir}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO
    sys.stdout.write(report.to_text())
    print(f"\nwrote {jpath} and {tpath}")
    return EXIT_OK if report.passed else EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
