"""Experiment runner: single runs, sweeps, scaling fits and lemma trials."""

from __future__ import annotations

import argparse
import csv
import hashlib
import itertools
import json
import math
import os
import random
import sys
import warnings
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from .adversary import PLACEMENT_RULES, STRATEGIES, UnknownStrategy, place_faults, strategy
from .engine import SimulationError
from .predictions import (
    LEMMAS, PLACEMENTS, GroundTruth, PreconditionUnsatisfiable, check_good_group_lemma,
    generate_predictions, lemma_constants, m_grouping, misclassified_set, misclassify_cost,
    valid_m_range,
)
from .protocols import (
    PROTOCOLS, SimConfig, UnknownProtocol, agreement_ok, protocol_spec, simulate, unanimity_ok,
)

CSV_COLUMNS = (
    "fingerprint", "protocol", "n", "t", "f", "epsilon", "B", "adversary", "seed",
    "rounds", "messages", "bits", "decided_count", "agreement_ok", "unanimity_ok",
)
INPUT_RULES = ("mixed", "unanimous0", "unanimous1", "random")


class ConfigError(ValueError):
    pass


class InsufficientData(ValueError):
    pass


class ResilienceWarning(UserWarning):
    pass


@dataclass
class ExperimentConfig:
    protocol: str = "unauth-cubic"
    n: int = 16
    t: int | None = None
    f: int = 0
    epsilon: str | None = None
    B: str = "0"
    placement: str = "uniform"
    faults: str = "first"
    adversary: str = "silent"
    inputs: str = "mixed"
    kappa: int = 256
    seeds: tuple[int, ...] = (0,)
    round_cap: int | None = None
    out: str | None = None

    def validate(self) -> "ExperimentConfig":
        try:
            spec = protocol_spec(self.protocol)
        except UnknownProtocol as exc:
            raise ConfigError(str(exc)) from None
        if self.adversary not in STRATEGIES:
            raise ConfigError(f"unknown adversary {self.adversary!r}")
        if self.placement not in PLACEMENTS:
            raise ConfigError(f"unknown prediction placement {self.placement!r}")
        if self.faults not in PLACEMENT_RULES:
            raise ConfigError(f"unknown fault placement {self.faults!r}")
        if self.inputs not in INPUT_RULES:
            raise ConfigError(f"unknown input rule {self.inputs!r}")
        if self.n < 2:
            raise ConfigError("n must be at least 2")
        if self.kappa <= 0:
            raise ConfigError("kappa must be positive")
        t = self.resolved_t()
        if not 0 <= self.f <= t < self.n:
            raise ConfigError(f"need 0 <= f <= t < n, got f={self.f}, t={t}, n={self.n}")
        if t >= spec.bound(self.n, self.eps()):
            warnings.warn(f"t={t} is at or above the resilience bound of {self.protocol}",
                          ResilienceWarning, stacklevel=2)
        self.budget()
        return self

    def eps(self) -> Fraction:
        spec = protocol_spec(self.protocol)
        if self.epsilon is None:
            return spec.epsilon
        try:
            return Fraction(self.epsilon)
        except (ValueError, ZeroDivisionError):
            raise ConfigError(f"bad epsilon {self.epsilon!r}") from None

    def resolved_t(self) -> int:
        if self.t is not None:
            return self.t
        return protocol_spec(self.protocol).default_t(self.n, self.eps())

    def budget(self) -> int:
        return parse_budget(self.B, self.n, self.f)

    def canonical(self) -> dict:
        data = asdict(self)
        data.pop("seeds")
        data.pop("out")
        data["t"] = self.resolved_t()
        data["epsilon"] = str(self.eps())
        data["B"] = self.budget()
        return data


def parse_budget(text, n: int, f: int) -> int:
    """B as an integer, ``k n``/``kn`` multiples of n, or ``max`` for (n - f) n."""
    s = str(text).replace(" ", "").replace("*", "")
    try:
        if s == "max":
            return (n - f) * n
        if s.endswith("n"):
            value = int(s[:-1] or 1) * n
        else:
            value = int(s)
    except ValueError:
        raise ConfigError(f"bad budget {text!r}") from None
    if value < 0 or value > (n - f) * n:
        raise ConfigError(f"budget {value} outside [0, {(n - f) * n}]")
    return value


def fingerprint(cfg: ExperimentConfig, seed: int) -> str:
    blob = json.dumps({"config": cfg.canonical(), "seed": seed}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def make_inputs(rule: str, n: int, seed: int) -> dict[int, int]:
    rng = random.Random(repr(("inputs", seed)))
    if rule == "mixed":
        rule = f"unanimous{(seed // 2) % 2}" if seed % 2 == 0 else "random"
    if rule == "unanimous0":
        return {p: 0 for p in range(1, n + 1)}
    if rule == "unanimous1":
        return {p: 1 for p in range(1, n + 1)}
    return {p: rng.randint(0, 1) for p in range(1, n + 1)}


def build_sim(cfg: ExperimentConfig, seed: int) -> SimConfig:
    t = cfg.resolved_t()
    fs = place_faults(cfg.n, cfg.f, cfg.faults)
    truth = GroundTruth(fs, cfg.n, t)
    matrix = generate_predictions(truth, cfg.budget(), cfg.placement, seed)
    return SimConfig(cfg.n, t, fs, matrix, make_inputs(cfg.inputs, cfg.n, seed), seed,
                     cfg.kappa, cfg.eps(), cfg.round_cap)


def run_one(cfg: ExperimentConfig, seed: int):
    """One simulation; returns (report or None, result row, error text)."""
    sim = build_sim(cfg, seed)
    honest = [p for p in range(1, cfg.n + 1) if p not in sim.fault_set]
    error = None
    report = None
    try:
        report = simulate(cfg.protocol, sim, strategy(cfg.adversary)).report()
        decisions = report.decisions
    except SimulationError as exc:
        error = f"{type(exc).__name__}: {exc}"
        decisions = {}
    # safety flags come from raw decisions, not from protocol code
    row = {
        "fingerprint": fingerprint(cfg, seed),
        "protocol": cfg.protocol,
        "n": cfg.n,
        "t": sim.t,
        "f": cfg.f,
        "epsilon": str(cfg.eps()),
        "B": cfg.budget(),
        "adversary": cfg.adversary,
        "seed": seed,
        "rounds": report.rounds_used if report else -1,
        "messages": report.messages_sent if report else -1,
        "bits": report.bits_sent if report else -1,
        "decided_count": sum(1 for p in honest if p in decisions),
        "agreement_ok": error is None and agreement_ok(decisions),
        "unanimity_ok": error is None and unanimity_ok(sim.inputs, decisions, honest),
    }
    return report, row, error


def row_ok(row: dict) -> bool:
    honest = int(row["n"]) - int(row["f"])
    return (_truthy(row["agreement_ok"]) and _truthy(row["unanimity_ok"])
            and int(row["decided_count"]) == honest)


def _truthy(x) -> bool:
    return x is True or str(x) == "True"


def fuzz_config(protocol: str, adversary: str, n: int, seed: int) -> ExperimentConfig:
    """A seeded random in-resilience configuration for safety fuzzing."""
    rng = random.Random(repr(("fuzz", protocol, adversary, n, seed)))
    t = protocol_spec(protocol).default_t(n)
    f = rng.choice((t, t, rng.randint(0, t)))
    cap = (n - f) * n
    B = rng.choice([b for b in ("0", "1n", "4n", "16n") if parse_budget(b, n, 0) <= cap]
                   + ["max", str(rng.randint(0, cap))])
    return ExperimentConfig(
        protocol=protocol, n=n, f=f, B=B, adversary=adversary,
        placement=rng.choice(PLACEMENTS), faults=rng.choice(("first", "spread")),
        inputs=rng.choice(("unanimous0", "unanimous1", "random", "random")),
        seeds=(seed,),
    )


# ------------------------------------------------------------------ sweep

def expand_grid(base: ExperimentConfig, grid: dict[str, list]) -> list[ExperimentConfig]:
    keys = sorted(grid)
    cells = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        cells.append(replace(base, **dict(zip(keys, combo))))
    return cells


def read_rows(path) -> list[dict]:
    if not path or not os.path.exists(path):
        return []
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_rows(path, rows: list[dict]) -> None:
    rows = sorted(rows, key=lambda r: (r["fingerprint"], int(r["seed"])))
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: r[k] for k in CSV_COLUMNS})
    os.replace(tmp, path)


def sweep(cells: list[ExperimentConfig], seeds, out, progress=None) -> list[dict]:
    """Run every (cell, seed) not already in ``out``; rows sorted by fingerprint."""
    if not cells:
        raise ConfigError("empty sweep grid")
    rows = {r["fingerprint"]: r for r in read_rows(out)}
    for cell in cells:
        cell.validate()
        for seed in seeds:
            fp = fingerprint(cell, seed)
            if fp in rows:
                continue
            _, row, _ = run_one(cell, seed)
            rows[fp] = {k: str(v) for k, v in row.items()}
            if out:
                write_rows(out, list(rows.values()))
            if progress:
                progress(row)
    result = sorted(rows.values(), key=lambda r: (r["fingerprint"], int(r["seed"])))
    if out:
        write_rows(out, result)
    return result


# ---------------------------------------------------------------- scaling

@dataclass
class FitReport:
    slope: float
    intercept: float
    expected: float
    tolerance: float
    points: list[tuple[float, float]]

    @property
    def passed(self) -> bool:
        return abs(self.slope - self.expected) <= self.tolerance


def fit_slope(xs, ys, expected: float, tolerance: float) -> FitReport:
    """Least-squares slope of log(median y) against log x."""
    groups: dict[float, list[float]] = {}
    for x, y in zip(xs, ys):
        groups.setdefault(float(x), []).append(float(y))
    if len(groups) < 3:
        raise InsufficientData(f"need at least 3 distinct x values, got {len(groups)}")
    points = sorted((x, float(np.median(v))) for x, v in groups.items())
    lx = np.log([p[0] for p in points])
    ly = np.log([p[1] for p in points])
    slope, intercept = np.polyfit(lx, ly, 1)
    return FitReport(float(slope), float(intercept), expected, tolerance, points)


def check_scaling(rows, x: str, y: str, expected: float, tolerance: float,
                  where: dict | None = None) -> FitReport:
    if isinstance(rows, (str, Path)):
        rows = read_rows(rows)
    if where:
        rows = [r for r in rows if all(str(r[k]) == str(v) for k, v in where.items())]
    return fit_slope([r[x] for r in rows], [r[y] for r in rows], expected, tolerance)


# ----------------------------------------------------------------- lemmas

LEMMA_EPSILONS = {
    "one_good_23": (Fraction(1, 12), Fraction(1, 6), Fraction(1, 4)),
    "half_good_23": (Fraction(1, 24), Fraction(1, 12)),
    "one_good_exists": (Fraction(1, 12), Fraction(1, 6), Fraction(1, 4)),
}


def lemma_trial(lemma: str, n: int, epsilon, rng: random.Random):
    """One random instance inside the lemma preconditions, or None if none fits.

    Faults fill whole groups or half groups, and misclassifications land one
    per group on groups that are still good, which is the placement that
    minimises the good-group count for a given budget.
    """
    consts = lemma_constants(lemma, epsilon)
    fmax = math.ceil(consts["resilience"] * n) - 1
    kmax = 0
    while len(valid_m_range(lemma, n, kmax + 1, epsilon)):
        kmax += 1
    k = rng.randint(0, kmax)
    rng_m = valid_m_range(lemma, n, k, epsilon)
    if not len(rng_m):
        return None
    m = rng.choice(rng_m)
    groups = m_grouping(n, m)
    f = rng.randint(0, max(fmax, 0))
    rule = rng.choice(("kill", "spread", "random"))
    faults = _adversarial_faults(groups, f, rule, consts["c"], rng)
    truth = GroundTruth(frozenset(faults), n, f)
    targets = []
    for g in groups:
        free = [p for p in g if p not in faults] or list(g)
        targets.append(rng.choice(free))
    rng.shuffle(targets)
    cost = misclassify_cost(truth)
    budget = min(k * cost, (n - f) * n)
    matrix = generate_predictions(truth, budget, "adversarial_misclassify", rng.getrandbits(32),
                                  targets=targets[:k])
    actual = len(misclassified_set(matrix, truth))
    return check_good_group_lemma(lemma, n, f, max(k, actual), m, matrix, truth, groups, epsilon)


def _adversarial_faults(groups, f, rule, c, rng):
    """``kill`` spends the fewest faults that make whole groups bad."""
    everyone = [p for g in groups for p in g]
    if rule == "random":
        return rng.sample(everyone, f)
    faults: list[int] = []
    order = list(groups)
    rng.shuffle(order)
    for g in order:
        if len(faults) >= f:
            break
        need = math.ceil(Fraction(c) * len(g)) if rule == "kill" else 1
        faults.extend(g[: min(need, f - len(faults))])
    if len(faults) < f:
        taken = set(faults)
        faults.extend(rng.sample([p for p in everyone if p not in taken], f - len(faults)))
    return faults


def lemma_sizes(lemma: str, epsilon, max_n: int = 600) -> list[int]:
    """Sizes n at which the lemma admits at least one misclassification."""
    return [n for n in range(8, max_n + 1) if len(valid_m_range(lemma, n, 1, epsilon))]


def run_lemma_trials(lemma: str, trials: int, seed: int = 0, ns=None, epsilons=None):
    rng = random.Random(repr(("lemmas", lemma, seed)))
    epsilons = epsilons or LEMMA_EPSILONS[lemma]
    reports = []
    while len(reports) < trials:
        eps = rng.choice(epsilons)
        sizes = ns or lemma_sizes(lemma, eps, 480)
        n = rng.choice(sizes)
        try:
            rep = lemma_trial(lemma, n, eps, rng)
        except PreconditionUnsatisfiable:
            continue
        if rep is not None:
            reports.append(rep)
    return reports


# -------------------------------------------------------------------- CLI

def _read_config_file(path) -> dict:
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    for i, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{i}: expected key=value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


_INT_FIELDS = {"n", "t", "f", "kappa", "round_cap"}


def _coerce(key: str, value: str):
    if key in _INT_FIELDS:
        try:
            return int(value)
        except ValueError:
            raise ConfigError(f"{key} must be an integer, got {value!r}") from None
    return value


def _parse_seeds(text: str) -> tuple[int, ...]:
    try:
        if ".." in text:
            a, b = text.split("..")
            return tuple(range(int(a), int(b) + 1))
        if "," in text:
            return tuple(int(s) for s in text.split(","))
        return tuple(range(int(text)))
    except ValueError:
        raise ConfigError(f"bad seeds {text!r}") from None


def _common_args(p: argparse.ArgumentParser, lists: bool = False) -> None:
    kind = str
    p.add_argument("--config", help="key=value file; flags override it")
    p.add_argument("--protocol", type=kind)
    p.add_argument("--n", type=kind)
    p.add_argument("--t", type=kind)
    p.add_argument("--f", type=kind)
    p.add_argument("--epsilon", type=kind)
    p.add_argument("--B", type=kind)
    p.add_argument("--placement", type=kind)
    p.add_argument("--faults", type=kind)
    p.add_argument("--adversary", type=kind)
    p.add_argument("--inputs", type=kind)
    p.add_argument("--kappa", type=kind)
    p.add_argument("--seed", type=kind)
    p.add_argument("--seeds", type=kind)
    p.add_argument("--round-cap", dest="round_cap", type=kind)
    p.add_argument("--out", type=kind)


_FIELDS = ("protocol", "n", "t", "f", "epsilon", "B", "placement", "faults", "adversary",
           "inputs", "kappa", "round_cap", "out")


def _settings(args) -> dict:
    settings = _read_config_file(args.config) if args.config else {}
    for key in _FIELDS + ("seed", "seeds"):
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    return settings


def config_from(settings: dict) -> ExperimentConfig:
    kwargs = {}
    for key, value in settings.items():
        if key in ("seed", "seeds"):
            continue
        if key not in _FIELDS:
            raise ConfigError(f"unknown setting {key!r}")
        kwargs[key] = _coerce(key, value)
    if "seeds" in settings:
        kwargs["seeds"] = _parse_seeds(settings["seeds"])
    elif "seed" in settings:
        kwargs["seeds"] = (_coerce("n", settings["seed"]),)
    return ExperimentConfig(**kwargs)


def cmd_run(args) -> int:
    cfg = config_from(_settings(args)).validate()
    status = 0
    rows = []
    for seed in cfg.seeds:
        report, row, error = run_one(cfg, seed)
        rows.append({k: str(v) for k, v in row.items()})
        print(f"protocol={cfg.protocol} n={cfg.n} t={row['t']} f={cfg.f} B={row['B']} "
              f"adversary={cfg.adversary} seed={seed} rounds={row['rounds']} "
              f"messages={row['messages']} bits={row['bits']} decided={row['decided_count']} "
              f"agreement_ok={row['agreement_ok']} unanimity_ok={row['unanimity_ok']}")
        if report is not None:
            trace = " ".join(f"{p}:{name}:{r}" for p, name, r in report.phase_trace)
            print(f"  phases {trace}")
        if error:
            print(f"  error {error}")
        if not row_ok(row):
            status = 1
    if cfg.out:
        write_rows(cfg.out, rows + [r for r in read_rows(cfg.out)
                                    if r["fingerprint"] not in {x["fingerprint"] for x in rows}])
    return status


def _split(value) -> list[str]:
    return [s for s in str(value).split(",") if s]


def cmd_sweep(args) -> int:
    settings = _settings(args)
    grid = {}
    for key in ("protocol", "n", "f", "B", "adversary"):
        if key in settings and "," in str(settings[key]):
            grid[key] = [_coerce(key, v) for v in _split(settings.pop(key))]
    base = config_from(settings)
    if not base.out:
        raise ConfigError("sweep needs --out")
    cells = expand_grid(base, grid) if grid else [base]
    rows = sweep(cells, base.seeds, base.out)
    bad = [r for r in rows if not row_ok(r)]
    print(f"{len(rows)} rows in {base.out}; {len(bad)} with invariant failures")
    return 1 if bad else 0


def cmd_check(args) -> int:
    where = {}
    for item in args.where or ():
        if "=" not in item:
            raise ConfigError(f"--where expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        where[k] = v
    try:
        fit = check_scaling(args.csv, args.x, args.y, args.expected, args.tolerance, where)
    except InsufficientData as exc:
        print(f"insufficient data: {exc}")
        return 2
    print(f"slope={fit.slope:.4f} expected={fit.expected} tolerance={fit.tolerance} "
          f"pass={fit.passed}")
    return 0 if fit.passed else 1


def cmd_lemmas(args) -> int:
    lemmas = LEMMAS if args.lemma == "all" else (args.lemma,)
    status = 0
    for lemma in lemmas:
        if lemma not in LEMMAS:
            raise ConfigError(f"unknown lemma {lemma!r}")
        eps = (Fraction(args.epsilon),) if args.epsilon else None
        ns = [int(x) for x in _split(args.n)] if args.n else None
        reports = run_lemma_trials(lemma, args.trials, args.seed, ns, eps)
        held = sum(r.holds for r in reports)
        proof = sum(r.proof_bound_met for r in reports)
        print(f"lemma={lemma} trials={len(reports)} holds={held} proof_bound_met={proof} "
              f"min_margin={min(r.good_count - r.bound for r in reports)}")
        if held != len(reports):
            status = 1
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bapred", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)
    p = sub.add_parser("run", help="run one configuration over its seeds")
    _common_args(p)
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("sweep", help="cross product over comma-separated flags")
    _common_args(p)
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("check", help="log-log slope of a metric against a parameter")
    p.add_argument("--csv", required=True)
    p.add_argument("--x", default="n")
    p.add_argument("--y", default="bits")
    p.add_argument("--expected", type=float, required=True)
    p.add_argument("--tolerance", type=float, default=0.2)
    p.add_argument("--where", action="append", help="row filter key=value")
    p.set_defaults(func=cmd_check)
    p = sub.add_parser("lemmas", help="sample good-group lemma instances")
    p.add_argument("--lemma", default="all")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epsilon")
    p.add_argument("--n", help="comma-separated sizes")
    p.set_defaults(func=cmd_lemmas)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            warnings.showwarning = lambda msg, *a, **k: print(f"warning: {msg}", file=sys.stderr)
            return args.func(args)
    except (ConfigError, UnknownProtocol, UnknownStrategy) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
