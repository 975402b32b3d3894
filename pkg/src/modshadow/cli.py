"""Command-line front end.

Every subcommand writes JSON-lines records (``--out``, default stdout) and a
CSV summary (``--summary``). Exit codes: 0 success, 1 usage or configuration
error, 2 verification failure.

Configuration files are UTF-8 ``key = value`` lines; ``#`` starts a comment.
Keys are the :class:`RunConfig` field names. Command-line flags win over
file values.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import math
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import experiments as ex
from .bracket import audit_local_product, local_product_constants
from .flow import AnosovConstants, diag_flow, verify_anosov_bounds
from .frames import FrameElement, HalfPlanePoint, UnitTangent, batch_sl2_exp, tangent_to_frame
from .lattice import DeckElement, axis_frame, quotient_dist
from .oracle import canonical_word, class_length, enumerate_classes, spectrum_csv, word_matrix
from .shadowing import (
    PeriodicOrbitError,
    RecurrenceError,
    SearchBudget,
    ShadowError,
    closure_residual,
    detect_recurrence,
    find_periodic_orbit,
    lemma_audit,
    select_parameters,
    shadow_iteration,
    shadow_limit,
)

SCHEMA_VERSION = 1
SUBCOMMANDS = (
    "periodic", "shadow", "density", "leaf-density", "transitivity",
    "spectrum", "verify-lemma", "verify-anosov", "bracket",
)


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    epsilon: float = 0.2
    im_lo: float = 1.0
    im_hi: float = 2.0
    samples: int = 500
    t_max: float = 13.0
    dt: float = 0.05
    trace_max: int = 12
    threads: int = 1
    closure_tol: float = 1e-9
    length_tol: float = 1e-8
    min_coverage: float = 0.99
    trials: int = 1000
    t0: float = 2.0
    lambda_exp: float = 1.0
    anosov_c: float = 2.0
    radius: float = 0.1
    t_budget: float = 200.0
    pairs: int = 10
    k_max: int = 20
    re: float | None = None
    im: float | None = None
    angle: float | None = None
    word: str = "LR"
    perturb: float = 1e-6
    out: str | None = None
    summary: str | None = None

    def validate(self) -> "RunConfig":
        for name in ("closure_tol", "length_tol", "epsilon", "dt", "t_max", "radius", "t_budget", "perturb"):
            if not getattr(self, name) > 0:
                raise UsageError(f"{name} must be positive, got {getattr(self, name)}")
        if self.seed < 0:
            raise UsageError("seed must be a non-negative integer")
        if self.threads < 1:
            raise UsageError("threads must be >= 1")
        if not 1 <= self.im_lo < self.im_hi:
            raise UsageError("window needs 1 <= im_lo < im_hi")
        if not 3 <= self.trace_max <= 10_000:
            raise UsageError("trace_max must lie in [3, 10^4]")
        if not 0 <= self.min_coverage <= 1:
            raise UsageError("min_coverage must lie in [0, 1]")
        if self.samples < 1 or self.trials < 1 or self.pairs < 1 or self.k_max < 0:
            raise UsageError("counts must be positive")
        if self.im is not None and not self.im > 0:
            raise UsageError("im must be positive")
        if set(self.word) - {"L", "R"} or "L" not in self.word or "R" not in self.word:
            raise UsageError("word must use both letters L and R")
        return self

    def digest(self) -> str:
        payload = json.dumps(dataclasses.asdict(self), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _coerce(name: str, raw: str):
    kind = _FIELDS[name].type
    text = raw.strip()
    try:
        if kind in ("int",):
            return int(text)
        if kind in ("float",):
            return float(text)
        if kind == "float | None":
            return None if text.lower() == "none" else float(text)
        if kind == "str | None":
            return None if text.lower() == "none" else text
        return text
    except ValueError:
        raise UsageError(f"bad value for {name}: {raw!r}") from None


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise UsageError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in body.split("=", 1))
        if key not in _FIELDS:
            raise UsageError(f"line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, value)
    return values


def load_config(path, overrides: dict | None = None) -> RunConfig:
    values = parse_config_text(Path(path).read_text(encoding="utf-8")) if path else {}
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return RunConfig(**values).validate()


# ------------------------------------------------------------------ output


def _encode(value) -> str:
    if isinstance(value, bool) or value is None:
        return json.dumps(value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return format(v, ".17g") if math.isfinite(v) else "null"
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_encode(v)}" for k, v in value.items()) + "}"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_encode(v) for v in value) + "]"
    raise TypeError(f"cannot encode {type(value).__name__}")


class Output:
    def __init__(self, config: RunConfig, subcommand: str, stdout):
        self.config = config
        self.subcommand = subcommand
        self.stdout = stdout
        self.records: list[str] = []
        self.summary_rows: list[dict] = []

    def record(self, **payload):
        head = {
            "schema_version": SCHEMA_VERSION,
            "subcommand": self.subcommand,
            "seed": self.config.seed,
            "config_digest": self.config.digest(),
        }
        self.records.append(_encode({**head, **payload}))

    def summary(self, **row):
        self.summary_rows.append(row)

    def flush(self):
        text = "".join(line + "\n" for line in self.records)
        if self.config.out:
            Path(self.config.out).write_text(text, encoding="utf-8")
        else:
            self.stdout.write(text)
        if self.config.summary and self.summary_rows:
            buf = io.StringIO()
            writer = csv.DictWriter(buf, fieldnames=list(self.summary_rows[0]), lineterminator="\n")
            writer.writeheader()
            for row in self.summary_rows:
                writer.writerow({k: format(v, ".17g") if isinstance(v, float) else v for k, v in row.items()})
            Path(self.config.summary).write_text(buf.getvalue(), encoding="utf-8")


def orbit_payload(result, x0: FrameElement) -> dict:
    return {
        "x0": list(x0),
        "y": list(result.y),
        "T": result.period,
        "gamma": list(result.gamma.entries),
        "closure_residual": result.closure_residual,
        "oracle_length": result.oracle_period,
        "start_distance": result.start_distance,
    }


# ------------------------------------------------------------- subcommands


def _start_frame(cfg: RunConfig) -> FrameElement:
    if cfg.re is not None and cfg.im is not None:
        return tangent_to_frame(UnitTangent(HalfPlanePoint(cfg.re, cfg.im), cfg.angle or 0.0))
    rng = np.random.default_rng(cfg.seed)
    return ex.Window(cfg.im_lo, cfg.im_hi).sample(rng)


def _budget(cfg: RunConfig) -> SearchBudget:
    return SearchBudget(t_max=cfg.t_max, dt=cfg.dt)


def run_periodic(cfg, out) -> int:
    x0 = _start_frame(cfg)
    try:
        result = find_periodic_orbit(x0, cfg.epsilon, _budget(cfg))
    except PeriodicOrbitError as exc:
        out.record(x0=list(x0), error=str(exc))
        out.summary(success=False, T="", word="", start_distance="")
        return 2
    problem = ex.validate_orbit(result, x0, cfg.epsilon)
    word = canonical_word(result.gamma)
    out.record(**orbit_payload(result, x0), word=word, valid=not problem)
    out.summary(success=not problem, T=result.period, word=word, start_distance=result.start_distance)
    return 2 if problem else 0


def run_shadow(cfg, out) -> int:
    gamma = DeckElement(*word_matrix(cfg.word))
    g, period = axis_frame(gamma)
    rng = np.random.default_rng(cfg.seed)
    x0 = FrameElement.from_matrix(
        g.matrix @ diag_flow(rng.uniform(0, period))
        @ batch_sl2_exp(rng.normal(scale=cfg.perturb, size=(1, 3)))[0]
    )
    try:
        delta, _ = local_product_constants(x0, cfg.epsilon)
        rec = detect_recurrence(x0, delta, period + 1.0, dt=min(cfg.dt, 0.005))
        params = select_parameters(cfg.epsilon, x0, rec.t0)
        fwd = shadow_iteration(x0, params, 200, rec)
        bwd = shadow_iteration(x0, params, 200, rec, backward=True)
        orb_f = shadow_limit(fwd, params, cfg.k_max, x0=x0, t0=params.t0)
        orb_b = shadow_limit(bwd, params, cfg.k_max, x0=x0, t0=params.t0)
    except (ShadowError, RecurrenceError, ValueError) as exc:
        out.record(x0=list(x0), error=str(exc))
        out.summary(success=False, worst_forward="", worst_backward="", s="")
        return 2
    out.record(
        x0=list(x0), t0=params.t0, eta=params.eta, delta=params.delta, K=params.K, l=params.l,
        epsilon_over_K=params.epsilon_over_K,
        y=list(orb_f.y), s=orb_f.s, z=list(orb_b.y), r=orb_b.s,
        forward_residuals=[r for _, r in orb_f.residuals],
        backward_residuals=[r for _, r in orb_b.residuals],
    )
    out.summary(success=True, worst_forward=orb_f.worst_residual,
                worst_backward=orb_b.worst_residual, s=orb_f.s)
    return 0


def run_density(cfg, out) -> int:
    window = ex.Window(cfg.im_lo, cfg.im_hi, samples=cfg.samples)
    report = ex.density_experiment(window, cfg.epsilon, _budget(cfg), cfg.seed, cfg.threads)
    for rec in report.records:
        if rec.success:
            out.record(index=rec.index, success=True, word=rec.word, **orbit_payload(rec.result, rec.x0))
        else:
            out.record(index=rec.index, success=False, x0=list(rec.x0), error=rec.diagnostic)
    out.summary(epsilon=cfg.epsilon, samples=report.samples, successes=report.successes,
                coverage=report.coverage, max_start_distance=report.max_start_distance,
                wall_time=report.wall_time)
    return 0 if report.coverage >= cfg.min_coverage else 2


def run_leaf_density(cfg, out) -> int:
    window = ex.Window(cfg.im_lo, cfg.im_hi)
    x = _start_frame(cfg)
    report = ex.leaf_density_experiment(x, window, cfg.epsilon)
    for rec in report.records:
        out.record(index=rec.index, net_point=list(rec.x0), covered=rec.success)
    out.summary(epsilon=cfg.epsilon, net_points=report.samples, covered=report.successes,
                coverage=report.coverage, wall_time=report.wall_time)
    return 0 if report.coverage >= cfg.min_coverage else 2


def run_transitivity(cfg, out) -> int:
    window = ex.Window(cfg.im_lo, cfg.im_hi)
    rng = np.random.default_rng(cfg.seed)
    failures = 0
    for i in range(cfg.pairs):
        u, v = window.sample(rng), window.sample(rng)
        try:
            hit = ex.transitivity_experiment(u, v, cfg.radius, cfg.t_budget, cfg.dt)
        except ex.BudgetExhausted as exc:
            failures += 1
            out.record(index=i, success=False, u=list(u), v=list(v), error=str(exc))
            continue
        replay = ex.replay_hit(hit)
        ok = replay <= cfg.radius and hit.start_offset <= cfg.radius
        failures += not ok
        out.record(index=i, success=ok, u=list(u), v=list(v), p=list(hit.p), t=hit.t,
                   deck=list(hit.deck.entries), end_distance=hit.end_distance, replay=replay)
    out.summary(pairs=cfg.pairs, failures=failures, radius=cfg.radius)
    return 2 if failures else 0


def run_spectrum(cfg, out) -> int:
    classes = enumerate_classes(cfg.trace_max)
    text = spectrum_csv(classes)
    if cfg.out:
        Path(cfg.out).write_text(text, encoding="utf-8")
    else:
        out.stdout.write(text)
    out.records.clear()
    return 0


def run_verify_lemma(cfg, out) -> int:
    audit = lemma_audit(cfg.trials, cfg.t0, math.exp(-cfg.lambda_exp), cfg.seed)
    out.record(trials=audit.trials, t0=audit.t0, lam=audit.lam, K=audit.K,
               max_p=audit.max_value, passed=audit.passed)
    out.summary(trials=audit.trials, K=audit.K, max_p=audit.max_value, passed=audit.passed)
    return 0 if audit.passed else 2


def run_verify_anosov(cfg, out) -> int:
    constants = AnosovConstants(cfg.anosov_c, math.exp(-cfg.lambda_exp))
    status = 0
    for direction in ("stable", "unstable", "unstable-forward"):
        rep = verify_anosov_bounds(constants, n_samples=min(cfg.samples * 20, 10_000), seed=cfg.seed,
                                   direction=direction)
        expected = direction != "unstable-forward"
        if rep.passed != expected:
            status = 2
        out.record(direction=direction, max_normalized_ratio=rep.max_normalized_ratio,
                   parameter_ratio_error=rep.parameter_ratio_error, passed=rep.passed,
                   expected=expected)
        out.summary(direction=direction, max_ratio=rep.max_normalized_ratio, passed=rep.passed)
    return status


def run_bracket(cfg, out) -> int:
    x = _start_frame(cfg)
    audit = audit_local_product(x, cfg.epsilon, pairs=cfg.trials, seed=cfg.seed)
    out.record(x=list(x), delta=audit.delta, eta=audit.eta, pairs=audit.pairs, failures=audit.failures,
               max_magnitude_over_eta=audit.max_magnitude_over_eta,
               max_distance_over_epsilon=audit.max_distance_over_epsilon)
    out.summary(pairs=audit.pairs, failures=audit.failures, max_magnitude_over_eta=audit.max_magnitude_over_eta)
    return 0 if audit.passed else 2


RUNNERS = {
    "periodic": run_periodic,
    "shadow": run_shadow,
    "density": run_density,
    "leaf-density": run_leaf_density,
    "transitivity": run_transitivity,
    "spectrum": run_spectrum,
    "verify-lemma": run_verify_lemma,
    "verify-anosov": run_verify_anosov,
    "bracket": run_bracket,
}

COVERAGE_DEFAULTS = {"leaf-density": 0.95, "density": 0.99}
EPSILON_DEFAULTS = {"leaf-density": 0.25}


# ------------------------------------------------------------------ replay


def replay_records(path, cfg: RunConfig) -> tuple[int, int]:
    """Re-verify every orbit record in a JSONL file; returns (checked, mismatches)."""
    checked = bad = 0
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        if "gamma" not in rec or "y" not in rec:
            continue
        checked += 1
        y = FrameElement.from_matrix(np.array(rec["y"]).reshape(2, 2))
        gamma = DeckElement(*rec["gamma"])
        oracle = class_length(gamma.trace)
        residual = closure_residual(y, rec["T"])
        ok = (
            residual <= cfg.closure_tol
            and abs(oracle - rec["T"]) <= cfg.length_tol
            and abs(oracle - rec["oracle_length"]) <= cfg.length_tol
        )
        if "x0" in rec and rec.get("start_distance") is not None:
            x0 = FrameElement.from_matrix(np.array(rec["x0"]).reshape(2, 2))
            ok = ok and abs(quotient_dist(y, x0) - rec["start_distance"]) <= 1e-9
        bad += not ok
    return checked, bad


# ------------------------------------------------------------------ parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    for name, f in _FIELDS.items():
        kind = {"int": int, "float": float, "float | None": float}.get(f.type, str)
        common.add_argument("--" + name.replace("_", "-"), dest=name, type=kind, default=None)
    parser = _Parser(prog="modshadow", description="Shadowing and periodic orbits of the modular geodesic flow.")
    parser.add_argument("--replay", metavar="RECORDS", help="re-verify orbit records from a JSONL file")
    sub = parser.add_subparsers(dest="subcommand", parser_class=_Parser)
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def cli_main(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:  # --help
            return int(exc.code or 0)
        if args.replay:
            cfg = load_config(getattr(args, "config", None))
            checked, bad = replay_records(args.replay, cfg)
            stdout.write(f"replayed {checked} records, {bad} mismatches\n")
            return 2 if bad or not checked else 0
        if not args.subcommand:
            raise UsageError("a subcommand is required: " + ", ".join(SUBCOMMANDS))
        overrides = {k: v for k, v in vars(args).items() if k in _FIELDS}
        file_values = parse_config_text(Path(args.config).read_text(encoding="utf-8")) if args.config else {}
        defaults = {}
        if args.subcommand in COVERAGE_DEFAULTS:
            defaults["min_coverage"] = COVERAGE_DEFAULTS[args.subcommand]
        if args.subcommand in EPSILON_DEFAULTS:
            defaults["epsilon"] = EPSILON_DEFAULTS[args.subcommand]
        merged = {**defaults, **file_values, **{k: v for k, v in overrides.items() if v is not None}}
        cfg = RunConfig(**merged).validate()
    except (UsageError, OSError) as exc:
        stderr.write(f"error: {exc}\n")
        parser.print_usage(stderr)
        return 1
    out = Output(cfg, args.subcommand, stdout)
    try:
        code = RUNNERS[args.subcommand](cfg, out)
    except ValueError as exc:
        stderr.write(f"error: {exc}\n")
        return 1
    out.flush()
    return code


def main() -> None:
    sys.exit(cli_main())
