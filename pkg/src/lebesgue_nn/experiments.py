"""Experiment runners behind the CLI subcommands.

Each runner takes an :class:`ExperimentConfig` and returns a :class:`Table`
(header, rows, metadata) plus a list of violated invariants, which the CLI
turns into an exit status when ``--assert`` is given.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field as dc_field
from fractions import Fraction

import numpy as np

from ._csvio import render_csv, write_csv
from ._num import parse_number, to_fraction
from .classify import LabeledModel, nn_classification_risk, RiskReport
from .fields import field_from_spec
from .lebesgue import (
    TrivialCase,
    alpha_sequence,
    along_sequence_check,
    check_measure_continuity,
    check_tie_bias,
    lebesgue_ratio,
    lebesgue_value_estimate,
)
from .nn import ConvergenceCurve, nn_error
from .space import AtomicSpace, UndefinedRatio, space_from_spec
from .tiebreak import parse_rule


@dataclass
class ExperimentConfig:
    space: str = "signed_harmonic:N=8"
    field: str = "positive"
    x: str = "0"
    anchor: str | None = None
    rule: str = "lex"
    m_grid: str = "1:1e6:log"
    radii: str = "table"
    alpha: str = "1/2"
    trials: int = 10**5
    seed: int = 42
    mode: str = "auto"
    tol: float = 1e-2
    m_max: int = 10**6
    workers: int = 1
    out: str | None = None

    def metadata(self, command: str) -> dict:
        # workers and output path never change the numbers
        meta = {"command": command}
        meta.update({k: v for k, v in asdict(self).items() if k not in ("workers", "out")})
        return meta


@dataclass
class Table:
    header: tuple
    rows: list
    metadata: dict
    violations: list = dc_field(default_factory=list)
    summary: str = ""

    def render(self) -> str:
        return render_csv(self.header, self.rows, self.metadata)

    def write(self, path=None) -> str:
        return write_csv(path, self.header, self.rows, self.metadata)


# ---------------------------------------------------------------------------
# spec parsing


def parse_m_grid(text: str) -> list[int]:
    """``"1:1e6:log"`` (half-decade log grid) or a list ``"10,243,82932"``."""
    text = text.strip()
    if text.endswith(":log"):
        lo, hi, _ = text.split(":")
        lo, hi = int(float(lo)), int(float(hi))
        if lo < 1 or hi < lo:
            raise ValueError(f"bad m-grid '{text}'")
        out = set()
        k = 0
        while True:
            v = int(round(10 ** (k / 2)))
            if v > hi:
                break
            if v >= lo:
                out.add(v)
            k += 1
        out.update({lo, hi})
        return sorted(out)
    vals = sorted({int(float(v)) for v in text.split(",") if v.strip()})
    if not vals or vals[0] < 1:
        raise ValueError(f"bad m-grid '{text}'")
    return vals


def parse_radii(text: str, space, x) -> list:
    """``table``, ``theta:odd`` / ``theta:even`` (dyadic), or ``1/2,1/4,...``."""
    text = text.strip()
    if text == "table":
        if not isinstance(space, AtomicSpace):
            raise ValueError("'table' radii need an atomic space")
        return sorted((r for r in space.sphere_radii(x) if r > 0), reverse=True)
    if text.startswith("theta:"):
        if not hasattr(space, "thresholds"):
            raise ValueError("theta radii need a dyadic space")
        which = text.split(":", 1)[1]
        D = space.depth
        if which == "even":
            return [space.theta(2 * m) for m in range(1, D + 1)]
        if which == "odd":
            # theta_{2D+1} lies below the resolution, where the truncated field vanishes
            return [space.theta(2 * m + 1) for m in range(1, D)]
        raise ValueError(f"bad radii '{text}'")
    return [parse_number(v) for v in text.split(",") if v.strip()]


def build(cfg: ExperimentConfig):
    space = space_from_spec(cfg.space)
    anchor = None if cfg.anchor is None else parse_number(cfg.anchor)
    field = field_from_spec(cfg.field, space, anchor)
    x = parse_number(cfg.x)
    return space, field, x


# ---------------------------------------------------------------------------
# runners


def run_nnconv(cfg: ExperimentConfig) -> Table:
    space, field, x = build(cfg)
    rule = parse_rule(cfg.rule)
    curve = ConvergenceCurve(metadata=cfg.metadata("nnconv"))
    violations = []
    for m in parse_m_grid(cfg.m_grid):
        err, se, method = nn_error(space, field, x, rule, m, cfg.trials, cfg.seed, cfg.workers, cfg.mode)
        curve.add(m, err, se, method)
        if not 0 <= err <= 2 * float(field.bound) + 1e-12:
            violations.append(f"m={m}: error {err} outside [0, 2*bound]")
    return Table(ConvergenceCurve.HEADER, curve.rows, curve.metadata, violations)


def run_ratio(cfg: ExperimentConfig) -> Table:
    space, field, x = build(cfg)
    rows, violations = [], []
    for r in parse_radii(cfg.radii, space, x):
        closed = lebesgue_ratio(space, field, x, r, "closed", exact=True)
        try:
            opened = float(lebesgue_ratio(space, field, x, r, "open", exact=True))
        except UndefinedRatio:
            opened = math.nan
        rows.append((float(r), float(closed), opened))
        if not 0 <= closed <= 2 * field.bound:
            violations.append(f"r={r}: ratio {float(closed)} outside [0, 2*bound]")
    return Table(("r", "ratio_closed", "ratio_open"), rows, cfg.metadata("ratio"), violations)


def run_alphaseq(cfg: ExperimentConfig) -> Table:
    space, field, x = build(cfg)
    meta = cfg.metadata("alphaseq")
    try:
        seq = alpha_sequence(space, field, x, parse_number(cfg.alpha), cfg.m_max)
    except TrivialCase as why:
        meta["trivial"] = str(why)
        return Table(("m", "r_m", "M_value"), [], meta, summary=f"trivial case: {why}")
    rows, violations = [], []
    if seq.blocks:
        for b in seq.blocks:
            rows.append((b.m_lo, float(b.radius), float(seq.M_value(b.radius))))
            for m in (b.m_lo, b.m_hi):
                if not seq.check_m1(m):
                    violations.append(f"m={m}: lower inequality fails")
                if not seq.check_m2(m):
                    violations.append(f"m={m}: upper inequality fails")
    else:
        rows = [(m, r, M) for m, r, M in seq.points]
    meta["m_start"] = seq.m_start
    return Table(("m", "r_m", "M_value"), rows, meta, violations)


def run_conditions(cfg: ExperimentConfig) -> Table:
    space, field, x = build(cfg)
    rule = parse_rule(cfg.rule)
    rows = []
    probes = None if isinstance(space, AtomicSpace) else parse_radii(cfg.radii, space, x)
    mc = check_measure_continuity(space, x, probes=probes)
    rows.append(("measure_continuity", float(mc.constant), mc.holds, ";".join(str(w) for w in mc.witness)))
    if isinstance(space, AtomicSpace):
        ms = parse_m_grid(cfg.m_grid)
        # rational arithmetic stays cheap for moderate m and removes rounding noise
        exact = space.has_exact and max(ms) <= 1000
        tb = check_tie_bias(space, field, x, rule, ms, exact=exact, trials=cfg.trials, seed=cfg.seed,
                            workers=cfg.workers)
        rows.append(("tie_bias", float(tb.constant), tb.holds, ";".join(f"{r}@{m}" for r, m in tb.witness[:5])))
    return Table(("kind", "constant", "holds", "witness"), rows, cfg.metadata("conditions"),
                 [f"{k} does not hold" for k, _, h, _ in rows if not h])


def run_alongseq(cfg: ExperimentConfig) -> Table:
    space, field, x = build(cfg)
    if cfg.radii == "alpha":
        radii = alpha_sequence(space, field, x, parse_number(cfg.alpha), cfg.m_max).radii()
    else:
        radii = parse_radii(cfg.radii, space, x)
    v = along_sequence_check(space, field, x, radii, cfg.tol, exact=True)
    meta = cfg.metadata("alongseq")
    meta["verdict"] = "lebesgue" if v.lebesgue else "not_lebesgue"
    rows = [(float(r), float(q)) for r, q in zip(v.radii, v.ratios)]
    return Table(("r", "ratio"), rows, meta, [] if v.lebesgue else ["verdict: not Lebesgue along this sequence"],
                 summary=meta["verdict"])


def run_lebvalue(cfg: ExperimentConfig) -> Table:
    space, field, x = build(cfg)
    meta = cfg.metadata("lebvalue")
    if cfg.mode == "nn":
        est = lebesgue_value_estimate(space, field, x, "nn", ms=parse_m_grid(cfg.m_grid), rule=parse_rule(cfg.rule), tol=cfg.tol)
        rows = [(m, mean, err) for m, mean, err in est.trace]
        header = ("m", "mean", "abs_dev")
    else:
        est = lebesgue_value_estimate(space, field, x, "ratio", radii=parse_radii(cfg.radii, space, x), tol=cfg.tol)
        rows = [(float(r), mean) for r, mean in est.trace]
        header = ("r", "mean")
    meta["l_hat"] = est.l_hat
    meta["converged"] = est.converged
    return Table(header, rows, meta, [] if est.converged else [f"no convergence (spread {est.spread:.3g})"],
                 summary=f"l_hat={est.l_hat!r} converged={est.converged}")


def run_classify(cfg: ExperimentConfig) -> Table:
    space, field, x = build(cfg)
    model = LabeledModel(space, field)
    rule = parse_rule(cfg.rule)
    mode = "exact" if cfg.mode in ("auto", "exact") else "mc"
    rows, violations = [], []
    for m in parse_m_grid(cfg.m_grid):
        rep: RiskReport = nn_classification_risk(model, rule, m, mode, cfg.trials, cfg.seed, cfg.workers)
        rows.append(rep.row())
        if rep.within_bound() is False:
            violations.append(f"m={m}: |risk - surrogate| exceeds the averaged NN error")
        if not rep.bayes - 1e-12 <= rep.surrogate <= 2 * rep.bayes + 1e-12:
            violations.append(f"m={m}: surrogate outside [bayes, 2 bayes]")
    return Table(RiskReport.HEADER, rows, cfg.metadata("classify"), violations)


RUNNERS = {
    "nnconv": run_nnconv,
    "ratio": run_ratio,
    "alphaseq": run_alphaseq,
    "conditions": run_conditions,
    "alongseq": run_alongseq,
    "lebvalue": run_lebvalue,
    "classify": run_classify,
}
