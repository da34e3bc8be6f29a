"""Acceptance suites A1-A11.

Each ``check_*`` function returns a :class:`CriterionResult`. Details hold
only deterministic numbers, so the CSV written by ``verify --out`` is
reproducible; timings are kept separately for the printed table.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass
from fractions import Fraction

import mpmath
import numpy as np

from .classify import LabeledModel, nn_classification_risk
from .experiments import ExperimentConfig, run_nnconv
from .fields import positive_indicator, table_field
from .lebesgue import alpha_sequence, lebesgue_ratio
from .nn import OnlineNNState, exact_nn_error, f_m, fm_envelope, nn_atom_distribution, online_nn_step
from .oracle import brute_force_nn_distribution, brute_force_nn_error, sphere_conditional
from .space import DyadicIntervalSpace, FiniteAtomicSpace, SignedHarmonicSpace, normalize_to_ball
from .tiebreak import (
    BiasedBernoulliRule,
    LexicographicRule,
    PositivePreferenceRule,
    UniformRandomRule,
    prefer_point,
    select_nn,
)

# bounded-bias error at m = 10**6 must fall below this; pinned from an
# independent closed-form evaluation (0.24996...) before the engines ran
A3_THRESHOLD = 0.2500

GEOM_MS = (1, 10, 100, 1000)


@dataclass
class CriterionResult:
    key: str
    title: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"{self.key:<4} {'PASS' if self.passed else 'FAIL'}  {self.title}: {self.detail} [{self.seconds:.2f}s]"


def _timed(key, title):
    def wrap(fn):
        def run(*args, **kwargs):
            t0 = time.perf_counter()
            passed, detail = fn(*args, **kwargs)
            return CriterionResult(key, title, bool(passed), detail, time.perf_counter() - t0)

        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run

    return wrap


def three_atom_space() -> FiniteAtomicSpace:
    """Query point 0; atoms -1 (0.2) and +1 (0.3) on the unit sphere, 2 (0.5) beyond."""
    return FiniteAtomicSpace.from_coordinates([(-1, "0.2"), (1, "0.3"), (2, "0.5")])


def random_finite_space(seed: int, atoms: int = 5) -> FiniteAtomicSpace:
    """Atoms at distinct nonzero integer coordinates with random rational masses."""
    rng = np.random.default_rng(seed)
    coords = rng.choice([c for c in range(-6, 7) if c], size=atoms, replace=False)
    raw = rng.integers(1, 10, size=atoms)
    total = int(raw.sum())
    return FiniteAtomicSpace.from_coordinates([(int(c), Fraction(int(w), total)) for c, w in zip(coords, raw)])


def random_field(space, seed: int):
    rng = np.random.default_rng(seed + 1000)
    return table_field({p: Fraction(int(v), 4) for p, v in zip(space.points, rng.integers(0, 5, len(space.points)))})


# ---------------------------------------------------------------------------


@_timed("A1", "sphere law for ISIMIN rules")
def check_a1():
    space = three_atom_space()
    target = {Fraction(-1): Fraction(2, 5), Fraction(1): Fraction(3, 5)}
    ok = True
    for rule in (LexicographicRule(), UniformRandomRule()):
        for m in (1, 2, 3, 4):
            law = brute_force_nn_distribution(space, 0, rule, m)
            ok &= sphere_conditional(law, space, 0, 1) == target
            engine = {p: q for p, _, q in nn_atom_distribution(space, 0, rule, m, exact=True)}
            ok &= engine == law
    biased = sphere_conditional(brute_force_nn_distribution(space, 0, prefer_point(Fraction(1)), 2), space, 0, 1)
    expect = {Fraction(-1): Fraction(8, 25), Fraction(1): Fraction(17, 25)}
    gap = abs(biased[Fraction(1)] - target[Fraction(1)])
    ok &= biased == expect and gap >= Fraction(1, 20)
    return ok, f"ISIMIN conditional 2/5,3/5 for m=1..4; prefer-b m=2 -> {biased[Fraction(-1)]},{biased[Fraction(1)]} (gap {float(gap):.2f})"


@_timed("A2", "divergence under positive preference")
def check_a2():
    space, field = SignedHarmonicSpace(8), positive_indicator(anchor=0)
    floor = 1 / (4 * math.e**2)
    vals = {m: exact_nn_error(space, field, 0, PositivePreferenceRule(), m) for m in (10, 243, 82932)}
    ok = all(v >= floor for v in vals.values())
    ok &= vals[10] >= 0.06 and vals[243] >= 0.06
    ok &= all(v >= 0.5 * (1 - 2 / m) ** (m - 1) for m, v in vals.items())
    return ok, ", ".join(f"m={m}: {v:.6f}" for m, v in vals.items()) + f" (floor {floor:.6f})"


@_timed("A3", "convergence under bounded bias")
def check_a3():
    space, field = SignedHarmonicSpace(8), positive_indicator(anchor=0)
    ms = (10**2, 10**4, 10**6)
    vals = [exact_nn_error(space, field, 0, BiasedBernoulliRule(2), m) for m in ms]
    ok = all(a > b for a, b in zip(vals, vals[1:])) and vals[-1] < A3_THRESHOLD
    return ok, ", ".join(f"m={m}: {v:.6f}" for m, v in zip(ms, vals)) + f" (threshold {A3_THRESHOLD})"


@_timed("A4", "Lebesgue-ratio bounds")
def check_a4(tol: float = 1e-12):
    sh, field = SignedHarmonicSpace(8), positive_indicator(anchor=0)
    ok = all(lebesgue_ratio(sh, field, 0, Fraction(1, n), exact=True) <= Fraction(1, n) for n in range(1, 7))
    dy = DyadicIntervalSpace(3)
    eta = dy.canonical_field()
    worst = []
    for m in (1, 2):
        even = lebesgue_ratio(dy, eta, 0, dy.theta(2 * m), exact=True)
        odd = lebesgue_ratio(dy, eta, 0, dy.theta(2 * m + 1), exact=True)
        ok &= float(even) <= 2.0 ** -(2 ** (2 * m)) + tol
        ok &= float(odd) >= 1 - 2.0 ** -(2 ** (2 * m + 1)) - tol
        worst.append((float(even), float(odd)))
    return ok, "harmonic ratio(1/n) <= 1/n for n<=6; dyadic (even, odd) " + ", ".join(f"({e:.3g}, {o:.6f})" for e, o in worst)


@_timed("A5", "alpha-sequence inequalities")
def check_a5(m_max: int = 10**6):
    """Every m in [m_start, m_max], in integer arithmetic.

    With alpha = 1/2 the lower inequality reads ``m^2 E P >= 1`` on the
    closed ball at ``r_m`` and the upper one ``m^2 E P <= 1`` on the open
    ball, so each block reduces to two cross-multiplied integer tests.
    """
    space, field = SignedHarmonicSpace(8), positive_indicator(anchor=0)
    seq = alpha_sequence(space, field, 0, Fraction(1, 2), m_max, exact=True)
    bad, checked = [], 0
    for b in seq.blocks:
        lower = b.closed_integral * b.closed_mass
        upper = b.open_integral * b.open_mass
        for m in range(b.m_lo, b.m_hi + 1):
            mm = m * m
            checked += 1
            if mm * lower.numerator < lower.denominator or mm * upper.numerator > upper.denominator:
                bad.append(m)
        # the helper methods must agree with the inline test at the block ends
        if not all(seq.check_m1(m) and seq.check_m2(m) for m in (b.m_lo, b.m_hi)):
            bad.append((b.m_lo, b.m_hi))
    covered = checked == m_max - seq.m_start + 1
    radii = [str(b.radius) for b in seq.blocks]
    shrinking = all(a.radius > b.radius for a, b in zip(seq.blocks, seq.blocks[1:]))
    return not bad and covered and shrinking, f"m_start={seq.m_start}, radii {radii}, {checked} m checked, failures {bad[:5]}"


def geom_check(space, field, x, rule, ms=GEOM_MS, oracle_ms=(1, 2, 3)) -> tuple[bool, list]:
    """Interior, sphere and exterior bounds plus the ratio/NN-error bound, exactly."""
    c = Fraction(field.anchor_at(x))
    B = Fraction(field.bound)
    table = [row for row in space.sphere_table(x, exact=True) if row.radius > 0]
    failures = []
    for m in ms:
        law = nn_atom_distribution(space, x, rule, m, exact=True)
        total_err = sum((q * abs(Fraction(field(p)) - c) for p, _, q in law), Fraction(0))
        for row in table:
            r = row.radius
            inner = sum((q * abs(Fraction(field(p)) - c) for p, rad, q in law if rad < r), Fraction(0))
            shell = sum((q * abs(Fraction(field(p)) - c) for p, rad, q in law if rad == r), Fraction(0))
            outer = sum((q * abs(Fraction(field(p)) - c) for p, rad, q in law if rad > r), Fraction(0))
            P_open, P_sphere, P_closed = row.open, row.sphere, row.closed
            open_int = space.ball_integral(x, r, field, c, closed=False, exact=True)
            closed_int = space.ball_integral(x, r, field, c, closed=True, exact=True)
            checks = {
                "interior": inner <= m * open_int,
                "sphere_pow": shell <= 2 * B * m * P_sphere * (1 - P_open) ** (m - 1),
                "exterior_pow": outer <= 2 * B * (1 - P_closed) ** m,
            }
            with mpmath.workdps(60):
                def mp(q):
                    return mpmath.mpf(q.numerator) / q.denominator

                checks["sphere_exp"] = mp(shell) <= 2 * mp(B) * m * mp(P_sphere) * mpmath.exp(-(m - 1) * mp(P_open))
                checks["exterior_exp"] = mp(outer) <= 2 * mp(B) * mpmath.exp(-m * mp(P_closed))
            if P_closed < 1:
                ratio = closed_int / P_closed
                checks["vs"] = ratio * m * P_closed * (1 - P_closed) ** (m - 1) <= total_err
            failures += [(str(r), m, k) for k, v in checks.items() if not v]
        if m in oracle_ms and space.has_exact and len(space.atoms()) ** m <= 10**6:
            if brute_force_nn_error(space, field, x, rule, m) != total_err:
                failures.append(("oracle", m, "mismatch"))
    for m in oracle_ms:
        if m not in ms and len(space.atoms()) ** m <= 10**6:
            if brute_force_nn_error(space, field, x, rule, m) != exact_nn_error(space, field, x, rule, m, exact=True):
                failures.append(("oracle", m, "mismatch"))
    return not failures, failures


@_timed("A6", "three-term bounds and ratio/error inequality")
def check_a6():
    cases = [(SignedHarmonicSpace(8), positive_indicator(anchor=0), 0)]
    for seed in (1, 2):
        sp = random_finite_space(seed)
        cases.append((sp, random_field(sp, seed), 0))
    failures, points = [], 0
    for space, field, x in cases:
        for rule in (LexicographicRule(), UniformRandomRule()):
            ok, bad = geom_check(space, field, x, rule)
            failures += bad
            points += len(GEOM_MS) * len([r for r in space.sphere_radii(x) if r > 0])
    return not failures, f"{points} grid points over 3 spaces x 2 rules, failures {failures[:3]}"


@_timed("A7", "sandwich bounds on sphere hits")
def check_a7(m_top: int = 20):
    harmonic = SignedHarmonicSpace(8)
    spaces = [(harmonic, [0]), (three_atom_space(), [0, -1, 1, 2]),
              (normalize_to_ball(harmonic, 0, Fraction(1, 2)), [0, Fraction(1, 3)])]
    bad, count = [], 0
    for space, anchors in spaces:
        for x in anchors:
            table = space.sphere_table(x, exact=True)
            for m in range(1, m_top + 1):
                law = nn_atom_distribution(space, x, LexicographicRule(), m, exact=True)
                for row in table:
                    hit = sum((q for _, rad, q in law if rad == row.radius), Fraction(0))
                    count += 1
                    if not (m * row.sphere >= hit >= row.sphere**m):
                        bad.append((space.kind, x, m, row.radius))
    return not bad, f"{count} (space, x, m, r) cases, failures {bad[:3]}"


@_timed("A8", "online NN equals batch lexicographic NN")
def check_a8(streams: int = 1000, seed: int = 8):
    rng = np.random.default_rng(seed)
    bad = 0
    for s in range(streams):
        k = int(rng.integers(1, 7))
        coords = [Fraction(int(c), int(rng.integers(1, 4))) for c in rng.integers(-5, 6, k)]
        values = {c: Fraction(int(v), 3) for c, v in zip(coords, rng.integers(-3, 4, k))}
        field = table_field(values)
        x = Fraction(int(rng.integers(-4, 5)), 2)
        stream = [coords[int(i)] for i in rng.integers(0, k, int(rng.integers(1, 51)))]
        state = OnlineNNState()
        for t in range(1, len(stream) + 1):
            state = online_nn_step(state, stream[t - 1], field, x)
            i, p = select_nn(x, stream[:t], LexicographicRule())
            if state.R != abs(p - x) or state.Y != field(stream[i]):
                bad += 1
    return bad == 0, f"{streams} streams, {bad} prefix mismatches"


@_timed("A9", "classification risk convergence")
def check_a9(trials: int = 10**5, seed: int = 9, workers: int = 1):
    space = FiniteAtomicSpace.from_coordinates([(0, "0.5"), (1, "0.5")])
    model = LabeledModel(space, table_field({0: "0.3", 1: "0.8"}))
    rule = LexicographicRule()
    exact64 = nn_classification_risk(model, rule, 64)
    ok = abs(exact64.risk - 0.37) <= 1e-6
    mc = nn_classification_risk(model, rule, 64, "mc", trials, seed, workers)
    ok &= abs(mc.risk - 0.37) <= 4 * mc.stderr
    for m in (1, 2, 4, 8, 16, 32, 64):
        rep = nn_classification_risk(model, rule, m, exact=True)
        ok &= rep.within_bound(0)
    real = LabeledModel(space, table_field({0: 0, 1: 1}))
    r256 = nn_classification_risk(real, rule, 256).risk
    ok &= r256 < 1e-3
    return ok, (f"exact m=64 {exact64.risk:.9f}; mc m=64 {mc.risk:.5f}+-{mc.stderr:.5f}; "
                f"bound holds m=1..64; realizable m=256 {r256:.3g}")


@_timed("A10", "f_m envelope")
def check_a10(tol: float = 1e-14):
    inv_e = math.exp(-1)
    bad = []
    envs = {m: fm_envelope(m, tol) for m in range(2, 102)}
    for m in range(2, 101):
        env = envs[m]
        peak = f_m(m, 1 / m)
        ok = abs(peak - env.f_max) <= 1e-15 * env.f_max and env.f_max > inv_e
        ok &= all(f_m(m, t) <= env.f_max * (1 + 1e-15) for t in np.linspace(0, 1, 201))
        ok &= env.a <= env.t_max <= env.b
        # the bisection brackets the level crossing to within 2 tol
        ok &= f_m(m, env.a - 2 * tol) < inv_e <= f_m(m, env.a + 2 * tol)
        ok &= f_m(m, env.b - 2 * tol) >= inv_e > f_m(m, env.b + 2 * tol)
        ok &= env.a <= envs[m + 1].b <= env.b
        if not ok:
            bad.append(m)
    return not bad, f"m=2..100, failures {bad}"


@_timed("A11", "reproducibility across worker counts")
def check_a11(seed: int = 11):
    cfg = dict(space="signed_harmonic:N=8", field="positive", x="0", rule="uniform", m_grid="1,10,100",
               trials=20000, seed=seed, mode="mc")
    texts = {w: run_nnconv(ExperimentConfig(workers=w, **cfg)).render() for w in (1, 3)}
    again = run_nnconv(ExperimentConfig(workers=1, **cfg)).render()
    verify_texts = {w: render_results([check_a9(trials=20000, seed=seed, workers=w)]) for w in (1, 4)}
    ok = texts[1] == texts[3] == again and verify_texts[1] == verify_texts[4]
    return ok, f"nnconv and verify CSVs identical across workers ({len(texts[1])} bytes)"


SUITES = {
    "acceptance": [check_a1, check_a2, check_a3, check_a4, check_a5, check_a6, check_a7, check_a8, check_a9, check_a10,
              check_a11],
}


def oracle_suite(max_atoms: int = 5, max_m: int = 4, seed: int = 0) -> list[CriterionResult]:
    """Engine vs enumeration on random finite spaces for all four rules."""
    results = [check_a1()]
    t0 = time.perf_counter()
    rules = [LexicographicRule(), UniformRandomRule(), BiasedBernoulliRule(2), PositivePreferenceRule()]
    bad, count = [], 0
    for k, m in itertools.product(range(1, max_atoms + 1), range(1, max_m + 1)):
        space = random_finite_space(seed + 17 * k + m, atoms=k)
        field = random_field(space, seed + k)
        for rule in rules:
            count += 1
            a = brute_force_nn_error(space, field, 0, rule, m)
            b = exact_nn_error(space, field, 0, rule, m)
            if abs(float(a) - b) > 1e-12:
                bad.append((k, m, rule.name))
    results.append(CriterionResult("O1", "engine matches enumeration", not bad,
                                   f"{count} instances, failures {bad[:3]}", time.perf_counter() - t0))
    return results


def run_suite(name: str, workers: int = 1) -> list[CriterionResult]:
    if name == "oracle":
        return oracle_suite()
    return [check(workers=workers) if check is check_a9 else check() for check in SUITES[name]]


def render_results(results) -> str:
    from ._csvio import render_csv

    return render_csv(("criterion", "passed", "detail"), [(r.key, r.passed, r.detail) for r in results])
