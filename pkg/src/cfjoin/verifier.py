"""Batch experiment runners wiring all modules, with machine-readable reports.

Every runner returns a CheckReport whose numeric claims carry their
tolerances, plus optional CSV tables.  Anchors are the short labels of the
identities and estimates being checked, so reports can be grepped against
the design notes.  All randomness flows through named substreams of the
config seed; rerunning a config byte-reproduces every artifact.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import cf_engine, cocycles, equidist, joinings, rank_one
from .cf_engine import CFLevels, CFParams, substream
from .groups import (
    D6_ELEMENTS,
    D6Element,
    GElement,
    SU2_H0,
    SU2_I,
    SU2Element,
    conj_star,
    d6_mul,
    is_central,
    quat_inv,
    quat_mul,
    quat_normalize,
    quat_phi_int,
    quat_phi_real,
)

__all__ = [
    "ExperimentConfig",
    "CheckReport",
    "Metric",
    "run_groups",
    "run_sequences",
    "run_validate_cf",
    "run_equidist",
    "run_sample_sets",
    "run_weak_mixing",
    "run_lemma62",
    "run_fubini",
    "run_joining_classification",
    "run_counterexample_51",
    "run_nonuniqueness_42",
    "emit_report",
    "run_all",
    "EXPERIMENTS",
]


# ---------------------------------------------------------------------------
# config and report containers
# ---------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    seed: int = 0
    construction: CFParams = field(default_factory=cf_engine.default_params)
    mc_samples: int = 1_000_000
    truncation: int = 12
    dictionary_id: str = "k16-default-v1"
    output_dir: str = "out"
    window_level: int = 4
    weakmix_levels: tuple[int, ...] = (2, 3, 4, 5, 6)
    experiments: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "construction": self.construction.to_json(),
            "mc_samples": self.mc_samples,
            "truncation": self.truncation,
            "dictionary_id": self.dictionary_id,
            "output_dir": self.output_dir,
            "window_level": self.window_level,
            "weakmix_levels": list(self.weakmix_levels),
            "experiments": list(self.experiments),
        }

    @staticmethod
    def from_json(data: dict) -> "ExperimentConfig":
        return ExperimentConfig(
            seed=int(data.get("seed", 0)),
            construction=CFParams.from_json(data.get("construction", {})),
            mc_samples=int(data.get("mc_samples", 1_000_000)),
            truncation=int(data.get("truncation", 12)),
            dictionary_id=data.get("dictionary_id", "k16-default-v1"),
            output_dir=data.get("output_dir", "out"),
            window_level=int(data.get("window_level", 4)),
            weakmix_levels=tuple(data.get("weakmix_levels", (2, 3, 4, 5, 6))),
            experiments=tuple(data.get("experiments", ())),
        )


@dataclass
class Metric:
    name: str
    value: float
    tolerance: Optional[float] = None
    stderr: Optional[float] = None
    passed: Optional[bool] = None

    def as_dict(self) -> dict:
        out = {"name": self.name, "value": float(self.value)}
        if self.tolerance is not None:
            out["tolerance"] = float(self.tolerance)
        if self.stderr is not None:
            out["stderr"] = float(self.stderr)
        if self.passed is not None:
            out["passed"] = bool(self.passed)
        return out


@dataclass
class CheckReport:
    name: str
    anchor: str
    metrics: list[Metric] = field(default_factory=list)
    csv_tables: dict = field(default_factory=dict)  # filename -> (header, rows)

    @property
    def status(self) -> str:
        return "pass" if all(m.passed is not False for m in self.metrics) else "fail"

    def add(self, name, value, tolerance=None, stderr=None, passed=None) -> None:
        self.metrics.append(Metric(name, float(value), tolerance, stderr, passed))

    def as_dict(self) -> dict:
        return {
            "experiment": self.name,
            "status": self.status,
            "anchors": self.anchor,
            "metrics": [m.as_dict() for m in self.metrics],
        }


def _levels_cache(cfg: ExperimentConfig, _cache={}) -> CFLevels:
    key = (cfg.seed, json.dumps(cfg.construction.to_json(), sort_keys=True))
    if key not in _cache:
        _cache[key] = cf_engine.build_levels(cfg.construction, seed=cfg.seed)
    return _cache[key]


# ---------------------------------------------------------------------------
# group arithmetic experiment
# ---------------------------------------------------------------------------

def run_groups(cfg: ExperimentConfig) -> CheckReport:
    rep = CheckReport("groups", "tabelka;C(G);phi-period")
    # exhaustive D6 associativity and the two table reads
    assoc = all(
        d6_mul(d6_mul(x, y), z) == d6_mul(x, d6_mul(y, z))
        for x in D6_ELEMENTS
        for y in D6_ELEMENTS
        for z in D6_ELEMENTS
    )
    rep.add("d6-associativity-216", 1.0 if assoc else 0.0, passed=assoc)
    ab = d6_mul(D6Element("a"), D6Element("b")).label
    ba = d6_mul(D6Element("b"), D6Element("a")).label
    rep.add("d6-ab-is-d", 1.0 if ab == "d" else 0.0, passed=ab == "d")
    rep.add("d6-ba-is-f", 1.0 if ba == "f" else 0.0, passed=ba == "f")

    rng = substream(cfg.seed, "groups")
    n = 10_000
    t1 = rng.uniform(-3, 3, size=n)
    t2 = rng.uniform(-3, 3, size=n)
    m1 = quat_normalize(rng.standard_normal((n, 4)))
    m2 = quat_normalize(rng.standard_normal((n, 4)))
    m3 = quat_normalize(rng.standard_normal((n, 4)))

    def vec_g_mul(ta, ma, tb, mb):
        return ta + tb, quat_mul(ma, quat_phi_real(ta, mb))

    t3 = rng.uniform(-3, 3, size=n)
    txy, mxy = vec_g_mul(t1, m1, t2, m2)
    tl, ml = vec_g_mul(txy, mxy, t3, m3)
    tyz, myz = vec_g_mul(t2, m2, t3, m3)
    tr, mr = vec_g_mul(t1, m1, tyz, myz)
    worst_assoc = float(max(np.max(np.abs(tl - tr)), np.max(np.abs(ml - mr))))

    worst_phi_add = float(
        np.max(np.abs(quat_phi_real(t1 + t2, m3) - quat_phi_real(t1, quat_phi_real(t2, m3))))
    )
    worst_phi2 = float(np.max(np.abs(quat_phi_real(np.full(n, 2.0), m1) - m1)))
    # x^{-1} = (-t, phi_{-t}(m^{-1})); check x x^{-1} lands at the identity
    tinv, minv = -t1, quat_phi_real(-t1, quat_inv(m1))
    te, me = vec_g_mul(t1, m1, tinv, minv)
    ident = np.zeros((n, 4))
    ident[:, 0] = 1.0
    worst_inv = float(max(np.max(np.abs(te)), np.max(np.abs(me - ident))))
    worst_star = float(np.max(np.abs(quat_phi_int(1, quat_phi_int(1, m1)) - m1)))
    tol = 1e-12
    rep.add("g-associativity-max", worst_assoc, tolerance=tol, passed=worst_assoc <= tol)
    rep.add("phi-additivity-max", worst_phi_add, tolerance=tol, passed=worst_phi_add <= tol)
    rep.add("phi-period-2-max", worst_phi2, tolerance=tol, passed=worst_phi2 <= tol)
    rep.add("g-inverse-max", worst_inv, tolerance=tol, passed=worst_inv <= tol)
    rep.add("star-involution-max", worst_star, tolerance=tol, passed=worst_star <= tol)

    central = is_central(GElement(2.0, SU2_I), 10_000, substream(cfg.seed, "central-2I"))
    rep.add("central-2I", 1.0 if central.central else 0.0, passed=central.central)
    nc1 = is_central(GElement(1.0, SU2_I), 200, substream(cfg.seed, "central-1I"))
    rep.add("noncentral-1I-witnessed", 0.0 if nc1.central else 1.0, passed=not nc1.central)
    nc2 = is_central(GElement(0.0, SU2_H0), 200, substream(cfg.seed, "central-h0"))
    rep.add("noncentral-h0-witnessed", 0.0 if nc2.central else 1.0, passed=not nc2.central)
    return rep


# ---------------------------------------------------------------------------
# sequences / validation experiments
# ---------------------------------------------------------------------------

def run_sequences(cfg: ExperimentConfig) -> CheckReport:
    rep = CheckReport("sequences", "jk1;eq:inpart;eq:9;y4")
    params = cfg.construction
    seq = cf_engine.derive_sequences(params, 8)
    rep.add("a0", seq[0][0], passed=seq[0] == (1, 1))
    ok_rec = True
    for n in range(8):
        a_next = seq[n][1] * (2 * params.r(n) - 1)
        at_next = a_next + (2 * n + 1) * seq[n][1]
        ok_rec &= seq[n + 1] == (a_next, at_next)
    rep.add("recursion-exact-to-8", 1.0 if ok_rec else 0.0, passed=ok_rec)

    # ratio identity: a~_n / a_n = 1 + (2n-1)/(2 r_{n-1} - 1), exact rationals
    worst = 0.0
    exact = True
    for n in range(1, 8):
        lhs = cf_engine.level_ratio(seq, n)
        rhs = 1 + Fraction(2 * n - 1, 2 * params.r(n - 1) - 1)
        exact &= lhs == rhs
        worst = max(worst, abs(float(lhs) - float(rhs)))
    rep.add("ratio-identity-max-err", worst, tolerance=1e-12, passed=exact)

    mu0, tail = cf_engine.mu_total_normalizer(params, depth=120)
    rep.add("mu-x0", mu0)
    rep.add("mu-tail-bound", tail, tolerance=1e-6, passed=tail < 1e-6)

    # consistency mu(X_{n+1}) = ratio_n mu(X_n)
    levels = _levels_cache(cfg)
    worst = max(
        abs(levels.mu_xn(n + 1) - float(cf_engine.level_ratio(seq, n)) * levels.mu_xn(n))
        for n in range(6)
    )
    rep.add("mu-consistency-max", worst, tolerance=1e-12, passed=worst <= 1e-12)

    # cylinder consistency: mu([A]_n) = #C_{n+1} mu([A c]_{n+1}) for full fibers
    lv = levels.level(1)
    block = cf_engine.full_block(Fraction(-30), Fraction(55))
    cyl = cf_engine.CylinderSet(1, [block])
    v1, _ = cf_engine.cylinder_measure(cyl, levels)
    h = 3
    t_c = lv.correction_time_fraction(h)
    cyl2 = cf_engine.CylinderSet(2, [cf_engine.full_block(block.lo + t_c, block.hi + t_c)])
    v2, _ = cf_engine.cylinder_measure(cyl2, levels)
    err = abs(v1 - lv.card_c_next * v2)
    rep.add("cylinder-y4-consistency", err, tolerance=1e-12, passed=err <= 1e-12)

    rows = cf_engine.level_dump_rows(levels)
    rep.csv_tables["sequences.csv"] = (
        ["n", "a", "a_tilde", "card_C", "ratio"],
        [[r["n"], r["a"], r["a_tilde"], r["card_C"], repr(r["ratio"])] for r in rows],
    )
    return rep


def run_validate_cf(cfg: ExperimentConfig) -> CheckReport:
    rep = CheckReport("validate-cf", "w:fo;w:2;w:3;w:4;6-9;eq:9")
    levels = _levels_cache(cfg)
    report = cf_engine.validate_cf(levels)
    for cond in report.conditions:
        rep.add(cond.name, 1.0 if cond.passed else 0.0, passed=cond.passed)
    return rep


# ---------------------------------------------------------------------------
# discrepancy / chart experiments
# ---------------------------------------------------------------------------

def _lipschitz_family(rng: np.random.Generator, count: int):
    """Random low-order trig polynomials with known integral and Lipschitz
    constant; returns (callable, integral, L) triples."""
    out = []
    for _ in range(count):
        coef = rng.uniform(-1, 1, size=(3, 2))
        c0 = float(rng.uniform(-1, 1))
        lip = float(sum(2 * math.pi * (m + 1) * (abs(a) + abs(b)) for m, (a, b) in enumerate(coef)))

        def f(x, coef=coef, c0=c0):
            x = np.asarray(x)
            val = np.full(x.shape, c0)
            for m, (a, b) in enumerate(coef):
                val = val + a * np.sin(2 * math.pi * (m + 1) * x) + b * np.cos(
                    2 * math.pi * (m + 1) * x
                )
            return val

        out.append((f, c0, lip))
    return out


def run_equidist(cfg: ExperimentConfig) -> CheckReport:
    rep = CheckReport("equidist", "dyskrepancja;hlawka;oxtoby")
    # exact grid discrepancies
    for n in (10, 100, 1000):
        pts = [Fraction(k, n) for k in range(n)]
        d = equidist.star_discrepancy_exact_1d(pts)
        rep.add(f"grid-dstar-{n}", float(d), tolerance=0.0, passed=d == Fraction(1, n))

    # radical-inverse checkpoints
    seq = equidist.van_der_corput(2**14)
    prev = None
    mono = True
    for k in range(8, 15):
        d = equidist.star_discrepancy(equidist.PointCloud(seq[: 2**k, None]))
        if prev is not None and d > prev + 1e-15:
            mono = False
        rep.add(f"vdc-dstar-2^{k}", d)
        prev = d
    rep.add("vdc-monotone-checkpoints", 1.0 if mono else 0.0, passed=mono)

    # quantitative bound dominates empirical integration error
    rng = substream(cfg.seed, "lipschitz")
    pts = seq[:1024]
    d_star = equidist.star_discrepancy(equidist.PointCloud(pts[:, None]))
    ok = True
    worst_ratio = 0.0
    for f, integral, lip in _lipschitz_family(rng, 20):
        err = abs(float(np.mean(f(pts))) - integral)
        bound = equidist.koksma_hlawka_bound(lambda d, lip=lip: lip * d, d_star, 1)
        ok &= err <= bound
        worst_ratio = max(worst_ratio, err / bound)
    rep.add("kh-bound-dominates", worst_ratio, tolerance=1.0, passed=ok)

    # chart transport: Haar mass of chart-cube images matches cube volume
    rng = substream(cfg.seed, "chart-cubes")
    qs = equidist.haar_sample_su2(substream(cfg.seed, "haar"), 200_000)
    us = equidist.su2_to_chart_array(qs)
    worst_sigma = 0.0
    for _ in range(50):
        lo = rng.uniform(0.0, 0.6, size=3)
        hi = lo + rng.uniform(0.1, 0.4, size=3)
        hi = np.minimum(hi, 1.0)
        vol = float(np.prod(hi - lo))
        inside = np.all((us >= lo) & (us < hi), axis=1)
        p = float(inside.mean())
        sigma = math.sqrt(max(vol * (1 - vol), 1e-12) / len(qs))
        worst_sigma = max(worst_sigma, abs(p - vol) / sigma)
    rep.add("chart-cube-worst-sigma", worst_sigma, tolerance=3.9, passed=worst_sigma <= 3.9)

    # Haar moments
    mean_coord = float(np.max(np.abs(qs.mean(axis=0))))
    rep.add("haar-mean-coord", mean_coord, tolerance=4 / math.sqrt(len(qs)),
            passed=mean_coord <= 4 / math.sqrt(len(qs)))
    z2 = float(np.mean(qs[:, 0] ** 2 + qs[:, 1] ** 2))
    rep.add("haar-z2-deviation", abs(z2 - 0.5), tolerance=4 / math.sqrt(len(qs)),
            passed=abs(z2 - 0.5) <= 4 / math.sqrt(len(qs)))

    # round trip of the chart
    u = substream(cfg.seed, "roundtrip").uniform(0.05, 0.95, size=(200, 3))
    m = equidist.chart_to_su2_array(u)
    back = equidist.su2_to_chart_array(m)
    rt = float(np.max(np.abs(back - u)))
    rep.add("chart-roundtrip-max", rt, tolerance=1e-10, passed=rt <= 1e-10)
    return rep


# ---------------------------------------------------------------------------
# sample sets: conditional-measure approximation and correction maps
# ---------------------------------------------------------------------------

def _rect_membership(t, quats, a_elem: GElement, interval, cube):
    """Membership of slab points x in A^{-1} a_elem for a rectangle A.

    x in A^{-1} a  iff  a x^{-1} in A; the time part is an interval test and
    the fiber part (when A has a cube fiber) goes through the chart.
    """
    lo, hi = interval
    ta = a_elem.t - t
    sel = (ta > lo) & (ta <= hi)
    if cube is None:
        return sel
    # fiber of a x^{-1} = M_a * phi_{t_a - t}(M_x^{-1})
    from .groups import quat_inv

    fib = quat_mul(a_elem.m.array(), quat_phi_real(ta, quat_inv(quats)))
    u = equidist.su2_to_chart_array(fib)
    inside = np.ones(len(t), dtype=bool)
    for dim, (lo_b, hi_b) in enumerate(cube):
        inside &= (u[:, dim] >= lo_b) & (u[:, dim] < hi_b)
    return sel & inside


def _sample_set_fraction(ss: equidist.FiniteSampleSet, membership) -> float:
    """Fraction of the (virtual) sample set satisfying a membership predicate
    that is supported on a bounded time window."""
    hits = 0
    block = 4096
    shells = np.array(list(ss.shells), dtype=np.int64)
    for start in range(0, len(shells), block):
        ls = shells[start : start + block]
        t = (ls[:, None] + ss.u_time[None, :]).ravel()
        q = np.broadcast_to(ss.quats, (len(ls),) + ss.quats.shape).reshape(-1, 4)
        hits += int(np.sum(membership(t, q)))
    return hits / ss.size


def run_sample_sets(cfg: ExperimentConfig) -> CheckReport:
    rep = CheckReport("sample-sets", "techniczny-i;techniczny-ii;lm:6.2")
    params = cfg.construction
    levels = _levels_cache(cfg)
    mc = cfg.mc_samples

    for n in (2, 3):
        eps = params.eps(n)
        count = params.sample_count if n == 2 else max(params.sample_count // 4, 8)
        ss = cf_engine.build_sample_set(n, params, count)
        half = ss.half_width
        rng = substream(cfg.seed, f"techniczny-{n}")

        # containment of every element in the slab (construction constraint)
        in_slab = all(
            -half <= l < half for l in list(ss.shells)[:: max(1, 2 * half // 64)]
        )
        rep.add(f"shat-in-slab-n{n}", float(in_slab), passed=in_slab)

        # (i): conditional measures of two-sided translate intersections;
        # rectangles at slab scale so the fractions compared are order 0.1-0.5
        worst = 0.0
        for trial in range(6):
            wa = rng.uniform(0.4, 0.9) * 2 * half
            wb = rng.uniform(0.4, 0.9) * 2 * half
            lo_a = rng.uniform(-0.3, 0.1) * half - wa / 2
            lo_b = rng.uniform(-0.3, 0.1) * half - wb / 2
            cube_a = None
            cube_b = None
            if trial >= 3:
                clo = rng.uniform(0.0, 0.4, size=3)
                chi = clo + rng.uniform(0.4, 0.6, size=3)
                cube_a = tuple((float(a), float(min(b, 1.0))) for a, b in zip(clo, chi))
            a_el = GElement(float(rng.uniform(-half / 4, half / 4)),
                            SU2Element.from_array(rng.standard_normal(4)))
            b_el = GElement(a_el.t + float(rng.uniform(-3, 3)),
                            SU2Element.from_array(rng.standard_normal(4)))

            def member(t, q):
                in_a = _rect_membership(t, q, a_el, (lo_a, lo_a + wa), cube_a)
                in_b = _rect_membership(t, q, b_el, (lo_b, lo_b + wb), cube_b)
                return in_a & in_b

            t_mc = rng.uniform(-half, half, size=mc)
            q_mc = quat_normalize(rng.standard_normal((mc, 4)))
            mc_frac = float(np.mean(member(t_mc, q_mc)))
            ss_frac = _sample_set_fraction(ss, member)
            worst = max(worst, abs(mc_frac - ss_frac))
        rep.add(f"techniczny-i-n{n}", worst, tolerance=eps, passed=worst < eps)

        # (ii): double averages of the base-overlap kernel.  The kernel is of
        # order K/a_n, so the absolute gate is easy; the relative agreement
        # of the two averages is reported as the informative quality figure.
        a_n = levels.a(n)
        worst2 = 0.0
        worst2_rel = 0.0
        for _ in range(4):
            wa = rng.uniform(0.5, 1.5) * half
            wb = rng.uniform(0.5, 1.5) * half
            ta = float(rng.uniform(-half, half))
            tb = float(rng.uniform(-half, half))

            def kernel(delta, wa=wa, wb=wb, ta=ta, tb=tb):
                # overlap length of (0, wa] + ta + delta and (0, wb] + tb
                lo = np.maximum(ta + delta, tb)
                hi = np.minimum(ta + delta + wa, tb + wb)
                return np.maximum(hi - lo, 0.0) / (2.0 * a_n)

            tv = rng.uniform(-half, half, size=mc)
            tw = rng.uniform(-half, half, size=mc)
            mc_val = float(np.mean(kernel(tv - tw)))

            # exact pair sum over the virtual product set via the shell shift
            # structure: t_v - t_w = d + u_i - u_j with multiplicity 2K - |d|
            d_lo = int(math.floor(tb - ta - wa - 2))
            d_hi = int(math.ceil(tb - ta + wb + 2))
            if d_hi - d_lo > 8 * half:
                d_lo, d_hi = -2 * half, 2 * half
            du = ss.u_time[:, None] - ss.u_time[None, :]
            total = 0.0
            for dshift in range(d_lo, d_hi + 1):
                mult = 2 * half - abs(dshift)
                if mult <= 0:
                    continue
                total += mult * float(np.sum(kernel(dshift + du)))
            ss_val = total / (ss.size**2)
            worst2 = max(worst2, abs(mc_val - ss_val))
            worst2_rel = max(worst2_rel, abs(mc_val - ss_val) / max(mc_val, 1e-12))
        rep.add(f"techniczny-ii-n{n}", worst2, tolerance=eps, passed=worst2 < eps)
        rep.add(f"techniczny-ii-rel-n{n}", worst2_rel)

    # correction maps: boundary pinning exact, pair distance below tolerance
    for n in range(1, levels.max_level + 1):
        sm = levels.level(n).s_map
        idx = sm.alphabet.identity_index
        boundary = sm.values[0] == idx and sm.values[-1] == idx
        rep.add(f"smap-boundary-n{n}", 1.0 if boundary else 0.0, passed=bool(boundary))
        if n >= 2:
            rep.add(
                f"smap-pair-l1-n{n}",
                sm.pair_distance,
                tolerance=sm.tolerance,
                passed=sm.pair_distance < sm.tolerance,
            )
            rep.add(f"smap-triple-l1-n{n}", sm.triple_distance)
    return rep


# ---------------------------------------------------------------------------
# weak mixing along the central translates
# ---------------------------------------------------------------------------

def _level1_full_rectangles(levels: CFLevels):
    a1 = levels.a(1)
    A = (Fraction(-a1, 2), Fraction(a1, 4))
    B = (Fraction(-a1, 8), Fraction(a1 * 3, 5))
    return A, B


def _mu_full_interval(levels: CFLevels, interval) -> float:
    lo, hi = interval
    return float((hi - lo) / (2 * levels.a(1))) * levels.mu_xn(1)


def _weakmix_deviation(
    levels: CFLevels, n: int, samples: int, rng: np.random.Generator
) -> tuple[float, float]:
    """|mu(T_{g_n}[A] n [B]) - mu[A] mu[B]| for the level-1 rectangles, with
    Monte Carlo stderr.  Conditions on the level-1 part, which contains both
    cylinders exactly, so the only truncation effect is the vanishing mass of
    translates leaving the deepest built frame."""
    A, B = _level1_full_rectangles(levels)
    mu_a = _mu_full_interval(levels, A)
    mu_b = _mu_full_interval(levels, B)
    mu1 = levels.mu_xn(1)
    top = min(n + 2, levels.max_level + 1)
    ti, tf, q, tails = cf_engine.sample_point_batch(levels, samples, top - 1, rng)
    t1 = ti.astype(float) + tf
    in_b = (t1 > float(B[0])) & (t1 <= float(B[1]))
    tin, tfn, qn = cf_engine.embed_batch(levels, ti, tf, q, tails, 1, top)
    g = 2 * levels.a_tilde(n)
    tin = tin + (g if tin.dtype == object else np.int64(g))
    valid, ti1, tf1, _, _ = cf_engine.peel_batch(levels, tin, tfn, qn, top, 1)
    t1_shift = ti1.astype(float) + tf1
    in_a = valid & (t1_shift > float(A[0])) & (t1_shift <= float(A[1]))
    p_hat = float(np.mean(in_a & in_b))
    sigma = mu1 * math.sqrt(max(p_hat * (1 - p_hat), 1e-12) / samples)
    return abs(mu1 * p_hat - mu_a * mu_b), sigma, mu1 * p_hat


def run_weak_mixing(cfg: ExperimentConfig) -> CheckReport:
    """Correlation decay along the central translates g_n = (2 a~_n, I).

    Each deviation is tested against the analytic budget
    16(4n+1)/(2n-1)^2 (a_{n-1}/a~_{n-1})^2 + eps_n plus 4 sigma.  The
    deviations carry quenched variability from the level's correction-map
    draw, so the trend check measures that spread by re-drawing the maps
    under alternate seeds and uses the combined sigma.
    """
    rep = CheckReport("weakmix", "gw1;eq:6;eq:7;TisWM")
    levels = _levels_cache(cfg)
    params = cfg.construction
    A, B = _level1_full_rectangles(levels)
    mu_a = _mu_full_interval(levels, A)
    mu_b = _mu_full_interval(levels, B)
    samples = cfg.mc_samples
    alt_levels = [
        cf_engine.build_levels(params, seed=cfg.seed + 1009 * (i + 1)) for i in range(3)
    ]
    rows = []
    devs = {}
    sig_tot = {}
    for n in cfg.weakmix_levels:
        dev, sigma, est = _weakmix_deviation(
            levels, n, samples, substream(cfg.seed, f"weakmix-{n}")
        )
        alt = [
            _weakmix_deviation(
                lv, n, max(samples // 4, 50_000), substream(cfg.seed, f"weakmix-alt{i}-{n}")
            )[0]
            for i, lv in enumerate(alt_levels)
        ]
        quenched = float(np.std([dev] + alt, ddof=1))
        budget = 16.0 * (4 * n + 1) / (2 * n - 1) ** 2 * (
            levels.a(n - 1) / levels.a_tilde(n - 1)
        ) ** 2 + params.eps(n)
        ok = dev <= budget + 4 * sigma
        rep.add(f"deviation-n{n}", dev, tolerance=budget + 4 * sigma, stderr=sigma, passed=ok)
        devs[n] = dev
        sig_tot[n] = math.sqrt(sigma**2 + quenched**2)
        rows.append([n, repr(est), repr(mu_a * mu_b), repr(dev),
                     repr(budget), repr(sigma), repr(quenched)])
    trend_ok = True
    ns = list(cfg.weakmix_levels)
    for m, n in zip(ns, ns[1:]):
        if devs[n] > devs[m] + 4 * math.sqrt(sig_tot[m] ** 2 + sig_tot[n] ** 2):
            trend_ok = False
    rep.add("trend-non-increasing", 1.0 if trend_ok else 0.0, passed=trend_ok)
    rep.csv_tables["weakmix.csv"] = (
        ["n", "correlation", "product", "deviation", "budget", "stderr", "quenched"],
        rows,
    )
    return rep


# ---------------------------------------------------------------------------
# slab translate overlap estimates
# ---------------------------------------------------------------------------

def _overlap_deviation(
    levels: CFLevels, n: int, rng: np.random.Generator, draws: int = 60
) -> tuple[float, float]:
    """Mean |lambda(A C_n n f S_n)/lambda(S_n) - lambda_F(A)| over sampled f,
    with the f-sampling standard error."""
    at_prev = levels.a_tilde(n - 1)
    k_slab = (2 * n - 1) * at_prev
    lv_prev = levels.level(n - 1)
    a_prev = levels.a(n - 1)
    a_n = levels.a(n)
    rng_local = rng
    width = float(rng_local.uniform(0.4, 1.2)) * a_prev
    lo_a = float(rng_local.uniform(-a_prev, a_prev - width))
    target = width / (2 * a_prev)
    offs = np.array(
        [float(lv_prev.correction_time_fraction(h)) for h in lv_prev.h_range()]
    )
    devs = []
    for _ in range(draws):
        t_f = float(rng_local.uniform(-(a_n - k_slab), a_n - k_slab))
        lo_s, hi_s = t_f - k_slab, t_f + k_slab
        lo_i = np.maximum(offs + lo_a, lo_s)
        hi_i = np.minimum(offs + lo_a + width, hi_s)
        overlap = float(np.sum(np.maximum(hi_i - lo_i, 0.0)))
        devs.append(abs(overlap / (2 * k_slab) - target))
    return float(np.mean(devs)), float(np.std(devs) / math.sqrt(draws))


def run_lemma62(cfg: ExperimentConfig) -> CheckReport:
    """Exact symmetric-difference bound for translated slabs, and the
    conditional overlap density of expanded rectangles.

    The overlap deviations inherit quenched variability from the level's
    correction-map draw, so the decay trend is tested with a sigma that
    includes the spread over re-drawn maps (as in the mixing experiment).
    """
    rep = CheckReport("lemma62", "lm:6.2-i;lm:6.2-ii")
    levels = _levels_cache(cfg)
    rng = substream(cfg.seed, "lemma62")
    alt_levels = [
        cf_engine.build_levels(cfg.construction, seed=cfg.seed + 1009 * (i + 1))
        for i in range(3)
    ]

    means = {}
    for n in (3, 4, 5, 6):
        at_prev = levels.a_tilde(n - 1)
        k_slab = (2 * n - 1) * at_prev
        # (i): lambda(f S_n delta fhat S_n) <= 4 lambda(F~_{n-1}), exact
        ok_i = True
        worst_i = 0.0
        for _ in range(100):
            h = int(rng.integers(-50, 51))
            tf_ = Fraction(float(rng.uniform(-at_prev, at_prev))) + 2 * h * at_prev
            tfh = Fraction(float(rng.uniform(-at_prev, at_prev))) + 2 * h * at_prev
            sym = 2 * abs(tf_ - tfh)  # both slabs have the same width 2 k_slab
            bound = Fraction(4 * 2 * at_prev)
            ok_i &= sym <= bound
            worst_i = max(worst_i, float(sym / bound))
            # sandwich inclusions around the shared shell block
            inner_lo = 2 * h * at_prev - (2 * n - 3) * at_prev
            inner_hi = 2 * h * at_prev + (2 * n - 3) * at_prev
            outer_lo = 2 * h * at_prev - (2 * n + 1) * at_prev
            outer_hi = 2 * h * at_prev + (2 * n + 1) * at_prev
            for t_center in (tf_, tfh):
                lo, hi = t_center - k_slab, t_center + k_slab
                ok_i &= lo <= inner_lo and hi >= inner_hi
                ok_i &= lo >= outer_lo and hi <= outer_hi
        rep.add(f"symdiff-bound-n{n}", worst_i, tolerance=1.0, passed=ok_i)

        # (ii): lambda(A C_n n f S_n)/lambda(S_n) vs lambda_{F_{n-1}}(A);
        # float interval arithmetic (1e-6 absolute is plenty against
        # deviations of order 1/n)
        mean_dev, sem = _overlap_deviation(levels, n, substream(cfg.seed, f"l62-{n}"))
        alts = [
            _overlap_deviation(lv, n, substream(cfg.seed, f"l62-alt{i}-{n}"))[0]
            for i, lv in enumerate(alt_levels)
        ]
        quenched = float(np.std([mean_dev] + alts, ddof=1))
        means[n] = (mean_dev, math.sqrt(sem**2 + quenched**2))
        rep.add(f"overlap-deviation-n{n}", mean_dev, stderr=means[n][1])
    for n in (3, 4):
        later, earlier = means[n + 2], means[n]
        ok = later[0] <= earlier[0] + 4 * math.sqrt(later[1] ** 2 + earlier[1] ** 2)
        rep.add(f"overlap-trend-{n}-to-{n+2}", later[0] - earlier[0], passed=ok)
    return rep


def run_fubini(cfg: ExperimentConfig) -> CheckReport:
    """Two-sided translate averaging identity for rectangles, Monte Carlo."""
    rep = CheckReport("fubini", "lm:fubini")
    rng = substream(cfg.seed, "fubini")
    mc = max(cfg.mc_samples // 2, 10_000)
    worst = 0.0
    ok_all = True
    for trial in range(10):
        wa, wb, ws, wf = rng.uniform(2.0, 12.0, size=4)
        la, lb, ls, lf = rng.uniform(-20.0, 20.0, size=4)
        if trial == 9:
            wf = 0.0  # degenerate target set: both sides vanish exactly
        # lhs: integral over (v, w) in S x S of |Av n Bw n F|
        tv = rng.uniform(ls, ls + ws, size=mc)
        tw = rng.uniform(ls, ls + ws, size=mc)
        lo = np.maximum(np.maximum(la + tv, lb + tw), lf)
        hi = np.minimum(np.minimum(la + wa + tv, lb + wb + tw), lf + wf)
        vals = np.maximum(hi - lo, 0.0)
        lhs = float(np.mean(vals)) * ws * ws
        se_l = float(np.std(vals) / math.sqrt(mc)) * ws * ws
        # rhs: integral over (a, b) in A x B of |aS n bS n F|
        ta = rng.uniform(la, la + wa, size=mc)
        tb = rng.uniform(lb, lb + wb, size=mc)
        lo2 = np.maximum(np.maximum(ta + ls, tb + ls), lf)
        hi2 = np.minimum(np.minimum(ta + ls + ws, tb + ls + ws), lf + wf)
        vals2 = np.maximum(hi2 - lo2, 0.0)
        rhs = float(np.mean(vals2)) * wa * wb
        se_r = float(np.std(vals2) / math.sqrt(mc)) * wa * wb
        diff = abs(lhs - rhs)
        tol = 4 * math.sqrt(se_l**2 + se_r**2)
        if wf == 0.0:
            ok = lhs == 0.0 and rhs == 0.0
        else:
            ok = diff <= tol
        ok_all &= ok
        worst = max(worst, diff / tol if tol > 0 else 0.0)
    rep.add("fubini-worst-ratio", worst, tolerance=1.0, passed=ok_all)
    return rep


# ---------------------------------------------------------------------------
# joining classification
# ---------------------------------------------------------------------------

def run_joining_classification(cfg: ExperimentConfig) -> CheckReport:
    rep = CheckReport("joinings", "2:1;6-15;metryka")
    levels = _levels_cache(cfg)
    d = joinings.CFDictionary(levels, cfg.dictionary_id)
    n = cfg.window_level
    window = joinings.folner_window(n, levels)
    target_samples = max(cfg.mc_samples // 5, 50_000)
    window_samples = max(cfg.mc_samples // 5, 50_000)

    k = GElement(0.0, SU2_H0)
    ks = conj_star(k)
    gk = joinings.graph_joining_target(k, d, levels, target_samples, substream(cfg.seed, "target-k"))
    gks = joinings.graph_joining_target(ks, d, levels, target_samples, substream(cfg.seed, "target-ks"))
    prod = joinings.product_joining_target(d, levels, target_samples, substream(cfg.seed, "target-prod"))
    mix = joinings.mixture_table(gk, gks)
    diag = joinings.graph_joining_target(
        GElement(0.0, SU2_I), d, levels, target_samples, substream(cfg.seed, "target-e")
    )
    targets = {"product": prod, "graph_k": gk, "graph_kstar": gks, "mixture": mix}

    # generic points: tails rejected into the shrunken index ranges so every
    # window translate stays inside the next frame; the independent partner
    # additionally has all tail indices distinct from x's
    rng_pts = substream(cfg.seed, "generic-points")
    x = cf_engine.sample_point(levels, cfg.truncation, rng_pts, h_minus=True)
    x_paired = cf_engine.act(k, x, levels)
    y = cf_engine.sample_point(levels, cfg.truncation, rng_pts, h_minus=True)
    while any(a == b for a, b in zip(x.tail, y.tail)):
        y = cf_engine.sample_point(levels, cfg.truncation, rng_pts, h_minus=True)

    rows = []
    emp_paired = joinings.empirical_joining(
        x, x_paired, window, d, levels, window_samples, substream(cfg.seed, "win-paired")
    )
    emp_indep = joinings.empirical_joining(
        x, y, window, d, levels, window_samples, substream(cfg.seed, "win-indep")
    )
    for case, emp, expect in (
        ("paired", emp_paired, "mixture"),
        ("independent", emp_indep, "product"),
    ):
        cls = joinings.classify(case, emp, targets)
        dmap = {r.target: (r.distance, r.stderr) for r in cls}
        verdict = next(r.target for r in cls if r.verdict == "nearest")
        d_best, se_best = dmap[expect]
        margins_ok = True
        for name, (dist, se) in dmap.items():
            rows.append([case, name, repr(dist), repr(se), "nearest" if name == verdict else ""])
            if name != expect:
                margin = dist - d_best
                margins_ok &= margin > 4 * math.sqrt(se**2 + se_best**2)
        rep.add(f"{case}-verdict-{expect}", 1.0 if verdict == expect else 0.0,
                passed=verdict == expect)
        rep.add(f"{case}-margins-4sigma", 1.0 if margins_ok else 0.0, passed=margins_ok)

    # diagonal sanity: x paired with itself matches the identity graph table
    emp_diag = joinings.empirical_joining(
        x, x, window, d, levels, window_samples // 2, substream(cfg.seed, "win-diag")
    )
    d_diag = joinings.joining_metric(emp_diag, diag)
    se_diag = joinings.joining_metric_stderr(emp_diag, diag)
    rep.add("diagonal-distance", d_diag, tolerance=8 * se_diag + 0.02,
            passed=d_diag <= 8 * se_diag + 0.02)

    # metric invariance under the time-one translate on empirical pair clouds
    rep.csv_tables["joinings.csv"] = (
        ["case", "target", "distance", "stderr", "verdict"],
        rows,
    )
    for m in range(2, min(7, levels.max_level + 1)):
        r = joinings.shulman_check(m, levels)
        rep.add(f"shulman-n{r.n}", r.setminus_count / max(r.window_size, 1),
                tolerance=3.0, passed=r.passed)
    return rep


# ---------------------------------------------------------------------------
# counterexample bundles
# ---------------------------------------------------------------------------

def run_counterexample_51(cfg: ExperimentConfig) -> CheckReport:
    rep = CheckReport("counterexample-51", "f1;niepr;lm:Twm")
    scheme = rank_one.chacon_scheme(18)
    phi_z2 = cocycles.chacon_z2_phi(scheme)
    rng = substream(cfg.seed, "c51")

    # transfer equation with zero transfer function, on 1e5 sampled points:
    # psi^(2)(x, s) = s + (phi(x) + s) = phi(x), so the shifted sum vanishes
    samples = 100_000
    ok = True
    base = lambda p: rank_one.tower_apply(scheme, p)
    for i in range(samples):
        x = rank_one.sample_tower_point(scheme, rng, stage=10, tail_length=4)
        s = int(rng.integers(0, 2))
        psi2_s = (s + (phi_z2(x) + s)) % 2
        psi2_s1 = ((s + 1) + (phi_z2(x) + s + 1)) % 2
        if (psi2_s + psi2_s1) % 2 != 0:
            ok = False
        if i % 16 == 0:
            # spot-check the displayed double-extension step as well
            r = int(rng.integers(0, 2))
            x2, s2, r2 = cocycles.double_ext_apply(base, phi_z2, x, s, r)
            ok &= s2 == (phi_z2(x) + s) % 2 and r2 == (s + r) % 2
    rep.add("f1-zero-transfer-1e5", 1.0 if ok else 0.0, passed=ok)

    witnesses = cocycles.constant_one_obstruction(scheme, phi_z2)
    ok_w = all(w.contradictory for w in witnesses)
    rep.add("constant-1-obstruction", 1.0 if ok_w else 0.0, passed=ok_w)

    state0, step = cocycles.double_extension_orbit(scheme, phi_z2, rng)
    lines = cocycles.eigenvalue_probe(
        step, [kk / 64 for kk in range(64)], lambda st: (-1.0) ** (st[1] + st[2]),
        100_000, state0
    )
    worst = max(l.modulus for l in lines)
    rep.add("spectral-probe-max", worst, tolerance=lines[0].threshold,
            passed=all(l.below for l in lines))
    rep.csv_tables["spectral.csv"] = (
        ["theta", "modulus", "threshold"],
        [[repr(l.theta), repr(l.modulus), repr(l.threshold)] for l in lines],
    )
    return rep


def run_nonuniqueness_42(cfg: ExperimentConfig) -> CheckReport:
    rep = CheckReport("nonuniqueness-42", "1.02b;rrr;tabelka")
    scheme = rank_one.chacon_scheme(18)
    phi_z2 = cocycles.chacon_z2_phi(scheme)

    def coc(p):
        return D6Element("d") if phi_z2(p) else D6Element("e")

    root = cocycles.d6_root_check(scheme, coc, 100_000, substream(cfg.seed, "d6root"))
    rep.add("root-identity-100k", 1.0 if root.root_identity_holds else 0.0,
            passed=root.root_identity_holds)
    rep.add("commutation-witness-found", 1.0 if root.commutation_witness else 0.0,
            passed=root.commutation_witness is not None)
    rep.add("abelian-subgroup-commutes", 1.0 if root.abelian_commutes else 0.0,
            passed=root.abelian_commutes)

    grid_ok = all(
        cocycles.su2_flow_commutation(kk / 64) == (abs(2 * (kk / 64) - round(2 * (kk / 64))) < 1e-12)
        for kk in range(-128, 129)
    )
    rep.add("commutation-grid-1-over-64", 1.0 if grid_ok else 0.0, passed=grid_ok)

    assoc = all(
        d6_mul(d6_mul(x, y), z) == d6_mul(x, d6_mul(y, z))
        for x in D6_ELEMENTS for y in D6_ELEMENTS for z in D6_ELEMENTS
    )
    rep.add("d6-associativity", 1.0 if assoc else 0.0, passed=assoc)
    return rep


# ---------------------------------------------------------------------------
# report emission
# ---------------------------------------------------------------------------

EXPERIMENTS: dict[str, Callable[[ExperimentConfig], CheckReport]] = {
    "groups": run_groups,
    "sequences": run_sequences,
    "validate-cf": run_validate_cf,
    "equidist": run_equidist,
    "sample-sets": run_sample_sets,
    "weakmix": run_weak_mixing,
    "lemma62": run_lemma62,
    "fubini": run_fubini,
    "joinings": run_joining_classification,
    "counterexample-51": run_counterexample_51,
    "nonuniqueness-42": run_nonuniqueness_42,
}


def emit_report(reports: Sequence[CheckReport], out_dir: str, cfg: ExperimentConfig) -> int:
    """Write report.json and per-experiment CSVs; exit code 0 iff all pass."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "config": cfg.to_json(),
        "reports": [r.as_dict() for r in reports],
        "status": "pass" if all(r.status == "pass" for r in reports) else "fail",
    }
    (out / "report.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    for r in reports:
        for fname, (header, rows) in r.csv_tables.items():
            with open(out / fname, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(header)
                writer.writerows(rows)
    return 0 if payload["status"] == "pass" else 1


def run_all(cfg: ExperimentConfig, names: Optional[Sequence[str]] = None) -> list[CheckReport]:
    chosen = list(names) if names else list(EXPERIMENTS)
    return [EXPERIMENTS[name](cfg) for name in chosen]
