"""Acceptance criteria 1-15 at their stated sizes and tolerances.

Each ``criterion_k(seeds, out)`` returns a :class:`Verdict`.  Statistical
criteria are quenched: they run per scenery seed and pass when a strict
majority of seeds pass, stopping early once the majority is decided.  Every
estimate series is written to ``out/C<k>_seed<s>*.jsonl``.

Verdicts use the stated tolerance only (no confidence-interval rescue), so
a slope whose interval covers the target but whose point estimate misses
by more than the tolerance fails.
"""

from collections import Counter
from dataclasses import dataclass, field
import glob
import json
import math
import os
import tempfile
import time

import numpy as np
from scipy import stats as sps

from . import layered, rwrs, sampling, theory, walk
from .layered import LayeredModel
from .oracle import GeneratorBox, exact_green, exact_prob, transition_row
from .scenery import Box, SceneryField, max_site
from .stats import clean_json, fit_exponent

SEEDS = (1, 2, 3)
WALK_SEED = 0


@dataclass
class Verdict:
    number: int
    title: str
    passed: bool
    summary: str
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self):
        return f"C{self.number:02d} {'PASS' if self.passed else 'FAIL'} {self.title}: {self.summary}"

    def as_dict(self):
        return clean_json({"criterion": self.number, "title": self.title, "passed": self.passed,
                           "summary": self.summary, "detail": self.detail, "seconds": self.seconds})


def _dyadic(lo, hi):
    return [2.0**k for k in range(lo, hi + 1)]


def _write_series(out, name, series):
    if out is None:
        return
    os.makedirs(out, exist_ok=True)
    series.write_jsonl(os.path.join(out, f"{name}.jsonl"))


def _write_records(out, name, records):
    if out is None:
        return
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, f"{name}.jsonl"), "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(json.dumps(clean_json(r), sort_keys=True) + "\n")


def output_files(out):
    return sorted(glob.glob(os.path.join(out, "C*.jsonl")))


def _majority(evaluate, seeds):
    """Run ``evaluate(seed) -> (ok, info)`` until a strict majority is decided."""
    need = len(seeds) // 2 + 1
    rows = []
    for s in seeds:
        ok, info = evaluate(s)
        rows.append(dict(info, seed=s, ok=bool(ok)))
        npass = sum(r["ok"] for r in rows)
        nfail = len(rows) - npass
        if npass >= need or nfail > len(seeds) - need:
            break
    npass = sum(r["ok"] for r in rows)
    return npass >= need, rows


def _slope_check(series, target, tol):
    fit = fit_exponent(series)
    return abs(fit.slope - target) <= tol, {"slope": fit.slope, "slope_ci": list(fit.slope_ci), "target": target,
                                            "tolerance": tol, "points_used": fit.points_used}


def _seed_summary(rows, key, fmt="{:.3f}", ok_key="ok"):
    return ", ".join(f"s{r['seed']}={fmt.format(r[key]) if r.get(key) is not None else 'n/a'}"
                     f"{'' if r.get(ok_key, r['ok']) else '(x)'}" for r in rows)


# -- 1 ------------------------------------------------------------------------------

def criterion_1(seeds=SEEDS, out=None):
    worst = 0.0
    for d in (1, 2):
        gen = GeneratorBox.free_walk(d, 30)
        pts = np.array(np.unravel_index(np.arange(gen.n_states), gen.shape)).T - 30
        for t in (0.5, 1.0, 2.0):
            row, _ = transition_row(gen, t, (0,) * d)
            ker = np.array([walk.kernel(d, t, x) for x in pts])
            worst = max(worst, float(np.max(np.abs(row - ker))))
    return Verdict(1, "kernel exactness", worst <= 1e-8, f"max |oracle - kernel| = {worst:.2e} (limit 1e-8)",
                   {"max_abs_diff": worst})


# -- 2 ------------------------------------------------------------------------------

def criterion_2(seeds=SEEDS, out=None):
    t, n = 5.0, 10**6
    targets = [((0,), (0,)), ((3,), (0,))]

    def ev(seed):
        m = LayeredModel(1, 1, SceneryField(seed, 0.5, 1, "capped", cap=10.0))
        gen = GeneratorBox.layered(m, 60)
        recs, zs = [], []
        for tg in targets:
            est = layered.kernel_estimate(m, t, tg, n, pinning="indicator", seed=WALK_SEED)
            ex = exact_prob(gen, t, (0, 0), (tg[0][0], tg[1][0]), info=True)
            z = (est.mean - ex["value"]) / est.stderr
            zs.append(z)
            recs.append(dict(est.point().record(seed), exact=ex["value"], absorbed_mass=ex["absorbed_mass"], z=z))
        _write_records(out, f"C02_seed{seed}", recs)
        worst = max(abs(z) for z in zs)
        return worst <= 4.0, {"max_abs_z": worst}

    ok, rows = _majority(ev, seeds)
    return Verdict(2, "estimator unbiasedness", ok, "max |z| per seed: " + _seed_summary(rows, "max_abs_z", "{:.2f}")
                   + " (limit 4)", {"seeds": rows})


# -- 3 ------------------------------------------------------------------------------

def chi_square_two_sample(a, b, min_expected=5.0):
    """Two-sample chi-square on categorical rows; cells with expected count < ``min_expected`` are pooled."""
    ca, cb = Counter(map(tuple, a.tolist())), Counter(map(tuple, b.tolist()))
    keys = sorted(set(ca) | set(cb))
    xa = np.array([ca[k] for k in keys], dtype=float)
    xb = np.array([cb[k] for k in keys], dtype=float)
    na, nb = xa.sum(), xb.sum()
    tot = xa + xb
    small = np.minimum(tot * na, tot * nb) / (na + nb) < min_expected
    table = np.vstack([xa[~small], xb[~small]])
    if small.any():
        table = np.hstack([table, [[xa[small].sum()], [xb[small].sum()]]])
    stat, p, dof, _ = sps.chi2_contingency(table, correction=False)
    return float(stat), float(p), int(dof)


def criterion_3(seeds=SEEDS, out=None):
    n, t = 10**6, 3.0

    def ev(seed):
        m = LayeredModel(1, 1, SceneryField(seed, 3.0, 1))
        a1, a2, _ = layered.timechange_samples(m, t, n, WALK_SEED, stream=1)
        b1, b2, _ = layered.gillespie_samples(m, t, n, WALK_SEED, stream=2)
        stat, p, dof = chi_square_two_sample(np.hstack([a1, a2]), np.hstack([b1, b2]))
        _write_records(out, f"C03_seed{seed}", [{"seed": seed, "chi2": stat, "dof": dof, "p_value": p, "n": n}])
        return p > 1e-3, {"p_value": p, "dof": dof}

    ok, rows = _majority(ev, seeds)
    return Verdict(3, "representation equivalence", ok, "p-values " + _seed_summary(rows, "p_value", "{:.3g}")
                   + " (need > 1e-3)", {"seeds": rows})


# -- 4, 5, 6, 9: one batch per seed ---------------------------------------------------

RWRS_D, RWRS_ALPHA, RWRS_RHO = 3, 1.0, 1.2
_rwrs_cache = {}


def _rwrs_batch(seed):
    if seed not in _rwrs_cache:
        f = SceneryField(seed, RWRS_ALPHA, RWRS_D)
        _rwrs_cache[seed] = sampling.run_walkers(f, _dyadic(7, 13), 10_000, WALK_SEED)
    return _rwrs_cache[seed]


def criterion_4(seeds=SEEDS, out=None):
    def ev(seed):
        s = rwrs.tail_from_batch(_rwrs_batch(seed), RWRS_RHO, _dyadic(7, 13), seed)
        _write_series(out, f"C04_seed{seed}", s)
        return _slope_check(s, theory.tail_exponent(RWRS_D, RWRS_ALPHA, RWRS_RHO), 0.1)

    ok, rows = _majority(ev, seeds)
    return Verdict(4, "RWRS power-law tail", ok, "slope " + _seed_summary(rows, "slope") + " (target -0.2 +- 0.1)",
                   {"seeds": rows})


def criterion_5(seeds=SEEDS, out=None):
    grid = _dyadic(7, 10)

    def ev(seed):
        un = rwrs.tail_from_batch(_rwrs_batch(seed), RWRS_RHO, grid, seed)
        f = SceneryField(seed, RWRS_ALPHA, RWRS_D)
        pin = rwrs.tail_estimate(RWRS_D, f, RWRS_RHO, grid, 200_000, pinned=True, mode="splice", seed=WALK_SEED)
        _write_series(out, f"C05_seed{seed}_pinned", pin)
        fu, fp = fit_exponent(un), fit_exponent(pin)
        diff = fp.slope - fu.slope
        return abs(diff + 1.5) <= 0.3, {"difference": diff, "pinned_slope": fp.slope, "unpinned_slope": fu.slope}

    ok, rows = _majority(ev, seeds)
    return Verdict(5, "pinned/unpinned gap", ok, "slope difference " + _seed_summary(rows, "difference")
                   + " (target -1.5 +- 0.3)", {"seeds": rows})


def criterion_6(seeds=SEEDS, out=None):
    def ev(seed):
        s = rwrs.hitting_from_batch(_rwrs_batch(seed), RWRS_RHO, 0.01, _dyadic(7, 13), seed)
        _write_series(out, f"C06_seed{seed}", s)
        return _slope_check(s, theory.tail_exponent(RWRS_D, RWRS_ALPHA, RWRS_RHO), 0.1)

    ok, rows = _majority(ev, seeds)
    return Verdict(6, "level-set hitting", ok, "slope " + _seed_summary(rows, "slope") + " (target -0.2 +- 0.1)",
                   {"seeds": rows})


def criterion_9(seeds=SEEDS, out=None):
    grid = _dyadic(10, 13)

    def ev(seed):
        m = LayeredModel(1, RWRS_D, SceneryField(seed, RWRS_ALPHA, RWRS_D))
        info, ok = {}, True
        for delta in (0.6, 0.3):
            s = layered.unpinned_from_batch(m, _rwrs_batch(seed), grid,
                                            lambda t, dl=delta: layered.rounded_target(t, dl), seed)
            _write_series(out, f"C09_seed{seed}_delta{delta}", s)
            target = -(theory.moddev_exponent(1, RWRS_D, RWRS_ALPHA, delta) - RWRS_D / 2)
            good, det = _slope_check(s, target, 0.2)
            ok &= good
            info[f"slope_{delta}"] = det["slope"]
            info[f"ok_{delta}"] = bool(good)
        return ok, info

    ok, rows = _majority(ev, seeds)
    return Verdict(9, "moderate deviation exponents", ok,
                   "delta=0.6 " + _seed_summary(rows, "slope_0.6", ok_key="ok_0.6")
                   + " (target -0.8 +- 0.2); delta=0.3 " + _seed_summary(rows, "slope_0.3", ok_key="ok_0.3") + " (target -0.5 +- 0.2)", {"seeds": rows})


# -- 7 ------------------------------------------------------------------------------

def criterion_7(seeds=SEEDS, out=None):
    def ev(seed):
        m = LayeredModel(1, 1, SceneryField(seed, 0.5, 1))
        s = layered.pinned_series(m, _dyadic(6, 12), lambda _: [0], [0], 200_000, WALK_SEED, "indicator")
        _write_series(out, f"C07_seed{seed}", s)
        return _slope_check(s, -theory.ondiag_exponent(1, 1, 0.5), 0.15)

    ok, rows = _majority(ev, seeds)
    return Verdict(7, "on-diagonal exponent (infinite mean)", ok, "slope " + _seed_summary(rows, "slope")
                   + " (target -1.25 +- 0.15)", {"seeds": rows})


# -- 8, 12a: one batch per seed -------------------------------------------------------

LCLT_T = 2048.0
_lclt_cache = {}


def _lclt_targets(t):
    r = 2 * math.sqrt(t)
    xs = [k for k in (-90, -60, -30, 0, 30, 60, 90) if abs(k) <= r]
    return [((x,), (0,)) for x in xs] + [((0,), (x,)) for x in xs if x != 0]


def _lclt_a(seed):
    if seed not in _lclt_cache:
        m = LayeredModel(1, 1, SceneryField(seed, 3.0, 1))
        _lclt_cache[seed] = layered.lclt_ratio(m, LCLT_T, _lclt_targets(LCLT_T), 400_000, WALK_SEED, "indicator")
    return _lclt_cache[seed]


def criterion_8(seeds=SEEDS, out=None):
    const = theory.constants(1, 1, 3.0)["ondiag_const"]

    def ev(seed):
        m = LayeredModel(1, 1, SceneryField(seed, 3.0, 1))
        (key, r, se) = [row for row in _lclt_a(seed) if row[0] == ((0,), (0,))][0]
        den = layered.averaged_kernel(m, LCLT_T, ((0,), (0,)))
        val, err = LCLT_T * r * den, LCLT_T * se * den
        _write_records(out, f"C08_seed{seed}", [{"t": LCLT_T, "estimate": val, "stderr": err, "seed": seed,
                                                  "constant": const}])
        return abs(val / const - 1) <= 0.15, {"t_times_p": val, "rel_gap": val / const - 1}

    ok, rows = _majority(ev, seeds)
    return Verdict(8, "on-diagonal constant (finite mean)", ok, "t*P " + _seed_summary(rows, "t_times_p", "{:.5f}")
                   + f" vs {const:.5f} (within 15%)", {"seeds": rows, "constant": const})


def criterion_12(seeds=SEEDS, out=None):
    """(a) LCLT holds for alpha = 3, d2 = 1; (b) it fails at the top scenery site for alpha = 1.2, d2 = 3."""

    def ev_a(seed):
        res = _lclt_a(seed)
        _write_records(out, f"C12a_seed{seed}", [{"t": LCLT_T, "target": [list(k[0]), list(k[1])], "estimate": r,
                                                   "stderr": se, "seed": seed} for k, r, se in res])
        worst = max(abs(r - 1) for _, r, _ in res)
        return worst <= 0.15, {"max_dev": worst}

    def ev_b(seed):
        t = 1024.0
        f = SceneryField(seed, 1.2, 3)
        m = LayeredModel(1, 3, f)
        rad = int(math.sqrt(t))
        x2, zmax = max_site(f, Box((-rad,) * 3, (rad,) * 3))
        (key, r, se), = layered.lclt_ratio(m, t, [((0,), x2)], 100_000, WALK_SEED, "splice")
        _write_records(out, f"C12b_seed{seed}", [{"t": t, "target": [[0], list(x2)], "z": zmax, "estimate": r,
                                                   "stderr": se, "seed": seed}])
        return r <= 0.5, {"ratio": r, "z": zmax}

    ok_a, rows_a = _majority(ev_a, seeds)
    ok_b, rows_b = _majority(ev_b, seeds)
    return Verdict(12, "LCLT regime split", ok_a and ok_b,
                   f"(a) {'PASS' if ok_a else 'FAIL'} max|ratio-1| " + _seed_summary(rows_a, "max_dev")
                   + f" (limit 0.15); (b) {'PASS' if ok_b else 'FAIL'} ratio " + _seed_summary(rows_b, "ratio")
                   + " (limit 0.5)", {"a": rows_a, "b": rows_b})


# -- 10, 11 ---------------------------------------------------------------------------

def criterion_10(seeds=SEEDS, out=None):
    cases = {"a": (1, [8, 16, 32, 64], 2_000, 0.15), "b": (2, [4, 8, 16, 32], 4_000, 0.2)}
    parts, detail, ok_all = [], {}, True
    for tag, (d2, ns, n_walk, tol) in cases.items():
        target = theory.green_exponent(1, d2, 0.5)

        def ev(seed, d2=d2, ns=ns, n_walk=n_walk, tol=tol, tag=tag, target=target):
            m = LayeredModel(1, d2, SceneryField(seed, 0.5, d2))
            s = layered.green_series(m, ns, n_walk, WALK_SEED, max_pairs=200_000)
            _write_series(out, f"C10{tag}_seed{seed}", s)
            return _slope_check(s, target, tol)

        ok, rows = _majority(ev, seeds)
        ok_all &= ok
        detail[tag] = rows
        parts.append(f"({tag}) {'PASS' if ok else 'FAIL'} slope " + _seed_summary(rows, "slope")
                     + f" (target {target:.3f} +- {tol})")
    return Verdict(10, "Green exponents", ok_all, "; ".join(parts), detail)


def criterion_11(seeds=SEEDS, out=None):
    r, n = 12, 4

    def ev(seed):
        m = LayeredModel(1, 2, SceneryField(seed, 0.5, 2, "capped", cap=10.0))
        ex = exact_green(GeneratorBox.layered(m, r), (0, 0, 0), (n, 0, 0))
        g = layered.green_estimate(m, n, 100_000, seed=WALK_SEED, kill=r)
        _write_series(out, f"C11_seed{seed}", g.series)
        gap = abs(g.value - ex)
        allowed = 4 * g.stderr + g.bias_bound
        return gap <= allowed, {"mc": g.value, "exact": ex, "stderr": g.stderr, "bias": g.bias_bound,
                                "gap_over_se": gap / g.stderr}

    ok, rows = _majority(ev, seeds)
    return Verdict(11, "Green small-box cross-validation", ok, "|MC-exact|/SE " + _seed_summary(rows, "gap_over_se",
                                                                                               "{:.2f}")
                   + " (limit 4 + bias)", {"seeds": rows})


# -- 13, 14, 15 -----------------------------------------------------------------------

def _nonincreasing(s):
    e, se = s.estimate, s.stderr
    return all(e[k + 1] <= e[k] + 2 * math.hypot(se[k], se[k + 1]) for k in range(len(e) - 1))


def criterion_13(seeds=SEEDS, out=None):
    settings = [(1, 0.5, 0.3, "power", _dyadic(6, 10)), (2, 3.0, 0.2, "mean", _dyadic(7, 11))]

    def ev(seed):
        ok, info = True, {}
        for d, a, eps, variant, grid in settings:
            s = rwrs.lower_deviation_estimate(d, SceneryField(seed, a, d), eps, grid, 100_000, variant, WALK_SEED)
            _write_series(out, f"C13_seed{seed}_d{d}", s)
            last = float(s.estimate[-1])
            good = last <= 0.01 and _nonincreasing(s)
            ok &= good
            info[f"last_d{d}"] = last
        return ok, info

    ok, rows = _majority(ev, seeds)
    return Verdict(13, "lower deviation property", ok, "final P (d=1) " + _seed_summary(rows, "last_d1", "{:.2g}")
                   + "; (d=2) " + _seed_summary(rows, "last_d2", "{:.2g}") + " (need <= 0.01, nonincreasing)",
                   {"seeds": rows})


def criterion_14(seeds=SEEDS, out=None):
    rows = theory.check_golden()
    bad = [f"{r[0]}{r[1]}" for r in rows if not r[4]]
    _write_records(out, "C14", [{"name": r[0], "args": repr(r[1]), "got": float(r[2]), "expected": float(r[3]),
                                 "ok": r[4]} for r in rows])
    return Verdict(14, "theory golden table", not bad, f"{len(rows) - len(bad)}/{len(rows)} entries match",
                   {"failures": bad})


def _determinism_configs():
    from .config import Grid, RunConfig
    return [
        RunConfig("ondiag", 1, 1, 0.5, t_grid=Grid(2, 3, 6), n_samples=5_000, scenery_seeds=(1, 2), mode="auto"),
        RunConfig("rwrs-tail", 1, 3, 1.0, t_grid=Grid(2, 4, 7), n_samples=3_000, scenery_seeds=(1,), mode="splice",
                  options={"rho": 1.2, "pinned": True}),
        RunConfig("green", 1, 2, 0.5, n_grid=Grid(2, 1, 2), n_samples=500, scenery_seeds=(3,)),
    ]


def criterion_15(seeds=SEEDS, out=None):
    from .cli import run
    mismatched, compared = [], 0
    with tempfile.TemporaryDirectory() as tmp:
        for i, cfg in enumerate(_determinism_configs()):
            dirs = []
            for rep in range(2):
                d = os.path.join(tmp, f"cfg{i}_rep{rep}")
                run(cfg.override(output=d))
                dirs.append(d)
            for path in sorted(glob.glob(os.path.join(dirs[0], "*.jsonl"))):
                other = os.path.join(dirs[1], os.path.basename(path))
                with open(path, "rb") as a, open(other, "rb") as b:
                    compared += 1
                    if a.read() != b.read():
                        mismatched.append(f"cfg{i}/{os.path.basename(path)}")
        # the C02 artifacts of this run, regenerated
        if out is not None and os.path.exists(os.path.join(out, "C02_seed1.jsonl")):
            criterion_2((1,), tmp)
            with open(os.path.join(out, "C02_seed1.jsonl"), "rb") as a, open(os.path.join(tmp, "C02_seed1.jsonl"),
                                                                             "rb") as b:
                compared += 1
                if a.read() != b.read():
                    mismatched.append("C02_seed1.jsonl")
    return Verdict(15, "determinism", compared > 0 and not mismatched,
                   f"{compared - len(mismatched)}/{compared} JSONL files byte-identical on rerun",
                   {"mismatched": mismatched})


CRITERIA = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5, 6: criterion_6,
            7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10, 11: criterion_11, 12: criterion_12,
            13: criterion_13, 14: criterion_14, 15: criterion_15}


def run_criterion(k, seeds=SEEDS, out=None):
    t0 = time.time()
    v = CRITERIA[k](tuple(seeds), out)
    v.seconds = time.time() - t0
    return v


def run_all(criteria=None, seeds=SEEDS, out=None, log=None):
    """Run the selected criteria (all by default) and write ``acceptance.json`` under ``out``."""
    log = log or print
    ks = sorted(criteria) if criteria else sorted(CRITERIA)
    verdicts = []
    for k in ks:
        v = run_criterion(k, seeds, out)
        log(v.line())
        verdicts.append(v)
    if out is not None:
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "acceptance.json"), "w", encoding="utf-8") as fh:
            json.dump([v.as_dict() for v in verdicts], fh, sort_keys=True, indent=1)
            fh.write("\n")
    return verdicts
