"""Command-line driver.

Every estimate subcommand builds a :class:`RunConfig` (from ``--config``
and/or flags; flags override config leaves) and calls :func:`run`, which
writes

* ``<experiment>_seed<k>.jsonl``: one record per grid point for scenery seed k,
* ``summary.json``: per-seed and pooled fits with verdicts,
* ``MANIFEST.json``: config hash, code version, wall clock and a sha256
  for every other output file,

and optionally ``<experiment>_seed<k>.dat`` (whitespace columns t estimate
stderr, for gnuplot).  Errors are printed as one JSON object on stdout:
exit status 2 for an invalid config, 3 for resource or regime errors.
"""

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import time

from . import __version__, layered, rwrs, stats, theory, walk
from .config import ConfigError, RunConfig, THREADS_ENV
from .layered import LayeredModel
from .oracle import ABSORBING, GeneratorBox, ResourceError, exact_green, exact_prob
from .scenery import Box, SceneryField, dump_rows
from .stats import EstimatePoint, EstimateSeries, clean_json, compare_to_theory, fit_exponent
from .theory import OutOfRegime

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_RESOURCE = 0, 1, 2, 3


def _field(cfg, seed, dimension):
    return SceneryField(int(seed), float(cfg.alpha), int(dimension), cfg.law, cfg.cap, cfg.value)


def _opt(cfg, key, default=None, required=False):
    if key in cfg.options:
        return cfg.options[key]
    if required:
        raise ConfigError(f"options.{key}", f"required for {cfg.experiment}")
    return default


# -- experiments: each returns (EstimateSeries or list of records, theoretical slope or None) --

def _exp_rwrs_tail(cfg, seed):
    d = cfg.d2
    rho = float(_opt(cfg, "rho", required=True))
    pinned = bool(_opt(cfg, "pinned", False))
    f = _field(cfg, seed, d)
    s = rwrs.tail_estimate(d, f, rho, cfg.t_grid.values(), cfg.n_samples, pinned, cfg.mode or "indicator",
                           cfg.walk_seed)
    return s, _safe(theory.tail_exponent, d, cfg.alpha, rho, pinned)


def _exp_rwrs_lower(cfg, seed):
    d = cfg.d2
    s = rwrs.lower_deviation_estimate(d, _field(cfg, seed, d), float(_opt(cfg, "eps", required=True)),
                                      cfg.t_grid.values(), cfg.n_samples, _opt(cfg, "variant", "power"),
                                      cfg.walk_seed)
    return s, None


def _exp_hitting(cfg, seed):
    d = cfg.d2
    rho = float(_opt(cfg, "rho", required=True))
    s = rwrs.hitting_estimate(d, _field(cfg, seed, d), rho, float(_opt(cfg, "eps", required=True)),
                              cfg.t_grid.values(), cfg.n_samples, cfg.walk_seed)
    return s, _safe(theory.tail_exponent, d, cfg.alpha, rho)


def _exp_returns(cfg, seed):
    d = cfg.d2
    f = _field(cfg, seed, d)
    t = float(_opt(cfg, "t", None) or (cfg.t_grid.values()[-1] if cfg.t_grid else 1000.0))
    thr = _opt(cfg, "threshold")
    if thr is None:
        thr = t ** float(_opt(cfg, "level_exponent", 1.0))
    recs = []
    for i in range(cfg.n_samples):
        p = walk.simulate_path(d, t, (cfg.walk_seed, seed, i))
        r = rwrs.returns_diagnostics(p, f, float(thr))
        recs.append({"path": i, "t": t, "threshold": float(thr), "n_t": r.n_t,
                     "level_local_time": r.level_local_time, "returns": list(r.returns),
                     "departures": list(r.departures), "seed": seed})
    return recs, None


def _model(cfg, seed):
    return LayeredModel(cfg.d1, cfg.d2, _field(cfg, seed, cfg.d2))


def _exp_ondiag(cfg, seed):
    m = _model(cfg, seed)
    s = layered.pinned_series(m, cfg.t_grid.values(), lambda _: [0] * cfg.d1, [0] * cfg.d2, cfg.n_samples,
                              cfg.walk_seed, cfg.mode or "auto")
    return s, -theory.ondiag_exponent(cfg.d1, cfg.d2, cfg.alpha if cfg.law != "constant" else 1.0)


def _exp_moddev(cfg, seed):
    m = _model(cfg, seed)
    delta = float(_opt(cfg, "delta", required=True))
    pinned = bool(_opt(cfg, "pinned", False))
    s = layered.moddev_estimate(m, cfg.t_grid.values(), delta, cfg.n_samples, pinned, cfg.mode or "splice",
                                cfg.walk_seed)
    r = _safe(theory.moddev_exponent, cfg.d1, cfg.d2, cfg.alpha, delta)
    target = None if r is None else (-r if pinned else -(r - cfg.d2 / 2))
    return s, target


def _exp_green(cfg, seed):
    m = _model(cfg, seed)
    s = layered.green_series(m, [int(round(n)) for n in cfg.n_grid.values()], cfg.n_samples, cfg.walk_seed,
                             _opt(cfg, "direction", "layer"), int(_opt(cfg, "max_pairs", 200_000)))
    target = _safe(theory.green_exponent, cfg.d1, cfg.d2, cfg.alpha) if _opt(cfg, "direction", "layer") == "layer" \
        else None
    return s, target


def _axis_targets(cfg, t):
    r = int(2 * math.sqrt(t))
    step = int(_opt(cfg, "step", max(1, r // 3)))
    out = []
    for i in range(cfg.d1 + cfg.d2):
        for k in range(-r, r + 1, step):
            if k == 0 and i > 0:
                continue
            x = [0] * (cfg.d1 + cfg.d2)
            x[i] = k
            out.append((x[:cfg.d1], x[cfg.d1:]))
    return out


def _exp_lclt(cfg, seed):
    m = _model(cfg, seed)
    t = float(_opt(cfg, "t", required=True))
    targets = _opt(cfg, "targets")
    targets = _axis_targets(cfg, t) if targets in (None, "axis") else [tuple(map(tuple, tg)) for tg in targets]
    res = layered.lclt_ratio(m, t, targets, cfg.n_samples, cfg.walk_seed, cfg.mode or "splice")
    recs = [{"t": t, "target": [list(k[0]), list(k[1])], "estimate": r, "stderr": se, "n": cfg.n_samples,
             "hits": None, "seed": seed, "mode": "RaoBlackwell"} for k, r, se in res]
    return recs, None


def _gen(cfg, seed):
    m = _model(cfg, seed)
    radius = int(_opt(cfg, "radius", 10))
    return GeneratorBox.layered(m, radius, boundary=_opt(cfg, "boundary", ABSORBING), csrw=bool(_opt(cfg, "csrw", False)))


def _point(cfg, key):
    v = _opt(cfg, key, [0] * (cfg.d1 + cfg.d2))
    if len(v) != cfg.d1 + cfg.d2:
        raise ConfigError(f"options.{key}", f"needs {cfg.d1 + cfg.d2} coordinates")
    return tuple(int(c) for c in v)


def _exp_oracle_prob(cfg, seed):
    out = exact_prob(_gen(cfg, seed), float(_opt(cfg, "t", required=True)), _point(cfg, "start"), _point(cfg, "end"),
                     info=True)
    return [dict(out, seed=seed)], None


def _exp_oracle_green(cfg, seed):
    out = exact_green(_gen(cfg, seed), _point(cfg, "start"), _point(cfg, "end"), info=True)
    return [dict(out, seed=seed)], None


EXPERIMENT_FUNCS = {
    "rwrs-tail": _exp_rwrs_tail, "rwrs-lower": _exp_rwrs_lower, "hitting": _exp_hitting, "returns": _exp_returns,
    "ondiag": _exp_ondiag, "moddev": _exp_moddev, "green": _exp_green, "lclt": _exp_lclt,
    "oracle-prob": _exp_oracle_prob, "oracle-green": _exp_oracle_green,
}


def _safe(fn, *args):
    try:
        return fn(*args)
    except OutOfRegime:
        return None


def theory_table_csv(d1s, d2s, alphas):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(theory.TABLE_FIELDS)
    for d1 in d1s:
        for d2 in d2s:
            for a in alphas:
                row = theory.table_row(d1, d2, a)
                w.writerow(["" if row[k] is None else repr(row[k]) if isinstance(row[k], float) else row[k]
                            for k in theory.TABLE_FIELDS])
    return buf.getvalue()


def _pooled(series_list):
    """Average the per-seed estimates point by point (the annealed mean over sceneries)."""
    k = len(series_list)
    pts = []
    for ps in zip(*[s.points for s in series_list]):
        est = math.fsum(p.estimate for p in ps) / k
        se = math.sqrt(math.fsum(p.stderr**2 for p in ps)) / k
        pts.append(EstimatePoint(ps[0].t, est, se, sum(p.n for p in ps), sum(p.hits for p in ps)))
    return EstimateSeries(pts, {"seed": "pooled"})


def _fit_entry(series, target, tol, min_hits):
    try:
        fit = fit_exponent(series, min_hits=min_hits)
    except stats.InsufficientData as e:
        return {"fit": None, "reason": str(e)}
    out = {"fit": fit.as_dict()}
    if target is not None:
        out["comparison"] = compare_to_theory(fit, target, tol)
    return out


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _write_dat(path, series):
    lines = ["# t estimate stderr hits"]
    lines += [f"{p.t!r} {p.estimate!r} {p.stderr!r} {p.hits}" for p in series.points]
    _write_text(path, "\n".join(lines) + "\n")


def _write_manifest(out, cfg, started, files, status):
    man = {"config_hash": cfg.hash(), "version": __version__, "wall_clock_seconds": time.time() - started,
           "status": status, "threads": cfg.thread_budget(),
           "files": {os.path.basename(f): _sha256(f) for f in sorted(files)}}
    _write_text(os.path.join(out, "MANIFEST.json"), json.dumps(clean_json(man), sort_keys=True, indent=1) + "\n")


def run(cfg, log=None):
    """Execute ``cfg`` and write its artifacts; returns (exit status, summary dict)."""
    log = log or (lambda msg: None)
    started = time.time()
    out = cfg.output
    os.makedirs(out, exist_ok=True)
    # the kernels are serial, so the thread budget is only recorded; results never depend on it
    _write_text(os.path.join(out, "config.json"), json.dumps(cfg.to_json(), sort_keys=True, indent=1) + "\n")
    files = [os.path.join(out, "config.json")]
    summary = {"experiment": cfg.experiment, "config_hash": cfg.hash(), "per_seed": {}}
    status = EXIT_OK
    try:
        if cfg.experiment == "theory-table":
            text = theory_table_csv(_opt(cfg, "d1s", [cfg.d1]), _opt(cfg, "d2s", [1, 2, 3, 4, 5]),
                                    _opt(cfg, "alphas", [0.25, 0.5, 1.0, 1.5, 2.0, 3.0]))
            path = os.path.join(out, "theory_table.csv")
            _write_text(path, text)
            files.append(path)
            rows = theory.check_golden()
            summary["golden"] = {"passed": sum(r[4] for r in rows), "total": len(rows)}
            status = EXIT_OK if all(r[4] for r in rows) else EXIT_FAIL
        elif cfg.experiment == "acceptance":
            from . import acceptance
            verdicts = acceptance.run_all(_opt(cfg, "criteria"), cfg.seeds, out, log=log)
            files += acceptance.output_files(out)
            summary["criteria"] = [v.as_dict() for v in verdicts]
            status = EXIT_OK if all(v.passed for v in verdicts) else EXIT_FAIL
        else:
            fn = EXPERIMENT_FUNCS[cfg.experiment]
            tol = float(_opt(cfg, "tolerance", 0.1))
            min_hits = int(_opt(cfg, "min_hits", stats.MIN_HITS))
            collected, target = [], None
            for seed in cfg.seeds:
                log(f"{cfg.experiment}: scenery seed {seed}")
                res, target = fn(cfg, seed)
                path = os.path.join(out, f"{cfg.experiment}_seed{seed}.jsonl")
                if isinstance(res, EstimateSeries):
                    res.meta["seed"] = seed
                    res.write_jsonl(path)
                    collected.append(res)
                    summary["per_seed"][str(seed)] = _fit_entry(res, target, tol, min_hits)
                    if _opt(cfg, "dat", False):
                        dat = path[:-len(".jsonl")] + ".dat"
                        _write_dat(dat, res)
                        files.append(dat)
                else:
                    _write_text(path, "".join(json.dumps(clean_json(r), sort_keys=True) + "\n" for r in res))
                    summary["per_seed"][str(seed)] = {"records": len(res)}
                files.append(path)
            summary["theoretical_slope"] = target
            if len(collected) > 1:
                summary["pooled"] = _fit_entry(_pooled(collected), target, tol, min_hits)
            verdicts = [e["comparison"]["verdict"] for e in summary["per_seed"].values() if "comparison" in e]
            if verdicts:
                summary["verdict"] = "PASS" if 2 * verdicts.count("PASS") > len(verdicts) else "FAIL"
    except (ResourceError, OutOfRegime, MemoryError) as e:
        summary["error"] = {"error": type(e).__name__, "message": str(e)}
        status = EXIT_RESOURCE
    finally:
        path = os.path.join(out, "summary.json")
        _write_text(path, json.dumps(clean_json(summary), sort_keys=True, indent=1) + "\n")
        files.append(path)
        _write_manifest(out, cfg, started, files, status)
    return status, summary


# -- argument parsing --------------------------------------------------------------------

def _ints(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _option(text):
    if "=" not in text:
        raise argparse.ArgumentTypeError("options are key=value")
    k, v = text.split("=", 1)
    try:
        v = json.loads(v)
    except json.JSONDecodeError:
        pass
    return k, v


def _model_flags(p):
    p.add_argument("--d1", type=int)
    p.add_argument("--d2", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--law", choices=["pareto", "capped", "constant", "bernoulli"])
    p.add_argument("--cap", type=float)
    p.add_argument("--value", type=float, help="value of the constant law")


def _run_flags(p):
    p.add_argument("--config", help="JSON config file; flags override its leaves")
    _model_flags(p)
    p.add_argument("--t-grid", help="base:min_exp:max_exp[:per_step]")
    p.add_argument("--n-grid", help="base:min_exp:max_exp[:per_step]")
    p.add_argument("--n-samples", type=int)
    p.add_argument("--seeds", type=_ints, help="scenery seeds, comma separated")
    p.add_argument("--walk-seed", type=int)
    p.add_argument("--mode")
    p.add_argument("--output", "-o")
    p.add_argument("--threads", type=int, help=f"thread budget (default ${THREADS_ENV} or 1)")
    p.add_argument("--option", "-O", type=_option, action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--dat", action="store_true", help="also write gnuplot .dat files")


def _config_from_args(args, experiment):
    base = RunConfig.load(args.config).to_json() if args.config else {"experiment": experiment}
    base["experiment"] = experiment
    leaves = {"d1": args.d1, "d2": args.d2, "alpha": args.alpha, "law": args.law, "cap": args.cap,
              "value": args.value, "t_grid": args.t_grid, "n_grid": args.n_grid, "n_samples": args.n_samples,
              "scenery_seeds": args.seeds, "walk_seed": args.walk_seed, "mode": args.mode, "output": args.output,
              "threads": args.threads}
    for k, v in leaves.items():
        if v is not None:
            base[k] = v
    opts = dict(base.get("options") or {})
    opts.update(dict(args.option))
    if args.dat:
        opts["dat"] = True
    base["options"] = opts
    if base.get("output") is None:
        base["output"] = os.path.join("runs", experiment)
    return RunConfig.from_json(base)


def _emit(obj, fh=None):
    (fh or sys.stdout).write(json.dumps(clean_json(obj), sort_keys=True) + "\n")


def build_parser():
    p = argparse.ArgumentParser(prog="layerwalk", description="Random walk in random scenery and layered walks.")
    sub = p.add_subparsers(dest="command", required=True)

    sc = sub.add_parser("scenery", help="scenery tools").add_subparsers(dest="action", required=True)
    d = sc.add_parser("dump", help="CSV rows x1,...,xd,z over a box")
    d.add_argument("--seed", type=int, default=1)
    d.add_argument("--alpha", type=float, default=1.0)
    d.add_argument("--dimension", type=int, default=1)
    d.add_argument("--law", default="pareto")
    d.add_argument("--cap", type=float)
    d.add_argument("--value", type=float)
    d.add_argument("--radius", type=int, default=5)

    w = sub.add_parser("walk", help="walk tools").add_subparsers(dest="action", required=True)
    w.add_parser("check", help="kernel and normalization self-tests")

    sm = sub.add_parser("simulate", help="raw samples").add_subparsers(dest="action", required=True)
    s = sm.add_parser("layered", help="JSONL endpoint samples of the layered walk")
    _model_flags(s)
    s.add_argument("--seed", type=int, default=1, help="scenery seed")
    s.add_argument("--walk-seed", type=int, default=0)
    s.add_argument("--t", type=float, required=True)
    s.add_argument("--n", type=int, default=10)
    s.add_argument("--sampler", choices=["timechange", "gillespie", "csrw"], default="timechange")

    est = sub.add_parser("estimate", help="Monte Carlo estimates").add_subparsers(dest="action", required=True)
    for name in ["rwrs-tail", "rwrs-lower", "hitting", "ondiag", "moddev", "green", "lclt"]:
        _run_flags(est.add_parser(name))

    dg = sub.add_parser("diagnose", help="path diagnostics").add_subparsers(dest="action", required=True)
    _run_flags(dg.add_parser("returns", help="entrance/exit times of a level set"))

    orc = sub.add_parser("oracle", help="exact finite-box values").add_subparsers(dest="action", required=True)
    for name in ["prob", "green"]:
        o = orc.add_parser(name)
        _model_flags(o)
        o.add_argument("--seed", type=int, default=1)
        o.add_argument("--radius", type=int, default=10)
        o.add_argument("--boundary", choices=["absorbing", "reflecting"], default="absorbing")
        o.add_argument("--csrw", action="store_true")
        o.add_argument("--start", type=_ints)
        o.add_argument("--end", type=_ints)
        if name == "prob":
            o.add_argument("--t", type=float, required=True)

    th = sub.add_parser("theory", help="closed-form exponents").add_subparsers(dest="action", required=True)
    tt = th.add_parser("table", help="CSV of exponents and constants")
    tt.add_argument("--d1s", type=_ints, default=[1])
    tt.add_argument("--d2s", type=_ints, default=[1, 2, 3, 4, 5])
    tt.add_argument("--alphas", type=_floats, default=[0.25, 0.5, 1.0, 1.5, 2.0, 3.0])
    th.add_parser("check", help="replay the golden table")

    f = sub.add_parser("fit", help="fit a JSONL series")
    f.add_argument("path")
    f.add_argument("--theory", type=float)
    f.add_argument("--tolerance", type=float, default=0.1)
    f.add_argument("--min-hits", type=int, default=stats.MIN_HITS)
    f.add_argument("--x-min", type=float)
    f.add_argument("--x-max", type=float)

    a = sub.add_parser("accept", help="run the acceptance criteria")
    a.add_argument("--criteria", type=_ints, help="subset, e.g. 1,2,14")
    a.add_argument("--seeds", type=_ints, default=[1, 2, 3])
    a.add_argument("--output", "-o", default=os.path.join("runs", "acceptance"))

    r = sub.add_parser("run", help="run a JSON config")
    r.add_argument("config")
    r.add_argument("--output", "-o")
    return p


def _simple_field(args, dimension):
    return SceneryField(args.seed, 1.0 if args.alpha is None else args.alpha, dimension, args.law or "pareto",
                        args.cap, args.value)


def _main(argv):
    args = build_parser().parse_args(argv)
    log = lambda msg: print(msg, file=sys.stderr)
    if args.command == "scenery":
        f = SceneryField(args.seed, args.alpha, args.dimension, args.law, args.cap, args.value)
        box = Box((-args.radius,) * args.dimension, (args.radius,) * args.dimension)
        for row in dump_rows(f, box):
            sys.stdout.write(row + "\n")
        return EXIT_OK
    if args.command == "walk":
        rows = walk.self_check()
        for name, ok, detail in rows:
            print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        return EXIT_OK if all(ok for _, ok, _ in rows) else EXIT_FAIL
    if args.command == "simulate":
        d1, d2 = args.d1 or 1, args.d2 or 1
        m = LayeredModel(d1, d2, _simple_field(args, d2))
        if args.sampler == "timechange":
            x1, x2, _ = layered.timechange_samples(m, args.t, args.n, args.walk_seed)
        elif args.sampler == "gillespie":
            x1, x2, _ = layered.gillespie_samples(m, args.t, args.n, args.walk_seed)
        else:
            x1, x2, _, _ = layered.csrw_samples(m, args.t, args.n, args.walk_seed)
        for a, b in zip(x1.tolist(), x2.tolist()):
            _emit({"x1": a, "x2": b, "t": args.t})
        return EXIT_OK
    if args.command in ("estimate", "diagnose"):
        cfg = _config_from_args(args, args.action)
        status, summary = run(cfg, log)
        _emit({k: summary[k] for k in ("experiment", "verdict", "pooled", "error") if k in summary})
        return status
    if args.command == "oracle":
        d1, d2 = args.d1 or 1, args.d2 or 1
        m = LayeredModel(d1, d2, _simple_field(args, d2))
        gen = GeneratorBox.layered(m, args.radius, boundary=args.boundary, csrw=args.csrw)
        start = tuple(args.start or [0] * (d1 + d2))
        end = tuple(args.end or [0] * (d1 + d2))
        if args.action == "prob":
            _emit(exact_prob(gen, args.t, start, end, info=True))
        else:
            _emit(exact_green(gen, start, end, info=True))
        return EXIT_OK
    if args.command == "theory":
        if args.action == "table":
            sys.stdout.write(theory_table_csv(args.d1s, args.d2s, args.alphas))
            return EXIT_OK
        rows = theory.check_golden()
        for name, a, got, want, ok in rows:
            print(f"{'PASS' if ok else 'FAIL'} {name}{a}: {got} (expected {want})")
        return EXIT_OK if all(r[4] for r in rows) else EXIT_FAIL
    if args.command == "fit":
        s = EstimateSeries.read_jsonl(args.path)
        if args.x_min is not None or args.x_max is not None:
            lo = -math.inf if args.x_min is None else args.x_min
            hi = math.inf if args.x_max is None else args.x_max
            s = EstimateSeries([p for p in s.points if lo <= p.t <= hi], s.meta)
        fit = fit_exponent(s, min_hits=args.min_hits)
        out = {"fit": fit.as_dict()}
        if args.theory is not None:
            out["comparison"] = compare_to_theory(fit, args.theory, args.tolerance)
        _emit(out)
        return EXIT_OK if args.theory is None or out["comparison"]["verdict"] == "PASS" else EXIT_FAIL
    if args.command == "accept":
        opts = {"criteria": args.criteria} if args.criteria else {}
        cfg = RunConfig("acceptance", scenery_seeds=tuple(args.seeds), output=args.output, options=opts)
        status, _ = run(cfg, log)
        return status
    if args.command == "run":
        cfg = RunConfig.load(args.config)
        if args.output:
            cfg = cfg.override(output=args.output)
        status, summary = run(cfg, log)
        _emit({k: summary[k] for k in ("experiment", "verdict", "pooled", "error", "golden") if k in summary})
        return status
    return EXIT_CONFIG


def main(argv=None):
    try:
        return _main(argv)
    except ConfigError as e:
        _emit(e.as_json())
        return EXIT_CONFIG
    except (ResourceError, OutOfRegime, MemoryError) as e:
        _emit({"error": type(e).__name__, "message": str(e)})
        return EXIT_RESOURCE
    except stats.InsufficientData as e:
        _emit({"error": "InsufficientData", "message": str(e)})
        return EXIT_FAIL
    except (ValueError, FileNotFoundError) as e:
        _emit({"error": type(e).__name__, "message": str(e)})
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
