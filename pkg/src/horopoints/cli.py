"""Command-line front end: horopoints <subcommand> [options].

Exit status: 0 when every record passes, 1 on a failing record or golden drift,
2 when a computation is infeasible (cap exceeded) or the configuration is invalid.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    ConfigInvalid,
    DimensionTooLarge,
    EnumerationTooLarge,
    GoldenMismatch,
    HoropointsError,
)
from .reporting import ResultRecord, bless, check_golden, write_records

STOCHASTIC = {("kloos", "crt"), ("gon", "siegel"), ("gon", "haar"), ("gon", "minkowski"), ("small", "limit")}


# ------------------------------------------------------------------ parsing

def parse_range(text: str) -> list[int]:
    """'a..b' (inclusive), 'a,b,c', a single integer, or '' for nothing."""
    text = str(text).strip()
    if not text:
        return []
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..")
            out += list(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    return out


def parse_boxes(text: str):
    """'x0,y0,x1,y1;...' into a BoxRegion (any dimension: lo coordinates then hi)."""
    from .geomnum import BoxRegion

    boxes = []
    for chunk in str(text).split(";"):
        vals = [float(v) for v in chunk.split(",") if v.strip()]
        if not vals or len(vals) % 2:
            raise ConfigInvalid(f"box {chunk!r} needs an even number of coordinates")
        k = len(vals) // 2
        boxes.append((vals[:k], vals[k:]))
    return BoxRegion.of(boxes)


def load_config(path) -> dict:
    """Flat 'key = value' file; '#' starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigInvalid(f"{path}:{lineno}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="64-bit seed (required for stochastic checks)")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--cap", type=int, default=10**8, help="enumeration cap")
    p.add_argument("--out", default="-", help="output path, '-' for stdout")
    p.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")
    p.add_argument("--golden", default=None, help="golden file to compare against (or write with --bless)")
    p.add_argument("--bless", action="store_true")
    p.add_argument("--config", default=None, help="flat key = value file; command-line flags win")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="horopoints", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("kloos", help="matrix Kloosterman sums: oracle equivalences and bounds")
    p.add_argument("--n", default="1", help="matrix sizes, e.g. 1,2")
    p.add_argument("--q", default="2..12", help="moduli, e.g. 1..100")
    p.add_argument("--check", default="weil",
                   choices=("weil", "crt", "primepower", "ramanujan", "prime_modulus_bound",
                            "invertible_pair_bound", "gauss_sum_bound", "anticommutant_dim", "ramanujan_bound"))
    p.add_argument("--samples", type=int, default=20)
    _common(p)

    p = sub.add_parser("prim", help="primitive matrices: counts and the coset parametrization")
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--q", default="1..12")
    p.add_argument("--check", default="count", choices=("count", "gl", "bijection"))
    _common(p)

    p = sub.add_parser("equi", help="decay of Weyl sums, Kloosterman averages and Hecke averages")
    p.add_argument("--mode", default="weyl", choices=("weyl", "aq", "hecke", "improvement"))
    p.add_argument("--q", default="", help="moduli (default: primes <= 500 for weyl/hecke, 2..300 for aq)")
    p.add_argument("--radius", type=int, default=2)
    p.add_argument("--y0", type=float, default=2.0, help="height threshold of the test function")
    _common(p)

    p = sub.add_parser("gon", help="geometry of numbers")
    p.add_argument("--check", default="minima", choices=("minima", "phi", "siegel", "haar", "minkowski"))
    p.add_argument("--cases", type=int, default=20)
    p.add_argument("--samples", type=int, default=100_000)
    _common(p)

    p = sub.add_parser("rank", help="integer matrices with prescribed rank mod p")
    p.add_argument("--r", type=int, default=1)
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--d", type=int, default=3)
    p.add_argument("--p", default="3,5,7,11")
    p.add_argument("--b", default="", help="box sizes (default: all legal)")
    p.add_argument("--naive", action="store_true", help="also run the naive enumeration")
    _common(p)

    p = sub.add_parser("small", help="small solutions of random linear congruences")
    p.add_argument("--check", default="hist", choices=("hist", "grid", "limit", "inverse"))
    p.add_argument("--q", default="101")
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--omega", default="-1,-1,1,1")
    p.add_argument("--b", default="1")
    p.add_argument("--r-max", type=int, default=6)
    p.add_argument("--mode", default="exhaustive", choices=("exhaustive", "sample"))
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--cases", type=int, default=100)
    _common(p)

    p = sub.add_parser("selftest", help="quick end-to-end checks of every module")
    _common(p)
    return ap


def parse_args(argv=None) -> argparse.Namespace:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.config:
        cfg = load_config(args.config)
        sub = next(a for a in ap._subparsers._group_actions)  # the subcommand dispatcher
        sp = sub.choices[args.cmd]
        dests = {a.dest: a for a in sp._actions}
        defaults = {}
        for k, v in cfg.items():
            if k not in dests or k in ("config", "help"):
                raise ConfigInvalid(f"unknown config key {k!r} for {args.cmd}")
            act = dests[k]
            if isinstance(act, argparse._StoreTrueAction):
                defaults[k] = v.lower() in ("1", "true", "yes", "on")
            else:
                defaults[k] = act.type(v) if act.type else v
                if act.choices and defaults[k] not in act.choices:
                    raise ConfigInvalid(f"{k} = {v!r} not in {act.choices}")
        sp.set_defaults(**defaults)
        args = ap.parse_args(argv)
    if args.cap <= 0 or args.threads <= 0:
        raise ConfigInvalid("caps and thread counts must be positive")
    check = getattr(args, "check", None) or getattr(args, "mode", None)
    if (args.cmd, check) in STOCHASTIC and args.seed is None:
        raise ConfigInvalid(f"{args.cmd} --check {check} is stochastic; --seed is required")
    if args.cmd == "small" and args.check == "hist" and args.mode == "sample" and args.seed is None:
        raise ConfigInvalid("sampled histograms need --seed")
    return args


# ----------------------------------------------------------------- handlers

def _rec(op, params, payload, passed, args) -> ResultRecord:
    return ResultRecord(op, params, payload, passed, args.seed)


def _bound_records(reports, args, op) -> list[ResultRecord]:
    return [_rec(op, r.params, {"measured": r.measured, "bound": r.bound_value, "ratio": r.ratio},
                 r.passed, args) for r in reports]


def run_kloos(args) -> list[ResultRecord]:
    from . import kloosterman as K
    from .numtheory import factor, is_prime
    from .rng import stream

    ns, qs = parse_range(args.n), parse_range(args.q)
    out: list[ResultRecord] = []
    for n in ns:
        for q in qs:
            fs = factor(q) if q > 1 else ()
            if args.check == "weil":
                if n != 1:
                    raise ConfigInvalid("the Weil check is for n = 1")
                out += _bound_records(K.scan_weil(q), args, "kloos.weil")
            elif args.check == "crt":
                rng = stream(args.seed, n, q)
                worst, exact = 0.0, True
                for _ in range(args.samples):
                    A, B = rng.integers(0, q, (2, n, n))
                    a = K.kloos_crt_exact(A, B, q)
                    b = K.kloos_brute(A, B, q, cap=args.cap)
                    exact &= a.same_as(b)
                    va, vb = a.value(), b.value()
                    worst = max(worst, abs(va - vb) / max(1.0, abs(vb)))
                out.append(_rec("kloos.crt", {"n": n, "q": q, "samples": args.samples},
                                {"max_rel_err": worst, "exact_equal": exact}, bool(exact and worst <= 1e-9), args))
            elif args.check in ("primepower", "ramanujan"):
                if len(fs) != 1:
                    continue
                (p, beta), = fs
                from .modring import all_matrices

                if args.check == "primepower" and beta < 2:
                    continue
                Ms = all_matrices(n, n, q, args.cap)
                ok = True
                if args.check == "primepower":
                    # an evenly spaced subsample; the route needs A, B nonzero mod p
                    sub = [M for M in Ms[:: max(1, len(Ms) // 40)] if np.any(M % p)]
                    for A in sub:
                        for B in sub:
                            ok &= K.kloos_primepower(A, B, p, beta).same_as(K.kloos_brute(A, B, q))
                else:
                    Z = np.zeros((n, n), dtype=np.int64)
                    for A in Ms:
                        ok &= K.ramanujan_eval(A, p, beta) == K.kloos_brute(Z, A, q).as_integer()
                out.append(_rec(f"kloos.{args.check}", {"n": n, "q": q}, {"matrices": len(Ms)}, bool(ok), args))
            elif args.check == "ramanujan_bound":
                out += _bound_records(K.scan_ramanujan_bound(n, q), args, "kloos.ramanujan_bound")
            else:
                if not is_prime(q):
                    continue
                fn = {"prime_modulus_bound": lambda: K.scan_prime_modulus_bound(n, q),
                      "invertible_pair_bound": lambda: K.scan_invertible_pair_bound(n, q),
                      "gauss_sum_bound": lambda: K.scan_gauss_sum_bound(n, q),
                      "anticommutant_dim": lambda: K.scan_anticommutant_dim(n, q)}[args.check]
                out += _bound_records(fn(), args, f"kloos.{args.check}")
    return out


def run_prim(args) -> list[ResultRecord]:
    from . import primitive as P
    from .modring import count_gl

    out = []
    for q in parse_range(args.q):
        prm = {"d": args.d, "n": args.n, "q": q}
        if args.check == "count":
            f, e = P.primitive_count(args.d, args.n, q), P.primitive_count_enum(args.d, args.n, q, args.cap, args.threads)
            out.append(_rec("prim.count", prm, {"formula": f, "enumerated": e}, f == e, args))
        elif args.check == "gl":
            f, e = count_gl(args.n, q), P.gl_count_enum(args.n, q, args.cap)
            out.append(_rec("prim.gl", {"n": args.n, "q": q}, {"formula": f, "enumerated": e}, f == e, args))
        else:
            rep = P.verify_bijection(args.d, args.n, q, args.cap)
            out.append(_rec("prim.bijection", prm,
                            {"pairs": rep.pairs, "primitive": rep.primitive, "lands_in_Rq": rep.lands_in_Rq,
                             "injective": rep.injective, "surjective": rep.surjective,
                             "relation_ok": rep.relation_ok}, rep.ok, args))
    return out


def run_equi(args) -> list[ResultRecord]:
    from . import horosphere as H

    qs = parse_range(args.q)
    phi = H.HeightIndicator(args.y0)
    if args.mode == "improvement":
        early, late = H.primes_between(2, 20), H.primes_between(200, 500)
        e, l, ratio = H.hecke_improvement(phi, early, late)
        return [_rec("equi.improvement", {"y0": args.y0, "early": [2, 20], "late": [200, 500]},
                     {"early": e, "late": l, "ratio": ratio}, ratio >= 3, args)]
    if not qs:
        qs = list(range(2, 301)) if args.mode == "aq" else H.primes_between(2, 500)
    t = H.decay_scan(args.mode, qs, radius=args.radius, phi=phi)
    out = [_rec(f"equi.{args.mode}.row", {"q": row["param"]},
                {"abs": row["abs"], "bound": row["bound"]},
                None if row["bound"] is None else bool(row["abs"] <= row["bound"] * (1 + 1e-9)), args)
           for row in t.rows]
    s = t.summary()
    out.append(_rec(f"equi.{args.mode}", {"q_min": min(qs), "q_max": max(qs), "count": len(qs)},
                    {k: s[k] for k in ("exponent", "slack", "slope", "constant", "residual", "envelope_ok")},
                    t.passed, args))
    return out


def run_gon(args) -> list[ResultRecord]:
    from . import geomnum as G

    out = []
    if args.check == "minima":
        for i, L in enumerate(G.lattice_battery(args.cases, seed=args.seed or 0)):
            a, b = G.successive_minima(L), G.successive_minima_direct(L, args.cap)
            out.append(_rec("gon.minima", {"case": i, "d": L.dim}, {"minima": a.tolist(), "direct": b.tolist()},
                            bool(np.allclose(a, b, rtol=0, atol=1e-9)), args))
    elif args.check == "phi":
        for i, L in enumerate(G.lattice_battery(min(args.cases, 6), seed=args.seed or 0)):
            kappa = 2 * L.dim + 1
            base = G.phi_eval(L, 1, 0.7, 1.3, kappa)
            for r in (0.5, 3.0, 17.0):
                sc = G.phi_eval(L, 1, 0.7 * r, 1.3 * r, kappa)
                err = abs(sc.value - base.value / r) / base.value
                out.append(_rec("gon.phi_scaling", {"case": i, "r": r, "kappa": kappa},
                                {"value": base.value, "rel_err": err, "pointwise_ratio": base.ratio},
                                err <= 1e-9, args))
    elif args.check == "minkowski":
        G_ = G.haar_samples_sl2(G.worker_rng(args.seed, 0), args.cases)
        lattices = [G.LatticeBasis(g) for g in G_]
        for R in (0.1, 1.0, 10.0):
            ratios = np.array([G.minkowski_ratio(L, R) for L in lattices])
            out.append(_rec("gon.minkowski", {"d": 2, "R": R, "samples": len(lattices)},
                            {"min_ratio": ratios.min(), "max_ratio": ratios.max()},
                            bool(ratios.min() >= 0.1 and ratios.max() <= 10), args))
    elif args.check == "haar":
        z = G.haar_sample_z(G.worker_rng(args.seed, 0), args.samples)
        p = 3 / (2 * math.pi)
        est = float((z.imag > 2).mean())
        se = math.sqrt(p * (1 - p) / args.samples)
        out.append(_rec("gon.haar_height", {"samples": args.samples}, {"mean": est, "target": p, "stderr": se},
                        abs(est - p) <= 3 * se, args))
    else:
        for rho in (G.Density.ball(2.0), G.Density.box((0, 0), (1, 3)), G.Density.sup_power(1, 1, 4, 10)):
            rep = G.siegel_check_d2(rho, args.samples, args.seed, threads=args.threads)
            rec = rep.to_record()
            out.append(_rec(rec["check"], {"samples": args.samples, "params": rec["params"]},
                            {k: rec[k] for k in ("mean", "target", "stderr")}, rec["pass"], args))
    return out


def run_rank(args) -> list[ResultRecord]:
    from . import rankcount as RC
    from .numtheory import is_prime

    primes = [p for p in parse_range(args.p) if p >= 3 and is_prime(p)]
    bs = parse_range(args.b) or None
    out = []
    rows = RC.ratio_scan(args.d, args.n, args.r, primes, bs, threads=args.threads)
    for row in rows:
        payload = {"N": row["N"], "envelope": row["envelope"], "ratio": row["ratio"], "lower_ok": row["lower_ok"]}
        ok = row["lower_ok"]
        if args.naive:
            naive = RC.count_rank_naive(args.d, args.n, row["p"], row["b"], args.r, args.cap)
            payload["naive"] = naive
            ok = ok and naive == row["N"]
        out.append(_rec("rank.count", {"r": args.r, "n": args.n, "d": args.d, "p": row["p"], "b": row["b"]},
                        payload, ok, args))
    if rows:
        s = RC.scan_summary(rows, args.d, args.n, args.r)
        out.append(_rec("rank.summary", {"r": args.r, "n": args.n, "d": args.d, "primes": primes},
                        {k: s[k] for k in ("rows", "min_ratio", "max_ratio", "floor")},
                        bool(s["min_ok"] and s["lower_ok"]), args))
    return out


def run_small(args) -> list[ResultRecord]:
    from . import smallsol as S

    out = []
    omega = parse_boxes(args.omega)
    b = parse_range(args.b)
    if args.check == "grid":
        pairs = S.check_grid_identity(S.grid_battery(args.cases, seed=args.seed or 0))
        bad = sum(a != c for a, c in pairs)
        return [_rec("small.grid", {"cases": args.cases}, {"checks": len(pairs), "mismatches": bad,
                                                          "solutions": sum(a for a, _ in pairs)}, bad == 0, args)]
    if args.check == "inverse":
        for q in parse_range(args.q):
            f = S.inverse_experiment(args.n, q, omega, b, cap=args.cap)
            out.append(_rec("small.inverse", {"n": args.n, "q": q, "b": b}, {"fraction": float(f), "exact": f,
                                                                              "volume": omega.volume()}, None, args))
        return out
    lim = None
    if args.check == "limit":
        lim = S.limit_constant_mc(omega, "nonzero" if any(b) else "zero", args.r_max, args.samples, args.seed,
                                  threads=args.threads)
        out.append(_rec("small.limit_mc", {"samples": args.samples, "b_class": lim.b_class},
                        {"probs": lim.probs.tolist(), "stderr": lim.stderr().tolist(), "mean": lim.mean,
                         "mean_stderr": lim.mean_stderr}, None, args))
    for q in parse_range(args.q):
        h = S.hist_distribution(args.d, args.n, q, omega, b, args.r_max, mode=args.mode, samples=args.samples,
                                seed=args.seed or 0, threads=args.threads, cap=args.cap)
        for rec in h.records():
            out.append(_rec("small.hist", {"q": q, "r": rec["r"], "b": b}, {"count": rec["count"], "prob": rec["prob"]},
                            None, args))
        out.append(_rec("small.mean", {"q": q, "b": b}, {"mean": h.mean, "total": h.total}, None, args))
        if lim is not None:
            for row in S.compare_to_limit(h, lim):
                out.append(_rec("small.compare", {"q": q, "r": row.r},
                                {"p_q": row.p_q, "c_mc": row.c_mc, "stderr": row.stderr}, row.passed, args))
    return out


def run_selftest(args) -> list[ResultRecord]:
    from . import geomnum as G, kloosterman as K, primitive as P, rankcount as RC, smallsol as S
    from .horosphere import aq_direct, aq_expand, TrigPoly
    from .rng import stream

    out = []

    def add(name, ok, **payload):
        out.append(_rec(f"selftest.{name}", {}, payload, bool(ok), args))

    add("primitive_count", all(P.primitive_count(d, n, q) == P.primitive_count_enum(d, n, q)
                               for d, n in ((2, 1), (2, 2), (3, 1)) for q in range(1, 7)))
    add("bijection", P.verify_bijection(2, 1, 6).ok and P.verify_bijection(2, 2, 4).ok)
    rng = stream(args.seed or 0, 99)
    A, B = rng.integers(0, 12, (2, 2, 2))
    add("kloos_crt", K.kloos_crt_exact(A, B, 12).same_as(K.kloos_brute(A, B, 12)))
    add("weil", all(r.passed for q in range(1, 40) for r in K.scan_weil(q)))
    f = TrigPoly.random(2, 2, 4, rng)
    add("aq_expand", abs(aq_expand(f, 5) - aq_direct(f, 5)) <= 1e-9 * max(1.0, abs(aq_direct(f, 5))))
    add("minima", all(np.allclose(G.successive_minima(L), G.successive_minima_direct(L))
                      for L in G.lattice_battery(6)))
    add("rank", RC.count_rank(RC.RankCountQuery(3, 2, 1, 5, 2)) == RC.count_rank_naive(3, 2, 5, 2, 1))
    add("grid", all(a == b for a, b in S.check_grid_identity(S.grid_battery(10, seed=args.seed or 0))))
    return out


HANDLERS = {"kloos": run_kloos, "prim": run_prim, "equi": run_equi, "gon": run_gon,
            "rank": run_rank, "small": run_small, "selftest": run_selftest}


# --------------------------------------------------------------------- main

def _emit(records, args) -> None:
    text = write_records(records, args.format)
    if args.out == "-":
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except ConfigInvalid as e:
        sys.stderr.write(f"horopoints: invalid configuration: {e}\n")
        return 2
    try:
        records = HANDLERS[args.cmd](args)
    except (EnumerationTooLarge, DimensionTooLarge) as e:
        rec = ResultRecord("error", {"cmd": args.cmd}, {"error": type(e).__name__, "message": str(e)}, False, args.seed)
        _emit([rec], args)
        return 2
    except ConfigInvalid as e:
        rec = ResultRecord("error", {"cmd": args.cmd}, {"error": "ConfigInvalid", "message": str(e)}, False, args.seed)
        _emit([rec], args)
        return 2
    except HoropointsError as e:
        rec = ResultRecord("error", {"cmd": args.cmd}, {"error": type(e).__name__, "message": str(e)}, False, args.seed)
        _emit([rec], args)
        return 1
    _emit(records, args)
    status = 0 if all(r.passed is not False for r in records) else 1
    if args.golden:
        if args.bless:
            bless(records, args.golden)
        else:
            try:
                check_golden(records, args.golden)
            except GoldenMismatch as e:
                sys.stderr.write(f"horopoints: {e}\n")
                return 1
            except FileNotFoundError:
                sys.stderr.write(f"horopoints: golden file {args.golden} missing; rerun with --bless\n")
                return 2
    return status


if __name__ == "__main__":
    sys.exit(main())
