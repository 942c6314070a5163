"""Command-line entry point.

Every subcommand prints one report to stdout.  JSON is emitted with sorted
keys so identical arguments give byte-identical output.

Exit codes: 0 ok, 1 usage error, 2 invariant failure, 3 budget exceeded.
"""
from __future__ import annotations

import argparse
import io
import json
import random
import sys
from dataclasses import dataclass, field
from fractions import Fraction

from . import __version__
from . import convexity as cv
from . import haagerup as hg
from . import ubs as U
from .pocset import BudgetExceeded, PocsetError, WeightedPocset, iter_bits, rank, validate
from .spaces import OutOfDomain, SpaceError, parse_space

EXIT_OK, EXIT_USAGE, EXIT_INVARIANT, EXIT_BUDGET = 0, 1, 2, 3
RANK_WALL_LIMIT = 64  # exact rank is exponential; beyond this it must be asked for


class UsageError(Exception):
    pass


class InvariantFailure(Exception):
    pass


@dataclass
class RunConfig:
    space: str = "line:n=8"
    depth: int | None = None
    gens: list = field(default_factory=list)
    xi: str | None = None
    fmt: str = "json"
    seed: int = 0
    budget_vertices: int = 200_000
    budget_words: int = 4
    c_schedule: list = field(default_factory=list)
    epsilon: Fraction = Fraction(1, 100)
    jobs: int = 1

    def validate(self) -> None:
        for name in ("budget_vertices", "budget_words", "jobs"):
            if getattr(self, name) <= 0:
                raise UsageError(f"--{name.replace('_', '-')} must be positive")
        if self.depth is not None and self.depth < 0:
            raise UsageError("--depth must be non-negative")
        if self.epsilon <= 0:
            raise UsageError("--epsilon must be positive")
        if any(c <= 0 for c in self.c_schedule):
            raise UsageError("--c-schedule entries must be positive")


# ----------------------------------------------------------------------
# parsing helpers


def parse_c_schedule(text: str) -> list[Fraction]:
    """``"4,16,64"`` or ``"4^1..4^5"``."""
    text = text.strip()
    if not text:
        return []
    if ".." in text:
        lo, hi = text.split("..", 1)
        try:
            b1, e1 = lo.split("^")
            b2, e2 = hi.split("^")
            if b1 != b2:
                raise ValueError
            return [Fraction(int(b1)) ** k for k in range(int(e1), int(e2) + 1)]
        except ValueError:
            raise UsageError(f"bad --c-schedule range {text!r}; use e.g. 4^1..4^5") from None
    try:
        return [Fraction(t) for t in text.split(",")]
    except (ValueError, ZeroDivisionError):
        raise UsageError(f"bad --c-schedule {text!r}") from None


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--space", default="line:n=8", help="space spec, e.g. strip:n=8,w=2")
    common.add_argument("--depth", type=int, default=None)
    common.add_argument("--gens", default="", help="comma-separated generator words")
    common.add_argument("--xi", default=None, help="boundary point name")
    common.add_argument("--format", dest="fmt", choices=("json", "csv", "text"), default="json")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--budget-vertices", type=int, default=200_000)
    common.add_argument("--budget-words", type=int, default=4)
    common.add_argument("--c-schedule", default="")
    common.add_argument("--epsilon", type=_fraction, default=Fraction(1, 100))

    p = _Parser(prog="mediankit", description="Median spaces, boundary sets and Haagerup cocycles.")
    p.add_argument("--version", action="version", version=f"mediankit {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("build", parents=[common], help="pocset JSON of a space at a depth")
    s = sub.add_parser("analyze", parents=[common], help="rank, walls, facing tuples, strong separation")
    s.add_argument("--force-rank", action="store_true",
                   help=f"compute exact rank above {RANK_WALL_LIMIT} walls")
    s = sub.add_parser("ubs", parents=[common], help="minimal decomposition and alpha tables")
    s.add_argument("--emit", choices=("graph", "chains", "alpha-table", "xk"), default="graph")
    sub.add_parser("cocycle", parents=[common], help="Haagerup norms, cocycle law, convergence")
    sub.add_parser("witness", parents=[common], help="elementarity witness search")
    s = sub.add_parser("selftest", parents=[common], help="run the invariant suite")
    s.add_argument("--jobs", type=int, default=1)
    s = sub.add_parser("bridge", parents=[common], help="shores and bridge of two convex sets")
    s.add_argument("--sets", default="", help="vertex indices, e.g. '0,3;5,7' (random if omitted)")
    s = sub.add_parser("facing", parents=[common], help="facing tuple search")
    s.add_argument("--n", type=int, default=2)
    s = sub.add_parser("skewer", parents=[common], help="double skewering search")
    s.add_argument("--h", type=int, required=True)
    s.add_argument("--k", type=int, required=True)
    return p


def config_from_args(args) -> RunConfig:
    cfg = RunConfig(
        space=args.space, depth=args.depth,
        gens=[w.strip() for w in args.gens.split(",") if w.strip()],
        xi=args.xi, fmt=args.fmt, seed=args.seed,
        budget_vertices=args.budget_vertices, budget_words=args.budget_words,
        c_schedule=parse_c_schedule(args.c_schedule), epsilon=args.epsilon,
        jobs=getattr(args, "jobs", 1),
    )
    cfg.validate()
    return cfg


# ----------------------------------------------------------------------
# output


def dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def parse_report(text: str) -> dict:
    """Parse a JSON report emitted by any subcommand."""
    data = json.loads(text)
    if not isinstance(data, dict):
        raise ValueError("report must be a JSON object")
    return data


def _csv(rows: list[list]) -> str:
    buf = io.StringIO()
    for r in rows:
        buf.write(",".join(str(x) for x in r) + "\n")
    return buf.getvalue()


def _text(obj, indent: int = 0) -> str:
    pad = "  " * indent
    out = []
    if isinstance(obj, dict):
        for k in sorted(obj):
            v = obj[k]
            if isinstance(v, (dict, list)) and v:
                out.append(f"{pad}{k}:")
                out.append(_text(v, indent + 1))
            else:
                out.append(f"{pad}{k}: {v}")
    elif isinstance(obj, list):
        for v in obj:
            out.append(f"{pad}- {json.dumps(v, sort_keys=True)}")
    else:
        out.append(f"{pad}{obj}")
    return "\n".join(out)


def render(cfg: RunConfig, obj: dict, csv_rows: list[list] | None = None) -> str:
    if cfg.fmt == "json":
        return dump_json(obj)
    if cfg.fmt == "csv":
        if csv_rows is None:
            raise UsageError("this subcommand has no CSV form; use --format json or text")
        return _csv(csv_rows)
    return _text(obj) + "\n"


# ----------------------------------------------------------------------
# shared plumbing


def _space(cfg: RunConfig):
    X = parse_space(cfg.space)
    n = X.default_depth if cfg.depth is None else cfg.depth
    return X, n


def _level(cfg: RunConfig, X, n: int):
    est = X.vertex_estimate(n)
    if est is not None and est > cfg.budget_vertices:
        raise BudgetExceeded("vertices", cfg.budget_vertices)
    L = X.level(n)
    if len(L.labels) > cfg.budget_vertices:
        raise BudgetExceeded("vertices", cfg.budget_vertices)
    return L


def _gens(cfg: RunConfig, X) -> list:
    if cfg.gens:
        return [X.automorphism(w) for w in cfg.gens]
    return [g for name, g in sorted(X.automorphisms().items()) if name != "id"]


def _frac_str(x) -> str:
    return str(Fraction(x))


# ----------------------------------------------------------------------
# subcommands


def cmd_build(cfg: RunConfig) -> str:
    X, n = _space(cfg)
    L = _level(cfg, X, n)
    data = L.pocset.to_json_dict()
    if WeightedPocset.from_json_dict(data).to_json_dict() != data:
        raise InvariantFailure("pocset JSON does not round-trip")
    return render(cfg, data, [["wall", "weight"]] + [[w, _frac_str(x)] for w, x in enumerate(L.pocset.weights)])


def cmd_analyze(cfg: RunConfig, force_rank: bool = False) -> str:
    X, n = _space(cfg)
    L = _level(cfg, X, n)
    P = L.pocset
    if P.walls > RANK_WALL_LIMIT and not force_rank:
        raise UsageError(f"{P.walls} walls; exact rank above {RANK_WALL_LIMIT} walls needs --force-rank")
    problems = validate(P)
    if problems:
        raise InvariantFailure(problems[0])
    R = L.realization
    facing = {}
    for k in (2, 3):
        t = cv.find_facing_tuple(P, k, L.base)
        facing[str(k)] = t
    pairs = []
    for h in range(P.size):
        for k in range(h + 1, P.size):
            if (h >> 1) != (k >> 1) and P.leq(h, k ^ 1) and cv.is_strongly_separated(P, h, k):
                pairs.append([h, k])
    data = {
        "command": "analyze", "space": cfg.space, "depth": n,
        "walls": P.walls, "vertices": len(R.vertices), "edges": len(R.edges),
        "rank": rank(P, warn_above=None), "declared_rank": X.declared_rank,
        "facing": facing, "strongly_separated_pairs": len(pairs),
        "strongly_separated_sample": pairs[:20],
        "wall_keys": [repr(k) for k in L.wall_keys],
    }
    rows = [["walls", "vertices", "rank", "strongly_separated_pairs"],
            [P.walls, len(R.vertices), data["rank"], len(pairs)]]
    return render(cfg, data, rows)


def _omega(cfg: RunConfig):
    X, n = _space(cfg)
    L = _level(cfg, X, n)
    xi = X.boundary(cfg.xi)
    return X, L, xi, U.sigma_difference(X, xi, None, n)


def cmd_ubs(cfg: RunConfig, emit: str = "graph") -> str:
    X, L, xi, om = _omega(cfg)
    G = U.minimal_decomposition(om)
    if len(G.vertices) > X.declared_rank or not G.is_acyclic():
        raise InvariantFailure("boundary graph has too many vertices or a cycle")
    base = {"command": "ubs", "space": cfg.space, "depth": L.depth, "xi": xi.name,
            "stable": om.stable}
    if emit == "graph":
        data = dict(base, graph=G.to_json_dict(),
                    adjacency={str(i): [j for a, j in G.edges if a == i] for i in range(len(G.vertices))})
        srs = []
        for v in G.vertices:
            sr = U.is_strongly_reduced(v)
            srs.append({"strongly_reduced": sr.holds, "chains": [list(c) for c in sr.chains]})
        data["classes"] = srs
        return render(cfg, data, [["vertex", "anchor", "size"]] +
                      [[i, a, len(v)] for i, (a, v) in enumerate(zip(G.anchors, G.vertices))])
    if emit == "chains":
        chains = [list(c) for c in om.chains]
        data = dict(base, chains=chains,
                    keys=[[repr(L.hkey(h)) for h in c] for c in chains])
        return render(cfg, data, [["chain", "halfspace"]] + [[i, h] for i, c in enumerate(chains) for h in c])
    if emit == "alpha-table":
        rows = U.alpha_table(om)
        data = dict(base, alpha=[[h, _frac_str(d), _frac_str(a), c] for h, d, a, c in rows])
        return render(cfg, data, [["halfspace", "distance", "alpha", "chain"]] +
                      [[h, _frac_str(d), _frac_str(a), c] for h, d, a, c in rows])
    xk = U.construct_xK(om, _gens(cfg, X))
    return render(cfg, dict(base, xk=xk.to_json_dict()))


def cmd_cocycle(cfg: RunConfig) -> str:
    X, n = _space(cfg)
    L = _level(cfg, X, n)
    gens = _gens(cfg, X)
    rows = []
    bad = 0
    for g in gens:
        try:
            b = hg.haagerup_cocycle(g, L)
        except OutOfDomain as exc:
            rows.append({"gen": g.name, "defined": False, "reason": str(exc)})
            continue
        d = hg.displacement(g, L)
        ok = b.norm2() == 2 * d
        bad += not ok
        rows.append({"gen": g.name, "defined": True, "norm_sq": _frac_str(b.norm2()),
                     "two_d": _frac_str(2 * d), "identity": ok,
                     "norm_1": _frac_str(b.norm_p_p(1))})
    law = []
    if cfg.budget_words < 2:
        raise BudgetExceeded("words", cfg.budget_words)
    for g in gens:
        for h in gens:
            try:
                lhs = hg.haagerup_cocycle(g.compose(h), L)
                rhs = hg.haagerup_cocycle(h, L).act(g) + hg.haagerup_cocycle(g, L)
            except OutOfDomain:
                continue
            ok = lhs == rhs
            bad += not ok
            law.append({"g": g.name, "h": h.name, "holds": ok})
    data = {"command": "cocycle", "space": cfg.space, "depth": n, "generators": rows, "cocycle_law": law}
    csv_rows = [["gen", "norm_sq", "two_d", "identity"]] + [
        [r["gen"], r.get("norm_sq", ""), r.get("two_d", ""), r.get("identity", "")] for r in rows]
    if cfg.c_schedule and cfg.xi is not None:
        xi = X.boundary(cfg.xi)
        table = []
        for g in gens:
            ex = hg.ubs_convergence_experiment(X, g, xi, cfg.c_schedule, [n])
            for r in ex["rows"]:
                table.append([g.name, _frac_str(r.c), r.depth, _frac_str(r.residual_sq),
                              f"{r.residual_float:.12g}"])
            data.setdefault("beta", {})[g.name] = ex["beta"][n]
        data["convergence"] = table
        csv_rows = [["gen", "c", "depth", "residual_exact", "residual_float"]] + table
    out = render(cfg, data, csv_rows)
    if bad:
        raise InvariantFailure(out)
    return out


def cmd_witness(cfg: RunConfig) -> str:
    X, n = _space(cfg)
    gens = _gens(cfg, X)
    xi = X.boundary(cfg.xi) if (cfg.xi or X.boundary_points()) else None
    rep = hg.elementarity_witness(X, gens, xi, cfg.epsilon, c_schedule=cfg.c_schedule or None,
                                  depth=cfg.depth)
    data = dict(rep.to_json_dict(), command="witness", space=cfg.space,
                psi=rep.psi.to_json_dict() if len(rep.psi) <= 2000 else None)
    rows = [["c", "depth", "residual_exact", "residual_float"]] + [
        [_frac_str(c), d, _frac_str(r), f"{float(r) ** 0.5:.12g}"] for c, d, r in rep.trail]
    return render(cfg, data, rows)


def cmd_selftest(cfg: RunConfig) -> str:
    from .selftest import report, run_selftest
    results = run_selftest(seed=cfg.seed, jobs=cfg.jobs)
    out = report(results)
    if not all(r.ok for r in results):
        raise InvariantFailure(out)
    return out


def _parse_sets(text: str) -> list[list[int]]:
    try:
        return [[int(t) for t in part.split(",")] for part in text.split(";")]
    except ValueError:
        raise UsageError(f"bad --sets {text!r}; use e.g. '0,3;5,7'") from None


def cmd_bridge(cfg: RunConfig, sets: str = "") -> str:
    X, n = _space(cfg)
    L = _level(cfg, X, n)
    R = L.realization
    if sets:
        parts = _parse_sets(sets)
        if len(parts) != 2 or any(i < 0 or i >= len(R.vertices) for p in parts for i in p):
            raise UsageError("--sets needs two groups of valid vertex indices")
        C1 = cv.convex_hull(R, [R.vertices[i] for i in parts[0]])
        C2 = cv.convex_hull(R, [R.vertices[i] for i in parts[1]])
    else:
        from .selftest import random_convex_set
        rng = random.Random(cfg.seed)
        C1, C2 = random_convex_set(R, rng), random_convex_set(R, rng)
    try:
        br = cv.shores_and_bridge(C1, C2, verify=True)
    except cv.ConvexityError as exc:
        raise InvariantFailure(str(exc)) from exc
    data = dict(br.to_json_dict(), command="bridge", space=cfg.space, depth=n,
                C1=sorted(C1.members), C2=sorted(C2.members),
                vertex_labels={str(i): repr(L.label(v)) for i, v in enumerate(R.vertices)
                               if i in br.bridge.members})
    return render(cfg, data, [["bridge", "shore", "interval"]] + [[b, s, i] for b, s, i in data["witness"]])


def cmd_facing(cfg: RunConfig, k: int = 2) -> str:
    X, n = _space(cfg)
    L = _level(cfg, X, n)
    t = cv.find_facing_tuple(L.pocset, k, L.base)
    data = {"command": "facing", "space": cfg.space, "depth": n, "n": k, "tuple": t,
            "keys": None if t is None else [repr(L.hkey(h)) for h in t]}
    return render(cfg, data, [["halfspace", "key"]] + ([[h, repr(L.hkey(h))] for h in t] if t else []))


def cmd_skewer(cfg: RunConfig, h: int, k: int) -> str:
    X, n = _space(cfg)
    L = _level(cfg, X, n)
    if not (0 <= h < L.pocset.size and 0 <= k < L.pocset.size):
        raise UsageError(f"halfspace ids must lie in 0..{L.pocset.size - 1}")
    res = cv.skewering_search(L, _gens(cfg, X), h, k, max_length=cfg.budget_words)
    data = {"command": "skewer", "space": cfg.space, "depth": n, "h": h, "k": k,
            "word": None if res.word is None else list(res.word), "image": res.image,
            "gap": None if res.gap is None else _frac_str(res.gap), "explored": res.explored}
    return render(cfg, data, [["word", "image", "gap"], ["*".join(res.word or ()), res.image, data["gap"]]])


def dispatch(args, cfg: RunConfig) -> str:
    c = args.command
    if c == "build":
        return cmd_build(cfg)
    if c == "analyze":
        return cmd_analyze(cfg, args.force_rank)
    if c == "ubs":
        return cmd_ubs(cfg, args.emit)
    if c == "cocycle":
        return cmd_cocycle(cfg)
    if c == "witness":
        return cmd_witness(cfg)
    if c == "selftest":
        return cmd_selftest(cfg)
    if c == "bridge":
        return cmd_bridge(cfg, args.sets)
    if c == "facing":
        return cmd_facing(cfg, args.n)
    if c == "skewer":
        return cmd_skewer(cfg, args.h, args.k)
    raise UsageError(f"unknown command {c!r}")  # pragma: no cover


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        cfg = config_from_args(args)
        out.write(dispatch(args, cfg))
        return EXIT_OK
    except UsageError as exc:
        err.write(f"mediankit: usage error: {exc}\n")
        return EXIT_USAGE
    except SpaceError as exc:
        where = f" (column {exc.column})" if getattr(exc, "column", None) else ""
        err.write(f"mediankit: bad space spec{where}: {exc}\n")
        return EXIT_USAGE
    except U.DepthTooSmall as exc:
        err.write(f"mediankit: {exc}\n")
        return EXIT_USAGE
    except BudgetExceeded as exc:
        err.write(f"mediankit: {exc}\n")
        return EXIT_BUDGET
    except InvariantFailure as exc:
        out.write(str(exc) if str(exc).endswith("\n") else f"{exc}\n")
        err.write("mediankit: invariant failure\n")
        return EXIT_INVARIANT
    except (U.UBSError, OutOfDomain, PocsetError, cv.ConvexityError, hg.HaagerupError) as exc:
        err.write(f"mediankit: {type(exc).__name__}: {exc}\n")
        return EXIT_INVARIANT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
