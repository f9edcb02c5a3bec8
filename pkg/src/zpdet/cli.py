"""Command line runner: ``zpdet {factorize,zpd-check,counterexample,maps}``.

Exit codes: 0 pass, 1 internal error, 2 precondition failed (bad input or
rank hypothesis violated), 3 certified negative, 4 inconclusive.  Every
random draw comes from ``--seed`` through keyed streams, and JSON output is
written with sorted keys, so a fixed command line always prints the same
bytes.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import re
import sys
from dataclasses import dataclass

import numpy as np

from .algebra import (
    AlgebraElement,
    AlgebraShape,
    ShapeMismatch,
    random_element,
    random_with_ranks,
    rng_for,
    satisfies_rank_hypothesis,
)
from .bilinear import (
    costara_counterexample,
    costara_witness,
    determinedness_rank,
    evaluate,
    has_product_property_at,
    sample_fiber,
    transpose_counterexample,
    transpose_witness,
)
from .factorization import RankHypothesisViolated, factorize_through, random_zero_product_rank_ones, verify_witness
from .maps import (
    LinearMapMatrix,
    MapError,
    NotBijective,
    NotInvertible,
    derivation_decompose,
    extract_homomorphism,
    kernel_gap,
    pair_identity_check,
    pair_preserves_zero_products,
    random_automorphism,
    random_central,
    random_well_conditioned,
    weighted_hom_decompose,
)
from .rank import RankOneOperator

EXIT_PASS, EXIT_ERROR, EXIT_PRECONDITION, EXIT_NEGATIVE, EXIT_INCONCLUSIVE = 0, 1, 2, 3, 4
DEFAULT_TOL = 1e-9
COUNTEREXAMPLE_SAMPLES = 10_000


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    shape: AlgebraShape
    seed: int = 0
    samples: int | None = None
    tol: float = DEFAULT_TOL
    output: str = "json"
    c: str = "zero"
    u: str | None = None
    v: str | None = None
    construct: str | None = None
    submode: str = "pair"

    @property
    def default_samples(self) -> int:
        return 4 * self.shape.dim ** 2


# parsing


def parse_shape(text: str) -> AlgebraShape:
    try:
        dims = [int(t) for t in text.replace(" ", "").split(",") if t]
    except ValueError:
        raise UsageError(f"bad shape {text!r}, expected e.g. 3 or 3,4") from None
    return AlgebraShape(dims)


def _block_token(tok: str, n: int) -> np.ndarray:
    tok = tok.strip().lower()
    if tok in ("0", "zero"):
        return np.zeros((n, n))
    if tok in ("1", "i", "identity"):
        return np.eye(n)
    if tok == "identity-minus-corner":
        return np.diag([1.0] * (n - 1) + [0.0])
    m = re.fullmatch(r"e(\d)(\d)|e(\d+)_(\d+)", tok)
    if m:
        i, j = (int(g) for g in m.groups() if g is not None)
        if not (1 <= i <= n and 1 <= j <= n):
            raise UsageError(f"{tok} out of range for a block of size {n}")
        out = np.zeros((n, n))
        out[i - 1, j - 1] = 1.0
        return out
    raise UsageError(f"unknown block spec {tok!r}")


def parse_c(spec: str, shape: AlgebraShape, seed: int) -> AlgebraElement:
    """zero | e11 | identity | identity-minus-corner | per-block "e11x0" |
    file:<path> | random-rank:<r1,r2,...>.

    A single token applies to every block, so "e11" on M_3 (+) M_3 is
    e11 (+) e11; use "e11x0" for e11 (+) 0.
    """
    if spec.startswith("file:"):
        with open(spec[5:]) as fh:
            c = AlgebraElement.from_json(json.load(fh))
        if c.shape != shape:
            raise UsageError(f"c from file lives in {c.shape}, not {shape}")
        return c
    if spec.startswith("random-rank:"):
        try:
            ranks = [int(t) for t in spec[12:].split(",")]
        except ValueError:
            raise UsageError(f"bad rank list in {spec!r}") from None
        if len(ranks) != shape.k:
            raise UsageError(f"{len(ranks)} ranks for {shape.k} blocks")
        try:
            return random_with_ranks(shape, ranks, rng_for(seed, 101))
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    tokens = spec.split("x") if "x" in spec and spec != "x" else [spec]
    if len(tokens) == 1:
        tokens = tokens * shape.k
    if len(tokens) != shape.k:
        raise UsageError(f"{len(tokens)} block specs for {shape.k} blocks")
    return AlgebraElement(shape, [_block_token(t, n) for t, n in zip(tokens, shape.block_dims)])


def parse_rank_one(spec: str, shape: AlgebraShape) -> RankOneOperator:
    """"e<i>xe<j>[@block]" (1-based) or file:<path> with {"block", "e", "f"}."""
    if spec.startswith("file:"):
        with open(spec[5:]) as fh:
            data = json.load(fh)
        e = np.asarray(data["e"], dtype=float)
        f = np.asarray(data["f"], dtype=float)
        e = e[:, 0] + 1j * e[:, 1] if e.ndim == 2 else e
        f = f[:, 0] + 1j * f[:, 1] if f.ndim == 2 else f
        block = int(data.get("block", 1)) - 1
    else:
        m = re.fullmatch(r"e(\d+)xe(\d+)(?:@(\d+))?", spec.replace(" ", ""))
        if not m:
            raise UsageError(f"bad rank-one spec {spec!r}, expected e<i>xe<j>[@block]")
        i, j = int(m.group(1)), int(m.group(2))
        block = int(m.group(3) or 1) - 1
        if not 0 <= block < shape.k:
            raise UsageError(f"block {block + 1} out of range")
        n = shape.block_dims[block]
        if not (1 <= i <= n and 1 <= j <= n):
            raise UsageError(f"{spec} out of range for a block of size {n}")
        return RankOneOperator.matrix_unit(block, n, i - 1, j - 1)
    if not 0 <= block < shape.k or e.size != shape.block_dims[block]:
        raise UsageError("rank-one operator from file does not fit the shape")
    return RankOneOperator.normalized(block, e, f)


# commands


def cmd_factorize(cfg: RunConfig):
    shape = cfg.shape
    c = parse_c(cfg.c, shape, cfg.seed)
    if (cfg.u is None) != (cfg.v is None):
        raise UsageError("--u and --v go together")
    if cfg.u is None:
        rng = rng_for(cfg.seed, 102)
        block = int(rng.integers(shape.k))
        if shape.block_dims[block] < 2:
            raise UsageError("no nonzero zero-product rank-one pair in a 1x1 block")
        u, v = random_zero_product_rank_ones(shape.block_dims[block], rng, block)
    else:
        u, v = parse_rank_one(cfg.u, shape), parse_rank_one(cfg.v, shape)
    w = factorize_through(c, u, v, cfg.tol)
    ok = verify_witness(u.to_element(shape), v.to_element(shape), c, w, cfg.tol)
    report = {
        "command": "factorize",
        "shape": list(shape.block_dims),
        "seed": cfg.seed,
        "tolerance": cfg.tol,
        "u": u.to_json(),
        "v": v.to_json(),
        "witness": w.to_json(),
        "max_residual": w.max_residual,
        "passed": ok,
    }
    return report, EXIT_PASS if ok else EXIT_INCONCLUSIVE


def cmd_zpd_check(cfg: RunConfig):
    c = parse_c(cfg.c, cfg.shape, cfg.seed)
    samples = cfg.samples or cfg.default_samples
    rep = determinedness_rank(cfg.shape, c, samples, cfg.seed)
    report = {"command": "zpd-check", "shape": list(cfg.shape.block_dims), **rep.to_json()}
    code = {"determined-consistent": EXIT_PASS, "not-determined": EXIT_NEGATIVE}.get(rep.verdict, EXIT_INCONCLUSIVE)
    return report, code


def _counterexample(name, n, samples, seed, tol):
    if name == "costara":
        c, V = costara_counterexample(n)
        x, y = costara_witness(n)
    else:
        c, V = transpose_counterexample(n)
        x, y = transpose_witness(n)
    fiber = sample_fiber(c, samples, seed)
    chk = has_product_property_at(V, c, fiber, tol)
    val = evaluate(V, x, y)
    out = {
        "name": name,
        "c": c.to_json(),
        "x": x.to_json(),
        "y": y.to_json(),
        "xy_norm": (x @ y).norm(),
        "fiber_samples": len(fiber),
        "fiber_max_deviation": chk.max_deviation,
        "fiber_constant": bool(chk.holds),
    }
    if name == "costara":
        out["value"] = float(val[0].real) if abs(val[0].imag) < 1e-12 else [float(val[0].real), float(val[0].imag)]
    else:
        out["value"] = AlgebraElement.from_vector(c.shape, val).to_json()
    ok = chk.holds and (x @ y).norm() <= 1e-12 and np.linalg.norm(val) > 0.5
    return out, ok


def cmd_counterexample(cfg: RunConfig):
    if cfg.shape.k != 1:
        raise UsageError("counterexamples live in a single block M_n")
    n = cfg.shape.block_dims[0]
    names = ["costara", "transpose"] if cfg.construct in (None, "both") else [cfg.construct]
    if any(name not in ("costara", "transpose") for name in names):
        raise UsageError(f"unknown counterexample {cfg.construct!r}")
    samples = cfg.samples or COUNTEREXAMPLE_SAMPLES
    tol = max(cfg.tol, 1e-8)
    results, ok = [], True
    for name in names:
        out, good = _counterexample(name, n, samples, cfg.seed, tol)
        results.append(out)
        ok &= good
    report = {"command": "counterexample", "shape": [n], "seed": cfg.seed, "tolerance": tol,
              "counterexamples": results, "reproduced": ok}
    return report, EXIT_PASS if ok else EXIT_INCONCLUSIVE


def _maps_pair(cfg: RunConfig):
    shape, construct = cfg.shape, cfg.construct or "inner"
    if construct == "transpose":
        rho0 = LinearMapMatrix.transpose_map(shape)
        phi = psi = rho0
    elif construct in ("inner", "weighted", "identity"):
        rho0 = LinearMapMatrix.identity(shape) if construct == "identity" else random_automorphism(shape, cfg.seed)
        h = random_well_conditioned(shape, rng_for(cfg.seed, 201))
        h2 = random_well_conditioned(shape, rng_for(cfg.seed, 202))
        if construct == "identity":
            h = h2 = AlgebraElement.identity(shape)
        phi = LinearMapMatrix.left_multiplication(h).compose(rho0)
        psi = LinearMapMatrix.right_multiplication(h2).compose(rho0)
    else:
        raise UsageError(f"unknown construction {construct!r} for maps pair")
    zp = pair_preserves_zero_products(phi, psi, seed=cfg.seed, tol=cfg.tol)
    report = {"construct": construct, "zero_product_deviation": zp.max_deviation, "preserves_zero_products": zp.holds}
    if not zp.holds:
        report["witness"] = [zp.worst[0].to_json(), zp.worst[1].to_json()]
        return report, EXIT_NEGATIVE
    ident = pair_identity_check(phi, psi, seed=cfg.seed, tol=cfg.tol)
    rep = extract_homomorphism(phi, psi, tol=cfg.tol, seed=cfg.seed)
    report.update({
        "identity_deviation": ident.max_deviation,
        "extraction": rep.to_json(),
        "rho_error": rep.rho.distance(rho0),
        "kernel_gap": kernel_gap(phi, psi),
    })
    ok = ident.holds and rep.passed and report["rho_error"] <= cfg.tol * max(1.0, rho0.norm())
    return report, EXIT_PASS if ok else EXIT_INCONCLUSIVE


def _maps_single(cfg: RunConfig):
    shape, construct = cfg.shape, cfg.construct or "weighted"
    h0 = AlgebraElement.identity(shape)
    if construct == "transpose":
        rho0 = LinearMapMatrix.transpose_map(shape)
    elif construct in ("weighted", "inner", "identity"):
        rho0 = LinearMapMatrix.identity(shape) if construct == "identity" else random_automorphism(shape, cfg.seed)
        if construct == "weighted":
            h0 = random_central(shape, rng_for(cfg.seed, 203))
    else:
        raise UsageError(f"unknown construction {construct!r} for maps single")
    phi = LinearMapMatrix.left_multiplication(h0).compose(rho0)
    try:
        h, rho, rep = weighted_hom_decompose(phi, cfg.tol, seed=cfg.seed)
    except (NotBijective, NotInvertible) as exc:
        return {"construct": construct, "error": str(exc)}, EXIT_PRECONDITION
    except MapError as exc:
        return {"construct": construct, "error": str(exc)}, EXIT_NEGATIVE
    report = {
        "construct": construct,
        "h": h.to_json(),
        "decomposition": rep.to_json(),
        "h_error": (h - h0).norm(),
        "rho_error": rho.distance(rho0),
    }
    ok = rep.passed and max(report["h_error"], report["rho_error"]) <= cfg.tol * max(1.0, phi.norm())
    return report, EXIT_PASS if ok else EXIT_INCONCLUSIVE


def _maps_derivation(cfg: RunConfig):
    shape, construct = cfg.shape, cfg.construct or "inner"
    c = parse_c(cfg.c, shape, cfg.seed)
    ok_rh, prof = satisfies_rank_hypothesis(c)
    # xi central with xi c = 0: 2i on every block where c vanishes
    xi0 = AlgebraElement(shape, [(2j if r == 0 else 0.0) * np.eye(n) for n, r in zip(shape.block_dims, prof.ranks)])
    m = random_element(shape, rng_for(cfg.seed, 204))
    d0 = LinearMapMatrix.inner_derivation(m)
    if construct == "inner":
        delta = d0 + LinearMapMatrix.left_multiplication(xi0)
    elif construct == "transpose":
        delta = LinearMapMatrix.transpose_map(shape)
    else:
        raise UsageError(f"unknown construction {construct!r} for maps derivation")
    samples = cfg.samples or cfg.default_samples
    try:
        rep = derivation_decompose(delta, c, tol=max(cfg.tol, 1e-8), samples=samples, seed=cfg.seed)
    except MapError as exc:
        worst = getattr(exc, "worst", None)
        out = {"construct": construct, "error": str(exc), "deviation": getattr(exc, "deviation", None)}
        if worst is not None:
            out["witness"] = [worst[0].to_json(), worst[1].to_json()]
        return out, EXIT_NEGATIVE
    report = {"construct": construct, "c": c.to_json(), "rank_hypothesis": ok_rh, **rep.to_json()}
    ok = rep.passed
    if construct == "inner":
        report["xi_error"] = (rep.xi - xi0).norm()
        report["d_error"] = rep.d.distance(d0)
        ok = ok and max(report["xi_error"], report["d_error"]) <= 1e-8
    return report, EXIT_PASS if ok else EXIT_INCONCLUSIVE


def cmd_maps(cfg: RunConfig):
    runners = {"pair": _maps_pair, "single": _maps_single, "derivation": _maps_derivation}
    if cfg.submode not in runners:
        raise UsageError(f"unknown maps submode {cfg.submode!r}")
    body, code = runners[cfg.submode](cfg)
    report = {"command": "maps", "submode": cfg.submode, "shape": list(cfg.shape.block_dims),
              "seed": cfg.seed, "tolerance": cfg.tol, **body, "passed": code == EXIT_PASS}
    return report, code


COMMANDS = {"factorize": cmd_factorize, "zpd-check": cmd_zpd_check,
            "counterexample": cmd_counterexample, "maps": cmd_maps}


# output


def _flatten(obj, prefix=""):
    if isinstance(obj, dict):
        for k in sorted(obj):
            yield from _flatten(obj[k], f"{prefix}.{k}" if prefix else str(k))
    elif isinstance(obj, list) and obj and isinstance(obj[0], (dict, list)):
        for i, item in enumerate(obj):
            yield from _flatten(item, f"{prefix}[{i}]")
    else:
        yield prefix, obj


def _is_bulky(key):
    # matrices and vectors make text/csv unreadable; keep them in json only
    return key.split(".")[-1] in ("blocks", "e", "f", "matrix") or "[" in key.split(".")[-1]


def render(report: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(report, sort_keys=True, indent=2, default=_json_default) + "\n"
    rows = [(k, v) for k, v in _flatten(report) if not _is_bulky(k)]
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["key", "value"])
        writer.writerows((k, json.dumps(v, default=_json_default)) for k, v in rows)
        return buf.getvalue()
    width = max((len(k) for k, _ in rows), default=0)
    return "".join(f"{k:<{width}}  {json.dumps(v, default=_json_default)}\n" for k, v in rows)


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zpdet", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--shape", required=True, help="block sizes, e.g. 3 or 3,4")
    common.add_argument("--seed", type=int, default=0, help="unsigned 64-bit seed (default 0)")
    common.add_argument("--samples", type=int, default=None, help="fiber samples (default 4*dim(A)^2)")
    common.add_argument("--tol", type=float, default=DEFAULT_TOL)
    common.add_argument("--output", choices=["json", "csv", "text"], default="json")
    common.add_argument("--c", default="zero",
                        help="zero | e11 | identity | identity-minus-corner | e11x0 (per block) | "
                             "file:<path> | random-rank:<r1,...>")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("factorize", parents=[common], help="factorize c through a zero-product rank-one pair")
    p.add_argument("--u", help='rank-one operator "e<i>xe<j>[@block]", 1-based; or file:<path>')
    p.add_argument("--v", help="second rank-one operator, same syntax")

    sub.add_parser("zpd-check", parents=[common], help="Monte-Carlo determinedness test at c")

    p = sub.add_parser("counterexample", parents=[common], help="reproduce the two M_n counterexamples")
    p.add_argument("--construct", choices=["costara", "transpose", "both"], default="both")

    p = sub.add_parser("maps", parents=[common], help="round trips for maps preserving zero products")
    p.add_argument("mode", nargs="?", choices=["pair", "single", "derivation"])
    p.add_argument("--submode", choices=["pair", "single", "derivation"])
    p.add_argument("--construct", help="inner | weighted | identity | transpose")
    return parser


def config_from_args(args) -> RunConfig:
    if not 0 <= args.seed < 2 ** 64:
        raise UsageError("seed must be an unsigned 64-bit integer")
    if args.samples is not None and args.samples < 2:
        raise UsageError("--samples must be at least 2")
    if not args.tol > 0:
        raise UsageError("--tol must be positive")
    mode = getattr(args, "mode", None)
    submode = getattr(args, "submode", None)
    if mode and submode and mode != submode:
        raise UsageError(f"conflicting submodes {mode!r} and {submode!r}")
    return RunConfig(
        command=args.command,
        shape=parse_shape(args.shape),
        seed=args.seed,
        samples=args.samples,
        tol=args.tol,
        output=args.output,
        c=args.c,
        u=getattr(args, "u", None),
        v=getattr(args, "v", None),
        construct=getattr(args, "construct", None),
        submode=mode or submode or "pair",
    )


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        report, code = COMMANDS[cfg.command](cfg)
    except RankHypothesisViolated as exc:
        prof = exc.profile.to_json() if exc.profile is not None else None
        print(f"rank hypothesis violated: rank profile {prof}", file=stderr)
        report = {"command": args.command, "error": "rank hypothesis violated", "rank_profile": prof}
        stdout.write(render(report, args.output))
        return EXIT_PRECONDITION
    except (UsageError, ShapeMismatch, OSError, ValueError) as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_PRECONDITION
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=stderr)
        return EXIT_ERROR
    stdout.write(render(report, cfg.output))
    return code


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
