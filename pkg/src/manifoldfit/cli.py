"""Command-line driver: generate example clouds, run the decision
pipeline, dump refinement generations and Gr-fibers, check loop monodromy,
and run the pasting demo.

Exit codes: 0 decided, 1 inconclusive, 2 input error, 3 internal
diagnostic (non-stabilization, degenerate geometry).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .bundles import SampledSet, default_frames, initial_bundle, is_empty
from .generators import GeneratorSpec, UnknownGeneratorError, generate, generator_names
from .pasting import demo_packet, extract_mput, glued_tangent, paste_sections
from .pipeline import collect_gr_fibers, run_decision, stabilize
from .refinement import RefinementConfig, refine_once
from .reports import SCHEMA_VERSION, loop_csv
from .topology import LoopPath, ResolutionError, line_monodromy

EXIT_OK = 0
EXIT_INCONCLUSIVE = 1
EXIT_INPUT = 2
EXIT_DIAGNOSTIC = 3


class InputError(Exception):
    pass


def _parse_density(text: str | None) -> dict:
    out = {}
    if not text:
        return out
    for part in text.split(","):
        if not part:
            continue
        key, _, value = part.partition("=")
        if not value:
            raise InputError(f"bad density entry '{part}', expected key=value")
        out[key.strip()] = int(value)
    return out


def _load_cloud(path: str):
    try:
        payload = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read input file: {exc}") from exc
    if not isinstance(payload, dict) or "points" not in payload:
        raise InputError("input must be a JSON object with a 'points' array")
    points = np.asarray(payload["points"], dtype=float)
    if points.ndim != 2:
        raise InputError("'points' must be a list of coordinate lists")
    if "n" in payload and int(payload["n"]) != points.shape[1]:
        raise InputError("'n' does not match the point coordinates")
    loops = payload.get("loops")
    if loops is not None:
        if not all(isinstance(l, list) for l in loops):
            raise InputError("'loops' must be a list of index lists")
        loops = [[int(i) for i in l] for l in loops]
    meta = {k: payload[k] for k in ("d", "m") if k in payload}
    descriptor = payload.get("descriptor")
    return points, loops, meta, descriptor


def _resolve_points(args):
    if args.generator:
        spec = GeneratorSpec(args.generator, _parse_density(args.density),
                             seed=args.seed)
        samples = generate(spec)
        return samples, None, {}
    if args.input:
        points, loops, meta, descriptor = _load_cloud(args.input)
        samples = SampledSet(points, descriptor=descriptor)
        return samples, loops, meta
    raise InputError("one of --generator or --input is required")


def _config(args) -> RefinementConfig:
    scales = None
    if args.scales:
        scales = tuple(float(s) for s in args.scales.split(","))
    return RefinementConfig(kbar=args.kbar, scales=scales, seed=args.seed)


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")


def cmd_gen(args) -> int:
    spec = GeneratorSpec(args.generator, _parse_density(args.density), seed=args.seed)
    samples = generate(spec)
    out = _outdir(args) / f"{args.generator}.json"
    payload = {
        "schema_version": SCHEMA_VERSION,
        "n": samples.ambient_dim,
        "points": samples.points.tolist(),
        "descriptor": samples.descriptor,
    }
    _write_json(out, payload)
    print(f"wrote {samples.n_points} points to {out}")
    return EXIT_OK


def cmd_check(args) -> int:
    samples, loops, meta = _resolve_points(args)
    d = args.d if args.d is not None else meta.get("d")
    m = args.m if args.m is not None else meta.get("m")
    if d is None or m is None:
        raise InputError("--d and --m are required (or embed d, m in the input file)")
    report = run_decision(samples, int(d), int(m), _config(args),
                          explicit_loops=loops)
    out = _outdir(args) / "decision.json"
    _write_json(out, report.to_dict())
    print(report.verdict_line())
    print(f"report: {out}")
    if not report.stability.get("stabilized", True):
        return EXIT_DIAGNOSTIC
    if report.verdict == "INCONCLUSIVE":
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def cmd_refine(args) -> int:
    samples, _, meta = _resolve_points(args)
    d = args.d if args.d is not None else meta.get("d")
    m = args.m if args.m is not None else meta.get("m")
    if d is None or m is None:
        raise InputError("--d and --m are required")
    config = _config(args)
    outdir = _outdir(args)
    bundle = initial_bundle(samples, default_frames(samples.ambient_dim, int(d)),
                            int(d), int(m))
    scales = config.resolve_scales(samples)
    _write_json(outdir / "bundle_gen0.json", bundle.to_json())
    stabilized = False
    for gen in range(1, config.max_generations + 1):
        nxt = refine_once(bundle, config, _scales=scales)
        _write_json(outdir / f"bundle_gen{gen}.json", nxt.to_json())
        same_dims = all(
            (is_empty(bundle.fibers[k]) and is_empty(nxt.fibers[k]))
            or (not is_empty(bundle.fibers[k]) and not is_empty(nxt.fibers[k])
                and bundle.fibers[k].dim == nxt.fibers[k].dim)
            for k in bundle.fibers)
        bundle = nxt
        if same_dims and gen > 1:
            stabilized = True
            break
    print(f"wrote generations 0..{bundle.generation} to {outdir}")
    return EXIT_OK if stabilized else EXIT_DIAGNOSTIC


def cmd_grfibers(args) -> int:
    samples, _, meta = _resolve_points(args)
    d = args.d if args.d is not None else meta.get("d")
    m = args.m if args.m is not None else meta.get("m")
    if d is None or m is None:
        raise InputError("--d and --m are required")
    bundle, stability = stabilize(samples, int(d), int(m), _config(args))
    fibers = collect_gr_fibers(bundle)
    outdir = _outdir(args)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "kind": "gr_fibers",
        "stability": stability.to_dict(),
        "fibers": {str(i): (None if is_empty(f) else f.to_json())
                   for i, f in fibers.items()},
    }
    _write_json(outdir / "grfibers.json", payload)
    if args.format == "csv":
        with open(outdir / "grfibers.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["sample", "l", "witness_frame", "forced_flat"])
            for i, f in fibers.items():
                if is_empty(f):
                    writer.writerow([i, "", "", ""])
                else:
                    writer.writerow([i, f.l, f.witness_frame,
                                     ";".join(f"{v:.12g}" for v in f.forced.ravel())])
    print(f"wrote gr-fibers to {outdir}")
    return EXIT_OK if stability.stabilized else EXIT_DIAGNOSTIC


def cmd_monodromy(args) -> int:
    samples, loops, meta = _resolve_points(args)
    d = args.d if args.d is not None else meta.get("d")
    m = args.m if args.m is not None else meta.get("m")
    if d is None or m is None:
        raise InputError("--d and --m are required")
    if args.loop:
        loops = [[int(i) for i in args.loop.split(",")]]
    if not loops:
        raise InputError("supply a loop via --loop or the input file's 'loops'")
    bundle, stability = stabilize(samples, int(d), int(m), _config(args))
    fibers = collect_gr_fibers(bundle)
    outdir = _outdir(args)
    worst = EXIT_OK
    reports = []
    for k, walk in enumerate(loops):
        if any(is_empty(fibers[i]) for i in walk):
            raise InputError(f"loop {k} passes through empty Gr-fibers")
        loop = LoopPath(tuple(walk), tuple(fibers[i] for i in walk),
                        singleton=all(fibers[i].is_singleton() for i in walk))
        try:
            rep = line_monodromy(loop)
        except ResolutionError as exc:
            print(f"loop {k}: resolution error: {exc}")
            return EXIT_DIAGNOSTIC
        reports.append(rep.to_dict())
        print(f"loop {k}: {rep.verdict} {rep.mechanism}")
        if rep.angles:
            (outdir / f"loop{k}.csv").write_text(
                loop_csv(walk, samples.points, rep.angles))
        if rep.verdict == "INCONCLUSIVE":
            worst = EXIT_INCONCLUSIVE
    _write_json(outdir / "monodromy.json",
                {"schema_version": SCHEMA_VERSION, "loops": reports})
    return worst


def cmd_paste(args) -> int:
    packet, e_points = demo_packet(args.example)
    seeds = e_points
    mput = extract_mput(packet, seeds)
    glued, dropped = paste_sections(packet, mput)
    outdir = _outdir(args)
    rows = []
    for g in glued:
        tangent = glued_tangent(packet, next(
            s for s in mput if np.allclose(s.point, g.base)))
        rows.append((g.point, tangent.basis()))
    if args.format == "csv":
        with open(outdir / "glued.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            n = packet.n
            writer.writerow([f"x{k}" for k in range(n)] + ["tangent_flat"])
            for point, basis in rows:
                writer.writerow([f"{c:.12g}" for c in point]
                                + [";".join(f"{v:.12g}" for v in basis.ravel())])
    payload = {
        "schema_version": SCHEMA_VERSION,
        "kind": "glued_manifold",
        "example": args.example,
        "dropped": dropped,
        "points": [p.tolist() for p, _ in rows],
        "tangents": [b.tolist() for _, b in rows],
    }
    _write_json(outdir / "glued.json", payload)
    print(f"pasted {len(rows)} points ({dropped} dropped) -> {outdir}")
    return EXIT_OK


def _add_common(parser: argparse.ArgumentParser, io: bool = True) -> None:
    if io:
        parser.add_argument("--generator", choices=generator_names())
        parser.add_argument("--input")
        parser.add_argument("--density", default=None,
                            help="comma list like t=128,s=8,disk=400")
    parser.add_argument("--d", type=int, default=None)
    parser.add_argument("--m", type=int, default=None)
    parser.add_argument("--kbar", type=int, default=2)
    parser.add_argument("--scales", default=None,
                        help="comma list of decreasing radii")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default=".")
    parser.add_argument("--format", choices=("json", "csv"), default="json")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="manifoldfit",
        description="Manifold containment decisions for sampled sets")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="emit a sample cloud")
    p.add_argument("--generator", choices=generator_names(), required=True)
    p.add_argument("--density", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("check", help="run the decision pipeline")
    _add_common(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("refine", help="dump bundle generations")
    _add_common(p)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("grfibers", help="dump candidate tangent-plane fibers")
    _add_common(p)
    p.set_defaults(func=cmd_grfibers)

    p = sub.add_parser("monodromy", help="loop check on a supplied loop")
    _add_common(p)
    p.add_argument("--loop", default=None, help="comma list of sample indices")
    p.set_defaults(func=cmd_monodromy)

    p = sub.add_parser("paste", help="run the gluing construction on demo patches")
    p.add_argument("--example", choices=("flat", "two_lines", "shared_curve"),
                   default="two_lines")
    p.add_argument("--out", default=".")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(func=cmd_paste)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except (InputError, UnknownGeneratorError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except RuntimeError as exc:
        print(f"diagnostic: {exc}", file=sys.stderr)
        return EXIT_DIAGNOSTIC


if __name__ == "__main__":
    sys.exit(main())
