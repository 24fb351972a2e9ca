"""Command-line entry point: ``c2p solve | bench | synth``.

Exit codes of ``solve``: 0 certified and optimal, 2 uncertified (the result
is still written), 1 error. Payloads go to stdout or ``--output``;
diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from c2p import sdp
from c2p.baselines import solve_two_step
from c2p.bench import read_descriptor, run_descriptor
from c2p.errors import C2PError
from c2p.io import dump_json, read_correspondences, sidecar_path, write_correspondences
from c2p.recovery import DEFAULT_EPS_T, solve_c2p
from c2p.synth import DEFAULT_FOCAL_PX, DEFAULT_ROTATION_BOUND, SceneConfig, generate_scene

EXIT_OK, EXIT_ERROR, EXIT_UNCERTIFIED = 0, 1, 2
SOLVE_VARIANTS = {
    "c2p": "c2p",
    "c2p-fast": "c2p-fast",
    "two-step-z": "qcqp-z",
    "two-step-z-redundant": "qcqp-z-redundant",
}

log = logging.getLogger("c2p")


def _positive(cast):
    def check(text):
        v = cast(text)
        if not v > 0:
            raise argparse.ArgumentTypeError(f"expected a positive value, got {text}")
        return v

    return check


def _nonnegative(text):
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative value, got {text}")
    return v


class _Parser(argparse.ArgumentParser):
    # exit status 2 is reserved for uncertified solutions
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="c2p", description="Certifiable relative pose from bearing correspondences.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="estimate the relative pose of a correspondence file")
    s.add_argument("input", help="correspondence file (format BEARINGS or PIXELS)")
    s.add_argument("--variant", choices=sorted(SOLVE_VARIANTS), default="c2p")
    s.add_argument("--method", choices=["t", "m"], help="disambiguation for two-step variants (default m)")
    s.add_argument("--eps-t", type=_positive(float), default=DEFAULT_EPS_T, help="pure-rotation threshold on s_t^2")
    s.add_argument("--gap-tol", type=_positive(float), default=sdp.SolverConfig.gap_tol)
    s.add_argument("--feas-tol", type=_positive(float), default=sdp.SolverConfig.feas_tol)
    s.add_argument("--max-iterations", type=_positive(int), default=sdp.SolverConfig.max_iterations)
    s.add_argument("--trace", help=f"per-iteration solver CSV (default: ${sdp.TRACE_ENV_VAR})")
    s.add_argument("-o", "--output", help="write JSON here instead of stdout")

    b = sub.add_parser("bench", help="run synthetic sweeps from a descriptor")
    b.add_argument("descriptor", help="INI-style sweep descriptor")
    b.add_argument("-o", "--output-dir", required=True)
    b.add_argument("--workers", type=_positive(int), default=1)

    y = sub.add_parser("synth", help="write a synthetic correspondence file and ground-truth sidecar")
    y.add_argument("--n", type=int, required=True)
    y.add_argument("--noise", type=_nonnegative, default=0.0, help="noise in pixels")
    y.add_argument("--seed", type=int, default=0)
    y.add_argument("--translation-magnitude", type=_nonnegative, help="default: uniform on (0, 2]")
    y.add_argument("--focal", type=_positive(float), default=DEFAULT_FOCAL_PX)
    y.add_argument("--rotation-bound", type=_positive(float), default=DEFAULT_ROTATION_BOUND)
    y.add_argument("-o", "--output", required=True)
    return p


def cmd_solve(args) -> int:
    if args.method and not args.variant.startswith("two-step"):
        log.error("--method only applies to two-step variants")
        return EXIT_ERROR
    config = sdp.SolverConfig(
        gap_tol=args.gap_tol,
        feas_tol=args.feas_tol,
        max_iterations=args.max_iterations,
        trace_path=args.trace,
    )
    try:
        pairs = read_correspondences(args.input)
        variant = SOLVE_VARIANTS[args.variant]
        if args.variant.startswith("two-step"):
            est = solve_two_step(pairs, variant, (args.method or "m").upper(), config)
        else:
            est = solve_c2p(pairs, variant, eps_t=args.eps_t, config=config)
    except (C2PError, OSError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_ERROR

    payload = dump_json(est.to_json())
    if args.output:
        Path(args.output).write_text(payload)
    else:
        sys.stdout.write(payload)
    if est.solver_status != sdp.SolverStatus.OPTIMAL.value:
        log.warning("solver status: %s", est.solver_status)
    if est.certified and est.solver_status == sdp.SolverStatus.OPTIMAL.value:
        return EXIT_OK
    log.warning("solution is not certified globally optimal")
    return EXIT_UNCERTIFIED


def cmd_bench(args) -> int:
    try:
        specs = read_descriptor(args.descriptor)
    except (OSError, ValueError) as exc:
        log.error("%s", exc)
        build_parser().print_usage(sys.stderr)
        return EXIT_ERROR
    result = run_descriptor(specs, args.output_dir, args.workers)
    log.info("%d records, %d failures", result["records"], result["failures"])
    if result["records"] and result["failures"] == result["records"]:
        log.error("every cell failed")
        return EXIT_ERROR
    return EXIT_OK


def cmd_synth(args) -> int:
    try:
        cfg = SceneConfig(
            n=args.n,
            noise_px=args.noise,
            focal_px=args.focal,
            translation_magnitude=args.translation_magnitude,
            rotation_bound_rad=args.rotation_bound,
            seed=args.seed,
        )
    except ValueError as exc:
        log.error("%s", exc)
        return EXIT_ERROR
    inst = generate_scene(cfg)
    write_correspondences(args.output, inst.pairs, comment=f"synthetic scene n={cfg.n} noise_px={cfg.noise_px} seed={cfg.seed}")
    sidecar = {
        "R": inst.ground_truth.rotation.tolist(),
        "t": inst.ground_truth.translation.tolist(),
        "translation_magnitude": inst.translation_magnitude,
        "pure_rotation": inst.is_pure_rotation,
        "depths0": inst.depths0.tolist(),
        "depths1": inst.depths1.tolist(),
        "n": cfg.n,
        "noise_px": cfg.noise_px,
        "focal_px": cfg.focal_px,
        "seed": cfg.seed,
    }
    sidecar_path(args.output).write_text(dump_json(sidecar))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    return {"solve": cmd_solve, "bench": cmd_bench, "synth": cmd_synth}[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
