"""Command-line interface: ``hsalign {synth,fit,gradcheck,eval,transform}``.

Exit codes: 0 success, 1 failed check or numerical failure, 2 usage or
input error. Every JSON report embeds the run manifest that produced it.
"""

import argparse
import hashlib
import io
import json
import logging
import os
import sys
import tempfile



from . import __version__
from .bandwidth import DEFAULT_FLOOR, RULES, compute_bandwidth
from .datasets import (
    ShiftSpec,
    evaluate_transfer,
    load_csv,
    make_shift_pair,
    write_matrix_csv,
    format_float,
)
from .density import DomainTag, ProjectionMatrix
from .divergence import bandwidth_term_discrepancy, gradient, objective
from .errors import HsAlignError, InputError
from .gradcheck import DEFAULT_REL_FLOOR, DEFAULT_STEP, central_difference, compare
from .optimizer import FitConfig, fit, random_projection

logger = logging.getLogger("hsalign")

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj):
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def matrix_text(data, labels=None):
    buf = io.StringIO()
    write_matrix_csv(buf, data, labels)
    return buf.getvalue()


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def make_manifest(command, args, input_paths):
    params = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "command")}
    return {
        "command": command,
        "parameters": params,
        "input_hashes": {p: file_sha256(p) for p in input_paths},
        "tool_version": __version__,
        "seed": getattr(args, "seed", None),
    }


def _require_file(path):
    if not os.path.isfile(path):
        raise UsageError(f"input file not found: {path}")
    return path


def _load_pair(args, labeled):
    _require_file(args.source)
    _require_file(args.target)
    source = load_csv(args.source, labeled, DomainTag.SOURCE, header=args.header)
    target = load_csv(args.target, labeled, DomainTag.TARGET, header=args.header)
    if source.d != target.d:
        raise InputError(f"dimension mismatch: source d={source.d}, target d={target.d}")
    return source, target


def _load_w(path, d=None):
    _require_file(path)
    w = load_csv(path).data
    if d is not None and w.shape[0] != d:
        raise InputError(f"dimension mismatch: w has {w.shape[0]} rows, data has d={d}")
    return ProjectionMatrix(w)


def _shift_spec(args):
    return ShiftSpec(
        d=args.d,
        n_per_domain=args.n,
        informative_dims=args.informative,
        shift_magnitude=args.shift,
        rotation_angle=args.rotation,
        class_separation=args.separation,
        seed=args.seed,
    )


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args):
    spec = _shift_spec(args)
    spec.validate()
    source, target = make_shift_pair(spec)
    out = args.out
    atomic_write(os.path.join(out, "source.csv"), matrix_text(source.data, source.labels))
    atomic_write(os.path.join(out, "target.csv"), matrix_text(target.data, target.labels))
    manifest = make_manifest("synth", args, [])
    manifest["shift_spec"] = spec.to_dict()
    atomic_write(os.path.join(out, "manifest.json"), dump_json(manifest))
    return EXIT_OK


def cmd_fit(args):
    source, target = _load_pair(args, args.labeled)
    config = FitConfig(
        subspace_dim=args.p,
        max_iters=args.max_iters,
        initial_step=args.step,
        armijo_c=args.armijo_c,
        backtrack_factor=args.backtrack,
        rel_tol=args.rel_tol,
        grad_tol=args.grad_tol,
        seed=args.seed,
        refresh_bandwidth_every=args.refresh_bandwidth_every,
        bandwidth_rule=args.bandwidth_rule,
        bandwidth_floor=args.bandwidth_floor,
        leave_one_out=args.leave_one_out,
    )
    init = _load_w(args.init, source.d) if args.init else None
    report = fit(source, target, config, init=init)

    lines = ["iteration,objective,grad_norm,step,bandwidth_epoch\n"]
    for k, (f, g, s, e) in enumerate(
        zip(report.objective_trace, report.grad_norm_trace, report.step_trace, report.bandwidth_epoch)
    ):
        lines.append(f"{k},{format_float(f)},{format_float(g)},{format_float(s)},{e}\n")
    out = args.out
    atomic_write(os.path.join(out, "w.csv"), matrix_text(report.final_w.w))
    atomic_write(os.path.join(out, "trace.csv"), "".join(lines))
    payload = report.to_dict()
    payload["config"] = config.to_dict()
    payload["manifest"] = make_manifest("fit", args, [args.source, args.target] + ([args.init] if args.init else []))
    atomic_write(os.path.join(out, "report.json"), dump_json(payload))
    print(
        f"{report.converged_reason.value}: {report.iterations_used} iterations, "
        f"objective {report.objective_trace[0]:.6g} -> {report.objective_trace[-1]:.6g}"
    )
    return EXIT_OK


def _parse_entry(text):
    try:
        i, j = (int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected ROW,COL") from None
    return i, j


def cmd_gradcheck(args):
    inputs = []
    if args.synth:
        source, target = make_shift_pair(_shift_spec(args))
    else:
        if not (args.source and args.target):
            raise UsageError("gradcheck needs --source and --target, or --synth")
        source, target = _load_pair(args, args.labeled)
        inputs = [args.source, args.target]
    if not 1 <= args.p <= source.d:
        raise InputError(f"need 1 <= p <= d, got p={args.p}, d={source.d}")
    w = random_projection(source.d, args.p, args.seed).w
    bw = compute_bandwidth(source, target, w, args.bandwidth_rule, args.bandwidth_floor)

    analytic = gradient(source, target, w, bw, args.leave_one_out)
    if args.corrupt_entry is not None:
        i, j = args.corrupt_entry
        if not (0 <= i < analytic.shape[0] and 0 <= j < analytic.shape[1]):
            raise InputError(f"--corrupt-entry {i},{j} outside a {analytic.shape} gradient")
        analytic = analytic.copy()
        analytic[i, j] += 1.0
    numeric = central_difference(
        lambda m: objective(source, target, m, bw, args.leave_one_out).d_hat, w, args.fd_step
    )
    report = compare(analytic, numeric, args.rel_floor, fd_step=args.fd_step)
    passed = report.max_rel_error <= args.tol

    payload = report.to_dict()
    payload["tol"] = args.tol
    payload["passed"] = passed
    payload["manifest"] = make_manifest("gradcheck", args, inputs)
    if args.rederive_bandwidth:
        diag = bandwidth_term_discrepancy(
            source, target, w, args.bandwidth_rule, args.bandwidth_floor,
            args.fd_step, args.rel_floor, args.leave_one_out,
        )
        payload["bandwidth_term_discrepancy"] = diag.to_dict()
    text = dump_json(payload)
    if args.out:
        atomic_write(args.out, text)
    sys.stdout.write(text)
    return EXIT_OK if passed else EXIT_CHECK_FAILED


def cmd_eval(args):
    source, target = _load_pair(args, True)
    w = _load_w(args.w, source.d)
    report = evaluate_transfer(source, target, w, args.seed)
    payload = report.to_dict()
    payload["manifest"] = make_manifest("eval", args, [args.source, args.target, args.w])
    text = dump_json(payload)
    if args.out:
        atomic_write(args.out, text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_transform(args):
    _require_file(args.input)
    data = load_csv(args.input, args.labeled, header=args.header)
    w = _load_w(args.w, data.d)
    atomic_write(args.out, matrix_text(data.data @ w.w, data.labels))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_shift_flags(p):
    p.add_argument("--d", type=int, default=4, help="ambient dimension")
    p.add_argument("--n", type=int, default=100, help="samples per domain")
    p.add_argument("--informative", type=int, default=1, help="number of class-informative dimensions")
    p.add_argument("--shift", type=float, default=0.0, help="target shift magnitude along nuisance dims")
    p.add_argument("--rotation", type=float, default=0.0, help="target rotation angle (radians)")
    p.add_argument("--separation", type=float, default=4.0, help="class separation")


def _add_pair_flags(p, required=True):
    p.add_argument("--source", required=required, help="source CSV")
    p.add_argument("--target", required=required, help="target CSV")
    p.add_argument("--header", action="store_true", help="skip the first line of each CSV")


def _add_bandwidth_flags(p):
    p.add_argument("--bandwidth-rule", choices=sorted(RULES), default="rule-of-thumb")
    p.add_argument("--bandwidth-floor", type=float, default=DEFAULT_FLOOR)
    p.add_argument("--leave-one-out", action="store_true", help="exclude self-kernels in own-domain densities")


def build_parser():
    parser = argparse.ArgumentParser(prog="hsalign", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic labeled source/target pair")
    _add_shift_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit", help="learn the projection W")
    _add_pair_flags(p)
    p.add_argument("--labeled", action="store_true", help="last CSV column holds labels (ignored for fitting)")
    p.add_argument("--p", type=int, required=True, help="subspace dimension")
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--step", type=float, default=1.0, help="initial line-search step")
    p.add_argument("--armijo-c", type=float, default=1e-4)
    p.add_argument("--backtrack", type=float, default=0.5)
    p.add_argument("--rel-tol", type=float, default=1e-9)
    p.add_argument("--grad-tol", type=float, default=1e-8)
    p.add_argument("--refresh-bandwidth-every", type=int, default=1)
    p.add_argument("--init", help="optional CSV with an initial orthonormal W")
    p.add_argument("--seed", type=int, default=0)
    _add_bandwidth_flags(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("gradcheck", help="compare the analytic gradient with finite differences")
    _add_pair_flags(p, required=False)
    p.add_argument("--labeled", action="store_true")
    p.add_argument("--synth", action="store_true", help="use a synthetic pair built from the shift flags")
    _add_shift_flags(p)
    p.add_argument("--p", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fd-step", type=float, default=DEFAULT_STEP)
    p.add_argument("--rel-floor", type=float, default=DEFAULT_REL_FLOOR)
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--corrupt-entry", type=_parse_entry, default=None, help=argparse.SUPPRESS)
    p.add_argument("--rederive-bandwidth", action="store_true",
                   help="also report the bandwidth-dependence term left out of the analytic gradient")
    _add_bandwidth_flags(p)
    p.add_argument("--out", help="write report.json here as well as to stdout")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("eval", help="1-NN transfer accuracy of a learned W")
    _add_pair_flags(p)
    p.add_argument("--w", required=True, help="w.csv from fit")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write report.json here as well as to stdout")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("transform", help="project a CSV through w.csv")
    p.add_argument("--input", required=True)
    p.add_argument("--w", required=True)
    p.add_argument("--labeled", action="store_true", help="keep the label column")
    p.add_argument("--header", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_transform)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, InputError, OSError) as exc:
        print(f"hsalign {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except HsAlignError as exc:
        print(f"hsalign {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
