"""Command-line interface.

Subcommands::

    solve     solve one problem, print the errors, optionally write the solution CSV
    converge  run a refinement study on structured meshes, optionally write JSON
    stencil   export the six-point stencil coefficients of every complete edge
    validate  check the invariants of a mesh
    infsup    dense inf-sup estimate of the mixed pair

Exit status: 0 on success, 1 on usage or input errors, 2 on numerical failure.
Errors go to standard error prefixed with ``error:``.
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from .geometry import mesh_size, quality_theta
from .harness import CASE_NAMES, ConvergenceReport, convergence_study, error_norms, estimate_infsup, mms_case
from .mesh import Mesh, MeshError, build_structured, read_mesh_files, validate
from .solvers import SCHEMES, conservation_check, solution_to_csv, solve
from .stencil import Closure, mesh_stencils, stencils_to_csv

SOLUTION_HELP = """\
solution CSV layout: a header 'kind,cell_id,cx,cy,u' followed by one row per
cell (cx, cy = centroid), then a header 'kind,edge_id,flux' followed by one row
per edge (flux = integral of grad u . n over the edge, n = rot(-90)(N - S)).
"""


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _closure(text: str) -> Closure:
    try:
        return Closure.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _levels(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad level list {text!r}") from None


def _mesh_pair(text: str) -> tuple[str, str]:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("expected <node>,<ele>")
    return parts[0], parts[1]


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--n", type=int, help="structured n x n mesh of the unit square")
    src.add_argument("--mesh", type=_mesh_pair, metavar="NODE,ELE", help="mesh files")
    common.add_argument("--case", choices=CASE_NAMES, default="sinsin")
    common.add_argument("--scheme", choices=SCHEMES, default="mixed")
    common.add_argument("--closure", type=_closure, default=Closure(), help="minnorm | fixed:t1,t2")
    common.add_argument("--out", help="output CSV path")
    common.add_argument("--json", help="output JSON path")
    common.add_argument("--quiet", action="store_true")

    parser = _Parser(prog="dualrt", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("solve", parents=[common], epilog=SOLUTION_HELP,
                   formatter_class=argparse.RawDescriptionHelpFormatter)  # fmt: skip
    conv = sub.add_parser("converge", parents=[common])
    conv.add_argument("--levels", type=_levels, default=[8, 16, 32])
    sub.add_parser("stencil", parents=[common])
    sub.add_parser("validate", parents=[common])
    sub.add_parser("infsup", parents=[common])
    return parser


def _load(args) -> Mesh:
    if args.mesh:
        try:
            return read_mesh_files(*args.mesh)
        except OSError as exc:
            raise UsageError(f"cannot read mesh: {exc}") from None
    n = 8 if args.n is None else args.n
    if n < 1:
        raise UsageError("--n must be >= 1")
    return build_structured(n)


def _say(args, *msg):
    if not args.quiet:
        print(*msg)


def _write(path: Optional[str], text: str) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    with open(path, "w") as fh:
        fh.write(text)


def cmd_solve(args) -> int:
    mesh = _load(args)
    case = mms_case(args.case)
    sol = solve(mesh, case.f, args.scheme, args.closure)
    e = error_norms(mesh, sol, case)
    if args.out:
        _write(args.out, solution_to_csv(mesh, sol))
    _say(args, f"scheme={args.scheme} case={args.case} cells={mesh.num_cells}")
    _say(args, f"e_u={e.e_u:.6e} e_p={e.e_p:.6e} e_div={e.e_div:.6e}")
    _say(args, f"conservation={conservation_check(mesh, sol, case.f):.3e}")
    print(f"e_V={e.e_V:.17g}")
    return 0


def cmd_converge(args) -> int:
    if args.mesh:
        raise UsageError("converge runs on structured meshes; use --levels instead of --mesh")
    rep = convergence_study(args.scheme, mms_case(args.case), args.levels, args.closure)
    if args.json:
        rep.write(args.json)
    _say(args, f"{'n':>5} {'h':>10} {'e_u':>11} {'e_p':>11} {'e_div':>11} {'e_V':>11} {'sec':>7}")
    for lv in rep.levels:
        _say(args, f"{lv.n:5d} {lv.h:10.4e} {lv.e_u:11.4e} {lv.e_p:11.4e} "
                   f"{lv.e_div:11.4e} {lv.e_V:11.4e} {lv.seconds:7.2f}")  # fmt: skip
    _say(args, "rates: " + " ".join(f"{k}={v:.3f}" for k, v in rep.rates.items()))
    for note in rep.notes:
        print(f"warning: {note}", file=sys.stderr)
    return 0


def cmd_stencil(args) -> int:
    mesh = _load(args)
    stencils = mesh_stencils(mesh, args.closure)
    _write(args.out, stencils_to_csv(stencils))
    if args.out:
        _say(args, f"{len(stencils)} stencils written to {args.out}")
    return 0


def cmd_validate(args) -> int:
    mesh = _load(args)
    problems = validate(mesh)
    for msg in problems:
        print(f"error: {msg}", file=sys.stderr)
    if problems:
        return 2
    _say(args, f"ok: V={mesh.num_vertices} E={mesh.num_edges} F={mesh.num_cells} "
               f"h={mesh_size(mesh):.6g} theta={quality_theta(mesh):.6g}")  # fmt: skip
    return 0


def cmd_infsup(args) -> int:
    mesh = _load(args)
    try:
        beta = estimate_infsup(mesh)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    print(f"beta={beta:.17g}")
    return 0


COMMANDS = {
    "solve": cmd_solve,
    "converge": cmd_converge,
    "stencil": cmd_stencil,
    "validate": cmd_validate,
    "infsup": cmd_infsup,
}


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except MeshError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ArithmeticError, RuntimeError, ValueError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main())
