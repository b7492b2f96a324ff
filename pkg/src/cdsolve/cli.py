"""Command line interface.

Problems are described in TOML files with the sections

    [problem]    n (required), blocks, x_init
    [f]          atoms, matrix, weights, offsets, blocks
    [g]          atoms, weights, scaling, offsets
    [h]          atoms, matrix, weights, offsets, blocks
    [quadratic]  matrix
    [solver]     defaults for the solver flags

Matrices are inline row lists or ``{file = "...", format = "..."}``
tables with formats ``matrixmarket``, ``csv`` and ``svmlight`` (the
svmlight label column becomes the section offset vector unless offsets
are given explicitly).  Vectors are inline lists, scalars (broadcast) or
``{file = "..."}`` tables with one value per line.  Block maps are
offset lists like ``[0, 2, 4]`` or uniform ``{count = 2, dim = 2}``
tables.

Exit codes: 0 on success, 1 when the solver stopped without reaching
the tolerance (the solution file is still written), 2 on input errors.
"""

import argparse
import os
import sys

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

import numpy as np
import scipy.io
import scipy.sparse as sp

from .atoms import SolverError
from .model import ValidationError, build_problem
from .pdcd import SolverOptions, run


class InputError(SolverError):
    """Bad command line input, spec file or data file."""


def _fail(msg):
    raise InputError(msg)


def read_svmlight(path):
    """Small svmlight/libsvm reader: label then 1-based index:value pairs."""
    labels = []
    rows = []
    cols = []
    vals = []
    n_features = 0
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                labels.append(float(parts[0]))
            except ValueError:
                _fail("%s:%d: bad label %r" % (path, ln, parts[0]))
            for tok in parts[1:]:
                try:
                    idx, val = tok.split(":", 1)
                    col = int(idx) - 1
                    if col < 0:
                        raise ValueError
                    rows.append(len(labels) - 1)
                    cols.append(col)
                    vals.append(float(val))
                except ValueError:
                    _fail("%s:%d: bad feature entry %r" % (path, ln, tok))
                n_features = max(n_features, col + 1)
    mat = sp.coo_matrix(
        (vals, (rows, cols)), shape=(len(labels), n_features)
    ).tocsc()
    return mat, np.asarray(labels)


def _load_matrix(entry, where):
    """Returns (matrix, labels or None)."""
    if isinstance(entry, list):
        return np.asarray(entry, dtype=float), None
    if not isinstance(entry, dict) or "file" not in entry:
        _fail("%s.matrix must be an inline row list or a {file = ...} table" % where)
    path = entry["file"]
    fmt = entry.get("format")
    if fmt is None:
        ext = os.path.splitext(path)[1].lower()
        fmt = {
            ".mtx": "matrixmarket",
            ".csv": "csv",
            ".svm": "svmlight",
            ".svmlight": "svmlight",
            ".libsvm": "svmlight",
        }.get(ext)
        if fmt is None:
            _fail(
                "%s.matrix: cannot infer the format of %r; set format ="
                " 'matrixmarket', 'csv' or 'svmlight'" % (where, path)
            )
    if not os.path.exists(path):
        _fail("%s.matrix: file %r not found" % (where, path))
    if fmt == "matrixmarket":
        return scipy.io.mmread(path).tocsc(), None
    if fmt == "csv":
        return np.loadtxt(path, delimiter=",", ndmin=2), None
    if fmt == "svmlight":
        return read_svmlight(path)
    _fail("%s.matrix: unknown format %r" % (where, fmt))


def _load_vector(entry, where):
    if entry is None:
        return None
    if isinstance(entry, (int, float)):
        return float(entry)
    if isinstance(entry, list):
        return np.asarray(entry, dtype=float)
    if isinstance(entry, dict) and "file" in entry:
        path = entry["file"]
        if not os.path.exists(path):
            _fail("%s: file %r not found" % (where, path))
        return np.loadtxt(path, ndmin=1)
    _fail("%s must be a scalar, a list or a {file = ...} table" % where)


def _load_blocks(entry, where):
    if entry is None:
        return None
    if isinstance(entry, list):
        return entry
    if isinstance(entry, dict) and "count" in entry and "dim" in entry:
        count, dim = int(entry["count"]), int(entry["dim"])
        if count <= 0 or dim <= 0:
            _fail("%s: count and dim must be positive" % where)
        return list(range(0, count * dim + 1, dim))
    _fail(
        "%s must be an offset list like [0, 2, 4] or a"
        " {count = ..., dim = ...} table" % where
    )


def _atom_list(entry, count, where):
    if isinstance(entry, str):
        return [entry] * count
    if isinstance(entry, list) and all(isinstance(s, str) for s in entry):
        if len(entry) != count:
            _fail(
                "%s.atoms has %d entries but %d terms are defined"
                % (where, len(entry), count)
            )
        return list(entry)
    _fail("%s.atoms must be an atom name or a list of atom names" % where)


def _check_keys(table, allowed, where):
    for key in table:
        if key not in allowed:
            _fail(
                "unknown key %r in [%s] (allowed: %s)"
                % (key, where, ", ".join(sorted(allowed)))
            )


def _term_section(data, name, kw, matrix_key, blocks_key):
    """Parse an [f] or [h] style section into build_problem arguments."""
    sect = data[name]
    _check_keys(
        sect, {"atoms", "matrix", "weights", "offsets", "blocks"}, name
    )
    if "matrix" not in sect:
        _fail("[%s] needs a matrix" % name)
    mat, labels = _load_matrix(sect["matrix"], name)
    n_rows = mat.shape[0]
    blocks = _load_blocks(sect.get("blocks"), "%s.blocks" % name)
    count = len(blocks) - 1 if blocks is not None else n_rows
    if "atoms" not in sect:
        _fail("[%s] needs atoms" % name)
    kw[name] = _atom_list(sect["atoms"], count, name)
    kw[matrix_key] = mat
    if blocks is not None:
        kw[blocks_key] = blocks
    weights = _load_vector(sect.get("weights"), "%s.weights" % name)
    if weights is not None:
        kw["c" + name] = weights
    offsets = _load_vector(sect.get("offsets"), "%s.offsets" % name)
    if offsets is None and labels is not None:
        offsets = labels
    if offsets is not None:
        kw["b" + name] = offsets


def load_spec(path):
    """Parse a TOML problem spec into a Problem."""
    if not os.path.exists(path):
        _fail("spec file %r not found" % path)
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            _fail("%s: %s" % (path, exc))
    _check_keys(
        data, {"problem", "f", "g", "h", "quadratic", "solver"}, "spec"
    )
    if "problem" not in data or "n" not in data["problem"]:
        _fail("the [problem] section with n = ... is required")
    prob = data["problem"]
    _check_keys(prob, {"n", "blocks", "x_init"}, "problem")
    kw = {"N": int(prob["n"])}
    blocks = _load_blocks(prob.get("blocks"), "problem.blocks")
    if blocks is not None:
        kw["blocks"] = blocks
    x_init = _load_vector(prob.get("x_init"), "problem.x_init")
    if x_init is not None:
        kw["x_init"] = x_init

    if "f" in data:
        _term_section(data, "f", kw, "Af", "blocks_f")
    if "h" in data:
        _term_section(data, "h", kw, "Ah", "blocks_h")
    if "g" in data:
        sect = data["g"]
        _check_keys(sect, {"atoms", "weights", "scaling", "offsets"}, "g")
        n_blocks = len(blocks) - 1 if blocks is not None else kw["N"]
        if "atoms" not in sect:
            _fail("[g] needs atoms")
        kw["g"] = _atom_list(sect["atoms"], n_blocks, "g")
        weights = _load_vector(sect.get("weights"), "g.weights")
        if weights is not None:
            kw["cg"] = weights
        scaling = _load_vector(sect.get("scaling"), "g.scaling")
        if scaling is not None:
            kw["Dg"] = scaling
        offsets = _load_vector(sect.get("offsets"), "g.offsets")
        if offsets is not None:
            kw["bg"] = offsets
    if "quadratic" in data:
        sect = data["quadratic"]
        _check_keys(sect, {"matrix"}, "quadratic")
        if "matrix" not in sect:
            _fail("[quadratic] needs a matrix")
        mat, _ = _load_matrix(sect["matrix"], "quadratic")
        kw["Q"] = mat

    solver = data.get("solver", {})
    allowed = {
        "algo",
        "tol",
        "max_epochs",
        "max_time",
        "check_every",
        "sampling",
        "seed",
        "safety",
        "screening",
        "screen_every",
        "gamma1",
        "restart",
        "restart_period",
        "verbose",
    }
    _check_keys(solver, allowed, "solver")
    return build_problem(**kw), dict(solver)


def write_solution(path, x):
    with open(path, "w") as fh:
        for v in x:
            fh.write("%.17g\n" % v)


def _describe_lines(pb):
    desc = pb.describe()
    order = (
        "variables",
        "blocks",
        "f_terms",
        "f_rows",
        "f_nnz",
        "g_terms",
        "h_terms",
        "h_rows",
        "h_nnz",
        "q_nnz",
        "dual_copies",
    )
    return ["%s = %d" % (key, desc[key]) for key in order]


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="cdsolve",
        description="Randomized block coordinate descent for structured"
        " convex problems.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve a problem spec")
    p_solve.add_argument("spec", help="TOML problem file")
    p_solve.add_argument("--algo", choices=("pdcd", "smartcd"))
    p_solve.add_argument("--tol", type=float)
    p_solve.add_argument(
        "--max-iter",
        type=int,
        dest="max_epochs",
        help="iteration budget in epochs (sweeps of one update per block)",
    )
    p_solve.add_argument("--max-time", type=float, help="seconds")
    p_solve.add_argument("--sampling", choices=("uniform", "kink_half"))
    p_solve.add_argument("--screening", choices=("on", "off"))
    p_solve.add_argument("--seed", type=int)
    p_solve.add_argument("--check-every", type=int, help="epochs per check")
    p_solve.add_argument(
        "--trace", help="write the convergence trace (.json for JSON, else CSV)"
    )
    p_solve.add_argument("--solution", help="write the solution, one value per line")
    p_solve.add_argument("--verbose", action="store_true")

    p_val = sub.add_parser("validate", help="check a problem spec")
    p_val.add_argument("spec")

    p_desc = sub.add_parser("describe", help="print structural counts")
    p_desc.add_argument("spec")
    return parser


def _solve(args):
    pb, solver_defaults = load_spec(args.spec)
    try:
        opts = SolverOptions(**solver_defaults)
    except TypeError as exc:
        _fail("bad [solver] section: %s" % exc)
    for key in (
        "algo",
        "tol",
        "max_epochs",
        "max_time",
        "sampling",
        "seed",
        "check_every",
    ):
        val = getattr(args, key, None)
        if val is not None:
            setattr(opts, key, val)
    if args.screening is not None:
        opts.screening = args.screening == "on"
    if args.verbose:
        opts.verbose = True

    res = run(pb, opts)
    print("status        %s" % res.status)
    print("epochs        %d" % res.epochs)
    print("updates       %d" % res.updates)
    print("seconds       %.3f" % res.seconds)
    print("objective     %.12g" % res.objective)
    print("gap           %.6g" % res.gap)
    print("infeasibility %.6g" % res.infeasibility)
    print("screened      %d" % int(res.screened.sum()))
    if args.solution:
        write_solution(args.solution, res.x)
    if args.trace:
        if args.trace.endswith(".json"):
            res.trace.to_json(args.trace)
        else:
            res.trace.to_csv(args.trace)
    return 0 if res.converged else 1


def main(argv=None):
    threads = os.environ.get("CD_SOLVER_THREADS")
    if threads is not None and threads != "1":
        print(
            "error: CD_SOLVER_THREADS is reserved and currently must be 1",
            file=sys.stderr,
        )
        return 2
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "solve":
            return _solve(args)
        if args.command == "validate":
            pb, solver_defaults = load_spec(args.spec)
            try:
                SolverOptions(**solver_defaults)
            except TypeError as exc:
                _fail("bad [solver] section: %s" % exc)
            print("ok")
            for line in _describe_lines(pb):
                print(line)
            return 0
        if args.command == "describe":
            pb, _ = load_spec(args.spec)
            for line in _describe_lines(pb):
                print(line)
            return 0
    except (InputError, ValidationError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except OSError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except SolverError as exc:
        print("solver failure: %s" % exc, file=sys.stderr)
        return 1
    parser.error("unknown command")


if __name__ == "__main__":
    sys.exit(main())
