"""Problem container and index structures for the solvers.

The solved problem is

    min_x  0.5 x'Qx + sum_j cf_j f_j(Af_j x - bf_j)
                    + sum_i cg_i g_i(Dg_i x_i - bg_i)
                    + sum_l ch_l h_l(Ah_l x - bh_l)

where x splits into contiguous coordinate blocks, the f terms are smooth,
the g terms are separable along blocks and prox-friendly, and the h terms
couple blocks through the rows of Ah and are handled by duality.
"""

import difflib

import numpy as np
import scipy.sparse as sp

from .atoms import Atom, CATALOG, CapabilityError, SolverError, get_atom


class ValidationError(SolverError, ValueError):
    """Raised when problem data is structurally inconsistent."""


class SparseColMatrix:
    """Compressed sparse column matrix with immutable structure.

    Stored zeros are kept as structural entries; duplicate coordinates
    are summed on ingestion.  Row indices are strictly increasing within
    each column.
    """

    __slots__ = ("n_rows", "n_cols", "col_ptr", "row_idx", "values", "_scipy")

    def __init__(self, n_rows, n_cols, col_ptr, row_idx, values):
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self.col_ptr = np.asarray(col_ptr, dtype=np.intp)
        self.row_idx = np.asarray(row_idx, dtype=np.intp)
        self.values = np.asarray(values, dtype=np.float64)
        self._scipy = None
        self.validate()

    @property
    def nnz(self):
        return self.row_idx.size

    def validate(self):
        if self.n_rows < 0 or self.n_cols < 0:
            raise ValidationError("matrix dimensions must be nonnegative")
        if self.col_ptr.shape != (self.n_cols + 1,):
            raise ValidationError("column pointer must have length n_cols + 1")
        if self.col_ptr[0] != 0 or self.col_ptr[-1] != self.row_idx.size:
            raise ValidationError("column pointer must span [0, nnz]")
        if np.any(np.diff(self.col_ptr) < 0):
            raise ValidationError("column pointer must be nondecreasing")
        if self.row_idx.size != self.values.size:
            raise ValidationError("row indices and values must have equal length")
        if self.row_idx.size:
            if self.row_idx.min() < 0 or self.row_idx.max() >= self.n_rows:
                raise ValidationError("row index out of range")
        for c in range(self.n_cols):
            lo, hi = self.col_ptr[c], self.col_ptr[c + 1]
            if np.any(np.diff(self.row_idx[lo:hi]) <= 0):
                raise ValidationError(
                    "row indices must be strictly increasing within column %d" % c
                )

    @classmethod
    def from_any(cls, data, n_rows=None, n_cols=None, what="matrix"):
        """Build from dense arrays, scipy sparse matrices or triplets."""
        if isinstance(data, cls):
            return data
        if sp.issparse(data):
            m = data.tocsc().copy()
            m.sum_duplicates()
            m.sort_indices()
            return cls(m.shape[0], m.shape[1], m.indptr, m.indices, m.data)
        if (
            isinstance(data, tuple)
            and len(data) == 2
            and isinstance(data[1], tuple)
        ):
            vals, (rows, cols) = data
            if n_rows is None or n_cols is None:
                raise ValidationError(
                    "%s triplets need explicit dimensions" % what
                )
            m = sp.coo_matrix(
                (vals, (rows, cols)), shape=(n_rows, n_cols)
            ).tocsc()
            m.sum_duplicates()
            m.sort_indices()
            return cls(n_rows, n_cols, m.indptr, m.indices, m.data)
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim != 2:
            raise ValidationError("%s must be two dimensional" % what)
        return cls.from_any(sp.csc_matrix(arr))

    def to_scipy(self):
        if self._scipy is None:
            self._scipy = sp.csc_matrix(
                (self.values, self.row_idx, self.col_ptr),
                shape=(self.n_rows, self.n_cols),
            )
        return self._scipy

    def to_dense(self):
        return self.to_scipy().toarray()

    def col(self, c):
        """Views of the row indices and values of column ``c``."""
        lo, hi = self.col_ptr[c], self.col_ptr[c + 1]
        return self.row_idx[lo:hi], self.values[lo:hi]

    def matvec(self, x):
        return self.to_scipy() @ np.asarray(x, dtype=np.float64)

    def rmatvec(self, y):
        return self.to_scipy().T @ np.asarray(y, dtype=np.float64)

    def __repr__(self):
        return "SparseColMatrix(%d x %d, nnz=%d)" % (
            self.n_rows,
            self.n_cols,
            self.nnz,
        )


class Blocks:
    """Contiguous partition of a coordinate range, as boundary offsets."""

    __slots__ = ("bounds", "_inverse")

    def __init__(self, bounds, total=None, what="blocks"):
        b = np.asarray(bounds, dtype=np.intp)
        if b.ndim != 1 or b.size < 1:
            raise ValidationError("%s must be a one dimensional offset list" % what)
        if b[0] != 0:
            raise ValidationError("%s must start at 0" % what)
        if np.any(np.diff(b) <= 0):
            raise ValidationError("%s must be strictly increasing" % what)
        if total is not None and b[-1] != total:
            raise ValidationError(
                "%s must end at %d, got %d" % (what, total, b[-1])
            )
        self.bounds = b
        self._inverse = None

    @property
    def count(self):
        return self.bounds.size - 1

    @property
    def total(self):
        return int(self.bounds[-1])

    def size(self, i):
        return int(self.bounds[i + 1] - self.bounds[i])

    def range(self, i):
        return int(self.bounds[i]), int(self.bounds[i + 1])

    def inverse(self):
        """Array mapping each coordinate to its block index."""
        if self._inverse is None:
            inv = np.empty(self.total, dtype=np.intp)
            for i in range(self.count):
                inv[self.bounds[i] : self.bounds[i + 1]] = i
            self._inverse = inv
        return self._inverse

    @classmethod
    def uniform(cls, count, dim, what="blocks"):
        return cls(np.arange(count + 1, dtype=np.intp) * dim, what=what)

    def __repr__(self):
        return "Blocks(count=%d, total=%d)" % (self.count, self.total)


class DualDuplicationIndex:
    """Bookkeeping for per-block copies of the coupled dual variables.

    Every pair (primal block i, coupled term j with Ah_{j, i} nonzero)
    owns one copy of the dual block j.  Copies are laid out contiguously
    per primal block, in increasing j, so the copies owned by block i
    form one flat slice of the duplicated dual vector.
    """

    __slots__ = ("J_of", "I_of", "m", "slot_of", "block_slice", "total")

    def __init__(self, ah, col_blocks, row_blocks):
        I = col_blocks.count
        L = row_blocks.count
        inv_rows = row_blocks.inverse()
        self.J_of = []
        self.slot_of = []
        self.block_slice = []
        I_lists = [[] for _ in range(L)]
        offset = 0
        for i in range(I):
            lo = ah.col_ptr[col_blocks.bounds[i]]
            hi = ah.col_ptr[col_blocks.bounds[i + 1]]
            js = np.unique(inv_rows[ah.row_idx[lo:hi]])
            slots = np.empty(js.size, dtype=np.intp)
            start = offset
            for k, j in enumerate(js):
                slots[k] = offset
                offset += row_blocks.size(j)
                I_lists[j].append(i)
            self.J_of.append(js)
            self.slot_of.append(slots)
            self.block_slice.append((start, offset))
        self.I_of = [np.asarray(v, dtype=np.intp) for v in I_lists]
        self.m = np.asarray([len(v) for v in I_lists], dtype=np.intp)
        self.total = offset

    def dual_vars_to_update(self, i):
        """Flat indices of the dual copies owned by primal block i."""
        lo, hi = self.block_slice[i]
        return np.arange(lo, hi, dtype=np.intp)


class _DualGroup:
    """Entries of Ah linking one primal block to one coupled term."""

    __slots__ = (
        "j",
        "atom",
        "weight",
        "h_start",
        "h_end",
        "m",
        "slot_start",
        "slot_end",
        "rows_local",
        "vals",
        "col_split",
    )


class _BlockOps:
    """Precompiled per-block column data for fast incremental updates."""

    __slots__ = (
        "n0",
        "n1",
        "dim",
        "scalar",
        "af_rows",
        "af_vals",
        "af_scaled",
        "af_split",
        "f_fast",
        "f_groups",
        "q_rows",
        "q_vals",
        "q_split",
        "ah_rows",
        "ah_vals",
        "ah_split",
        "dual_groups",
    )


def _column_concat(mat, n0, n1):
    """Concatenate CSC columns n0..n1: rows, values, local column splits."""
    lo = mat.col_ptr[n0]
    hi = mat.col_ptr[n1]
    rows = mat.row_idx[lo:hi].copy()
    vals = mat.values[lo:hi].copy()
    split = (mat.col_ptr[n0 : n1 + 1] - lo).astype(np.intp)
    return rows, vals, split


def _broadcast(value, length, default, what):
    if value is None:
        return np.full(length, default, dtype=np.float64)
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        return np.full(length, float(arr), dtype=np.float64)
    if arr.shape != (length,):
        raise ValidationError(
            "%s must be a scalar or have length %d, got shape %s"
            % (what, length, arr.shape)
        )
    return arr.copy()


def _resolve_atoms(names, what):
    out = []
    for k, entry in enumerate(names):
        if isinstance(entry, Atom):
            out.append(entry)
            continue
        try:
            out.append(get_atom(entry))
        except CapabilityError:
            hint = difflib.get_close_matches(str(entry), CATALOG.keys(), n=1)
            extra = " (closest match: %r)" % hint[0] if hint else ""
            raise ValidationError(
                "unknown atom name %r in %s[%d]%s" % (entry, what, k, extra)
            ) from None
    return out


def _require(atoms, what, query, probe):
    for k, atom in enumerate(atoms):
        try:
            probe(atom)
        except CapabilityError:
            raise ValidationError(
                "atom %r in %s[%d] does not support %s"
                % (atom.name, what, k, query)
            ) from None


class Problem:
    """Fully validated problem instance with precompiled block data."""

    def __init__(self, **kw):
        # Filled by build_problem; direct construction is internal.
        for key, val in kw.items():
            setattr(self, key, val)

    @property
    def n_blocks(self):
        return self.blocks.count

    def block_of(self, c):
        return int(self.blocks.inverse()[c])

    def describe(self):
        """Structural counts, used by the command line tool."""
        return {
            "variables": self.N,
            "blocks": self.blocks.count,
            "f_terms": len(self.f_atoms),
            "f_rows": self.Af.n_rows if self.has_f else 0,
            "f_nnz": self.Af.nnz if self.has_f else 0,
            "g_terms": self.blocks.count if self.has_g else 0,
            "h_terms": len(self.h_atoms),
            "h_rows": self.Ah.n_rows if self.has_h else 0,
            "h_nnz": self.Ah.nnz if self.has_h else 0,
            "q_nnz": self.Q.nnz if self.has_q else 0,
            "dual_copies": self.dual_index.total if self.has_h else 0,
        }


def build_problem(
    N=None,
    blocks=None,
    x_init=None,
    y_init=None,
    f=None,
    cf=None,
    Af=None,
    bf=None,
    blocks_f=None,
    g=None,
    cg=None,
    Dg=None,
    bg=None,
    h=None,
    ch=None,
    Ah=None,
    bh=None,
    blocks_h=None,
    Q=None,
):
    """Validate raw data and assemble a Problem.

    Atom lists are catalog names (or Atom instances).  Weight vectors
    accept scalars and broadcast.  Matrices accept dense arrays, scipy
    sparse matrices or ``(values, (rows, cols))`` triplets.
    """
    if N is None:
        raise ValidationError("the number of variables N is required")
    N = int(N)
    if N <= 0:
        raise ValidationError("N must be positive")

    if blocks is None:
        col_blocks = Blocks.uniform(N, 1)
    else:
        col_blocks = Blocks(blocks, total=N, what="blocks")
    I = col_blocks.count

    has_f = f is not None
    has_g = g is not None
    has_h = h is not None
    has_q = Q is not None

    # Smooth data-fitting part.
    if has_f:
        if Af is None:
            raise ValidationError("f atoms were given but Af is missing")
        Af = SparseColMatrix.from_any(Af, what="Af")
        if Af.n_cols != N:
            raise ValidationError(
                "Af has %d columns, expected N = %d" % (Af.n_cols, N)
            )
        Mf = Af.n_rows
        if blocks_f is None:
            row_blocks_f = Blocks.uniform(Mf, 1, what="blocks_f")
        else:
            row_blocks_f = Blocks(blocks_f, total=Mf, what="blocks_f")
        f_atoms = _resolve_atoms(list(f), "f")
        if len(f_atoms) != row_blocks_f.count:
            raise ValidationError(
                "f has %d atoms but blocks_f defines %d row blocks"
                % (len(f_atoms), row_blocks_f.count)
            )
        _require(f_atoms, "f", "GRAD", lambda a: a.grad(np.zeros(1)))
        _require(f_atoms, "f", "LIPSCHITZ", lambda a: a.lipschitz())
        cf = _broadcast(cf, len(f_atoms), 1.0, "cf")
        if np.any(cf <= 0.0):
            raise ValidationError("entries of cf must be positive")
        bf = _broadcast(bf, Mf, 0.0, "bf")
    else:
        if Af is not None:
            raise ValidationError("Af was given without f atoms")
        Af = SparseColMatrix(0, N, np.zeros(N + 1, dtype=np.intp), [], [])
        row_blocks_f = Blocks.uniform(0, 1, what="blocks_f")
        f_atoms = []
        cf = np.zeros(0)
        bf = np.zeros(0)

    # Separable prox part.
    if has_g:
        g_atoms = _resolve_atoms(list(g), "g")
        if len(g_atoms) != I:
            raise ValidationError(
                "g has %d atoms but there are %d blocks" % (len(g_atoms), I)
            )
        _require(g_atoms, "g", "PROX", lambda a: a.prox(np.zeros(1), 1.0))
        cg = _broadcast(cg, I, 1.0, "cg")
        if np.any(cg <= 0.0):
            raise ValidationError("entries of cg must be positive")
    else:
        g_atoms = [get_atom("zero")] * I
        cg = np.ones(I)
    if Dg is not None and sp.issparse(Dg):
        d = Dg.tocoo()
        if d.shape != (N, N):
            raise ValidationError("the g scaling Dg must be N by N")
        if np.any(d.row != d.col):
            raise ValidationError("the g scaling Dg must be diagonal")
        dg_vec = np.ones(N)
        dg_vec[d.row] = d.data
        Dg = dg_vec
    Dg = _broadcast(Dg, N, 1.0, "Dg")
    if np.any(Dg == 0.0):
        raise ValidationError("entries of the g scaling Dg must be nonzero")
    bg = _broadcast(bg, N, 0.0, "bg")

    # Coupled nonsmooth part.
    if has_h:
        if Ah is None:
            raise ValidationError("h atoms were given but Ah is missing")
        Ah = SparseColMatrix.from_any(Ah, what="Ah")
        if Ah.n_cols != N:
            raise ValidationError(
                "Ah has %d columns, expected N = %d" % (Ah.n_cols, N)
            )
        Mh = Ah.n_rows
        if blocks_h is None:
            row_blocks_h = Blocks.uniform(Mh, 1, what="blocks_h")
        else:
            row_blocks_h = Blocks(blocks_h, total=Mh, what="blocks_h")
        h_atoms = _resolve_atoms(list(h), "h")
        if len(h_atoms) != row_blocks_h.count:
            raise ValidationError(
                "h has %d atoms but blocks_h defines %d row blocks"
                % (len(h_atoms), row_blocks_h.count)
            )
        _require(h_atoms, "h", "PROX", lambda a: a.prox(np.zeros(1), 1.0))
        ch = _broadcast(ch, len(h_atoms), 1.0, "ch")
        if np.any(ch <= 0.0):
            raise ValidationError("entries of ch must be positive")
        bh = _broadcast(bh, Mh, 0.0, "bh")
    else:
        if Ah is not None:
            raise ValidationError("Ah was given without h atoms")
        Ah = SparseColMatrix(0, N, np.zeros(N + 1, dtype=np.intp), [], [])
        row_blocks_h = Blocks.uniform(0, 1, what="blocks_h")
        h_atoms = []
        ch = np.zeros(0)
        bh = np.zeros(0)

    # Quadratic part, symmetrized on ingestion.
    if has_q:
        Q = SparseColMatrix.from_any(Q, what="Q")
        if Q.n_rows != N or Q.n_cols != N:
            raise ValidationError("Q must be N by N")
        qs = Q.to_scipy()
        Q = SparseColMatrix.from_any((qs + qs.T) * 0.5)
    else:
        Q = SparseColMatrix(N, N, np.zeros(N + 1, dtype=np.intp), [], [])

    x0 = _broadcast(x_init, N, 0.0, "x_init")

    dual_index = DualDuplicationIndex(Ah, col_blocks, row_blocks_h)
    if y_init is None:
        y0 = np.zeros(dual_index.total)
    else:
        y0 = np.asarray(y_init, dtype=np.float64)
        if y0.shape != (dual_index.total,):
            raise ValidationError(
                "y_init must have length %d (one entry per dual copy), got %s"
                % (dual_index.total, y0.shape)
            )
        y0 = y0.copy()

    pb = Problem(
        N=N,
        blocks=col_blocks,
        x_init=x0,
        y_init=y0,
        f_atoms=f_atoms,
        cf=cf,
        Af=Af,
        bf=bf,
        blocks_f=row_blocks_f,
        g_atoms=g_atoms,
        cg=cg,
        Dg=Dg,
        bg=bg,
        h_atoms=h_atoms,
        ch=ch,
        Ah=Ah,
        bh=bh,
        blocks_h=row_blocks_h,
        Q=Q,
        has_f=has_f,
        has_g=has_g,
        has_h=has_h,
        has_q=has_q,
        dual_index=dual_index,
    )
    _compile_blocks(pb)
    return pb


def _compile_blocks(pb):
    """Precompute per-block column structures for the iteration kernels."""
    inv_f = pb.blocks_f.inverse() if pb.has_f else None
    cf_row = None
    if pb.has_f:
        cf_row = pb.cf[inv_f] if pb.Af.n_rows else np.zeros(0)
    inv_h = pb.blocks_h.inverse() if pb.has_h else None

    ops_list = []
    for i in range(pb.blocks.count):
        n0, n1 = pb.blocks.range(i)
        ops = _BlockOps()
        ops.n0, ops.n1 = n0, n1
        ops.dim = n1 - n0
        ops.scalar = ops.dim == 1

        rows, vals, split = _column_concat(pb.Af, n0, n1)
        ops.af_rows, ops.af_vals, ops.af_split = rows, vals, split
        ops.af_scaled = vals * cf_row[rows] if pb.has_f and rows.size else vals * 0.0

        # Gradient plans.  The fast plan evaluates per-entry derivatives
        # of coordinatewise atoms directly on the residual entries; the
        # group plan evaluates each atom on its full row block.  Both
        # fill the same per-entry array in the same order, so the per
        # column dot products agree bitwise.
        ops.f_fast = None
        ops.f_groups = []
        if pb.has_f and rows.size:
            row_js = inv_f[rows]
            groups = []
            for j in np.unique(row_js):
                pos = np.nonzero(row_js == j)[0]
                f0 = pb.blocks_f.bounds[j]
                groups.append(
                    (
                        int(j),
                        pb.f_atoms[j],
                        int(f0),
                        int(pb.blocks_f.bounds[j + 1]),
                        pos,
                        (rows[pos] - f0).astype(np.intp),
                    )
                )
            ops.f_groups = groups
            if all(atom.coordinatewise for _, atom, _, _, _, _ in groups):
                by_atom = {}
                for _, atom, _, _, pos, _ in groups:
                    by_atom.setdefault(atom, []).append(pos)
                fast = []
                for atom, chunks in by_atom.items():
                    if len(chunks) == 1 and chunks[0].size == rows.size:
                        fast.append((atom, slice(None)))
                    else:
                        fast.append((atom, np.concatenate(chunks)))
                ops.f_fast = fast

        q_rows, q_vals, q_split = _column_concat(pb.Q, n0, n1)
        ops.q_rows, ops.q_vals, ops.q_split = q_rows, q_vals, q_split

        rows, vals, split = _column_concat(pb.Ah, n0, n1)
        ops.ah_rows, ops.ah_vals, ops.ah_split = rows, vals, split

        # One dual group per coupled term j touching this block, with
        # entries ordered by (local column, row) for per-column dots.
        ops.dual_groups = []
        if pb.has_h and rows.size:
            cols_local = np.repeat(
                np.arange(ops.dim, dtype=np.intp), np.diff(split)
            )
            row_js = inv_h[rows]
            for k, j in enumerate(pb.dual_index.J_of[i]):
                sel = np.nonzero(row_js == j)[0]
                grp = _DualGroup()
                grp.j = int(j)
                grp.atom = pb.h_atoms[j]
                grp.weight = float(pb.ch[j])
                grp.h_start, grp.h_end = pb.blocks_h.range(j)
                grp.m = int(pb.dual_index.m[j])
                grp.slot_start = int(pb.dual_index.slot_of[i][k])
                grp.slot_end = grp.slot_start + (grp.h_end - grp.h_start)
                order = sel[np.argsort(cols_local[sel], kind="stable")]
                grp.rows_local = (rows[order] - grp.h_start).astype(np.intp)
                grp.vals = vals[order].copy()
                counts = np.bincount(cols_local[order], minlength=ops.dim)
                grp.col_split = np.concatenate(
                    ([0], np.cumsum(counts))
                ).astype(np.intp)
                ops.dual_groups.append(grp)

        ops_list.append(ops)
    pb.block_ops = ops_list


def sym_radius(S, tol=1e-9, maxiter=1000, inflate=1.01):
    """Upper bound on the spectral radius of a symmetric PSD matrix.

    Exact for 1 by 1 input.  Otherwise runs a deterministic power
    iteration and inflates the answer to stay on the safe side.
    """
    S = np.asarray(S, dtype=np.float64)
    if S.shape == (1, 1):
        return abs(float(S[0, 0]))
    n = S.shape[0]
    v = np.ones(n) / np.sqrt(n)
    v[0] += 1e-3
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(maxiter):
        w = S @ v
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0
        v = w / nrm
        new = float(v @ (S @ v))
        if abs(new - lam) <= tol * max(1.0, abs(new)):
            lam = new
            break
        lam = new
    return lam * inflate


def operator_radius(matvec, rmatvec, dim, tol=1e-9, maxiter=1000, inflate=1.01):
    """Upper bound on the largest eigenvalue of A A' via power iteration.

    ``matvec`` maps dimension ``dim`` to the range space and ``rmatvec``
    back.  Returns an inflated estimate of the squared operator norm.
    """
    if dim == 0:
        return 0.0
    v = np.ones(dim) / np.sqrt(dim)
    v[0] += 1e-3
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(maxiter):
        w = rmatvec(matvec(v))
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0
        v = w / nrm
        new = float(np.dot(v, rmatvec(matvec(v))))
        if abs(new - lam) <= tol * max(1.0, abs(new)):
            lam = new
            break
        lam = new
    return lam * inflate
