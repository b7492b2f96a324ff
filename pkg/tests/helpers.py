"""Shared builders, reference solvers and CLI fixtures for the tests.

Reference solvers here are deliberately independent from the package
under test: closed forms, dense KKT solves, exhaustive enumeration,
generic first-order loops with support polishing, or smoothing homotopy
with a quasi-Newton method.  Fixture writers produce TOML problem specs
plus data files and return the reference solution each spec should
reproduce.
"""

import itertools
import os

import numpy as np
import scipy.io
import scipy.optimize
import scipy.sparse as sp
from scipy.special import expit, logsumexp, softmax


# ---------------------------------------------------------------------------
# Small numeric utilities.


def soft_threshold(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def row_group_shrink(V, t):
    """Shrink every row of V toward zero by t in the Euclidean norm."""
    nrm = np.linalg.norm(V, axis=1, keepdims=True)
    scale = np.maximum(1.0 - t / np.maximum(nrm, 1e-300), 0.0)
    return V * scale


def fista(grad, lipschitz, prox, x0, iters=20000, tol=1e-15):
    """Generic accelerated proximal gradient loop."""
    x_prev = np.asarray(x0, dtype=float).copy()
    z = x_prev.copy()
    t = 1.0
    for _ in range(iters):
        x = prox(z - grad(z) / lipschitz, 1.0 / lipschitz)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        z = x + ((t - 1.0) / t_next) * (x - x_prev)
        if np.abs(x - x_prev).max() <= tol * (1.0 + np.abs(x).max()):
            x_prev = x
            break
        x_prev = x
        t = t_next
    return x_prev


# ---------------------------------------------------------------------------
# Reference solvers.


def lasso_ref(A, b, lam, iters=20000):
    """min 0.5 ||Ax - b||^2 + lam ||x||_1 by FISTA plus an exact polish
    on the identified support (verified against the optimality system)."""
    A = np.asarray(A, dtype=float)
    lipschitz = np.linalg.norm(A, 2) ** 2
    grad = lambda x: A.T @ (A @ x - b)
    prox = lambda v, t: soft_threshold(v, lam * t)
    x = fista(grad, lipschitz, prox, np.zeros(A.shape[1]), iters=iters)
    support = np.abs(x) > 1e-9 * max(1.0, np.abs(x).max())
    if support.any():
        As = A[:, support]
        sgn = np.sign(x[support])
        try:
            xs = np.linalg.solve(As.T @ As, As.T @ b - lam * sgn)
        except np.linalg.LinAlgError:
            return x
        candidate = np.zeros_like(x)
        candidate[support] = xs
        corr = A.T @ (A @ candidate - b)
        ok = np.all(np.sign(xs) == sgn)
        ok = ok and np.all(np.abs(corr[support] + lam * sgn) <= 1e-8 * (1.0 + lam))
        ok = ok and np.all(np.abs(corr[~support]) <= lam * (1.0 + 1e-7) + 1e-9)
        if ok:
            return candidate
    return x


def eq_qp_ref(Q, q, H, d):
    """min 0.5 x'Qx + q'x subject to Hx = d, by the dense KKT system.
    Returns (x, multipliers)."""
    Q = np.asarray(Q, dtype=float)
    H = np.atleast_2d(np.asarray(H, dtype=float))
    n = Q.shape[0]
    m = H.shape[0]
    K = np.block([[Q, H.T], [H, np.zeros((m, m))]])
    rhs = np.concatenate([-np.asarray(q, dtype=float), np.asarray(d, dtype=float)])
    sol = np.linalg.solve(K, rhs)
    return sol[:n], sol[n:]


def lp_vertex_ref(c, G, g0):
    """min c'x subject to Gx <= g0, x >= 0, by vertex enumeration."""
    c = np.asarray(c, dtype=float)
    G = np.asarray(G, dtype=float)
    g0 = np.asarray(g0, dtype=float)
    n = c.size
    rows = np.vstack([G, -np.eye(n)])
    rhs = np.concatenate([g0, np.zeros(n)])
    best = None
    best_val = np.inf
    for idx in itertools.combinations(range(rows.shape[0]), n):
        sub = rows[list(idx)]
        if abs(np.linalg.det(sub)) < 1e-10:
            continue
        v = np.linalg.solve(sub, rhs[list(idx)])
        if np.all(rows @ v <= rhs + 1e-9):
            val = float(c @ v)
            if val < best_val - 1e-12:
                best = v
                best_val = val
    return best, best_val


def box_qp_ref(P, q, lo, hi, eq_a=None, eq_b=0.0):
    """min 0.5 x'Px + q'x on a box, with an optional single equality row,
    by enumerating faces and minimizing on each face."""
    P = np.asarray(P, dtype=float)
    q = np.asarray(q, dtype=float)
    n = q.size
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (n,))
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (n,))
    best = None
    best_val = np.inf
    for assign in itertools.product((0, 1, 2), repeat=n):
        assign = np.asarray(assign)
        free = np.flatnonzero(assign == 2)
        x = np.where(assign == 0, lo, hi).astype(float)
        x[free] = 0.0
        fixed = assign != 2
        if free.size:
            rhs = -q[free] - P[np.ix_(free, np.flatnonzero(fixed))] @ x[fixed]
            if eq_a is not None:
                a_f = np.asarray(eq_a, dtype=float)[free]
                K = np.block(
                    [[P[np.ix_(free, free)], a_f[:, None]], [a_f[None, :], np.zeros((1, 1))]]
                )
                r = np.concatenate(
                    [rhs, [eq_b - np.asarray(eq_a, dtype=float)[fixed] @ x[fixed]]]
                )
                sol, *_ = np.linalg.lstsq(K, r, rcond=None)
                if np.abs(K @ sol - r).max() > 1e-8:
                    continue
                x[free] = sol[:-1]
            else:
                K = P[np.ix_(free, free)]
                sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
                if np.abs(K @ sol - rhs).max() > 1e-8:
                    continue
                x[free] = sol
        if np.any(x < lo - 1e-9) or np.any(x > hi + 1e-9):
            continue
        if eq_a is not None and free.size == 0:
            if abs(np.asarray(eq_a, dtype=float) @ x - eq_b) > 1e-9:
                continue
        val = 0.5 * float(x @ P @ x) + float(q @ x)
        if val < best_val - 1e-12:
            best = x
            best_val = val
    return best, best_val


def qp_cvxopt_ref(P, q, lo, hi, eq_a=None, eq_b=0.0):
    """Box QP with optional equality row, via an interior-point solver."""
    from cvxopt import matrix, solvers

    n = len(q)
    G = np.vstack([np.eye(n), -np.eye(n)])
    h = np.concatenate(
        [np.broadcast_to(hi, (n,)), -np.broadcast_to(lo, (n,))]
    ).astype(float)
    args = [matrix(np.asarray(P, dtype=float)), matrix(np.asarray(q, dtype=float))]
    args += [matrix(G), matrix(h)]
    if eq_a is not None:
        args += [matrix(np.asarray(eq_a, dtype=float)[None, :]), matrix([float(eq_b)])]
    opts = {
        "show_progress": False,
        "abstol": 1e-12,
        "reltol": 1e-12,
        "feastol": 1e-12,
        "maxiters": 200,
    }
    sol = solvers.qp(*args, options=opts)
    return np.asarray(sol["x"]).ravel()


def logistic_ridge_ref(M, lam, iters=200):
    """min sum log(1 + exp((Mx)_r)) + lam/2 ||x||^2 by damped Newton."""
    M = np.asarray(M, dtype=float)
    n = M.shape[1]
    x = np.zeros(n)

    def value(v):
        return float(np.logaddexp(0.0, M @ v).sum() + 0.5 * lam * v @ v)

    for _ in range(iters):
        p = expit(M @ x)
        g = M.T @ p + lam * x
        if np.abs(g).max() < 1e-14:
            break
        Hm = M.T @ (M * (p * (1.0 - p))[:, None]) + lam * np.eye(n)
        dx = np.linalg.solve(Hm, g)
        step = 1.0
        base = value(x)
        while value(x - step * dx) > base - 1e-4 * step * float(g @ dx):
            step *= 0.5
            if step < 1e-12:
                break
        x = x - step * dx
    return x


def sparse_logistic_ref(M, lam, iters=50000):
    """min sum log(1 + exp((Mx)_r)) + lam ||x||_1, FISTA plus a Newton
    polish on the identified support."""
    M = np.asarray(M, dtype=float)
    lipschitz = 0.25 * np.linalg.norm(M, 2) ** 2
    grad = lambda x: M.T @ expit(M @ x)
    prox = lambda v, t: soft_threshold(v, lam * t)
    x = fista(grad, lipschitz, prox, np.zeros(M.shape[1]), iters=iters)
    support = np.abs(x) > 1e-9 * max(1.0, np.abs(x).max())
    if support.any():
        sgn = np.sign(x[support])
        Ms = M[:, support]
        xs = x[support].copy()
        for _ in range(100):
            p = expit(Ms @ xs)
            g = Ms.T @ p + lam * sgn
            if np.abs(g).max() < 1e-14:
                break
            Hm = Ms.T @ (Ms * (p * (1.0 - p))[:, None])
            try:
                xs = xs - np.linalg.solve(Hm, g)
            except np.linalg.LinAlgError:
                return x
        candidate = np.zeros_like(x)
        candidate[support] = xs
        corr = M.T @ expit(M @ candidate)
        ok = np.all(np.sign(xs) == sgn)
        ok = ok and np.all(np.abs(corr[~support]) <= lam * (1.0 + 1e-7) + 1e-9)
        if ok:
            return candidate
    return x


def tv_l1_ref(A, b, D, n_groups, a1, a2):
    """min 0.5 ||Ax-b||^2 + a1 * sum_k ||(Dx)_k|| + a2 ||x||_1 where D
    stacks groups of rows.  Smoothing homotopy with L-BFGS."""
    A = np.asarray(A, dtype=float)
    D = np.asarray(D, dtype=float)
    gdim = D.shape[0] // n_groups
    x = np.zeros(A.shape[1])
    for eps in (1e-1, 1e-3, 1e-5, 1e-8, 1e-10):

        def fg(v, eps=eps):
            r = A @ v - b
            val = 0.5 * float(r @ r)
            grad = A.T @ r
            y = (D @ v).reshape(n_groups, gdim)
            nrm = np.sqrt((y * y).sum(axis=1) + eps * eps)
            val += a1 * float((nrm - eps).sum())
            grad += a1 * (D.T @ (y / nrm[:, None]).ravel())
            sm = np.sqrt(v * v + eps * eps)
            val += a2 * float((sm - eps).sum())
            grad += a2 * (v / sm)
            return val, grad

        res = scipy.optimize.minimize(
            fg,
            x,
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": 50000, "ftol": 1e-18, "gtol": 1e-14, "maxcor": 30},
        )
        x = res.x
    return x


def multinomial_ref(A, B, lam, iters=40000):
    """min over W (n x q) of sum_i logsumexp((A W)_i) + <B, W> +
    lam * sum_l ||W_l||.  FISTA with row-group shrinkage."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    lipschitz = np.linalg.norm(A, 2) ** 2

    def grad(W):
        S = softmax(A @ W, axis=1)
        return A.T @ S + B

    def prox(V, t):
        return row_group_shrink(V, lam * t)

    W = fista(grad, lipschitz, prox, np.zeros_like(B), iters=iters)
    return W


def multinomial_value(A, B, W, lam):
    return float(
        logsumexp(A @ W, axis=1).sum()
        + (B * W).sum()
        + lam * np.linalg.norm(W, axis=1).sum()
    )


# ---------------------------------------------------------------------------
# Random instance generators for invariant tests.


def random_sparse(rng, m, n, nnz, scale=1.0):
    """Random sparse matrix with approximately nnz entries."""
    nnz = min(nnz, m * n)
    flat = rng.choice(m * n, size=nnz, replace=False)
    rows, cols = np.unravel_index(flat, (m, n))
    vals = scale * rng.standard_normal(nnz)
    vals[vals == 0.0] = scale
    return sp.coo_matrix((vals, (rows, cols)), shape=(m, n)).tocsc()


def random_partition(rng, total, max_dim=3):
    bounds = [0]
    while bounds[-1] < total:
        bounds.append(min(total, bounds[-1] + int(rng.integers(1, max_dim + 1))))
    return bounds


def random_problem_kwargs(
    seed,
    n=12,
    with_f=True,
    with_h=True,
    with_q=False,
    with_g=True,
    coupled_blocks=True,
):
    """Assemble build_problem keyword arguments for a random instance
    mixing atom kinds, block sizes and offsets."""
    rng = np.random.default_rng(seed)
    kw = {"N": n}
    blocks = random_partition(rng, n, max_dim=3 if coupled_blocks else 1)
    kw["blocks"] = blocks
    n_blocks = len(blocks) - 1

    if with_f:
        mf = int(rng.integers(2, 2 * n))
        kw["Af"] = random_sparse(rng, mf, n, nnz=max(mf, int(0.4 * mf * min(n, 8))))
        names = ["square", "log1pexp", "linear"]
        kw["f"] = [names[int(rng.integers(0, 3))] for _ in range(mf)]
        kw["cf"] = rng.uniform(0.2, 2.0, size=mf)
        kw["bf"] = rng.standard_normal(mf)

    if with_g:
        g = []
        for i in range(n_blocks):
            dim = blocks[i + 1] - blocks[i]
            if dim > 1 and rng.random() < 0.4:
                g.append("norm2")
            else:
                g.append(
                    ["abs", "nonneg", "box01", "zero", "square"][int(rng.integers(0, 5))]
                )
        kw["g"] = g
        kw["cg"] = rng.uniform(0.2, 2.0, size=n_blocks)
        dg = rng.uniform(0.5, 2.0, size=n) * rng.choice([-1.0, 1.0], size=n)
        kw["Dg"] = dg
        kw["bg"] = rng.standard_normal(n) * 0.3

    if with_h:
        mh = int(rng.integers(2, n + 4))
        bounds_h = random_partition(rng, mh, max_dim=3)
        kw["blocks_h"] = bounds_h
        nh = len(bounds_h) - 1
        h = []
        for j in range(nh):
            dim = bounds_h[j + 1] - bounds_h[j]
            if dim > 1 and rng.random() < 0.5:
                h.append("norm2")
            else:
                h.append(["eq", "nonpos", "abs", "box01"][int(rng.integers(0, 4))])
        kw["h"] = h
        kw["Ah"] = random_sparse(rng, mh, n, nnz=max(mh, int(0.5 * mh * min(n, 6))))
        kw["ch"] = rng.uniform(0.2, 2.0, size=nh)
        kw["bh"] = rng.standard_normal(mh) * 0.3

    if with_q:
        Bq = random_sparse(rng, n, n, nnz=2 * n).toarray()
        kw["Q"] = sp.csc_matrix(Bq.T @ Bq / n + 0.1 * np.eye(n))
    return kw


# ---------------------------------------------------------------------------
# TOML fixture writing.


def _fmt_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return '"%s"' % v
    if isinstance(v, (int, np.integer)):
        return "%d" % v
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, dict):
        inner = ", ".join("%s = %s" % (k, _fmt_value(x)) for k, x in v.items())
        return "{%s}" % inner
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[%s]" % ", ".join(_fmt_value(x) for x in np.asarray(v).tolist())
    raise TypeError("cannot format %r" % (v,))


def write_toml(path, sections):
    """Write a flat two-level TOML file from {section: {key: value}}."""
    lines = []
    for name, table in sections.items():
        lines.append("[%s]" % name)
        for key, val in table.items():
            lines.append("%s = %s" % (key, _fmt_value(val)))
        lines.append("")
    with open(path, "w") as fh:
        fh.write("\n".join(lines))
    return path


def write_svmlight(path, M, labels):
    M = np.asarray(M, dtype=float)
    with open(path, "w") as fh:
        for r in range(M.shape[0]):
            parts = ["%.17g" % labels[r]]
            for c in np.flatnonzero(M[r]):
                parts.append("%d:%.17g" % (c + 1, M[r, c]))
            fh.write(" ".join(parts) + "\n")
    return path


def write_mtx(path, M):
    scipy.io.mmwrite(os.path.splitext(path)[0], sp.csc_matrix(np.asarray(M, dtype=float)))
    return path


def write_csv(path, M):
    np.savetxt(path, np.atleast_2d(np.asarray(M, dtype=float)), delimiter=",", fmt="%.17g")
    return path


def write_vec(path, v):
    np.savetxt(path, np.asarray(v, dtype=float), fmt="%.17g")
    return path


class Fixture:
    """A CLI problem spec plus its reference solution."""

    def __init__(self, name, toml, x_ref, tol, obj_tol=None):
        self.name = name
        self.toml = toml
        self.x_ref = np.asarray(x_ref, dtype=float)
        self.tol = tol
        self.obj_tol = obj_tol

    def __repr__(self):
        return "Fixture(%r)" % (self.name,)


def _fx_lasso(root):
    rng = np.random.default_rng(11)
    m, n = 10, 6
    A = rng.standard_normal((m, n))
    b = rng.standard_normal(m)
    lam = 0.4 * np.abs(A.T @ b).max()
    write_svmlight(os.path.join(root, "lasso.svm"), A, b)
    toml = write_toml(
        os.path.join(root, "lasso.toml"),
        {
            "problem": {"n": n},
            "f": {
                "atoms": "square",
                "matrix": {"file": os.path.join(root, "lasso.svm")},
                "weights": 0.5,
            },
            "g": {"atoms": "abs", "weights": lam},
            "solver": {"tol": 1e-10, "max_epochs": 20000},
        },
    )
    return Fixture("lasso", toml, lasso_ref(A, b, lam), 1e-6)


def _fx_logistic_ridge(root):
    rng = np.random.default_rng(12)
    m, n = 12, 5
    X = rng.standard_normal((m, n))
    y = rng.choice([-1.0, 1.0], size=m)
    M = y[:, None] * X
    lam = 0.3
    write_csv(os.path.join(root, "logit.csv"), M)
    Q = lam * np.eye(n)
    write_mtx(os.path.join(root, "logit_q.mtx"), Q)
    toml = write_toml(
        os.path.join(root, "logistic_ridge.toml"),
        {
            "problem": {"n": n},
            "f": {
                "atoms": "log1pexp",
                "matrix": {"file": os.path.join(root, "logit.csv")},
            },
            "quadratic": {"matrix": {"file": os.path.join(root, "logit_q.mtx")}},
            "solver": {"tol": 1e-10, "max_epochs": 20000},
        },
    )
    return Fixture("logistic_ridge", toml, logistic_ridge_ref(M, lam), 1e-6)


def _fx_sparse_logistic(root):
    rng = np.random.default_rng(13)
    m, n = 14, 6
    X = rng.standard_normal((m, n))
    y = rng.choice([-1.0, 1.0], size=m)
    M = y[:, None] * X
    lam = 0.25 * np.abs(M.T @ np.full(m, 0.5)).max()
    write_mtx(os.path.join(root, "slog.mtx"), M)
    toml = write_toml(
        os.path.join(root, "sparse_logistic.toml"),
        {
            "problem": {"n": n},
            "f": {
                "atoms": "log1pexp",
                "matrix": {"file": os.path.join(root, "slog.mtx")},
            },
            "g": {"atoms": "abs", "weights": lam},
            "solver": {"tol": 1e-10, "max_epochs": 30000, "screening": True},
        },
    )
    return Fixture("sparse_logistic", toml, sparse_logistic_ref(M, lam), 1e-6)


def _svm_data(seed, n_pts):
    rng = np.random.default_rng(seed)
    half = n_pts // 2
    X = np.vstack(
        [
            rng.standard_normal((half, 2)) + np.array([1.6, 1.2]),
            rng.standard_normal((n_pts - half, 2)) - np.array([1.4, 1.1]),
        ]
    )
    y = np.concatenate([np.ones(half), -np.ones(n_pts - half)])
    return X, y


def _svm_sections(root, stem, X, y, intercept):
    n = X.shape[0]
    Mf = np.vstack([(y[:, None] * X).T, -np.ones((1, n))])
    write_csv(os.path.join(root, stem + ".csv"), Mf)
    sections = {
        "problem": {"n": n},
        "f": {
            "atoms": ["square"] * X.shape[1] + ["linear"],
            "matrix": {"file": os.path.join(root, stem + ".csv")},
            "weights": [0.5] * X.shape[1] + [1.0],
        },
        "g": {"atoms": "box01"},
        "solver": {"tol": 1e-9, "max_epochs": 40000},
    }
    if intercept:
        sections["h"] = {"atoms": "eq", "matrix": [list(y)]}
    return sections


def _fx_svm(root):
    X, y = _svm_data(14, 8)
    sections = _svm_sections(root, "svm", X, y, intercept=False)
    toml = write_toml(os.path.join(root, "svm.toml"), sections)
    P = (y[:, None] * X) @ (y[:, None] * X).T
    x_ref, _ = box_qp_ref(P, -np.ones(len(y)), 0.0, 1.0)
    return Fixture("svm", toml, x_ref, 1e-5)


def _fx_svm_intercept(root):
    X, y = _svm_data(15, 8)
    sections = _svm_sections(root, "svmi", X, y, intercept=True)
    toml = write_toml(os.path.join(root, "svm_intercept.toml"), sections)
    P = (y[:, None] * X) @ (y[:, None] * X).T
    x_ref, _ = box_qp_ref(P, -np.ones(len(y)), 0.0, 1.0, eq_a=y, eq_b=0.0)
    return Fixture("svm_intercept", toml, x_ref, 1e-5)


def _fx_eq_qp(root):
    rng = np.random.default_rng(16)
    n, m = 4, 2
    F = rng.standard_normal((6, n))
    bf = rng.standard_normal(6)
    H = rng.standard_normal((m, n))
    d = rng.standard_normal(m)
    write_csv(os.path.join(root, "eqqp_f.csv"), F)
    toml = write_toml(
        os.path.join(root, "eq_qp.toml"),
        {
            "problem": {"n": n},
            "f": {
                "atoms": "square",
                "matrix": {"file": os.path.join(root, "eqqp_f.csv")},
                "weights": 0.5,
                "offsets": list(bf),
            },
            "h": {
                "atoms": "eq",
                "matrix": [list(r) for r in H],
                "offsets": list(d),
                "blocks": {"count": 1, "dim": m},
            },
            "solver": {"tol": 1e-9, "max_epochs": 40000},
        },
    )
    x_ref, _ = eq_qp_ref(F.T @ F, -F.T @ bf, H, d)
    return Fixture("eq_qp", toml, x_ref, 1e-6)


def _fx_lp(root):
    c = np.array([-3.0, -5.0, -4.0, -1.0])
    G = np.array(
        [
            [2.0, 3.0, 0.0, 1.0],
            [0.0, 2.0, 5.0, 0.0],
            [3.0, 2.0, 4.0, 1.0],
        ]
    )
    g0 = np.array([8.0, 10.0, 15.0])
    toml = write_toml(
        os.path.join(root, "lp.toml"),
        {
            "problem": {"n": 4},
            "f": {"atoms": "linear", "matrix": [list(c)]},
            "g": {"atoms": "nonneg"},
            "h": {"atoms": "nonpos", "matrix": [list(r) for r in G], "offsets": list(g0)},
            "solver": {"tol": 1e-8, "max_epochs": 60000},
        },
    )
    x_ref, _ = lp_vertex_ref(c, G, g0)
    return Fixture("lp", toml, x_ref, 1e-4)


def grid_gradient_matrix(shape):
    """Forward-difference operator on a 3-d grid.  Rows come in groups of
    three (one per axis) per voxel; entries at the far boundary are zero."""
    n1, n2, n3 = shape
    n = n1 * n2 * n3
    idx = np.arange(n).reshape(shape)
    rows, cols, vals = [], [], []
    r = 0
    for i in range(n1):
        for j in range(n2):
            for k in range(n3):
                for axis, nb in enumerate(
                    [
                        idx[i + 1, j, k] if i + 1 < n1 else -1,
                        idx[i, j + 1, k] if j + 1 < n2 else -1,
                        idx[i, j, k + 1] if k + 1 < n3 else -1,
                    ]
                ):
                    if nb >= 0:
                        rows += [r, r]
                        cols += [nb, idx[i, j, k]]
                        vals += [1.0, -1.0]
                    r += 1
    return sp.coo_matrix((vals, (rows, cols)), shape=(r, n)).tocsc()


def _fx_tv_l1(root):
    rng = np.random.default_rng(17)
    shape = (3, 2, 2)
    n = int(np.prod(shape))
    A = np.eye(n) + 0.1 * rng.standard_normal((n, n))
    signal = np.zeros(shape)
    signal[:2, :, :] = 1.0
    b = A @ signal.ravel() + 0.05 * rng.standard_normal(n)
    a1, a2 = 0.15, 0.05
    D = grid_gradient_matrix(shape)
    write_csv(os.path.join(root, "tv_a.csv"), A)
    write_mtx(os.path.join(root, "tv_d.mtx"), D.toarray())
    write_vec(os.path.join(root, "tv_b.csv"), b)
    toml = write_toml(
        os.path.join(root, "tv_l1.toml"),
        {
            "problem": {"n": n},
            "f": {
                "atoms": "square",
                "matrix": {"file": os.path.join(root, "tv_a.csv")},
                "weights": 0.5,
                "offsets": {"file": os.path.join(root, "tv_b.csv")},
            },
            "g": {"atoms": "abs", "weights": a2},
            "h": {
                "atoms": "norm2",
                "matrix": {"file": os.path.join(root, "tv_d.mtx")},
                "weights": a1,
                "blocks": {"count": n, "dim": 3},
            },
            "solver": {"tol": 1e-9, "max_epochs": 60000},
        },
    )
    x_ref = tv_l1_ref(A, b, D.toarray(), n, a1, a2)
    return Fixture("tv_l1", toml, x_ref, 1e-4)


def _fx_multinomial(root):
    rng = np.random.default_rng(18)
    m, n, q = 6, 4, 3
    A = rng.standard_normal((m, n))
    # one-hot linear term keeps each sample loss nonnegative, so the
    # objective is bounded below
    labels = rng.integers(0, q, size=m)
    Y = np.zeros((m, q))
    Y[np.arange(m), labels] = 1.0
    B = -A.T @ Y
    lam = 0.3
    Af = np.vstack([np.kron(A, np.eye(q)), B.ravel()[None, :]])
    write_mtx(os.path.join(root, "multi.mtx"), Af)
    toml = write_toml(
        os.path.join(root, "multinomial.toml"),
        {
            "problem": {"n": n * q, "blocks": {"count": n, "dim": q}},
            "f": {
                "atoms": ["logsumexp"] * m + ["linear"],
                "matrix": {"file": os.path.join(root, "multi.mtx")},
                "blocks": list(range(0, m * q + 1, q)) + [m * q + 1],
            },
            "g": {"atoms": "norm2", "weights": lam},
            "solver": {"tol": 1e-9, "max_epochs": 40000},
        },
    )
    W = multinomial_ref(A, B, lam)
    return Fixture("multinomial", toml, W.ravel(), 1e-4)


FIXTURE_BUILDERS = (
    _fx_lasso,
    _fx_logistic_ridge,
    _fx_sparse_logistic,
    _fx_svm,
    _fx_svm_intercept,
    _fx_eq_qp,
    _fx_lp,
    _fx_tv_l1,
    _fx_multinomial,
)


def build_fixtures(root):
    """Write all nine problem-class fixtures into root."""
    out = {}
    for builder in FIXTURE_BUILDERS:
        fx = builder(str(root))
        out[fx.name] = fx
    return out
