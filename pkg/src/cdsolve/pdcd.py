"""Primal dual randomized block coordinate descent.

One iteration samples a coordinate block i, refreshes the dual copies of
the coupled terms touching i, takes a proximal gradient step on the
block, and propagates all residual and aggregate changes incrementally.
With no coupled terms the method reduces to randomized proximal
coordinate descent.

Step sizes are local: block i admits any tau_i with

    tau_i < 1 / (beta_i + rho(sum_j m_j sigma_j Ah_{j,i}' Ah_{j,i}))

where beta_i bounds the block Lipschitz constant of the smooth part,
sigma_j is the dual step of coupled term j, m_j its number of copies and
rho the spectral radius.  The default takes a 0.95 safety fraction of
the bound and sigma_j = 1 / (m_j max(1, rho(Ah_j Ah_j'))).
"""

import time
from dataclasses import dataclass, replace

import numpy as np

from . import diagnostics
from .atoms import SolverError
from .model import ValidationError, operator_radius, sym_radius
from .state import SolverState, dual_prox_group, prox_g_block

# Step size fallback for blocks with no curvature at all.
TAU_FREE = 1e12


class NonFiniteError(SolverError):
    """The iterate left the range of finite floating point numbers."""


@dataclass
class StepSizes:
    """Per-block primal steps tau, per-term dual steps sigma."""

    tau: np.ndarray
    sigma: np.ndarray
    beta_blocks: np.ndarray


@dataclass
class SolverOptions:
    """Options shared by both solver loops."""

    algo: str = "pdcd"
    tol: float = 1e-6
    max_epochs: int = 1000
    max_time: float = float("inf")
    check_every: int = 10
    sampling: str = "uniform"
    seed: int = 0
    safety: float = 0.95
    sigma: object = None
    screening: bool = False
    screen_every: int = 10
    gamma1: float = None
    restart: str = "doubling"
    restart_period: int = None
    verbose: bool = False


@dataclass
class Result:
    """Solver output: final points, convergence info and the trace."""

    x: np.ndarray
    y: np.ndarray
    objective: float
    gap: float
    beta: float
    gamma: float
    infeasibility: float
    converged: bool
    status: str
    epochs: int
    updates: int
    seconds: float
    trace: object
    screened: np.ndarray
    y_dup: np.ndarray = None


def _block_dense(dim, pos_cols, rows_compact, vals, n_rows):
    mat = np.zeros((n_rows, dim))
    mat[rows_compact, pos_cols] = vals
    return mat


def _entry_cols(split, size):
    return np.repeat(np.arange(split.size - 1, dtype=np.intp), np.diff(split))


def smooth_block_constants(pb):
    """Per-block gradient Lipschitz bounds beta_i of the smooth part."""
    I = pb.blocks.count
    beta = np.zeros(I)
    for i in range(I):
        ops = pb.block_ops[i]
        total = 0.0
        if ops.q_rows.size:
            cols = _entry_cols(ops.q_split, ops.q_rows.size)
            keep = (ops.q_rows >= ops.n0) & (ops.q_rows < ops.n1)
            if keep.any():
                qb = np.zeros((ops.dim, ops.dim))
                qb[ops.q_rows[keep] - ops.n0, cols[keep]] = ops.q_vals[keep]
                total += sym_radius(qb)
        if ops.af_rows.size:
            cols = _entry_cols(ops.af_split, ops.af_rows.size)
            for j, atom, f0, f1, pos, loc in ops.f_groups:
                ell = atom.lipschitz()
                if ell == 0.0:
                    continue
                if ops.scalar:
                    gram = float(np.dot(ops.af_vals[pos], ops.af_vals[pos]))
                else:
                    sub = _block_dense(
                        ops.dim, cols[pos], loc, ops.af_vals[pos], f1 - f0
                    )
                    gram = sym_radius(sub.T @ sub)
                total += pb.cf[j] * ell * gram
        beta[i] = total
    return beta


def default_dual_steps(pb):
    """sigma_j = 1 / (m_j max(1, rho(Ah_j Ah_j'))) for each coupled term."""
    L = len(pb.h_atoms)
    sigma = np.zeros(L)
    if L == 0:
        return sigma
    ah = pb.Ah.to_scipy().tocsr()
    for j in range(L):
        m = int(pb.dual_index.m[j])
        if m == 0:
            continue
        h0, h1 = pb.blocks_h.range(j)
        rows = ah[h0:h1]
        rad = operator_radius(
            lambda v: rows @ v, lambda u: rows.T @ u, pb.N
        )
        sigma[j] = 1.0 / (m * max(1.0, rad))
    return sigma


def compute_step_sizes(pb, safety=0.95, sigma=None):
    """Build primal and dual steps satisfying the local step condition."""
    if not 0.0 < safety < 1.0:
        raise ValidationError("the step safety factor must lie in (0, 1)")
    if sigma is None:
        sigma = default_dual_steps(pb)
    else:
        sigma = np.asarray(sigma, dtype=float)
        if sigma.ndim == 0:
            sigma = np.full(len(pb.h_atoms), float(sigma))
        if sigma.shape != (len(pb.h_atoms),):
            raise ValidationError(
                "sigma must be a scalar or have one entry per coupled term"
            )
        if len(pb.h_atoms) and np.any(sigma <= 0.0):
            mask = pb.dual_index.m > 0
            if np.any(sigma[mask] <= 0.0):
                raise ValidationError("entries of sigma must be positive")
    beta = smooth_block_constants(pb)
    I = pb.blocks.count
    tau = np.empty(I)
    for i in range(I):
        ops = pb.block_ops[i]
        coupling = 0.0
        if ops.dual_groups:
            if ops.scalar:
                for grp in ops.dual_groups:
                    coupling += (
                        grp.m
                        * sigma[grp.j]
                        * float(np.dot(grp.vals, grp.vals))
                    )
            else:
                acc = np.zeros((ops.dim, ops.dim))
                for grp in ops.dual_groups:
                    cols = _entry_cols(grp.col_split, grp.vals.size)
                    sub = _block_dense(
                        ops.dim,
                        cols,
                        grp.rows_local,
                        grp.vals,
                        grp.h_end - grp.h_start,
                    )
                    acc += grp.m * sigma[grp.j] * (sub.T @ sub)
                coupling = sym_radius(acc)
        denom = beta[i] + coupling
        tau[i] = safety / denom if denom > 0.0 else TAU_FREE
    return StepSizes(tau=tau, sigma=sigma, beta_blocks=beta)


def kink_half_probabilities(pb, x, active=None):
    """Sampling law that favors blocks away from their nonsmooth points.

    Blocks whose scaled and shifted value sits exactly on a kink of the
    separable atom get probability 1/(2n); the remaining mass spreads
    uniformly over the other blocks.  With every block on a kink (or
    none) the law is uniform.  ``active`` masks screened blocks out.
    """
    I = pb.blocks.count
    if active is None:
        active = np.ones(I, dtype=bool)
    p = np.zeros(I)
    idx = np.nonzero(active)[0]
    n = idx.size
    if n == 0:
        return p
    flags = np.zeros(n, dtype=bool)
    for t, i in enumerate(idx):
        n0, n1 = pb.blocks.range(i)
        u = pb.Dg[n0:n1] * x[n0:n1] - pb.bg[n0:n1]
        flags[t] = pb.g_atoms[i].is_kink(u)
    K = int(flags.sum())
    if K == n or K == 0:
        p[idx] = 1.0 / n
        return p
    p[idx[flags]] = 1.0 / (2 * n)
    p[idx[~flags]] = 1.0 / (2 * n) + 1.0 / (2 * (n - K))
    return p


class Sampler:
    """Buffered categorical sampler over active blocks.

    Draws consume a stream of uniforms from the generator, so changing
    the probabilities mid run keeps the draw sequence reproducible for a
    fixed seed.
    """

    def __init__(self, I, rng, kind="uniform", chunk=4096):
        if kind not in ("uniform", "kink_half"):
            raise ValidationError(
                "unknown sampling law %r (choose 'uniform' or 'kink_half')"
                % (kind,)
            )
        self.I = I
        self.rng = rng
        self.kind = kind
        self.chunk = chunk
        self.active = np.ones(I, dtype=bool)
        self._buf = np.empty(0)
        self._pos = 0
        self.set_probabilities(np.full(I, 1.0 / I))

    def set_probabilities(self, p):
        p = np.asarray(p, dtype=float)
        cum = np.cumsum(p)
        if cum[-1] <= 0.0:
            raise ValidationError("sampling probabilities must sum to 1")
        cum /= cum[-1]
        cum[-1] = 1.0
        self.p = p
        self._cum = cum

    def set_active(self, active):
        self.active = np.asarray(active, dtype=bool).copy()
        if self.kind == "uniform":
            n = int(self.active.sum())
            p = np.zeros(self.I)
            if n:
                p[self.active] = 1.0 / n
            self.set_probabilities(p)
        # kink_half probabilities are refreshed by the caller, which
        # owns the current iterate.

    def draw(self):
        if self._pos >= self._buf.size:
            self._buf = self.rng.random(self.chunk)
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return int(np.searchsorted(self._cum, u, side="right"))


def pdcd_update(st, steps, i):
    """One block update of the primal dual coordinate descent method."""
    pb = st.pb
    ops = pb.block_ops[i]
    n0, n1 = ops.n0, ops.n1
    ybars = None
    if ops.dual_groups:
        t_vec = np.zeros(ops.dim)
        ybars = []
        for grp in ops.dual_groups:
            ybar = dual_prox_group(
                pb,
                grp,
                st.z[grp.h_start : grp.h_end],
                st.r_h[grp.h_start : grp.h_end],
                steps.sigma[grp.j],
            )
            ybars.append(ybar)
            gathered = ybar[grp.rows_local]
            if ops.scalar:
                t_vec[0] += np.dot(grp.vals, gathered)
            else:
                for c in range(ops.dim):
                    lo, hi = grp.col_split[c], grp.col_split[c + 1]
                    if hi > lo:
                        t_vec[c] += np.dot(grp.vals[lo:hi], gathered[lo:hi])
        t_vec = 2.0 * t_vec - st.w[n0:n1]
        step_dir = st.partial_gradient(i) + t_vec
    else:
        step_dir = st.partial_gradient(i)
    tau = steps.tau[i]
    v = st.x[n0:n1] - tau * step_dir
    xbar = prox_g_block(pb, i, v, tau)
    st.apply_primal_update(i, xbar)
    if ybars is not None:
        st.apply_dual_update(i, ybars)


def _check_finite(st):
    if not np.isfinite(st.x).all():
        raise NonFiniteError("the primal iterate contains non finite values")
    if st.y_dup.size and not np.isfinite(st.y_dup).all():
        raise NonFiniteError("the dual iterate contains non finite values")


def run(pb, opts=None, **kw):
    """Solve the problem; returns a Result.

    Keyword arguments override fields of ``opts`` (a SolverOptions).
    ``algo="smartcd"`` dispatches to the accelerated loop.
    """
    if opts is None:
        opts = SolverOptions()
    if kw:
        opts = replace(opts, **kw)
    if opts.algo == "smartcd":
        from . import accel

        return accel.run_accel(pb, opts)
    if opts.algo != "pdcd":
        raise ValidationError(
            "unknown algorithm %r (choose 'pdcd' or 'smartcd')" % (opts.algo,)
        )
    if opts.screening and pb.has_h:
        raise ValidationError(
            "screening requires a problem without coupled h terms"
        )

    rng = np.random.default_rng(opts.seed)
    steps = compute_step_sizes(pb, safety=opts.safety, sigma=opts.sigma)
    st = SolverState(pb)
    I = pb.blocks.count
    sampler = Sampler(I, rng, kind=opts.sampling)
    if opts.sampling == "kink_half":
        sampler.set_probabilities(kink_half_probabilities(pb, st.x))

    ctx = None
    if opts.screening:
        from . import screening as screening_mod

        ctx = screening_mod.ScreeningContext(pb)

    trace = diagnostics.Trace()
    t0 = time.perf_counter()
    updates = 0
    epoch = 0
    status = "max_epochs"
    converged = False

    def diagnose():
        st.refresh_residuals()
        _check_finite(st)
        obj = diagnostics.primal_objective(
            st.x, pb, r_f=st.r_f, r_q=st.r_q, r_h=st.r_h
        )
        zeta, omega, scale = diagnostics.gradient_dual_point(
            pb, st.r_f, st.r_q
        )
        beta_s, gamma_s = diagnostics.smoothing_parameters(
            st.x, st.z, zeta, omega, pb, r_h=st.r_h
        )
        gap = diagnostics.smoothed_gap(
            st.x,
            st.z,
            zeta,
            omega,
            pb,
            beta_s,
            gamma_s,
            omega_scale=1.0 / scale,
            r_f=st.r_f,
            r_q=st.r_q,
            r_h=st.r_h,
        )
        return obj, gap, beta_s, gamma_s, zeta, omega, scale

    obj = gap = beta_s = gamma_s = float("nan")
    while epoch < opts.max_epochs:
        for _ in range(I):
            if sampler.kind == "kink_half" and updates % I == 0:
                sampler.set_probabilities(
                    kink_half_probabilities(pb, st.x, sampler.active)
                )
            i = sampler.draw()
            pdcd_update(st, steps, i)
            updates += 1
        epoch += 1
        elapsed = time.perf_counter() - t0
        checkpoint = (
            epoch % opts.check_every == 0
            or epoch == opts.max_epochs
            or elapsed >= opts.max_time
        )
        if not checkpoint:
            continue
        obj, gap, beta_s, gamma_s, zeta, omega, scale = diagnose()
        trace.append(
            epoch=epoch,
            seconds=elapsed,
            objective=obj,
            gap=gap,
            beta=beta_s,
            gamma=gamma_s,
            infeasibility=beta_s,
            screened=int((~sampler.active).sum()),
        )
        if opts.verbose:
            print(
                "epoch %6d  obj %.9e  gap %.3e  beta %.3e  gamma %.3e"
                % (epoch, obj, gap, beta_s, gamma_s)
            )
        if ctx is not None and epoch % opts.screen_every == 0:
            # screen before the stopping test so that problems solved at
            # the first checkpoint still get their blocks certified
            newly = ctx.screen_pass(st, zeta, omega, scale)
            if newly:
                # screened blocks were moved onto their anchors
                obj, gap, beta_s, gamma_s, zeta, omega, scale = diagnose()
                if not ctx.active.any():
                    status = "screened_all"
                    converged = True
                    break
                sampler.set_active(ctx.active)
                if sampler.kind == "kink_half":
                    sampler.set_probabilities(
                        kink_half_probabilities(pb, st.x, sampler.active)
                    )
        crit = max(gap, beta_s, gamma_s)
        if np.isfinite(crit) and crit <= opts.tol:
            converged = True
            status = "converged"
            break
        if elapsed >= opts.max_time:
            status = "max_time"
            break

    seconds = time.perf_counter() - t0
    # ctx.active is authoritative; the sampler mask is not updated when
    # the final screening pass empties the active set
    screened = ~ctx.active if ctx is not None else ~sampler.active
    return Result(
        x=st.x.copy(),
        y=st.z.copy(),
        objective=obj,
        gap=gap,
        beta=beta_s,
        gamma=gamma_s,
        infeasibility=beta_s,
        converged=converged,
        status=status,
        epochs=epoch,
        updates=updates,
        seconds=seconds,
        trace=trace,
        screened=screened,
        y_dup=st.y_dup.copy(),
    )
