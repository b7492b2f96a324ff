"""Accelerated randomized coordinate descent with restarts.

The loop keeps two primal sequences: a prox center ``xt`` and a momentum
correction ``xh``.  The reported iterate after an update is
``x = xt + c_prev * xh`` where ``c_prev`` is the momentum product before
that update.  Coupled nonsmooth terms are handled through a smoothed
conjugate whose accuracy parameter ``gamma`` shrinks geometrically with
the momentum parameter ``theta``:

    theta ranges from 1/n downward, following
        theta^3 + theta^2 + theta_k^2 theta - theta_k^2 = 0
    with coupled terms, and
        theta^2 + theta_k^2 theta - theta_k^2 = 0
    without them;
    gamma  <- gamma / (1 + theta);  c <- (1 - theta) c.

Restarts collapse the two sequences into one point, promote the current
dual estimate to the new dual anchor, and reset theta, gamma and c.  The
default schedule doubles the restart period, starting at two epochs.
"""

import math
import time
from dataclasses import replace

import numpy as np

from . import diagnostics
from .model import ValidationError, sym_radius
from .pdcd import (
    Result,
    SolverOptions,
    Sampler,
    TAU_FREE,
    NonFiniteError,
    kink_half_probabilities,
    smooth_block_constants,
)
from .state import prox_g_block


def theta_step(theta, coupled):
    """Next momentum parameter from the defining polynomial."""
    t2 = theta * theta
    if not coupled:
        # Stable closed form of the positive root of
        # x^2 + theta^2 x - theta^2 = 0.
        return 2.0 * theta / (math.sqrt(t2 + 4.0) + theta)
    # Positive root of x^3 + x^2 + theta^2 x - theta^2 = 0, which lies
    # in (0, theta); safeguarded Newton from the upper end.
    lo, hi = 0.0, theta
    t = theta
    for _ in range(200):
        p = ((t + 1.0) * t + t2) * t - t2
        if p > 0.0:
            hi = t
        elif p < 0.0:
            lo = t
        else:
            return t
        dp = (3.0 * t + 2.0) * t + t2
        t_new = t - p / dp
        if not lo < t_new < hi:
            t_new = 0.5 * (lo + hi)
        if abs(t_new - t) <= 1e-18 + 1e-16 * t:
            return t_new
        t = t_new
    return t


class RestartSchedule:
    """Restart times in block updates: fixed period or doubling."""

    def __init__(self, kind, period, n_blocks):
        if kind not in ("doubling", "fixed"):
            raise ValidationError(
                "unknown restart schedule %r (choose 'doubling' or 'fixed')"
                % (kind,)
            )
        self.kind = kind
        self.period = int(period) if period else 2 * n_blocks
        if self.period <= 0:
            raise ValidationError("the restart period must be positive")
        self.next_at = self.period

    def due(self, k_next):
        return k_next == self.next_at

    def advance(self):
        if self.kind == "doubling":
            self.period *= 2
        self.next_at += self.period


class AccelState:
    """Iterate container for the accelerated loop."""

    def __init__(self, pb, gamma1):
        self.pb = pb
        I = pb.blocks.count
        self.theta0 = 1.0 / I
        self.theta = self.theta0
        self.c = 1.0
        self.c_prev = 1.0
        self.gamma1 = gamma1
        self.gamma = gamma1
        self.xt = pb.x_init.copy()
        self.xh = np.zeros(pb.N)
        # Dual anchor: average the initial dual copies per coupled term.
        self.ydot = np.zeros(pb.Ah.n_rows)
        for i in range(I):
            for grp in pb.block_ops[i].dual_groups:
                self.ydot[grp.h_start : grp.h_end] += (
                    pb.y_init[grp.slot_start : grp.slot_end] / grp.m
                )
        self.beta_blocks = smooth_block_constants(pb)
        self.rho_col = np.zeros(I)
        if pb.has_h:
            for i in range(I):
                ops = pb.block_ops[i]
                if ops.ah_rows.size == 0:
                    continue
                if ops.scalar:
                    self.rho_col[i] = float(
                        np.dot(ops.ah_vals, ops.ah_vals)
                    )
                else:
                    cols = np.repeat(
                        np.arange(ops.dim, dtype=np.intp),
                        np.diff(ops.ah_split),
                    )
                    sub = np.zeros((pb.Ah.n_rows, ops.dim))
                    sub[ops.ah_rows, cols] = ops.ah_vals
                    self.rho_col[i] = sym_radius(sub.T @ sub)
        self._exact_caches()

    def _exact_caches(self):
        pb = self.pb
        self.ft = pb.Af.matvec(self.xt)
        self.fh = pb.Af.matvec(self.xh)
        self.qt = pb.Q.matvec(self.xt)
        self.qh = pb.Q.matvec(self.xh)
        self.ht = pb.Ah.matvec(self.xt)
        self.hh = pb.Ah.matvec(self.xh)

    def combined(self):
        return self.xt + self.c_prev * self.xh

    def refresh(self):
        """Recompute all caches from xt and xh; returns the worst drift."""
        old = (self.ft, self.fh, self.qt, self.qh, self.ht, self.hh)
        self._exact_caches()
        new = (self.ft, self.fh, self.qt, self.qh, self.ht, self.hh)
        drift = 0.0
        for a, b in zip(old, new):
            if a.size:
                drift = max(drift, float(np.abs(a - b).max(initial=0.0)))
        return drift


def _partial_gradient(astate, i):
    """Gradient of the smooth part at the interpolated point, block i."""
    pb = astate.pb
    ops = pb.block_ops[i]
    c = astate.c
    g = c * astate.qh[ops.n0 : ops.n1] + astate.qt[ops.n0 : ops.n1]
    if ops.af_rows.size == 0:
        return g
    comp = np.empty(ops.af_rows.size)
    if ops.f_fast is not None:
        for atom, pos in ops.f_fast:
            rows = ops.af_rows[pos]
            comp[pos] = atom.grad_scalar(
                c * astate.fh[rows] + astate.ft[rows] - pb.bf[rows]
            )
    else:
        for _, atom, f0, f1, pos, loc in ops.f_groups:
            r_full = c * astate.fh[f0:f1] + astate.ft[f0:f1] - pb.bf[f0:f1]
            if atom.coordinatewise:
                comp[pos] = atom.grad_scalar(r_full[loc])
            else:
                comp[pos] = atom.grad(r_full)[loc]
    if ops.scalar:
        g[0] += np.dot(ops.af_scaled, comp)
    else:
        for cc in range(ops.dim):
            lo, hi = ops.af_split[cc], ops.af_split[cc + 1]
            g[cc] += np.dot(ops.af_scaled[lo:hi], comp[lo:hi])
    return g


def _add_block_cols(astate, ops, which, c_local, delta):
    """Add delta times local column c_local of the block to the caches."""
    if which == "t":
        rf, rq, rh = astate.ft, astate.qt, astate.ht
    else:
        rf, rq, rh = astate.fh, astate.qh, astate.hh
    lo, hi = ops.af_split[c_local], ops.af_split[c_local + 1]
    if hi > lo:
        rf[ops.af_rows[lo:hi]] += ops.af_vals[lo:hi] * delta
    lo, hi = ops.q_split[c_local], ops.q_split[c_local + 1]
    if hi > lo:
        rq[ops.q_rows[lo:hi]] += ops.q_vals[lo:hi] * delta
    lo, hi = ops.ah_split[c_local], ops.ah_split[c_local + 1]
    if hi > lo:
        rh[ops.ah_rows[lo:hi]] += ops.ah_vals[lo:hi] * delta


def full_dual(astate):
    """Dual vector obtained by the smoothed conjugate prox of every term."""
    pb = astate.pb
    y = np.zeros(pb.Ah.n_rows)
    if not pb.has_h:
        return y
    inv_g = 1.0 / astate.gamma
    c = astate.c
    for j, atom in enumerate(pb.h_atoms):
        h0, h1 = pb.blocks_h.range(j)
        v = astate.ydot[h0:h1] + inv_g * (
            c * astate.hh[h0:h1] + astate.ht[h0:h1] - pb.bh[h0:h1]
        )
        y[h0:h1] = atom.prox_conj(v, inv_g, pb.ch[j])
    return y


def accel_update(astate, i, restart_due):
    """One accelerated block update, with an optional trailing restart."""
    pb = astate.pb
    ops = pb.block_ops[i]
    n0, n1 = ops.n0, ops.n1
    c_cur = astate.c
    theta_cur = astate.theta
    gamma_cur = astate.gamma

    stash = full_dual(astate) if (restart_due and pb.has_h) else None

    grad = _partial_gradient(astate, i)
    if ops.dual_groups:
        inv_g = 1.0 / gamma_cur
        for grp in ops.dual_groups:
            h0, h1 = grp.h_start, grp.h_end
            v = astate.ydot[h0:h1] + inv_g * (
                c_cur * astate.hh[h0:h1] + astate.ht[h0:h1] - pb.bh[h0:h1]
            )
            ybar = grp.atom.prox_conj(v, inv_g, grp.weight)
            gathered = ybar[grp.rows_local]
            if ops.scalar:
                grad[0] += np.dot(grp.vals, gathered)
            else:
                for cc in range(ops.dim):
                    lo, hi = grp.col_split[cc], grp.col_split[cc + 1]
                    if hi > lo:
                        grad[cc] += np.dot(grp.vals[lo:hi], gathered[lo:hi])

    b_i = astate.beta_blocks[i]
    if pb.has_h and astate.rho_col[i] > 0.0:
        b_i = b_i + astate.rho_col[i] / gamma_cur
    tau = (astate.theta0 / theta_cur) / b_i if b_i > 0.0 else TAU_FREE
    v = astate.xt[n0:n1] - tau * grad
    xbar = prox_g_block(pb, i, v, tau)

    coef = 0.0
    if c_cur > 0.0:
        coef = -(1.0 - theta_cur / astate.theta0) / c_cur
    xt_block = astate.xt[n0:n1]
    xh_block = astate.xh[n0:n1]
    for cc in range(ops.dim):
        delta = xbar[cc] - xt_block[cc]
        if delta == 0.0:
            continue
        xt_block[cc] = xbar[cc]
        _add_block_cols(astate, ops, "t", cc, delta)
        if coef != 0.0:
            xh_block[cc] += coef * delta
            _add_block_cols(astate, ops, "h", cc, coef * delta)

    theta_new = theta_step(theta_cur, pb.has_h)
    astate.theta = theta_new
    if pb.has_h:
        astate.gamma = gamma_cur / (1.0 + theta_new)
    astate.c_prev = c_cur
    astate.c = (1.0 - theta_new) * c_cur

    if restart_due:
        _restart(astate, c_cur, stash)


def _restart(astate, c_used, stash):
    pb = astate.pb
    astate.xt = astate.xt + c_used * astate.xh
    astate.xh = np.zeros(pb.N)
    if stash is not None:
        astate.ydot = stash
    astate.c = 1.0
    astate.c_prev = 1.0
    astate.theta = astate.theta0
    astate.gamma = astate.gamma1
    astate._exact_caches()


def default_gamma1(pb):
    """Initial smoothing level: the largest column norm of Ah, if any."""
    if not pb.has_h or pb.Ah.nnz == 0:
        return 1.0
    best = 0.0
    for c in range(pb.Ah.n_cols):
        _, vals = pb.Ah.col(c)
        if vals.size:
            best = max(best, float(np.linalg.norm(vals)))
    return best if best > 0.0 else 1.0


def _fix_block(astate, i, anchor):
    """Pin block i at the anchor point (used by screening)."""
    ops = astate.pb.block_ops[i]
    for cc in range(ops.dim):
        dt = anchor[cc] - astate.xt[ops.n0 + cc]
        if dt != 0.0:
            astate.xt[ops.n0 + cc] = anchor[cc]
            _add_block_cols(astate, ops, "t", cc, dt)
        dh = -astate.xh[ops.n0 + cc]
        if dh != 0.0:
            astate.xh[ops.n0 + cc] = 0.0
            _add_block_cols(astate, ops, "h", cc, dh)


def run_accel(pb, opts=None, **kw):
    """Solve with the accelerated loop; same contract as the plain run."""
    if opts is None:
        opts = SolverOptions(algo="smartcd")
    if kw:
        opts = replace(opts, **kw)
    if opts.screening and pb.has_h:
        raise ValidationError(
            "screening requires a problem without coupled h terms"
        )
    gamma1 = opts.gamma1 if opts.gamma1 is not None else default_gamma1(pb)
    if gamma1 <= 0.0:
        raise ValidationError("gamma1 must be positive")

    rng = np.random.default_rng(opts.seed)
    astate = AccelState(pb, gamma1)
    I = pb.blocks.count
    sampler = Sampler(I, rng, kind=opts.sampling)
    if opts.sampling == "kink_half":
        sampler.set_probabilities(kink_half_probabilities(pb, astate.combined()))
    schedule = RestartSchedule(opts.restart, opts.restart_period, I)

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
        astate.refresh()
        x = astate.combined()
        if not np.isfinite(x).all():
            raise NonFiniteError(
                "the primal iterate contains non finite values"
            )
        y = full_dual(astate)
        if y.size and not np.isfinite(y).all():
            raise NonFiniteError(
                "the dual iterate contains non finite values"
            )
        r_f = pb.Af.matvec(x) - pb.bf
        r_q = pb.Q.matvec(x)
        r_h = pb.Ah.matvec(x)
        obj = diagnostics.primal_objective(x, pb, r_f=r_f, r_q=r_q, r_h=r_h)
        zeta, omega, scale = diagnostics.gradient_dual_point(pb, r_f, r_q)
        beta_s, gamma_s = diagnostics.smoothing_parameters(
            x, y, zeta, omega, pb, r_h=r_h
        )
        gap = diagnostics.smoothed_gap(
            x,
            y,
            zeta,
            omega,
            pb,
            beta_s,
            gamma_s,
            omega_scale=1.0 / scale,
            r_f=r_f,
            r_q=r_q,
            r_h=r_h,
        )
        return x, r_f, r_q, obj, gap, beta_s, gamma_s, zeta, omega, scale

    obj = gap = beta_s = gamma_s = float("nan")
    x_out = astate.combined()
    while epoch < opts.max_epochs:
        for _ in range(I):
            if sampler.kind == "kink_half" and updates % I == 0:
                sampler.set_probabilities(
                    kink_half_probabilities(
                        pb, astate.combined(), sampler.active
                    )
                )
            i = sampler.draw()
            due = schedule.due(updates + 1)
            accel_update(astate, i, due)
            if due:
                schedule.advance()
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
        x_out, r_f, r_q, obj, gap, beta_s, gamma_s, zeta, omega, scale = (
            diagnose()
        )
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
            found = ctx.find_screenable(
                x_out, r_f, r_q, zeta, omega, scale, sampler.active
            )
            if found:
                for i, anchor in found:
                    _fix_block(astate, i, anchor)
                    ctx.active[i] = False
                # screened blocks were moved onto their anchors
                (x_out, r_f, r_q, obj, gap, beta_s, gamma_s,
                 zeta, omega, scale) = diagnose()
                if not ctx.active.any():
                    status = "screened_all"
                    converged = True
                    break
                sampler.set_active(ctx.active)
                if sampler.kind == "kink_half":
                    sampler.set_probabilities(
                        kink_half_probabilities(
                            pb, astate.combined(), sampler.active
                        )
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
    if not converged or status == "max_epochs":
        x_out = astate.combined()
    # ctx.active is authoritative; the sampler mask is not updated when
    # the final screening pass empties the active set
    screened = ~ctx.active if ctx is not None else ~sampler.active
    return Result(
        x=x_out.copy(),
        y=full_dual(astate),
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
        y_dup=None,
    )
