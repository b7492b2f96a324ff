"""Objective values, duality gap diagnostics and iteration traces.

The central quantity is a doubly smoothed duality gap.  For smoothing
parameters beta (dual side) and gamma (primal side) it evaluates

    primal value at x
  + smoothed conjugate pairing of the coupled terms at (x, y)
  + conjugate value of the smooth terms at (zeta, omega)
  + smoothed conjugate pairing of the separable terms at x

where (zeta, omega) is a candidate dual point for the data fitting and
quadratic parts.  With beta = gamma = 0 the expression is the plain
duality gap, which is nonnegative by weak duality.  Positive beta and
gamma keep it finite before the iterates become feasible; both are
chosen as the distances of the current points to the relevant domains,
so the triplet max(gap, beta, gamma) is a valid stopping measure.
"""

import csv
import json

import numpy as np

from . import state as state_mod


def _f_value(pb, r_f):
    total = 0.0
    for j, atom in enumerate(pb.f_atoms):
        f0, f1 = pb.blocks_f.range(j)
        total += pb.cf[j] * atom.value(r_f[f0:f1])
    return total


def _g_value(pb, x):
    total = 0.0
    for i in range(pb.blocks.count):
        n0, n1 = pb.blocks.range(i)
        atom = pb.g_atoms[i]
        if atom.name == "zero":
            continue
        u = pb.Dg[n0:n1] * x[n0:n1] - pb.bg[n0:n1]
        val = atom.value(u)
        if not np.isfinite(val):
            return np.inf
        total += pb.cg[i] * val
    return total


def _h_value(pb, r_h):
    total = 0.0
    for j, atom in enumerate(pb.h_atoms):
        h0, h1 = pb.blocks_h.range(j)
        val = atom.value(r_h[h0:h1] - pb.bh[h0:h1])
        if not np.isfinite(val):
            return np.inf
        total += pb.ch[j] * val
    return total


def primal_objective(x, pb, r_f=None, r_q=None, r_h=None):
    """Primal objective at x.  Infinite outside indicator domains."""
    x = np.asarray(x, dtype=float)
    if r_f is None:
        r_f = pb.Af.matvec(x) - pb.bf
    if r_q is None:
        r_q = pb.Q.matvec(x)
    if r_h is None:
        r_h = pb.Ah.matvec(x)
    total = 0.5 * float(np.dot(x, r_q))
    total += _f_value(pb, r_f)
    g = _g_value(pb, x)
    if not np.isfinite(g):
        return np.inf
    total += g
    h = _h_value(pb, r_h)
    if not np.isfinite(h):
        return np.inf
    return total + h


def infeasibility(x, pb, r_h=None):
    """Euclidean distance of Ah x - bh to the domain of the coupled terms."""
    if not pb.has_h:
        return 0.0
    if r_h is None:
        r_h = pb.Ah.matvec(np.asarray(x, dtype=float))
    sq = 0.0
    for j, atom in enumerate(pb.h_atoms):
        h0, h1 = pb.blocks_h.range(j)
        u = r_h[h0:h1] - pb.bh[h0:h1]
        d = u - atom.project_domain(u)
        sq += float(np.dot(d, d))
    return float(np.sqrt(sq))


def gradient_dual_point(pb, r_f, r_q, rescale=True):
    """Candidate dual point (zeta, omega) built from the smooth gradients.

    zeta stacks the weighted gradients of the f atoms at the current
    residual, omega is the quadratic gradient.  When ``rescale`` is set,
    the problem has no coupled h terms and every f conjugate domain is
    star shaped around the origin, the pair is shrunk so that the
    separable conjugate domain constraint driven by u = Af' zeta + omega
    is satisfied whenever shrinking can achieve that.  Returns
    (zeta, omega, scale).
    """
    zeta = np.empty(pb.Af.n_rows)
    for j, atom in enumerate(pb.f_atoms):
        f0, f1 = pb.blocks_f.range(j)
        zeta[f0:f1] = pb.cf[j] * atom.grad(r_f[f0:f1])
    scale = 1.0
    # the shrink criterion ignores the coupled-term slack, so it only
    # certifies anything when no h terms are present
    if rescale and not pb.has_h:
        star = all(
            atom.name not in ("logsumexp", "linear") for atom in pb.f_atoms
        )
        if star:
            u = pb.Af.rmatvec(zeta) + r_q
            worst = 1.0
            usable = True
            for i in range(pb.blocks.count):
                n0, n1 = pb.blocks.range(i)
                # The separable conjugate is evaluated at -u, so the
                # domain polar must see the negated, rescaled drive.
                arg = -u[n0:n1] / (pb.cg[i] * pb.Dg[n0:n1])
                val = pb.g_atoms[i].conj_dom_support_polar(arg)
                if not np.isfinite(val):
                    usable = False
                    break
                worst = max(worst, val)
            if usable:
                scale = worst
    return zeta / scale, r_q / scale, scale


def _fconj_value(pb, zeta):
    total = 0.0
    for j, atom in enumerate(pb.f_atoms):
        f0, f1 = pb.blocks_f.range(j)
        zj = zeta[f0:f1]
        val = atom.conj_value(zj / pb.cf[j])
        if not np.isfinite(val):
            return np.inf
        total += float(np.dot(zj, pb.bf[f0:f1])) + pb.cf[j] * val
    return total


def _hconj_value(pb, y):
    total = 0.0
    for j, atom in enumerate(pb.h_atoms):
        h0, h1 = pb.blocks_h.range(j)
        yj = y[h0:h1]
        val = atom.conj_value(yj / pb.ch[j])
        if not np.isfinite(val):
            return np.inf
        total += float(np.dot(yj, pb.bh[h0:h1])) + pb.ch[j] * val
    return total


def _gconj_value(pb, s):
    total = 0.0
    for i in range(pb.blocks.count):
        n0, n1 = pb.blocks.range(i)
        d = pb.Dg[n0:n1]
        si = s[n0:n1]
        val = pb.g_atoms[i].conj_value(si / (pb.cg[i] * d))
        if not np.isfinite(val):
            return np.inf
        total += float(np.dot(si / d, pb.bg[n0:n1])) + pb.cg[i] * val
    return total


def dual_slack(pb, y, zeta, omega):
    """The vector -Ah'y - Af'zeta - omega entering the separable conjugate."""
    s = -(pb.Af.rmatvec(zeta) + omega)
    if pb.has_h:
        s -= pb.Ah.rmatvec(y)
    return s


def conj_domain_distance(pb, s):
    """Distance of the dual slack to the domain of the separable conjugate."""
    sq = 0.0
    for i in range(pb.blocks.count):
        n0, n1 = pb.blocks.range(i)
        a = pb.cg[i] * pb.Dg[n0:n1]
        si = s[n0:n1]
        proj = a * pb.g_atoms[i].project_conj_domain(si / a)
        d = si - proj
        sq += float(np.dot(d, d))
    return float(np.sqrt(sq))


def smoothing_parameters(x, y, zeta, omega, pb, r_h=None):
    """Default (beta, gamma): the two domain distances at the current points."""
    beta = infeasibility(x, pb, r_h=r_h)
    gamma = conj_domain_distance(pb, dual_slack(pb, y, zeta, omega))
    return beta, gamma


def smoothed_gap(
    x,
    y,
    zeta,
    omega,
    pb,
    beta,
    gamma,
    omega_scale=None,
    r_f=None,
    r_q=None,
    r_h=None,
):
    """Doubly smoothed duality gap at (x, y) with certificate (zeta, omega).

    ``omega`` must be a nonnegative multiple of Qx; ``omega_scale`` can
    pass that multiple explicitly, otherwise it is fitted.  With
    beta = gamma = 0 this is the plain duality gap.  Returns +inf when a
    conjugate value is infinite at the supplied points.
    """
    x = np.asarray(x, dtype=float)
    if r_f is None:
        r_f = pb.Af.matvec(x) - pb.bf
    if r_q is None:
        r_q = pb.Q.matvec(x)
    if r_h is None:
        r_h = pb.Ah.matvec(x)

    total = 0.5 * float(np.dot(x, r_q)) + _f_value(pb, r_f)
    gval = _g_value(pb, x)
    if not np.isfinite(gval):
        return np.inf
    total += gval

    if pb.has_h:
        if beta > 0.0:
            for j, atom in enumerate(pb.h_atoms):
                h0, h1 = pb.blocks_h.range(j)
                uj = r_h[h0:h1]
                yj = y[h0:h1]
                v = yj + uj / beta - pb.bh[h0:h1] / beta
                yp = atom.prox_conj(v, 1.0 / beta, pb.ch[j])
                hconj = float(np.dot(yp, pb.bh[h0:h1])) + pb.ch[j] * atom.conj_value(
                    yp / pb.ch[j]
                )
                if not np.isfinite(hconj):
                    return np.inf
                diff = yj - yp
                total += (
                    float(np.dot(uj, yp))
                    - hconj
                    - 0.5 * beta * float(np.dot(diff, diff))
                )
        else:
            hval = _h_value(pb, r_h)
            if not np.isfinite(hval):
                return np.inf
            total += hval
        hc = _hconj_value(pb, y)
        if not np.isfinite(hc):
            return np.inf
        total += hc

    # Quadratic conjugate term: 0.5 omega' pinv(Q) omega for omega = s Qx.
    if pb.has_q:
        qx = r_q
        if omega_scale is None:
            denom = float(np.dot(qx, qx))
            omega_scale = (
                float(np.dot(omega, qx)) / denom if denom > 0.0 else 0.0
            )
        total += 0.5 * omega_scale * float(np.dot(x, omega))

    fc = _fconj_value(pb, zeta)
    if not np.isfinite(fc):
        return np.inf
    total += fc

    s = dual_slack(pb, y, zeta, omega)
    if gamma > 0.0:
        for i in range(pb.blocks.count):
            n0, n1 = pb.blocks.range(i)
            si = s[n0:n1]
            xp = state_mod.prox_g_block(pb, i, x[n0:n1] + si / gamma, 1.0 / gamma)
            u = pb.Dg[n0:n1] * xp - pb.bg[n0:n1]
            gatom = pb.g_atoms[i]
            gv = pb.cg[i] * gatom.value(u) if gatom.name != "zero" else 0.0
            if not np.isfinite(gv):
                return np.inf
            diff = x[n0:n1] - xp
            total += (
                float(np.dot(si, xp)) - gv - 0.5 * gamma * float(np.dot(diff, diff))
            )
    else:
        gc = _gconj_value(pb, s)
        if not np.isfinite(gc):
            return np.inf
        total += gc
    return total


class Trace:
    """Convergence history with fixed columns."""

    COLUMNS = (
        "epoch",
        "seconds",
        "objective",
        "gap",
        "beta",
        "gamma",
        "infeasibility",
        "screened",
    )

    def __init__(self):
        self.records = []

    def append(self, **kw):
        row = tuple(float(kw.get(c, 0.0)) for c in self.COLUMNS)
        self.records.append(row)

    def column(self, name):
        k = self.COLUMNS.index(name)
        return [row[k] for row in self.records]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.COLUMNS)
            for row in self.records:
                writer.writerow(["%.17g" % v for v in row])

    def to_json(self, path):
        data = [dict(zip(self.COLUMNS, row)) for row in self.records]
        with open(path, "w") as fh:
            json.dump(data, fh, indent=1)

    def __len__(self):
        return len(self.records)
