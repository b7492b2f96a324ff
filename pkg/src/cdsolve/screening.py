"""Safe elimination of blocks that are provably fixed at a kink.

Applicable to problems without coupled h terms.  A duality gap value at
a rescaled gradient based dual point bounds the distance between that
point and the optimal dual point.  If, over the whole uncertainty ball,
the drive on a block stays strictly inside the subdifferential of its
separable term at a kink anchor, the optimal block value equals the
anchor and the block can be frozen for the rest of the run.

With the smooth part built from gradient Lipschitz constants L_j
(weighted) and the largest eigenvalue of Q, the dual distance bound is

    || dual error ||  <=  r  =  sqrt(2 * gap * L_smooth),
    L_smooth = max(max_j cf_j L_j, lambda_max(Q)).

For the common special cases this reproduces the classical safe radii:
sqrt(2 * gap) for half squared error rows, sqrt(gap / 2) for logistic
rows.  The drive on block i is perturbed by at most
r * sqrt(||Af col||^2 + [Q present]) per coordinate.
"""

import numpy as np

from . import diagnostics
from .atoms import CapabilityError
from .model import ValidationError, operator_radius, sym_radius


class ScreeningContext:
    """Precomputed geometry plus the active mask for one problem."""

    def __init__(self, pb):
        if pb.has_h:
            raise ValidationError(
                "screening requires a problem without coupled h terms"
            )
        self.pb = pb
        I = pb.blocks.count
        self.active = np.ones(I, dtype=bool)

        lip = 0.0
        try:
            for j, atom in enumerate(pb.f_atoms):
                lip = max(lip, pb.cf[j] * atom.lipschitz())
        except CapabilityError:
            raise ValidationError(
                "screening needs gradient Lipschitz constants for all f atoms"
            ) from None
        if pb.has_q:
            q = pb.Q.to_scipy()
            lip = max(
                lip,
                float(
                    np.sqrt(operator_radius(lambda v: q @ v, lambda v: q @ v, pb.N))
                ),
            )
        self.L_smooth = lip

        # Per-coordinate squared column norms of Af, plus one when the
        # quadratic part can also carry dual error.
        col_sq = np.zeros(pb.N)
        for c in range(pb.N):
            _, vals = pb.Af.col(c)
            if vals.size:
                col_sq[c] = float(np.dot(vals, vals))
        q_ind = 1.0 if pb.has_q else 0.0

        self.anchors = []
        self.coord_bound = []
        self.block_bound = []
        af = pb.Af.to_scipy()
        for i in range(I):
            n0, n1 = pb.blocks.range(i)
            d = pb.Dg[n0:n1]
            entries = []
            for kappa, polar in pb.g_atoms[i].kink_anchors():
                anchor = (kappa + pb.bg[n0:n1]) / d
                entries.append((polar.kind, anchor))
            self.anchors.append(entries)
            if entries:
                self.coord_bound.append(
                    np.sqrt(col_sq[n0:n1] + q_ind) / (pb.cg[i] * np.abs(d))
                )
            else:
                self.coord_bound.append(None)
            need_l2 = any(kind == "l2" for kind, _ in entries)
            if need_l2:
                sub = af[:, n0:n1]
                gram = (sub.T @ sub).toarray()
                top = np.sqrt(sym_radius(gram) + q_ind)
                self.block_bound.append(
                    top / (pb.cg[i] * float(np.abs(d).min()))
                )
            else:
                self.block_bound.append(0.0)

    def radius(self, x, r_f, r_q, zeta, omega, scale):
        """Dual uncertainty radius from the plain duality gap, or None.

        The gap enters through a floating point evaluation, so a small
        allowance proportional to the objective magnitude is added before
        taking the square root.  Otherwise a gap that rounds to zero
        would certify coordinates whose true drive sits exactly on the
        boundary of the test.
        """
        pb = self.pb
        gap = diagnostics.smoothed_gap(
            x,
            np.zeros(0),
            zeta,
            omega,
            pb,
            0.0,
            0.0,
            omega_scale=1.0 / scale,
            r_f=r_f,
            r_q=r_q,
        )
        if not np.isfinite(gap):
            return None
        obj = diagnostics.primal_objective(x, pb, r_f=r_f, r_q=r_q)
        slack = 64.0 * np.finfo(float).eps * (1.0 + abs(obj) + abs(gap))
        return float(
            np.sqrt(2.0 * (max(gap, 0.0) + slack) * self.L_smooth)
        )

    def find_screenable(self, x, r_f, r_q, zeta, omega, scale, active=None):
        """Blocks whose optimal value is provably their kink anchor.

        Returns a list of (block index, anchor vector) pairs; does not
        modify any state.
        """
        pb = self.pb
        if active is None:
            active = self.active
        r = self.radius(x, r_f, r_q, zeta, omega, scale)
        if r is None:
            return []
        u = pb.Af.rmatvec(zeta) + omega
        found = []
        for i in np.nonzero(active)[0]:
            entries = self.anchors[i]
            if not entries:
                continue
            n0, n1 = pb.blocks.range(i)
            drive = -u[n0:n1] / (pb.cg[i] * pb.Dg[n0:n1])
            sb = self.coord_bound[i]
            for kind, anchor in entries:
                if kind == "linf":
                    ok = float(np.max(np.abs(drive) + r * sb)) < 1.0
                elif kind == "l2":
                    ok = (
                        float(np.linalg.norm(drive))
                        + r * self.block_bound[i]
                        < 1.0
                    )
                elif kind == "neg":
                    ok = float(np.max(drive + r * sb)) < 0.0
                elif kind == "pos":
                    ok = float(np.min(drive - r * sb)) > 0.0
                elif kind == "free":
                    ok = True
                else:
                    ok = False
                if ok:
                    found.append((int(i), anchor.copy()))
                    break
        return found

    def screen_pass(self, st, zeta, omega, scale):
        """Apply one screening round to a solver state; returns the count."""
        found = self.find_screenable(
            st.x, st.r_f, st.r_q, zeta, omega, scale, self.active
        )
        for i, anchor in found:
            st.apply_primal_update(i, anchor)
            self.active[i] = False
        return len(found)
