"""Catalog of elementary convex functions ("atoms").

Every atom is a pure functional unit that answers a fixed set of queries:
value, gradient, proximal operator, proximal operator of the scaled
conjugate, gradient Lipschitz constant, conjugate value and a kink
(nonsmoothness) test.  Solvers combine atoms with per-block weights,
diagonal scalings and offsets, so atoms themselves are unweighted.

Conventions
-----------
* Coordinatewise atoms apply a scalar function to every entry of their
  input and sum the results.  They accept blocks of any dimension.
* ``prox(x, step)`` is ``argmin_p  step * f(p) + 0.5 * ||p - x||^2``.
* ``prox_conj(y, sigma, weight)`` is the proximal operator of
  ``sigma * (weight * f)^*`` evaluated at ``y``, obtained from ``prox``
  through the Moreau identity.
* Indicator atoms return ``inf`` from ``value`` outside their domain,
  up to a small feasibility tolerance.
"""

import numpy as np
from scipy import special


# Query modes understood by Atom.evaluate.
VAL = "val"
GRAD = "grad"
PROX = "prox"
PROX_CONJ = "prox_conj"
LIPSCHITZ = "lipschitz"
VAL_CONJ = "val_conj"
IS_KINK = "is_kink"

# Feasibility slack for indicator domains and conjugate domains.
FEAS_TOL = 1e-9

# Default smoothing used when a conjugate value must be approximated.
CONJ_SMOOTHING = 1e-9


class SolverError(Exception):
    """Base class for errors raised by this package."""


class CapabilityError(SolverError):
    """An atom was asked for a query it does not support."""


class KinkPolar:
    """Geometry of the subdifferential at a kink, for screening tests.

    Parameters
    ----------
    kind : str
        One of ``"linf"`` (polar support is the max norm), ``"l2"``
        (Euclidean norm), ``"neg"`` (value 0 on the nonpositive orthant,
        inf outside), ``"pos"`` (mirror image) or ``"free"`` (value 0
        everywhere).
    """

    __slots__ = ("kind",)

    def __init__(self, kind):
        self.kind = kind

    def __repr__(self):
        return "KinkPolar(%r)" % (self.kind,)


def _as_array(x):
    return np.atleast_1d(np.asarray(x, dtype=float))


class Atom:
    """Base atom.  Subclasses override the queries they support."""

    name = "?"
    coordinatewise = True
    smooth = False
    # Scalar input values at which a coordinatewise atom is nonsmooth.
    kink_values = ()

    def value(self, x):
        raise CapabilityError("atom %r does not support VAL" % self.name)

    def grad(self, x):
        raise CapabilityError("atom %r does not support GRAD" % self.name)

    def grad_scalar(self, t):
        # Per-entry derivative for coordinatewise atoms, vectorized.
        raise CapabilityError("atom %r does not support GRAD" % self.name)

    def prox(self, x, step):
        raise CapabilityError("atom %r does not support PROX" % self.name)

    def lipschitz(self):
        raise CapabilityError("atom %r does not support LIPSCHITZ" % self.name)

    def conj_value(self, y):
        return self.conj_value_smoothed(y, CONJ_SMOOTHING)

    def conj_value_smoothed(self, y, eps):
        """Value of the conjugate smoothed by ``eps/2 * ||.||^2``.

        Computed from a single prox call:  with
        ``p = prox(y / eps, 1 / eps)`` the smoothed conjugate equals
        ``<p, y> - f(p) - eps/2 * ||p||^2``.
        """
        y = _as_array(y)
        p = self.prox(y / eps, 1.0 / eps)
        return float(np.dot(p, y) - self.value(p) - 0.5 * eps * np.dot(p, p))

    def prox_conj(self, y, sigma, weight=1.0):
        """Prox of ``sigma * (weight * f)^*`` at ``y`` (Moreau identity)."""
        y = _as_array(y)
        return y - sigma * self.prox(y / sigma, weight / sigma)

    def is_kink(self, x):
        """True when every entry of ``x`` sits exactly on a kink value."""
        if not self.kink_values:
            return False
        x = _as_array(x)
        hit = np.zeros(x.shape, dtype=bool)
        for k in self.kink_values:
            hit |= x == k
        return bool(hit.all())

    def project_domain(self, x):
        """Euclidean projection onto the domain of the atom."""
        return _as_array(x).copy()

    def project_conj_domain(self, y):
        """Euclidean projection onto the domain of the conjugate."""
        raise CapabilityError(
            "atom %r does not support conjugate domain projection" % self.name
        )

    def conj_dom_support_polar(self, u):
        """Polar of the support function of ``dom f*`` evaluated at ``u``."""
        raise CapabilityError(
            "atom %r does not support conjugate domain geometry" % self.name
        )

    def kink_anchors(self):
        """Candidate screening anchors as (scalar value, KinkPolar) pairs.

        For coordinatewise atoms the anchor is the block with every entry
        equal to the scalar value; for block atoms it is interpreted by
        the atom itself (currently always the zero block).
        """
        return ()

    def evaluate(self, x, mode, step=1.0, weight=1.0):
        """Uniform dispatch used by generic code paths.

        Returns a ``(float, ndarray)`` pair.  The float carries the
        scalar answer (value, Lipschitz constant or kink flag); for
        vector-valued queries it mirrors the first buffer entry.
        """
        x = _as_array(x)
        if mode == VAL:
            return float(self.value(x)), x
        if mode == GRAD:
            g = self.grad(x)
            return float(g[0]), g
        if mode == PROX:
            p = self.prox(x, step)
            return float(p[0]), p
        if mode == PROX_CONJ:
            p = self.prox_conj(x, step, weight)
            return float(p[0]), p
        if mode == LIPSCHITZ:
            ell = float(self.lipschitz())
            return ell, np.array([ell])
        if mode == VAL_CONJ:
            return float(self.conj_value(x)), x
        if mode == IS_KINK:
            flag = 1.0 if self.is_kink(x) else 0.0
            return flag, np.array([flag])
        raise CapabilityError("unknown atom query mode %r" % (mode,))

    def __repr__(self):
        return "<atom %s>" % self.name


class Square(Atom):
    """f(x) = sum of squares.  Weight 0.5 gives half squared error."""

    name = "square"
    smooth = True

    def value(self, x):
        x = _as_array(x)
        return float(np.dot(x, x))

    def grad(self, x):
        return 2.0 * _as_array(x)

    def grad_scalar(self, t):
        return 2.0 * t

    def prox(self, x, step):
        return _as_array(x) / (1.0 + 2.0 * step)

    def lipschitz(self):
        return 2.0

    def conj_value(self, y):
        y = _as_array(y)
        return float(0.25 * np.dot(y, y))

    def project_conj_domain(self, y):
        return _as_array(y).copy()

    def conj_dom_support_polar(self, u):
        return 0.0


class Abs(Atom):
    """f(x) = sum of absolute values."""

    name = "abs"
    kink_values = (0.0,)

    def value(self, x):
        return float(np.abs(_as_array(x)).sum())

    def prox(self, x, step):
        x = _as_array(x)
        return np.sign(x) * np.maximum(np.abs(x) - step, 0.0)

    def conj_value(self, y):
        y = _as_array(y)
        if np.abs(y).max(initial=0.0) > 1.0 + FEAS_TOL:
            return np.inf
        return 0.0

    def project_conj_domain(self, y):
        return np.clip(_as_array(y), -1.0, 1.0)

    def conj_dom_support_polar(self, u):
        return float(np.abs(_as_array(u)).max(initial=0.0))

    def kink_anchors(self):
        return ((0.0, KinkPolar("linf")),)


class Linear(Atom):
    """f(x) = sum of entries."""

    name = "linear"
    smooth = True

    def value(self, x):
        return float(_as_array(x).sum())

    def grad(self, x):
        return np.ones_like(_as_array(x))

    def grad_scalar(self, t):
        return np.ones_like(t)

    def prox(self, x, step):
        return _as_array(x) - step

    def lipschitz(self):
        return 0.0

    def conj_value(self, y):
        y = _as_array(y)
        if np.abs(y - 1.0).max(initial=0.0) > FEAS_TOL:
            return np.inf
        return 0.0

    def project_conj_domain(self, y):
        return np.ones_like(_as_array(y))

    def conj_dom_support_polar(self, u):
        # dom f* is the all-ones point; the polar support is finite only
        # along the nonnegative multiples of the ones vector.
        u = _as_array(u)
        t = u.mean()
        if t < -FEAS_TOL or np.abs(u - t).max(initial=0.0) > FEAS_TOL * (1.0 + abs(t)):
            return np.inf
        return float(max(t, 0.0) * u.size)


class Log1pexp(Atom):
    """f(x) = sum of log(1 + exp(x)), the softplus function."""

    name = "log1pexp"
    smooth = True

    def value(self, x):
        x = _as_array(x)
        return float(np.logaddexp(0.0, x).sum())

    def grad(self, x):
        return special.expit(_as_array(x))

    def grad_scalar(self, t):
        return special.expit(t)

    def prox(self, x, step):
        # Solve p + step * sigmoid(p) = x per entry with a safeguarded
        # Newton iteration; the root lies in [x - step, x].
        x = _as_array(x)
        lo = x - step
        hi = x.copy()
        p = x - step * special.expit(x)
        for _ in range(100):
            s = special.expit(p)
            resid = p + step * s - x
            if np.abs(resid).max(initial=0.0) <= 1e-14 * max(
                1.0, np.abs(x).max(initial=0.0), step
            ):
                break
            hi = np.where(resid > 0.0, p, hi)
            lo = np.where(resid < 0.0, p, lo)
            p = p - resid / (1.0 + step * s * (1.0 - s))
            out = (p <= lo) | (p >= hi)
            p = np.where(out, 0.5 * (lo + hi), p)
        return p

    def lipschitz(self):
        return 0.25

    def conj_value(self, y):
        y = _as_array(y)
        if y.min(initial=1.0) < -FEAS_TOL or y.max(initial=0.0) > 1.0 + FEAS_TOL:
            return np.inf
        y = np.clip(y, 0.0, 1.0)
        return float((special.xlogy(y, y) + special.xlogy(1.0 - y, 1.0 - y)).sum())

    def project_conj_domain(self, y):
        return np.clip(_as_array(y), 0.0, 1.0)

    def conj_dom_support_polar(self, u):
        u = _as_array(u)
        if u.min(initial=0.0) < -FEAS_TOL:
            return np.inf
        return float(np.maximum(u, 0.0).max(initial=0.0))


def _project_simplex(y):
    # Euclidean projection onto the probability simplex (sort algorithm).
    y = _as_array(y)
    u = np.sort(y)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, y.size + 1)
    cond = u - css / k > 0.0
    rho = k[cond][-1]
    theta = css[rho - 1] / rho
    return np.maximum(y - theta, 0.0)


class Logsumexp(Atom):
    """f(x) = log of the sum of exp(x_l) over the whole block."""

    name = "logsumexp"
    coordinatewise = False
    smooth = True

    def value(self, x):
        return float(special.logsumexp(_as_array(x)))

    def grad(self, x):
        return special.softmax(_as_array(x))

    def lipschitz(self):
        return 1.0

    def conj_value(self, y):
        y = _as_array(y)
        if y.min(initial=0.0) < -FEAS_TOL or abs(y.sum() - 1.0) > FEAS_TOL * y.size:
            return np.inf
        y = np.maximum(y, 0.0)
        return float(special.xlogy(y, y).sum())

    def project_conj_domain(self, y):
        return _project_simplex(y)

    def conj_dom_support_polar(self, u):
        u = _as_array(u)
        if u.min(initial=0.0) < -FEAS_TOL:
            return np.inf
        return float(np.maximum(u, 0.0).sum())


class Norm2(Atom):
    """f(x) = Euclidean norm of the whole block."""

    name = "norm2"
    coordinatewise = False

    def value(self, x):
        return float(np.linalg.norm(_as_array(x)))

    def prox(self, x, step):
        x = _as_array(x)
        nrm = np.linalg.norm(x)
        if nrm <= step:
            return np.zeros_like(x)
        return (1.0 - step / nrm) * x

    def conj_value(self, y):
        y = _as_array(y)
        if np.linalg.norm(y) > 1.0 + FEAS_TOL:
            return np.inf
        return 0.0

    def project_conj_domain(self, y):
        y = _as_array(y)
        nrm = np.linalg.norm(y)
        if nrm <= 1.0:
            return y.copy()
        return y / nrm

    def conj_dom_support_polar(self, u):
        return float(np.linalg.norm(_as_array(u)))

    def is_kink(self, x):
        return bool((_as_array(x) == 0.0).all())

    def kink_anchors(self):
        return ((0.0, KinkPolar("l2")),)


class Box01(Atom):
    """Indicator of the unit box [0, 1] per entry."""

    name = "box01"
    kink_values = (0.0, 1.0)

    def value(self, x):
        x = _as_array(x)
        if x.min(initial=0.0) < -FEAS_TOL or x.max(initial=1.0) > 1.0 + FEAS_TOL:
            return np.inf
        return 0.0

    def prox(self, x, step):
        return np.clip(_as_array(x), 0.0, 1.0)

    def conj_value(self, y):
        y = _as_array(y)
        return float(np.maximum(y, 0.0).sum())

    def project_domain(self, x):
        return np.clip(_as_array(x), 0.0, 1.0)

    def project_conj_domain(self, y):
        return _as_array(y).copy()

    def conj_dom_support_polar(self, u):
        return 0.0

    def kink_anchors(self):
        return ((0.0, KinkPolar("neg")), (1.0, KinkPolar("pos")))


class Nonneg(Atom):
    """Indicator of the nonnegative orthant."""

    name = "nonneg"
    kink_values = (0.0,)

    def value(self, x):
        x = _as_array(x)
        if x.min(initial=0.0) < -FEAS_TOL:
            return np.inf
        return 0.0

    def prox(self, x, step):
        return np.maximum(_as_array(x), 0.0)

    def conj_value(self, y):
        y = _as_array(y)
        if y.max(initial=0.0) > FEAS_TOL:
            return np.inf
        return 0.0

    def project_domain(self, x):
        return np.maximum(_as_array(x), 0.0)

    def project_conj_domain(self, y):
        return np.minimum(_as_array(y), 0.0)

    def conj_dom_support_polar(self, u):
        u = _as_array(u)
        if u.max(initial=0.0) > FEAS_TOL:
            return np.inf
        return 0.0

    def kink_anchors(self):
        return ((0.0, KinkPolar("neg")),)


class Nonpos(Atom):
    """Indicator of the nonpositive orthant."""

    name = "nonpos"
    kink_values = (0.0,)

    def value(self, x):
        x = _as_array(x)
        if x.max(initial=0.0) > FEAS_TOL:
            return np.inf
        return 0.0

    def prox(self, x, step):
        return np.minimum(_as_array(x), 0.0)

    def conj_value(self, y):
        y = _as_array(y)
        if y.min(initial=0.0) < -FEAS_TOL:
            return np.inf
        return 0.0

    def project_domain(self, x):
        return np.minimum(_as_array(x), 0.0)

    def project_conj_domain(self, y):
        return np.maximum(_as_array(y), 0.0)

    def conj_dom_support_polar(self, u):
        u = _as_array(u)
        if u.min(initial=0.0) < -FEAS_TOL:
            return np.inf
        return 0.0

    def kink_anchors(self):
        return ((0.0, KinkPolar("pos")),)


class Eq(Atom):
    """Indicator of the origin; models equality constraints."""

    name = "eq"
    kink_values = (0.0,)

    def value(self, x):
        x = _as_array(x)
        if np.abs(x).max(initial=0.0) > FEAS_TOL:
            return np.inf
        return 0.0

    def prox(self, x, step):
        return np.zeros_like(_as_array(x))

    def conj_value(self, y):
        return 0.0

    def project_domain(self, x):
        return np.zeros_like(_as_array(x))

    def project_conj_domain(self, y):
        return _as_array(y).copy()

    def conj_dom_support_polar(self, u):
        return 0.0

    def kink_anchors(self):
        return ((0.0, KinkPolar("free")),)


class Zero(Atom):
    """The zero function.  Useful for unpenalized blocks."""

    name = "zero"
    smooth = True

    def value(self, x):
        return 0.0

    def grad(self, x):
        return np.zeros_like(_as_array(x))

    def grad_scalar(self, t):
        return np.zeros_like(t)

    def prox(self, x, step):
        return _as_array(x).copy()

    def lipschitz(self):
        return 0.0

    def conj_value(self, y):
        y = _as_array(y)
        if np.abs(y).max(initial=0.0) > FEAS_TOL:
            return np.inf
        return 0.0

    def project_conj_domain(self, y):
        return np.zeros_like(_as_array(y))

    def conj_dom_support_polar(self, u):
        u = _as_array(u)
        if np.abs(u).max(initial=0.0) > FEAS_TOL:
            return np.inf
        return 0.0


CATALOG = {
    atom.name: atom
    for atom in (
        Square(),
        Abs(),
        Linear(),
        Log1pexp(),
        Logsumexp(),
        Norm2(),
        Box01(),
        Nonneg(),
        Nonpos(),
        Eq(),
        Zero(),
    )
}


def get_atom(name):
    """Look up an atom by catalog name."""
    try:
        return CATALOG[name]
    except KeyError:
        raise CapabilityError("unknown atom name %r" % (name,)) from None
