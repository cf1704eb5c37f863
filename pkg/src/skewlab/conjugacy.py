"""The semi-conjugacy onto the unperturbed product, solved as a hyperbolic
series.

Writing the fiber maps as f_x = A + g_x with displacement g_x along e_s, the
intertwining identity (shift x L) o H = H o F for H(x, y) = (x, y + u_x(y))
becomes u_x = A^{-1}(g_x + u_{shift x} o f_x).  Splitting along the
eigenbasis of A gives two absolutely convergent series:

* e_u-component: sum_{k>=0} lam_u^{-(k+1)} g^u at the forward fiber orbit.
  For the rank-one e_s shear the displacement has no e_u component, so this
  series vanishes term by term and the solver returns it as exact zero.
* e_s-component: -sum_{k>=1} lam_s^{k-1} g^s at the backward fiber orbit,
  truncated at N with tail bound sup|g| lam_s^N / (1 - lam_s).

The evaluator is lazy: series are summed along the exact orbit of each
queried point, so there is no interpolation error and accuracy is governed
by N alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .skew import Point, SkewSystem
from .torus import torus_dist, torus_sub, wrap
from .words import Word, WordBatch

BISECTION_TOL = 1e-12


class SemiConjugacy:
    """Lazy evaluator for the fiber displacement u with H_x = id + u_x."""

    def __init__(self, system: SkewSystem, truncation: int, grid_resolution=1e-4):
        if truncation < 1:
            raise ValidationError("truncation must be >= 1")
        self.system = system
        self.truncation = int(truncation)
        self.grid_resolution = float(grid_resolution)
        aut = system.fibers.automorphism
        rate = max(1.0 / aut.lam_u, aut.lam_s)
        sup_g = system.fibers.displacement_sup
        self.displacement_bound = sup_g / (1.0 - rate)
        self.error_bound = (sup_g / (1.0 - rate)) * rate ** self.truncation

    # -- series evaluation -----------------------------------------------------

    def displacement_scalar_batch(self, words: WordBatch, Y, offset=0):
        """e_s-coefficient of u at (word row, fiber row); e_u part is zero.

        ``offset`` shifts all words before evaluation.  Needs ``truncation``
        backward symbols from the cursor.
        """
        sys = self.system
        aut = sys.fibers.automorphism
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        back, _ = _batch_capacity(words, offset)
        # the depth scan at the deepest step needs m_in symbols of margin
        if back < self.truncation + sys.fibers.m_in:
            raise ValidationError(
                "requested truncation exceeds the stored word window",
                {"truncation": self.truncation, "available": back,
                 "margin": sys.fibers.m_in})
        lam_s = aut.lam_s
        acc = np.zeros(Y.shape[0])
        y = Y
        weight = 1.0 / lam_s  # lam_s^{k-1} at k = 1 after multiply below
        for k in range(1, self.truncation + 1):
            beta = sys.amplitudes_at(words, offset - k)
            y = sys.fibers.inverse_batch(beta, y)
            weight *= lam_s
            acc -= weight * beta * sys.fibers.psi(y)
        return acc

    def displacement(self, p: Point):
        """u at a point, as a Cartesian 2-vector (exactly along e_s)."""
        wb = WordBatch(p.word.symbols[None, :], pos=p.word.pos,
                       periodic=p.word.periodic)
        s = self.displacement_scalar_batch(wb, p.y[None, :])[0]
        return s * self.system.fibers.automorphism.e_s

    def apply_batch(self, words: WordBatch, Y, offset=0):
        """H on fiber rows: y + u(y) (words are unchanged by H)."""
        s = self.displacement_scalar_batch(words, Y, offset)
        return wrap(np.atleast_2d(Y) + s[:, None] *
                    self.system.fibers.automorphism.e_s[None, :])

    def apply(self, p: Point) -> Point:
        wb = WordBatch(p.word.symbols[None, :], pos=p.word.pos,
                       periodic=p.word.periodic)
        return Point(p.word, self.apply_batch(wb, p.y[None, :])[0])

    # -- inversion along center leaves ------------------------------------------

    def leaf_equation_batch(self, words: WordBatch, Y_target, t, offset=0):
        """phi(t) = t + u^s(target + t e_s); roots give H^{-1} on the leaf."""
        e_s = self.system.fibers.automorphism.e_s
        pts = wrap(np.atleast_2d(Y_target) + t[:, None] * e_s[None, :])
        return t + self.displacement_scalar_batch(words, pts, offset)

    def fiber_inverse_batch(self, words: WordBatch, Y_target, offset=0,
                            tol=BISECTION_TOL):
        """Solve H_x(w) = y per row by bisection along the center leaf.

        Every preimage lies on the leaf {y + t e_s} with |t| bounded by the
        displacement bound; the bracket endpoints have opposite signs, so
        bisection always converges.
        """
        Y_target = np.atleast_2d(np.asarray(Y_target, dtype=float))
        B = Y_target.shape[0]
        T = self.displacement_bound * 1.5 + 1e-9
        lo = np.full(B, -T)
        hi = np.full(B, T)
        flo = self.leaf_equation_batch(words, Y_target, lo, offset)
        if np.any(flo > 0):
            raise ValidationError("leaf bracket failed at the lower end")
        iters = int(np.ceil(np.log2(2 * T / tol)))
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            fm = self.leaf_equation_batch(words, Y_target, mid, offset)
            neg = fm < 0
            lo = np.where(neg, mid, lo)
            hi = np.where(neg, hi, mid)
        t = 0.5 * (lo + hi)
        e_s = self.system.fibers.automorphism.e_s
        return wrap(Y_target + t[:, None] * e_s[None, :])


def _batch_capacity(words: WordBatch, offset):
    if words.periodic:
        big = 2 ** 62
        return big, big
    pos = words.pos + offset
    return pos, words.symbols.shape[1] - 1 - pos


def solve_semiconjugacy(s: SkewSystem, N: int, grid=None) -> SemiConjugacy:
    """Construct the lazy series evaluator at truncation N.

    ``grid`` sets the default leaf-scan resolution for preimage sweeps.
    """
    res = 1e-4 if grid is None else 1.0 / float(grid)
    return SemiConjugacy(s, N, grid_resolution=res)


def intertwining_residual(h: SemiConjugacy, s: SkewSystem, points) -> float:
    """max over samples of d(H(F(p)), (shift x L)(H(p)))."""
    return float(np.max(intertwining_residuals(h, s, points)))


def intertwining_residuals(h: SemiConjugacy, s: SkewSystem, points):
    """Per-point residuals of the intertwining identity (fiber distance;
    the base coordinates agree exactly)."""
    out = np.empty(len(points))
    A = s.fibers.automorphism.matrix_f
    for i, p in enumerate(points):
        wb = WordBatch(p.word.symbols[None, :], pos=p.word.pos,
                       periodic=p.word.periodic)
        beta = s.amplitudes_at(wb, 0)
        fy = s.fibers.map_batch(beta, p.y[None, :])
        lhs = h.apply_batch(wb, fy, offset=1)[0]
        hy = h.apply_batch(wb, p.y[None, :], offset=0)[0]
        rhs = wrap(A @ hy)
        out[i] = torus_dist(lhs, rhs)
    return out


@dataclass
class PreimageScan:
    """All solutions of H_x(w) = y found along the center leaf through y."""

    points: list
    roots_t: np.ndarray
    diameter: float
    bracket_count: int = field(default=0)


def preimage_scan(h: SemiConjugacy, s: SkewSystem, z: Point,
                  leaf_resolution=None) -> PreimageScan:
    """Bracket every preimage of z under H on the fiber over z's base word.

    H is the identity on the base and displaces fibers only along e_s, so
    H^{-1}(z) lies on the center leaf {y_z + t e_s} with |t| bounded by the
    displacement bound.  The sweep brackets sign changes of
    phi(t) = t + u^s(y_z + t e_s) at ``leaf_resolution`` and bisects each
    bracket; the spread of the roots is the injectivity defect at z.
    """
    res = leaf_resolution if leaf_resolution is not None else h.grid_resolution
    T = h.displacement_bound * 1.5 + 1e-9
    n = max(8, int(np.ceil(2 * T / res)) + 1)
    t_grid = np.linspace(-T, T, n)
    wb = WordBatch(np.broadcast_to(z.word.symbols, (n, z.word.symbols.size)),
                   pos=z.word.pos, periodic=z.word.periodic)
    vals = h.leaf_equation_batch(wb, np.broadcast_to(z.y, (n, 2)), t_grid)
    if vals[0] > 0 or vals[-1] < 0:
        raise ValidationError("leaf sweep found no bracket: H not surjective "
                              "onto the leaf at this resolution")
    sign_change = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) <= 0)[0]
    roots = []
    for i in sign_change:
        lo, hi = t_grid[i], t_grid[i + 1]
        flo = vals[i]
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            one = WordBatch(z.word.symbols[None, :], pos=z.word.pos,
                            periodic=z.word.periodic)
            fm = h.leaf_equation_batch(one, z.y[None, :], np.array([mid]))[0]
            if np.sign(fm) == np.sign(flo) or fm == 0.0:
                lo, flo = mid, fm
            else:
                hi = mid
        roots.append(0.5 * (lo + hi))
    roots = np.array(sorted(set(roots)))
    e_s = s.fibers.automorphism.e_s
    pts = [Point(z.word, wrap(z.y + t * e_s)) for t in roots]
    diam = float(roots.max() - roots.min()) if roots.size else 0.0
    return PreimageScan(pts, roots, diam, bracket_count=int(sign_change.size))
