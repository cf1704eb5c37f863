"""Torus arithmetic, the linear hyperbolic automorphism, and the deformed
fiber family.

The fiber maps are rank-one shears of a hyperbolic toral automorphism A:

    f_x(y) = A y + beta(x) * psi(y) * e_s   (mod Z^2),

where e_s is the contracting eigendirection of A, psi(y) = chi(|y - c|) *
((y - c) . e_s) is a smooth displacement supported in a small ball around
the common fixed point c, and the amplitude beta(x) ramps up with the depth
to which the base word matches the distinguished fixed symbol.  The shear
preserves the line field span(e_s) exactly, so the center lamination of the
skew-product is the linear e_s foliation, and the least backward expansion
rate along it is available in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, ValidationError
from .words import Word

NEWTON_TOL = 1e-13
NEWTON_MAXITER = 60


# ---------------------------------------------------------------------------
# flat torus helpers


def wrap(y):
    """Representative in [0, 1)^2 (vectorized)."""
    return np.mod(y, 1.0)


def torus_sub(a, b):
    """Shortest representative of a - b, componentwise in [-1/2, 1/2)."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return d - np.round(d)


def torus_dist(a, b):
    d = torus_sub(a, b)
    return np.sqrt(np.sum(d * d, axis=-1))


# ---------------------------------------------------------------------------
# the linear automorphism


@dataclass
class ToralAutomorphism:
    """Hyperbolic integer matrix acting on the 2-torus, with eigendata."""

    matrix: np.ndarray
    lam_u: float
    lam_s: float
    e_u: np.ndarray
    e_s: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.int64)
        self.matrix_f = self.matrix.astype(float)
        self.inverse_f = np.linalg.inv(self.matrix_f)
        # dual basis rows: coefficient extraction v = cu*e_u + cs*e_s
        self._dual = np.linalg.inv(np.column_stack([self.e_u, self.e_s]))

    def coeff_s(self, v):
        """e_s-coefficient of v in the eigenbasis (vectorized over rows)."""
        return np.asarray(v) @ self._dual[1]

    def coeff_u(self, v):
        return np.asarray(v) @ self._dual[0]

    def to_json(self):
        return {"matrix": self.matrix.tolist()}


def build_cat_map(matrix) -> ToralAutomorphism:
    """Validate and eigendecompose an integer hyperbolic torus matrix.

    Requires |det| = 1, real distinct eigenvalues off the unit circle, and an
    orientation with 0 < lam_s < 1 < lam_u (the deformed family is built on
    the positive branch).
    """
    M = np.asarray(matrix)
    if M.shape != (2, 2) or not np.issubdtype(np.asarray(matrix).dtype, np.integer):
        M = np.asarray(matrix, dtype=np.float64)
        if not np.allclose(M, np.round(M)):
            raise ValidationError("torus matrix must have integer entries")
        M = np.round(M).astype(np.int64)
    else:
        M = M.astype(np.int64)
    det = int(round(np.linalg.det(M.astype(float))))
    if abs(det) != 1:
        raise ValidationError("matrix must have determinant +-1", {"det": det})
    tr = int(M[0, 0] + M[1, 1])
    disc = tr * tr - 4 * det
    if disc <= 0 or (1 - tr + det) == 0 or (1 + tr + det) == 0:
        raise ValidationError("matrix is not hyperbolic",
                              {"trace": tr, "det": det})
    sq = math.sqrt(disc)
    lam_u = (tr + sq) / 2.0
    lam_s = (tr - sq) / 2.0
    if not (lam_u > 1.0 and 0.0 < lam_s < 1.0):
        raise ValidationError(
            "eigenvalues must satisfy 0 < lam_s < 1 < lam_u",
            {"lam_u": lam_u, "lam_s": lam_s})

    def unit_eigvec(lam):
        A = M.astype(float) - lam * np.eye(2)
        # kernel direction of a rank-1 matrix
        v = np.array([A[0, 1], -A[0, 0]])
        if np.linalg.norm(v) < 1e-12:
            v = np.array([A[1, 1], -A[1, 0]])
        v = v / np.linalg.norm(v)
        if v[0] < 0 or (v[0] == 0 and v[1] < 0):
            v = -v
        return v

    e_u, e_s = unit_eigvec(lam_u), unit_eigvec(lam_s)
    for lam, vec in ((lam_u, e_u), (lam_s, e_s)):
        if np.max(np.abs(M.astype(float) @ vec - lam * vec)) > 1e-12:
            raise ValidationError("eigenvector residual too large")
    return ToralAutomorphism(M, float(lam_u), float(lam_s), e_u, e_s)


# ---------------------------------------------------------------------------
# radial profile of the shear


class RadialProfile:
    """C^inf taper chi: [0, 1] -> [0, 1] with chi(0) = 1, support in [0, 1].

    Shape: chi(u) = D(u) / (1 + sharpness * u^2), where D is 1 minus a smooth
    step ramping on [taper_start, 1].  The rational factor drops early so the
    leaf profile u * chi(u) stays shallow; the slope d/du [u chi(u)] is then
    bounded below by about -0.32, which keeps the sheared map invertible for
    center rates up to lam_s + beta ~ 1.2 and a bit beyond.
    """

    def __init__(self, sharpness=16.0, taper_start=0.15):
        self.sharpness = float(sharpness)
        self.taper_start = float(taper_start)
        if not 0.0 < self.taper_start < 1.0:
            raise ValidationError("taper_start must lie in (0, 1)")

    @staticmethod
    def _bump(v):
        out = np.zeros_like(v)
        m = v > 0
        out[m] = np.exp(-1.0 / v[m])
        return out

    def _step(self, u):
        v = np.clip((u - self.taper_start) / (1.0 - self.taper_start), 0.0, 1.0)
        hv, hw = self._bump(v), self._bump(1.0 - v)
        return hv / (hv + hw)

    def _step_deriv(self, u):
        v = (u - self.taper_start) / (1.0 - self.taper_start)
        inside = (v > 0) & (v < 1)
        v = np.clip(v, 1e-12, 1 - 1e-12)
        hv, hw = self._bump(v), self._bump(1.0 - v)
        dv = hv / v ** 2
        dw = hw / (1.0 - v) ** 2
        d = (dv * hw + hv * dw) / (hv + hw) ** 2
        return np.where(inside, d / (1.0 - self.taper_start), 0.0)

    def chi(self, u):
        u = np.asarray(u, dtype=float)
        c = (1.0 - self._step(u)) / (1.0 + self.sharpness * u * u)
        return np.where(u >= 1.0, 0.0, c)

    def dchi(self, u):
        u = np.asarray(u, dtype=float)
        rat = 1.0 / (1.0 + self.sharpness * u * u)
        drat = -2.0 * self.sharpness * u * rat * rat
        d = drat * (1.0 - self._step(u)) - rat * self._step_deriv(u)
        return np.where(u >= 1.0, 0.0, d)

    def leaf_slope(self, u):
        """d/du [u * chi(u)]: radial slope of the displacement along e_s."""
        u = np.asarray(u, dtype=float)
        return self.chi(u) + u * self.dchi(u)

    def _golden_refine(self, fn, lo, hi, iters=80):
        g = (math.sqrt(5.0) - 1.0) / 2.0
        a, b = lo, hi
        c, d = b - g * (b - a), a + g * (b - a)
        fc, fd = fn(c), fn(d)
        for _ in range(iters):
            if fc >= fd:
                b, d, fd = d, c, fc
                c = b - g * (b - a)
                fc = fn(c)
            else:
                a, c, fc = c, d, fd
                d = a + g * (b - a)
                fd = fn(d)
        return (a + b) / 2.0, max(fc, fd)

    def sup_leaf_slope(self, grid=20001):
        """Numerical supremum of the radial slope (grid + golden-section).

        Equals 1, attained at u = 0: the taper is nonincreasing with
        chi(0) = 1, so u*chi' + chi <= chi <= 1.
        """
        u = np.linspace(0.0, 1.0, grid)
        s = self.leaf_slope(u)
        i = int(np.argmax(s))
        lo, hi = u[max(i - 1, 0)], u[min(i + 1, grid - 1)]
        _, val = self._golden_refine(lambda t: float(self.leaf_slope(np.array([t]))[0]), lo, hi)
        return max(float(s[i]), val)

    def min_leaf_slope(self, grid=20001):
        u = np.linspace(0.0, 1.0, grid)
        s = self.leaf_slope(u)
        i = int(np.argmin(s))
        lo, hi = u[max(i - 1, 0)], u[min(i + 1, grid - 1)]
        _, val = self._golden_refine(lambda t: -float(self.leaf_slope(np.array([t]))[0]), lo, hi)
        return min(float(s[i]), -val)

    def max_height(self, grid=20001):
        """sup_u u * chi(u): the displacement amplitude per unit bump radius."""
        u = np.linspace(0.0, 1.0, grid)
        s = u * self.chi(u)
        i = int(np.argmax(s))
        lo, hi = u[max(i - 1, 0)], u[min(i + 1, grid - 1)]
        _, val = self._golden_refine(lambda t: float(t * self.chi(np.array([t]))[0]), lo, hi)
        return max(float(s[i]), val)


# ---------------------------------------------------------------------------
# the fiber family


@dataclass
class FiberDiagnostics:
    slope_sup: float
    slope_min: float
    invertibility_margin: float
    fixed_point_ok: bool
    lambda_c: float
    displacement_sup: float


class FiberFamily:
    """Parameterized family of torus diffeomorphisms over the base subshift.

    The amplitude schedule is piecewise affine in the depth m(x) to which the
    base word matches the fixed symbol around coordinate 0:

        beta(x) = amplitude_max * clip((m(x) - m_out) / (m_in - m_out), 0, 1)

    so beta is locally constant (continuous on the shift space) and takes
    finitely many values.  Outside the depth-m_out cylinder the map is the
    unperturbed automorphism; on the depth-m_in cylinder it is the fully
    deformed map, whose center rate at the fixed point is
    lambda_c = lam_s + amplitude_max > 1.
    """

    def __init__(self, automorphism: ToralAutomorphism, fixed_point=(0.0, 0.0),
                 bump_radius=0.15, amplitude_max=None, lambda_c=None,
                 m_out=1, m_in=2, fixed_symbol=0, profile=None):
        self.automorphism = automorphism
        self.fixed_point = np.asarray(fixed_point, dtype=float)
        self.bump_radius = float(bump_radius)
        self.m_out = int(m_out)
        self.m_in = int(m_in)
        self.fixed_symbol = int(fixed_symbol)
        self.profile = profile if profile is not None else RadialProfile()
        if amplitude_max is None:
            if lambda_c is None:
                raise ValidationError("give amplitude_max or lambda_c")
            amplitude_max = float(lambda_c) - automorphism.lam_s
        self.amplitude_max = float(amplitude_max)
        self.lambda_c = automorphism.lam_s + self.amplitude_max

        if not 0.0 < self.bump_radius < 0.25:
            raise ValidationError("bump_radius must lie in (0, 1/4)",
                                  {"bump_radius": self.bump_radius})
        if not self.m_out < self.m_in:
            raise ValidationError("need m_out < m_in",
                                  {"m_out": self.m_out, "m_in": self.m_in})
        if self.m_out < 0:
            raise ValidationError("m_out must be nonnegative")
        if self.amplitude_max < 0:
            raise ValidationError("amplitude_max must be nonnegative")
        if self.amplitude_max > 0 and not 1.0 < self.lambda_c < self.automorphism.lam_u:
            raise ValidationError("need 1 < lambda_c < lam_u",
                                  {"lambda_c": self.lambda_c,
                                   "lam_u": self.automorphism.lam_u})
        fp = wrap(self.automorphism.matrix_f @ self.fixed_point)
        if torus_dist(fp, wrap(self.fixed_point)) > 1e-12:
            raise ValidationError("fixed_point is not fixed by the automorphism",
                                  {"fixed_point": self.fixed_point.tolist()})
        # cached bounds used by solvers
        self.displacement_sup = self.amplitude_max * self.bump_radius * self.profile.max_height()

    # -- amplitude schedule --------------------------------------------------

    def amplitude_of_depth(self, m):
        t = (np.asarray(m, dtype=float) - self.m_out) / (self.m_in - self.m_out)
        return self.amplitude_max * np.clip(t, 0.0, 1.0)

    def amplitude(self, x: Word):
        return float(self.amplitude_of_depth(x.match_depth(self.fixed_symbol, self.m_in)))

    # -- displacement field ---------------------------------------------------

    def _local(self, y):
        w = torus_sub(y, self.fixed_point)
        r = np.sqrt(np.sum(w * w, axis=-1))
        return w, r

    def psi(self, y):
        """Scalar displacement profile: chi(|y-c|/rho) * ((y-c) . e_s)."""
        w, r = self._local(y)
        s = w @ self.automorphism.e_s
        return self.profile.chi(r / self.bump_radius) * s

    def psi_slope_es(self, y):
        """Directional derivative of psi along e_s (controls the center rate)."""
        w, r = self._local(y)
        s = w @ self.automorphism.e_s
        u = r / self.bump_radius
        chi = self.profile.chi(u)
        dchi = self.profile.dchi(u)
        with np.errstate(invalid="ignore", divide="ignore"):
            radial = np.where(r > 0, dchi * s * s / (r * self.bump_radius), 0.0)
        return radial + chi

    def grad_psi(self, y):
        """Gradient of psi (vectorized, shape like y)."""
        w, r = self._local(y)
        s = w @ self.automorphism.e_s
        u = r / self.bump_radius
        chi = self.profile.chi(u)
        dchi = self.profile.dchi(u)
        with np.errstate(invalid="ignore", divide="ignore"):
            coef = np.where(r > 0, dchi * s / (r * self.bump_radius), 0.0)
        return coef[..., None] * w + chi[..., None] * self.automorphism.e_s

    # -- the maps -------------------------------------------------------------

    def map_batch(self, beta, y):
        """f_x(y) for a batch: rows of y, amplitudes beta (scalar or (B,))."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        beta = np.broadcast_to(np.asarray(beta, dtype=float), y.shape[0])
        disp = (beta * self.psi(y))[:, None] * self.automorphism.e_s
        return wrap(y @ self.automorphism.matrix_f.T + disp)

    def inverse_batch(self, beta, z):
        """Newton solve of f_x(y) = z started from A^{-1} z, with damping.

        Rows with beta = 0 are inverted exactly by the linear map.
        """
        z = np.atleast_2d(np.asarray(z, dtype=float))
        beta = np.broadcast_to(np.asarray(beta, dtype=float), z.shape[0]).copy()
        y = wrap(z @ self.automorphism.inverse_f.T)
        active = beta != 0.0
        if not active.any():
            return y
        lam_s = self.automorphism.lam_s
        e_s = self.automorphism.e_s
        idx = np.nonzero(active)[0]
        yi = y[idx]
        bi = beta[idx]
        zi = z[idx]
        res = torus_sub(self.map_batch(bi, yi), zi)
        for it in range(NEWTON_MAXITER):
            norms = np.max(np.abs(res), axis=1)
            live = norms > NEWTON_TOL
            if not live.any():
                break
            g = self.grad_psi(yi[live])
            # Df = A + beta e_s grad^T; Sherman-Morrison with A^{-1} e_s = e_s/lam_s
            Ainv = self.automorphism.inverse_f
            r = res[live]
            b = bi[live]
            Ainv_r = r @ Ainv.T
            gAinv_r = np.sum(g * Ainv_r, axis=1)
            denom = 1.0 + (b / lam_s) * np.sum(g * e_s[None, :], axis=1)
            step = Ainv_r - ((b / lam_s) * gAinv_r / denom)[:, None] * e_s[None, :]
            trial = wrap(yi[live] - step)
            new_res = torus_sub(self.map_batch(b, trial), zi[live])
            worse = np.max(np.abs(new_res), axis=1) > norms[live]
            if worse.any():
                # damped fallback: halve the step where Newton overshoots
                damp = 0.5
                w_idx = np.nonzero(worse)[0]
                for _ in range(20):
                    t2 = wrap(yi[live][w_idx] - damp * step[w_idx])
                    r2 = torus_sub(self.map_batch(b[w_idx], t2), zi[live][w_idx])
                    better = np.max(np.abs(r2), axis=1) <= norms[live][w_idx]
                    trial[w_idx[better]] = t2[better]
                    new_res[w_idx[better]] = r2[better]
                    w_idx = w_idx[~better]
                    if w_idx.size == 0:
                        break
                    damp *= 0.5
            yi[live] = trial
            res[live] = new_res
        else:
            raise ConvergenceError("fiber Newton inverse did not converge",
                                   history=float(np.max(np.abs(res))))
        y[idx] = yi
        return y

    def derivative_factor(self, beta, y):
        """Derivative of f_x along e_s at y: lam_s + beta * d_{e_s} psi(y)."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        beta = np.broadcast_to(np.asarray(beta, dtype=float), y.shape[0])
        return self.automorphism.lam_s + beta * self.psi_slope_es(y)

    # -- validation ------------------------------------------------------------

    def validate(self, grid=512) -> FiberDiagnostics:
        """Grid checks of the standing assumptions on the deformation.

        Verifies the slope normalization (sup of the e_s-slope equals 1, which
        pins the fully deformed center rate at lambda_c), the invertibility
        margin 1 + (beta_max/lam_s) * min slope > 0 with a Lipschitz safety
        factor, and that the common fixed point is indeed fixed.
        """
        sup = self.profile.sup_leaf_slope()
        if abs(sup - 1.0) > 1e-6:
            raise ValidationError("profile slope supremum must equal 1",
                                  {"sup": sup})
        mn = self.profile.min_leaf_slope()
        # Lipschitz margin from a fine grid of the slope's derivative
        u = np.linspace(0.0, 1.0, grid)
        s = self.profile.leaf_slope(u)
        lip = np.max(np.abs(np.diff(s))) / (u[1] - u[0])
        mn_safe = mn - lip * (u[1] - u[0])
        margin = 1.0 + (self.amplitude_max / self.automorphism.lam_s) * mn_safe
        if margin <= 0:
            raise ValidationError("sheared fiber map may fail to be invertible",
                                  {"margin": margin, "min_slope": mn})
        y = np.stack([self.fixed_point])
        fp_ok = bool(torus_dist(self.map_batch(self.amplitude_max, y)[0],
                                wrap(self.fixed_point)) < 1e-12)
        if not fp_ok:
            raise ValidationError("fixed point moved under the deformed map")
        return FiberDiagnostics(sup, mn, float(margin), fp_ok,
                                self.lambda_c, self.displacement_sup)

    def to_json(self):
        return {"matrix": self.automorphism.matrix.tolist(),
                "lambda_c": self.lambda_c,
                "bump_radius": self.bump_radius,
                "m_out": self.m_out, "m_in": self.m_in,
                "fixed_point": self.fixed_point.tolist()}

    @classmethod
    def from_json(cls, obj, fixed_symbol=0):
        aut = build_cat_map(obj["matrix"])
        return cls(aut,
                   fixed_point=obj.get("fixed_point", (0.0, 0.0)),
                   bump_radius=obj.get("bump_radius", 0.15),
                   lambda_c=obj.get("lambda_c", 1.2),
                   m_out=obj.get("m_out", 1), m_in=obj.get("m_in", 2),
                   fixed_symbol=fixed_symbol)


# ---------------------------------------------------------------------------
# scalar operations


def fiber_map(ff: FiberFamily, x: Word, y):
    """f_x(y) for a single base word and torus point."""
    return ff.map_batch(ff.amplitude(x), np.asarray(y, dtype=float)[None, :])[0]


def fiber_inverse(ff: FiberFamily, x: Word, z):
    """f_x^{-1}(z) by Newton iteration on the lift (damped fallback)."""
    return ff.inverse_batch(ff.amplitude(x), np.asarray(z, dtype=float)[None, :])[0]


def stable_derivative_factor(ff: FiberFamily, x: Word, y) -> float:
    """Forward derivative of f_x along the preserved e_s line at y."""
    return float(ff.derivative_factor(ff.amplitude(x), np.asarray(y, dtype=float)[None, :])[0])


def inverse_center_rate(ff: FiberFamily, x: Word) -> float:
    """Least expansion of D f_x^{-1} along the center direction, closed form.

    The slope supremum of the profile is 1, attained at the fixed point, so
    the infimum over the fiber of the inverse center derivative equals
    1 / (lam_s + beta(x)).
    """
    return 1.0 / (ff.automorphism.lam_s + ff.amplitude(x))


def inverse_center_rate_grid(ff: FiberFamily, x: Word, grid=256) -> float:
    """Grid minimization cross-check of :func:`inverse_center_rate`."""
    beta = ff.amplitude(x)
    axes = np.linspace(0.0, 1.0, grid, endpoint=False)
    yy = np.stack(np.meshgrid(axes, axes, indexing="ij"), axis=-1).reshape(-1, 2)
    # include the fixed point, where the slope supremum is attained
    yy = np.vstack([yy, ff.fixed_point[None, :]])
    fac = ff.derivative_factor(beta, yy)
    return float(1.0 / np.max(fac))


# ---------------------------------------------------------------------------
# splitting estimation


@dataclass
class SplittingEstimate:
    at: tuple
    e_u_estimate: np.ndarray
    expansion_u: float          # per-step geometric mean growth over the segment
    contraction_s: float        # forward center rate at the endpoint
    cone_angle: float           # angle between the estimated field and e_s
    endpoint_expansion: float   # one-step growth along the estimate at the endpoint
    tail_rotation: float        # angle moved in the last renormalization step


def estimate_unstable_field(ff: FiberFamily, segment, tol=None) -> SplittingEstimate:
    """Push a generic vector through the derivative cocycle along an orbit
    segment (x_k, y_k), k = -N..0, and renormalize.

    Convergence toward the unstable field is geometric with ratio at most
    (lam_s + amplitude_max)/lam_u.  If ``tol`` is given and the final-step
    rotation exceeds it, the segment was too short and an error reports the
    achieved cone angle.
    """
    if len(segment) < 2:
        raise ValidationError("orbit segment must contain at least two points")
    aut = ff.automorphism
    v = (aut.e_u + aut.e_s)
    v = v / np.linalg.norm(v)
    growths = []
    prev = v.copy()
    for (x, y) in segment[:-1]:
        beta = ff.amplitude(x)
        g = ff.grad_psi(np.asarray(y, dtype=float)[None, :])[0]
        Dv = aut.matrix_f @ v + beta * float(g @ v) * aut.e_s
        n = np.linalg.norm(Dv)
        growths.append(n)
        prev = v
        v = Dv / n
    x0, y0 = segment[-1]
    tail = math.acos(min(1.0, abs(float(prev @ v))))
    angle = math.acos(min(1.0, abs(float(v @ aut.e_s))))
    if tol is not None and tail > tol:
        raise ConvergenceError(
            "orbit segment too short for the requested field tolerance",
            history={"tail_rotation": tail, "cone_angle": angle})
    beta0 = ff.amplitude(x0)
    g0 = ff.grad_psi(np.asarray(y0, dtype=float)[None, :])[0]
    Dv0 = aut.matrix_f @ v + beta0 * float(g0 @ v) * aut.e_s
    factor = ff.derivative_factor(beta0, np.asarray(y0, dtype=float)[None, :])[0]
    return SplittingEstimate(
        at=(x0, np.asarray(y0, dtype=float)),
        e_u_estimate=v,
        expansion_u=float(np.exp(np.mean(np.log(growths)))),
        contraction_s=float(factor),
        cone_angle=float(angle),
        endpoint_expansion=float(np.linalg.norm(Dv0)),
        tail_rotation=float(tail))
