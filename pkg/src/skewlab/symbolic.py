"""Subshifts of finite type with exact thermodynamics for locally constant
potentials.

The base dynamics is a two-sided SFT given by a 0/1 transition matrix.  A
potential depending on the window [-r, r] is made 1-step by recoding to
blocks of length max(1, 2r+1); pressure is the log Perron root of the
weighted block matrix, and the Gibbs measure is the stationary Markov chain
obtained from the left/right Perron vectors (the classical
Ruelle-Perron-Frobenius normalization).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, ValidationError
from .words import Word, WordBatch, base_distance

POWER_TOL = 1e-13
POWER_MAXITER = 200_000


# ---------------------------------------------------------------------------
# base subshift


class SymbolicBase:
    """Two-sided subshift of finite type with a designated fixed symbol.

    ``transition[a, b] == 1`` allows the word ``ab``.  ``fixed_word`` is a
    symbol q with ``transition[q, q] == 1``; it models the distinguished
    fixed point of the base dynamics around which the fiber deformation is
    scheduled.
    """

    def __init__(self, alphabet_size, transition, fixed_word):
        self.alphabet_size = int(alphabet_size)
        self.transition = np.asarray(transition, dtype=np.int64)
        self.fixed_word = int(fixed_word)
        k = self.alphabet_size
        if self.transition.shape != (k, k):
            raise ValidationError("transition matrix shape mismatch",
                                  {"expected": (k, k), "got": self.transition.shape})
        if not np.isin(self.transition, (0, 1)).all():
            raise ValidationError("transition entries must be 0/1")
        if not 0 <= self.fixed_word < k:
            raise ValidationError("fixed_word outside the alphabet")
        if self.transition[self.fixed_word, self.fixed_word] != 1:
            raise ValidationError("fixed_word is not an admissible fixed point",
                                  {"symbol": self.fixed_word})

    @classmethod
    def full_shift(cls, k=2, fixed_word=0):
        return cls(k, np.ones((k, k), dtype=np.int64), fixed_word)

    @classmethod
    def from_json(cls, obj):
        return cls(obj["alphabet"], obj["transition"], obj["fixed_word"])

    def to_json(self):
        return {"alphabet": self.alphabet_size,
                "transition": self.transition.tolist(),
                "fixed_word": self.fixed_word}

    def is_admissible(self, symbols):
        s = np.asarray(symbols, dtype=np.int64)
        if s.size <= 1:
            return bool(s.size == 0 or (0 <= s[0] < self.alphabet_size))
        if s.min() < 0 or s.max() >= self.alphabet_size:
            return False
        return bool(self.transition[s[:-1], s[1:]].all())

    def is_admissible_cycle(self, symbols):
        s = np.asarray(symbols, dtype=np.int64)
        return self.is_admissible(s) and bool(self.transition[s[-1], s[0]])

    def admissible_words(self, length):
        """All admissible words of the given length, in lexicographic order."""
        if length == 0:
            return [()]
        words = [(a,) for a in range(self.alphabet_size)]
        for _ in range(length - 1):
            words = [w + (b,) for w in words
                     for b in range(self.alphabet_size) if self.transition[w[-1], b]]
        return words

    def distance(self, x: Word, y: Word):
        return base_distance(x, y)

    def fixed_symbols(self):
        return [a for a in range(self.alphabet_size) if self.transition[a, a]]


@dataclass
class BaseDiagnostics:
    irreducible: bool
    aperiodic: bool
    period: int
    fixed_symbols: list


def _strongly_connected(T):
    k = T.shape[0]
    reach = np.eye(k, dtype=bool)
    step = T.astype(bool)
    for _ in range(k):
        new = reach | (reach @ step)
        if (new == reach).all():
            break
        reach = new
    return bool((reach & reach.T).all()), reach


def _graph_period(T):
    """gcd of cycle lengths of an irreducible 0/1 matrix (BFS level trick)."""
    import math
    k = T.shape[0]
    level = -np.ones(k, dtype=np.int64)
    level[0] = 0
    queue = [0]
    g = 0
    while queue:
        u = queue.pop()
        for v in np.nonzero(T[u])[0]:
            if level[v] < 0:
                level[v] = level[u] + 1
                queue.append(int(v))
            else:
                g = math.gcd(g, int(level[u] + 1 - level[v]))
    return abs(g) if g else 0


def validate_base(b: SymbolicBase) -> BaseDiagnostics:
    """Check irreducibility and aperiodicity; reject degenerate transition
    structure with the offending piece attached."""
    irreducible, reach = _strongly_connected(b.transition)
    if not irreducible:
        bad = np.argwhere(~(reach & reach.T))
        raise ValidationError(
            "transition matrix is reducible",
            {"irreducible": False,
             "unreachable_pairs": [tuple(map(int, p)) for p in bad[:8]]})
    period = _graph_period(b.transition)
    if period != 1:
        raise ValidationError("transition matrix is periodic",
                              {"irreducible": True, "period": period})
    return BaseDiagnostics(True, True, 1, b.fixed_symbols())


# ---------------------------------------------------------------------------
# potentials


class BasePotential:
    """Locally constant potential on the base, a table over the window [-r, r].

    ``values`` must cover exactly the admissible words of length 2r+1; being
    locally constant it is automatically Holder.
    """

    def __init__(self, window_radius, values, alphabet_size=None):
        self.window_radius = int(window_radius)
        if self.window_radius < 0:
            raise ValidationError("window_radius must be nonnegative")
        self.values = {tuple(int(c) for c in k): float(v) for k, v in values.items()}
        width = 2 * self.window_radius + 1
        for w in self.values:
            if len(w) != width:
                raise ValidationError("potential key of wrong window width",
                                      {"key": w, "expected_width": width})
        k = alphabet_size
        if k is None:
            k = 1 + max(max(w) for w in self.values)
        self.alphabet_size = int(k)
        # radix-k lookup table; inadmissible / missing words hold NaN
        self._table = np.full(self.alphabet_size ** width, np.nan)
        radix = self.alphabet_size ** np.arange(width - 1, -1, -1)
        for w, v in self.values.items():
            self._table[int(np.dot(w, radix))] = v
        self._radix = radix

    def check_cover(self, base: SymbolicBase):
        """The table must cover exactly the admissible windows of the base."""
        width = 2 * self.window_radius + 1
        admissible = set(base.admissible_words(width))
        keys = set(self.values)
        if keys != admissible:
            raise ValidationError(
                "potential table does not match the admissible words",
                {"missing": sorted(admissible - keys)[:8],
                 "extra": sorted(keys - admissible)[:8]})

    @classmethod
    def constant(cls, c, alphabet_size=2):
        vals = {(a,): float(c) for a in range(alphabet_size)}
        return cls(0, {tuple(k): v for k, v in vals.items()}, alphabet_size)

    @classmethod
    def from_json(cls, obj, alphabet_size=None):
        values = {tuple(int(c) for c in key): float(v)
                  for key, v in obj["values"].items()}
        return cls(obj["window_radius"], values, alphabet_size)

    def to_json(self):
        return {"window_radius": self.window_radius,
                "values": {"".join(map(str, k)): v for k, v in sorted(self.values.items())}}

    def __call__(self, window):
        v = self._table[int(np.dot(np.asarray(window, dtype=np.int64), self._radix))]
        if np.isnan(v):
            raise ValidationError("potential evaluated on an inadmissible window",
                                  {"window": list(map(int, window))})
        return float(v)

    def value_batch(self, windows):
        """Evaluate on rows of a (B, 2r+1) symbol array."""
        codes = np.asarray(windows, dtype=np.int64) @ self._radix
        return self._table[codes]

    def shifted_by(self, c):
        return BasePotential(self.window_radius,
                             {w: v + c for w, v in self.values.items()},
                             self.alphabet_size)


# ---------------------------------------------------------------------------
# cylinders


@dataclass
class Cylinder:
    """Symbolic cylinder: a word pinned over an integer window [lo, hi]."""

    window: tuple
    word: np.ndarray

    def __post_init__(self):
        self.word = np.asarray(self.word, dtype=np.int64)
        lo, hi = self.window
        if self.word.size != hi - lo + 1:
            raise ValidationError("cylinder word does not fill its window",
                                  {"window": self.window, "word_len": self.word.size})

    @classmethod
    def empty(cls):
        return cls((0, -1), np.zeros(0, dtype=np.int64))

    @classmethod
    def centered(cls, word):
        word = np.asarray(word, dtype=np.int64)
        m = (word.size - 1) // 2
        return cls((-m, word.size - 1 - m), word)

    @classmethod
    def fixed_word_ball(cls, base: SymbolicBase, depth):
        """The cylinder matching the fixed symbol on coordinates |i| <= depth."""
        n = 2 * int(depth) + 1
        return cls((-depth, depth), np.full(n, base.fixed_word, dtype=np.int64))


# ---------------------------------------------------------------------------
# Perron data and Gibbs states


def power_iteration(M, tol=POWER_TOL, maxiter=POWER_MAXITER):
    """Dominant eigenpair of a primitive nonnegative matrix.

    Deterministic all-ones start; stops when the Rayleigh quotient is stable
    to ``tol`` in relative terms.  Raises ConvergenceError carrying the last
    two Rayleigh quotients if the cap is hit.
    """
    M = np.asarray(M, dtype=np.float64)
    v = np.ones(M.shape[0])
    lam_prev = np.inf
    for _ in range(maxiter):
        w = M @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            raise ValidationError("matrix annihilated the positive cone")
        w /= nw
        lam = float(w @ (M @ w))
        if abs(lam - lam_prev) <= tol * abs(lam):
            return lam, w / w.sum()
        lam_prev, v = lam, w
    raise ConvergenceError("power iteration did not stabilize",
                           history=(lam_prev, lam))


@dataclass
class GibbsState:
    """Stationary Markov chain realizing the Gibbs measure of a locally
    constant potential, on the higher-block alphabet."""

    stochastic: np.ndarray           # row-stochastic matrix P
    stationary: np.ndarray           # probability row vector p
    pressure: float                  # log Perron root of the weighted matrix
    block_order: int                 # recoding depth
    blocks: np.ndarray = field(repr=False)        # (k', block_order) words
    base: SymbolicBase = field(repr=False, default=None)

    def __post_init__(self):
        self._index = {tuple(map(int, w)): i for i, w in enumerate(self.blocks)}
        self._cum = np.cumsum(self.stochastic, axis=1)
        # time-reversed chain for two-sided extension: rev[j, i] = p_i P_ij / p_j
        p = self.stationary
        rev = (self.stochastic * p[:, None]).T / p[:, None]
        self._cum_rev = np.cumsum(rev, axis=1)

    def block_index(self, word):
        return self._index.get(tuple(map(int, word)))

    def integrate_blocks(self, values):
        return float(np.dot(self.stationary, values))

    def expected_potential(self, phi: BasePotential):
        width = 2 * phi.window_radius + 1
        return self.integrate_blocks(phi.value_batch(self.blocks[:, :width]))


def _weighted_block_matrix(base: SymbolicBase, phi: BasePotential):
    width = 2 * phi.window_radius + 1
    order = max(1, width)
    blocks = np.array(base.admissible_words(order), dtype=np.int64).reshape(-1, order)
    nb = blocks.shape[0]
    if order == 1:
        allowed = base.transition[blocks[:, 0][:, None], blocks[:, 0][None, :]].astype(bool)
    else:
        # block v may follow u iff they overlap in order-1 symbols
        allowed = (blocks[:, None, 1:] == blocks[None, :, :-1]).all(axis=2)
    weights = np.exp(phi.value_batch(blocks[:, :width]))
    B = np.where(allowed, weights[:, None], 0.0)
    return blocks, B


def pressure_exact(base: SymbolicBase, phi: BasePotential) -> float:
    """Topological pressure of a locally constant potential: log of the
    Perron root of the source-weighted block transition matrix."""
    _, B = _weighted_block_matrix(base, phi)
    lam, _ = power_iteration(B)
    return float(np.log(lam))


def gibbs_state(base: SymbolicBase, phi: BasePotential) -> GibbsState:
    """The unique equilibrium state of a locally constant potential, as a
    stationary Markov chain: P_ij = B_ij r_j / (lam r_i), p_i ~ l_i r_i."""
    validate_base(base)
    phi.check_cover(base)
    blocks, B = _weighted_block_matrix(base, phi)
    lam, r = power_iteration(B)
    _, l = power_iteration(B.T)
    if r.min() <= 1e-15 or l.min() <= 1e-15:
        raise ValidationError("degenerate Perron vector on recurrent states",
                              {"min_right": float(r.min()), "min_left": float(l.min())})
    P = B * r[None, :] / (lam * r[:, None])
    P /= P.sum(axis=1, keepdims=True)
    p = l * r
    p /= p.sum()
    # polish stationarity to the invariant tolerance
    for _ in range(8):
        p = p @ P
        p /= p.sum()
    return GibbsState(P, p, float(np.log(lam)), blocks.shape[1], blocks, base)


def entropy_markov(g: GibbsState) -> float:
    """Metric entropy of a stationary Markov chain, with 0 log 0 = 0."""
    P = g.stochastic
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(P > 0, P * np.log(P), 0.0)
    return float(-np.dot(g.stationary, plogp.sum(axis=1)))


def cylinder_measure(g: GibbsState, c: Cylinder) -> float:
    """Markov measure of a cylinder: a finite product over the block chain.

    Shift-invariance makes the window offset irrelevant; inadmissible words
    carry measure zero.
    """
    word = c.word
    n = word.size
    if n == 0:
        return 1.0
    if g.base is not None and not g.base.is_admissible(word):
        return 0.0
    m = g.block_order
    if n < m:
        mask = (g.blocks[:, :n] == word[None, :]).all(axis=1)
        return float(g.stationary[mask].sum())
    idx = [g.block_index(word[t:t + m]) for t in range(n - m + 1)]
    if any(i is None for i in idx):
        return 0.0
    mu = g.stationary[idx[0]]
    for a, b in zip(idx[:-1], idx[1:]):
        mu *= g.stochastic[a, b]
    return float(mu)


# ---------------------------------------------------------------------------
# sampling


def _step(cum_rows, states, u):
    return (cum_rows[states] < u[:, None]).sum(axis=1)


def sample_orbit(base: SymbolicBase, g: GibbsState, length, seed) -> Word:
    """A two-sided word on coordinates [-length, length], distributed per the
    Gibbs chain (forward via P, backward via the reversed chain)."""
    if length < 1:
        raise ValidationError("length must be >= 1")
    batch = sample_words(g, 1, length, seed)
    return batch.word(0)


def sample_words(g: GibbsState, count, half_window, seed) -> WordBatch:
    """Batch of two-sided Gibbs words on [-half_window, half_window]."""
    rng = np.random.default_rng(seed)
    B = int(count)
    L = int(half_window)
    start_cum = np.cumsum(g.stationary)
    states0 = (start_cum < rng.random(B)[:, None]).sum(axis=1)
    cols = np.empty((B, 2 * L + 1), dtype=np.int8)
    cols[:, L] = g.blocks[states0, 0]
    states = states0
    for t in range(1, L + 1):
        states = _step(g._cum, states, rng.random(B))
        cols[:, L + t] = g.blocks[states, 0]
    states = states0
    for t in range(1, L + 1):
        states = _step(g._cum_rev, states, rng.random(B))
        cols[:, L - t] = g.blocks[states, 0]
    return WordBatch(cols, pos=L, periodic=False)
