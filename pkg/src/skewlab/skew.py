"""The skew-product F(x, y) = (shift x, f_x(y)) with orbits and validation.

Phase-space points carry the base word as an explicit finite window (or an
admissible cycle), so backward orbits are exact symbolic shifts; the usable
orbit length is bounded by the stored window.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .symbolic import SymbolicBase, validate_base
from .torus import FiberFamily, torus_dist, wrap
from .words import Word, WordBatch, base_distance


@dataclass
class Point:
    """A phase-space point: base word plus fiber coordinate in [0,1)^2."""

    word: Word
    y: np.ndarray

    def __post_init__(self):
        self.y = wrap(np.asarray(self.y, dtype=float))
        if self.y.shape != (2,):
            raise ValidationError("fiber coordinate must be a 2-vector")

    def to_json(self):
        obj = self.word.to_json()
        obj["y"] = [float(self.y[0]), float(self.y[1])]
        return obj

    @classmethod
    def from_json(cls, obj):
        w = Word.from_string(obj["word"], offset=obj.get("offset", 0),
                             periodic=obj.get("periodic", False))
        return cls(w, np.asarray(obj["y"], dtype=float))


class SkewSystem:
    """Skew-product over a subshift base with a deformed-automorphism fiber
    family, under the product sup metric."""

    def __init__(self, base: SymbolicBase, fibers: FiberFamily):
        self.base = base
        self.fibers = fibers
        if base.fixed_word != fibers.fixed_symbol:
            raise ValidationError("fiber schedule keyed to a different symbol "
                                  "than the base fixed word")

    # -- metric ---------------------------------------------------------------

    def distance(self, p: Point, q: Point) -> float:
        return max(base_distance(p.word, q.word),
                   float(torus_dist(p.y, q.y)))

    # -- dynamics ---------------------------------------------------------------

    def apply(self, p: Point) -> Point:
        beta = self.fibers.amplitude(p.word)
        y = self.fibers.map_batch(beta, p.y[None, :])[0]
        return Point(p.word.shift(1), y)

    def apply_inverse(self, p: Point) -> Point:
        w = p.word.shift(-1)
        beta = self.fibers.amplitude(w)
        y = self.fibers.inverse_batch(beta, p.y[None, :])[0]
        return Point(w, y)

    def orbit(self, p: Point, k_from: int, k_to: int):
        """Points F^k(p) for k = k_from..k_to (inclusive), deterministic."""
        if k_from > k_to:
            raise ValidationError("orbit range must satisfy from <= to")
        fwd = []
        cur = p
        for _ in range(max(0, k_to)):
            cur = self.apply(cur)
            fwd.append(cur)
        bwd = []
        cur = p
        for _ in range(max(0, -k_from)):
            cur = self.apply_inverse(cur)
            bwd.append(cur)
        seq = list(reversed(bwd)) + [p] + fwd
        lo = len(bwd) + k_from
        return seq[lo:lo + (k_to - k_from + 1)]

    # -- batch kernels ----------------------------------------------------------

    def amplitudes_at(self, words: WordBatch, offset=0):
        return self.fibers.amplitude_of_depth(
            words.shift(offset).match_depth(self.base.fixed_word, self.fibers.m_in))

    def apply_batch(self, words: WordBatch, Y, offset=0):
        """One forward step of the fiber coordinates for words shifted by
        ``offset``; returns the new fiber array (words shift separately)."""
        return self.fibers.map_batch(self.amplitudes_at(words, offset), Y)

    def apply_inverse_batch(self, words: WordBatch, Y, offset=0):
        """One backward step: fiber preimages under f at shift ``offset - 1``."""
        return self.fibers.inverse_batch(self.amplitudes_at(words, offset - 1), Y)

    # -- validation ---------------------------------------------------------------

    def validate(self, samples=200, seed=0):
        """Sampled checks of the standing assumptions.

        Returns a dict of named diagnostics; raises on hard violations.
        """
        from .symbolic import gibbs_state, BasePotential
        validate_base(self.base)
        fiber_diag = self.fibers.validate()
        rng = np.random.default_rng(seed)

        # bijection on sampled data
        g0 = gibbs_state(self.base, BasePotential.constant(0.0, self.base.alphabet_size))
        from .symbolic import sample_words
        wb = sample_words(g0, samples, 4, seed)
        Y = rng.random((samples, 2))
        Y1 = self.apply_batch(wb, Y)
        Y0 = self.fibers.inverse_batch(self.amplitudes_at(wb, 0), Y1)
        roundtrip = float(np.max(torus_dist(Y0, Y)))
        if roundtrip > 1e-9:
            raise ValidationError("apply/apply_inverse roundtrip failed",
                                  {"max_error": roundtrip})

        # continuity of x -> f_x: words agreeing to depth m_in share beta
        m = self.fibers.m_in
        pos = m + 4
        w1 = self._admissible_fill(
            rng.integers(0, self.base.alphabet_size, size=2 * pos + 1, dtype=np.int8), rng)
        w2 = w1.copy()
        j = pos + m + 2  # coordinate m+2: outside the depth-m_in window
        while j < w2.size:
            alts = np.nonzero(self.base.transition[w2[j - 1]])[0]
            alts = alts[alts != w2[j]]
            if alts.size:
                w2[j] = alts[0]
                w2 = self._admissible_fill(w2, rng, keep_from=j + 1)
                break
            j += 1
        x1 = Word(w1, pos=pos)
        x2 = Word(w2, pos=pos)
        local_const = self.fibers.amplitude(x1) == self.fibers.amplitude(x2)

        # invariance of the center lamination: leaf points map collinearly
        e_s = self.fibers.automorphism.e_s
        t = rng.uniform(-0.2, 0.2, size=samples)
        betas = self.amplitudes_at(wb, 0)
        Ya = rng.random((samples, 2))
        Yb = wrap(Ya + t[:, None] * e_s[None, :])
        Fa = self.fibers.map_batch(betas, Ya)
        Fb = self.fibers.map_batch(betas, Yb)
        from .torus import torus_sub
        diff = torus_sub(Fb, Fa)
        off_leaf = float(np.max(np.abs(self.fibers.automorphism.coeff_u(diff))))
        if off_leaf > 1e-9:
            raise ValidationError("center lamination not invariant",
                                  {"off_leaf_component": off_leaf})

        # homotopy witness: straight-line path from f to the linear map stays
        # a small, continuous displacement
        sup_disp = self.fibers.displacement_sup
        return {"fiber": fiber_diag,
                "roundtrip_error": roundtrip,
                "fiber_continuity_locally_constant": bool(local_const),
                "continuity_modulus_bound": float(sup_disp),
                "leaf_invariance_error": off_leaf,
                "homotopy_displacement_sup": float(sup_disp)}

    def _admissible_fill(self, arr, rng, keep_from=0):
        """Repair a random symbol array into an admissible word (greedy)."""
        T = self.base.transition
        out = arr.copy()
        for i in range(max(1, keep_from), out.size):
            if not T[out[i - 1], out[i]]:
                choices = np.nonzero(T[out[i - 1]])[0]
                out[i] = choices[rng.integers(0, choices.size)]
        return out

    def to_json(self):
        obj = self.base.to_json()
        obj.update(self.fibers.to_json())
        return obj


def build_system(config: dict) -> SkewSystem:
    """Construct the skew-product from a flat config mapping.

    Recognized keys: alphabet, transition, fixed_word, matrix, lambda_c,
    bump_radius, m_out, m_in, fixed_point.
    """
    base = SymbolicBase.from_json({
        "alphabet": config.get("alphabet", 2),
        "transition": config.get("transition", [[1, 1], [1, 1]]),
        "fixed_word": config.get("fixed_word", 0)})
    fibers = FiberFamily.from_json(config, fixed_symbol=base.fixed_word)
    return SkewSystem(base, fibers)
