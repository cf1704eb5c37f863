"""Two-sided symbolic words with an explicit usable window.

A :class:`Word` stores a finite symbol array together with a cursor marking
coordinate 0.  Shifting moves the cursor, never the data, so backward orbits
are exact as long as the window lasts.  Periodic words carry a cycle that is
repeated bi-infinitely and never run out of history.

The base metric is d(x, x') = 2^{-s} with s = min{|i| : x_i != x'_i}.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError, WindowError

#: coordinates beyond this agreement depth count as distance zero
DISTANCE_DEPTH_CAP = 64


class Word:
    """A two-sided symbolic sequence, realized on a finite window or a cycle.

    Parameters
    ----------
    symbols : array-like of int
        Symbol storage.  For periodic words this is one period.
    pos : int
        Index inside ``symbols`` of coordinate 0.
    periodic : bool
        If True, ``symbols`` is repeated bi-infinitely (the wrap transition
        must be admissible in the ambient subshift; validated there).
    """

    __slots__ = ("symbols", "pos", "periodic")

    def __init__(self, symbols, pos=0, periodic=False):
        self.symbols = np.asarray(symbols, dtype=np.int8)
        if self.symbols.ndim != 1 or self.symbols.size == 0:
            raise ValidationError("word symbols must be a nonempty 1-d array")
        self.pos = int(pos)
        self.periodic = bool(periodic)
        if not self.periodic and not (0 <= self.pos < self.symbols.size):
            raise ValidationError("cursor outside the stored window",
                                  {"pos": self.pos, "len": self.symbols.size})

    # -- constructors -------------------------------------------------------

    @classmethod
    def constant(cls, symbol):
        """The fixed point of the shift at ``symbol`` (periodic, period 1)."""
        return cls([symbol], pos=0, periodic=True)

    @classmethod
    def from_cycle(cls, cycle, pos=0):
        """Bi-infinite periodic word repeating ``cycle``."""
        return cls(cycle, pos=pos, periodic=True)

    @classmethod
    def from_string(cls, text, offset=0, periodic=False):
        """Parse a digit string; ``offset`` is the string index of coordinate 0."""
        return cls([int(c) for c in text], pos=offset, periodic=periodic)

    # -- access -------------------------------------------------------------

    def __getitem__(self, i):
        j = self.pos + int(i)
        if self.periodic:
            return int(self.symbols[j % self.symbols.size])
        if not 0 <= j < self.symbols.size:
            raise WindowError(f"coordinate {i} outside the stored window")
        return int(self.symbols[j])

    def window(self, lo, hi):
        """Symbols at coordinates lo..hi inclusive, as an int8 array."""
        idx = self.pos + np.arange(int(lo), int(hi) + 1)
        if self.periodic:
            return self.symbols[idx % self.symbols.size]
        if idx[0] < 0 or idx[-1] >= self.symbols.size:
            raise WindowError(f"window [{lo}, {hi}] outside the stored word")
        return self.symbols[idx]

    def shift(self, k=1):
        """The word shifted k times: (sigma^k x)_i = x_{i+k}. Shares storage."""
        w = Word.__new__(Word)
        w.symbols = self.symbols
        w.pos = self.pos + int(k)
        w.periodic = self.periodic
        if not w.periodic and not (0 <= w.pos < w.symbols.size):
            raise WindowError(f"shift by {k} leaves the stored window")
        return w

    def capacity(self):
        """(backward, forward) coordinate range available from the cursor."""
        if self.periodic:
            big = 2 ** 62
            return big, big
        return self.pos, self.symbols.size - 1 - self.pos

    def match_depth(self, symbol, max_depth):
        """Largest j <= max_depth with x_i == symbol for all |i| <= j; -1 if x_0 differs.

        Coordinates outside the stored window count as non-matching, so the
        result is always defined (conservative at the window edge).
        """
        if self[0] != symbol:
            return -1
        back, fwd = self.capacity()
        m = 0
        while m < max_depth:
            d = m + 1
            if d > back or d > fwd:
                break
            if self[-d] != symbol or self[d] != symbol:
                break
            m = d
        return m

    def to_json(self):
        return {"word": "".join(str(int(c)) for c in self.symbols),
                "offset": self.pos, "periodic": self.periodic}

    def __repr__(self):
        tag = "periodic " if self.periodic else ""
        return f"Word({tag}{''.join(map(str, self.symbols.tolist()))!r}, pos={self.pos})"


def base_distance(x: Word, y: Word, depth_cap=DISTANCE_DEPTH_CAP):
    """2^{-s} metric, with agreement past ``depth_cap`` (or past both windows)
    counted as distance zero."""
    if x[0] != y[0]:
        return 1.0
    xb, xf = x.capacity()
    yb, yf = y.capacity()
    reach = min(xb, yb, xf, yf, depth_cap)
    for d in range(1, reach + 1):
        if x[-d] != y[-d] or x[d] != y[d]:
            return 2.0 ** (-d)
    return 0.0


class WordBatch:
    """A batch of words sharing one cursor and periodicity flag.

    Rows are independent words; ``pos`` marks coordinate 0 for all rows.
    Used by the vectorized orbit and series kernels.
    """

    __slots__ = ("symbols", "pos", "periodic")

    def __init__(self, symbols, pos=0, periodic=False):
        self.symbols = np.asarray(symbols, dtype=np.int8)
        if self.symbols.ndim != 2:
            raise ValidationError("WordBatch expects a 2-d array (rows = words)")
        self.pos = int(pos)
        self.periodic = bool(periodic)

    @classmethod
    def from_words(cls, words):
        """Stack same-shape words; all must share pos and periodicity."""
        if not words:
            raise ValidationError("empty word list")
        pos = words[0].pos
        per = words[0].periodic
        n = words[0].symbols.size
        if any(w.pos != pos or w.periodic != per or w.symbols.size != n for w in words):
            raise ValidationError("words in a batch must share window shape")
        return cls(np.stack([w.symbols for w in words]), pos=pos, periodic=per)

    def __len__(self):
        return self.symbols.shape[0]

    def word(self, i):
        return Word(self.symbols[i], pos=self.pos, periodic=self.periodic)

    def shift(self, k=1):
        b = WordBatch.__new__(WordBatch)
        b.symbols = self.symbols
        b.pos = self.pos + int(k)
        b.periodic = self.periodic
        return b

    def column(self, i):
        """Symbols at coordinate i for every row."""
        j = self.pos + int(i)
        if self.periodic:
            return self.symbols[:, j % self.symbols.shape[1]]
        if not 0 <= j < self.symbols.shape[1]:
            raise WindowError(f"coordinate {i} outside the stored batch window")
        return self.symbols[:, j]

    def match_depth(self, symbol, max_depth):
        """Vectorized Word.match_depth at the cursor, per row."""
        m = np.where(self.column(0) == symbol, 0, -1)
        for d in range(1, int(max_depth) + 1):
            try:
                ok = (self.column(-d) == symbol) & (self.column(d) == symbol)
            except WindowError:
                break
            m = np.where((m == d - 1) & ok, d, m)
        return m
