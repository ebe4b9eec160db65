"""In-place-update piecewise linear model with a 512-bit prediction filter.

Each GTD entry owns one model.  A piece ``(off, k, b)`` predicts the VPPN
offset of LPN offset ``x`` (with ``off <= x``) as
``round(k * (x - off) + b)``, and the prediction is only ever used when the
filter bit of ``x`` is set.  ``k`` and ``b`` are stored as IEEE binary16 and
every accuracy decision is made with the stored values.
"""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConsistencyError

SLOTS = 512
FULL_MASK = (1 << SLOTS) - 1
DEFAULT_MAX_PIECES = 8
MODEL_BYTES = 128
PIECE_BYTES = 6
BITMAP_BYTES = SLOTS // 8


def to_half(x: float) -> float:
    """Round to the nearest binary16 value (ties to even); overflow gives inf."""
    with np.errstate(over="ignore"):
        return float(np.float16(x))


@dataclass(slots=True)
class Piece:
    off: int
    k: float
    b: float

    def predict(self, x: int) -> int:
        """VPPN offset predicted for LPN offset ``x``; Python's round is ties-to-even."""
        y = self.k * (x - self.off) + self.b
        if not math.isfinite(y):
            return -(1 << 62)
        return round(y)


def _range_mask(start: int, end: int) -> int:
    return ((1 << (end - start)) - 1) << start if end > start else 0


class LearnedModel:
    """Piece array plus bitmap filter for one GTD entry."""

    __slots__ = ("pieces", "offs", "bitmap", "base_vppn", "max_pieces")

    def __init__(self, max_pieces: int = DEFAULT_MAX_PIECES):
        self.pieces: list[Piece] = []
        self.offs: list[int] = []
        self.bitmap = 0
        self.base_vppn: int | None = None
        self.max_pieces = max_pieces

    # -- bitmap ---------------------------------------------------------
    def bit(self, x: int) -> bool:
        return (self.bitmap >> x) & 1 == 1

    def clear_bit(self, x: int) -> None:
        self.bitmap &= ~(1 << x)

    def clear_range(self, start: int, end: int) -> None:
        self.bitmap &= ~_range_mask(start, end)

    def popcount(self, start: int = 0, end: int = SLOTS) -> int:
        return (self.bitmap & _range_mask(start, end)).bit_count()

    # -- pieces ---------------------------------------------------------
    def set_pieces(self, pieces: Sequence[Piece]) -> None:
        self.pieces = list(pieces)
        self.offs = [p.off for p in self.pieces]

    def piece_for(self, x: int) -> Piece | None:
        i = bisect.bisect_right(self.offs, x) - 1
        return self.pieces[i] if i >= 0 else None

    def piece_end(self, i: int) -> int:
        return self.offs[i + 1] if i + 1 < len(self.offs) else SLOTS

    def raw_predict(self, x: int) -> int | None:
        """Predicted VPPN offset ignoring the filter; None if no piece covers ``x``."""
        piece = self.piece_for(x)
        return None if piece is None else piece.predict(x)

    def predict_vppn(self, x: int) -> int | None:
        """VPPN for LPN offset ``x`` if the filter allows a prediction."""
        if not (self.bitmap >> x) & 1:
            return None
        piece = self.piece_for(x)
        if piece is None or self.base_vppn is None:
            raise ConsistencyError(f"filter bit {x} set but no piece covers it")
        return self.base_vppn + piece.predict(x)

    def reset(self) -> None:
        self.set_pieces([])
        self.bitmap = 0
        self.base_vppn = None

    def check(self) -> None:
        """Structural invariants; raises ConsistencyError."""
        if len(self.pieces) > self.max_pieces:
            raise ConsistencyError("too many pieces")
        if any(a >= b for a, b in zip(self.offs, self.offs[1:])):
            raise ConsistencyError(f"piece offsets not increasing: {self.offs}")
        if self.offs and not 0 <= self.offs[0] < SLOTS:
            raise ConsistencyError("piece offset out of range")
        if self.offs != [p.off for p in self.pieces]:
            raise ConsistencyError("offset index out of sync")
        if self.bitmap and self.offs and self.bitmap & _range_mask(0, self.offs[0]):
            raise ConsistencyError("filter bits set before the first piece")
        if self.bitmap and not self.pieces:
            raise ConsistencyError("filter bits set without pieces")

    def to_dict(self) -> dict:
        return {
            "base_vppn": self.base_vppn,
            "pieces": [[p.off, p.k, p.b] for p in self.pieces],
            "popcount": self.popcount(),
        }


def train_plr(pairs: Sequence[tuple[int, int]], max_pieces: int = DEFAULT_MAX_PIECES,
              epsilon: float = 0.5) -> list[Piece]:
    """Greedy left-to-right piecewise linear fit with a slope cone.

    Each piece is anchored at its first point; it keeps absorbing points while
    some slope through the anchor fits every absorbed point within
    ``epsilon``.  The stored slope is the middle of the surviving cone.
    Points left over once ``max_pieces`` pieces exist stay unfitted.
    """
    pieces: list[Piece] = []
    n = len(pairs)
    i = 0
    while i < n and len(pieces) < max_pieces:
        x0, y0 = pairs[i]
        lo, hi = -math.inf, math.inf
        j = i + 1
        while j < n:
            x, y = pairs[j]
            dx = x - x0
            nlo = max(lo, (y - epsilon - y0) / dx)
            nhi = min(hi, (y + epsilon - y0) / dx)
            if nlo > nhi:
                break
            lo, hi = nlo, nhi
            j += 1
        slope = 1.0 if j == i + 1 else (lo + hi) / 2
        pieces.append(Piece(x0, to_half(slope), to_half(y0)))
        i = j
    return pieces


def evaluate_and_set_bitmap(model: LearnedModel, pairs: Iterable[tuple[int, int]]) -> int:
    """Set exactly the bits whose stored-precision prediction hits the pair's VPPN offset."""
    bitmap = 0
    for x, y in pairs:
        if model.raw_predict(x) == y:
            bitmap |= 1 << x
    model.bitmap = bitmap
    return bitmap


def _continuation(piece: Piece, at: int) -> Piece:
    return Piece(at, piece.k, to_half(piece.b + piece.k * (at - piece.off)))


def in_place_update(model: LearnedModel, new_piece: Piece, end: int) -> None:
    """Insert ``new_piece`` covering ``[new_piece.off, end)``.

    Pieces shadowed by the new range are dropped, a piece that still owns
    LPNs past ``end`` is restarted at ``end`` (its intercept re-derived), and
    the new range's filter bits are cleared for the caller to set.  If the
    array overflows, the piece with the fewest useful bits is evicted.
    """
    start = new_piece.off
    if not 0 <= start < end <= SLOTS:
        raise ValueError(f"bad piece range [{start}, {end})")
    old = model.pieces
    kept: list[Piece] = []
    tail_owner: Piece | None = None
    tail_end = SLOTS
    for i, piece in enumerate(old):
        p_end = model.piece_end(i)
        if piece.off < start:
            kept.append(piece)
            if p_end > end:
                tail_owner, tail_end = piece, p_end
        elif piece.off < end:
            if p_end > end:
                tail_owner, tail_end = piece, p_end
        else:
            kept.append(piece)

    new_pieces = [p for p in kept if p.off < start] + [new_piece]
    continuation = None
    if tail_owner is not None and model.popcount(end, tail_end):
        continuation = _continuation(tail_owner, end)
        # keep only bits whose prediction survives the re-quantised intercept
        for x in range(end, tail_end):
            if (model.bitmap >> x) & 1 and continuation.predict(x) != tail_owner.predict(x):
                model.clear_bit(x)
        new_pieces.append(continuation)
    elif tail_owner is not None:
        model.clear_range(end, tail_end)
    new_pieces += [p for p in kept if p.off >= end]
    model.set_pieces(new_pieces)
    model.clear_range(start, end)

    while len(model.pieces) > model.max_pieces:
        best = None
        for i, piece in enumerate(model.pieces):
            if piece is new_piece:
                continue
            useful = model.popcount(piece.off, model.piece_end(i))
            if best is None or useful < best[0]:
                best = (useful, i)
        _, i = best
        model.clear_range(model.pieces[i].off, model.piece_end(i))
        model.set_pieces(model.pieces[:i] + model.pieces[i + 1:])

    if model.pieces and model.offs[0] > 0:
        model.clear_range(0, model.offs[0])


def sequential_init(model: LearnedModel, start_off: int, vppn_start: int, length: int) -> bool:
    """Offer a freshly written run of consecutive LPNs / VPPNs to the model.

    The run replaces the model's content over its range only when it is
    longer than the number of LPNs the model currently predicts.  Returns
    True if the model changed.
    """
    if length < 1 or start_off < 0 or start_off + length > SLOTS:
        raise ValueError("run must lie inside one GTD entry")
    l_old = model.popcount()
    if l_old >= length:
        return False
    if l_old == 0 or model.base_vppn is None:
        model.reset()
        model.base_vppn = vppn_start
    rel = vppn_start - model.base_vppn
    piece = Piece(start_off, 1.0, to_half(rel))
    in_place_update(model, piece, start_off + length)
    bits = 0
    for i in range(length):
        if piece.predict(start_off + i) == rel + i:
            bits |= 1 << (start_off + i)
    model.bitmap |= bits
    return True


def train_entry(model: LearnedModel, lpn_offs: Sequence[int], vppns: Sequence[int],
                epsilon: float = 0.5) -> int:
    """Retrain a model from sorted ``(lpn_off, vppn)`` data; returns the popcount."""
    model.reset()
    if not lpn_offs:
        return 0
    base = vppns[0]
    model.base_vppn = base
    pairs = [(x, v - base) for x, v in zip(lpn_offs, vppns)]
    model.set_pieces(train_plr(pairs, model.max_pieces, epsilon))
    return evaluate_and_set_bitmap(model, pairs).bit_count()


def dump_models(models: Sequence[LearnedModel]) -> str:
    """Debug listing, one JSON object per GTD entry."""
    return json.dumps([dict(entry=i, **m.to_dict()) for i, m in enumerate(models)], indent=1)
