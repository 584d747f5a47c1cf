"""Per-level direction sets built from a subdivided cube surface.

Directions are addressed by slots: slot 0 of every level is the zero
direction, slots ``1..6*4**(l_hf - l)`` are the normalized face midpoints
of the level, so slot ``j`` corresponds to face ``E_j``.  Levels above
``l_hf`` only carry slot 0.

Face membership is decided in exact rational arithmetic: face bounds are
dyadic and the cube projection of the input vector is formed with
:class:`fractions.Fraction`, so ties on cell edges resolve identically on
every platform.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

import numpy as np

# (normal axis, sign) of the six top faces in construction order
TOP_FACES = ((0, -1), (0, 1), (1, -1), (1, 1), (2, -1), (2, 1))


class CoincidentMidpointsError(ValueError):
    pass


class DirectionId(NamedTuple):
    level: int
    index: int


@dataclass(frozen=True)
class Face:
    """Closed square cell on the cube surface."""

    axis: int
    sign: int
    # bounds on the two free axes, in increasing axis order
    lo: tuple[Fraction, Fraction]
    hi: tuple[Fraction, Fraction]
    parent: int  # 1-based face index one level up, 0 at l_hf

    @property
    def free_axes(self) -> tuple[int, int]:
        return tuple(a for a in range(3) if a != self.axis)

    def midpoint(self) -> np.ndarray:
        p = np.zeros(3)
        p[self.axis] = self.sign
        for a, lo, hi in zip(self.free_axes, self.lo, self.hi):
            p[a] = float((lo + hi) / 2)
        return p

    def area(self) -> Fraction:
        return (self.hi[0] - self.lo[0]) * (self.hi[1] - self.lo[1])

    def subdivide(self, own_index: int) -> list["Face"]:
        mid = [(lo + hi) / 2 for lo, hi in zip(self.lo, self.hi)]
        out = []
        for ha in (0, 1):
            a_lo, a_hi = (self.lo[0], mid[0]) if ha == 0 else (mid[0], self.hi[0])
            for hb in (0, 1):
                b_lo, b_hi = (self.lo[1], mid[1]) if hb == 0 else (mid[1], self.hi[1])
                out.append(Face(self.axis, self.sign, (a_lo, b_lo), (a_hi, b_hi), own_index))
        return out


def _top_faces() -> list[Face]:
    one = Fraction(1)
    return [Face(axis, sign, (-one, -one), (one, one), 0) for axis, sign in TOP_FACES]


def cube_projection(v) -> tuple[Fraction, Fraction, Fraction]:
    """Exact ``v / max_j |v_j|`` for a nonzero vector of floats or ints."""
    q = [Fraction(x) for x in v]
    scale = max(abs(x) for x in q)
    if scale == 0:
        raise ValueError("cube projection of the zero vector")
    return tuple(x / scale for x in q)


class DirectionTable:
    """Direction sets ``D^(l)`` for levels ``0..max_level``."""

    def __init__(self, l_hf: int, max_level: int):
        if l_hf < -1:
            raise ValueError("l_hf must be >= -1")
        if max_level < 0:
            raise ValueError("max_level must be >= 0")
        self.l_hf = l_hf
        self.max_level = max_level
        self.faces: dict[int, list[Face]] = {}
        if l_hf >= 0:
            faces = _top_faces()
            self.faces[l_hf] = faces
            for level in range(l_hf - 1, -1, -1):
                faces = [child for j, f in enumerate(faces, start=1) for child in f.subdivide(j)]
                self.faces[level] = faces
        self.vectors: list[np.ndarray] = []
        for level in range(max_level + 1):
            vecs = [np.zeros(3)]
            for f in self.faces.get(level, []):
                mid = f.midpoint()
                vecs.append(mid / np.linalg.norm(mid))
            self.vectors.append(np.array(vecs))
        # slot of dir_(l+1)(c) for every slot c at level l
        self.parent_slots: list[np.ndarray] = []
        for level in range(max_level):
            self.parent_slots.append(np.array(
                [self.map_slot(level + 1, c) for c in self.vectors[level]], dtype=np.int64))

    def is_high_frequency(self, level: int) -> bool:
        return level <= self.l_hf

    def n_slots(self, level: int) -> int:
        return len(self.vectors[level])

    def n_directions(self, level: int) -> int:
        """Cardinality of ``D^(level)``, counting ``{0}`` as one."""
        return max(1, len(self.faces.get(level, [])))

    def vector(self, d: DirectionId) -> np.ndarray:
        return self.vectors[d.level][d.index]

    def map_slot(self, level: int, v) -> int:
        """Slot of ``dir_(level)(v)``."""
        if level > self.l_hf:
            return 0
        if not np.any(np.asarray(v, dtype=object) != 0):
            return 0
        psi = cube_projection(v)
        # lowest top face containing psi, then lowest child at every step
        for j, (axis, sign) in enumerate(TOP_FACES, start=1):
            if psi[axis] == sign:
                break
        else:  # pragma: no cover - psi always has a coordinate of modulus one
            raise AssertionError(f"cube projection {psi} misses the surface")
        faces_top = self.faces[self.l_hf]
        face = faces_top[j - 1]
        index = j
        for sub_level in range(self.l_hf - 1, level - 1, -1):
            a, b = face.free_axes
            mid_a = (face.lo[0] + face.hi[0]) / 2
            mid_b = (face.lo[1] + face.hi[1]) / 2
            ha = 0 if psi[a] <= mid_a else 1
            hb = 0 if psi[b] <= mid_b else 1
            index = 4 * (index - 1) + 2 * ha + hb + 1
            face = self.faces[sub_level][index - 1]
        return index


def build_direction_table(l_hf: int, max_level: int) -> DirectionTable:
    return DirectionTable(l_hf, max_level)


def dir_map(table: DirectionTable, level: int, v) -> DirectionId:
    if level < 0:
        raise ValueError("level must be >= 0")
    return DirectionId(level, table.map_slot(level, v))


def block_direction(table: DirectionTable, level: int, t, s) -> DirectionId:
    """Direction assigned to the box pair ``(t, s)`` at ``level``.

    ``t`` and ``s`` are cluster nodes (or anything with an ``AxisBox`` in
    ``.box``).  The midpoint difference is formed in exact arithmetic from
    the lattice position of the nodes, so translated pairs always receive
    the same direction.
    """
    if hasattr(t, "exact_midpoint") and hasattr(s, "exact_midpoint"):
        mt, ms = t.exact_midpoint(), s.exact_midpoint()
        diff = tuple(a - b for a, b in zip(mt, ms))
    else:
        diff = midpoint_difference(t.box, s.box)
    if all(d == 0 for d in diff):
        raise CoincidentMidpointsError(f"boxes {t.box} and {s.box} share their midpoint")
    return DirectionId(level, table.map_slot(level, diff))


def midpoint_difference(tb, sb) -> tuple[Fraction, Fraction, Fraction]:
    """Exact ``2 (m_t - m_s)`` for two boxes with float corners."""
    return tuple(
        Fraction(tb.lower[a]) + Fraction(tb.upper[a]) - Fraction(sb.lower[a]) - Fraction(sb.upper[a])
        for a in range(3)
    )


def parent_direction(table: DirectionTable, level_child: int, c: DirectionId) -> DirectionId:
    """``dir_(level_child)`` applied to a direction of the level above."""
    if level_child < 1:
        raise ValueError("level_child must be >= 1")
    if c.level != level_child - 1:
        raise ValueError(f"direction {c} does not belong to level {level_child - 1}")
    return DirectionId(level_child, table.map_slot(level_child, table.vector(c)))
