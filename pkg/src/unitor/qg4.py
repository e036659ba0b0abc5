"""Order-4 quasigroup algebra: the cipher's four fixed operation tables,
string e-transformations, the full lexicographic census of order-4 Latin
squares, and calendar-date table rotation.

Symbols are stored 0-based ({0,1,2,3}). Display form (import/export
strings, printed tables) is 1-based digits 1..4; the shift happens only at
the codec boundary.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from datetime import date, datetime, timezone
from itertools import permutations

SYMBOLS = (0, 1, 2, 3)

ORDER4_COUNT = 576  # number of distinct 4x4 Latin squares


@dataclass(frozen=True)
class TableCheck:
    """Result of a Latin-square check: ok, or the offending row/column indices."""

    bad_rows: tuple[int, ...]
    bad_cols: tuple[int, ...]

    @property
    def ok(self) -> bool:
        return not self.bad_rows and not self.bad_cols

    def first_violation(self):
        if self.bad_rows:
            return ("row", self.bad_rows[0])
        if self.bad_cols:
            return ("col", self.bad_cols[0])
        return None


def validate_table(rows) -> TableCheck:
    """Check that a 4x4 array over {0..3} is a Latin square.

    Cells outside {0..3} raise ValueError; structural (row/column
    permutation) violations are reported in the result, not raised.
    """
    grid = [tuple(int(c) for c in row) for row in rows]
    if len(grid) != 4 or any(len(r) != 4 for r in grid):
        raise ValueError("table must be 4x4")
    for r in grid:
        for c in r:
            if c not in (0, 1, 2, 3):
                raise ValueError("cell out of range: %r" % (c,))
    bad_rows = tuple(i for i, r in enumerate(grid) if set(r) != set(SYMBOLS))
    bad_cols = tuple(
        j for j in range(4) if set(grid[i][j] for i in range(4)) != set(SYMBOLS)
    )
    return TableCheck(bad_rows, bad_cols)


class Quasigroup4:
    """A quasigroup of order 4: a 4x4 Latin square, row = left operand.

    Immutable and hashable. Construction validates the Latin-square
    invariant and raises ValueError naming the first violation.
    """

    __slots__ = ("rows",)

    def __init__(self, rows):
        grid = tuple(tuple(int(c) for c in row) for row in rows)
        check = validate_table(grid)
        if not check.ok:
            kind, index = check.first_violation()
            raise ValueError("not a Latin square: duplicate in %s %d" % (kind, index))
        object.__setattr__(self, "rows", grid)

    def __setattr__(self, name, value):
        raise AttributeError("Quasigroup4 is immutable")

    def apply(self, a: int, b: int) -> int:
        """The quasigroup product a * b (row a, column b)."""
        return self.rows[a][b]

    def to_digits(self) -> str:
        """Row-major 16-character export string, 1-based display digits."""
        return "".join(str(c + 1) for row in self.rows for c in row)

    @classmethod
    def from_digits(cls, s: str) -> "Quasigroup4":
        """Parse the 16-character display form (digits 1..4, row-major)."""
        if len(s) != 16 or any(ch not in "1234" for ch in s):
            raise ValueError("expected 16 digits in 1..4")
        cells = [int(ch) - 1 for ch in s]
        return cls([cells[i : i + 4] for i in range(0, 16, 4)])

    def __eq__(self, other):
        return isinstance(other, Quasigroup4) and self.rows == other.rows

    def __hash__(self):
        return hash(self.rows)

    def __repr__(self):
        return "Quasigroup4(%s)" % (self.to_digits(),)


@dataclass(frozen=True)
class Quad:
    """The four operation tables a cipher instance works with."""

    q1: Quasigroup4
    q2: Quasigroup4
    q3: Quasigroup4
    q4: Quasigroup4

    def __getitem__(self, i: int) -> Quasigroup4:
        return (self.q1, self.q2, self.q3, self.q4)[i]

    def __iter__(self):
        return iter((self.q1, self.q2, self.q3, self.q4))


# The cipher's four fixed tables (1-based display form).
EDON80_QUAD = Quad(
    Quasigroup4.from_digits("1324324124134132"),
    Quasigroup4.from_digits("2413123431424321"),
    Quasigroup4.from_digits("3214234141321423"),
    Quasigroup4.from_digits("4321214314323214"),
)


def e_transform(q: Quasigroup4, leader: int, symbols) -> tuple[int, ...]:
    """Fold a symbol string through q: y1 = leader*x1, yj = y(j-1)*xj."""
    if leader not in SYMBOLS:
        raise ValueError("leader out of range: %r" % (leader,))
    rows = q.rows
    out = []
    y = leader
    for x in symbols:
        y = rows[y][x]
        out.append(y)
    return tuple(out)


@functools.cache
def enumerate_order4() -> tuple[Quasigroup4, ...]:
    """All 576 order-4 quasigroups, strictly increasing in lexicographic
    order of the row-major flattened table. Computed once, cached.

    Indexing convention elsewhere is 1-based: entry #1 is result[0].
    """
    perms = sorted(permutations(SYMBOLS))
    found = []
    for r0 in perms:
        for r1 in perms:
            if any(r1[j] == r0[j] for j in range(4)):
                continue
            for r2 in perms:
                if any(r2[j] in (r0[j], r1[j]) for j in range(4)):
                    continue
                for r3 in perms:
                    if any(r3[j] in (r0[j], r1[j], r2[j]) for j in range(4)):
                        continue
                    found.append(Quasigroup4((r0, r1, r2, r3)))
    return tuple(found)


@dataclass(frozen=True)
class RotationDate:
    """A calendar date split into the four rotation indices: day, month,
    first two year digits, last two year digits."""

    day: int
    month: int
    century: int
    yearpart: int

    def __post_init__(self):
        if not (1 <= self.day <= 31 and 1 <= self.month <= 12):
            raise ValueError("invalid day/month")
        if not (0 <= self.century <= 99 and 0 <= self.yearpart <= 99):
            raise ValueError("year parts must be two-digit")

    @classmethod
    def from_date(cls, d: date) -> "RotationDate":
        return cls(d.day, d.month, d.year // 100, d.year % 100)

    def list_indices(self) -> tuple[int, int, int, int]:
        """1-based indices into the 576-entry census. 0 wraps to 576."""
        return tuple(
            ((i - 1) % ORDER4_COUNT) + 1
            for i in (self.day, self.month, self.century, self.yearpart)
        )


def quasigroups_for_date(d) -> Quad:
    """The day's working tables: census entries selected by day, month and
    the two year halves. Accepts a datetime.date or a RotationDate."""
    rd = d if isinstance(d, RotationDate) else RotationDate.from_date(d)
    census = enumerate_order4()
    i1, i2, i3, i4 = rd.list_indices()
    return Quad(census[i1 - 1], census[i2 - 1], census[i3 - 1], census[i4 - 1])


def todays_quad() -> Quad:
    """Rotation quad for the current UTC calendar date."""
    return quasigroups_for_date(datetime.now(timezone.utc).date())
