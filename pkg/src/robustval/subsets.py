"""Canonical encoding of point subsets.

A cohort of ``n`` points is indexed ``0..n-1``.  Subsets are value objects:
hashable, ordered tuples of member indices with the cohort size attached, so
the same key can be used as a dict key, serialized to text, or converted to a
bitmask for dense table lookups.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

from .errors import InvalidParam, MemberAlreadyPresent

# Bitmask round-trips are only supported up to the word width minus safety
# margin; beyond that keys still work but masks are arbitrary-precision ints.
MASK_WIDTH = 64


@dataclass(frozen=True)
class SubsetKey:
    """An immutable subset of the cohort ``{0, ..., n-1}``.

    ``members`` is strictly increasing; the empty tuple is the empty set.
    """

    members: tuple[int, ...]
    n: int

    def __post_init__(self) -> None:
        if self.n < 1:
            raise InvalidParam(f"cohort size must be >= 1, got {self.n}")
        prev = -1
        for idx in self.members:
            if not isinstance(idx, int) or isinstance(idx, bool):
                raise InvalidParam(f"member indices must be ints, got {idx!r}")
            if idx <= prev:
                raise InvalidParam(
                    f"members must be strictly increasing, got {self.members}"
                )
            if not 0 <= idx < self.n:
                raise InvalidParam(f"index {idx} outside cohort of size {self.n}")
            prev = idx

    # -- constructors ------------------------------------------------------

    @classmethod
    def empty(cls, n: int) -> "SubsetKey":
        return cls((), n)

    @classmethod
    def full(cls, n: int) -> "SubsetKey":
        return cls(tuple(range(n)), n)

    @classmethod
    def from_iterable(cls, members: Iterable[int], n: int) -> "SubsetKey":
        return cls(tuple(sorted(set(int(i) for i in members))), n)

    @classmethod
    def from_mask(cls, mask: int, n: int) -> "SubsetKey":
        if mask < 0 or mask >> n:
            raise InvalidParam(f"mask {mask} does not fit a cohort of size {n}")
        return cls(tuple(i for i in range(n) if (mask >> i) & 1), n)

    @classmethod
    def from_text(cls, text: str, n: int) -> "SubsetKey":
        """Parse the canonical text form: comma-separated indices, '' = empty."""
        stripped = text.strip()
        if not stripped:
            return cls.empty(n)
        try:
            members = tuple(int(tok) for tok in stripped.split(","))
        except ValueError as exc:
            raise InvalidParam(f"unparseable subset text {text!r}") from exc
        return cls(members, n)

    # -- views -------------------------------------------------------------

    @property
    def mask(self) -> int:
        m = 0
        for i in self.members:
            m |= 1 << i
        return m

    @property
    def text(self) -> str:
        """Canonical serialization: sorted indices joined by commas."""
        return ",".join(str(i) for i in self.members)

    @property
    def size(self) -> int:
        return len(self.members)

    def __contains__(self, idx: int) -> bool:
        return idx in self.members

    def __iter__(self) -> Iterator[int]:
        return iter(self.members)

    def __len__(self) -> int:
        return len(self.members)

    # -- algebra -----------------------------------------------------------

    def with_member(self, idx: int) -> "SubsetKey":
        if idx in self.members:
            raise MemberAlreadyPresent(f"{idx} already in {self.text or '{}'}")
        return SubsetKey(tuple(sorted(self.members + (idx,))), self.n)

    def without_member(self, idx: int) -> "SubsetKey":
        if idx not in self.members:
            raise InvalidParam(f"{idx} not in subset {self.text or '{}'}")
        return SubsetKey(tuple(i for i in self.members if i != idx), self.n)

    def complement(self) -> "SubsetKey":
        present = set(self.members)
        return SubsetKey(tuple(i for i in range(self.n) if i not in present), self.n)


def all_subsets(n: int) -> Iterator[SubsetKey]:
    """Yield every subset of the cohort in ascending mask order."""
    for mask in range(1 << n):
        yield SubsetKey.from_mask(mask, n)
