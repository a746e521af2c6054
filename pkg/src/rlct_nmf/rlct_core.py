"""Closed-form real log canonical thresholds for NMF and reduced rank regression.

Every value is an exact :class:`fractions.Fraction`. The NMF upper bound is

    lambda <= ((H - H0) * min(M, N) + H0 * (M + N - 1)) / 2

and it is attained when ``H0 == 0`` or ``H == H0 == 1``. Reduced rank
regression (the same factorisation without sign constraints) has an exact
piecewise threshold that lower-bounds the NMF one at matched rank.
"""

from __future__ import annotations

import csv
import enum
import io
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError

__all__ = [
    "ModelDims",
    "TrueStructure",
    "RrrTruth",
    "Kind",
    "Source",
    "RlctValue",
    "Feasibility",
    "nmf_rlct_bound",
    "nmf_rlct_exact_nonneg_residual",
    "rrr_rlct",
    "rrr_case",
    "regular_half_dim",
    "rank_feasibility",
    "TableCell",
    "TableRow",
    "comparison_table",
    "table_to_csv",
    "table_to_json",
    "PAPER_SIZES",
]

PAPER_SIZES = (2, 3, 4, 5)


@dataclass(frozen=True)
class ModelDims:
    """Model size: ``M x N`` observations factorised through inner dimension ``H``."""

    M: int
    N: int
    H: int

    def __post_init__(self):
        for name in ("M", "N", "H"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
                raise ValidationError(f"{name} must be an integer, got {v!r}")
        if self.M < 1 or self.N < 1:
            raise ValidationError(f"M and N must be >= 1, got M={self.M}, N={self.N}")
        if self.H < 0:
            raise ValidationError(f"H must be >= 0, got {self.H}")

    @property
    def n_params(self) -> int:
        return self.H * (self.M + self.N)


@dataclass(frozen=True)
class TrueStructure:
    """Ground truth: inner dimension ``H0`` and optionally the factors ``A``, ``B``.

    ``A`` is ``M x H0`` and ``B`` is ``H0 x N``; when given, their entries must be
    strictly positive. Shape agreement with a :class:`ModelDims` is checked by
    :func:`check_feasible`, not here.
    """

    H0: int
    A: np.ndarray | None = field(default=None, compare=False)
    B: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if isinstance(self.H0, bool) or not isinstance(self.H0, (int, np.integer)):
            raise ValidationError(f"H0 must be an integer, got {self.H0!r}")
        if self.H0 < 0:
            raise ValidationError(f"H0 must be >= 0, got {self.H0}")
        if (self.A is None) != (self.B is None):
            raise ValidationError("A and B must be given together")
        if self.A is not None:
            A = np.asarray(self.A, dtype=float)
            B = np.asarray(self.B, dtype=float)
            if A.ndim != 2 or B.ndim != 2:
                raise ValidationError("A and B must be 2-D")
            if A.shape[1] != self.H0 or B.shape[0] != self.H0:
                raise ValidationError(
                    f"A is {A.shape} and B is {B.shape}, inconsistent with H0={self.H0}"
                )
            if self.H0 > 0 and (not np.all(np.isfinite(A)) or not np.all(np.isfinite(B))
                                or A.min() <= 0 or B.min() <= 0):
                raise ValidationError("entries of A and B must be finite and strictly positive")
            object.__setattr__(self, "A", A)
            object.__setattr__(self, "B", B)

    @property
    def product(self) -> np.ndarray | None:
        if self.A is None:
            return None
        return self.A @ self.B

    @classmethod
    def zero(cls, M: int, N: int) -> "TrueStructure":
        """The ``AB = O`` truth of shape ``M x N``."""
        return cls(0, np.zeros((M, 0)), np.zeros((0, N)))


@dataclass(frozen=True)
class RrrTruth:
    r: int

    def __post_init__(self):
        if isinstance(self.r, bool) or not isinstance(self.r, (int, np.integer)) or self.r < 0:
            raise ValidationError(f"r must be a non-negative integer, got {self.r!r}")


class Kind(str, enum.Enum):
    EXACT = "exact"
    UPPER_BOUND = "upper bound"


class Source(str, enum.Enum):
    MAIN_THEOREM = "MainTheorem"
    LEMMA1 = "Lemma1"
    LEMMA2 = "Lemma2"
    REMARK = "Remark"
    AOYAGI_CASE1 = "AoyagiCase1"
    AOYAGI_CASE2 = "AoyagiCase2"
    AOYAGI_CASE3 = "AoyagiCase3"
    AOYAGI_CASE4 = "AoyagiCase4"
    AOYAGI_CASE5 = "AoyagiCase5"
    REGULAR_DIM = "RegularDim"


@dataclass(frozen=True)
class RlctValue:
    """An exact threshold value with its exactness tag and provenance.

    ``degenerate`` marks the ``H = 0`` convention where the value is 0.
    """

    value: Fraction
    kind: Kind
    source: Source
    degenerate: bool = False

    def __post_init__(self):
        v = Fraction(self.value)
        if v < 0:
            raise ValidationError(f"threshold must be non-negative, got {v}")
        if v == 0 and not self.degenerate:
            raise ValidationError("a zero threshold must be flagged degenerate")
        if 8 % v.denominator:
            raise ValidationError(f"denominator of {v} does not divide 8")
        object.__setattr__(self, "value", v)

    def __float__(self) -> float:
        return float(self.value)

    def __str__(self) -> str:
        return f"{self.value} ({self.kind.value})"

    def to_dict(self) -> dict:
        return {
            "value": str(self.value),
            "value_float": float(self.value),
            "kind": self.kind.value,
            "source": self.source.value,
            "degenerate": self.degenerate,
        }


def check_feasible(dims: ModelDims, truth: TrueStructure) -> None:
    """Raise :class:`ValidationError` unless ``H0 <= H`` and ``H0 <= min(M, N)``."""
    if truth.H0 > dims.H:
        raise ValidationError(f"H0={truth.H0} exceeds model inner dimension H={dims.H}")
    if truth.H0 > min(dims.M, dims.N):
        raise ValidationError(
            f"H0={truth.H0} exceeds min(M, N)={min(dims.M, dims.N)}; no such nonnegative rank"
        )
    if truth.A is not None and (truth.A.shape[0] != dims.M or truth.B.shape[1] != dims.N):
        raise ValidationError(
            f"truth factors give a {truth.A.shape[0]}x{truth.B.shape[1]} matrix, model is "
            f"{dims.M}x{dims.N}"
        )


def _bound_value(M: int, N: int, H: int, H0: int) -> Fraction:
    # Python ints do not overflow, so no checked multiply is needed.
    return Fraction((H - H0) * min(M, N) + H0 * (M + N - 1), 2)


def nmf_rlct_bound(dims: ModelDims, truth: TrueStructure) -> RlctValue:
    """Upper bound on the NMF threshold, exact when ``H0 == 0`` or ``H == H0 == 1``.

    >>> nmf_rlct_bound(ModelDims(3, 3, 1), TrueStructure(1))
    RlctValue(value=Fraction(5, 2), kind=<Kind.EXACT: 'exact'>, source=<Source.LEMMA2: 'Lemma2'>, degenerate=False)
    """
    check_feasible(dims, truth)
    value = _bound_value(dims.M, dims.N, dims.H, truth.H0)
    if truth.H0 == 0:
        return RlctValue(value, Kind.EXACT, Source.LEMMA1, degenerate=dims.H == 0)
    if dims.H == 1:
        return RlctValue(value, Kind.EXACT, Source.LEMMA2)
    return RlctValue(value, Kind.UPPER_BOUND, Source.MAIN_THEOREM)


def nmf_rlct_exact_nonneg_residual(dims: ModelDims, truth: TrueStructure) -> RlctValue:
    """Same value as :func:`nmf_rlct_bound`, tagged exact.

    Valid only when the caller knows every residual ``x_ik y_kj - a_ik b_kj``
    (k <= H0) is non-negative on the integration domain. That hypothesis cannot
    be checked from dimensions, so it is taken on trust.
    """
    bound = nmf_rlct_bound(dims, truth)
    return RlctValue(bound.value, Kind.EXACT, Source.REMARK, degenerate=bound.degenerate)


def rrr_case(M: int, N: int, H: int, r: int) -> int:
    """Index (1..5) of the piecewise branch of the reduced rank regression formula.

    Branches 1 and 2 share the interior guard and split on the parity of
    ``M + H + N + r``.
    """
    interior = N + r <= M + H and M + r <= N + H and H + r <= M + N
    fired = [
        interior and (M + H + N + r) % 2 == 0,
        interior and (M + H + N + r) % 2 == 1,
        M + H < N + r,
        N + H < M + r,
        M + N < H + r,
    ]
    if sum(fired) != 1:
        raise AssertionError(f"RRR branch guards fired {fired} for M={M}, N={N}, H={H}, r={r}")
    return fired.index(True) + 1


def rrr_rlct(dims: ModelDims, truth: RrrTruth) -> RlctValue:
    """Exact threshold of reduced rank regression with true rank ``r``."""
    M, N, H, r = dims.M, dims.N, dims.H, truth.r
    if r > min(M, N, H):
        raise ValidationError(f"r={r} exceeds min(M, N, H)={min(M, N, H)}")
    case = rrr_case(M, N, H, r)
    s = H + r
    if case == 1:
        value = Fraction(2 * s * (M + N) - (M - N) ** 2 - s * s, 8)
    elif case == 2:
        value = Fraction(2 * s * (M + N) - (M - N) ** 2 - s * s + 1, 8)
    elif case == 3:
        value = Fraction(H * M - H * r + N * r, 2)
    elif case == 4:
        value = Fraction(H * N - H * r + M * r, 2)
    else:
        value = Fraction(M * N, 2)
    source = Source(f"AoyagiCase{case}")
    return RlctValue(value, Kind.EXACT, source, degenerate=H == 0)


def regular_half_dim(dims: ModelDims) -> RlctValue:
    """``d/2`` for ``d = H(M + N)`` parameters, the regular-model value."""
    return RlctValue(Fraction(dims.n_params, 2), Kind.EXACT, Source.REGULAR_DIM,
                     degenerate=dims.H == 0)


class Feasibility(str, enum.Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    FORCED_EQUAL = "forced-equal"


def rank_feasibility(M: int, N: int, rank: int, nonneg_rank: int) -> Feasibility:
    """Whether an ``M x N`` nonnegative matrix can have this (rank, nonnegative rank).

    Uses only ``rank <= rank_+ <= min(M, N)`` and the fact that the two ranks
    coincide when ``M <= 3`` or ``N <= 3``. ``FORCED_EQUAL`` means the pair is
    ruled out by the latter.
    """
    if rank < 0 or nonneg_rank < 0:
        raise ValidationError("ranks must be non-negative")
    if rank > nonneg_rank or nonneg_rank > min(M, N):
        return Feasibility.INFEASIBLE
    if (M <= 3 or N <= 3) and rank != nonneg_rank:
        return Feasibility.FORCED_EQUAL
    return Feasibility.FEASIBLE


# --- comparison table -------------------------------------------------------


@dataclass(frozen=True)
class TableCell:
    """One table entry. ``status`` is ``value``, ``infeasible`` or ``parenthesized``."""

    size: int
    status: str
    value: Fraction | None = None

    @property
    def text(self) -> str:
        if self.status == "infeasible":
            return "-"
        if self.status == "parenthesized":
            return f"({self.value})"
        return str(self.value)


@dataclass(frozen=True)
class TableRow:
    block: str
    model: str
    label: str
    r: int | None
    cells: tuple[TableCell, ...]

    def texts(self) -> list[str]:
        return [c.text for c in self.cells]


def _rrr_ranks(h0: int) -> list[int]:
    # rank < rank_+ needs rank >= 3, so larger blocks list r = 3..H0.
    return [h0] if h0 <= 3 else list(range(3, h0 + 1))


def _nmf_cell(size: int, H: int, H0: int) -> TableCell:
    if H0 > size:
        return TableCell(size, "infeasible")
    return TableCell(size, "value", nmf_rlct_bound(ModelDims(size, size, H), TrueStructure(H0)).value)


def _rrr_cell(size: int, H: int, H0: int, r: int) -> TableCell:
    if r > size:
        return TableCell(size, "infeasible")
    value = rrr_rlct(ModelDims(size, size, H), RrrTruth(r)).value
    if rank_feasibility(size, size, r, H0) is not Feasibility.FEASIBLE:
        return TableCell(size, "parenthesized", value)
    return TableCell(size, "value", value)


def comparison_table(size_list: Sequence[int] = PAPER_SIZES,
                     max_h0: int | None = None) -> list[TableRow]:
    """NMF thresholds against reduced rank regression for square ``M = N`` sizes.

    The first block has ``H = M`` and a zero truth; block ``k`` has
    ``H = H0 = k`` for ``k = 1..max_h0`` (default ``max(size_list)``).
    Cells read ``-`` when no matrix satisfies the block's conditions and
    ``(v)`` when the RRR rank exists but cannot pair with nonnegative rank
    ``H0`` at that size.
    """
    sizes = [int(s) for s in size_list]
    if not sizes or min(sizes) < 1:
        raise ValidationError("size_list must contain positive sizes")
    max_h0 = max(sizes) if max_h0 is None else int(max_h0)

    rows = [
        TableRow("H=M,H0=0", "NMF", "NMF (exact value)", None,
                 tuple(_nmf_cell(s, s, 0) for s in sizes)),
        TableRow("H=M,H0=0", "RRR", "reduced rank regression", 0,
                 tuple(_rrr_cell(s, s, 0, 0) for s in sizes)),
    ]
    for h0 in range(1, max_h0 + 1):
        block = f"H=H0={h0}"
        nmf_label = "NMF (exact value)" if h0 == 1 else "NMF (bound)"
        rows.append(TableRow(block, "NMF", nmf_label, None,
                             tuple(_nmf_cell(s, h0, h0) for s in sizes)))
        for r in _rrr_ranks(h0):
            rows.append(TableRow(block, "RRR", "reduced rank regression", r,
                                 tuple(_rrr_cell(s, h0, h0, r) for s in sizes)))
    return rows


def table_to_csv(rows: Iterable[TableRow], size_list: Sequence[int] = PAPER_SIZES) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["block", "model", "r"] + [f"M=N={s}" for s in size_list])
    for row in rows:
        writer.writerow([row.block, row.model, "" if row.r is None else row.r] + row.texts())
    return buf.getvalue()


def table_to_json(rows: Iterable[TableRow]) -> str:
    out = []
    for row in rows:
        out.append({
            "block": row.block,
            "model": row.model,
            "label": row.label,
            "r": row.r,
            "cells": [
                {
                    "size": c.size,
                    "text": c.text,
                    "status": c.status,
                    "value": None if c.value is None else str(c.value),
                    "value_float": None if c.value is None else float(c.value),
                }
                for c in row.cells
            ],
        })
    return json.dumps(out, indent=2)
