"""Exact low-dimensional predicates, general position and separator enumeration.

Points are kept twice: as float64 for vectorised work and as exact rationals
(``fractions.Fraction``) for the sign decisions.  Every orientation sign
returned by this module is exact: float determinants are only trusted when
they clear a conservative error bound, everything else is recomputed over
the rationals.
"""
from __future__ import annotations

import csv
import enum
import io
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import DegeneracyError, InputError

# Relative slack on float determinants before falling back to rationals.
# Covers input rounding of decimal coordinates plus arithmetic error.
_FILTER_EPS = 1e-12
EPS_PERTURB = 1e-9
_PERTURB_RETRIES = 8


class Certificate(enum.Enum):
    VERIFIED = "verified"
    DEGENERATE = "degenerate"
    PERTURBED = "perturbed"


def _to_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, str):
        text = value.strip()
        try:
            frac = Fraction(text)
        except (ValueError, ZeroDivisionError):
            raise InputError(f"not a decimal number: {value!r}") from None
        return frac
    x = float(value)
    if not math.isfinite(x):
        raise InputError(f"non-finite coordinate: {value!r}")
    return Fraction(x)


def _exact_det(rows: Sequence[Sequence[Fraction]]) -> Fraction:
    d = len(rows)
    if d == 1:
        return rows[0][0]
    if d == 2:
        return rows[0][0] * rows[1][1] - rows[0][1] * rows[1][0]
    if d == 3:
        (a, b, c), (e, f, g), (h, i, j) = rows
        return a * (f * j - g * i) - b * (e * j - g * h) + c * (e * i - f * h)
    raise ValueError("only d <= 3 is supported")


def _sgn(x) -> int:
    return (x > 0) - (x < 0)


def orientation(p, q, r) -> int:
    """Sign of ``(q - p) x (r - p)``; 0 exactly when the three points are collinear.

    Coordinates may be floats, Fractions or decimal strings; strings are read
    as exact decimals, so ``orientation(("0", "0"), ("0.1", "0.1"), ("0.3", "0.3"))``
    is 0 even though the binary floats are not collinear.
    """
    p, q, r = ([_to_fraction(c) for c in pt] for pt in (p, q, r))
    if not len(p) == len(q) == len(r) == 2:
        raise InputError("orientation needs planar points")
    return _sgn((q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]))


@dataclass(frozen=True, eq=False)
class PointSet:
    """Immutable ordered point collection with a general-position certificate."""

    coords: np.ndarray
    exact: tuple
    certificate: Certificate
    degenerate_tuple: tuple | None = None
    perturb_seed: int | None = None

    @classmethod
    def from_coords(cls, coords, certify: bool = True) -> "PointSet":
        """Build from an ``(n, d)`` array-like of numbers or decimal strings."""
        rows = [list(r) for r in coords] if not isinstance(coords, np.ndarray) else coords.tolist()
        if not rows:
            raise InputError("empty point set")
        dim = len(rows[0])
        if dim < 1 or any(len(r) != dim for r in rows):
            raise InputError("ragged coordinates")
        exact = tuple(tuple(_to_fraction(v) for v in r) for r in rows)
        arr = np.array([[float(v) for v in r] for r in exact], dtype=float)
        if not np.all(np.isfinite(arr)):
            raise InputError("non-finite coordinate")
        ps = cls(arr, exact, Certificate.DEGENERATE)
        if certify:
            cert, bad = certify_general_position(ps)
            object.__setattr__(ps, "certificate", cert)
            object.__setattr__(ps, "degenerate_tuple", bad)
        return ps

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    @property
    def in_general_position(self) -> bool:
        return self.certificate is not Certificate.DEGENERATE

    def require_general_position(self) -> None:
        if not self.in_general_position:
            raise DegeneracyError(
                f"points {self.degenerate_tuple} are affinely dependent; "
                "call perturb() with a seed to proceed"
            )

    @cached_property
    def sign_table(self) -> "SignTable":
        self.require_general_position()
        return SignTable.build(self)


def orientation_signs(ps: PointSet, anchors: np.ndarray) -> np.ndarray:
    """Exact side of every point relative to each anchor hyperplane.

    ``anchors`` is ``(c, d)``; the result is ``(c, n)`` int8 holding the sign
    of ``det[x_a2 - x_a1, ..., x_j - x_a1]`` (for d=1, ``x_j - x_a1``).
    Anchor points themselves get 0.
    """
    X = ps.coords
    d = ps.dim
    anchors = np.asarray(anchors, dtype=np.int64).reshape(-1, d)
    base = X[anchors[:, 0]]  # (c, d)
    diff = X[None, :, :] - base[:, None, :]  # (c, n, d)
    absX = np.abs(X)
    if d == 1:
        det = diff[:, :, 0]
        scale = absX[None, :, 0] + np.abs(base[:, None, 0])
    elif d == 2:
        e = X[anchors[:, 1]] - base  # (c, 2)
        det = e[:, None, 0] * diff[:, :, 1] - e[:, None, 1] * diff[:, :, 0]
        ae = np.abs(X[anchors[:, 1]]) + np.abs(base)
        ad = absX[None, :, :] + np.abs(base)[:, None, :]
        scale = ae[:, None, 0] * ad[:, :, 1] + ae[:, None, 1] * ad[:, :, 0]
    elif d == 3:
        e1 = X[anchors[:, 1]] - base
        e2 = X[anchors[:, 2]] - base
        cr = np.cross(e1, e2)  # normal, (c, 3)
        det = np.einsum("ck,cnk->cn", cr, diff)
        ab = np.abs(base)
        a1 = np.abs(X[anchors[:, 1]]) + ab
        a2 = np.abs(X[anchors[:, 2]]) + ab
        acr = np.stack(
            [a1[:, 1] * a2[:, 2] + a1[:, 2] * a2[:, 1],
             a1[:, 2] * a2[:, 0] + a1[:, 0] * a2[:, 2],
             a1[:, 0] * a2[:, 1] + a1[:, 1] * a2[:, 0]],
            axis=1,
        )
        ad = absX[None, :, :] + ab[:, None, :]
        scale = np.einsum("ck,cnk->cn", acr, ad)
    else:
        raise ValueError("only d <= 3 is supported")
    signs = np.sign(det).astype(np.int8)
    unsure = np.abs(det) <= _FILTER_EPS * scale
    rows = np.arange(anchors.shape[0])[:, None]
    unsure[rows, anchors] = False
    signs[rows, anchors] = 0
    for c, j in zip(*np.nonzero(unsure)):
        signs[c, j] = _exact_side(ps.exact, anchors[c], j)
    return signs


def _exact_side(exact: tuple, anchor: Sequence[int], j: int) -> int:
    b = exact[anchor[0]]
    rows = [[pi - bi for pi, bi in zip(exact[a], b)] for a in anchor[1:]]
    rows.append([pi - bi for pi, bi in zip(exact[j], b)])
    return _sgn(_exact_det(rows))


def certify_general_position(ps: PointSet) -> tuple[Certificate, tuple | None]:
    """Return ``(VERIFIED, None)`` or ``(DEGENERATE, offending_indices)``.

    No ``d + 1`` points may be affinely dependent.  Duplicated points are
    reported as the degenerate pair (padded to ``d + 1`` indices when d > 1).
    """
    n, d = ps.n, ps.dim
    if n < d + 1:
        return Certificate.VERIFIED, None
    seen: dict[tuple, int] = {}
    for j, pt in enumerate(ps.exact):
        i = seen.setdefault(pt, j)
        if i != j:
            extra = [t for t in range(n) if t not in (i, j)][: d - 1]
            return Certificate.DEGENERATE, tuple(sorted([i, j, *extra]))
    for anchors in _chunks(itertools.combinations(range(n), d), 4096):
        arr = np.array(anchors, dtype=np.int64)
        signs = orientation_signs(ps, arr)
        # count each (d+1)-tuple once: only points beyond the last anchor
        later = np.arange(n)[None, :] > arr[:, -1:]
        hit = (signs == 0) & later
        if hit.any():
            c, j = np.argwhere(hit)[0]
            return Certificate.DEGENERATE, tuple(int(v) for v in (*arr[c], j))
    return Certificate.VERIFIED, None


def _chunks(it, size):
    it = iter(it)
    while True:
        block = list(itertools.islice(it, size))
        if not block:
            return
        yield block


def _jitter_uniform(seed: int, n: int, d: int) -> np.ndarray:
    # index-seeded: point i's jitter depends only on (seed, i)
    out = np.empty((n, d))
    for i in range(n):
        out[i] = np.random.default_rng([seed, i]).uniform(-1.0, 1.0, d)
    return out


def perturb(ps: PointSet, seed: int, eps: float = EPS_PERTURB) -> PointSet:
    """Deterministic jitter that restores general position.

    Each coordinate moves by at most ``eps * diag`` where ``diag`` is the
    bounding-box diagonal; the returned set carries ``Certificate.PERTURBED``.
    """
    X = ps.coords
    diag = float(np.linalg.norm(X.max(axis=0) - X.min(axis=0))) or 1.0
    for attempt in range(_PERTURB_RETRIES):
        jit = _jitter_uniform(seed + attempt * 0x9E3779B1, ps.n, ps.dim)
        Y = X + eps * diag * jit
        out = PointSet.from_coords(Y)
        if out.certificate is Certificate.VERIFIED:
            object.__setattr__(out, "certificate", Certificate.PERTURBED)
            object.__setattr__(out, "perturb_seed", seed)
            return out
    raise DegeneracyError(f"perturbation failed after {_PERTURB_RETRIES} attempts")


@dataclass(frozen=True)
class DirectedSeparator:
    """Hyperplane through ``d`` sample points, with a chosen positive side.

    ``anchor_assignment[i]`` says whether anchor ``i`` counts as lying on the
    positive side; this replaces an infinitesimal shift of the hyperplane.
    """

    anchor_indices: tuple[int, ...]
    orientation: int
    anchor_assignment: tuple[bool, ...]

    def __post_init__(self):
        if len(set(self.anchor_indices)) != len(self.anchor_indices):
            raise InputError("anchor indices must be distinct")
        if self.orientation not in (1, -1):
            raise InputError("orientation must be +1 or -1")
        if len(self.anchor_assignment) != len(self.anchor_indices):
            raise InputError("one side flag per anchor")

    @property
    def key(self) -> tuple:
        return (self.anchor_indices, self.orientation, self.anchor_assignment)

    def positive_side(self, ps: PointSet) -> np.ndarray:
        """Boolean membership of every point in the positive open half-space."""
        if max(self.anchor_indices) >= ps.n or min(self.anchor_indices) < 0:
            raise InputError("anchor index out of range")
        signs = orientation_signs(ps, np.array([self.anchor_indices]))[0]
        pos = signs * self.orientation > 0
        for a, flag in zip(self.anchor_indices, self.anchor_assignment):
            pos[a] = flag
        return pos


def separator_count(n: int, d: int) -> int:
    return math.comb(n, d) * 2 ** (d + 1)


def enumerate_separators(ps: PointSet, start: int = 0, stop: int | None = None) -> Iterator[DirectedSeparator]:
    """Yield every (anchor subset, orientation, side assignment) exactly once.

    The stream has a fixed linear order so ``[start, stop)`` slices can be
    handed to independent workers.
    """
    ps.require_general_position()
    d = ps.dim
    per = 2 ** (d + 1)
    total = separator_count(ps.n, d)
    stop = total if stop is None else min(stop, total)
    if start >= stop:
        return
    assignments = list(itertools.product((False, True), repeat=d))
    combos = itertools.islice(itertools.combinations(range(ps.n), d), start // per, None)
    idx = (start // per) * per
    for anchors in combos:
        for orient in (1, -1):
            for assign in assignments:
                if idx >= stop:
                    return
                if idx >= start:
                    yield DirectedSeparator(anchors, orient, assign)
                idx += 1


@dataclass(frozen=True, eq=False)
class SignTable:
    """Per-anchor-subset side membership, shared by all counting routines."""

    anchors: np.ndarray  # (c, d)
    pos: np.ndarray  # (c, n) bool, strictly positive side
    neg: np.ndarray  # (c, n) bool, strictly negative side

    @classmethod
    def build(cls, ps: PointSet) -> "SignTable":
        anchors = np.array(list(itertools.combinations(range(ps.n), ps.dim)), dtype=np.int64)
        anchors = anchors.reshape(-1, ps.dim)
        signs = orientation_signs(ps, anchors) if len(anchors) else np.zeros((0, ps.n), np.int8)
        return cls(anchors, signs > 0, signs < 0)

    @cached_property
    def halfspace_masks(self) -> np.ndarray:
        """Sorted distinct point subsets cut off by an open half-space (uint64 bitmasks)."""
        c, n = self.pos.shape
        if n > 64:
            raise ValueError("bitmask routines support at most 64 points")
        weights = np.uint64(1) << np.arange(n, dtype=np.uint64)
        pos_bits = (self.pos.astype(np.uint64) * weights).sum(axis=1, dtype=np.uint64)
        neg_bits = (self.neg.astype(np.uint64) * weights).sum(axis=1, dtype=np.uint64)
        d = self.anchors.shape[1]
        anchor_bits = weights[self.anchors]  # (c, d)
        subsets = np.array(list(itertools.product((0, 1), repeat=d)), dtype=np.uint64)  # (2^d, d)
        extra = (anchor_bits[:, None, :] * subsets[None, :, :]).sum(axis=2, dtype=np.uint64)
        allm = np.concatenate([(pos_bits[:, None] | extra).ravel(), (neg_bits[:, None] | extra).ravel()])
        return np.unique(allm)


@dataclass(frozen=True)
class SweepSchedule:
    """Critical directions of a planar point set and the projection order between them.

    ``orders[i]`` ranks points (ascending signed distance to the left of a
    directed line at angle phi) for every phi in
    ``(critical_angles[i-1], critical_angles[i])``; ``orders[0]`` covers the
    wrap-around interval through angle 0.
    """

    critical_angles: np.ndarray
    pairs: tuple[tuple[int, int], ...]
    orders: np.ndarray

    @property
    def pair_at_angle(self) -> dict[float, tuple[int, int]]:
        return dict(zip(self.critical_angles.tolist(), self.pairs))

    def interval_bounds(self) -> list[tuple[float, float]]:
        """Half-open ``[a, b)`` pieces of ``[0, 2pi)`` matching ``orders``."""
        ang = self.critical_angles
        if len(ang) == 0:
            return [(0.0, 2 * math.pi)]
        return [(float(ang[-1] - 2 * math.pi) if i == 0 else float(ang[i - 1]), float(ang[i])) for i in range(len(ang))]


def normal_projection(X: np.ndarray, phi) -> np.ndarray:
    """Signed offset of points to the left of a directed line at angle ``phi``."""
    phi = np.asarray(phi, dtype=float)
    return -np.sin(phi)[..., None] * X[:, 0] + np.cos(phi)[..., None] * X[:, 1]


def sweep_schedule(ps: PointSet) -> SweepSchedule:
    """Angles in ``[0, 2pi)`` at which two points swap in the projection order."""
    if ps.dim != 2:
        raise InputError("sweep needs planar points")
    ps.require_general_position()
    X = ps.coords
    ii, jj = np.triu_indices(ps.n, 1)
    dv = X[jj] - X[ii]
    theta = np.mod(np.arctan2(dv[:, 1], dv[:, 0]), 2 * np.pi)
    ang = np.concatenate([theta, np.mod(theta + np.pi, 2 * np.pi)])
    prs = list(zip(ii.tolist(), jj.tolist())) * 2
    order = np.argsort(ang, kind="stable")
    ang = ang[order]
    prs = tuple(prs[i] for i in order)
    if len(ang):
        prev = np.concatenate([[ang[-1] - 2 * np.pi], ang[:-1]])
        mids = 0.5 * (prev + ang)
    else:
        mids = np.array([0.0])
    proj = normal_projection(X, mids)
    orders = np.argsort(proj, axis=1, kind="stable")
    return SweepSchedule(ang, prs, orders)


def read_points_csv(path_or_text, has_label: bool = False):
    """Parse ``x,y[,z...][,label]`` CSV, keeping coordinates as exact decimal strings."""
    if isinstance(path_or_text, Path) or (isinstance(path_or_text, str) and "\n" not in path_or_text):
        text = Path(path_or_text).read_text()
    else:
        text = path_or_text
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip().lower() for h in next(reader)]
    except StopIteration:
        raise InputError("empty CSV") from None
    ncoord = len(header) - (1 if has_label else 0)
    if ncoord < 1 or (has_label and header[-1] != "label"):
        raise InputError(f"unexpected header: {header}")
    coords, labels = [], []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise InputError(f"line {lineno}: expected {len(header)} fields")
        coords.append([c.strip() for c in row[:ncoord]])
        if has_label:
            labels.append(row[-1].strip())
    if not coords:
        raise InputError("no data rows")
    return (coords, labels) if has_label else coords


def write_points_csv(ps: PointSet, path, labels: Sequence[str] | None = None) -> None:
    names = ["x", "y", "z"][: ps.dim] if ps.dim <= 3 else [f"x{i}" for i in range(ps.dim)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names + (["label"] if labels is not None else []))
        for i, row in enumerate(ps.coords):
            w.writerow([repr(float(v)) for v in row] + ([labels[i]] if labels is not None else []))
