"""Fractional interaction kernel |x|^(-(dim+s)) and pairwise quadrature weights.

A PairWeights object lists every unordered cell pair within the truncation
radius together with the quadrature weight used by the energies. Per offset
it also stores a rigorous enclosure [lo, hi] of the exact cell-pair
interaction integral, which the perimeter bracket accounting consumes:
the used weight is a quadrature choice, the enclosure is a fact about the
continuum integral.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from .grid import Grid

__all__ = [
    "KernelSpec",
    "PairWeights",
    "kernel_eval",
    "tail_mass",
    "build_pair_weights",
]

NEAR_FIELD_RULES = ("midpoint", "cell_averaged")


@dataclass(frozen=True)
class KernelSpec:
    s: float
    dim: int
    trunc_radius: float = math.inf
    near_field_rule: str = "cell_averaged"

    def __post_init__(self):
        if not 0.0 < self.s < 1.0:
            raise ValueError(f"s must lie strictly in (0, 1), got {self.s}")
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if not self.trunc_radius > 0:
            raise ValueError(f"trunc_radius must be positive, got {self.trunc_radius}")
        if self.near_field_rule not in NEAR_FIELD_RULES:
            raise ValueError(
                f"near_field_rule must be one of {NEAR_FIELD_RULES}, "
                f"got {self.near_field_rule!r}"
            )

    @property
    def exponent(self) -> float:
        return self.dim + self.s


def kernel_eval(offset, spec: KernelSpec) -> float | np.ndarray:
    """K(offset) = |offset|^(-(dim+s)).

    Accepts a scalar (1D), a coordinate vector, or an (m, dim) array of
    vectors; zero offsets are rejected (the kernel is singular there).
    """
    off = np.asarray(offset, dtype=float)
    if off.ndim == 0:
        r = np.abs(off)
    elif off.ndim == 1 and spec.dim == 1:
        r = np.abs(off)
    else:
        r = np.linalg.norm(off, axis=-1)
    if np.any(r == 0.0):
        raise ValueError("kernel is singular at zero offset")
    out = r ** (-spec.exponent)
    return float(out) if np.ndim(out) == 0 else out


def tail_mass(spec: KernelSpec, r: float) -> float:
    """Total kernel mass beyond radius r: |S^(dim-1)| * r^(-s) / s."""
    if not r > 0:
        raise ValueError(f"tail radius must be positive, got {r}")
    surface = 2.0 if spec.dim == 1 else 2.0 * math.pi
    return surface * r ** (-spec.s) / spec.s


def _pair_integral_1d(k, h: float, s: float):
    """Exact interaction of two 1D cells k apart: double integral of K.

    Second antiderivative of r^(-1-s) evaluated as a second difference of
    r^(1-s) across k-1, k, k+1 (the triangular difference density of two
    intervals). Exact for every k >= 1, including the adjacent k = 1.
    """
    k = np.asarray(k, dtype=float)
    e = 1.0 - s
    return -(h**e) * ((k + 1.0) ** e - 2.0 * k**e + (k - 1.0) ** e) / (s * e)


def _graded_panels(length: float, levels: int = 30, ratio: float = 0.35):
    """Split (0, length] into panels geometrically refined toward 0."""
    edges = length * ratio ** np.arange(levels + 1)
    panels = [(edges[m + 1], edges[m]) for m in range(levels)]
    panels.append((0.0, edges[-1]))
    return panels


def _axis_rule(ka: int, h: float, n_gl: int):
    """Quadrature for one axis of the reduced cell-pair integral.

    Integrates g against the triangle density (h - |u - ka*h|)+ over its
    support, grading panels toward u = 0 when the support touches the
    kernel singularity (ka <= 1).
    """
    if ka == 0:
        pos = _graded_panels(h)
        panels = [(-b, -a) for a, b in pos] + pos
    elif ka == 1:
        panels = _graded_panels(h) + [(h, 2.0 * h)]
    else:
        panels = [((ka - 1.0) * h, ka * h), (ka * h, (ka + 1.0) * h)]
    x, wq = leggauss(n_gl)
    nodes, weights = [], []
    for a, b in panels:
        mid, rad = 0.5 * (a + b), 0.5 * (b - a)
        nodes.append(mid + rad * x)
        weights.append(rad * wq)
    nodes = np.concatenate(nodes)
    weights = np.concatenate(weights)
    tent = h - np.abs(nodes - ka * h)
    return nodes, weights * tent


def _radial_moments(s: float, lo, hi):
    """Integrals of r^(p-1-s) over [lo, hi] for p = 0, 1, 2."""
    m0 = (lo ** (-s) - hi ** (-s)) / s
    m1 = (hi ** (1.0 - s) - lo ** (1.0 - s)) / (1.0 - s)
    m2 = (hi ** (2.0 - s) - lo ** (2.0 - s)) / (2.0 - s)
    return m0, m1, m2


def _edge_adjacent_integral(h: float, s: float, n_gl: int = 48) -> float:
    """Exact interaction of two edge-adjacent 2D cells (offset (0, 1)).

    Polar form around the singular corner: the radial factor of the two
    triangle densities is piecewise quadratic, so the radial integral is
    closed-form and only a smooth angular integral remains. Panels split
    where the radial breakpoint ordering changes.
    """
    x, wq = leggauss(n_gl)
    crit = [0.0, math.atan(1.0), math.atan(2.0), 0.5 * math.pi]
    total = 0.0
    for a, b in zip(crit[:-1], crit[1:]):
        th = 0.5 * (a + b) + 0.5 * (b - a) * x
        wt = 0.5 * (b - a) * wq
        c, sn = np.cos(th), np.sin(th)
        b1 = h / c
        b2 = h / sn
        b3 = 2.0 * h / sn
        m1 = np.minimum(b1, b2)
        # First leg: (h - r c)(r sn) from 0 to m1.
        i1 = h * sn * m1 ** (1.0 - s) / (1.0 - s) - c * sn * m1 ** (2.0 - s) / (2.0 - s)
        # Second leg where the far tent has folded: (h - r c)(2h - r sn).
        m2 = np.minimum(b1, b3)
        has2 = b2 < b1
        lo = np.where(has2, b2, 1.0)
        hi = np.where(has2, m2, 1.0)
        q0, q1, q2 = _radial_moments(s, lo, hi)
        i2 = np.where(has2, 2.0 * h * h * q0 - h * (sn + 2.0 * c) * q1 + c * sn * q2, 0.0)
        total += float(np.sum(wt * (i1 + i2)))
    return 2.0 * total


def _pair_integral_2d(ka: int, kb: int, h: float, s: float, n_gl: int = 12) -> float:
    """Exact interaction of two 2D cells at lattice offset (ka, kb).

    Reduced to the difference coordinate: the 4D cell-pair integral equals
    the 2D integral of K against the product of per-axis triangle densities.
    The edge-adjacent offset gets the dedicated polar rule; every other
    offset has at most a mild corner that graded panels resolve.
    """
    ka, kb = abs(ka), abs(kb)
    if {ka, kb} == {0, 1}:
        return _edge_adjacent_integral(h, s)
    x, wx = _axis_rule(ka, h, n_gl)
    y, wy = _axis_rule(kb, h, n_gl)
    rr = np.hypot(x[:, None], y[None, :])
    vals = rr ** (-(2.0 + s))
    return float(np.einsum("i,j,ij->", wx, wy, vals))


@dataclass(frozen=True)
class PairWeights:
    """Sparse symmetric pair quadrature: arrays i < j with one weight each.

    Pairs are grouped by lattice offset: offsets[m] owns the slice
    offset_start[m]:offset_start[m+1] of (i, j, w). offset_lo/offset_hi
    enclose the exact cell-pair interaction integral for that offset
    (independent of the near-field rule actually used for w).
    """

    grid: Grid
    spec: KernelSpec
    i: np.ndarray = field(repr=False)
    j: np.ndarray = field(repr=False)
    w: np.ndarray = field(repr=False)
    offsets: np.ndarray = field(repr=False)
    offset_start: np.ndarray = field(repr=False)
    offset_w: np.ndarray = field(repr=False)
    offset_lo: np.ndarray = field(repr=False)
    offset_hi: np.ndarray = field(repr=False)

    @property
    def n_pairs(self) -> int:
        return self.i.size

    def offset_distances(self) -> np.ndarray:
        """Physical center distance per offset."""
        return np.linalg.norm(self.offsets * self.grid.spacing, axis=1)

    def pair_counts(self) -> np.ndarray:
        return np.diff(self.offset_start)

    def pair_lo(self) -> np.ndarray:
        return np.repeat(self.offset_lo, self.pair_counts())

    def pair_hi(self) -> np.ndarray:
        return np.repeat(self.offset_hi, self.pair_counts())

    def dump_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("i,j,w\n")
            for a, b, c in zip(self.i, self.j, self.w):
                fh.write(f"{int(a)},{int(b)},{float(c)!r}\n")


def _offset_pairs_1d(n: int, k: int):
    i = np.arange(0, n - k, dtype=np.int32)
    return i, i + np.int32(k)


def _offset_pairs_2d(shape, a: int, b: int):
    n0, n1 = shape
    r = np.arange(max(0, -a), min(n0, n0 - a), dtype=np.int32)
    c = np.arange(max(0, -b), min(n1, n1 - b), dtype=np.int32)
    if r.size == 0 or c.size == 0:
        empty = np.empty(0, dtype=np.int32)
        return empty, empty
    i = (r[:, None] * np.int32(n1) + c[None, :]).ravel()
    return i, i + np.int32(a * n1 + b)


def build_pair_weights(grid: Grid, spec: KernelSpec) -> PairWeights:
    """Enumerate unordered cell pairs with center distance <= trunc_radius.

    Weights carry the full measure factor h^(2*dim). With the cell_averaged
    rule, pairs of adjacent cells (graph distance 1) get the exact cell-pair
    integral; every other pair gets the midpoint kernel value.
    """
    if spec.dim != grid.dim:
        raise ValueError(f"kernel dim {spec.dim} does not match grid dim {grid.dim}")
    h = grid.spacing
    if spec.trunc_radius < 2.0 * h:
        raise ValueError(
            f"trunc_radius {spec.trunc_radius} below 2h = {2.0 * h}"
        )
    # Inclusive cutoff, robust to h*k == trunc_radius rounding. An infinite
    # radius means every in-grid pair interacts.
    if math.isinf(spec.trunc_radius):
        kcap = float(max(grid.shape)) * 2.0
    else:
        kcap = spec.trunc_radius / h * (1.0 + 1e-12)
    averaged = spec.near_field_rule == "cell_averaged"
    measure = h ** (2 * grid.dim)

    i_parts, j_parts = [], []
    offsets, off_w, off_lo, off_hi = [], [], [], []

    if grid.dim == 1:
        n = grid.shape[0]
        kmax = min(n - 1, int(math.floor(kcap)))
        ks = np.arange(1, kmax + 1)
        exact = _pair_integral_1d(ks, h, spec.s)
        for k in ks:
            i, j = _offset_pairs_1d(n, int(k))
            i_parts.append(i)
            j_parts.append(j)
            offsets.append((int(k),))
            ex = float(exact[k - 1])
            if averaged and k == 1:
                off_w.append(ex)
            else:
                off_w.append((k * h) ** (-spec.exponent) * measure)
            # Closed form padded for the second-difference cancellation,
            # which grows like k^2 * eps.
            pad = ex * max(1e-13, 3e-15 * k * k)
            off_lo.append(ex - pad)
            off_hi.append(ex + pad)
    else:
        n0, n1 = grid.shape
        amax = min(n0 - 1, int(math.floor(kcap)))
        quad_cache: dict[tuple[int, int], float] = {}

        def enclosure(a: int, b: int):
            key = (min(abs(a), abs(b)), max(abs(a), abs(b)))
            if key not in quad_cache:
                quad_cache[key] = _pair_integral_2d(key[0], key[1], h, spec.s)
            q = quad_cache[key]
            slack = 1e-11 if key[1] <= 1 else 1e-12
            return q * (1.0 - slack), q * (1.0 + slack)

        for a in range(0, amax + 1):
            bcap = math.sqrt(max(kcap * kcap - a * a, 0.0))
            bmax = min(n1 - 1, int(math.floor(bcap)))
            b_lo = 1 if a == 0 else -bmax
            for b in range(b_lo, bmax + 1):
                if a == 0 and b <= 0:
                    continue
                if a * a + b * b > kcap * kcap:
                    continue
                i, j = _offset_pairs_2d(grid.shape, a, b)
                if i.size == 0:
                    continue
                i_parts.append(i)
                j_parts.append(j)
                offsets.append((a, b))
                dist = math.hypot(a, b) * h
                adjacent = {abs(a), abs(b)} == {0, 1}
                lo, hi = enclosure(a, b)
                if averaged and adjacent:
                    off_w.append(0.5 * (lo + hi))
                else:
                    off_w.append(dist ** (-spec.exponent) * measure)
                off_lo.append(lo)
                off_hi.append(hi)

    if not offsets:
        raise ValueError("no interacting pairs: grid too small for trunc_radius")

    counts = np.array([p.size for p in i_parts], dtype=np.int64)
    start = np.concatenate([[0], np.cumsum(counts)])
    i = np.concatenate(i_parts)
    j = np.concatenate(j_parts)
    off_w = np.asarray(off_w)
    w = np.repeat(off_w, counts)
    pw = PairWeights(
        grid=grid,
        spec=spec,
        i=i,
        j=j,
        w=w,
        offsets=np.asarray(offsets, dtype=np.int64),
        offset_start=start,
        offset_w=off_w,
        offset_lo=np.asarray(off_lo),
        offset_hi=np.asarray(off_hi),
    )
    for arr in (pw.i, pw.j, pw.w, pw.offsets, pw.offset_start, pw.offset_w,
                pw.offset_lo, pw.offset_hi):
        arr.setflags(write=False)
    return pw
