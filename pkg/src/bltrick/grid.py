"""Radial grids on the ball B_R in R^N and profiles living on them.

A radial function is stored by its nodal values u_0..u_M at radii
0 = r_0 < ... < r_M = R, with u_M = 0 (Dirichlet truncation).  Integrals
against dx become omega * sum_i w_i f_i, where w_i is the exact measure
int r^{N-1} dr of the dual cell around node i and omega = |S^{N-1}|.

The Dirichlet energy is the edge sum

    Phi(u) = 1/2 * omega * sum_e ((u_{e+1} - u_e) / dr_e)^2 * rbar_e^{N-1} * dr_e

with rbar_e the edge midpoint.  Every quantity above is homogeneous in the
radii, so dilating a grid (:func:`rescale_grid`) is an exact change of
variables with no interpolation error.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.interpolate import PchipInterpolator

__all__ = [
    "GridError",
    "TruncationLossError",
    "RadialGrid",
    "Profile",
    "sphere_area",
    "make_grid",
    "grid_from_radii",
    "integrate_radial",
    "dirichlet_energy",
    "stiffness_apply",
    "neg_laplacian",
    "rescale_grid",
    "resample",
    "rearrange_radial",
    "profile_to_csv",
    "profile_from_csv",
]


class GridError(ValueError):
    pass


class TruncationLossError(GridError):
    pass


def sphere_area(N: int) -> float:
    """Area of the unit sphere S^{N-1} in R^N."""
    return 2.0 * math.pi ** (N / 2.0) / math.gamma(N / 2.0)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Nodes, dual-cell measures and edge data for a radial discretization.

    ``bounds`` holds the dual-cell boundaries b_0 = 0 <= b_1 <= ... <= b_{M+1} = R;
    by default they are the edge midpoints.
    """

    N: int
    radii: np.ndarray
    grading: tuple = ("uniform",)
    bounds: np.ndarray = None
    omega: float = field(init=False)
    dr: np.ndarray = field(init=False)
    rbar: np.ndarray = field(init=False)
    weights: np.ndarray = field(init=False)
    kappa: np.ndarray = field(init=False)

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float)
        if r.ndim != 1 or r.size < 17:
            raise GridError("a radial grid needs at least M = 16 edges")
        if r[0] != 0.0:
            raise GridError("the first node must sit at r = 0")
        dr = np.diff(r)
        if not np.all(dr > 0) or not np.all(np.isfinite(r)):
            raise GridError("radii must be finite and strictly increasing")
        if self.N < 3:
            raise GridError("dimension N must be at least 3")
        if self.bounds is None:
            b = np.concatenate(([0.0], 0.5 * (r[:-1] + r[1:]), [r[-1]]))
        else:
            b = np.asarray(self.bounds, dtype=float)
            if b.shape != (r.size + 1,) or np.any(np.diff(b) < 0) or b[0] != 0 or b[-1] != r[-1]:
                raise GridError("dual-cell bounds must increase from 0 to R")
        N = self.N
        rbar = 0.5 * (r[:-1] + r[1:])
        object.__setattr__(self, "radii", _frozen(r))
        object.__setattr__(self, "bounds", _frozen(b))
        object.__setattr__(self, "omega", sphere_area(N))
        object.__setattr__(self, "dr", _frozen(dr))
        object.__setattr__(self, "rbar", _frozen(rbar))
        object.__setattr__(self, "weights", _frozen((b[1:] ** N - b[:-1] ** N) / N))
        object.__setattr__(self, "kappa", _frozen(rbar ** (N - 1) / dr))

    @property
    def M(self) -> int:
        return self.radii.size - 1

    @property
    def R(self) -> float:
        return float(self.radii[-1])

    def describe(self) -> dict:
        return {"N": self.N, "M": self.M, "R": self.R, "grading": list(self.grading)}


@dataclass(frozen=True, eq=False)
class Profile:
    """Nodal values of a radial function (shape (M+1,), or (c, M+1) for c components)."""

    grid: RadialGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape[-1] != self.grid.M + 1 or v.ndim not in (1, 2):
            raise GridError(
                f"profile has {v.shape[-1]} nodes, grid has {self.grid.M + 1}"
            )
        if not np.all(np.isfinite(v)):
            raise GridError("profile values must be finite")
        if np.any(v[..., -1] != 0.0):
            raise GridError("profile must vanish at r = R (u_M = 0)")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def components(self) -> int:
        return 1 if self.values.ndim == 1 else self.values.shape[0]

    def component(self, i: int) -> "Profile":
        if self.values.ndim == 1:
            if i != 0:
                raise IndexError(i)
            return self
        return Profile(self.grid, self.values[i])

    def with_values(self, values: np.ndarray) -> "Profile":
        return Profile(self.grid, values)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))


def grid_from_radii(N: int, radii, grading=("custom",), bounds=None) -> RadialGrid:
    return RadialGrid(N, np.asarray(radii, dtype=float), tuple(grading), bounds)


def _geometric_radii(R: float, M: int, ratio: float) -> np.ndarray:
    # spacings grow by `ratio` over the first quarter of the cells, then stay
    # constant; the base spacing is chosen so the cells sum to R
    n_graded = M // 4
    expo = np.minimum(np.arange(M), n_graded)
    h = ratio ** expo.astype(float)
    h *= R / h.sum()
    r = np.concatenate(([0.0], np.cumsum(h)))
    r[-1] = R
    return r


def make_grid(N: int, R: float, M: int, grading: Union[str, tuple, dict] = "uniform") -> RadialGrid:
    """Build a grid on [0, R] with M edges.

    ``grading`` is ``"uniform"``, ``("geometric", ratio)`` /
    ``{"geometric": ratio}`` with ratio in [1, 1.1], or ``"equal-measure"``
    (every dual cell carries the same measure).
    """
    if N < 3:
        raise GridError("dimension N must be at least 3")
    if not R > 0:
        raise GridError("truncation radius R must be positive")
    if M < 16:
        raise GridError("need M >= 16 edges")
    grading = _normalize_grading(grading)
    kind = grading[0]
    if kind == "uniform":
        r = np.linspace(0.0, R, M + 1)
        return RadialGrid(N, r, grading)
    if kind == "geometric":
        ratio = grading[1]
        if not 1.0 <= ratio <= 1.1:
            raise GridError("geometric ratio must lie in [1.0, 1.1]")
        return RadialGrid(N, _geometric_radii(R, M, ratio), grading)
    if kind == "equal-measure":
        # M+1 cells of equal measure R^N / (N (M+1)); nodes at cell centres,
        # pinned to 0 and R at the two ends
        b = R * (np.arange(M + 2) / (M + 1)) ** (1.0 / N)
        r = 0.5 * (b[:-1] + b[1:])
        r[0] = 0.0
        r[-1] = R
        return RadialGrid(N, r, grading, b)
    raise GridError(f"unknown grading {kind!r}")


def _normalize_grading(grading) -> tuple:
    if isinstance(grading, str):
        if grading == "geometric":
            return ("geometric", 1.01)
        return (grading,)
    if isinstance(grading, dict):
        if len(grading) != 1:
            raise GridError(f"bad grading descriptor {grading!r}")
        (kind, arg), = grading.items()
        return (kind, float(arg))
    grading = tuple(grading)
    if grading and grading[0] == "geometric":
        return ("geometric", float(grading[1]) if len(grading) > 1 else 1.01)
    return grading


def integrate_radial(grid: RadialGrid, values) -> float:
    """omega * sum_i w_i f_i: the integral over B_R of a radial function."""
    f = np.asarray(values, dtype=float)
    return float(grid.omega * np.dot(grid.weights, f))


def dirichlet_energy(profile: Profile) -> float:
    """Phi(u) = 1/2 int |grad u|^2 dx in the edge-sum form (summed over components)."""
    g = profile.grid
    du = np.diff(profile.values, axis=-1)
    return float(0.5 * g.omega * np.sum(g.kappa * du * du))


def stiffness_apply(grid: RadialGrid, values: np.ndarray) -> np.ndarray:
    """(A u)_i = dPhi/du_i / omega, the conservative finite-volume flux balance."""
    flux = grid.kappa * np.diff(values, axis=-1)
    out = np.zeros_like(values, dtype=float)
    out[..., :-1] -= flux
    out[..., 1:] += flux
    return out


def neg_laplacian(grid: RadialGrid, values: np.ndarray) -> np.ndarray:
    """(-Delta_h u)_i = (A u)_i / w_i at every node (the last entry is meaningless)."""
    return stiffness_apply(grid, values) / grid.weights


def rescale_grid(profile: Profile, lam: float) -> Profile:
    """Push u forward under x -> sqrt(lam) x: radii scale, values are untouched."""
    if not lam > 0:
        raise GridError("scale multiplier must be positive")
    g = profile.grid
    s = math.sqrt(lam)
    new = RadialGrid(g.N, g.radii * s, g.grading, g.bounds * s)
    return Profile(new, profile.values)


def resample(profile: Profile, target: RadialGrid, strict: bool = True) -> Profile:
    """Monotone piecewise-cubic (PCHIP) transfer of values onto ``target``.

    Radii beyond the source's R get 0.  When the target is shorter than the
    source, the clipped part must be below 1e-8 * max|u| (``strict``) or a
    TruncationLossError is raised.
    """
    src = profile.grid
    if target.N != src.N:
        raise GridError("dimension mismatch")
    vals = np.atleast_2d(profile.values)
    scale = float(np.max(np.abs(vals))) if vals.size else 0.0
    if target.R < src.R and strict:
        beyond = src.radii > target.R
        lost = float(np.max(np.abs(vals[:, beyond]))) if np.any(beyond) else 0.0
        if lost > 1e-8 * scale:
            raise TruncationLossError(
                f"resampling onto R={target.R:g} drops |u| up to {lost:.3e}"
            )
    if (
        target.radii.size == src.radii.size
        and np.array_equal(target.radii, src.radii)
    ):
        return Profile(target, profile.values)
    out = np.zeros((vals.shape[0], target.M + 1))
    inside = target.radii <= src.R
    for c in range(vals.shape[0]):
        interp = PchipInterpolator(src.radii, vals[c], extrapolate=False)
        out[c, inside] = interp(target.radii[inside])
    out[:, -1] = 0.0
    out = np.nan_to_num(out)
    if profile.values.ndim == 1:
        out = out[0]
    return Profile(target, out)


def rearrange_radial(profile: Profile) -> Profile:
    """Discrete decreasing rearrangement: |u| sorted decreasingly along the radius.

    The multiset of values is preserved exactly.  On grids whose dual cells
    all carry equal measure, integrals of f(u) are preserved as well.
    """
    if profile.values.ndim != 1:
        raise GridError("rearrangement is defined for scalar profiles")
    a = np.abs(profile.values)
    return Profile(profile.grid, np.sort(a)[::-1])


def profile_to_csv(profile: Profile) -> str:
    vals = np.atleast_2d(profile.values)
    names = ["r", "u", "v", "w"][: vals.shape[0] + 1]
    buf = io.StringIO()
    buf.write(",".join(names) + "\n")
    for i, r in enumerate(profile.grid.radii):
        row = [r] + [vals[c, i] for c in range(vals.shape[0])]
        buf.write(",".join(f"{x:.17g}" for x in row) + "\n")
    return buf.getvalue()


def profile_from_csv(text: str, N: int) -> Profile:
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    header = lines[0].split(",")
    if header[0] != "r":
        raise GridError("profile CSV must start with an 'r' column")
    data = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]])
    grid = grid_from_radii(N, data[:, 0])
    values = data[:, 1] if data.shape[1] == 2 else data[:, 1:].T
    return Profile(grid, values)
