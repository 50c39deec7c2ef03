"""Energies Phi, Psi, J and the reparametrized J_h = h(Phi) - Psi on radial
grids, with exact gradients of the discrete forms.

Throughout, h(t) = t^k / k so that h'(t) = t^(k-1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Union

import numpy as np
from scipy.linalg import solve_banded

from .grid import Profile, RadialGrid, dirichlet_energy, integrate_radial, stiffness_apply
from .model import NonlinearitySpec, SystemSpec

__all__ = [
    "ConfigError",
    "TrickConfig",
    "h_eval",
    "h_prime",
    "choose_k",
    "k_bound",
    "phi",
    "psi",
    "J",
    "Jh",
    "grad_Jh",
    "euclidean_gradient",
    "precondition",
    "preconditioned_norm",
]

Spec = Union[NonlinearitySpec, SystemSpec]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrickConfig:
    """Exponent, optimizer tolerances and seed parameters.

    ``k=None`` means "choose automatically".  ``tol_g`` bounds the
    preconditioned gradient relative to its Dirichlet part, ``tol_E``
    the relative energy decrease over 10 iterations.
    """

    k: Optional[float] = None
    gradient: str = "sobolev"
    tol_g: float = 1e-8
    tol_E: float = 1e-10
    max_iters: int = 5000
    rearrange: bool = True
    rearrange_every: int = 25
    xi: Optional[float] = None
    t_plateau: float = 1.0
    skirt: float = 1.0
    scale_tol: float = 1e-4
    max_rounds: int = 8
    force: bool = False
    witness: Optional[tuple] = None

    def __post_init__(self):
        if self.gradient not in ("sobolev", "euclidean"):
            raise ConfigError(f"gradient mode must be 'sobolev' or 'euclidean', got {self.gradient!r}")
        if not (self.tol_g > 0 and self.tol_E > 0):
            raise ConfigError("tolerances must be positive")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be at least 1")
        if self.t_plateau <= 0 or self.skirt <= 0:
            raise ConfigError("plateau radius and skirt width must be positive")

    def resolve(self, spec: Spec, N: int) -> "TrickConfig":
        """Fill in k and check it against the bound for the case."""
        case = "system" if isinstance(spec, SystemSpec) else spec.case
        q = spec.q if case == "zero-mass-multi" else None
        bound = k_bound(case, N, q)
        k = choose_k(case, N, q) if self.k is None else float(self.k)
        if not k > bound:
            raise ConfigError(f"k = {k:g} must exceed {bound:g} for case {case} in N = {N}")
        return replace(self, k=k)

    def to_dict(self) -> dict:
        out = {f: getattr(self, f) for f in self.__dataclass_fields__}
        if out["witness"] is not None:
            out["witness"] = list(out["witness"])
        return out


def h_eval(k: float, t):
    return np.asarray(t, dtype=float) ** k / k if np.ndim(t) else float(t) ** k / k


def h_prime(k: float, t):
    return np.asarray(t, dtype=float) ** (k - 1.0) if np.ndim(t) else float(t) ** (k - 1.0)


def k_bound(case: str, N: int, q: Optional[float] = None) -> float:
    if N < 3:
        raise ConfigError("dimension must be at least 3")
    bound = N / (N - 2.0)
    if case == "zero-mass-multi":
        if q is None:
            raise ConfigError("the multiplicity case needs q")
        bound = max(bound, q / 2.0)
    elif q is not None:
        raise ConfigError("q is only meaningful in the zero-mass-multi case")
    return bound


def choose_k(case: str, N: int, q: Optional[float] = None) -> int:
    """Smallest integer strictly above the admissible bound."""
    return int(math.floor(k_bound(case, N, q))) + 1


# ---------------------------------------------------------------------------
# functionals


def phi(profile: Profile) -> float:
    return dirichlet_energy(profile)


def _density(profile: Profile, spec: Spec) -> np.ndarray:
    if isinstance(spec, SystemSpec):
        if profile.components != 2:
            raise ValueError("a system potential needs a two-component profile")
        return spec.potential(profile.values[0], profile.values[1])
    if profile.components != 1:
        raise ValueError("a scalar nonlinearity needs a one-component profile")
    return spec.G(profile.values)


def psi(profile: Profile, spec: Spec) -> float:
    return integrate_radial(profile.grid, _density(profile, spec))


def J(profile: Profile, spec: Spec) -> float:
    return phi(profile) - psi(profile, spec)


def Jh(profile: Profile, spec: Spec, k: float) -> float:
    return h_eval(k, phi(profile)) - psi(profile, spec)


def _forcing(profile: Profile, spec: Spec) -> np.ndarray:
    """Nodal g(u) (scalar) or (F_u, F_v) (system), shaped like the values."""
    if isinstance(spec, SystemSpec):
        u, v = profile.values
        return np.stack((spec.grad_u(u, v), spec.grad_v(u, v)))
    return spec.g(profile.values)


def euclidean_gradient(profile: Profile, spec: Spec, k: float, Phi: Optional[float] = None):
    """Exact gradient of the discrete J_h with respect to nodal values.

    Returns ``(grad, grad_phi)`` where ``grad_phi`` is the h'(Phi) dPhi
    part alone.  Entries at the Dirichlet node R are zero.
    """
    grid = profile.grid
    if Phi is None:
        Phi = phi(profile)
    vals = np.atleast_2d(profile.values)
    Au = np.stack([stiffness_apply(grid, c) for c in vals])
    gphi = grid.omega * h_prime(k, Phi) * Au
    gpsi = grid.omega * grid.weights * np.atleast_2d(_forcing(profile, spec))
    grad = gphi - gpsi
    grad[:, -1] = 0.0
    gphi[:, -1] = 0.0
    shape = profile.values.shape
    return grad.reshape(shape), gphi.reshape(shape)


def _banded(grid: RadialGrid, a: float, c: float) -> np.ndarray:
    """Interior (nodes 0..M-1) tridiagonal of omega * (a*A + c*W)."""
    kap = grid.kappa
    M = grid.M
    diag = np.zeros(M)
    diag += kap[:M]
    diag[1:] += kap[: M - 1]
    ab = np.zeros((3, M))
    ab[0, 1:] = -a * kap[: M - 1]
    ab[1] = a * diag + c * grid.weights[:M]
    ab[2, :-1] = -a * kap[: M - 1]
    return grid.omega * ab


def precondition(grid: RadialGrid, vec: np.ndarray, a: float, c: float) -> np.ndarray:
    """Solve omega*(a*A + c*W) d = vec on the interior nodes (d_M = 0)."""
    if a <= 0.0 and c <= 0.0:
        a = 1.0  # only reached at the trivial profile
    ab = _banded(grid, a, c)
    vals = np.atleast_2d(vec)
    out = np.zeros_like(vals, dtype=float)
    for i, row in enumerate(vals):
        out[i, :-1] = solve_banded((1, 1), ab, row[:-1])
    return out.reshape(np.shape(vec))


def _shift(spec: Spec) -> float:
    if isinstance(spec, SystemSpec):
        return 2.0 * spec.m
    return spec.m


def grad_Jh(profile: Profile, spec: Spec, config: Union[TrickConfig, float]) -> np.ndarray:
    """Descent-ready gradient of J_h.

    Euclidean mode returns the exact nodal gradient.  Sobolev mode returns
    P^{-1} grad with P = omega*(h'(Phi) A + c W), c = m for positive mass
    (2m for systems) and 0 for zero mass.
    """
    if isinstance(config, TrickConfig):
        k, mode = config.k, config.gradient
    else:
        k, mode = float(config), "euclidean"
    if k is None:
        raise ConfigError("resolve k before computing gradients")
    Phi = phi(profile)
    grad, _ = euclidean_gradient(profile, spec, k, Phi)
    if mode == "euclidean":
        return grad
    return precondition(profile.grid, grad, h_prime(k, Phi), _shift(spec))


def preconditioned_norm(grid: RadialGrid, vec: np.ndarray, a: float, c: float) -> float:
    d = precondition(grid, vec, a, c)
    return math.sqrt(max(float(np.sum(d * vec)), 0.0))
