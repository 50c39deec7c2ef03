"""Checks on computed profiles that do not trust the minimizer: discrete
Euler-Lagrange residuals, the Pohozaev identity, exact scaling laws, a
shooting-method ODE oracle, k-invariance and pairwise distinctness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import PchipInterpolator

from . import energy as en
from .grid import Profile, RadialGrid, make_grid, neg_laplacian, rescale_grid, resample
from .model import NonlinearitySpec, SystemSpec

__all__ = [
    "VerifyReport",
    "ShotResult",
    "BracketError",
    "el_residual",
    "pohozaev_defect",
    "boundary_tail",
    "scaling_law_check",
    "classify_shots",
    "shoot_ground",
    "relative_gap",
    "k_invariance_check",
    "distinctness",
    "verify_solution",
]

INTERIOR = 0.95  # residual L-inf and tail split at this fraction of R

Spec = Union[NonlinearitySpec, SystemSpec]


class BracketError(ValueError):
    pass


def _forcing(v: Profile, spec: Spec) -> np.ndarray:
    if isinstance(spec, SystemSpec):
        a, b = v.values
        return np.stack((spec.grad_u(a, b), spec.grad_v(a, b)))
    return spec.g(v.values)


def el_residual(v: Profile, spec: Spec) -> tuple:
    """Weighted L2 and interior L-inf norms of (-Delta_h v) - g(v).

    Nodes 0..M-1 enter; the Dirichlet node carries no equation.
    """
    grid = v.grid
    rho = np.atleast_2d(neg_laplacian(grid, v.values) - _forcing(v, spec))[:, :-1]
    w = grid.weights[:-1]
    L2 = math.sqrt(grid.omega * float(np.sum(w * rho * rho)))
    inner = grid.radii[:-1] < INTERIOR * grid.R
    Linf = float(np.max(np.abs(rho[:, inner]))) if np.any(inner) else 0.0
    return L2, Linf


def pohozaev_defect(v: Profile, spec: Spec) -> tuple:
    """P = (N-2)/2 int|grad v|^2 - N int G(v), and |P| / int|grad v|^2.

    The normalized value is NaN for v = 0.
    """
    N = v.grid.N
    grad2 = 2.0 * en.phi(v)
    P = 0.5 * (N - 2) * grad2 - N * en.psi(v, spec)
    return P, (abs(P) / grad2 if grad2 > 0 else math.nan)


def boundary_tail(v: Profile) -> float:
    """max |v| over the outer 5% of radii."""
    outer = v.grid.radii >= INTERIOR * v.grid.R
    return float(np.max(np.abs(np.atleast_2d(v.values)[:, outer])))


def scaling_law_check(profile: Profile, t: float, spec: Optional[Spec] = None) -> tuple:
    """Relative errors of Phi(phi_t) = t^{N-2} Phi and Psi(phi_t) = t^N Psi
    for the dilation phi_t(x) = phi(x / t)."""
    if not t > 0:
        raise ValueError("dilation factor must be positive")
    N = profile.grid.N
    dil = rescale_grid(profile, t * t)

    def rel(a, b):
        return abs(a - b) / abs(b) if b != 0 else abs(a)

    err_phi = rel(en.phi(dil), t ** (N - 2) * en.phi(profile))
    if spec is None:
        return err_phi, 0.0
    err_psi = rel(en.psi(dil, spec), t**N * en.psi(profile, spec))
    return err_phi, err_psi


# ---------------------------------------------------------------------------
# shooting oracle

UNDERSHOOT = "undershoot"
OVERSHOOT = "overshoot"
CONVERGED = "converged"
BLOWUP = 1e8


@dataclass
class ShotResult:
    alpha: float
    bracket: tuple
    rounds: int
    profile: Profile = field(repr=False)
    departure_radius: float = math.nan
    classification: str = CONVERGED
    pohozaev_normalized: float = math.nan


def classify_shots(spec: NonlinearitySpec, N: int, alphas, R: float, n_steps: int = 2**16,
                   store: bool = False):
    """Integrate u'' + (N-1)/r u' + g(u) = 0 from u(0) = alpha by RK4.

    Labels: a trajectory that reaches zero (or blows up) is an
    ``overshoot`` (central value too high); one that turns back upward
    while still positive is an ``undershoot`` (too low); one that does
    neither before R is ``converged``.  Returns (labels, radii at which
    the label was decided) and, with ``store``, the sampled trajectory.
    """
    alphas = np.atleast_1d(np.asarray(alphas, dtype=float))
    h = R / n_steps
    g = spec.g
    r = h
    ga = g(alphas)
    u = alphas - ga * h * h / (2.0 * N)
    p = -ga * h / N
    status = np.zeros(alphas.size, dtype=int)  # 0 running, 1 over, -1 under
    where = np.full(alphas.size, float(R))
    path = [np.array(alphas), u.copy()] if store else None
    slopes = [np.zeros_like(alphas), p.copy()] if store else None
    nm1 = N - 1.0

    def rhs(rr, uu, pp):
        return pp, -nm1 / rr * pp - g(uu)

    with np.errstate(all="ignore"):
        for step in range(1, n_steps):
            k1u, k1p = rhs(r, u, p)
            k2u, k2p = rhs(r + 0.5 * h, u + 0.5 * h * k1u, p + 0.5 * h * k1p)
            k3u, k3p = rhs(r + 0.5 * h, u + 0.5 * h * k2u, p + 0.5 * h * k2p)
            k4u, k4p = rhs(r + h, u + h * k3u, p + h * k3p)
            u = u + h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
            p = p + h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
            r = (step + 1) * h
            if store:
                path.append(u.copy())
                slopes.append(p.copy())
            if step % 8 == 0 or step == n_steps - 1:
                run = status == 0
                over = run & ((u <= 0) | ~np.isfinite(u) | (np.abs(u) > BLOWUP))
                under = run & ~over & (p > 0)
                status[over] = 1
                status[under] = -1
                where[over | under] = r
                if not store:
                    done = status != 0
                    u[done] = 0.0
                    p[done] = 0.0
                    if np.all(done):
                        break
    labels = np.where(status == 1, OVERSHOOT, np.where(status == -1, UNDERSHOOT, CONVERGED))
    if store:
        return labels, where, np.array(path), np.array(slopes)
    return labels, where


def shoot_ground(spec: NonlinearitySpec, N: int, bracket=(4.0, 5.0), R: float = 30.0,
                 M: int = 2048, bisections: int = 60, points: int = 63) -> ShotResult:
    """Ground-state profile by multisection on the central value.

    Each round classifies ``points`` equispaced interior shots, which
    narrows the bracket by a factor points + 1; rounds continue until the
    equivalent of ``bisections`` halvings or the bracket width reaches
    machine resolution.
    """
    if spec.case != "positive-mass":
        raise ValueError("the shooting oracle handles positive-mass nonlinearities only")
    lo, hi = float(bracket[0]), float(bracket[1])
    if not lo < hi:
        raise BracketError("bracket-invalid: need lo < hi")
    ends, _ = classify_shots(spec, N, [lo, hi], R)
    if ends[0] == ends[1]:
        raise BracketError(f"bracket-invalid: both ends classified {ends[0]}")
    if ends[0] == OVERSHOOT or ends[1] == UNDERSHOOT:
        raise BracketError("bracket-invalid: expected undershoot at lo and overshoot at hi")
    bits_per_round = math.log2(points + 1)
    rounds = int(math.ceil(bisections / bits_per_round))
    done_rounds = 0
    found = None
    for done_rounds in range(1, rounds + 1):
        if hi - lo <= 4.0 * np.spacing(hi):
            break
        alphas = lo + (hi - lo) * np.arange(1, points + 1) / (points + 1)
        labels, _ = classify_shots(spec, N, alphas, R)
        conv = np.nonzero(labels == CONVERGED)[0]
        if conv.size:
            found = float(alphas[conv[0]])
            break
        over = np.nonzero(labels == OVERSHOOT)[0]
        first_over = over[0] if over.size else points
        if first_over > 0:
            lo = float(alphas[first_over - 1])
        if first_over < points:
            hi = float(alphas[first_over])
    alpha = found if found is not None else lo
    labels, where, path, slopes = classify_shots(spec, N, [alpha], R, store=True)
    n_steps = path.shape[0] - 1
    rr = np.linspace(0.0, R, n_steps + 1)
    u = path[:, 0]
    # cut the shot where it departs from the decaying branch
    cut = int(np.argmin(np.where(np.isfinite(u), np.abs(u), np.inf)))
    if labels[0] == UNDERSHOOT:
        cut = min(cut, int(round(where[0] / (R / n_steps))))
    u = np.where(np.arange(u.size) <= cut, u, 0.0)
    u = np.maximum(u, 0.0)
    du = np.where(np.arange(u.size) <= cut, slopes[:, 0], 0.0)
    Pn = _ode_pohozaev(spec, N, rr, u, du)
    grid = make_grid(N, R, M, "uniform")
    vals = PchipInterpolator(rr, u)(grid.radii)
    vals[-1] = 0.0
    return ShotResult(alpha, (lo, hi), done_rounds, Profile(grid, vals), float(rr[cut]),
                      str(labels[0]), Pn)


def _ode_pohozaev(spec, N, r, u, du) -> float:
    """Normalized Pohozaev defect on the RK4 mesh using the integrated u'."""
    w = r ** (N - 1)
    grad2 = simpson(du * du * w, x=r)
    pot = simpson(spec.G(u) * w, x=r)
    return abs(0.5 * (N - 2) * grad2 - N * pot) / grad2


# ---------------------------------------------------------------------------
# comparisons


def relative_gap(a: Profile, b: Profile, grid: Optional[RadialGrid] = None) -> float:
    """max |a - b| / max(|a|, |b|) after resampling both onto ``grid``
    (default: the grid of ``a``)."""
    grid = grid or a.grid
    A = resample(a, grid, strict=False).values
    B = resample(b, grid, strict=False).values
    scale = max(float(np.max(np.abs(A))), float(np.max(np.abs(B))))
    if scale == 0:
        return 0.0
    return float(np.max(np.abs(A - B))) / scale


def k_invariance_check(spec: NonlinearitySpec, grid: RadialGrid, k1: float, k2: float,
                       config: Optional[en.TrickConfig] = None) -> float:
    """Relative L-inf gap between the absorbed solutions for two exponents."""
    from dataclasses import replace

    from .solver import solve_ground

    config = config or en.TrickConfig()
    a = solve_ground(spec, replace(config, k=k1), grid)
    if k1 == k2:
        return 0.0
    b = solve_ground(spec, replace(config, k=k2), grid)
    return relative_gap(a.solution, b.solution, grid)


def distinctness(vs: Sequence[Profile]) -> dict:
    """Pairwise relative L-inf gaps and Dirichlet-norm gaps.

    Returns ``{"linf": matrix, "grad2": matrix}`` with
    grad2[i][j] = | ||grad v_i||^2 - ||grad v_j||^2 |.
    """
    if len(vs) < 2:
        raise ValueError("distinctness needs at least two profiles")
    n = len(vs)
    common = vs[0].grid
    norms = [2.0 * en.phi(v) for v in vs]
    linf = np.zeros((n, n))
    grad2 = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            linf[i, j] = linf[j, i] = relative_gap(vs[i], vs[j], common)
            grad2[i, j] = grad2[j, i] = abs(norms[i] - norms[j])
    return {"linf": linf.tolist(), "grad2": grad2.tolist(), "grad_norm2": norms}


@dataclass
class VerifyReport:
    residual_L2w: float
    residual_Linf_interior: float
    residual_rel: float
    pohozaev: float
    pohozaev_normalized: float
    boundary_tail: float
    boundary_tail_rel: float
    oracle_gap: Optional[float] = None
    oracle_central: Optional[float] = None
    central_value: Optional[float] = None
    pohozaev_richardson: Optional[float] = None
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def verify_solution(v: Profile, spec: Spec, oracle: Optional[ShotResult] = None,
                    pohozaev_fine: Optional[Profile] = None) -> VerifyReport:
    """Collect residual, Pohozaev and tail diagnostics for one solution.

    ``pohozaev_fine`` is the same problem solved with twice the nodes; when
    given, the defect is Richardson-extrapolated from the pair.
    """
    L2, Linf = el_residual(v, spec)
    gmax = float(np.max(np.abs(_forcing(v, spec))))
    P, Pn = pohozaev_defect(v, spec)
    tail = boundary_tail(v)
    vmax = v.max_abs()
    rep = VerifyReport(
        residual_L2w=L2,
        residual_Linf_interior=Linf,
        residual_rel=Linf / gmax if gmax > 0 else 0.0,
        pohozaev=P,
        pohozaev_normalized=Pn,
        boundary_tail=tail,
        boundary_tail_rel=tail / vmax if vmax > 0 else 0.0,
        central_value=float(np.atleast_2d(v.values)[0, 0]),
        notes=["the Pohozaev identity is a classical external fact used as an oracle"],
    )
    if oracle is not None:
        rep.oracle_gap = relative_gap(v, oracle.profile, oracle.profile.grid)
        rep.oracle_central = oracle.alpha
    if pohozaev_fine is not None:
        # second-order extrapolation of the signed normalized defect
        Pf, _ = pohozaev_defect(pohozaev_fine, spec)
        sn = P / (2.0 * en.phi(v))
        sf = Pf / (2.0 * en.phi(pohozaev_fine))
        rep.pohozaev_richardson = abs((4.0 * sf - sn) / 3.0)
    return rep
