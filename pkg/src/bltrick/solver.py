"""Global minimization of J_h followed by absorption of the multiplier.

A minimizer u* of J_h = h(Phi) - Psi satisfies h'(Phi(u*)) (-Delta u*) = g(u*).
With lam = 1/h'(Phi(u*)) the dilated profile v(x) = u*(x / sqrt(lam)) solves
-Delta v = g(v), and on the radial grids used here this holds exactly for
the discrete operators because they are scale covariant.

Energies of the minimizer are tiny when the target grid is used directly, so
every solve works on a dilated copy of the target grid and iterates the
dilation until the absorbed solution lands back on the target radii.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.linalg import solve_banded

from . import energy as en
from .grid import (
    GridError,
    Profile,
    RadialGrid,
    rearrange_radial,
    rescale_grid,
    resample,
    stiffness_apply,
)
from .model import (
    XI_SCAN,
    GTableRangeError,
    ModelError,
    NoPositiveGError,
    NonlinearitySpec,
    SystemSpec,
    check_conditions,
    critical_exponent,
)

__all__ = [
    "SolverError",
    "HypothesisError",
    "NoNegativeLevelError",
    "ZeroMinimizerError",
    "ProbeFailedError",
    "MinimizeResult",
    "SolveReport",
    "default_plateau_height",
    "build_plateau_seed",
    "find_negative_seed",
    "optimal_dilation",
    "minimize_Jh",
    "newton_polish",
    "lambda_of",
    "intrinsic_lambda",
    "absorb",
    "solve_ground",
    "solve_system",
    "ProbeResult",
    "annular_bumps",
    "sphere_points",
    "sphere_probe",
    "nodal_projector",
    "nodal_seed",
    "solve_nodal",
    "solve_multi",
]

ARMIJO = 1e-4
DECREASE_WINDOW = 10


class SolverError(RuntimeError):
    pass


class HypothesisError(SolverError):
    pass


class NoNegativeLevelError(SolverError):
    pass


class ZeroMinimizerError(SolverError):
    pass


class ProbeFailedError(SolverError):
    pass


Spec = Union[NonlinearitySpec, SystemSpec]


@dataclass
class MinimizeResult:
    profile: Profile
    Jh: float
    iterations: int
    converged: bool
    stationarity: float
    trace: list
    rearrangements: int = 0
    message: str = ""


@dataclass
class SolveReport:
    """Everything a solve produced: the absorbed solution and its diagnostics."""

    converged: bool
    iterations: int
    rounds: int
    k: float
    Phi_star: float
    Psi_star: float
    Jh_star: float
    J_v: float
    lam: float
    lam_intrinsic: float
    grid_scale: float
    landing_error: float
    stationarity: float
    residual_L2w: float
    residual_Linf_interior: float
    residual_rel: float
    pohozaev: float
    pohozaev_normalized: float
    boundary_tail: float
    boundary_tail_rel: float
    max_abs: float
    wall_time: float
    solution: Profile = field(repr=False)
    minimizer: Profile = field(repr=False)
    seed_level: float = float("nan")
    trace: list = field(default_factory=list, repr=False)
    message: str = ""
    nodes: int = 1
    flags: list = field(default_factory=list)
    trace_monotone: bool = True

    def to_dict(self) -> dict:
        skip = {"solution", "minimizer", "trace", "wall_time"}
        out = {k: v for k, v in self.__dict__.items() if k not in skip}
        out["trace_length"] = len(self.trace)
        return out


# ---------------------------------------------------------------------------
# seeds


def default_plateau_height(spec: NonlinearitySpec, N: int) -> float:
    """Scan point with G > 0 maximizing G(s) / s^{2*}."""
    s = XI_SCAN
    if spec.G_half is None:
        s = s[s <= spec.table_range]
    with np.errstate(all="ignore"):
        G = spec.G(s)
        score = np.where(G > 0, G / s ** critical_exponent(N), -np.inf)
    if not np.any(np.isfinite(score)):
        raise NoPositiveGError("no-positive-G: no plateau height with G > 0")
    return float(s[int(np.argmax(score))])


def _plateau_shape(grid: RadialGrid, t_plateau: float, skirt: float) -> np.ndarray:
    r = grid.radii
    shape = np.clip((t_plateau + skirt - r) / skirt, 0.0, 1.0)
    shape[-1] = 0.0
    return shape


def build_plateau_seed(spec: Spec, grid: RadialGrid, xi, t_plateau: float = 1.0,
                       skirt: float = 1.0) -> Profile:
    """Plateau of height xi on [0, t], linear skirt to 0, zero beyond.

    The plateau radius doubles until Psi > 0.  For systems ``xi`` is the
    amplitude pair (t0, s0) with F(t0, s0) > 0.
    """
    if isinstance(spec, SystemSpec):
        amp = np.asarray(xi, dtype=float).reshape(2, 1)
        if not spec.potential(amp[0], amp[1])[0] > 0:
            raise HypothesisError(f"F{tuple(amp.ravel())} is not positive")
    else:
        amp = float(xi)
        if not float(spec.G(np.array([amp]))[0]) > 0:
            raise HypothesisError(f"G({amp:g}) is not positive; plateau height rejected")
    t = float(t_plateau)
    while t + skirt < grid.R:
        shape = _plateau_shape(grid, t, skirt)
        seed = Profile(grid, amp * shape)
        if en.psi(seed, spec) > 0:
            return seed
        t *= 2.0
    raise NoNegativeLevelError("cannot achieve Psi > 0 with a plateau that fits in the grid")


def find_negative_seed(spec: Spec, grid: RadialGrid, k: float,
                       seed: Optional[Profile] = None, config: Optional[en.TrickConfig] = None,
                       max_halvings: int = 20) -> Profile:
    """First dilation phi_t, t = 2^-j (j = 0..max_halvings), with J_h(phi_t) < 0."""
    if seed is None:
        cfg = config or en.TrickConfig()
        seed = build_plateau_seed(spec, grid, _seed_amplitude(spec, grid.N, cfg),
                                  cfg.t_plateau, cfg.skirt)
    for j in range(max_halvings + 1):
        t = 2.0 ** -j
        cand = rescale_grid(seed, t * t)
        if en.Jh(cand, spec, k) < 0:
            return cand
    raise NoNegativeLevelError(
        f"no-negative-level: J_h(phi_t) >= 0 for all t = 2^-j, j <= {max_halvings}")


def _seed_amplitude(spec: Spec, N: int, config: en.TrickConfig):
    if isinstance(spec, SystemSpec):
        return config.witness if config.witness is not None else spec.find_witness()
    if config.xi is not None:
        return config.xi
    return default_plateau_height(spec, N)


def optimal_dilation(profile: Profile, spec: Spec, k: float) -> Profile:
    """Dilate to the minimum of t -> t^{k(N-2)} Phi^k / k - t^N Psi."""
    N = profile.grid.N
    Phi = en.phi(profile)
    Psi = en.psi(profile, spec)
    if not (Phi > 0 and Psi > 0):
        raise NoNegativeLevelError("optimal dilation needs Phi > 0 and Psi > 0")
    expo = k * (N - 2) - N
    log_tau = (math.log(N * Psi) - math.log(N - 2.0) - k * math.log(Phi)) / expo
    tau = math.exp(log_tau)
    return rescale_grid(profile, tau * tau)


# ---------------------------------------------------------------------------
# descent


def _shift(spec: Spec) -> float:
    return 2.0 * spec.m if isinstance(spec, SystemSpec) else spec.m


def _energy(values: np.ndarray, grid: RadialGrid, spec: Spec, k: float) -> float:
    try:
        with np.errstate(all="ignore"):
            E = en.Jh(Profile(grid, values), spec, k)
    except (GTableRangeError, GridError, ModelError, FloatingPointError):
        return math.inf
    return E if math.isfinite(E) else math.inf


def _gradient_data(values, grid, spec, k):
    prof = Profile(grid, values)
    Phi = en.phi(prof)
    grad, gphi = en.euclidean_gradient(prof, spec, k, Phi)
    a, c = en.h_prime(k, Phi), _shift(spec)
    d = en.precondition(grid, grad, a, c)
    dphi = en.precondition(grid, gphi, a, c)
    num = math.sqrt(max(float(np.sum(d * grad)), 0.0))
    den = math.sqrt(max(float(np.sum(dphi * gphi)), 0.0))
    stat = num / den if den > 0 else (0.0 if num == 0 else math.inf)
    return grad, d, stat


def _sign_runs(values: np.ndarray, floor: float) -> int:
    v = values[:-1]
    s = np.sign(np.where(np.abs(v) > floor, v, 0.0))
    s = s[s != 0]
    if s.size == 0:
        return 0
    return int(1 + np.count_nonzero(s[1:] != s[:-1]))


def minimize_Jh(seed: Profile, spec: Spec, config: en.TrickConfig,
                rearrange: Optional[bool] = None, projector=None,
                require_negative: bool = True) -> MinimizeResult:
    """Barzilai-Borwein descent with Armijo backtracking on J_h.

    The step is measured in the metric of the preconditioner (Sobolev mode)
    or the Euclidean one.  ``projector`` optionally maps every trial point
    back onto a constraint set (used by the nodal path) and may reject it
    by returning None.  Stationarity is the preconditioned gradient norm
    relative to its Dirichlet part.  With k = 1 the functional is J itself.
    """
    k = config.k
    if k is None:
        raise en.ConfigError("resolve k before minimizing")
    grid = seed.grid
    if rearrange is None:
        rearrange = config.rearrange and not isinstance(spec, SystemSpec)
    u = np.array(seed.values, dtype=float)
    E = _energy(u, grid, spec, k)
    if require_negative and not E < 0:
        raise NoNegativeLevelError(f"seed level J_h = {E:.6g} is not negative")
    trace = [E]
    grad, d, stat = _gradient_data(u, grid, spec, k)
    if config.gradient == "euclidean":
        d = grad
    if stat < config.tol_g:
        return MinimizeResult(Profile(grid, u), E, 0, True, stat, trace, 0, "seed is critical")
    alpha = 1.0
    flips = 0
    message = "max_iters reached"
    converged = False
    it = 0
    for it in range(1, config.max_iters + 1):
        slope = float(np.sum(grad * d))
        if not slope > 0:
            message = "no descent direction"
            break
        a = alpha
        accepted = None
        for _ in range(60):
            trial = u - a * d
            trial[..., -1] = 0.0
            if projector is not None:
                trial = projector(trial)
            if trial is not None:
                Et = _energy(trial, grid, spec, k)
                if Et <= E - ARMIJO * a * slope:
                    accepted = (trial, Et)
                    break
            a *= 0.5
        if accepted is None:
            message = "line search stalled"
            converged = stat < config.tol_g * 10.0
            break
        trial, Et = accepted
        s = trial - u
        g_new, d_new, stat = _gradient_data(trial, grid, spec, k)
        if config.gradient == "euclidean":
            d_new = g_new
        y = g_new - grad
        sy = float(np.sum(s * y))
        if config.gradient == "euclidean":
            sPs = float(np.sum(s * s))
        else:
            sPs = a * a * slope
        alpha = sPs / sy if sy > 0 else 2.0 * a
        alpha = min(max(alpha, 1e-12), 1e12)
        u, E, grad, d = trial, Et, g_new, d_new
        trace.append(E)
        if rearrange and it % config.rearrange_every == 0:
            cand = rearrange_radial(Profile(grid, u)).values
            Ec = _energy(cand, grid, spec, k)
            if Ec <= E:
                u, E = cand, Ec
                grad, d, stat = _gradient_data(u, grid, spec, k)
                if config.gradient == "euclidean":
                    d = grad
                trace.append(E)
                flips += 1
        past = trace[max(0, len(trace) - 1 - DECREASE_WINDOW)]
        rel_drop = (past - E) / abs(E) if E != 0 else 0.0
        if stat < config.tol_g and rel_drop < config.tol_E:
            converged = True
            message = "converged"
            break
    return MinimizeResult(Profile(grid, u), E, it, converged, stat, trace, flips, message)


def newton_polish(result: MinimizeResult, spec: NonlinearitySpec, k: float,
                  max_steps: int = 8) -> MinimizeResult:
    """Newton steps on grad J_h = 0 for a scalar profile.

    The Hessian omega*(h'(Phi) A - W g'(u)) + omega^2 h''(Phi) (Au)(Au)^T is
    tridiagonal plus rank one and is inverted by Sherman-Morrison.  A step
    is kept only when the stationarity measure decreases.
    """
    if isinstance(spec, SystemSpec):
        return result
    grid = result.profile.grid
    u = np.array(result.profile.values, dtype=float)
    _, _, stat = _gradient_data(u, grid, spec, k)
    om = grid.omega
    M = grid.M
    for _ in range(max_steps):
        Phi = en.phi(Profile(grid, u))
        grad, _ = en.euclidean_gradient(Profile(grid, u), spec, k, Phi)
        hp = en.h_prime(k, Phi)
        hpp = (k - 1.0) * Phi ** (k - 2.0)
        ab = en._banded(grid, hp, 0.0)
        ab[1] -= om * grid.weights[:M] * spec.dg(u[:M])
        z = stiffness_apply(grid, u)[:M]
        try:
            x = solve_banded((1, 1), ab, -grad[:M])
            y = solve_banded((1, 1), ab, z)
        except (np.linalg.LinAlgError, ValueError):
            break
        c = om * om * hpp
        denom = 1.0 + c * float(z @ y)
        if denom == 0 or not np.all(np.isfinite(x)) or not np.all(np.isfinite(y)):
            break
        step = x - y * (c * float(z @ x) / denom)
        trial = u.copy()
        trial[:M] += step
        E = _energy(trial, grid, spec, k)
        if not math.isfinite(E):
            break
        _, _, st = _gradient_data(trial, grid, spec, k)
        if not st < stat:
            break
        u, stat = trial, st
        result.Jh = E
    result.profile = Profile(grid, u)
    result.stationarity = stat
    return result


# ---------------------------------------------------------------------------
# absorption


def lambda_of(u_star: Profile, k: float) -> float:
    """lam = 1 / h'(Phi(u*)) = Phi(u*)^{1-k}."""
    Phi = en.phi(u_star)
    if not Phi > 0:
        raise ZeroMinimizerError("zero-minimizer: Phi(u*) = 0, the minimizer is trivial")
    return Phi ** (1.0 - k)


def absorb(u_star: Profile, lam: float) -> Profile:
    return rescale_grid(u_star, lam)


def intrinsic_lambda(v: Profile, k: float) -> float:
    """Multiplier lam for which v, dilated by 1/sqrt(lam), is a critical
    point of J_h: lam = Phi(v)^{(1-k) / (1 - (N-2)(k-1)/2)}."""
    N = v.grid.N
    Phi = en.phi(v)
    if not Phi > 0:
        raise ZeroMinimizerError("zero-minimizer: Phi(v) = 0")
    return Phi ** ((1.0 - k) / (1.0 - (N - 2.0) * (k - 1.0) / 2.0))


# ---------------------------------------------------------------------------
# pipelines


def _precheck(spec: Spec, N: int, config: en.TrickConfig) -> None:
    if config.force:
        return
    rep = check_conditions(spec, N)
    if rep.failed:
        notes = "; ".join(f"{h}: {rep.verdicts[h].note}" for h in rep.failed)
        if any(h in ("g3", "g5") for h in rep.failed):
            raise NoPositiveGError(f"no-positive-G ({notes})")
        raise HypothesisError(f"sampled hypothesis failure ({notes})")


def _calibrate(working: Profile, spec: Spec, config: en.TrickConfig, target: RadialGrid,
               rearrange: Optional[bool] = None, projector_factory=None):
    """Minimize, absorb, and re-dilate until the solution lands on ``target``."""
    k = config.k
    total = 0
    trace: list = []
    res = None
    v = None
    lam = math.nan
    landing = math.inf
    rounds = 0
    for rounds in range(1, config.max_rounds + 1):
        projector = projector_factory(working.grid) if projector_factory else None
        res = minimize_Jh(working, spec, config, rearrange=rearrange, projector=projector)
        if res.converged and projector is None:
            res = newton_polish(res, spec, k)
        total += res.iterations
        trace.append(res.trace)
        lam = lambda_of(res.profile, k)
        v = absorb(res.profile, lam)
        landing = v.grid.R / target.R - 1.0
        # an unconverged round on a badly scaled grid is still a usable warm start
        if abs(landing) < config.scale_tol:
            break
        warm = resample(v, target, strict=False)
        nxt = rescale_grid(warm, 1.0 / lam)
        if not _energy(nxt.values, nxt.grid, spec, k) < 0:
            nxt = optimal_dilation(warm, spec, k)
        working = nxt
    converged = bool(res.converged and abs(landing) < config.scale_tol)
    return res, v, lam, landing, rounds, total, trace, converged


def _monotone(trace) -> bool:
    return bool(np.all(np.diff(trace) <= 0)) if len(trace) > 1 else True


def _report(spec, config, res, v, lam, landing, rounds, total, trace, converged,
            seed_level, t0, message="", nodes=1) -> SolveReport:
    from .verify import boundary_tail, el_residual, pohozaev_defect

    k = config.k
    L2, Linf = el_residual(v, spec)
    gmax = float(np.max(np.abs(_forcing_values(v, spec))))
    P, Pn = pohozaev_defect(v, spec)
    tail = boundary_tail(v)
    vmax = v.max_abs()
    Jh_star = res.Jh
    if converged and not Jh_star < 0:
        converged = False
        message = "minimum level is not negative"
    return SolveReport(
        converged=converged,
        iterations=total,
        rounds=rounds,
        k=float(k),
        Phi_star=en.phi(res.profile),
        Psi_star=en.psi(res.profile, spec),
        Jh_star=Jh_star,
        J_v=en.J(v, spec),
        lam=lam,
        lam_intrinsic=intrinsic_lambda(v, k),
        grid_scale=res.profile.grid.R / v.grid.R * (1.0 + landing),
        landing_error=landing,
        stationarity=res.stationarity,
        residual_L2w=L2,
        residual_Linf_interior=Linf,
        residual_rel=Linf / gmax if gmax > 0 else 0.0,
        pohozaev=P,
        pohozaev_normalized=Pn,
        boundary_tail=tail,
        boundary_tail_rel=tail / vmax if vmax > 0 else 0.0,
        max_abs=vmax,
        wall_time=time.perf_counter() - t0,
        solution=v,
        minimizer=res.profile,
        seed_level=seed_level,
        trace=trace[-1] if trace else [],
        trace_monotone=all(_monotone(t) for t in trace),
        message=message or res.message,
        nodes=nodes,
    )


def _forcing_values(v: Profile, spec: Spec) -> np.ndarray:
    if isinstance(spec, SystemSpec):
        a, b = v.values
        return np.stack((spec.grad_u(a, b), spec.grad_v(a, b)))
    return spec.g(v.values)


def _absolute_polish(res: MinimizeResult, spec: Spec, k: float) -> MinimizeResult:
    """Replace u* by |u*|: Phi cannot grow and Psi is unchanged (G even)."""
    vals = np.abs(res.profile.values)
    E = _energy(vals, res.profile.grid, spec, k)
    if E <= res.Jh:
        res.profile = Profile(res.profile.grid, vals)
        res.Jh = E
    return res


def solve_ground(spec: NonlinearitySpec, config: en.TrickConfig, grid: RadialGrid) -> SolveReport:
    """Seed, minimize J_h, absorb; returns the report of the absorbed solution."""
    t0 = time.perf_counter()
    if isinstance(spec, SystemSpec):
        return solve_system(spec, config, grid)
    config = config.resolve(spec, grid.N)
    _precheck(spec, grid.N, config)
    if spec.xi is None:
        raise NoPositiveGError("no-positive-G: G(s) <= 0 on the whole scan")
    k = config.k
    seed = find_negative_seed(spec, grid, k, config=config)
    seed_level = en.Jh(seed, spec, k)
    working = optimal_dilation(seed, spec, k)
    out = _calibrate(working, spec, config, grid)
    res, v, lam, landing, rounds, total, trace, converged = out
    if spec.case == "positive-mass":
        res = _absolute_polish(res, spec, k)
        v = absorb(res.profile, lam)
    return _report(spec, config, res, v, lam, landing, rounds, total, trace, converged,
                   seed_level, t0)


def solve_system(sys: SystemSpec, config: en.TrickConfig, grid: RadialGrid) -> SolveReport:
    """Two-component pipeline; one multiplier rescales both components."""
    t0 = time.perf_counter()
    config = config.resolve(sys, grid.N)
    if not config.force:
        rep = check_conditions(sys, grid.N)
        if "F3" in rep.failed:
            raise NoPositiveGError(rep.verdicts["F3"].note)
    k = config.k
    amp = _seed_amplitude(sys, grid.N, config)
    plateau = build_plateau_seed(sys, grid, amp, config.t_plateau, config.skirt)
    # two components double Phi, so the negative level sits 2^(k-1) further
    # down the dilation scale than for one component
    seed = find_negative_seed(sys, grid, k, seed=plateau, max_halvings=40)
    seed_level = en.Jh(seed, sys, k)
    working = optimal_dilation(seed, sys, k)
    out = _calibrate(working, sys, config, grid, rearrange=False)
    return _report(sys, config, *out, seed_level, t0)


# ---------------------------------------------------------------------------
# multiplicity


@dataclass
class ProbeResult:
    """Outcome of a sphere probe; unpacks as (r, sampled_sup)."""

    r: float
    sup: float
    j: int
    dilation: float
    samples: int
    bumps: list = field(repr=False, default_factory=list)

    def __iter__(self):
        return iter((self.r, self.sup))


def annular_bumps(grid: RadialGrid, j: int, width: float = 1.0) -> list:
    """j unit-gradient-norm bumps on the ball [0, w] and the adjacent
    annuli [i w, (i+1) w].

    Support boundaries are snapped to nodes where every bump vanishes, so
    the bumps share no edge: they are exactly orthogonal for Phi and their
    potentials add.
    """
    if j * width >= grid.R:
        raise ProbeFailedError("annuli do not fit inside the grid")
    r = grid.radii
    cuts = [int(np.argmin(np.abs(r - i * width))) for i in range(j + 1)]
    bumps = []
    for i in range(j):
        a, b = cuts[i], cuts[i + 1]
        if b - a < 3:
            raise ProbeFailedError("grid too coarse to resolve the annular bumps")
        vals = np.zeros(r.size)
        x = (r[a:b + 1] - r[a]) / (r[b] - r[a])
        if i == 0:
            vals[a:b + 1] = np.cos(0.5 * np.pi * x) ** 2  # ball bump, nonzero at 0
        else:
            vals[a:b + 1] = np.sin(np.pi * x) ** 2
            vals[a] = 0.0
        vals[b] = 0.0
        p = Profile(grid, vals)
        bumps.append(Profile(grid, vals / math.sqrt(2.0 * en.phi(p))))
    return bumps


def sphere_points(j: int, count: int) -> np.ndarray:
    """Deterministic points on S^{j-1}: axes, the all-equal directions and
    Halton points pushed through the normal quantile."""
    from scipy.stats import norm, qmc

    pts = [np.eye(j), -np.eye(j), np.ones((1, j)) / math.sqrt(j)]
    alt = np.array([(-1.0) ** i for i in range(j)]) / math.sqrt(j)
    pts.append(alt[None, :])
    need = max(count - sum(len(p) for p in pts), 0)
    if j > 1 and need:
        hal = qmc.Halton(d=j, scramble=False).random(need + 1)[1:]
        z = norm.ppf(np.clip(hal, 1e-12, 1.0 - 1e-12))
        pts.append(z / np.linalg.norm(z, axis=1, keepdims=True))
    pts = np.concatenate(pts)
    if j == 1:
        return pts[:2]
    return pts


def sphere_probe(spec: NonlinearitySpec, grid: RadialGrid, k: float, j: int,
                 max_halvings: int = 30, max_dilations: int = 40) -> ProbeResult:
    """Search a radius r with sup of J_h over the r-sphere of span(bumps) < 0.

    The sphere is taken in the norm (int |grad u|^2)^{1/2}, on which
    J_h(r a.bumps) = (r^2/2)^k / k - sum_i Psi(r a_i bump_i).  Bumps are
    concentrated by dilations t = 2^-m until a negative sphere appears.
    """
    if spec.case != "zero-mass-multi":
        raise ProbeFailedError("the sphere probe expects a zero-mass-multi nonlinearity")
    if j < 1:
        raise ValueError("j must be at least 1")
    base = annular_bumps(grid, j)
    pts = sphere_points(j, 100 * j)
    N = grid.N
    support = [b.values != 0 for b in base]
    r = 1.0
    for _ in range(max_halvings + 1):
        h_term = (0.5 * r * r) ** k / k
        for m in range(max_dilations + 1):
            t = 2.0 ** -m
            # the dilate t^{-(N-2)/2} b(x/t) keeps unit gradient norm and
            # its potential at amplitude x is t^N Psi(x t^{-(N-2)/2} b)
            amps = r * t ** (-(N - 2) / 2.0) * pts
            total = np.zeros(len(pts))
            try:
                for i, bump in enumerate(base):
                    nz = support[i]
                    G = spec.G(np.outer(amps[:, i], bump.values[nz]))
                    total += t**N * grid.omega * (G @ grid.weights[nz])
            except GTableRangeError:
                continue
            sup = float(np.max(h_term - total))
            if sup < 0:
                lam = t * t
                bumps = [rescale_grid(b, lam).with_values(b.values * t ** (-(N - 2) / 2.0))
                         for b in base]
                return ProbeResult(r, sup, j, t, len(pts), bumps)
        r *= 0.5
    raise ProbeFailedError(f"probe-failed: no negative sphere found for j = {j}")


def _lobes(values: np.ndarray) -> list:
    """Index ranges of the maximal same-sign runs of nonzero interior values."""
    v = values[:-1]
    sgn = np.sign(v)
    runs = []
    start = None
    for i, s in enumerate(sgn):
        if s == 0:
            if start is not None:
                runs.append((start, i))
                start = None
            continue
        if start is None:
            start = i
        elif s != sgn[i - 1]:
            runs.append((start, i))
            start = i
    if start is not None:
        runs.append((start, v.size))
    return runs


def nodal_projector(grid: RadialGrid, spec: NonlinearitySpec, k: float, lobes: int):
    """Map u to sum_i t_i u_i, where u_i are the sign lobes of u and t is a
    critical point of t -> J_h(sum t_i u_i).

    Newton starts from t = 1 (iterates stay close to the constraint set);
    if that fails, each t_i is first solved with the other lobes frozen at
    zero, a monotone 1-D problem when g(s)/s increases, and Newton refines
    the coupled system from there.  Returns None when the lobe count
    differs from ``lobes`` or no admissible t exists.
    """
    om = grid.omega
    w = grid.weights

    def single(q, row, wts):
        # unique sign change in log t of psi_i'(t) - h'(q t^2 / 2) q t
        def f(lt):
            t = math.exp(lt)
            lhs = (0.5 * q * t * t) ** (k - 1.0) * q * t
            rhs = om * float(np.sum(wts * spec.g(t * row) * row))
            if not (rhs > 0 and lhs > 0 and math.isfinite(rhs) and math.isfinite(lhs)):
                return math.nan
            return math.log(rhs) - math.log(lhs)

        grid_lt = np.arange(-40.0, 41.0)
        vals = np.array([f(x) for x in grid_lt])
        change = np.nonzero(np.isfinite(vals[:-1]) & (np.sign(vals[:-1]) * np.sign(vals[1:]) < 0))[0]
        if change.size != 1:
            return None
        lo, hi = grid_lt[change[0]], grid_lt[change[0] + 1]
        flo = vals[change[0]]
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            fm = f(mid)
            if np.sign(fm) == np.sign(flo):
                lo, flo = mid, fm
            else:
                hi = mid
            if hi - lo < 1e-14:
                break
        return math.exp(0.5 * (lo + hi))

    def newton(t, Q, rows, wts):
        for _ in range(40):
            Qt = Q @ t
            Phi = 0.5 * float(t @ Qt)
            if not Phi > 0:
                return None
            hp = Phi ** (k - 1.0)
            hpp = (k - 1.0) * Phi ** (k - 2.0) if k != 1.0 else 0.0
            dpsi = np.empty(lobes)
            d2psi = np.empty(lobes)
            for i in range(lobes):
                tu = t[i] * rows[i]
                dpsi[i] = om * float(np.sum(wts[i] * spec.g(tu) * rows[i]))
                d2psi[i] = om * float(np.sum(wts[i] * spec.dg(tu) * rows[i] ** 2))
            F = hp * Qt - dpsi
            if float(np.max(np.abs(F))) <= 1e-13 * float(np.max(np.abs(hp * Qt))):
                return t
            H = hpp * np.outer(Qt, Qt) + hp * Q - np.diag(d2psi)
            try:
                step = np.linalg.solve(H, -F)
            except np.linalg.LinAlgError:
                return None
            t = t + step
            if not np.all(t > 0) or not np.all(np.isfinite(t)):
                return None
        return None

    def project(u):
        runs = _lobes(u)
        if len(runs) != lobes:
            return None
        basis = np.zeros((lobes, u.size))
        for i, (a, b) in enumerate(runs):
            basis[i, a:b] = u[a:b]
        AU = np.stack([stiffness_apply(grid, row) for row in basis])
        Q = om * basis @ AU.T
        rows = [u[a:b] for a, b in runs]
        wts = [w[a:b] for a, b in runs]
        try:
            with np.errstate(all="ignore"):
                t = newton(np.ones(lobes), Q, rows, wts)
                if t is None:
                    t0 = [single(Q[i, i], rows[i], wts[i]) for i in range(lobes)]
                    if any(x is None for x in t0):
                        return None
                    t = newton(np.array(t0), Q, rows, wts)
        except (ModelError, ValueError, OverflowError):
            return None
        if t is None:
            return None
        out = t @ basis
        out[-1] = 0.0
        return out

    return project


def nodal_seed(grid: RadialGrid, j: int, width: float = 1.0) -> Profile:
    """Sign-alternating sum of the j annular probe bumps."""
    bumps = annular_bumps(grid, j, width)
    return Profile(grid, sum(((-1.0) ** i) * b.values for i, b in enumerate(bumps)))


def solve_nodal(spec: NonlinearitySpec, config: en.TrickConfig, grid: RadialGrid, j: int,
                width: float = 1.0) -> SolveReport:
    """Solution with j sign lobes.

    Nodal solutions are saddle points of J_h, so they are not reachable by
    minimization.  They are found by descent of J (the k = 1 member of the
    family) on the set where every lobe is critical along its own
    amplitude, directly on the target grid.  The absorption map then gives
    the matching critical point of J_h: v dilated by 1/sqrt(lam), with lam
    the intrinsic multiplier of v.
    """
    from dataclasses import replace

    t0 = time.perf_counter()
    config = config.resolve(spec, grid.N)
    k = config.k
    if j == 1:
        return solve_ground(spec, config, grid)
    flat = replace(config, k=1.0)
    proj = nodal_projector(grid, spec, 1.0, j)
    seed_vals = proj(np.array(nodal_seed(grid, j, width).values))
    if seed_vals is None:
        raise NoNegativeLevelError(f"the {j}-lobe seed has no admissible lobe amplitudes")
    seed = Profile(grid, seed_vals)
    res = minimize_Jh(seed, spec, flat, rearrange=False, projector=proj, require_negative=False)
    if res.converged:
        res = newton_polish(res, spec, 1.0)
    v = res.profile
    if len(_lobes(v.values)) != j:
        res.converged = False
        res.message = "lobe count changed during the final polish"
    lam = intrinsic_lambda(v, k)
    u_star = rescale_grid(v, 1.0 / lam)
    crit = MinimizeResult(u_star, en.Jh(u_star, spec, k), res.iterations, res.converged,
                          _gradient_data(u_star.values, u_star.grid, spec, k)[2], res.trace,
                          0, res.message)
    rep = _report(spec, config, crit, v, lambda_of(u_star, k), 0.0, 1, res.iterations,
                  [res.trace], res.converged, en.Jh(rescale_grid(seed, 1.0 / lam), spec, k),
                  t0, nodes=j)
    return rep


def solve_multi(spec: NonlinearitySpec, config: en.TrickConfig, grid: RadialGrid,
                count: int) -> list:
    """Up to ``count`` distinct solutions, seeded with 1..count sign lobes.

    Solutions are kept when they differ from every kept one by a relative
    L-inf gap above 1e-3 and a Dirichlet-norm gap above 1e-6 of the larger
    norm.  The result is ordered by J_h level.
    """
    config = config.resolve(spec, grid.N)
    if count < 1:
        raise ValueError("count must be at least 1")
    if count == 1:
        return [solve_ground(spec, config, grid)]
    _precheck(spec, grid.N, config)
    from .verify import relative_gap

    kept: list = []
    dropped = 0
    for j in range(1, count + 1):
        try:
            rep = solve_nodal(spec, config, grid, j)
        except (SolverError, ModelError) as exc:
            dropped += 1
            flag = f"seed j={j} failed: {exc}"
            for r in kept:
                r.flags.append(flag)
            continue
        if not rep.converged:
            rep.flags.append("not converged")
        duplicate = False
        n_new = 2.0 * en.phi(rep.solution)
        for other in kept:
            n_old = 2.0 * en.phi(other.solution)
            gap = relative_gap(rep.solution, other.solution, grid)
            if gap <= 1e-3 or abs(n_new - n_old) <= 1e-6 * max(n_new, n_old):
                duplicate = True
                other.flags.append(f"duplicate of seed j={j} filtered")
                break
        if not duplicate:
            kept.append(rep)
        else:
            dropped += 1
    kept.sort(key=lambda r: r.Jh_star)
    if len(kept) < count:
        for r in kept:
            r.flags.append(f"fewer-than-requested: {len(kept)} of {count}")
    return kept
