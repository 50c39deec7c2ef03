"""Nonlinearities g, their primitives G, two-component potentials F, and
sampled checks of the growth/sign hypotheses.

Scalar nonlinearities are always extended to the whole line as odd
functions: g(s) = sign(s) g(|s|) and G(s) = G(|s|).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from . import expr as ex

__all__ = [
    "ModelError",
    "NoPositiveGError",
    "GTableRangeError",
    "QuadratureError",
    "CASES",
    "NonlinearitySpec",
    "SystemSpec",
    "Verdict",
    "ConditionReport",
    "critical_exponent",
    "builtin",
    "from_expressions",
    "primitive_G",
    "find_xi",
    "check_conditions",
    "adaptive_simpson",
]

CASES = ("positive-mass", "zero-mass", "zero-mass-multi")

TABLE_NODES = 4096
XI_SCAN = 1e-3 * 2.0 ** (np.arange(0, 160) / 8.0)  # 1e-3 .. ~1e3


class ModelError(ValueError):
    pass


class NoPositiveGError(ModelError):
    """No s in the scan range has G(s) > 0."""


class GTableRangeError(ModelError):
    pass


class QuadratureError(ModelError):
    pass


def critical_exponent(N: int) -> float:
    """2* = 2N / (N - 2)."""
    return 2.0 * N / (N - 2.0)


def adaptive_simpson(f: Callable, a, b, tol, rtol: float = 0.0,
                     max_depth: int = 50) -> np.ndarray:
    """Vectorized adaptive Simpson over the intervals [a_i, b_i].

    ``tol`` is the absolute tolerance per interval (``rtol`` optionally
    relaxes it relative to the local estimate); subintervals split with
    halved tolerance until the two-half estimate agrees with the whole.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    tol = np.broadcast_to(np.asarray(tol, dtype=float), a.shape).copy()
    idx = np.arange(a.size)
    out = np.zeros(a.size)
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    for _ in range(max_depth):
        lm = 0.5 * (a + m)
        rm = 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        err = left + right - whole
        done = np.abs(err) <= 15.0 * np.maximum(tol, rtol * np.abs(left + right))
        np.add.at(out, idx[done], (left + right + err / 15.0)[done])
        keep = ~done
        if not np.any(keep):
            return out
        # split the unfinished intervals into halves
        a, m_, b = a[keep], m[keep], b[keep]
        fa, fm_, fb = fa[keep], fm[keep], fb[keep]
        flm, frm = flm[keep], frm[keep]
        left, right = left[keep], right[keep]
        t = tol[keep] / 2.0
        ii = idx[keep]
        a = np.concatenate((a, m_))
        b = np.concatenate((m_, b))
        m = np.concatenate((0.5 * (a[: ii.size] + m_), 0.5 * (m_ + b[ii.size:])))
        fa, fb = np.concatenate((fa, fm_)), np.concatenate((fm_, fb))
        fm = np.concatenate((flm, frm))
        whole = np.concatenate((left, right))
        tol = np.concatenate((t, t))
        idx = np.concatenate((ii, ii))
    raise QuadratureError("adaptive Simpson did not converge (is g integrable?)")


def _numeric_derivative(f: Callable, s: np.ndarray, step: float = 1e-6) -> np.ndarray:
    h = step * np.maximum(1.0, np.abs(s))
    return (f(s + h) - f(s - h)) / (2.0 * h)


@dataclass(frozen=True, eq=False)
class NonlinearitySpec:
    """A nonlinearity g with primitive G and the metadata the solver needs.

    ``g_half``/``G_half`` evaluate on s >= 0 only; the public ``g``/``G``
    apply the odd extension.  When no closed-form primitive is supplied,
    G is tabulated eagerly on [0, table_range].
    """

    case: str
    m: float
    g_half: Callable
    G_half: Optional[Callable] = None
    dg_half: Optional[Callable] = None
    q: Optional[float] = None
    name: str = "custom"
    source: dict = field(default_factory=dict)
    table_range: Optional[float] = None
    xi: Optional[float] = field(init=False, default=None)
    _table: Optional[CubicHermiteSpline] = field(init=False, default=None, repr=False)

    def __post_init__(self):
        if self.case not in CASES:
            raise ModelError(f"unknown case {self.case!r}; expected one of {CASES}")
        if self.case == "positive-mass" and not self.m > 0:
            raise ModelError("positive-mass case needs m > 0")
        if self.case != "positive-mass" and self.m != 0:
            raise ModelError("zero-mass cases need m = 0")
        if self.case == "zero-mass-multi" and self.q is None:
            raise ModelError("zero-mass-multi case needs the near-zero exponent q")
        if abs(float(self.g_half(np.array([0.0]))[0])) > 1e-12:
            raise ModelError("g(0) must vanish")
        if self.G_half is None:
            scan_G = self._scan_primitive()
            pos = np.nonzero(scan_G > 0)[0]
            xi = float(XI_SCAN[pos[0]]) if pos.size else None
            rng = self.table_range
            if rng is None:
                rng = max(10.0 * xi, 10.0) if xi is not None else 10.0
            object.__setattr__(self, "table_range", float(rng))
            object.__setattr__(self, "_table", self._build_table(float(rng)))
        else:
            G0 = float(self.G_half(np.array([0.0]))[0])
            if abs(G0) > 1e-14:
                raise ModelError("the primitive must satisfy G(0) = 0")
        try:
            object.__setattr__(self, "xi", find_xi(self))
        except NoPositiveGError:
            object.__setattr__(self, "xi", None)

    # construction helpers -------------------------------------------------
    def _scan_primitive(self) -> np.ndarray:
        a = np.concatenate(([0.0], XI_SCAN[:-1]))
        b = XI_SCAN
        pieces = adaptive_simpson(self._g_vec, a, b, 1e-14, rtol=1e-12)
        return np.cumsum(pieces)

    def _build_table(self, rng: float) -> CubicHermiteSpline:
        s = np.linspace(0.0, rng, TABLE_NODES)
        tol = 0.5e-10 * np.diff(s) / rng
        pieces = adaptive_simpson(self._g_vec, s[:-1], s[1:], tol)
        G = np.concatenate(([0.0], np.cumsum(pieces)))
        return CubicHermiteSpline(s, G, self._g_vec(s))

    def _g_vec(self, s):
        return np.asarray(self.g_half(np.asarray(s, dtype=float)), dtype=float)

    # evaluation ---------------------------------------------------------
    def g(self, s):
        s = np.asarray(s, dtype=float)
        a = np.abs(s)
        return np.sign(s) * self._g_vec(a)

    def G(self, s):
        s = np.asarray(s, dtype=float)
        a = np.abs(s)
        if self.G_half is not None:
            return np.asarray(self.G_half(a), dtype=float)
        if np.any(a > self.table_range):
            raise GTableRangeError(
                f"|s| = {float(np.max(a)):.4g} exceeds the primitive table range "
                f"{self.table_range:.4g}"
            )
        return self._table(a)

    def dg(self, s):
        s = np.asarray(s, dtype=float)
        a = np.abs(s)
        if self.dg_half is not None:
            return np.asarray(self.dg_half(a), dtype=float)
        return _numeric_derivative(self._g_vec, a)

    def describe(self) -> dict:
        out = {"case": self.case, "m": self.m, "name": self.name, "xi": self.xi}
        if self.q is not None:
            out["q"] = self.q
        out.update(self.source)
        return out


def builtin(name: str, N: int = 3, case: Optional[str] = None, **params) -> NonlinearitySpec:
    """Catalog nonlinearities.

    ``power_minus_mass(p, m)``: g(s) = s^p - m s, requires 2 < p + 1 < 2*.
    ``double_power(a, b)``: g(s) = s^a on [0, 1], s^b beyond, requires
    a > 2* - 1 > b > 1.  Its case defaults to ``zero-mass``; pass
    ``case="zero-mass-multi"`` for the multiplicity setting.
    """
    crit = critical_exponent(N)
    if name == "power_minus_mass":
        p = float(params.get("p", 3.0))
        m = float(params.get("m", 1.0))
        if not (2.0 < p + 1.0 < crit):
            raise ModelError(f"power_minus_mass needs 2 < p+1 < 2* = {crit:g}, got p = {p:g}")
        if not m > 0:
            raise ModelError("power_minus_mass needs m > 0")
        if case not in (None, "positive-mass"):
            raise ModelError("power_minus_mass is a positive-mass nonlinearity")
        return NonlinearitySpec(
            case="positive-mass",
            m=m,
            g_half=lambda s: s**p - m * s,
            G_half=lambda s: s ** (p + 1.0) / (p + 1.0) - 0.5 * m * s * s,
            dg_half=lambda s: p * s ** (p - 1.0) - m,
            name=name,
            source={"builtin": name, "p": p, "m": m},
        )
    if name == "double_power":
        a = float(params.get("a", 7.0))
        b = float(params.get("b", 3.0))
        if not (a > crit - 1.0 > b > 1.0):
            raise ModelError(
                f"double_power needs a > 2*-1 = {crit - 1:g} > b > 1, got a = {a:g}, b = {b:g}"
            )
        case = case or "zero-mass"
        if case not in ("zero-mass", "zero-mass-multi"):
            raise ModelError("double_power is a zero-mass nonlinearity")

        def g_half(s):
            return np.where(s <= 1.0, s**a, s**b)

        def G_half(s):
            return np.where(
                s <= 1.0,
                s ** (a + 1.0) / (a + 1.0),
                1.0 / (a + 1.0) + (s ** (b + 1.0) - 1.0) / (b + 1.0),
            )

        def dg_half(s):
            return np.where(s <= 1.0, a * s ** (a - 1.0), b * s ** (b - 1.0))

        return NonlinearitySpec(
            case=case,
            m=0.0,
            g_half=g_half,
            G_half=G_half,
            dg_half=dg_half,
            q=a,
            name=name,
            source={"builtin": name, "a": a, "b": b},
        )
    raise ModelError(f"unknown builtin nonlinearity {name!r}")


def from_expressions(
    g: str,
    G: Optional[str] = None,
    case: str = "positive-mass",
    m: float = 0.0,
    q: Optional[float] = None,
    table_range: Optional[float] = None,
) -> NonlinearitySpec:
    """Nonlinearity from expression strings over the variable ``s``."""
    g_ast = ex.parse(g, {"s"})
    G_ast = ex.parse(G, {"s"}) if G is not None else None

    def g_half(s):
        return ex.evaluate_array(g_ast, {"s": s})

    G_half = None
    if G_ast is not None:
        def G_half(s):
            return ex.evaluate_array(G_ast, {"s": s})

    source = {"g": g}
    if G is not None:
        source["G"] = G
    return NonlinearitySpec(
        case=case,
        m=float(m),
        g_half=g_half,
        G_half=G_half,
        q=q,
        name="expression",
        source=source,
        table_range=table_range,
    )


def primitive_G(spec: NonlinearitySpec, s: float) -> float:
    return float(spec.G(np.asarray(float(s))))


def find_xi(spec: NonlinearitySpec) -> float:
    """First point of the scan 2^{j/8} * 1e-3 (up to 1e3) with G > 0."""
    if spec.G_half is not None:
        vals = np.asarray(spec.G_half(XI_SCAN), dtype=float)
    else:
        vals = spec._scan_primitive()
    pos = np.nonzero(vals > 0)[0]
    if pos.size == 0:
        raise NoPositiveGError(
            "no-positive-G: G(s) <= 0 for every scanned s in [1e-3, 1e3]; hypothesis (g3) fails"
        )
    return float(XI_SCAN[pos[0]])


# ---------------------------------------------------------------------------
# two-component potentials


@dataclass(frozen=True, eq=False)
class SystemSpec:
    """Potential F(u, v) for the system -Delta u = F_u, -Delta v = F_v.

    Partial derivatives fall back to central differences when not given.
    ``m`` is the constant of limsup F / |(u,v)|^2 <= -m near the origin.
    """

    F: ex.Expr
    F_u: Optional[ex.Expr] = None
    F_v: Optional[ex.Expr] = None
    m: float = 0.5
    q: float = 4.0
    source: dict = field(default_factory=dict)
    step: float = 1e-6

    def __post_init__(self):
        if not self.m > 0:
            raise ModelError("system potential needs m > 0")
        if abs(ex.evaluate(self.F, {"u": 0.0, "v": 0.0})) > 1e-14:
            raise ModelError("F(0, 0) must vanish")
        box = np.linspace(-2.0, 2.0, 5)
        U, V = np.meshgrid(box, box)
        for given, var in ((self.F_u, "u"), (self.F_v, "v")):
            if given is None:
                continue
            exact = ex.evaluate_array(given, {"u": U, "v": V})
            approx = self._partial_numeric(var, U, V)
            if np.any(np.abs(exact - approx) > 1e-5 * np.maximum(1.0, np.abs(exact))):
                raise ModelError(f"F_{var} does not match the numerical derivative of F")

    @classmethod
    def from_expressions(cls, F: str, F_u: Optional[str] = None, F_v: Optional[str] = None,
                         m: float = 0.5, q: float = 4.0) -> "SystemSpec":
        uv = {"u", "v"}
        source = {"F": F}
        if F_u is not None:
            source["F_u"] = F_u
        if F_v is not None:
            source["F_v"] = F_v
        return cls(
            F=ex.parse(F, uv),
            F_u=ex.parse(F_u, uv) if F_u is not None else None,
            F_v=ex.parse(F_v, uv) if F_v is not None else None,
            m=float(m),
            q=float(q),
            source=source,
        )

    def _partial_numeric(self, var: str, u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        x = u if var == "u" else v
        h = self.step * np.maximum(1.0, np.abs(x))
        if var == "u":
            hi = ex.evaluate_array(self.F, {"u": u + h, "v": v})
            lo = ex.evaluate_array(self.F, {"u": u - h, "v": v})
        else:
            hi = ex.evaluate_array(self.F, {"u": u, "v": v + h})
            lo = ex.evaluate_array(self.F, {"u": u, "v": v - h})
        return (hi - lo) / (2.0 * h)

    def potential(self, u, v):
        return ex.evaluate_array(self.F, {"u": u, "v": v})

    def grad_u(self, u, v):
        if self.F_u is not None:
            return ex.evaluate_array(self.F_u, {"u": u, "v": v})
        return self._partial_numeric("u", u, v)

    def grad_v(self, u, v):
        if self.F_v is not None:
            return ex.evaluate_array(self.F_v, {"u": u, "v": v})
        return self._partial_numeric("v", u, v)

    def find_witness(self) -> tuple:
        """Scan a symmetric lattice for (t0, s0) with F > 0, preferring the
        largest F / |(t,s)|^{2*} (N = 3 exponent).

        Points on the diagonal t = s > 0 win whenever one of them has F > 0,
        so symmetric potentials get a symmetric seed; descent preserves the
        symmetric subspace exactly.
        """
        levels = 1e-3 * 2.0 ** (np.arange(0, 160, 4) / 8.0)
        # positive amplitudes first so ties resolve into the first quadrant
        amps = np.concatenate((levels, [0.0], -levels))
        U, V = np.meshgrid(amps, amps, indexing="ij")
        with np.errstate(all="ignore"):
            try:
                F = self.potential(U, V)
            except ex.DomainError:
                F = np.vectorize(self._safe_F)(U, V)
            rho2 = U * U + V * V
            score = np.where((F > 0) & (rho2 > 0), F / np.maximum(rho2, 1e-300) ** 3, -np.inf)
        score = np.where(np.isnan(score), -np.inf, score)
        n = levels.size
        diag = np.diagonal(score)[:n]
        if np.any(np.isfinite(diag)):
            i = int(np.argmax(diag))
            return float(levels[i]), float(levels[i])
        best = np.argmax(score)
        if not np.isfinite(score.flat[best]):
            raise NoPositiveGError("no-positive-F: F(t, s) <= 0 on the whole scan; (F3) fails")
        return float(U.flat[best]), float(V.flat[best])

    def _safe_F(self, u, v):
        try:
            return ex.evaluate(self.F, {"u": u, "v": v})
        except ex.ExprError:
            return -np.inf

    def describe(self) -> dict:
        out = {"m": self.m, "q": self.q}
        out.update(self.source)
        return out


# ---------------------------------------------------------------------------
# hypothesis sampling

SMALL = 10.0 ** -np.arange(1, 13)  # s -> 0+
LARGE = 10.0 ** np.arange(1, 7)  # s -> +inf
SMALL_TAIL = np.arange(1, 13) >= 6
LARGE_TAIL = np.arange(1, 7) >= 4
LIMIT_TOL = 1e-6


@dataclass(frozen=True)
class Verdict:
    status: str  # sampled-pass | sampled-fail | not-checkable
    witness: Optional[tuple] = None
    note: str = ""

    def to_dict(self) -> dict:
        return {"status": self.status, "witness": list(self.witness) if self.witness else None,
                "note": self.note}


@dataclass
class ConditionReport:
    subject: str
    N: int
    verdicts: dict = field(default_factory=dict)

    @property
    def failed(self) -> list:
        return [k for k, v in self.verdicts.items() if v.status == "sampled-fail"]

    @property
    def ok(self) -> bool:
        return not self.failed

    def to_dict(self) -> dict:
        return {"subject": self.subject, "N": self.N,
                "verdicts": {k: v.to_dict() for k, v in self.verdicts.items()}}


def _fail(s, note):
    return Verdict("sampled-fail", (float(s),), note)


def _limit_le(s, ratio, tail, bound, what):
    """Sampled 'limsup <= bound': every tail sample must satisfy it."""
    tol = LIMIT_TOL * max(1.0, abs(bound))
    bad = tail & ~(ratio <= bound + tol)
    if np.any(bad):
        i = np.nonzero(bad)[0][0]
        return _fail(s[i], f"{what} = {ratio[i]:.4g} exceeds {bound:g}")
    return Verdict("sampled-pass", None, f"{what} tail max {np.max(ratio[tail]):.4g}")


def _limit_zero(s, ratio, tail, what):
    bad = tail & ~(np.abs(ratio) <= LIMIT_TOL)
    if np.any(bad):
        i = np.nonzero(bad)[0][0]
        return _fail(s[i], f"{what} = {ratio[i]:.4g} does not tend to 0")
    return Verdict("sampled-pass", None, f"{what} tail max |.| {np.max(np.abs(ratio[tail])):.3g}")


def _safe(f, s):
    with np.errstate(all="ignore"):
        try:
            return np.asarray(f(s), dtype=float)
        except ex.DomainError:
            return np.array([_scalar_or_nan(f, x) for x in s])


def _scalar_or_nan(f, x):
    try:
        return float(f(np.array([x]))[0])
    except (ex.ExprError, ModelError):
        return float("nan")


def _xi_verdict(spec) -> Verdict:
    try:
        xi = find_xi(spec)
    except NoPositiveGError as exc:
        Gs = _safe(spec.G_half, XI_SCAN) if spec.G_half is not None else spec._scan_primitive()
        i = int(np.nanargmax(Gs))
        return _fail(XI_SCAN[i], str(exc))
    return Verdict("sampled-pass", (xi,), f"G({xi:.6g}) > 0")


def check_conditions(spec, N: int) -> ConditionReport:
    """Sample the hypotheses of the declared case on geometric sequences.

    Verdicts are evidence, never proofs.
    """
    if N < 3:
        raise ModelError("condition checks need N >= 3")
    crit = critical_exponent(N)
    if isinstance(spec, SystemSpec):
        return _check_system(spec, N, crit)
    rep = ConditionReport(subject=spec.case, N=N)
    g = spec._g_vec
    gs = _safe(g, SMALL)
    gl = _safe(g, LARGE)
    if spec.case == "positive-mass":
        rep.verdicts["g1"] = _limit_le(SMALL, gs / SMALL, SMALL_TAIL, -spec.m, "g(s)/s")
        if rep.verdicts["g1"].status == "sampled-pass" and not np.all(np.isfinite(gs / SMALL)):
            rep.verdicts["g1"] = Verdict("sampled-fail", None, "g(s)/s not finite near 0")
        rep.verdicts["g2"] = _limit_le(LARGE, gl / LARGE ** (crit - 1), LARGE_TAIL, 0.0,
                                       "g(s)/s^(2*-1)")
        rep.verdicts["g3"] = _xi_verdict(spec)
        return rep
    # zero-mass families
    rep.verdicts["g4"] = _limit_zero(SMALL, gs / SMALL ** (crit - 1), SMALL_TAIL, "g(s)/s^(2*-1)")
    rep.verdicts["g5"] = _xi_verdict(spec)
    xi0 = spec.xi if spec.xi is not None else 0.0
    above = LARGE > xi0
    if np.all(gl[above] > 0):
        rep.verdicts["g6"] = _limit_le(LARGE, gl / LARGE ** (crit - 1), LARGE_TAIL, 0.0,
                                       "g(s)/s^(2*-1)")
    else:
        rep.verdicts["g6"] = Verdict("sampled-pass", None, "premise g > 0 beyond xi0 fails; vacuous")
    if spec.case == "zero-mass-multi":
        q = spec.q
        if not q > crit:
            rep.verdicts["g7"] = Verdict("sampled-fail", None, f"q = {q:g} is not above 2* = {crit:g}")
        else:
            ratio = gs / SMALL**q
            t = ratio[SMALL_TAIL]
            if np.all(np.isfinite(t)) and np.min(t) > 0 and np.max(t) / np.min(t) <= 1e3:
                rep.verdicts["g7"] = Verdict(
                    "sampled-pass", None, f"g(s)/s^q in [{np.min(t):.4g}, {np.max(t):.4g}]"
                )
            else:
                bad = SMALL_TAIL & ~(ratio > 0)
                i = int(np.nonzero(bad)[0][0]) if np.any(bad) else int(np.nonzero(SMALL_TAIL)[0][-1])
                rep.verdicts["g7"] = _fail(SMALL[i], "g(s)/s^q not pinched between positive constants")
        rep.verdicts["g8"] = _limit_zero(LARGE, gl / LARGE ** (crit - 1), LARGE_TAIL, "g(s)/s^(2*-1)")
        sample = np.concatenate((SMALL, XI_SCAN, LARGE))
        neg = _safe(g, sample) < 0
        rep.verdicts["g>=0"] = (
            _fail(sample[np.nonzero(neg)[0][0]], "g takes negative values on s > 0")
            if np.any(neg) else Verdict("sampled-pass", None, "g >= 0 on samples")
        )
    return rep


def _check_system(spec: SystemSpec, N: int, crit: float) -> ConditionReport:
    rep = ConditionReport(subject="system", N=N)
    angles = np.arange(8) * (np.pi / 4.0)
    dirs = np.stack((np.cos(angles), np.sin(angles)), axis=1)

    def worst(radii, score_fn):
        vals = []
        for rho in radii:
            F = _safe(lambda x: spec.potential(x[:, 0], x[:, 1]), rho * dirs)
            vals.append(score_fn(F, rho))
        return np.array(vals)

    r1 = worst(SMALL, lambda F, rho: np.max(F) / rho**2)
    rep.verdicts["F1"] = _limit_le(SMALL, r1, SMALL_TAIL, -spec.m, "F/|(u,v)|^2")
    q = spec.q
    if not (2.0 < q < crit):
        rep.verdicts["F2"] = Verdict("sampled-fail", None, f"q = {q:g} outside (2, 2*)")
    else:
        r2 = worst(LARGE, lambda F, rho: np.max(np.abs(F)) / rho**q)
        t = r2[LARGE_TAIL]
        if np.all(np.isfinite(t)) and t[-1] <= 10.0 * max(t[0], 1e-300):
            rep.verdicts["F2"] = Verdict("sampled-pass", None, f"|F|/|(u,v)|^q tail <= {np.max(t):.4g}")
        else:
            rep.verdicts["F2"] = _fail(LARGE[-1], "|F|/|(u,v)|^q grows at infinity")
    try:
        w = spec.find_witness()
        rep.verdicts["F3"] = Verdict("sampled-pass", w, f"F{w} > 0")
    except NoPositiveGError as exc:
        rep.verdicts["F3"] = Verdict("sampled-fail", None, str(exc))
    return rep
