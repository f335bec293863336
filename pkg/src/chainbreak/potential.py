"""Finite-range pair potentials.

A potential is an even function of the inter-particle distance that
vanishes identically beyond its range ``b``.  The profile on ``[0, b)`` is
a piecewise polynomial with a single minimum at the equilibrium distance
``a`` and curvature bounded below by ``u0`` on ``(a0, b)``.

Simulating escape over the cutoff needs the potential continued smoothly
past ``b``: :func:`extend` produces a convex continuation that matches
value and three derivatives at the cutoff and grows quadratically far out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EvaluationError, ExtensionError, PotentialFormatError

_ORDERS = 4  # value plus three derivatives


def _derivative_tables(coefs: np.ndarray) -> tuple[np.ndarray, ...]:
    """Coefficient tables (highest power first) for orders 0..3."""
    tables = [coefs.astype(float)]
    cur = tables[0]
    for _ in range(_ORDERS - 1):
        deg = cur.shape[1] - 1
        if deg == 0:
            cur = np.zeros((cur.shape[0], 1))
        else:
            powers = np.arange(deg, 0, -1, dtype=float)
            cur = cur[:, :-1] * powers
        tables.append(cur)
    return tuple(tables)


def _piecewise_eval(breaks: np.ndarray, coefs: np.ndarray, y: np.ndarray) -> np.ndarray:
    idx = np.clip(np.searchsorted(breaks, y, side="right") - 1, 0, len(breaks) - 1)
    out = np.empty(y.shape, dtype=float)
    for i in range(len(breaks)):
        mask = idx == i
        if mask.any():
            out[mask] = np.polyval(coefs[i], y[mask] - breaks[i])
    return out


def _pad_left(rows: list[np.ndarray]) -> np.ndarray:
    width = max(len(r) for r in rows)
    out = np.zeros((len(rows), width))
    for i, r in enumerate(rows):
        out[i, width - len(r):] = r
    return out


@dataclass(frozen=True, eq=False)
class PotentialSpec:
    """Declared pair potential: piecewise-polynomial profile plus geometry.

    Attributes
    ----------
    a, b, a0, u0 : float
        Equilibrium distance, interaction range, convexity onset, and the
        curvature floor claimed on ``(a0, b)``.
    breaks, coefs : ndarray
        Piece left edges in ``[0, b)`` (first is 0) and local polynomial
        coefficients per piece, highest power first, in ``u = y - edge``.
    """

    a: float
    b: float
    a0: float
    u0: float
    breaks: np.ndarray
    coefs: np.ndarray
    form: str = "piecewise_poly"
    quad_coefs: tuple[float, float, float] | None = None
    _dcoefs: tuple[np.ndarray, ...] = field(repr=False, default=())

    def __post_init__(self):
        breaks = np.asarray(self.breaks, dtype=float)
        coefs = np.asarray(self.coefs, dtype=float)
        if breaks.ndim != 1 or coefs.ndim != 2 or len(breaks) != len(coefs):
            raise PotentialFormatError("breaks and coefs shapes do not line up")
        if len(breaks) == 0 or breaks[0] != 0.0:
            raise PotentialFormatError("first piece must start at 0")
        if np.any(np.diff(breaks) <= 0):
            raise PotentialFormatError("piece edges must be strictly increasing")
        if breaks[-1] >= self.b:
            raise PotentialFormatError("piece edges must lie below the range b")
        object.__setattr__(self, "breaks", breaks)
        object.__setattr__(self, "coefs", coefs)
        object.__setattr__(self, "_dcoefs", _derivative_tables(coefs))

    @classmethod
    def quadratic(cls, c2: float, c1: float, c0: float, *, a: float | None = None,
                  b: float | None = None, a0: float | None = None,
                  u0: float | None = None) -> "PotentialSpec":
        """Single quadratic piece ``c2 y^2 + c1 y + c0``.

        When not given, ``a`` is the vertex and ``b`` the larger root, so the
        profile reaches its minimum at ``a`` and hits zero at the cutoff.
        """
        if c2 <= 0:
            raise PotentialFormatError(f"leading coefficient must be positive, got {c2}")
        if a is None:
            a = -c1 / (2.0 * c2)
        if b is None:
            disc = c1 * c1 - 4.0 * c2 * c0
            if disc <= 0:
                raise PotentialFormatError(
                    "quadratic has no real zero; pass the range b explicitly")
            b = (-c1 + math.sqrt(disc)) / (2.0 * c2)
        spec = cls(a=float(a), b=float(b),
                   a0=float(a0) if a0 is not None else float(a) / 2.0,
                   u0=float(u0) if u0 is not None else 2.0 * c2,
                   breaks=np.array([0.0]), coefs=np.array([[c2, c1, c0]]),
                   form="quadratic", quad_coefs=(float(c2), float(c1), float(c0)))
        return spec

    @classmethod
    def piecewise(cls, breaks, coeffs, *, a: float, b: float,
                  a0: float | None = None, u0: float | None = None) -> "PotentialSpec":
        """General piecewise-polynomial profile on ``[0, b)``."""
        rows = _pad_left([np.asarray(r, dtype=float) for r in coeffs])
        spec_a0 = float(a0) if a0 is not None else float(a) / 2.0
        if u0 is None:
            tmp = cls(a=float(a), b=float(b), a0=spec_a0, u0=1.0,
                      breaks=np.asarray(breaks, dtype=float), coefs=rows)
            grid = np.linspace(spec_a0, b, 2001)[1:-1]
            u0 = float(np.min(tmp.raw(grid, order=2)))
        return cls(a=float(a), b=float(b), a0=spec_a0, u0=float(u0),
                   breaks=np.asarray(breaks, dtype=float), coefs=rows)

    def raw(self, y, order: int = 0):
        """Inside profile without the cutoff, for ``y >= 0``.

        Past the last piece edge this continues the final polynomial, which
        is what validation probes to measure the jump at ``b``.
        """
        yy = np.atleast_1d(np.asarray(y, dtype=float))
        out = _piecewise_eval(self.breaks, self._dcoefs[order], yy)
        return float(out[0]) if np.ndim(y) == 0 else out

    def evaluate(self, y, order: int = 0):
        """Potential (or derivative ``order`` <= 3) with cutoff and symmetry."""
        if not 0 <= order < _ORDERS:
            raise ValueError(f"order must be in 0..3, got {order}")
        yy = np.atleast_1d(np.asarray(y, dtype=float))
        if not np.all(np.isfinite(yy)):
            bad = yy[~np.isfinite(yy)][0]
            raise EvaluationError(f"non-finite input position {bad!r}")
        ay = np.abs(yy)
        out = np.zeros(ay.shape)
        inside = ay < self.b
        if inside.any():
            vals = _piecewise_eval(self.breaks, self._dcoefs[order], ay[inside])
            if order % 2 == 1:
                vals = vals * np.sign(yy[inside])
            out[inside] = vals
        if not np.all(np.isfinite(out)):
            bad = yy[~np.isfinite(out)][0]
            raise EvaluationError(f"non-finite value at y={bad!r} (order {order})")
        return float(out[0]) if np.ndim(y) == 0 else out

    def __call__(self, y):
        return self.evaluate(y, order=0)


def example_quadratic() -> PotentialSpec:
    """The stock quadratic profile ``y^2 - 4y + 3`` (a=2, b=3, u0=2)."""
    return PotentialSpec.quadratic(1.0, -4.0, 3.0)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ""
    worst_point: float | None = None
    worst_value: float | None = None


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[CheckResult, ...]

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def summary(self) -> str:
        lines = []
        for c in self.checks:
            status = "ok" if c.passed else "FAIL"
            line = f"{c.name}: {status}"
            if not c.passed and c.detail:
                line += f" ({c.detail})"
            lines.append(line)
        return "\n".join(lines)


def validate_potential(spec: PotentialSpec, grid_points: int = 10_000,
                       tol: float = 1e-10) -> ValidationReport:
    """Check the declared geometry against the actual profile on a grid.

    Raises :class:`EvaluationError` if the profile itself produces
    non-finite values; structural problems are reported, not raised.
    """
    checks: list[CheckResult] = []
    grid = np.linspace(0.0, spec.b, grid_points)
    inner = grid[1:-1]

    for order in range(3):
        vals = spec.raw(inner, order=order)
        if not np.all(np.isfinite(vals)):
            bad = inner[~np.isfinite(vals)][0]
            raise EvaluationError(f"non-finite value at y={bad!r} (order {order})")

    u_vals = spec.raw(inner, order=0)
    scale = max(1.0, float(np.max(np.abs(u_vals))))

    ok = 0.0 < spec.a0 < spec.a < spec.b < 2.0 * spec.a and spec.u0 > 0.0
    detail = ""
    if not ok:
        parts = []
        if not 0.0 < spec.a0:
            parts.append(f"a0={spec.a0} must be positive")
        if not spec.a0 < spec.a:
            parts.append(f"a0={spec.a0} must lie below a={spec.a}")
        if not spec.a < spec.b:
            parts.append(f"a={spec.a} must lie below b={spec.b}")
        if not spec.b < 2.0 * spec.a:
            parts.append(f"range b={spec.b} must stay below 2a={2.0 * spec.a}")
        if not spec.u0 > 0.0:
            parts.append(f"u0={spec.u0} must be positive")
        detail = "; ".join(parts)
    checks.append(CheckResult("geometry_ordering", ok, detail))

    jump = abs(spec.raw(spec.b, order=0))
    checks.append(CheckResult(
        "continuity_at_cutoff", jump <= tol * scale,
        f"|U(b)| = {jump:.3e} exceeds {tol * scale:.1e}" if jump > tol * scale else "",
        worst_point=spec.b, worst_value=jump))

    join_ok, join_detail, worst_j, worst_v = True, "", None, None
    for edge in spec.breaks[1:]:
        below = np.nextafter(edge, -np.inf)
        for order in range(4):
            left = spec.raw(below, order=order)
            right = spec.raw(edge, order=order)
            gap = abs(left - right)
            if gap > max(tol * scale, 1e-8 * max(1.0, abs(left))):
                join_ok = False
                worst_j, worst_v = float(edge), gap
                join_detail = f"order-{order} jump {gap:.3e} at y={edge}"
                break
        if not join_ok:
            break
    checks.append(CheckResult("smooth_joins", join_ok, join_detail, worst_j, worst_v))

    slope_at_a = abs(spec.raw(spec.a, order=1))
    grid_min = float(np.min(u_vals))
    val_at_a = spec.raw(spec.a, order=0)
    min_ok = slope_at_a <= 1e-8 * scale and val_at_a <= grid_min + tol * scale
    detail = ""
    if not min_ok:
        argmin = float(inner[np.argmin(u_vals)])
        detail = (f"U'(a) = {slope_at_a:.3e}, grid minimum at y={argmin:.6g} "
                  f"with value {grid_min:.6g} vs U(a) = {val_at_a:.6g}")
    checks.append(CheckResult("minimum_at_equilibrium", min_ok, detail,
                              worst_point=spec.a, worst_value=slope_at_a))

    conv_grid = np.linspace(spec.a0, spec.b, grid_points)[1:-1]
    curv = spec.raw(conv_grid, order=2)
    curv_min = float(np.min(curv))
    curv_arg = float(conv_grid[np.argmin(curv)])
    curv_ok = curv_min >= spec.u0 - tol * scale
    checks.append(CheckResult(
        "convexity_floor", curv_ok,
        "" if curv_ok else f"U'' dips to {curv_min:.6g} at y={curv_arg:.6g}, below u0={spec.u0}",
        worst_point=curv_arg, worst_value=curv_min))

    sample = np.linspace(-spec.b * 1.2, spec.b * 1.2, 257)
    sym_ok = True
    for order in range(3):
        sign = -1.0 if order % 2 == 1 else 1.0
        if not np.allclose(spec.evaluate(-sample, order=order),
                           sign * spec.evaluate(sample, order=order),
                           rtol=0, atol=tol * scale):
            sym_ok = False
            break
    checks.append(CheckResult("even_symmetry", sym_ok,
                              "" if sym_ok else f"asymmetry at derivative order {order}"))

    beyond = np.array([spec.b, spec.b * 1.5, spec.b * 3.0])
    cut_vals = np.abs(spec.evaluate(beyond, order=0))
    cut_ok = bool(np.all(cut_vals == 0.0))
    checks.append(CheckResult("zero_beyond_range", cut_ok,
                              "" if cut_ok else "cutoff evaluation leaked a non-zero value"))

    return ValidationReport(tuple(checks))


@dataclass(frozen=True, eq=False)
class ExtendedPotential:
    """Potential continued smoothly past the cutoff.

    On ``[0, b]`` this coincides with the base profile.  On ``[b, b+w]`` a
    cubic matches value and three derivatives at ``b``; beyond that a
    quadratic tail with curvature at least ``u0`` takes over, matched in
    value and slope.  Evaluation is even and never cut off.
    """

    base: PotentialSpec
    blend_width: float
    breaks: np.ndarray
    coefs: np.ndarray
    _dcoefs: tuple[np.ndarray, ...] = field(repr=False, default=())

    def __post_init__(self):
        object.__setattr__(self, "_dcoefs", _derivative_tables(self.coefs))

    @property
    def a(self) -> float:
        return self.base.a

    @property
    def b(self) -> float:
        return self.base.b

    @property
    def a0(self) -> float:
        return self.base.a0

    @property
    def u0(self) -> float:
        return self.base.u0

    def evaluate(self, y, order: int = 0):
        if not 0 <= order < _ORDERS:
            raise ValueError(f"order must be in 0..3, got {order}")
        yy = np.atleast_1d(np.asarray(y, dtype=float))
        if not np.all(np.isfinite(yy)):
            bad = yy[~np.isfinite(yy)][0]
            raise EvaluationError(f"non-finite input position {bad!r}")
        vals = _piecewise_eval(self.breaks, self._dcoefs[order], np.abs(yy))
        if order % 2 == 1:
            vals = vals * np.sign(yy)
        if not np.all(np.isfinite(vals)):
            bad = yy[~np.isfinite(vals)][0]
            raise EvaluationError(f"non-finite value at y={bad!r} (order {order})")
        return float(vals[0]) if np.ndim(y) == 0 else vals

    def __call__(self, y):
        return self.evaluate(y, order=0)

    def tables(self, order: int) -> tuple[np.ndarray, np.ndarray]:
        """(breaks, coefficients) for the given derivative order, kernel-ready."""
        return self.breaks, np.ascontiguousarray(self._dcoefs[order])


def extend(spec: PotentialSpec, blend_width: float | None = None,
           tol: float = 1e-10) -> ExtendedPotential:
    """Build the smooth convex continuation of a validated potential."""
    report = validate_potential(spec, grid_points=2001, tol=tol)
    if not report.all_passed:
        names = ", ".join(c.name for c in report.failures)
        raise ExtensionError(f"potential failed validation checks: {names}")

    w = float(blend_width) if blend_width is not None else (spec.b - spec.a) / 2.0
    if w <= 0:
        raise ExtensionError(f"blend width must be positive, got {w}")

    v = [spec.raw(spec.b, order=k) for k in range(4)]
    curv_end = v[2] + v[3] * w
    if min(v[2], curv_end) < spec.u0 - tol:
        hint = ""
        if v[3] < 0 and v[2] > spec.u0:
            w_max = (v[2] - spec.u0) / (-v[3])
            hint = f"; try blend_width below {w_max:.6g}"
        raise ExtensionError(
            f"cubic blend curvature falls to {min(v[2], curv_end):.6g}, "
            f"below u0={spec.u0}{hint}")

    blend_row = np.array([v[3] / 6.0, v[2] / 2.0, v[1], v[0]])
    h_val = v[0] + v[1] * w + v[2] * w * w / 2.0 + v[3] * w ** 3 / 6.0
    h_slope = v[1] + v[2] * w + v[3] * w * w / 2.0
    q = max(curv_end, spec.u0)
    tail_row = np.array([q / 2.0, h_slope, h_val])

    rows = [spec.coefs[i] for i in range(len(spec.breaks))] + [blend_row, tail_row]
    breaks = np.concatenate([spec.breaks, [spec.b, spec.b + w]])
    ext = ExtendedPotential(base=spec, blend_width=w,
                            breaks=breaks, coefs=_pad_left(rows))

    probe = np.linspace(spec.a0, spec.b + 3.0 * w, 4001)
    curv = ext.evaluate(probe, order=2)
    if float(np.min(curv)) < spec.u0 - 100 * tol:
        bad = float(probe[np.argmin(curv)])
        raise ExtensionError(
            f"extended curvature {float(np.min(curv)):.6g} at y={bad:.6g} "
            f"fell below u0={spec.u0}")
    return ext


def potential_to_dict(spec: PotentialSpec) -> dict:
    base = {"a": spec.a, "b": spec.b, "a0": spec.a0, "u0": spec.u0}
    if spec.form == "quadratic":
        return {"form": "quadratic", "coeffs": list(spec.quad_coefs), **base}
    return {"form": "piecewise_poly", "breaks": spec.breaks.tolist(),
            "coeffs": [row.tolist() for row in spec.coefs], **base}


def potential_from_dict(data: dict) -> PotentialSpec:
    if not isinstance(data, dict):
        raise PotentialFormatError(f"potential must be an object, got {type(data).__name__}")
    form = data.get("form")
    if form == "quadratic":
        allowed = {"form", "coeffs", "a", "b", "a0", "u0"}
    elif form == "piecewise_poly":
        allowed = {"form", "coeffs", "breaks", "a", "b", "a0", "u0"}
    else:
        raise PotentialFormatError(f"unknown potential form {form!r}")
    unknown = set(data) - allowed
    if unknown:
        raise PotentialFormatError(f"unknown potential fields: {sorted(unknown)}")
    try:
        if form == "quadratic":
            c2, c1, c0 = data["coeffs"]
            return PotentialSpec.quadratic(
                float(c2), float(c1), float(c0),
                a=data.get("a"), b=data.get("b"),
                a0=data.get("a0"), u0=data.get("u0"))
        return PotentialSpec.piecewise(
            data["breaks"], data["coeffs"], a=float(data["a"]), b=float(data["b"]),
            a0=data.get("a0"), u0=data.get("u0"))
    except (KeyError, TypeError, ValueError) as exc:
        raise PotentialFormatError(f"malformed potential definition: {exc}") from exc
