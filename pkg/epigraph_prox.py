"""Euclidean projection onto the epigraph of |d|^p, scalar and elementwise."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

ROOT_TOL = 1e-8
# near-double roots come back from the eigen-solver with O(sqrt(eps)) imaginary parts
CANDIDATE_IMAG_TOL = 1e-6
POLISH_STEPS = 4


class ProxError(ValueError):
    pass


@dataclass(frozen=True)
class PExponent:
    """p = u / v with gcd(u, v) = 1 and 0 < u <= v."""

    u: int = 1
    v: int = 2

    def __post_init__(self) -> None:
        if self.u < 1 or self.v < 1:
            raise ProxError(f"exponent parts must be positive integers, got {self.u}/{self.v}")
        if self.u > self.v:
            raise ProxError(f"p = {self.u}/{self.v} exceeds 1")
        if math.gcd(self.u, self.v) != 1:
            raise ProxError(f"p = {self.u}/{self.v} is not in lowest terms")

    @classmethod
    def from_string(cls, text: str) -> PExponent:
        raw = str(text).strip()
        try:
            if "/" in raw:
                num, den = raw.split("/", 1)
                u, v = int(num), int(den)
            else:
                u, v = int(raw), 1
        except ValueError as exc:
            raise ProxError(f"cannot parse exponent {text!r}; expected 'u/v'") from exc
        if v <= 0 or u <= 0:
            raise ProxError(f"exponent {text!r} must be positive")
        g = math.gcd(u, v)
        return cls(u // g, v // g)

    @property
    def p(self) -> float:
        return self.u / self.v

    @property
    def is_l1(self) -> bool:
        return self.u == self.v

    def __str__(self) -> str:
        return f"{self.u}/{self.v}"


def _polyval_with_derivative(coeffs: np.ndarray, x: float) -> tuple[float, float]:
    value = 0.0
    slope = 0.0
    for c in coeffs:
        slope = slope * x + value
        value = value * x + c
    return value, slope


def real_roots(
    coeffs: np.ndarray,
    tol: float = ROOT_TOL,
    imag_tol: float = ROOT_TOL,
) -> list[float]:
    """Real roots of a polynomial given highest degree first.

    Companion-matrix eigenvalues with |imag| <= imag_tol are taken as real,
    polished by damped Newton steps and kept when the scaled residual is <= tol.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.ndim != 1 or len(coeffs) < 2:
        raise ProxError("polynomial must have degree >= 1")
    if coeffs[0] == 0.0:
        raise ProxError("leading coefficient must be nonzero")
    coeffs = coeffs / coeffs[0]
    # np.roots takes eigenvalues of the companion matrix
    eig = np.roots(coeffs)
    roots: list[float] = []
    for z in eig:
        if abs(z.imag) > imag_tol * max(1.0, abs(z.real)):
            continue
        x = float(z.real)
        value, slope = _polyval_with_derivative(coeffs, x)
        for _ in range(POLISH_STEPS):
            if slope == 0.0 or value == 0.0:
                break
            step = value / slope
            damping = 1.0
            while damping > 1e-3:
                cand = x - damping * step
                cand_value, cand_slope = _polyval_with_derivative(coeffs, cand)
                if abs(cand_value) < abs(value):
                    x, value, slope = cand, cand_value, cand_slope
                    break
                damping *= 0.5
            else:
                break
        scale = np.sum(np.abs(coeffs) * np.power(max(1.0, abs(x)), np.arange(len(coeffs))[::-1]))
        if abs(value) <= tol * scale:
            roots.append(x)
    roots.sort()
    deduped: list[float] = []
    for x in roots:
        if not deduped or abs(x - deduped[-1]) > tol * max(1.0, abs(x)):
            deduped.append(x)
    return deduped


def boundary_polynomial(x_abs: float, t_tilde: float, p: PExponent) -> np.ndarray:
    """Stationarity of (a^v - |x|)^2 + (a^u - t)^2 in a, divided by a^u; highest degree first."""
    u, v = p.u, p.v
    degree = 2 * v - u
    coeffs = np.zeros(degree + 1)
    coeffs[degree - (2 * v - u)] += 1.0
    coeffs[degree - (v - u)] -= x_abs
    coeffs[degree - u] += u / v
    coeffs[degree] -= (u / v) * t_tilde
    return coeffs


def project_epigraph_lp(x_tilde: float, t_tilde: float, p: PExponent) -> tuple[float, float]:
    if p.u >= p.v:
        raise ProxError(f"p = {p} is not a strict quasi-norm; use project_epigraph_l1")
    x_abs = abs(x_tilde)
    if t_tilde >= x_abs**p.p:
        return float(x_tilde), float(t_tilde)
    sign = -1.0 if x_tilde < 0 else 1.0
    best = (0.0, max(t_tilde, 0.0))
    best_dist = (best[0] - x_tilde) ** 2 + (best[1] - t_tilde) ** 2
    coeffs = boundary_polynomial(x_abs, t_tilde, p)
    for a in real_roots(coeffs, imag_tol=CANDIDATE_IMAG_TOL):
        if a < 0.0:
            continue
        d = sign * a**p.v
        t = a**p.u
        dist = (d - x_tilde) ** 2 + (t - t_tilde) ** 2
        if dist < best_dist:
            best, best_dist = (d, t), dist
    return float(best[0]), float(best[1])


def project_epigraph_l1(x_tilde: float, t_tilde: float) -> tuple[float, float]:
    x_abs = abs(x_tilde)
    if t_tilde >= x_abs:
        return float(x_tilde), float(t_tilde)
    if t_tilde <= -x_abs:
        return 0.0, 0.0
    scale = 0.5 * (x_abs + t_tilde)
    sign = -1.0 if x_tilde < 0 else 1.0
    return sign * scale, scale


def project_epigraph(x_tilde: np.ndarray, t_tilde: np.ndarray, p: PExponent) -> tuple[np.ndarray, np.ndarray]:
    """Elementwise projection; the l1 case is vectorized."""
    x_tilde = np.asarray(x_tilde, dtype=float)
    t_tilde = np.asarray(t_tilde, dtype=float)
    if x_tilde.shape != t_tilde.shape:
        raise ProxError(f"shape mismatch {x_tilde.shape} vs {t_tilde.shape}")
    if p.is_l1:
        x_abs = np.abs(x_tilde)
        scale = np.clip(0.5 * (x_abs + t_tilde), 0.0, None)
        inside = t_tilde >= x_abs
        d = np.where(inside, x_tilde, np.sign(x_tilde) * scale)
        t = np.where(inside, t_tilde, scale)
        return d, t
    d = np.empty_like(x_tilde)
    t = np.empty_like(t_tilde)
    for idx, (x, tt) in enumerate(zip(x_tilde.ravel(), t_tilde.ravel())):
        d.flat[idx], t.flat[idx] = project_epigraph_lp(float(x), float(tt), p)
    return d, t
