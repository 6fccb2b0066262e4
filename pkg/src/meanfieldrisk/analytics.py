"""Closed-form and numerical analytics for the asymptotic variance.

The group means of the interacting system solve a linear SDE whose drift
matrix

    M[i, j] = -alpha_i * (delta_ij - rho_j)

is the generator of a continuous-time Markov chain on the groups.  The
population mean at time T is Gaussian with variance V_T^2 / N where

    V_T^2 = integral_0^T  rho' exp(M s) R^{-1} exp(M s)' rho  ds,

R^{-1} = diag(sigma_k^2 / rho_k).  This module evaluates V_T^2 four ways
(adaptive quadrature, a two-group closed form, the equal-rate formula,
and a second-order expansion in the rate heterogeneity), and provides
the tail-probability formulas and the deviation ("flocking") bound that
build on it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NotApplicableError, NumericalError
from .model import ExpansionCoefficients, PopulationLayout

__all__ = [
    "GeneratorTriple",
    "VarianceReport",
    "FlockingBound",
    "TailApprox",
    "build_generator",
    "matrix_exponential",
    "variance_quadrature",
    "variance_closed_form_k2",
    "variance_homogeneous",
    "variance_delta_expansion",
    "variance_report",
    "gaussian_tail_exact",
    "laplace_tail_approx",
    "flocking_bound",
]


@dataclass(frozen=True)
class GeneratorTriple:
    """Drift generator M, diagonal of R^{-1}, and group fractions rho."""

    m: np.ndarray           # (K, K) CTMC generator
    r_inv_diag: np.ndarray  # (K,) entries sigma_k^2 / rho_k
    rho: np.ndarray         # (K,)


@dataclass(frozen=True)
class VarianceReport:
    """V_T^2 by every method applicable to the layout.

    `v2_closed_k2` is present only for two-group populations with a
    positive coupling rate; `v2_homogeneous` only when all rates are
    equal; `v2_expansion` only when the mean rate is positive.
    """

    v2_quadrature: float
    v2_expansion: float | None
    v2_closed_k2: float | None
    v2_homogeneous: float | None
    quadrature_tol: float
    quadrature_panels: int


@dataclass(frozen=True)
class TailApprox:
    """Exponential tail approximation of the systemic-event probability."""

    raw: float          # 2 * exp(-eta^2 N / (2 v2)); may exceed 1
    probability: float  # raw clamped to [0, 1]
    rate: float         # eta^2 / (2 v2)


@dataclass(frozen=True)
class FlockingBound:
    """Exponential bound on P(sup_t |Y_i - Ybar| > delta) and its scale.

    `bound` is the raw value 2*exp(-delta^2 / ((kappa^2/alpha) *
    (1 - exp(-2*alpha*T)))), which may exceed 1; `probability` clamps it.
    `flocking_parameter` is max_i kappa_i^2 / alpha: the smaller it is,
    the tighter the agents track the mean.
    """

    kappa: float
    bound: float
    flocking_parameter: float

    @property
    def probability(self) -> float:
        return min(1.0, self.bound)


def build_generator(layout: PopulationLayout) -> GeneratorTriple:
    """Assemble (M, diag(R^{-1}), rho) for a validated layout."""
    alpha = layout.group_alpha
    rho = layout.rho
    k = layout.n_groups
    m = -alpha[:, None] * (np.eye(k) - rho[None, :])
    return GeneratorTriple(m=m, r_inv_diag=layout.group_sigma**2 / rho, rho=rho.copy())


# Pade coefficients and order-selection thresholds for the scaling-and-
# squaring evaluation of exp(A) in double precision (Higham 2005).
_PADE_COEFFS = {
    3: (120.0, 60.0, 12.0, 1.0),
    5: (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0),
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (
        17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
        2162160.0, 110880.0, 3960.0, 90.0, 1.0,
    ),
    13: (
        64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
        1187353796428800.0, 129060195264000.0, 10559470521600.0,
        670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
        960960.0, 16380.0, 182.0, 1.0,
    ),
}
_PADE_THETA = {
    3: 1.495585217958292e-2,
    5: 2.539398330063230e-1,
    7: 9.504178996162932e-1,
    9: 2.097847961257068e0,
    13: 5.371920351148152e0,
}


def _pade_approximant(a: np.ndarray, order: int) -> np.ndarray:
    """Diagonal Pade approximant r_m(a) for exp(a) at order m."""
    b = _PADE_COEFFS[order]
    n = a.shape[0]
    ident = np.eye(n)
    a2 = a @ a
    if order == 13:
        a4 = a2 @ a2
        a6 = a2 @ a4
        u = a @ (
            a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2)
            + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident
        )
        v = (
            a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2)
            + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident
        )
    else:
        powers = [ident, a2]
        while len(powers) < (order + 1) // 2 + 1:
            powers.append(powers[-1] @ a2)
        u_poly = sum(b[2 * k + 1] * powers[k] for k in range((order + 1) // 2))
        v = sum(b[2 * k] * powers[k] for k in range(order // 2 + 1))
        u = a @ u_poly
    return np.linalg.solve(v - u, v + u)


def matrix_exponential(a: np.ndarray, t: float) -> np.ndarray:
    """exp(a*t) by scaling and squaring with a diagonal Pade approximant.

    Relative accuracy is near machine precision for the moderately
    normed matrices arising here.  Raises NumericalError if the result
    overflows; never returns silent NaNs.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ConfigError("matrix_exponential requires a square matrix")
    if not np.isfinite(a).all():
        raise ConfigError("matrix entries must be finite")
    if not math.isfinite(t) or t < 0:
        raise ConfigError("t must be a finite nonnegative number")
    scaled = a * t
    if t == 0.0 or not scaled.any():
        return np.eye(a.shape[0])
    norm = float(np.abs(scaled).sum(axis=0).max())  # 1-norm
    result = None
    with np.errstate(over="ignore", invalid="ignore"):
        for order in (3, 5, 7, 9):
            if norm <= _PADE_THETA[order]:
                result = _pade_approximant(scaled, order)
                break
        if result is None:
            squarings = max(0, math.ceil(math.log2(norm / _PADE_THETA[13])))
            result = _pade_approximant(scaled / 2.0**squarings, 13)
            for _ in range(squarings):
                result = result @ result
    if not np.isfinite(result).all():
        raise NumericalError("matrix exponential overflowed")
    return result


# 15-point Gauss-Legendre rule on [-1, 1].
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(15)

_MAX_PANEL_DEPTH = 60
_MAX_PANELS = 20_000


def _variance_integrand(gen: GeneratorTriple):
    """g(s) = rho' exp(Ms) R^{-1} exp(Ms)' rho, with exp(Ms) shared per node."""

    def g(s: float) -> float:
        transition = matrix_exponential(gen.m, s)
        v = transition.T @ gen.rho
        value = float((v * v) @ gen.r_inv_diag)
        if not value > 0.0:
            raise NumericalError(f"variance integrand non-positive at s={s!r}")
        return value

    return g


def _gauss_panel(g, a: float, b: float) -> float:
    half = 0.5 * (b - a)
    nodes = half * _GL_NODES + 0.5 * (a + b)
    return half * sum(w * g(s) for w, s in zip(_GL_WEIGHTS, nodes))


def _integrate_adaptive(g, a: float, b: float, tol: float) -> tuple[float, int]:
    """Adaptive bisection with 15-point Gauss-Legendre panels.

    A panel is accepted when refining it changes its value by at most
    tol * (panel length) / (total length); the refined value is kept.
    """
    total_len = b - a
    stack = [(a, b, _gauss_panel(g, a, b), 0)]
    total = 0.0
    panels = 0
    created = 1
    while stack:
        left, right, coarse, depth = stack.pop()
        mid = 0.5 * (left + right)
        fine_l = _gauss_panel(g, left, mid)
        fine_r = _gauss_panel(g, mid, right)
        created += 2
        err = abs(coarse - (fine_l + fine_r))
        if err <= tol * (right - left) / total_len:
            total += fine_l + fine_r
            panels += 2
            continue
        if depth + 1 >= _MAX_PANEL_DEPTH or created > _MAX_PANELS:
            raise NumericalError(
                "quadrature did not converge: "
                f"{created} panels created, worst interval [{left!r}, {right!r}] "
                f"with error estimate {err:.3e} above budget"
            )
        stack.append((left, mid, fine_l, depth + 1))
        stack.append((mid, right, fine_r, depth + 1))
    return total, panels


def _quadrature_detailed(
    layout: PopulationLayout, horizon: float, tol: float
) -> tuple[float, int]:
    if not math.isfinite(horizon) or horizon <= 0:
        raise ConfigError("T must be positive and finite")
    if not 0.0 < tol <= 1e-4:
        raise ConfigError("tol must lie in (0, 1e-4]")
    gen = build_generator(layout)
    return _integrate_adaptive(_variance_integrand(gen), 0.0, horizon, tol)


def variance_quadrature(
    layout: PopulationLayout, horizon: float, tol: float = 1e-10
) -> float:
    """V_T^2 by adaptive Gauss-Legendre quadrature of the exact integrand.

    This is the reference method: it applies to every layout and the
    absolute error is driven below `tol`.
    """
    return _quadrature_detailed(layout, horizon, tol)[0]


def variance_closed_form_k2(layout: PopulationLayout, horizon: float) -> float:
    """Closed-form V_T^2 for exactly two groups.

    With gamma = alpha_2 rho_1 + alpha_1 rho_2, the transition matrix of
    the two-state chain is explicit and the integral evaluates to two
    bracketed terms, one per group.  Requires gamma > 0.
    """
    if layout.n_groups != 2:
        raise NotApplicableError("closed form applies only to two-group layouts")
    a1, a2 = (float(x) for x in layout.group_alpha)
    s1, s2 = (float(x) for x in layout.group_sigma)
    r1, r2 = (float(x) for x in layout.rho)
    gamma = a2 * r1 + a1 * r2
    if gamma <= 0.0:
        raise NotApplicableError(
            "closed form divides by gamma = alpha_2*rho_1 + alpha_1*rho_2 = 0; "
            "use variance_quadrature"
        )
    t = horizon
    em1 = -math.expm1(-gamma * t)       # 1 - exp(-gamma T)
    em2 = -math.expm1(-2.0 * gamma * t)  # 1 - exp(-2 gamma T)
    diff = a1 - a2
    bracket1 = (
        a2**2 * t
        + r2**2 * diff**2 / (2.0 * gamma) * em2
        + 2.0 * a2 * r2 * diff / gamma * em1
    )
    bracket2 = (
        a1**2 * t
        + r1**2 * diff**2 / (2.0 * gamma) * em2
        + 2.0 * a1 * r1 * (-diff) / gamma * em1
    )
    return s1**2 * r1 / gamma**2 * bracket1 + s2**2 * r2 / gamma**2 * bracket2


def variance_homogeneous(layout: PopulationLayout, horizon: float) -> float:
    """V_T^2 = T * sum_k rho_k sigma_k^2, valid when all rates coincide."""
    if not layout.homogeneous_alpha:
        raise NotApplicableError(
            "homogeneous formula requires all groups to share one alpha"
        )
    return horizon * float(layout.rho @ layout.group_sigma**2)


def variance_delta_expansion(
    coeffs: ExpansionCoefficients, layout: PopulationLayout, horizon: float
) -> float:
    """Second-order expansion of V_T^2 in the rate heterogeneity.

    Writing alpha_k = abar * (1 + eps_k) with sum_k rho_k eps_k = 0,
    the expansion around the equal-rate point is

        T*S0 + 2*(1/a - T - e1/a) * S1
             + (-11/(2a) + 3T + (6 + 2aT)/a * e1 - e2/(2a)) * S2
             - 2*(-2/a + T + 2*e1/a + T*e1) * S0*Q2

    with a = abar, e1 = exp(-aT), e2 = exp(-2aT) and the moments
    S0 = sum rho sigma^2, S1 = sum rho eps sigma^2,
    S2 = sum rho eps^2 sigma^2, Q2 = sum rho eps^2.  The truncation
    error is cubic in the heterogeneity scale.
    """
    a = coeffs.alpha_bar
    if a <= 0:
        raise NotApplicableError("expansion requires a positive mean alpha")
    eps = coeffs.eps
    rho = layout.rho
    sig2 = layout.group_sigma**2
    if eps.shape != rho.shape:
        raise ConfigError("expansion coefficients do not match the layout")
    s0 = float(rho @ sig2)
    s1 = float(rho @ (eps * sig2))
    s2 = float(rho @ (eps**2 * sig2))
    q2 = float(rho @ eps**2)
    t = horizon
    e1 = math.exp(-a * t)
    e2 = math.exp(-2.0 * a * t)
    return (
        t * s0
        + 2.0 * (1.0 / a - t - e1 / a) * s1
        + (-11.0 / (2.0 * a) + 3.0 * t + (6.0 + 2.0 * t * a) / a * e1 - e2 / (2.0 * a)) * s2
        - 2.0 * (-2.0 / a + t + 2.0 / a * e1 + t * e1) * (s0 * q2)
    )


def variance_report(
    layout: PopulationLayout, horizon: float, tol: float = 1e-10
) -> VarianceReport:
    """Evaluate V_T^2 by every method the layout admits."""
    from .model import expansion_coefficients

    value, panels = _quadrature_detailed(layout, horizon, tol)
    closed = None
    if layout.n_groups == 2:
        try:
            closed = variance_closed_form_k2(layout, horizon)
        except NotApplicableError:
            closed = None
    homogeneous = None
    if layout.homogeneous_alpha:
        homogeneous = variance_homogeneous(layout, horizon)
    expansion = None
    try:
        expansion = variance_delta_expansion(
            expansion_coefficients(layout), layout, horizon
        )
    except NotApplicableError:
        expansion = None
    return VarianceReport(
        v2_quadrature=value,
        v2_expansion=expansion,
        v2_closed_k2=closed,
        v2_homogeneous=homogeneous,
        quadrature_tol=tol,
        quadrature_panels=panels,
    )


def gaussian_tail_exact(v_t: float, n_agents: int, eta: float) -> float:
    """Exact reflection-principle probability 2*Phi(eta*sqrt(N) / V_T).

    V_T is the standard-deviation scale (square root of V_T^2).  Returns
    0 for V_T = 0: a deterministic mean started at 0 never reaches a
    negative level.
    """
    if eta >= 0:
        raise ConfigError("eta must be negative")
    if n_agents < 1:
        raise ConfigError("n_agents must be at least 1")
    if v_t < 0 or not math.isfinite(v_t):
        raise ConfigError("V_T must be a finite nonnegative number")
    if v_t == 0.0:
        return 0.0
    x = eta * math.sqrt(n_agents) / v_t
    # 2*Phi(x) = erfc(-x / sqrt(2)), accurate far into the tail
    return math.erfc(-x / math.sqrt(2.0))


def laplace_tail_approx(v2: float, n_agents: int, eta: float) -> TailApprox:
    """Tail approximation 2*exp(-eta^2 N / (2 v2)) plus the decay rate.

    The prefactor 2 can push the raw value above 1; the clamped value is
    reported alongside, and the rate eta^2 / (2 v2) is always exact.
    """
    if v2 <= 0 or not math.isfinite(v2):
        raise ConfigError("v2 must be positive and finite")
    if n_agents < 1:
        raise ConfigError("n_agents must be at least 1")
    rate = eta**2 / (2.0 * v2)
    raw = 2.0 * math.exp(-rate * n_agents)
    return TailApprox(raw=raw, probability=min(1.0, raw), rate=rate)


def flocking_bound(
    layout: PopulationLayout, agent: int, delta: float, horizon: float
) -> FlockingBound:
    """Deviation bound for one agent in a common-rate population.

    kappa_i^2 = (1 - 1/N)^2 sigma_i^2 + (1/N^2) sum_{j != i} sigma_j^2 is
    the noise scale of the deviation process Y_i - Ybar, and the bound is

        2 * exp(-delta^2 / ((kappa_i^2 / alpha) * (1 - exp(-2*alpha*T)))).

    Only defined when every agent shares one alpha; heterogeneous-rate
    layouts are rejected rather than extrapolated.  For alpha = 0 the
    factor (1 - exp(-2*alpha*T)) / alpha is continued by its limit 2T and
    the flocking parameter is infinite.
    """
    if not layout.homogeneous_alpha:
        raise NotApplicableError(
            "the deviation bound requires all groups to share one alpha"
        )
    if delta <= 0:
        raise ConfigError("delta must be positive")
    n = layout.n_agents
    if not 0 <= agent < n:
        raise IndexError(f"agent index {agent} out of range [0, {n})")
    sig2 = layout.sigma**2
    kappa2 = (1.0 - 1.0 / n) ** 2 * sig2 + (sig2.sum() - sig2) / n**2
    alpha = float(layout.group_alpha[0])
    if alpha > 0:
        scale = -math.expm1(-2.0 * alpha * horizon) / alpha
        flocking_parameter = float(kappa2.max()) / alpha
    else:
        scale = 2.0 * horizon
        flocking_parameter = math.inf
    bound = 2.0 * math.exp(-(delta**2) / (float(kappa2[agent]) * scale))
    return FlockingBound(
        kappa=math.sqrt(float(kappa2[agent])),
        bound=bound,
        flocking_parameter=flocking_parameter,
    )
