"""CDF/PDF of a positive definite quadratic form in Gaussian variables.

A form x^T A x with x ~ N(mu, Sigma) reduces, after whitening and rotation,
to sum_i lambda_i (u_i + b_i)^2 with u standard normal.  Its distribution
function is evaluated as a power series with alternating signs,

    F(y) = sum_k (-1)^k c_k y^(n/2+k) / Gamma(n/2+k+1),

whose coefficients follow a two-term recursion, together with a certified
upper bound on the truncation error after N terms.

The alternating series is summed in compensated (Kahan) fashion with the
leading coefficient kept in log space so that large offsets ||b||^2 do not
underflow.  Because the terms of the alternating form grow before the
factorial decay kicks in, cancellation eventually exceeds double precision
(roughly when y / min(lambda) is large).  In that regime the evaluator
switches to an exactly equivalent resummation of the same distribution as a
nonnegative mixture of central chi-square terms, which is stable at any
scale; the reported diagnostics then describe the mixture summation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammainc, gammaln

from .linalg import as_sym_matrix, as_vector, sym_eig

# Above this eigenvalue spread the form is declared ill-conditioned.
MAX_LAMBDA_SPREAD = 1e12
# Hard cap on the certified term count search.
TERMS_HARD_CAP = 500
# Direct alternating summation is attempted only when y/(2*min lambda) is
# below this; beyond it the float64 error estimate can never pass.
_DIRECT_XI_LIMIT = 60.0
# Consecutive relatively-negligible terms required by the fallback stop.
_STAGNATION_RUN = 3
# Mixture-path term cap.
_MIXTURE_CAP = 20000


@dataclass(frozen=True)
class QuadFormCanonical:
    """Reduced quadratic form: eigenvalues and standardized mean offsets."""

    lambdas: np.ndarray
    offsets_b: np.ndarray

    def __post_init__(self):
        lam = as_vector(self.lambdas, name="lambdas")
        b = as_vector(self.offsets_b, name="offsets_b")
        if lam.size != b.size:
            raise ValueError("QuadFormCanonical: lambdas and offsets_b lengths differ")
        if lam.min() <= 0.0:
            raise ValueError("QuadFormCanonical: all eigenvalues must be positive")
        if lam.max() / lam.min() > MAX_LAMBDA_SPREAD:
            raise ValueError(
                f"QuadFormCanonical: eigenvalue spread {lam.max() / lam.min():.3e} "
                f"exceeds {MAX_LAMBDA_SPREAD:.0e}"
            )
        lam.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "offsets_b", b)

    @property
    def n(self) -> int:
        return self.lambdas.size


@dataclass(frozen=True)
class SeriesResult:
    """Series evaluation plus diagnostics.

    value is a probability (clamped to [0, 1]) for the CDF and a density for
    the PDF.  bound_at_stop is the certified bound on the tail that was left
    unsummed, when one is available (inf when the stop was purely heuristic).
    """

    value: float
    terms_used: int
    bound_at_stop: float
    converged: bool


def canonicalize(mu, sigma, A) -> QuadFormCanonical:
    """Reduce x^T A x with x ~ N(mu, sigma) to canonical (lambda, b) data.

    lambda are the eigenvalues of sigma^(1/2) A sigma^(1/2) and
    b = P^T sigma^(-1/2) mu for the orthogonal P of that eigenproblem.
    Both sigma and A must be symmetric positive definite.
    """
    m = as_vector(mu, name="mu")
    S = as_sym_matrix(sigma, name="sigma")
    Am = as_sym_matrix(A, name="A")
    if S.shape[0] != m.size or Am.shape[0] != m.size:
        raise ValueError("canonicalize: dimension mismatch")

    ws, Ps = sym_eig(S)
    if ws.min() <= 1e-14 * max(1.0, ws.max()):
        raise ValueError("canonicalize: sigma is not positive definite")
    sqrt_s = (Ps * np.sqrt(ws)) @ Ps.T
    inv_sqrt_s = (Ps / np.sqrt(ws)) @ Ps.T

    B = sqrt_s @ Am @ sqrt_s
    lam, P = sym_eig(0.5 * (B + B.T))
    if lam.min() <= 0.0:
        raise ValueError("canonicalize: A is not positive definite")

    b = P.T @ (inv_sqrt_s @ m)
    q = QuadFormCanonical(lam, b)

    # The value of the form at the mean must be recovered exactly.
    q_mean = float(np.sum(lam * b * b))
    direct = float(m @ Am @ m)
    if abs(q_mean - direct) > 1e-9 * max(1.0, abs(direct)):
        raise ValueError("canonicalize: canonical form failed the Q(mu) identity")
    return q


def series_coefficients(q: QuadFormCanonical, K: int) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients c_0..c_K and d_1..d_K of the power series.

        c_0 = exp(-1/2 sum b_i^2) prod (2 lambda_i)^(-1/2)
        d_k = 1/2 sum_i (1 - k b_i^2) (2 lambda_i)^(-k)
        c_k = (1/k) sum_{i=0}^{k-1} d_{k-i} c_i

    Returned unscaled, so c_0 underflows for ||b||^2 beyond roughly 1400;
    the evaluators below keep the common factor in log space instead.
    """
    if K < 0:
        raise ValueError("series_coefficients: K must be >= 0")
    lam = q.lambdas
    b2 = q.offsets_b**2
    c0 = math.exp(-0.5 * float(b2.sum())) * float(np.prod(1.0 / np.sqrt(2.0 * lam)))
    c = np.empty(K + 1)
    d = np.empty(K + 1)  # d[0] unused
    c[0] = c0
    d[0] = np.nan
    inv2lam = 1.0 / (2.0 * lam)
    powers = np.ones_like(lam)
    for k in range(1, K + 1):
        powers = powers * inv2lam
        d[k] = 0.5 * float(np.sum((1.0 - k * b2) * powers))
        c[k] = float(np.dot(d[1 : k + 1][::-1], c[:k])) / k
    return c, d[1:]


def _log_m_rho(lam: np.ndarray, b: np.ndarray, rho: float) -> float:
    """log of the Cauchy-bound envelope m(rho); requires 0 < rho < min lambda."""
    if not 0.0 < rho < lam.min():
        raise ValueError("rho must satisfy 0 < rho < min(lambda)")
    b2 = b * b
    return float(
        -0.5 * np.sum(np.log(lam))
        - 0.5 * np.sum(b2 * lam / (lam + rho))
        - 0.5 * np.sum(np.log1p(-rho / lam))
    )


def _log_truncation_bound(lam, b, rho, y, N, n) -> float:
    # E(N) = m(rho) * (Gamma(n/2) (N+1)!)^-1 * (y/2)^(n/2) * (y/(2 rho))^(N+1) * exp(y/(2 rho))
    if y <= 0.0:
        return -math.inf
    half_n = 0.5 * n
    x = y / (2.0 * rho)
    return (
        _log_m_rho(lam, b, rho)
        - gammaln(half_n)
        - gammaln(N + 2.0)
        + half_n * math.log(0.5 * y)
        + (N + 1.0) * math.log(x)
        + x
    )


def truncation_bound(q: QuadFormCanonical, rho: float, y: float, N: int) -> float:
    """Certified upper bound on |F(y) - F_N(y)| after summing terms 0..N.

    Valid for 0 < rho < min(lambda); decreasing in N once N exceeds
    y/(2 rho).  Computed in log space, so it saturates at inf rather than
    overflowing for small N.
    """
    if y < 0.0:
        raise ValueError("truncation_bound: y must be >= 0")
    if N < 0:
        raise ValueError("truncation_bound: N must be >= 0")
    log_e = _log_truncation_bound(q.lambdas, q.offsets_b, rho, y, N, q.n)
    if log_e > 700.0:
        return math.inf
    return float(math.exp(log_e))


def default_rho(q: QuadFormCanonical) -> float:
    """Default bound parameter: halfway into the validity region."""
    return 0.5 * float(q.lambdas.min())


def terms_needed(q: QuadFormCanonical, y: float, tol: float, rho: float | None = None) -> int:
    """Smallest N whose certified truncation bound is at most tol.

    Raises if no N up to the hard cap suffices (ill-conditioned input).
    """
    if tol <= 0.0:
        raise ValueError("terms_needed: tol must be > 0")
    if y < 0.0:
        raise ValueError("terms_needed: y must be >= 0")
    if y == 0.0:
        return 1
    r = default_rho(q) if rho is None else float(rho)
    ns = np.arange(1, TERMS_HARD_CAP + 1, dtype=float)
    half_n = 0.5 * q.n
    x = y / (2.0 * r)
    logs = (
        _log_m_rho(q.lambdas, q.offsets_b, r)
        - gammaln(half_n)
        - gammaln(ns + 2.0)
        + half_n * math.log(0.5 * y)
        + (ns + 1.0) * math.log(x)
        + x
    )
    ok = np.nonzero(logs <= math.log(tol))[0]
    if ok.size == 0:
        raise ValueError(
            f"terms_needed: no N <= {TERMS_HARD_CAP} certifies tol={tol:g} "
            "(ill-conditioned form)"
        )
    return int(ns[ok[0]])


class _KahanSum:
    """Compensated accumulator for the alternating series."""

    __slots__ = ("s", "c")

    def __init__(self):
        self.s = 0.0
        self.c = 0.0

    def add(self, x: float):
        t = x - self.c
        u = self.s + t
        self.c = (u - self.s) - t
        self.s = u


def _direct_series(lam, b, y, n, tol, max_terms, rho, density):
    """Alternating power-series summation on the normalized form.

    Returns (value, terms_used, bound_at_stop, converged, max_abs_term) or
    None when the running terms overflow the rescaling safeguards.
    """
    half_n = 0.5 * n
    b2 = b * b
    log_y = math.log(y)
    # Leading coefficient in log space; c[] holds coefficients relative to it.
    log_scale = -0.5 * float(b2.sum()) - 0.5 * float(np.sum(np.log(2.0 * lam)))
    inv2lam = 1.0 / (2.0 * lam)

    exp_shift = half_n - 1.0 if density else half_n
    gamma_shift = 0.0 if density else 1.0

    c = np.empty(max_terms)
    d = np.empty(max_terms)
    c[0] = 1.0
    powers = np.ones_like(lam)

    acc = _KahanSum()
    max_abs_term = 0.0
    small_run = 0
    bound_at_stop = math.inf
    log_rho_valid = True
    x_over_rho = y / (2.0 * rho)

    for k in range(max_terms):
        if k >= 1:
            powers = powers * inv2lam
            d[k] = 0.5 * float(np.sum((1.0 - k * b2) * powers))
            c[k] = float(np.dot(d[1 : k + 1][::-1], c[:k])) / k
        ck = c[k]
        if ck == 0.0:
            term = 0.0
        else:
            log_mag = log_scale + (exp_shift + k) * log_y - gammaln(half_n + k + gamma_shift)
            # (exp_shift + k) can be 0 with y == 0 handled by callers; log_y finite here.
            mag = math.exp(log_mag) if log_mag < 709.0 else math.inf
            if not math.isfinite(mag):
                return None
            term = ((-1.0) ** k) * ck * mag
        acc.add(term)
        max_abs_term = max(max_abs_term, abs(term))

        # Certified bound on what remains after term k (CDF only).
        if not density and log_rho_valid:
            log_e = (
                _log_m_rho(lam, b, rho)
                - gammaln(half_n)
                - gammaln(k + 2.0)
                + half_n * math.log(0.5 * y)
                + (k + 1.0) * math.log(x_over_rho)
                + x_over_rho
            )
            bound_at_stop = math.exp(log_e) if log_e < 700.0 else math.inf
            if bound_at_stop <= tol:
                return acc.s, k + 1, bound_at_stop, True, max_abs_term

        # Heuristic stop: three consecutive terms negligible w.r.t. the sum.
        if abs(term) <= tol * abs(acc.s):
            small_run += 1
            if small_run >= _STAGNATION_RUN:
                return acc.s, k + 1 - _STAGNATION_RUN + 1, bound_at_stop, True, max_abs_term
        else:
            small_run = 0

        # Rescale the coefficient history before it overflows.
        if k >= 1 and abs(c[k]) > 1e120:
            c[: k + 1] *= 1e-120
            log_scale += 120.0 * math.log(10.0)

    return acc.s, max_terms, bound_at_stop, False, max_abs_term


def _mixture_series(lam, b, y, n, tol, density):
    """Nonnegative chi-square mixture resummation of the same distribution.

    With beta = min(lambda) the mixing weights a_k are nonnegative and sum to
    one, so partial sums are monotone and the discarded tail is certified by
    (1 - sum a_k) times the next (decreasing) basis term.
    """
    beta = float(lam.min())
    delta = 1.0 - beta / lam
    b2 = b * b
    half_n = 0.5 * n
    u = y / (2.0 * beta)

    # log a_0; the running weights are stored relative to it.
    log_scale = -0.5 * float(b2.sum()) + 0.5 * float(np.sum(np.log(beta / lam)))
    bsum = beta * b2 / lam

    cap = _MIXTURE_CAP
    a = np.empty(cap)
    g = np.empty(cap)
    a[0] = 1.0
    pow_delta = np.ones_like(lam)

    total_weight = 0.0
    acc = 0.0
    k = 0
    while k < cap:
        if k >= 1:
            g[k] = float(np.sum(pow_delta * (delta + k * bsum)))
            pow_delta = pow_delta * delta
            a[k] = 0.5 * float(np.dot(g[1 : k + 1][::-1], a[:k])) / k
        weight = a[k] * math.exp(log_scale)
        if density:
            log_f = (half_n + k - 1.0) * math.log(u) - u - gammaln(half_n + k) if u > 0 else -math.inf
            if u == 0.0 and half_n + k == 1.0:
                basis = 1.0
            else:
                basis = math.exp(log_f) if log_f < 709.0 else math.inf
            basis = basis / (2.0 * beta)
        else:
            basis = float(gammainc(half_n + k, u))
        acc += weight * basis
        total_weight += weight

        remaining = max(0.0, 1.0 - total_weight)
        if density:
            nxt_log = (half_n + k) * math.log(u) - u - gammaln(half_n + k + 1.0) if u > 0 else -math.inf
            nxt = (math.exp(nxt_log) if nxt_log < 709.0 else math.inf) / (2.0 * beta)
        else:
            nxt = float(gammainc(half_n + k + 1.0, u))
        tail = remaining * nxt
        if tail <= tol:
            return acc, k + 1, tail, True

        if k >= 1 and abs(a[k]) > 1e120:
            a[: k + 1] *= 1e-120
            log_scale += 120.0 * math.log(10.0)
        k += 1

    return acc, cap, math.inf, False


def _evaluate(q: QuadFormCanonical, y: float, tol: float, max_terms: int,
              rho: float | None, density: bool) -> SeriesResult:
    if y < 0.0:
        raise ValueError("y must be >= 0")
    if tol <= 0.0:
        raise ValueError("tol must be > 0")
    if max_terms < 1:
        raise ValueError("max_terms must be >= 1")
    n = q.n
    if y == 0.0:
        if density:
            if n == 1:
                return SeriesResult(math.inf, 1, 0.0, True)
            if n == 2:
                c0 = math.exp(
                    -0.5 * float(np.sum(q.offsets_b**2))
                    - 0.5 * float(np.sum(np.log(2.0 * q.lambdas)))
                )
                return SeriesResult(c0, 1, 0.0, True)
            return SeriesResult(0.0, 1, 0.0, True)
        return SeriesResult(0.0, 1, 0.0, True)

    # Normalize the scale: lambda -> lambda/gamma, y -> y/gamma leaves the
    # CDF unchanged (the density picks up a 1/gamma factor).
    gamma = float(q.lambdas.min())
    lam = q.lambdas / gamma
    yn = y / gamma
    b = q.offsets_b
    rho_n = 0.5 if rho is None else float(rho) / gamma
    xi = yn / (2.0 * lam.min())

    direct = None
    if xi <= _DIRECT_XI_LIMIT:
        direct = _direct_series(lam, b, yn, n, tol, max_terms, rho_n, density)
    if direct is not None:
        s, used, bound, conv, max_abs = direct
        # Accept only when float cancellation cannot have eaten the answer.
        err_est = 4.0e-16 * max_abs * (1.0 + 0.05 * used)
        ref = max(abs(s), 1e-30)
        if conv and err_est <= max(0.25 * tol * ref, 1e-14):
            value = s / gamma if density else s
            return _finalize(value, used, bound, True, density)

    s, used, bound, conv = _mixture_series(lam, b, yn, n, tol, density)
    value = s / gamma if density else s
    return _finalize(value, used, bound, conv, density)


def _finalize(value: float, used: int, bound: float, conv: bool, density: bool) -> SeriesResult:
    if density:
        value = max(value, 0.0)
    else:
        value = min(1.0, max(0.0, value))
    return SeriesResult(float(value), int(used), float(max(bound, 0.0)), bool(conv))


def cdf(q: QuadFormCanonical, y: float, tol: float = 1e-6, max_terms: int = 300,
        rho: float | None = None) -> SeriesResult:
    """P(Q <= y), with term count, stop-time bound and convergence flag.

    The summation stops when the certified truncation bound drops below tol
    or when three consecutive terms change the partial sum by less than tol
    relative; max_terms caps the alternating summation.  The returned value
    is clamped to [0, 1].
    """
    return _evaluate(q, float(y), float(tol), int(max_terms), rho, density=False)


def pdf(q: QuadFormCanonical, y: float, tol: float = 1e-6, max_terms: int = 300,
        rho: float | None = None) -> SeriesResult:
    """Density of Q at y (same machinery as cdf with shifted exponents)."""
    return _evaluate(q, float(y), float(tol), int(max_terms), rho, density=True)
