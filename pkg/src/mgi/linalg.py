"""Dense linear-algebra kernels used by the reduction estimator.

Everything here works on plain ``numpy`` arrays.  The covariance of the
ghost-image noise is "diagonal + low rank", so it gets its own small class
with a Woodbury solve instead of being materialised.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import InvalidInputError, NonConvergenceError, SingularCovarianceError

__all__ = [
    "LowRankPlusDiag",
    "LowRankPlusDiagInverse",
    "SpdFactor",
    "pseudoinverse",
    "invert_low_rank_plus_diag",
    "spd_inverse",
    "largest_eigenvalue",
    "kkt_residual",
    "mahalanobis_project",
]


def _as_finite(m, name="matrix"):
    m = np.asarray(m, dtype=float)
    if not np.all(np.isfinite(m)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return m


def pseudoinverse(m, rel_cutoff=None):
    """Moore-Penrose pseudoinverse via the SVD.

    Singular values below ``rel_cutoff * sigma_max`` are treated as zero.
    The default cutoff is ``1e-10 * max(rows, cols)``.
    """
    m = _as_finite(m)
    if m.ndim != 2:
        raise InvalidInputError("pseudoinverse expects a 2-D matrix")
    rows, cols = m.shape
    if rel_cutoff is None:
        rel_cutoff = 1e-10 * max(rows, cols)
    if not 0.0 < rel_cutoff < 1.0:
        raise InvalidInputError("rel_cutoff must lie in (0, 1)")
    if m.size == 0:
        return np.zeros((cols, rows))
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    smax = s[0] if s.size else 0.0
    keep = s > rel_cutoff * smax
    if smax == 0.0 or not np.any(keep):
        return np.zeros((cols, rows))
    return (vt[keep].T / s[keep]) @ u[:, keep].T


@dataclass(frozen=True)
class LowRankPlusDiag:
    """Symmetric matrix ``diag(d) + G G^T`` kept in factored form."""

    diag: np.ndarray
    factors: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.diag, dtype=float).ravel()
        g = np.asarray(self.factors, dtype=float)
        if g.ndim == 1:
            g = g[:, None]
        if g.size == 0:
            g = np.zeros((d.size, 0))
        if g.shape[0] != d.size:
            raise InvalidInputError(
                f"factors have {g.shape[0]} rows, diagonal has {d.size} entries"
            )
        object.__setattr__(self, "diag", d)
        object.__setattr__(self, "factors", g)

    @property
    def n(self):
        return self.diag.size

    @property
    def rank(self):
        return self.factors.shape[1]

    def matvec(self, v):
        v = np.asarray(v, dtype=float)
        d = self.diag if v.ndim == 1 else self.diag[:, None]
        return d * v + self.factors @ (self.factors.T @ v)

    def toarray(self):
        return np.diag(self.diag) + self.factors @ self.factors.T


class LowRankPlusDiagInverse:
    """Applies ``(diag(d) + G G^T)^{-1}`` with the Woodbury identity.

    Works on vectors and on matrices (column by column).
    """

    def __init__(self, s):
        self.source = s
        self._dinv = 1.0 / s.diag
        g = s.factors
        self._dinv_g = self._dinv[:, None] * g
        cap = np.eye(s.rank) + g.T @ self._dinv_g
        self._cap = sla.cho_factor(cap, lower=True) if s.rank else None

    @property
    def shape(self):
        return (self.source.n, self.source.n)

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        vector = v.ndim == 1
        if vector:
            v = v[:, None]
        out = self._dinv[:, None] * v
        if self._cap is not None:
            w = sla.cho_solve(self._cap, self._dinv_g.T @ v)
            out -= self._dinv_g @ w
        return out[:, 0] if vector else out

    def congruence(self, a):
        """``a^T s^{-1} a`` for a dense or ``scipy.sparse`` matrix ``a``.

        Never forms ``s^{-1} a`` densely; only ``a^T D^{-1} a`` (sparse if
        ``a`` is) and the ``r`` columns ``a^T D^{-1} G``.
        """
        scaled = a.multiply(self._dinv[:, None]) if hasattr(a, "multiply") else self._dinv[:, None] * a
        out = a.T @ scaled
        out = out.toarray() if hasattr(out, "toarray") else np.asarray(out)
        if self._cap is not None:
            w = np.asarray(a.T @ self._dinv_g)
            out = out - w @ sla.cho_solve(self._cap, w.T)
        return 0.5 * (out + out.T)

    def diagonal(self):
        out = self._dinv.copy()
        if self._cap is not None:
            w = sla.cho_solve(self._cap, self._dinv_g.T)
            out -= np.einsum("ij,ji->i", self._dinv_g, w)
        return out

    def toarray(self):
        return self(np.eye(self.source.n))


def invert_low_rank_plus_diag(s, floor=np.finfo(float).tiny):
    """Return an operator that applies ``s^{-1}``.

    Raises SingularCovarianceError if a diagonal entry is below ``floor``.
    """
    if floor <= 0:
        raise InvalidInputError("floor must be positive")
    if not np.all(np.isfinite(s.diag)) or not np.all(np.isfinite(s.factors)):
        raise InvalidInputError("non-finite covariance entries")
    bad = np.flatnonzero(s.diag < floor)
    if bad.size:
        raise SingularCovarianceError(
            f"{bad.size} diagonal entries below floor {floor:g} (first at {bad[0]})"
        )
    return LowRankPlusDiagInverse(s)


@dataclass(frozen=True)
class SpdFactor:
    """Cholesky factor of a symmetric positive-definite matrix.

    ``shift`` is the multiple of the identity that had to be added to make
    the factorisation succeed (0 for a well-posed source).
    """

    source: np.ndarray
    cho: tuple
    shift: float = 0.0

    @classmethod
    def factor(cls, m, eps=1e-10):
        m = _as_finite(m)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InvalidInputError("expected a square matrix")
        scale = max(np.abs(m).max(), np.finfo(float).tiny)
        if np.abs(m - m.T).max() > 1e-12 * scale * max(1, m.shape[0]):
            raise InvalidInputError("matrix is not symmetric")
        try:
            return cls(m, sla.cho_factor(m, lower=True), 0.0)
        except np.linalg.LinAlgError:
            pass
        # degenerate covariance: eps * (trace / n) * I keeps the projection well posed
        shift = eps * max(np.trace(m) / m.shape[0], np.finfo(float).tiny)
        try:
            reg = m + shift * np.eye(m.shape[0])
            return cls(m, sla.cho_factor(reg, lower=True), shift)
        except np.linalg.LinAlgError as exc:
            raise SingularCovarianceError("matrix is not positive semidefinite") from exc

    def solve(self, b):
        return sla.cho_solve(self.cho, b)

    def inverse(self):
        inv = self.solve(np.eye(self.source.shape[0]))
        return 0.5 * (inv + inv.T)


def spd_inverse(m, eps=1e-10):
    """Inverse of a symmetric PSD matrix, regularised if it is singular."""
    return SpdFactor.factor(m, eps).inverse()


def _matvec_of(op):
    if callable(op) and not isinstance(op, np.ndarray):
        return op
    if hasattr(op, "matvec"):
        return op.matvec
    m = np.asarray(op, dtype=float)
    return lambda v: m @ v


def largest_eigenvalue(op, n, iters=200, rtol=1e-6, seed=0):
    """Power iteration estimate of the largest eigenvalue of an SPD operator.

    Slightly inflated (by 1 %) so that ``1/L`` is a safe step size.
    """
    mv = _matvec_of(op)
    v = np.random.default_rng(seed).standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = mv(v)
        new = float(v @ w)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        if abs(new - lam) <= rtol * abs(new):
            lam = new
            break
        lam = new
    return 1.01 * max(lam, float(v @ mv(v)))


def kkt_residual(x, grad, lo, hi, step):
    """Sup-norm of the projected-gradient map ``x - P(x - step * grad)``."""
    if x.size == 0:
        return 0.0
    return float(np.abs(x - np.clip(x - step * grad, lo, hi)).max())


def mahalanobis_project(
    u,
    sigma_inv,
    box_lo,
    box_hi,
    tol=1e-8,
    max_iter=10_000,
    method="apg",
    x0=None,
    lipschitz=None,
):
    """Project ``u`` onto a box in the metric given by ``sigma_inv``.

    Solves ``min (v-u)^T sigma_inv (v-u)`` subject to ``box_lo <= v <= box_hi``.

    Parameters
    ----------
    u : (n,) array
    sigma_inv : (n, n) array, or a linear operator (``method="apg"`` only)
        Symmetric positive-definite metric.
    box_lo, box_hi : float or (n,) array
    tol : float
        Stopping threshold on the KKT residual
        ``max|v - clip(v - grad / L)|`` where ``L`` bounds the spectrum.
    method : {"apg", "newton"}
        ``"apg"`` is accelerated projected gradient (FISTA with adaptive
        restart), step ``1/L``.  ``"newton"`` is a projected Newton method
        with a Cholesky solve on the free variables; it needs a dense
        matrix and is the practical choice for ill-conditioned metrics.
    x0 : (n,) array, optional
        Warm start (clipped into the box).

    Raises
    ------
    NonConvergenceError
        ``max_iter`` reached; ``err.best`` holds the best iterate.
    """
    u = _as_finite(u, "u").ravel()
    n = u.size
    lo = np.broadcast_to(np.asarray(box_lo, dtype=float), (n,))
    hi = np.broadcast_to(np.asarray(box_hi, dtype=float), (n,))
    if np.any(lo > hi):
        raise InvalidInputError("box_lo must not exceed box_hi")
    mv = _matvec_of(sigma_inv)
    L = lipschitz if lipschitz is not None else largest_eigenvalue(mv, n)
    if L <= 0:
        raise SingularCovarianceError("sigma_inv has no positive eigenvalue")

    x = np.clip(u if x0 is None else np.asarray(x0, dtype=float).ravel(), lo, hi)
    if method == "apg":
        return _project_apg(u, mv, lo, hi, x, L, tol, max_iter)
    if method == "newton":
        m = np.asarray(sigma_inv, dtype=float)
        if m.ndim != 2:
            raise InvalidInputError("newton projection needs a dense sigma_inv")
        return _project_newton(u, m, lo, hi, x, L, tol, max_iter)
    raise InvalidInputError(f"unknown projection method {method!r}")


def _project_apg(u, mv, lo, hi, x, L, tol, max_iter):
    step = 1.0 / L
    y = x.copy()
    t = 1.0
    best, best_res = x.copy(), np.inf
    for it in range(max_iter + 1):
        gx = mv(x - u)
        res = kkt_residual(x, gx, lo, hi, step)
        if res < best_res:
            best, best_res = x.copy(), res
        if res <= tol:
            return x
        if it == max_iter:
            break
        gy = gx if y is x else mv(y - u)
        x_new = np.clip(y - step * gy, lo, hi)
        # gradient-based restart keeps the iteration monotone on hard problems
        if (y - x_new) @ (x_new - x) > 0:
            t = 1.0
            y = x_new
        else:
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            y = x_new + ((t - 1.0) / t_new) * (x_new - x)
            t = t_new
        x = x_new
    raise NonConvergenceError(
        f"box projection did not reach tol={tol:g} in {max_iter} iterations "
        f"(residual {best_res:.3e})",
        best=best,
        residual=best_res,
        iterations=max_iter,
    )


def _project_newton(u, m, lo, hi, x, L, tol, max_iter, sigma=1e-4):
    step = 1.0 / L
    diag = np.maximum(np.diag(m), np.finfo(float).tiny)

    def objective(v):
        d = v - u
        return 0.5 * d @ (m @ d)

    g = m @ (x - u)
    fx = objective(x)
    best, best_res = x.copy(), np.inf
    for it in range(max_iter + 1):
        res = kkt_residual(x, g, lo, hi, step)
        if res < best_res:
            best, best_res = x.copy(), res
        if res <= tol:
            return x
        if it == max_iter:
            break
        eps = min(1e-3, res)
        binding = ((x <= lo + eps) & (g > 0)) | ((x >= hi - eps) & (g < 0))
        free = ~binding
        d = np.empty_like(x)
        d[binding] = -g[binding] / diag[binding]
        if np.any(free):
            idx = np.flatnonzero(free)
            mff = m[np.ix_(idx, idx)]
            try:
                d[idx] = -sla.cho_solve(sla.cho_factor(mff, lower=True), g[idx])
            except np.linalg.LinAlgError:
                d[idx] = -g[idx] / diag[idx]
        gd_free = float(g[free] @ d[free])
        alpha = 1.0
        while True:
            x_new = np.clip(x + alpha * d, lo, hi)
            f_new = objective(x_new)
            decrease = -sigma * (alpha * gd_free) + sigma * float(
                g[binding] @ (x[binding] - x_new[binding])
            )
            if fx - f_new >= decrease or alpha < 1e-12:
                break
            alpha *= 0.5
        if alpha < 1e-12:
            # Newton direction failed; fall back to a plain projected-gradient step
            x_new = np.clip(x - step * g, lo, hi)
            f_new = objective(x_new)
        x, fx = x_new, f_new
        g = m @ (x - u)
    raise NonConvergenceError(
        f"projected Newton did not reach tol={tol:g} in {max_iter} iterations "
        f"(residual {best_res:.3e})",
        best=best,
        residual=best_res,
        iterations=max_iter,
    )
