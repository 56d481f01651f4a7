"""Measurement reduction of multiplexed ghost images.

The linear unbiased reduction operator

    R* = U (A^T S^-1 A)^- A^T S^-1,      S = Sigma_nu

minimises the worst-case mean squared error; its estimate has covariance
``Sigma_R = U (A^T S^-1 A)^-1 U^T``.  The prior ``U f in [0, 1]^n`` is
brought in by a fixed-point iteration with a projection in the
Mahalanobis metric of ``Sigma_R``, and sparsity by hard thresholding of
transform coefficients at ``lambda`` standard deviations.

:class:`Reducer` caches everything that depends only on the model and the
assumed covariance, so sweeps over seeds and ``lambda`` pay for the dense
factorisations once.
"""

from dataclasses import dataclass, field
import math
import time

import numpy as np
import scipy.linalg as sla

from .errors import EstimabilityError, InvalidInputError, NonConvergenceError
from .linalg import SpdFactor, invert_low_rank_plus_diag, largest_eigenvalue, mahalanobis_project, pseudoinverse
from .sensing import build_sigma_nu, check_estimability, worst_case_f
from .transforms import SparsityBasis, component_std, forward, inverse

__all__ = [
    "ReductionEstimate",
    "PipelineConfig",
    "PipelineResult",
    "Reducer",
    "linear_reduction",
    "constrained_reduction",
    "threshold_in_basis",
    "run_pipeline",
    "metrics",
    "false_signal_energy",
]


@dataclass
class ReductionEstimate:
    estimate: np.ndarray
    covariance: np.ndarray
    worst_case_mse: float
    iterations_used: int = 0
    converged: bool = True
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class PipelineConfig:
    basis: SparsityBasis = None
    lam: float = 0.0
    fixed_point_tol: float = 1e-8
    fixed_point_max_iter: int = 500
    projection_tol: float = 1e-8
    projection_max_iter: int = 10_000
    projection_method: str = "newton"
    reestimate_sigma: bool = False

    def __post_init__(self):
        if not self.lam >= 0:
            raise InvalidInputError("lambda must be >= 0")


@dataclass
class PipelineResult:
    image: np.ndarray
    linear: ReductionEstimate
    constrained: ReductionEstimate
    thresholded: np.ndarray
    n_zeroed: int
    diagnostics: dict = field(default_factory=dict)


def _xi_of(xi):
    return np.asarray(getattr(xi, "xi", xi), dtype=float).ravel()


class Reducer:
    """Linear reduction for a fixed ``(model, Sigma_nu)`` pair.

    Raises EstimabilityError when ``U (I - A^- A) != 0``.
    """

    def __init__(self, model, sigma=None):
        self.model = model
        if sigma is None:
            sigma = build_sigma_nu(model, worst_case_f(model))
        self.sigma = sigma
        self.sigma_inv = invert_low_rank_plus_diag(sigma, floor=max(model.sigma_floor, np.finfo(float).tiny))
        a = model.A
        if a.shape[0] != sigma.n:
            raise InvalidInputError("covariance size does not match the measurement matrix")
        self.fisher = self.sigma_inv.congruence(a)  # A^T S^-1 A
        u = model.U_matrix()
        self.U = u
        self._identity_u = model.U is None
        self.fisher_pinv = None
        self._chol = None
        try:
            chol = sla.cho_factor(self.fisher, lower=True)
            d = np.abs(np.diag(chol[0]))
            if d.min() > 1e-7 * d.max():
                self._chol = chol
        except np.linalg.LinAlgError:
            pass
        if self._chol is None:
            ok, info = check_estimability(model)
            if not ok:
                raise EstimabilityError(
                    f"U(I - A^-A) != 0: {info['deficiency']} unobservable directions "
                    f"(relative residual {info['residual']:.2e}); the reduction error is infinite",
                    deficiency=info["deficiency"],
                )
            self.fisher_pinv = pseudoinverse(self.fisher)
        inv = self._fisher_solve(np.eye(model.n))
        cov = u @ inv @ u.T if not self._identity_u else inv
        self.covariance = 0.5 * (cov + cov.T)
        self.worst_case_mse = float(np.trace(self.covariance))
        # metric of the projection: Sigma_R^-1, straight from the Fisher matrix when U = I
        if self._identity_u and self._chol is not None:
            self.cov_inv = self.fisher
        else:
            self.cov_inv = SpdFactor.factor(self.covariance).inverse()
        self._lipschitz = None
        self._aug = None
        self._std_cache = {}

    def _fisher_solve(self, b):
        if self._chol is not None:
            return sla.cho_solve(self._chol, b)
        return self.fisher_pinv @ b

    @property
    def lipschitz(self):
        if self._lipschitz is None:
            self._lipschitz = largest_eigenvalue(self.cov_inv, self.cov_inv.shape[0])
        return self._lipschitz

    def rhs(self, xi):
        """``A^T Sigma_nu^-1 xi``."""
        xi = _xi_of(xi)
        if xi.size != self.model.A.shape[0]:
            raise InvalidInputError(f"measurement has {xi.size} entries, model expects {self.model.A.shape[0]}")
        return np.asarray(self.model.A.T @ self.sigma_inv(xi)).ravel()

    def linear(self, xi):
        est = self.U @ self._fisher_solve(self.rhs(xi))
        return ReductionEstimate(est, self.covariance, self.worst_case_mse)

    def project(self, u, tol=1e-8, max_iter=10_000, method="newton", x0=None):
        return mahalanobis_project(u, self.cov_inv, 0.0, 1.0, tol=tol, max_iter=max_iter,
                                   method=method, x0=x0, lipschitz=self.lipschitz)

    def _augmented(self):
        # reduction for the device (A; U) with noise diag(Sigma_nu, Sigma_R):
        # normal matrix A^T S^-1 A + U^T Sigma_R^-1 U
        if self._aug is None:
            sinv = self.cov_inv
            m = self.fisher + self.U.T @ sinv @ self.U
            self._aug = (SpdFactor.factor(0.5 * (m + m.T)), sinv)
        return self._aug

    def augmented_reduction(self, rhs, u_hat):
        """``R~(xi, u_hat)`` given ``rhs = A^T Sigma_nu^-1 xi``."""
        factor, sinv = self._augmented()
        return self.U @ factor.solve(rhs + self.U.T @ (sinv @ u_hat))

    def constrained(self, xi, tol=1e-8, max_iter=500, projection_tol=1e-8,
                    projection_max_iter=10_000, method="newton"):
        rhs = self.rhs(xi)
        linear = self.U @ self._fisher_solve(rhs)
        proj = dict(tol=projection_tol, max_iter=projection_max_iter, method=method)
        u_hat = self.project(linear, **proj)
        converged = False
        change = math.inf
        it = 0
        for it in range(1, max_iter + 1):
            new = self.project(self.augmented_reduction(rhs, u_hat), x0=u_hat, **proj)
            change = np.linalg.norm(new - u_hat) / max(np.linalg.norm(u_hat), np.finfo(float).tiny)
            u_hat = new
            if change <= tol:
                converged = True
                break
        diag = {"linear_estimate": linear, "last_relative_change": change}
        return ReductionEstimate(u_hat, self.covariance, self.worst_case_mse, it, converged, diag)

    def coefficient_std(self, basis):
        """``sqrt(diag(T Sigma_R T^T))``; zero for a noiseless model."""
        key = (basis.kind, basis.width, basis.height, basis.haar_levels)
        if key not in self._std_cache:
            if self.model.noiseless:
                # the placeholder covariance only shapes the metric; the estimate is exact
                self._std_cache[key] = np.zeros(basis.n)
            else:
                self._std_cache[key] = component_std(basis, self.covariance)
        return self._std_cache[key]

    def pipeline(self, xi, cfg=PipelineConfig()):
        t0 = time.perf_counter()
        lin = self.linear(xi)
        step2 = self.constrained(
            xi, cfg.fixed_point_tol, cfg.fixed_point_max_iter,
            cfg.projection_tol, cfg.projection_max_iter, cfg.projection_method,
        )
        u_hat = step2.estimate
        if cfg.basis is None or cfg.lam == 0:
            thr, zeroed = u_hat.copy(), 0
        else:
            std = self.coefficient_std(cfg.basis)
            thr, zeroed = _threshold(u_hat, cfg.basis, cfg.lam, std)
        if zeroed:
            final = self.project(thr, tol=cfg.projection_tol, max_iter=cfg.projection_max_iter,
                                 method=cfg.projection_method, x0=np.clip(thr, 0, 1))
        else:
            final = u_hat.copy()
        diag = {"runtime": time.perf_counter() - t0}
        return PipelineResult(final, lin, step2, thr, zeroed, diag)


def linear_reduction(xi, model, sigma=None):
    """Linear unbiased reduction estimate ``R* xi`` with its covariance."""
    return Reducer(model, sigma).linear(xi)


def constrained_reduction(xi, model, sigma=None, cfg=PipelineConfig()):
    """Box-constrained refinement ``u = P(R~(xi, u))`` by fixed-point iteration.

    Starts from the Mahalanobis projection of the linear estimate.  A run
    that exhausts ``cfg.fixed_point_max_iter`` is returned with
    ``converged=False`` and the last iterate.
    """
    return Reducer(model, sigma).constrained(
        xi, cfg.fixed_point_tol, cfg.fixed_point_max_iter,
        cfg.projection_tol, cfg.projection_max_iter, cfg.projection_method,
    )


def _threshold(u, basis, lam, std):
    coef = forward(basis, u)
    kill = np.abs(coef) < lam * std
    zeroed = int(np.count_nonzero(kill))
    if not zeroed:
        return np.array(u, dtype=float), 0
    coef[kill] = 0.0
    return inverse(basis, coef), zeroed


def threshold_in_basis(u, sigma, basis, lam, std=None):
    """Zero the coefficients of ``T u`` below ``lam`` standard deviations.

    ``std`` may be passed to skip recomputing ``sqrt(diag(T sigma T^T))``.
    If nothing is zeroed, ``u`` comes back unchanged (bit for bit).
    """
    if lam < 0:
        raise InvalidInputError("lambda must be >= 0")
    u = np.asarray(u, dtype=float).ravel()
    if u.size != basis.n:
        raise InvalidInputError("image and basis sizes differ")
    if std is None:
        std = component_std(basis, sigma)
    return _threshold(u, basis, lam, std)[0]


def run_pipeline(xi, model, cfg=PipelineConfig(), reducer=None):
    """All six steps; returns a PipelineResult whose ``image`` lies in [0, 1]^n.

    1. linear reduction with ``Sigma_nu`` at the worst-case (all-ones) object
    2. box-constrained refinement by fixed-point iteration
    3-5. hard thresholding in ``cfg.basis`` at ``cfg.lam`` standard deviations
    6. Mahalanobis projection of the thresholded image onto the box

    With ``cfg.reestimate_sigma`` the covariance is rebuilt from the step-2
    estimate and the pipeline is rerun once with it.
    """
    if reducer is None:
        reducer = Reducer(model)
    elif reducer.model is not model:
        raise InvalidInputError("reducer was built for a different model")
    try:
        result = reducer.pipeline(xi, cfg)
        if cfg.reestimate_sigma:
            sigma = build_sigma_nu(model, result.constrained.estimate)
            result = Reducer(model, sigma).pipeline(xi, cfg)
    except NonConvergenceError as exc:
        raise NonConvergenceError(f"pipeline projection stage: {exc}", exc.best,
                                  exc.residual, exc.iterations) from exc
    return result


def metrics(estimate, truth):
    """``{"mse": ..., "psnr": ...}``; psnr is ``inf`` for a perfect match."""
    est = np.asarray(estimate, dtype=float).ravel()
    ref = np.asarray(truth, dtype=float).ravel()
    if est.shape != ref.shape:
        raise InvalidInputError(f"grid mismatch: {est.size} vs {ref.size} pixels")
    mse = float(np.mean((est - ref) ** 2))
    psnr = math.inf if mse == 0 else 10.0 * math.log10(1.0 / mse)
    return {"mse": mse, "psnr": psnr}


def false_signal_energy(estimate, truth):
    """Mean squared estimate over the opaque (``truth == 0``) pixels."""
    est = np.asarray(estimate, dtype=float).ravel()
    mask = np.asarray(truth, dtype=float).ravel() == 0
    if not np.any(mask):
        return 0.0
    return float(np.mean(est[mask] ** 2))
