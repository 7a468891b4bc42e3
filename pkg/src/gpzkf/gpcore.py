"""Gaussian-process regression for learned dynamics and observation models.

Multi-output functions are handled through the single-output surrogate
construction: every output dimension is an independent scalar GP, and all of
them share one squared-exponential ARD kernel and one noise level. Because the
inputs and hyperparameters are shared, a single Cholesky factor serves every
output dimension.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .zonogeom import Box

FIT_JITTER = 1e-10


class GPFitError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class SEKernel:
    """Squared-exponential kernel with one lengthscale per input dimension."""

    signal_variance: float = 1.0
    lengthscales: np.ndarray | float = 1.0

    def __post_init__(self):
        if self.signal_variance <= 0:
            raise ValueError("signal_variance must be positive")
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        if np.any(ls <= 0):
            raise ValueError("lengthscales must be positive")
        object.__setattr__(self, "lengthscales", ls)

    def _ls(self, n_in: int) -> np.ndarray:
        if self.lengthscales.size == 1:
            return np.full(n_in, float(self.lengthscales[0]))
        if self.lengthscales.size != n_in:
            raise ValueError(f"kernel has {self.lengthscales.size} lengthscales, inputs have {n_in} dims")
        return self.lengthscales

    def __call__(self, A, B) -> np.ndarray:
        A = np.atleast_2d(A)
        B = np.atleast_2d(B)
        ls = self._ls(A.shape[1])
        d = (A[:, None, :] - B[None, :, :]) / ls
        return self.signal_variance * np.exp(-0.5 * np.sum(d * d, axis=-1))

    @property
    def sup_norm(self) -> float:
        """``sup k(z, z')``, attained on the diagonal."""
        return self.signal_variance

    def with_params(self, signal_variance=None, lengthscales=None) -> "SEKernel":
        return SEKernel(
            self.signal_variance if signal_variance is None else signal_variance,
            self.lengthscales if lengthscales is None else lengthscales,
        )


@dataclass(frozen=True, eq=False)
class LipschitzConstants:
    """Smoothness constants of a learned model, scalar or one per output.

    ``grad_mean`` bounds the Lipschitz constant of the mean gradient,
    ``std_dev`` the Hoelder-1/2 constant of the posterior std, ``function``
    the Lipschitz constant of the mean itself.
    """

    grad_mean: np.ndarray | float = 0.0
    std_dev: np.ndarray | float = 0.0
    function: np.ndarray | float = 0.0

    def __post_init__(self):
        for name in ("grad_mean", "std_dev", "function"):
            v = np.asarray(getattr(self, name), dtype=float)
            if np.any(v < 0) or np.any(np.isnan(v)):
                raise ValueError(f"{name} must be non-negative")
            object.__setattr__(self, name, v if v.ndim else float(v))

    def scalar(self) -> "LipschitzConstants":
        """Collapse per-output constants to their maxima."""
        return LipschitzConstants(*(float(np.max(getattr(self, k))) for k in ("grad_mean", "std_dev", "function")))

    def scaled(self, factor: float) -> "LipschitzConstants":
        return LipschitzConstants(*(factor * np.asarray(getattr(self, k)) for k in ("grad_mean", "std_dev", "function")))

    def to_dict(self) -> dict:
        return {k: np.asarray(getattr(self, k)).tolist() for k in ("grad_mean", "std_dev", "function")}


def beta_scaling(rkhs_bound: float, info_capacity: float, delta: float) -> float:
    """Confidence-interval scaling ``B + sqrt(2 (gamma + log(1/delta)))``."""
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if rkhs_bound < 0 or info_capacity < 0:
        raise ValueError("rkhs_bound and info_capacity must be non-negative")
    return rkhs_bound + math.sqrt(2.0 * (info_capacity + math.log(1.0 / delta)))


class GPModel(RegressorMixin, BaseEstimator):
    """Zero-mean GP regressor with shared hyperparameters across outputs.

    Parameters
    ----------
    kernel : SEKernel, optional
        Initial (or fixed) kernel. Defaults to unit variance and lengthscale.
    noise_std : float
        Standard deviation of the i.i.d. Gaussian noise on training targets.
    rkhs_bound : float, optional
        Assumed bound on the RKHS norm of the surrogate function. When omitted,
        twice the norm of the interpolant, ``2 sqrt(sum_j y_j^T (K + s^2 I)^-1 y_j)``.
    delta : float
        Failure probability of the confidence intervals.
    beta : float, optional
        Overrides the computed confidence scaling.
    optimize : bool
        Fit lengthscales and signal variance by maximising the log marginal
        likelihood (multi-start L-BFGS-B on log-parameters).
    optimize_noise : bool
        Also fit ``noise_std`` when optimising.
    """

    def __init__(
        self,
        kernel=None,
        noise_std=0.1,
        rkhs_bound=None,
        delta=0.05,
        beta=None,
        optimize=False,
        optimize_noise=False,
        n_restarts=3,
        random_state=0,
    ):
        self.kernel = kernel
        self.noise_std = noise_std
        self.rkhs_bound = rkhs_bound
        self.delta = delta
        self.beta = beta
        self.optimize = optimize
        self.optimize_noise = optimize_noise
        self.n_restarts = n_restarts
        self.random_state = random_state

    # fitting
    def fit(self, X, Y):
        X = check_array(X, ensure_min_samples=0, ensure_2d=True)
        Y = np.asarray(Y, dtype=float)
        if Y.ndim == 1:
            Y = Y.reshape(-1, 1)
        if Y.shape[0] != X.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows, Y has {Y.shape[0]}")
        if self.noise_std <= 0:
            raise ValueError("noise_std must be positive")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        kernel = self.kernel if self.kernel is not None else SEKernel()
        noise = float(self.noise_std)
        if self.optimize and X.shape[0] > 1:
            kernel, noise = _maximise_evidence(X, Y, kernel, noise, self.optimize_noise, self.n_restarts, self.random_state)
        kernel._ls(X.shape[1])

        self.kernel_ = kernel
        self.noise_std_ = noise
        self.X_train_ = X
        self.Y_train_ = Y
        self.n_features_in_ = X.shape[1]
        self.n_outputs_ = Y.shape[1]
        self.lengthscales_ = kernel._ls(X.shape[1])

        n = X.shape[0]
        K = kernel(X, X) if n else np.zeros((0, 0))
        self.L_ = _cholesky(K + noise**2 * np.eye(n))
        self.alpha_ = cho_solve((self.L_, True), Y) if n else np.zeros((0, Y.shape[1]))

        self.info_capacity_ = _info_capacity(K, noise, self.n_outputs_)
        if self.rkhs_bound is None:
            self.rkhs_bound_ = 2.0 * math.sqrt(max(float(np.sum(Y * self.alpha_)), 0.0))
        else:
            self.rkhs_bound_ = float(self.rkhs_bound)
        if self.beta is None:
            self.beta_ = beta_scaling(self.rkhs_bound_, self.info_capacity_, self.delta)
        else:
            self.beta_ = float(self.beta)
        return self

    # queries
    def predict(self, X, return_std=False):
        check_is_fitted(self, "alpha_")
        X = check_array(X)
        Ks = self.kernel_(X, self.X_train_) if self.X_train_.shape[0] else np.zeros((X.shape[0], 0))
        mean = Ks @ self.alpha_
        if not return_std:
            return mean
        return mean, self._std(X, Ks)

    def _std(self, X, Ks) -> np.ndarray:
        prior = self.kernel_.signal_variance
        if Ks.shape[1] == 0:
            var = np.full(X.shape[0], prior)
        else:
            v = solve_triangular(self.L_, Ks.T, lower=True)
            var = prior - np.sum(v * v, axis=0)
        std = np.sqrt(np.clip(var, 0.0, prior))
        return np.repeat(std[:, None], self.n_outputs_, axis=1)

    def posterior(self, z):
        """Mean and std (each of length ``n_outputs_``) at a single input."""
        z = np.asarray(z, dtype=float).reshape(1, -1)
        mean, std = self.predict(z, return_std=True)
        return mean[0], std[0]

    def mean_jacobian(self, z) -> np.ndarray:
        """Analytic ``d mean / d z`` with shape ``(n_outputs_, n_features_in_)``."""
        check_is_fitted(self, "alpha_")
        z = np.asarray(z, dtype=float).ravel()
        if z.shape[0] != self.n_features_in_:
            raise ValueError("query dimension mismatch")
        if self.X_train_.shape[0] == 0:
            return np.zeros((self.n_outputs_, self.n_features_in_))
        k = self.kernel_(z[None, :], self.X_train_)[0]
        D = (z - self.X_train_) / self.lengthscales_**2
        return -(k[:, None] * self.alpha_).T @ D

    def log_marginal_likelihood(self) -> float:
        check_is_fitted(self, "alpha_")
        return _lml(self.L_, self.alpha_, self.Y_train_)


def info_capacity_estimate(model: GPModel) -> float:
    """``0.5 log det(I + K / noise^2)`` over the pooled surrogate data.

    A heuristic stand-in for the maximum information gain; exact values need
    problem-specific bounds.
    """
    check_is_fitted(model, "alpha_")
    return model.info_capacity_


def _info_capacity(K: np.ndarray, noise: float, n_out: int) -> float:
    if K.shape[0] == 0:
        return 0.0
    M = np.eye(K.shape[0]) + K / noise**2
    sign, logdet = np.linalg.slogdet(M)
    return max(0.0, 0.5 * n_out * logdet)


def _cholesky(A: np.ndarray) -> np.ndarray:
    if A.shape[0] == 0:
        return np.zeros((0, 0))
    try:
        return np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        pass
    try:
        return np.linalg.cholesky(A + FIT_JITTER * np.eye(A.shape[0]))
    except np.linalg.LinAlgError as exc:
        raise GPFitError("kernel matrix is not positive definite") from exc


def _lml(L, alpha, Y) -> float:
    n, m = Y.shape
    return float(-0.5 * np.sum(Y * alpha) - m * np.sum(np.log(np.diag(L))) - 0.5 * n * m * math.log(2 * math.pi))


def _maximise_evidence(X, Y, kernel, noise, fit_noise, n_restarts, seed):
    n_in = X.shape[1]
    spread = np.ptp(X, axis=0)
    frozen = spread <= 0
    spread[frozen] = 1.0
    yvar = max(float(np.var(Y)), 1e-6)
    lo = np.concatenate([np.log(spread * 1e-2), [math.log(yvar * 1e-3)]])
    hi = np.concatenate([np.log(spread * 1e2), [math.log(yvar * 1e3)]])
    if fit_noise:
        lo = np.append(lo, math.log(1e-4 * math.sqrt(yvar)))
        hi = np.append(hi, math.log(math.sqrt(yvar)))

    init_ls = kernel._ls(n_in)

    def unpack(theta):
        ls = np.where(frozen, init_ls, np.exp(theta[:n_in]))
        sv = math.exp(theta[n_in])
        nz = math.exp(theta[n_in + 1]) if fit_noise else noise
        return ls, sv, nz

    def neg_lml(theta):
        ls, sv, nz = unpack(theta)
        K = SEKernel(sv, ls)(X, X) + nz**2 * np.eye(X.shape[0])
        try:
            L = np.linalg.cholesky(K)
        except np.linalg.LinAlgError:
            return 1e25
        return -_lml(L, cho_solve((L, True), Y), Y)

    start = np.concatenate([np.log(kernel._ls(n_in)), [math.log(kernel.signal_variance)]])
    if fit_noise:
        start = np.append(start, math.log(noise))
    start = np.clip(start, lo, hi)
    rng = np.random.default_rng(seed)
    starts = [start] + [rng.uniform(lo, hi) for _ in range(n_restarts)]
    best = None
    for s in starts:
        res = minimize(neg_lml, s, method="L-BFGS-B", bounds=list(zip(lo, hi)))
        if best is None or res.fun < best.fun:
            best = res
    ls, sv, nz = unpack(best.x)
    return SEKernel(sv, ls), nz


def _hessian_norms(model: GPModel, Z: np.ndarray, dims: np.ndarray, h: float) -> np.ndarray:
    """Spectral norms of the state-block mean Hessian, shape ``(n_points, n_outputs)``."""
    out = np.empty((Z.shape[0], model.n_outputs_))
    for i, z in enumerate(Z):
        H = np.empty((model.n_outputs_, dims.size, dims.size))
        for a, d in enumerate(dims):
            e = np.zeros_like(z)
            e[d] = h
            H[:, :, a] = (model.mean_jacobian(z + e)[:, dims] - model.mean_jacobian(z - e)[:, dims]) / (2 * h)
        H = 0.5 * (H + np.transpose(H, (0, 2, 1)))
        out[i] = np.max(np.abs(np.linalg.eigvalsh(H)), axis=1)
    return out


def hessian_norms(model: GPModel, Z, state_dims=None) -> np.ndarray:
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    dims = np.arange(model.n_features_in_) if state_dims is None else np.asarray(state_dims)
    h = 1e-4 * float(np.min(model.lengthscales_))
    return _hessian_norms(model, Z, dims, h)


def _domain_samples(model: GPModel, domain: Box, n: int, rng) -> np.ndarray:
    """Half uniform over ``domain``, half jittered around training inputs inside it."""
    n_near = n // 2 if model.X_train_.shape[0] else 0
    n_uni = n - n_near
    Z = [domain.center + domain.radius * rng.uniform(-1, 1, size=(n_uni, domain.dim))]
    if n_near:
        idx = rng.integers(model.X_train_.shape[0], size=n_near)
        near = model.X_train_[idx] + rng.normal(size=(n_near, domain.dim)) * 0.5 * model.lengthscales_
        Z.append(np.clip(near, domain.lo, domain.hi))
    return np.vstack(Z)


def estimate_lipschitz(
    model: GPModel,
    domain: Box,
    n_samples: int = 500,
    state_dims=None,
    safety: float = 1.5,
    seed: int = 0,
    per_output: bool = True,
) -> LipschitzConstants:
    """Sampled constants for the mean gradient, the std (Hoelder-1/2) and the mean.

    ``domain`` is a box over the full model input. Only the coordinates listed
    in ``state_dims`` are perturbed; other inputs (e.g. controls) keep their
    sampled values. Each maximum is multiplied by ``safety``.
    """
    check_is_fitted(model, "alpha_")
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    if domain.dim != model.n_features_in_:
        raise ValueError("domain dimension does not match model inputs")
    rng = np.random.default_rng(seed)
    dims = np.arange(model.n_features_in_) if state_dims is None else np.asarray(state_dims)
    Z = _domain_samples(model, domain, n_samples, rng)
    m = model.n_outputs_

    if model.X_train_.shape[0] == 0:
        L_grad = np.zeros(m)
        L_fun = np.zeros(m)
    else:
        L_grad = np.max(hessian_norms(model, Z, dims), axis=0)
        L_fun = np.max([np.linalg.norm(model.mean_jacobian(z)[:, dims], axis=1) for z in Z], axis=0)

    # pairs differing only in state coordinates, log-spaced separations
    scale = float(np.max(domain.radius[dims])) if np.any(domain.radius[dims] > 0) else 1.0
    reach = min(2.0 * scale, 10.0 * float(np.max(model.lengthscales_[dims])))
    step = np.exp(rng.uniform(np.log(1e-3 * reach), np.log(reach), size=n_samples))
    direc = rng.normal(size=(n_samples, dims.size))
    direc /= np.linalg.norm(direc, axis=1, keepdims=True)
    Zp = Z.copy()
    Zp[:, dims] += direc * step[:, None]
    Zp = np.clip(Zp, domain.lo, domain.hi)
    _, s0 = model.predict(Z, return_std=True)
    _, s1 = model.predict(Zp, return_std=True)
    dist = np.linalg.norm(Zp[:, dims] - Z[:, dims], axis=1)
    keep = dist > 0
    L_std = np.max(np.abs(s0[keep] - s1[keep]) / np.sqrt(dist[keep])[:, None], axis=0) if np.any(keep) else np.zeros(m)

    lips = LipschitzConstants(safety * L_grad, safety * L_std, safety * L_fun)
    return lips if per_output else lips.scalar()
