"""
KDEXP - Exposure Updaters
Full-conditional updates of the latent exposure vector for each way of
propagating first-stage uncertainty. Every update sees the health model only
through (omega, Ytilde) and the residual target r = Ytilde - O - X beta.
Mixture weights are evaluated in log space with the component-independent
terms dropped.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterator, Optional, Tuple

import numpy as np
from scipy import linalg

from packages.engine.core.bandwidth import regularized_covariance
from packages.engine.core.distributions import (
    RandomSource,
    sample_categorical_logweights,
    sample_categorical_rows,
)
from packages.engine.core.model import (
    ChainState,
    ExposureEnsemble,
    HealthDataset,
    MethodName,
    MethodSpec,
    row_summary,
    whitened_residual_target,
)
from packages.shared.exceptions import FactorizationError, InvalidParameterError

logger = logging.getLogger("KDEXP.Updaters")


@dataclass
class UpdaterWorkspace:
    """Per-chain caches and operation counters"""

    factorizations: int = 0
    triangular_solves: int = 0
    weight_evaluations: int = 0
    log_weights: Optional[np.ndarray] = field(default=None, repr=False)
    _cache: Dict[str, Any] = field(default_factory=dict, repr=False)
    _tags: Dict[str, Tuple[float, np.ndarray]] = field(default_factory=dict, repr=False)

    def cached(self, key: str, build: Callable[[], Any]) -> Any:
        """Build once per workspace (ensemble-level quantities)"""
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    def factor_for(self, key: str, theta: float, omega: np.ndarray, build: Callable[[], Any]) -> Any:
        """Reuse a factor while (theta, omega) are unchanged"""
        tag = self._tags.get(key)
        if tag is not None and tag[0] == theta and np.array_equal(tag[1], omega):
            return self._cache[key]
        value = build()
        self._cache[key] = value
        self._tags[key] = (theta, omega.copy())
        return value

    def reset_counts(self) -> None:
        self.factorizations = 0
        self.triangular_solves = 0
        self.weight_evaluations = 0


def _cholesky(matrix: np.ndarray, what: str, workspace: UpdaterWorkspace) -> np.ndarray:
    workspace.factorizations += 1
    try:
        return linalg.cholesky(matrix, lower=True)
    except linalg.LinAlgError as exc:
        raise FactorizationError(
            f"{what} is not positive definite", condition=float(np.linalg.cond(matrix))
        ) from exc


# MVN prior


def update_z_mvn(
    state: ChainState,
    data: HealthDataset,
    ensemble: ExposureEnsemble,
    omega: np.ndarray,
    Ytilde: np.ndarray,
    rng: RandomSource,
    workspace: Optional[UpdaterWorkspace] = None,
) -> np.ndarray:
    """Draw z ~ MVN(mu_z, (theta^2 Omega + Sigma^-1)^-1) through the factor L of Sigma.

    With M = I + theta^2 L' Omega L = R R', the draw is
    z = L M^-1 (theta L' Omega r + L^-1 zhat) + L R^-T u.
    """
    workspace = workspace or UpdaterWorkspace()
    L = workspace.cached(
        "mvn_sigma_factor",
        lambda: _cholesky(regularized_covariance(ensemble.Z_star), "ensemble covariance", workspace),
    )
    whitened_prior_mean = workspace.cached(
        "mvn_prior_mean",
        lambda: linalg.solve_triangular(L, ensemble.zhat, lower=True),
    )
    theta = float(state.theta)
    resid = whitened_residual_target(state, data, omega, Ytilde)

    def build():
        M = np.eye(ensemble.n) + theta**2 * (L.T * omega) @ L
        return _cholesky(M, "MVN posterior system", workspace)

    R = workspace.factor_for("mvn_posterior", theta, omega, build)
    rhs = L.T @ (theta * omega * resid) + whitened_prior_mean
    mean = L @ linalg.cho_solve((R, True), rhs)
    u = rng.generator.standard_normal(ensemble.n)
    noise = L @ linalg.solve_triangular(R, u, lower=True, trans="T")
    workspace.triangular_solves += 4
    return mean + noise


# Univariate KDE prior


def log_mixture_weights_ukde(
    Z_star: np.ndarray, h: np.ndarray, theta: float, omega: np.ndarray, resid: np.ndarray
) -> np.ndarray:
    """n x m log c_ij up to row constants: theta w z (2 r - theta z) / (2 (theta^2 h^2 w + 1))"""
    a = theta**2 * h**2 * omega + 1.0
    coef = (theta * omega / (2.0 * a))[:, None]
    return coef * Z_star * (2.0 * resid[:, None] - theta * Z_star)


def update_z_ukde(
    state: ChainState,
    data: HealthDataset,
    ensemble: ExposureEnsemble,
    omega: np.ndarray,
    Ytilde: np.ndarray,
    rng: RandomSource,
    workspace: Optional[UpdaterWorkspace] = None,
) -> np.ndarray:
    if ensemble.h is None:
        raise InvalidParameterError("UKDE update needs per-row bandwidths")
    workspace = workspace or UpdaterWorkspace()
    theta = float(state.theta)
    h2 = ensemble.h**2
    resid = whitened_residual_target(state, data, omega, Ytilde)

    logw = log_mixture_weights_ukde(ensemble.Z_star, ensemble.h, theta, omega, resid)
    workspace.log_weights = logw
    workspace.weight_evaluations += logw.size
    component = sample_categorical_rows(logw, rng)

    a = theta**2 * h2 * omega + 1.0
    centers = ensemble.Z_star[np.arange(ensemble.n), component]
    mean = (resid * theta * h2 * omega + centers) / a
    return mean + np.sqrt(h2 / a) * rng.generator.standard_normal(ensemble.n)


# Multivariate KDE prior


def log_mixture_weights_mkde(
    chol_A: np.ndarray, shift: np.ndarray, prior_solved: np.ndarray, prior_quadratic: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """log d_j = 1/2 b_j' A^-1 b_j - 1/2 z*_j' H^-1 z*_j with b_j = shift + H^-1 z*_j

    Returns the log weights and V = G^-1 B for the factor A = G G'.
    """
    B = shift[:, None] + prior_solved
    V = linalg.solve_triangular(chol_A, B, lower=True)
    return 0.5 * np.sum(V * V, axis=0) - 0.5 * prior_quadratic, V


def update_z_mkde(
    state: ChainState,
    data: HealthDataset,
    ensemble: ExposureEnsemble,
    omega: np.ndarray,
    Ytilde: np.ndarray,
    rng: RandomSource,
    workspace: Optional[UpdaterWorkspace] = None,
) -> np.ndarray:
    bandwidth = ensemble.bandwidth_matrix
    if bandwidth is None:
        raise InvalidParameterError("MKDE update needs a bandwidth matrix")
    workspace = workspace or UpdaterWorkspace()
    prior_solved = workspace.cached("mkde_prior_solved", lambda: bandwidth.inv_H @ ensemble.Z_star)
    prior_quadratic = workspace.cached(
        "mkde_prior_quadratic", lambda: np.sum(ensemble.Z_star * prior_solved, axis=0)
    )
    theta = float(state.theta)
    resid = whitened_residual_target(state, data, omega, Ytilde)

    G = workspace.factor_for(
        "mkde_posterior",
        theta,
        omega,
        lambda: _cholesky(theta**2 * np.diag(omega) + bandwidth.inv_H, "MKDE posterior precision", workspace),
    )
    logw, V = log_mixture_weights_mkde(G, theta * omega * resid, prior_solved, prior_quadratic)
    workspace.log_weights = logw
    workspace.weight_evaluations += logw.size
    workspace.triangular_solves += ensemble.m

    j = sample_categorical_logweights(logw, rng)
    u = rng.generator.standard_normal(ensemble.n)
    workspace.triangular_solves += 1
    return linalg.solve_triangular(G, V[:, j] + u, lower=True, trans="T")


# Discrete uniform prior over columns


def log_column_weights_du(
    Z_star: np.ndarray, theta: float, omega: np.ndarray, resid: np.ndarray
) -> np.ndarray:
    """-1/2 sum_i w_i (theta z*_ij - r_i)^2 for every column j"""
    diff = theta * Z_star - resid[:, None]
    return -0.5 * (omega @ (diff * diff))


def update_z_du(
    state: ChainState,
    data: HealthDataset,
    ensemble: ExposureEnsemble,
    omega: np.ndarray,
    Ytilde: np.ndarray,
    rng: RandomSource,
    workspace: Optional[UpdaterWorkspace] = None,
    metropolis: bool = False,
) -> np.ndarray:
    workspace = workspace or UpdaterWorkspace()
    theta = float(state.theta)
    resid = whitened_residual_target(state, data, omega, Ytilde)

    if metropolis:
        proposal = int(rng.generator.integers(ensemble.m))
        candidate = ensemble.column(proposal)
        pair = np.column_stack([state.z, candidate])
        current_logw, proposed_logw = log_column_weights_du(pair, theta, omega, resid)
        workspace.weight_evaluations += 2
        if np.log(rng.generator.random()) < proposed_logw - current_logw:
            return candidate.copy()
        return state.z

    logw = log_column_weights_du(ensemble.Z_star, theta, omega, resid)
    workspace.log_weights = logw
    workspace.weight_evaluations += logw.size
    return ensemble.column(sample_categorical_logweights(logw, rng)).copy()


# Fixed-exposure preparations


def assign_z_mia(ensemble: ExposureEnsemble, rng: RandomSource) -> np.ndarray:
    """Uniformly chosen ensemble column"""
    return ensemble.column(int(rng.generator.integers(ensemble.m))).copy()


def plugin_exposure(ensemble: ExposureEnsemble, summary_T: str = "median") -> np.ndarray:
    return row_summary(ensemble.Z_star, summary_T)


def mi_schedule(ensemble: ExposureEnsemble) -> Iterator[Tuple[int, np.ndarray]]:
    """(column index, fixed exposure vector) for each of the m imputation fits"""
    for j in range(ensemble.m):
        yield j, ensemble.column(j).copy()


# Dispatch


class ExposureUpdater:
    """One exposure-handling strategy bound to an ensemble and a workspace"""

    updates_latent = False
    assigns_each_sweep = False

    def __init__(self, spec: MethodSpec, ensemble: ExposureEnsemble):
        self.spec = spec
        self.ensemble = ensemble
        self.workspace = UpdaterWorkspace()

    def initial_exposure(self) -> np.ndarray:
        return plugin_exposure(self.ensemble, self.spec.summary_T)

    def assign(self, z: np.ndarray, rng: RandomSource) -> np.ndarray:
        return z

    def update(self, state, data, omega, Ytilde, rng) -> np.ndarray:
        return state.z


class _MIAUpdater(ExposureUpdater):
    assigns_each_sweep = True

    def assign(self, z: np.ndarray, rng: RandomSource) -> np.ndarray:
        return assign_z_mia(self.ensemble, rng)


class _LatentUpdater(ExposureUpdater):
    updates_latent = True

    def __init__(self, spec: MethodSpec, ensemble: ExposureEnsemble, step):
        super().__init__(spec, ensemble)
        self._step = step

    def update(self, state, data, omega, Ytilde, rng) -> np.ndarray:
        return self._step(state, data, self.ensemble, omega, Ytilde, rng, self.workspace)


def _du_step(metropolis: bool):
    def step(state, data, ensemble, omega, Ytilde, rng, workspace):
        return update_z_du(state, data, ensemble, omega, Ytilde, rng, workspace, metropolis=metropolis)

    return step


def prepare_ensemble(spec: MethodSpec, ensemble: ExposureEnsemble) -> ExposureEnsemble:
    """Attach the bandwidths the method needs (computed once per analysis)"""
    if spec.method == MethodName.UKDE:
        return ensemble.with_row_bandwidths(spec.ukde_bandwidth)
    if spec.method == MethodName.MKDE:
        return ensemble.with_bandwidth_matrix()
    return ensemble


def build_updater(spec: MethodSpec, ensemble: ExposureEnsemble) -> ExposureUpdater:
    ensemble = prepare_ensemble(spec, ensemble)
    method = spec.method
    if method in (MethodName.PLUGIN, MethodName.MI):
        return ExposureUpdater(spec, ensemble)
    if method == MethodName.MIA:
        return _MIAUpdater(spec, ensemble)
    steps = {
        MethodName.MVN: update_z_mvn,
        MethodName.UKDE: update_z_ukde,
        MethodName.MKDE: update_z_mkde,
        MethodName.DU: _du_step(spec.du_metropolis),
    }
    return _LatentUpdater(spec, ensemble, steps[method])
