"""Adaptive detectors for targets masked by noise cover pulse jamming.

Every adaptive detector first estimates the clutter covariance from the
secondary data and whitens the primary data with it. The two iterative
detectors then estimate the unknown jammer jointly with the target
amplitude by alternating maximization:

* R-NCP-D treats the jammer signature as random, ``CN(0, q q^H)``, and
  alternates between the target amplitude and the jammer power/direction.
* D-NCP-D treats the jammer signature and its per-bin amplitudes as
  deterministic unknowns and alternates between signature and amplitudes.

The AMF ignores the jammer and the clairvoyant detector (CD) knows it.
"""

import dataclasses
import functools
import logging
import math
import typing as ty

import numpy as np
from scipy import linalg

from ncp_detect import errors
from ncp_detect import scenario

LOG = logging.getLogger(__name__)

CONDITION_LIMIT = 1e12
WHITEN_METHODS = ('cholesky', 'sqrtm')

_TINY = 1e-12

CovarianceT = ty.Union[scenario.HermitianCovariance, np.ndarray]


def sample_covariance(r_secondary: np.ndarray) -> scenario.HermitianCovariance:
    """Estimate the clutter covariance as ``R R^H / K``."""
    r = np.asarray(r_secondary, dtype=complex)
    if r.ndim != 2:
        raise errors.InvalidArgumentError(
            'secondary data must form an N x K matrix, got shape {}'.format(r.shape)
        )
    n, k = r.shape
    if k < n:
        raise errors.DegenerateTrainingError(
            '{} secondary vectors cannot estimate a {}x{} covariance'.format(k, n, n)
        )
    m_hat = r @ r.conj().T / k
    m_hat = 0.5 * (m_hat + m_hat.conj().T)
    eigenvalues = np.linalg.eigvalsh(m_hat)
    if eigenvalues[0] <= eigenvalues[-1] / CONDITION_LIMIT:
        raise errors.DegenerateTrainingError(
            'the sample covariance of {} secondary vectors is singular'.format(k)
        )
    return scenario.HermitianCovariance(m_hat)


def _whitener(m: scenario.HermitianCovariance, method: str) -> np.ndarray:
    if method == 'cholesky':
        return linalg.solve_triangular(
            m.factor, np.eye(m.n, dtype=complex), lower=True
        )
    if method == 'sqrtm':
        eigenvalues, vectors = np.linalg.eigh(m.matrix)
        return (vectors * eigenvalues ** -0.5) @ vectors.conj().T
    raise errors.InvalidArgumentError(
        'unknown whitening method {!r}; expected one of {}'.format(
            method, ', '.join(WHITEN_METHODS)
        )
    )


@dataclasses.dataclass(frozen=True)
class WhitenedData:
    """Primary data and target steering vector after whitening by ``W``.

    ``W`` satisfies ``W M W^H = I``. Either admissible choice of ``W``
    (Cholesky inverse or symmetric inverse square root) gives the same
    detector statistics.
    """

    x_cut: np.ndarray
    x_omega: np.ndarray
    v0: np.ndarray
    whitener: np.ndarray
    v: np.ndarray

    @property
    def n(self) -> int:
        return int(self.x_cut.shape[0])

    @property
    def h_total(self) -> int:
        return int(self.x_omega.shape[1]) + 1

    @property
    def x_all(self) -> np.ndarray:
        return np.column_stack([self.x_cut, self.x_omega])

    @functools.cached_property
    def s_omega(self) -> np.ndarray:
        """Scatter matrix of the contaminated neighbours."""
        return self.x_omega @ self.x_omega.conj().T

    def color(self, u: np.ndarray) -> np.ndarray:
        """Map a whitened vector back to the array domain, ``W^{-1} u``."""
        return np.linalg.solve(self.whitener, u)


def whiten(
    m_hat: CovarianceT,
    dataset: scenario.Dataset,
    v: np.ndarray,
    method: str = 'cholesky',
) -> WhitenedData:
    w = _whitener(scenario.as_covariance(m_hat), method)
    v = np.asarray(v, dtype=complex)
    return WhitenedData(
        x_cut=w @ dataset.z_cut,
        x_omega=w @ dataset.z_omega,
        v0=w @ v,
        whitener=w,
        v=v,
    )


def leading_eigenpair(matrix: np.ndarray) -> ty.Tuple[float, np.ndarray]:
    """Largest eigenvalue and its unit eigenvector of a Hermitian matrix.

    The eigenvector phase is fixed so that its first nonzero entry is real
    and positive.
    """
    eigenvalues, vectors = np.linalg.eigh(matrix)
    vector = vectors[:, -1]
    magnitude = np.abs(vector)
    first = int(np.flatnonzero(magnitude > _TINY * magnitude.max())[0])
    vector = vector * (magnitude[first] / vector[first])
    return float(eigenvalues[-1]), vector


def sidelobe_steering(v: np.ndarray, offset: float) -> np.ndarray:
    """Steer ``v`` by ``offset`` in sine space, away from the target mainlobe."""
    k = np.arange(v.shape[0])
    q0 = v * np.exp(1j * np.pi * k * offset)
    return q0 / np.linalg.norm(q0)


def _project_out(v0: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Apply ``P_perp = I - v0 v0^H / (v0^H v0)`` to a vector or matrix."""
    coefficients = v0.conj() @ x / np.vdot(v0, v0).real
    if x.ndim == 1:
        return x - coefficients * v0
    return x - np.outer(v0, coefficients)


def _energy(x: np.ndarray) -> float:
    return float(np.sum(np.abs(x) ** 2))


@dataclasses.dataclass(frozen=True)
class RncpState:
    """One R-NCP-D iterate.

    The whitened jammer is ``sqrt(p) * u0``, so the array-domain signature is
    ``q = sqrt(p) * W^-1 u0``. Convergence deltas of ``q`` are on that scale.
    """

    alpha: complex
    p: float
    u0: np.ndarray
    q: np.ndarray
    loglik: float


@dataclasses.dataclass(frozen=True)
class DncpState:
    u: np.ndarray
    beta: complex
    beta_omega: np.ndarray
    h_value: float


@dataclasses.dataclass(frozen=True)
class DetectorOutcome:
    """Statistic of one detector on one trial.

    For the iterative detectors ``iterate_trace[n]`` holds the change of
    the jammer signature and of the target (R-NCP-D) or jammer (D-NCP-D)
    amplitude at iteration ``n + 1``. The R-NCP-D signature is
    ``q = sqrt(p) * W^-1 u0`` and the D-NCP-D one is the whitened ``u``.
    ``objective_trace`` holds the compressed log-likelihood after every
    half-step (R-NCP-D, nondecreasing) or the residual energy (D-NCP-D,
    nonincreasing).
    """

    statistic: float
    iterate_trace: np.ndarray = dataclasses.field(
        default_factory=lambda: np.zeros((0, 2))
    )
    objective_trace: np.ndarray = dataclasses.field(
        default_factory=lambda: np.zeros(0)
    )
    states: ty.Tuple[ty.Any, ...] = ()

    @property
    def iterations_run(self) -> int:
        return int(self.iterate_trace.shape[0])


def _rank_one_gain(lam: float, h_total: int) -> float:
    # maximum over p >= 0 of -H log(1 + p) + p / (1 + p) * lam
    if lam <= h_total:
        return 0.0
    return h_total * math.log(h_total / lam) + lam - h_total


def rncp_h0_core(x_all: np.ndarray) -> float:
    """Compressed log-likelihood of the whitened data without a target."""
    x = np.asarray(x_all, dtype=complex)
    lam = float(np.linalg.eigvalsh(x @ x.conj().T)[-1])
    return -_energy(x) + _rank_one_gain(lam, x.shape[1])


def rncp_alpha_update(
    x_cut: np.ndarray, v0: np.ndarray, p: float, u0: np.ndarray
) -> complex:
    """Best target amplitude for a fixed jammer power and direction."""
    shrink = p / (1.0 + p)
    u_v = np.vdot(u0, v0)
    numerator = np.vdot(v0, x_cut) - shrink * np.conj(u_v) * np.vdot(u0, x_cut)
    gain = np.vdot(v0, v0).real
    denominator = gain - shrink * abs(u_v) ** 2
    if denominator <= _TINY * gain:
        raise errors.DegenerateGeometryError(
            'the jammer direction cancels the target steering vector'
        )
    return complex(numerator / denominator)


def rncp_pu_update(
    s_omega: np.ndarray, x_alpha: np.ndarray, h_total: int
) -> ty.Tuple[float, np.ndarray]:
    """Best jammer power and direction for a fixed target amplitude."""
    lam, u0 = leading_eigenpair(s_omega + np.outer(x_alpha, x_alpha.conj()))
    return max(lam / h_total - 1.0, 0.0), u0


def rncp_objective_parts(
    whitened: WhitenedData, alpha: complex, p: float, u0: np.ndarray
) -> ty.Tuple[float, float, float]:
    """The three terms of the R-NCP-D compressed log-likelihood.

    The first and last are never positive and the middle one never exceeds
    the largest eigenvalue of the neighbour scatter matrix.
    """
    shrink = p / (1.0 + p)
    x_alpha = whitened.x_cut - alpha * whitened.v0
    s_omega = whitened.s_omega
    g1 = -whitened.h_total * math.log1p(p) - float(np.trace(s_omega).real)
    g2 = shrink * float(np.vdot(u0, s_omega @ u0).real)
    g3 = shrink * abs(np.vdot(x_alpha, u0)) ** 2 - _energy(x_alpha)
    return g1, g2, g3


def rncp_objective(
    whitened: WhitenedData, alpha: complex, p: float, u0: np.ndarray
) -> float:
    return float(sum(rncp_objective_parts(whitened, alpha, p, u0)))


def _within(
    deltas: ty.Tuple[float, float], eps: ty.Tuple[float, float]
) -> bool:
    return deltas[0] < eps[0] and deltas[1] < eps[1]


def rncp_statistic(
    whitened: WhitenedData,
    n_max: int,
    init_offset: ty.Optional[float] = None,
    early_stop: bool = False,
    eps_q: float = 1e-6,
    eps_alpha: float = 1e-6,
) -> DetectorOutcome:
    """Run the R-NCP-D alternating maximization for at most ``n_max`` steps."""
    if n_max < 1:
        raise errors.InvalidArgumentError(
            'at least one iteration is required, got {}'.format(n_max)
        )
    if init_offset is None:
        init_offset = scenario.default_init_offset(whitened.n)
    h_total = whitened.h_total

    q = sidelobe_steering(whitened.v, init_offset)
    u = whitened.whitener @ q
    p = float(np.vdot(u, u).real)
    u0 = u / math.sqrt(p)
    alpha = rncp_alpha_update(whitened.x_cut, whitened.v0, p, u0)
    objective = [rncp_objective(whitened, alpha, p, u0)]
    states = [RncpState(alpha, p, u0, q, objective[-1])]
    trace: ty.List[ty.Tuple[float, float]] = []

    for iteration in range(1, n_max + 1):
        x_alpha = whitened.x_cut - alpha * whitened.v0
        p, u0 = rncp_pu_update(whitened.s_omega, x_alpha, h_total)
        objective.append(rncp_objective(whitened, alpha, p, u0))
        q_next = whitened.color(math.sqrt(p) * u0)
        alpha_next = rncp_alpha_update(whitened.x_cut, whitened.v0, p, u0)
        objective.append(rncp_objective(whitened, alpha_next, p, u0))

        deltas = (
            float(np.linalg.norm(q_next - q)),
            float(abs(alpha_next - alpha)),
        )
        trace.append(deltas)
        q, alpha = q_next, alpha_next
        states.append(RncpState(alpha, p, u0, q, objective[-1]))
        LOG.debug(
            'R-NCP-D iteration %d: dq=%.3g dalpha=%.3g loglik=%.6g',
            iteration,
            deltas[0],
            deltas[1],
            objective[-1],
        )
        if early_stop and _within(deltas, (eps_q, eps_alpha)):
            break

    statistic = objective[-1] - rncp_h0_core(whitened.x_all)
    return DetectorOutcome(
        statistic=float(statistic),
        iterate_trace=np.array(trace, dtype=float).reshape(-1, 2),
        objective_trace=np.array(objective),
        states=tuple(states),
    )


def dncp_h0_core(x_all: np.ndarray) -> float:
    """Negative residual energy after removing the best rank-one jammer."""
    x = np.asarray(x_all, dtype=complex)
    lam = float(np.linalg.eigvalsh(x @ x.conj().T)[-1])
    return lam - _energy(x)


def dncp_h_value(
    whitened: WhitenedData, u: np.ndarray, beta: complex, beta_omega: np.ndarray
) -> float:
    """Residual energy minimized by D-NCP-D under H1."""
    residual_cut = _project_out(whitened.v0, whitened.x_cut - beta * u)
    residual_omega = whitened.x_omega - np.outer(u, beta_omega)
    return _energy(residual_cut) + _energy(residual_omega)


def dncp_u_update(
    x_cut: np.ndarray,
    x_omega: np.ndarray,
    v0: np.ndarray,
    beta: complex,
    beta_omega: np.ndarray,
) -> np.ndarray:
    """Best jammer signature for fixed jammer amplitudes.

    Solves ``(|beta|^2 P_perp + s I) u = conj(beta) P_perp x + X_omega
    conj(beta_omega)`` with ``s = sum |beta_i|^2``. The system matrix acts
    as ``s`` on the span of ``v0`` and as ``s + |beta|^2`` on its
    complement. With ``s = 0`` the component along ``v0`` does not affect
    the residual and the minimum-norm solution is returned.
    """
    beta_omega = np.asarray(beta_omega, dtype=complex)
    s = float(np.sum(np.abs(beta_omega) ** 2))
    b2 = abs(beta) ** 2
    rhs = np.conj(beta) * _project_out(v0, x_cut) + x_omega @ beta_omega.conj()
    rhs_perp = _project_out(v0, rhs)
    rhs_par = rhs - rhs_perp
    if s > 0.0:
        return rhs_perp / (s + b2) + rhs_par / s
    if b2 == 0.0:
        raise errors.SingularUpdateError('all jammer amplitudes are zero')
    if np.linalg.norm(rhs_perp) <= _TINY * np.linalg.norm(x_cut):
        raise errors.SingularUpdateError(
            'the CUT has no component outside the target subspace'
        )
    return rhs_perp / b2


def dncp_beta_update(
    u: np.ndarray, x_cut: np.ndarray, x_omega: np.ndarray, v0: np.ndarray
) -> ty.Tuple[complex, np.ndarray]:
    """Best jammer amplitudes for a fixed jammer signature.

    When ``u`` has no component outside the span of ``v0`` the CUT residual
    does not depend on ``beta`` and ``beta = 0`` is returned.
    """
    energy = np.vdot(u, u).real
    if energy <= 0.0:
        raise errors.DegenerateGeometryError('the jammer signature vanished')
    pu = _project_out(v0, u)
    residual = np.vdot(pu, pu).real
    beta = 0j
    if residual > _TINY * energy:
        beta = complex(np.vdot(pu, x_cut) / residual)
    beta_omega = (u.conj() @ x_omega) / energy
    return beta, beta_omega


def dncp_statistic(
    whitened: WhitenedData,
    n_max: int,
    init_offset: ty.Optional[float] = None,
    early_stop: bool = False,
    eps_u: float = 1e-6,
    eps_beta: float = 1e-6,
) -> DetectorOutcome:
    """Run the D-NCP-D alternating minimization for at most ``n_max`` steps.

    A degenerate update ends the iteration early; the statistic is then
    computed from the last valid state.
    """
    if n_max < 1:
        raise errors.InvalidArgumentError(
            'at least one iteration is required, got {}'.format(n_max)
        )
    if init_offset is None:
        init_offset = scenario.default_init_offset(whitened.n)
    x_cut, x_omega, v0 = whitened.x_cut, whitened.x_omega, whitened.v0

    u = whitened.whitener @ sidelobe_steering(whitened.v, init_offset)
    beta, beta_omega = dncp_beta_update(u, x_cut, x_omega, v0)
    h_values = [dncp_h_value(whitened, u, beta, beta_omega)]
    states = [DncpState(u, beta, beta_omega, h_values[-1])]
    trace: ty.List[ty.Tuple[float, float]] = []

    for iteration in range(1, n_max + 1):
        try:
            u_next = dncp_u_update(x_cut, x_omega, v0, beta, beta_omega)
            h_mid = dncp_h_value(whitened, u_next, beta, beta_omega)
            beta_next, beta_omega_next = dncp_beta_update(u_next, x_cut, x_omega, v0)
        except errors.DegenerateGeometryError as exc:
            LOG.debug('D-NCP-D stopped after %d iterations: %s', iteration - 1, exc)
            break
        h_values.append(h_mid)
        h_values.append(dncp_h_value(whitened, u_next, beta_next, beta_omega_next))

        deltas = (
            float(np.linalg.norm(u_next - u)),
            float(abs(beta_next - beta)),
        )
        trace.append(deltas)
        u, beta, beta_omega = u_next, beta_next, beta_omega_next
        states.append(DncpState(u, beta, beta_omega, h_values[-1]))
        LOG.debug(
            'D-NCP-D iteration %d: du=%.3g dbeta=%.3g h=%.6g',
            iteration,
            deltas[0],
            deltas[1],
            h_values[-1],
        )
        if early_stop and _within(deltas, (eps_u, eps_beta)):
            break

    statistic = -h_values[-1] - dncp_h0_core(whitened.x_all)
    return DetectorOutcome(
        statistic=float(statistic),
        iterate_trace=np.array(trace, dtype=float).reshape(-1, 2),
        objective_trace=np.array(h_values),
        states=tuple(states),
    )


def amf_statistic(z_cut: np.ndarray, v: np.ndarray, m_hat: CovarianceT) -> float:
    """Adaptive matched filter ``|v^H M^-1 z|^2 / (v^H M^-1 v)``."""
    m_hat = scenario.as_covariance(m_hat)
    filtered = m_hat.solve(np.asarray(v, dtype=complex))
    numerator = abs(np.vdot(filtered, z_cut)) ** 2
    return float(numerator / np.vdot(v, filtered).real)


def amf_whitened_statistic(whitened: WhitenedData) -> float:
    """The AMF as the energy of the whitened CUT along ``v0``."""
    v0 = whitened.v0
    return float(abs(np.vdot(v0, whitened.x_cut)) ** 2 / np.vdot(v0, v0).real)


def orthogonal_complement(v0: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the subspace orthogonal to ``v0``."""
    v0 = np.asarray(v0, dtype=complex)
    if not np.any(v0):
        raise errors.InvalidArgumentError('the steering vector is zero')
    return linalg.null_space(v0.conj()[np.newaxis, :])


def amf_constrained_core(
    x_all: np.ndarray, v0: np.ndarray
) -> ty.Tuple[float, float]:
    """Residual cores under H0 and H1 for a jammer orthogonal to ``v0``.

    ``h1 - h0`` equals the AMF statistic of the whitened CUT.
    """
    x = np.asarray(x_all, dtype=complex)
    basis = orthogonal_complement(v0)
    lam = 0.0
    if basis.shape[1]:
        reduced = basis.conj().T @ (x @ x.conj().T) @ basis
        lam = float(np.linalg.eigvalsh(reduced)[-1])
    h0 = lam - _energy(x)
    h1 = lam - (_energy(_project_out(v0, x[:, 0])) + _energy(x[:, 1:]))
    return h0, h1


def cd_statistic(
    z_cut: np.ndarray,
    alpha_true: complex,
    q_true: ty.Optional[np.ndarray],
    m_true: CovarianceT,
    v: np.ndarray,
) -> float:
    """Clairvoyant log-likelihood ratio with all parameters known."""
    sigma = scenario.as_covariance(m_true).matrix
    if q_true is not None:
        sigma = sigma + np.outer(q_true, np.conj(q_true))
    cov = scenario.hermitian(sigma)
    filtered = cov.solve(np.asarray(v, dtype=complex))
    cross = np.vdot(filtered, z_cut)
    return float(
        2.0 * (np.conj(alpha_true) * cross).real
        - abs(alpha_true) ** 2 * np.vdot(v, filtered).real
    )
