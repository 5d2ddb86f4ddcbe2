"""Physical model and trial data synthesis.

A uniform linear array of ``n_antennas`` half-wavelength spaced sensors
observes a cell under test (CUT), ``h_left + h_right`` neighbouring range
bins contaminated by a noise cover pulse (NCP) jammer, and ``k_secondary``
jammer-free training vectors. Thermal noise plus clutter has covariance
``M = noise_power * I + clutter_power * M_c`` with ``M_c[i, j] = rho**|i-j|``;
the jammer adds the rank-one term ``q q^H`` to every contaminated bin.
"""

import dataclasses
import enum
import logging
import math
import typing as ty

import numpy as np
import pydantic
from scipy import linalg

from ncp_detect import errors

LOG = logging.getLogger(__name__)

HERMITIAN_ATOL = 1e-12

DEFAULT_SCNR_GRID_DB = tuple(float(x) for x in range(0, 32, 2))


class Hypothesis(str, enum.Enum):
    H0 = 'H0'
    H1 = 'H1'


def db_to_linear(value_db: float) -> float:
    """Convert a power ratio from dB to linear scale."""
    return float(10.0 ** (value_db / 10.0))


class ScenarioConfig(pydantic.BaseModel):
    """All physical and experimental parameters of a study.

    Defaults reproduce the reference simulation setup with two desk-scale
    deviations: ``k_secondary = 12`` and ``pfa = 1e-2``.
    """

    model_config = pydantic.ConfigDict(
        frozen=True, extra='forbid', allow_inf_nan=False
    )

    n_antennas: pydantic.PositiveInt = 8
    k_secondary: pydantic.PositiveInt = 12
    h_left: pydantic.PositiveInt = 10
    h_right: pydantic.PositiveInt = 10
    noise_power: pydantic.PositiveFloat = 1.0
    cnr_db: float = 20.0
    jnr_db: float = 30.0
    clutter_rho: float = pydantic.Field(0.9, ge=0.0, lt=1.0)
    jammer_azimuth_deg: float = pydantic.Field(35.0, ge=-90.0, le=90.0)
    jammer_azimuth_random: bool = False
    target_azimuth_deg: float = pydantic.Field(0.0, ge=-90.0, le=90.0)
    jammer_present: bool = True
    pfa: float = pydantic.Field(1e-2, gt=0.0, lt=1.0)
    scnr_grid_db: ty.Tuple[float, ...] = DEFAULT_SCNR_GRID_DB
    max_iterations: pydantic.PositiveInt = 10
    rng_seed: int = pydantic.Field(0, ge=0, lt=2**64)
    init_beamwidths: pydantic.PositiveFloat = 3.0
    early_stop: bool = False
    eps_q: pydantic.PositiveFloat = 1e-6
    eps_alpha: pydantic.PositiveFloat = 1e-6

    @pydantic.field_validator('scnr_grid_db')
    @classmethod
    def _check_grid(cls, value: ty.Tuple[float, ...]) -> ty.Tuple[float, ...]:
        if not value:
            raise ValueError('the SCNR grid must contain at least one point')
        if any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError('the SCNR grid must be strictly increasing')
        return value

    @pydantic.model_validator(mode='after')
    def _check_training_size(self) -> 'ScenarioConfig':
        if self.k_secondary < self.n_antennas:
            raise ValueError(
                'k_secondary ≥ n_antennas is required for an invertible sample '
                'covariance (got k_secondary={}, n_antennas={})'.format(
                    self.k_secondary, self.n_antennas
                )
            )
        return self

    @property
    def h_total(self) -> int:
        """Number of NCP-contaminated range bins, CUT included."""
        return self.h_left + self.h_right + 1

    @property
    def clutter_power(self) -> float:
        return self.noise_power * db_to_linear(self.cnr_db)

    @property
    def jammer_power(self) -> float:
        return self.noise_power * db_to_linear(self.jnr_db)

    @property
    def target_azimuth(self) -> float:
        return math.radians(self.target_azimuth_deg)

    @property
    def jammer_azimuth(self) -> float:
        return math.radians(self.jammer_azimuth_deg)

    @property
    def init_offset(self) -> float:
        """Sine-space offset of the sidelobe initialisation direction."""
        return default_init_offset(self.n_antennas, self.init_beamwidths)


def default_init_offset(n: int, beamwidths: float = 3.0) -> float:
    # null-to-null beamwidth of the ULA is 2/n in sine space; beyond an
    # offset of 1 the phase ramp wraps back towards the mainlobe
    return min(2.0 * beamwidths / n, 1.0)


@dataclasses.dataclass(frozen=True)
class HermitianCovariance:
    """A Hermitian positive definite covariance matrix.

    Construction fails with :class:`~ncp_detect.errors.NumericError` when the
    matrix is not Hermitian within :data:`HERMITIAN_ATOL` or when its Cholesky
    factorization does not exist.
    """

    matrix: np.ndarray
    factor: np.ndarray = dataclasses.field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        matrix = np.array(self.matrix, dtype=complex)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise errors.InvalidArgumentError(
                'a covariance matrix must be square, got shape {}'.format(
                    matrix.shape
                )
            )
        asymmetry = np.max(np.abs(matrix - matrix.conj().T), initial=0.0)
        if asymmetry > HERMITIAN_ATOL:
            raise errors.NumericError(
                'covariance matrix is not Hermitian (max deviation {:.3g})'.format(
                    asymmetry
                )
            )
        try:
            factor = linalg.cholesky(matrix, lower=True)
        except linalg.LinAlgError as exc:
            raise errors.NumericError(
                'covariance matrix is not positive definite'
            ) from exc
        object.__setattr__(self, 'matrix', matrix)
        object.__setattr__(self, 'factor', factor)

    @property
    def n(self) -> int:
        return int(self.matrix.shape[0])

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Return ``M^{-1} rhs``."""
        return linalg.cho_solve((self.factor, True), rhs)

    def quadratic(self, v: np.ndarray) -> float:
        """Return the real quadratic form ``v^H M^{-1} v``."""
        return float(np.vdot(v, self.solve(v)).real)


def hermitian(matrix: np.ndarray) -> HermitianCovariance:
    """Symmetrize rounding noise away and wrap ``matrix``."""
    matrix = np.asarray(matrix, dtype=complex)
    return HermitianCovariance(0.5 * (matrix + matrix.conj().T))


def as_covariance(
    matrix: ty.Union[HermitianCovariance, np.ndarray],
) -> HermitianCovariance:
    if isinstance(matrix, HermitianCovariance):
        return matrix
    return HermitianCovariance(np.asarray(matrix))


def steering_vector(theta: float, n: int) -> np.ndarray:
    """Unit-norm ULA response ``exp(j*pi*k*sin(theta)) / sqrt(n)``."""
    if n < 1:
        raise errors.InvalidArgumentError(
            'a steering vector needs at least one element, got n={}'.format(n)
        )
    k = np.arange(n)
    return np.exp(1j * np.pi * k * np.sin(theta)) / np.sqrt(n)


def clutter_covariance(cfg: ScenarioConfig) -> HermitianCovariance:
    """Thermal noise plus exponentially correlated clutter."""
    if not 0.0 <= cfg.clutter_rho < 1.0:
        raise errors.InvalidArgumentError(
            'clutter_rho must lie in [0, 1), got {}'.format(cfg.clutter_rho)
        )
    idx = np.arange(cfg.n_antennas)
    structure = cfg.clutter_rho ** np.abs(idx[:, None] - idx[None, :])
    matrix = cfg.noise_power * np.eye(cfg.n_antennas) + cfg.clutter_power * structure
    return HermitianCovariance(matrix.astype(complex))


def jammer_signature(cfg: ScenarioConfig, azimuth: float) -> np.ndarray:
    """Jammer vector ``q`` with per-antenna power equal to the jammer power."""
    n = cfg.n_antennas
    return np.sqrt(n * cfg.jammer_power) * steering_vector(azimuth, n)


def scnr_to_amplitude(
    scnr_db: float,
    v: np.ndarray,
    m: ty.Union[HermitianCovariance, np.ndarray],
) -> float:
    """Target amplitude ``|alpha|`` giving ``|alpha|^2 v^H M^{-1} v = SCNR``."""
    gain = as_covariance(m).quadratic(v)
    return math.sqrt(db_to_linear(scnr_db) / gain)


def whitened_cosine(
    v: np.ndarray,
    q: np.ndarray,
    m: ty.Union[HermitianCovariance, np.ndarray],
) -> float:
    """Cosine of the angle between target and jammer after whitening by M."""
    m = as_covariance(m)
    cross = abs(np.vdot(v, m.solve(q)))
    return float(cross / math.sqrt(m.quadratic(v) * m.quadratic(q)))


def sample_cn(
    mean: np.ndarray,
    cov: ty.Union[HermitianCovariance, np.ndarray],
    rng: np.random.Generator,
    size: ty.Optional[int] = None,
) -> np.ndarray:
    """Draw from the circular complex Gaussian ``CN(mean, cov)``.

    With ``size`` given, ``size`` independent draws are returned as the
    columns of an ``n x size`` matrix.
    """
    cov = as_covariance(cov)
    shape: ty.Tuple[int, ...] = (cov.n,) if size is None else (cov.n, size)
    white = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(
        2.0
    )
    colored = cov.factor @ white
    mean = np.asarray(mean, dtype=complex)
    if size is None:
        return mean + colored
    return mean[:, None] + colored


def random_jammer_azimuth(
    n: int, target_azimuth: float, rng: np.random.Generator
) -> float:
    """Draw an azimuth uniformly in sine space outside the target mainlobe.

    The mainlobe is ``|sin(theta) - sin(theta_T)| < 2/n``.
    """
    half_width = 2.0 / n
    s_target = math.sin(target_azimuth)
    low = (-1.0, max(-1.0, s_target - half_width))
    high = (min(1.0, s_target + half_width), 1.0)
    len_low = low[1] - low[0]
    len_high = high[1] - high[0]
    if len_low + len_high <= 0.0:
        raise errors.InvalidArgumentError(
            'the mainlobe of a {}-element array covers every direction'.format(n)
        )
    draw = rng.uniform(0.0, len_low + len_high)
    if draw < len_low:
        sine = low[0] + draw
    else:
        sine = high[0] + (draw - len_low)
    return math.asin(min(1.0, max(-1.0, sine)))


@dataclasses.dataclass(frozen=True)
class GroundTruth:
    hypothesis: Hypothesis
    alpha: complex
    q: ty.Optional[np.ndarray] = None
    jammer_azimuth: ty.Optional[float] = None


@dataclasses.dataclass(frozen=True)
class Dataset:
    """One trial: CUT vector, NCP window and secondary data."""

    z_cut: np.ndarray
    z_omega: np.ndarray
    r_secondary: np.ndarray
    truth: ty.Optional[GroundTruth] = None

    def __post_init__(self) -> None:
        z_cut = np.asarray(self.z_cut, dtype=complex)
        z_omega = np.asarray(self.z_omega, dtype=complex)
        r_secondary = np.asarray(self.r_secondary, dtype=complex)
        if z_cut.ndim != 1:
            raise errors.InvalidArgumentError('z_cut must be a vector')
        n = z_cut.shape[0]
        for name, block in (('z_omega', z_omega), ('r_secondary', r_secondary)):
            if block.ndim != 2 or block.shape[0] != n:
                raise errors.InvalidArgumentError(
                    '{} must have {} rows, got shape {}'.format(name, n, block.shape)
                )
        object.__setattr__(self, 'z_cut', z_cut)
        object.__setattr__(self, 'z_omega', z_omega)
        object.__setattr__(self, 'r_secondary', r_secondary)

    @property
    def n(self) -> int:
        return int(self.z_cut.shape[0])

    @property
    def h_total(self) -> int:
        return int(self.z_omega.shape[1]) + 1

    @property
    def z_all(self) -> np.ndarray:
        """The CUT followed by the contaminated neighbours."""
        return np.column_stack([self.z_cut, self.z_omega])


def synthesize_dataset(
    cfg: ScenarioConfig,
    hypothesis: ty.Union[Hypothesis, str],
    rng: np.random.Generator,
    scnr_db: ty.Optional[float] = None,
    jammer_azimuth: ty.Optional[float] = None,
) -> Dataset:
    """Draw one trial under ``hypothesis``.

    ``scnr_db`` sets the target amplitude and is required under H1.
    ``jammer_azimuth`` overrides the configured (or randomly drawn) jammer
    direction.
    """
    hypothesis = Hypothesis(hypothesis)
    n = cfg.n_antennas
    m = clutter_covariance(cfg)
    v = steering_vector(cfg.target_azimuth, n)

    q = None
    primary = m
    if cfg.jammer_present:
        if jammer_azimuth is None:
            if cfg.jammer_azimuth_random:
                jammer_azimuth = random_jammer_azimuth(n, cfg.target_azimuth, rng)
            else:
                jammer_azimuth = cfg.jammer_azimuth
        q = jammer_signature(cfg, jammer_azimuth)
        primary = hermitian(m.matrix + np.outer(q, q.conj()))

    alpha = 0j
    if hypothesis is Hypothesis.H1:
        if scnr_db is None:
            raise errors.InvalidArgumentError('H1 data need an SCNR value')
        alpha = complex(scnr_to_amplitude(scnr_db, v, m))

    zero = np.zeros(n, dtype=complex)
    z_cut = sample_cn(alpha * v, primary, rng)
    z_omega = sample_cn(zero, primary, rng, size=cfg.h_total - 1)
    r_secondary = sample_cn(zero, m, rng, size=cfg.k_secondary)

    return Dataset(
        z_cut=z_cut,
        z_omega=z_omega,
        r_secondary=r_secondary,
        truth=GroundTruth(
            hypothesis=hypothesis,
            alpha=alpha,
            q=q,
            jammer_azimuth=jammer_azimuth if cfg.jammer_present else None,
        ),
    )
