"""Monte Carlo calibration and performance estimation.

Every trial draws its data from its own random stream, derived from the
run seed, the phase of the experiment, the operating point and the trial
index. Trials are independent of the number of workers and of which
detectors are evaluated, so all detectors see the same datasets.
"""

import dataclasses
import enum
import functools
import logging
import math
import time
import typing as ty

import joblib
import numpy as np

from ncp_detect import detectors
from ncp_detect import errors
from ncp_detect import scenario

LOG = logging.getLogger(__name__)

CHUNK_SIZE = 250
DEFAULT_DETECTION_TRIALS = 1000


class DetectorId(str, enum.Enum):
    CD = 'cd'
    RNCP = 'rncp'
    DNCP = 'dncp'
    AMF = 'amf'

    @property
    def label(self) -> str:
        return _LABELS[self]

    @property
    def iterative(self) -> bool:
        return self in (DetectorId.RNCP, DetectorId.DNCP)


_LABELS = {
    DetectorId.CD: 'CD',
    DetectorId.RNCP: 'R-NCP-D',
    DetectorId.DNCP: 'D-NCP-D',
    DetectorId.AMF: 'AMF',
}

ALL_DETECTORS = tuple(DetectorId)


class Phase(enum.IntEnum):
    CALIBRATION = 0
    DETECTION = 1
    VALIDATION = 2
    CONVERGENCE = 3


def trial_rng(
    rng_seed: int, phase: Phase, point: int, trial: int
) -> np.random.Generator:
    """Random stream of one trial."""
    sequence = np.random.SeedSequence(
        entropy=rng_seed, spawn_key=(int(phase), point, trial)
    )
    return np.random.default_rng(sequence)


def point_key(scnr_db: ty.Optional[float]) -> int:
    """Stream key of an operating point, unique per SCNR value."""
    if scnr_db is None:
        return 0
    return int(np.float64(scnr_db).view(np.uint64)) + 1


def default_calibration_trials(pfa: float) -> int:
    return math.ceil(round(100.0 / pfa, 6))


class TrialView:
    """Quantities shared by the detectors evaluated on one dataset."""

    def __init__(self, cfg: scenario.ScenarioConfig, dataset: scenario.Dataset):
        self.cfg = cfg
        self.dataset = dataset

    @functools.cached_property
    def steering(self) -> np.ndarray:
        return scenario.steering_vector(self.cfg.target_azimuth, self.cfg.n_antennas)

    @functools.cached_property
    def m_hat(self) -> scenario.HermitianCovariance:
        return detectors.sample_covariance(self.dataset.r_secondary)

    @functools.cached_property
    def whitened(self) -> detectors.WhitenedData:
        return detectors.whiten(self.m_hat, self.dataset, self.steering)

    def evaluate(self, detector: DetectorId) -> detectors.DetectorOutcome:
        cfg = self.cfg
        if detector is DetectorId.AMF:
            return detectors.DetectorOutcome(
                detectors.amf_statistic(self.dataset.z_cut, self.steering, self.m_hat)
            )
        if detector is DetectorId.CD:
            truth = self.dataset.truth
            if truth is None:
                raise errors.InvalidArgumentError(
                    'the clairvoyant detector needs the ground truth of the trial'
                )
            # unit amplitude with the true phase so that one H0 threshold
            # serves every SCNR point
            reference = truth.alpha / abs(truth.alpha) if truth.alpha else 1.0
            return detectors.DetectorOutcome(
                detectors.cd_statistic(
                    self.dataset.z_cut,
                    reference,
                    truth.q,
                    scenario.clutter_covariance(cfg),
                    self.steering,
                )
            )
        options = dict(
            init_offset=cfg.init_offset, early_stop=cfg.early_stop
        )
        if detector is DetectorId.RNCP:
            return detectors.rncp_statistic(
                self.whitened,
                cfg.max_iterations,
                eps_q=cfg.eps_q,
                eps_alpha=cfg.eps_alpha,
                **options,
            )
        return detectors.dncp_statistic(
            self.whitened,
            cfg.max_iterations,
            eps_u=cfg.eps_q,
            eps_beta=cfg.eps_alpha,
            **options,
        )


def _statistics_block(
    cfg: scenario.ScenarioConfig,
    detector_ids: ty.Tuple[DetectorId, ...],
    hypothesis: scenario.Hypothesis,
    scnr_db: ty.Optional[float],
    phase: Phase,
    rng_seed: int,
    start: int,
    stop: int,
) -> np.ndarray:
    point = point_key(scnr_db)
    block = np.empty((stop - start, len(detector_ids)))
    for row, trial in enumerate(range(start, stop)):
        rng = trial_rng(rng_seed, phase, point, trial)
        dataset = scenario.synthesize_dataset(cfg, hypothesis, rng, scnr_db=scnr_db)
        view = TrialView(cfg, dataset)
        for column, detector in enumerate(detector_ids):
            block[row, column] = view.evaluate(detector).statistic
    return block


def _chunks(n_trials: int) -> ty.Iterator[ty.Tuple[int, int]]:
    for start in range(0, n_trials, CHUNK_SIZE):
        yield start, min(start + CHUNK_SIZE, n_trials)


def simulate_statistics(
    cfg: scenario.ScenarioConfig,
    detector_ids: ty.Sequence[DetectorId],
    hypothesis: scenario.Hypothesis,
    n_trials: int,
    phase: Phase,
    scnr_db: ty.Optional[float] = None,
    rng_seed: ty.Optional[int] = None,
    workers: int = 1,
) -> np.ndarray:
    """Statistics of ``n_trials`` paired trials, one column per detector."""
    if n_trials < 1:
        raise errors.InvalidArgumentError(
            'at least one trial is required, got {}'.format(n_trials)
        )
    detector_ids = tuple(DetectorId(d) for d in detector_ids)
    seed = cfg.rng_seed if rng_seed is None else rng_seed
    blocks = joblib.Parallel(n_jobs=workers)(
        joblib.delayed(_statistics_block)(
            cfg, detector_ids, hypothesis, scnr_db, phase, seed, start, stop
        )
        for start, stop in _chunks(n_trials)
    )
    return np.concatenate(blocks, axis=0)


@dataclasses.dataclass(frozen=True)
class ThresholdTable:
    detector: DetectorId
    threshold: float
    n_trials: int
    target_pfa: float
    empirical_pfa: float
    null_statistics: np.ndarray = dataclasses.field(repr=False, compare=False)


def threshold_from_statistics(
    detector: ty.Union[DetectorId, str], statistics: np.ndarray, pfa: float
) -> ThresholdTable:
    """Pick the ``ceil(n * pfa)``-th largest null statistic as the threshold.

    A trial is a detection when its statistic strictly exceeds the threshold.
    """
    values = np.asarray(statistics, dtype=float).ravel()
    if values.size == 0:
        raise errors.InvalidArgumentError('no null statistics to calibrate from')
    if not 0.0 < pfa < 1.0:
        raise errors.InvalidArgumentError(
            'pfa must lie in (0, 1), got {}'.format(pfa)
        )
    n = values.size
    rank = max(1, math.ceil(round(n * pfa, 9)))
    threshold = float(np.sort(values)[::-1][rank - 1])
    return ThresholdTable(
        detector=DetectorId(detector),
        threshold=threshold,
        n_trials=n,
        target_pfa=pfa,
        empirical_pfa=float(np.count_nonzero(values > threshold) / n),
        null_statistics=values,
    )


def calibrate_thresholds(
    detector_ids: ty.Sequence[DetectorId],
    cfg: scenario.ScenarioConfig,
    n_trials: ty.Optional[int] = None,
    rng_seed: ty.Optional[int] = None,
    workers: int = 1,
) -> ty.List[ThresholdTable]:
    """Calibrate several detectors on shared H0 trials."""
    if n_trials is None:
        n_trials = default_calibration_trials(cfg.pfa)
    if n_trials * cfg.pfa < 1.0 - 1e-9:
        raise errors.InvalidArgumentError(
            '{} null trials cannot resolve pfa={}'.format(n_trials, cfg.pfa)
        )
    detector_ids = [DetectorId(d) for d in detector_ids]
    LOG.info(
        'Calibrating %s on %d H0 trials',
        ', '.join(d.label for d in detector_ids),
        n_trials,
    )
    started = time.perf_counter()
    stats = simulate_statistics(
        cfg,
        detector_ids,
        scenario.Hypothesis.H0,
        n_trials,
        Phase.CALIBRATION,
        rng_seed=rng_seed,
        workers=workers,
    )
    LOG.info('Calibration done in %.2f s', time.perf_counter() - started)
    return [
        threshold_from_statistics(detector, stats[:, column], cfg.pfa)
        for column, detector in enumerate(detector_ids)
    ]


def calibrate_threshold(
    detector: ty.Union[DetectorId, str],
    cfg: scenario.ScenarioConfig,
    n_trials: ty.Optional[int] = None,
    rng_seed: ty.Optional[int] = None,
    workers: int = 1,
) -> ThresholdTable:
    return calibrate_thresholds(
        [DetectorId(detector)], cfg, n_trials, rng_seed, workers
    )[0]


def _rate(exceedances: int, n_trials: int) -> ty.Tuple[float, float]:
    rate = exceedances / n_trials
    return rate, math.sqrt(rate * (1.0 - rate) / n_trials)


def estimate_pd(
    detector: ty.Union[DetectorId, str],
    cfg: scenario.ScenarioConfig,
    threshold: float,
    scnr_db: float,
    n_trials: int = DEFAULT_DETECTION_TRIALS,
    rng_seed: ty.Optional[int] = None,
    workers: int = 1,
) -> ty.Tuple[float, float]:
    """Detection probability at ``scnr_db`` and its binomial standard error."""
    stats = simulate_statistics(
        cfg,
        [DetectorId(detector)],
        scenario.Hypothesis.H1,
        n_trials,
        Phase.DETECTION,
        scnr_db=scnr_db,
        rng_seed=rng_seed,
        workers=workers,
    )
    return _rate(int(np.count_nonzero(stats[:, 0] > threshold)), n_trials)


def validate_threshold(
    table: ThresholdTable,
    cfg: scenario.ScenarioConfig,
    n_trials: ty.Optional[int] = None,
    rng_seed: ty.Optional[int] = None,
    workers: int = 1,
) -> ty.Tuple[float, float]:
    """False alarm rate of a threshold on fresh H0 trials.

    Returns the empirical rate and the binomial standard deviation expected
    at the target rate.
    """
    if n_trials is None:
        n_trials = default_calibration_trials(table.target_pfa)
    stats = simulate_statistics(
        cfg,
        [table.detector],
        scenario.Hypothesis.H0,
        n_trials,
        Phase.VALIDATION,
        rng_seed=rng_seed,
        workers=workers,
    )
    rate = float(np.count_nonzero(stats[:, 0] > table.threshold) / n_trials)
    sigma = math.sqrt(table.target_pfa * (1.0 - table.target_pfa) / n_trials)
    return rate, sigma


@dataclasses.dataclass(frozen=True)
class PdCurve:
    detector: DetectorId
    scnr_db: np.ndarray
    pd: np.ndarray
    n_trials: np.ndarray
    std_err: np.ndarray

    def __post_init__(self) -> None:
        sizes = {
            np.shape(self.scnr_db),
            np.shape(self.pd),
            np.shape(self.n_trials),
            np.shape(self.std_err),
        }
        if len(sizes) != 1:
            raise errors.InvalidArgumentError(
                'curve columns differ in length: {}'.format(sorted(sizes))
            )


def run_experiment(
    cfg: scenario.ScenarioConfig,
    detector_ids: ty.Sequence[DetectorId] = ALL_DETECTORS,
    rng_seed: ty.Optional[int] = None,
    workers: int = 1,
    n_calibration: ty.Optional[int] = None,
    n_detection: int = DEFAULT_DETECTION_TRIALS,
) -> ty.Tuple[ty.List[ThresholdTable], ty.List[PdCurve]]:
    """Calibrate every detector and trace its Pd over the SCNR grid."""
    detector_ids = [DetectorId(d) for d in detector_ids]
    if not detector_ids:
        raise errors.InvalidArgumentError('no detectors selected')
    tables = calibrate_thresholds(detector_ids, cfg, n_calibration, rng_seed, workers)
    started = time.perf_counter()
    grid = np.array(cfg.scnr_grid_db, dtype=float)
    pd = np.empty((len(detector_ids), grid.size))
    std_err = np.empty_like(pd)
    for index, scnr_db in enumerate(grid):
        stats = simulate_statistics(
            cfg,
            detector_ids,
            scenario.Hypothesis.H1,
            n_detection,
            Phase.DETECTION,
            scnr_db=float(scnr_db),
            rng_seed=rng_seed,
            workers=workers,
        )
        for row, table in enumerate(tables):
            exceedances = int(np.count_nonzero(stats[:, row] > table.threshold))
            pd[row, index], std_err[row, index] = _rate(exceedances, n_detection)
        LOG.info(
            'SCNR %g dB: %s',
            scnr_db,
            ', '.join(
                '{}={:.3f}'.format(d.label, pd[row, index])
                for row, d in enumerate(detector_ids)
            ),
        )
    LOG.info(
        'Swept %d SCNR points in %.2f s', grid.size, time.perf_counter() - started
    )
    curves = [
        PdCurve(
            detector=detector,
            scnr_db=grid.copy(),
            pd=pd[row],
            n_trials=np.full(grid.size, n_detection),
            std_err=std_err[row],
        )
        for row, detector in enumerate(detector_ids)
    ]
    return tables, curves


@dataclasses.dataclass(frozen=True)
class ConvergenceProfile:
    """Mean iterate changes per iteration, averaged over trials.

    Trials that stop early contribute zero change to later iterations.
    ``jammer_azimuths`` holds the jammer direction drawn for every trial, in
    radians, or NaN when the jammer is off.
    """

    detector: DetectorId
    mean_signature_delta: np.ndarray
    mean_amplitude_delta: np.ndarray
    n_trials: int
    jammer_azimuths: np.ndarray = dataclasses.field(
        default_factory=lambda: np.zeros(0)
    )


def _trace_block(
    cfg: scenario.ScenarioConfig,
    detector: DetectorId,
    scnr_db: float,
    rng_seed: int,
    start: int,
    stop: int,
) -> ty.Tuple[np.ndarray, np.ndarray]:
    block = np.zeros((stop - start, cfg.max_iterations, 2))
    azimuths = np.full(stop - start, np.nan)
    for row, trial in enumerate(range(start, stop)):
        rng = trial_rng(rng_seed, Phase.CONVERGENCE, point_key(scnr_db), trial)
        dataset = scenario.synthesize_dataset(
            cfg, scenario.Hypothesis.H1, rng, scnr_db=scnr_db
        )
        trace = TrialView(cfg, dataset).evaluate(detector).iterate_trace
        block[row, : trace.shape[0]] = trace
        truth = dataset.truth
        if truth is not None and truth.jammer_azimuth is not None:
            azimuths[row] = truth.jammer_azimuth
    return block, azimuths


def convergence_profile(
    detector: ty.Union[DetectorId, str],
    cfg: scenario.ScenarioConfig,
    scnr_db: float = 20.0,
    n_trials: int = 1000,
    rng_seed: ty.Optional[int] = None,
    workers: int = 1,
) -> ConvergenceProfile:
    """Convergence of an iterative detector on H1 data.

    The jammer azimuth is drawn per trial outside the target mainlobe.
    """
    detector = DetectorId(detector)
    if not detector.iterative:
        raise errors.InvalidArgumentError(
            '{} is not an iterative detector'.format(detector.label)
        )
    if n_trials < 1:
        raise errors.InvalidArgumentError(
            'at least one trial is required, got {}'.format(n_trials)
        )
    cfg = cfg.model_copy(update={'jammer_azimuth_random': True})
    seed = cfg.rng_seed if rng_seed is None else rng_seed
    LOG.info('Profiling %s on %d trials', detector.label, n_trials)
    started = time.perf_counter()
    blocks = joblib.Parallel(n_jobs=workers)(
        joblib.delayed(_trace_block)(cfg, detector, scnr_db, seed, start, stop)
        for start, stop in _chunks(n_trials)
    )
    LOG.info('Convergence done in %.2f s', time.perf_counter() - started)
    traces = np.concatenate([block for block, _ in blocks], axis=0)
    means = traces.mean(axis=0)
    return ConvergenceProfile(
        detector=detector,
        mean_signature_delta=means[:, 0],
        mean_amplitude_delta=means[:, 1],
        n_trials=n_trials,
        jammer_azimuths=np.concatenate([azimuths for _, azimuths in blocks]),
    )
