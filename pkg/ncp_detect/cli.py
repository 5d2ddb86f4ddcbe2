"""Command line interface of ncp-detect."""

import contextlib
import functools
import logging
import os
import time
import typing as ty

import click
import numpy as np

from ncp_detect import config
from ncp_detect import errors
from ncp_detect import montecarlo
from ncp_detect import report
from ncp_detect import scenario

LOG = logging.getLogger(__name__)

LOG_LEVELS = (logging.WARNING, logging.INFO, logging.DEBUG)

# figure number -> (title, preset); presets naming a detector are convergence
# studies, the others override the scenario of a Pd sweep
FIGURES: ty.Dict[int, ty.Tuple[str, ty.Dict[str, ty.Any]]] = {
    3: ('R-NCP-D convergence', {'detector': montecarlo.DetectorId.RNCP}),
    4: ('D-NCP-D convergence', {'detector': montecarlo.DetectorId.DNCP}),
    5: ('Pd vs SCNR, N=8, K=12, jammer at 35 deg', dict(n_antennas=8, k_secondary=12)),
    6: ('Pd vs SCNR, N=8, K=16, jammer at 35 deg', dict(n_antennas=8, k_secondary=16)),
    7: ('Pd vs SCNR, N=8, K=24, jammer at 35 deg', dict(n_antennas=8, k_secondary=24)),
    8: (
        'Pd vs SCNR, N=8, K=12, no jammer',
        dict(n_antennas=8, k_secondary=12, jammer_present=False),
    ),
    9: (
        'Pd vs SCNR, N=8, K=16, no jammer',
        dict(n_antennas=8, k_secondary=16, jammer_present=False),
    ),
    10: (
        'Pd vs SCNR, N=8, K=24, no jammer',
        dict(n_antennas=8, k_secondary=24, jammer_present=False),
    ),
    11: (
        'Pd vs SCNR, N=16, K=32, jammer at 35 deg',
        dict(n_antennas=16, k_secondary=32),
    ),
}

_SWEEP_DEFAULTS = dict(
    jammer_present=True, jammer_azimuth_deg=35.0, jammer_azimuth_random=False
)


class ValidationFailure(click.ClickException):
    exit_code = 3


class NumericFailure(click.ClickException):
    exit_code = 4


@contextlib.contextmanager
def _translate_errors() -> ty.Iterator[None]:
    try:
        yield
    except (errors.ConfigError, errors.InvalidArgumentError) as exc:
        raise ValidationFailure(str(exc)) from exc
    except errors.NumericError as exc:
        raise NumericFailure(str(exc)) from exc
    except OSError as exc:
        raise click.FileError(exc.filename or '', hint=exc.strerror) from exc


def _reports_errors(func: ty.Callable[..., None]) -> ty.Callable[..., None]:
    @functools.wraps(func)
    def wrapper(*args: ty.Any, **kwargs: ty.Any) -> None:
        with _translate_errors():
            func(*args, **kwargs)

    return wrapper


def _parse_detectors(
    ctx: click.Context, param: click.Parameter, value: str
) -> ty.List[montecarlo.DetectorId]:
    selected = []
    for name in value.split(','):
        name = name.strip().lower()
        if not name:
            continue
        try:
            detector = montecarlo.DetectorId(name)
        except ValueError:
            raise click.BadParameter(
                'unknown detector {!r}; choose from {}'.format(
                    name, ', '.join(d.value for d in montecarlo.DetectorId)
                )
            ) from None
        if detector not in selected:
            selected.append(detector)
    if not selected:
        raise click.BadParameter('select at least one detector')
    return selected


def _common_options(func: ty.Callable[..., None]) -> ty.Callable[..., None]:
    options = [
        click.option(
            '--config',
            'config_path',
            type=click.Path(exists=True, dir_okay=False),
            help='TOML scenario configuration.',
        ),
        click.option('--seed', type=int, help='Override the run seed.'),
        click.option('--pfa', type=float, help='Override the false alarm rate.'),
        click.option(
            '--workers',
            type=click.IntRange(min=1),
            default=1,
            show_default=True,
            help='Number of parallel worker processes.',
        ),
        click.option(
            '--out-dir',
            type=click.Path(file_okay=False),
            default='results',
            show_default=True,
            help='Directory receiving the result files.',
        ),
        click.option(
            '--trials-cal',
            type=click.IntRange(min=1),
            help='H0 trials per calibration [default: 100 / pfa].',
        ),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _sweep_options(func: ty.Callable[..., None]) -> ty.Callable[..., None]:
    options = [
        click.option(
            '--detectors',
            default=','.join(d.value for d in montecarlo.ALL_DETECTORS),
            show_default=True,
            callback=_parse_detectors,
            help='Comma separated detectors to evaluate.',
        ),
        click.option('--scnr-min', type=float, help='First SCNR point in dB.'),
        click.option('--scnr-max', type=float, help='Last SCNR point in dB.'),
        click.option('--scnr-step', type=float, help='SCNR spacing in dB.'),
        click.option(
            '--trials-pd',
            type=click.IntRange(min=1),
            default=montecarlo.DEFAULT_DETECTION_TRIALS,
            show_default=True,
            help='H1 trials per SCNR point.',
        ),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def scnr_grid(
    base: ty.Sequence[float],
    scnr_min: ty.Optional[float],
    scnr_max: ty.Optional[float],
    scnr_step: ty.Optional[float],
) -> ty.Optional[ty.Tuple[float, ...]]:
    """The SCNR grid selected on the command line, or ``None`` if unchanged."""
    if scnr_min is None and scnr_max is None and scnr_step is None:
        return None
    low = base[0] if scnr_min is None else scnr_min
    high = base[-1] if scnr_max is None else scnr_max
    if scnr_step is None:
        scnr_step = base[1] - base[0] if len(base) > 1 else 1.0
    if scnr_step <= 0:
        raise click.BadParameter('must be positive', param_hint='--scnr-step')
    if high < low:
        raise click.BadParameter(
            'must not be below --scnr-min', param_hint='--scnr-max'
        )
    count = int(np.floor((high - low) / scnr_step + 1e-9)) + 1
    return tuple(round(low + i * scnr_step, 9) for i in range(count))


def _load_config(
    config_path: ty.Optional[str], **overrides: ty.Any
) -> scenario.ScenarioConfig:
    if config_path:
        cfg = config.parse_config(config_path)
    else:
        cfg = scenario.ScenarioConfig()
    cfg = config.apply_overrides(cfg, **overrides)
    LOG.info('Scenario: %s', cfg)
    return cfg


class _Run:
    """Bookkeeping of the files and timings of one command."""

    def __init__(self, command: str, cfg: scenario.ScenarioConfig, out_dir: str):
        self.out_dir = out_dir
        self.manifest = report.ExperimentManifest(
            command=command,
            config_digest=config.config_digest(cfg),
            rng_seed=cfg.rng_seed,
        )
        os.makedirs(out_dir, exist_ok=True)

    def path(self, role: str, name: str) -> str:
        self.manifest.files[role] = name
        return os.path.join(self.out_dir, name)

    @contextlib.contextmanager
    def timed(self, stage: str) -> ty.Iterator[None]:
        start = time.perf_counter()
        yield
        self.manifest.timings[stage] = time.perf_counter() - start

    def finish(self) -> None:
        report.write_manifest(
            self.manifest, os.path.join(self.out_dir, 'manifest.toml')
        )


def _echo_curves(curves: ty.Sequence[montecarlo.PdCurve]) -> None:
    header = '{:>8}'.format('SCNR') + ''.join(
        '{:>10}'.format(c.detector.label) for c in curves
    )
    click.echo(header)
    for index, scnr in enumerate(curves[0].scnr_db):
        click.echo(
            '{:>8.3g}'.format(scnr)
            + ''.join('{:>10.3f}'.format(c.pd[index]) for c in curves)
        )


def _sweep(
    command: str,
    cfg: scenario.ScenarioConfig,
    detector_ids: ty.Sequence[montecarlo.DetectorId],
    out_dir: str,
    workers: int,
    trials_cal: ty.Optional[int],
    trials_pd: int,
    title: str,
) -> None:
    run = _Run(command, cfg, out_dir)
    config.dump_config(cfg, run.path('config', 'config.toml'))
    with run.timed('experiment'):
        tables, curves = montecarlo.run_experiment(
            cfg,
            detector_ids,
            workers=workers,
            n_calibration=trials_cal,
            n_detection=trials_pd,
        )
    report.write_thresholds_csv(tables, run.path('thresholds', 'thresholds.csv'))
    report.write_curves_csv(curves, run.path('curves', 'curves.csv'))
    report.write_plot_script(
        'curves', 'curves.csv', run.path('plot', 'plot_curves.py'), title
    )
    run.finish()
    _echo_curves(curves)


@click.group(context_settings={'help_option_names': ['-h', '--help']})
@click.option(
    '-v',
    '--verbose',
    count=True,
    help='Log progress; repeat for debugging output.',
)
def main(verbose: int) -> None:
    """Adaptive radar detection against noise cover pulse jamming.

    Calibrates detector thresholds and estimates detection probabilities
    of the clairvoyant detector, the AMF and the R-NCP-D and D-NCP-D
    jammer-aware detectors by Monte Carlo simulation.
    """
    logging.basicConfig(
        level=LOG_LEVELS[min(verbose, len(LOG_LEVELS) - 1)],
        format='%(levelname)s %(name)s: %(message)s',
        force=True,
    )


@main.command()
@_common_options
@click.option(
    '--detectors',
    default=','.join(d.value for d in montecarlo.ALL_DETECTORS),
    show_default=True,
    callback=_parse_detectors,
    help='Comma separated detectors to calibrate.',
)
@_reports_errors
def calibrate(
    config_path: ty.Optional[str],
    seed: ty.Optional[int],
    pfa: ty.Optional[float],
    workers: int,
    out_dir: str,
    trials_cal: ty.Optional[int],
    detectors: ty.List[montecarlo.DetectorId],
) -> None:
    """Calibrate detection thresholds on H0 trials."""
    cfg = _load_config(config_path, rng_seed=seed, pfa=pfa)
    run = _Run('calibrate', cfg, out_dir)
    with run.timed('calibration'):
        tables = montecarlo.calibrate_thresholds(
            detectors, cfg, trials_cal, workers=workers
        )
    report.write_thresholds_csv(tables, run.path('thresholds', 'thresholds.csv'))
    run.finish()
    for table in tables:
        click.echo(
            '{}: threshold {:.6g} (empirical pfa {:.4g})'.format(
                table.detector.label, table.threshold, table.empirical_pfa
            )
        )


@main.command()
@_common_options
@_sweep_options
@_reports_errors
def sweep(
    config_path: ty.Optional[str],
    seed: ty.Optional[int],
    pfa: ty.Optional[float],
    workers: int,
    out_dir: str,
    trials_cal: ty.Optional[int],
    detectors: ty.List[montecarlo.DetectorId],
    scnr_min: ty.Optional[float],
    scnr_max: ty.Optional[float],
    scnr_step: ty.Optional[float],
    trials_pd: int,
) -> None:
    """Estimate Pd versus SCNR for the configured scenario."""
    cfg = _load_config(config_path, rng_seed=seed, pfa=pfa)
    grid = scnr_grid(cfg.scnr_grid_db, scnr_min, scnr_max, scnr_step)
    cfg = config.apply_overrides(cfg, scnr_grid_db=grid)
    _sweep(
        'sweep', cfg, detectors, out_dir, workers, trials_cal, trials_pd, 'Pd vs SCNR'
    )


@main.command()
@_common_options
@click.option(
    '--detector',
    type=click.Choice(['rncp', 'dncp']),
    default='rncp',
    show_default=True,
    help='Iterative detector to study.',
)
@click.option(
    '--scnr', type=float, default=20.0, show_default=True, help='SCNR in dB.'
)
@click.option(
    '--trials',
    type=click.IntRange(min=1),
    default=1000,
    show_default=True,
    help='Number of H1 trials.',
)
@_reports_errors
def converge(
    config_path: ty.Optional[str],
    seed: ty.Optional[int],
    pfa: ty.Optional[float],
    workers: int,
    out_dir: str,
    trials_cal: ty.Optional[int],
    detector: str,
    scnr: float,
    trials: int,
) -> None:
    """Average iterate changes of an iterative detector.

    The jammer azimuth is drawn per trial outside the target mainlobe.
    """
    cfg = _load_config(config_path, rng_seed=seed, pfa=pfa)
    _converge(
        'converge',
        cfg,
        montecarlo.DetectorId(detector),
        scnr,
        trials,
        out_dir,
        workers,
    )


def _converge(
    command: str,
    cfg: scenario.ScenarioConfig,
    detector: montecarlo.DetectorId,
    scnr_db: float,
    n_trials: int,
    out_dir: str,
    workers: int,
) -> None:
    run = _Run(command, cfg, out_dir)
    with run.timed('convergence'):
        profile = montecarlo.convergence_profile(
            detector, cfg, scnr_db=scnr_db, n_trials=n_trials, workers=workers
        )
    name = 'convergence_{}.csv'.format(detector.value)
    report.write_convergence_csv(profile, run.path('convergence', name))
    report.write_plot_script(
        'convergence',
        name,
        run.path('plot', 'plot_convergence_{}.py'.format(detector.value)),
        '{} convergence at {:g} dB SCNR'.format(detector.label, scnr_db),
    )
    run.finish()
    drawn = np.degrees(profile.jammer_azimuths)
    if np.any(np.isfinite(drawn)):
        LOG.info(
            'Jammer azimuths drawn between %.1f and %.1f deg',
            np.nanmin(drawn),
            np.nanmax(drawn),
        )
    for iteration, (dq, da) in enumerate(
        zip(profile.mean_signature_delta, profile.mean_amplitude_delta), start=1
    ):
        click.echo('{:>3}  {:.3e}  {:.3e}'.format(iteration, dq, da))


@main.command('reproduce-figure')
@click.argument('figure', type=int)
@_common_options
@_sweep_options
@_reports_errors
def reproduce_figure(
    figure: int,
    config_path: ty.Optional[str],
    seed: ty.Optional[int],
    pfa: ty.Optional[float],
    workers: int,
    out_dir: str,
    trials_cal: ty.Optional[int],
    detectors: ty.List[montecarlo.DetectorId],
    scnr_min: ty.Optional[float],
    scnr_max: ty.Optional[float],
    scnr_step: ty.Optional[float],
    trials_pd: int,
) -> None:
    """Re-run the study behind a published FIGURE (3 to 11).

    Figures 3 and 4 are convergence studies at 20 dB SCNR; figures 5 to 11
    are Pd curves for the array and jammer settings of each figure.
    """
    if figure not in FIGURES:
        raise click.BadParameter(
            'unknown figure {}; choose from {}'.format(
                figure, ', '.join(str(f) for f in sorted(FIGURES))
            ),
            param_hint='FIGURE',
        )
    title, preset = FIGURES[figure]
    LOG.info('Reproducing figure %d: %s', figure, title)
    cfg = _load_config(config_path, rng_seed=seed, pfa=pfa)
    command = 'reproduce-figure {}'.format(figure)
    if 'detector' in preset:
        _converge(command, cfg, preset['detector'], 20.0, trials_pd, out_dir, workers)
        return
    cfg = config.apply_overrides(cfg, **dict(_SWEEP_DEFAULTS, **preset))
    grid = scnr_grid(cfg.scnr_grid_db, scnr_min, scnr_max, scnr_step)
    cfg = config.apply_overrides(cfg, scnr_grid_db=grid)
    if cfg.jammer_present:
        LOG.info(
            'Whitened target/jammer cosine: %.4f',
            scenario.whitened_cosine(
                scenario.steering_vector(cfg.target_azimuth, cfg.n_antennas),
                scenario.jammer_signature(cfg, cfg.jammer_azimuth),
                scenario.clutter_covariance(cfg),
            ),
        )
    _sweep(command, cfg, detectors, out_dir, workers, trials_cal, trials_pd, title)


@main.command()
@_common_options
@click.option(
    '--detectors',
    default=','.join(d.value for d in montecarlo.ALL_DETECTORS),
    show_default=True,
    callback=_parse_detectors,
    help='Comma separated detectors to check.',
)
@click.option(
    '--trials',
    type=click.IntRange(min=1),
    help='Fresh H0 trials per detector [default: 100 / pfa].',
)
@_reports_errors
def validate(
    config_path: ty.Optional[str],
    seed: ty.Optional[int],
    pfa: ty.Optional[float],
    workers: int,
    out_dir: str,
    trials_cal: ty.Optional[int],
    detectors: ty.List[montecarlo.DetectorId],
    trials: ty.Optional[int],
) -> None:
    """Check calibrated thresholds against fresh H0 trials.

    Reports the empirical false alarm rate of every threshold next to the
    binomial standard deviation at the target rate.
    """
    cfg = _load_config(config_path, rng_seed=seed, pfa=pfa)
    run = _Run('validate', cfg, out_dir)
    results = []
    with run.timed('calibration'):
        tables = montecarlo.calibrate_thresholds(
            detectors, cfg, trials_cal, workers=workers
        )
    with run.timed('validation'):
        for table in tables:
            n_trials = trials or montecarlo.default_calibration_trials(cfg.pfa)
            rate, sigma = montecarlo.validate_threshold(
                table, cfg, n_trials, workers=workers
            )
            results.append((table, n_trials, rate, sigma))
            status = 'ok' if abs(rate - cfg.pfa) <= 3 * sigma else 'OUTSIDE 3 sigma'
            click.echo(
                '{}: pfa {:.4g} (target {:.4g} +/- {:.2g}) {}'.format(
                    table.detector.label, rate, cfg.pfa, sigma, status
                )
            )
    report.write_validation_csv(results, run.path('validation', 'validation.csv'))
    run.finish()
