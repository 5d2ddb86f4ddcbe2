"""Result files: CSV tables, plotting scripts and run manifests.

CSV files are UTF-8 with ``\\n`` line endings and numbers printed with six
significant digits, so they are byte-identical for a given configuration,
seed and package version. The manifest also records wall-clock timings
and is the one file that differs between runs.
"""

import csv
import dataclasses
import importlib.metadata
import logging
import os
import typing as ty

import numpy as np
import toml

from ncp_detect import errors
from ncp_detect import montecarlo

LOG = logging.getLogger(__name__)

CURVES_HEADER = ('scnr_db', 'detector', 'pd', 'std_err', 'n_trials')
THRESHOLDS_HEADER = (
    'detector',
    'threshold',
    'n_trials',
    'target_pfa',
    'empirical_pfa',
)
CONVERGENCE_HEADER = ('iteration', 'delta_signature', 'delta_amplitude')
VALIDATION_HEADER = (
    'detector',
    'threshold',
    'n_trials',
    'target_pfa',
    'empirical_pfa',
    'sigma',
)

PathT = ty.Union[str, 'os.PathLike[str]']


def package_version() -> str:
    try:
        return importlib.metadata.version('ncp-detect')
    except importlib.metadata.PackageNotFoundError:
        return '0+unknown'


def _fmt(value: float) -> str:
    return '{:.6g}'.format(value)


def _write_rows(
    path: PathT, header: ty.Sequence[str], rows: ty.Iterable[ty.Sequence[ty.Any]]
) -> None:
    with open(path, 'w', encoding='utf-8', newline='') as stream:
        writer = csv.writer(stream, lineterminator='\n')
        writer.writerow(header)
        writer.writerows(rows)
    LOG.info('Wrote %s', os.fspath(path))


def _by_label(label: str) -> montecarlo.DetectorId:
    for detector in montecarlo.DetectorId:
        if detector.label == label:
            return detector
    raise errors.InvalidArgumentError('unknown detector {!r}'.format(label))


def write_curves_csv(
    curves: ty.Sequence[montecarlo.PdCurve], path: PathT
) -> None:
    """Write Pd curves sharing one SCNR grid, sorted by detector then SCNR."""
    curves = list(curves)
    if not curves:
        raise errors.InvalidArgumentError('there are no curves to write')
    grid = np.asarray(curves[0].scnr_db)
    for curve in curves[1:]:
        if not np.array_equal(np.asarray(curve.scnr_db), grid):
            raise errors.InvalidArgumentError(
                'the {} and {} curves use different SCNR grids'.format(
                    curves[0].detector.label, curve.detector.label
                )
            )
    rows = sorted(
        (
            (curve.detector.label, float(scnr), float(pd), float(err), int(n))
            for curve in curves
            for scnr, pd, err, n in zip(
                curve.scnr_db, curve.pd, curve.std_err, curve.n_trials
            )
        ),
        key=lambda row: (row[0], row[1]),
    )
    _write_rows(
        path,
        CURVES_HEADER,
        (
            (_fmt(scnr), label, _fmt(pd), _fmt(err), n)
            for label, scnr, pd, err, n in rows
        ),
    )


def read_curves_csv(path: PathT) -> ty.List[montecarlo.PdCurve]:
    """Read curves written by :func:`write_curves_csv`."""
    columns: ty.Dict[str, ty.List[ty.Tuple[float, float, float, int]]] = {}
    with open(path, encoding='utf-8', newline='') as stream:
        for row in csv.DictReader(stream):
            columns.setdefault(row['detector'], []).append(
                (
                    float(row['scnr_db']),
                    float(row['pd']),
                    float(row['std_err']),
                    int(row['n_trials']),
                )
            )
    curves = []
    for label, rows in columns.items():
        scnr, pd, err, n = (np.array(column) for column in zip(*rows))
        curves.append(
            montecarlo.PdCurve(
                detector=_by_label(label), scnr_db=scnr, pd=pd, n_trials=n, std_err=err
            )
        )
    return curves


def write_thresholds_csv(
    tables: ty.Sequence[montecarlo.ThresholdTable], path: PathT
) -> None:
    _write_rows(
        path,
        THRESHOLDS_HEADER,
        (
            (
                table.detector.label,
                _fmt(table.threshold),
                table.n_trials,
                _fmt(table.target_pfa),
                _fmt(table.empirical_pfa),
            )
            for table in tables
        ),
    )


def write_validation_csv(
    results: ty.Sequence[ty.Tuple[montecarlo.ThresholdTable, int, float, float]],
    path: PathT,
) -> None:
    """Write ``(table, n_trials, empirical_pfa, sigma)`` validation rows."""
    _write_rows(
        path,
        VALIDATION_HEADER,
        (
            (
                table.detector.label,
                _fmt(table.threshold),
                n_trials,
                _fmt(table.target_pfa),
                _fmt(rate),
                _fmt(sigma),
            )
            for table, n_trials, rate, sigma in results
        ),
    )


def write_convergence_csv(
    profile: montecarlo.ConvergenceProfile, path: PathT
) -> None:
    _write_rows(
        path,
        CONVERGENCE_HEADER,
        (
            (iteration, _fmt(dq), _fmt(da))
            for iteration, (dq, da) in enumerate(
                zip(profile.mean_signature_delta, profile.mean_amplitude_delta),
                start=1,
            )
        ),
    )


_CURVES_SCRIPT = '''\
"""Plot the Pd curves in {csv_name}."""

import collections
import csv

import matplotlib.pyplot as plt

curves = collections.defaultdict(lambda: ([], [], []))
with open({csv_name!r}, encoding='utf-8', newline='') as stream:
    for row in csv.DictReader(stream):
        scnr, pd, err = curves[row['detector']]
        scnr.append(float(row['scnr_db']))
        pd.append(float(row['pd']))
        err.append(float(row['std_err']))

fig, ax = plt.subplots()
for detector, (scnr, pd, err) in sorted(curves.items()):
    ax.errorbar(scnr, pd, yerr=err, marker='o', capsize=2, label=detector)
ax.set_xlabel('SCNR [dB]')
ax.set_ylabel('Pd')
ax.set_title({title!r})
ax.set_ylim(0.0, 1.0)
ax.grid(True)
ax.legend()
fig.savefig({image_name!r}, dpi=150)
'''

_CONVERGENCE_SCRIPT = '''\
"""Plot the convergence profile in {csv_name}."""

import csv

import matplotlib.pyplot as plt

iterations, signature, amplitude = [], [], []
with open({csv_name!r}, encoding='utf-8', newline='') as stream:
    for row in csv.DictReader(stream):
        iterations.append(int(row['iteration']))
        signature.append(float(row['delta_signature']))
        amplitude.append(float(row['delta_amplitude']))

fig, ax = plt.subplots()
ax.semilogy(iterations, signature, marker='o', label='signature change')
ax.semilogy(iterations, amplitude, marker='s', label='amplitude change')
ax.set_xlabel('iteration')
ax.set_ylabel('mean change')
ax.set_title({title!r})
ax.grid(True, which='both')
ax.legend()
fig.savefig({image_name!r}, dpi=150)
'''

PLOT_KINDS = {'curves': _CURVES_SCRIPT, 'convergence': _CONVERGENCE_SCRIPT}


def write_plot_script(kind: str, csv_name: str, path: PathT, title: str) -> None:
    """Write a standalone matplotlib script rendering ``csv_name``.

    The script is run from the directory holding the CSV file and saves a
    PNG next to it.
    """
    try:
        template = PLOT_KINDS[kind]
    except KeyError:
        raise errors.InvalidArgumentError(
            'unknown plot kind {!r}; expected one of {}'.format(
                kind, ', '.join(sorted(PLOT_KINDS))
            )
        ) from None
    image_name = os.path.splitext(csv_name)[0] + '.png'
    script = template.format(csv_name=csv_name, title=title, image_name=image_name)
    with open(path, 'w', encoding='utf-8', newline='\n') as stream:
        stream.write(script)
    LOG.info('Wrote %s', os.fspath(path))


@dataclasses.dataclass
class ExperimentManifest:
    """What produced a set of result files."""

    command: str
    config_digest: str
    rng_seed: int
    version: str = dataclasses.field(default_factory=package_version)
    files: ty.Dict[str, str] = dataclasses.field(default_factory=dict)
    timings: ty.Dict[str, float] = dataclasses.field(default_factory=dict)


def write_manifest(manifest: ExperimentManifest, path: PathT) -> None:
    document = {
        'command': manifest.command,
        'config_digest': manifest.config_digest,
        'rng_seed': manifest.rng_seed,
        'version': manifest.version,
        'files': dict(sorted(manifest.files.items())),
        'timings': {k: round(v, 3) for k, v in sorted(manifest.timings.items())},
    }
    with open(path, 'w', encoding='utf-8', newline='\n') as stream:
        toml.dump(document, stream)
    LOG.info('Wrote %s', os.fspath(path))
