"""Reading and writing scenario configuration files.

Configuration files are TOML. Keys may be grouped under the ``[array]``,
``[interference]``, ``[experiment]`` and ``[estimator]`` tables or given
at the top level; every key may appear only once. Missing keys take the
defaults of :class:`~ncp_detect.scenario.ScenarioConfig`.
"""

import hashlib
import json
import logging
import os
import typing as ty

import pydantic
import toml

from ncp_detect import errors
from ncp_detect import scenario

LOG = logging.getLogger(__name__)

SECTIONS = {
    'array': ('n_antennas', 'k_secondary', 'h_left', 'h_right', 'target_azimuth_deg'),
    'interference': (
        'noise_power',
        'cnr_db',
        'jnr_db',
        'clutter_rho',
        'jammer_present',
        'jammer_azimuth_deg',
        'jammer_azimuth_random',
    ),
    'experiment': ('pfa', 'scnr_grid_db', 'rng_seed'),
    'estimator': (
        'max_iterations',
        'init_beamwidths',
        'early_stop',
        'eps_q',
        'eps_alpha',
    ),
}

PathT = ty.Union[str, 'os.PathLike[str]']


def _collect(
    document: ty.Mapping[str, ty.Any], path: str
) -> ty.Dict[str, ty.Any]:
    values: ty.Dict[str, ty.Any] = {}

    def _add(key: str, value: ty.Any) -> None:
        if key in values:
            raise errors.ConfigParseError(
                'key {!r} is given more than once'.format(key), path=path
            )
        values[key] = value

    for key, value in document.items():
        if not isinstance(value, dict):
            _add(key, value)
            continue
        for inner_key, inner_value in value.items():
            if isinstance(inner_value, dict):
                raise errors.ConfigParseError(
                    'nested table [{}.{}] is not supported'.format(key, inner_key),
                    path=path,
                )
            _add(inner_key, inner_value)
    return values


def build_config(values: ty.Mapping[str, ty.Any]) -> scenario.ScenarioConfig:
    """Validate flat ``values`` into a scenario configuration."""
    try:
        return scenario.ScenarioConfig.model_validate(dict(values))
    except pydantic.ValidationError as exc:
        fields = []
        messages = []
        for error in exc.errors():
            field = '.'.join(str(part) for part in error['loc'])
            fields.append(field)
            messages.append('{}: {}'.format(field or 'config', error['msg']))
        raise errors.ConfigValidationError('; '.join(messages), fields) from exc


def parse_config(path: PathT) -> scenario.ScenarioConfig:
    """Load and validate a TOML configuration file."""
    path = os.fspath(path)
    try:
        with open(path, encoding='utf-8') as stream:
            document = toml.load(stream)
    except toml.TomlDecodeError as exc:
        raise errors.ConfigParseError(
            exc.msg, path=path, line=exc.lineno, column=exc.colno
        ) from exc
    except OSError as exc:
        raise errors.ConfigParseError(exc.strerror or str(exc), path=path) from exc
    LOG.debug('Loaded configuration from %s', path)
    return build_config(_collect(document, path))


def apply_overrides(
    cfg: scenario.ScenarioConfig, **overrides: ty.Any
) -> scenario.ScenarioConfig:
    """Return ``cfg`` with every override that is not ``None`` applied."""
    values = cfg.model_dump()
    values.update({k: v for k, v in overrides.items() if v is not None})
    return build_config(values)


def config_document(cfg: scenario.ScenarioConfig) -> ty.Dict[str, ty.Any]:
    values = cfg.model_dump()
    values['scnr_grid_db'] = list(values['scnr_grid_db'])
    return {
        section: {key: values[key] for key in keys}
        for section, keys in SECTIONS.items()
    }


def dump_config(cfg: scenario.ScenarioConfig, path: PathT) -> None:
    """Write ``cfg`` so that :func:`parse_config` reads it back unchanged."""
    with open(path, 'w', encoding='utf-8', newline='\n') as stream:
        toml.dump(config_document(cfg), stream)


def config_digest(cfg: scenario.ScenarioConfig) -> str:
    """SHA-256 of the canonical JSON form of ``cfg``."""
    canonical = json.dumps(
        cfg.model_dump(mode='json'), sort_keys=True, separators=(',', ':')
    )
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()
