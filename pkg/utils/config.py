#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Configuration management for the backscatter link simulator.

This module handles loading and validating the experiment configuration
from a JSON file. Missing keys fall back to DEFAULTS section by section.
"""

import copy
import json
import logging
import math
import os
import sys

from utils.errors import ConfigError
from utils.seeding import MAX_SEED

logger = logging.getLogger(__name__)

MODES = ('grid', 'waveform')
ESTIMATORS = ('crs', 'wideband')
TRAFFIC_KINDS = ('constant-load', 'two-state-markov')
FADING_KINDS = ('static', 'block-rayleigh')

DEFAULTS = {
    'seed': 1,
    'mode': 'grid',
    'duration': 48.0,            # seconds of simulated time per point
    'trials': 1,
    'workers': 1,
    'chunk_slots': 200,          # slots simulated per pipeline chunk
    'output_dir': 'results',

    # 10 MHz LTE-like downlink, normal cyclic prefix
    'grid': {
        'bandwidth_rb': 50,
        'subcarrier_spacing': 15000.0,
        'fft_size': 1024,
        'sample_rate': 15360000.0,
        'cp_scheme': 'normal',
        'carrier_label': 768000000.0,
    },

    'crs': {
        'cell_id': 0,
        'frequency_stride': 6,
        'symbol_positions': [0, 4],
    },

    'traffic': {
        'kind': 'two-state-markov',
        'duty_target': 0.5,
        'p_on_to_off': 0.1,
        'p_off_to_on': 0.1,
        'data_re_power': 1.0,
        'mean_on_subframes': 10.0,
    },

    'zed': {
        'enabled': True,
        'f0': 125.0,
        'f1': 500.0,
        'symbol_duration': 0.04,
        'reflection_states': [0.0, 1.0],   # [s_off, s_on]
        'inter_frame_gap': 0.0,
        'clock_skew_ppm': 0.0,
        'start_offset': 0.0,
        'payload': None,                   # 57-character bit string, None for the default payload
    },

    'channel': {
        'h_direct': [1.0, 0.0],            # [real, imag]
        'backscatter_ratio_db': -15.0,
        'backscatter_phase_deg': 0.0,
        'target_snr_db': None,             # None disables noise
        'fading': 'static',
        'coherence_interval': 0.1,
    },

    'receiver': {
        'threshold': 0.8,
        'offset_candidates': 8,
        'estimator': 'crs',
        'match_window_symbols': 1.0,
    },

    'sweep': {
        'snr_db': [],
        'traffic_duty': [],
        'backscatter_ratio_db': [],
    },
}


def default_config():
    """Return a fresh copy of the default configuration."""
    return copy.deepcopy(DEFAULTS)


def merge_defaults(config, defaults=None):
    """
    Fill every key missing from `config` with its default, recursing into sections.

    Args:
        config (dict): User configuration, modified in place.
        defaults (dict, optional): Defaults to apply. Uses DEFAULTS if None.

    Returns:
        dict: The merged configuration.
    """
    defaults = DEFAULTS if defaults is None else defaults
    for key, value in defaults.items():
        if key not in config:
            config[key] = copy.deepcopy(value)
        elif isinstance(value, dict):
            if not isinstance(config[key], dict):
                raise ConfigError(f"Section '{key}' must be a JSON object")
            merge_defaults(config[key], value)
    return config


def unknown_keys(config, defaults=None, prefix=''):
    """
    List the keys of config that DEFAULTS does not know, as dotted paths.

    Nested sections are checked against the matching DEFAULTS section.
    """
    defaults = DEFAULTS if defaults is None else defaults
    found = []
    for key, value in config.items():
        path = f"{prefix}{key}"
        if key not in defaults:
            found.append(path)
        elif isinstance(defaults[key], dict) and isinstance(value, dict):
            found.extend(unknown_keys(value, defaults[key], prefix=f"{path}."))
    return sorted(found)


def load_config(config_path):
    """
    Load configuration from a JSON file.

    Args:
        config_path (str): Path to the configuration file.

    Returns:
        dict: Configuration dictionary with all settings.

    Raises:
        ConfigError: If the file is missing, is not valid JSON or holds invalid values.
    """
    if not os.path.exists(config_path):
        raise ConfigError(f"Configuration file not found: {config_path}")

    try:
        with open(config_path, 'r') as f:
            config = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Error parsing config file {config_path}: {e}") from e
    except OSError as e:
        raise ConfigError(f"Error loading config file {config_path}: {e}") from e

    if not isinstance(config, dict):
        raise ConfigError("Configuration root must be a JSON object")

    unknown = unknown_keys(config)
    if unknown:
        logger.warning("Ignoring unknown configuration keys: %s", ', '.join(unknown))

    merge_defaults(config)
    validate_config(config)
    logger.debug("Loaded configuration from %s", config_path)
    return config


def _require_number(section, key, value, positive=False, non_negative=False, allow_none=False):
    if value is None and allow_none:
        return
    if isinstance(value, bool) or not isinstance(value, (int, float)) or math.isnan(value):
        raise ConfigError(f"{section}.{key} must be a number, got {value!r}")
    if positive and not value > 0:
        raise ConfigError(f"{section}.{key} must be a positive number")
    if non_negative and value < 0:
        raise ConfigError(f"{section}.{key} must not be negative")


def _require_probability(section, key, value):
    _require_number(section, key, value)
    if not 0.0 <= value <= 1.0:
        raise ConfigError(f"{section}.{key} must lie in [0, 1], got {value}")


def _require_number_list(section, key, value):
    if not isinstance(value, list):
        raise ConfigError(f"{section}.{key} must be a list of numbers")
    for item in value:
        _require_number(section, key, item)


def validate_config(config):
    """
    Validate types and ranges of a merged configuration.

    Cross-field invariants (tone/rate relations, grid numerology) are checked
    again when the domain objects are built from the configuration.

    Args:
        config (dict): Configuration dictionary to validate.

    Raises:
        ConfigError: On the first invalid parameter.
    """
    seed = config['seed']
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed <= MAX_SEED:
        raise ConfigError("seed must be an integer in [0, 2**64)")
    if config['mode'] not in MODES:
        raise ConfigError(f"mode must be one of {', '.join(MODES)}")
    _require_number('root', 'duration', config['duration'], positive=True)
    for key in ('trials', 'workers', 'chunk_slots'):
        value = config[key]
        if isinstance(value, bool) or not isinstance(value, int) or value < 1:
            raise ConfigError(f"{key} must be a positive integer")
    if config['chunk_slots'] % 2:
        raise ConfigError("chunk_slots must be even so chunks hold whole subframes")
    if not isinstance(config['output_dir'], str) or not config['output_dir']:
        raise ConfigError("output_dir must be a non-empty string")

    grid = config['grid']
    for key in ('bandwidth_rb', 'fft_size'):
        if isinstance(grid[key], bool) or not isinstance(grid[key], int) or grid[key] < 1:
            raise ConfigError(f"grid.{key} must be a positive integer")
    for key in ('subcarrier_spacing', 'sample_rate', 'carrier_label'):
        _require_number('grid', key, grid[key], positive=True)

    crs = config['crs']
    if not isinstance(crs['cell_id'], int) or not 0 <= crs['cell_id'] <= 503:
        raise ConfigError("crs.cell_id must be an integer in [0, 503]")
    if not isinstance(crs['frequency_stride'], int) or crs['frequency_stride'] < 1:
        raise ConfigError("crs.frequency_stride must be a positive integer")
    if not isinstance(crs['symbol_positions'], list) or not crs['symbol_positions']:
        raise ConfigError("crs.symbol_positions must be a non-empty list")

    traffic = config['traffic']
    if traffic['kind'] not in TRAFFIC_KINDS:
        raise ConfigError(f"traffic.kind must be one of {', '.join(TRAFFIC_KINDS)}")
    for key in ('duty_target', 'p_on_to_off', 'p_off_to_on'):
        _require_probability('traffic', key, traffic[key])
    rates = traffic['p_on_to_off'] + traffic['p_off_to_on']
    if traffic['kind'] == 'two-state-markov' and rates > 0:
        duty = traffic['p_off_to_on'] / rates
        if not math.isclose(duty, traffic['duty_target'], abs_tol=1e-9):
            raise ConfigError(f"traffic.duty_target {traffic['duty_target']} disagrees with the "
                              f"two-state duty {duty:.4g} set by p_on_to_off and p_off_to_on")
    _require_number('traffic', 'data_re_power', traffic['data_re_power'], non_negative=True)
    _require_number('traffic', 'mean_on_subframes', traffic['mean_on_subframes'], positive=True)

    zed = config['zed']
    if not isinstance(zed['enabled'], bool):
        raise ConfigError("zed.enabled must be true or false")
    for key in ('f0', 'f1', 'symbol_duration'):
        _require_number('zed', key, zed[key], positive=True)
    for key in ('inter_frame_gap', 'start_offset'):
        _require_number('zed', key, zed[key], non_negative=True)
    _require_number('zed', 'clock_skew_ppm', zed['clock_skew_ppm'])
    states = zed['reflection_states']
    if not isinstance(states, list) or len(states) != 2:
        raise ConfigError("zed.reflection_states must be a list [s_off, s_on]")
    _require_number_list('zed', 'reflection_states', states)
    payload = zed['payload']
    if payload is not None and (not isinstance(payload, str) or set(payload) - {'0', '1'}):
        raise ConfigError("zed.payload must be a string of '0'/'1' characters or null")

    channel = config['channel']
    h_direct = channel['h_direct']
    if not isinstance(h_direct, list) or len(h_direct) != 2:
        raise ConfigError("channel.h_direct must be a list [real, imag]")
    _require_number_list('channel', 'h_direct', h_direct)
    _require_number('channel', 'backscatter_ratio_db', channel['backscatter_ratio_db'])
    _require_number('channel', 'backscatter_phase_deg', channel['backscatter_phase_deg'])
    _require_number('channel', 'target_snr_db', channel['target_snr_db'], allow_none=True)
    if channel['fading'] not in FADING_KINDS:
        raise ConfigError(f"channel.fading must be one of {', '.join(FADING_KINDS)}")
    _require_number('channel', 'coherence_interval', channel['coherence_interval'], positive=True)

    receiver = config['receiver']
    _require_number('receiver', 'threshold', receiver['threshold'], positive=True)
    if receiver['threshold'] > 1:
        raise ConfigError("receiver.threshold must lie in (0, 1]")
    if not isinstance(receiver['offset_candidates'], int) or receiver['offset_candidates'] < 1:
        raise ConfigError("receiver.offset_candidates must be a positive integer")
    if receiver['estimator'] not in ESTIMATORS:
        raise ConfigError(f"receiver.estimator must be one of {', '.join(ESTIMATORS)}")
    _require_number('receiver', 'match_window_symbols', receiver['match_window_symbols'],
                    non_negative=True)

    for key in ('snr_db', 'traffic_duty', 'backscatter_ratio_db'):
        _require_number_list('sweep', key, config['sweep'][key])
    for duty in config['sweep']['traffic_duty']:
        _require_probability('sweep', 'traffic_duty', duty)


if __name__ == "__main__":
    # If run directly, expect a path to a config file as argument
    if len(sys.argv) != 2:
        print("Usage: python config.py <config_file_path>", file=sys.stderr)
        sys.exit(1)

    try:
        print(json.dumps(load_config(sys.argv[1]), indent=4))
    except ConfigError as e:
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(1)
