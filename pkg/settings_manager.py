"""
Settings Manager for the FPGA Debug Overlay Toolkit.

Loads the settings file, deep-merges it over DEFAULT_SETTINGS, checks every
value against the type of its default and hands out the typed parameter
objects the flow stages take. Command-line flags override what is returned
here; they never write back to the file.
"""

import copy
import logging
from dataclasses import replace
from typing import Dict, Any, Optional

import common_utils
from baseline_pnr import PathFinderParams, PlacerParams
from errors import ConfigurationError, ValidationError
from fabric_model import ArchSpec
from flow_constants import DEFAULT_SETTINGS, OVERLAY_ORDERS
from trace_overlay import OverlayParams
from trigger_overlay import SAParams

logger = logging.getLogger(__name__)

LOG_LEVELS = ['DEBUG', 'INFO', 'WARNING', 'ERROR']


def deep_merge(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """Recursive merge; override values win, nested dicts merge key by key."""
    merged = copy.deepcopy(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _check_types(defaults: Dict[str, Any], values: Dict[str, Any], prefix: str = "") -> None:
    for key, value in values.items():
        name = f"{prefix}{key}"
        if key not in defaults:
            logger.warning("Ignoring unknown setting %s", name)
            continue
        default = defaults[key]
        if isinstance(default, dict):
            if not isinstance(value, dict):
                raise ValidationError("must be a section", name)
            _check_types(default, value, f"{name}.")
        elif isinstance(default, bool):
            if not isinstance(value, bool):
                raise ValidationError("must be true or false", name)
        elif isinstance(default, (int, float)):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ValidationError("must be a number", name)
            if isinstance(default, int) and not isinstance(value, int):
                raise ValidationError("must be an integer", name)
        elif isinstance(default, list):
            if not isinstance(value, list):
                raise ValidationError("must be a list", name)
        elif isinstance(default, str) and not isinstance(value, str):
            raise ValidationError("must be a string", name)


def _drop_unknown(defaults: Dict[str, Any], values: Dict[str, Any]) -> Dict[str, Any]:
    kept = {}
    for key, value in values.items():
        if key not in defaults:
            continue
        if isinstance(defaults[key], dict):
            kept[key] = _drop_unknown(defaults[key], value)
        else:
            kept[key] = value
    return kept


class SettingsManager:
    """
    Settings of one run of the toolkit.

    Attributes:
        settings_file: Path of the JSON settings file (may not exist)
        settings: Merged and validated settings tree
    """

    def __init__(self, settings_file: Optional[str] = None):
        self.settings_file = settings_file or common_utils.DEFAULT_SETTINGS_FILE
        self.settings: Dict[str, Any] = copy.deepcopy(DEFAULT_SETTINGS)
        self.load_settings()

    def load_settings(self) -> None:
        """
        Load the settings file over the defaults.

        Raises:
            ConfigurationError: if the file is not valid JSON
            ValidationError: if a value has the wrong type or range
        """
        try:
            overrides = common_utils.load_json(self.settings_file, {})
        except ValueError as e:
            raise ConfigurationError(str(e)) from e
        self.update_settings(overrides)
        logger.debug("Settings loaded from %s", self.settings_file)

    def update_settings(self, overrides: Dict[str, Any]) -> None:
        if not isinstance(overrides, dict):
            raise ValidationError("settings file must hold a JSON object")
        _check_types(DEFAULT_SETTINGS, overrides)
        merged = deep_merge(DEFAULT_SETTINGS, _drop_unknown(DEFAULT_SETTINGS, overrides))
        self._validate(merged)
        self.settings = merged

    def get(self, section: str, key: Optional[str] = None) -> Any:
        value = self.settings[section]
        return value if key is None else value[key]

    @staticmethod
    def _validate(settings: Dict[str, Any]) -> None:
        if settings['log_level'] not in LOG_LEVELS:
            raise ValidationError(f"must be one of {', '.join(LOG_LEVELS)}", 'log_level')
        if settings['trigger_overlay']['order'] not in OVERLAY_ORDERS:
            raise ValidationError(f"must be one of {', '.join(OVERLAY_ORDERS)}", 'trigger_overlay.order')
        for key in ('inner_num', 'init_temp_factor', 'exit_factor'):
            if settings['placer'][key] <= 0:
                raise ValidationError("must be positive", f"placer.{key}")
        for key in ('max_iters', 'pres_fac_init', 'w_hi'):
            if settings['router'][key] <= 0:
                raise ValidationError("must be positive", f"router.{key}")
        if settings['router']['w_hi'] % 2:
            raise ValidationError("must be even", 'router.w_hi')
        if settings['router']['pres_fac_mult'] < 1:
            raise ValidationError("must be >= 1", 'router.pres_fac_mult')
        if not 0 < settings['suite']['utilization'] <= 1:
            raise ValidationError("must be in (0, 1]", 'suite.utilization')
        ArchSpec.from_dict(settings['arch'])
        SettingsManager._overlay_params(settings).validate()
        SettingsManager._sa_params(settings, 1).validate()

    # ----- typed views -----

    def arch_template(self) -> ArchSpec:
        return ArchSpec.from_dict(self.settings['arch'])

    def placer_params(self) -> PlacerParams:
        s = self.settings['placer']
        return PlacerParams(inner_num=float(s['inner_num']),
                            init_temp_factor=float(s['init_temp_factor']),
                            target_acceptance=float(s['target_acceptance']),
                            exit_factor=float(s['exit_factor']),
                            max_temperatures=int(s['max_temperatures']))

    def router_params(self) -> PathFinderParams:
        s = self.settings['router']
        return PathFinderParams(max_iters=int(s['max_iters']),
                                pres_fac_init=float(s['pres_fac_init']),
                                pres_fac_mult=float(s['pres_fac_mult']),
                                hist_fac=float(s['hist_fac']),
                                astar_fac=float(s['astar_fac']),
                                stall_limit=int(s['stall_limit']))

    @staticmethod
    def _overlay_params(settings: Dict[str, Any]) -> OverlayParams:
        s = settings['trace_overlay']
        return OverlayParams(fanout_target=int(s['fanout_target']),
                             width_margin=float(s['width_margin']),
                             max_iters=int(s['max_iters']),
                             share_cost=float(s['share_cost']),
                             prune_patience=int(s['prune_patience']),
                             salvage=bool(s['salvage']),
                             pres_fac_init=float(s['pres_fac_init']),
                             pres_fac_mult=float(s['pres_fac_mult']),
                             hist_fac=float(s['hist_fac']))

    def overlay_params(self, fanout_target: Optional[int] = None) -> OverlayParams:
        params = self._overlay_params(self.settings)
        if fanout_target is not None:
            params = replace(params, fanout_target=int(fanout_target))
        return params.validate()

    @staticmethod
    def _sa_params(settings: Dict[str, Any], seed: int) -> SAParams:
        s = settings['trigger_overlay']
        return SAParams(seed=int(seed),
                        init_temp_factor=float(s['init_temp_factor']),
                        cooling_rate=float(s['cooling_rate']),
                        moves_per_le=int(s['moves_per_le']),
                        gamma_indirect=float(s['gamma_indirect']),
                        gamma_blocked=float(s['gamma_blocked']),
                        max_route_through=int(s['max_route_through']),
                        stall_temperatures=int(s['stall_temperatures']),
                        restarts=int(s['restarts']),
                        max_temperatures=int(s['max_temperatures']),
                        exit_temperature=float(s['exit_temperature']),
                        target_acceptance=float(s['target_acceptance']))

    def sa_params(self, seed: int = 1, gamma_indirect: Optional[float] = None,
                  gamma_blocked: Optional[float] = None) -> SAParams:
        params = self._sa_params(self.settings, seed)
        if gamma_indirect is not None:
            params = replace(params, gamma_indirect=float(gamma_indirect))
        if gamma_blocked is not None:
            params = replace(params, gamma_blocked=float(gamma_blocked))
        return params.validate()

    def acceptance(self) -> Dict[str, float]:
        return dict(self.settings['acceptance'])
