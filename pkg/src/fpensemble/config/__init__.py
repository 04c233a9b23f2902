import copy
import json
import logging
import os
from dataclasses import dataclass, field
from functools import partial
from importlib.resources import files
from pathlib import Path
from typing import Optional

import yaml
from addict import Dict
from appdirs import user_config_dir

from ..core import ModelSubset
from ..encoder import EncoderConfig
from ..exceptions import ConfigError
from ..fusion import FusionWeights, ScoreRule
from ..imaging import BlurParams, DEFAULT_BLOCK, DEFAULT_OFFSET
from ..util import cache, canonical_json, flexopen


_loadyaml = partial(yaml.load, Loader=yaml.SafeLoader)
CFG_USER = user_config_dir('fpensemble')  # Default config search path
CFG_EVAR = 'FPENSEMBLE_CONFIG_DIR'        # Environment var overrides default
DEFAULTS = {f.name: _loadyaml(f.read_text())
            for f in files(__name__).iterdir()
            if f.suffix == '.yaml'}

log = logging.getLogger(__name__)


@cache
def load(name, search_paths=None):
    """ Load a yaml config file

    The file will be merged with (and override) any defaults for the same file.
    Search paths can be specified via an environment variable, or as an
    argument.

    The contents of config files are cached, and repeated calls will not
    reload them. To force a reload, call load.cache_clear().
    """
    if name not in DEFAULTS:
        raise ValueError(f"not a known config file: {name}")
    if search_paths is None:
        search_paths = [Path(os.environ.get(CFG_EVAR) or CFG_USER)]

    dataset = Dict()
    dataset.update(Dict(copy.deepcopy(DEFAULTS[name])))
    for path in search_paths:
        try:
            with open(Path(path, name)) as f:
                dataset.update(Dict(_loadyaml(f) or {}))
        except FileNotFoundError as ex:
            log.debug(ex)
        except IOError as ex:
            log.warning(ex)
    return dataset


@dataclass(frozen=True)
class Paths:
    input: Optional[str] = None
    output: Optional[str] = None


@dataclass(frozen=True)
class RidgeParams:
    block: int = DEFAULT_BLOCK
    offset: float = DEFAULT_OFFSET


def _section(cls, data, name):
    """ Build a dataclass from a mapping, rejecting unknown keys """
    if not isinstance(data, dict):
        raise ConfigError(f"config section '{name}' must be a mapping")
    unknown = set(data) - set(cls.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown keys in '{name}': {sorted(unknown)}")
    return cls(**data)


def _merge(base, override, where=''):
    """ Recursively overlay `override` on `base`; keys must already exist """
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"unknown config key: {where}{key}")
        if key != 'fusion_weights' and isinstance(base[key], dict) \
                and isinstance(value, dict):
            _merge(base[key], value, f'{where}{key}.')
        else:
            base[key] = value
    return base


@dataclass(frozen=True)
class RunConfig:
    """ Everything a run depends on besides its input files

    Converts to and from a canonical JSON document; unknown keys are errors
    at every level.
    """
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    transforms: ModelSubset = field(default_factory=ModelSubset.all)
    fusion_weights: FusionWeights = field(default_factory=FusionWeights)
    target_fmr: float = 1e-3
    paths: Paths = field(default_factory=Paths)
    seed: int = 0
    blur: BlurParams = field(default_factory=BlurParams)
    ridge: RidgeParams = field(default_factory=RidgeParams)
    score_rule: ScoreRule = ScoreRule.Median
    supervisors: ModelSubset = field(
            default_factory=lambda: ModelSubset('RM'))

    def __post_init__(self):
        if not 0 < self.target_fmr <= 1:
            raise ConfigError(f"target_fmr must be in (0, 1], "
                              f"got {self.target_fmr}")
        if not (isinstance(self.seed, int) and 0 <= self.seed < 2**64):
            raise ConfigError(f"seed must be an unsigned 64-bit integer, "
                              f"got {self.seed!r}")

    @property
    def weights(self):
        """ Fusion weights for the configured supervisors """
        return FusionWeights.for_subset(self.supervisors,
                                        self.fusion_weights.weights)

    @classmethod
    def from_mapping(cls, data):
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        missing = known - set(data)
        if missing:
            raise ConfigError(f"missing config keys: {sorted(missing)}")
        try:
            return cls(
                encoder=_section(EncoderConfig, data['encoder'], 'encoder'),
                transforms=ModelSubset(data['transforms']),
                fusion_weights=FusionWeights(data['fusion_weights']),
                target_fmr=float(data['target_fmr']),
                paths=_section(Paths, data['paths'], 'paths'),
                seed=data['seed'],
                blur=_section(BlurParams, data['blur'], 'blur'),
                ridge=_section(RidgeParams, data['ridge'], 'ridge'),
                score_rule=ScoreRule.parse(data['score_rule']),
                supervisors=ModelSubset(data['supervisors']),
                )
        except ConfigError:
            raise
        except (ValueError, TypeError, KeyError) as ex:
            raise ConfigError(f"bad config: {ex}") from ex

    def to_mapping(self):
        return {
            'encoder': {'dim': self.encoder.dim,
                        'grid': self.encoder.grid,
                        'bins': self.encoder.bins,
                        'projection_seed': self.encoder.projection_seed},
            'transforms': str(self.transforms),
            'fusion_weights': self.fusion_weights.to_mapping(),
            'target_fmr': self.target_fmr,
            'paths': {'input': self.paths.input,
                      'output': self.paths.output},
            'seed': self.seed,
            'blur': {'kernel_size': self.blur.kernel_size,
                     'sigma': self.blur.sigma},
            'ridge': {'block': self.ridge.block,
                      'offset': self.ridge.offset},
            'score_rule': str(self.score_rule),
            'supervisors': str(self.supervisors),
            }

    def dumps(self):
        return canonical_json(self.to_mapping())

    @classmethod
    def loads(cls, text):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as ex:
            raise ConfigError(f"config is not valid JSON: {ex}") from ex
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_mapping(data)

    @classmethod
    def resolve(cls, path=None, overrides=None):
        """ Layer packaged/user defaults, a JSON config file, and flags

        `overrides` maps config keys to values from the command line; None
        values are ignored.
        """
        data = load('fpensemble.yaml').to_dict()
        if path:
            with flexopen(path, 'r', encoding='utf-8') as f:
                try:
                    document = json.load(f)
                except json.JSONDecodeError as ex:
                    raise ConfigError(f"{path}: not valid JSON: {ex}") from ex
            if not isinstance(document, dict):
                raise ConfigError(f"{path}: config must be a JSON object")
            _merge(data, document)
        _merge(data, {k: v for k, v in (overrides or {}).items()
                      if v is not None})
        return cls.from_mapping(data)
