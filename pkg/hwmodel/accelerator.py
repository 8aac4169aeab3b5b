import dataclasses
import json
import logging
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, Mapping, NamedTuple, Union

from hwmodel.errors import ConfigError, UnknownPresetError

"""The accelerator being simulated: a PE array, one global buffer, DRAM and a normalized energy cost table.

Configs are immutable. A config document is JSON holding every AcceleratorConfig field, or a `preset` base plus the
fields to override, with an optional `energy` object overriding individual costs:
```
{"preset": "8x8_32KB", "weight_sparsity": 0.0, "energy": {"dram_access": 150}}
```
DRAM bandwidth is given per cycle. At the 1 GHz reference clock, 16 bytes/cycle is 16 GB/s.
"""

DEFAULT_ELEMENT_BYTES = 2
DEFAULT_DRAM_LATENCY_CYCLES = 100
DEFAULT_DRAM_BYTES_PER_CYCLE = Fraction(16)
DEFAULT_WEIGHT_SPARSITY = Fraction(2, 5)

DEFAULT_MAC_COST = 1.0
DEFAULT_RF_ACCESS_COST = 1.0
DEFAULT_BUFFER_ACCESS_COST = 6.0
DEFAULT_DRAM_ACCESS_COST = 200.0

PRESET_SMALL = '8x8_32KB'
PRESET_LARGE = '16x16_128KB'
DEFAULT_PRESET = PRESET_LARGE
CONFIG_ENV_VAR = 'SQNXT_DSE_CONFIG'
CUSTOM_CONFIG_NAME = 'custom'

KB = 1024


def _as_fraction(value: Union[Fraction, float, int, str]) -> Fraction:
    return value if isinstance(value, Fraction) else Fraction(str(value))


def _fraction_to_json(value: Fraction) -> Union[int, float, str]:
    if value.denominator == 1:
        return value.numerator
    # Decimal fractions stay numbers; anything a float cannot hold exactly is written as "n/d".
    if Fraction(str(float(value))) == value:
        return float(value)
    return str(value)


class EnergyBreakdown(NamedTuple):
    mac: float
    rf: float
    buffer: float
    dram: float

    @property
    def total(self) -> float:
        return self.mac + self.rf + self.buffer + self.dram


@dataclass(frozen=True)
class EnergyCostTable:
    """Energy per 16-bit operation or access, normalized so that one MAC costs 1."""
    mac: float = DEFAULT_MAC_COST
    rf_access: float = DEFAULT_RF_ACCESS_COST
    buffer_access: float = DEFAULT_BUFFER_ACCESS_COST
    dram_access: float = DEFAULT_DRAM_ACCESS_COST

    def __post_init__(self):
        for name in ('mac', 'rf_access', 'buffer_access', 'dram_access'):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f'expected a number, got {value!r}', f'energy.{name}')
            if value <= 0:
                raise ConfigError(f'must be positive, got {value}', f'energy.{name}')
            object.__setattr__(self, name, float(value))
        if self.dram_access <= self.buffer_access:
            raise ConfigError(f'must exceed buffer_access ({self.buffer_access}), got {self.dram_access}',
                              'energy.dram_access')

    def weigh(self, macs: int, rf_accesses: int, buffer_accesses: int, dram_elements: float) -> EnergyBreakdown:
        """Weight access counts by their unit costs. DRAM is counted in elements, not bytes."""
        return EnergyBreakdown(
            mac=macs * self.mac,
            rf=rf_accesses * self.rf_access,
            buffer=buffer_accesses * self.buffer_access,
            dram=dram_elements * self.dram_access)


@dataclass(frozen=True)
class AcceleratorConfig:
    name: str
    pe_rows: int
    pe_cols: int
    buffer_bytes: int
    element_bytes: int = DEFAULT_ELEMENT_BYTES
    dram_latency_cycles: int = DEFAULT_DRAM_LATENCY_CYCLES
    dram_bytes_per_cycle: Fraction = DEFAULT_DRAM_BYTES_PER_CYCLE
    weight_sparsity: Fraction = DEFAULT_WEIGHT_SPARSITY
    energy: EnergyCostTable = field(default_factory=EnergyCostTable)

    def __post_init__(self):
        if not isinstance(self.name, str) or not self.name:
            raise ConfigError(f'expected a non-empty string, got {self.name!r}', 'name')
        for name, minimum in (('pe_rows', 1), ('pe_cols', 1), ('buffer_bytes', 1), ('element_bytes', 1),
                              ('dram_latency_cycles', 0)):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f'expected an integer, got {value!r}', name)
            if value < minimum:
                raise ConfigError(f'must be >= {minimum}, got {value}', name)
        if self.buffer_bytes < self.element_bytes:
            raise ConfigError(f'must hold at least one element ({self.element_bytes} bytes)', 'buffer_bytes')

        for name in ('dram_bytes_per_cycle', 'weight_sparsity'):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float, str, Fraction)):
                raise ConfigError(f'expected a number, got {value!r}', name)
            try:
                object.__setattr__(self, name, _as_fraction(value))
            except ValueError:
                raise ConfigError(f'expected a number, got {value!r}', name)
        if self.dram_bytes_per_cycle <= 0:
            raise ConfigError(f'must be positive, got {self.dram_bytes_per_cycle}', 'dram_bytes_per_cycle')
        if not 0 <= self.weight_sparsity < 1:
            raise ConfigError(f'must be in [0, 1), got {float(self.weight_sparsity)}', 'weight_sparsity')
        if not isinstance(self.energy, EnergyCostTable):
            raise ConfigError('expected an EnergyCostTable', 'energy')

    @property
    def pe_count(self) -> int:
        return self.pe_rows * self.pe_cols

    @property
    def label(self) -> str:
        return f'{self.pe_rows}x{self.pe_cols}_{self.buffer_bytes // KB}KB'

    def replace(self, **changes) -> 'AcceleratorConfig':
        return dataclasses.replace(self, **changes)


PRESETS: Dict[str, AcceleratorConfig] = {
    PRESET_SMALL: AcceleratorConfig(name=PRESET_SMALL, pe_rows=8, pe_cols=8, buffer_bytes=32 * KB),
    PRESET_LARGE: AcceleratorConfig(name=PRESET_LARGE, pe_rows=16, pe_cols=16, buffer_bytes=128 * KB),
}

CONFIG_FIELDS = {f.name for f in dataclasses.fields(AcceleratorConfig)}
ENERGY_FIELDS = {f.name for f in dataclasses.fields(EnergyCostTable)}


def preset(name: str) -> AcceleratorConfig:
    if name not in PRESETS:
        raise UnknownPresetError(name, PRESETS)
    return PRESETS[name]


def save_config(config: AcceleratorConfig) -> Dict[str, Any]:
    """Every field of the config as a JSON-ready document. `load_config` of the result gives back an equal config."""
    document = {}
    for name in sorted(CONFIG_FIELDS - {'energy'}):
        value = getattr(config, name)
        document[name] = _fraction_to_json(value) if isinstance(value, Fraction) else value
    document['energy'] = dataclasses.asdict(config.energy)
    return document


def _energy_from(overrides: Any, base: EnergyCostTable) -> EnergyCostTable:
    if not isinstance(overrides, Mapping):
        raise ConfigError('expected an object', 'energy')
    unknown = sorted(set(overrides) - ENERGY_FIELDS)
    if unknown:
        raise ConfigError('unknown field', f'energy.{unknown[0]}')
    return dataclasses.replace(base, **overrides)


def load_config(document: Union[str, Mapping[str, Any]]) -> AcceleratorConfig:
    """Build a config from a document.

    :param document: A mapping, or JSON text holding one. Without `preset`, every config field must be present.
    :return: The config. Its name is the document's `name`, else the preset name, else `custom`.
    :raises ConfigError: On malformed JSON, unknown or missing fields and out-of-range values.
    :raises UnknownPresetError: When `preset` names no preset.
    """
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as e:
            raise ConfigError(f'malformed document: {e.msg} at line {e.lineno}')
    if not isinstance(document, Mapping):
        raise ConfigError('a config document must be an object')

    overrides = dict(document)
    base_name = overrides.pop('preset', None)
    unknown = sorted(set(overrides) - CONFIG_FIELDS)
    if unknown:
        raise ConfigError('unknown field', unknown[0])

    if base_name is not None:
        base = preset(base_name)
        energy = _energy_from(overrides.pop('energy'), base.energy) if 'energy' in overrides else base.energy
        config = dataclasses.replace(base, energy=energy, **overrides)
    else:
        overrides.setdefault('name', CUSTOM_CONFIG_NAME)
        missing = sorted(CONFIG_FIELDS - {'energy'} - set(overrides))
        if missing:
            raise ConfigError('missing required field (or give a preset)', missing[0])
        energy = _energy_from(overrides.pop('energy', {}), EnergyCostTable())
        config = AcceleratorConfig(energy=energy, **overrides)
    logging.debug(f'Loaded accelerator config {config.name}: {config.label}, '
                  f'sparsity {float(config.weight_sparsity):.2f}')
    return config


def read_config(path: str) -> AcceleratorConfig:
    """Load a config file. A file without a `name` is named after the file."""
    try:
        with open(path) as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f'cannot read {path}: {e.strerror}')
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f'malformed document {path}: {e.msg} at line {e.lineno}')
    if isinstance(document, dict) and 'name' not in document:
        document['name'] = os.path.splitext(os.path.basename(path))[0]
    return load_config(document)


def write_config(config: AcceleratorConfig, path: str):
    with open(path, 'w') as f:
        f.write(json.dumps(save_config(config), indent=2, sort_keys=True) + '\n')


def resolve_config(selector: str = None) -> AcceleratorConfig:
    """A preset name or a config file path. Falls back to $SQNXT_DSE_CONFIG, then the 16x16 preset."""
    selector = selector or os.environ.get(CONFIG_ENV_VAR) or DEFAULT_PRESET
    if selector in PRESETS:
        return PRESETS[selector]
    if os.path.exists(selector) or selector.endswith('.json'):
        return read_config(selector)
    raise UnknownPresetError(selector, PRESETS)
