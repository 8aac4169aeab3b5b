from hwmodel.accelerator import (CONFIG_ENV_VAR, DEFAULT_PRESET, PRESET_LARGE, PRESET_SMALL, PRESETS,
                                 AcceleratorConfig, EnergyBreakdown, EnergyCostTable, load_config, preset, read_config,
                                 resolve_config, save_config, write_config)
from hwmodel.errors import ConfigError, UnknownPresetError
