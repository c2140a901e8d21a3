"""Flat `key = value` configuration files for the full pipeline."""

from __future__ import annotations

from .pipeline import PipelineConfig


class ConfigError(ValueError):
    pass


# key -> (section attribute, field, parser)
_KEYS = {
    "delta_a": ("fan", "delta_a", float),
    "delta_d": ("fan", "delta_d", float),
    "d_min": ("fan", "d_min", float),
    "d_max": ("fan", "d_max", float),
    "delta_s": ("fan", "delta_s", float),
    "g_low": ("fan", "g_low", float),
    "g_high": ("fan", "g_high", float),
    "max_slope": ("fan", "max_slope", float),
    "fit_dist_tol": ("fan", "fit_dist_tol", float),
    "seed_z_tol": ("fan", "seed_z_tol", float),
    "sensor_height": ("fan", "sensor_height", float),
    "r_m": ("grid", "r_m", float),
    "w": ("grid", "w", int),
    "h": ("grid", "h", int),
    "alpha_hit": ("grid", "alpha_hit", float),
    "alpha_miss": ("grid", "alpha_miss", float),
    "l_up": ("grid", "l_up", float),
    "l_low": ("grid", "l_low", float),
    "lambda": ("grid", "lam", float),
    "beta_occ": ("grid", "beta_occ", float),
    "beta_free": ("grid", "beta_free", float),
    "submap_w": ("vec", "submap_w", int),
    "submap_h": ("vec", "submap_h", int),
    "delta_in": ("vec", "delta_in", float),
    "delta_ou": ("vec", "delta_ou", float),
    "k_min": ("vec", "k_min", int),
    "morph_kernel": ("vec", "morph_kernel", int),
}


def load_config(path) -> PipelineConfig:
    """Parse a config file into a validated PipelineConfig.

    Unknown keys, unparseable values and violated invariants raise
    ConfigError naming the offending key. An empty file yields all defaults.
    """
    cfg = PipelineConfig()
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = f.readlines()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown config key '{key}'")
        section, attr, parse = _KEYS[key]
        try:
            parsed = parse(value)
        except ValueError as e:
            raise ConfigError(
                f"{path}:{lineno}: bad value for '{key}': {value!r}") from e
        setattr(getattr(cfg, section), attr, parsed)
    try:
        cfg.validate()
    except ValueError as e:
        raise ConfigError(str(e)) from e
    return cfg
