"""key=value config files (flat TOML-compatible scalars) and seed resolution."""

from __future__ import annotations

import os

from .errors import FormatError

ENV_SEED = "WAVESCOPE_SEED"


def _parse_scalar(text: str):
    text = text.strip()
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        return text[1:-1]
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def load_config(path) -> dict:
    """Parse `key = value` lines; '#' starts a comment, quotes delimit strings."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise FormatError(f"{path}:{lineno}: expected key = value")
            key, _, rest = line.partition("=")
            if "#" in rest and not rest.strip().startswith(('"', "'")):
                rest = rest.split("#", 1)[0]
            values[key.strip()] = _parse_scalar(rest)
    return values


def resolve_seed(cli_seed: int | None, config: dict, fallback: int = 0) -> int:
    """Seed precedence: WAVESCOPE_SEED env var, then CLI flag, then config file."""
    env = os.environ.get(ENV_SEED)
    if env is not None:
        return int(env)
    if cli_seed is not None:
        return cli_seed
    if "seed" in config:
        return int(config["seed"])
    return fallback


def pick(cli_value, config: dict, key: str, fallback):
    """CLI flag beats config file beats built-in default."""
    if cli_value is not None:
        return cli_value
    if key in config:
        return config[key]
    return fallback
