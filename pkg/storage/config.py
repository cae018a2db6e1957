"""
TOML configuration files: flat [section] tables of key = value pairs.
"""

import logging
import re

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path

from pydantic import ValidationError

from models.errors import ConfigError
from models.params import RunConfig

logger = logging.getLogger(__name__)

_DECODER_LINE: re.Pattern = re.compile(r"line (\d+)")

# pydantic error types that are not custom rule names
_GENERIC_RULES: dict[str, str] = {
    "extra_forbidden": "unknown_key",
    "missing": "missing_key",
}


def _line_of(text: str, loc: tuple) -> int | None:
    """Line of the key an error location points at, searched within its section."""
    keys: list[str] = [str(part) for part in loc if isinstance(part, str)]
    if not keys:
        return None
    section: str | None = keys[0] if len(keys) > 1 else None
    key: str = keys[-1]
    current: str | None = None
    for number, line in enumerate(text.splitlines(), start=1):
        stripped: str = line.strip()
        header = re.match(r"^\[([^\]]+)\]", stripped)
        if header:
            current = header.group(1).strip()
            continue
        if current == section and re.match(rf"^{re.escape(key)}\s*=", stripped):
            return number
    return None


def parse_config(text: str) -> RunConfig:
    """
    Parse and validate a configuration document.

    Args:
        text (str): TOML text.

    Returns:
        RunConfig: The validated configuration; omitted keys take their defaults.

    Raises:
        ConfigError: On a syntax error (with its line) or a violated rule (with its name).
    """
    try:
        document: dict = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line: int | None = getattr(exc, "lineno", None)
        if line is None:
            found = _DECODER_LINE.search(str(exc))
            line = int(found.group(1)) if found else None
        raise ConfigError(f"syntax error: {exc}", line=line, rule="syntax") from exc

    try:
        return RunConfig.model_validate(document)
    except ValidationError as exc:
        first = exc.errors()[0]
        loc: tuple = tuple(first["loc"])
        rule: str = _GENERIC_RULES.get(first["type"], first["type"])
        where: str = ".".join(str(part) for part in loc) or "config"
        message: str = f"{where}: {first['msg']}"
        if first["type"] == "extra_forbidden":
            message = f"unknown key {where!r}"
        raise ConfigError(message, line=_line_of(text, loc), rule=rule) from exc


def load_config(path: str | Path) -> RunConfig:
    """Read and parse a configuration file."""
    path = Path(path)
    try:
        text: str = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}", rule="io") from exc
    logger.debug("Loaded config %s", path)
    return parse_config(text)
