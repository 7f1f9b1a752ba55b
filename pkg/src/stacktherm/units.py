"""Number and key=value parsing shared by the text input formats.

All in-memory quantities are SI (m, K, V, A, W). Input files may attach a
unit suffix directly to a number ("100um", "0.42V"); suffixes are converted
to SI at parse time. Serialization always emits bare SI numbers.
"""

import re

from .errors import ParseError

# Scale factor to SI for each recognised suffix. Plain SI symbols map to 1
# so "300K" and "300" read the same.
_SUFFIX_SCALE = {
    "": 1.0,
    "m": 1.0,
    "cm": 1e-2,
    "mm": 1e-3,
    "um": 1e-6,
    "µm": 1e-6,
    "nm": 1e-9,
    "V": 1.0,
    "K": 1.0,
    "A": 1.0,
    "W": 1.0,
    "s": 1.0,
}

_NUMBER_RE = re.compile(r"^([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)(.*)$")


def split_number(token):
    """Split "3.5um" into (3.5, "um"). The suffix is returned unvalidated."""
    m = _NUMBER_RE.match(token.strip())
    if m is None:
        raise ParseError(f"not a number: {token!r}")
    return float(m.group(1)), m.group(2).strip()


def parse_quantity(token, line=None):
    """Parse a number with an optional unit suffix into its SI value."""
    try:
        value, suffix = split_number(token)
    except ParseError as exc:
        raise ParseError(str(exc), line=line) from None
    scale = _SUFFIX_SCALE.get(suffix)
    if scale is None:
        raise ParseError(f"unknown unit suffix {suffix!r} in {token!r}", line=line)
    return value * scale


def strip_comment(line):
    """Drop everything from the first '#' on."""
    idx = line.find("#")
    if idx >= 0:
        line = line[:idx]
    return line.strip()


def iter_content_lines(text):
    """Yield (lineno, stripped_line) for non-comment, non-blank lines."""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = strip_comment(raw)
        if line:
            yield lineno, line


def read_keyvalues(text):
    """Parse a ``key = value`` file into an ordered dict of raw strings.

    One parameter per line, '#' comments, '=' separator with optional
    spaces. Duplicate keys are a parse error.
    """
    result = {}
    for lineno, line in iter_content_lines(text):
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {line!r}", line=lineno)
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key or not value:
            raise ParseError(f"expected 'key = value', got {line!r}", line=lineno)
        if key in result:
            raise ParseError(f"duplicate key {key!r}", line=lineno)
        result[key] = (value, lineno)
    return result


def format_keyvalues(pairs):
    """Serialize (key, value) pairs to canonical key = value text."""
    lines = []
    for key, value in pairs:
        if isinstance(value, float):
            value = repr(value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
