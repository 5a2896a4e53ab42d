"""Romanian text normalization.

One pipeline applied identically to LM corpora, training references and
evaluation references: Unicode NFC, cedilla-to-comma-below repair, lowercase,
numeral-to-text, then a hard character whitelist (the 31 letters of the
Romanian alphabet plus hyphen and space) and whitespace collapsing. The
result is idempotent and whitelist-closed for any input.
"""

from __future__ import annotations

import logging
import re
import unicodedata
from dataclasses import dataclass, field

log = logging.getLogger(__name__)

ROMANIAN_LETTERS = "aăâbcdefghiîjklmnopqrsștțuvwxyz"
WHITELIST = frozenset(ROMANIAN_LETTERS) | {"-", " "}

# legacy cedilla codepoints -> comma-below letters (mixed freely in corpora)
_CEDILLA_FIX = str.maketrans({
    "ş": "ș", "Ş": "Ș",  # s-cedilla
    "ţ": "ț", "Ţ": "Ț",  # t-cedilla
})

_DECIMAL_RE = re.compile(r"(?<![\d,])(\d+),(\d+)(?![\d,])")
_DIGIT_RUN_RE = re.compile(r"\d+")

_UNITS = ["zero", "unu", "doi", "trei", "patru", "cinci", "șase", "șapte", "opt", "nouă"]
_UNITS_FEM = ["zero", "una", "două", "trei", "patru", "cinci", "șase", "șapte", "opt", "nouă"]
_TEENS = [
    "zece", "unsprezece", "doisprezece", "treisprezece", "paisprezece",
    "cincisprezece", "șaisprezece", "șaptesprezece", "optsprezece", "nouăsprezece",
]
_TENS = [
    "", "zece", "douăzeci", "treizeci", "patruzeci", "cincizeci",
    "șaizeci", "șaptezeci", "optzeci", "nouăzeci",
]

MAX_NUMERAL = 10 ** 9


@dataclass(frozen=True)
class NormalizerConfig:
    whitelist: frozenset = field(default=WHITELIST)
    numeral_conversion: bool = True

    def __post_init__(self):
        if frozenset(self.whitelist) != WHITELIST:
            raise ValueError("whitelist is fixed to the 31 Romanian letters + hyphen + space")


DEFAULT_CONFIG = NormalizerConfig()


def _under_100(n: int, feminine: bool) -> str:
    units = _UNITS_FEM if feminine else _UNITS
    if n < 10:
        return units[n]
    if n < 20:
        if n == 12 and feminine:
            return "douăsprezece"
        return _TEENS[n - 10]
    tens, unit = divmod(n, 10)
    if unit == 0:
        return _TENS[tens]
    return f"{_TENS[tens]} și {units[unit]}"


def _under_1000(n: int, feminine: bool) -> str:
    if n < 100:
        return _under_100(n, feminine)
    hundreds, rest = divmod(n, 100)
    if hundreds == 1:
        head = "o sută"
    else:
        head = f"{_UNITS_FEM[hundreds]} sute"
    if rest == 0:
        return head
    return f"{head} {_under_100(rest, feminine)}"


def _takes_de(n: int) -> bool:
    # cardinals ending in 00 or 20..99 attach to their noun with "de"
    return n % 100 == 0 or n % 100 >= 20


def num_to_text_ro(n: int) -> str:
    """Grammatical lowercase Romanian cardinal for 0 <= n < 10^9."""
    n = int(n)
    if not 0 <= n < MAX_NUMERAL:
        raise ValueError(f"numeral {n} outside [0, {MAX_NUMERAL})")
    if n == 0:
        return "zero"
    parts = []
    millions, rest = divmod(n, 10 ** 6)
    thousands, low = divmod(rest, 1000)
    if millions:
        if millions == 1:
            parts.append("un milion")
        else:
            joint = "de milioane" if _takes_de(millions) else "milioane"
            parts.append(f"{_under_1000(millions, True)} {joint}")
    if thousands:
        if thousands == 1:
            parts.append("o mie")
        else:
            joint = "de mii" if _takes_de(thousands) else "mii"
            parts.append(f"{_under_1000(thousands, True)} {joint}")
    if low:
        parts.append(_under_1000(low, False))
    return " ".join(parts)


def _digits_to_words(digits: str) -> str:
    # leading zeros are read digit by digit so "05" stays distinguishable
    if len(digits) > 1 and digits[0] == "0":
        return " ".join(_UNITS[int(d)] for d in digits)
    return num_to_text_ro(int(digits))


def replace_numerals(text: str) -> str:
    """Convert maximal digit runs to Romanian cardinals; a decimal comma
    between digit runs reads as "virgulă". Runs that cannot be converted
    (too large) are left untouched for the whitelist step to drop."""

    def decimal(match: re.Match) -> str:
        whole, frac = match.group(1), match.group(2)
        try:
            return f" {_digits_to_words(whole)} virgulă {_digits_to_words(frac)} "
        except ValueError:
            return match.group(0)

    def run(match: re.Match) -> str:
        try:
            return f" {num_to_text_ro(int(match.group(0)))} "
        except ValueError:
            log.debug("numeral %s out of range, leaving untouched", match.group(0))
            return match.group(0)

    text = _DECIMAL_RE.sub(decimal, text)
    return _DIGIT_RUN_RE.sub(run, text)


def normalize(text: str, config: NormalizerConfig = DEFAULT_CONFIG) -> str:
    """Normalize ``text`` to lowercase whitelist-only words.

    Pipeline: NFC composition, cedilla repair, lowercase, numeral-to-text
    (when enabled), whitelist replacement with space, whitespace collapsing.
    Total function; never raises on any Unicode input.
    """
    t = unicodedata.normalize("NFC", text)
    t = t.translate(_CEDILLA_FIX)
    t = t.lower()
    if config.numeral_conversion:
        t = replace_numerals(t)
    whitelist = config.whitelist
    t = "".join(ch if ch in whitelist else " " for ch in t)
    return " ".join(t.split())
