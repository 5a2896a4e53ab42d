import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rodec.textnorm import (
    WHITELIST,
    NormalizerConfig,
    normalize,
    num_to_text_ro,
    replace_numerals,
)


class TestNormalize:
    def test_reference_sentence(self):
        assert normalize("Aşadar, 3 mere!") == "așadar trei mere"

    def test_empty(self):
        assert normalize("") == ""

    def test_hyphen_kept_punctuation_dropped(self):
        assert normalize("sat-ul X.") == "sat-ul x"

    def test_cedilla_variants_unify(self):
        # U+015F/U+0163 (cedilla) and decomposed comma-below both end up
        # as the precomposed comma-below letters
        assert normalize("aş aţ") == "aș aț"
        assert normalize("șț") == "șț"
        assert normalize("Şcoală Ţară") == "școală țară"

    def test_numeral_conversion_off(self):
        config = NormalizerConfig(numeral_conversion=False)
        assert normalize("3 mere", config) == "mere"

    def test_whitelist_is_fixed(self):
        with pytest.raises(ValueError):
            NormalizerConfig(whitelist=frozenset("abc"))

    @settings(max_examples=300, deadline=None)
    @given(st.text(max_size=40))
    def test_idempotent_and_whitelist_closed(self, text):
        once = normalize(text)
        assert set(once) <= WHITELIST
        assert normalize(once) == once
        assert "  " not in once and once == once.strip()

    def test_mass_random_unicode(self):
        rng = random.Random(1234)
        pools = [
            (0x20, 0x7F), (0xA0, 0x180), (0x200, 0x530),
            (0x2000, 0x2100), (0x1E00, 0x1F00), (0x4E00, 0x4E80),
        ]
        for _ in range(2000):
            chars = []
            for _ in range(rng.randint(0, 30)):
                lo, hi = pools[rng.randrange(len(pools))]
                chars.append(chr(rng.randrange(lo, hi)))
            text = "".join(chars)
            once = normalize(text)
            assert set(once) <= WHITELIST
            assert normalize(once) == once


class TestNumerals:
    @pytest.mark.parametrize("n,words", [
        (0, "zero"),
        (1, "unu"),
        (9, "nouă"),
        (10, "zece"),
        (12, "doisprezece"),
        (14, "paisprezece"),
        (16, "șaisprezece"),
        (19, "nouăsprezece"),
        (20, "douăzeci"),
        (21, "douăzeci și unu"),
        (35, "treizeci și cinci"),
        (60, "șaizeci"),
        (100, "o sută"),
        (101, "o sută unu"),
        (121, "o sută douăzeci și unu"),
        (200, "două sute"),
        (555, "cinci sute cincizeci și cinci"),
        (1000, "o mie"),
        (2000, "două mii"),
        (12000, "douăsprezece mii"),
        (19000, "nouăsprezece mii"),
        (20000, "douăzeci de mii"),
        (21000, "douăzeci și una de mii"),
        (100000, "o sută de mii"),
        (105000, "o sută cinci mii"),
        (1000000, "un milion"),
        (2000000, "două milioane"),
        (1234567, "un milion două sute treizeci și patru de mii cinci sute șaizeci și șapte"),
    ])
    def test_cardinals(self, n, words):
        assert num_to_text_ro(n) == words

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            num_to_text_ro(10 ** 9)
        with pytest.raises(ValueError):
            num_to_text_ro(-1)

    def test_output_renormalizes_to_itself(self):
        rng = random.Random(5)
        for _ in range(200):
            n = rng.randrange(0, 10 ** 9)
            words = num_to_text_ro(n)
            assert normalize(words) == words
            assert set(words) <= WHITELIST | {" "}


class TestReplaceNumerals:
    def test_decimal_comma(self):
        assert normalize("3,5 kg") == "trei virgulă cinci kg"

    def test_no_digits_untouched(self):
        assert replace_numerals("abc") == "abc"

    def test_repeated_runs(self):
        assert normalize("10 10") == "zece zece"

    def test_digits_glued_to_letters(self):
        assert normalize("10kg") == "zece kg"

    def test_leading_zero_fraction_read_digitwise(self):
        assert normalize("3,05") == "trei virgulă zero cinci"

    def test_oversized_run_dropped_by_whitelist(self):
        # 10+ digits cannot convert; the whitelist step then removes them
        assert normalize("1234567890123 lei") == "lei"
