import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from synthlidar.taxonomy import (IGNORE, VALIDATION_CLASSES, TaxonomyError, default_taxonomy, embed,
                                 load_taxonomy, remap, validation_id)

MINIMAL = """
# id name kind target adjustable
40 road static-world road no
10 car dynamic-actor car yes
100 sky static-world IGNORE no
"""


def test_minimal_config():
    tax = load_taxonomy(MINIMAL)
    assert len(tax.classes) == 3
    assert tax.reachable() == [validation_id("car"), validation_id("road")]


def test_load_is_deterministic():
    assert load_taxonomy(MINIMAL) == load_taxonomy(MINIMAL)


def test_default_counts(tax):
    assert len(tax.classes) == 30
    assert len(tax.reachable()) == 15


def test_default_unreachable_four(tax):
    missing = {VALIDATION_CLASSES[i] for i in range(19) if not tax.covered_mask()[i]}
    assert missing == {"other-vehicle", "other-ground", "parking", "trunk"}


def test_validation_order():
    assert len(VALIDATION_CLASSES) == 19
    assert VALIDATION_CLASSES[0] == "car" and VALIDATION_CLASSES[-1] == "traffic-sign"


def test_unknown_target_names_class():
    with pytest.raises(TaxonomyError, match="street-light.*lamppost"):
        load_taxonomy("81 street-light static-world lamppost no\n")


@pytest.mark.parametrize("text, msg", [
    ("40 road static-world road no\n40 lane static-world road no\n", "line 2: duplicate raw id 40"),
    ("40 road static-world road\n", "line 1: expected 5 columns"),
    ("x road static-world road no\n", "line 1: raw id"),
    ("70000 road static-world road no\n", "16 bits"),
    ("40 road static road no\n", "unknown kind"),
    ("10 car dynamic-actor car no\n", "must be adjustable"),
    ("10 car dynamic-actor car maybe\n", "yes/no"),
    ("40 road static-world road no\n41 road static-world road no\n", "duplicate class name"),
])
def test_parse_errors(text, msg):
    with pytest.raises(TaxonomyError, match=msg):
        load_taxonomy(text)


def test_guardrail_is_fence(tax):
    assert remap(tax, tax.raw_id("guardrail")) == validation_id("fence")


def test_moving_variants_collapse(tax):
    assert remap(tax, tax.raw_id("moving-car")) == validation_id("car")
    for c in tax.classes:
        if c.name.startswith("moving-"):
            assert c.remap_target == validation_id(c.name[len("moving-"):])


def test_unknown_raw_is_ignore(tax):
    assert remap(tax, 12345) == IGNORE
    assert remap(tax, -1) == IGNORE
    assert remap(tax, 1 << 20) == IGNORE


def test_actors_adjustable(tax):
    assert all(c.adjustable for c in tax.classes if c.is_actor)


def test_remap_array_uses_low_bits(tax):
    words = np.array([(7 << 16) | tax.raw_id("road")], dtype=np.uint32)
    assert tax.remap_array(words)[0] == validation_id("road")


@given(st.integers(min_value=-10, max_value=1 << 17))
def test_remap_total(raw):
    tax = default_taxonomy()
    v = remap(tax, raw)
    assert v == IGNORE or 1 <= v <= 19


def test_remap_idempotent_on_embedded(tax):
    for v in tax.reachable():
        assert remap(tax, embed(tax, v)) == v
        assert remap(tax, embed(tax, remap(tax, embed(tax, v)))) == v
    assert embed(tax, validation_id("trunk")) is None


def test_every_target_in_range(tax):
    for c in tax.classes:
        assert c.remap_target == IGNORE or 1 <= c.remap_target <= 19
