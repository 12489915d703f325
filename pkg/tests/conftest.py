import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sgparse.catalog import load_catalog_dir  # noqa: E402
from sgparse.cli import demo_path  # noqa: E402
from sgparse.engine import Parser  # noqa: E402
from sgparse.grammar import load_grammar, parse_grammar  # noqa: E402

ANBN_SOURCE = """
def push(t) = fun S => t::S
def succ = fun n::S => n+1::S
def S = push(0) + "a" * S * "b" * succ
"""

NEGATION_UTTERANCE = "one medium-size pizza with peppers and ham but no onions"
NEGATION_EXR = ("(ORDER (PIZZAORDER (NUMBER 1) (SIZE MEDIUM) (TOPPING PEPPERS) "
            "(TOPPING HAM) (NOT (TOPPING ONIONS))))")
NEGATION_TOP = ("(ORDER (PIZZAORDER (NUMBER one) (SIZE medium-size) pizza with (TOPPING peppers) "
            "and (TOPPING ham) but no (NOT (TOPPING onions))))")
NEGATION_DECOUPLED = ("(ORDER (PIZZAORDER (NUMBER one) (SIZE medium-size) (TOPPING peppers) "
                  "(TOPPING ham) (NOT (TOPPING onions))))")

PIPELINE_TOP = ("(ORDER (PIZZAORDER (NUMBER two) (SIZE large) pizzas with (TOPPING ham)) "
                "and (DRINKORDER (NUMBER one) (DRINKTYPE diet coke)))")


@pytest.fixture(scope="session")
def anbn():
    return parse_grammar(ANBN_SOURCE)


@pytest.fixture(scope="session")
def demo_grammar():
    return load_grammar(demo_path("pizza.sg"))


@pytest.fixture(scope="session")
def demo_catalogs():
    return load_catalog_dir(demo_path("catalogs"))


@pytest.fixture(scope="session")
def demo_parser(demo_grammar, demo_catalogs):
    return Parser(demo_grammar, demo_catalogs)
