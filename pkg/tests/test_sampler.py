import io
import json
import statistics

import pytest

from sgparse.engine import Parser
from sgparse.grammar import parse_grammar
from sgparse.sampler import (
    DatasetWriteError, SampleConstraints, Sampler, SamplingError, conflict_filter,
    generate_dataset, record_rng, sample,
)
from sgparse.semtree import (
    RandomOrder, SORTED, Literal, Tree, decouple, linearize, parse_linearized,
    restore_root, unordered_equal, walk,
)


def test_anbn_geometric_mean(anbn):
    s = Sampler(anbn, None, SampleConstraints(seed=3))
    ns = []
    for i in range(10_000):
        x = s.sample(record_rng(3, i))
        n = len(x.tokens) // 2
        assert x.tokens == ["a"] * n + ["b"] * n
        assert x.exr == Literal(n)
        ns.append(n)
    assert abs(statistics.fmean(ns) - 1.0) <= 0.05


def test_seeded_determinism(demo_grammar, demo_catalogs):
    c = SampleConstraints(seed=42)
    a = sample(demo_grammar, demo_catalogs, c)
    b = sample(demo_grammar, demo_catalogs, c)
    assert a == b


def test_sample_is_parseable_with_its_derivation(demo_parser):
    s = Sampler(demo_parser.grammar, demo_parser.catalogs, SampleConstraints(seed=4))
    for i in range(200):
        x = s.sample(record_rng(4, i))
        r = demo_parser.parse(x.tokens, top_k=None)
        assert x.derivation in [it.derivation for it in r]
        assert demo_parser.top(x.derivation, x.tokens) == x.top
        assert unordered_equal(r[0].exr, x.exr)


@pytest.mark.slow
def test_conflict_filter_10k(demo_grammar, demo_catalogs):
    filtered = Sampler(demo_grammar, demo_catalogs, SampleConstraints(seed=9, filters=("conflict",)))
    unfiltered = Sampler(demo_grammar, demo_catalogs, SampleConstraints(seed=9))
    conflicts = 0
    for i in range(10_000):
        assert not conflict_filter(filtered.sample(record_rng(9, i)))
        if i < 2000:
            conflicts += conflict_filter(unfiltered.sample(record_rng(9, i)))
    assert conflicts > 0  # the filter has something to remove


def test_conflict_filter_detects():
    from sgparse.sampler import Sample
    exr = parse_linearized("(ORDER (PIZZAORDER (TOPPING HAM) (NOT (TOPPING HAM))))")
    assert conflict_filter(Sample([], exr, None, None))


def test_retry_budget_names_constraint(demo_grammar, demo_catalogs):
    s = Sampler(demo_grammar, demo_catalogs, SampleConstraints(seed=1, max_tokens=1, max_retries=50))
    with pytest.raises(SamplingError, match="max-tokens"):
        s.sample()
    s = Sampler(demo_grammar, demo_catalogs, SampleConstraints(seed=1, max_depth=2, max_retries=50))
    with pytest.raises(SamplingError, match="max-depth"):
        s.sample()


def test_constraint_validation(demo_grammar, demo_catalogs):
    with pytest.raises(ValueError):
        SampleConstraints(max_depth=0)
    with pytest.raises(ValueError):
        SampleConstraints(filters=("nope",))
    with pytest.raises(ValueError):
        SampleConstraints(seed=-1)
    with pytest.raises(ValueError, match="every branch"):
        Sampler(demo_grammar, demo_catalogs,
                SampleConstraints(branch_mask={("suborder", 0), ("suborder", 1)}))
    with pytest.raises(ValueError, match="does not name"):
        Sampler(demo_grammar, demo_catalogs, SampleConstraints(branch_mask={("suborder", 7)}))


def test_branch_mask_soundness(demo_grammar, demo_catalogs):
    mask = {("suborder", 1), ("neg_part", 1)}
    s = Sampler(demo_grammar, demo_catalogs, SampleConstraints(seed=2, branch_mask=mask))
    for i in range(500):
        x = s.sample(record_rng(2, i))
        for node in x.derivation.walk():
            if node.kind == "alt":
                assert (node.alt[0], node.choice) not in mask or node.alt[1] != 0
        labels = {n.label for n in walk(x.exr) if isinstance(n, Tree)}
        assert "DRINKORDER" not in labels and "NOT" not in labels


def test_masked_derivation_keeps_grammar_probability(demo_grammar, demo_catalogs):
    p = Parser(demo_grammar, demo_catalogs)
    s = Sampler(demo_grammar, demo_catalogs, SampleConstraints(seed=6, branch_mask={("suborder", 1)}))
    for i in range(50):
        x = s.sample(record_rng(6, i))
        assert x.derivation.prob in [it.prob for it in p.parse(x.tokens, top_k=None)]


def _dataset(g, cats, n, **kw):
    buf = io.StringIO()
    count = generate_dataset(g, cats, n, SampleConstraints(seed=kw.pop("seed", 1)), buf, **kw)
    assert count == n
    return buf.getvalue()


def test_generate_dataset_fields(demo_grammar, demo_catalogs):
    text = _dataset(demo_grammar, demo_catalogs, 50)
    recs = [json.loads(line) for line in text.splitlines()]
    assert len(recs) == 50
    for i, r in enumerate(recs):
        assert set(r) == {"id", "src", "exr", "top", "top_decoupled"}
        assert r["id"] == str(i)
        top = parse_linearized(r["top"], "top")
        assert linearize(decouple(top)) == r["top_decoupled"]
        assert [t for t in r["top"].replace("(", " ").replace(")", " ").split() if not t.isupper()] \
            == [t for t in r["src"].split() if not t.isupper()]


def test_single_record_and_bad_n(demo_grammar, demo_catalogs):
    assert len(_dataset(demo_grammar, demo_catalogs, 1).splitlines()) == 1
    with pytest.raises(ValueError):
        generate_dataset(demo_grammar, demo_catalogs, 0, SampleConstraints(), io.StringIO())


def test_strip_order(demo_grammar, demo_catalogs):
    for line in _dataset(demo_grammar, demo_catalogs, 100, strip_order=True).splitlines():
        r = json.loads(line)
        assert r["exr"].startswith(("(PIZZAORDER", "(DRINKORDER"))
        assert not r["top"].startswith("(ORDER")
        restore_root(r["exr"], "ORDER", "exr")


def test_output_independent_of_workers(demo_grammar, demo_catalogs):
    one = _dataset(demo_grammar, demo_catalogs, 120, workers=1)
    three = _dataset(demo_grammar, demo_catalogs, 120, workers=3)
    assert one == three


def test_ordering_policies(demo_grammar, demo_catalogs):
    natural = _dataset(demo_grammar, demo_catalogs, 60).splitlines()
    shuffled = _dataset(demo_grammar, demo_catalogs, 60, ordering=RandomOrder(5)).splitlines()
    ordered = _dataset(demo_grammar, demo_catalogs, 60, ordering=SORTED).splitlines()
    changed = 0
    for a, b, c in zip(natural, shuffled, ordered):
        ta, tb, tc = (parse_linearized(json.loads(x)["exr"], "exr") for x in (a, b, c))
        assert unordered_equal(ta, tb) and unordered_equal(ta, tc)
        changed += ta != tb
    assert changed > 0


class _FailingSink:
    def __init__(self, limit):
        self.limit = limit
        self.lines = 0

    def write(self, s):
        if self.lines >= self.limit:
            raise OSError("disk full")
        self.lines += 1


def test_write_failure_reports_partial_count(demo_grammar, demo_catalogs):
    with pytest.raises(DatasetWriteError) as e:
        generate_dataset(demo_grammar, demo_catalogs, 20, SampleConstraints(), _FailingSink(7))
    assert e.value.written == 7


def test_custom_grammar_without_catalogs():
    g = parse_grammar('def x = "hi" * (fun S => GREETING(HELLO)::S) + "yo" * (fun S => GREETING(YO)::S)')
    s = Sampler(g, None, SampleConstraints(seed=0))
    seen = {linearize(s.sample(record_rng(0, i)).exr) for i in range(50)}
    assert seen == {"(GREETING HELLO)", "(GREETING YO)"}
