import pytest

from delaymatch.core import (
    Request,
    Schedule,
    dump_requests,
    dump_schedule,
    load_requests,
    make_requests,
    pair_cost,
    total_cost,
)
from delaymatch.errors import (
    DoubleService,
    InstanceLoadError,
    MatchBeforeArrival,
    OddRequestSet,
    OutOfDomain,
    UncoveredRequest,
    UnknownLocation,
)
from delaymatch.metric import from_coords


@pytest.fixture
def line():
    # points a=0, b=5 on a line
    return from_coords([(0.0,), (5.0,)], ["a", "b"])


def test_make_requests_sorted_and_frozen(line):
    reqs = make_requests(line, [("b", 2.0), ("a", 1.0)])
    assert [r.point for r in reqs] == ["a", "b"]
    assert [r.t for r in reqs] == [1.0, 2.0]
    assert {r.id for r in reqs} == {0, 1}


def test_make_requests_rejects_unknown_point(line):
    with pytest.raises(UnknownLocation):
        make_requests(line, [("zzz", 0.0), ("a", 1.0)])


def test_make_requests_rejects_coincident_times(line):
    with pytest.raises(InstanceLoadError):
        make_requests(line, [("a", 1.0), ("b", 1.0)])


def test_make_requests_rejects_odd_count(line):
    with pytest.raises(OddRequestSet):
        make_requests(line, [("a", 0.0), ("b", 1.0), ("a", 2.0)])
    reqs = make_requests(line, [("a", 0.0), ("b", 1.0), ("a", 2.0)], require_even=False)
    assert len(reqs) == 3


def test_pair_cost_hand_values(line):
    r1 = Request(id=0, point="a", t=1.0)
    r2 = Request(id=1, point="b", t=2.0)
    d, w = pair_cost(line, r1, r2, t=3.0)
    assert d == 5.0
    assert w == (3.0 - 1.0) + (3.0 - 2.0)


def test_pair_cost_rejects_early_match(line):
    r1 = Request(id=0, point="a", t=1.0)
    r2 = Request(id=1, point="b", t=2.0)
    with pytest.raises(MatchBeforeArrival):
        pair_cost(line, r1, r2, t=1.5)


def test_total_cost_pairings_only(line):
    reqs = make_requests(line, [("a", 1.0), ("b", 2.0)])
    sched = Schedule(pairings=((0, 1, 3.0),))
    cost = total_cost(line, reqs, sched)
    assert cost.space == 5.0
    assert cost.time == 3.0
    assert cost.penalty == 0.0
    assert cost.total == 8.0


def test_total_cost_with_clears(line):
    reqs = make_requests(line, [("a", 1.0), ("b", 2.0)])
    sched = Schedule(pairings=(), clears=((0, 4.0), (1, 2.0)))
    cost = total_cost(line, reqs, sched, penalty_p=10.0)
    assert cost.penalty == 20.0
    assert cost.time == 3.0  # waits of 3.0 and 0.0
    assert cost.space == 0.0


def test_total_cost_clears_need_penalty(line):
    reqs = make_requests(line, [("a", 1.0), ("b", 2.0)])
    sched = Schedule(pairings=(), clears=((0, 4.0), (1, 5.0)))
    with pytest.raises(OutOfDomain):
        total_cost(line, reqs, sched)


def test_total_cost_double_service(line):
    reqs = make_requests(line, [("a", 1.0), ("b", 2.0)])
    sched = Schedule(pairings=((0, 0, 3.0),))
    with pytest.raises(DoubleService):
        total_cost(line, reqs, sched)


def test_total_cost_uncovered_request(line):
    reqs = make_requests(line, [("a", 1.0), ("b", 2.0)])
    with pytest.raises(UncoveredRequest):
        total_cost(line, reqs, Schedule(pairings=()))
    with pytest.raises(UncoveredRequest):
        total_cost(line, reqs, Schedule(pairings=((0, 7, 3.0),)))


def test_total_cost_clear_before_arrival(line):
    reqs = make_requests(line, [("a", 1.0), ("b", 2.0)])
    sched = Schedule(pairings=(), clears=((0, 0.5), (1, 3.0)))
    with pytest.raises(MatchBeforeArrival):
        total_cost(line, reqs, sched, penalty_p=1.0)


def test_requests_round_trip(tmp_path, line):
    reqs = make_requests(line, [("a", 1.0), ("b", 2.5)])
    path = str(tmp_path / "reqs.json")
    dump_requests(reqs, path)
    back = load_requests(line, path)
    assert back == reqs


def test_load_requests_bad_shape(tmp_path, line):
    path = tmp_path / "reqs.json"
    path.write_text('{"point": "a"}')
    with pytest.raises(InstanceLoadError):
        load_requests(line, str(path))


def test_dump_schedule_rows(tmp_path):
    sched = Schedule(pairings=((0, 1, 2.5),), clears=((2, 4.0),))
    path = tmp_path / "sched.csv"
    dump_schedule(sched, str(path))
    rows = path.read_text().strip().splitlines()
    assert rows == ["0,1,2.5", "2,4.0"]
