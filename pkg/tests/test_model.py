import pytest
from hypothesis import given, strategies as st

from dpasim.model import (
    ChannelState,
    ConfigError,
    PowerAllocation,
    SlotOutcome,
    SystemConfig,
    advance_queue,
    head_deadline,
    selectable_powers,
    surrogate_cost,
    validate_allocation,
)

B, G = ChannelState.BAD, ChannelState.GOOD


def cfg(**kw):
    kw.setdefault("n_users", 2)
    return SystemConfig(**kw)


class TestSystemConfig:
    def test_scalars_broadcast(self):
        c = cfg(n_users=3, deadline=4)
        assert c.deadline == (4, 4, 4)
        assert c.power_budget == (0.6, 0.6, 0.6)

    def test_reference_defaults(self):
        c = cfg()
        assert (c.p_low, c.p_high, c.penalty_weight) == (1.0, 2.0, 60.0)
        assert c.bad_channel_prob == (0.6, 0.6)
        assert c.deadline == (5, 5)

    @pytest.mark.parametrize("kw, field", [
        (dict(p_low=2, p_high=2), "p_low"),
        (dict(p_low=0), "p_low"),
        (dict(power_budget=3), "power_budget"),
        (dict(power_budget=-0.1), "power_budget"),
        (dict(deadline=0), "deadline"),
        (dict(arrival_prob=1.5), "arrival_prob"),
        (dict(bad_channel_prob=[0.5, -1]), "bad_channel_prob"),
        (dict(penalty_weight=0), "penalty_weight"),
        (dict(n_users=0), "n_users"),
        (dict(arrival_prob=[0.1, 0.2, 0.3]), "arrival_prob"),
    ])
    def test_invalid(self, kw, field):
        with pytest.raises(ConfigError) as exc:
            cfg(**kw)
        assert exc.value.field == field

    def test_budget_bounds_inclusive(self):
        assert cfg(power_budget=[0.0, 2.0]).power_budget == (0.0, 2.0)


class TestSelectablePowers:
    def test_bad(self):
        assert selectable_powers(B, cfg(p_low=1, p_high=2)) == {0, 2}

    def test_good(self):
        assert selectable_powers(G, cfg(p_low=1, p_high=2)) == {0, 1}

    def test_other_constants(self):
        assert selectable_powers(G, cfg(p_low=3, p_high=7)) == {0, 3}


class TestValidateAllocation:
    def test_idle_always_ok(self):
        c = cfg()
        for chans in [(B, B), (B, G), (G, G)]:
            assert validate_allocation(PowerAllocation.idle(2), chans, c) is None

    def test_high_on_bad_ok(self):
        assert validate_allocation(PowerAllocation((2, 0)), (B, G), cfg()) is None

    def test_multiple_transmitters(self):
        msg = validate_allocation(PowerAllocation((1, 1)), (G, G), cfg())
        assert msg is not None and "multiple transmitters" in msg

    @pytest.mark.parametrize("powers, chans", [((1, 0), (B, G)), ((0, 2), (B, G)), ((0, 1.5), (G, G))])
    def test_wrong_level(self, powers, chans):
        msg = validate_allocation(PowerAllocation(powers), chans, cfg())
        assert msg is not None and "wrong level" in msg

    def test_serving_indicator(self):
        a = PowerAllocation((0, 2))
        assert a.serving == (0, 1)
        assert a.transmitter == 1
        assert PowerAllocation.idle(3).transmitter is None


class TestSurrogateCost:
    def test_drop_is_one(self):
        assert surrogate_cost(5, 1, False) == 1.0

    @pytest.mark.parametrize("d", [1, 2, 3, 4, 5])
    def test_served_is_zero(self, d):
        assert surrogate_cost(5, d, True) == 0.0

    def test_fresh_packet(self):
        assert surrogate_cost(5, 5, False) == pytest.approx(0.2, abs=0)

    def test_empty_queue(self):
        assert surrogate_cost(5, None, False) == 0.0

    @given(st.integers(1, 50).flatmap(lambda m: st.tuples(st.just(m), st.integers(1, m))),
           st.booleans())
    def test_range_and_extremes(self, md, served):
        m, d = md
        f = surrogate_cost(m, d, served)
        assert 0.0 <= f <= 1.0
        assert (f == 1.0) == (d == 1 and not served)
        assert (f == 0.0) == served


class TestAdvanceQueue:
    def test_service_removes_head(self):
        assert advance_queue((1,), True, False, 5) == ((), False)

    def test_drop_tick_arrival(self):
        assert advance_queue((1, 3), False, True, 5) == ((2, 5), True)

    def test_arrival_into_empty(self):
        assert advance_queue((), False, True, 5) == ((5,), False)

    def test_tick_only(self):
        assert advance_queue((2, 4), False, False, 5) == ((1, 3), False)

    def test_serving_empty_is_error(self):
        with pytest.raises(ValueError):
            advance_queue((), True, False, 5)

    def test_head_deadline(self):
        assert head_deadline(()) is None
        assert head_deadline((1, 3)) == 1
        assert head_deadline((4,)) == 4


@st.composite
def queue_and_deadline(draw):
    m = draw(st.integers(1, 8))
    q = tuple(sorted(draw(st.sets(st.integers(1, m), max_size=m))))
    return q, m


@given(queue_and_deadline(), st.booleans(), st.booleans())
def test_advance_queue_properties(qm, served, arrival):
    q, m = qm
    served = served and bool(q)
    new, dropped = advance_queue(q, served, arrival, m)
    assert all(1 <= d <= m for d in new)
    assert all(a < b for a, b in zip(new, new[1:]))
    mu = 1 if served else 0
    assert len(new) == max(len(q) - mu, 0) + arrival - dropped
    assert len(new) - len(q) in (-1, 0, 1)
    assert not (served and dropped)
    assert dropped == (not served and bool(q) and q[0] == 1)


def test_slot_outcome_rejects_served_and_dropped():
    with pytest.raises(ValueError):
        SlotOutcome(True, True, False, 0.0)
