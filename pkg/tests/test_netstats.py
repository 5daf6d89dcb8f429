import math

import pytest
from hypothesis import given, settings, strategies as st

from voutl.netstats import (AckRecord, AdmissionOrderError, NetStats, NetStatsConfig,
                            loss_prob)


def fresh(**kw):
    return NetStats(NetStatsConfig(**kw))


def test_first_admission_uses_sentinel_ist():
    s = fresh()
    op = s.record_admission(0, 0.0)
    assert op.ist_at_send == s.config.ist_sentinel_default
    assert op.rto_deadline == 1000.0
    s2 = fresh()
    s2.delay_samples.extend([10.0] * 20)
    assert s2.record_admission(0, 0.0).ist_at_send == pytest.approx(10 * 10.0)


def test_ist_between_admissions():
    s = fresh()
    s.record_admission(0, 0.0)
    assert s.record_admission(3, 30.0).ist_at_send == 30.0


def test_admission_order_enforced():
    s = fresh()
    s.record_admission(4, 40.0)
    with pytest.raises(AdmissionOrderError):
        s.record_admission(4, 50.0)
    with pytest.raises(AdmissionOrderError):
        s.record_admission(2, 50.0)


def test_op_list_is_not_truncated():
    s = fresh()
    for g in range(6):
        s.record_admission(g, 10.0 * g)
    assert len(s.ops) == 6


def test_ack_delay_sample_and_removal():
    s = fresh()
    for g in (10, 11, 12, 14):
        s.record_admission(g, 10.0 * g)
    removed = s.process_ack(AckRecord(12, 15, 170.0), 170.0)
    assert [op.gen_step for op in removed] == [10, 11, 12]
    assert [op.gen_step for op in s.ops] == [14]
    assert list(s.delay_samples) == [30.0]
    assert s.ist_delay_samples[-1] == (10.0, 30.0)
    s2 = fresh()
    s2.record_admission(10, 100.0)
    s2.process_ack(AckRecord(10, 13, 135.0), 135.0)
    assert list(s2.delay_samples) == [30.0]


def test_duplicate_ack_is_noop():
    s = fresh()
    s.record_admission(1, 10.0)
    s.process_ack(AckRecord(1, 2, 25.0), 25.0)
    snapshot = (list(s.delay_samples), s.p_ack, s.srtt, s.rto, len(s.acks))
    assert s.process_ack(AckRecord(1, 2, 30.0), 30.0) == []
    assert (list(s.delay_samples), s.p_ack, s.srtt, s.rto, len(s.acks)) == snapshot


def test_ack_record_validation():
    with pytest.raises(ValueError):
        AckRecord(5, 4, 0.0)


def test_rto_smoothing_and_floor():
    s = fresh()
    s.record_admission(0, 0.0)
    s.process_ack(AckRecord(0, 1, 40.0), 40.0)
    assert s.srtt == 40.0 and s.rttvar == 20.0
    assert s.rto == 200.0  # 40 + 4*20 = 120 -> floor
    s.record_admission(1, 100.0)
    s.process_ack(AckRecord(1, 20, 400.0), 400.0)
    rttvar = 0.75 * 20 + 0.25 * abs(40 - 300)
    srtt = 0.875 * 40 + 0.125 * 300
    assert s.rttvar == pytest.approx(rttvar)
    assert s.srtt == pytest.approx(srtt)
    assert s.rto == pytest.approx(srtt + 4 * rttvar)


def test_timeouts_inclusive_and_selective():
    s = fresh()
    s.record_admission(0, 0.0)
    s.ops[0].rto_deadline = 500.0
    assert s.check_timeouts(499.0) == []
    assert [op.gen_step for op in s.check_timeouts(500.0)] == [0]
    s = fresh()
    for g, deadline in zip((1, 2, 3), (700.0, 400.0, 900.0)):
        s.record_admission(g, 10.0 * g)
        s.ops[-1].rto_deadline = deadline
    assert [op.gen_step for op in s.check_timeouts(700.0)] == [1, 2]
    assert [op.gen_step for op in s.ops] == [3]
    assert s.p_ack == pytest.approx(0.95 ** 2)


def test_p_ack_ignores_implicit_removal_and_late_acks():
    s = fresh()
    for g in (1, 2, 3):
        s.record_admission(g, 10.0 * g)
    s.process_ack(AckRecord(3, 5, 60.0), 60.0)
    # one explicit success on a full average leaves it at 1
    assert s.p_ack == 1.0
    s.record_admission(4, 70.0)
    s.check_timeouts(70.0 + s.rto)
    p = s.p_ack
    s.process_ack(AckRecord(4, 30, 2000.0), 2000.0)
    assert s.p_ack == p
    assert list(s.delay_samples)[-1] == 260.0


@pytest.mark.parametrize("p_ack,p_l", [(1.0, 0.0), (0.25, 0.5), (0.81, 0.1)])
def test_loss_prob(p_ack, p_l):
    s = fresh()
    s.p_ack = p_ack
    assert loss_prob(s) == pytest.approx(p_l)


@given(st.floats(0, 1))
def test_symmetric_loss_identity(p_ack):
    s = fresh()
    s.p_ack = p_ack
    p_l = loss_prob(s)
    assert 1 - p_ack == pytest.approx(p_l + (1 - p_l) * p_l, abs=1e-12)


def test_t_max_quantile_and_buffers():
    s = fresh(delay_capacity=4)
    for g, d in enumerate((10, 20, 30, 40, 50, 60)):
        s.record_admission(g, 100.0 * g)
        s.process_ack(AckRecord(g, g + d // 10, 100.0 * g + 5), 100.0 * g + 5)
    assert list(s.delay_samples) == [30.0, 40.0, 50.0, 60.0]
    assert s.t_max == pytest.approx(58.5)
    assert not s.has_model


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.integers(0, 5)), min_size=1, max_size=40))
def test_op_invariants_hold_under_random_events(events):
    s = fresh()
    gen = 0
    now = 0.0
    for is_ack, lag in events:
        now += 10.0
        if is_ack and s.ops:
            target = s.ops[min(lag, len(s.ops) - 1)].gen_step
            s.process_ack(AckRecord(target, target + lag, now), now)
            assert all(op.gen_step > target for op in s.ops)
        else:
            s.record_admission(gen, now)
            gen += 1
        s.check_timeouts(now)
        gens = [op.gen_step for op in s.ops]
        assert gens == sorted(set(gens))
        assert 0.0 <= s.p_ack <= 1.0
        assert s.rto >= s.config.rto_floor
        assert math.isfinite(s.rto)
