import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from voutl.augmentation import (AckedHistory, AugmentedHistory, _future_reception,
                                _past_reception, augment_estimate, delay_to_steps,
                                noise_accumulation, predict_trajectories, relevance_dyn,
                                relevance_inst)
from voutl.belief import OpState
from voutl.control import ControllerState, LoopModel, step_plant
from voutl.netstats import NetStats

# replay of (0, 0, 1.0) with the closed-form gain 0.7935281200499574
X1, U1, X2 = 0.4064718799500425, -0.3225468667499292, 0.1652193891901218


@pytest.fixture
def model():
    return LoopModel.scalar()


def stats_with(*delays):
    s = NetStats()
    s.delay_samples.extend(float(d) for d in delays)
    return s


def test_delay_to_steps():
    assert delay_to_steps(0.0, 10.0) == 0
    assert delay_to_steps(10.0, 10.0) == 1
    assert delay_to_steps(10.0000000001, 10.0) == 1
    assert delay_to_steps(11.0, 10.0) == 2


def test_augment_estimate_examples(model):
    x, _ = augment_estimate(4, AugmentedHistory([(4, 4, 0.7)]), model)
    assert x[0] == 0.7
    x, u = augment_estimate(2, AugmentedHistory([(0, 0, 1.0)]), model)
    assert x[0] == pytest.approx(X2, abs=1e-12)
    assert u[1, 0] == pytest.approx(U1, abs=1e-12)
    x1, _ = augment_estimate(1, AugmentedHistory([(0, 0, 1.0)]), model)
    assert x1[0] == pytest.approx(X1, abs=1e-12)
    x, u = augment_estimate(3, AugmentedHistory(), model)
    assert x[0] == 0.0 and not u.any()
    with pytest.raises(ValueError):
        AugmentedHistory([(3, 2, 0.0)])


def test_acked_history_incremental_matches_full_replay(model):
    rng = np.random.default_rng(0)
    acked = AckedHistory(model, capacity=4)
    full = AugmentedHistory()
    for k in range(60):
        acked.record_sample(k, rng.normal())
        acked.advance(k)
        if k >= 3 and rng.random() < 0.4:
            gen = int(rng.integers(k - 3, k))
            recv = int(rng.integers(gen, k + 1))
            acked.add_ack(gen, recv)
            full.add(gen, recv, acked.sample(gen))
        ref, inputs = augment_estimate(k, full, model)
        assert acked.estimate(k)[0] == pytest.approx(ref[0], abs=1e-12)
        assert acked.input(k)[0] == pytest.approx(inputs[k, 0], abs=1e-12)
    with pytest.raises(KeyError):
        acked.add_ack(500, 501)
    with pytest.raises(ValueError):
        acked.hypothetical_estimate(10, 50, 61)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_hypothetical_matches_full_replay(seed):
    model = LoopModel.scalar()
    rng = np.random.default_rng(seed)
    acked = AckedHistory(model)
    n = 30
    for k in range(n):
        acked.record_sample(k, rng.normal())
    for _ in range(5):
        gen = int(rng.integers(0, n - 2))
        acked.add_ack(gen, int(rng.integers(gen, n - 1)))
    acked.advance(n - 1)
    gen = int(rng.integers(0, n - 1))
    recv = int(rng.integers(gen, n))
    k = int(rng.integers(recv, n))
    hist = acked.as_history()
    hist.add(gen, recv, acked.sample(gen))
    ref, _ = augment_estimate(k, hist, model)
    assert acked.hypothetical_estimate(gen, recv, k)[0] == pytest.approx(ref[0], abs=1e-10)


def test_replay_matches_live_controller(model):
    """With the controller's real reception record the sensor replica is exact."""
    rng = np.random.default_rng(7)
    ctrl = ControllerState(model)
    acked = AckedHistory(model)
    x = np.array([0.0])
    pending = []
    for k in range(400):
        acked.record_sample(k, x)
        if rng.random() < 0.5:
            pending.append((k + int(rng.integers(0, 4)), k, x.copy()))
        arrivals = [(g, xv) for r, g, xv in pending if r == k]
        pending = [p for p in pending if p[0] != k]
        u = ctrl.tick(k, arrivals)
        for g, _ in arrivals:
            acked.add_ack(g, k)
        acked.advance(k)
        assert acked.estimate(k)[0] == pytest.approx(ctrl.x_hat[0], abs=1e-9)
        x = step_plant(x, u, rng.normal(), model)


def test_reception_estimates():
    s = stats_with(5, 15, 25, 45)
    # 4 steps since generation: samples below 40 ms average 15 ms -> 2 steps
    assert _past_reception(10, 14, s, 10.0) == 12
    assert _future_reception(10, 14, s, 10.0) == 15
    empty = stats_with()
    assert _past_reception(10, 14, empty, 10.0) == 13
    # nothing above: halfway to t_max, never before k+1
    s2 = stats_with(*([10.0] * 20))
    assert _future_reception(10, 14, s2, 10.0) == 15


def _acked_from(model, samples, acks=(), upto=None):
    acked = AckedHistory(model)
    for k, x in enumerate(samples):
        acked.record_sample(k, x)
    for g, r in acks:
        acked.add_ack(g, r)
    acked.advance(len(samples) - 1 if upto is None else upto)
    return acked


def test_relevance_inst_examples(model):
    acked = _acked_from(model, [0.8] * 5)
    s = stats_with()
    assert relevance_inst(4, 0.2, {None: 1.0}, acked, s) == pytest.approx(0.2)
    # WR on the current sample has estimate 0.8: errors 0.2 and 0.6
    belief = {None: 0.5, (4, OpState.WR): 0.5}
    assert relevance_inst(4, 0.2, belief, acked, s) == pytest.approx(0.4)
    assert relevance_inst(4, 0.8, {(4, OpState.WR): 1.0}, acked, s) == 0.0
    # controller saw x0 at 0; one step later the error is the noise w0
    w0 = -0.37
    x0 = 1.0
    acked = _acked_from(model, [x0, 0.0], acks=[(0, 0)])
    x1 = step_plant(x0, acked.input(0), w0, model)
    assert relevance_inst(1, x1, {None: 1.0}, acked, s) == pytest.approx(abs(w0))


def test_noise_accumulation(model):
    w = np.array([0.5, -1.0, 2.0])
    acc = noise_accumulation(model.A, w, 3, 1)
    assert acc[:, 0] == pytest.approx([0.0, 0.5, 0.5 * 1.2 - 1.0, (0.6 - 1.0) * 1.2 + 2.0])
    assert not noise_accumulation(model.A, None, 3, 1).any()


def brute_force_dyn(k, x_k, belief, acked, stats, t_pr, delay_ms, noise=None):
    """Two straight replays per group; sum of per-step error reductions."""
    model = acked.model
    d = delay_to_steps(delay_ms, model.T)
    total = 0.0
    for key, p in belief.items():
        base = acked.as_history()
        if key is not None:
            gen, state = key
            if state is OpState.R:
                recv = _past_reception(gen, k, stats, model.T)
            else:
                recv = _future_reception(gen, k, stats, model.T)
            base.add(gen, recv, acked.sample(gen))
        with_new = AugmentedHistory(list(base.entries))
        with_new.add(k, k + d, x_k)
        off = predict_trajectories(k, x_k, base, model, t_pr, noise)
        on = predict_trajectories(k, x_k, with_new, model, t_pr, noise)
        total += p * float((off.gap - on.gap).sum())
    return total


def test_relevance_dyn_single_node_example(model):
    # nu=0 delivered at 0, k=3 with the state drifted by noise, one step delay
    acked = _acked_from(model, [1.0, 0.0, 0.0, 0.0], acks=[(0, 0)])
    x3 = acked.estimate(3) + 0.9
    s = stats_with()
    got = relevance_dyn(3, x3, {None: 1.0}, acked, s, 3, 10.0)
    assert got == pytest.approx(brute_force_dyn(3, x3, {None: 1.0}, acked, s, 3, 10.0), abs=1e-12)
    assert got > 0


def test_relevance_dyn_trivial_cases(model):
    acked = _acked_from(model, [0.5] * 5, acks=[(4, 4)])
    s = stats_with()
    assert relevance_dyn(4, acked.estimate(4), {None: 1.0}, acked, s, 10, 20.0) == 0.0
    assert relevance_dyn(4, 3.0, {None: 1.0}, acked, s, 3, 50.0) == 0.0
    with pytest.raises(ValueError):
        relevance_dyn(4, 3.0, {None: 1.0}, acked, s, 0, 10.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.booleans())
def test_relevance_dyn_matches_brute_force(seed, with_noise):
    model = LoopModel.scalar()
    rng = np.random.default_rng(seed)
    k = 20
    acked = _acked_from(model, rng.normal(size=k + 1), acks=[(5, 7), (12, 15)])
    s = stats_with(*rng.uniform(5, 60, size=12))
    t_pr = int(rng.integers(1, 12))
    belief = {None: 0.2, (17, OpState.R): 0.3, (18, OpState.WR): 0.1, (19, OpState.WR): 0.4}
    noise = rng.normal(size=(t_pr, 1)) if with_noise else None
    delay = float(rng.uniform(0, 120))
    x_k = rng.normal(size=1)
    got = relevance_dyn(k, x_k, belief, acked, s, t_pr, delay, noise)
    ref = brute_force_dyn(k, x_k, belief, acked, s, t_pr, delay, noise)
    assert got == pytest.approx(ref, rel=1e-9, abs=1e-9)
    if noise is None and delay_to_steps(delay, model.T) <= t_pr:
        assert got >= -1e-12


def test_relevance_dyn_nonnegative_in_expectation(model):
    rng = np.random.default_rng(11)
    acked = _acked_from(model, rng.normal(size=21), acks=[(10, 12)])
    s = stats_with(*rng.uniform(5, 40, size=10))
    vals = []
    for _ in range(1000):
        x_k = rng.normal(size=1)
        vals.append(relevance_dyn(20, x_k, {None: 1.0}, acked, s, 10, 15.0, rng.normal(size=(10, 1))))
    assert np.mean(vals) > 0


def test_trajectory_prediction_lengths(model):
    tp = predict_trajectories(2, 1.0, AugmentedHistory([(0, 0, 1.0)]), model, 4)
    assert len(tp.gap) == 5
    assert tp.augmented_estimates[0, 0] == pytest.approx(X2, abs=1e-12)
