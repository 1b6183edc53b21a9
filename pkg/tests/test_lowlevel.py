import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from fd import autograd, central_difference, relative_error
from hierskill import craftworld as cw
from hierskill.craftworld import Action
from hierskill.goalspace import default_catalog
from hierskill.lowlevel import (
    GREEDY,
    LLConfig,
    LLSegment,
    PolicyBank,
    ReplayBuffer,
    awr_loss,
    awr_weights,
    discounted_returns,
)

CAT = default_catalog()
WOOD = CAT["collect wood"]
TABLE = CAT["place table"]
TREE = CAT["go to tree"]


def small_bank(**kw):
    return PolicyBank(LLConfig(conv_channels=(4, 8, 8), fc_sizes=(32, 16), **kw), seed=0)


def obs0(seed=0):
    return cw.encode_obs(cw.generate_world(seed, 9))


# -- acting -------------------------------------------------------------------


@pytest.mark.parametrize("action", list(Action))
def test_elementary_skills_pass_through(action):
    bank = small_bank()
    assert bank.act(obs0(), int(action)) == int(action)
    assert bank.action_probs(obs0(), int(action))[int(action)] == 1.0
    assert not bank.nets


def test_unknown_skill_is_a_lookup_error():
    with pytest.raises(KeyError):
        small_bank().act(obs0(), WOOD.id)


def test_untrained_policy_is_near_uniform():
    bank = small_bank()
    bank.policy(WOOD.id)
    for seed in range(5):
        p = bank.action_probs(obs0(seed), WOOD.id)
        assert abs(p.sum() - 1) < 1e-6
        assert np.abs(p - 1 / cw.N_ACTIONS).max() < 0.01


def test_greedy_is_deterministic():
    bank = small_bank()
    bank.policy(WOOD.id)
    o = obs0(3)
    rngs = [np.random.default_rng(i) for i in range(5)]
    assert len({bank.act(o, WOOD.id, GREEDY, r) for r in rngs}) == 1


def test_critic_is_bounded():
    bank = small_bank()
    net = bank.policy(WOOD.id)
    with torch.no_grad():
        for p in net.parameters():
            p.mul_(50)
        _, v = net(torch.randn(16, *next(net.stem.parameters()).shape[1:2], 9, 9))
    assert ((v >= 0) & (v <= 1)).all()


# -- returns and weights --------------------------------------------------------


def test_one_step_success_return_is_one():
    g = discounted_returns(np.array([1.0]), np.array([True]), np.array([True]), np.zeros(1), 0.95)
    assert g.tolist() == [1.0]


def test_success_three_steps_later():
    g = discounted_returns(np.array([0.0, 0.0, 1.0]), np.array([False, False, True]),
                           np.array([False, False, True]), np.zeros(3), 0.95)
    assert g == pytest.approx([0.95**2, 0.95, 1.0], abs=1e-12)


def test_timeout_bootstraps_from_critic():
    g = discounted_returns(np.array([0.0, 0.0]), np.array([False, True]), np.array([False, False]),
                           np.array([0.0, 0.6]), 0.95)
    assert g[-1] == pytest.approx(0.95 * 0.6, abs=1e-12)
    assert g[0] == pytest.approx(0.95**2 * 0.6, abs=1e-12)


def test_returns_do_not_leak_across_trajectories():
    g = discounted_returns(np.array([0.0, 1.0, 0.0]), np.array([False, True, True]),
                           np.array([False, True, False]), np.zeros(3), 0.95)
    assert g == pytest.approx([0.95, 1.0, 0.0])


# returns and critic values both lie in [0, 1], so advantages lie in [-1, 1]
@given(st.lists(st.floats(-1, 1), min_size=1, max_size=40), st.floats(0.05, 5), st.floats(1, 50))
def test_awr_weights_positive_and_bounded(adv, beta, wmax):
    w = awr_weights(torch.tensor(adv, dtype=torch.float64), beta, wmax)
    assert (w > 0).all() and (w <= wmax).all()


def test_zero_advantage_reduces_to_behaviour_cloning():
    torch.manual_seed(0)
    logits = torch.randn(8, cw.N_ACTIONS, dtype=torch.float64)
    values = torch.rand(8, dtype=torch.float64)
    actions = torch.randint(cw.N_ACTIONS, (8,))
    loss, stats = awr_loss(logits, values, actions, values.clone(), 1.0, 20.0)
    nll = torch.nn.functional.cross_entropy(logits, actions)
    assert stats["mean_weight"] == pytest.approx(1.0)
    assert loss.item() == pytest.approx(nll.item(), abs=1e-12)


def test_awr_gradients_match_finite_differences():
    torch.manual_seed(1)
    x = torch.randn(6, 4, dtype=torch.float64)
    critic = torch.nn.Linear(4, 1).double()  # the 5-parameter probe
    actor = torch.nn.Linear(4, cw.N_ACTIONS).double()
    actions = torch.randint(cw.N_ACTIONS, (6,))
    returns = torch.rand(6, dtype=torch.float64)

    def loss():
        v = torch.sigmoid(critic(x)).squeeze(-1)
        return awr_loss(actor(x), v, actions, returns, 1.0, 20.0)[0]

    def critic_loss():
        return torch.nn.functional.mse_loss(torch.sigmoid(critic(x)).squeeze(-1), returns)

    assert sum(p.numel() for p in critic.parameters()) == 5
    # the advantage weights are detached, so the critic only sees its regression term
    cp = list(critic.parameters())
    for a, n in zip(autograd(loss, cp), central_difference(critic_loss, cp)):
        assert relative_error(a, n) < 1e-4
    ap = list(actor.parameters())
    for a, n in zip(autograd(loss, ap), central_difference(loss, ap)):
        assert relative_error(a, n) < 1e-4


# -- buffers ----------------------------------------------------------------------


def test_fifo_eviction():
    buf = ReplayBuffer(5)
    o = np.zeros((4, cw.OBS_LEN), np.uint8)
    buf.add_trajectory(o[:3], [1, 2, 3], [0, 0, 1], o[0], True)
    buf.add_trajectory(o[:4], [4, 5, 6, 7], [0, 0, 0, 0], o[0], False)
    assert len(buf) == 5 and buf.total == 7
    order = buf.chronological()
    assert buf.action[order].tolist() == [3, 4, 5, 6, 7]
    assert buf.timeout[order].tolist() == [False, False, False, False, True]


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(1, 9), min_size=1, max_size=12), st.integers(1, 30))
def test_buffer_never_exceeds_capacity(lengths, cap):
    buf = ReplayBuffer(cap)
    o = np.zeros((9, cw.OBS_LEN), np.uint8)
    written = []
    for n in lengths:
        acts = list(range(len(written), len(written) + n))
        buf.add_trajectory(o[:n], acts, [0.0] * n, o[0], False)
        written += acts
    assert len(buf) == min(cap, len(written))
    assert buf.action[buf.chronological()].tolist() == written[-cap:]


def test_buffer_state_round_trip():
    buf = ReplayBuffer(7)
    o = np.arange(3 * cw.OBS_LEN, dtype=np.uint8).reshape(3, -1)
    buf.add_trajectory(o, [1, 2, 3], [0, 0, 1], o[0], True)
    again = ReplayBuffer.from_state(buf.state_dict())
    for k in ReplayBuffer.ARRAYS:
        assert np.array_equal(getattr(buf, k), getattr(again, k))
    assert (again.head, again.size, again.new, again.total) == (buf.head, buf.size, buf.new, buf.total)


# -- relabelling ---------------------------------------------------------------------


def play(state, skill, actions, goal):
    seg = LLSegment(skill.id, skill.is_elementary)
    for a in actions:
        nxt, fired = cw.step(state, a)
        seg.obs.append(cw.encode_obs(state))
        seg.actions.append(int(a))
        seg.skill_rewards.append(float(skill.fired(state, a, nxt, fired)))
        seg.goal_rewards.append(float(goal.fired(state, a, nxt, fired)))
        state = nxt
    seg.final_obs = cw.encode_obs(state)
    return seg, state


def wood_episode():
    grid = np.full((9, 9), cw.TileKind.GRASS, dtype=np.uint8)
    grid[4, 6] = cw.TileKind.TREE
    s0 = cw.WorldState(grid, (4, 4), cw.Facing.UP, (0,) * 6)
    a, s = play(s0, WOOD, [Action.MOVE_RIGHT, Action.CHOP_TREE], TABLE)
    b, s = play(s, CAT["chop tree"], [Action.CHOP_TREE], TABLE)
    c, s = play(s, CAT["move left"], [Action.MOVE_LEFT], TABLE)
    d, s = play(s, CAT["build table"], [Action.PLACE_TABLE], TABLE)
    return s0, [a, b, c, d]


def test_segment_stored_under_skill_and_goal():
    s0, segs = wood_episode()
    bank = small_bank()
    n = bank.relabel_and_store(segs, TABLE.id)
    assert n == 5
    wood = bank.buffers[WOOD.id]
    assert wood.reward[:2].tolist() == [0.0, 1.0] and wood.done[1]
    table = bank.buffers[TABLE.id]
    assert table.reward[:5].tolist() == [0, 0, 0, 0, 1] and table.done[4]
    # elementary segments are not stored on their own
    assert set(bank.buffers) == {WOOD.id, TABLE.id}


def test_compiled_trajectory_replays_exactly():
    s0, segs = wood_episode()
    bank = small_bank()
    bank.relabel_and_store(segs, TABLE.id)
    buf = bank.buffers[TABLE.id]
    s = s0
    for i in buf.chronological():
        assert np.array_equal(buf.obs[i], cw.encode_obs(s))
        nxt, fired = cw.step(s, int(buf.action[i]))
        assert buf.reward[i] == float(TABLE.fired(s, int(buf.action[i]), nxt, fired))
        assert np.array_equal(buf.next_obs[i], cw.encode_obs(nxt))
        s = nxt


def test_failed_attempt_is_stored_as_timeout():
    s0, segs = wood_episode()
    bank = small_bank()
    bank.relabel_and_store(segs[:2], TABLE.id)
    buf = bank.buffers[TABLE.id]
    assert not buf.reward[: buf.size].any()
    assert buf.timeout[buf.size - 1] and not buf.done.any()


def test_failed_attempt_skipped_when_configured():
    s0, segs = wood_episode()
    bank = small_bank(compile_failures=False)
    assert bank.relabel_and_store(segs[:2], TABLE.id) == 0
    assert TABLE.id not in bank.buffers


# -- training -------------------------------------------------------------------------


def test_update_is_a_noop_until_enough_new_transitions():
    s0, segs = wood_episode()
    bank = small_bank(update_every=6)
    bank.relabel_and_store(segs, TABLE.id)
    assert bank.due() == [] and bank.awr_update(TABLE.id) is None
    bank.relabel_and_store(segs, TABLE.id)
    assert bank.due() == [TABLE.id]
    stats = bank.awr_update(TABLE.id)
    assert stats["updates"] == 1 and bank.buffers[TABLE.id].new == 0


def test_behaviour_cloning_limit():
    """Uniform weights on one deterministic trajectory: greedy acting replays it."""
    state = cw.generate_world(4, 9)
    rng = np.random.default_rng(0)
    obs, actions, seen = [], [], {cw.encode_obs(state).tobytes()}
    while len(actions) < 12:
        a = int(rng.integers(cw.N_ACTIONS))
        o = cw.encode_obs(state)
        nxt, _ = cw.step(state, a)
        key = cw.encode_obs(nxt).tobytes()
        if key in seen:
            continue
        seen.add(key)
        obs.append(o)
        actions.append(a)
        state = nxt
    bank = PolicyBank(LLConfig(conv_channels=(4, 8, 8), fc_sizes=(32, 16), beta=1e9, lr=1e-2, grad_steps=1000,
                               batch_size=12, update_every=1), seed=0)
    bank.buffer(WOOD.id).add_trajectory(obs, actions, [0.0] * 12, cw.encode_obs(state), False)
    bank.awr_update(WOOD.id)
    s = cw.generate_world(4, 9)
    for a in actions:
        assert bank.act(cw.encode_obs(s), WOOD.id, GREEDY) == a
        s, _ = cw.step(s, a)


def test_bank_state_round_trip():
    s0, segs = wood_episode()
    bank = small_bank(update_every=1, grad_steps=2)
    bank.relabel_and_store(segs, TABLE.id)
    bank.awr_update(TABLE.id)
    other = small_bank(update_every=1, grad_steps=2)
    other.load_state_dict(bank.state_dict())
    o = obs0()
    assert np.array_equal(bank.action_probs(o, TABLE.id), other.action_probs(o, TABLE.id))
    bank.relabel_and_store(segs, TABLE.id)
    other.relabel_and_store(segs, TABLE.id)
    a, b = bank.awr_update(TABLE.id), other.awr_update(TABLE.id)
    assert a == b
