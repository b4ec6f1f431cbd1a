"""REINFORCE meta-controller.

Two independent actors (one for widening, one for deepening) map the
search state to a categorical distribution over transformation counts:
output neuron i is the probability of taking i transformations, neuron 0
of taking none. Updates follow plain policy-gradient ascent

    theta <- theta + alpha * R * grad ln pi(a | s, theta)

accumulated over all candidates of a time step, where R is the normalized
reward plus an entropy bonus.
"""
from dataclasses import dataclass

import numpy as np

from .errors import EmptyBatchError
from .layers import Dense, SoftmaxOutput
from .network import Network

STATE_DIM = 4
HIDDEN = 128
ACTOR_LR = 0.001
ENTROPY_COEF = 0.01
# keep MLP inputs O(1): layer counts and class counts are divided by 10
STATE_SCALE = np.array([0.1, 0.1, 1.0, 0.1])


@dataclass(frozen=True)
class SearchState:
    a_conv: int
    a_fc: int
    v_diff: float
    n_new: int

    def vector(self, dtype=np.float32):
        raw = np.array([self.a_conv, self.a_fc, self.v_diff, self.n_new])
        return (raw * STATE_SCALE).astype(dtype)


@dataclass
class Episode:
    state: SearchState
    wider_action: int
    deeper_action: int
    raw_reward: float
    normalized_reward: float = 0.0


class Actor:
    """Policy MLP for one transformation type ('wider' or 'deeper')."""

    def __init__(self, role, max_actions, seed=0, learning_rate=ACTOR_LR,
                 dtype=np.float32):
        if role not in ("wider", "deeper"):
            raise ValueError(f"unknown actor role {role!r}")
        self.role = role
        self.max_actions = int(max_actions)
        self.learning_rate = learning_rate
        self.net = Network([
            Dense(STATE_DIM, HIDDEN, "relu", dtype),
            Dense(HIDDEN, HIDDEN, "relu", dtype),
            SoftmaxOutput(HIDDEN, self.max_actions + 1, dtype),
        ])
        rng = np.random.default_rng(seed)
        for layer in self.net.layers:
            layer.init_params(rng)

    def probs(self, state):
        """Action distribution for one state."""
        vec = state.vector(self.net.params()[0].dtype)
        return self.net.forward(vec[None, :])[0]

    def action_of(self, episode):
        return (episode.wider_action if self.role == "wider"
                else episode.deeper_action)

    def log_prob_grads(self, state, action):
        """grad_theta ln pi(action | state), aligned with net.params()."""
        p = self.probs(state)
        dlogits = -p.copy()
        dlogits[action] += 1.0
        self.net.backward(dlogits[None, :].astype(p.dtype))
        return [g.copy() for g in self.net.grads()]

    def clone(self):
        c = Actor.__new__(Actor)
        c.role = self.role
        c.max_actions = self.max_actions
        c.learning_rate = self.learning_rate
        c.net = self.net.clone()
        return c


def encode_state(desc, v_diff, n_new):
    """Search state from a descriptor: layer counts only, never widths."""
    return SearchState(desc.a_conv, desc.a_fc, float(v_diff), int(n_new))


def sample_action(actor, state, seed):
    """Transformation count drawn from the actor's categorical output."""
    p = actor.probs(state).astype(np.float64)
    p /= p.sum()
    rng = np.random.default_rng(seed)
    return int(rng.choice(actor.max_actions + 1, p=p))


def entropy(actor, state):
    """Shannon entropy of the actor's distribution at `state`, in nats."""
    p = actor.probs(state).astype(np.float64)
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def normalize_rewards(raw):
    """Scale rewards into [-1, 1] by the max absolute value; zeros stay."""
    raw = list(raw)
    peak = max((abs(r) for r in raw), default=0.0)
    if peak == 0.0:
        return [0.0 for _ in raw]
    return [r / peak for r in raw]


def reinforce_update(actor, episodes, entropy_coef=ENTROPY_COEF):
    """One policy-gradient ascent step over all episodes of a time step.

    The effective return per episode is its normalized reward plus
    entropy_coef times the policy entropy at its state. Mutates and
    returns the actor.
    """
    if not episodes:
        raise EmptyBatchError("need at least one episode to update")
    params = actor.net.params()
    total = [np.zeros_like(p) for p in params]
    for ep in episodes:
        action = actor.action_of(ep)
        ret = ep.normalized_reward + entropy_coef * entropy(actor, ep.state)
        grads = actor.log_prob_grads(ep.state, action)
        for t, g in zip(total, grads):
            t += ret * g
    for p, t in zip(params, total):
        p += (actor.learning_rate * t).astype(p.dtype, copy=False)
    return actor
