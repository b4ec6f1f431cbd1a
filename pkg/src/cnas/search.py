"""Per-step architecture search and the expansion gate.

Each step samples n candidate expansions, initializes them from the
current task network via morphisms, trains each briefly with early
stopping, and scores it on validation data. Rewards (validation gain over
the current network) update the actors once per step. The gate expands
only when fewer than half the candidates underperform the current network
and their mean beats it.
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .arch import ExpansionAction
from .controller import (Episode, encode_state, normalize_rewards,
                         reinforce_update, sample_action)
from .errors import DivergenceError, EmptyBatchError
from .morphisms import apply_actions
from .training import train, evaluate


@dataclass
class SearchConfig:
    sample_size: int = 20
    epoch_limit: int = 3
    max_wider: int = 3
    max_deeper: int = 3
    noise_scale: float = 5e-3
    widen_factor: float = 1.5
    workers: int = 1

    def __post_init__(self):
        if self.sample_size < 1:
            raise ValueError("sample_size must be >= 1")
        if self.epoch_limit < 1:
            raise ValueError("epoch_limit must be >= 1")
        if self.max_wider < 1 or self.max_deeper < 1:
            raise ValueError("action maxima must be >= 1")


@dataclass
class CandidateResult:
    index: int
    descriptor: object
    action: ExpansionAction
    val_accuracy: float
    seed: int
    network: object = None
    param_count: int = 0
    diverged: bool = False


@dataclass
class SearchOutcome:
    best: CandidateResult
    candidates: list
    episodes: list = field(default_factory=list)

    @property
    def v_sampled(self):
        return [c.val_accuracy for c in self.candidates]


def candidate_seeds(master_seed, index):
    """(action_w, action_d, morph, train) seeds for one candidate."""
    state = np.random.SeedSequence([int(master_seed), index]).generate_state(4)
    return tuple(int(s) for s in state)


def _run_candidate(args):
    (net, desc, action, morph_seed, train_seed, train_cfg, search_cfg,
     train_split, val_split, index) = args
    cand_net, cand_desc = apply_actions(
        net, desc, action, noise_scale=search_cfg.noise_scale,
        seed=morph_seed, widen_factor=search_cfg.widen_factor)
    cfg = replace(train_cfg, max_epochs=search_cfg.epoch_limit,
                  rng_seed=train_seed)
    diverged = False
    try:
        cand_net, val_acc = train(cand_net, train_split, val_split, cfg)
    except DivergenceError as e:
        # keep the pre-divergence snapshot; one bad sample must not kill
        # the whole step
        cand_net = e.best_net
        val_acc = e.best_val_accuracy
        diverged = True
    return CandidateResult(
        index=index, descriptor=cand_desc, action=action,
        val_accuracy=float(val_acc), seed=morph_seed, network=cand_net,
        param_count=cand_net.count_params(), diverged=diverged)


def arch_search(net, desc, train_split, val_split, actors, cfg, train_cfg,
                seed, v_prev, v_diff=0.0, n_new=0, policy="actor",
                trainer=None):
    """Sample, morph, briefly train, and score candidates.

    actors is a (wider_actor, deeper_actor) pair; with policy="uniform"
    the actors are bypassed (and never updated) and actions are drawn
    uniformly, which is what the random-search baselines use. `trainer`
    replaces the per-candidate morph+train step in tests.
    """
    wider_actor, deeper_actor = actors
    state = encode_state(desc, v_diff, n_new)

    actions = []
    seeds = []
    for i in range(cfg.sample_size):
        sw, sd, sm, st = candidate_seeds(seed, i)
        if policy == "actor":
            wider = sample_action(wider_actor, state, sw)
            deeper = sample_action(deeper_actor, state, sd)
        else:
            wider = int(np.random.default_rng(sw).integers(
                0, cfg.max_wider + 1))
            deeper = int(np.random.default_rng(sd).integers(
                0, cfg.max_deeper + 1))
        actions.append(ExpansionAction(wider_count=min(wider, cfg.max_wider),
                                       deeper_count=min(deeper,
                                                        cfg.max_deeper)))
        seeds.append((sm, st))

    if trainer is not None:
        candidates = [trainer(net, desc, actions[i], seeds[i][0],
                              seeds[i][1], i)
                      for i in range(cfg.sample_size)]
    else:
        payloads = [(net, desc, actions[i], seeds[i][0], seeds[i][1],
                     train_cfg, cfg, train_split, val_split, i)
                    for i in range(cfg.sample_size)]
        if cfg.workers > 1:
            with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
                candidates = list(pool.map(_run_candidate, payloads))
        else:
            candidates = [_run_candidate(p) for p in payloads]

    raw = [c.val_accuracy - v_prev for c in candidates]
    normalized = normalize_rewards(raw)
    episodes = [
        Episode(state=state, wider_action=c.action.wider_count,
                deeper_action=c.action.deeper_count, raw_reward=r,
                normalized_reward=nr)
        for c, r, nr in zip(candidates, raw, normalized)
    ]
    if policy == "actor":
        reinforce_update(wider_actor, episodes)
        reinforce_update(deeper_actor, episodes)

    best = min(candidates,
               key=lambda c: (-c.val_accuracy, c.param_count, c.index))
    return SearchOutcome(best=best, candidates=candidates, episodes=episodes)


def should_expand(v_prev, v_sampled):
    """The expansion gate: fewer than half the candidates below the
    current network, and their mean above it. Strict inequalities; an
    even split keeps the current architecture."""
    if len(v_sampled) == 0:
        raise EmptyBatchError("gate needs at least one sampled accuracy")
    n_negative = sum(1 for v in v_sampled if v < v_prev)
    return (n_negative < len(v_sampled) / 2
            and float(np.mean(v_sampled)) > v_prev)


def heuristic_func(beta_prev, beta_star, v_prev, v_sampled):
    """Pick the next task network: (network, expanded_flag)."""
    if should_expand(v_prev, v_sampled):
        return beta_star, True
    return beta_prev, False
