"""Outer loop over the class-incremental stream.

Builds the stream for a scenario, runs one learning step per arriving
dataset (aggregate, grow the output layer, train, search, gate, retrain),
and computes the average incremental accuracy over all classes seen.
Catastrophic forgetting is handled purely by rehearsing on the full
aggregated dataset.
"""
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .arch import expand_output, instantiate
from .controller import Actor
from .errors import CoverageError, EmptyDataError
from .search import arch_search, heuristic_func
from .training import evaluate, train

METHODS = ("cnas", "sa", "ras", "ras-hf")


@dataclass
class Scenario:
    kind: str = "kclass"          # kclass | mixed | half
    k: int = 2
    base_classes: int = 2
    k_range: tuple = (1, 19)      # mixed: fresh classes per step
    p_choices: tuple = (0.25, 0.5)  # mixed: partial-class fraction
    half_gap: int = 5             # half: steps between the two halves
    class_order: str = "default"  # default | seeded

    def __post_init__(self):
        if self.kind not in ("kclass", "mixed", "half"):
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if self.kind == "kclass" and self.k < 1:
            raise ValueError("k must be >= 1")
        if self.base_classes < 1:
            raise ValueError("base_classes must be >= 1")


@dataclass
class StreamStep:
    t: int
    train_images: np.ndarray
    train_labels: np.ndarray
    val_images: np.ndarray
    val_labels: np.ndarray
    test_images: np.ndarray
    test_labels: np.ndarray
    new_classes: list                  # first-appearance labels this step
    schedule_note: str = ""

    @property
    def n_unseen(self):
        return len(self.new_classes)


@dataclass
class LearnerState:
    network: object
    descriptor: object
    wider_actor: Actor
    deeper_actor: Actor
    train_x: np.ndarray
    train_y: np.ndarray
    val_x: np.ndarray
    val_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    seen_classes: list
    prev_val_accuracy: float = 0.0


@dataclass
class StepReport:
    t: int
    method: str
    classes_seen: int
    aia: float
    val_accuracy: float
    val_prev_dist: float
    params: int
    expanded: bool
    wider: int
    deeper: int
    wall_s: float
    candidates: list = field(default_factory=list)

    def to_dict(self):
        return {
            "t": self.t, "method": self.method,
            "classes_seen": self.classes_seen, "aia": self.aia,
            "val_accuracy": self.val_accuracy,
            "val_prev_dist": self.val_prev_dist, "params": self.params,
            "expanded": self.expanded, "wider": self.wider,
            "deeper": self.deeper, "wall_s": self.wall_s,
            "candidates": self.candidates,
        }


def average_incremental_accuracy(per_class, classes_seen=None):
    """Mean per-class test accuracy over all classes seen so far."""
    if classes_seen is not None:
        missing = [c for c in classes_seen if c not in per_class]
        if missing:
            raise CoverageError(f"no accuracy for classes {missing}")
        values = [per_class[c] for c in classes_seen]
    else:
        values = list(per_class.values())
    if not values:
        raise CoverageError("per-class accuracy map is empty")
    return float(sum(values)) / len(values)


def step_seed(master_seed, t, stage):
    """Deterministic per-step seed; stage separates uses within a step."""
    ss = np.random.SeedSequence([int(master_seed), int(t), int(stage)])
    return int(ss.generate_state(1)[0])


def make_stream(scenario, dataset, seed):
    """Build (base_step, incremental_steps) for a scenario.

    Classes arrive in label order: the dataset's default order, or a
    seeded shuffle of it when scenario.class_order == "seeded" (apply
    remap_labels first in that case; this function assumes labels already
    reflect the arrival order when class_order == "default").
    """
    rng = np.random.default_rng(seed)
    all_classes = dataset.classes()
    base_n = scenario.base_classes
    if base_n >= len(all_classes):
        raise ValueError("base knowledge must leave classes for the stream")

    def pack(t, train_idx, fresh, note=""):
        fresh = list(fresh)
        vx, vy = dataset.select("val", fresh) if fresh else _empty(dataset)
        tx, ty = dataset.select("test", fresh) if fresh else _empty(dataset)
        return StreamStep(
            t=t,
            train_images=dataset.images[train_idx],
            train_labels=dataset.labels[train_idx],
            val_images=vx, val_labels=vy,
            test_images=tx, test_labels=ty,
            new_classes=fresh, schedule_note=note)

    base_classes = all_classes[:base_n]
    base = pack(0, dataset.indices("train", base_classes), base_classes)

    remaining = {c: list(dataset.indices("train", [c]))
                 for c in all_classes[base_n:]}
    unseen = list(all_classes[base_n:])
    steps = []
    t = 1

    if scenario.kind == "kclass":
        while unseen:
            fresh = unseen[:scenario.k]
            unseen = unseen[scenario.k:]
            idx = np.concatenate([remaining.pop(c) for c in fresh])
            steps.append(pack(t, idx, fresh))
            t += 1
    elif scenario.kind == "mixed":
        partial_seen = []   # classes introduced with partial data
        while unseen:
            lo, hi = scenario.k_range
            k = min(int(rng.integers(lo, hi + 1)), len(unseen))
            fresh = unseen[:k]
            unseen = unseen[k:]
            idx = [np.asarray(remaining.pop(c), dtype=np.int64)
                   for c in fresh]
            # plus a fraction p of one further class, seen or unseen
            pool = partial_seen + unseen
            note = ""
            if pool:
                extra = pool[int(rng.integers(len(pool)))]
                p = float(rng.choice(scenario.p_choices))
                total = len(dataset.indices("train", [extra]))
                take = min(math.ceil(p * total), len(remaining[extra]))
                idx.append(np.asarray(remaining[extra][:take],
                                      dtype=np.int64))
                remaining[extra] = remaining[extra][take:]
                note = f"partial class {extra} p={p:g}"
                if extra in unseen:
                    unseen.remove(extra)
                    fresh = fresh + [extra]
                    partial_seen.append(extra)
                if not remaining[extra] and extra in partial_seen:
                    partial_seen.remove(extra)
            steps.append(pack(t, np.concatenate(idx), fresh, note))
            t += 1
    else:  # half
        due = {}   # step -> list of (class, indices)
        while unseen or any(s >= t for s in due):
            idx = []
            fresh = []
            note_parts = []
            if unseen:
                c = unseen.pop(0)
                pool = remaining.pop(c)
                half = len(pool) // 2
                idx.append(np.asarray(pool[:half], dtype=np.int64))
                due.setdefault(t + scenario.half_gap, []).append(
                    (c, pool[half:]))
                fresh.append(c)
                note_parts.append(f"first half of class {c}")
            for c, rest in due.pop(t, []):
                idx.append(np.asarray(rest, dtype=np.int64))
                note_parts.append(f"second half of class {c}")
            if not idx:
                t += 1
                continue
            steps.append(pack(t, np.concatenate(idx), fresh,
                              "; ".join(note_parts)))
            t += 1
    return base, steps


def _empty(dataset):
    shape = (0,) + tuple(dataset.image_shape)
    return (np.empty(shape, dtype=np.float32),
            np.empty(0, dtype=np.int64))


def init_state(base_step, base_descriptor, train_cfg, search_cfg, seed):
    """Train the initial network on the base knowledge (no search)."""
    desc = base_descriptor.with_classes(len(base_step.new_classes))
    net = instantiate(desc, step_seed(seed, 0, 0))
    wider = Actor("wider", search_cfg.max_wider, seed=step_seed(seed, 0, 1))
    deeper = Actor("deeper", search_cfg.max_deeper,
                   seed=step_seed(seed, 0, 2))
    state = LearnerState(
        network=net, descriptor=desc, wider_actor=wider, deeper_actor=deeper,
        train_x=base_step.train_images, train_y=base_step.train_labels,
        val_x=base_step.val_images, val_y=base_step.val_labels,
        test_x=base_step.test_images, test_y=base_step.test_labels,
        seen_classes=list(base_step.new_classes))
    cfg = replace(train_cfg, rng_seed=step_seed(seed, 0, 3))
    state.network, state.prev_val_accuracy = train(
        state.network, (state.train_x, state.train_y),
        (state.val_x, state.val_y), cfg)
    return state


def base_report(state, method, t=0):
    acc, per_class = evaluate(state.network, (state.test_x, state.test_y))
    aia = average_incremental_accuracy(per_class, state.seen_classes)
    return StepReport(
        t=t, method=method, classes_seen=len(state.seen_classes), aia=aia,
        val_accuracy=state.prev_val_accuracy, val_prev_dist=0.0,
        params=state.network.count_params(), expanded=False, wider=0,
        deeper=0, wall_s=0.0)


def incremental_learn(state, step, method, train_cfg, search_cfg, seed):
    """One class-incremental step; returns (new_state, StepReport)."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    if len(step.train_images) == 0:
        raise EmptyDataError(f"step {step.t} delivers no training data")
    started = time.perf_counter()

    prev_val = (state.val_x, state.val_y)
    state.train_x = np.concatenate([state.train_x, step.train_images])
    state.train_y = np.concatenate([state.train_y, step.train_labels])
    state.val_x = np.concatenate([state.val_x, step.val_images])
    state.val_y = np.concatenate([state.val_y, step.val_labels])
    state.test_x = np.concatenate([state.test_x, step.test_images])
    state.test_y = np.concatenate([state.test_y, step.test_labels])
    state.seen_classes = state.seen_classes + list(step.new_classes)

    net, desc = state.network, state.descriptor
    if step.n_unseen > 0:
        total = len(state.seen_classes)
        net = expand_output(net, total, step_seed(seed, step.t, 0))
        desc = desc.with_classes(total)

    cfg = replace(train_cfg, rng_seed=step_seed(seed, step.t, 1))
    net, v_prev = train(net, (state.train_x, state.train_y),
                        (state.val_x, state.val_y), cfg)

    if len(prev_val[0]) > 0:
        prev_dist_acc, _ = evaluate(net, prev_val)
    else:
        prev_dist_acc = 0.0
    v_diff = v_prev - prev_dist_acc

    expanded = False
    wider = deeper = 0
    candidates_log = []
    if method != "sa":
        outcome = arch_search(
            net, desc, (state.train_x, state.train_y),
            (state.val_x, state.val_y),
            (state.wider_actor, state.deeper_actor),
            search_cfg, cfg, seed=step_seed(seed, step.t, 2),
            v_prev=v_prev, v_diff=v_diff, n_new=step.n_unseen,
            policy="actor" if method == "cnas" else "uniform")
        candidates_log = [
            {"step": step.t, "idx": c.index, "wider": c.action.wider_count,
             "deeper": c.action.deeper_count, "val_acc": c.val_accuracy,
             "params": c.param_count, "seed": c.seed}
            for c in outcome.candidates]
        if method == "ras":
            expanded = max(outcome.v_sampled) > v_prev  # greedy rule
            chosen = outcome.best.network if expanded else net
        else:
            chosen, expanded = heuristic_func(
                net, outcome.best.network, v_prev, outcome.v_sampled)
        if expanded:
            net = chosen
            desc = outcome.best.descriptor
            wider = outcome.best.action.wider_count
            deeper = outcome.best.action.deeper_count

    cfg = replace(train_cfg, rng_seed=step_seed(seed, step.t, 3))
    net, v_final = train(net, (state.train_x, state.train_y),
                         (state.val_x, state.val_y), cfg)

    state.network = net
    state.descriptor = desc
    state.prev_val_accuracy = v_final

    acc, per_class = evaluate(net, (state.test_x, state.test_y))
    aia = average_incremental_accuracy(per_class, state.seen_classes)
    report = StepReport(
        t=step.t, method=method, classes_seen=len(state.seen_classes),
        aia=aia, val_accuracy=v_final, val_prev_dist=prev_dist_acc,
        params=net.count_params(), expanded=expanded, wider=wider,
        deeper=deeper, wall_s=time.perf_counter() - started,
        candidates=candidates_log)
    return state, report


def run_baseline(method, base_step, steps, base_descriptor, train_cfg,
                 search_cfg, seed, step_callback=None):
    """Run a full stream with one method; returns (reports, final state)."""
    state = init_state(base_step, base_descriptor, train_cfg, search_cfg,
                       seed)
    reports = [base_report(state, method)]
    if step_callback is not None:
        step_callback(state, reports[0])
    for step in steps:
        state, report = incremental_learn(state, step, method, train_cfg,
                                          search_cfg, seed)
        reports.append(report)
        if step_callback is not None:
            step_callback(state, report)
    return reports, state
