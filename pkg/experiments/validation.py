"""
Fast invariant checks behind `simulate --mode validate`.
Each check returns a CheckResult with the measured value and its threshold.
"""

import logging
import math
import time
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np
from scipy import stats

from agent.services import AgentConfig, ReplayBuffer, StateVec, Transition
from baselines.services import BENEFIT, COST, TopsisInput, topsis_rank
from engine.services import SimulationSetup, build_selectors, run_game
from Hybridsim.exceptions import GameAbortedError
from nn.services import (
    AdamState,
    MlpGradients,
    MlpParams,
    adam_step,
    backward,
    forward,
    forward_with_cache,
    init_weights,
    mse_loss,
)

logger = logging.getLogger(__name__)


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    threshold: float
    detail: str = ''
    seconds: float = 0.0

    def __str__(self):
        status = 'PASS' if self.passed else 'FAIL'
        text = f"[{status}] {self.name}: measured {self.measured:.3g} (threshold {self.threshold:.3g})"
        return f"{text} {self.detail}".rstrip()


# ============================================================================
# NETWORK
# ============================================================================

def gradient_check(
    networks: int = 20,
    probes: int = 100,
    dims=(6, 8, 8, 4),
    h: float = 1e-5,
    threshold: float = 1e-4,
    seed: int = 0,
    backward_fn: Callable = backward,
) -> CheckResult:
    """Analytic gradients against central finite differences of sum(output * g)"""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(networks):
        net = init_weights(dims, rng)
        for b in net.biases:
            b[:] = rng.normal(0.0, 0.1, size=b.shape)
        x = rng.normal(size=(4, dims[0]))
        g = rng.normal(size=(4, dims[-1]))
        analytic = backward_fn(net, x, g).parameters()
        params = net.parameters()
        for _ in range(probes):
            k = int(rng.integers(len(params)))
            index = tuple(int(rng.integers(n)) for n in params[k].shape)
            original = params[k][index]
            params[k][index] = original + h
            up = float(np.sum(forward(net, x) * g))
            params[k][index] = original - h
            down = float(np.sum(forward(net, x) * g))
            params[k][index] = original
            numeric = (up - down) / (2 * h)
            a = float(analytic[k][index])
            worst = max(worst, abs(a - numeric) / max(abs(a) + abs(numeric), 1e-6))
    return CheckResult('gradient check', worst < threshold, worst, threshold,
                       f'({networks} networks x {probes} probes, max relative error)')


def _scripted_adam(theta: float, lr: float, steps: int, beta1=0.9, beta2=0.999, eps=1e-8) -> List[float]:
    m = v = 0.0
    trace = []
    for t in range(1, steps + 1):
        grad = 2.0 * theta
        m = beta1 * m + (1 - beta1) * grad
        v = beta2 * v + (1 - beta2) * grad * grad
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        theta = theta - lr * m_hat / (math.sqrt(v_hat) + eps)
        trace.append(theta)
    return trace


def adam_trace_check(steps: int = 10, lr: float = 0.1, threshold: float = 1e-10) -> CheckResult:
    """Scalar Adam on f(theta) = theta^2 from theta = 1 against a hand-written loop"""
    params = MlpParams([np.array([[1.0]])], [np.zeros(1)])
    state = AdamState.create(params)
    trace = []
    for _ in range(steps):
        theta = params.weights[0][0, 0]
        grads = MlpGradients([np.array([[2.0 * theta]])], [np.zeros(1)])
        adam_step(params, grads, state, lr)
        trace.append(float(params.weights[0][0, 0]))
    error = float(np.max(np.abs(np.array(trace) - np.array(_scripted_adam(1.0, lr, steps)))))
    return CheckResult('adam trace', error <= threshold, error, threshold, f'({steps} steps, lr {lr})')


def memorization_check(
    dims=(6, 32, 32, 4),
    pairs: int = 16,
    steps: int = 5000,
    lr: float = 1e-3,
    threshold: float = 1e-6,
    seed: int = 0,
) -> CheckResult:
    """Full-batch Adam fit of a fixed random input -> Q-value table"""
    rng = np.random.default_rng(seed)
    net = init_weights(dims, rng)
    x = rng.uniform(0.0, 1.0, size=(pairs, dims[0]))
    y = rng.uniform(-1.0, 1.0, size=(pairs, dims[-1]))
    state = AdamState.create(net)
    best = math.inf
    for _ in range(steps):
        pred, cache = forward_with_cache(net, x)
        loss, grad = mse_loss(pred, y, batch_size=pred.size)
        best = min(best, loss)
        if best < threshold:
            break
        adam_step(net, backward(net, x, grad, cache=cache), state, lr)
    return CheckResult('memorization', best < threshold, best, threshold, f'(mean squared error, {pairs} pairs)')


# ============================================================================
# TOPSIS
# ============================================================================

def textbook_topsis(matrix, weights, senses) -> np.ndarray:
    """Loop-by-loop closeness coefficients"""
    rows, cols = len(matrix), len(matrix[0])
    weighted = [[0.0] * cols for _ in range(rows)]
    for j in range(cols):
        norm = math.sqrt(sum(matrix[i][j] ** 2 for i in range(rows)))
        for i in range(rows):
            weighted[i][j] = weights[j] * (matrix[i][j] / norm if norm > 0 else 0.0)
    closeness = []
    for i in range(rows):
        d_best = d_worst = 0.0
        for j in range(cols):
            column = [weighted[r][j] for r in range(rows)]
            best = max(column) if senses[j] == BENEFIT else min(column)
            worst = min(column) if senses[j] == BENEFIT else max(column)
            d_best += (weighted[i][j] - best) ** 2
            d_worst += (weighted[i][j] - worst) ** 2
        d_best, d_worst = math.sqrt(d_best), math.sqrt(d_worst)
        closeness.append(d_worst / (d_best + d_worst) if d_best + d_worst > 0 else 0.5)
    return np.array(closeness)


def topsis_oracle_check(cases: int = 1000, threshold: float = 1e-12, seed: int = 0) -> CheckResult:
    """Vectorized ranking against the loop version; rankings survive column rescaling"""
    rng = np.random.default_rng(seed)
    worst = 0.0
    rank_changes = 0
    for _ in range(cases):
        matrix = rng.uniform(0.1, 10.0, size=(4, 4))
        weights = rng.dirichlet(np.ones(4))
        senses = tuple(rng.choice([BENEFIT, COST], size=4))
        closeness = topsis_rank(TopsisInput(matrix, weights, senses))
        worst = max(worst, float(np.max(np.abs(closeness - textbook_topsis(matrix.tolist(), weights, senses)))))
        scaled = topsis_rank(TopsisInput(matrix * rng.uniform(0.5, 20.0, size=4), weights, senses))
        if not np.allclose(closeness, scaled, atol=1e-9):
            rank_changes += 1
    passed = worst <= threshold and rank_changes == 0
    return CheckResult('topsis oracle', passed, worst, threshold,
                       f'({cases} matrices, {rank_changes} scale-variant cases)')


# ============================================================================
# REPLAY BUFFER
# ============================================================================

def _transition(i: int) -> Transition:
    state = StateVec.from_array(np.full(6, i / 1000.0))
    return Transition(s=state, a=i % 4, r=float(i), s_next=state, terminal=False)


def _single_draw(buf: ReplayBuffer, rng: np.random.Generator) -> int:
    return int(buf.sample_indices(1, rng)[0])


def buffer_uniformity_check(
    size: int = 100,
    draws: int = 100_000,
    alpha: float = 0.001,
    seed: int = 0,
    sampler: Callable[[ReplayBuffer, np.random.Generator], int] = _single_draw,
) -> CheckResult:
    """
    Chi-square uniformity of single-sample draws plus ring eviction order.
    The p-value must fall inside (alpha, 1 - alpha): too uneven counts mean a
    biased sampler, too even counts mean a deterministic one.
    """
    rng = np.random.default_rng(seed)
    buf = ReplayBuffer(size)
    for i in range(size):
        buf.push(_transition(i))
    counts = np.bincount([sampler(buf, rng) for _ in range(draws)], minlength=size)
    p_value = float(stats.chisquare(counts).pvalue)

    ring = ReplayBuffer(3)
    for i in range(5):
        ring.push(_transition(i))
    eviction_ok = [t.r for t in ring.contents()] == [2.0, 3.0, 4.0]

    detail = f'(chi-square p-value over {draws} draws, eviction order {"ok" if eviction_ok else "WRONG"})'
    passed = alpha < p_value < 1.0 - alpha and eviction_ok
    return CheckResult('replay buffer', passed, p_value, alpha, detail)


# ============================================================================
# ACCOUNTING
# ============================================================================

def accounting_check(seed: int = 0, sr_target: int = 10) -> CheckResult:
    """PRR equals SR target over messages sent, mode counts add up, single-RAT runs never duplicate"""
    setup = SimulationSetup(agent=AgentConfig(sr_target=sr_target, hidden_layers=(16, 16))).validate()
    problems = []
    worst = 0.0
    for selector in ('static-g5', 'drl'):
        try:
            game = run_game(setup, build_selectors(setup, selector, seed), seed=seed)
        except GameAbortedError as e:
            game = e.stats
        for k in range(game.n_agents):
            if sum(game.mode_counts[k]) != game.n_sent[k]:
                problems.append(f'{selector} agent {k}: mode counts do not sum to n_sent')
            if game.completed:
                worst = max(worst, abs(game.prr[k] - sr_target / game.n_sent[k]))
        if selector == 'static-g5' and game.dup_pct != 0.0:
            problems.append(f'static-g5 duplicated {game.dup_pct:.1f}% of messages')
    threshold = 1e-12
    detail = '; '.join(problems) if problems else '(PRR identity, mode totals, single-RAT duplication)'
    return CheckResult('accounting', not problems and worst <= threshold, worst, threshold, detail)


# ============================================================================
# SUITE
# ============================================================================

def run_checks(seed: int = 0, backward_fn: Optional[Callable] = None) -> List[CheckResult]:
    """Run every check; backward_fn substitutes the differentiation under test"""
    checks = [
        lambda: gradient_check(seed=seed, backward_fn=backward_fn or backward),
        lambda: adam_trace_check(),
        lambda: memorization_check(seed=seed),
        lambda: topsis_oracle_check(seed=seed),
        lambda: buffer_uniformity_check(seed=seed),
        lambda: accounting_check(seed=seed),
    ]
    results = []
    for check in checks:
        started = time.perf_counter()
        result = check()
        result.seconds = time.perf_counter() - started
        log = logger.info if result.passed else logger.error
        log(f"{result} in {result.seconds:.2f}s")
        results.append(result)
    return results
