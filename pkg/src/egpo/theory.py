"""Exact checks of the training-risk bound on tabular MDPs.

Everything here is plain linear algebra over small arrays: failure values
come from a direct linear solve, occupancy measures from the resolvent
``(I - gamma P_pi)^-1``.  Action measure is counting measure in the tabular
case and Lebesgue area on ``[-1, 1]^2`` in the continuous case.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

_ROW_TOL = 1e-9


def _check_rows(p: np.ndarray, what: str) -> None:
    if np.any(p < 0) or not np.allclose(p.sum(axis=-1), 1.0, atol=_ROW_TOL, rtol=0):
        raise ValueError(f"{what} rows must be non-negative and sum to 1")


@dataclass
class TabularMDP:
    P: np.ndarray  # (S, A, S)
    unsafe: np.ndarray  # (S, A) in {0, 1}
    gamma: float
    initial: np.ndarray  # (S,)

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=np.float64)
        self.unsafe = np.asarray(self.unsafe, dtype=np.float64)
        self.initial = np.asarray(self.initial, dtype=np.float64)
        s, a, s2 = self.P.shape
        if s != s2 or self.unsafe.shape != (s, a) or self.initial.shape != (s,):
            raise ValueError("inconsistent MDP shapes")
        _check_rows(self.P, "transition")
        _check_rows(self.initial, "initial distribution")
        if not np.all((self.unsafe == 0) | (self.unsafe == 1)):
            raise ValueError("unsafe indicator must be 0/1")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")

    @property
    def n_states(self) -> int:
        return self.P.shape[0]

    @property
    def n_actions(self) -> int:
        return self.P.shape[1]

    def to_dict(self) -> dict:
        return {"P": self.P.tolist(), "unsafe": self.unsafe.astype(int).tolist(),
                "gamma": self.gamma, "initial": self.initial.tolist()}


@dataclass
class TabularPolicy:
    probs: np.ndarray  # (S, A)

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 2:
            raise ValueError("policy table must be 2-D")
        _check_rows(self.probs, "policy")

    def to_dict(self) -> dict:
        return {"probs": self.probs.tolist()}


def _state_transition(mdp: TabularMDP, pi: TabularPolicy) -> np.ndarray:
    return np.einsum("sa,sat->st", pi.probs, mdp.P)


def _check_shapes(mdp: TabularMDP, *policies: TabularPolicy) -> None:
    for pi in policies:
        if pi.probs.shape != (mdp.n_states, mdp.n_actions):
            raise ValueError(f"policy shape {pi.probs.shape} does not match MDP")


def exact_failure_value(mdp: TabularMDP, pi: TabularPolicy) -> tuple[np.ndarray, float]:
    """Solve ``V = r_I + gamma P_pi V``; return per-state V and its initial-state mean."""
    _check_shapes(mdp, pi)
    r = (pi.probs * mdp.unsafe).sum(axis=1)
    a = np.eye(mdp.n_states) - mdp.gamma * _state_transition(mdp, pi)
    try:
        v = np.linalg.solve(a, r)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"singular failure-value system: {exc}") from exc
    return v, float(mdp.initial @ v)


def discounted_occupancy(mdp: TabularMDP, pi: TabularPolicy) -> np.ndarray:
    """Normalized state occupancy ``(1 - gamma) mu0^T (I - gamma P_pi)^-1``."""
    a = np.eye(mdp.n_states) - mdp.gamma * _state_transition(mdp, pi)
    return (1.0 - mdp.gamma) * np.linalg.solve(a.T, mdp.initial)


def mix_policy(agent: TabularPolicy, expert: TabularPolicy, eta: float) -> TabularPolicy:
    """Behavior policy: agent mass inside the confident set plus expert mass times the rejected mass."""
    if agent.probs.shape != expert.probs.shape:
        raise ValueError("agent and expert tables differ in shape")
    accept = expert.probs >= eta
    rejected = (agent.probs * ~accept).sum(axis=1, keepdims=True)
    return TabularPolicy(agent.probs * accept + expert.probs * rejected)


def theorem_bound(epsilon: float, eta: float, gamma: float, k_eta: float) -> float:
    """``epsilon/(1-gamma) * (1 + 1/eta + gamma/(1-gamma) * k_eta)``."""
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    if eta <= 0.0:
        raise ValueError("eta must be positive; the bound is undefined at eta = 0")
    return epsilon / (1.0 - gamma) * (1.0 + 1.0 / eta + gamma / (1.0 - gamma) * k_eta)


def k_eta(expert: TabularPolicy, eta: float) -> int:
    """Largest number of confident actions over states (counting measure)."""
    if eta <= 0.0:
        raise ValueError("eta must be positive")
    return int((expert.probs >= eta).sum(axis=1).max())


def superlevel_measure(density: Callable[[np.ndarray], np.ndarray], eta: float,
                       low: Sequence[float], high: Sequence[float], n: int | Sequence[int]) -> float:
    """Midpoint-rule volume of ``{x : density(x) >= eta}`` inside a box.

    ``density`` takes an ``(m, d)`` array of points and returns ``(m,)`` values.
    """
    low, high = np.atleast_1d(np.asarray(low, float)), np.atleast_1d(np.asarray(high, float))
    counts = np.broadcast_to(np.asarray(n), low.shape)
    axes = [lo + (np.arange(k) + 0.5) * (hi - lo) / k for lo, hi, k in zip(low, high, counts)]
    pts = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    cell = float(np.prod((high - low) / counts))
    return float(np.count_nonzero(density(pts) >= eta)) * cell


def k_eta_continuous(densities: Sequence[Callable[[np.ndarray], np.ndarray]], eta: float,
                     grid: int = 400) -> float:
    """Max over sampled states of the confident-set area on ``[-1, 1]^2``."""
    if eta <= 0.0:
        raise ValueError("eta must be positive")
    return max(superlevel_measure(f, eta, (-1.0, -1.0), (1.0, 1.0), grid) for f in densities)


# -- lemma and theorem checks ---------------------------------------------------


@dataclass
class Lemma2Result:
    epsilon: float
    unsafe_confident_measure: float
    bound: float

    @property
    def holds(self) -> bool:
        return self.unsafe_confident_measure <= self.bound + 1e-12


def lemma2_check(expert_probs, unsafe, eta: float) -> Lemma2Result:
    """Confident unsafe actions have measure at most ``epsilon / eta`` at one state."""
    if eta <= 0.0:
        raise ValueError("eta must be positive")
    p = np.asarray(expert_probs, float)
    u = np.asarray(unsafe, bool)
    eps = float(p[u].sum())
    measure = float(np.count_nonzero((p >= eta) & u))
    return Lemma2Result(eps, measure, eps / eta)


@dataclass
class VerificationReport:
    name: str
    n_instances: int = 0
    violations: list[dict] = field(default_factory=list)
    min_slack: float = float("inf")
    max_identity_error: float = 0.0
    monotonicity_failures: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations and self.monotonicity_failures == 0

    def to_dict(self) -> dict:
        return {"name": self.name, "n_instances": self.n_instances,
                "n_violations": len(self.violations), "violations": self.violations,
                "min_slack": self.min_slack, "max_identity_error": self.max_identity_error,
                "monotonicity_failures": self.monotonicity_failures, "ok": self.ok}


def verify_lemma2(n_trials: int, rng: np.random.Generator, n_actions: tuple[int, int] = (2, 8)) -> VerificationReport:
    """Random discrete experts and unsafe sets; eta drawn uniformly from (0, 1)."""
    rep = VerificationReport("lemma2")
    for _ in range(n_trials):
        k = int(rng.integers(n_actions[0], n_actions[1] + 1))
        p = rng.dirichlet(np.ones(k))
        u = rng.random(k) < rng.uniform(0.05, 0.3)
        eta = float(rng.uniform(1e-3, 1.0))
        res = lemma2_check(p, u, eta)
        rep.n_instances += 1
        rep.min_slack = min(rep.min_slack, res.bound - res.unsafe_confident_measure)
        if not res.holds:
            rep.violations.append({"probs": p.tolist(), "unsafe": u.tolist(), "eta": eta})
    return rep


def lemma3_check(mdp: TabularMDP, expert: TabularPolicy) -> tuple[np.ndarray, float]:
    """Return the expert failure values and the bound ``max_s eps(s) / (1 - gamma)``."""
    v, _ = exact_failure_value(mdp, expert)
    eps = float((expert.probs * mdp.unsafe).sum(axis=1).max())
    return v, eps / (1.0 - mdp.gamma)


def verify_lemma3(mdp: TabularMDP, expert: TabularPolicy, report: VerificationReport | None = None) -> VerificationReport:
    rep = report or VerificationReport("lemma3")
    v, bound = lemma3_check(mdp, expert)
    rep.n_instances += 1
    slack = float(bound - v.max())
    rep.min_slack = min(rep.min_slack, slack)
    if slack < -1e-10:
        rep.violations.append({"mdp": mdp.to_dict(), "expert": expert.to_dict(), "slack": slack})
    return rep


def random_mdp(rng: np.random.Generator, n_states: int, n_actions: int,
               gamma: float | None = None) -> TabularMDP:
    p = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    unsafe = (rng.random((n_states, n_actions)) < rng.uniform(0.05, 0.3)).astype(float)
    g = float(rng.uniform(0.5, 0.95)) if gamma is None else gamma
    return TabularMDP(p, unsafe, g, rng.dirichlet(np.ones(n_states)))


def random_policy(rng: np.random.Generator, n_states: int, n_actions: int) -> TabularPolicy:
    return TabularPolicy(rng.dirichlet(np.ones(n_actions), size=n_states))


def lemma1_gap(mdp: TabularMDP, expert: TabularPolicy, behavior: TabularPolicy) -> float:
    """Absolute error of the performance-difference identity for the failure value."""
    v_e, ve0 = exact_failure_value(mdp, expert)
    _, vb0 = exact_failure_value(mdp, behavior)
    q_e = mdp.unsafe + mdp.gamma * mdp.P @ v_e
    adv = q_e - v_e[:, None]
    d = discounted_occupancy(mdp, behavior)
    rhs = ve0 + float(d @ (behavior.probs * adv).sum(axis=1)) / (1.0 - mdp.gamma)
    return abs(vb0 - rhs)


@dataclass
class Theorem1Instance:
    mdp: TabularMDP
    expert: TabularPolicy
    agent: TabularPolicy
    eta: float

    def to_dict(self) -> dict:
        return {"mdp": self.mdp.to_dict(), "expert": self.expert.to_dict(),
                "agent": self.agent.to_dict(), "eta": self.eta}


def check_theorem1(inst: Theorem1Instance) -> dict:
    mdp, expert = inst.mdp, inst.expert
    behavior = mix_policy(inst.agent, expert, inst.eta)
    v_hat, _ = exact_failure_value(mdp, behavior)
    eps = float((expert.probs * mdp.unsafe).sum(axis=1).max())
    k = k_eta(expert, inst.eta)
    bound = theorem_bound(eps, inst.eta, mdp.gamma, k)
    return {"v_hat_max": float(v_hat.max()), "bound": bound, "epsilon": eps, "k_eta": k,
            "slack": bound - float(v_hat.max()), "lemma1_gap": lemma1_gap(mdp, expert, behavior)}


def random_theorem1_instance(rng: np.random.Generator, states: tuple[int, int] = (3, 8),
                             actions: tuple[int, int] = (2, 5)) -> Theorem1Instance:
    s = int(rng.integers(states[0], states[1] + 1))
    a = int(rng.integers(actions[0], actions[1] + 1))
    mdp = random_mdp(rng, s, a)
    return Theorem1Instance(mdp, random_policy(rng, s, a), random_policy(rng, s, a),
                            float(rng.uniform(0.02, 0.8)))


def verify_theorem1(n_instances: int, rng: np.random.Generator, states: tuple[int, int] = (3, 8),
                    actions: tuple[int, int] = (2, 5), identity_tol: float = 1e-8,
                    eta_grid: Sequence[float] = tuple(np.linspace(0.01, 1.0, 25))) -> dict[str, VerificationReport]:
    """Random instances: the bound, the performance-difference identity, Lemma 3 and k_eta monotonicity."""
    if min(states) < 1 or min(actions) < 1:
        raise ValueError("sizes must be >= 1")
    thm = VerificationReport("theorem1")
    lem3 = VerificationReport("lemma3")
    for _ in range(n_instances):
        inst = random_theorem1_instance(rng, states, actions)
        res = check_theorem1(inst)
        thm.n_instances += 1
        thm.min_slack = min(thm.min_slack, res["slack"])
        thm.max_identity_error = max(thm.max_identity_error, res["lemma1_gap"])
        if res["slack"] < -1e-10 or res["lemma1_gap"] > identity_tol:
            thm.violations.append({"instance": inst.to_dict(), **res})
        ks = [k_eta(inst.expert, e) for e in eta_grid]
        if any(k2 > k1 for k1, k2 in zip(ks, ks[1:])):
            thm.monotonicity_failures += 1
        verify_lemma3(inst.mdp, inst.expert, lem3)
    return {"theorem1": thm, "lemma3": lem3}


def run_theory_suite(n_instances: int = 1000, seed: int = 0) -> dict:
    """Everything the ``verify-theory`` command reports."""
    rng = np.random.default_rng([seed, 0x7E0])
    reports = verify_theorem1(n_instances, rng)
    reports["lemma2"] = verify_lemma2(n_instances, rng)
    return {k: r.to_dict() for k, r in reports.items()}
