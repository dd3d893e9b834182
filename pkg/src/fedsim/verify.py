"""Self-contained invariant checks runnable from the command line.

A fast subset of the oracle suite: quantizer unbiasedness and contraction,
the control-variate aggregation identity, the closed-form local-update
equivalence, and allocation KKT residuals on random instances.
"""

from __future__ import annotations

import numpy as np

from . import alloc, fed, learner, quantizer
from .fed import ClientState, RoundPlan, ServerState


def check_quantizer_unbiased(seed: int = 0) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(5):
        z = rng.normal(size=32)
        for B in (1, 2, 4):
            mean = quantizer.empirical_mean_dequantized(z, B, 40_000, rng)
            worst = max(worst, float(np.max(np.abs(mean - z))))
    ok = worst < 0.05
    return ok, f"max |mean - z| = {worst:.4g}"


def check_quantizer_contraction(seed: int = 1) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    for _ in range(20):
        z = rng.uniform(-0.4, 0.4, size=64)
        B = int(rng.integers(1, 5))
        emp = quantizer.empirical_omega(z, B, 2000, rng)
        if emp > quantizer.omega_bound(z, B):
            return False, f"empirical {emp:.4g} exceeds bound for B={B}"
    return True, "empirical ratio within bound on 20 instances"


def check_control_variate_identity(seed: int = 2) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    spec = learner.ModelSpec(kind=learner.LOGISTIC, input_dim=5, num_classes=3)
    n_clients, m = 6, 3
    datasets = []
    for _ in range(n_clients):
        X = rng.normal(size=(30, 5))
        y = rng.integers(0, 3, size=30)
        datasets.append((X, y))
    weights = np.full(n_clients, 1.0 / n_clients)
    server = ServerState(theta=learner.init_params(spec, seed), c=np.zeros(spec.dim))
    clients = [ClientState(id=i, p=float(weights[i]), c_i=np.zeros(spec.dim))
               for i in range(n_clients)]
    worst = 0.0
    for r in range(15):
        active = fed.sample_clients(n_clients, m, np.random.default_rng([seed, r]))
        plan = RoundPlan(active_set=active,
                         local_epochs={c: 2 for c in active},
                         bits={c: 2 for c in active},
                         batch_size=10, eta=0.01)
        server, _ = fed.run_round_fedqvr(spec, server, clients, datasets, plan, seed)
        mix = sum(cl.p * cl.c_i for cl in clients)
        worst = max(worst, float(np.max(np.abs(server.c - mix))))
    ok = worst <= 1e-10
    return ok, f"max ||c - sum p_i c_i||_inf = {worst:.3g}"


def check_closed_form_update(seed: int = 3) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    spec = learner.ModelSpec(kind=learner.LOGISTIC, input_dim=4, num_classes=3)
    X = rng.normal(size=(40, 4))
    y = rng.integers(0, 3, size=40)
    worst = 0.0
    for ge in (1e-3, 1e-2, 1e-1):
        for E in (1, 2, 5):
            eta, gamma = 0.05, ge / 0.05
            theta0 = learner.init_params(spec, seed + E)
            c_i = rng.normal(size=spec.dim) * 0.01
            theta_new, logs = fed.local_update(
                spec, theta0, c_i, X, y, E, 8, eta, gamma,
                np.random.default_rng([seed, E]))
            b = fed.b_weights(gamma, eta, E)
            et = fed.e_tilde(gamma, eta, E)
            pred = -eta * et * sum(
                (b[t] / b.sum()) * (logs[t] - c_i) for t in range(E))
            worst = max(worst, float(np.max(np.abs((theta_new - theta0) - pred))))
    ok = worst <= 1e-10
    return ok, f"max closed-form deviation = {worst:.3g}"


def check_alloc_kkt(seed: int = 4) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(10):
        m = int(rng.integers(2, 4))
        p = alloc.AllocProblem(
            gains=rng.uniform(1e-8, 1e-5, size=m),
            taus=np.full(m, 1e-3),
            w_total=1e8, alpha=float(rng.choice([0.0, 0.5, 0.9])),
            d=10_000, mu=384, noise_psd=10 ** (-14.3) / 1000)
        sol = alloc.solve_alloc(p)
        if sol.feasible:
            worst = max(worst, sol.kkt_residual)
    ok = worst <= 1e-6
    return ok, f"max KKT residual = {worst:.3g}"


ALL_CHECKS = [
    ("quantizer-unbiasedness", check_quantizer_unbiased),
    ("quantizer-contraction", check_quantizer_contraction),
    ("control-variate-identity", check_control_variate_identity),
    ("closed-form-local-update", check_closed_form_update),
    ("allocation-kkt", check_alloc_kkt),
]


def run_all(verbose: bool = True) -> bool:
    all_ok = True
    for name, fn in ALL_CHECKS:
        ok, detail = fn()
        all_ok &= ok
        if verbose:
            print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    return all_ok
