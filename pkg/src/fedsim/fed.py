"""Federated protocol state machines.

Implements the quantized variance-reduced protocol (control variates at
server and clients, geometric-weighted local updates, quantized uplink of
model differences) alongside plain federated averaging and the SCAFFOLD
baseline. All randomness flows through per-(seed, round, client) streams so
results are independent of client scheduling order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import learner, quantizer
from .learner import ModelSpec
from .quantizer import QuantizedDelta, QuantizerConfig

RAW_BITS_PER_ELEMENT = 32  # uncompressed float32 wire cost per parameter


@dataclass
class ServerState:
    theta: np.ndarray
    c: np.ndarray
    round: int = 0


@dataclass
class ClientState:
    id: int
    p: float
    c_i: np.ndarray


@dataclass
class RoundPlan:
    active_set: list[int]
    local_epochs: dict[int, int]
    bits: dict[int, int]
    batch_size: int
    eta: float
    gamma: float = 0.3
    a: float = 0.3
    quantize_enabled: bool = True
    # uploads from these clients are lost in transit; their state rolls back
    failed: frozenset[int] = frozenset()
    # original sampled-cohort size when active_set was thinned by allocation
    m_sampled: int | None = None


@dataclass
class ClientUpload:
    client_id: int
    delta: QuantizedDelta | None     # None when quantization is disabled
    delta_hat: np.ndarray            # dequantized (or raw) model difference
    step_scale: float                # a / (eta * E_tilde)
    payload_bits: int


@dataclass
class RoundReport:
    round: int
    active_ids: list[int]
    delivered_ids: list[int]
    epochs: dict[int, int]
    bits: dict[int, int]
    uplink_bits: int
    grad_logs: dict[int, list[np.ndarray]] = field(default_factory=dict)


def client_rng(master_seed: int, round_index: int, client_id: int) -> np.random.Generator:
    return np.random.default_rng([master_seed, round_index, client_id])


def sample_clients(num_clients: int, m: int, rng: np.random.Generator) -> list[int]:
    """m distinct client ids, uniform without replacement."""
    if not 1 <= m <= num_clients:
        raise ValueError(f"need 1 <= m <= N, got m={m}, N={num_clients}")
    return sorted(rng.choice(num_clients, size=m, replace=False).tolist())


def broadcast_point(server: ServerState, gamma: float) -> np.ndarray:
    """Broadcast point theta - c / gamma."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return server.theta - server.c / gamma


def e_tilde(gamma: float, eta: float, E: int) -> float:
    """Effective step count (1/(gamma*eta)) * (1 - (1+gamma*eta)^-E)."""
    ge = gamma * eta
    if ge <= 0 or E < 1:
        raise ValueError("need gamma*eta > 0 and E >= 1")
    return (1.0 - (1.0 + ge) ** (-E)) / ge


def b_weights(gamma: float, eta: float, E: int) -> np.ndarray:
    """Geometric step weights b_t = (1+gamma*eta)^-(E-t), t = 0..E-1."""
    ge = gamma * eta
    if ge <= 0 or E < 1:
        raise ValueError("need gamma*eta > 0 and E >= 1")
    return (1.0 + ge) ** (-(E - np.arange(E, dtype=np.float64)))


def local_update(
    spec: ModelSpec,
    theta0: np.ndarray,
    c_i: np.ndarray,
    X: np.ndarray,
    y: np.ndarray,
    epochs: int,
    batch_size: int,
    eta: float,
    gamma: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Variance-reduced local iteration; returns final iterate and SG log."""
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    ge = gamma * eta
    theta = theta0.copy()
    logs: list[np.ndarray] = []
    for _ in range(epochs):
        g = learner.stochastic_grad(spec, theta, X, y, batch_size, rng)
        logs.append(g)
        theta = (theta - eta * (g - c_i)) / (1.0 + ge) + (ge / (1.0 + ge)) * theta0
        if not np.all(np.isfinite(theta)):
            raise FloatingPointError("local update diverged to non-finite iterate")
    return theta, logs


def client_finish(
    theta_new: np.ndarray,
    theta0: np.ndarray,
    c_i: np.ndarray,
    client_id: int,
    bits: int,
    eta: float,
    e_tilde_val: float,
    a: float,
    rng: np.random.Generator,
    qcfg: QuantizerConfig = QuantizerConfig(),
    groups: list[tuple[int, int]] | None = None,
    quantize_enabled: bool = True,
) -> tuple[ClientUpload, np.ndarray]:
    """Quantize the model difference and advance the client control variate.

    The control variate moves by the *quantized* difference, never the raw
    one; this is what keeps the server-side identity c = sum_i p_i c_i exact.
    """
    if not 0.0 < a < 1.0:
        raise ValueError("a must lie in (0, 1)")
    diff = theta_new - theta0
    step_scale = a / (eta * e_tilde_val)
    if quantize_enabled:
        q = quantizer.quantize(diff, bits, qcfg, rng, groups=groups)
        delta_hat = quantizer.dequantize(q)
        bits_used = q.payload_bits
    else:
        q = None
        delta_hat = diff
        bits_used = RAW_BITS_PER_ELEMENT * diff.size
    upload = ClientUpload(
        client_id=client_id,
        delta=q,
        delta_hat=delta_hat,
        step_scale=step_scale,
        payload_bits=bits_used,
    )
    return upload, c_i - step_scale * delta_hat


def server_aggregate(
    server: ServerState,
    theta0: np.ndarray,
    uploads: list[tuple[ClientUpload, float]],
    m: int,
    num_clients: int,
) -> ServerState:
    """Apply the weighted quantized deltas to theta and c.

    theta <- theta0 + (N/m) * sum_i p_i * delta_hat_i
    c     <- c - sum_i p_i * step_scale_i * delta_hat_i

    Uploads are reduced in ascending client-id order for deterministic
    float summation. An empty upload list yields a no-op round.
    """
    ids = [u.client_id for u, _ in uploads]
    if len(ids) != len(set(ids)):
        raise ValueError("duplicate client id among uploads")
    theta = theta0.copy()
    c = server.c.copy()
    for upload, p in sorted(uploads, key=lambda t: t[0].client_id):
        theta += (num_clients / m) * p * upload.delta_hat
        c -= p * upload.step_scale * upload.delta_hat
    return ServerState(theta=theta, c=c, round=server.round + 1)


def run_round_fedqvr(
    spec: ModelSpec,
    server: ServerState,
    clients: list[ClientState],
    datasets: list[tuple[np.ndarray, np.ndarray]],
    plan: RoundPlan,
    master_seed: int,
    qcfg: QuantizerConfig = QuantizerConfig(),
    collect_grad_logs: bool = False,
) -> tuple[ServerState, RoundReport]:
    """One full round: broadcast, local updates, quantized uplink, aggregation.

    Inactive clients keep their control variates. Clients in ``plan.failed``
    compute but their uploads are lost: the server skips them and their
    control variates roll back, exactly as if they had been inactive.
    """
    theta0 = broadcast_point(server, plan.gamma)
    groups = spec.layer_groups() if qcfg.per_layer_grouping else None
    uploads: list[tuple[ClientUpload, float]] = []
    report_logs: dict[int, list[np.ndarray]] = {}
    committed_c: dict[int, np.ndarray] = {}
    for cid in plan.active_set:
        client = clients[cid]
        if client.id != cid:
            raise ValueError("clients list must be indexed by id")
        rng = client_rng(master_seed, server.round, cid)
        E = plan.local_epochs[cid]
        theta_new, logs = local_update(
            spec, theta0, client.c_i, datasets[cid][0], datasets[cid][1],
            E, plan.batch_size, plan.eta, plan.gamma, rng)
        upload, c_new = client_finish(
            theta_new, theta0, client.c_i, cid, plan.bits[cid],
            plan.eta, e_tilde(plan.gamma, plan.eta, E), plan.a, rng,
            qcfg=qcfg, groups=groups, quantize_enabled=plan.quantize_enabled)
        if cid in plan.failed:
            continue
        uploads.append((upload, client.p))
        committed_c[cid] = c_new
        if collect_grad_logs:
            report_logs[cid] = logs
    for cid, c_new in committed_c.items():
        clients[cid].c_i = c_new
    m = plan.m_sampled if plan.m_sampled is not None else len(plan.active_set)
    new_server = server_aggregate(server, theta0, uploads, m, len(clients))
    report = RoundReport(
        round=server.round,
        active_ids=list(plan.active_set),
        delivered_ids=sorted(committed_c),
        epochs={cid: plan.local_epochs[cid] for cid in plan.active_set},
        bits={cid: plan.bits[cid] for cid in plan.active_set},
        uplink_bits=sum(u.payload_bits for u, _ in uploads),
        grad_logs=report_logs,
    )
    return new_server, report


def run_round_fedavg(
    spec: ModelSpec,
    server: ServerState,
    datasets: list[tuple[np.ndarray, np.ndarray]],
    plan: RoundPlan,
    master_seed: int,
) -> tuple[ServerState, RoundReport]:
    """Vanilla local SGD with unweighted mean aggregation over delivered models."""
    models: list[tuple[int, np.ndarray]] = []
    for cid in plan.active_set:
        rng = client_rng(master_seed, server.round, cid)
        theta = server.theta.copy()
        for _ in range(plan.local_epochs[cid]):
            g = learner.stochastic_grad(
                spec, theta, datasets[cid][0], datasets[cid][1],
                plan.batch_size, rng)
            theta -= plan.eta * g
        if cid not in plan.failed:
            models.append((cid, theta))
    if models:
        theta_new = np.mean([t for _, t in sorted(models)], axis=0)
    else:
        theta_new = server.theta.copy()
    delivered = sorted(cid for cid, _ in models)
    report = RoundReport(
        round=server.round,
        active_ids=list(plan.active_set),
        delivered_ids=delivered,
        epochs={cid: plan.local_epochs[cid] for cid in plan.active_set},
        bits={},
        uplink_bits=RAW_BITS_PER_ELEMENT * spec.dim * len(delivered),
    )
    return ServerState(theta=theta_new, c=server.c.copy(), round=server.round + 1), report


def run_round_scaffold(
    spec: ModelSpec,
    server: ServerState,
    clients: list[ClientState],
    datasets: list[tuple[np.ndarray, np.ndarray]],
    plan: RoundPlan,
    master_seed: int,
    eta_g: float = 1.0,
    collect_grad_logs: bool = False,
) -> tuple[ServerState, RoundReport]:
    """SCAFFOLD round: perturbed SGD, control-variate refresh, mean aggregation.

    Each upload carries both the local model and the control variate, so the
    per-round uplink cost is twice the uncompressed model size.
    """
    eta_l = plan.eta
    results: list[tuple[int, np.ndarray, np.ndarray]] = []
    report_logs: dict[int, list[np.ndarray]] = {}
    for cid in plan.active_set:
        client = clients[cid]
        rng = client_rng(master_seed, server.round, cid)
        E = plan.local_epochs[cid]
        theta = server.theta.copy()
        logs = []
        for _ in range(E):
            g = learner.stochastic_grad(
                spec, theta, datasets[cid][0], datasets[cid][1],
                plan.batch_size, rng)
            logs.append(g)
            theta -= eta_l * (g + server.c - client.c_i)
        c_i_new = client.c_i - server.c + (server.theta - theta) / (E * eta_l)
        if cid in plan.failed:
            continue
        results.append((cid, theta, c_i_new))
        if collect_grad_logs:
            report_logs[cid] = logs
    results.sort()
    if results:
        mean_theta = np.mean([t for _, t, _ in results], axis=0)
        theta_new = server.theta + eta_g * (mean_theta - server.theta)
        c_new = server.c.copy()
        for cid, _, c_i_new in results:
            c_new += (c_i_new - clients[cid].c_i) / len(clients)
        for cid, _, c_i_new in results:
            clients[cid].c_i = c_i_new
    else:
        theta_new = server.theta.copy()
        c_new = server.c.copy()
    delivered = [cid for cid, _, _ in results]
    report = RoundReport(
        round=server.round,
        active_ids=list(plan.active_set),
        delivered_ids=delivered,
        epochs={cid: plan.local_epochs[cid] for cid in plan.active_set},
        bits={},
        uplink_bits=2 * RAW_BITS_PER_ELEMENT * spec.dim * len(delivered),
        grad_logs=report_logs,
    )
    return ServerState(theta=theta_new, c=c_new, round=server.round + 1), report


def validate_stepsize_conditions(
    gamma: float,
    eta: float,
    a: float,
    e_tilde_max: float,
    omega_max: float,
    num_clients: int,
    m: int,
    smoothness: float,
) -> dict:
    """Advisory check of the convergence-analysis stepsize conditions.

    Evaluates the eta upper bound and the gamma lower bound with
    a_bar = a * (1 - a * omega_max) and reports per-condition margins.
    The simulator runs regardless of the outcome.
    """
    if not 0.0 < a < 1.0:
        raise ValueError("a must lie in (0, 1)")
    N = num_clients
    a_bar = a * (1.0 - a * omega_max)
    eta_cap = min(
        1.0 / (2.0 * gamma * e_tilde_max * np.sqrt(N * (1.0 + omega_max))),
        m * a_bar * np.sqrt(m) / (3.0 * np.sqrt((1.0 + omega_max) * N * (2.0 * N - m * a_bar))),
    )
    gamma_floor = max(
        8.0 * smoothness,
        smoothness * np.sqrt(max(0.0, 30.0 * (a * omega_max + 3.0) / (1.0 - a * omega_max) - 4.0)),
        2.0 * smoothness * np.sqrt(N * (2.0 * N - m * a_bar)) / (m * a_bar),
    )
    return {
        "eta_condition_ok": eta <= eta_cap,
        "eta_cap": float(eta_cap),
        "eta_margin": float(eta_cap - eta),
        "gamma_condition_ok": gamma >= gamma_floor,
        "gamma_floor": float(gamma_floor),
        "gamma_margin": float(gamma - gamma_floor),
        "a_condition_ok": a < min(1.0, 1.0 / omega_max) if omega_max > 0 else True,
        "degenerate_eta": eta == 0.0,
    }


def estimate_smoothness(
    spec: ModelSpec,
    theta: np.ndarray,
    X: np.ndarray,
    y: np.ndarray,
    iters: int = 30,
    seed: int = 0,
) -> float:
    """Power-iteration estimate of the Hessian spectral norm at theta."""
    rng = np.random.default_rng(seed)
    v = rng.normal(size=theta.size)
    v /= np.linalg.norm(v)
    eps = 1e-5
    lam = 0.0
    for _ in range(iters):
        hv = (learner.grad(spec, theta + eps * v, X, y)
              - learner.grad(spec, theta - eps * v, X, y)) / (2 * eps)
        lam = float(np.linalg.norm(hv))
        if lam == 0.0:
            break
        v = hv / lam
    return lam
