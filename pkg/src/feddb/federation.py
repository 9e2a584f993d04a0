"""Federation protocol: round loop, local updates, and model aggregation.

Two aggregation schemes are provided.  Plain federated averaging weights the
selected clients uniformly.  Debiased aggregation instead optimizes the
weights by gradient descent so that the weight-averaged prediction prior of
the participating clients comes as close to uniform as possible, then mixes
the models with those weights.
"""

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from . import metrics, nn, seeding, semisup
from .data import ClientDatasets, LabeledSet, PartitionSpec, generate_synthetic, partition
from .errors import ConfigError, NumericalError, ProtocolError
from .simplex import require_simplex, uniform

SQRT_EPS = 1e-12  # keeps the root in the aggregation objective differentiable


@dataclass(frozen=True)
class MethodSpec:
    """What a method arm does with unlabeled data and at aggregation time."""

    uses_unlabeled: bool
    debias: bool
    dma: bool


METHODS = {
    "fedavg_labeled_only": MethodSpec(uses_unlabeled=False, debias=False, dma=False),
    "fixmatch": MethodSpec(uses_unlabeled=True, debias=False, dma=False),
    "fixmatch+dpl": MethodSpec(uses_unlabeled=True, debias=True, dma=False),
    "feddb_no_dma": MethodSpec(uses_unlabeled=True, debias=True, dma=False),
    "feddb": MethodSpec(uses_unlabeled=True, debias=True, dma=True),
}


@dataclass
class ClientState:
    """Per-client persistent state; the local model itself is transient."""

    client_id: int
    datasets: ClientDatasets
    appu: semisup.AppUState


@dataclass
class ClientUpdateResult:
    params: nn.ModelParams
    appu: Optional[np.ndarray]          # accumulated prior estimate (debias arms)
    pseudo_labels: Optional[np.ndarray]  # this round's pseudo-label matrix


@dataclass
class RunResult:
    method: str
    run_seed: int
    rounds: List[metrics.RoundMetrics]
    final_model: nn.ModelParams

    @property
    def best_balanced_accuracy(self) -> float:
        if not self.rounds:
            return 0.0
        return max(r.balanced_test_accuracy for r in self.rounds)


def select_clients(n_clients: int, activation_rate: float, rng: np.random.Generator) -> np.ndarray:
    """Uniform sample without replacement of round(M*C) client indices."""
    n_active = int(round(n_clients * activation_rate))
    if n_active < 1:
        raise ConfigError(
            f"activation rate {activation_rate} selects no clients out of {n_clients}"
        )
    return np.sort(rng.choice(n_clients, size=n_active, replace=False))


def client_streams(run_seed: int, round_idx: int, client_id: int) -> dict:
    """Independent per-purpose generators for one client's local update."""
    return {
        "pseudo": seeding.substream(run_seed, seeding.PSEUDO, round_idx, client_id),
        "sup": seeding.substream(run_seed, seeding.SUP, round_idx, client_id),
        "unsup": seeding.substream(run_seed, seeding.UNSUP, round_idx, client_id),
        "appu": seeding.substream(run_seed, seeding.APPU, round_idx, client_id),
    }


@dataclass(frozen=True)
class LocalTrainConfig:
    epochs: int
    lr: float
    momentum: float
    tau: float
    lambda_u: float
    sigma_weak: float
    sigma_strong: float
    mask_prob: float


def client_update(
    global_params: nn.ModelParams,
    client: ClientState,
    method: MethodSpec,
    cfg: LocalTrainConfig,
    run_seed: int,
    round_idx: int,
) -> ClientUpdateResult:
    """One client's local training pass starting from the global model.

    Pseudo-labels are computed once, before the epoch loop, and held fixed
    across all epochs.  On debias arms a fresh prior estimate is blended into
    the client's accumulator after every epoch's weight update.
    """
    streams = client_streams(run_seed, round_idx, client.client_id)
    local = global_params.copy()
    labeled = client.datasets.labeled
    unlabeled_x = client.datasets.unlabeled.x

    pseudo = None
    if method.uses_unlabeled:
        if method.debias:
            pseudo, _ = semisup.debiased_pseudo_labels(
                local, unlabeled_x, client.appu, cfg.tau, streams["pseudo"], cfg.sigma_weak
            )
        else:
            pseudo = semisup.baseline_pseudo_labels(
                local, unlabeled_x, cfg.tau, streams["pseudo"], cfg.sigma_weak
            )

    if cfg.epochs > 0:
        opt = nn.OptimizerState.fresh(local, cfg.lr, cfg.momentum)
    for _ in range(cfg.epochs):
        if method.debias:
            fresh = semisup.compute_appu(local, unlabeled_x, streams["appu"], cfg.sigma_weak)
        loss_s, grads_s = semisup.supervised_loss(local, labeled, streams["sup"], cfg.sigma_weak)
        if method.uses_unlabeled:
            loss_u, grads_u = semisup.unsupervised_loss(
                local, unlabeled_x, pseudo, streams["unsup"], cfg.sigma_strong, cfg.mask_prob
            )
            _, grads = semisup.combine_losses(loss_s, grads_s, loss_u, grads_u, cfg.lambda_u)
        else:
            grads = grads_s
        local = nn.sgd_step(local, grads, opt)
        if method.debias:
            client.appu.accumulate(fresh)

    appu_out = client.appu.value if method.debias else None
    return ClientUpdateResult(local, appu_out, pseudo)


def fedavg_aggregate(models: List[nn.ModelParams], beta: np.ndarray) -> nn.ModelParams:
    """Elementwise convex combination of models with simplex weights."""
    if len(models) == 0:
        raise ProtocolError("nothing to aggregate")
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (len(models),):
        raise ProtocolError(f"got {beta.shape[0] if beta.ndim else 0} weights for {len(models)} models")
    require_simplex(beta, "aggregation weights")
    ref = models[0]
    for m in models[1:]:
        for a, b in zip(ref.arrays(), m.arrays()):
            if a.shape != b.shape:
                raise ProtocolError(f"model shape mismatch: {a.shape} vs {b.shape}")
    out = nn.ModelParams(
        [np.zeros_like(w) for w in ref.weights],
        [np.zeros_like(b) for b in ref.biases],
    )
    for coeff, m in zip(beta, models):
        for acc, src in zip(out.arrays(), m.arrays()):
            acc += coeff * src
    return out


def aggregation_loss(beta: np.ndarray, priors: np.ndarray) -> float:
    """Euclidean distance between the weight-averaged prior and uniform."""
    k = priors.shape[1]
    residual = priors.T @ beta - uniform(k)
    return float(np.sqrt(residual @ residual + SQRT_EPS))


def aggregation_loss_grad(beta: np.ndarray, priors: np.ndarray) -> np.ndarray:
    """Gradient of aggregation_loss w.r.t. beta treated as free parameters."""
    k = priors.shape[1]
    residual = priors.T @ beta - uniform(k)
    denom = np.sqrt(residual @ residual + SQRT_EPS)
    return (priors @ residual) / denom


def dma(
    models: List[nn.ModelParams],
    priors: List[np.ndarray],
    e_aggr: int,
    eta_aggr: float,
):
    """Debiased model aggregation.

    Starting from uniform weights, alternates an unconstrained gradient step
    on the distance-to-uniform objective with a softmax reprojection, then
    mixes the models with the final weights.  Returns
    (model, beta, initial loss, final loss).
    """
    if len(models) != len(priors) or len(models) == 0:
        raise ProtocolError("need one prior estimate per model")
    stacked = np.stack([require_simplex(p, "client prior estimate") for p in priors])
    m = len(models)
    beta = np.full(m, 1.0 / m)
    loss_initial = aggregation_loss(beta, stacked)
    for _ in range(e_aggr):
        beta = nn.softmax(beta - eta_aggr * aggregation_loss_grad(beta, stacked))
    loss_final = aggregation_loss(beta, stacked)
    return fedavg_aggregate(models, beta), beta, loss_initial, loss_final


def _labeled_histograms(clients: List[ClientState], n_classes: int) -> List[np.ndarray]:
    return [c.datasets.labeled.class_histogram(n_classes) for c in clients]


def _round_metrics(
    round_idx: int,
    global_params: nn.ModelParams,
    clients: List[ClientState],
    selected: np.ndarray,
    results: List[ClientUpdateResult],
    test: LabeledSet,
    run_seed: int,
    sigma_weak: float,
    l_aggr: tuple,
) -> metrics.RoundMetrics:
    per_class, balanced = metrics.classwise_accuracy(global_params, test)
    truth = metrics.normalized_bias(per_class)
    n_classes = per_class.size

    js_appu, js_label = [], []
    for cid in selected:
        client = clients[cid]
        rng = seeding.substream(run_seed, seeding.METRICS, round_idx, int(cid))
        appu = semisup.compute_appu(global_params, client.datasets.unlabeled.x, rng, sigma_weak)
        js_appu.append(metrics.js_divergence(appu, truth))
        js_label.append(
            metrics.js_divergence(client.datasets.labeled.class_histogram(n_classes), truth)
        )

    # Pool this round's pseudo-labels over the selected clients.
    n_total = n_confident = n_correct = 0
    for cid, res in zip(selected, results):
        if res.pseudo_labels is None:
            continue
        hidden = clients[cid].datasets.unlabeled.hidden_y
        confident = res.pseudo_labels.sum(axis=1) > 0.0
        assigned = np.argmax(res.pseudo_labels[confident], axis=1)
        n_total += res.pseudo_labels.shape[0]
        n_confident += int(confident.sum())
        n_correct += int(np.sum(assigned == hidden[confident]))
    pseudo_acc = (n_correct / n_confident) if n_confident else None
    pseudo_ratio = (n_confident / n_total) if n_total else 0.0

    return metrics.RoundMetrics(
        round=round_idx,
        balanced_test_accuracy=balanced,
        classwise_accuracy=per_class,
        js_appu_vs_truth=float(np.mean(js_appu)),
        js_labeldist_vs_truth=float(np.mean(js_label)),
        pseudo_accuracy=pseudo_acc,
        pseudo_ratio=pseudo_ratio,
        l_aggr_initial=l_aggr[0],
        l_aggr_final=l_aggr[1],
    )


@dataclass(frozen=True)
class ExperimentSetup:
    """Everything run_experiment needs besides the method arm and seed."""

    n_clients: int
    activation_rate: float
    rounds: int
    local: LocalTrainConfig
    e_aggr: int
    eta_aggr: float
    gamma: float
    n_classes: int
    dim: int
    n_labeled: int
    n_unlabeled: int
    class_separation: float
    noise_scale: float
    arrangement: str
    test_per_class: int
    delta: float
    iid: bool
    hidden_dims: tuple = (64,)
    shared_draw: bool = False
    include_labeled_in_unlabeled: bool = True


def build_clients(setup: ExperimentSetup, run_seed: int):
    """Generate the corpus, partition it, and wrap per-client state."""
    per_class = (setup.n_labeled + setup.n_unlabeled) // setup.n_classes
    if per_class * setup.n_classes != setup.n_labeled + setup.n_unlabeled:
        raise ConfigError("labeled + unlabeled total must be divisible by the class count")
    train, test = generate_synthetic(
        setup.n_classes,
        setup.dim,
        per_class,
        setup.class_separation,
        setup.noise_scale,
        seed=seeding.derived_seed(run_seed, seeding.DATA),
        test_per_class=setup.test_per_class,
        arrangement=setup.arrangement,
    )
    spec = PartitionSpec(
        n_clients=setup.n_clients,
        n_classes=setup.n_classes,
        n_labeled_total=setup.n_labeled,
        delta=setup.delta,
        iid=setup.iid,
        n_unlabeled_total=setup.n_unlabeled,
        seed=seeding.derived_seed(run_seed, seeding.PARTITION),
        shared_draw=setup.shared_draw,
        include_labeled_in_unlabeled=setup.include_labeled_in_unlabeled,
    )
    datasets = partition(train, spec)
    clients = [
        ClientState(cid, ds, semisup.AppUState(setup.gamma)) for cid, ds in enumerate(datasets)
    ]
    return clients, test


def run_experiment(setup: ExperimentSetup, method_name: str, run_seed: int) -> RunResult:
    """Run one full federated training for one method arm.

    Deterministic under (setup, method_name, run_seed).  On numerical
    failure, raises NumericalError carrying the rounds completed so far in
    ``partial_log``.
    """
    try:
        method = METHODS[method_name]
    except KeyError:
        raise ConfigError(
            f"unknown method {method_name!r}; choose from {sorted(METHODS)}"
        ) from None

    clients, test = build_clients(setup, run_seed)
    global_params = nn.init_mlp(
        setup.dim,
        setup.hidden_dims,
        setup.n_classes,
        seeding.substream(run_seed, seeding.INIT),
    )

    log: List[metrics.RoundMetrics] = []
    try:
        for t in range(1, setup.rounds + 1):
            selected = select_clients(
                setup.n_clients,
                setup.activation_rate,
                seeding.substream(run_seed, seeding.SELECT, t),
            )
            results = [
                client_update(global_params, clients[cid], method, setup.local, run_seed, t)
                for cid in selected
            ]
            models = [r.params for r in results]
            if method.dma:
                global_params, _, l_init, l_final = dma(
                    models, [r.appu for r in results], setup.e_aggr, setup.eta_aggr
                )
                l_aggr = (l_init, l_final)
            else:
                global_params = fedavg_aggregate(models, uniform(len(models)))
                l_aggr = (None, None)
            log.append(
                _round_metrics(
                    t, global_params, clients, selected, results, test,
                    run_seed, setup.local.sigma_weak, l_aggr,
                )
            )
    except NumericalError as exc:
        raise NumericalError(
            f"run failed at round {len(log) + 1}: {exc}", partial_log=log
        ) from exc
    return RunResult(method_name, run_seed, log, global_params)
