"""
Finite-difference verification of the hand-written backward passes

For a sample of scalar parameters the analytic gradient is compared with the
central difference (L(p + h) - L(p - h)) / 2h. Rules:
  * relative error = |g_a - g_fd| / max(|g_a|, |g_fd|, 1e-8)
  * a parameter whose perturbation changes any ReLU activation pattern
    (the base pass, +h and -h disagree) sits on a kink and is excluded
  * a parameter whose analytic and numeric gradients are both below
    ``grad_floor`` is counted separately; at h = 1e-5 the difference
    quotient cannot resolve it to the requested relative precision
Batch norm must be in eval mode so the loss is a smooth function of the
parameters.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.models.preproc import MinMaxStats
from app.neuralnet.layers import Dense, Parameter, Sequential
from app.neuralnet.losses import dnn_loss, vae_loss
from app.neuralnet.networks import INPUT_DIM, LatentGaussian, PredictorDnn, VaeModel

logger = logging.getLogger(__name__)


class Objective:
    """A scalar loss over a fixed batch with an analytic gradient"""

    name = "objective"

    def parameters(self) -> List[Parameter]:
        raise NotImplementedError

    def loss(self) -> Tuple[float, bytes]:
        """Forward only: (loss value, ReLU activation signature)"""
        raise NotImplementedError

    def analytic(self):
        """Zero, then fill Parameter.grad for every parameter"""
        raise NotImplementedError


class SequentialMseObjective(Objective):
    """Mean squared error of a Sequential stack against fixed targets"""

    def __init__(self, net: Sequential, x: np.ndarray, y: np.ndarray, name: str = "sequential-mse"):
        self.net = net.eval()
        self.x = x
        self.y = y
        self.name = name

    def parameters(self) -> List[Parameter]:
        return self.net.parameters()

    def _signature(self) -> bytes:
        masks = [m.ravel() for m in self.net.relu_masks()]
        return np.packbits(np.concatenate(masks)).tobytes() if masks else b""

    def loss(self) -> Tuple[float, bytes]:
        out = self.net.forward(self.x)
        return float(np.mean((out - self.y) ** 2)), self._signature()

    def analytic(self):
        for p in self.parameters():
            p.zero_grad()
        out = self.net.forward(self.x)
        self.net.backward(2.0 * (out - self.y) / out.size)


class VaeObjective(Objective):
    """
    vae_loss of an eval-mode VAE on a fixed batch

    With ``noise`` the latent is reparameterized with that fixed draw, so the
    log-variance head also receives gradient through the sample.
    """

    name = "vae"

    def __init__(self, vae: VaeModel, x: np.ndarray, beta: float, noise: Optional[np.ndarray] = None,
                 name: Optional[str] = None):
        self.vae = vae.eval()
        self.x = x
        self.beta = beta
        self.noise = noise
        if name is not None:
            self.name = name

    def parameters(self) -> List[Parameter]:
        return self.vae.parameters()

    def _forward(self):
        if self.noise is None:
            recon, latent = self.vae.forward(self.x)
        else:
            recon, latent = self.vae.forward(self.x, noise=self.noise, sample=True)
        return vae_loss(recon, self.x, latent, self.beta)

    def loss(self) -> Tuple[float, bytes]:
        return self._forward().value, self.vae.relu_signature()

    def analytic(self):
        self.vae.zero_grad()
        result = self._forward()
        self.vae.backward(result.grads["recon"], result.grads["mean"], result.grads["log_var"])


class DnnObjective(Objective):
    """dnn_loss of an eval-mode predictor through a frozen decoder"""

    name = "dnn"

    def __init__(self, predictor: PredictorDnn, vae: VaeModel, x: np.ndarray, target_hrtf: np.ndarray,
                 lambda_lsd: float, minmax: MinMaxStats):
        self.predictor = predictor.eval()
        self.vae = vae.freeze()
        self.x = x
        self.target_hrtf = target_hrtf
        self.lambda_lsd = lambda_lsd
        self.minmax = minmax
        self.target_latent = self.vae.encode(target_hrtf)

    def parameters(self) -> List[Parameter]:
        return self.predictor.parameters()

    def _forward(self):
        predicted = self.predictor.forward(self.x)
        decoded = self.vae.decode(predicted.mean)
        return dnn_loss(predicted, self.target_latent, decoded, self.target_hrtf, self.lambda_lsd, self.minmax)

    def loss(self) -> Tuple[float, bytes]:
        value = self._forward().value
        return value, self.predictor.relu_signature() + self.vae.relu_signature()

    def analytic(self):
        self.predictor.zero_grad()
        result = self._forward()
        d_z = self.vae.decoder_backward(result.grads["decoded"])
        self.predictor.backward(result.grads["mean"] + d_z, result.grads["log_var"])


@dataclass
class GradCheckReport:
    name: str
    max_rel_error: float
    n_checked: int
    n_kink_excluded: int
    n_below_floor: int
    tolerance: float
    worst_parameter: Optional[str] = None
    excluded: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{self.name}: max rel error {self.max_rel_error:.3e} over {self.n_checked} parameters "
                f"({self.n_kink_excluded} on ReLU kinks, {self.n_below_floor} below floor) [{status}]")


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)


def gradient_check(objective: Objective, n_samples: int = 500, h: float = 1e-5, tolerance: float = 1e-4,
                   seed: int = 0, grad_floor: float = 1e-7,
                   targets: Optional[Sequence[Tuple[str, int]]] = None) -> GradCheckReport:
    """
    Compare analytic and central-difference gradients

    Args:
        objective: loss to verify
        n_samples: parameters to check (kink/floor exclusions do not count)
        h: finite-difference step
        tolerance: pass threshold on the max relative error
        seed: parameter sampling seed
        grad_floor: both gradients below this magnitude -> not resolvable
        targets: explicit (parameter name, flat index) pairs instead of sampling

    Returns:
        GradCheckReport
    """
    params = objective.parameters()
    objective.analytic()
    analytic = [p.grad.copy() for p in params]
    by_name = {p.name: k for k, p in enumerate(params)}

    if targets is not None:
        candidates = [(by_name[name], int(i)) for name, i in targets]
    else:
        offsets = np.cumsum([0] + [p.size for p in params])
        order = np.random.default_rng(seed).permutation(int(offsets[-1]))
        owners = np.searchsorted(offsets, order, side="right") - 1
        candidates = [(int(k), int(flat - offsets[k])) for k, flat in zip(owners, order)]

    worst, worst_name = 0.0, None
    n_checked = n_kink = n_floor = 0
    excluded: List[str] = []
    _, base_signature = objective.loss()
    for k, i in candidates:
        if targets is None and n_checked >= n_samples:
            break
        p = params[k]
        original = p.value.flat[i]
        p.value.flat[i] = original + h
        plus, plus_signature = objective.loss()
        p.value.flat[i] = original - h
        minus, minus_signature = objective.loss()
        p.value.flat[i] = original

        label = f"{p.name}[{i}]"
        if plus_signature != base_signature or minus_signature != base_signature:
            n_kink += 1
            excluded.append(label)
            continue
        numeric = (plus - minus) / (2.0 * h)
        g = float(analytic[k].flat[i])
        if max(abs(g), abs(numeric)) < grad_floor:
            n_floor += 1
            continue
        err = relative_error(g, numeric)
        n_checked += 1
        if err > worst:
            worst, worst_name = err, label

    report = GradCheckReport(
        name=objective.name, max_rel_error=worst, n_checked=n_checked, n_kink_excluded=n_kink,
        n_below_floor=n_floor, tolerance=tolerance, worst_parameter=worst_name, excluded=excluded,
    )
    logger.info(str(report))
    return report


# ============================================================================
# Standard suite (used by the gradcheck command)
# ============================================================================

def linear_mse_objective(seed: int = 0, batch: int = 16) -> SequentialMseObjective:
    rng = np.random.default_rng(seed)
    net = Sequential([Dense(8, 4, rng, name="linear")], name="linear")
    net.layers[0].bias.value = rng.normal(size=4)
    x = rng.normal(size=(batch, 8))
    y = rng.normal(size=(batch, 4))
    return SequentialMseObjective(net, x, y, name="linear-mse")


def random_hrtf_batch(rng: np.random.Generator, batch: int) -> np.ndarray:
    return rng.uniform(0.05, 0.95, size=(batch, 173))


def random_model_inputs(rng: np.random.Generator, batch: int) -> np.ndarray:
    anthro = rng.uniform(0.05, 0.95, size=(batch, INPUT_DIM - 3))
    xyz = rng.normal(size=(batch, 3))
    xyz /= np.linalg.norm(xyz, axis=1, keepdims=True)
    return np.hstack([anthro, xyz])


def vae_objective(seed: int = 0, batch: int = 8, beta: float = 1e-3) -> VaeObjective:
    rng = np.random.default_rng([seed, 2])
    return VaeObjective(VaeModel(seed=seed), random_hrtf_batch(rng, batch), beta)


def vae_sampled_objective(seed: int = 0, batch: int = 8, beta: float = 1e-3) -> VaeObjective:
    """VAE objective through the reparameterized sample, noise held fixed"""
    rng = np.random.default_rng([seed, 4])
    vae = VaeModel(seed=seed)
    x = random_hrtf_batch(rng, batch)
    noise = rng.standard_normal((batch, vae.latent_dim))
    return VaeObjective(vae, x, beta, noise=noise, name="vae-sampled")


def dnn_objective(seed: int = 0, batch: int = 8, lambda_lsd: float = 0.01) -> DnnObjective:
    rng = np.random.default_rng([seed, 3])
    minmax = MinMaxStats(np.float64(-40.0), np.float64(10.0))
    return DnnObjective(PredictorDnn(seed=seed), VaeModel(seed=seed + 1), random_model_inputs(rng, batch),
                        random_hrtf_batch(rng, batch), lambda_lsd, minmax)


def run_gradcheck_suite(seed: int = 0, n_samples: int = 500, tolerance: float = 1e-4,
                        beta: float = 1e-3, lambda_lsd: float = 0.01) -> List[GradCheckReport]:
    """Linear sanity check, then both full networks with both losses"""
    objectives = [
        (linear_mse_objective(seed), 1e-7),
        (vae_objective(seed, beta=beta), tolerance),
        (vae_sampled_objective(seed, beta=beta), tolerance),
        (dnn_objective(seed, lambda_lsd=lambda_lsd), tolerance),
    ]
    return [gradient_check(obj, n_samples=n_samples, tolerance=tol, seed=seed) for obj, tol in objectives]
