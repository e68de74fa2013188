"""
The two networks of a group model

VaeModel compresses a 173-bin normalized HRTF into a 32-dim Gaussian latent
code and decodes it back. PredictorDnn maps the 30-dim anthropometry +
location input onto the same latent code.
"""
import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.errors import CheckpointError, InvalidArgumentError, NumericalFaultError
from app.neuralnet.layers import Dense, Layer, Parameter, Sequential, Sigmoid, dense_block

logger = logging.getLogger(__name__)

LATENT_DIM = 32
HRTF_DIM = 173
INPUT_DIM = 30


@dataclass(frozen=True)
class LatentGaussian:
    """Mean and log-variance of a diagonal Gaussian, (batch, 32) or (32,)"""
    mean: np.ndarray
    log_var: np.ndarray

    def __post_init__(self):
        if self.mean.shape != self.log_var.shape:
            raise InvalidArgumentError("LatentGaussian mean and log_var shapes differ")
        if not (np.all(np.isfinite(self.mean)) and np.all(np.isfinite(self.log_var))):
            raise NumericalFaultError("Non-finite latent code")

    @property
    def variance(self) -> np.ndarray:
        return np.exp(self.log_var)

    def stacked(self) -> np.ndarray:
        """[mean, log_var] concatenated along the feature axis"""
        return np.concatenate([self.mean, self.log_var], axis=-1)

    def sample(self, noise: np.ndarray) -> np.ndarray:
        return self.mean + np.exp(0.5 * self.log_var) * noise

    def row(self, i: int) -> "LatentGaussian":
        return LatentGaussian(self.mean[i], self.log_var[i])


class Network:
    """Shared plumbing: parameter/buffer collection, mode switching, state dicts"""

    kind = "network"

    def modules(self) -> List[Sequential]:
        raise NotImplementedError

    def architecture(self) -> Dict[str, Any]:
        raise NotImplementedError

    def parameters(self) -> List[Parameter]:
        return [p for m in self.modules() for p in m.parameters()]

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def train(self, mode: bool = True):
        for m in self.modules():
            m.train(mode)
        return self

    def eval(self):
        return self.train(False)

    @property
    def training(self) -> bool:
        return self.modules()[0].training

    def relu_signature(self) -> bytes:
        """Packed ReLU activation pattern of the most recent forward pass"""
        masks = [mask.ravel() for m in self.modules() for mask in m.relu_masks()]
        return np.packbits(np.concatenate(masks)).tobytes() if masks else b""

    def state_dict(self) -> Dict[str, np.ndarray]:
        state = {p.name: p.value.copy() for p in self.parameters()}
        for m in self.modules():
            for key, value in m.buffers().items():
                state[f"{m.name}.{key}"] = np.array(value, copy=True)
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]):
        expected = set(self.state_dict())
        if set(state) != expected:
            missing = sorted(expected - set(state))
            extra = sorted(set(state) - expected)
            raise CheckpointError(f"{self.kind} state mismatch: missing={missing[:3]} unexpected={extra[:3]}")
        for p in self.parameters():
            value = np.asarray(state[p.name], dtype=np.float64)
            if value.shape != p.value.shape:
                raise CheckpointError(f"{p.name}: shape {value.shape}, expected {p.value.shape}")
            p.value = value.copy()
            p.grad = np.zeros_like(p.value)
        by_name = {m.name: m for m in self.modules()}
        for key, value in state.items():
            module, _, rest = key.partition(".")
            if module in by_name and rest in by_name[module].buffers():
                by_name[module].set_buffer(rest, value)

    def parameter_vector(self) -> np.ndarray:
        return np.concatenate([p.value.ravel() for p in self.parameters()])


class VaeModel(Network):
    """
    Encoder 173 -> 128 -> 64 -> 32 (Dense/BN/ReLU) with linear mean and
    log-variance heads 32 -> 32; decoder 32 -> 32 -> 64 -> 128 -> 173 with
    Dense/BN/ReLU hidden layers and a sigmoid output.
    """

    kind = "vae"

    def __init__(self, seed: int = 0, input_dim: int = HRTF_DIM, hidden: Sequence[int] = (128, 64, 32),
                 latent_dim: int = LATENT_DIM, bn_momentum: float = 0.1, bn_eps: float = 1e-5):
        rng = np.random.default_rng(seed)
        self.seed = seed
        self.input_dim = input_dim
        self.hidden = tuple(hidden)
        self.latent_dim = latent_dim
        self._noise_rng = np.random.default_rng([seed, 1])

        widths = (input_dim,) + self.hidden
        enc: List[Layer] = []
        for i in range(len(self.hidden)):
            enc += dense_block(widths[i], widths[i + 1], rng, f"encoder.{i}", bn_momentum, bn_eps)
        self.encoder = Sequential(enc, name="encoder")
        self.mean_head = Sequential([Dense(self.hidden[-1], latent_dim, rng, name="mean_head.dense")], name="mean_head")
        self.logvar_head = Sequential([Dense(self.hidden[-1], latent_dim, rng, name="logvar_head.dense")],
                                      name="logvar_head")

        dec_widths = (latent_dim,) + tuple(reversed(self.hidden))
        dec: List[Layer] = []
        for i in range(len(self.hidden)):
            dec += dense_block(dec_widths[i], dec_widths[i + 1], rng, f"decoder.{i}", bn_momentum, bn_eps)
        dec += [Dense(dec_widths[-1], input_dim, rng, name="decoder.out"), Sigmoid(name="decoder.sigmoid")]
        self.decoder = Sequential(dec, name="decoder")

        self._latent: Optional[LatentGaussian] = None
        self._noise: Optional[np.ndarray] = None

    def modules(self) -> List[Sequential]:
        return [self.encoder, self.mean_head, self.logvar_head, self.decoder]

    def architecture(self) -> Dict[str, Any]:
        return {"input_dim": self.input_dim, "hidden": list(self.hidden), "latent_dim": self.latent_dim,
                "seed": self.seed}

    def encode(self, x: np.ndarray) -> LatentGaussian:
        h = self.encoder.forward(np.atleast_2d(x))
        return LatentGaussian(self.mean_head.forward(h), self.logvar_head.forward(h))

    def decode(self, z: np.ndarray) -> np.ndarray:
        return self.decoder.forward(np.atleast_2d(z))

    def forward(self, x: np.ndarray, noise: Optional[np.ndarray] = None,
                sample: Optional[bool] = None) -> Tuple[np.ndarray, LatentGaussian]:
        """
        Encode, sample, decode

        Args:
            x: (batch, 173) normalized HRTFs
            noise: standard-normal draw for the reparameterization; drawn from
                the model's seeded generator when omitted
            sample: reparameterize (True) or decode the latent mean (False);
                defaults to the train/eval mode. Batch norm follows the mode
                independently.

        Returns:
            (reconstruction, latent)
        """
        latent = self.encode(x)
        use_sample = self.training if sample is None else sample
        if use_sample:
            if noise is None:
                noise = self._noise_rng.standard_normal(latent.mean.shape)
            self._noise = np.broadcast_to(noise, latent.mean.shape)
            z = latent.sample(self._noise)
        else:
            self._noise = np.zeros_like(latent.mean)
            z = latent.mean
        self._latent = latent
        return self.decode(z), latent

    def backward(self, d_recon: np.ndarray, d_mean: np.ndarray, d_log_var: np.ndarray) -> np.ndarray:
        """
        Backpropagate reconstruction and direct latent gradients

        Returns:
            gradient with respect to the input batch
        """
        d_z = self.decoder.backward(d_recon)
        std = np.exp(0.5 * self._latent.log_var)
        d_mean_total = d_mean + d_z
        d_log_var_total = d_log_var + d_z * self._noise * 0.5 * std
        d_h = self.mean_head.backward(d_mean_total) + self.logvar_head.backward(d_log_var_total)
        return self.encoder.backward(d_h)

    def decoder_backward(self, d_recon: np.ndarray) -> np.ndarray:
        return self.decoder.backward(d_recon)

    def freeze(self):
        """Eval mode and no gradient accumulation"""
        for p in self.parameters():
            p.requires_grad = False
        return self.eval()


class PredictorDnn(Network):
    """
    Shared trunk 30 -> 64 -> 64, then mean and log-variance branches
    64 -> 128 -> 128 -> 32 each; linear 32-dim outputs.
    """

    kind = "predictor"

    def __init__(self, seed: int = 0, input_dim: int = INPUT_DIM, trunk: Sequence[int] = (64, 64),
                 branch: Sequence[int] = (128, 128), latent_dim: int = LATENT_DIM,
                 bn_momentum: float = 0.1, bn_eps: float = 1e-5):
        rng = np.random.default_rng(seed)
        self.seed = seed
        self.input_dim = input_dim
        self.trunk_widths = tuple(trunk)
        self.branch_widths = tuple(branch)
        self.latent_dim = latent_dim

        widths = (input_dim,) + self.trunk_widths
        layers: List[Layer] = []
        for i in range(len(self.trunk_widths)):
            layers += dense_block(widths[i], widths[i + 1], rng, f"trunk.{i}", bn_momentum, bn_eps)
        self.trunk = Sequential(layers, name="trunk")
        self.mean_branch = self._branch("mean_branch", rng, bn_momentum, bn_eps)
        self.logvar_branch = self._branch("logvar_branch", rng, bn_momentum, bn_eps)

    def _branch(self, name: str, rng: np.random.Generator, momentum: float, eps: float) -> Sequential:
        widths = (self.trunk_widths[-1],) + self.branch_widths
        layers: List[Layer] = []
        for i in range(len(self.branch_widths)):
            layers += dense_block(widths[i], widths[i + 1], rng, f"{name}.{i}", momentum, eps)
        layers.append(Dense(widths[-1], self.latent_dim, rng, name=f"{name}.out"))
        return Sequential(layers, name=name)

    def modules(self) -> List[Sequential]:
        return [self.trunk, self.mean_branch, self.logvar_branch]

    def architecture(self) -> Dict[str, Any]:
        return {"input_dim": self.input_dim, "trunk": list(self.trunk_widths),
                "branch": list(self.branch_widths), "latent_dim": self.latent_dim, "seed": self.seed}

    def forward(self, x: np.ndarray) -> LatentGaussian:
        h = self.trunk.forward(np.atleast_2d(x))
        return LatentGaussian(self.mean_branch.forward(h), self.logvar_branch.forward(h))

    def backward(self, d_mean: np.ndarray, d_log_var: np.ndarray) -> np.ndarray:
        d_h = self.mean_branch.backward(d_mean) + self.logvar_branch.backward(d_log_var)
        return self.trunk.backward(d_h)


def build_network(kind: str, architecture: Dict[str, Any]) -> Network:
    """Instantiate an untrained network from a checkpoint's architecture block"""
    if kind == VaeModel.kind:
        return VaeModel(seed=architecture.get("seed", 0), input_dim=architecture["input_dim"],
                        hidden=architecture["hidden"], latent_dim=architecture["latent_dim"])
    if kind == PredictorDnn.kind:
        return PredictorDnn(seed=architecture.get("seed", 0), input_dim=architecture["input_dim"],
                            trunk=architecture["trunk"], branch=architecture["branch"],
                            latent_dim=architecture["latent_dim"])
    raise CheckpointError(f"Unknown network kind {kind!r}")
