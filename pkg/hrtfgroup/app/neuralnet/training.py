"""
Mini-batch training loops for the VAE and the latent predictor
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Iterator, List, Optional

import numpy as np
from tqdm import tqdm

from app.config import DnnTrainConfig, VaeTrainConfig, settings
from app.models.preproc import MinMaxStats
from app.neuralnet.losses import dnn_loss, lsd_db_rows, vae_loss
from app.neuralnet.networks import LatentGaussian, PredictorDnn, VaeModel
from app.neuralnet.optim import Adam

logger = logging.getLogger(__name__)

# Called with the row indices of every training batch before it is used
BatchGuard = Callable[[np.ndarray], None]


@dataclass
class TrainingHistory:
    losses: List[float] = field(default_factory=list)
    validation_lsd: List[float] = field(default_factory=list)
    best_epoch: Optional[int] = None
    stopped_early: bool = False


def iterate_batches(n_rows: int, batch_size: int, rng: np.random.Generator) -> Iterator[np.ndarray]:
    """Shuffled row-index batches; a trailing batch of one row is dropped"""
    order = rng.permutation(n_rows)
    for start in range(0, n_rows, batch_size):
        batch = order[start:start + batch_size]
        if batch.size < 2:
            continue
        yield batch


def _log_epoch(label: str, epoch: int, total: int, log_every: int, message: str):
    level = logging.INFO if (epoch + 1) % max(1, log_every) == 0 or epoch + 1 == total else logging.DEBUG
    logger.log(level, f"[{label}] epoch {epoch + 1}/{total} {message}")


def train_vae(vae: VaeModel, data: np.ndarray, config: VaeTrainConfig, rng: np.random.Generator,
              label: str = "vae", guard: Optional[BatchGuard] = None) -> TrainingHistory:
    """
    Train a VAE on normalized HRTFs

    Args:
        vae: model to train in place
        data: (n, 173) normalized HRTFs
        config: optimizer and schedule
        rng: source of shuffling and reparameterization noise
        label: log prefix
        guard: provenance check run on every batch

    Returns:
        TrainingHistory with the mean training loss per epoch
    """
    optimizer = Adam(vae.parameters(), config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps)
    history = TrainingHistory()
    vae.train()
    epochs = range(config.epochs)
    for epoch in tqdm(epochs, desc=f"{label} VAE", leave=False, disable=not settings.progress):
        total, count = 0.0, 0
        for batch in iterate_batches(data.shape[0], config.batch_size, rng):
            if guard is not None:
                guard(batch)
            x = data[batch]
            noise = rng.standard_normal((batch.size, vae.latent_dim))
            optimizer.zero_grad()
            recon, latent = vae.forward(x, noise=noise)
            result = vae_loss(recon, x, latent, config.beta)
            vae.backward(result.grads["recon"], result.grads["mean"], result.grads["log_var"])
            optimizer.step()
            total += result.value * batch.size
            count += batch.size
        epoch_loss = total / max(count, 1)
        history.losses.append(epoch_loss)
        _log_epoch(label, epoch, config.epochs, config.log_every, f"vae loss {epoch_loss:.6f}")
    vae.eval()
    return history


def reconstruction_lsd(vae: VaeModel, data: np.ndarray, minmax: MinMaxStats) -> float:
    """Mean dB LSD between eval-mode reconstructions and their inputs"""
    vae.eval()
    recon, _ = vae.forward(data)
    span = minmax.span
    return float(np.mean(lsd_db_rows(recon * span, data * span)))


def predict_normalized(predictor: PredictorDnn, vae: VaeModel, inputs: np.ndarray) -> np.ndarray:
    """Eval-mode predictor -> latent mean -> decoder"""
    predictor.eval()
    vae.eval()
    return vae.decode(predictor.forward(inputs).mean)


def train_predictor(predictor: PredictorDnn, vae: VaeModel, inputs: np.ndarray, targets: np.ndarray,
                    minmax: MinMaxStats, config: DnnTrainConfig, rng: np.random.Generator,
                    val_inputs: Optional[np.ndarray] = None, val_targets: Optional[np.ndarray] = None,
                    label: str = "dnn", guard: Optional[BatchGuard] = None) -> TrainingHistory:
    """
    Train the latent predictor against a frozen VAE

    The VAE is frozen (eval mode, no gradient accumulation) before the first
    step; only predictor parameters are handed to the optimizer. With a
    validation set, training stops after ``patience`` epochs without a
    validation-LSD improvement and the best parameters are restored.

    Returns:
        TrainingHistory with per-epoch training loss and validation LSD
    """
    vae.freeze()
    target_latent = vae.encode(targets)
    optimizer = Adam(predictor.parameters(), config.learning_rate, config.adam_beta1, config.adam_beta2,
                     config.adam_eps)
    history = TrainingHistory()
    use_validation = val_inputs is not None and val_inputs.shape[0] > 0
    best_lsd, best_state, stale = np.inf, None, 0

    for epoch in tqdm(range(config.epochs), desc=f"{label} DNN", leave=False, disable=not settings.progress):
        predictor.train()
        total, count = 0.0, 0
        for batch in iterate_batches(inputs.shape[0], config.batch_size, rng):
            if guard is not None:
                guard(batch)
            optimizer.zero_grad()
            predicted = predictor.forward(inputs[batch])
            decoded = vae.decode(predicted.mean)
            tl = LatentGaussian(target_latent.mean[batch], target_latent.log_var[batch])
            result = dnn_loss(predicted, tl, decoded, targets[batch], config.lambda_lsd, minmax)
            d_z = vae.decoder_backward(result.grads["decoded"])
            predictor.backward(result.grads["mean"] + d_z, result.grads["log_var"])
            optimizer.step()
            total += result.value * batch.size
            count += batch.size
        epoch_loss = total / max(count, 1)
        history.losses.append(epoch_loss)

        message = f"dnn loss {epoch_loss:.6f}"
        if use_validation:
            decoded = predict_normalized(predictor, vae, val_inputs)
            val_lsd = float(np.mean(lsd_db_rows(decoded * minmax.span, val_targets * minmax.span)))
            history.validation_lsd.append(val_lsd)
            message += f" val lsd {val_lsd:.4f} dB"
            if val_lsd < best_lsd:
                best_lsd, best_state, stale = val_lsd, predictor.state_dict(), 0
                history.best_epoch = epoch
            else:
                stale += 1
        _log_epoch(label, epoch, config.epochs, config.log_every, message)
        if use_validation and stale >= config.patience:
            logger.info(f"[{label}] early stop at epoch {epoch + 1}, best epoch {history.best_epoch + 1} "
                        f"({best_lsd:.4f} dB)")
            history.stopped_early = True
            break

    if best_state is not None:
        predictor.load_state_dict(best_state)
    predictor.eval()
    return history
