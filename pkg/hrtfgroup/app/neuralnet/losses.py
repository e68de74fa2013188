"""
Training objectives with their analytic gradients
"""
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from app.errors import ConfigurationError, InvalidArgumentError
from app.models.preproc import MinMaxStats
from app.neuralnet.networks import LatentGaussian


@dataclass
class LossResult:
    """
    Scalar loss, its named terms and gradients keyed by what they flow into

    vae_loss fills recon/mean/log_var; dnn_loss fills mean/log_var/decoded.
    """
    value: float
    terms: Dict[str, float] = field(default_factory=dict)
    grads: Dict[str, np.ndarray] = field(default_factory=dict)


def kl_divergence(latent: LatentGaussian) -> np.ndarray:
    """Per-sample KL(N(mean, exp(log_var)) || N(0, I)), summed over latent dims"""
    mean = np.atleast_2d(latent.mean)
    log_var = np.atleast_2d(latent.log_var)
    return -0.5 * np.sum(1.0 + log_var - mean ** 2 - np.exp(log_var), axis=1)


def vae_loss(reconstruction: np.ndarray, target: np.ndarray, latent: LatentGaussian, beta: float) -> LossResult:
    """
    MSE over all bins of the batch plus beta times the batch-mean KL

    Returns:
        LossResult with grads 'recon', 'mean', 'log_var'
    """
    recon = np.atleast_2d(reconstruction)
    tgt = np.atleast_2d(target)
    if recon.shape != tgt.shape:
        raise InvalidArgumentError(f"Reconstruction shape {recon.shape} != target shape {tgt.shape}")
    batch = recon.shape[0]
    residual = recon - tgt
    mse = float(np.mean(residual ** 2))

    mean = np.atleast_2d(latent.mean)
    log_var = np.atleast_2d(latent.log_var)
    kl = float(np.mean(kl_divergence(latent)))

    return LossResult(
        value=mse + beta * kl,
        terms={"mse": mse, "kl": kl},
        grads={
            "recon": 2.0 * residual / residual.size,
            "mean": beta * mean / batch,
            "log_var": beta * 0.5 * (np.exp(log_var) - 1.0) / batch,
        },
    )


def lsd_db_rows(a_db: np.ndarray, b_db: np.ndarray) -> np.ndarray:
    """Row-wise log-spectral distance of dB spectra"""
    return np.sqrt(np.mean((a_db - b_db) ** 2, axis=-1))


def dnn_loss(predicted: LatentGaussian, target_latent: LatentGaussian, decoded: np.ndarray,
             target_hrtf: np.ndarray, lambda_lsd: float, minmax: MinMaxStats,
             target_minmax: Optional[MinMaxStats] = None) -> LossResult:
    """
    Latent MSE over the concatenated (mean, log_var) plus lambda_lsd times the
    batch-mean LSD between the denormalized decoded and target HRTFs (dB)

    Args:
        predicted: predictor output
        target_latent: frozen encoder output on target_hrtf
        decoded: frozen decoder output on predicted.mean, normalized
        target_hrtf: normalized target HRTFs
        lambda_lsd: weight of the LSD term
        minmax: statistics the decoder output is expressed in
        target_minmax: statistics target_hrtf was normalized with, when known

    Returns:
        LossResult with grads 'mean', 'log_var', 'decoded'

    Raises:
        ConfigurationError: decoded and target use different normalizations
    """
    if target_minmax is not None and target_minmax != minmax:
        raise ConfigurationError("Decoded and target HRTFs were normalized with different min-max statistics")

    pred = np.atleast_2d(predicted.stacked())
    tgt = np.atleast_2d(target_latent.stacked())
    if pred.shape != tgt.shape:
        raise InvalidArgumentError(f"Predicted latent {pred.shape} != target latent {tgt.shape}")
    batch, width = pred.shape
    half = width // 2
    diff = pred - tgt
    latent_mse = float(np.mean(diff ** 2))
    d_latent = 2.0 * diff / diff.size

    dec = np.atleast_2d(decoded)
    target = np.atleast_2d(target_hrtf)
    span = minmax.span
    delta_db = (dec - target) * span
    lsd_rows = np.sqrt(np.mean(delta_db ** 2, axis=1))
    lsd_mean = float(np.mean(lsd_rows))

    n_bins = dec.shape[1]
    safe = np.where(lsd_rows > 0.0, lsd_rows, 1.0)
    d_decoded = np.where(lsd_rows[:, None] > 0.0, delta_db * span / (n_bins * safe[:, None]), 0.0)
    d_decoded *= lambda_lsd / batch

    return LossResult(
        value=latent_mse + lambda_lsd * lsd_mean,
        terms={"latent_mse": latent_mse, "lsd_db": lsd_mean},
        grads={"mean": d_latent[:, :half], "log_var": d_latent[:, half:], "decoded": d_decoded},
    )
