"""Training objectives.

The generator minimizes a composite of three terms: a per-pixel MSE, a
feature-space (perceptual) distance, and the adversarial term -log D(G(x))
weighted by lambda_p and lambda_a. The discriminator minimizes the usual
binary cross-entropy of real-vs-generated scores.

The perceptual term is computed under a fixed random-weight conv stack
standing in for a pretrained feature network: weights are drawn once from a
documented seed and never trained, so the distance is a deterministic
function of its inputs. Feature differences are normalized by the feature
map's spatial size (channels are summed, not averaged) and averaged over
the batch. Any richer feature extractor, pretrained or otherwise, can be
dropped in through the same one-argument callable interface.
"""

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor

# clamp applied to discriminator scores before any log
SCORE_EPS = 1e-7

# seed for the fixed perceptual feature stack; recorded in checkpoints
DEFAULT_FEATURE_SEED = 101

FEATURE_WIDTHS = (32, 64, 128, 128)


@dataclass
class LossWeights:
    lambda_p: float = 1.0
    lambda_a: float = 0.001

    def __post_init__(self):
        if self.lambda_p < 0 or self.lambda_a < 0:
            raise ValueError("loss weights must be non-negative")


class FeatureExtractor:
    """Fixed (untrainable) 4-block conv/ReLU stack tapped after the last block.

    Stride 2 between blocks; widths 32/64/128/128. Construction is a pure
    function of the seed.
    """

    def __init__(self, seed=DEFAULT_FEATURE_SEED, dtype=None):
        dt = dtype or T.get_default_dtype()
        rng = np.random.default_rng(seed)
        self.weights = []
        self.biases = []
        cin = 3
        for i, cout in enumerate(FEATURE_WIDTHS):
            fan_in = cin * 9
            w = (rng.standard_normal((cout, cin, 3, 3)) * np.sqrt(2.0 / fan_in)).astype(dt)
            self.weights.append(Tensor(w, dtype=dt))
            self.biases.append(Tensor(np.zeros(cout, dtype=dt), dtype=dt))
            cin = cout
        self.seed = seed

    def __call__(self, x):
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            x = T.relu(T.conv2d(x, w, b, stride=1 if i == 0 else 2, padding=1))
        return x


def mse_loss(output, target):
    """Mean squared error over every pixel and channel of the batch."""
    return T.mean_square(output, target)


def perceptual_loss(output, target, fx):
    """Feature-space distance, normalized per sample by the feature map's H*W."""
    f_out = fx(output)
    f_tgt = fx(target.detach())
    channels = f_out.shape[1]
    # mean over N*C*H*W times C == mean over batch of sum_c mean_hw
    return T.mul(T.mean_square(f_out, f_tgt), float(channels))


def adversarial_loss(d_scores):
    """-(1/N) sum log d_i; scores clamped away from {0, 1} before the log."""
    s = T.clip(d_scores, SCORE_EPS, 1.0 - SCORE_EPS)
    return T.mul(T.mean(T.log(s)), -1.0)


def discriminator_loss(real_scores, fake_scores):
    """-(1/N) sum [log real_i + log(1 - fake_i)]."""
    r = T.clip(real_scores, SCORE_EPS, 1.0 - SCORE_EPS)
    f = T.clip(fake_scores, SCORE_EPS, 1.0 - SCORE_EPS)
    return T.mul(T.add(T.mean(T.log(r)), T.mean(T.log(1.0 - f))), -1.0)


def total_loss(output, target, d_scores, weights, fx):
    """Composite generator objective: MSE + lambda_p * perceptual + lambda_a * adversarial.

    Terms with zero weight are skipped entirely, so with both lambdas zero the
    result is bitwise equal to mse_loss and the discriminator is never needed.
    """
    loss = mse_loss(output, target)
    if weights.lambda_p != 0.0:
        loss = T.add(loss, T.mul(perceptual_loss(output, target, fx), weights.lambda_p))
    if weights.lambda_a != 0.0:
        loss = T.add(loss, T.mul(adversarial_loss(d_scores), weights.lambda_a))
    return loss
