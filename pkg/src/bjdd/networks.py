"""Generator and discriminator networks.

The generator is a residual CNN that maps the packed 4-channel half-resolution
CFA stack to a full-resolution RGB image: a head conv, a trunk of residual
blocks, a global skip from the head features, then a channel-expanding conv,
pixel shuffle x2 and a final 3-channel projection. No activation on the output;
values are clipped only at evaluation time.

The discriminator stacks conv/batch-norm/LeakyReLU units with widths doubling
from 64 to 512 and stride 2 on every second layer, then reduces a 1-channel
sigmoid map to one realness score per sample.

Weights use He fan-in normal initialization and zero biases, drawn from an
explicit seed so identical seeds give bitwise-identical parameter stores.
"""

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import BatchNormState, Tensor


class ParameterStore:
    """Ordered name -> Tensor registry for one network's state.

    Trainable entries are the tensors with requires_grad set; batch-norm
    running statistics live here too (so checkpoints capture them) but are
    not trainable.
    """

    def __init__(self):
        self._tensors = {}

    def register(self, name, t):
        if name in self._tensors:
            raise ValueError(f"duplicate parameter name {name!r}")
        self._tensors[name] = t
        return t

    def __getitem__(self, name):
        return self._tensors[name]

    def __contains__(self, name):
        return name in self._tensors

    def __len__(self):
        return len(self._tensors)

    def items(self):
        return self._tensors.items()

    def names(self):
        return list(self._tensors)

    def trainable(self):
        return [(n, t) for n, t in self._tensors.items() if t.requires_grad]

    def zero_grad(self):
        for _, t in self.trainable():
            t.zero_grad()


def count_parameters(store):
    """Total element count of the trainable tensors (running stats excluded)."""
    return sum(t.data.size for _, t in store.trainable())


def he_normal(rng, shape, fan_in, dtype):
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


class Conv2d:
    def __init__(self, store, prefix, cin, cout, kernel, stride=1, padding=0,
                 rng=None, dtype=None, init_scale=1.0):
        dt = dtype or T.get_default_dtype()
        w = he_normal(rng, (cout, cin, kernel, kernel), cin * kernel * kernel, dt)
        if init_scale != 1.0:
            w = (w * init_scale).astype(dt)
        self.weight = store.register(f"{prefix}.weight", Tensor(w, requires_grad=True, dtype=dt))
        self.bias = store.register(f"{prefix}.bias",
                                   Tensor(np.zeros(cout, dtype=dt), requires_grad=True, dtype=dt))
        self.stride = stride
        self.padding = padding

    def __call__(self, x):
        return T.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class BatchNorm:
    def __init__(self, store, prefix, channels, eps=1e-5, momentum=0.1, dtype=None):
        dt = dtype or T.get_default_dtype()
        self.gamma = store.register(f"{prefix}.gamma",
                                    Tensor(np.ones(channels, dtype=dt), requires_grad=True, dtype=dt))
        self.beta = store.register(f"{prefix}.beta",
                                   Tensor(np.zeros(channels, dtype=dt), requires_grad=True, dtype=dt))
        self.state = BatchNormState(channels, dtype=dt)
        # registered views share the state buffers, so checkpoints see updates
        store.register(f"{prefix}.running_mean", Tensor(self.state.mean, dtype=dt))
        store.register(f"{prefix}.running_var", Tensor(self.state.var, dtype=dt))
        store.register(f"{prefix}.running_batches", Tensor(self.state.batches, dtype=dt))
        self.eps = eps
        self.momentum = momentum

    def __call__(self, x, mode, update_running=True):
        return T.batch_norm(x, self.gamma, self.beta, self.state, mode=mode,
                            eps=self.eps, momentum=self.momentum,
                            update_running=update_running)


@dataclass
class GeneratorSpec:
    res_blocks: int = 16
    trunk_width: int = 64
    upscale: int = 2
    kernel: int = 3
    dropout_keep: float = 1.0

    def __post_init__(self):
        if self.kernel % 2 == 0:
            raise ValueError("kernel size must be odd")
        if self.res_blocks < 0 or self.trunk_width < 1 or self.upscale < 1:
            raise ValueError("bad generator spec")
        if not 0.0 < self.dropout_keep <= 1.0:
            raise ValueError("dropout_keep must be in (0, 1]")


@dataclass
class DiscriminatorSpec:
    conv_layers: int = 8
    base_width: int = 64
    max_width: int = 512
    lrelu_alpha: float = 0.2
    strides: tuple = ()
    first_layer_bn: bool = False
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1

    def __post_init__(self):
        if not self.strides:
            self.strides = tuple(1 if i % 2 == 0 else 2 for i in range(self.conv_layers))
        self.strides = tuple(self.strides)
        if len(self.strides) != self.conv_layers:
            raise ValueError("strides list must match conv_layers")

    def widths(self):
        return [min(self.base_width * 2 ** (i // 2), self.max_width)
                for i in range(self.conv_layers)]


BRANCH_INIT_SCALE = 0.1


class ResBlock:
    """conv -> ReLU -> dropout -> conv, plus the identity skip.

    The closing conv starts at a tenth of the usual scale, so a fresh block
    is close to an identity. Without the damping, stacking many unnormalized
    residual blocks roughly doubles the activation variance per block and a
    freshly built trunk produces outputs hundreds of times larger than the
    [0, 1] target range, which stalls early training while the optimizer
    shrinks the scale back down.
    """

    def __init__(self, store, prefix, width, kernel, keep, rng, dtype):
        pad = kernel // 2
        self.conv1 = Conv2d(store, f"{prefix}.conv1", width, width, kernel, padding=pad,
                            rng=rng, dtype=dtype)
        self.conv2 = Conv2d(store, f"{prefix}.conv2", width, width, kernel, padding=pad,
                            rng=rng, dtype=dtype, init_scale=BRANCH_INIT_SCALE)
        self.keep = keep

    def __call__(self, x, mode, rng):
        y = T.relu(self.conv1(x))
        y = T.dropout(y, self.keep, mode=mode, rng=rng)
        return T.add(self.conv2(y), x)


IN_CHANNELS = 4   # packed CFA phases
OUT_CHANNELS = 3  # RGB


class Generator:
    def __init__(self, spec, init_seed, dtype=None):
        dt = dtype or T.get_default_dtype()
        rng = np.random.default_rng(init_seed)
        store = ParameterStore()
        w, k = spec.trunk_width, spec.kernel
        pad = k // 2
        self.head = Conv2d(store, "head", IN_CHANNELS, w, k, padding=pad, rng=rng, dtype=dt)
        self.blocks = [ResBlock(store, f"block{i}", w, k, spec.dropout_keep, rng, dt)
                       for i in range(spec.res_blocks)]
        self.tail = Conv2d(store, "tail", w, w, k, padding=pad, rng=rng, dtype=dt)
        r = spec.upscale
        self.expand = Conv2d(store, "expand", w, w * r * r, k, padding=pad, rng=rng, dtype=dt)
        self.project = Conv2d(store, "project", w, OUT_CHANNELS, k, padding=pad, rng=rng, dtype=dt)
        self.spec = spec
        self.params = store
        self.dtype = dt

    def forward(self, x, mode="eval", rng=None):
        """(N, 4, H, W) packed batch -> (N, 3, 2H, 2W) image batch (unclipped)."""
        if x.ndim != 4 or x.shape[1] != IN_CHANNELS:
            raise ValueError(f"generator expects (N, {IN_CHANNELS}, H, W), got {x.shape}")
        h0 = T.relu(self.head(x))
        t = h0
        for blk in self.blocks:
            t = blk(t, mode, rng)
        t = T.add(self.tail(t), h0)
        t = T.pixel_shuffle(self.expand(t), self.spec.upscale)
        return self.project(t)

    def __call__(self, x, mode="eval", rng=None):
        return self.forward(x, mode=mode, rng=rng)


class Discriminator:
    def __init__(self, spec, init_seed, dtype=None):
        dt = dtype or T.get_default_dtype()
        rng = np.random.default_rng(init_seed)
        store = ParameterStore()
        widths = spec.widths()
        self.layers = []
        cin = OUT_CHANNELS
        for i, (cout, stride) in enumerate(zip(widths, spec.strides)):
            conv = Conv2d(store, f"conv{i}", cin, cout, 3, stride=stride, padding=1,
                          rng=rng, dtype=dt)
            bn = None
            if i > 0 or spec.first_layer_bn:
                bn = BatchNorm(store, f"conv{i}.bn", cout, eps=spec.bn_eps,
                               momentum=spec.bn_momentum, dtype=dt)
            self.layers.append((conv, bn))
            cin = cout
        self.score = Conv2d(store, "score", cin, 1, 3, padding=1, rng=rng, dtype=dt)
        self.spec = spec
        self.params = store
        self.dtype = dt

    def forward(self, img, mode="train", update_running=True):
        """(N, 3, H, W) batch -> (N,) realness probabilities in (0, 1)."""
        if img.ndim != 4 or img.shape[1] != OUT_CHANNELS:
            raise ValueError(f"discriminator expects (N, {OUT_CHANNELS}, H, W), got {img.shape}")
        halvings = sum(1 for s in self.spec.strides if s == 2)
        min_size = 2 ** halvings
        if img.shape[2] < min_size or img.shape[3] < min_size:
            raise ValueError(
                f"discriminator input {img.shape[2]}x{img.shape[3]} too small for "
                f"{halvings} stride-2 reductions (needs >= {min_size})")
        x = img
        for conv, bn in self.layers:
            x = conv(x)
            if bn is not None:
                x = bn(x, mode, update_running=update_running)
            x = T.leaky_relu(x, self.spec.lrelu_alpha)
        x = T.sigmoid(self.score(x))
        return T.mean(x, axis=(1, 2, 3))

    def __call__(self, img, mode="train", update_running=True):
        return self.forward(img, mode=mode, update_running=update_running)


def build_generator(spec=None, init_seed=0, dtype=None):
    return Generator(spec or GeneratorSpec(), init_seed, dtype=dtype)


def build_discriminator(spec=None, init_seed=0, dtype=None):
    return Discriminator(spec or DiscriminatorSpec(), init_seed, dtype=dtype)


def generator_forward(gen, x, mode="eval", rng=None):
    return gen.forward(x, mode=mode, rng=rng)


def discriminator_forward(disc, img, mode="train", update_running=True):
    return disc.forward(img, mode=mode, update_running=update_running)
