"""The three classifier architectures assembled from the layer primitives.

All variants share a 3D VGG-11 body: 8 convolutions in 5 blocks, a 2x2x2
ceil-mode max pool after each block, then a 3-layer fully connected head
fed from the flattened final grid (3x3x2 for 96x96x48 inputs).

  single   -- one body, one input channel (one modality)
  fusionA  -- one body, MRI and PET stacked as two input channels
  fusionB1 -- two bodies whose conv/BN parameters alias the same storage
  fusionB2 -- two independent bodies
  (B1/B2 concatenate the flattened branch features before the head)

A width multiplier scales every channel/feature count so desk-scale tests
stay cheap.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigError, ShapeError
from .nn.layers import BatchNorm, Conv3d, Dense, Dropout, Flatten, MaxPool3d, ReLU, softmax

__all__ = [
    "ARCH_IDS",
    "ModelGraph",
    "build_single",
    "build_fusion_a",
    "build_fusion_b",
    "build_model",
    "count_params",
]

ARCH_IDS = ("single", "fusionA", "fusionB1", "fusionB2")

_CONV_CHANNELS = (32, 64, 128, 128, 256, 256, 256, 256)
_CONVS_PER_BLOCK = (1, 1, 2, 2, 2)
_FC_FEATURES = (512, 128)
_NUM_CLASSES = 2
_KERNEL = 3


def _scaled(c, width):
    return max(1, int(math.floor(c * width + 0.5)))


def _pooled(dims):
    return tuple(-(-d // 2) for d in dims)


def final_grid(input_dims):
    dims = tuple(input_dims)
    for _ in _CONVS_PER_BLOCK:
        dims = _pooled(dims)
    return dims


class _Branch:
    """One conv/pool body ending in a flatten; layers carry stable names."""

    def __init__(self, prefix, layers, out_features):
        self.prefix = prefix
        self.layers = layers  # list of (name, layer)
        self.out_features = out_features

    def forward(self, x, train=False):
        for _, layer in self.layers:
            x = layer.forward(x, train=train)
        return x

    def backward(self, dy, need_input_grad=True):
        for i, (_, layer) in enumerate(reversed(self.layers)):
            if not need_input_grad and i == len(self.layers) - 1:
                # the first layer is a conv; its input gradient is only
                # needed when the caller asks for dL/dx
                return layer.backward(dy, need_dx=False)
            dy = layer.backward(dy)
        return dy


def _build_branch(prefix, c_in, width, input_dims, rng, dtype, share_from=None):
    channels = [_scaled(c, width) for c in _CONV_CHANNELS]
    layers = []
    conv_idx = 0
    shared = dict(share_from.layers) if share_from is not None else None
    cur = c_in
    for block, n_convs in enumerate(_CONVS_PER_BLOCK, start=1):
        for _ in range(n_convs):
            conv_idx += 1
            c_out = channels[conv_idx - 1]
            if shared is not None:
                src_conv = shared[f"conv{conv_idx}"]
                src_bn = shared[f"bn{conv_idx}"]
                conv = Conv3d(cur, c_out, _KERNEL, kernel=src_conv.kernel, bias=src_conv.bias)
                bn = BatchNorm(c_out, dtype=dtype, gamma=src_bn.gamma, beta=src_bn.beta)
            else:
                conv = Conv3d(cur, c_out, _KERNEL, rng=rng, dtype=dtype)
                bn = BatchNorm(c_out, dtype=dtype)
            layers.append((f"conv{conv_idx}", conv))
            layers.append((f"bn{conv_idx}", bn))
            layers.append((f"relu{conv_idx}", ReLU()))
            cur = c_out
        layers.append((f"pool{block}", MaxPool3d()))
    layers.append(("flatten", Flatten()))
    out_features = cur * int(np.prod(final_grid(input_dims)))
    return _Branch(prefix, layers, out_features)


class ModelGraph:
    """An ordered layer graph plus its named parameter/buffer stores."""

    def __init__(self, arch_id, width, input_dims, branches, head, dropout_p, dtype, seed):
        self.arch_id = arch_id
        self.width = width
        self.input_dims = tuple(input_dims)
        self.in_channels = 1 if arch_id == "single" else 2
        self.branches = branches
        self.head = head  # list of (name, layer)
        self.dropout_p = dropout_p
        self.dtype = dtype
        self.seed = seed
        self.meta = {}

    # -- introspection -----------------------------------------------------
    def _named_layers(self):
        for branch in self.branches:
            for name, layer in branch.layers:
                yield (f"{branch.prefix}{name}", layer)
        for name, layer in self.head:
            yield (name, layer)

    def named_parameters(self):
        out = {}
        for lname, layer in self._named_layers():
            for pname, p in layer.params():
                out[f"{lname}.{pname}"] = p
        return out

    def named_buffers(self):
        out = {}
        for lname, layer in self._named_layers():
            for bname, b in layer.buffers():
                out[f"{lname}.{bname}"] = b
        return out

    def distinct_parameters(self):
        """Parameters with aliases collapsed: first-seen name -> Param."""
        seen, out = set(), {}
        for name, p in self.named_parameters().items():
            if id(p) in seen:
                continue
            seen.add(id(p))
            out[name] = p
        return out

    def alias_map(self):
        """name -> canonical first-seen name, for parameters sharing storage."""
        first, aliases = {}, {}
        for name, p in self.named_parameters().items():
            if id(p) in first:
                aliases[name] = first[id(p)]
            else:
                first[id(p)] = name
        return aliases

    def layer_counts(self):
        counts = {"conv": 0, "pool": 0, "fc": 0}
        per_branch = self.branches[0].layers  # twin branches mirror each other
        for _, layer in per_branch:
            if isinstance(layer, Conv3d):
                counts["conv"] += 1
            elif isinstance(layer, MaxPool3d):
                counts["pool"] += 1
        for _, layer in self.head:
            if isinstance(layer, Dense):
                counts["fc"] += 1
        return counts

    def zero_grad(self):
        for p in self.distinct_parameters().values():
            p.zero_grad()

    def reseed_dropout(self, seed):
        i = 0
        for _, layer in self._named_layers():
            if isinstance(layer, Dropout):
                layer.rng = np.random.default_rng(np.random.SeedSequence([seed, 101 + i]))
                i += 1

    # -- execution ----------------------------------------------------------
    def _check_batch(self, x):
        if x.ndim != 5 or x.shape[1] != self.in_channels or x.shape[2:] != self.input_dims:
            raise ShapeError(
                f"expected batch (N,{self.in_channels},{','.join(map(str, self.input_dims))}), got {x.shape}"
            )

    def forward_logits(self, x, train=False):
        self._check_batch(x)
        if len(self.branches) == 1:
            h = self.branches[0].forward(x, train=train)
        else:
            parts = [
                branch.forward(x[:, i:i + 1], train=train)
                for i, branch in enumerate(self.branches)
            ]
            self._split = parts[0].shape[1]
            h = np.concatenate(parts, axis=1)
        for _, layer in self.head:
            h = layer.forward(h, train=train)
        return h

    def forward(self, x, train=False):
        """Class probabilities (N, 2); rows sum to 1."""
        return softmax(self.forward_logits(x, train=train))

    def backward(self, dlogits, need_input_grad=False):
        dy = dlogits
        for _, layer in reversed(self.head):
            dy = layer.backward(dy)
        if len(self.branches) == 1:
            return self.branches[0].backward(dy, need_input_grad)
        d0 = self.branches[0].backward(dy[:, :self._split], need_input_grad)
        d1 = self.branches[1].backward(dy[:, self._split:], need_input_grad)
        if not need_input_grad:
            return None
        return np.concatenate([d0, d1], axis=1)


def _build_head(in_features, width, dropout_p, rng, dtype):
    sizes = [_scaled(f, width) for f in _FC_FEATURES]
    head = []
    cur = in_features
    for i, f in enumerate(sizes, start=1):
        head.append((f"fc{i}", Dense(cur, f, rng=rng, dtype=dtype)))
        head.append((f"fc{i}_relu", ReLU()))
        head.append((f"fc{i}_drop", Dropout(dropout_p)))
        cur = f
    head.append((f"fc{len(sizes) + 1}", Dense(cur, _NUM_CLASSES, rng=rng, dtype=dtype)))
    return head


def _finish(arch_id, width, input_dims, branches, head, dropout_p, dtype, seed):
    model = ModelGraph(arch_id, width, input_dims, branches, head, dropout_p, dtype, seed)
    model.reseed_dropout(seed)
    return model


def _check_width(width):
    if width <= 0:
        raise ConfigError(f"width multiplier must be positive, got {width}")


def build_single(width=1.0, input_dims=(96, 96, 48), dropout_p=0.5, seed=0, dtype=np.float32,
                 in_channels=1, arch_id="single"):
    _check_width(width)
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    branch = _build_branch("", in_channels, width, input_dims, rng, dtype)
    head = _build_head(branch.out_features, width, dropout_p, rng, dtype)
    return _finish(arch_id, width, input_dims, [branch], head, dropout_p, dtype, seed)


def build_fusion_a(width=1.0, input_dims=(96, 96, 48), dropout_p=0.5, seed=0, dtype=np.float32):
    """Channel-stacked fusion: identical to single but with a 2-channel input."""
    return build_single(width, input_dims, dropout_p, seed, dtype, in_channels=2, arch_id="fusionA")


def build_fusion_b(width=1.0, shared=False, input_dims=(96, 96, 48), dropout_p=0.5, seed=0,
                   dtype=np.float32):
    """Two-branch fusion with concatenated flattened features.

    shared=True (B1) aliases the PET branch's conv kernels/biases and BN
    gamma/beta onto the MRI branch storage; BN running statistics stay
    per-branch.  shared=False (B2) keeps fully independent branch weights.
    """
    _check_width(width)
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    mri = _build_branch("mri.", 1, width, input_dims, rng, dtype)
    pet = _build_branch("pet.", 1, width, input_dims, rng, dtype, share_from=mri if shared else None)
    head = _build_head(mri.out_features + pet.out_features, width, dropout_p, rng, dtype)
    arch_id = "fusionB1" if shared else "fusionB2"
    return _finish(arch_id, width, input_dims, [mri, pet], head, dropout_p, dtype, seed)


def build_model(arch_id, width=1.0, input_dims=(96, 96, 48), dropout_p=0.5, seed=0, dtype=np.float32):
    if arch_id == "single":
        return build_single(width, input_dims, dropout_p, seed, dtype)
    if arch_id == "fusionA":
        return build_fusion_a(width, input_dims, dropout_p, seed, dtype)
    if arch_id == "fusionB1":
        return build_fusion_b(width, True, input_dims, dropout_p, seed, dtype)
    if arch_id == "fusionB2":
        return build_fusion_b(width, False, input_dims, dropout_p, seed, dtype)
    raise ConfigError(f"unknown arch_id {arch_id!r}, expected one of {ARCH_IDS}")


def count_params(model: ModelGraph):
    """Distinct stored parameter counts (aliased tensors counted once)."""
    per_name = {name: p.data.size for name, p in model.distinct_parameters().items()}
    return per_name, sum(per_name.values())
