"""The multi-path restoration network and its routing policy.

The network is a start conv, N dynamic blocks and an end conv, with a
global residual (the net predicts a correction added to its input).
Each dynamic block runs a mandatory shared conv, then exactly one of M
paths: path 1 is a parameter-free bypass, paths 2..M are residual
blocks of two 3x3 convs (first conv dilated 1, 2, 3, ... so extra paths
see growing receptive fields).

A single pathfinder — a small strided conv stack, global average pool,
fc, recurrent cell, fc, softmax — is shared by all blocks.  It sees each
block's input (gradient-stopped) plus its own recurrent state and emits
a distribution over the M paths.  During training the path is sampled;
at test time the argmax is taken, ties broken toward the lowest index
(the cheaper path).

Path indices are 1-based everywhere in the public API: action 1 is the
bypass.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import ops
from .autograd import Parameter, Tensor, no_grad
from .errors import ConfigError, NumericError, UsageError
from .nn import Conv2d, Linear, LSTMCell


@dataclass(frozen=True)
class ModelConfig:
    blocks: int = 6        # dynamic blocks (N)
    paths: int = 2         # paths per block (M), including the bypass
    pf_conv_layers: int = 2  # conv layers in the pathfinder (C)
    features: int = 32     # feature channels (F)
    hidden: int = 32       # pathfinder recurrent state size
    patch: int = 63        # nominal region edge in pixels
    channels: int = 3      # image channels

    def __post_init__(self):
        if self.blocks < 1:
            raise ConfigError("blocks must be >= 1")
        if self.paths < 2:
            raise ConfigError("paths must be >= 2 (bypass plus at least one residual path)")
        if self.pf_conv_layers < 1:
            raise ConfigError("pf_conv_layers must be >= 1")
        if self.features < 1:
            raise ConfigError("features must be >= 1")
        if self.hidden < 1:
            raise ConfigError("hidden must be >= 1")
        if self.channels not in (1, 3):
            raise ConfigError("channels must be 1 or 3")
        if self.patch < 9:
            raise ConfigError("patch must be >= 9")

    @property
    def pf_width(self) -> int:
        """Pathfinder conv width, scaled down with the trunk so the
        pathfinder stays under 3% of the max-route compute."""
        return max(4, self.features // 4)

    def to_dict(self) -> dict:
        return {k: str(getattr(self, k)) for k in
                ("blocks", "paths", "pf_conv_layers", "features", "hidden", "patch", "channels")}

    @staticmethod
    def from_dict(d: dict) -> "ModelConfig":
        return ModelConfig(**{k: int(d[k]) for k in
                              ("blocks", "paths", "pf_conv_layers", "features", "hidden",
                               "patch", "channels")})


@dataclass
class RouteTrace:
    """Per-block routing record of one patch: chosen 1-based actions,
    the policy distribution at each block, and the log-probability of
    each chosen action (as live graph nodes in train mode)."""
    actions: list[int] = field(default_factory=list)
    probs: list[np.ndarray] = field(default_factory=list)
    logprobs: list[float] = field(default_factory=list)
    logprob_nodes: Optional[list[Tensor]] = None


@dataclass
class PathfinderState:
    h: Tensor
    c: Tensor


def select_action(probs: np.ndarray, mode: str, rng: Optional[np.random.Generator] = None) -> int:
    """Pick a 1-based path index from a distribution.

    Train mode samples; test mode takes the argmax with ties broken
    toward the lowest index.
    """
    p = np.asarray(probs, dtype=np.float64)
    if abs(p.sum() - 1.0) > 1e-3 or np.any(p < 0):
        raise NumericError(f"select_action: degenerate distribution (sum={p.sum()!r})")
    if mode == "test":
        return int(np.argmax(p)) + 1
    if mode == "train":
        if rng is None:
            raise UsageError("select_action: train mode needs an rng")
        return int(rng.choice(len(p), p=p / p.sum())) + 1
    raise UsageError(f"select_action: unknown mode {mode!r}")


class Pathfinder:
    """The shared routing policy: C strided convs, global average pool,
    fc, recurrent cell, fc to M logits, softmax."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        w = cfg.pf_width
        self.cfg = cfg
        self.convs = []
        in_ch = cfg.features
        for i in range(cfg.pf_conv_layers):
            self.convs.append(Conv2d(f"pf.conv{i + 1}", in_ch, w, k=3, stride=2, rng=rng))
            in_ch = w
        self.fc1 = Linear("pf.fc1", w, cfg.hidden, rng=rng)
        self.cell = LSTMCell("pf.cell", cfg.hidden, cfg.hidden, rng=rng)
        self.fc2 = Linear("pf.fc2", cfg.hidden, cfg.paths, rng=rng)

    def parameters(self) -> list[Parameter]:
        out = []
        for conv in self.convs:
            out.extend(conv.parameters())
        out.extend(self.fc1.parameters())
        out.extend(self.cell.parameters())
        out.extend(self.fc2.parameters())
        return out

    def init_state(self, batch: int = 1) -> PathfinderState:
        z = np.zeros((batch, self.cfg.hidden), dtype=np.float32)
        return PathfinderState(h=Tensor(z.copy()), c=Tensor(z.copy()))

    def policy(self, x: Tensor, state: PathfinderState):
        """Distribution over paths for one block: (probs node, next state)."""
        if x.shape[1] != self.cfg.features:
            raise ConfigError(f"pathfinder: expected {self.cfg.features} channels, got {x.shape[1]}")
        t = x
        for conv in self.convs:
            t = ops.relu(conv(t))
        t = ops.global_avg_pool(t)
        t = self.fc1(t)
        h, c = self.cell(t, state.h, state.c)
        logits = self.fc2(h)
        return ops.softmax(logits), PathfinderState(h=h, c=c)


class DynamicBlock:
    """Shared conv + ReLU, then one of M paths chosen by action index."""

    def __init__(self, idx: int, cfg: ModelConfig, rng: np.random.Generator):
        f = cfg.features
        name = f"block{idx}"
        self.shared = Conv2d(name + ".shared", f, f, rng=rng)
        # path 1 is the bypass; each further path is a residual pair
        # with the first conv dilated to widen its receptive field.
        self.paths = []
        for m in range(2, cfg.paths + 1):
            d = m - 1
            self.paths.append((
                Conv2d(f"{name}.path{m}.conv1", f, f, dilation=d, rng=rng),
                Conv2d(f"{name}.path{m}.conv2", f, f, rng=rng),
            ))

    def parameters(self) -> list[Parameter]:
        out = self.shared.parameters()
        for c1, c2 in self.paths:
            out.extend(c1.parameters())
            out.extend(c2.parameters())
        return out

    def __call__(self, x: Tensor, action: int) -> Tensor:
        if not 1 <= action <= len(self.paths) + 1:
            raise UsageError(f"path index {action} out of range 1..{len(self.paths) + 1}")
        s = ops.relu(self.shared(x))
        if action == 1:
            return s
        c1, c2 = self.paths[action - 2]
        return ops.add(c2(ops.relu(c1(s))), s)


class MultiPathRestorer:
    """Start conv, N dynamic blocks, end conv, global residual, plus the
    shared pathfinder and a FLOPs accountant for any route."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        rng = np.random.default_rng(np.random.SeedSequence([0x70617468, seed]))
        self.cfg = cfg
        self.start = Conv2d("start", cfg.channels, cfg.features, rng=rng)
        self.blocks = [DynamicBlock(i + 1, cfg, rng) for i in range(cfg.blocks)]
        # zero-initialized end conv: with the global residual the fresh
        # model is an exact identity restorer.
        self.end = Conv2d("end", cfg.features, cfg.channels, rng=rng, zero_init=True)
        self.pathfinder = Pathfinder(cfg, rng)

    # -- parameter access -------------------------------------------------

    def cnn_parameters(self) -> list[Parameter]:
        out = self.start.parameters()
        for b in self.blocks:
            out.extend(b.parameters())
        out.extend(self.end.parameters())
        return out

    def pathfinder_parameters(self) -> list[Parameter]:
        return self.pathfinder.parameters()

    def parameters(self) -> list[Parameter]:
        return self.cnn_parameters() + self.pathfinder_parameters()

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    # -- forward passes ----------------------------------------------------

    def _check_input(self, patch: Tensor):
        if patch.data.ndim != 4 or patch.shape[1] != self.cfg.channels:
            raise ConfigError(f"expected (B, {self.cfg.channels}, H, W) input, got {patch.shape}")

    def forward(self, patch: Tensor, mode: str = "test",
                rng: Optional[np.random.Generator] = None):
        """Route and restore one patch: (restored, RouteTrace).

        The pathfinder sees each block's input before the shared conv,
        gradient-stopped, so policy gradients stay inside the
        pathfinder.  Its recurrent state threads across blocks and is
        zeroed per patch.
        """
        self._check_input(patch)
        train = mode == "train"
        trace = RouteTrace(logprob_nodes=[] if train else None)
        x = self.start(patch)
        state = self.pathfinder.init_state(patch.shape[0])
        for block in self.blocks:
            probs_node, state = self.pathfinder.policy(x.detach(), state)
            p = probs_node.data[0]
            a = select_action(p, mode, rng)
            trace.actions.append(a)
            trace.probs.append(p.copy())
            trace.logprobs.append(float(np.log(p[a - 1])))
            if train:
                trace.logprob_nodes.append(ops.log(ops.pick(probs_node, [a - 1])))
            x = block(x, a)
        restored = ops.add(self.end(x), patch)
        return restored, trace

    def forward_routed(self, patch: Tensor, route: Sequence[int]):
        """Restore under an externally forced route; also returns every
        block's input x_1..x_N so the intermediate loss can decode them.
        The pathfinder is not run."""
        self._check_input(patch)
        if len(route) != self.cfg.blocks:
            raise UsageError(f"route length {len(route)} != {self.cfg.blocks} blocks")
        x = self.start(patch)
        intermediates = []
        for block, a in zip(self.blocks, route):
            intermediates.append(x)
            x = block(x, a)
        restored = ops.add(self.end(x), patch)
        return restored, intermediates

    def decode(self, features: Tensor, patch: Tensor) -> Tensor:
        """Read an intermediate feature map out through the end conv
        (plus the global residual), as the intermediate loss requires."""
        return ops.add(self.end(features), patch)

    # -- convenience -------------------------------------------------------

    def restore_image(self, image: np.ndarray) -> tuple[np.ndarray, list[RouteTrace]]:
        """Tiled argmax-mode restoration of a full (C, H, W) image."""
        from .distortion import extract_patches, merge_patches

        grid, patches = extract_patches(image, self.cfg.patch)
        outs, traces = [], []
        with no_grad():
            for p in patches:
                restored, tr = self.forward(Tensor(p[None]), mode="test")
                outs.append(np.clip(restored.data[0], 0.0, 1.0))
                traces.append(tr)
        return merge_patches(outs, grid, image.shape), traces


# -- compute accounting ----------------------------------------------------


def _conv_out(size: int, k: int, stride: int, pad: int, dilation: int = 1) -> int:
    return (size + 2 * pad - dilation * (k - 1) - 1) // stride + 1


def conv_flops(k: int, c_in: int, c_out: int, h_out: int, w_out: int) -> int:
    """2 * k^2 * C_in * C_out * H_out * W_out: one multiply and one add
    per kernel tap."""
    return 2 * k * k * c_in * c_out * h_out * w_out


def pathfinder_flops_per_call(cfg: ModelConfig) -> int:
    """Cost of one pathfinder invocation on a nominal patch."""
    w = cfg.pf_width
    total = 0
    size, in_ch = cfg.patch, cfg.features
    for _ in range(cfg.pf_conv_layers):
        size_out = _conv_out(size, 3, 2, 1)
        total += conv_flops(3, in_ch, w, size_out, size_out)
        size, in_ch = size_out, w
    total += 2 * w * cfg.hidden                      # fc1
    total += 2 * 4 * cfg.hidden * (cfg.hidden * 2)   # recurrent cell matmuls
    total += 2 * cfg.hidden * cfg.paths              # fc2
    return total


def residual_path_flops(cfg: ModelConfig) -> int:
    """Cost of one non-bypass path (two same-size convs)."""
    return 2 * conv_flops(3, cfg.features, cfg.features, cfg.patch, cfg.patch)


def count_flops(route: Optional[Sequence[int]], cfg: ModelConfig) -> int:
    """FLOPs to process one nominal patch along a route.

    ``route`` is a sequence of 1-based path indices (or a RouteTrace);
    None means the maximum route (every block takes a residual path).
    Counts the start/end convs, the shared and chosen paths, and the N
    pathfinder invocations that run regardless of the choices.
    """
    if isinstance(route, RouteTrace):
        route = route.actions
    if route is None:
        route = [2] * cfg.blocks
    if len(route) != cfg.blocks:
        raise UsageError(f"route length {len(route)} != {cfg.blocks} blocks")
    f, p = cfg.features, cfg.patch
    total = conv_flops(3, cfg.channels, f, p, p)     # start
    total += conv_flops(3, f, cfg.channels, p, p)    # end
    total += cfg.blocks * conv_flops(3, f, f, p, p)  # shared paths
    total += cfg.blocks * pathfinder_flops_per_call(cfg)
    for a in route:
        if not 1 <= a <= cfg.paths:
            raise UsageError(f"path index {a} out of range 1..{cfg.paths}")
        if a > 1:
            total += residual_path_flops(cfg)
    return total


def min_route_flops(cfg: ModelConfig) -> int:
    return count_flops([1] * cfg.blocks, cfg)


def max_route_flops(cfg: ModelConfig) -> int:
    return count_flops(None, cfg)


def pathfinder_share(cfg: ModelConfig) -> float:
    """Pathfinder fraction of the maximum-route compute."""
    return cfg.blocks * pathfinder_flops_per_call(cfg) / max_route_flops(cfg)
