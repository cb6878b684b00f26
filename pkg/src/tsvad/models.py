"""Autoencoder families mapping a frame volume to a same-shape output.

Three families share the same convolutional vocabulary: 3x3x3 kernels,
spatial-only downsampling (stride (1, 2, 2)) so any window length works
without temporal padding, leaky rectifier activations, and a sigmoid head
keeping the output in [0, 1].

* ``3dcae``: three encoder blocks, a bridge, three mirrored decoder blocks.
* ``attention-unet``: same backbone plus gated skip connections from the
  2nd and 3rd encoder blocks; the finest block has no skip.  Gates use a
  sequential softmax (along time, then height, then width) instead of a
  sigmoid so the mask must stay sparse.  The gating signal comes from the
  bridge, upsampled per gate.
* ``multimodal``: two independent encoders fused at the bottleneck by
  addition, multiplication, or channel concatenation, with one decoder per
  modality.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Callable

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .errors import ConfigError, DataError

MODEL_FAMILIES = ("3dcae", "attention-unet", "multimodal")
# Leaky rather than plain rectifier: at desk-scale channel counts a plain
# ReLU stack can be born fully dead, killing every upstream gradient.
_LEAKY_SLOPE = 0.01
FUSION_MODES = ("add", "multiply", "concat")


@dataclass(frozen=True)
class ModelSpec:
    """Architecture selector plus the knobs shared by every family."""

    family: str = "3dcae"
    input_frames: int = 6
    frame_size: tuple[int, int] = (64, 64)
    channel_widths: tuple[int, ...] = (16, 32, 64)
    fusion: str = "add"  # multimodal only
    seed: int = 0

    def __post_init__(self) -> None:
        if self.family not in MODEL_FAMILIES:
            raise ConfigError(f"unknown model family {self.family!r}, expected {MODEL_FAMILIES}")
        if self.fusion not in FUSION_MODES:
            raise ConfigError(f"unknown fusion mode {self.fusion!r}, expected {FUSION_MODES}")
        if self.input_frames < 1:
            raise ConfigError(f"input_frames must be >= 1, got {self.input_frames}")
        if not self.channel_widths or any(c < 1 for c in self.channel_widths):
            raise ConfigError(f"channel_widths must be positive, got {self.channel_widths}")
        factor = 2 ** len(self.channel_widths)
        for dim in self.frame_size:
            if dim % factor != 0:
                raise ConfigError(
                    f"frame_size {self.frame_size} not divisible by 2^{len(self.channel_widths)}"
                )

    def to_kv_text(self) -> str:
        """Serialize as one key=value line per field."""
        return "\n".join(
            [
                f"family={self.family}",
                f"input_frames={self.input_frames}",
                f"frame_size={self.frame_size[0]}x{self.frame_size[1]}",
                f"channel_widths={','.join(str(c) for c in self.channel_widths)}",
                f"fusion={self.fusion}",
                f"seed={self.seed}",
            ]
        )

    @classmethod
    def from_kv_text(cls, text: str) -> "ModelSpec":
        values: dict[str, str] = {}
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"bad model spec line {line!r}")
            key, value = line.split("=", 1)
            values[key] = value
        expected = {f.name for f in fields(cls)}
        unknown = set(values) - expected
        missing = expected - set(values)
        if unknown or missing:
            raise ConfigError(
                f"model spec text mismatch: unknown={sorted(unknown)} missing={sorted(missing)}"
            )
        h, w = values["frame_size"].split("x")
        return cls(
            family=values["family"],
            input_frames=int(values["input_frames"]),
            frame_size=(int(h), int(w)),
            channel_widths=tuple(int(c) for c in values["channel_widths"].split(",")),
            fusion=values["fusion"],
            seed=int(values["seed"]),
        )


class _EncoderBlock(nn.Module):
    """3x3x3 conv halving the spatial dims, temporal size preserved."""

    def __init__(self, in_ch: int, out_ch: int) -> None:
        super().__init__()
        self.conv = nn.Conv3d(in_ch, out_ch, kernel_size=3, stride=(1, 2, 2), padding=1)

    def forward(self, x: Tensor) -> Tensor:
        return F.leaky_relu(self.conv(x), _LEAKY_SLOPE)


class _DecoderBlock(nn.Module):
    """Conv at the current resolution, then nearest-neighbor spatial x2."""

    def __init__(self, in_ch: int, out_ch: int) -> None:
        super().__init__()
        self.conv = nn.Conv3d(in_ch, out_ch, kernel_size=3, padding=1)
        self.up = nn.Upsample(scale_factor=(1, 2, 2), mode="nearest")

    def forward(self, x: Tensor) -> Tensor:
        return self.up(F.leaky_relu(self.conv(x), _LEAKY_SLOPE))


def _with_batch(forward: Callable[..., Tensor]):
    """Allow unbatched (C, T, H, W) volumes through a batched forward."""

    def wrapped(self, *volumes: Tensor):
        unbatched = volumes[0].dim() == 4
        if unbatched:
            volumes = tuple(v.unsqueeze(0) for v in volumes)
        out = forward(self, *volumes)
        if unbatched:
            if isinstance(out, tuple):
                return tuple(o.squeeze(0) for o in out)
            return out.squeeze(0)
        return out

    return wrapped


class _Encoder(nn.Module):
    """Encoder blocks plus bridge; returns per-block activations and latent."""

    def __init__(self, widths: tuple[int, ...]) -> None:
        super().__init__()
        chans = [1, *widths]
        self.blocks = nn.ModuleList(
            _EncoderBlock(chans[i], chans[i + 1]) for i in range(len(widths))
        )
        self.bridge = nn.Conv3d(widths[-1], widths[-1], kernel_size=3, padding=1)

    def forward(self, x: Tensor) -> tuple[list[Tensor], Tensor]:
        activations = []
        for block in self.blocks:
            x = block(x)
            activations.append(x)
        return activations, F.leaky_relu(self.bridge(x), _LEAKY_SLOPE)


def _make_decoder(widths: tuple[int, ...], skip_extra: tuple[int, ...] | None = None,
                  first_in: int | None = None) -> nn.ModuleList:
    """Mirrored decoder stack; ``skip_extra[i]`` widens block i's input."""
    rev = list(reversed(widths))  # e.g. [64, 32, 16]
    outs = rev[1:] + [rev[-1]]  # [32, 16, 16]
    blocks = []
    for i in range(len(rev)):
        in_ch = rev[i] if i == 0 else outs[i - 1]
        if i == 0 and first_in is not None:
            in_ch = first_in
        if skip_extra is not None:
            in_ch += skip_extra[i]
        blocks.append(_DecoderBlock(in_ch, outs[i]))
    return nn.ModuleList(blocks)


class Cae3d(nn.Module):
    """Baseline 3D convolutional autoencoder."""

    def __init__(self, spec: ModelSpec) -> None:
        super().__init__()
        self.spec = spec
        self.encoder = _Encoder(spec.channel_widths)
        self.decoder = _make_decoder(spec.channel_widths)
        self.head = nn.Conv3d(spec.channel_widths[0], 1, kernel_size=3, padding=1)

    @_with_batch
    def forward(self, x: Tensor) -> Tensor:
        _, latent = self.encoder(x)
        out = latent
        for block in self.decoder:
            out = block(out)
        return torch.sigmoid(self.head(out))


class AttentionGate3d(nn.Module):
    """Additive attention over a skip connection, gated from a coarse signal.

    The mask comes from single-channel logits passed through softmax along
    the temporal axis, then height, then width, so after the final
    normalization every width-slice sums to 1.  The logit projection has no
    bias: a constant logit offset is invariant under softmax, which would
    leave that parameter without gradient.
    """

    def __init__(self, skip_ch: int, gate_ch: int, inter_ch: int | None = None) -> None:
        super().__init__()
        inter_ch = inter_ch or max(skip_ch // 2, 1)
        self.proj_skip = nn.Conv3d(skip_ch, inter_ch, kernel_size=1)
        self.proj_gate = nn.Conv3d(gate_ch, inter_ch, kernel_size=1, bias=False)
        self.logits = nn.Conv3d(inter_ch, 1, kernel_size=1, bias=False)

    def forward(self, x: Tensor, g: Tensor) -> tuple[Tensor, Tensor]:
        if g.shape[-3:] != x.shape[-3:]:
            g = F.interpolate(g, size=x.shape[-3:], mode="trilinear", align_corners=False)
        q = self.logits(F.leaky_relu(self.proj_skip(x) + self.proj_gate(g), _LEAKY_SLOPE))
        mask = torch.softmax(q, dim=-3)
        mask = torch.softmax(mask, dim=-2)
        mask = torch.softmax(mask, dim=-1)
        return x * mask, mask


class AttentionUnet3d(nn.Module):
    """U-Net variant with gated skips on every encoder block except the finest.

    The gating signal is the bridge output (coarsest features), upsampled to
    each skip's resolution inside the gate.  Gated features are concatenated
    onto the decoder path.
    """

    def __init__(self, spec: ModelSpec) -> None:
        super().__init__()
        self.spec = spec
        widths = spec.channel_widths
        self.encoder = _Encoder(widths)
        # 0-based encoder block indices whose outputs feed gated skips; the
        # finest block (index 0) never has one.
        self.gated_levels = tuple(range(1, len(widths)))
        self._gate_order = tuple(reversed(self.gated_levels))  # coarsest skip first
        gate_ch = widths[-1]
        self.gates = nn.ModuleList(
            AttentionGate3d(widths[level], gate_ch) for level in self._gate_order
        )
        skip_extra = tuple(widths[level] for level in self._gate_order)
        skip_extra += (0,) * (len(widths) - len(skip_extra))
        self.decoder = _make_decoder(widths, skip_extra=skip_extra)
        self.head = nn.Conv3d(widths[0], 1, kernel_size=3, padding=1)

    @_with_batch
    def forward(self, x: Tensor) -> Tensor:
        activations, latent = self.encoder(x)
        out = latent
        for i, block in enumerate(self.decoder):
            if i < len(self.gates):
                gated, _ = self.gates[i](activations[self._gate_order[i]], latent)
                out = torch.cat([out, gated], dim=-4)
            out = block(out)
        return torch.sigmoid(self.head(out))


def fuse(latent_a: Tensor, latent_b: Tensor, mode: str) -> Tensor:
    """Combine two bottleneck volumes elementwise or along the channel axis."""
    if mode not in FUSION_MODES:
        raise ConfigError(f"unknown fusion mode {mode!r}, expected {FUSION_MODES}")
    if latent_a.shape != latent_b.shape:
        raise DataError(
            f"latent shapes differ: {tuple(latent_a.shape)} vs {tuple(latent_b.shape)}"
        )
    if mode == "add":
        return latent_a + latent_b
    if mode == "multiply":
        return latent_a * latent_b
    return torch.cat([latent_a, latent_b], dim=-4)


class MultiModalCae3d(nn.Module):
    """Two encoder/decoder pairs sharing a fused bottleneck."""

    def __init__(self, spec: ModelSpec) -> None:
        super().__init__()
        self.spec = spec
        widths = spec.channel_widths
        self.encoder_a = _Encoder(widths)
        self.encoder_b = _Encoder(widths)
        fused_ch = widths[-1] * (2 if spec.fusion == "concat" else 1)
        self.decoder_a = _make_decoder(widths, first_in=fused_ch)
        self.decoder_b = _make_decoder(widths, first_in=fused_ch)
        self.head_a = nn.Conv3d(widths[0], 1, kernel_size=3, padding=1)
        self.head_b = nn.Conv3d(widths[0], 1, kernel_size=3, padding=1)

    @_with_batch
    def forward(self, x_a: Tensor, x_b: Tensor) -> tuple[Tensor, Tensor]:
        _, latent_a = self.encoder_a(x_a)
        _, latent_b = self.encoder_b(x_b)
        fused = fuse(latent_a, latent_b, self.spec.fusion)
        out_a, out_b = fused, fused
        for block in self.decoder_a:
            out_a = block(out_a)
        for block in self.decoder_b:
            out_b = block(out_b)
        return torch.sigmoid(self.head_a(out_a)), torch.sigmoid(self.head_b(out_b))


def _seeded_build(spec: ModelSpec, factory: Callable[[ModelSpec], nn.Module]) -> nn.Module:
    # fork_rng keeps the global RNG untouched while making init reproducible.
    with torch.random.fork_rng():
        torch.manual_seed(spec.seed)
        return factory(spec)


def build_3dcae(spec: ModelSpec) -> Cae3d:
    if spec.family != "3dcae":
        raise ConfigError(f"spec.family is {spec.family!r}, expected '3dcae'")
    return _seeded_build(spec, Cae3d)


def build_attention_unet(spec: ModelSpec) -> AttentionUnet3d:
    if spec.family != "attention-unet":
        raise ConfigError(f"spec.family is {spec.family!r}, expected 'attention-unet'")
    return _seeded_build(spec, AttentionUnet3d)


def build_multimodal(spec: ModelSpec) -> MultiModalCae3d:
    if spec.family != "multimodal":
        raise ConfigError(f"spec.family is {spec.family!r}, expected 'multimodal'")
    return _seeded_build(spec, MultiModalCae3d)


_BUILDERS = {
    "3dcae": build_3dcae,
    "attention-unet": build_attention_unet,
    "multimodal": build_multimodal,
}


def build_model(spec: ModelSpec) -> nn.Module:
    """Construct the family selected by ``spec`` with seeded initialization."""
    return _BUILDERS[spec.family](spec)
