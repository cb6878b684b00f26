import numpy as np
import pytest
import torch

from tsvad.errors import ConfigError, DataError
from tsvad.losses import temporal_shift_loss
from tsvad.models import (
    AttentionGate3d,
    ModelSpec,
    build_3dcae,
    build_attention_unet,
    build_model,
    build_multimodal,
    fuse,
)
from tsvad.training import train_step
from tsvad.windowing import WindowSpec

SMALL = dict(frame_size=(32, 32), channel_widths=(4, 8))


def small_spec(family, frames=4, seed=0, fusion="add"):
    return ModelSpec(family=family, input_frames=frames, fusion=fusion, seed=seed, **SMALL)


# --- spec validation ---------------------------------------------------------


def test_model_spec_validation():
    with pytest.raises(ConfigError):
        ModelSpec(family="lstm")
    with pytest.raises(ConfigError):
        ModelSpec(fusion="average")
    with pytest.raises(ConfigError):
        ModelSpec(frame_size=(60, 64))  # 60 not divisible by 8
    with pytest.raises(ConfigError):
        ModelSpec(channel_widths=())
    with pytest.raises(ConfigError):
        ModelSpec(input_frames=0)


def test_builders_check_family():
    with pytest.raises(ConfigError):
        build_3dcae(small_spec("attention-unet"))
    with pytest.raises(ConfigError):
        build_attention_unet(small_spec("3dcae"))
    with pytest.raises(ConfigError):
        build_multimodal(small_spec("3dcae"))


def test_model_spec_kv_text_round_trip():
    spec = ModelSpec(family="multimodal", input_frames=8, frame_size=(32, 32),
                     channel_widths=(8, 16), fusion="concat", seed=42)
    assert ModelSpec.from_kv_text(spec.to_kv_text()) == spec
    with pytest.raises(ConfigError):
        ModelSpec.from_kv_text("family=3dcae\nnot a kv line")
    with pytest.raises(ConfigError):
        ModelSpec.from_kv_text("family=3dcae")  # missing fields


# --- shape and range contracts ----------------------------------------------


@pytest.mark.parametrize("family", ["3dcae", "attention-unet"])
@pytest.mark.parametrize("frames", [4, 6, 8])
def test_single_stream_shape_and_range(family, frames):
    model = build_model(small_spec(family, frames=frames))
    x = torch.rand(2, 1, frames, 32, 32)
    with torch.no_grad():
        y = model(x)
    assert y.shape == x.shape
    assert torch.isfinite(y).all()
    assert float(y.min()) >= 0.0 and float(y.max()) <= 1.0


@pytest.mark.parametrize("fusion", ["add", "multiply", "concat"])
@pytest.mark.parametrize("frames", [4, 6, 8])
def test_multimodal_shape_and_range(fusion, frames):
    model = build_model(small_spec("multimodal", frames=frames, fusion=fusion))
    x_a = torch.rand(1, 1, frames, 32, 32)
    x_b = torch.rand(1, 1, frames, 32, 32)
    with torch.no_grad():
        y_a, y_b = model(x_a, x_b)
    for y in (y_a, y_b):
        assert y.shape == x_a.shape
        assert float(y.min()) >= 0.0 and float(y.max()) <= 1.0


def test_unbatched_volume_accepted():
    model = build_model(ModelSpec(family="3dcae", input_frames=6, seed=1))
    y = model(torch.rand(1, 6, 64, 64))
    assert y.shape == (1, 6, 64, 64)
    mm = build_model(ModelSpec(family="multimodal", input_frames=6, seed=1))
    y_a, y_b = mm(torch.rand(1, 6, 64, 64), torch.rand(1, 6, 64, 64))
    assert y_a.shape == (1, 6, 64, 64) and y_b.shape == (1, 6, 64, 64)


def test_default_bottleneck_shape():
    model = build_3dcae(ModelSpec(family="3dcae", input_frames=6, seed=0))
    _, latent = model.encoder(torch.rand(1, 1, 6, 64, 64))
    assert tuple(latent.shape) == (1, 64, 6, 8, 8)


def test_large_frame_size_spot_check():
    for family in ("3dcae", "attention-unet"):
        model = build_model(ModelSpec(family=family, input_frames=6, seed=3))
        with torch.no_grad():
            y = model(torch.rand(1, 1, 6, 64, 64))
        assert y.shape == (1, 1, 6, 64, 64)
        assert float(y.min()) >= 0.0 and float(y.max()) <= 1.0


# --- determinism --------------------------------------------------------------


@pytest.mark.parametrize("family", ["3dcae", "attention-unet", "multimodal"])
def test_same_seed_same_outputs(family):
    spec = small_spec(family, seed=99)
    torch.manual_seed(0)
    x = torch.rand(1, 1, 4, 32, 32)
    m1 = build_model(spec)
    m2 = build_model(spec)
    with torch.no_grad():
        if family == "multimodal":
            a1, b1 = m1(x, x)
            a2, b2 = m2(x, x)
            assert torch.equal(a1, a2) and torch.equal(b1, b2)
        else:
            assert torch.equal(m1(x), m2(x))


def test_different_seeds_differ():
    x = torch.rand(1, 1, 4, 32, 32)
    m1 = build_model(small_spec("3dcae", seed=1))
    m2 = build_model(small_spec("3dcae", seed=2))
    with torch.no_grad():
        assert not torch.equal(m1(x), m2(x))


def test_build_does_not_disturb_global_rng():
    torch.manual_seed(123)
    before = torch.rand(4)
    torch.manual_seed(123)
    build_model(small_spec("3dcae", seed=7))
    after = torch.rand(4)
    assert torch.equal(before, after)


# --- attention gate ------------------------------------------------------------


def test_attention_mask_final_axis_sums_to_one():
    torch.manual_seed(2)
    gate = AttentionGate3d(skip_ch=8, gate_ch=16)
    x = torch.rand(2, 8, 4, 8, 8)
    g = torch.rand(2, 16, 4, 2, 2)
    gated, mask = gate(x, g)
    assert gated.shape == x.shape
    assert mask.shape == (2, 1, 4, 8, 8)
    sums = mask.sum(dim=-1)
    assert torch.allclose(sums, torch.ones_like(sums), atol=1e-5)
    assert float(mask.min()) > 0.0 and float(mask.max()) < 1.0


def test_attention_mask_uniform_logits_closed_form():
    torch.manual_seed(2)
    gate = AttentionGate3d(skip_ch=4, gate_ch=4)
    with torch.no_grad():
        gate.logits.weight.zero_()  # logits identically 0 -> uniform mask
    x = torch.rand(1, 4, 3, 4, 6)
    g = torch.rand(1, 4, 3, 4, 6)
    gated, mask = gate(x, g)
    width = x.shape[-1]
    assert torch.allclose(mask, torch.full_like(mask, 1.0 / width), atol=1e-7)
    assert torch.allclose(gated, x / width, atol=1e-6)


def test_attention_unet_has_two_gates_and_no_finest_skip():
    model = build_attention_unet(ModelSpec(family="attention-unet", input_frames=6, seed=0))
    gates = [m for m in model.modules() if isinstance(m, AttentionGate3d)]
    assert len(gates) == 2
    assert model.gated_levels == (1, 2)
    # Structural check: the last decoder block's input is exactly the previous
    # block's output width, leaving no room for a concatenated skip.
    assert model.decoder[-1].conv.in_channels == model.decoder[-2].conv.out_channels
    # The two gated blocks do take widened inputs.
    widths = model.spec.channel_widths
    assert model.decoder[0].conv.in_channels == widths[-1] + widths[2]
    assert model.decoder[1].conv.in_channels == model.decoder[0].conv.out_channels + widths[1]


# --- fusion ---------------------------------------------------------------------


def test_fuse_identities():
    a = torch.rand(64, 6, 8, 8)
    assert torch.equal(fuse(a, torch.zeros_like(a), "add"), a)
    assert torch.equal(fuse(a, torch.ones_like(a), "multiply"), a)
    cat = fuse(a, a, "concat")
    assert cat.shape == (128, 6, 8, 8)
    batched = fuse(a.unsqueeze(0), a.unsqueeze(0), "concat")
    assert batched.shape == (1, 128, 6, 8, 8)


def test_fuse_errors():
    a = torch.rand(4, 2, 2, 2)
    with pytest.raises(DataError):
        fuse(a, torch.rand(4, 2, 2, 3), "add")
    with pytest.raises(ConfigError):
        fuse(a, a, "stack")


def test_multimodal_add_with_zeroed_encoder_ignores_other_stream():
    model = build_multimodal(small_spec("multimodal", fusion="add", seed=5))
    with torch.no_grad():
        for p in model.encoder_b.parameters():
            p.zero_()
    x_a = torch.rand(1, 1, 4, 32, 32)
    with torch.no_grad():
        out_1, _ = model(x_a, torch.rand(1, 1, 4, 32, 32))
        out_2, _ = model(x_a, torch.rand(1, 1, 4, 32, 32))
    assert torch.equal(out_1, out_2)


def test_concat_widens_only_first_decoder_convs():
    widths_by_mode = {}
    for fusion in ("add", "multiply", "concat"):
        model = build_multimodal(small_spec("multimodal", fusion=fusion, seed=0))
        widths_by_mode[fusion] = {
            name: tuple(p.shape) for name, p in model.named_parameters()
        }
    add_shapes, concat_shapes = widths_by_mode["add"], widths_by_mode["concat"]
    assert widths_by_mode["multiply"] == add_shapes
    assert set(add_shapes) == set(concat_shapes)
    differing = {name for name in add_shapes if add_shapes[name] != concat_shapes[name]}
    assert differing == {"decoder_a.0.conv.weight", "decoder_b.0.conv.weight"}
    for name in differing:
        assert concat_shapes[name][1] == 2 * add_shapes[name][1]


# --- gradient flow and training step ----------------------------------------------


def iter_family_models():
    yield "3dcae", build_model(small_spec("3dcae", seed=1)), False
    yield "attention-unet", build_model(small_spec("attention-unet", seed=1)), False
    for fusion in ("add", "multiply", "concat"):
        yield f"multimodal-{fusion}", build_model(
            small_spec("multimodal", fusion=fusion, seed=1)
        ), True


def test_every_parameter_receives_gradient():
    torch.manual_seed(0)
    spec = WindowSpec(4, 1)
    for name, model, paired in iter_family_models():
        x = torch.rand(2, 1, 4, 32, 32)
        tgt = torch.rand(2, 1, 4, 32, 32)
        if paired:
            out_a, out_b = model(x, x.flip(-1))
            loss = (
                temporal_shift_loss(out_a, tgt, spec).total
                + temporal_shift_loss(out_b, tgt.flip(-1), spec).total
            )
        else:
            loss = temporal_shift_loss(model(x), tgt, spec).total
        loss.backward()
        for pname, param in model.named_parameters():
            assert param.grad is not None, f"{name}: {pname} has no grad"
            assert float(param.grad.abs().max()) > 0.0, f"{name}: {pname} grad is zero"


@pytest.mark.parametrize("family", ["3dcae", "attention-unet"])
def test_one_step_decreases_loss(family):
    torch.manual_seed(4)
    spec = WindowSpec(4, 1)
    model = build_model(small_spec(family, seed=11))
    optimizer = torch.optim.Adam(model.parameters(), lr=1e-4)
    x = torch.rand(4, 1, 4, 32, 32)
    tgt = torch.rand(4, 1, 4, 32, 32)
    before = train_step(model, optimizer, x, tgt, spec)
    with torch.no_grad():
        after = float(temporal_shift_loss(model(x), tgt, spec).total)
    assert after < before


def test_one_step_decreases_loss_multimodal():
    torch.manual_seed(4)
    spec = WindowSpec(4, 1)
    for fusion in ("add", "multiply", "concat"):
        model = build_model(small_spec("multimodal", fusion=fusion, seed=11))
        optimizer = torch.optim.Adam(model.parameters(), lr=1e-4)
        x_a = torch.rand(4, 1, 4, 32, 32)
        x_b = torch.rand(4, 1, 4, 32, 32)
        t_a = torch.rand(4, 1, 4, 32, 32)
        t_b = torch.rand(4, 1, 4, 32, 32)

        def loss_fn():
            out_a, out_b = model(x_a, x_b)
            return (
                temporal_shift_loss(out_a, t_a, spec).total
                + temporal_shift_loss(out_b, t_b, spec).total
            )

        before = loss_fn()
        optimizer.zero_grad()
        before.backward()
        optimizer.step()
        with torch.no_grad():
            after = float(loss_fn())
        assert after < float(before), fusion
