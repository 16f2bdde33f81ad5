import numpy as np
import pytest

from glyphflow import (
    AttentionHook,
    ConfigError,
    ModelConfig,
    NonFiniteActivation,
    ShapeMismatch,
    TokenSequence,
    embed_patches,
    embed_prompt,
    fnv1a64,
    forward,
    image_position_encoding,
    init_model,
    load_weights,
    patchify,
    save_weights,
    timestep_embedding,
    unpatchify,
)
from glyphflow.model import TEXT_TABLE_ROWS


def make_tokens(weights, prompt, image_pixels):
    raw = patchify(image_pixels, weights.cfg)
    return TokenSequence(
        text=embed_prompt(prompt, weights.cfg),
        image=embed_patches(weights, raw),
    )


def test_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig(d_model=65, n_heads=4)
    with pytest.raises(ConfigError):
        ModelConfig(grid=0)
    cfg = ModelConfig(d_model=16, n_heads=2, n_layers=2, patch=4, grid=4, t_txt=4)
    assert cfg.n_img == 16
    assert cfg.seq_len == 20
    assert cfg.d_head == 8
    assert cfg.patch_dim == 16
    assert cfg.canvas == 16


def test_init_deterministic(tiny_cfg, tiny_weights):
    again = init_model(tiny_cfg)
    assert again.checksum() == tiny_weights.checksum()
    for name, arr in again.named().items():
        assert np.array_equal(arr, tiny_weights.named()[name]), name


def test_init_seed_changes_weights(tiny_cfg):
    import dataclasses

    other = init_model(dataclasses.replace(tiny_cfg, seed=1))
    assert other.checksum() != init_model(tiny_cfg).checksum()


def test_draw_order_is_sequential(tiny_cfg):
    # a deeper model consumes the same stream prefix, so shared tensors and
    # the first layers must be bit-identical while head_w moves down-stream
    import dataclasses

    shallow = init_model(dataclasses.replace(tiny_cfg, n_layers=1))
    deep = init_model(dataclasses.replace(tiny_cfg, n_layers=3))
    assert np.array_equal(shallow.text_table, deep.text_table)
    assert np.array_equal(shallow.pad_vec, deep.pad_vec)
    assert np.array_equal(shallow.patch_w, deep.patch_w)
    for key in ("wq", "wk", "wv", "wo", "w1", "w2", "ada"):
        assert np.array_equal(getattr(shallow.layers[0], key), getattr(deep.layers[0], key))
    assert not np.array_equal(shallow.head_w, deep.head_w)


def test_save_load_round_trip(tmp_path, tiny_weights):
    path = tmp_path / "model.bin"
    save_weights(path, tiny_weights)
    back = load_weights(path)
    assert back.cfg == tiny_weights.cfg
    assert back.checksum() == tiny_weights.checksum()
    for name, arr in back.named().items():
        assert arr.tobytes() == tiny_weights.named()[name].tobytes(), name


def test_fnv1a64_reference_vectors():
    assert fnv1a64("") == 0xCBF29CE484222325
    assert fnv1a64("a") == 0xAF63DC4C8601EC8C
    assert fnv1a64("foobar") == 0x85944171F73967E8


def test_patchify_hand_case():
    cfg = ModelConfig(d_model=4, n_heads=1, n_layers=1, patch=2, grid=2, t_txt=1)
    arr = np.arange(16, dtype=np.float64).reshape(4, 4)
    tokens = patchify(arr, cfg)
    assert tokens.shape == (4, 4)
    assert np.array_equal(tokens[0], [0, 1, 4, 5])
    assert np.array_equal(tokens[1], [2, 3, 6, 7])
    assert np.array_equal(tokens[2], [8, 9, 12, 13])
    assert np.array_equal(tokens[3], [10, 11, 14, 15])
    assert np.array_equal(unpatchify(tokens, cfg), arr)


def test_patchify_round_trip(tiny_cfg, rng):
    arr = rng.random((tiny_cfg.canvas, tiny_cfg.canvas))
    assert np.array_equal(unpatchify(patchify(arr, tiny_cfg), tiny_cfg), arr)
    with pytest.raises(ShapeMismatch):
        patchify(arr[:-1], tiny_cfg)
    with pytest.raises(ShapeMismatch):
        unpatchify(arr[:, :-1], tiny_cfg)


def test_position_encoding_row_col_split(tiny_cfg):
    enc = image_position_encoding(tiny_cfg)
    d = tiny_cfg.d_model
    d_rows = d - d // 2
    g = tiny_cfg.grid
    # same grid row -> same first-half slots; same column -> same second half
    assert np.array_equal(enc[0, :d_rows], enc[1, :d_rows])
    assert np.array_equal(enc[0, d_rows:], enc[g, d_rows:])
    assert not np.array_equal(enc[0], enc[1])
    assert not np.array_equal(enc[0], enc[g])


def test_timestep_embedding_values():
    emb = timestep_embedding(0.0, 4)
    assert np.array_equal(emb, [0.0, 1.0, 0.0, 1.0])
    assert not np.array_equal(timestep_embedding(0.25, 8), timestep_embedding(0.75, 8))


def test_embed_prompt_padding_and_truncation(tiny_cfg, tiny_weights):
    block = embed_prompt("", tiny_cfg)
    assert block.shape == (tiny_cfg.t_txt, tiny_cfg.d_model)
    assert np.array_equal(block, np.tile(tiny_weights.pad_vec, (tiny_cfg.t_txt, 1)))

    one = embed_prompt("logo", tiny_cfg)
    row = tiny_weights.text_table[fnv1a64("logo") % TEXT_TABLE_ROWS]
    assert np.array_equal(one[0], row)
    assert np.array_equal(one[1:], block[1:])

    crowded = embed_prompt("a b c d e f", tiny_cfg)
    assert crowded.shape == (tiny_cfg.t_txt, tiny_cfg.d_model)
    assert np.array_equal(crowded[-1], embed_prompt("d", tiny_cfg)[0])


def test_embed_prompt_position_independent(tiny_cfg):
    assert np.array_equal(embed_prompt("a b", tiny_cfg)[1], embed_prompt("c b", tiny_cfg)[1])
    assert np.array_equal(
        embed_prompt("logo logo", tiny_cfg)[0], embed_prompt("logo logo", tiny_cfg)[1]
    )


def test_forward_shapes_and_determinism(tiny_weights, tiny_glyph):
    tokens = make_tokens(tiny_weights, "A text A logo", tiny_glyph.pixels)
    v1, caps = forward(tiny_weights, tokens, 0.5)
    assert v1.shape == (tiny_weights.cfg.n_img, tiny_weights.cfg.patch_dim)
    assert caps == {}
    v2, _ = forward(tiny_weights, tokens, 0.5)
    assert np.array_equal(v1, v2)
    assert not np.array_equal(v1, forward(tiny_weights, tokens, 0.75)[0])


def test_forward_validation(tiny_weights, tiny_glyph):
    tokens = make_tokens(tiny_weights, "x", tiny_glyph.pixels)
    with pytest.raises(ConfigError):
        forward(tiny_weights, tokens, 1.5)
    bad = TokenSequence(text=tokens.text[:2], image=tokens.image)
    with pytest.raises(ShapeMismatch):
        forward(tiny_weights, bad, 0.5)
    with np.errstate(invalid="ignore"):
        blown_up = tokens.image * np.inf
    with pytest.raises(NonFiniteActivation):
        TokenSequence(text=tokens.text, image=blown_up)


def test_capture_flags_and_row_sums(tiny_weights, tiny_glyph):
    cfg = tiny_weights.cfg
    tokens = make_tokens(tiny_weights, "A", tiny_glyph.pixels)
    hook = AttentionHook(layers=frozenset({1}), store_logits=True, store_probs=True)
    _, caps = forward(tiny_weights, tokens, 0.25, hook)
    assert set(caps) == {1}
    att = caps[1]
    assert att.logits.shape == (cfg.n_heads, cfg.seq_len, cfg.seq_len)
    assert np.allclose(att.probs.sum(axis=-1), 1.0, atol=1e-9)
    assert att.i2i().shape == (cfg.n_heads, cfg.n_img, cfg.n_img)
    assert att.t2i("logits").shape == (cfg.n_heads, cfg.t_txt, cfg.n_img)

    only_logits = AttentionHook(store_logits=True)
    _, caps = forward(tiny_weights, tokens, 0.25, only_logits)
    assert set(caps) == {0, 1}
    with pytest.raises(ConfigError):
        caps[0].i2i("probs")


def test_identity_override_is_no_op(tiny_weights, tiny_glyph):
    tokens = make_tokens(tiny_weights, "A", tiny_glyph.pixels)
    base, _ = forward(tiny_weights, tokens, 0.5)
    hook = AttentionHook(override=lambda step, layer, head, block: block)
    same, _ = forward(tiny_weights, tokens, 0.5, hook)
    assert np.array_equal(base, same)


def test_override_touches_only_i2i(tiny_weights, tiny_glyph):
    tokens = make_tokens(tiny_weights, "A", tiny_glyph.pixels)
    capture = AttentionHook(store_logits=True, store_probs=True)
    _, base = forward(tiny_weights, tokens, 0.5, capture)

    hooked = AttentionHook(
        store_logits=True,
        store_probs=True,
        override=lambda step, layer, head, block: np.zeros_like(block),
    )
    _, out = forward(tiny_weights, tokens, 0.5, hooked)

    for which in ("t2t", "t2i", "i2t"):
        assert np.array_equal(getattr(out[0], which)("logits"), getattr(base[0], which)("logits"))
    assert not np.array_equal(out[0].i2i("logits"), base[0].i2i("logits"))
    assert np.array_equal(out[0].i2i("logits"), np.zeros_like(out[0].i2i("logits")))
    # text rows are softmaxed over unchanged logits
    t_txt = tiny_weights.cfg.t_txt
    assert np.array_equal(out[0].probs[:, :t_txt, :], base[0].probs[:, :t_txt, :])


def test_constant_override_uniform_image_rows(tiny_weights, tiny_glyph):
    tokens = make_tokens(tiny_weights, "A", tiny_glyph.pixels)
    hook = AttentionHook(
        store_probs=True, override=lambda step, layer, head, block: np.full_like(block, 3.7)
    )
    _, caps = forward(tiny_weights, tokens, 0.5, hook)
    for att in caps.values():
        i2i = att.i2i()
        assert np.ptp(i2i, axis=-1).max() == 0.0  # each image row uniform over image keys


def test_non_finite_override_raises(tiny_weights, tiny_glyph):
    tokens = make_tokens(tiny_weights, "A", tiny_glyph.pixels)
    hook = AttentionHook(override=lambda step, layer, head, block: block * np.inf)
    with pytest.raises(NonFiniteActivation):
        forward(tiny_weights, tokens, 0.5, hook)


# ------------------------------------------------------------------
# directional derivative check on a frozen-attention configuration
# ------------------------------------------------------------------

_GA = 0.7978845608028654
_GB = 0.044715


def _ln_jvp(x, dx):
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    s = np.sqrt(var + 1e-6)
    y = (x - mean) / s
    dmean = dx.mean(axis=-1, keepdims=True)
    dvar = 2.0 * ((x - mean) * dx).mean(axis=-1, keepdims=True)
    ds = dvar / (2.0 * s)
    dy = (dx - dmean) / s - (x - mean) * ds / s**2
    return y, dy


def _gelu_jvp(z, dz):
    u = _GA * (z + _GB * z**3)
    th = np.tanh(u)
    g = 0.5 * z * (1.0 + th)
    dg = (0.5 * (1.0 + th) + 0.5 * z * (1.0 - th**2) * _GA * (1.0 + 3.0 * _GB * z**2)) * dz
    return g, dg


def _pinned_probe(weights, image_block, t):
    """Value of sum(velocity) when every I2I row is pinned one-hot onto itself.

    With the diagonal pinned at +1000 and everything else in the row at -1000,
    image attention rows underflow to an exact self-pick and text tokens stop
    influencing the image stream, so the image chain is plain elementwise math.
    """
    from glyphflow.model import timestep_embedding as temb

    t_emb = temb(t, weights.cfg.d_model)
    x = image_block
    for lw in weights.layers:
        s1, b1, s2, b2 = np.split(t_emb @ lw.ada, 4)
        h = _ln_jvp(x, np.zeros_like(x))[0] * (1.0 + s1) + b1
        x = x + (h @ lw.wv) @ lw.wo
        h2 = _ln_jvp(x, np.zeros_like(x))[0] * (1.0 + s2) + b2
        x = x + _gelu_jvp(h2 @ lw.w1, np.zeros_like(h2 @ lw.w1))[0] @ lw.w2
    return (_ln_jvp(x, np.zeros_like(x))[0] @ weights.head_w).sum()


def _pinned_probe_jvp(weights, image_block, direction, t):
    from glyphflow.model import timestep_embedding as temb

    t_emb = temb(t, weights.cfg.d_model)
    x, dx = image_block, direction
    for lw in weights.layers:
        s1, b1, s2, b2 = np.split(t_emb @ lw.ada, 4)
        y, dy = _ln_jvp(x, dx)
        h, dh = y * (1.0 + s1) + b1, dy * (1.0 + s1)
        x = x + (h @ lw.wv) @ lw.wo
        dx = dx + (dh @ lw.wv) @ lw.wo
        y2, dy2 = _ln_jvp(x, dx)
        h2, dh2 = y2 * (1.0 + s2) + b2, dy2 * (1.0 + s2)
        z, dz = h2 @ lw.w1, dh2 @ lw.w1
        g, dg = _gelu_jvp(z, dz)
        x = x + g @ lw.w2
        dx = dx + dg @ lw.w2
    y, dy = _ln_jvp(x, dx)
    return (dy @ weights.head_w).sum()


def test_directional_derivative_matches_pinned_linearization(tiny_weights, tiny_glyph, rng):
    cfg = tiny_weights.cfg
    pin = 1000.0

    def override(step, layer, head, block):
        out = np.full_like(block, -pin)
        np.fill_diagonal(out, pin)
        return out

    tokens = make_tokens(tiny_weights, "A text A logo", tiny_glyph.pixels)
    t = 0.5
    vel, _ = forward(tiny_weights, tokens, t, AttentionHook(override=override))

    # the reduced image-only chain reproduces the pinned forward exactly
    assert abs(vel.sum() - _pinned_probe(tiny_weights, tokens.image, t)) < 1e-9

    direction = rng.standard_normal(tokens.image.shape)
    direction /= np.linalg.norm(direction)
    analytic = _pinned_probe_jvp(tiny_weights, tokens.image, direction, t)
    assert abs(analytic) > 1e-4  # non-vacuous

    eps = 1e-6
    plus = TokenSequence(text=tokens.text, image=tokens.image + eps * direction)
    minus = TokenSequence(text=tokens.text, image=tokens.image - eps * direction)
    lp = forward(tiny_weights, plus, t, AttentionHook(override=override))[0].sum()
    lm = forward(tiny_weights, minus, t, AttentionHook(override=override))[0].sum()
    fd = (lp - lm) / (2.0 * eps)

    assert abs(fd - analytic) / max(abs(analytic), 1e-6) < 1e-4
