import math

import numpy as np
import pytest
from pydantic import ValidationError

from aavit.errors import ContractError, DimensionError
from aavit.models.vit import (
    AAViT,
    ModelParams,
    embed,
    encoder_forward,
    forward_logits,
    head_aamlp,
    head_baseline,
    model_forward,
    parameter_specs,
    patchify,
)
from aavit.schemas.model import HeadKind, ModelConfig
from aavit.tensor import Precision, Tensor


def random_image(rng, size=8, precision=Precision.STANDARD):
    return Tensor(rng.uniform(size=(size, size, 3)), precision=precision)


class TestModelConfig:
    """Tests for architecture validation"""

    def test_default_architecture(self):
        """Test the ViT-Base defaults"""
        config = ModelConfig()
        assert (config.image_size, config.patch_size, config.embed_dim) == (256, 16, 768)
        assert config.num_patches == 256
        assert config.head_features == 256 * 8

    def test_patch_must_divide_image(self):
        """Test that a patch size not dividing the image is rejected"""
        with pytest.raises(ValidationError):
            ModelConfig(image_size=10, patch_size=4)

    def test_heads_must_divide_width(self):
        """Test that num_heads must divide embed_dim"""
        with pytest.raises(ValidationError):
            ModelConfig(embed_dim=10, num_heads=3)

    def test_pool_out_bounded_by_hidden(self):
        """Test that P may not exceed h"""
        with pytest.raises(ValidationError):
            ModelConfig(mlp_hidden=4, pool_out=5)

    def test_display_names(self):
        """Test the ablation row labels"""
        assert [k.display_name for k in (HeadKind.AAMLP, HeadKind.AAMLP_NO_ATTENTION, HeadKind.BASELINE_VIT)] == [
            "AAViT", "AAViT w/o attention", "ViT",
        ]


class TestParameters:
    """Tests for parameter layout and initialisation"""

    def test_attention_weights_only_when_attending(self, make_config):
        """Test that only the AAMLP head owns q/k/v pooling projections"""
        names = {kind: [n for n, _, _ in parameter_specs(make_config(kind))] for kind in HeadKind}
        assert "head.attn.q" in names[HeadKind.AAMLP]
        assert "head.attn.q" not in names[HeadKind.AAMLP_NO_ATTENTION]
        assert "head.attn.q" not in names[HeadKind.BASELINE_VIT]

    def test_fc2_width_per_head(self, make_config):
        """Test that FC2 consumes n*P pooled or n averaged features"""
        shapes = {kind: dict((n, s) for n, s, _ in parameter_specs(make_config(kind))) for kind in HeadKind}
        assert shapes[HeadKind.AAMLP]["head.fc2.weight"] == (4 * 4, 2)
        assert shapes[HeadKind.BASELINE_VIT]["head.fc2.weight"] == (4, 2)

    def test_same_seed_same_values(self, make_config):
        """Test that initialisation is a function of the seed"""
        a = ModelParams.initialize(make_config(seed=5)).arrays()
        b = ModelParams.initialize(make_config(seed=5)).arrays()
        c = ModelParams.initialize(make_config(seed=6)).arrays()
        assert all(np.array_equal(a[k], b[k]) for k in a)
        assert not np.array_equal(a["patch_embed.weight"], c["patch_embed.weight"])

    def test_variants_share_encoder_init(self, make_config):
        """Test that head variants start from the same encoder values"""
        aamlp = ModelParams.initialize(make_config(HeadKind.AAMLP)).arrays()
        vit = ModelParams.initialize(make_config(HeadKind.BASELINE_VIT)).arrays()
        for name in ("patch_embed.weight", "pos_embed", "blocks.0.attn.q.weight", "head.fc1.weight"):
            np.testing.assert_array_equal(aamlp[name], vit[name])

    def test_wrong_shape_rejected(self, make_config):
        """Test that arrays with the wrong shape are refused"""
        config = make_config()
        arrays = ModelParams.initialize(config).arrays()
        arrays["pos_embed"] = np.zeros((3, 8))
        with pytest.raises(DimensionError):
            ModelParams.from_arrays(config, arrays)


class TestForward:
    """Tests for the forward pass"""

    def test_patchify_order(self):
        """Test that patches are row-major and pixels row-major then channel"""
        image = Tensor(np.arange(4 * 4 * 3, dtype=np.float64).reshape(4, 4, 3))
        patches = patchify(image, 2)
        assert patches.shape == (4, 12)
        np.testing.assert_array_equal(patches.data[1, :6], [6, 7, 8, 9, 10, 11])
        np.testing.assert_array_equal(patches.data[2, :3], [24, 25, 26])

    def test_patchify_rejects_indivisible(self):
        """Test that an image not divisible into patches is refused"""
        with pytest.raises(DimensionError):
            patchify(Tensor(np.zeros((6, 6, 3))), 4)

    def test_encoder_keeps_shape(self, rng, make_config):
        """Test that the encoder maps n x d to n x d"""
        model = AAViT(make_config(depth=2))
        tokens = embed(patchify(random_image(rng), 4), model.params)
        assert encoder_forward(tokens, model.params).shape == (4, 8)

    def test_zero_depth_is_identity(self, rng, make_config):
        """Test that a depth-0 encoder returns its input"""
        model = AAViT(make_config(depth=0))
        tokens = embed(patchify(random_image(rng), 4), model.params)
        np.testing.assert_array_equal(encoder_forward(tokens, model.params).data, tokens.data)

    @pytest.mark.parametrize("head_kind", list(HeadKind))
    def test_probabilities_sum_to_one(self, rng, make_config, head_kind):
        """Test that every head yields a distribution over the classes"""
        model = AAViT(make_config(head_kind))
        for _ in range(20):
            p = model(random_image(rng)).data
            assert p.shape == (2,)
            assert abs(p.sum() - 1.0) <= 1e-6
            assert (p >= 0).all()

    def test_attention_rows_sum_to_one(self, rng, make_config):
        """Test that captured attention maps are row-stochastic"""
        model = AAViT(make_config(num_heads=2))
        maps = []
        forward_logits(random_image(rng), model.params, attention_maps=maps)
        assert len(maps) == 3  # two encoder heads plus the pooling head
        assert maps[-1].shape == (4, 4)
        for weights in maps:
            np.testing.assert_allclose(weights.sum(axis=-1), 1.0, atol=1e-6)

    def test_zero_parameters_score_half(self, rng, make_config):
        """Test that an all-zero model is undecided"""
        config = make_config()
        model = AAViT(config, ModelParams.zeros(config))
        assert model.score(random_image(rng)) == 0.5

    def test_wrong_image_size(self, rng, toy_model):
        """Test that an image of another size is refused"""
        with pytest.raises(DimensionError):
            toy_model(random_image(rng, size=16))

    def test_head_kind_contracts(self, rng, make_config):
        """Test that each head function checks the configured kind"""
        aamlp = AAViT(make_config(HeadKind.AAMLP)).params
        vit = AAViT(make_config(HeadKind.BASELINE_VIT)).params
        tokens = Tensor(rng.normal(size=(4, 8)))
        with pytest.raises(ContractError):
            head_baseline(tokens, aamlp)
        with pytest.raises(ContractError):
            head_aamlp(tokens, aamlp, attention_enabled=False)
        with pytest.raises(ContractError):
            head_aamlp(tokens, vit, attention_enabled=False)

    def test_model_forward_checks_config(self, rng, make_config):
        """Test that parameters must belong to the given config"""
        params = ModelParams.initialize(make_config())
        with pytest.raises(ContractError):
            model_forward(random_image(rng), make_config(seed=1), params)

    def test_frozen_scores_equal_and_record_no_graph(self, rng, toy_model):
        """Test that the frozen copy scores identically without tracking gradients"""
        image = random_image(rng)
        frozen = toy_model.frozen()
        assert frozen.score(image) == toy_model.score(image)
        assert not frozen.logits(image).requires_grad


class TestHeadDegeneracy:
    """AAMLP with one pooling bin and no attention reduces to the baseline head"""

    def test_matches_baseline(self, rng, make_config):
        """Test equality on 100 random token matrices with shared weights"""
        pooled_config = make_config(HeadKind.AAMLP_NO_ATTENTION, pool_out=1, precision=Precision.VERIFICATION)
        base_config = make_config(HeadKind.BASELINE_VIT, pool_out=1, precision=Precision.VERIFICATION)
        pooled = ModelParams.initialize(pooled_config)
        base = ModelParams.from_arrays(base_config, pooled.arrays())
        for _ in range(100):
            tokens = Tensor(rng.normal(size=(4, 8)), precision=Precision.VERIFICATION)
            np.testing.assert_allclose(
                head_aamlp(tokens, pooled, attention_enabled=False).data,
                head_baseline(tokens, base).data,
                rtol=0, atol=1e-7,
            )


def ref_matmul(a, b):
    return [[sum(a[i][k] * b[k][j] for k in range(len(b))) for j in range(len(b[0]))] for i in range(len(a))]


def ref_add_row(a, bias):
    return [[x + b for x, b in zip(row, bias)] for row in a]


def ref_add(a, b):
    return [[x + y for x, y in zip(ra, rb)] for ra, rb in zip(a, b)]


def ref_gelu(x):
    return 0.5 * x * (1.0 + math.tanh(math.sqrt(2.0 / math.pi) * (x + 0.044715 * x ** 3)))


def ref_softmax(row):
    top = max(row)
    e = [math.exp(x - top) for x in row]
    return [x / sum(e) for x in e]


def ref_layer_norm(a, gain, bias, eps=1e-5):
    out = []
    for row in a:
        mu = sum(row) / len(row)
        var = sum((x - mu) ** 2 for x in row) / len(row)
        out.append([(x - mu) / math.sqrt(var + eps) * g + b for x, g, b in zip(row, gain, bias)])
    return out


def ref_attention(q, k, v, width):
    scores = [[s / math.sqrt(width) for s in row] for row in ref_matmul(q, [list(c) for c in zip(*k)])]
    return ref_matmul([ref_softmax(row) for row in scores], v)


def fixed_params(config, seed, overrides=None):
    """Initial parameters with every tensor replaced by fixed small normals"""
    draw = np.random.default_rng(seed)
    arrays = {name: draw.normal(scale=0.5, size=a.shape) for name, a in ModelParams.initialize(config).arrays().items()}
    arrays.update(overrides or {})
    return ModelParams.from_arrays(config, arrays)


class TestReferenceWalkthroughs:
    """Forward passes against scalar step-by-step recomputation"""

    def test_encoder_block(self):
        """Test one pre-norm block on two tokens of width two"""
        config = ModelConfig(
            image_size=4, patch_size=2, embed_dim=2, depth=1, num_heads=1, encoder_mlp_ratio=1,
            mlp_hidden=2, pool_out=1, precision=Precision.VERIFICATION,
        )
        params = fixed_params(config, seed=21)
        p = {name: t.data.tolist() for name, t in params.items()}
        x = [[0.3, -1.1], [0.8, 0.25]]

        normed = ref_layer_norm(x, p["blocks.0.norm1.gain"], p["blocks.0.norm1.bias"])
        q, k, v = (ref_add_row(ref_matmul(normed, p[f"blocks.0.attn.{n}.weight"]), p[f"blocks.0.attn.{n}.bias"])
                   for n in "qkv")
        attended = ref_add_row(ref_matmul(ref_attention(q, k, v, 2), p["blocks.0.attn.o.weight"]),
                               p["blocks.0.attn.o.bias"])
        x = ref_add(x, attended)
        normed = ref_layer_norm(x, p["blocks.0.norm2.gain"], p["blocks.0.norm2.bias"])
        hidden = [[ref_gelu(h) for h in row]
                  for row in ref_add_row(ref_matmul(normed, p["blocks.0.mlp.fc1.weight"]), p["blocks.0.mlp.fc1.bias"])]
        expected = ref_add(x, ref_add_row(ref_matmul(hidden, p["blocks.0.mlp.fc2.weight"]), p["blocks.0.mlp.fc2.bias"]))

        tokens = Tensor(np.array([[0.3, -1.1], [0.8, 0.25]]), precision=Precision.VERIFICATION)
        np.testing.assert_allclose(encoder_forward(tokens, params).data, expected, rtol=0, atol=1e-12)

    def test_pooled_attention_head(self):
        """Test the AAMLP head with h=4 pooled to P=2 over four tokens"""
        config = ModelConfig(
            image_size=4, patch_size=2, embed_dim=2, depth=0, num_heads=1,
            mlp_hidden=4, pool_out=2, precision=Precision.VERIFICATION,
        )
        params = fixed_params(config, seed=22)
        p = {name: t.data.tolist() for name, t in params.items()}
        tokens = [[0.5, -0.2], [1.0, 0.3], [-0.7, 0.9], [0.1, 0.1]]

        u = [[ref_gelu(h) for h in row]
             for row in ref_add_row(ref_matmul(tokens, p["head.fc1.weight"]), p["head.fc1.bias"])]
        pooled = [[(row[0] + row[1]) / 2, (row[2] + row[3]) / 2] for row in u]
        q, k, v = (ref_matmul(pooled, p[f"head.attn.{n}"]) for n in "qkv")
        flat = [value for row in ref_attention(q, k, v, 2) for value in row]
        expected = ref_add_row(ref_matmul([flat], p["head.fc2.weight"]), p["head.fc2.bias"])[0]

        logits = head_aamlp(Tensor(np.array(tokens), precision=Precision.VERIFICATION), params, attention_enabled=True)
        np.testing.assert_allclose(logits.data, expected, rtol=0, atol=1e-12)

    def test_single_token_attention_is_value_projection(self):
        """Test that with one token the attention output is p . Wv"""
        config = ModelConfig(
            image_size=2, patch_size=2, embed_dim=2, depth=0, num_heads=1,
            mlp_hidden=4, pool_out=2, precision=Precision.VERIFICATION,
        )
        params = fixed_params(config, seed=23)
        maps = []
        tokens = Tensor(np.array([[0.4, -0.6]]), precision=Precision.VERIFICATION)
        logits = head_aamlp(tokens, params, attention_enabled=True, attention_maps=maps)
        np.testing.assert_array_equal(maps[0], [[1.0]])

        p = {name: t.data.tolist() for name, t in params.items()}
        u = [[ref_gelu(h) for h in row]
             for row in ref_add_row(ref_matmul([[0.4, -0.6]], p["head.fc1.weight"]), p["head.fc1.bias"])]
        pooled = [[(u[0][0] + u[0][1]) / 2, (u[0][2] + u[0][3]) / 2]]
        expected = ref_add_row(ref_matmul(ref_matmul(pooled, p["head.attn.v"]), p["head.fc2.weight"]),
                               p["head.fc2.bias"])[0]
        np.testing.assert_allclose(logits.data, expected, rtol=0, atol=1e-12)

    def test_baseline_with_unit_classifier(self):
        """Test that s = [1, 2, 3, 0] and an all-ones FC2 give both logits 6"""
        config = ModelConfig(
            image_size=4, patch_size=2, embed_dim=20, depth=0, num_heads=1, mlp_hidden=20, pool_out=1,
            head_kind=HeadKind.BASELINE_VIT, precision=Precision.VERIFICATION,
        )
        params = fixed_params(config, seed=24, overrides={
            "head.fc1.weight": 10.0 * np.eye(20),
            "head.fc1.bias": np.zeros(20),
            "head.fc2.weight": np.ones((4, 2)),
            "head.fc2.bias": np.zeros(2),
        })
        # GELU(10) == 10 and GELU(-10) == 0 in float64, so each row mean is (# of +1) / 2
        tokens = -np.ones((4, 20))
        for row, positives in enumerate((2, 4, 6, 0)):
            tokens[row, :positives] = 1.0
        logits = head_baseline(Tensor(tokens, precision=Precision.VERIFICATION), params)
        np.testing.assert_array_equal(logits.data, [6.0, 6.0])
