import math

import numpy as np
import pytest

from cliniclm import tensor as T
from cliniclm.checkpoint import (
    Checkpoint,
    content_hash,
    init_model,
    load_checkpoint,
    save_checkpoint,
)
from cliniclm.model import (
    ConfigError,
    ModelConfig,
    ModelInputError,
    forward_graph,
    lm_loss,
    param_count,
    wrap_params,
)

TOY = ModelConfig(n_layers=2, hidden=64, n_heads=4, vocab_size=256, context_len=128, init_seed=42)


@pytest.fixture(scope="module")
def toy_ckpt():
    return init_model(TOY)


class TestConfig:
    def test_indivisible_heads_rejected(self):
        with pytest.raises(ConfigError):
            ModelConfig(n_layers=1, hidden=64, n_heads=5, vocab_size=10, context_len=8)

    def test_bad_dropout_rejected(self):
        with pytest.raises(ConfigError):
            ModelConfig(n_layers=1, hidden=8, n_heads=2, vocab_size=10, context_len=8, dropout=1.0)


class TestInitAndCount:
    def test_same_seed_same_hash(self):
        a = init_model(TOY)
        b = init_model(TOY)
        assert a.content_hash == b.content_hash

    def test_different_seed_different_hash(self):
        other = ModelConfig(n_layers=2, hidden=64, n_heads=4, vocab_size=256, context_len=128, init_seed=43)
        assert init_model(TOY).content_hash != init_model(other).content_hash

    def test_param_count_within_10pct_of_published_sizes(self):
        c5 = ModelConfig(n_layers=24, hidden=4096, n_heads=32, vocab_size=50257, context_len=2048)
        c20 = ModelConfig(n_layers=44, hidden=6144, n_heads=48, vocab_size=50257, context_len=2048)
        assert abs(param_count(c5) - 5.0e9) / 5.0e9 < 0.10
        assert abs(param_count(c20) - 2.0e10) / 2.0e10 < 0.10

    def test_embedding_only_closed_form(self):
        cfg = ModelConfig(n_layers=0, hidden=16, n_heads=2, vocab_size=50, context_len=12)
        assert param_count(cfg) == 50 * 16 + 12 * 16 + 2 * 16

    @pytest.mark.parametrize(
        "cfg",
        [
            TOY,
            ModelConfig(n_layers=1, hidden=32, n_heads=2, vocab_size=64, context_len=16),
            ModelConfig(n_layers=0, hidden=16, n_heads=1, vocab_size=32, context_len=8),
        ],
    )
    def test_count_equals_allocated(self, cfg):
        ckpt = init_model(cfg)
        assert sum(v.size for v in ckpt.params.values()) == param_count(cfg)

    def test_toy_constructs_and_forwards(self, toy_ckpt):
        logits = toy_ckpt.forward(np.array([[1, 2, 3]]))
        assert logits.shape == (1, 3, 256)


class TestForward:
    def test_output_shape(self, toy_ckpt):
        toks = np.random.default_rng(0).integers(0, 256, size=(3, 17))
        assert toy_ckpt.forward(toks).shape == (3, 17, 256)

    def test_eval_deterministic(self, toy_ckpt):
        toks = np.random.default_rng(1).integers(0, 256, size=(2, 9))
        a = toy_ckpt.forward(toks)
        b = toy_ckpt.forward(toks)
        assert a.tobytes() == b.tobytes()

    def test_causality_bitwise(self, toy_ckpt):
        rng = np.random.default_rng(2)
        for _ in range(25):
            toks = rng.integers(0, 256, size=(1, 12))
            j = int(rng.integers(1, 12))
            base = toy_ckpt.forward(toks)
            perturbed = toks.copy()
            perturbed[0, j] = (perturbed[0, j] + 1 + rng.integers(0, 254)) % 256
            after = toy_ckpt.forward(perturbed)
            assert base[:, :j].tobytes() == after[:, :j].tobytes()

    def test_id_out_of_range_rejected(self, toy_ckpt):
        with pytest.raises(ModelInputError):
            toy_ckpt.forward(np.array([[0, 300]]))

    def test_overlong_rejected(self, toy_ckpt):
        with pytest.raises(ModelInputError):
            toy_ckpt.forward(np.zeros((1, 129), dtype=int))


class TestLoss:
    def test_uniform_logits_loss_is_log_v(self):
        logits = T.Tensor(np.zeros((2, 5, 11)))
        toks = np.random.default_rng(0).integers(0, 11, size=(2, 5))
        assert lm_loss(logits, toks).item() == pytest.approx(math.log(11), rel=1e-6)

    def test_confident_correct_logits_drive_loss_to_zero(self):
        toks = np.array([[1, 2, 3, 4]])
        logits = np.zeros((1, 4, 8), dtype=np.float32)
        for pos in range(3):
            logits[0, pos, toks[0, pos + 1]] = 50.0
        assert lm_loss(T.Tensor(logits), toks).item() < 1e-6

    def test_fresh_model_loss_near_log_v(self, toy_ckpt):
        toks = np.random.default_rng(3).integers(0, 256, size=(8, 32))
        params_t = wrap_params(toy_ckpt.params, requires_grad=False)
        loss = lm_loss(forward_graph(params_t, TOY, toks), toks).item()
        assert abs(loss - math.log(256)) / math.log(256) < 0.02

    def test_short_sequence_rejected(self, toy_ckpt):
        logits = T.Tensor(np.zeros((1, 1, 256)))
        with pytest.raises(ModelInputError):
            lm_loss(logits, np.array([[5]]))

    def test_loss_gradient_matches_finite_differences_fp64(self):
        from cliniclm.model import init_params

        cfg = ModelConfig(n_layers=2, hidden=16, n_heads=2, vocab_size=23, context_len=12, dropout=0.0, init_seed=9)
        params = init_params(cfg, dtype="fp64")
        toks = np.random.default_rng(4).integers(0, 23, size=(2, 7))

        def loss_at(arrays):
            pt = {k: T.Tensor(v) for k, v in arrays.items()}
            return lm_loss(forward_graph(pt, cfg, toks), toks).item()

        pt = {k: T.Tensor(v, requires_grad=True) for k, v in params.items()}
        T.backward(lm_loss(forward_graph(pt, cfg, toks), toks))

        rng = np.random.default_rng(5)
        h = 1e-5
        for name in params:
            arr = params[name]
            for _ in range(2):
                idx = tuple(rng.integers(0, s) for s in arr.shape)
                plus = {k: v.copy() for k, v in params.items()}
                plus[name][idx] += h
                minus = {k: v.copy() for k, v in params.items()}
                minus[name][idx] -= h
                fd = (loss_at(plus) - loss_at(minus)) / (2 * h)
                an = pt[name].grad[idx]
                assert abs(fd - an) / max(abs(fd), abs(an), 1e-8) < 1e-4, name


class TestCheckpointIO:
    def test_roundtrip_preserves_hash(self, toy_ckpt, tmp_path):
        path = tmp_path / "toy.npz"
        save_checkpoint(toy_ckpt, path)
        loaded = load_checkpoint(path)
        assert loaded.content_hash == toy_ckpt.content_hash
        assert loaded.config == toy_ckpt.config
        assert loaded.train_step == toy_ckpt.train_step

    def test_hash_covers_parameter_bytes(self, toy_ckpt):
        params = {k: v.copy() for k, v in toy_ckpt.params.items()}
        params["tok_emb"][0, 0] += 1.0
        assert content_hash(params) != toy_ckpt.content_hash
