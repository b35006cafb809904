import numpy as np
import pytest

from helpers import central_difference, fix_b, permute_edges, random_complex, rel_error
from scnp import autodiff as ad
from scnp.autodiff import Tape
from scnp.conv import Nonlinearity, ScnpLayerParams
from scnp.errors import EmptySignal, UnreadableFile
from scnp.model import (
    JkModel,
    JkModelConfig,
    is_checkpoint,
    jk_forward,
    load_model,
    mlp_head,
    readout,
    save_model,
    scnp_layer_forward,
)
from scnp.pooling import PoolingConfig, Strategy, select_count

STRATEGIES = ["none", "max", "topk", "selfatt", "septopk"]


class TestReadout:
    def test_mean_then_max(self):
        np.testing.assert_array_equal(readout(Tape().leaf([[1, 2], [3, 4]])).value, [[2, 3, 3, 4]])

    def test_single_row(self):
        np.testing.assert_array_equal(readout(Tape().leaf([[5, -1]])).value, [[5, -1, 5, -1]])

    def test_zero(self):
        assert not np.any(readout(Tape().leaf(np.zeros((4, 3)))).value)

    def test_empty(self):
        with pytest.raises(EmptySignal):
            readout(Tape().leaf(np.zeros((0, 2))))


def small_model(strategy, seed=0, layers=2, hidden=4, in_channels=2, nonlinearity="tanh", **kw):
    cfg = JkModelConfig(in_channels, 3, hidden=hidden, num_layers=layers, strategy=strategy, nonlinearity=nonlinearity, **kw)
    return JkModel.init(cfg, seed=seed)


class TestJkForward:
    def test_single_layer_without_pooling(self):
        rng = np.random.default_rng(0)
        model = small_model("none", layers=1)
        X = rng.normal(size=(5, 2))
        c = fix_b()
        layer = model.layers[0]
        Y = np.tanh(c.lower_laplacian @ X @ layer.D[0] + c.upper_laplacian @ X @ layer.U[0] + X @ layer.H)
        emb = np.concatenate([Y.mean(axis=0), Y.max(axis=0)])[None, :]
        (W0, b0), (W1, b1) = model.mlp
        expected = np.maximum(emb @ W0 + b0, 0) @ W1 + b1
        np.testing.assert_allclose(jk_forward(model, c, X).value, expected, rtol=1e-12)

    def test_embeddings_are_summed(self):
        rng = np.random.default_rng(1)
        model = small_model("max", hidden=1)
        model.mlp = [(np.eye(2), np.zeros((1, 2)))]
        X = rng.normal(size=(5, 2))
        tape = Tape()
        c, x, total = fix_b(), tape.constant(X), np.zeros((1, 2))
        for layer, pool in zip(model.layers, model.pools):
            c, x, _ = scnp_layer_forward(c, x, layer, pool)
            total += readout(x).value
        np.testing.assert_allclose(jk_forward(model, fix_b(), X).value, total)
        t = Tape()
        s = ad.add(t.leaf([[1.0, 1.0]]), t.leaf([[2.0, 0.0]]))
        np.testing.assert_array_equal(mlp_head(model, s).value, [[3, 1]])

    def test_edge_counts_shrink_per_layer(self):
        rng = np.random.default_rng(2)
        c = random_complex(rng, max_edges=120, max_vertices=30)
        model = small_model("topk", layers=3, ratio=0.5)
        x = Tape().constant(rng.normal(size=(c.num_edges, 2)))
        E = c.num_edges
        for layer, pool in zip(model.layers, model.pools):
            c, x, _ = scnp_layer_forward(c, x, layer, pool)
            E = select_count(E, 0.5)
            assert c.num_edges == x.shape[0] == E

    def test_single_edge_complex_survives(self):
        from scnp.complex import build_complex

        model = small_model("septopk", layers=3, ratio=0.3)
        out = jk_forward(model, build_complex(2, [(0, 1)]), np.ones((1, 2)))
        assert out.shape == (1, 3) and np.all(np.isfinite(out.value))

    @pytest.mark.parametrize("strategy", STRATEGIES)
    @pytest.mark.parametrize("aggregation", ["mean", "max"])
    def test_permutation_invariance(self, strategy, aggregation):
        rng = np.random.default_rng(3)
        for trial in range(20):
            c = fix_b() if trial % 2 == 0 else random_complex(rng, max_edges=12, max_vertices=7, triangle_prob=0.9)
            model = small_model(strategy, seed=trial, nonlinearity="relu", aggregation=aggregation)
            X = rng.normal(size=(c.num_edges, 2))
            perm = rng.permutation(c.num_edges)
            a = jk_forward(model, c, X).value
            b = jk_forward(model, permute_edges(c, perm), X[perm]).value
            np.testing.assert_allclose(b, a, rtol=0, atol=1e-9)

    def test_random_strategy_is_seeded(self):
        model = small_model("random")
        c = random_complex(np.random.default_rng(4), max_edges=40)
        X = np.ones((c.num_edges, 2))
        np.testing.assert_array_equal(jk_forward(model, c, X, rng=5).value, jk_forward(model, c, X, rng=5).value)


def layer_loss(complex, X, params, pool, probe_rng, tape):
    _, Y, _ = scnp_layer_forward(complex, tape.constant(X), params, pool)
    probe = probe_rng.normal(size=Y.shape)
    return ad.sum_all(ad.hadamard(Y, tape.constant(probe)))


@pytest.mark.parametrize("strategy", STRATEGIES)
def test_layer_gradients_match_finite_differences(strategy):
    for seed in range(20):
        rng = np.random.default_rng(seed)
        params = ScnpLayerParams.init(rng, 2, 2, 1, 1, Nonlinearity.TANH)
        pool = PoolingConfig.init(strategy, 2, rng, ratio=0.7) if strategy != "none" else None
        X = rng.normal(size=(5, 2))
        arrays = list(params.named("l").values())
        if pool is not None:
            arrays += list(pool.named("p").values())
        probe_seed = 1000 + seed
        f = lambda: layer_loss(fix_b(), X, params, pool, np.random.default_rng(probe_seed), Tape(record=False)).value[0, 0]  # noqa: E731
        tape = Tape()
        grads = tape.backward(layer_loss(fix_b(), X, params, pool, np.random.default_rng(probe_seed), tape))
        for a in arrays:
            assert rel_error(tape.grad_of(grads, a), central_difference(f, a)) < 1e-4


@pytest.mark.parametrize("strategy", STRATEGIES)
def test_model_gradients_match_finite_differences(strategy):
    from scnp.training import cross_entropy

    for seed in range(5):
        rng = np.random.default_rng(seed)
        c = random_complex(rng, max_edges=14, max_vertices=7, triangle_prob=0.9)
        model = small_model(strategy, seed=seed)
        X = rng.normal(size=(c.num_edges, 2))
        params = model.named_parameters()
        f = lambda: cross_entropy(jk_forward(model, c, X, Tape(record=False)), 1).value[0, 0]  # noqa: E731
        tape = Tape()
        grads = tape.backward(cross_entropy(jk_forward(model, c, X, tape), 1))
        for name, a in params.items():
            analytic, numeric = tape.grad_of(grads, a), central_difference(f, a)
            # tiny gradients sit at the finite-difference noise floor
            np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-8, err_msg=name)


class TestModelState:
    def test_parameter_names(self):
        names = set(small_model("septopk").named_parameters())
        assert {"layer0.D1", "layer0.U1", "layer0.H", "layer0.pool.p_d", "layer1.pool.p_h", "mlp0.W", "mlp1.b"} <= names
        att = set(small_model("selfatt").named_parameters())
        assert {"layer0.pool.score.D1", "layer0.pool.score.H"} <= att

    def test_counts_sum_to_total(self):
        model = small_model("selfatt")
        counts = model.layer_parameter_counts()
        assert sum(counts.values()) == sum(v.size for v in model.named_parameters().values())

    def test_copy_is_independent(self):
        model = small_model("topk")
        clone = model.copy()
        clone.named_parameters()["layer0.H"][:] = 0
        assert np.any(model.named_parameters()["layer0.H"])

    def test_config_dict_round_trip(self):
        cfg = JkModelConfig(3, 2, strategy="max", mlp_hidden=(8, 4))
        assert JkModelConfig.from_dict(cfg.to_dict()) == cfg

    def test_default_head(self):
        cfg = JkModelConfig(1, 2, hidden=16)
        assert cfg.mlp_hidden == (32,)
        assert cfg.strategy is Strategy.SEPTOPK and cfg.ratio == 0.7

    @pytest.mark.parametrize("strategy", ["random", "max", "topk", "selfatt", "septopk"])
    def test_checkpoint_round_trip(self, tmp_path, strategy):
        model = small_model(strategy, seed=7)
        path = tmp_path / "m.ckpt"
        save_model(model, path)
        assert is_checkpoint(path)
        loaded = load_model(path)
        assert loaded.config == model.config
        for name, value in model.named_parameters().items():
            assert loaded.named_parameters()[name].tobytes() == value.tobytes()
        c = random_complex(np.random.default_rng(0), max_edges=30)
        X = np.ones((c.num_edges, 2))
        np.testing.assert_array_equal(jk_forward(loaded, c, X).value, jk_forward(model, c, X).value)

    def test_bad_checkpoint(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_text("not a checkpoint\n")
        assert not is_checkpoint(path)
        with pytest.raises(UnreadableFile):
            load_model(path)
        with pytest.raises(UnreadableFile):
            load_model(tmp_path / "missing.ckpt")
