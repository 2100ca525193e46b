from __future__ import annotations

import math
import zlib

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nodenorm.autodiff import Tensor, gradient_check, softmax_cross_entropy
from nodenorm.errors import ConfigError, ShapeError
from nodenorm.graph import SparseAdjacency, renormalize
from nodenorm.models import (
    ModelSpec, Norm, build_model, clone_model, forward, gc_layer, layer_norm, node_norm, plan_layers,
)


@pytest.fixture
def ring():
    edges = [(i, (i + 1) % 8) for i in range(8)] + [(0, 4), (2, 6)]
    return renormalize(SparseAdjacency.from_edges(8, edges))


# norms -------------------------------------------------------------------------

def test_node_norm_examples():
    s = math.sqrt(8 / 3)
    npt.assert_allclose(node_norm(np.array([[2.0, 4.0, 6.0]]), 1).data, [[2 / s, 4 / s, 6 / s]], rtol=1e-14)
    npt.assert_allclose(node_norm(np.array([[2.0, 4.0, 6.0]]), 1).data, [[1.2247, 2.4495, 3.6742]], atol=1e-4)
    npt.assert_allclose(node_norm(np.array([[-4.0, 4.0]]), 2).data, [[-2.0, 2.0]], rtol=1e-14)


def test_node_norm_unit_std_row_unchanged_and_constant_row_passthrough():
    row = np.array([[-1.0, 1.0]])
    npt.assert_array_equal(node_norm(row, 1).data, row)
    npt.assert_array_equal(node_norm(np.array([[5.0, 5.0, 5.0]]), 3).data, [[5.0, 5.0, 5.0]])


def test_node_norm_needs_two_columns():
    with pytest.raises(ConfigError):
        node_norm(np.ones((3, 1)), 1)


def test_layer_norm_examples():
    h = np.array([[2.0, 4.0, 6.0]])
    s = math.sqrt(8 / 3)
    full = layer_norm(h, np.ones((1, 3)), np.zeros((1, 3)), "full").data
    npt.assert_allclose(full, [[-2 / s, 0.0, 2 / s]], atol=1e-15)
    npt.assert_allclose(full, [[-1.2247, 0.0, 1.2247]], atol=1e-4)
    npt.assert_array_equal(layer_norm(h, mode="ms").data, [[-2.0, 0.0, 2.0]])
    beta = np.array([[0.1, 0.2, 0.3]])
    npt.assert_array_equal(layer_norm(np.vstack([h, h]), np.zeros((1, 3)), beta, "full").data, np.vstack([beta, beta]))


def test_layer_norm_constant_row_maps_to_zero():
    npt.assert_array_equal(layer_norm(np.full((1, 4), 7.0), mode="star").data, np.zeros((1, 4)))


def test_layer_norm_shape_error():
    with pytest.raises(ShapeError):
        layer_norm(np.ones((2, 3)), np.ones((1, 4)), np.zeros((1, 4)), "full")


def test_norm_parse_roundtrip():
    for text in ["none", "nodenorm1", "nodenorm3", "layernorm", "layernorm-star", "layernorm-ms"]:
        assert str(Norm.parse(text)) == text
    with pytest.raises(ConfigError):
        Norm.parse("batchnorm")
    with pytest.raises(ConfigError):
        Norm("nodenorm", 0)


rows = arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(2, 12)),
              elements=st.floats(-1e3, 1e3, allow_nan=False))


def _live(H, eps=1e-6):
    return H.std(axis=1) >= eps


@settings(max_examples=200, deadline=None)
@given(rows, st.integers(1, 4))
def test_node_norm_std_law(H, p):
    out = node_norm(H, p).data
    sigma = H.std(axis=1)
    live = _live(H)
    npt.assert_allclose(out.std(axis=1)[live], sigma[live] ** (1 - 1 / p), rtol=1e-9, atol=1e-12)
    npt.assert_array_equal(out[~live], H[~live])


@settings(max_examples=200, deadline=None)
@given(rows, st.floats(1e-3, 1e3))
def test_node_norm_scale_equivariance_and_idempotence(H, c):
    live = _live(H) & _live(c * H)
    once = node_norm(H, 1).data
    npt.assert_allclose(node_norm(c * H, 1).data[live], once[live], rtol=1e-9, atol=1e-9)
    npt.assert_allclose(node_norm(once, 1).data[live], once[live], rtol=1e-9, atol=1e-9)


@settings(max_examples=200, deadline=None)
@given(rows)
def test_layer_norm_star_moments_and_full_identity(H):
    star = layer_norm(H, mode="star").data
    d = H.shape[1]
    full = layer_norm(H, np.ones((1, d)), np.zeros((1, d)), "full").data
    npt.assert_array_equal(full, star)
    live = _live(H)
    npt.assert_allclose(star.mean(axis=1), 0.0, atol=1e-9)
    npt.assert_allclose(star.std(axis=1)[live], 1.0, atol=1e-9)


def _smooth_rows(rng, n=5, d=4):
    return Tensor(rng.normal(size=(n, d)) * 2.0 + rng.normal(size=(n, 1)), requires_grad=True)


@pytest.mark.parametrize("p", [1, 2, 3])
def test_node_norm_gradient(p):
    rng = np.random.default_rng(p)
    H = _smooth_rows(rng)
    C = rng.normal(size=H.shape)
    assert gradient_check(lambda: (node_norm(H, p) * C).sum(), [H]) < 1e-7


def test_node_norm_gradient_through_degenerate_row_is_identity():
    H = Tensor(np.array([[1.0, 2.0, 4.0], [3.0, 3.0, 3.0]]), requires_grad=True)
    C = np.array([[0.3, -1.0, 2.0], [1.0, 2.0, 3.0]])
    from nodenorm.autodiff import Tape

    with Tape() as tape:
        (g,) = tape.gradient((node_norm(H, 1) * C).sum(), [H])
    npt.assert_array_equal(g[1], C[1])


@pytest.mark.parametrize("mode", ["full", "star", "ms"])
def test_layer_norm_gradient(mode):
    rng = np.random.default_rng(11)
    H = _smooth_rows(rng)
    alpha = Tensor(1.0 + 0.3 * rng.normal(size=(1, 4)), requires_grad=True)
    beta = Tensor(rng.normal(size=(1, 4)), requires_grad=True)
    C = rng.normal(size=H.shape)
    params = [H, alpha, beta] if mode == "full" else [H]
    err = gradient_check(lambda: (layer_norm(H, alpha, beta, mode) * C).sum(), params)
    assert err < 1e-7


# layers ---------------------------------------------------------------------

def test_gc_layer_example():
    adj = renormalize(SparseAdjacency.from_edges(2, [(0, 1)]))
    out = gc_layer(np.array([[2.0, 0.0], [0.0, 2.0]]), adj, np.eye(2))
    npt.assert_allclose(out.data, np.ones((2, 2)))
    npt.assert_array_equal(gc_layer(np.ones((2, 2)), adj, np.zeros((2, 3))).data, np.zeros((2, 3)))


def test_gc_layer_nodenorm_rows_have_unit_std(ring):
    rng = np.random.default_rng(0)
    out = gc_layer(rng.normal(size=(8, 5)), ring, rng.normal(size=(5, 6)), Norm("nodenorm", 1)).data
    live = out.std(axis=1) >= 1e-6
    assert live.any()
    npt.assert_allclose(out.std(axis=1)[live], 1.0, atol=1e-12)


def test_gc_layer_inside_order(ring):
    rng = np.random.default_rng(1)
    H, W = rng.normal(size=(8, 5)), rng.normal(size=(5, 3))
    out = gc_layer(H, ring, W, Norm("layernorm_ms"), "inside").data
    AH = ring.to_dense() @ H
    expected = np.maximum((AH - AH.mean(axis=1, keepdims=True)) @ W, 0.0)
    npt.assert_allclose(out, expected, atol=1e-12)


def test_gc_layer_association_is_equivalent(ring):
    rng = np.random.default_rng(2)
    H = rng.normal(size=(8, 10))
    wide, narrow = rng.normal(size=(10, 3)), rng.normal(size=(10, 30))
    A = ring.to_dense()
    npt.assert_allclose(gc_layer(H, ring, wide).data, np.maximum(A @ H @ wide, 0), atol=1e-12)
    npt.assert_allclose(gc_layer(H, ring, narrow).data, np.maximum(A @ H @ narrow, 0), atol=1e-12)


# models ---------------------------------------------------------------------

@pytest.mark.parametrize("variant, depth, n_weights", [("gcn", 2, 2), ("pgcn", 5, 2), ("tgcn", 5, 5), ("gcn", 7, 7)])
def test_weight_counts(variant, depth, n_weights):
    model = build_model(ModelSpec(depth, 9, 3, hidden_dim=4, variant=variant), np.random.default_rng(0))
    assert len(model.weights) == n_weights
    assert model.weights[0].shape == (9, 4) and model.weights[-1].shape == (4, 3)
    assert all(w.shape == (4, 4) for w in model.weights[1:-1])


def test_layer_plans():
    gcn = plan_layers(ModelSpec(4, 5, 3, variant="gcn", norm="nodenorm1", residual=True))
    assert [p.kind for p in gcn] == ["gc"] * 4
    assert [p.residual for p in gcn] == [False, True, True, False]
    assert [p.norm for p in gcn] == [True, True, True, False]
    assert not gcn[-1].relu
    tgcn = plan_layers(ModelSpec(4, 5, 3, variant="tgcn"))
    assert [p.kind for p in tgcn] == ["gc", "tran", "tran", "gc"]
    pgcn = plan_layers(ModelSpec(5, 5, 3, variant="pgcn", norm="nodenorm1"))
    assert [p.kind for p in pgcn] == ["gc", "prop", "prop", "prop", "gc"]


@pytest.mark.parametrize("kwargs", [
    {"depth": 1}, {"variant": "xgcn"}, {"placement": "middle"}, {"dropout_rate": 1.0},
    {"hidden_dim": 1, "norm": "nodenorm1"}, {"placement": "inside"},
])
def test_model_spec_validation(kwargs):
    base = {"depth": 3, "input_dim": 4, "num_classes": 2}
    with pytest.raises(ConfigError):
        ModelSpec(**{**base, **kwargs})


def test_layernorm_params_initialised_to_identity():
    model = build_model(ModelSpec(4, 5, 3, hidden_dim=6, norm="layernorm"), np.random.default_rng(0))
    assert sorted(model.norm_params) == [0, 1, 2]
    for alpha, beta in model.norm_params.values():
        npt.assert_array_equal(alpha.data, np.ones((1, 6)))
        npt.assert_array_equal(beta.data, np.zeros((1, 6)))


def test_forward_contract(ring):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(8, 5))
    model = build_model(ModelSpec(6, 5, 3, hidden_dim=4, residual=True), rng)
    logits, hidden = forward(model, X, ring)
    assert logits.shape == (8, 3) and len(hidden) == 6
    assert hidden[-1] is logits
    again, _ = forward(model, X, ring)
    npt.assert_array_equal(again.data, logits.data)
    with pytest.raises(ShapeError):
        forward(model, X[:, :4], ring)


def test_zero_weights_give_uniform_softmax(ring):
    model = build_model(ModelSpec(2, 5, 3, hidden_dim=4), np.random.default_rng(0))
    for w in model.weights:
        w.data = np.zeros_like(w.data)
    logits, _ = forward(model, np.ones((8, 5)), ring)
    npt.assert_array_equal(logits.data, 0.0)


def test_two_layer_variants_coincide(ring):
    X = np.random.default_rng(5).normal(size=(8, 5))
    outs = []
    for variant in ("gcn", "tgcn", "pgcn"):
        model = build_model(ModelSpec(2, 5, 3, hidden_dim=4, variant=variant), np.random.default_rng(42))
        outs.append(forward(model, X, ring)[0].data)
    npt.assert_array_equal(outs[0], outs[1])
    npt.assert_array_equal(outs[0], outs[2])


def test_pgcn_hidden_stack_is_power_propagation(ring):
    rng = np.random.default_rng(3)
    X = rng.normal(size=(8, 5))
    model = build_model(ModelSpec(5, 5, 3, hidden_dim=4, variant="pgcn"), rng)
    _, hidden = forward(model, X, ring)
    A = ring.to_dense()
    npt.assert_allclose(hidden[3].data, np.linalg.matrix_power(A, 3) @ hidden[0].data, atol=1e-12)


def test_nodenorm_hidden_layers_have_unit_variance_with_residual(ring):
    rng = np.random.default_rng(4)
    model = build_model(ModelSpec(6, 5, 3, hidden_dim=8, norm="nodenorm1", residual=True), rng)
    _, hidden = forward(model, rng.normal(size=(8, 5)), ring)
    for h in hidden[:-1]:
        npt.assert_allclose(h.data.var(axis=1), 1.0, atol=1e-9)


def test_dropout_only_in_training(ring):
    rng = np.random.default_rng(6)
    X = rng.normal(size=(8, 5))
    model = build_model(ModelSpec(3, 5, 3, hidden_dim=4, dropout_rate=0.5), rng)
    a = forward(model, X, ring, training=True, rng=np.random.default_rng(1))[0].data
    b = forward(model, X, ring, training=True, rng=np.random.default_rng(2))[0].data
    e = forward(model, X, ring, training=False)[0].data
    assert not np.array_equal(a, b)
    npt.assert_array_equal(e, forward(model, X, ring)[0].data)


def test_clone_is_independent(ring):
    model = build_model(ModelSpec(3, 5, 3, hidden_dim=4, norm="layernorm"), np.random.default_rng(0))
    copy = clone_model(model)
    copy.weights[0].data[0, 0] += 1.0
    assert model.weights[0].data[0, 0] != copy.weights[0].data[0, 0]


MODEL_GRID = [
    ("gcn", "none", "after", False),
    ("gcn", "none", "after", True),
    ("tgcn", "none", "after", True),
    ("pgcn", "none", "after", False),
    ("gcn", "nodenorm1", "after", True),
    ("gcn", "nodenorm2", "after", False),
    ("gcn", "nodenorm3", "inside", True),
    ("tgcn", "nodenorm1", "inside", False),
    ("gcn", "layernorm", "after", True),
    ("gcn", "layernorm", "inside", False),
    ("pgcn", "layernorm", "after", False),
    ("gcn", "layernorm-star", "after", True),
    ("gcn", "layernorm-ms", "inside", True),
]


@pytest.mark.parametrize("variant, norm, placement, residual", MODEL_GRID)
def test_full_model_gradient(ring, variant, norm, placement, residual):
    rng = np.random.default_rng(zlib.crc32(repr((variant, norm, placement, residual)).encode()))
    spec = ModelSpec(4, 5, 3, hidden_dim=4, variant=variant, norm=norm, placement=placement,
                     residual=residual, dropout_rate=0.2)
    model = build_model(spec, rng)
    for alpha, beta in model.norm_params.values():
        alpha.data = alpha.data + 0.3 * rng.normal(size=alpha.shape)
        beta.data = rng.normal(size=beta.shape)
    X = rng.normal(size=(8, 5))
    y = rng.integers(0, 3, 8)
    mask = np.ones(8, dtype=bool)

    def loss():
        logits, _ = forward(model, X, ring, training=True, rng=np.random.default_rng(0))
        return softmax_cross_entropy(logits, y, mask)

    assert gradient_check(loss, model.parameters()) < 1e-5
