import numpy as np
import pytest

from helpers import numeric_grad
from hyperkg.errors import CheckpointError, IdOutOfRange, NotScalar, ShapeMismatch
from hyperkg.tensor import (
    AdamWState,
    SegmentPlan,
    Tensor,
    adamw_step,
    add,
    backward,
    bias_add,
    clamp,
    concat,
    gather_rows,
    layernorm,
    load_checkpoint,
    log,
    matmul,
    mean_all,
    mul,
    no_grad,
    precision,
    relu,
    reshape,
    save_checkpoint,
    segment_sum,
    sigmoid,
    softmax,
    sub,
    sum_all,
    sum_last,
    take_along_last,
    track_allocations,
)
from hyperkg.tensor.kernels import (
    HyperedgeStructure,
    RelationEdgeStructure,
    hyperedge_aggregate,
    relation_aggregate,
)


def leaf(rng, *shape, positive=False):
    x = rng.standard_normal(shape)
    if positive:
        x = np.abs(x) + 0.5
    return Tensor(x, requires_grad=True)


def check_grads(build, leaves, weights_seed=0, tol=1e-6):
    """Compare tape gradients of ``sum(w * build())`` with central differences."""
    out = build()
    w = np.random.default_rng(weights_seed).standard_normal(out.shape)

    def loss():
        return sum_all(mul(build(), Tensor(w)))

    for x in leaves:
        x.grad = None
    backward(loss())
    for x in leaves:
        num = numeric_grad(lambda: loss().item(), x.data)
        np.testing.assert_allclose(x.grad, num, rtol=tol, atol=tol)


@pytest.fixture(autouse=True)
def float64():
    with precision(np.float64):
        yield


class TestElementwiseGrads:
    def test_arithmetic(self):
        rng = np.random.default_rng(0)
        a, b = leaf(rng, 3, 4), leaf(rng, 3, 4)
        check_grads(lambda: mul(sub(add(a, b), mul(a, 2.0)), b), [a, b])

    def test_scalar_broadcast(self):
        rng = np.random.default_rng(1)
        a, s = leaf(rng, 2, 5), leaf(rng)
        check_grads(lambda: add(mul(a, s), s), [a, s])

    def test_unary(self):
        rng = np.random.default_rng(2)
        x = leaf(rng, 4, 3)
        p = leaf(rng, 4, 3, positive=True)
        check_grads(lambda: add(relu(x), sigmoid(x)), [x])
        check_grads(lambda: log(p), [p])

    def test_clamp_blocks_gradient_outside(self):
        x = Tensor(np.array([-2.0, 0.5, 2.0]), requires_grad=True)
        backward(sum_all(clamp(x, 0.0, 1.0)))
        np.testing.assert_array_equal(x.grad, [0.0, 1.0, 0.0])

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            add(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2))))


class TestStructuralGrads:
    def test_matmul_bias(self):
        rng = np.random.default_rng(3)
        x, w, b = leaf(rng, 2, 3, 4), leaf(rng, 4, 5), leaf(rng, 5)
        check_grads(lambda: bias_add(matmul(x, w), b), [x, w, b])

    def test_reductions_and_reshape(self):
        rng = np.random.default_rng(4)
        x = leaf(rng, 2, 3, 4)
        check_grads(lambda: sum_last(reshape(x, (6, 4))), [x])
        check_grads(lambda: mean_all(x), [x])

    def test_concat(self):
        rng = np.random.default_rng(5)
        a, b = leaf(rng, 2, 3), leaf(rng, 2, 4)
        check_grads(lambda: concat([a, b]), [a, b])

    def test_take_along_last_repeats(self):
        rng = np.random.default_rng(6)
        x = leaf(rng, 2, 5)
        idx = np.array([[0, 0, 4], [1, 3, 3]])
        check_grads(lambda: take_along_last(x, idx), [x])

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(7)
        x = leaf(rng, 3, 6)
        np.testing.assert_allclose(softmax(x, 0.5).data.sum(-1), 1.0)
        check_grads(lambda: softmax(x, 0.7), [x])

    def test_layernorm(self):
        rng = np.random.default_rng(8)
        x, g, b = leaf(rng, 2, 3, 6), leaf(rng, 6), leaf(rng, 6)
        out = layernorm(x, Tensor(np.ones(6)), Tensor(np.zeros(6))).data
        np.testing.assert_allclose(out.mean(-1), 0.0, atol=1e-12)
        np.testing.assert_allclose(out.var(-1), 1.0, rtol=1e-4)
        check_grads(lambda: layernorm(x, g, b), [x, g, b], tol=1e-5)


class TestSegments:
    def test_segment_sum_matches_loop(self):
        rng = np.random.default_rng(9)
        vals = rng.standard_normal((2, 7, 3))
        ids = rng.integers(0, 4, size=7)
        out = segment_sum(Tensor(vals), ids, 4).data
        ref = np.zeros((2, 4, 3))
        for i, s in enumerate(ids):
            ref[:, s] += vals[:, i]
        np.testing.assert_allclose(out, ref)

    def test_empty_segments_are_zero(self):
        out = segment_sum(Tensor(np.ones((2, 3))), np.array([0, 0]), 3).data
        np.testing.assert_array_equal(out, [[2, 2, 2], [0, 0, 0], [0, 0, 0]])

    def test_no_ids(self):
        out = segment_sum(Tensor(np.zeros((0, 3))), np.zeros(0, dtype=int), 2).data
        np.testing.assert_array_equal(out, np.zeros((2, 3)))

    def test_no_ids_batched(self):
        out = segment_sum(Tensor(np.zeros((2, 0, 3))), np.zeros(0, dtype=int), 4).data
        np.testing.assert_array_equal(out, np.zeros((2, 4, 3)))

    def test_out_of_range(self):
        with pytest.raises(IdOutOfRange):
            SegmentPlan([0, 5], 3)

    def test_grads(self):
        rng = np.random.default_rng(10)
        x = leaf(rng, 2, 5, 3)
        ids = np.array([4, 0, 0, 2])
        check_grads(lambda: gather_rows(x, ids), [x])
        v = leaf(rng, 6, 2)
        check_grads(lambda: segment_sum(v, np.array([1, 1, 0, 3, 3, 3]), 4), [v])


class TestTape:
    def test_non_scalar_loss(self):
        with pytest.raises(NotScalar):
            backward(Tensor(np.ones(3), requires_grad=True))

    def test_gradients_accumulate(self):
        x = Tensor(np.array(2.0), requires_grad=True)
        backward(mul(x, x))
        backward(mul(x, x))
        assert x.grad == pytest.approx(8.0)

    def test_no_grad_records_nothing(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with no_grad():
            y = mul(x, 3.0)
        assert not y.requires_grad

    def test_diamond_graph(self):
        x = Tensor(np.array([1.5, -0.5]), requires_grad=True)
        y = mul(x, x)
        backward(sum_all(add(y, mul(y, x))))
        np.testing.assert_allclose(x.grad, 2 * x.data + 3 * x.data**2)


# -- fused kernels against materialized references ---------------------------------------


def naive_hyperedge(h, m, alpha, pos, edges, rels, mask=None):
    """Materializes every message explicitly."""
    B, V, d = h.shape
    out = np.zeros_like(h)
    for b in range(B):
        for ei, (ents, r) in enumerate(zip(edges, rels)):
            if mask is not None and not mask[b, ei]:
                continue
            for i in range(len(ents)):
                msg = m[b, r].copy()
                for j in range(len(ents)):
                    if j != i:
                        msg = msg * (alpha * h[b, ents[j]] + (1 - alpha) * pos[j])
                out[b, ents[i]] += msg
    return out


def random_structure(rng, V=7, R=3, n_edges=9, kmax=4):
    edges = [list(rng.integers(V, size=int(rng.integers(1, kmax + 1)))) for _ in range(n_edges)]
    rels = rng.integers(R, size=n_edges)
    mat = np.full((n_edges, kmax), -1)
    for i, e in enumerate(edges):
        mat[i, : len(e)] = e
    return edges, rels, HyperedgeStructure(mat, rels, V, R)


class TestHyperedgeKernel:
    def test_forward_matches_naive(self):
        rng = np.random.default_rng(11)
        edges, rels, st = random_structure(rng)
        h, m = rng.standard_normal((2, 7, 5)), rng.standard_normal((2, 3, 5))
        pos = rng.standard_normal((4, 5))
        mask = rng.random((2, len(edges))) > 0.3
        out = hyperedge_aggregate(Tensor(h), Tensor(m), Tensor(0.3), pos, st, mask).data
        np.testing.assert_allclose(out, naive_hyperedge(h, m, 0.3, pos, edges, rels, mask), atol=1e-12)

    def test_arity_one_message_is_relation_vector(self):
        st = HyperedgeStructure(np.array([[2]]), np.array([1]), 3, 2)
        m = np.arange(8, dtype=float).reshape(1, 2, 4)
        out = hyperedge_aggregate(Tensor(np.ones((1, 3, 4))), Tensor(m), Tensor(0.5), np.ones((1, 4)), st).data
        np.testing.assert_array_equal(out[0, 2], m[0, 1])
        np.testing.assert_array_equal(out[0, :2], 0.0)

    def test_gradients(self):
        rng = np.random.default_rng(12)
        edges, rels, st = random_structure(rng, n_edges=6)
        h, m, a = leaf(rng, 2, 7, 3), leaf(rng, 2, 3, 3), Tensor(np.array(0.4), requires_grad=True)
        pos = rng.standard_normal((4, 3))
        mask = rng.random((2, len(edges))) > 0.3
        check_grads(lambda: hyperedge_aggregate(h, m, a, pos, st, mask), [h, m, a])

    def test_repeated_entity_gradients(self):
        rng = np.random.default_rng(13)
        st = HyperedgeStructure(np.array([[0, 1, 0], [1, 1, -1]]), np.array([0, 1]), 2, 2)
        h, m, a = leaf(rng, 1, 2, 3), leaf(rng, 1, 2, 3), Tensor(np.array(0.6), requires_grad=True)
        pos = rng.standard_normal((3, 3))
        check_grads(lambda: hyperedge_aggregate(h, m, a, pos, st), [h, m, a])

    def test_observer_sees_mask(self):
        from hyperkg.tensor import kernels

        seen = []
        kernels.observers.append(lambda name, info: seen.append(info["edge_mask"]))
        try:
            _, _, st = random_structure(np.random.default_rng(0))
            mask = np.ones((1, 9), dtype=bool)
            hyperedge_aggregate(Tensor(np.ones((1, 7, 2))), Tensor(np.ones((1, 3, 2))), Tensor(0.5),
                                np.ones((4, 2)), st, mask)
        finally:
            kernels.observers.clear()
        assert seen and seen[0] is mask


class TestRelationKernel:
    def test_forward_and_grads(self):
        rng = np.random.default_rng(14)
        src, dst, pair = rng.integers(4, size=8), rng.integers(4, size=8), rng.integers(3, size=8)
        st = RelationEdgeStructure(src, dst, pair, 4, 3)
        h, x, a = leaf(rng, 2, 4, 5), leaf(rng, 3, 5), Tensor(np.array(0.5), requires_grad=True)
        p = rng.standard_normal(5)
        out = relation_aggregate(h, x, a, p, st).data
        ref = np.zeros_like(out)
        for s, t, q in zip(src, dst, pair):
            ref[:, t] += (0.5 * h.data[:, s] + 0.5 * p) * x.data[q]
        np.testing.assert_allclose(out, ref, atol=1e-12)
        check_grads(lambda: relation_aggregate(h, x, a, p, st), [h, x, a])


class TestMemoryContract:
    def test_largest_buffer_scales_with_group_not_positions(self):
        rng = np.random.default_rng(15)
        V, E, k, d, B = 50, 400, 5, 4, 1
        mat = rng.integers(V, size=(E, k))
        st = HyperedgeStructure(mat, np.zeros(E, dtype=int), V, 1)
        h, m = leaf(rng, B, V, d), leaf(rng, B, 1, d)
        a = Tensor(np.array(0.5), requires_grad=True)
        with track_allocations() as tr:
            out = hyperedge_aggregate(h, m, a, rng.standard_normal((k, d)), st)
            backward(sum_all(out))
        assert tr.peak_elements <= B * E * d
        assert tr.peak_elements < k * E * d


class TestAdamW:
    def reference(self, p, grads, lr, b1, b2, eps, wd):
        m = np.zeros_like(p)
        v = np.zeros_like(p)
        for t, g in enumerate(grads, 1):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            p = p * (1 - lr * wd)
            p = p - lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
        return p

    def test_matches_reference(self):
        rng = np.random.default_rng(16)
        p0 = rng.standard_normal((3, 2))
        grads = [rng.standard_normal((3, 2)) for _ in range(5)]
        state = AdamWState(lr=0.01, weight_decay=0.1)
        p = {"w": p0.copy()}
        for g in grads:
            adamw_step(p, {"w": g}, state)
        np.testing.assert_allclose(p["w"], self.reference(p0, grads, 0.01, 0.9, 0.999, 1e-8, 0.1), rtol=1e-12)

    def test_first_step_moves_by_lr(self):
        p = {"w": np.array([1.0, -1.0])}
        adamw_step(p, {"w": np.array([3.0, -0.2])}, AdamWState(lr=0.1, weight_decay=0.0))
        np.testing.assert_allclose(p["w"], [0.9, -0.9], rtol=1e-6)

    def test_zero_lr_is_identity(self):
        p = {"w": np.array([1.0, 2.0])}
        adamw_step(p, {"w": np.array([5.0, 5.0])}, AdamWState(lr=0.0))
        np.testing.assert_array_equal(p["w"], [1.0, 2.0])

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            adamw_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, AdamWState())


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        tensors = {"a": np.arange(6, dtype=np.float32).reshape(2, 3), "b.c": np.array(0.5)}
        save_checkpoint(tmp_path / "x.ckpt", tensors, {"d": 8}, {"note": "hi"})
        back, cfg, meta = load_checkpoint(tmp_path / "x.ckpt")
        assert cfg == {"d": 8} and meta == {"note": "hi"}
        for k, v in tensors.items():
            assert back[k].dtype == v.dtype
            np.testing.assert_array_equal(back[k], v)

    def test_header_layout(self, tmp_path):
        save_checkpoint(tmp_path / "x.ckpt", {"w": np.ones(2, dtype=np.float64)}, {})
        raw = (tmp_path / "x.ckpt").read_bytes()
        assert raw[:8] == b"HYPERKG\0"
        assert int.from_bytes(raw[8:12], "little") == 1
        assert raw[-16:] == np.ones(2).tobytes()

    def test_missing_and_garbage(self, tmp_path):
        with pytest.raises(CheckpointError, match="not found"):
            load_checkpoint(tmp_path / "nope.ckpt")
        (tmp_path / "bad.ckpt").write_bytes(b"garbage")
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "bad.ckpt")
