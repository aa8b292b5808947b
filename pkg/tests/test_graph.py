import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from routefast.graph import (
    Graph,
    Initializer,
    Node,
    NoAttentionMaskInput,
    SchemaError,
    TensorInfo,
    UnsupportedHeadDim,
    UnsupportedOp,
    ValidationError,
    build_encoder,
    dce,
    find_sdpa_patterns,
    interpret,
    load_graph,
    parse_graph,
    random_inputs,
    rewrite,
    square_tensors,
    verify_rewrite,
)
from routefast.graph.interpreter import ShapeMismatch
from routefast.graph.ir import infer_shapes
from routefast.graph.rewrite import window_for

IDENTITY = {
    "inputs": [{"name": "x", "shape": [2, 3], "dtype": "f32"}],
    "outputs": ["y"],
    "nodes": [{"name": "id", "op": "Identity", "inputs": ["x"], "outputs": ["y"], "attrs": {}}],
    "initializers": [],
}


def test_parse_identity_and_interpret():
    g = parse_graph(json.dumps(IDENTITY))
    assert len(g.nodes) == 1
    x = np.arange(6, dtype=np.float32).reshape(2, 3)
    np.testing.assert_array_equal(interpret(g, {"x": x})["y"], x)


def test_constant_only_graph():
    g = Graph([], ["c", "k"], [Node("k", "Constant", [], ["k"], {"shape": [2], "data": [1.5, 2.5]})],
              [Initializer("c", np.array([[1.0, 2.0]], np.float32))]).validate()
    out = interpret(g, {})
    assert out["c"].tolist() == [[1.0, 2.0]] and out["k"].tolist() == [1.5, 2.5]


def test_schema_and_validation_errors():
    with pytest.raises(SchemaError):
        parse_graph("{not json")
    with pytest.raises(SchemaError):
        parse_graph(json.dumps({"inputs": [], "nodes": []}))
    bad = json.loads(json.dumps(IDENTITY))
    bad["nodes"][0]["inputs"] = ["ghost"]
    with pytest.raises(ValidationError, match="ghost"):
        parse_graph(json.dumps(bad))
    dup = json.loads(json.dumps(IDENTITY))
    dup["nodes"].append({"name": "id2", "op": "Identity", "inputs": ["x"], "outputs": ["y"]})
    with pytest.raises(ValidationError, match="produced by both"):
        parse_graph(json.dumps(dup))
    cyc = {"inputs": [], "outputs": ["a"], "nodes": [
        {"name": "n1", "op": "Identity", "inputs": ["b"], "outputs": ["a"]},
        {"name": "n2", "op": "Identity", "inputs": ["a"], "outputs": ["b"]}]}
    with pytest.raises(ValidationError, match="cycle"):
        parse_graph(json.dumps(cyc))
    init = {"inputs": [], "outputs": ["w"], "nodes": [],
            "initializers": [{"name": "w", "shape": [2, 2], "dtype": "f32", "data": [1, 2, 3]}]}
    with pytest.raises(SchemaError):
        parse_graph(json.dumps(init))


def test_interpreter_errors_name_the_node():
    g = Graph([TensorInfo("x", (2, 3))], ["y"],
              [Node("bad_mm", "MatMul", ["x", "x"], ["y"])]).validate()
    with pytest.raises(ShapeMismatch) as e:
        interpret(g, {"x": np.zeros((2, 3), np.float32)})
    assert e.value.node == "bad_mm"
    g2 = Graph([TensorInfo("x", (1,))], ["y"], [Node("n", "Identity", ["x"], ["y"])])
    g2.nodes[0].op = "Gelu"
    with pytest.raises(UnsupportedOp):
        interpret(g2, {"x": np.zeros(1, np.float32)})


def test_cast_f16_round_trips():
    g = Graph([TensorInfo("x", (3,))], ["y"], [Node("c", "Cast", ["x"], ["y"], {"to": "f16"})]).validate()
    y = interpret(g, {"x": np.array([0.1, -65504.0, 1e-8], np.float32)})["y"]
    assert y.dtype == np.float16 and y[1] == -65504.0 and y[0] == np.float16(0.1)


def test_fixture_manifest(fixtures_dir):
    manifest = json.loads((fixtures_dir / "manifest.json").read_text())
    for name, entry in manifest.items():
        g = load_graph(fixtures_dir / f"{name}.json")
        assert len(g.nodes) == entry["nodes"] and len(g.initializers) == entry["initializers"]
        assert len(square_tensors(g)) == entry["square_tensors"]
        if "patterns" in entry:
            found = find_sdpa_patterns(g)
            assert [(p.kind, p.q, p.k, p.v, p.mask) for p in found] == [
                (p["kind"], p["q"], p["k"], p["v"], p["mask"]) for p in entry["patterns"]]


def test_patterns_single_and_four_layer():
    one = find_sdpa_patterns(build_encoder(1, 64, 32))
    assert len(one) == 1
    p = one[0]
    assert (p.q, p.k, p.v) == ("/layers.0/attn/q", "/layers.0/attn/k", "/layers.0/attn/v")
    assert p.scale == pytest.approx(1 / np.sqrt(32), rel=1e-6) and p.k_transposed
    kinds = [m.kind for m in find_sdpa_patterns(build_encoder(4, 64, 32))]
    assert kinds == ["local", "local", "global", "local"]


def test_no_softmax_no_match_and_byte_identical():
    g = parse_graph(json.dumps(IDENTITY))
    assert find_sdpa_patterns(g) == []
    assert rewrite(g, 64, 128) is g
    assert rewrite(g, 64, 128).dumps() == g.dumps()


def test_rewrite_attrs_and_cleanup():
    g = build_encoder(4, 128, 64)
    out = rewrite(g, 64, 128)
    fused = [n for n in out.nodes if n.op == "FusedFlashAttention"]
    assert [(n.attrs["window_left"], n.attrs["window_right"]) for n in fused] == [(63, 64), (63, 64), (-1, -1), (63, 64)]
    assert all(n.attrs["scale"] == pytest.approx(0.125) for n in fused)
    assert out.count("Where") == 0 and out.count("Expand") == 0 and out.count("Softmax") == 0
    assert square_tensors(out) == []
    # one shared padding-bias chain feeding every fused node
    pads = {n.inputs[3] for n in fused}
    assert len(pads) == 1 and out.count("Cast") == 1
    assert out.outputs == g.outputs
    assert rewrite(out, 64, 128) is out


def test_original_has_square_tensor_per_layer():
    for layers in (1, 2, 4):
        g = build_encoder(layers, 64, 32)
        sq = square_tensors(g)
        for i in range(layers):
            assert any(t.startswith(f"/layers.{i}/") for t in sq)


def test_square_tensors_when_seq_equals_head_dim():
    g = build_encoder(2, 64, 64)
    assert len(square_tensors(g)) > 0 and square_tensors(rewrite(g, 64, 128)) == []


def test_errors():
    g = build_encoder(1, 64, 48)
    with pytest.raises(UnsupportedHeadDim):
        rewrite(g, 48, 128)
    with pytest.raises(ValueError):
        rewrite(build_encoder(1, 64, 32), 32, 127)
    g = build_encoder(1, 64, 32)
    with pytest.raises(NoAttentionMaskInput):
        rewrite(g, 32, 128, mask_input="not_here")


def test_window_rule():
    assert window_for("local", 128) == (63, 64)
    assert window_for("local", 2) == (0, 1)
    assert window_for("global", 128) == (-1, -1)


def test_layer_kind_attribute_override():
    g = build_encoder(1, 64, 32)
    g.node("/encoder/mask/Where_1").attrs["layer_kind"] = "global"
    (m,) = find_sdpa_patterns(g)
    assert m.kind == "global"
    out = rewrite(g, 32, 128)
    f = next(n for n in out.nodes if n.op == "FusedFlashAttention")
    assert (f.attrs["window_left"], f.attrs["window_right"]) == (-1, -1)


def test_k_without_transpose_variant():
    g = build_encoder(2, 64, 32, transpose_k=False)
    ms = find_sdpa_patterns(g)
    assert len(ms) == 2 and not any(m.k_transposed for m in ms)
    out = rewrite(g, 32, 128)
    assert verify_rewrite(g, out, trials=2).ok


def test_dce():
    g = build_encoder(1, 32, 32)
    assert dce(g).dumps() == g.dumps()
    g.nodes.append(Node("dead1", "Identity", ["x"], ["d1"]))
    g.nodes.append(Node("dead2", "Identity", ["d1"], ["d2"]))
    g.initializers.append(Initializer("unused", np.zeros(2, np.float32)))
    out = dce(g)
    names = {n.name for n in out.nodes}
    assert "dead1" not in names and "dead2" not in names
    assert "unused" not in {i.name for i in out.initializers}
    assert names == {n.name for n in build_encoder(1, 32, 32).nodes}


def test_infer_shapes_agree_with_interpreter():
    g = build_encoder(2, 40, 32, batch=2)
    info = infer_shapes(g)
    env = interpret(g, random_inputs(g, np.random.default_rng(0)), return_all=True)
    for name, t in info.items():
        assert tuple(env[name].shape) == t.shape, name
    out = rewrite(g, 32, 128)
    env = interpret(out, random_inputs(out, np.random.default_rng(0)), return_all=True)
    for name, t in infer_shapes(out).items():
        assert tuple(env[name].shape) == t.shape


def test_verify_reports_corrupted_node():
    g = build_encoder(2, 64, 32)
    out = rewrite(g, 32, 128)
    out.node("/layers.1/attn/FusedFlashAttention").attrs["window_left"] = 3
    rep = verify_rewrite(g, out, trials=1)
    assert not rep.ok and rep.first_failing == "/layers.1/attn/FusedFlashAttention"
    assert "/layers.1/attn/FusedFlashAttention" in rep.render()


def test_serialization_round_trip():
    g = build_encoder(1, 16, 32)
    again = parse_graph(g.dumps())
    assert again.dumps() == g.dumps()
    for a, b in zip(g.initializers, again.initializers):
        assert a.data.dtype == b.data.dtype and np.array_equal(a.data, b.data)


@given(st.sampled_from([1, 2, 4]), st.sampled_from([64, 128, 257]), st.sampled_from([32, 64]), st.integers(0, 1000))
@settings(max_examples=6)
def test_rewrite_preserves_semantics(layers, S, d, seed):
    g = build_encoder(layers, S, d, batch=2, seed=seed)
    out = rewrite(g, d, 128)
    rep = verify_rewrite(g, out, trials=1, seed=seed)
    assert rep.ok, rep.render()
