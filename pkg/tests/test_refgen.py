import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from synthts_bench.container import read_canonical, write_canonical
from synthts_bench.distribution import mmd_metric, spectral_entropy_batch
from synthts_bench.pipeline import normalize
from synthts_bench.protocols import ProtocolConfig, SplitSpec, discriminative_score, evaluate_utility
from synthts_bench.nn import TrainingConfig
from synthts_bench.refgen import KINDS, DegradationSpec, RefgenError, ToyTaskSpec, generate, make_toy_task
from synthts_bench.sample_metrics import PairPlan, sample_metric

FAST = ProtocolConfig(("MLP",), seeds=(1,), training=TrainingConfig(epochs=3), arch_params={"MLP": {"width": 16}})


def test_toy_task_counts_and_balance():
    ds = make_toy_task(ToyTaskSpec(n_per_class=100, length=256))
    assert ds.data.shape == (200, 2, 256)
    assert ds.class_counts().tolist() == [100, 100]
    assert ds.provenance["toy_task"]["length"] == 256


def test_toy_task_deterministic_and_unbalanced():
    a = make_toy_task(ToyTaskSpec(n_per_class=(30, 10), length=64, rate=16.0, seed=3))
    b = make_toy_task(ToyTaskSpec(n_per_class=(30, 10), length=64, rate=16.0, seed=3))
    assert a.equals(b) and a.class_counts().tolist() == [30, 10]


@pytest.mark.parametrize("kw", [{"f0": 40.0}, {"f1": 2.0}, {"f1": 33.0}, {"n_per_class": 0}])
def test_toy_task_invariants(kw):
    with pytest.raises(RefgenError):
        ToyTaskSpec(rate=64.0, **kw)


def test_toy_class0_lower_entropy_five_seeds():
    for seed in range(5):
        ds = make_toy_task(ToyTaskSpec(n_per_class=20, seed=seed))
        h = spectral_entropy_batch(ds.channel(0))
        assert h[ds.labels == 0].mean() < h[ds.labels == 1].mean()


def test_identity_bit_exact(toy):
    out = generate(toy, DegradationSpec("identity"))
    assert out.data.tobytes() == toy.data.tobytes()
    assert out.labels.tolist() == toy.labels.tolist()
    assert out.provenance["degradation"] == {"kind": "identity", "seed": 0}


def test_degenerate_parameters_are_identity(toy):
    L = toy.window_length
    for spec in (DegradationSpec("jitter", sigma=0.0), DegradationSpec("circular-shift", shift=L),
                 DegradationSpec("circular-shift", shift=0), DegradationSpec("amplitude-scale", alpha=1.0)):
        assert generate(toy, spec).data.tobytes() == toy.data.tobytes()


@pytest.mark.parametrize("kw", [{"kind": "amplitude-scale", "alpha": 0.0}, {"kind": "jitter", "sigma": -1.0},
                                {"kind": "circular-shift", "shift": -1}, {"kind": "blur"}])
def test_spec_invariants(kw):
    with pytest.raises(RefgenError):
        DegradationSpec(**kw)


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(KINDS), st.integers(0, 1000))
def test_generate_preserves_structure(kind, seed):
    toy = make_toy_task(ToyTaskSpec(n_per_class=8, length=32, rate=16.0, seed=1))
    out = generate(toy, DegradationSpec(kind, sigma=0.3, alpha=2.0, shift=5, seed=seed))
    assert out.data.shape == toy.data.shape and out.data.dtype == toy.data.dtype
    assert out.subjects.tolist() == toy.subjects.tolist()
    assert sorted(out.labels.tolist()) == sorted(toy.labels.tolist())
    if kind != "label-permute":
        assert out.labels.tolist() == toy.labels.tolist()
    else:
        assert out.data.tobytes() == toy.data.tobytes()
    again = generate(toy, DegradationSpec(kind, sigma=0.3, alpha=2.0, shift=5, seed=seed))
    assert again.data.tobytes() == out.data.tobytes()


def test_kind_effects(toy):
    X = toy.data.astype(np.float64)
    np.testing.assert_allclose(generate(toy, DegradationSpec("amplitude-scale", alpha=2.0)).data, 2 * X, rtol=1e-6)
    np.testing.assert_array_equal(generate(toy, DegradationSpec("circular-shift", shift=3)).data,
                                  np.roll(toy.data, 3, axis=2))
    diff = generate(toy, DegradationSpec("jitter", sigma=0.5, seed=1)).data.astype(np.float64) - X
    assert diff.std() == pytest.approx(0.5, rel=0.05)


def test_provenance_round_trip(toy, tmp_path):
    out = generate(toy, DegradationSpec("jitter", sigma=0.5, seed=7))
    back = read_canonical(write_canonical(out, tmp_path / "j"))
    assert back.provenance["degradation"] == {"kind": "jitter", "sigma": 0.5, "seed": 7}
    assert back.data.tobytes() == out.data.tobytes()


def test_identity_puts_metrics_at_floor(toy):
    same = generate(toy, DegradationSpec("identity"))
    for metric in ("CD", "CrD", "L2", "DTWD"):
        assert sample_metric(metric, toy, same, 0, PairPlan("diagonal")).class_average == 0
    assert mmd_metric(toy, same, 0).class_average <= 1e-9
    assert discriminative_score(toy, same, 0, FAST).class_average <= 0.1


def test_label_permute_leaves_label_blind_metrics(toy):
    perm = generate(toy, DegradationSpec("label-permute", seed=3))
    assert perm.labels.tolist() != toy.labels.tolist()
    for metric in ("CD", "CrD", "L2", "DTWD"):
        a = sample_metric(metric, toy, toy, 0, PairPlan(), pooled=True).class_average
        assert sample_metric(metric, toy, perm, 0, PairPlan(), pooled=True).class_average == a
    assert mmd_metric(toy, perm, 0, pooled=True).class_average == mmd_metric(toy, toy, 0, pooled=True).class_average


def test_label_permute_drives_tstr_down():
    real = normalize(make_toy_task(ToyTaskSpec(n_per_class=50, length=64, rate=16.0, seed=4)))
    perm = generate(real, DegradationSpec("label-permute", seed=1))
    cfg = ProtocolConfig(("CNN",), seeds=(1,), training=TrainingConfig(epochs=15))
    res = evaluate_utility(real, perm, ("tstr",), cfg)
    assert res.trtr["CNN"][1] >= 0.9
    assert res.delta("TSTR", "CNN", 1) <= -0.2
