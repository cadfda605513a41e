"""Acceptance checks 1-11; each prints one PASS/FAIL line with the measured values.

The heavy checks (6, 7 and 9) train with the full 100-epoch recipe and take
several minutes each on one core.
"""

import filecmp
import math
import time

import numpy as np
import pytest

import oracles
from conftest import write_wesad_fixture
from synthts_bench.cli import main
from synthts_bench.container import read_canonical, write_canonical
from synthts_bench.distribution import KernelConfig, mmd, mmd_metric
from synthts_bench.kernels import dtw_pairs
from synthts_bench.nn import ModelSpec, TrainingConfig, auroc, build, gradient_check
from synthts_bench.nn.models import (LSTM, BatchNorm, Classifier, Conv1d, Dense, Flatten, GlobalAvgPool, MaxPool,
                                     ReLU, Sequential)
from synthts_bench.pipeline import ChannelSpec, WindowedDataset, lowpass, normalize, resample
from synthts_bench.protocols import (POLICIES, ProtocolConfig, SplitSpec, apply_da_policy, discriminative_score,
                                     evaluate_utility, run_trtr, stratified_split)
from synthts_bench.refgen import DegradationSpec, ToyTaskSpec, generate, make_toy_task
from synthts_bench.sample_metrics import PairPlan, dtw_distance, sample_metric

pytestmark = pytest.mark.acceptance

# classifiers that fit the full recipe into the time budget on one core
CALIBRATION_CLASSIFIERS = ("MLP", "AE", "CNN", "ConvLSTM")


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}")
        assert ok, detail
    return emit


def _dataset(data, labels, rate=8.0):
    n, c, length = data.shape
    return WindowedDataset(data, labels, np.array(["s"] * n), tuple(ChannelSpec(f"c{i}", rate) for i in range(c)),
                           rate, length / rate, 2)


def _random_windows(rng, n, c, length):
    kind = rng.integers(0, 5)
    scale = 10.0 ** rng.uniform(-3, 3)
    if kind == 0:
        x = rng.normal(size=(n, c, length))
    elif kind == 1:
        x = np.repeat(rng.normal(size=(n, c, 1)), length, axis=2)  # constant windows
    elif kind == 2:
        t = np.arange(length)
        x = np.sin(2 * np.pi * rng.uniform(0.01, 0.5, size=(n, c, 1)) * t + rng.uniform(0, 6.3, size=(n, c, 1)))
    elif kind == 3:
        x = rng.standard_t(2, size=(n, c, length))
    else:
        x = rng.exponential(size=(n, c, length)) + rng.normal(size=(n, c, 1)) * 5
    return (scale * x + rng.normal() * scale).astype(np.float32)


def _pair(seed):
    rng = np.random.default_rng(seed)
    c, length = int(rng.integers(1, 3)), int(rng.integers(8, 40))
    out = []
    for _ in range(2):
        counts = rng.integers(10, 25, 2)
        labels = np.repeat([0, 1], counts)
        out.append(_dataset(_random_windows(rng, len(labels), c, length), labels))
    return out


def _inversions(values, tol):
    drops = [a - b for a, b in zip(values, values[1:]) if b < a]
    return len(drops) <= 1 and all(d < tol for d in drops), drops


# ---------------------------------------------------------------------------

def test_criterion_01_metric_bounds(verdict):
    t0 = time.perf_counter()
    ds_cfg = ProtocolConfig(("MLP",), seeds=(1,), training=TrainingConfig(epochs=1), arch_params={"MLP": {"width": 8}})
    violations, counts = [], {m: 0 for m in ("CD", "CrD", "L2", "DTWD", "MMD", "DS")}
    for seed in range(1000):
        real, synth = _pair(seed)
        plan = PairPlan.capped(40, seed)
        vals = {m: sample_metric(m, real, synth, 0, plan) for m in ("CD", "CrD", "L2", "DTWD")}
        vals["MMD"] = mmd_metric(real, synth, 0)
        vals["DS"] = discriminative_score(real, synth, 0, ds_cfg)
        for m, res in vals.items():
            lo, hi = {"CD": (0, 2), "CrD": (0, 2), "MMD": (0, 2), "DS": (0, 0.5)}.get(m, (0, math.inf))
            for v in res.per_class.values():
                counts[m] += 1
                if not (lo <= v <= hi):
                    violations.append((seed, m, v))
    elapsed = time.perf_counter() - t0
    ok = not violations and elapsed < 120
    verdict(1, ok, f"1000 pairs, {sum(counts.values())} per-class values, {len(violations)} violations, "
                   f"{elapsed:.1f}s (limit 120s)")


def test_criterion_02_dtw_exhaustive(verdict):
    t0 = time.perf_counter()
    seqs = {n: oracles.all_sequences(n) for n in range(1, 7)}
    pairs = mismatches = 0
    chunk = 1 << 20
    for n in range(1, 7):
        for m in range(1, 7):
            X, Y = seqs[n], seqs[m]
            total = len(X) * len(Y)
            for start in range(0, total, chunk):
                ii, jj = np.divmod(np.arange(start, min(total, start + chunk)), len(Y))
                got = dtw_pairs(X, Y, ii, jj)
                ref = oracles.dtw_enumerated_block(X, Y, ii, jj, corner_free=True)
                mismatches += int(np.count_nonzero(got != ref))
                pairs += len(ii)
    # the scalar entry point on a seeded sample of the same space
    rng = np.random.default_rng(0)
    for _ in range(2000):
        x = rng.integers(0, 4, rng.integers(1, 7)).astype(float)
        y = rng.integers(0, 4, rng.integers(1, 7)).astype(float)
        mismatches += dtw_distance(x, y) != oracles.dtw_bruteforce(x, y)
        pairs += 1
    elapsed = time.perf_counter() - t0
    verdict(2, mismatches == 0 and elapsed < 60,
            f"{pairs} sequence pairs (lengths <= 6, values 0..3), {mismatches} mismatches, {elapsed:.1f}s (limit 60s)")


def test_criterion_03_mmd_oracle(verdict):
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        R = rng.normal(size=(64, 128))
        S = rng.normal(rng.uniform(-0.5, 0.5), rng.uniform(0.5, 2.0), size=(64, 128))
        value, sigma, _ = mmd(R, S, KernelConfig())
        ref_sigma = oracles.median_distance_loop(np.vstack([R, S])) / math.sqrt(2)
        worst = max(worst, abs(value - oracles.mmd_loop(R, S, ref_sigma)), abs(sigma - ref_sigma) / ref_sigma)
    elapsed = time.perf_counter() - t0
    verdict(3, worst <= 1e-10 and elapsed < 60,
            f"50 set pairs (64 windows, L=128), max |optimized - naive| = {worst:.2e} (tol 1e-10), {elapsed:.1f}s")


def test_criterion_04_auroc_oracle(verdict):
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(2, 60))
        y = rng.integers(0, 2, n)
        y[:2] = [0, 1]
        s = rng.integers(0, rng.integers(2, 12), n) / 7.0  # coarse grid forces ties
        worst = max(worst, abs(auroc(s, y) - oracles.auroc_pairs(s, y)))
    example = auroc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1])
    verdict(4, worst <= 1e-12 and example == 0.75,
            f"200 tied instances, max error {worst:.1e} (tol 1e-12); worked example = {example!r}")


def test_criterion_05_gradient_checks(verdict):
    t0 = time.perf_counter()
    f64 = np.float64

    def custom(net, shape):
        rng = np.random.default_rng(0)
        return Classifier(ModelSpec("CNN", shape, 2), net(rng), 0)

    cases = {
        "dense": (custom(lambda r: Sequential(Flatten(), Dense(16, 12, r, f64), ReLU(), Dense(12, 2, r, f64)),
                         (2, 8)), 1e-4),
        "conv": (custom(lambda r: Sequential(Conv1d(2, 4, 5, r, f64), Flatten(), Dense(48, 2, r, f64)), (2, 12)),
                 1e-4),
        "norm": (custom(lambda r: Sequential(Conv1d(2, 3, 3, r, f64), BatchNorm(3, f64), Flatten(),
                                             Dense(36, 2, r, f64)), (2, 12)), 1e-4),
        "max-pool": (custom(lambda r: Sequential(Conv1d(2, 3, 3, r, f64), MaxPool(2), Flatten(),
                                                 Dense(18, 2, r, f64)), (2, 12)), 1e-4),
        "global-pool": (custom(lambda r: Sequential(Conv1d(2, 8, 5, r, f64), GlobalAvgPool(),
                                                    Dense(8, 2, r, f64)), (2, 12)), 1e-4),
        "recurrent": (custom(lambda r: Sequential(LSTM(3, 8, r, f64), Dense(8, 2, r, f64)), (3, 10)), 1e-3),
    }
    for arch, params, shape in (("MLP", {"width": 16}, (2, 16)), ("AE", {"hidden": 16, "code": 8}, (2, 16)),
                                ("CNN", {}, (2, 16)), ("FCN", {"filters": (8, 16, 8)}, (2, 16)),
                                ("ResNet", {"filters": (8, 16, 8), "blocks": 2}, (2, 16)),
                                ("ConvLSTM", {"filters": 6, "hidden": 8, "pool": 2}, (2, 20))):
        cases[arch] = (build(ModelSpec(arch, shape, 2, params), seed=3), 1e-3 if arch == "ConvLSTM" else 1e-4)
    results = {}
    for name, (model, limit) in cases.items():
        shape = model.spec.input_shape
        rng = np.random.default_rng(1)
        results[name] = (gradient_check(model, rng.normal(size=(4,) + shape), np.arange(4) % 2), limit)
    elapsed = time.perf_counter() - t0
    bad = {k: v for k, (v, lim) in results.items() if not v < lim}
    summary = ", ".join(f"{k} {v:.1e}" for k, (v, _) in results.items())
    verdict(5, not bad and elapsed < 180, f"max rel err: {summary}; {elapsed:.1f}s (limit 180s)")


def test_criterion_06_identity_calibration(verdict):
    t0 = time.perf_counter()
    real = normalize(make_toy_task(ToyTaskSpec(n_per_class=200, seed=6)))
    same = generate(real, DegradationSpec("identity"))
    sample = {(ch, m): sample_metric(m, real, same, ch, PairPlan("diagonal")).class_average
              for ch in real.channel_names for m in ("CD", "CrD", "L2", "DTWD")}
    mmd_vals = [mmd_metric(real, same, ch).class_average for ch in real.channel_names]
    cfg = ProtocolConfig(CALIBRATION_CLASSIFIERS, seeds=(1, 2, 3))
    ds = [discriminative_score(real, same, ch, cfg).class_average for ch in real.channel_names]
    util = evaluate_utility(real, same, ("tstr",), cfg)
    delta = util.averaged_delta("TSTR")
    worst_delta = max(abs(util.mean_delta("TSTR", a)) for a in cfg.classifiers)
    elapsed = time.perf_counter() - t0
    ok = (all(v == 0 for v in sample.values()) and max(mmd_vals) <= 1e-9 and max(ds) <= 0.1
          and worst_delta <= 0.02 and elapsed < 900)
    verdict(6, ok, f"400 windows; sample metrics max {max(sample.values())}; MMD max {max(mmd_vals):.1e}; "
                   f"DS {[round(v, 4) for v in ds]}; TSTR delta avg {100 * delta:+.2f} pts "
                   f"(worst classifier {100 * worst_delta:.2f}); {elapsed:.0f}s (limit 900s)")


def test_criterion_07_jitter_ladder(verdict):
    t0 = time.perf_counter()
    real = normalize(make_toy_task(ToyTaskSpec(n_per_class=100, seed=7)))
    cfg = ProtocolConfig(CALIBRATION_CLASSIFIERS, seeds=(1, 2, 3))
    sigmas = (0.0, 0.1, 0.5, 1.0)
    mmd_vals, ds_vals = [], []
    for s in sigmas:
        synth = generate(real, DegradationSpec("jitter", sigma=s, seed=11))
        mmd_vals.append(mmd_metric(real, synth, 0).class_average)
        ds_vals.append(discriminative_score(real, synth, 0, cfg).class_average)
    ok_mmd, drops_mmd = _inversions(mmd_vals, 1e-3)
    ok_ds, drops_ds = _inversions(ds_vals, 0.02)
    elapsed = time.perf_counter() - t0
    verdict(7, ok_mmd and ok_ds and elapsed < 1200,
            f"sigma {list(sigmas)}: MMD {[f'{v:.4g}' for v in mmd_vals]} (drops {drops_mmd}); "
            f"DS {[f'{v:.4f}' for v in ds_vals]} (drops {drops_ds}); {elapsed:.0f}s (limit 1200s)")


def _expected_after(policy, counts):
    top = counts.max()
    return {"Balance": np.full_like(counts, top), "Double": 2 * counts,
            "BalanceDouble": np.full_like(counts, 2 * top)}[policy]


def test_criterion_08_protocol_arithmetic(verdict):
    labels = np.repeat([0, 1], [70, 30])
    s = stratified_split(labels, SplitSpec(seed=0))
    split_counts = [np.bincount(labels[p]).tolist() for p in s]
    ok_split = split_counts == [[49, 21], [7, 3], [14, 6]]

    worked = {p: apply_da_policy(np.repeat([0, 1], [90, 30]), np.repeat([0, 1], [9, 3]),
                                 np.repeat([0, 1], [400, 400]), p).train_counts_after for p in POLICIES}
    ok_worked = worked == {"Balance": [90, 90], "Double": [180, 60], "BalanceDouble": [180, 180]}

    rng = np.random.default_rng(8)
    failures = 0
    for policy in POLICIES:
        for _ in range(200):
            K = int(rng.integers(2, 5))
            ct, cv = rng.integers(1, 100, K), rng.integers(1, 20, K)
            pool = rng.permutation(np.repeat(np.arange(K), 2 * ct.max() + 2 * cv.max() + rng.integers(0, 5, K)))
            plan = apply_da_policy(np.repeat(np.arange(K), ct), np.repeat(np.arange(K), cv), pool, policy,
                                   seed=int(rng.integers(1 << 30)))
            chosen = np.concatenate([plan.train_add, plan.val_add])
            failures += (plan.train_counts_after != _expected_after(policy, ct).tolist()
                         or plan.val_counts_after != _expected_after(policy, cv).tolist()
                         or len(np.unique(chosen)) != len(chosen))

    leaks = 0
    for seed in range(100):
        lab = rng.permutation(np.repeat([0, 1, 2], rng.integers(5, 60, 3)))
        tr, va, te = stratified_split(lab, SplitSpec(seed=seed))
        leaks += bool(set(te) & (set(tr) | set(va)))
    verdict(8, ok_split and ok_worked and failures == 0 and leaks == 0,
            f"split {split_counts}; DA worked examples {worked}; fuzz failures {failures}/600; "
            f"test-partition intersections {leaks}/100")


def test_criterion_09_classifier_sanity(verdict):
    t0 = time.perf_counter()
    real = make_toy_task(ToyTaskSpec(n_per_class=100, length=256, seed=0))
    cfg = ProtocolConfig(("FCN",), seeds=(1, 2, 3))
    trtr = run_trtr(real, cfg)["FCN"]
    permuted = run_trtr(generate(real, DegradationSpec("label-permute", seed=5)), cfg)["FCN"]
    perm_mean = float(np.mean(list(permuted.values())))
    elapsed = time.perf_counter() - t0
    ok = min(trtr.values()) >= 0.95 and 0.4 <= perm_mean <= 0.6 and elapsed < 600
    verdict(9, ok, f"FCN TRTR AUROC per seed {trtr}; label-permuted per seed {permuted}, mean {perm_mean:.4f}; "
                   f"{elapsed:.0f}s (limit 600s)")


def test_criterion_10_pipeline_fidelity(verdict, tmp_path):
    t_in = np.arange(7000) / 700.0
    y = resample(np.sin(2 * np.pi * 5 * t_in), 700, 100)
    corr = float(np.corrcoef(y, np.sin(2 * np.pi * 5 * np.arange(1000) / 100.0))[0, 1])
    t = np.arange(1000) / 100.0
    x = np.sin(2 * np.pi * 1 * t) + np.sin(2 * np.pi * 20 * t)
    spec_in, spec_out = np.abs(np.fft.rfft(x)), np.abs(np.fft.rfft(lowpass(x, 100, 5)))
    ratio = float(spec_out[200] / spec_in[200])  # bin 200 = 20 Hz
    ds = normalize(make_toy_task(ToyTaskSpec(n_per_class=20, seed=10)))
    back = read_canonical(write_canonical(ds, tmp_path / "c"))
    exact = back.data.tobytes() == ds.data.tobytes() and back.equals(ds)
    verdict(10, len(y) == 1000 and corr >= 0.999 and ratio < 0.05 and exact,
            f"{len(y)} samples, correlation {corr:.6f}; 20 Hz amplitude ratio {ratio:.2e}; round-trip exact {exact}")


def _run_all_commands(root, tag):
    out = root / tag
    fast = ["--classifiers", "MLP,CNN", "--epochs", "3", "--seeds", "1,2", "--workers", "1"]
    manifest = write_wesad_fixture(root / "wesad", n_subjects=2, phases=(("baseline", 30), ("TSST", 20)))
    codes = [
        main(["prepare", str(manifest), "--out", str(out / "prepared")]),
        main(["toy", "--out", str(out / "real"), "--n-per-class", "30", "--length", "64", "--rate", "16", "--seed",
              "4", "--z-score"]),
        main(["refgen", str(out / "real"), "--kind", "jitter", "--sigma", "0.5", "--seed", "7", "--out",
              str(out / "synth")]),
        main(["eval-quality", str(out / "real"), str(out / "synth"), "--pairs-cap", "1000", "--seed", "42",
              "--config-id", "jitter", "--out", str(out / "quality")] + fast),
        main(["eval-utility", str(out / "real"), str(out / "synth"), "--mode", "all", "--config-id", "jitter",
              "--out", str(out / "utility")] + fast),
        main(["embed", str(out / "real"), str(out / "synth"), "--perplexity", "5", "--iterations", "250", "--svg",
              "--out", str(out / "embed")]),
        main(["report", str(out / "quality" / "quality.json"), str(out / "utility" / "utility.json"),
              "--out", str(out / "report")]),
    ]
    return out, codes


def test_criterion_11_determinism(verdict, tmp_path):
    a, codes_a = _run_all_commands(tmp_path, "a")
    b, codes_b = _run_all_commands(tmp_path, "b")
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    differing = [str(f) for f in files if not filecmp.cmp(a / f, b / f, shallow=False)]
    ok = codes_a == codes_b == [0] * 7 and not differing and len(files) > 20
    verdict(11, ok, f"7 commands run twice, exit codes {codes_a}; {len(files)} output files, "
                    f"{len(differing)} differ {differing[:3]}")
