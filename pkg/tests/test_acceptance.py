"""Acceptance gate: one test per release criterion, each printing a verdict.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines and the desk-scale ablation table.
"""

import collections
import itertools
import json
import math
import time

import numpy as np
import pytest
from scipy import stats

from cbm import _kernels
from cbm.cli import main
from cbm.masking import apply_mask, mask_count, plan_mask
from cbm.rng import RngStream
from cbm.salience import PatchGrid, SalienceProfile, salience_profile
from cbm.schedule import KINDS, ScheduleSpec, build_schedule
from cbm.trainer import init_params, loss_and_grad
from conftest import write_png


@pytest.fixture(scope="module", autouse=True)
def warm_kernels():
    # absorb one-time JIT compilation so the timed sections measure the
    # operations, not compiler startup
    img = np.random.default_rng(0).random((16, 16))
    _kernels.grad_magnitude(img)
    _kernels.patch_means(img, 4, 4)
    out = np.empty(2, dtype=np.int64)
    _kernels.sample_without_replacement(np.array([0.5, 0.5]), np.array([0.1, 0.9]), out)
    _kernels.sample_with_replacement(np.array([0.5, 0.5]), np.array([0.1, 0.9]), out)


def report(criterion, detail):
    print(f"\n[criterion {criterion}] PASS: {detail}")


def closed_form(kind, r_n, epochs, period, k):
    if kind == "constant":
        return r_n
    if kind == "linear":
        return r_n * k / epochs
    if kind == "log":
        return r_n * math.log2(1.0 + k / epochs)
    if kind == "exp":
        return r_n * math.exp(k - epochs)
    return r_n * ((k - 1) % period + 1) / period


def test_criterion_1_schedule_fidelity():
    start = time.monotonic()
    epochs, r_n, period = 200, 0.5, 20
    worst = 0.0
    for kind in KINDS:
        spec = ScheduleSpec(kind, r_n, epochs, period if kind == "linear_repeat" else None)
        sv = build_schedule(spec)
        for k in range(1, epochs + 1):
            worst = max(worst, abs(sv.ratio_at(k) - closed_form(kind, r_n, epochs, period, k)))
        if kind != "linear_repeat":
            assert np.all(np.diff(sv.r) >= 0)
    assert worst <= 1e-12
    exp = build_schedule(ScheduleSpec("exp", r_n, epochs)).r
    lin = build_schedule(ScheduleSpec("linear", r_n, epochs)).r
    log = build_schedule(ScheduleSpec("log", r_n, epochs)).r
    assert np.all(exp <= lin) and np.all(lin <= log)
    elapsed = time.monotonic() - start
    assert elapsed < 1.0
    report(1, f"five schedules match closed forms (max err {worst:.2e}), "
              f"ordering exp<=linear<=log holds, {elapsed:.2f}s")


def test_criterion_2_probability_correctness():
    start = time.monotonic()
    grid = PatchGrid(4, 4)
    gen = np.random.Generator(np.random.Philox(seed=100))
    images = [gen.integers(0, 256, size=(32, 32)).astype(np.float64) for _ in range(100)]

    constant = np.full((32, 32), 77.0)
    single = np.zeros((32, 32))
    # checkerboard filling exactly patch (1, 3): rows 8..16, cols 24..32
    single[8:16, 24:32] = np.tile([[0.0, 255.0], [255.0, 0.0]], (4, 4))
    images += [constant, single]

    for img in images:
        prof = salience_profile(img, grid)
        assert abs(prof.p.sum() - 1.0) <= 1e-9
        assert np.all(prof.p >= 0)
        shifted = salience_profile(img + 19.0, grid)
        assert np.array_equal(prof.m, shifted.m) and np.array_equal(prof.p, shifted.p)
        doubled = salience_profile(img * 2.0, grid)
        assert np.array_equal(doubled.m, prof.m * 2.0)
        assert np.array_equal(doubled.p, prof.p)

    flat = salience_profile(constant, grid)
    assert np.array_equal(flat.p, np.full(16, 1 / 16))

    hot = salience_profile(single, grid)
    assert hot.p.argmax() == 1 * 4 + 3  # the checkerboard patch
    elapsed = time.monotonic() - start
    assert elapsed < 5.0
    report(2, f"102 images: sums within 1e-9, shift/scale invariance exact, "
              f"flat fallback uniform, {elapsed:.2f}s")


def test_criterion_3_sampling_oracle():
    start = time.monotonic()
    p = np.array([0.5, 0.25, 0.125, 0.125])
    prof = SalienceProfile.from_magnitudes(p)
    trials = 100_000

    gen = RngStream(0).substream(42)
    counts = np.zeros(4, dtype=np.int64)
    for _ in range(trials):
        counts[plan_mask(prof, 0.25, gen).indices[0]] += 1
    freq = counts / trials
    max_dev = float(np.abs(freq - p).max())
    assert max_dev <= 0.01
    pvalue = stats.chisquare(counts, p * trials).pvalue
    assert pvalue > 0.01

    expected_pairs = {}
    for a, b in itertools.combinations(range(4), 2):
        expected_pairs[(a, b)] = p[a] * p[b] / (1 - p[a]) + p[b] * p[a] / (1 - p[b])
    pair_counts = collections.Counter()
    for _ in range(trials):
        pair_counts[tuple(sorted(plan_mask(prof, 0.5, gen).indices.tolist()))] += 1
    pair_dev = max(abs(pair_counts[k] / trials - v) for k, v in expected_pairs.items())
    assert pair_dev <= 0.01

    elapsed = time.monotonic() - start
    assert elapsed < 10.0
    report(3, f"single-draw dev {max_dev:.4f} (chi2 p={pvalue:.3f}), "
              f"pair dev {pair_dev:.4f} vs enumeration, {elapsed:.1f}s")


def test_criterion_4_mask_count_exactness():
    start = time.monotonic()
    checked = 0
    for n in (4, 16, 64, 256):
        prof = SalienceProfile.from_magnitudes(np.arange(1, n + 1, dtype=np.float64))
        for i in range(11):
            r = i / 10
            plan = plan_mask(prof, r, RngStream(7).mask_stream(i + 1, n))
            expected = min(max(int(math.floor(n * r + 0.5)), 0), n)
            assert plan.n_mask == expected
            assert len(set(plan.indices.tolist())) == plan.n_mask
            checked += 1

    gen = np.random.Generator(np.random.Philox(seed=101))
    img = gen.integers(0, 256, size=(16, 16), dtype=np.uint8)
    prof = salience_profile(img, PatchGrid(4, 4))
    plan = plan_mask(prof, 0.0, RngStream(1).mask_stream(1, 0))
    out = apply_mask(img, PatchGrid(4, 4), plan)
    assert out.tobytes() == img.tobytes()

    elapsed = time.monotonic() - start
    assert elapsed < 5.0
    report(4, f"{checked} (n, ratio) pairs give round-half-up distinct counts; "
              f"ratio 0 is byte-identical, {elapsed:.2f}s")


def test_criterion_5_salience_prioritization(quadrant_image):
    start = time.monotonic()
    prof = salience_profile(quadrant_image, PatchGrid(2, 2))
    gen = RngStream(0).substream(43)
    counts = np.zeros(4, dtype=np.int64)
    for _ in range(10_000):
        counts[plan_mask(prof, 0.25, gen).indices[0]] += 1
    ratio = counts[0] / max(1, max(counts[1], counts[2], counts[3]))
    assert ratio >= 2.0
    elapsed = time.monotonic() - start
    assert elapsed < 5.0
    report(5, f"checkerboard patch drawn {ratio:.1f}x more than the busiest flat patch, "
              f"{elapsed:.2f}s")


def test_criterion_6_trainer_gradient_check():
    start = time.monotonic()
    gen = np.random.Generator(np.random.Philox(seed=102))
    worst = 0.0
    for arch in ("linear", "mlp"):
        for _ in range(10):
            params = init_params(arch, 20, 3, 7, gen)
            for key in params:
                params[key] = gen.standard_normal(params[key].shape) * 0.5
            x = gen.random((3, 20))
            y = gen.integers(0, 3, size=3)
            _, grads = loss_and_grad(params, x, y)
            keys = sorted(params)
            analytic = np.concatenate([grads[k].reshape(-1) for k in keys])
            numeric = np.zeros_like(analytic)
            vec = np.concatenate([params[k].reshape(-1) for k in keys])
            step = 1e-5

            def rebuild(v):
                out, off = {}, 0
                for k in keys:
                    size = params[k].size
                    out[k] = v[off:off + size].reshape(params[k].shape)
                    off += size
                return out

            for i in range(vec.size):
                plus, minus = vec.copy(), vec.copy()
                plus[i] += step
                minus[i] -= step
                lp, _ = loss_and_grad(rebuild(plus), x, y)
                lm, _ = loss_and_grad(rebuild(minus), x, y)
                numeric[i] = (lp - lm) / (2 * step)
            rel = float(np.abs(analytic - numeric).max()) / max(float(np.abs(numeric).max()), 1e-12)
            worst = max(worst, rel)
    assert worst < 1e-4

    for c in (2, 5, 10):
        params = {"W": np.zeros((6, c)), "b": np.zeros(c)}
        loss, _ = loss_and_grad(params, np.random.default_rng(2).random((4, 6)),
                                np.zeros(4, dtype=np.int64))
        assert abs(loss - math.log(c)) <= 1e-9

    elapsed = time.monotonic() - start
    assert elapsed < 30.0
    report(6, f"20 finite-difference checks pass (worst rel err {worst:.2e}); "
              f"uniform loss equals ln C, {elapsed:.1f}s")


def test_criterion_7_cmd_train_determinism(tmp_path):
    start = time.monotonic()
    doc = {
        "data": {"n_train": 60, "n_val": 20},
        "schedule": {"kind": "linear_repeat", "rn": 0.4, "epochs": 6, "period": 3},
        "trainer": {"hidden": 16},
        "seeds": [1, 2],
    }
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps(doc))

    outs = [tmp_path / n for n in ("a", "b", "pa", "pb")]
    for out in outs[:2]:
        assert main(["train", "--config", str(cfg), "--out", str(out)]) == 0
    for out in outs[2:]:
        assert main(["train", "--config", str(cfg), "--out", str(out),
                     "--set", "trainer.prefetch=4"]) == 0

    for name in ("epochs.csv", "summary.csv"):
        inline = (outs[0] / name).read_bytes()
        assert inline == (outs[1] / name).read_bytes()
        prefetched = (outs[2] / name).read_bytes()
        assert prefetched == (outs[3] / name).read_bytes()
        assert inline == prefetched  # producer thread cannot change contents

    elapsed = time.monotonic() - start
    assert elapsed < 60.0
    report(7, f"reports bit-identical across reruns and with a parallel batch "
              f"producer, {elapsed:.1f}s")


def test_criterion_8_desk_scale_ablation(tmp_path):
    start = time.monotonic()
    out = tmp_path / "sweep"
    code = main(["ablate", "--axis", "schedule",
                 "--values", "none,constant,linear,linear_repeat",
                 "--modes", "gradient,uniform",
                 "--out", str(out)])
    assert code == 0
    elapsed = time.monotonic() - start
    assert elapsed < 300.0

    lines = (out / "ablation.csv").read_text().splitlines()
    assert lines[0] == "value,mode,mean_acc,std_acc,best_epoch"
    assert len(lines) == 9
    table = {}
    for ln in lines[1:]:
        value, mode, mean_acc, std_acc, best_epoch = ln.split(",")
        table[(value, mode)] = float(mean_acc)

    margin = table[("linear_repeat", "gradient")] - (table[("constant", "gradient")] - 0.01)
    assert margin >= 0.0, f"non-inferiority violated by {-margin:.4f}"

    best = max(table, key=table.get)
    masked = {k: v for k, v in table.items() if k[0] != "none"}
    best_masked = max(masked, key=masked.get)
    print("\n" + "\n".join(lines))
    print(f"observation: best cell {best} at {table[best]:.3f}; "
          f"best masked cell {best_masked} at {masked[best_masked]:.3f}")
    report(8, f"8-cell sweep (5 seeds) in {elapsed:.0f}s; linear_repeat+gradient "
              f"mean {table[('linear_repeat', 'gradient')]:.3f} vs constant+gradient "
              f"{table[('constant', 'gradient')]:.3f} (margin {margin:+.3f})")


def test_criterion_9_hyperparameter_surface(tmp_path):
    start = time.monotonic()
    base = {
        "data": {"n_train": 8, "n_val": 4, "grid": "4x4"},
        "schedule": {"kind": "linear_repeat", "rn": 0.4, "epochs": 1, "period": 1},
        "trainer": {"hidden": 4},
        "seeds": [1],
    }

    def run(doc, out_name):
        cfg = tmp_path / f"{out_name}.json"
        cfg.write_text(json.dumps(doc))
        return main(["train", "--config", str(cfg), "--out", str(tmp_path / out_name)])

    assert run(base, "ok") == 0

    rejected = []
    for label, patch in [
        ("rn=0", {"schedule": {**base["schedule"], "rn": 0}}),
        ("rn=1", {"schedule": {**base["schedule"], "rn": 1}}),
        ("rn=1.5", {"schedule": {**base["schedule"], "rn": 1.5}}),
        ("grid=3x3", {"data": {**base["data"], "grid": "3x3"}}),
        ("kind=bogus", {"schedule": {**base["schedule"], "kind": "bogus"}}),
        ("period=0", {"schedule": {**base["schedule"], "period": 0}}),
        ("unknown key", {"data": {**base["data"], "wat": 1}}),
    ]:
        doc = {**base, **patch}
        assert run(doc, label.replace("=", "_")) == 2, label
        rejected.append(label)

    elapsed = time.monotonic() - start
    report(9, f"knobs rn/grid/kind/period accepted; rejected with exit 2: "
              f"{', '.join(rejected)}; {elapsed:.1f}s")
