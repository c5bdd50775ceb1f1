"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The two experiment criteria (4-arm ablation, transform variants) train 26
small models and take roughly 20 minutes on one CPU core.
"""
import json
import math
import time

import numpy as np
import pytest
import torch

from rebalfer.attention import AttentionMaps, consistency_loss, flip_w
from rebalfer.balance import compute_balance_weights
from rebalfer.formats import read_rbam
from rebalfer.harness.ablation import desk_config, run_ablation, run_transform_variants, synthetic_source
from rebalfer.harness.config import TrainConfig
from rebalfer.harness.metrics import MetricsReport
from rebalfer.harness.report import dump_attention, report_document
from rebalfer.harness.train import evaluate, objective, train
from rebalfer.imbalance import DatasetManifest, ImbalanceSpec, realized_imbalance_factor, subsample_exponential
from rebalfer.losses import make_smooth_labels
from rebalfer.model import ModelConfig, build_model

ABLATION_SEEDS = (0, 1, 2, 3, 4)
TRANSFORM_SEEDS = (0, 1, 2)


def series_weight(n: int, beta: float) -> float:
    # reciprocal of sum_{k<n} beta**k, summed exactly-rounded
    return 1.0 / math.fsum(beta ** k for k in range(n))


def test_c1_balance_weight_oracle(verdict):
    betas, ns = (0.5, 0.9, 0.99, 0.9999), np.arange(1, 1001)
    t0 = time.perf_counter()
    got = {b: compute_balance_weights(ns, b).raw for b in betas}
    elapsed = time.perf_counter() - t0
    worst = max(abs(got[b][i] - series_weight(int(n), b)) / series_weight(int(n), b)
                for b in betas for i, n in enumerate(ns))
    ok = worst <= 1e-10 and elapsed < 1.0
    verdict("C1 balance weights", ok, f"max rel err {worst:.2e}, {elapsed * 1e3:.1f} ms")
    assert ok


def test_c2_smooth_label_distribution(verdict):
    rng = np.random.default_rng(20)
    alphas = (0.0, 0.05, 0.1, 0.4, 1.0)
    worst_sum, onehot_exact, strict = 0.0, True, True
    for _ in range(100):
        L = int(rng.integers(2, 10))
        counts = rng.integers(1, 1001, size=L)
        w = compute_balance_weights(counts, 0.9999)
        labels = torch.as_tensor(rng.integers(0, L, size=32))
        for a in alphas:
            y = make_smooth_labels(labels, w, a, L, dtype=torch.float64).values
            worst_sum = max(worst_sum, (y.sum(dim=1) - 1).abs().max().item())
            if a == 0:
                onehot_exact &= torch.equal(y, torch.nn.functional.one_hot(labels, L).to(torch.float64))
                continue
            # off-target mass each class receives from a sample of some other class
            off = np.array([y[labels != c, c].max().item() if (labels != c).any() else np.nan
                            for c in range(L)])
            for i in range(L):
                for j in range(L):
                    if counts[i] < counts[j] and not (np.isnan(off[i]) or np.isnan(off[j])):
                        strict &= off[i] > off[j]
    ok = worst_sum <= 1e-9 and onehot_exact and strict
    verdict("C2 smooth labels", ok, f"max |row sum - 1| {worst_sum:.1e}, one-hot exact {onehot_exact}, "
                                    f"minor > major {strict}")
    assert ok


def test_c3_flip_and_consistency_invariants(verdict):
    g = torch.Generator().manual_seed(3)
    m = AttentionMaps(torch.randn(2, 3, 4, 4, dtype=torch.float64, generator=g), rebalanced=True)
    mt = AttentionMaps(torch.randn(2, 3, 4, 4, dtype=torch.float64, generator=g), rebalanced=True)
    involution = torch.equal(flip_w(flip_w(m)).values, m.values)
    zero = max(consistency_loss(m, flip_w(flip_w(m)), d).item() for d in ("abs", "squared"))
    sym = max(abs(consistency_loss(m, flip_w(mt), d).item() - consistency_loss(flip_w(m), mt, d).item())
              for d in ("abs", "squared"))
    ok = involution and zero <= 1e-12 and sym <= 1e-12
    verdict("C3 flip/consistency", ok, f"involution {involution}, zero-case {zero:.1e}, symmetry {sym:.1e}")
    assert ok


def test_c4_full_objective_gradient_check(verdict):
    t0 = time.perf_counter()
    cfg = TrainConfig(lam=2.0, alpha=0.1, beta=0.9999, enable_rac=True, enable_rsl=True,
                      channels=(4, 8), input_size=8)
    model = build_model(ModelConfig(num_classes=3, input_size=8, channels=(4, 8)), seed=7).double()
    model.train()
    g = torch.Generator().manual_seed(8)
    x = torch.randn(2, 1, 8, 8, dtype=torch.float64, generator=g)
    y = torch.tensor([1, 2])
    w = compute_balance_weights([60, 12, 3], cfg.beta).as_tensor(torch.float64)

    def loss():
        return objective(model, x, y, cfg, w)[0].total

    model.zero_grad()
    loss().backward()
    h, worst = 1e-6, 0.0
    with torch.no_grad():
        for p in model.parameters():
            flat, analytic = p.data.view(-1), p.grad.reshape(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + h
                up = loss().item()
                flat[i] = orig - h
                down = loss().item()
                flat[i] = orig
                num = (up - down) / (2 * h)
                scale = max(abs(num), abs(analytic[i].item()), 1e-6)
                worst = max(worst, abs(num - analytic[i].item()) / scale)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-4 and elapsed < 60
    verdict("C4 gradient check", ok, f"max rel err {worst:.2e} over all parameters, {elapsed:.1f} s")
    assert ok


def test_c5_subsampler_exactness(verdict):
    recs = tuple((f"s/{c}/{i}", c) for c in range(7) for i in range(700))
    m = DatasetManifest(recs, tuple(f"c{c}" for c in range(7)))
    runs = [subsample_exponential(m, ImbalanceSpec.for_counts(m.counts(), 100, seed=9)) for _ in range(2)]
    counts, realized = runs[0].counts(), realized_imbalance_factor(runs[0])
    ok = counts == [700, 324, 150, 70, 32, 15, 7] and realized == 100.0 and runs[0].records == runs[1].records
    verdict("C5 subsampler", ok, f"kept {counts}, IF {realized!r}, deterministic {runs[0].records == runs[1].records}")
    assert ok


def test_c6_ablation_ordering(verdict):
    t0 = time.perf_counter()
    grid = run_ablation(desk_config(), ABLATION_SEEDS, synthetic_source())
    elapsed = time.perf_counter() - t0
    s = grid.summary()
    means = {a: s["arms"][a]["mean_accuracy"] for a in s["arms"]}
    ok = s["status"] == "ordering holds" and elapsed <= 15 * 60
    failed = [k for k, v in s["checks"].items() if not v]
    verdict("C6 ablation ordering", ok,
            " ".join(f"{a}={v:.4f}" for a, v in means.items())
            + f", {len(ABLATION_SEEDS)} seeds, {elapsed / 60:.1f} min"
            + (f", failed checks {failed}" if failed else ""))
    assert ok, json.dumps(s, indent=1)


def test_c7_balanced_split_identity(verdict):
    make = synthetic_source(per_class_base=60, test_per_class=20)
    tr, te = make(11)
    res = train(desk_config(max_epochs=3, seed=11), tr, te)
    gaps = [abs(r.overall_accuracy - r.mean_accuracy) for r in res.reports]
    rng = np.random.default_rng(7)
    for _ in range(200):
        L, k = int(rng.integers(2, 10)), int(rng.integers(1, 50))
        y = np.repeat(np.arange(L), k)
        r = MetricsReport.from_predictions(y, rng.integers(0, L, size=y.size), L)
        gaps.append(abs(r.overall_accuracy - r.mean_accuracy))
    worst = max(gaps)
    ok = worst <= 1e-9
    verdict("C7 balanced identity", ok, f"max |overall - mean| {worst:.1e} over {len(gaps)} reports")
    assert ok


def test_c8_transform_variants(verdict):
    t0 = time.perf_counter()
    out = run_transform_variants(desk_config(), TRANSFORM_SEEDS, synthetic_source(),
                                 kinds=("scaling", "intensity"))
    means = {k: float(np.mean([r.mean_accuracy for r in v])) for k, v in out.items()}
    completed = len(out["scaling"]) == len(TRANSFORM_SEEDS)
    ok = completed and means["scaling"] >= means["intensity"]
    verdict("C8 transform variants", ok, f"scaling {means['scaling']:.4f} vs intensity "
                                         f"{means['intensity']:.4f}, {(time.perf_counter() - t0) / 60:.1f} min")
    assert ok


def test_c9_determinism_and_formats(verdict, tmp_path):
    tr, te = synthetic_source(per_class_base=60, test_per_class=10)(5)
    cfg = desk_config(max_epochs=3, seed=5)
    docs, results = [], []
    for _ in range(2):
        res = train(cfg, tr, te)
        results.append(res)
        docs.append(json.dumps(report_document(res), sort_keys=True))
    same = docs[0] == docs[1]
    maps = dump_attention(results[0].trained, te, tmp_path / "maps.rbam", rebalanced=True)
    back = read_rbam(tmp_path / "maps.rbam")
    exact = maps.astype(np.float32).tobytes() == back.tobytes() and back.shape == maps.shape
    ok = same and exact and evaluate(results[1].trained, te, epoch=3).to_dict() == results[0].final.to_dict()
    verdict("C9 determinism/formats", ok, f"identical report JSON {same}, RBAM1 round-trip bit-exact {exact}")
    assert ok
