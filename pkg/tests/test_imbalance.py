import numpy as np
import pytest
import sympy
from scipy import stats

from rebalfer.imbalance import (DataError, DatasetManifest, ImbalanceSpec, SyntheticSpec,
                                class_templates, generate_synthetic, ingest_manifest,
                                overlap_matrix, realized_imbalance_factor, solve_mu,
                                subsample_exponential)


def exact_kept(counts_desc, target_if):
    """floor(n_k * (n_0 / (n_last * IF))**(k/(L-1))) evaluated symbolically."""
    L = len(counts_desc)
    base = sympy.Rational(counts_desc[0]) / (sympy.Rational(counts_desc[-1]) * sympy.nsimplify(target_if))
    out = []
    for k, n in enumerate(counts_desc):
        out.append(max(1, int(sympy.floor(n * base ** sympy.Rational(k, L - 1)))))
    return out


def manifest(counts, split="train"):
    recs = [(f"img/{c}/{i:05d}.png", c) for c, n in enumerate(counts) for i in range(n)]
    return DatasetManifest(tuple(recs), tuple(f"c{i}" for i in range(len(counts))), split)


def test_solve_mu_closed_forms():
    assert solve_mu([700] * 7, 100) == pytest.approx(100 ** (-1 / 6), rel=1e-15)
    assert solve_mu([700] * 7, 100) == pytest.approx(0.464159, abs=1e-6)
    assert solve_mu([9, 9], 4) == pytest.approx(0.25, rel=1e-15)
    with pytest.raises(ValueError):
        solve_mu([10, 5], 2.0)  # mu would be exactly 1
    with pytest.raises(ValueError):
        solve_mu([10, 5], 1.5)


def test_700_per_class_if_100():
    m = manifest([700] * 7)
    spec = ImbalanceSpec.for_counts(m.counts(), 100, seed=3)
    out = subsample_exponential(m, spec)
    assert out.counts() == [700, 324, 150, 70, 32, 15, 7]
    assert out.counts() == exact_kept([700] * 7, 100)
    assert realized_imbalance_factor(out) == 100.0
    assert set(out.records) <= set(m.records)
    again = subsample_exponential(m, spec)
    assert again.records == out.records


@pytest.mark.parametrize("counts,target", [
    ([700] * 7, 50), ([700] * 7, 150), ([1000, 800, 600, 400, 200], 60), ([300, 120, 310, 50], 17.5),
])
def test_kept_counts_match_symbolic_oracle(counts, target):
    m = manifest(counts)
    spec = ImbalanceSpec.for_counts(m.counts(), target, seed=0)
    out = subsample_exponential(m, spec).counts()
    order = spec.class_order
    oracle = exact_kept([counts[c] for c in order], target)
    assert [out[c] for c in order] == oracle


def test_order_descending_ties_by_index():
    spec = ImbalanceSpec.for_counts([5, 9, 9, 2], 10)
    assert spec.class_order == (1, 2, 0, 3)


def test_floor_clamped_to_one(caplog):
    spec = ImbalanceSpec(imbalance_factor=1e6, mu=0.01, class_order=(0, 1, 2))
    assert spec.kept_counts([50, 50, 50]) == [50, 1, 1]
    assert "clamping" in caplog.text


def test_seed_changes_subset_not_counts():
    m = manifest([40] * 4)
    a = subsample_exponential(m, ImbalanceSpec.for_counts(m.counts(), 8, seed=0))
    b = subsample_exponential(m, ImbalanceSpec.for_counts(m.counts(), 8, seed=1))
    assert a.counts() == b.counts() and a.records != b.records


def test_inconsistent_spec_rejected():
    m = manifest([100, 100, 100])
    with pytest.raises(ValueError):
        subsample_exponential(m, ImbalanceSpec(imbalance_factor=10.0, mu=0.5, class_order=(0, 1, 2)))


def test_manifest_sorted_and_validated():
    m = DatasetManifest((("b", 1), ("a", 0), ("a2", 1)), ("x", "y"))
    assert m.paths == ["a", "a2", "b"]
    with pytest.raises(DataError):
        DatasetManifest((("a", 2),), ("x", "y"))


def write(tmp_path, text, name="m.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_ingest_examples(tmp_path):
    with pytest.raises(DataError, match="no samples"):
        ingest_manifest(write(tmp_path, "path,label\n"))
    m = ingest_manifest(write(tmp_path, "path,label\na.png,0\nb.png,0\nc.png,1\n"))
    assert m.counts() == [2, 1]
    assert m.class_counts().counts == (2, 1)
    with pytest.raises(DataError, match=":3:"):
        ingest_manifest(write(tmp_path, "path,label\na.png,0\nb.png,5\n"), class_names=["x", "y"])


def test_ingest_names_and_errors(tmp_path):
    m = ingest_manifest(write(tmp_path, "path,label\na.png,fear\nb.png,happy\n"), ["happy", "fear"])
    assert m.records == (("a.png", 1), ("b.png", 0))
    with pytest.raises(DataError, match="unknown label"):
        ingest_manifest(write(tmp_path, "path,label\na.png,sad\n"), ["happy", "fear"])
    with pytest.raises(DataError, match="duplicate"):
        ingest_manifest(write(tmp_path, "path,label\na.png,0\na.png,1\n"))
    with pytest.raises(DataError, match="header"):
        ingest_manifest(write(tmp_path, "file,y\na.png,0\n"))
    with pytest.raises(DataError, match="cannot read"):
        ingest_manifest(tmp_path / "missing.csv")


def test_manifest_csv_round_trip(tmp_path):
    m = manifest([3, 2])
    m.to_csv(tmp_path / "out.csv")
    raw = (tmp_path / "out.csv").read_bytes()
    assert raw.startswith(b"path,label\n") and b"\r" not in raw
    assert ingest_manifest(tmp_path / "out.csv", m.class_names) == m


def test_synthetic_deterministic_and_balanced_test():
    spec = SyntheticSpec(per_class_base=20, test_per_class=10, seed=5)
    tr1, te1 = generate_synthetic(spec)
    tr2, te2 = generate_synthetic(spec)
    assert np.array_equal(tr1.images, tr2.images) and np.array_equal(te1.images, te2.images)
    assert te1.manifest.counts() == [10] * 7 and tr1.manifest.counts() == [20] * 7
    assert tr1.images.shape == (140, 1, 32, 32) and tr1.images.dtype == np.uint8
    assert te1.manifest.split == "test"


def test_synthetic_rejects_small_images():
    with pytest.raises(ValueError):
        generate_synthetic(SyntheticSpec(image_size=12))
    with pytest.raises(ValueError):
        generate_synthetic(SyntheticSpec(feature_overlap=np.full((7, 7), 0.5)))


def test_noiseless_identity_overlap_is_linearly_separable():
    spec = SyntheticSpec(per_class_base=30, test_per_class=10, noise_std=0.0,
                         feature_overlap=np.eye(7), seed=1)
    tr, te = generate_synthetic(spec)
    from sklearn.linear_model import LogisticRegression
    X = tr.images.reshape(len(tr.images), -1) / 255.0
    clf = LogisticRegression(max_iter=2000).fit(X, tr.manifest.labels)
    assert clf.score(te.images.reshape(len(te.images), -1) / 255.0, te.manifest.labels) == 1.0


def test_overlapped_pairs_correlate_more():
    spec = SyntheticSpec(per_class_base=200, test_per_class=1, seed=2)
    tr, _ = generate_synthetic(spec)
    y = tr.manifest.labels
    means = np.stack([tr.images[y == c, 0].astype(float).mean(axis=0).ravel() for c in range(7)])
    corr = np.corrcoef(means)
    ov = overlap_matrix(7)
    paired = [corr[a, b] for a in range(7) for b in range(a + 1, 7) if ov[a, b] > 0]
    unpaired = [corr[a, b] for a in range(7) for b in range(a + 1, 7) if ov[a, b] == 0]
    assert min(paired) > max(unpaired)


def test_class_means_differ_on_template_regions():
    spec = SyntheticSpec(per_class_base=60, test_per_class=1, seed=3)
    tr, _ = generate_synthetic(spec)
    templates, anchors = class_templates(spec)
    y = tr.manifest.labels
    t = spec.template_size
    for c in range(7):
        r, q = anchors[c]
        # project the region onto the class template; class c should score higher than the rest
        region = tr.images[:, 0, r:r + t, q:q + t].astype(float)
        score = (region * templates[c]).sum(axis=(1, 2))
        res = stats.ttest_ind(score[y == c], score[y != c], equal_var=False)
        assert res.pvalue < 0.01 and score[y == c].mean() > score[y != c].mean()
