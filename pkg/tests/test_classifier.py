import json
import math
import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import corpusgen
from sstlens.classifier import (
    DEFAULT_THRESHOLDS,
    GA_ENDPOINTS_DEFAULT,
    THIRD_PARTY_EXCLUDES_DEFAULT,
    LabeledExample,
    LRModel,
    TrainingConfig,
    check_registry_compatible,
    domain_label,
    evaluate,
    export_model,
    host_matches_any,
    import_model,
    metrics_from,
    model_from_obj,
    model_to_obj,
    predict_proba,
    regularized_loss_and_grad,
    request_label,
    storage_eval_filter,
    strip_client_side,
    sweep_threshold,
    train_lr,
    train_meta,
)
from sstlens.corpus import parse_snapshot
from sstlens.errors import ConfigError, DataError, VersionError


def _snapshots(rows, psl):
    return [parse_snapshot(r, psl) for r in rows]


def test_host_matches_any():
    endpoints = ("google-analytics.com", "analytics.google.com")
    assert host_matches_any("google-analytics.com", endpoints)
    assert host_matches_any("www.google-analytics.com", endpoints)
    assert host_matches_any("region1.analytics.google.com", endpoints)
    assert not host_matches_any("notgoogle-analytics.com", endpoints)
    assert not host_matches_any("google-analytics.com.evil.net", endpoints)
    assert host_matches_any("WWW.Google-Analytics.COM", endpoints)


def test_request_and_domain_labels(psl):
    fixture = corpusgen.fixture_b()
    positive = parse_snapshot(fixture["rows"][0], psl)
    negative = parse_snapshot(fixture["rows"][20], psl)
    assert domain_label(positive) == 1
    assert domain_label(negative) == 0
    per_request = [request_label(r) for r in positive.requests]
    # the 8 client-side hits are positive, the 2 mirrored ones are not
    assert sum(per_request) == 8
    assert per_request[8] == 0


def test_strip_client_side(psl):
    fixture = corpusgen.fixture_b()
    snapshot = parse_snapshot(fixture["rows"][0], psl)
    stripped = strip_client_side(snapshot)
    hosts = [r.host() for r in stripped.requests]
    assert len(hosts) == 2
    assert all(h.endswith("site00.example") for h in hosts)
    # the facebook/doubleclick noise rows are on the exclusion list
    for host in hosts:
        assert not host_matches_any(host, GA_ENDPOINTS_DEFAULT)
        assert not host_matches_any(host, THIRD_PARTY_EXCLUDES_DEFAULT)


def test_storage_eval_filter(psl):
    fixture = corpusgen.fixture_b()
    kept = storage_eval_filter(_snapshots(fixture["rows"], psl))
    kept_domains = {s.domain for s in kept}
    # every positive domain carries client-side GA, so only clean ones remain
    assert kept_domains == {f"clean{i:02d}.example" for i in range(20)}


def _random_problem(rng, n=12, d=5):
    X = np.array([[rng.random() < 0.4 for _ in range(d)] for _ in range(n)], dtype=float)
    y = np.array([rng.random() < 0.5 for _ in range(n)], dtype=float)
    w = np.array([rng.uniform(-2, 2) for _ in range(d)])
    b = rng.uniform(-2, 2)
    return X, y, w, b


def test_gradient_matches_central_differences():
    rng = random.Random(7)
    h = 1e-6
    for _ in range(20):
        X, y, w, b = _random_problem(rng)
        loss, grad_w, grad_b = regularized_loss_and_grad(X, y, w, b, 1e-3)
        for i in range(len(w)):
            wp, wm = w.copy(), w.copy()
            wp[i] += h
            wm[i] -= h
            lp, _, _ = regularized_loss_and_grad(X, y, wp, b, 1e-3)
            lm, _, _ = regularized_loss_and_grad(X, y, wm, b, 1e-3)
            numeric = (lp - lm) / (2 * h)
            rel = abs(numeric - grad_w[i]) / max(1e-12, abs(numeric) + abs(grad_w[i]))
            assert rel <= 1e-5, (i, numeric, grad_w[i])
        lp, _, _ = regularized_loss_and_grad(X, y, w, b + h, 1e-3)
        lm, _, _ = regularized_loss_and_grad(X, y, w, b - h, 1e-3)
        numeric = (lp - lm) / (2 * h)
        rel = abs(numeric - grad_b) / max(1e-12, abs(numeric) + abs(grad_b))
        assert rel <= 1e-5


def _examples_from(X, y):
    return [LabeledExample(key=i, features=tuple(row), label=int(label))
            for i, (row, label) in enumerate(zip(X, y))]


def test_training_loss_never_increases():
    rng = random.Random(3)
    X, y, _, _ = _random_problem(rng, n=30, d=6)
    trace = []
    train_lr(_examples_from(X, y), TrainingConfig(max_iters=400), loss_trace=trace)
    for before, after in zip(trace, trace[1:]):
        assert after <= before + 1e-12


def test_separable_data_reaches_perfect_f1():
    examples = [LabeledExample(key=i, features=(1, 0, 1), label=1) for i in range(6)]
    examples += [LabeledExample(key=10 + i, features=(0, 0, 0), label=0) for i in range(6)]
    model = train_lr(examples, modality_tag="request_domain")
    report = evaluate(model, examples)
    assert report.f1 == 1.0
    assert report.tp == 6 and report.tn == 6


def test_training_is_deterministic():
    rng = random.Random(11)
    X, y, _, _ = _random_problem(rng, n=20)
    a = train_lr(_examples_from(X, y))
    b = train_lr(_examples_from(X, y))
    assert a.weights == b.weights
    assert a.bias == b.bias


def test_training_rejects_single_class():
    examples = [LabeledExample(key=i, features=(1, 0), label=1) for i in range(4)]
    with pytest.raises(DataError, match="both classes"):
        train_lr(examples)
    with pytest.raises(DataError, match="empty"):
        train_lr([])


def test_default_threshold_per_tag():
    examples = [LabeledExample(key=0, features=(1,), label=1),
                LabeledExample(key=1, features=(0,), label=0)]
    for tag, expected in DEFAULT_THRESHOLDS.items():
        if tag == "meta":
            continue
        model = train_lr(examples, modality_tag=tag)
        assert model.threshold == expected


def test_class_weight_shifts_decision():
    # two duplicated patterns with an 1:3 positive ratio on pattern A
    examples = [LabeledExample(key=i, features=(1,), label=1 if i < 1 else 0)
                for i in range(4)]
    examples += [LabeledExample(key=10 + i, features=(0,), label=0) for i in range(4)]
    plain = train_lr(examples, TrainingConfig(max_iters=2000))
    boosted = train_lr(examples, TrainingConfig(max_iters=2000),
                       class_weight={0: 1.0, 1: 10.0})
    p_plain = predict_proba(plain, (1,))
    p_boosted = predict_proba(boosted, (1,))
    assert p_boosted > p_plain


def test_predict_proba_stays_in_unit_interval():
    model = LRModel(weights=(900.0,), bias=-2000.0, threshold=0.5,
                    modality_tag="cookie", registry_version="1.0.0",
                    template_ids=("cookie:standard_ga",))
    assert 0.0 < predict_proba(model, (0,)) < 1.0
    assert 0.0 < predict_proba(model, (1,)) < 1.0


def test_metrics_hand_computed():
    probs = [0.9, 0.8, 0.3, 0.6, 0.1]
    labels = [1, 0, 1, 1, 0]
    report = metrics_from(probs, labels, 0.5)
    assert (report.tp, report.fp, report.tn, report.fn) == (2, 1, 1, 1)
    assert report.precision == pytest.approx(2 / 3)
    assert report.recall == pytest.approx(2 / 3)
    assert report.f1 == pytest.approx(2 / 3)
    assert report.accuracy == pytest.approx(3 / 5)


def test_metrics_degenerate_cases():
    report = metrics_from([0.2], [0], 0.5)
    assert report.f1 == 0.0 and report.precision == 0.0 and report.recall == 0.0


def _brute_force_sweep(probs, labels, grid_step=0.1):
    # exact rational F1 so ulp noise cannot reorder ties
    best_threshold, best_f1 = None, Fraction(-1)
    i = 1
    while True:
        threshold = round(i * grid_step, 12)
        if threshold >= 1.0:
            break
        tp = sum(1 for p, y in zip(probs, labels) if p >= threshold and y == 1)
        fp = sum(1 for p, y in zip(probs, labels) if p >= threshold and y == 0)
        fn = sum(1 for p, y in zip(probs, labels) if p < threshold and y == 1)
        f1 = Fraction(2 * tp, 2 * tp + fp + fn) if (2 * tp + fp + fn) else Fraction(0)
        if f1 > best_f1:
            best_threshold, best_f1 = threshold, f1
        i += 1
    return best_threshold, float(best_f1)


def test_sweep_matches_brute_force():
    rng = random.Random(19)
    for trial in range(200):
        n = rng.randint(1, 40)
        probs = [round(rng.random(), 3) for _ in range(n)]
        labels = [rng.randint(0, 1) for _ in range(n)]
        threshold, report = sweep_threshold(probs, labels)
        expected_threshold, expected_f1 = _brute_force_sweep(probs, labels)
        assert threshold == expected_threshold, (trial, probs, labels)
        assert report.f1 == pytest.approx(expected_f1)


def test_sweep_rejects_bad_input():
    with pytest.raises(DataError):
        sweep_threshold([0.5], [1, 0])
    with pytest.raises(DataError):
        sweep_threshold([], [])
    with pytest.raises(ConfigError):
        sweep_threshold([0.5], [1], grid_step=1.5)


def _aligned_meta_inputs():
    domains = [f"d{i}.example" for i in range(8)]
    examples_by_modality = {}
    models = {}
    for j, tag in enumerate(("request_domain", "cookie", "window")):
        examples = []
        for i, domain in enumerate(domains):
            label = 1 if i < 4 else 0
            bits = tuple(1 if (label and k <= j) else 0 for k in range(3))
            examples.append(LabeledExample(key=domain, features=bits, label=label))
        examples_by_modality[tag] = examples
        models[tag] = train_lr(examples, modality_tag=tag, registry_version="1.0.0",
                               template_ids=(f"{tag}:a", f"{tag}:b", f"{tag}:c"))
    return models, examples_by_modality


def test_train_meta_combines_base_probabilities():
    models, examples_by_modality = _aligned_meta_inputs()
    meta = train_meta(models, examples_by_modality)
    assert meta.modality_tag == "meta"
    assert meta.template_ids == ("proba:request_domain", "proba:cookie", "proba:window")
    assert meta.registry_version == "1.0.0"
    probas = tuple(
        predict_proba(models[tag], examples_by_modality[tag][0].features)
        for tag in ("request_domain", "cookie", "window"))
    assert predict_proba(meta, probas) > 0.5


def test_train_meta_requires_alignment():
    models, examples_by_modality = _aligned_meta_inputs()
    examples_by_modality["cookie"] = examples_by_modality["cookie"][:-1]
    with pytest.raises(DataError, match="misaligned"):
        train_meta(models, examples_by_modality)


def test_train_meta_requires_all_bases():
    models, examples_by_modality = _aligned_meta_inputs()
    del models["window"]
    with pytest.raises(ConfigError, match="window"):
        train_meta(models, examples_by_modality)


def test_model_roundtrip_exact(tmp_path):
    rng = random.Random(23)
    X, y, _, _ = _random_problem(rng, n=25, d=4)
    model = train_lr(_examples_from(X, y), modality_tag="window",
                     registry_version="1.0.0",
                     template_ids=("window_var:a", "window_var:b",
                                   "window_var:c", "window_var:d"))
    path = tmp_path / "m.json"
    export_model(model, path)
    loaded = import_model(path)
    for original, restored in zip(model.weights, loaded.weights):
        assert restored == original  # %.17g round-trips float64 exactly
    assert loaded.bias == model.bias
    assert loaded.threshold == model.threshold
    path2 = tmp_path / "m2.json"
    export_model(loaded, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_model_obj_schema():
    model = LRModel(weights=(0.5, -1.25), bias=0.75, threshold=0.4,
                    modality_tag="cookie", registry_version="1.0.0",
                    template_ids=("cookie:a", "cookie:b"))
    doc = model_to_obj(model)
    assert doc["format_version"] == 1
    assert doc["weights"] == ["0.5", "-1.25"]
    assert doc["bias"] == "0.75"
    assert json.loads(json.dumps(doc)) == doc
    assert model_from_obj(doc) == model


def test_model_format_version_gate():
    model = LRModel(weights=(0.5,), bias=0.0, threshold=0.4,
                    modality_tag="cookie", registry_version="1.0.0",
                    template_ids=("cookie:a",))
    doc = model_to_obj(model)
    doc["format_version"] = 99
    with pytest.raises(VersionError):
        model_from_obj(doc)
    del doc["format_version"]
    with pytest.raises(DataError, match="format_version"):
        model_from_obj(doc)


def test_registry_compatibility_gate(registry):
    model = LRModel(weights=(0.5,), bias=0.0, threshold=0.4,
                    modality_tag="cookie", registry_version="0.9.0",
                    template_ids=("cookie:a",))
    with pytest.raises(VersionError):
        check_registry_compatible(model, registry)


@settings(max_examples=150, deadline=None)
@given(st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=1, max_size=30),
       st.data())
def test_sweep_property(probs, data):
    labels = data.draw(st.lists(st.integers(0, 1), min_size=len(probs),
                                max_size=len(probs)))
    threshold, report = sweep_threshold(probs, labels)
    expected_threshold, expected_f1 = _brute_force_sweep(probs, labels)
    assert threshold == expected_threshold
    assert math.isclose(report.f1, expected_f1, abs_tol=1e-12)
