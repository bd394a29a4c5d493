"""Release acceptance gates.

Each test re-verifies one release-blocking property end to end and prints a
single "ACCEPTANCE <gate>: PASS|FAIL" line (run with -s to stream the lines).
The gates intentionally overlap the unit suites: they are meant to be read as
a standalone go/no-go report.
"""

import base64
import ipaddress
import json
import random
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
from click.testing import CliRunner

import corpusgen
import oracle_adblock
from sstlens.characterize import (
    ENCODED_SIGNATURE,
    asn_lookup,
    classify_dns,
    detect_obfuscation,
    load_asn_mapping,
    load_dns_records,
)
from sstlens.classifier import (
    LabeledExample,
    export_model,
    import_model,
    predict_proba,
    regularized_loss_and_grad,
    sweep_threshold,
    train_lr,
)
from sstlens.cli import main
from sstlens.corpus import DomainSnapshot, NetworkRequest
from sstlens.features import domain_features, request_features
from sstlens.filters import RequestContext, match_request, parse_rules, rule_matches
from sstlens.pipeline import PipelineConfig, run_train
from sstlens.templates import match_value
from test_templates import CONFORMANCE, oracle_match

DATA = Path(__file__).parent / "data"

DECODED_PREFIXES = {
    "data.themeisle.com": "/g/collect?v=2&tid=G-D2Q8EGWPY5",
    "gtm.shapeways.com": "/g/collect?v=2&tid=G-MXZEZNTKR8",
    "assets.comparitech.com": "/g/collect?v=2&tid=G-594Q6WX0ED",
}


def _report(gate: str, failures: list) -> None:
    print(f"ACCEPTANCE {gate}: {'PASS' if not failures else 'FAIL'}")
    assert not failures, f"{gate}: {failures[:5]}"


def _request(url: str, third_party: bool = False) -> NetworkRequest:
    return NetworkRequest(url=url, method="GET", initiator_domain=None,
                          initiator_script=None, is_third_party=third_party,
                          timestamp_ms=0)


def test_appendix_url_decode():
    failures = []
    started = time.perf_counter()
    doc = json.loads((DATA / "encoded_endpoints.json").read_text())
    if len(doc["endpoints"]) != 3:
        failures.append("expected three recorded endpoints")
    for entry in doc["endpoints"]:
        request = _request(entry["url"])
        hits = [f for f in detect_obfuscation(request)
                if f.encoded_param_key == entry["encoded_param_key"]]
        prefix = DECODED_PREFIXES[request.host()]
        if len(hits) != 1:
            failures.append(f"{request.host()}: {len(hits)} findings")
            continue
        finding = hits[0]
        if finding.decoded_payload != entry["decoded_payload"]:
            failures.append(f"{request.host()}: payload mismatch")
        if not finding.decoded_payload.startswith(prefix):
            failures.append(f"{request.host()}: missing prefix {prefix}")
        if not finding.signature_hit:
            failures.append(f"{request.host()}: signature not flagged")
    elapsed = time.perf_counter() - started
    if elapsed >= 1.0:
        failures.append(f"decode took {elapsed:.2f}s")
    _report("appendix-url-decode", failures)


def test_signature_segment_decode():
    failures = []
    if ENCODED_SIGNATURE != "L2cvY29sbGVjdD92PTImdGlkPUct":
        failures.append("unexpected encoded signature constant")
    decoded = base64.b64decode(ENCODED_SIGNATURE).decode("ascii")
    if decoded != "/g/collect?v=2&tid=G-":
        failures.append(f"decoded to {decoded!r}")
    _report("signature-segment-decode", failures)


def test_template_conformance(registry):
    failures = []
    if len(CONFORMANCE) < 60:
        failures.append(f"only {len(CONFORMANCE)} fixture rows")
    rows_by_template = {}
    for modality, template_id, value, expected in CONFORMANCE:
        rows_by_template.setdefault((modality, template_id), []).append(expected)
        template = registry.find(template_id)
        if match_value(registry, template_id, value) is not expected:
            failures.append(f"engine disagrees on {template_id} {value!r}")
        if oracle_match(template, value) is not expected:
            failures.append(f"oracle disagrees on {template_id} {value!r}")
    declared = {(t.modality, t.id) for t in registry.templates}
    if set(rows_by_template) != declared:
        failures.append("fixture rows do not cover the registry exactly")
    for key, outcomes in rows_by_template.items():
        if outcomes.count(True) < 2 or outcomes.count(False) < 2:
            failures.append(f"{key[1]}: needs two positives and two negatives")
    _report("template-conformance", failures)


def test_or_aggregation(registry):
    failures = []
    rng = random.Random(20260815)
    values = ["1770166293", "G-ABCDE12345", "en-us", "page_view", "x86", "64",
              "noapi", "123", "plain-text", "9.9", "https://example.com/p", "-"]
    keys = ["sid", "tid", "ul", "en", "uaa", "uab", "pscdl", "tfd", "q", "z"]
    for trial in range(1000):
        requests = []
        for _ in range(rng.randint(1, 6)):
            pairs = [f"{rng.choice(keys)}={rng.choice(values)}"
                     for _ in range(rng.randint(0, 6))]
            url = f"https://host{rng.randint(0, 9)}.example/p"
            if pairs:
                url += "?" + "&".join(pairs)
            requests.append(_request(url, third_party=bool(rng.getrandbits(1))))
        snapshot = DomainSnapshot(domain="agg.example", requests=tuple(requests),
                                  cookies=(), window_variables=())
        aggregated = domain_features(registry, snapshot).domain_request_vector.bits
        brute = [0] * len(aggregated)
        for request in requests:
            for i, bit in enumerate(request_features(registry, request).bits):
                brute[i] |= bit
        if list(aggregated) != brute:
            failures.append(f"trial {trial}: aggregation mismatch")
            break
    _report("or-aggregation", failures)


def _random_problem(rng, n=12, d=5):
    X = np.array([[rng.random() < 0.4 for _ in range(d)] for _ in range(n)], dtype=float)
    y = np.array([rng.random() < 0.5 for _ in range(n)], dtype=float)
    w = np.array([rng.uniform(-2, 2) for _ in range(d)])
    b = rng.uniform(-2, 2)
    return X, y, w, b


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


def test_logistic_regression(tmp_path):
    failures = []
    rng = random.Random(50)
    h = 1e-6
    for instance in range(50):
        X, y, w, b = _random_problem(rng)
        _, grad_w, grad_b = regularized_loss_and_grad(X, y, w, b, 1e-3)
        numeric_grads = []
        for i in range(len(w)):
            wp, wm = w.copy(), w.copy()
            wp[i] += h
            wm[i] -= h
            lp, _, _ = regularized_loss_and_grad(X, y, wp, b, 1e-3)
            lm, _, _ = regularized_loss_and_grad(X, y, wm, b, 1e-3)
            numeric_grads.append(((lp - lm) / (2 * h), grad_w[i]))
        lp, _, _ = regularized_loss_and_grad(X, y, w, b + h, 1e-3)
        lm, _, _ = regularized_loss_and_grad(X, y, w, b - h, 1e-3)
        numeric_grads.append(((lp - lm) / (2 * h), grad_b))
        for numeric, analytic in numeric_grads:
            rel = abs(numeric - analytic) / max(1e-12, abs(numeric) + abs(analytic))
            if rel > 1e-5:
                failures.append(f"instance {instance}: gradient off by {rel:.2e}")

    corpusgen.write_jsonl(tmp_path / "a.jsonl", corpusgen.fixture_a()["rows"])
    trained = run_train(PipelineConfig.from_obj({"corpus": str(tmp_path / "a.jsonl")}))
    for tag, metrics in trained["metrics"].items():
        if metrics["f1"] != 1.0:
            failures.append(f"{tag}: separable corpus trained to f1 {metrics['f1']}")

    sweep_rng = random.Random(19)
    for trial in range(200):
        n = sweep_rng.randint(1, 40)
        probs = [round(sweep_rng.random(), 3) for _ in range(n)]
        labels = [sweep_rng.randint(0, 1) for _ in range(n)]
        threshold, report = sweep_threshold(probs, labels)
        expected_threshold, expected_f1 = _brute_force_sweep(probs, labels)
        if threshold != expected_threshold:
            failures.append(f"sweep trial {trial}: {threshold} != {expected_threshold}")
        if abs(report.f1 - expected_f1) > 1e-12:
            failures.append(f"sweep trial {trial}: f1 {report.f1} != {expected_f1}")
    _report("logistic-regression", failures)


def test_pipeline_train_evaluate(tmp_path):
    failures = []
    data = corpusgen.fixture_b()
    corpusgen.write_jsonl(tmp_path / "corpus.jsonl", data["rows"])
    corpusgen.write_ground_truth(tmp_path / "gt.csv", data["ground_truth"])
    runner = CliRunner()
    models = tmp_path / "models"
    out = tmp_path / "eval"
    started = time.perf_counter()
    trained = runner.invoke(main, ["train", "--corpus", str(tmp_path / "corpus.jsonl"),
                                   "--out", str(models)], catch_exceptions=False)
    evaluated = runner.invoke(main, ["evaluate",
                                     "--corpus", str(tmp_path / "corpus.jsonl"),
                                     "--models", str(models),
                                     "--ground-truth", str(tmp_path / "gt.csv"),
                                     "--threshold", "request_level=0.7",
                                     "--threshold", "meta=0.5",
                                     "--out", str(out)], catch_exceptions=False)
    elapsed = time.perf_counter() - started
    if trained.exit_code != 0:
        failures.append(f"train exited {trained.exit_code}")
    if evaluated.exit_code != 0:
        failures.append(f"evaluate exited {evaluated.exit_code}")
    if not failures:
        report = json.loads((out / "evaluate_report.json").read_text())
        for tag in ("request_level", "meta"):
            f1 = report["per_model"][tag]["f1"]
            if f1 < 0.95:
                failures.append(f"{tag}: f1 {f1} below 0.95")
    if elapsed >= 30.0:
        failures.append(f"train+evaluate took {elapsed:.1f}s")
    _report("pipeline-train-evaluate", failures)


_FILTER_LINES = [
    "||google-analytics.com^",
    "||example.com/api^",
    "||ads.example.net^$third-party",
    "|https://sst.",
    "/g/collect|",
    "/collect^",
    "?v=2&tid=G-$~third-party",
    "&sst.sw_exp=",
    "/^https?:\\/\\/[a-z]+\\.metrics\\./",
    "/track$domain=site.example|~sub.site.example",
    "/pixel$image",
    "*bead*",
]

_URL_PARTS = {
    "scheme": ["https", "http"],
    "host": ["google-analytics.com", "www.google-analytics.com", "sst.shop.example",
             "example.com", "wexample.com", "ads.example.net", "a.metrics.example",
             "h.example", "sub.h.example"],
    "port": ["", ":8443"],
    "path": ["/g/collect", "/collect", "/collecting", "/api", "/track",
             "/pixel", "/x/bead/y", "/clean"],
    "query": ["", "?v=2&tid=G-AB12CD34EF", "?sst.sw_exp=1&v=2", "?q=collect"],
}


def test_filter_matcher():
    failures = []
    deployed = ["||google-analytics.com^", "?v=2&tid=G-$~third-party", "&sst.sw_exp="]
    rules = parse_rules(deployed).rules
    if len(rules) != 3:
        failures.append("deployed rules did not all parse")

    tid = corpusgen.tid_for(100)
    query = corpusgen.collect_query(tid, "site00.example")
    host, path = corpusgen.deployment_endpoint(0, "site00.example")
    standard = RequestContext(url=f"https://{host}{path}?{query}",
                              is_third_party=False, page_domain="site00.example")
    if match_request(rules, standard) is None:
        failures.append("standard first-party collect request not blocked")

    encoded_host, _ = corpusgen.deployment_endpoint(18, "site18.example")
    payload = corpusgen.encoded_value(corpusgen.tid_for(118), "site18.example")
    obfuscated = RequestContext(url=f"https://{encoded_host}/x/?p={payload}",
                                is_third_party=False, page_domain="site18.example")
    if match_request(rules, obfuscated) is not None:
        failures.append("base64-obfuscated request was blocked")

    first_party_rule = rules[1]
    rng = random.Random(65)
    probe_urls = [standard.url,
                  f"https://{corpusgen.GA_URL_HOST}/g/collect?{query}"]
    for _ in range(300):
        probe_urls.append("{}://{}{}{}".format(
            rng.choice(_URL_PARTS["scheme"]), rng.choice(_URL_PARTS["host"]),
            rng.choice(_URL_PARTS["path"]), rng.choice(_URL_PARTS["query"])))
    for url in probe_urls:
        ctx = RequestContext(url=url, is_third_party=True, page_domain="site00.example")
        if rule_matches(first_party_rule, ctx):
            failures.append(f"first-party-only rule fired third-party on {url}")
            break

    engine_rules = parse_rules(_FILTER_LINES).rules
    oracle_rules = [oracle_adblock.parse_line(line) for line in _FILTER_LINES]
    checked = 0
    for case in range(300):
        url = "{}://{}{}{}{}".format(
            rng.choice(_URL_PARTS["scheme"]), rng.choice(_URL_PARTS["host"]),
            rng.choice(_URL_PARTS["port"]), rng.choice(_URL_PARTS["path"]),
            rng.choice(_URL_PARTS["query"]))
        ctx = RequestContext(url=url,
                             resource_type=rng.choice(["xmlhttprequest", "image"]),
                             is_third_party=rng.random() < 0.5,
                             page_domain=rng.choice(["site.example", "sub.site.example"]))
        for rule, oracle_rule in zip(engine_rules, oracle_rules):
            got = rule_matches(rule, ctx)
            want = oracle_adblock.rule_match(
                oracle_rule, url, is_third_party=ctx.is_third_party,
                page_domain=ctx.page_domain, resource_type=ctx.resource_type)
            if got != want:
                failures.append(f"case {case}: {rule.raw} vs {url}")
            checked += 1
        first = match_request(engine_rules, ctx)
        want_index = oracle_adblock.first_match(
            _FILTER_LINES, url, is_third_party=ctx.is_third_party,
            page_domain=ctx.page_domain, resource_type=ctx.resource_type)
        if (first.raw if first else None) != (
                _FILTER_LINES[want_index] if want_index is not None else None):
            failures.append(f"case {case}: first match disagrees on {url}")
    if checked < 200:
        failures.append(f"only {checked} oracle comparisons ran")
    _report("filter-matcher", failures)


def test_dns_asn_characterization(psl, tmp_path):
    failures = []
    fixture = corpusgen.characterize_fixture()
    corpusgen.write_jsonl(tmp_path / "dns.jsonl", fixture["dns_rows"])
    records = load_dns_records(tmp_path / "dns.jsonl")
    expected = {
        ("sst.alpha.example", "alpha.example"): ("cname_chain", "third_party"),
        ("sgtm.beta.example", "beta.example"): ("cname_chain", "first_party"),
        ("www.gamma.example", "gamma.example"): ("direct_address", "not_applicable"),
    }
    for (fqdn, page), (kind, party) in expected.items():
        got = classify_dns(fqdn, page, records, psl)
        if (got.record_kind, got.cname_party) != (kind, party):
            failures.append(f"{fqdn}: {(got.record_kind, got.cname_party)}")

    rng = random.Random(41)
    lines = ["cidr,asn"]
    networks = []
    for i in range(60):
        base = ipaddress.ip_address(rng.getrandbits(32))
        network = ipaddress.ip_network(f"{base}/{rng.randint(8, 28)}", strict=False)
        if any(network == seen for seen, _ in networks):
            continue
        networks.append((network, 64500 + i))
        lines.append(f"{network},{64500 + i}")
    corpusgen.write_lines(tmp_path / "asn.csv", lines)
    mapping = load_asn_mapping(tmp_path / "asn.csv")
    for _ in range(10000):
        ip = ipaddress.ip_address(rng.getrandbits(32))
        best, best_len = None, -1
        for network, asn in networks:
            if ip in network and network.prefixlen > best_len:
                best, best_len = asn, network.prefixlen
        if asn_lookup(str(ip), mapping) != best:
            failures.append(f"asn lookup disagrees on {ip}")
            break
    _report("dns-asn-characterization", failures)


def test_model_roundtrip(tmp_path):
    failures = []
    rng = random.Random(23)
    X, y, _, _ = _random_problem(rng, n=30, d=6)
    examples = [LabeledExample(key=i, features=tuple(row), label=int(label))
                for i, (row, label) in enumerate(zip(X, y))]
    model = train_lr(examples, modality_tag="request_domain")
    path = tmp_path / "model.json"
    export_model(model, path)
    restored = import_model(path)
    probes = [tuple(row) for row in X]
    probes += [tuple(rng.randint(0, 1) for _ in range(6)) for _ in range(200)]
    worst = max(abs(predict_proba(model, probe) - predict_proba(restored, probe))
                for probe in probes)
    if worst > 1e-12:
        failures.append(f"round-trip drift {worst:.3e}")
    _report("model-roundtrip", failures)
