"""Batch orchestration shared by the HTTP service and the CLI.

Every operation takes a validated PipelineConfig plus any command-specific
inputs, and returns a JSON-compatible dict. Nothing here touches the output
directory or timestamps; persistence is the CLI's job, so identical inputs
produce identical results.

Model artifacts are written per modality tag as model_<tag>.json. Verdicts
come in two granularities: domain rows {domain, modality, probability,
verdict, matched_template_ids} and request rows {domain, url, probability,
verdict}.
"""

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

from . import classifier, features
from .characterize import (
    KeyTaxonomy,
    asn_set,
    categorize_keys,
    classify_dns,
    classify_routing,
    detect_obfuscation,
    infra_shift,
    load_asn_mapping,
    load_dns_records,
    prefix_and_path_stats,
)
from .classifier import (
    DEFAULT_THRESHOLDS,
    GA_ENDPOINTS_DEFAULT,
    THIRD_PARTY_EXCLUDES_DEFAULT,
    LabeledExample,
    TrainingConfig,
    check_registry_compatible,
    evaluate as evaluate_model,
    import_model,
    model_from_obj,
    model_to_obj,
    predict_proba,
    strip_client_side,
    storage_eval_filter,
    sweep_threshold,
    train_lr,
    train_meta,
)
from .corpus import ingest_corpus, request_host
from .errors import ConfigError, DataError
from .filters import RequestContext, coverage, load_rules
from .psl import PublicSuffixList, load_snapshot
from .templates import BUILTIN, load_registry

MODEL_FILENAMES = {tag: f"model_{tag}.json" for tag in classifier.MODEL_TAGS}

DOMAIN_LEVEL_TAGS = ("request_domain", "cookie", "window", "combined", "meta")


@dataclass
class PipelineConfig:
    registry: str = BUILTIN
    corpus: str = None
    ga_endpoints: tuple = GA_ENDPOINTS_DEFAULT
    third_party_excludes: tuple = THIRD_PARTY_EXCLUDES_DEFAULT
    thresholds: dict = field(default_factory=lambda: dict(DEFAULT_THRESHOLDS))
    dns_records: str = None
    asn_mapping: str = None
    rules: str = None
    denylist: str = None
    strict: bool = True
    parallelism: int = 1

    @classmethod
    def from_obj(cls, obj: dict) -> "PipelineConfig":
        if not isinstance(obj, dict):
            raise ConfigError("config must be a JSON object")
        known = {
            "registry", "corpus", "ga_endpoints", "third_party_excludes",
            "thresholds", "dns_records", "asn_mapping", "rules", "denylist",
            "strict", "parallelism",
        }
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        config = cls()
        for key, value in obj.items():
            if value is None:
                continue
            if key == "thresholds":
                merged = dict(DEFAULT_THRESHOLDS)
                for tag, threshold in value.items():
                    if tag not in DEFAULT_THRESHOLDS:
                        raise ConfigError(f"threshold for unknown model {tag!r}")
                    merged[tag] = float(threshold)
                value = merged
            if key in ("ga_endpoints", "third_party_excludes"):
                value = tuple(value)
            setattr(config, key, value)
        config.validate()
        return config

    def validate(self):
        for tag, threshold in self.thresholds.items():
            if not 0.0 <= float(threshold) <= 1.0:
                raise ConfigError(f"threshold {tag}={threshold} outside [0,1]")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        for name in ("corpus", "dns_records", "asn_mapping", "rules", "denylist"):
            path = getattr(self, name)
            if path is not None and not os.path.exists(path):
                raise ConfigError(f"{name} file not found: {path}")
        if self.registry != BUILTIN and not os.path.exists(self.registry):
            raise ConfigError(f"registry file not found: {self.registry}")

    def require(self, *names):
        for name in names:
            if getattr(self, name) is None:
                raise ConfigError(f"this command requires the {name!r} config field")


def _load_corpus(config: PipelineConfig, psl: PublicSuffixList):
    result = ingest_corpus(config.corpus, strict=config.strict, psl=psl)
    snapshots = sorted(result.snapshots, key=lambda s: s.domain)
    return snapshots, result.skipped


def _all_features(registry, snapshots, parallelism: int):
    if parallelism > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            computed = list(pool.map(lambda s: features.domain_features(registry, s), snapshots))
    else:
        computed = [features.domain_features(registry, s) for s in snapshots]
    return dict(zip((s.domain for s in snapshots), computed))


def _qualified_ids(registry, modality):
    return tuple(f"{modality}:{tid}" for tid in registry.modality_ids(modality))


def _metrics_obj(report) -> dict:
    return {
        "accuracy": report.accuracy,
        "precision": report.precision,
        "recall": report.recall,
        "f1": report.f1,
        "tp": report.tp,
        "fp": report.fp,
        "tn": report.tn,
        "fn": report.fn,
        "threshold": report.threshold,
    }


def run_ingest_validate(config: PipelineConfig) -> dict:
    config.require("corpus")
    psl = load_snapshot()
    snapshots, skipped = _load_corpus(config, psl)
    return {
        "domains": len(snapshots),
        "requests": sum(len(s.requests) for s in snapshots),
        "cookies": sum(len(s.cookies) for s in snapshots),
        "window_variables": sum(len(s.window_variables) for s in snapshots),
        "skipped": [{"line": line, "reason": reason} for line, reason in skipped],
    }


def run_train(config: PipelineConfig, training: TrainingConfig = None) -> dict:
    config.require("corpus")
    training = training or TrainingConfig()
    registry = load_registry(config.registry)
    psl = load_snapshot()
    snapshots, _ = _load_corpus(config, psl)
    if not snapshots:
        raise DataError("corpus is empty")
    feature_map = _all_features(registry, snapshots, config.parallelism)

    domain_labels = {
        s.domain: classifier.domain_label(s, config.ga_endpoints) for s in snapshots
    }

    request_examples = []
    for snapshot in snapshots:
        for index, (_, vector) in enumerate(feature_map[snapshot.domain].request_vectors):
            request_examples.append(LabeledExample(
                key=(snapshot.domain, index),
                features=vector.bits,
                label=classifier.request_label(snapshot.requests[index], config.ga_endpoints),
            ))

    def domain_examples(selector):
        return [
            LabeledExample(
                key=s.domain,
                features=selector(feature_map[s.domain]),
                label=domain_labels[s.domain],
            )
            for s in snapshots
        ]

    example_sets = {
        "request_level": request_examples,
        "request_domain": domain_examples(lambda f: f.domain_request_vector.bits),
        "cookie": domain_examples(lambda f: f.cookie_vector.bits),
        "window": domain_examples(lambda f: f.window_vector.bits),
        "combined": domain_examples(lambda f: f.combined_vector),
    }
    template_id_sets = {
        "request_level": _qualified_ids(registry, "query_param"),
        "request_domain": _qualified_ids(registry, "query_param"),
        "cookie": _qualified_ids(registry, "cookie"),
        "window": _qualified_ids(registry, "window_var"),
        "combined": (_qualified_ids(registry, "query_param")
                     + _qualified_ids(registry, "cookie")
                     + _qualified_ids(registry, "window_var")),
    }

    models = {}
    metrics = {}
    for tag, examples in example_sets.items():
        model = train_lr(
            examples, config=training, modality_tag=tag,
            registry_version=registry.version, template_ids=template_id_sets[tag],
        )
        probs = [predict_proba(model, e.features) for e in examples]
        labels = [e.label for e in examples]
        threshold, report = sweep_threshold(probs, labels)
        models[tag] = replace(model, threshold=threshold)
        metrics[tag] = _metrics_obj(report)

    base_examples = {tag: example_sets[tag] for tag in ("request_domain", "cookie", "window")}
    meta = train_meta(models, base_examples, config=training)
    meta_examples = []
    for snapshot in snapshots:
        feats = feature_map[snapshot.domain]
        probas = (
            predict_proba(models["request_domain"], feats.domain_request_vector.bits),
            predict_proba(models["cookie"], feats.cookie_vector.bits),
            predict_proba(models["window"], feats.window_vector.bits),
        )
        meta_examples.append(LabeledExample(
            key=snapshot.domain, features=probas, label=domain_labels[snapshot.domain],
        ))
    meta_probs = [predict_proba(meta, e.features) for e in meta_examples]
    meta_labels = [e.label for e in meta_examples]
    meta_threshold, meta_report = sweep_threshold(meta_probs, meta_labels)
    models["meta"] = replace(meta, threshold=meta_threshold)
    metrics["meta"] = _metrics_obj(meta_report)

    positives = sum(domain_labels.values())
    return {
        "models": {tag: model_to_obj(model) for tag, model in models.items()},
        "metrics": metrics,
        "labels": {"positive": positives, "negative": len(snapshots) - positives},
    }


def _load_models(models_input) -> dict:
    """Accepts {tag: artifact-dict}, {tag: path}, or a directory path."""
    loaded = {}
    if isinstance(models_input, str):
        if not os.path.isdir(models_input):
            raise ConfigError(f"models directory not found: {models_input}")
        for tag, filename in MODEL_FILENAMES.items():
            path = os.path.join(models_input, filename)
            if os.path.exists(path):
                loaded[tag] = import_model(path)
    elif isinstance(models_input, dict):
        for tag, value in models_input.items():
            if tag not in classifier.MODEL_TAGS:
                raise ConfigError(f"unknown model tag {tag!r}")
            loaded[tag] = model_from_obj(value) if isinstance(value, dict) else import_model(value)
    else:
        raise ConfigError("models must be a directory path or a tag-to-artifact mapping")
    if not loaded:
        raise ConfigError("no model artifacts found")
    return loaded


def _scrub_hosts(path) -> tuple:
    with open(path, encoding="utf-8") as f:
        return tuple(
            line.strip().lower() for line in f
            if line.strip() and not line.strip().startswith("#")
        )


def run_classify(config: PipelineConfig, models_input) -> dict:
    config.require("corpus")
    registry = load_registry(config.registry)
    models = _load_models(models_input)
    for model in models.values():
        check_registry_compatible(model, registry)
    psl = load_snapshot()
    snapshots, _ = _load_corpus(config, psl)
    feature_map = _all_features(registry, snapshots, config.parallelism)

    matched_ids = {
        "request_domain": lambda f, r: [
            tid for tid, bit in zip(r.modality_ids("query_param"),
                                    f.domain_request_vector.bits) if bit
        ],
        "cookie": lambda f, r: [
            tid for tid, bit in zip(r.modality_ids("cookie"), f.cookie_vector.bits) if bit
        ],
        "window": lambda f, r: [
            tid for tid, bit in zip(r.modality_ids("window_var"), f.window_vector.bits) if bit
        ],
        "combined": lambda f, r: [
            tid for tid, bit in zip(
                _qualified_ids(r, "query_param") + _qualified_ids(r, "cookie")
                + _qualified_ids(r, "window_var"),
                f.combined_vector,
            ) if bit
        ],
        "meta": lambda f, r: [],
    }
    vector_of = {
        "request_domain": lambda f: f.domain_request_vector.bits,
        "cookie": lambda f: f.cookie_vector.bits,
        "window": lambda f: f.window_vector.bits,
        "combined": lambda f: f.combined_vector,
    }

    domain_rows = []
    request_rows = []
    for snapshot in snapshots:
        feats = feature_map[snapshot.domain]
        base_probas = {}
        for tag in DOMAIN_LEVEL_TAGS:
            if tag == "meta":
                continue
            if tag not in models:
                continue
            proba = predict_proba(models[tag], vector_of[tag](feats))
            base_probas[tag] = proba
            threshold = config.thresholds[tag]
            domain_rows.append({
                "domain": snapshot.domain,
                "modality": tag,
                "probability": proba,
                "verdict": proba >= threshold,
                "matched_template_ids": matched_ids[tag](feats, registry),
            })
        if "meta" in models:
            missing = [t for t in ("request_domain", "cookie", "window") if t not in base_probas]
            if missing:
                raise ConfigError(f"meta verdicts need base models, missing: {missing}")
            meta_x = (base_probas["request_domain"], base_probas["cookie"],
                      base_probas["window"])
            proba = predict_proba(models["meta"], meta_x)
            domain_rows.append({
                "domain": snapshot.domain,
                "modality": "meta",
                "probability": proba,
                "verdict": proba >= config.thresholds["meta"],
                "matched_template_ids": [],
            })
        if "request_level" in models:
            for index, (_, vector) in enumerate(feats.request_vectors):
                proba = predict_proba(models["request_level"], vector.bits)
                request_rows.append({
                    "domain": snapshot.domain,
                    "url": snapshot.requests[index].url,
                    "probability": proba,
                    "verdict": proba >= config.thresholds["request_level"],
                })

    scrubbed = 0
    if config.denylist:
        deny = _scrub_hosts(config.denylist)
        kept = []
        for row in request_rows:
            host = request_host(row["url"])
            if row["verdict"] and classifier.host_matches_any(host, deny):
                scrubbed += 1
            else:
                kept.append(row)
        request_rows = kept

    return {"domain_rows": domain_rows, "request_rows": request_rows, "scrubbed": scrubbed}


def _read_ground_truth(source) -> dict:
    if isinstance(source, dict):
        labels = {}
        for domain, label in source.items():
            if label not in (0, 1):
                raise DataError(f"ground truth label for {domain!r} must be 0 or 1")
            labels[str(domain).strip().lower()] = int(label)
        if not labels:
            raise ConfigError("ground truth is empty")
        return labels
    path = source
    labels = {}
    try:
        f = open(path, encoding="utf-8", newline="")
    except FileNotFoundError:
        raise ConfigError(f"ground truth file not found: {path}") from None
    with f:
        for row_no, row in enumerate(csv.reader(f), start=1):
            if not row or row[0].strip().startswith("#"):
                continue
            if row_no == 1 and row[0].strip().lower() == "domain":
                continue
            if len(row) < 2:
                raise DataError(f"ground truth row {row_no}: expected domain,label")
            label = row[1].strip()
            if label not in ("0", "1"):
                raise DataError(f"ground truth row {row_no}: label must be 0 or 1")
            labels[row[0].strip().lower()] = int(label)
    if not labels:
        raise ConfigError("ground truth is empty")
    return labels


def run_evaluate(config: PipelineConfig, models_input, ground_truth) -> dict:
    config.require("corpus")
    registry = load_registry(config.registry)
    models = _load_models(models_input)
    for model in models.values():
        check_registry_compatible(model, registry)
    psl = load_snapshot()
    snapshots, _ = _load_corpus(config, psl)
    ground_truth = _read_ground_truth(ground_truth)

    by_domain = {s.domain: s for s in snapshots}
    warnings = []
    for domain in sorted(ground_truth):
        if domain not in by_domain:
            warnings.append(f"ground truth domain {domain!r} not in corpus, excluded")
    labeled = {d: ground_truth[d] for d in ground_truth if d in by_domain}
    if not labeled:
        raise DataError("no ground truth domain matches the corpus")

    stripped = {
        domain: strip_client_side(by_domain[domain], config.ga_endpoints,
                                  config.third_party_excludes)
        for domain in labeled
    }
    stripped_features = {
        domain: features.domain_features(registry, snapshot)
        for domain, snapshot in sorted(stripped.items())
    }
    storage_domains = {
        s.domain for s in storage_eval_filter(
            [by_domain[d] for d in sorted(labeled)], config.ga_endpoints
        )
    }

    per_model = {}
    extractor = {
        "request_domain": lambda f: f.domain_request_vector.bits,
        "cookie": lambda f: f.cookie_vector.bits,
        "window": lambda f: f.window_vector.bits,
        "combined": lambda f: f.combined_vector,
    }
    for tag, model in models.items():
        threshold = config.thresholds[tag]
        scored = replace(model, threshold=threshold)
        if tag == "request_level":
            examples = []
            for domain in sorted(labeled):
                for _, vector in stripped_features[domain].request_vectors:
                    examples.append(LabeledExample(
                        key=domain, features=vector.bits, label=labeled[domain]
                    ))
        elif tag in ("cookie", "window"):
            examples = [
                LabeledExample(
                    key=domain,
                    features=extractor[tag](stripped_features[domain]),
                    label=labeled[domain],
                )
                for domain in sorted(labeled) if domain in storage_domains
            ]
        elif tag == "meta":
            needed = ("request_domain", "cookie", "window")
            if any(t not in models for t in needed):
                warnings.append("meta skipped: base models missing")
                continue
            examples = []
            for domain in sorted(labeled):
                feats = stripped_features[domain]
                probas = (
                    predict_proba(models["request_domain"], feats.domain_request_vector.bits),
                    predict_proba(models["cookie"], feats.cookie_vector.bits),
                    predict_proba(models["window"], feats.window_vector.bits),
                )
                examples.append(LabeledExample(
                    key=domain, features=probas, label=labeled[domain]
                ))
        else:
            examples = [
                LabeledExample(
                    key=domain,
                    features=extractor[tag](stripped_features[domain]),
                    label=labeled[domain],
                )
                for domain in sorted(labeled)
            ]
        if not examples:
            warnings.append(f"{tag} skipped: no examples after filtering")
            continue
        report = evaluate_model(scored, examples)
        entry = _metrics_obj(report)
        entry["examples"] = len(examples)
        per_model[tag] = entry

    return {"per_model": per_model, "warnings": warnings}


def _positive_requests(verdicts: dict) -> list:
    rows = [r for r in verdicts.get("request_rows", []) if r.get("verdict")]
    return sorted(rows, key=lambda r: (r["domain"], r["url"]))


def run_characterize(config: PipelineConfig, verdicts: dict) -> dict:
    config.require("corpus")
    psl = load_snapshot()
    snapshots, _ = _load_corpus(config, psl)
    by_domain = {s.domain: s for s in snapshots}
    warnings = []

    positive = _positive_requests(verdicts)
    profiles = []
    endpoints = []  # (page domain, fqdn) pairs, deduplicated
    seen_profiles = set()
    seen_endpoints = set()
    for row in positive:
        domain = row["domain"]
        if domain not in by_domain:
            warnings.append(f"verdict domain {domain!r} not in corpus, skipped")
            continue
        profile = classify_routing(domain, row["url"], psl)
        key = (domain, profile.fqdn, profile.path)
        if key not in seen_profiles:
            seen_profiles.add(key)
            profiles.append(profile)
        endpoint = (domain, profile.fqdn)
        if endpoint not in seen_endpoints:
            seen_endpoints.add(endpoint)
            endpoints.append(endpoint)

    routing_counts = {"subdomain_based": 0, "path_based": 0}
    for profile in profiles:
        routing_counts[profile.routing] += 1
    total_profiles = len(profiles)
    routing_fractions = {
        kind: count / total_profiles if total_profiles else 0.0
        for kind, count in routing_counts.items()
    }

    dns_report = {"entries": [], "party_counts": {
        "first_party": 0, "third_party": 0, "direct_address": 0, "indeterminate": 0,
    }}
    infra_report = {"per_domain": {}, "counts": {
        "same_infrastructure": 0, "infrastructure_shift": 0, "indeterminate": 0,
    }}
    records = load_dns_records(config.dns_records) if config.dns_records else None
    mapping = load_asn_mapping(config.asn_mapping) if config.asn_mapping else None
    if records is None:
        warnings.append("no DNS records configured; DNS and ASN sections are indeterminate")

    sga_hosts_by_domain = {}
    for domain, fqdn in endpoints:
        sga_hosts_by_domain.setdefault(domain, []).append(fqdn)
        if records is None:
            dns_report["party_counts"]["indeterminate"] += 1
            dns_report["entries"].append({
                "domain": domain, "fqdn": fqdn, "record_kind": "indeterminate",
                "cname_party": "indeterminate", "chain": [], "addresses": [],
            })
            continue
        try:
            classification = classify_dns(fqdn, domain, records, psl)
        except DataError:
            warnings.append(f"no DNS record for {fqdn!r}; marked indeterminate")
            dns_report["party_counts"]["indeterminate"] += 1
            dns_report["entries"].append({
                "domain": domain, "fqdn": fqdn, "record_kind": "indeterminate",
                "cname_party": "indeterminate", "chain": [], "addresses": [],
            })
            continue
        if classification.record_kind == "cname_chain":
            dns_report["party_counts"][classification.cname_party] += 1
        else:
            dns_report["party_counts"]["direct_address"] += 1
        dns_report["entries"].append({
            "domain": domain,
            "fqdn": classification.fqdn,
            "record_kind": classification.record_kind,
            "cname_party": classification.cname_party,
            "chain": list(classification.chain),
            "addresses": list(classification.addresses),
        })

    for domain in sorted(sga_hosts_by_domain):
        verdict_kind = "indeterminate"
        if records is not None and mapping is not None:
            page_record = records.get(domain)
            page_asns = asn_set(
                (page_record or {}).get("a", []) + (page_record or {}).get("aaaa", []),
                mapping,
            ) if page_record else set()
            sga_addresses = []
            for fqdn in sga_hosts_by_domain[domain]:
                record = records.get(fqdn)
                if record:
                    sga_addresses.extend(record.get("a", []) + record.get("aaaa", []))
            sga_asns = asn_set(sga_addresses, mapping)
            verdict_kind = infra_shift(page_asns, sga_asns)
        infra_report["per_domain"][domain] = verdict_kind
        infra_report["counts"][verdict_kind] += 1

    taxonomy = KeyTaxonomy()
    key_request_counts = {"sst": {}, "standard": {}, "non_standard": {}}
    category_hits = {"sst": 0, "standard": 0, "non_standard": 0}
    for row in positive:
        categories = categorize_keys(row["url"], taxonomy)
        for category, keys in categories.items():
            if keys:
                category_hits[category] += 1
            for key in keys:
                bucket = key_request_counts[category]
                bucket[key] = bucket.get(key, 0) + 1
    positive_total = len(positive)
    key_report = {
        "request_counts": {
            category: dict(sorted(bucket.items()))
            for category, bucket in key_request_counts.items()
        },
        "category_request_fractions": {
            category: hits / positive_total if positive_total else 0.0
            for category, hits in category_hits.items()
        },
    }

    obfuscation_rows = []
    for snapshot in snapshots:
        for request in snapshot.requests:
            for finding in detect_obfuscation(request):
                obfuscation_rows.append({
                    "domain": snapshot.domain,
                    "url": finding.url,
                    "encoded_param_key": finding.encoded_param_key,
                    "decoded_payload": finding.decoded_payload,
                    "signature_hit": finding.signature_hit,
                })
    obfuscation_rows.sort(key=lambda r: (r["domain"], r["url"], r["encoded_param_key"]))

    deduped = []
    for warning in warnings:
        if warning not in deduped:
            deduped.append(warning)
    warnings = deduped

    return {
        "routing": {
            "counts": routing_counts,
            "fractions": routing_fractions,
            "stats": prefix_and_path_stats(profiles),
        },
        "dns": dns_report,
        "infrastructure": infra_report,
        "keys": key_report,
        "obfuscation": {
            "findings": obfuscation_rows,
            "domains": sorted({r["domain"] for r in obfuscation_rows}),
        },
        "warnings": warnings,
    }


def run_filter_compare(config: PipelineConfig, verdicts: dict) -> dict:
    config.require("corpus", "rules")
    psl = load_snapshot()
    snapshots, _ = _load_corpus(config, psl)
    by_domain = {s.domain: s for s in snapshots}
    stats = load_rules(config.rules)

    # replay classifier-positive requests plus obfuscation-scan hits; the
    # encoded endpoints are exactly the ones generic rules tend to miss
    selected = {}
    for row in _positive_requests(verdicts):
        selected.setdefault(row["domain"], set()).add(row["url"])
    for snapshot in snapshots:
        for request in snapshot.requests:
            if detect_obfuscation(request):
                selected.setdefault(snapshot.domain, set()).add(request.url)

    requests_by_domain = {}
    missing = []
    for domain in sorted(selected):
        snapshot = by_domain.get(domain)
        if snapshot is None:
            missing.append(domain)
            continue
        flag_by_url = {}
        for request in snapshot.requests:
            flag_by_url.setdefault(request.url, request.is_third_party)
        contexts = []
        for url in sorted(selected[domain]):
            contexts.append(RequestContext(
                url=url,
                resource_type="xmlhttprequest",
                is_third_party=flag_by_url.get(url, False),
                page_domain=domain,
            ))
        requests_by_domain[domain] = contexts

    report = coverage(stats.rules, requests_by_domain)
    return {
        "total": report.total,
        "blocked": report.blocked,
        "blocked_fraction": report.blocked_fraction,
        "rule_hits": dict(sorted(report.rule_hits.items())),
        "domains_with_zero_blocks": list(report.domains_with_zero_blocks),
        "unsupported_rules": list(report.unsupported_rules),
        "skipped_rules": [
            {"raw": marker.raw, "reason": marker.reason} for marker in stats.skipped
        ],
        "warnings": [f"verdict domain {d!r} not in corpus, skipped" for d in missing],
    }


def run_decode_scan(config: PipelineConfig) -> dict:
    config.require("corpus")
    psl = load_snapshot()
    snapshots, _ = _load_corpus(config, psl)
    rows = []
    for snapshot in snapshots:
        for request in snapshot.requests:
            for finding in detect_obfuscation(request):
                rows.append({
                    "domain": snapshot.domain,
                    "url": finding.url,
                    "encoded_param_key": finding.encoded_param_key,
                    "decoded_payload": finding.decoded_payload,
                    "signature_hit": finding.signature_hit,
                })
    rows.sort(key=lambda r: (r["domain"], r["url"], r["encoded_param_key"]))
    return {"findings": rows}


def run_export_model(source) -> dict:
    """Validating re-export: import the artifact and emit its canonical form."""
    if isinstance(source, dict):
        return model_to_obj(model_from_obj(source))
    return model_to_obj(import_model(source))
