import base64
import ipaddress
import random

import pytest

import corpusgen
from sstlens.characterize import (
    DECODED_SIGNATURE_MARK,
    DECODED_SIGNATURE_PREFIX,
    ENCODED_SIGNATURE,
    KeyTaxonomy,
    asn_lookup,
    asn_set,
    categorize_keys,
    classify_dns,
    classify_routing,
    detect_obfuscation,
    infra_shift,
    load_asn_mapping,
    load_dns_records,
    prefix_and_path_stats,
    query_keys,
)
from sstlens.corpus import NetworkRequest
from sstlens.errors import ConfigError, DataError


def _request(url, third_party=False):
    return NetworkRequest(url=url, method="POST", initiator_domain=None,
                          initiator_script=None, is_third_party=third_party,
                          timestamp_ms=0)


def test_routing_subdomain(psl):
    profile = classify_routing("site.example", "https://sst.site.example/g/collect?v=2", psl)
    assert profile.routing == "subdomain_based"
    assert profile.subdomain_prefix == "sst"
    assert profile.path == "/g/collect"
    assert profile.last_segment == "collect"
    assert profile.registrable == "site.example"


def test_routing_path_based_apex_and_www(psl):
    apex = classify_routing("site.example", "https://site.example/track?v=2", psl)
    www = classify_routing("site.example", "https://www.site.example/track?v=2", psl)
    assert apex.routing == "path_based"
    assert www.routing == "path_based"
    assert apex.subdomain_prefix is None
    assert www.last_segment == "track"


def test_routing_deep_subdomain_is_not_path_based(psl):
    profile = classify_routing("site.example", "https://a.www.site.example/track", psl)
    assert profile.routing == "subdomain_based"
    assert profile.subdomain_prefix == "a"


def test_routing_other_registrable_is_subdomain_based(psl):
    profile = classify_routing("site.example", "https://collector.vendor.io/g/collect", psl)
    assert profile.routing == "subdomain_based"
    assert profile.registrable == "vendor.io"


def test_routing_rejects_relative_url(psl):
    with pytest.raises(DataError):
        classify_routing("site.example", "/g/collect?v=2", psl)


def test_prefix_and_path_stats(psl):
    profiles = [
        classify_routing("a.example", "https://sst.a.example/g/collect", psl),
        classify_routing("b.example", "https://sgtm.b.example/g/collect", psl),
        classify_routing("c.example", "https://www.c.example/track", psl),
    ]
    stats = prefix_and_path_stats(profiles)
    assert stats["total"] == 3
    assert stats["prefix_counts"] == {"sgtm": 1, "sst": 1}
    assert stats["path_counts"] == {"/g/collect": 2, "/track": 1}
    assert stats["collect_fraction"] == pytest.approx(2 / 3)
    assert stats["last_segment_fractions"]["track"] == pytest.approx(1 / 3)


def test_prefix_and_path_stats_empty():
    stats = prefix_and_path_stats([])
    assert stats["total"] == 0
    assert stats["collect_fraction"] == 0.0


def test_dns_classification(tmp_path, psl):
    fixture = corpusgen.characterize_fixture()
    path = tmp_path / "dns.jsonl"
    corpusgen.write_jsonl(path, fixture["dns_rows"])
    records = load_dns_records(path)

    third = classify_dns("sst.alpha.example", "alpha.example", records, psl)
    assert third.record_kind == "cname_chain"
    assert third.cname_party == "third_party"
    assert third.chain == ("collector.trackvendor.io",)

    first = classify_dns("sgtm.beta.example", "beta.example", records, psl)
    assert first.cname_party == "first_party"

    direct = classify_dns("www.gamma.example", "gamma.example", records, psl)
    assert direct.record_kind == "direct_address"
    assert direct.cname_party == "not_applicable"
    assert direct.addresses == ("10.0.3.5",)


def test_dns_missing_record_raises(tmp_path, psl):
    corpusgen.write_jsonl(tmp_path / "dns.jsonl", [])
    records = load_dns_records(tmp_path / "dns.jsonl")
    with pytest.raises(DataError, match="no DNS record"):
        classify_dns("ghost.example", "ghost.example", records, psl)


def test_asn_mapping_and_lookup(tmp_path):
    path = tmp_path / "asn.csv"
    corpusgen.write_lines(path, ["cidr,asn", "10.0.0.0/8,64496",
                                 "10.1.0.0/16,64497", "10.1.2.0/24,64498"])
    mapping = load_asn_mapping(path)
    # longest prefix wins
    assert asn_lookup("10.1.2.9", mapping) == 64498
    assert asn_lookup("10.1.9.9", mapping) == 64497
    assert asn_lookup("10.9.9.9", mapping) == 64496
    assert asn_lookup("192.0.2.1", mapping) is None
    assert asn_set(["10.1.2.9", "192.0.2.1"], mapping) == {64498}
    with pytest.raises(DataError):
        asn_lookup("not-an-ip", mapping)


def test_asn_mapping_validation(tmp_path):
    bad = tmp_path / "bad.csv"
    corpusgen.write_lines(bad, ["10.0.0.0/8,64496", "10.0.0.0/8,64497"])
    with pytest.raises(DataError, match="duplicate"):
        load_asn_mapping(bad)
    with pytest.raises(ConfigError, match="not found"):
        load_asn_mapping(tmp_path / "missing.csv")


def test_asn_lookup_matches_brute_force(tmp_path):
    rng = random.Random(41)
    lines = ["cidr,asn"]
    networks = []
    for i in range(60):
        base = ipaddress.ip_address(rng.getrandbits(32))
        prefix = rng.randint(8, 28)
        network = ipaddress.ip_network(f"{base}/{prefix}", strict=False)
        if any(network == n for n, _ in networks):
            continue
        networks.append((network, 64500 + i))
        lines.append(f"{network},{64500 + i}")
    path = tmp_path / "asn.csv"
    corpusgen.write_lines(path, lines)
    mapping = load_asn_mapping(path)
    for _ in range(2000):
        ip = ipaddress.ip_address(rng.getrandbits(32))
        best, best_len = None, -1
        for network, asn in networks:
            if ip in network and network.prefixlen > best_len:
                best, best_len = asn, network.prefixlen
        assert asn_lookup(str(ip), mapping) == best


def test_infra_shift():
    assert infra_shift({64496}, {64496, 64497}) == "same_infrastructure"
    assert infra_shift({64496}, {64497}) == "infrastructure_shift"
    assert infra_shift(set(), {64497}) == "indeterminate"
    assert infra_shift({64496}, set()) == "indeterminate"


def test_query_keys_order_and_decode():
    url = "https://h.example/c?v=2&tid=G-1&v=3&sst.tft=9&ep%2Ename=x&=skip"
    assert query_keys(url) == ["v", "tid", "sst.tft", "ep.name"]


def test_categorize_keys():
    url = "https://h.example/c?v=2&tid=G-1&sst.tft=9&sst.sw_exp=1&shoppe=1"
    cats = categorize_keys(url)
    assert cats["sst"] == ["sst.tft", "sst.sw_exp"]
    assert cats["standard"] == ["v", "tid"]
    assert cats["non_standard"] == ["shoppe"]


def test_categorize_keys_custom_taxonomy():
    taxonomy = KeyTaxonomy(standard=frozenset({"only"}), sst_prefix="x.")
    cats = categorize_keys("https://h.example/c?only=1&x.k=2&other=3", taxonomy)
    assert cats == {"sst": ["x.k"], "standard": ["only"], "non_standard": ["other"]}


def test_detect_obfuscation_roundtrip():
    payload = "/g/collect?" + corpusgen.collect_query("G-ABCDE12345", "site.example")
    value = base64.b64encode(payload.encode()).decode()
    findings = detect_obfuscation(_request(f"https://metrics.site.example/x/?p={value}"))
    assert len(findings) == 1
    finding = findings[0]
    assert finding.encoded_param_key == "p"
    assert finding.decoded_payload == payload
    assert finding.signature_hit is True
    assert finding.decoded_payload.startswith(DECODED_SIGNATURE_PREFIX)
    assert DECODED_SIGNATURE_MARK in finding.decoded_payload


def test_detect_obfuscation_urlsafe_alphabet():
    payload = "/g/collect?v=2&tid=G-ABCDE12345&dl=https%3A%2F%2Fx%3F~~~"
    value = base64.urlsafe_b64encode(payload.encode()).decode()
    assert ("-" in value) or ("_" in value)
    findings = detect_obfuscation(_request(f"https://h.example/x?e={value}"))
    assert [f.decoded_payload for f in findings] == [payload]


def test_detect_obfuscation_gates():
    # too short to be interesting even though it decodes
    short = base64.b64encode(b"/g/collect?v").decode()
    assert detect_obfuscation(_request(f"https://h.example/x?p={short}")) == []
    # decodes to binary garbage: printable fraction below the gate
    binary = base64.b64encode(bytes(range(2, 34))).decode()
    assert detect_obfuscation(_request(f"https://h.example/x?p={binary}")) == []
    # plain values that are not base64 at all
    assert detect_obfuscation(_request("https://h.example/x?p=hello%20world")) == []


def test_detect_obfuscation_requires_signature():
    # decodable, printable, long enough, yet free of any payload marker
    harmless = base64.b64encode(
        b"just a long harmless sentence that decodes fine but says nothing").decode()
    assert detect_obfuscation(_request(f"https://h.example/x?p={harmless}")) == []
    # raw value containing the encoded signature is flagged even unpadded
    raw = "xx" + ENCODED_SIGNATURE + "yy"
    findings = detect_obfuscation(_request(f"https://h.example/x?p={raw}"))
    assert len(findings) == 1
    assert findings[0].signature_hit is True


def test_encoded_signature_constant():
    assert base64.b64decode(ENCODED_SIGNATURE + "==").decode().startswith(
        DECODED_SIGNATURE_PREFIX)


def test_frozen_appendix_decodes(encoded_endpoints):
    assert encoded_endpoints["signature_encoded"] == ENCODED_SIGNATURE
    for entry in encoded_endpoints["endpoints"]:
        findings = detect_obfuscation(_request(entry["url"]))
        by_key = {f.encoded_param_key: f for f in findings}
        assert entry["encoded_param_key"] in by_key
        finding = by_key[entry["encoded_param_key"]]
        assert finding.decoded_payload == entry["decoded_payload"]
        assert finding.signature_hit is True
