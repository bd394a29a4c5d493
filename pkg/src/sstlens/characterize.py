"""Deployment characterization: routing, DNS/ASN, payload keys, obfuscation.

Covers how a detected server-side endpoint is wired into a site: whether
tracking is routed through a dedicated subdomain or a path on the main host,
whether the endpoint resolves through a CNAME chain into third-party
infrastructure or to direct addresses, whether its network shifts ASNs
relative to the page domain, how its query keys split into standard /
"sst."-prefixed / non-standard groups, and whether payloads are base64
obfuscated.

DNS answers come from an ingested JSONL record set by default (one object
per line: fqdn, cname_chain, a, aaaa); a live mode over the system resolver
exists behind an explicit flag. ASN data is an ingested "cidr,asn" CSV.
"""

import base64
import binascii
import csv
import ipaddress
import socket
from dataclasses import dataclass
from urllib.parse import unquote, urlsplit

from .errors import ConfigError, DataError, NoRegistrableDomain
from .psl import PublicSuffixList, registrable_domain

ENCODED_SIGNATURE = "L2cvY29sbGVjdD92PTImdGlkPUct"
DECODED_SIGNATURE_PREFIX = "/g/collect"
DECODED_SIGNATURE_MARK = "v=2&tid=G-"

SST_PREFIX = "sst."

# keys named by the protocol itself plus the bundled query-template ids
STANDARD_KEYS = frozenset({
    "tid", "cid", "gtm", "tag_exp", "gcd", "sid", "_p", "ul", "en", "gcs",
    "dl", "_s", "v",
    "pscdl", "tfd", "uaa", "uab", "uafvl", "uap", "uapv", "_gid", "_u",
    "_eu", "tcfd", "ep.user_agent",
})


@dataclass(frozen=True)
class EndpointProfile:
    fqdn: str
    registrable: str
    routing: str  # subdomain_based | path_based
    subdomain_prefix: str  # leftmost label, None for path_based
    path: str
    last_segment: str


@dataclass(frozen=True)
class DnsClassification:
    fqdn: str
    record_kind: str  # cname_chain | direct_address
    chain: tuple
    cname_party: str  # first_party | third_party | not_applicable
    addresses: tuple


@dataclass(frozen=True)
class KeyTaxonomy:
    standard: frozenset = STANDARD_KEYS
    sst_prefix: str = SST_PREFIX


@dataclass(frozen=True)
class ObfuscationFinding:
    url: str
    encoded_param_key: str
    decoded_payload: str
    signature_hit: bool


def classify_routing(page_domain: str, request_url: str, psl: PublicSuffixList) -> EndpointProfile:
    """Path-based only for the page apex or its www host; subdomain-based otherwise."""
    parts = urlsplit(request_url)
    host = parts.hostname
    if parts.scheme not in ("http", "https") or not host:
        raise DataError(f"not an absolute http(s) URL: {request_url!r}")
    try:
        registrable = registrable_domain(host, psl)
    except NoRegistrableDomain:
        registrable = host
    path = parts.path or "/"
    last_segment = path.rstrip("/").rsplit("/", 1)[-1]
    path_based = registrable == page_domain and host in (page_domain, "www." + page_domain)
    return EndpointProfile(
        fqdn=host,
        registrable=registrable,
        routing="path_based" if path_based else "subdomain_based",
        subdomain_prefix=None if path_based else host.split(".", 1)[0],
        path=path,
        last_segment=last_segment,
    )


def prefix_and_path_stats(profiles) -> dict:
    """Frequency tables over endpoint profiles; fractions are over all profiles."""
    total = len(profiles)
    prefix_counts = {}
    path_counts = {}
    last_segment_counts = {}
    for profile in profiles:
        if profile.routing == "subdomain_based" and profile.subdomain_prefix:
            prefix_counts[profile.subdomain_prefix] = (
                prefix_counts.get(profile.subdomain_prefix, 0) + 1
            )
        path_counts[profile.path] = path_counts.get(profile.path, 0) + 1
        last_segment_counts[profile.last_segment] = (
            last_segment_counts.get(profile.last_segment, 0) + 1
        )
    def fractions(counts):
        return {k: v / total for k, v in counts.items()} if total else {}
    return {
        "total": total,
        "prefix_counts": dict(sorted(prefix_counts.items())),
        "path_counts": dict(sorted(path_counts.items())),
        "last_segment_counts": dict(sorted(last_segment_counts.items())),
        "prefix_fractions": fractions(prefix_counts),
        "path_fractions": fractions(path_counts),
        "last_segment_fractions": fractions(last_segment_counts),
        "collect_fraction": (last_segment_counts.get("collect", 0) / total) if total else 0.0,
    }


def load_dns_records(path) -> dict:
    """Ingest a DNS record JSONL file into {fqdn: {cname_chain, a, aaaa}}."""
    import json
    records = {}
    try:
        f = open(path, encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"DNS records file not found: {path}") from None
    with f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except ValueError:
                raise DataError(f"DNS records line {line_no}: malformed JSON") from None
            if "fqdn" not in obj:
                raise DataError(f"DNS records line {line_no}: missing fqdn")
            records[obj["fqdn"].lower().rstrip(".")] = {
                "cname_chain": [c.lower().rstrip(".") for c in obj.get("cname_chain", [])],
                "a": list(obj.get("a", [])),
                "aaaa": list(obj.get("aaaa", [])),
            }
    return records


def resolve_live(fqdn: str, timeout: float = 5.0) -> dict:
    """System-resolver lookup shaped like one ingested record. Opt-in only."""
    socket.setdefaulttimeout(timeout)
    try:
        canonical, aliases, addresses = socket.gethostbyname_ex(fqdn)
    except OSError as err:
        raise DataError(f"resolution failed for {fqdn!r}: {err}") from None
    chain = []
    if canonical.lower().rstrip(".") != fqdn.lower().rstrip("."):
        # the resolver reports the canonical name; intermediate aliases other
        # than the query name are not individually ordered, so record the
        # canonical target as the chain end
        chain = [canonical.lower().rstrip(".")]
    aaaa = []
    try:
        for info in socket.getaddrinfo(fqdn, None, socket.AF_INET6):
            address = info[4][0]
            if address not in aaaa:
                aaaa.append(address)
    except OSError:
        pass
    return {"cname_chain": chain, "a": list(addresses), "aaaa": aaaa}


def classify_dns(fqdn: str, page_domain: str, records: dict,
                 psl: PublicSuffixList) -> DnsClassification:
    """CNAME chain vs direct address; chain party by final-target registrable."""
    key = fqdn.lower().rstrip(".")
    if key not in records:
        raise DataError(f"no DNS record for {fqdn!r}")
    record = records[key]
    chain = tuple(record.get("cname_chain", []))
    addresses = tuple(record.get("a", [])) + tuple(record.get("aaaa", []))
    if chain:
        final = chain[-1]
        try:
            final_registrable = registrable_domain(final, psl)
        except NoRegistrableDomain:
            final_registrable = final
        party = "first_party" if final_registrable == page_domain else "third_party"
        return DnsClassification(
            fqdn=key, record_kind="cname_chain", chain=chain,
            cname_party=party, addresses=addresses,
        )
    return DnsClassification(
        fqdn=key, record_kind="direct_address", chain=(),
        cname_party="not_applicable", addresses=addresses,
    )


def load_asn_mapping(path) -> list:
    """Ingest a "cidr,asn" CSV into a list of (network, asn) pairs."""
    mapping = []
    seen = set()
    try:
        f = open(path, encoding="utf-8", newline="")
    except FileNotFoundError:
        raise ConfigError(f"ASN mapping file not found: {path}") from None
    with f:
        for row_no, row in enumerate(csv.reader(f), start=1):
            if not row or row[0].strip().startswith("#"):
                continue
            if row_no == 1 and row[0].strip().lower() == "cidr":
                continue
            if len(row) < 2:
                raise DataError(f"ASN mapping row {row_no}: expected cidr,asn")
            try:
                network = ipaddress.ip_network(row[0].strip())
            except ValueError as err:
                raise DataError(f"ASN mapping row {row_no}: {err}") from None
            if network in seen:
                raise DataError(f"ASN mapping row {row_no}: duplicate prefix {network}")
            seen.add(network)
            try:
                asn = int(row[1])
            except ValueError:
                raise DataError(f"ASN mapping row {row_no}: ASN must be an integer") from None
            mapping.append((network, asn))
    return mapping


def asn_lookup(ip: str, mapping) -> int:
    """ASN of the longest prefix containing ip; None when uncovered."""
    try:
        address = ipaddress.ip_address(ip)
    except ValueError as err:
        raise DataError(f"malformed IP {ip!r}: {err}") from None
    best = None
    best_len = -1
    for network, asn in mapping:
        if network.version != address.version:
            continue
        if address in network and network.prefixlen > best_len:
            best = asn
            best_len = network.prefixlen
    return best


def asn_set(addresses, mapping) -> set:
    """ASNs of all mappable addresses; unmapped addresses contribute nothing."""
    found = set()
    for address in addresses:
        asn = asn_lookup(address, mapping)
        if asn is not None:
            found.add(asn)
    return found


def infra_shift(page_asns, sga_asns) -> str:
    """same_infrastructure iff ASN sets intersect; unknown sides are indeterminate."""
    if not page_asns or not sga_asns:
        return "indeterminate"
    return "same_infrastructure" if set(page_asns) & set(sga_asns) else "infrastructure_shift"


def query_keys(url: str) -> list:
    """Distinct query keys in first-appearance order, percent-decoded once."""
    parts = urlsplit(url)
    if not parts.query:
        return []
    keys = []
    seen = set()
    for pair in parts.query.split("&"):
        key, _, _ = pair.partition("=")
        key = unquote(key)
        if key and key not in seen:
            seen.add(key)
            keys.append(key)
    return keys


def categorize_keys(request_url: str, taxonomy: KeyTaxonomy = KeyTaxonomy()) -> dict:
    """Partition the URL's distinct keys: sst prefix, then standard, else non_standard."""
    result = {"sst": [], "standard": [], "non_standard": []}
    for key in query_keys(request_url):
        if key.startswith(taxonomy.sst_prefix):
            result["sst"].append(key)
        elif key in taxonomy.standard:
            result["standard"].append(key)
        else:
            result["non_standard"].append(key)
    return result


def _try_base64(candidate: str):
    stripped = candidate.strip()
    if len(stripped) < 4:
        return None
    padded = stripped + "=" * (-len(stripped) % 4)
    # second attempt maps the urlsafe alphabet back to standard before decoding
    for text in (padded, padded.replace("-", "+").replace("_", "/")):
        try:
            return base64.b64decode(text, validate=True)
        except (binascii.Error, ValueError):
            continue
    return None


def _printable_fraction(raw: bytes) -> float:
    if not raw:
        return 0.0
    printable = sum(1 for b in raw if 0x20 <= b <= 0x7E or b in (0x09, 0x0A, 0x0D))
    return printable / len(raw)


def _decode_text(raw: bytes) -> str:
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError:
        return raw.decode("latin-1")


def detect_obfuscation(request) -> list:
    """Scan query values for base64-encoded default-path payloads."""
    url = request.url if hasattr(request, "url") else request
    parts = urlsplit(url)
    if not parts.query:
        return []
    findings = []
    for pair in parts.query.split("&"):
        key, _, raw_value = pair.partition("=")
        raw_hit = ENCODED_SIGNATURE in raw_value
        decoded_payload = ""
        flagged = raw_hit
        decoded = _try_base64(unquote(raw_value))
        if decoded is not None and len(decoded) >= 16 and _printable_fraction(decoded) >= 0.9:
            text = _decode_text(decoded)
            if text.startswith(DECODED_SIGNATURE_PREFIX) or DECODED_SIGNATURE_MARK in text:
                decoded_payload = text
                flagged = True
        signature_hit = raw_hit or decoded_payload.startswith(
            DECODED_SIGNATURE_PREFIX + "?" + DECODED_SIGNATURE_MARK
        )
        if flagged:
            findings.append(ObfuscationFinding(
                url=url,
                encoded_param_key=unquote(key),
                decoded_payload=decoded_payload,
                signature_hit=signature_hit,
            ))
    return findings
