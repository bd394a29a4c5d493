"""Crawl-data model and JSONL corpus ingestion.

One crawled site is a DomainSnapshot: its network requests, cookies, and a
dump of window variables. Corpora are JSON Lines files, one snapshot object
per line, with exactly these fields:

    domain, requests[{url, method, initiator_domain, initiator_script,
    is_third_party, timestamp_ms}], cookies[{name, value, domain, path}],
    window_variables[{name, serialized_value}]

Unknown request initiators are the literal string "unknown". A window
variable whose value could not be serialized carries null.
"""

import json
from dataclasses import dataclass
from urllib.parse import urlsplit

from .errors import DataError, NoRegistrableDomain
from .psl import PublicSuffixList, load_snapshot, public_suffix, registrable_domain

__all__ = [
    "UNKNOWN",
    "NetworkRequest",
    "CookieRecord",
    "WindowVariable",
    "DomainSnapshot",
    "IngestResult",
    "ingest_corpus",
    "write_corpus",
    "serialize_cookies",
    "registrable_domain",
    "public_suffix",
    "load_snapshot",
    "PublicSuffixList",
]

UNKNOWN = "unknown"


@dataclass(frozen=True)
class NetworkRequest:
    url: str
    method: str
    initiator_domain: str  # hostname or UNKNOWN
    initiator_script: str  # script filename or UNKNOWN
    is_third_party: bool
    timestamp_ms: int

    def host(self) -> str:
        return request_host(self.url)


@dataclass(frozen=True)
class CookieRecord:
    name: str
    value: str
    domain: str
    path: str


@dataclass(frozen=True)
class WindowVariable:
    name: str
    serialized_value: str  # JSON text, or None when unserializable


@dataclass(frozen=True)
class DomainSnapshot:
    domain: str
    requests: tuple
    cookies: tuple
    window_variables: tuple


@dataclass(frozen=True)
class IngestResult:
    snapshots: tuple
    skipped: tuple  # (line number, reason) pairs, non-strict mode only

    @property
    def skip_count(self) -> int:
        return len(self.skipped)


def request_host(url: str) -> str:
    parts = urlsplit(url)
    if parts.scheme not in ("http", "https") or not parts.hostname:
        raise DataError(f"not an absolute http(s) URL: {url!r}")
    return parts.hostname


def _require(obj, field, line_no):
    if not isinstance(obj, dict) or field not in obj:
        raise DataError(f"line {line_no}: missing required field {field!r}")
    return obj[field]


def _parse_request(obj, line_no) -> NetworkRequest:
    url = _require(obj, "url", line_no)
    method = _require(obj, "method", line_no)
    initiator_domain = _require(obj, "initiator_domain", line_no)
    initiator_script = _require(obj, "initiator_script", line_no)
    is_third_party = _require(obj, "is_third_party", line_no)
    timestamp_ms = _require(obj, "timestamp_ms", line_no)
    if not isinstance(url, str) or not isinstance(method, str) or not method:
        raise DataError(f"line {line_no}: request url/method must be non-empty strings")
    if not isinstance(is_third_party, bool):
        raise DataError(f"line {line_no}: is_third_party must be a boolean")
    if not isinstance(timestamp_ms, int) or isinstance(timestamp_ms, bool):
        raise DataError(f"line {line_no}: timestamp_ms must be an integer")
    request_host(url)  # raises on non-absolute or non-http(s) URLs
    return NetworkRequest(
        url=url,
        method=method,
        initiator_domain=UNKNOWN if initiator_domain is None else initiator_domain,
        initiator_script=UNKNOWN if initiator_script is None else initiator_script,
        is_third_party=is_third_party,
        timestamp_ms=timestamp_ms,
    )


def _parse_cookie(obj, line_no) -> CookieRecord:
    name = _require(obj, "name", line_no)
    value = _require(obj, "value", line_no)
    domain = _require(obj, "domain", line_no)
    path = _require(obj, "path", line_no)
    if not isinstance(name, str) or not name:
        raise DataError(f"line {line_no}: cookie name must be a non-empty string")
    if not all(isinstance(x, str) for x in (value, domain, path)):
        raise DataError(f"line {line_no}: cookie value/domain/path must be strings")
    return CookieRecord(name=name, value=value, domain=domain, path=path)


def _parse_window_variable(obj, line_no) -> WindowVariable:
    name = _require(obj, "name", line_no)
    serialized = _require(obj, "serialized_value", line_no)
    if not isinstance(name, str) or not name:
        raise DataError(f"line {line_no}: window variable name must be a non-empty string")
    if serialized is not None:
        if not isinstance(serialized, str):
            raise DataError(f"line {line_no}: serialized_value must be a string or null")
        try:
            json.loads(serialized)
        except ValueError:
            raise DataError(
                f"line {line_no}: serialized_value of {name!r} is not valid JSON text"
            ) from None
    return WindowVariable(name=name, serialized_value=serialized)


def _check_third_party_flag(request: NetworkRequest, domain: str, psl, line_no):
    host = request.host()
    try:
        expected = registrable_domain(host, psl) != domain
    except NoRegistrableDomain:
        # no shared registrable identity is possible, so third-party is expected
        expected = True
    if request.is_third_party != expected:
        raise DataError(
            f"line {line_no}: is_third_party={request.is_third_party} inconsistent "
            f"with host {host!r} on domain {domain!r}"
        )


def _check_cookie_domain(cookie: CookieRecord, domain: str, line_no):
    # first-party cookie domains must domain-match the snapshot domain
    stripped = cookie.domain.lstrip(".").lower()
    if stripped != domain and not stripped.endswith("." + domain):
        raise DataError(
            f"line {line_no}: cookie {cookie.name!r} domain {cookie.domain!r} "
            f"does not match snapshot domain {domain!r}"
        )


def parse_snapshot(obj, psl: PublicSuffixList, line_no: int = 0) -> DomainSnapshot:
    """Validate one decoded JSON object against the snapshot schema."""
    domain = _require(obj, "domain", line_no)
    if not isinstance(domain, str) or not domain:
        raise DataError(f"line {line_no}: domain must be a non-empty string")
    domain = domain.lower()
    if registrable_domain(domain, psl) != domain:
        raise DataError(f"line {line_no}: {domain!r} is not a registrable domain")
    requests = tuple(_parse_request(r, line_no) for r in _require(obj, "requests", line_no))
    cookies = tuple(_parse_cookie(c, line_no) for c in _require(obj, "cookies", line_no))
    window_variables = tuple(
        _parse_window_variable(w, line_no) for w in _require(obj, "window_variables", line_no)
    )
    for request in requests:
        _check_third_party_flag(request, domain, psl, line_no)
    for cookie in cookies:
        _check_cookie_domain(cookie, domain, line_no)
    return DomainSnapshot(
        domain=domain, requests=requests, cookies=cookies, window_variables=window_variables
    )


def ingest_corpus(path, strict: bool = True, psl: PublicSuffixList = None) -> IngestResult:
    """Read a JSONL corpus; strict mode aborts on the first invalid line."""
    if psl is None:
        psl = load_snapshot()
    snapshots = []
    skipped = []
    try:
        f = open(path, encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"corpus file not found: {path}") from None
    with f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except ValueError:
                if strict:
                    raise DataError(f"line {line_no}: malformed JSON") from None
                skipped.append((line_no, "malformed JSON"))
                continue
            try:
                snapshots.append(parse_snapshot(obj, psl, line_no))
            except DataError as err:
                if strict:
                    raise
                skipped.append((line_no, str(err)))
    return IngestResult(snapshots=tuple(snapshots), skipped=tuple(skipped))


def snapshot_to_obj(snapshot: DomainSnapshot) -> dict:
    return {
        "domain": snapshot.domain,
        "requests": [
            {
                "url": r.url,
                "method": r.method,
                "initiator_domain": r.initiator_domain,
                "initiator_script": r.initiator_script,
                "is_third_party": r.is_third_party,
                "timestamp_ms": r.timestamp_ms,
            }
            for r in snapshot.requests
        ],
        "cookies": [
            {"name": c.name, "value": c.value, "domain": c.domain, "path": c.path}
            for c in snapshot.cookies
        ],
        "window_variables": [
            {"name": w.name, "serialized_value": w.serialized_value}
            for w in snapshot.window_variables
        ],
    }


def write_corpus(snapshots, path):
    """Serialize snapshots back to JSONL; ingest(write(x)) is a fixpoint."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for snapshot in snapshots:
            f.write(json.dumps(snapshot_to_obj(snapshot), ensure_ascii=False))
            f.write("\n")


def serialize_cookies(cookies) -> str:
    """Deterministic cookie-jar string: sorted by (name, domain), "; " joined."""
    # value/path break (name, domain) ties so the result is permutation-invariant
    ordered = sorted(cookies, key=lambda c: (c.name, c.domain, c.value, c.path))
    return "; ".join(f"{c.name}={c.value}" for c in ordered)
