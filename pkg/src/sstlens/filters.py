"""Adblock network-rule subset: parsing and first-match request replay.

Supported rule kinds: "||host^..." domain anchors, plain substring patterns,
and "/.../" regex literals. Patterns may use the "^" separator (any character
other than a letter, digit, or one of "_-.%", or the end of the address),
"*" wildcards, and "|" start/end anchors. Options after "$": third-party,
~third-party, xmlhttprequest, and domain=include|~exclude lists. Rules with
any other option are kept but never match, and are reported by the parser.
Comments (!), cosmetic rules (##, #@#, #?#), and exception rules (@@) are
skipped. Matching is case-insensitive, as in deployed filter engines, and
replayed requests default to the xmlhttprequest resource type.
"""

import re
from dataclasses import dataclass, field
from urllib.parse import urlsplit

from .errors import ConfigError, DataError

SEPARATOR_CLASS = r"(?:[^0-9a-zA-Z_.%-]|$)"

SUPPORTED_RESOURCE_OPTIONS = {"xmlhttprequest"}

_OPTIONS_RE = re.compile(r"\$([\w~-]+(?:=[^,\s]+)?(?:,[\w~-]+(?:=[^,\s]+)?)*)$")


@dataclass(frozen=True)
class FilterRule:
    raw: str
    kind: str  # domain_anchor | substring | regex_literal
    pattern: str  # pattern body without options
    anchor_host: str = None  # domain_anchor only
    tail: str = None  # domain_anchor only: pattern after the host
    third_party: bool = None  # True: third-party only, False: first-party only
    resource_types: tuple = ()  # empty: any type
    domain_includes: tuple = ()
    domain_excludes: tuple = ()
    unsupported_options: tuple = ()
    separator_aware: bool = False

    @property
    def unsupported(self) -> bool:
        return bool(self.unsupported_options)


@dataclass(frozen=True)
class SkipMarker:
    raw: str
    reason: str


@dataclass(frozen=True)
class RequestContext:
    url: str
    resource_type: str = "xmlhttprequest"
    is_third_party: bool = False
    page_domain: str = ""


@dataclass(frozen=True)
class CoverageReport:
    total: int
    blocked: int
    rule_hits: dict
    domains_with_zero_blocks: tuple
    unsupported_rules: tuple = ()

    @property
    def blocked_fraction(self) -> float:
        return self.blocked / self.total if self.total else 0.0


@dataclass
class ParseStats:
    rules: list = field(default_factory=list)
    skipped: list = field(default_factory=list)
    unsupported: list = field(default_factory=list)


def _parse_options(options_text: str):
    third_party = None
    resource_types = []
    includes = []
    excludes = []
    unsupported = []
    for option in options_text.split(","):
        option = option.strip()
        if not option:
            continue
        if option == "third-party":
            third_party = True
        elif option == "~third-party":
            third_party = False
        elif option in SUPPORTED_RESOURCE_OPTIONS:
            resource_types.append(option)
        elif option.startswith("domain="):
            for entry in option[len("domain="):].split("|"):
                entry = entry.strip().lower()
                if not entry:
                    continue
                if entry.startswith("~"):
                    excludes.append(entry[1:])
                else:
                    includes.append(entry)
        else:
            unsupported.append(option)
    return third_party, tuple(resource_types), tuple(includes), tuple(excludes), tuple(unsupported)


def parse_rule(line: str):
    """One rule line to a FilterRule, or a SkipMarker with the reason."""
    raw = line
    text = line.strip()
    if not text:
        return SkipMarker(raw=raw, reason="empty line")
    if text.startswith("!") or text.startswith("[Adblock"):
        return SkipMarker(raw=raw, reason="comment")
    for marker in ("#@#", "#?#", "##"):
        if marker in text:
            return SkipMarker(raw=raw, reason="cosmetic rule")
    if text.startswith("@@"):
        return SkipMarker(raw=raw, reason="exception rule")

    third_party = None
    resource_types = ()
    includes = ()
    excludes = ()
    unsupported = ()
    match = _OPTIONS_RE.search(text)
    if match and not (text.startswith("/") and text.endswith("/")):
        third_party, resource_types, includes, excludes, unsupported = _parse_options(
            match.group(1)
        )
        text = text[: match.start()]
    if not text:
        return SkipMarker(raw=raw, reason="empty pattern")

    common = {
        "third_party": third_party,
        "resource_types": resource_types,
        "domain_includes": includes,
        "domain_excludes": excludes,
        "unsupported_options": unsupported,
    }

    if len(text) > 2 and text.startswith("/") and text.endswith("/"):
        body = text[1:-1]
        try:
            re.compile(body)
        except re.error as err:
            return SkipMarker(raw=raw, reason=f"regex does not compile: {err}")
        return FilterRule(raw=raw, kind="regex_literal", pattern=body, **common)

    if text.startswith("||"):
        body = text[2:]
        split_at = len(body)
        for i, ch in enumerate(body):
            if ch in "/^*|?":
                split_at = i
                break
        host = body[:split_at].lower()
        tail = body[split_at:]
        if not host:
            return SkipMarker(raw=raw, reason="domain anchor without a host")
        return FilterRule(
            raw=raw, kind="domain_anchor", pattern=body, anchor_host=host,
            tail=tail, separator_aware="^" in tail, **common,
        )

    return FilterRule(
        raw=raw, kind="substring", pattern=text, separator_aware="^" in text, **common,
    )


def parse_rules(lines) -> ParseStats:
    stats = ParseStats()
    for line in lines:
        parsed = parse_rule(line)
        if isinstance(parsed, SkipMarker):
            stats.skipped.append(parsed)
            continue
        stats.rules.append(parsed)
        if parsed.unsupported:
            stats.unsupported.append(parsed)
    return stats


def load_rules(path) -> ParseStats:
    try:
        with open(path, encoding="utf-8") as f:
            return parse_rules(f.read().splitlines())
    except FileNotFoundError:
        raise ConfigError(f"rule file not found: {path}") from None


def _translate(pattern: str, anchor_start: bool = False) -> str:
    """Filter pattern text to a regex: ^ separator, * wildcard, | anchors."""
    out = []
    if pattern.startswith("|"):
        out.append(r"\A")
        pattern = pattern[1:]
    elif anchor_start:
        out.append(r"\A")
    end_anchor = False
    if pattern.endswith("|"):
        end_anchor = True
        pattern = pattern[:-1]
    for ch in pattern:
        if ch == "^":
            out.append(SEPARATOR_CLASS)
        elif ch == "*":
            out.append(".*")
        elif ch == "|":
            # interior pipes are literal in this subset
            out.append(r"\|")
        else:
            out.append(re.escape(ch))
    if end_anchor:
        out.append(r"\Z")
    return "".join(out)


def _host_matches(host: str, anchor: str) -> bool:
    return host == anchor or host.endswith("." + anchor)


def _domain_option_allows(rule: FilterRule, page_domain: str) -> bool:
    page = page_domain.lower()
    def hit(entries):
        return any(page == e or page.endswith("." + e) for e in entries)
    if rule.domain_includes and not hit(rule.domain_includes):
        return False
    if hit(rule.domain_excludes):
        return False
    return True


def rule_matches(rule: FilterRule, ctx: RequestContext) -> bool:
    if rule.unsupported:
        return False
    if rule.third_party is not None and ctx.is_third_party != rule.third_party:
        return False
    if rule.resource_types and ctx.resource_type not in rule.resource_types:
        return False
    if (rule.domain_includes or rule.domain_excludes) and not _domain_option_allows(
        rule, ctx.page_domain
    ):
        return False

    url = ctx.url
    if rule.kind == "regex_literal":
        return re.search(rule.pattern, url, re.IGNORECASE) is not None

    if rule.kind == "domain_anchor":
        try:
            parts = urlsplit(url)
            host = (parts.hostname or "").lower()
            port = parts.port
        except ValueError:
            return False
        if not host or not _host_matches(host, rule.anchor_host):
            return False
        if not rule.tail:
            return True
        # the tail must match immediately after the host within the URL
        rest = ""
        if port is not None:
            rest += f":{port}"
        rest += parts.path
        if parts.query:
            rest += "?" + parts.query
        if parts.fragment:
            rest += "#" + parts.fragment
        return re.match(_translate(rule.tail), rest, re.IGNORECASE) is not None

    return re.search(_translate(rule.pattern), url, re.IGNORECASE) is not None


def match_request(rules, ctx: RequestContext):
    """First matching rule in list order, or None."""
    for rule in rules:
        if rule_matches(rule, ctx):
            return rule
    return None


def coverage(rules, requests_by_domain: dict) -> CoverageReport:
    """First-match replay over {domain: [RequestContext, ...]}."""
    if isinstance(requests_by_domain, (list, tuple)):
        raise DataError("coverage expects requests grouped by domain")
    total = 0
    blocked = 0
    rule_hits = {}
    zero_block_domains = []
    for domain in sorted(requests_by_domain):
        domain_blocked = 0
        for ctx in requests_by_domain[domain]:
            total += 1
            matched = match_request(rules, ctx)
            if matched is not None:
                blocked += 1
                domain_blocked += 1
                rule_hits[matched.raw] = rule_hits.get(matched.raw, 0) + 1
        if domain_blocked == 0:
            zero_block_domains.append(domain)
    return CoverageReport(
        total=total,
        blocked=blocked,
        rule_hits=rule_hits,
        domains_with_zero_blocks=tuple(zero_block_domains),
        unsupported_rules=tuple(r.raw for r in rules if r.unsupported),
    )
