"""Public-suffix snapshot loading and registrable-domain (eTLD+1) extraction.

A pinned snapshot of the public-suffix list ships with the package in the
standard publicsuffix.org text format: one rule per line, ``//`` comments,
``*.`` wildcard rules, and ``!`` exception rules. Any standard-format list
file can be loaded in its place.
"""

from dataclasses import dataclass
from importlib import resources

from .errors import DataError, NoRegistrableDomain

SNAPSHOT_RESOURCE = "public_suffix_snapshot.dat"


@dataclass(frozen=True)
class PublicSuffixList:
    rules: frozenset
    exceptions: frozenset
    version: str


def load_snapshot(path=None) -> PublicSuffixList:
    """Parse a public-suffix list file; the bundled snapshot when path is None."""
    if path is None:
        text = resources.files("sstlens.data").joinpath(SNAPSHOT_RESOURCE).read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    rules = set()
    exceptions = set()
    version = "unversioned"
    for raw in text.splitlines():
        line = raw.strip()
        if line.startswith("//"):
            comment = line[2:].strip()
            if comment.startswith("version:"):
                version = comment[len("version:"):].strip()
            continue
        if not line:
            continue
        # whitespace terminates a rule per the list format
        rule = line.split()[0].lower()
        if rule.startswith("!"):
            exceptions.add(rule[1:])
        else:
            rules.add(rule)
    return PublicSuffixList(rules=frozenset(rules), exceptions=frozenset(exceptions), version=version)


def _normalize(hostname: str) -> list:
    host = hostname.strip().rstrip(".").lower()
    if not host:
        raise DataError(f"empty hostname {hostname!r}")
    labels = host.split(".")
    if any(not lab for lab in labels):
        raise DataError(f"hostname {hostname!r} has an empty label")
    return labels


def public_suffix(hostname: str, psl: PublicSuffixList) -> str:
    """Longest matching public suffix; unlisted TLDs fall back to the last label."""
    labels = _normalize(hostname)
    exception_suffix = None
    best_len = 0
    for i in range(len(labels)):
        candidate = ".".join(labels[i:])
        wildcard = ".".join(["*", *labels[i + 1:]])
        if candidate in psl.exceptions and exception_suffix is None:
            # exception rules prevail; the suffix is the rule minus its left label
            exception_suffix = ".".join(labels[i + 1:])
        if candidate in psl.rules or wildcard in psl.rules:
            matched = len(labels) - i
            if matched > best_len:
                best_len = matched
    if exception_suffix is not None:
        return exception_suffix
    if best_len:
        return ".".join(labels[len(labels) - best_len:])
    return labels[-1]


def registrable_domain(hostname: str, psl: PublicSuffixList) -> str:
    """eTLD+1 of hostname under the given snapshot."""
    labels = _normalize(hostname)
    suffix = public_suffix(hostname, psl)
    suffix_len = len(suffix.split(".")) if suffix else 0
    if len(labels) <= suffix_len:
        raise NoRegistrableDomain(f"{hostname!r} is a public suffix, no registrable domain")
    return ".".join(labels[len(labels) - suffix_len - 1:])
