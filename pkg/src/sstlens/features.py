"""Binary feature extraction over snapshots, per modality and granularity.

Each vector has one bit per template, in registry order: bit i is 1 iff
template i matched at least one value of that modality. Query parameter
values are percent-decoded exactly once before matching; repeated keys are
each evaluated. The domain-level request vector is the bitwise OR of all
per-request vectors, and the combined vector is the concatenation
[request, cookie, window] of the three domain-level vectors (length 38 for
the bundled registry).
"""

from dataclasses import dataclass
from urllib.parse import unquote, urlsplit

from .corpus import DomainSnapshot, serialize_cookies
from .errors import DataError
from .templates import TemplateRegistry

COMBINED_ORDER = ("query_param", "cookie", "window_var")


@dataclass(frozen=True)
class FeatureVector:
    modality: str
    bits: tuple
    registry_version: str

    def __post_init__(self):
        if any(b not in (0, 1) for b in self.bits):
            raise DataError("feature bits must be 0/1")


@dataclass(frozen=True)
class DomainFeatures:
    domain: str
    request_vectors: tuple  # (request index, FeatureVector) pairs
    domain_request_vector: FeatureVector
    cookie_vector: FeatureVector
    window_vector: FeatureVector
    combined_vector: tuple  # plain bits, [request, cookie, window]


def query_values(url: str) -> list:
    """Query parameter values, percent-decoded exactly once, in URL order."""
    try:
        parts = urlsplit(url)
    except ValueError:
        raise DataError(f"unparseable URL: {url!r}") from None
    if not parts.query:
        return []
    values = []
    for pair in parts.query.split("&"):
        # first "=" splits key from value; a bare key has the empty value
        _, _, value = pair.partition("=")
        values.append(unquote(value))
    return values


def _match_bits(registry, modality, values) -> tuple:
    templates = registry.by_modality[modality]
    bits = [0] * len(templates)
    for value in values:
        for i, template in enumerate(templates):
            if bits[i]:
                continue
            compiled = registry._compiled[(modality, template.id)]
            if template.anchored:
                if compiled.fullmatch(value) is not None:
                    bits[i] = 1
            elif compiled.search(value) is not None:
                bits[i] = 1
    return tuple(bits)


def request_features(registry: TemplateRegistry, request) -> FeatureVector:
    values = query_values(request.url if hasattr(request, "url") else request)
    return FeatureVector(
        modality="query_param",
        bits=_match_bits(registry, "query_param", values),
        registry_version=registry.version,
    )


def cookie_features(registry: TemplateRegistry, cookies) -> FeatureVector:
    values = [c.value for c in cookies]
    bits = list(_match_bits(registry, "cookie", values))
    # fragment (unanchored) cookie templates also see the serialized jar;
    # the bundled set has none, this path exists for custom registries
    templates = registry.by_modality["cookie"]
    if cookies and any(not t.anchored for t in templates):
        jar = serialize_cookies(cookies)
        for i, template in enumerate(templates):
            if not bits[i] and not template.anchored:
                if registry._compiled[("cookie", template.id)].search(jar) is not None:
                    bits[i] = 1
    return FeatureVector(modality="cookie", bits=tuple(bits), registry_version=registry.version)


def window_features(registry: TemplateRegistry, variables) -> FeatureVector:
    values = [v.serialized_value for v in variables if v.serialized_value is not None]
    return FeatureVector(
        modality="window_var",
        bits=_match_bits(registry, "window_var", values),
        registry_version=registry.version,
    )


def or_vectors(vectors, registry, modality="query_param") -> FeatureVector:
    width = len(registry.by_modality[modality])
    bits = [0] * width
    for vector in vectors:
        if len(vector.bits) != width:
            raise DataError("feature vector width mismatch in OR aggregation")
        for i, b in enumerate(vector.bits):
            if b:
                bits[i] = 1
    return FeatureVector(modality=modality, bits=tuple(bits), registry_version=registry.version)


def domain_features(registry: TemplateRegistry, snapshot: DomainSnapshot) -> DomainFeatures:
    request_vectors = tuple(
        (i, request_features(registry, r)) for i, r in enumerate(snapshot.requests)
    )
    domain_vector = or_vectors([v for _, v in request_vectors], registry, "query_param")
    cookie_vector = cookie_features(registry, snapshot.cookies)
    window_vector = window_features(registry, snapshot.window_variables)
    combined = domain_vector.bits + cookie_vector.bits + window_vector.bits
    return DomainFeatures(
        domain=snapshot.domain,
        request_vectors=request_vectors,
        domain_request_vector=domain_vector,
        cookie_vector=cookie_vector,
        window_vector=window_vector,
        combined_vector=combined,
    )


def bitstring(bits) -> str:
    return "".join(str(b) for b in bits)


def feature_rows(features: DomainFeatures) -> list:
    """Flat dump rows: domain, modality, granularity, registry_version, bitstring."""
    version = features.domain_request_vector.registry_version
    rows = [
        {
            "domain": features.domain,
            "modality": "query_param",
            "granularity": f"request:{i}",
            "registry_version": version,
            "bitstring": bitstring(vec.bits),
        }
        for i, vec in features.request_vectors
    ]
    for modality, vec in (
        ("query_param", features.domain_request_vector),
        ("cookie", features.cookie_vector),
        ("window_var", features.window_vector),
    ):
        rows.append({
            "domain": features.domain,
            "modality": modality,
            "granularity": "domain",
            "registry_version": version,
            "bitstring": bitstring(vec.bits),
        })
    rows.append({
        "domain": features.domain,
        "modality": "combined",
        "granularity": "domain",
        "registry_version": version,
        "bitstring": bitstring(features.combined_vector),
    })
    return rows
