"""Label bootstrapping, logistic-regression training, thresholds, and model I/O.

Labels come from client-side Google Analytics: a domain is positive iff any
of its requests went to a GA endpoint, and a request is positive iff it went
there itself. Six models share one trainer: request_level (per-request query
vectors), request_domain (OR-aggregated query vectors), cookie, window,
combined (the 38-bit concatenation), and meta (over the three base model
probabilities).

Training is full-batch gradient descent on mean log-loss plus an L2 penalty
on the weights (never the bias), zero-initialized and therefore
deterministic. Exported artifacts carry weights as 17-significant-digit
decimal strings so a reimport reproduces predictions bit-for-bit on the same
platform.
"""

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .corpus import DomainSnapshot
from .errors import ConfigError, DataError, VersionError

GA_ENDPOINTS_DEFAULT = ("google-analytics.com", "analytics.google.com")
THIRD_PARTY_EXCLUDES_DEFAULT = (
    "facebook.com",
    "pinterest.com",
    "sp.analytics.yahoo.com",
    "doubleclick.net",
    "googleadservices.com",
)

MODEL_TAGS = ("request_level", "request_domain", "cookie", "window", "combined", "meta")

# operating points when no sweep is run
DEFAULT_THRESHOLDS = {
    "request_level": 0.7,
    "request_domain": 0.4,
    "cookie": 0.4,
    "window": 0.4,
    "combined": 0.5,
    "meta": 0.5,
}

MODEL_FORMAT_VERSION = 1

# probability clamp keeping log-loss finite without disturbing comparisons
_P_FLOOR = 1e-300
_P_CEIL = 1.0 - 1e-16


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 0.1
    l2_lambda: float = 1e-3
    max_iters: int = 5000
    tolerance: float = 1e-8
    seed: int = 0


@dataclass(frozen=True)
class LabeledExample:
    key: object  # domain string, or (domain, request index)
    features: tuple  # bit tuple; None until a concrete vector is attached
    label: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise DataError(f"label must be 0 or 1, got {self.label!r}")


@dataclass(frozen=True)
class LRModel:
    weights: tuple
    bias: float
    threshold: float
    modality_tag: str
    registry_version: str
    template_ids: tuple
    training_config: TrainingConfig = field(default_factory=TrainingConfig)

    def __post_init__(self):
        if self.modality_tag not in MODEL_TAGS:
            raise ConfigError(f"unknown modality_tag {self.modality_tag!r}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError(f"threshold must be within [0,1], got {self.threshold}")
        if len(self.weights) != len(self.template_ids):
            raise DataError("weights length does not match template_ids length")


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    tn: int
    fn: int
    threshold: float


def host_matches_any(host: str, endpoints) -> bool:
    """True when host equals an endpoint or is one of its subdomains."""
    host = host.lower().rstrip(".")
    for endpoint in endpoints:
        endpoint = endpoint.lower().rstrip(".")
        if host == endpoint or host.endswith("." + endpoint):
            return True
    return False


def request_label(request, ga_endpoints=GA_ENDPOINTS_DEFAULT) -> int:
    return 1 if host_matches_any(request.host(), ga_endpoints) else 0


def domain_label(snapshot: DomainSnapshot, ga_endpoints=GA_ENDPOINTS_DEFAULT) -> int:
    return 1 if any(request_label(r, ga_endpoints) for r in snapshot.requests) else 0


def bootstrap_labels(snapshots, ga_endpoints=GA_ENDPOINTS_DEFAULT) -> list:
    """Domain-granularity labels; features are attached by the caller."""
    return [
        LabeledExample(key=s.domain, features=None, label=domain_label(s, ga_endpoints))
        for s in snapshots
    ]


def strip_client_side(
    snapshot: DomainSnapshot,
    ga_endpoints=GA_ENDPOINTS_DEFAULT,
    third_party_excludes=THIRD_PARTY_EXCLUDES_DEFAULT,
) -> DomainSnapshot:
    """Remove requests to GA endpoints and excluded third parties; keep the rest."""
    excluded = tuple(ga_endpoints) + tuple(third_party_excludes)
    kept = tuple(r for r in snapshot.requests if not host_matches_any(r.host(), excluded))
    return replace(snapshot, requests=kept)


def storage_eval_filter(snapshots, ga_endpoints=GA_ENDPOINTS_DEFAULT) -> list:
    """Only snapshots with zero client-side GA requests (cookie/window scoring)."""
    return [s for s in snapshots if domain_label(s, ga_endpoints) == 0]


def _sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return np.clip(out, _P_FLOOR, _P_CEIL)


def predict_proba(model: LRModel, x) -> float:
    xs = np.asarray(x, dtype=float)
    if xs.shape != (len(model.weights),):
        raise DataError(
            f"feature length {xs.shape} does not match model width {len(model.weights)}"
        )
    z = float(np.dot(np.asarray(model.weights, dtype=float), xs)) + model.bias
    return float(_sigmoid(np.array([z]))[0])


def _loss(X, y, w, b, l2, sample_weight):
    p = _sigmoid(X @ w + b)
    ll = -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))
    return float(np.mean(sample_weight * ll) + l2 * float(w @ w) / 2.0)


def train_lr(examples, config: TrainingConfig = None, modality_tag="request_domain",
             registry_version="", template_ids=None, class_weight=None,
             loss_trace=None) -> LRModel:
    """Full-batch gradient descent; stops at max_iters or gradient norm < tolerance."""
    if config is None:
        config = TrainingConfig()
    if not examples:
        raise DataError("cannot train on an empty example list")
    X = np.asarray([e.features for e in examples], dtype=float)
    y = np.asarray([e.label for e in examples], dtype=float)
    if np.isnan(X).any():
        raise DataError("NaN in feature matrix")
    classes = set(int(v) for v in y)
    if classes != {0, 1}:
        raise DataError(f"training needs both classes, got only {sorted(classes)}")
    n, d = X.shape
    if template_ids is None:
        template_ids = tuple(f"f{i}" for i in range(d))
    if len(template_ids) != d:
        raise DataError("template_ids length does not match feature width")

    if class_weight is None:
        sample_weight = np.ones(n)
    else:
        sample_weight = np.asarray([class_weight[int(v)] for v in y], dtype=float)

    w = np.zeros(d)
    b = 0.0
    lr = config.learning_rate
    l2 = config.l2_lambda
    for _ in range(config.max_iters):
        if loss_trace is not None:
            loss_trace.append(_loss(X, y, w, b, l2, sample_weight))
        p = _sigmoid(X @ w + b)
        residual = (p - y) * sample_weight
        grad_w = X.T @ residual / n + l2 * w
        grad_b = float(np.sum(residual)) / n
        grad_norm = math.sqrt(float(grad_w @ grad_w) + grad_b * grad_b)
        if grad_norm < config.tolerance:
            break
        w -= lr * grad_w
        b -= lr * grad_b
    if loss_trace is not None:
        loss_trace.append(_loss(X, y, w, b, l2, sample_weight))

    return LRModel(
        weights=tuple(float(v) for v in w),
        bias=float(b),
        threshold=DEFAULT_THRESHOLDS[modality_tag],
        modality_tag=modality_tag,
        registry_version=registry_version,
        template_ids=tuple(template_ids),
        training_config=config,
    )


def regularized_loss_and_grad(X, y, w, b, l2):
    """Analytic loss/gradient pair, exposed for finite-difference verification."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    n = X.shape[0]
    ones = np.ones(n)
    loss = _loss(X, y, w, b, l2, ones)
    p = _sigmoid(X @ w + b)
    grad_w = X.T @ (p - y) / n + l2 * w
    grad_b = float(np.sum(p - y)) / n
    return loss, grad_w, grad_b


def metrics_from(probs, labels, threshold: float) -> MetricsReport:
    tp = fp = tn = fn = 0
    for p, y in zip(probs, labels):
        verdict = p >= threshold
        if verdict and y == 1:
            tp += 1
        elif verdict and y == 0:
            fp += 1
        elif not verdict and y == 0:
            tn += 1
        else:
            fn += 1
    total = tp + fp + tn + fn
    accuracy = (tp + tn) / total if total else 0.0
    precision = tp / (tp + fp) if (tp + fp) else 0.0
    recall = tp / (tp + fn) if (tp + fn) else 0.0
    # single division keeps equal rational F1 values bit-identical, so the
    # threshold sweep's "smallest on ties" rule is not broken by rounding
    f1 = 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 0.0
    return MetricsReport(
        accuracy=accuracy, precision=precision, recall=recall, f1=f1,
        tp=tp, fp=fp, tn=tn, fn=fn, threshold=threshold,
    )


def sweep_threshold(probs, labels, grid_step: float = 0.1):
    """Smallest grid threshold in {step, ..., 1-step} maximizing F1."""
    if len(probs) != len(labels):
        raise DataError("probs and labels must have equal length")
    if not probs:
        raise DataError("cannot sweep an empty probability list")
    if not 0.0 < grid_step < 1.0:
        raise ConfigError(f"grid_step must be in (0,1), got {grid_step}")
    best = None
    i = 1
    while True:
        threshold = round(i * grid_step, 12)
        if threshold >= 1.0:
            break
        report = metrics_from(probs, labels, threshold)
        if best is None or report.f1 > best.f1:
            best = report
        i += 1
    return best.threshold, best


def evaluate(model: LRModel, examples) -> MetricsReport:
    probs = [predict_proba(model, e.features) for e in examples]
    labels = [e.label for e in examples]
    return metrics_from(probs, labels, model.threshold)


def train_meta(models: dict, examples_by_modality: dict,
               config: TrainingConfig = None) -> LRModel:
    """Meta model over [p_request_domain, p_cookie, p_window], aligned by domain."""
    base_order = ("request_domain", "cookie", "window")
    for tag in base_order:
        if tag not in models:
            raise ConfigError(f"meta training requires the {tag!r} base model")
        if tag not in examples_by_modality:
            raise DataError(f"meta training requires {tag!r} examples")
    keyed = {}
    for tag in base_order:
        keyed[tag] = {e.key: e for e in examples_by_modality[tag]}
    domain_sets = [set(keyed[tag]) for tag in base_order]
    if not (domain_sets[0] == domain_sets[1] == domain_sets[2]):
        raise DataError("meta training examples are misaligned across modalities")

    meta_examples = []
    for domain in sorted(domain_sets[0]):
        probas = tuple(
            predict_proba(models[tag], keyed[tag][domain].features) for tag in base_order
        )
        labels = {keyed[tag][domain].label for tag in base_order}
        if len(labels) != 1:
            raise DataError(f"conflicting labels for domain {domain!r}")
        meta_examples.append(LabeledExample(key=domain, features=probas, label=labels.pop()))

    registry_versions = {models[tag].registry_version for tag in base_order}
    return train_lr(
        meta_examples,
        config=config,
        modality_tag="meta",
        registry_version=registry_versions.pop() if len(registry_versions) == 1 else "",
        template_ids=tuple(f"proba:{tag}" for tag in base_order),
    )


def _fmt(value: float) -> str:
    return "%.17g" % value


def model_to_obj(model: LRModel) -> dict:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "modality_tag": model.modality_tag,
        "registry_version": model.registry_version,
        "template_ids": list(model.template_ids),
        "weights": [_fmt(w) for w in model.weights],
        "bias": _fmt(model.bias),
        "threshold": model.threshold,
        "training_config": {
            "learning_rate": model.training_config.learning_rate,
            "l2_lambda": model.training_config.l2_lambda,
            "max_iters": model.training_config.max_iters,
            "tolerance": model.training_config.tolerance,
            "seed": model.training_config.seed,
        },
    }


def export_model(model: LRModel, path):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(model_to_obj(model), f, indent=2)
        f.write("\n")


def model_from_obj(doc: dict) -> LRModel:
    for fname in ("format_version", "modality_tag", "registry_version",
                  "template_ids", "weights", "bias", "threshold", "training_config"):
        if fname not in doc:
            raise DataError(f"model artifact missing field {fname!r}")
    if doc["format_version"] != MODEL_FORMAT_VERSION:
        raise VersionError(
            f"unsupported model format_version {doc['format_version']!r}"
        )
    if len(doc["weights"]) != len(doc["template_ids"]):
        raise DataError("model weights length does not match template_ids")
    tc = doc["training_config"]
    config = TrainingConfig(
        learning_rate=tc["learning_rate"],
        l2_lambda=tc["l2_lambda"],
        max_iters=tc["max_iters"],
        tolerance=tc["tolerance"],
        seed=tc["seed"],
    )
    return LRModel(
        weights=tuple(float(w) for w in doc["weights"]),
        bias=float(doc["bias"]),
        threshold=float(doc["threshold"]),
        modality_tag=doc["modality_tag"],
        registry_version=doc["registry_version"],
        template_ids=tuple(doc["template_ids"]),
        training_config=config,
    )


def import_model(path) -> LRModel:
    try:
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"model file not found: {path}") from None
    except ValueError as err:
        raise DataError(f"model artifact is not valid JSON: {err}") from None
    return model_from_obj(doc)


def check_registry_compatible(model: LRModel, registry):
    if model.registry_version != registry.version:
        raise VersionError(
            f"model was trained against registry {model.registry_version!r}, "
            f"loaded registry is {registry.version!r}"
        )
