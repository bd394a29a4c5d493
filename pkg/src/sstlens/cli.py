"""Command line client for the detection service.

Every subcommand builds a JSON request and posts it to the HTTP API. By
default the app runs in-process, so no server is needed; --base-url (or
SSTLENS_BASE_URL) points the same commands at a remote instance started
with `sstlens serve`.

Service error bodies carry {"detail": {"kind", "message"}}; the kind maps
onto exit codes: config errors exit 2, data errors 3, version conflicts 4.
"""

import json
import os
import sys
from datetime import datetime, timezone

import click
import httpx

from . import __version__
from .errors import ToolkitError
from .pipeline import MODEL_FILENAMES, _read_ground_truth

EXIT_BY_KIND = {"config": 2, "data": 3, "version": 4}


def _client(base_url):
    if base_url:
        return httpx.Client(base_url=base_url, timeout=600.0)
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        from fastapi.testclient import TestClient

    from .service import create_app

    return TestClient(create_app())


def _fail(kind: str, message: str):
    click.echo(f"error [{kind}]: {message}", err=True)
    sys.exit(EXIT_BY_KIND.get(kind, 1))


def _call(ctx, method: str, path: str, payload=None) -> dict:
    try:
        with _client(ctx.obj["base_url"]) as client:
            if method == "GET":
                response = client.get(path)
            else:
                response = client.post(path, json=payload)
    except ToolkitError as err:
        _fail(err.kind, str(err))
    except httpx.HTTPError as err:
        _fail("data", f"request failed: {err}")
    if response.status_code == 200:
        return response.json()
    try:
        detail = response.json().get("detail")
    except ValueError:
        detail = None
    if isinstance(detail, dict) and "kind" in detail:
        _fail(detail["kind"], detail.get("message", ""))
    _fail("data", f"HTTP {response.status_code}: {detail}")


def _config_obj(ctx, **overrides) -> dict:
    config = dict(ctx.obj["config"])
    for key, value in overrides.items():
        if value in (None, (), []):
            continue
        config[key] = value
    return config


def _parse_thresholds(pairs) -> dict:
    thresholds = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep:
            _fail("config", f"--threshold expects tag=value, got {pair!r}")
        try:
            thresholds[key.strip()] = float(value)
        except ValueError:
            _fail("config", f"--threshold value for {key!r} is not a number")
    return thresholds


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2)
        f.write("\n")


def _write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row) + "\n")


def _read_jsonl(path) -> list:
    rows = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def _finish_out(out_dir, command: str, outputs: list):
    # the sidecar is the one file allowed to differ between identical runs
    _write_json(os.path.join(out_dir, "run_meta.json"), {
        "command": command,
        "completed_at": datetime.now(timezone.utc).isoformat(),
        "outputs": sorted(outputs),
    })


def _load_model_artifacts(models_dir) -> dict:
    if not os.path.isdir(models_dir):
        _fail("config", f"models directory not found: {models_dir}")
    artifacts = {}
    for tag, filename in MODEL_FILENAMES.items():
        path = os.path.join(models_dir, filename)
        if os.path.exists(path):
            try:
                with open(path, encoding="utf-8") as f:
                    artifacts[tag] = json.load(f)
            except ValueError as err:
                _fail("data", f"model artifact {path} is not valid JSON: {err}")
    if not artifacts:
        _fail("config", f"no model_<tag>.json artifacts in {models_dir}")
    return artifacts


def _load_verdicts(verdicts_dir) -> dict:
    domain_path = os.path.join(verdicts_dir, "verdicts_domains.jsonl")
    request_path = os.path.join(verdicts_dir, "verdicts_requests.jsonl")
    if not os.path.exists(domain_path) or not os.path.exists(request_path):
        _fail("config", f"verdict files not found under {verdicts_dir}")
    return {
        "domain_rows": _read_jsonl(domain_path),
        "request_rows": _read_jsonl(request_path),
    }


@click.group()
@click.version_option(version=__version__, prog_name="sstlens")
@click.option("--base-url", envvar="SSTLENS_BASE_URL", default=None,
              help="Remote service URL; default runs the service in-process.")
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="JSON file with shared pipeline settings.")
@click.pass_context
def main(ctx, base_url, config_path):
    """Detect and characterize server-side Google Analytics in crawl data."""
    config = {}
    if config_path:
        try:
            with open(config_path, encoding="utf-8") as f:
                config = json.load(f)
        except FileNotFoundError:
            _fail("config", f"config file not found: {config_path}")
        except ValueError as err:
            _fail("config", f"config file is not valid JSON: {err}")
        if not isinstance(config, dict):
            _fail("config", "config file must hold a JSON object")
    ctx.obj = {"base_url": base_url, "config": config}


@main.command("ingest-validate")
@click.option("--corpus", type=click.Path(), required=True)
@click.option("--registry", type=click.Path(), default=None)
@click.option("--strict/--no-strict", default=True,
              help="Strict mode aborts on the first malformed line.")
@click.option("--out", type=click.Path(), default=None)
@click.pass_context
def ingest_validate(ctx, corpus, registry, strict, out):
    """Validate a crawl corpus and report its shape."""
    config = _config_obj(ctx, corpus=corpus, registry=registry, strict=strict)
    report = _call(ctx, "POST", "/ingest-validate", {"config": config})
    click.echo(
        f"domains={report['domains']} requests={report['requests']} "
        f"cookies={report['cookies']} window_variables={report['window_variables']} "
        f"skipped={len(report['skipped'])}"
    )
    for entry in report["skipped"]:
        click.echo(f"  line {entry['line']}: {entry['reason']}")
    if out:
        os.makedirs(out, exist_ok=True)
        _write_json(os.path.join(out, "ingest_report.json"), report)
        _finish_out(out, "ingest-validate", ["ingest_report.json"])


@main.command("train")
@click.option("--corpus", type=click.Path(), required=True)
@click.option("--registry", type=click.Path(), default=None)
@click.option("--out", type=click.Path(), required=True)
@click.option("--learning-rate", type=float, default=None)
@click.option("--l2-lambda", type=float, default=None)
@click.option("--max-iters", type=int, default=None)
@click.option("--tolerance", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--parallelism", type=int, default=None)
@click.pass_context
def train(ctx, corpus, registry, out, learning_rate, l2_lambda, max_iters,
          tolerance, seed, parallelism):
    """Bootstrap labels from client-side GA traffic and fit all models."""
    config = _config_obj(ctx, corpus=corpus, registry=registry, parallelism=parallelism)
    training = {
        key: value for key, value in (
            ("learning_rate", learning_rate), ("l2_lambda", l2_lambda),
            ("max_iters", max_iters), ("tolerance", tolerance), ("seed", seed),
        ) if value is not None
    }
    payload = {"config": config}
    if training:
        payload["training"] = training
    report = _call(ctx, "POST", "/train", payload)
    os.makedirs(out, exist_ok=True)
    outputs = []
    for tag, artifact in report["models"].items():
        filename = MODEL_FILENAMES[tag]
        _write_json(os.path.join(out, filename), artifact)
        outputs.append(filename)
    _write_json(os.path.join(out, "train_report.json"),
                {"metrics": report["metrics"], "labels": report["labels"]})
    outputs.append("train_report.json")
    _finish_out(out, "train", outputs)
    click.echo(f"labels: positive={report['labels']['positive']} "
               f"negative={report['labels']['negative']}")
    for tag, metrics in report["metrics"].items():
        click.echo(f"{tag}: f1={metrics['f1']:.4f} threshold={metrics['threshold']:g}")
    click.echo(f"wrote {len(outputs)} files to {out}")


@main.command("classify")
@click.option("--corpus", type=click.Path(), required=True)
@click.option("--registry", type=click.Path(), default=None)
@click.option("--models", "models_dir", type=click.Path(), required=True)
@click.option("--threshold", "thresholds", multiple=True,
              help="Override as tag=value; repeatable.")
@click.option("--denylist", type=click.Path(), default=None)
@click.option("--out", type=click.Path(), required=True)
@click.pass_context
def classify(ctx, corpus, registry, models_dir, thresholds, denylist, out):
    """Score a corpus and write domain and request verdicts."""
    config = _config_obj(ctx, corpus=corpus, registry=registry, denylist=denylist,
                         thresholds=_parse_thresholds(thresholds) or None)
    artifacts = _load_model_artifacts(models_dir)
    report = _call(ctx, "POST", "/classify", {"config": config, "models": artifacts})
    os.makedirs(out, exist_ok=True)
    _write_jsonl(os.path.join(out, "verdicts_domains.jsonl"), report["domain_rows"])
    _write_jsonl(os.path.join(out, "verdicts_requests.jsonl"), report["request_rows"])
    _finish_out(out, "classify", ["verdicts_domains.jsonl", "verdicts_requests.jsonl"])
    positive_domains = sorted({
        row["domain"] for row in report["domain_rows"] if row["verdict"]
    })
    click.echo(f"domain rows: {len(report['domain_rows'])}")
    click.echo(f"request rows: {len(report['request_rows'])}")
    click.echo(f"domains with a positive verdict: {len(positive_domains)}")
    if report["scrubbed"]:
        click.echo(f"denylist scrubbed {report['scrubbed']} request rows")


@main.command("evaluate")
@click.option("--corpus", type=click.Path(), required=True)
@click.option("--registry", type=click.Path(), default=None)
@click.option("--models", "models_dir", type=click.Path(), required=True)
@click.option("--ground-truth", type=click.Path(), required=True,
              help="CSV of domain,label with label 0 or 1.")
@click.option("--threshold", "thresholds", multiple=True)
@click.option("--out", type=click.Path(), default=None)
@click.pass_context
def evaluate(ctx, corpus, registry, models_dir, ground_truth, thresholds, out):
    """Score models against labeled domains, stage-2 style."""
    config = _config_obj(ctx, corpus=corpus, registry=registry,
                         thresholds=_parse_thresholds(thresholds) or None)
    artifacts = _load_model_artifacts(models_dir)
    try:
        labels = _read_ground_truth(ground_truth)
    except ToolkitError as err:
        _fail(err.kind, str(err))
    report = _call(ctx, "POST", "/evaluate", {
        "config": config, "models": artifacts, "ground_truth": labels,
    })
    for warning in report["warnings"]:
        click.echo(f"warning: {warning}", err=True)
    for tag, metrics in report["per_model"].items():
        click.echo(
            f"{tag}: precision={metrics['precision']:.4f} "
            f"recall={metrics['recall']:.4f} f1={metrics['f1']:.4f} "
            f"threshold={metrics['threshold']:g} examples={metrics['examples']}"
        )
    if out:
        os.makedirs(out, exist_ok=True)
        _write_json(os.path.join(out, "evaluate_report.json"), report)
        _finish_out(out, "evaluate", ["evaluate_report.json"])


@main.command("characterize")
@click.option("--corpus", type=click.Path(), required=True)
@click.option("--verdicts", "verdicts_dir", type=click.Path(), required=True)
@click.option("--dns-records", type=click.Path(), default=None)
@click.option("--asn-mapping", type=click.Path(), default=None)
@click.option("--out", type=click.Path(), required=True)
@click.pass_context
def characterize(ctx, corpus, verdicts_dir, dns_records, asn_mapping, out):
    """Describe how detected deployments route, resolve, and name keys."""
    config = _config_obj(ctx, corpus=corpus, dns_records=dns_records,
                         asn_mapping=asn_mapping)
    verdicts = _load_verdicts(verdicts_dir)
    report = _call(ctx, "POST", "/characterize", {"config": config, "verdicts": verdicts})
    os.makedirs(out, exist_ok=True)
    _write_json(os.path.join(out, "characterize_report.json"), report)
    _finish_out(out, "characterize", ["characterize_report.json"])
    routing = report["routing"]["counts"]
    click.echo(f"endpoints: subdomain_based={routing['subdomain_based']} "
               f"path_based={routing['path_based']}")
    click.echo(f"dns: {report['dns']['party_counts']}")
    click.echo(f"infrastructure: {report['infrastructure']['counts']}")
    click.echo(f"obfuscated domains: {len(report['obfuscation']['domains'])}")
    for warning in report["warnings"]:
        click.echo(f"warning: {warning}", err=True)


@main.command("filter-compare")
@click.option("--corpus", type=click.Path(), required=True)
@click.option("--verdicts", "verdicts_dir", type=click.Path(), required=True)
@click.option("--rules", type=click.Path(), required=True)
@click.option("--out", type=click.Path(), default=None)
@click.pass_context
def filter_compare(ctx, corpus, verdicts_dir, rules, out):
    """Replay detected traffic against an adblock filter list."""
    config = _config_obj(ctx, corpus=corpus, rules=rules)
    verdicts = _load_verdicts(verdicts_dir)
    report = _call(ctx, "POST", "/filter-compare", {"config": config, "verdicts": verdicts})
    click.echo(f"blocked {report['blocked']} of {report['total']} "
               f"({report['blocked_fraction']:.4f})")
    for raw, hits in report["rule_hits"].items():
        click.echo(f"  {hits:5d}  {raw}")
    if report["domains_with_zero_blocks"]:
        click.echo(f"domains with zero blocks: {len(report['domains_with_zero_blocks'])}")
    if report["unsupported_rules"]:
        click.echo(f"rules with unsupported options: {len(report['unsupported_rules'])}")
    for warning in report["warnings"]:
        click.echo(f"warning: {warning}", err=True)
    if out:
        os.makedirs(out, exist_ok=True)
        _write_json(os.path.join(out, "filter_report.json"), report)
        _finish_out(out, "filter-compare", ["filter_report.json"])


@main.command("export-model")
@click.option("--model", "model_path", type=click.Path(), required=True)
@click.option("--out", type=click.Path(), default=None,
              help="Write the canonical artifact here; default prints it.")
@click.pass_context
def export_model(ctx, model_path, out):
    """Validate a model artifact and emit its canonical JSON form."""
    try:
        with open(model_path, encoding="utf-8") as f:
            artifact = json.load(f)
    except FileNotFoundError:
        _fail("config", f"model artifact not found: {model_path}")
    except ValueError as err:
        _fail("data", f"model artifact is not valid JSON: {err}")
    canonical = _call(ctx, "POST", "/export-model", {"artifact": artifact})
    if out:
        _write_json(out, canonical)
        click.echo(f"wrote {out}")
    else:
        click.echo(json.dumps(canonical, indent=2))


@main.command("decode-scan")
@click.option("--corpus", type=click.Path(), required=True)
@click.option("--out", type=click.Path(), default=None)
@click.pass_context
def decode_scan(ctx, corpus, out):
    """Scan query values for base64-wrapped collect payloads."""
    config = _config_obj(ctx, corpus=corpus)
    report = _call(ctx, "POST", "/decode-scan", {"config": config})
    findings = report["findings"]
    click.echo(f"findings: {len(findings)}")
    for row in findings:
        mark = "signature" if row["signature_hit"] else "payload"
        click.echo(f"  {row['domain']} {row['encoded_param_key']} [{mark}] {row['url']}")
    if out:
        os.makedirs(out, exist_ok=True)
        _write_jsonl(os.path.join(out, "decode_scan.jsonl"), findings)
        _finish_out(out, "decode-scan", ["decode_scan.jsonl"])


@main.command("serve")
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
