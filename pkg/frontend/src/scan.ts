/**
 * Detection assembly: turns raw page observations into verdict rows.
 *
 * Three models run live: the request-level model against every outgoing
 * URL, and the cookie and window models on the post-load scan schedule.
 * Exported rows use the verdict row schema of the batch scorer, so a file
 * saved from the panel diffs cleanly against its output.
 */

import { CookieRecord, WindowVariable, cookieBits, requestBits, windowBits } from "./features.js";
import { Model, checkRegistryCompatible, predictProba } from "./model.js";
import { Registry, modalityIds } from "./templates.js";

export const LIVE_TAGS = ["request_level", "cookie", "window"] as const;
export type LiveTag = (typeof LIVE_TAGS)[number];

/** Operating points used when the user has not touched the sliders. */
export const DEFAULT_THRESHOLDS: Record<LiveTag, number> = {
  request_level: 0.7,
  cookie: 0.4,
  window: 0.4,
};

export type ModelSlots = Partial<Record<LiveTag, Model>>;

/** Request verdict row, one per scored URL. */
export interface RequestRow {
  domain: string;
  url: string;
  probability: number;
  verdict: boolean;
}

/** Domain verdict row, one per storage modality per scan. */
export interface DomainRow {
  domain: string;
  modality: string;
  probability: number;
  verdict: boolean;
  matched_template_ids: string[];
}

/** A scored observation plus the names the user may want to act on. */
export interface StorageScanResult {
  row: DomainRow;
  flaggedNames: string[];
}

export function isLiveTag(tag: string): tag is LiveTag {
  return (LIVE_TAGS as readonly string[]).includes(tag);
}

/**
 * Validate an artifact for one of the live slots: registry version must
 * match and the weight vector must span the modality it scores.
 */
export function bindModel(registry: Registry, model: Model): LiveTag {
  if (!isLiveTag(model.modalityTag)) {
    throw new Error(`model tag '${model.modalityTag}' is not scored live`);
  }
  checkRegistryCompatible(model, registry);
  const width =
    model.modalityTag === "request_level"
      ? registry.byModality.query_param.length
      : model.modalityTag === "cookie"
        ? registry.byModality.cookie.length
        : registry.byModality.window_var.length;
  if (model.weights.length !== width) {
    throw new Error(
      `model '${model.modalityTag}' has ${model.weights.length} weights, ` +
        `registry defines ${width} templates`,
    );
  }
  return model.modalityTag;
}

function matchedIds(registry: Registry, modality: "query_param" | "cookie" | "window_var", bits: number[]): string[] {
  const ids = modalityIds(registry, modality);
  return ids.filter((_, i) => bits[i] === 1);
}

export function scoreRequest(
  registry: Registry,
  model: Model,
  domain: string,
  url: string,
  threshold: number,
): { row: RequestRow; matchedTemplateIds: string[] } {
  const bits = requestBits(registry, url);
  const probability = predictProba(model, bits);
  return {
    row: { domain, url, probability, verdict: probability >= threshold },
    matchedTemplateIds: matchedIds(registry, "query_param", bits),
  };
}

export function scoreCookies(
  registry: Registry,
  model: Model,
  domain: string,
  cookies: CookieRecord[],
  threshold: number,
): StorageScanResult {
  const bits = cookieBits(registry, cookies);
  const probability = predictProba(model, bits);
  const templates = registry.byModality.cookie;
  const flagged = cookies
    .filter((c) => templates.some((t) => t.regex.test(c.value)))
    .map((c) => c.name);
  return {
    row: {
      domain,
      modality: "cookie",
      probability,
      verdict: probability >= threshold,
      matched_template_ids: matchedIds(registry, "cookie", bits),
    },
    flaggedNames: [...new Set(flagged)],
  };
}

export function scoreWindowVariables(
  registry: Registry,
  model: Model,
  domain: string,
  variables: WindowVariable[],
  threshold: number,
): StorageScanResult {
  const bits = windowBits(registry, variables);
  const probability = predictProba(model, bits);
  const templates = registry.byModality.window_var;
  const flagged = variables
    .filter((v) => v.serializedValue !== null && templates.some((t) => t.regex.test(v.serializedValue as string)))
    .map((v) => v.name);
  return {
    row: {
      domain,
      modality: "window",
      probability,
      verdict: probability >= threshold,
      matched_template_ids: matchedIds(registry, "window_var", bits),
    },
    flaggedNames: [...new Set(flagged)],
  };
}
