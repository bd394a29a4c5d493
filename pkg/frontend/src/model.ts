/**
 * Logistic-regression model artifacts and inference.
 *
 * Artifacts come from the training CLI unchanged: weights are decimal
 * strings that round-trip float64 exactly, so Number() parsing recovers
 * the trained coefficients bit-for-bit. Inference follows the same
 * numerically stable sigmoid with the same probability clamp, keeping
 * scores within 1e-9 of the reference scorer.
 */

import { Registry } from "./templates.js";

export const MODEL_FORMAT_VERSION = 1;

const P_FLOOR = 1e-300;
const P_CEIL = 1.0 - 1e-16;

export interface Model {
  formatVersion: number;
  modalityTag: string;
  registryVersion: string;
  templateIds: string[];
  weights: number[];
  bias: number;
  threshold: number;
}

const REQUIRED_FIELDS = [
  "format_version",
  "modality_tag",
  "registry_version",
  "template_ids",
  "weights",
  "bias",
  "threshold",
  "training_config",
] as const;

function parseFinite(raw: unknown, what: string): number {
  if (typeof raw !== "string" && typeof raw !== "number") {
    throw new Error(`model ${what} must be a number or numeric string`);
  }
  const value = Number(raw);
  if (!Number.isFinite(value)) {
    throw new Error(`model ${what} is not a finite number: ${String(raw)}`);
  }
  return value;
}

export function modelFromObject(doc: unknown): Model {
  if (typeof doc !== "object" || doc === null) {
    throw new Error("model artifact must be a JSON object");
  }
  const obj = doc as Record<string, unknown>;
  for (const field of REQUIRED_FIELDS) {
    if (!(field in obj)) {
      throw new Error(`model artifact missing field '${field}'`);
    }
  }
  if (obj.format_version !== MODEL_FORMAT_VERSION) {
    throw new Error(`unsupported model format_version ${String(obj.format_version)}`);
  }
  if (!Array.isArray(obj.template_ids) || !Array.isArray(obj.weights)) {
    throw new Error("model template_ids and weights must be arrays");
  }
  if (obj.weights.length !== obj.template_ids.length) {
    throw new Error("model weights length does not match template_ids");
  }
  if (typeof obj.modality_tag !== "string" || typeof obj.registry_version !== "string") {
    throw new Error("model modality_tag and registry_version must be strings");
  }
  return {
    formatVersion: obj.format_version,
    modalityTag: obj.modality_tag,
    registryVersion: obj.registry_version,
    templateIds: obj.template_ids.map((t) => String(t)),
    weights: obj.weights.map((w, i) => parseFinite(w, `weight[${i}]`)),
    bias: parseFinite(obj.bias, "bias"),
    threshold: parseFinite(obj.threshold, "threshold"),
  };
}

export function parseModelJson(text: string): Model {
  let doc: unknown;
  try {
    doc = JSON.parse(text);
  } catch (err) {
    throw new Error(`model artifact is not valid JSON: ${String(err)}`);
  }
  return modelFromObject(doc);
}

export function checkRegistryCompatible(model: Model, registry: Registry): void {
  if (model.registryVersion !== registry.version) {
    throw new Error(
      `model was trained against registry '${model.registryVersion}', ` +
        `loaded registry is '${registry.version}'`,
    );
  }
}

export function sigmoid(z: number): number {
  let p: number;
  if (z >= 0) {
    p = 1.0 / (1.0 + Math.exp(-z));
  } else {
    const e = Math.exp(z);
    p = e / (1.0 + e);
  }
  if (p < P_FLOOR) return P_FLOOR;
  if (p > P_CEIL) return P_CEIL;
  return p;
}

export function predictProba(model: Model, x: readonly number[]): number {
  if (x.length !== model.weights.length) {
    throw new Error(
      `feature vector has ${x.length} entries, model expects ${model.weights.length}`,
    );
  }
  let z = 0;
  for (let i = 0; i < x.length; i++) {
    z += (model.weights[i] as number) * (x[i] as number);
  }
  z += model.bias;
  return sigmoid(z);
}
