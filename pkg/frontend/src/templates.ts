/**
 * Value-template registry: loading, validation, and regex compilation.
 *
 * The registry JSON is the same document the scoring service bundles; the
 * extension ships a copy as a packaged asset. Vector order is the file
 * order of templates within each modality, so compiled registries keep
 * arrays, not maps.
 */

export const MODALITIES = ["query_param", "cookie", "window_var"] as const;
export type Modality = (typeof MODALITIES)[number];

export interface TemplateSpec {
  id: string;
  modality: Modality;
  pattern: string;
  anchored: boolean;
  environmentSensitive: boolean;
}

export interface CompiledTemplate extends TemplateSpec {
  regex: RegExp;
}

export interface Registry {
  version: string;
  byModality: Record<Modality, CompiledTemplate[]>;
}

function isModality(value: unknown): value is Modality {
  return (MODALITIES as readonly string[]).includes(value as string);
}

/** Anchored templates must cover the whole value; fragments may sit anywhere. */
export function compilePattern(pattern: string, anchored: boolean): RegExp {
  // no flags: patterns are authored against byte-at-a-time ASCII semantics
  return anchored ? new RegExp(`^(?:${pattern})$`) : new RegExp(pattern);
}

export function parseRegistry(doc: unknown): Registry {
  if (typeof doc !== "object" || doc === null) {
    throw new Error("registry document must be a JSON object");
  }
  const obj = doc as Record<string, unknown>;
  if (typeof obj.version !== "string" || obj.version === "") {
    throw new Error("registry version must be a non-empty string");
  }
  if (!Array.isArray(obj.templates) || obj.templates.length === 0) {
    throw new Error("registry must list at least one template");
  }
  const byModality: Record<Modality, CompiledTemplate[]> = {
    query_param: [],
    cookie: [],
    window_var: [],
  };
  const seen = new Set<string>();
  for (const entry of obj.templates) {
    const t = entry as Record<string, unknown>;
    if (typeof t.id !== "string" || t.id === "") {
      throw new Error("template id must be a non-empty string");
    }
    if (!isModality(t.modality)) {
      throw new Error(`template ${t.id}: unknown modality ${String(t.modality)}`);
    }
    if (typeof t.pattern !== "string" || typeof t.anchored !== "boolean") {
      throw new Error(`template ${t.id}: pattern/anchored malformed`);
    }
    const key = `${t.modality}:${t.id}`;
    if (seen.has(key)) {
      throw new Error(`duplicate template ${key}`);
    }
    seen.add(key);
    let regex: RegExp;
    try {
      regex = compilePattern(t.pattern, t.anchored);
    } catch (err) {
      throw new Error(`template ${key}: pattern does not compile: ${String(err)}`);
    }
    byModality[t.modality].push({
      id: t.id,
      modality: t.modality,
      pattern: t.pattern,
      anchored: t.anchored,
      environmentSensitive: Boolean(t.environment_sensitive),
      regex,
    });
  }
  return { version: obj.version, byModality };
}

/** Template ids for one modality, in vector order. */
export function modalityIds(registry: Registry, modality: Modality): string[] {
  return registry.byModality[modality].map((t) => t.id);
}

/** Ids prefixed with their modality, as model artifacts spell them. */
export function qualifiedIds(registry: Registry, modality: Modality): string[] {
  return registry.byModality[modality].map((t) => `${modality}:${t.id}`);
}
