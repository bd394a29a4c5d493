/**
 * Feature extraction shared by the request listener and the storage scans.
 *
 * Bit vectors must agree with the scoring service on every input, so the
 * helpers here mirror its featurizer exactly: query values are
 * percent-decoded once, anchored templates must cover the whole value,
 * and a bit latches as soon as any value matches.
 */

import { Modality, Registry } from "./templates.js";

export interface CookieRecord {
  name: string;
  value: string;
  domain: string;
  path: string;
}

export interface WindowVariable {
  name: string;
  serializedValue: string | null;
}

const HEX_DIGITS = "0123456789abcdefABCDEF";

/**
 * Decode %XX escapes exactly once. Invalid escapes stay literal, and runs
 * of escaped bytes decode as UTF-8 with U+FFFD for ill-formed sequences.
 * "+" is not special here.
 */
export function percentDecodeOnce(text: string): string {
  if (!text.includes("%")) {
    return text;
  }
  const decoder = new TextDecoder("utf-8", { fatal: false });
  let out = "";
  let pending: number[] = [];
  const flush = () => {
    if (pending.length > 0) {
      out += decoder.decode(new Uint8Array(pending));
      pending = [];
    }
  };
  let i = 0;
  while (i < text.length) {
    if (
      text[i] === "%" &&
      i + 2 < text.length &&
      HEX_DIGITS.includes(text[i + 1] as string) &&
      HEX_DIGITS.includes(text[i + 2] as string)
    ) {
      pending.push(parseInt(text.slice(i + 1, i + 3), 16));
      i += 3;
    } else {
      flush();
      out += text[i];
      i += 1;
    }
  }
  flush();
  return out;
}

/**
 * Query parameter values in URL order, percent-decoded once.
 *
 * The fragment starts at the first "#"; the query is everything after the
 * first "?" before it. Pairs split on "&", the value is whatever follows
 * the first "=", and a bare key contributes the empty value.
 */
export function queryValues(url: string): string[] {
  const hash = url.indexOf("#");
  const beforeFragment = hash === -1 ? url : url.slice(0, hash);
  const qmark = beforeFragment.indexOf("?");
  if (qmark === -1) {
    return [];
  }
  const query = beforeFragment.slice(qmark + 1);
  if (query === "") {
    return [];
  }
  return query.split("&").map((pair) => {
    const eq = pair.indexOf("=");
    return percentDecodeOnce(eq === -1 ? "" : pair.slice(eq + 1));
  });
}

/** One bit per template in registry order; a bit latches on first match. */
export function matchBits(registry: Registry, modality: Modality, values: string[]): number[] {
  const templates = registry.byModality[modality];
  const bits = new Array<number>(templates.length).fill(0);
  for (const value of values) {
    for (let i = 0; i < templates.length; i++) {
      if (bits[i] === 0 && (templates[i] as { regex: RegExp }).regex.test(value)) {
        bits[i] = 1;
      }
    }
  }
  return bits;
}

export function requestBits(registry: Registry, url: string): number[] {
  return matchBits(registry, "query_param", queryValues(url));
}

/** Deterministic cookie-jar string: sorted by (name, domain), "; " joined. */
export function serializeCookieJar(cookies: CookieRecord[]): string {
  const ordered = [...cookies].sort((a, b) => {
    const ka = [a.name, a.domain, a.value, a.path];
    const kb = [b.name, b.domain, b.value, b.path];
    for (let i = 0; i < 4; i++) {
      if ((ka[i] as string) < (kb[i] as string)) return -1;
      if ((ka[i] as string) > (kb[i] as string)) return 1;
    }
    return 0;
  });
  return ordered.map((c) => `${c.name}=${c.value}`).join("; ");
}

export function cookieBits(registry: Registry, cookies: CookieRecord[]): number[] {
  const templates = registry.byModality.cookie;
  const bits = matchBits(
    registry,
    "cookie",
    cookies.map((c) => c.value),
  );
  // fragment templates also see the serialized jar; the bundled set has none
  if (cookies.length > 0 && templates.some((t) => !t.anchored)) {
    const jar = serializeCookieJar(cookies);
    for (let i = 0; i < templates.length; i++) {
      const t = templates[i];
      if (t !== undefined && bits[i] === 0 && !t.anchored && t.regex.test(jar)) {
        bits[i] = 1;
      }
    }
  }
  return bits;
}

export function windowBits(registry: Registry, variables: WindowVariable[]): number[] {
  const values = variables
    .map((v) => v.serializedValue)
    .filter((v): v is string => v !== null);
  return matchBits(registry, "window_var", values);
}

/** Bitwise OR of per-request vectors, all of one width. */
export function orBits(vectors: number[][], width: number): number[] {
  const out = new Array<number>(width).fill(0);
  for (const bits of vectors) {
    if (bits.length !== width) {
      throw new Error("feature vector width mismatch in OR aggregation");
    }
    for (let i = 0; i < width; i++) {
      if (bits[i] === 1) {
        out[i] = 1;
      }
    }
  }
  return out;
}
