/**
 * Per-tab snapshot store.
 *
 * The store keeps raw probabilities and matched template ids; verdicts are
 * derived against the current thresholds whenever a snapshot or export is
 * built, so slider moves re-evaluate the visible detections without
 * rescoring anything. The popup only ever reads snapshots.
 */

import { DomainRow, LIVE_TAGS, LiveTag, RequestRow } from "./scan.js";

// memory guard for long-lived tabs; old rows age out first
const REQUEST_CAP = 1000;

export interface ScoredRequest {
  url: string;
  probability: number;
  matchedTemplateIds: string[];
}

export interface StorageScan {
  probability: number;
  matchedTemplateIds: string[];
  flaggedNames: string[];
}

export interface DetectionEntry {
  url: string;
  probability: number;
  matched_template_ids: string[];
  modality: LiveTag;
}

export interface TabSnapshot {
  domain: string;
  pageUrl: string;
  windowAccessible: boolean;
  lastScanAt: number | null;
  scoredRequests: number;
  detections: DetectionEntry[];
  flaggedCookieNames: string[];
  flaggedWindowNames: string[];
}

export interface ExportDocument {
  requests: RequestRow[];
  domains: DomainRow[];
}

export type Thresholds = Record<LiveTag, number>;

interface TabState {
  domain: string;
  pageUrl: string;
  requests: ScoredRequest[];
  cookieScan: StorageScan | null;
  windowScan: StorageScan | null;
  windowAccessible: boolean;
  lastScanAt: number | null;
}

export function validateThreshold(value: unknown): number {
  const usable =
    typeof value === "number" || (typeof value === "string" && value.trim() !== "");
  const v = usable ? Number(value) : NaN;
  if (!Number.isFinite(v) || v < 0 || v > 1) {
    throw new Error(`threshold must lie in [0, 1], got ${String(value)}`);
  }
  return v;
}

export function normalizeThresholds(raw: unknown, defaults: Thresholds): Thresholds {
  const out = { ...defaults };
  if (typeof raw === "object" && raw !== null) {
    for (const tag of LIVE_TAGS) {
      const candidate = (raw as Record<string, unknown>)[tag];
      if (candidate !== undefined) {
        out[tag] = validateThreshold(candidate);
      }
    }
  }
  return out;
}

function emptyState(domain: string, pageUrl: string): TabState {
  return {
    domain,
    pageUrl,
    requests: [],
    cookieScan: null,
    windowScan: null,
    windowAccessible: true,
    lastScanAt: null,
  };
}

export class TabStore {
  private tabs = new Map<number, TabState>();

  /** Navigation wipes everything the previous page accumulated. */
  resetTab(tabId: number, domain: string, pageUrl: string): void {
    this.tabs.set(tabId, emptyState(domain, pageUrl));
  }

  dropTab(tabId: number): void {
    this.tabs.delete(tabId);
  }

  tabIds(): number[] {
    return [...this.tabs.keys()];
  }

  hasTab(tabId: number): boolean {
    return this.tabs.has(tabId);
  }

  private ensure(tabId: number, domain: string, pageUrl: string): TabState {
    let state = this.tabs.get(tabId);
    if (state === undefined) {
      state = emptyState(domain, pageUrl);
      this.tabs.set(tabId, state);
    }
    return state;
  }

  recordRequest(tabId: number, domain: string, pageUrl: string, scored: ScoredRequest): void {
    const state = this.ensure(tabId, domain, pageUrl);
    state.requests.push(scored);
    if (state.requests.length > REQUEST_CAP) {
      state.requests.shift();
    }
  }

  recordCookieScan(tabId: number, domain: string, pageUrl: string, scan: StorageScan): void {
    const state = this.ensure(tabId, domain, pageUrl);
    state.cookieScan = scan;
    state.lastScanAt = Date.now();
  }

  recordWindowScan(
    tabId: number,
    domain: string,
    pageUrl: string,
    scan: StorageScan | null,
    accessible: boolean,
  ): void {
    const state = this.ensure(tabId, domain, pageUrl);
    state.windowScan = scan;
    state.windowAccessible = accessible;
  }

  /** Rows above the matching threshold, newest request rows last. */
  detections(tabId: number, thresholds: Thresholds): DetectionEntry[] {
    const state = this.tabs.get(tabId);
    if (state === undefined) {
      return [];
    }
    const out: DetectionEntry[] = [];
    for (const r of state.requests) {
      if (r.probability >= thresholds.request_level) {
        out.push({
          url: r.url,
          probability: r.probability,
          matched_template_ids: r.matchedTemplateIds,
          modality: "request_level",
        });
      }
    }
    if (state.cookieScan !== null && state.cookieScan.probability >= thresholds.cookie) {
      out.push({
        url: state.pageUrl,
        probability: state.cookieScan.probability,
        matched_template_ids: state.cookieScan.matchedTemplateIds,
        modality: "cookie",
      });
    }
    if (state.windowScan !== null && state.windowScan.probability >= thresholds.window) {
      out.push({
        url: state.pageUrl,
        probability: state.windowScan.probability,
        matched_template_ids: state.windowScan.matchedTemplateIds,
        modality: "window",
      });
    }
    return out;
  }

  detectionCount(tabId: number, thresholds: Thresholds): number {
    return this.detections(tabId, thresholds).length;
  }

  snapshot(tabId: number, thresholds: Thresholds): TabSnapshot | null {
    const state = this.tabs.get(tabId);
    if (state === undefined) {
      return null;
    }
    return {
      domain: state.domain,
      pageUrl: state.pageUrl,
      windowAccessible: state.windowAccessible,
      lastScanAt: state.lastScanAt,
      scoredRequests: state.requests.length,
      detections: this.detections(tabId, thresholds),
      flaggedCookieNames: state.cookieScan === null ? [] : state.cookieScan.flaggedNames,
      flaggedWindowNames: state.windowScan === null ? [] : state.windowScan.flaggedNames,
    };
  }

  /** Every scored row with verdicts under the current thresholds. */
  exportDocument(tabId: number, thresholds: Thresholds): ExportDocument | null {
    const state = this.tabs.get(tabId);
    if (state === undefined) {
      return null;
    }
    const requests: RequestRow[] = state.requests.map((r) => ({
      domain: state.domain,
      url: r.url,
      probability: r.probability,
      verdict: r.probability >= thresholds.request_level,
    }));
    const domains: DomainRow[] = [];
    if (state.cookieScan !== null) {
      domains.push({
        domain: state.domain,
        modality: "cookie",
        probability: state.cookieScan.probability,
        verdict: state.cookieScan.probability >= thresholds.cookie,
        matched_template_ids: state.cookieScan.matchedTemplateIds,
      });
    }
    if (state.windowScan !== null) {
      domains.push({
        domain: state.domain,
        modality: "window",
        probability: state.windowScan.probability,
        verdict: state.windowScan.probability >= thresholds.window,
        matched_template_ids: state.windowScan.matchedTemplateIds,
      });
    }
    return { requests, domains };
  }
}
