/**
 * Service worker: owns the models, scores every observation, and serves
 * snapshots to the popup. The content script only triggers scans; the
 * popup only renders what it is handed.
 */

import { CookieRecord, WindowVariable } from "./features.js";
import { Model, parseModelJson } from "./model.js";
import {
  DEFAULT_THRESHOLDS,
  LIVE_TAGS,
  LiveTag,
  ModelSlots,
  bindModel,
  isLiveTag,
  scoreCookies,
  scoreRequest,
  scoreWindowVariables,
} from "./scan.js";
import { TabStore, Thresholds, normalizeThresholds, validateThreshold } from "./state.js";
import { Registry, parseRegistry } from "./templates.js";

const MAX_BLOCK_RULES = 100;
const MIN_SCAN_INTERVAL_MS = 500;
const MAX_SCAN_INTERVAL_MS = 60_000;
const DEFAULT_SCAN_INTERVAL_MS = 2_000;

interface Runtime {
  registry: Registry;
  models: ModelSlots;
  thresholds: Thresholds;
  blockingEnabled: boolean;
  scanIntervalMs: number;
}

type Message =
  | { kind: "scheduled-scan" }
  | { kind: "get-snapshot"; tabId: number }
  | { kind: "set-threshold"; tag: string; value: number }
  | { kind: "set-blocking"; enabled: boolean }
  | { kind: "set-interval"; ms: number }
  | { kind: "import-models"; files: { name: string; text: string }[] }
  | { kind: "export"; tabId: number }
  | { kind: "delete-cookie"; tabId: number; name: string };

const store = new TabStore();
let runtime: Runtime | null = null;

// urlFilter -> dynamic rule id, rebuilt from persisted rules on startup
const blockRules = new Map<string, number>();
let nextRuleId = 1;

function hostnameOf(url: string): string {
  try {
    return new URL(url).hostname;
  } catch {
    return "";
  }
}

async function loadRuntime(): Promise<Runtime> {
  const res = await fetch(chrome.runtime.getURL("templates.json"));
  const registry = parseRegistry(await res.json());
  const stored = await chrome.storage.local.get([
    "models",
    "thresholds",
    "blockingEnabled",
    "scanIntervalMs",
  ]);
  const models: ModelSlots = {};
  const rawModels = stored.models;
  if (typeof rawModels === "object" && rawModels !== null) {
    for (const doc of Object.values(rawModels as Record<string, unknown>)) {
      try {
        const model = parseModelJson(JSON.stringify(doc));
        models[bindModel(registry, model)] = model;
      } catch {
        // a stale or hand-edited artifact must not brick the worker
      }
    }
  }
  const interval = Number(stored.scanIntervalMs);
  return {
    registry,
    models,
    thresholds: normalizeThresholds(stored.thresholds, DEFAULT_THRESHOLDS),
    blockingEnabled: stored.blockingEnabled === true,
    scanIntervalMs: Number.isFinite(interval) && interval >= MIN_SCAN_INTERVAL_MS
      ? Math.min(interval, MAX_SCAN_INTERVAL_MS)
      : DEFAULT_SCAN_INTERVAL_MS,
  };
}

async function syncBlockRulesFromDisk(rt: Runtime): Promise<void> {
  const existing = await chrome.declarativeNetRequest.getDynamicRules();
  if (!rt.blockingEnabled) {
    if (existing.length > 0) {
      await chrome.declarativeNetRequest.updateDynamicRules({
        removeRuleIds: existing.map((r) => r.id),
      });
    }
    return;
  }
  for (const rule of existing) {
    const filter = rule.condition.urlFilter;
    if (filter !== undefined) {
      blockRules.set(filter, rule.id);
    }
    nextRuleId = Math.max(nextRuleId, rule.id + 1);
  }
}

const ready: Promise<Runtime> = loadRuntime().then(async (rt) => {
  runtime = rt;
  await syncBlockRulesFromDisk(rt);
  return rt;
});

function updateBadge(tabId: number, rt: Runtime): void {
  const snapshot = store.snapshot(tabId, rt.thresholds);
  if (snapshot === null) {
    return;
  }
  // an unreadable page overrides the count so the gap is visible
  const count = snapshot.detections.length;
  const text = !snapshot.windowAccessible ? "!" : count > 0 ? String(count) : "";
  void chrome.action.setBadgeText({ tabId, text });
}

function blockFilterFor(url: string): string | null {
  try {
    const u = new URL(url);
    // left-anchored prefix: the endpoint keeps firing with fresh payloads,
    // so pin scheme+host+path and let the query vary
    return `|${u.origin}${u.pathname}`;
  } catch {
    return null;
  }
}

async function addBlockRule(url: string): Promise<void> {
  const filter = blockFilterFor(url);
  if (filter === null || blockRules.has(filter) || blockRules.size >= MAX_BLOCK_RULES) {
    return;
  }
  const id = nextRuleId;
  nextRuleId += 1;
  blockRules.set(filter, id);
  await chrome.declarativeNetRequest.updateDynamicRules({
    addRules: [
      {
        id,
        priority: 1,
        action: { type: "block" as chrome.declarativeNetRequest.RuleActionType },
        condition: { urlFilter: filter },
      },
    ],
  });
}

async function clearBlockRules(): Promise<void> {
  const existing = await chrome.declarativeNetRequest.getDynamicRules();
  blockRules.clear();
  if (existing.length > 0) {
    await chrome.declarativeNetRequest.updateDynamicRules({
      removeRuleIds: existing.map((r) => r.id),
    });
  }
}

async function handleRequest(details: chrome.webRequest.WebRequestDetails): Promise<void> {
  const rt = await ready;
  if (details.tabId < 0) {
    return;
  }
  if (details.type === "main_frame") {
    store.resetTab(details.tabId, hostnameOf(details.url), details.url);
    void chrome.action.setBadgeText({ tabId: details.tabId, text: "" });
  }
  const model = rt.models.request_level;
  if (model === undefined) {
    return;
  }
  const domain = hostnameOf(details.url);
  const scored = scoreRequest(rt.registry, model, domain, details.url, rt.thresholds.request_level);
  store.recordRequest(details.tabId, domain, details.url, {
    url: details.url,
    probability: scored.row.probability,
    matchedTemplateIds: scored.matchedTemplateIds,
  });
  if (scored.row.verdict && rt.blockingEnabled) {
    await addBlockRule(details.url);
  }
  updateBadge(details.tabId, rt);
}

/**
 * Runs inside the page. Serializes the globals the window templates
 * inspect; anything unserializable is reported with a null value.
 */
function collectPageVariables(): Promise<{ name: string; serializedValue: string | null }[]> {
  const out: { name: string; serializedValue: string | null }[] = [];
  const grab = (name: string, value: unknown) => {
    if (value === undefined) {
      return;
    }
    try {
      const text = JSON.stringify(value);
      out.push({ name, serializedValue: text === undefined ? null : text });
    } catch {
      out.push({ name, serializedValue: null });
    }
  };
  const w = window as unknown as Record<string, unknown>;
  grab("dataLayer", w.dataLayer);
  grab("gaGlobal", w.gaGlobal);
  grab("google_tag_manager", w.google_tag_manager);
  const nav = navigator as unknown as {
    userAgentData?: {
      brands: unknown;
      mobile: unknown;
      platform: unknown;
      getHighEntropyValues(hints: string[]): Promise<Record<string, unknown>>;
    };
  };
  if (nav.userAgentData === undefined) {
    return Promise.resolve(out);
  }
  const uaData = nav.userAgentData;
  return uaData
    .getHighEntropyValues(["architecture", "bitness", "platformVersion", "fullVersionList", "uaFullVersion"])
    .then((high) => {
      grab("navigator.userAgentData", {
        brands: uaData.brands,
        mobile: uaData.mobile,
        platform: uaData.platform,
        ...high,
      });
      return out;
    })
    .catch(() => {
      grab("navigator.userAgentData", { brands: uaData.brands, mobile: uaData.mobile, platform: uaData.platform });
      return out;
    });
}

async function readWindowVariables(tabId: number): Promise<WindowVariable[] | null> {
  try {
    const results = await chrome.scripting.executeScript({
      target: { tabId },
      world: "MAIN",
      func: collectPageVariables,
    });
    const first = results[0];
    if (first === undefined || !Array.isArray(first.result)) {
      return null;
    }
    return first.result as WindowVariable[];
  } catch {
    return null;
  }
}

async function runScheduledScan(tab: chrome.tabs.Tab): Promise<{ scanned: string[] }> {
  const rt = await ready;
  const tabId = tab.id;
  const pageUrl = tab.url ?? "";
  if (tabId === undefined || tabId < 0 || pageUrl === "") {
    return { scanned: [] };
  }
  const domain = hostnameOf(pageUrl);
  const scanned: string[] = [];

  if (rt.models.cookie !== undefined) {
    const raw = await chrome.cookies.getAll({ url: pageUrl });
    const cookies: CookieRecord[] = raw.map((c) => ({
      name: c.name,
      value: c.value,
      domain: c.domain,
      path: c.path,
    }));
    const result = scoreCookies(rt.registry, rt.models.cookie, domain, cookies, rt.thresholds.cookie);
    store.recordCookieScan(tabId, domain, pageUrl, {
      probability: result.row.probability,
      matchedTemplateIds: result.row.matched_template_ids,
      flaggedNames: result.flaggedNames,
    });
    scanned.push("cookie");
  }

  if (rt.models.window !== undefined) {
    const variables = await readWindowVariables(tabId);
    if (variables === null) {
      store.recordWindowScan(tabId, domain, pageUrl, null, false);
    } else {
      const result = scoreWindowVariables(rt.registry, rt.models.window, domain, variables, rt.thresholds.window);
      store.recordWindowScan(tabId, domain, pageUrl, {
        probability: result.row.probability,
        matchedTemplateIds: result.row.matched_template_ids,
        flaggedNames: result.flaggedNames,
      }, true);
      scanned.push("window");
    }
  }

  updateBadge(tabId, rt);
  return { scanned };
}

async function importModels(files: { name: string; text: string }[]): Promise<unknown> {
  const rt = await ready;
  const report: { name: string; status: string }[] = [];
  const stored = await chrome.storage.local.get("models");
  const docs: Record<string, unknown> =
    typeof stored.models === "object" && stored.models !== null
      ? { ...(stored.models as Record<string, unknown>) }
      : {};
  for (const file of files) {
    let model: Model;
    try {
      model = parseModelJson(file.text);
    } catch (err) {
      report.push({ name: file.name, status: err instanceof Error ? err.message : String(err) });
      continue;
    }
    if (!isLiveTag(model.modalityTag)) {
      report.push({
        name: file.name,
        status: `ignored: '${model.modalityTag}' is a batch-only model`,
      });
      continue;
    }
    try {
      const tag = bindModel(rt.registry, model);
      rt.models[tag] = model;
      docs[tag] = JSON.parse(file.text);
      report.push({ name: file.name, status: `loaded as ${tag}` });
    } catch (err) {
      report.push({ name: file.name, status: err instanceof Error ? err.message : String(err) });
    }
  }
  await chrome.storage.local.set({ models: docs });
  return { report, modelTags: LIVE_TAGS.filter((t) => rt.models[t] !== undefined) };
}

function statusOf(rt: Runtime): unknown {
  return {
    registryVersion: rt.registry.version,
    modelTags: LIVE_TAGS.filter((t) => rt.models[t] !== undefined),
    thresholds: rt.thresholds,
    blockingEnabled: rt.blockingEnabled,
    scanIntervalMs: rt.scanIntervalMs,
  };
}

async function handleMessage(msg: Message, sender: chrome.runtime.MessageSender): Promise<unknown> {
  const rt = await ready;
  switch (msg.kind) {
    case "scheduled-scan": {
      if (sender.tab === undefined) {
        return { scanned: [] };
      }
      return runScheduledScan(sender.tab);
    }
    case "get-snapshot": {
      return {
        status: statusOf(rt),
        snapshot: store.snapshot(msg.tabId, rt.thresholds),
      };
    }
    case "set-threshold": {
      if (!isLiveTag(msg.tag)) {
        throw new Error(`unknown model tag '${msg.tag}'`);
      }
      rt.thresholds = { ...rt.thresholds, [msg.tag]: validateThreshold(msg.value) };
      await chrome.storage.local.set({ thresholds: rt.thresholds });
      for (const tabId of store.tabIds()) {
        updateBadge(tabId, rt);
      }
      return { thresholds: rt.thresholds };
    }
    case "set-blocking": {
      rt.blockingEnabled = msg.enabled === true;
      await chrome.storage.local.set({ blockingEnabled: rt.blockingEnabled });
      if (!rt.blockingEnabled) {
        await clearBlockRules();
      }
      return { blockingEnabled: rt.blockingEnabled };
    }
    case "set-interval": {
      const ms = Number(msg.ms);
      if (!Number.isFinite(ms) || ms < MIN_SCAN_INTERVAL_MS || ms > MAX_SCAN_INTERVAL_MS) {
        throw new Error(
          `scan interval must lie in [${MIN_SCAN_INTERVAL_MS}, ${MAX_SCAN_INTERVAL_MS}] ms`,
        );
      }
      rt.scanIntervalMs = ms;
      await chrome.storage.local.set({ scanIntervalMs: ms });
      return { scanIntervalMs: ms };
    }
    case "import-models":
      return importModels(msg.files);
    case "export": {
      const doc = store.exportDocument(msg.tabId, rt.thresholds);
      if (doc === null) {
        throw new Error("nothing scored for this tab yet");
      }
      return { document: doc };
    }
    case "delete-cookie": {
      const state = store.snapshot(msg.tabId, rt.thresholds);
      if (state === null) {
        throw new Error("no state for this tab");
      }
      await chrome.cookies.remove({ url: state.pageUrl, name: msg.name });
      // rescan so the panel reflects the deletion immediately
      const tab = await chrome.tabs.get(msg.tabId);
      await runScheduledScan(tab);
      return { removed: msg.name };
    }
    default:
      throw new Error("unknown message");
  }
}

chrome.webRequest.onBeforeRequest.addListener(
  (details) => {
    void handleRequest(details);
  },
  { urls: ["http://*/*", "https://*/*"] },
);

chrome.tabs.onRemoved.addListener((tabId) => {
  store.dropTab(tabId);
});

chrome.runtime.onMessage.addListener((msg, sender, sendResponse) => {
  handleMessage(msg as Message, sender)
    .then((reply) => sendResponse({ ok: true, ...(reply as object) }))
    .catch((err: unknown) => {
      sendResponse({ ok: false, error: err instanceof Error ? err.message : String(err) });
    });
  return true;
});
