/**
 * Panel UI. Renders worker snapshots and forwards user actions; nothing
 * here computes a probability or a verdict.
 */

import { LIVE_TAGS, LiveTag } from "./scan.js";
import { TabSnapshot } from "./state.js";

interface Status {
  registryVersion: string;
  modelTags: LiveTag[];
  thresholds: Record<LiveTag, number>;
  blockingEnabled: boolean;
  scanIntervalMs: number;
}

const TAG_LABELS: Record<LiveTag, string> = {
  request_level: "Requests",
  cookie: "Cookies",
  window: "Window state",
};

let activeTabId: number | null = null;

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (el === null) {
    throw new Error(`popup markup is missing #${id}`);
  }
  return el as T;
}

async function send(message: object): Promise<Record<string, unknown>> {
  const reply = (await chrome.runtime.sendMessage(message)) as Record<string, unknown> | undefined;
  if (reply === undefined || reply.ok !== true) {
    throw new Error(typeof reply?.error === "string" ? reply.error : "no reply from worker");
  }
  return reply;
}

async function activeTab(): Promise<chrome.tabs.Tab | null> {
  const tabs = await chrome.tabs.query({ active: true, currentWindow: true });
  return tabs[0] ?? null;
}

function renderDetections(snapshot: TabSnapshot | null): void {
  const list = byId<HTMLUListElement>("detections");
  list.replaceChildren();
  const empty = byId<HTMLParagraphElement>("no-detections");
  const entries = snapshot?.detections ?? [];
  empty.hidden = entries.length > 0;
  for (const entry of entries) {
    const item = document.createElement("li");
    const head = document.createElement("div");
    head.className = "detection-head";
    const tag = document.createElement("span");
    tag.className = `chip chip-${entry.modality}`;
    tag.textContent = TAG_LABELS[entry.modality];
    const prob = document.createElement("span");
    prob.className = "prob";
    prob.textContent = entry.probability.toFixed(4);
    head.append(tag, prob);
    const url = document.createElement("div");
    url.className = "detection-url";
    url.textContent = entry.url;
    item.append(head, url);
    if (entry.matched_template_ids.length > 0) {
      const ids = document.createElement("div");
      ids.className = "template-ids";
      ids.textContent = entry.matched_template_ids.join(", ");
      item.append(ids);
    }
    list.append(item);
  }
}

function renderFlagged(snapshot: TabSnapshot | null): void {
  const cookieList = byId<HTMLUListElement>("flagged-cookies");
  cookieList.replaceChildren();
  for (const name of snapshot?.flaggedCookieNames ?? []) {
    const item = document.createElement("li");
    const label = document.createElement("code");
    label.textContent = name;
    const button = document.createElement("button");
    button.textContent = "Delete";
    button.addEventListener("click", () => {
      if (activeTabId === null) {
        return;
      }
      send({ kind: "delete-cookie", tabId: activeTabId, name })
        .then(refresh)
        .catch(showError);
    });
    item.append(label, button);
    cookieList.append(item);
  }
  byId<HTMLElement>("flagged-cookies-section").hidden = cookieList.childElementCount === 0;

  const windowList = byId<HTMLUListElement>("flagged-window");
  windowList.replaceChildren();
  for (const name of snapshot?.flaggedWindowNames ?? []) {
    const item = document.createElement("li");
    const label = document.createElement("code");
    label.textContent = name;
    item.append(label);
    windowList.append(item);
  }
  byId<HTMLElement>("flagged-window-section").hidden = windowList.childElementCount === 0;
}

function renderSliders(status: Status): void {
  for (const tag of LIVE_TAGS) {
    const slider = byId<HTMLInputElement>(`threshold-${tag}`);
    const label = byId<HTMLSpanElement>(`threshold-${tag}-value`);
    slider.value = String(status.thresholds[tag]);
    label.textContent = status.thresholds[tag].toFixed(2);
    slider.disabled = !status.modelTags.includes(tag);
  }
}

function render(status: Status, snapshot: TabSnapshot | null): void {
  const hasModels = status.modelTags.length > 0;
  byId<HTMLElement>("setup").hidden = hasModels;
  byId<HTMLElement>("main").hidden = !hasModels;
  if (!hasModels) {
    return;
  }
  byId<HTMLSpanElement>("page-domain").textContent = snapshot?.domain ?? "(no page)";
  byId<HTMLSpanElement>("scored-count").textContent = String(snapshot?.scoredRequests ?? 0);
  byId<HTMLElement>("window-warning").hidden = snapshot === null || snapshot.windowAccessible;
  renderDetections(snapshot);
  renderFlagged(snapshot);
  renderSliders(status);
  byId<HTMLInputElement>("blocking").checked = status.blockingEnabled;
  byId<HTMLInputElement>("interval").value = String(status.scanIntervalMs);
}

function showError(err: unknown): void {
  const box = byId<HTMLParagraphElement>("error");
  box.textContent = err instanceof Error ? err.message : String(err);
  box.hidden = false;
  setTimeout(() => {
    box.hidden = true;
  }, 4000);
}

async function refresh(): Promise<void> {
  const reply = await send({ kind: "get-snapshot", tabId: activeTabId ?? -1 });
  render(reply.status as Status, (reply.snapshot as TabSnapshot | null) ?? null);
}

function wireSliders(): void {
  for (const tag of LIVE_TAGS) {
    const slider = byId<HTMLInputElement>(`threshold-${tag}`);
    const label = byId<HTMLSpanElement>(`threshold-${tag}-value`);
    slider.addEventListener("input", () => {
      label.textContent = Number(slider.value).toFixed(2);
    });
    slider.addEventListener("change", () => {
      send({ kind: "set-threshold", tag, value: Number(slider.value) })
        .then(refresh)
        .catch(showError);
    });
  }
}

function wireControls(): void {
  byId<HTMLInputElement>("blocking").addEventListener("change", (event) => {
    const enabled = (event.target as HTMLInputElement).checked;
    send({ kind: "set-blocking", enabled }).then(refresh).catch(showError);
  });

  byId<HTMLInputElement>("interval").addEventListener("change", (event) => {
    const ms = Number((event.target as HTMLInputElement).value);
    send({ kind: "set-interval", ms }).then(refresh).catch(showError);
  });

  byId<HTMLButtonElement>("export").addEventListener("click", () => {
    if (activeTabId === null) {
      return;
    }
    send({ kind: "export", tabId: activeTabId })
      .then((reply) => {
        const text = JSON.stringify(reply.document, null, 2);
        const url = URL.createObjectURL(new Blob([text], { type: "application/json" }));
        const anchor = document.createElement("a");
        anchor.href = url;
        anchor.download = "detections.json";
        anchor.click();
        URL.revokeObjectURL(url);
      })
      .catch(showError);
  });

  for (const inputId of ["model-files", "model-files-more"]) {
    byId<HTMLInputElement>(inputId).addEventListener("change", (event) => {
      const input = event.target as HTMLInputElement;
      const files = [...(input.files ?? [])];
      Promise.all(files.map(async (f) => ({ name: f.name, text: await f.text() })))
        .then((payload) => send({ kind: "import-models", files: payload }))
        .then((reply) => {
          const report = byId<HTMLUListElement>("import-report");
          report.replaceChildren();
          for (const entry of (reply.report as { name: string; status: string }[]) ?? []) {
            const item = document.createElement("li");
            item.textContent = `${entry.name}: ${entry.status}`;
            report.append(item);
          }
          input.value = "";
          return refresh();
        })
        .catch(showError);
    });
  }
}

async function init(): Promise<void> {
  const tab = await activeTab();
  activeTabId = tab?.id ?? null;
  wireSliders();
  wireControls();
  await refresh();
  // keep the panel tracking the scan schedule while open
  setInterval(() => {
    refresh().catch(() => undefined);
  }, 1500);
}

init().catch(showError);
