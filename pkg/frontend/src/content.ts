/**
 * Page-side scan trigger. Scoring lives in the service worker; this file
 * only keeps the schedule alive, because worker timers do not survive
 * idle suspension. Loaded as a classic script, so no imports.
 */

(() => {
  const FIRST_SCAN_DELAY_MS = 500;
  const DEFAULT_INTERVAL_MS = 2000;

  function requestScan(): void {
    try {
      const pending = chrome.runtime.sendMessage({ kind: "scheduled-scan" });
      // the worker may be mid-restart; a dropped tick is fine
      if (pending && typeof pending.catch === "function") {
        pending.catch(() => undefined);
      }
    } catch {
      // extension got reloaded out from under the page
    }
  }

  function arm(intervalMs: number): void {
    setTimeout(() => {
      requestScan();
      setInterval(requestScan, intervalMs);
    }, FIRST_SCAN_DELAY_MS);
  }

  function start(): void {
    chrome.storage.local.get("scanIntervalMs").then(
      (stored) => {
        const ms = Number(stored.scanIntervalMs);
        arm(Number.isFinite(ms) && ms >= FIRST_SCAN_DELAY_MS ? ms : DEFAULT_INTERVAL_MS);
      },
      () => arm(DEFAULT_INTERVAL_MS),
    );
  }

  if (document.readyState === "complete") {
    // injected after the load event already fired; schedule from now
    start();
  } else {
    window.addEventListener("load", start, { once: true });
  }
})();
