/** Bootstrap: fetch the station document, open the bridge session, render
 * the panels, and keep the status line and fault banner current. */

import { PanelView } from "./panels.js";
import { BusSession, SocketFactory } from "./session.js";
import { StationDoc } from "./types.js";

export interface AppHandles {
  session: BusSession;
  view: PanelView;
  root: HTMLElement;
}

export async function startApp(
  doc: Document,
  container: HTMLElement,
  station: StationDoc,
  bridgeUrl: string,
  makeSocket: SocketFactory,
): Promise<AppHandles> {
  container.textContent = "";

  const header = doc.createElement("header");
  const title = doc.createElement("h1");
  title.textContent = station.name;
  const status = doc.createElement("span");
  status.className = "status";
  status.dataset.role = "status";
  const banner = doc.createElement("span");
  banner.className = "fault-banner";
  banner.dataset.role = "fault-banner";
  const reconnect = doc.createElement("button");
  reconnect.type = "button";
  reconnect.textContent = "Reconnect";
  reconnect.className = "reconnect";
  const exportLog = doc.createElement("button");
  exportLog.type = "button";
  exportLog.textContent = "Export log";
  exportLog.className = "export-log";
  header.append(title, status, banner, reconnect, exportLog);
  container.appendChild(header);

  let view: PanelView | undefined;

  const session = new BusSession(bridgeUrl, makeSocket, {
    point: (point, value) => {
      view?.apply(point, value);
      updateBanner();
    },
    state: (state) => {
      status.textContent = state;
      status.classList.toggle("disconnected", state !== "live");
      view?.setInteractive(state === "live");
    },
    protocolError: (command, code, message) => {
      banner.textContent = `${code}: ${message} (${command})`;
      banner.classList.add("protocol-error");
    },
  });

  function faultText(led: string | undefined): string {
    if (!led) {
      return "n/a";
    }
    return session.values.get(led) === 1 ? "FAULTED" : "ok";
  }

  function updateBanner(): void {
    banner.classList.remove("protocol-error");
    const a = faultText(station.fault_leds?.A);
    const b = faultText(station.fault_leds?.B);
    banner.textContent = `chain A: ${a} | chain B: ${b}`;
    banner.classList.toggle("faulted", a === "FAULTED" || b === "FAULTED");
  }

  const panels = new PanelView(doc, station, session);
  view = panels;
  container.appendChild(panels.root);
  panels.setInteractive(false);

  async function resync(): Promise<void> {
    await session.connect();
    await session.synchronize(panels.boundPoints());
    panels.applyAll();
    updateBanner();
  }

  reconnect.addEventListener("click", () => {
    void resync();
  });
  exportLog.addEventListener("click", () => {
    downloadLog(doc, session.exportLog());
  });

  try {
    await resync();
  } catch {
    status.textContent = "disconnected";
    status.classList.add("disconnected");
  }
  return { session, view: panels, root: container };
}

function downloadLog(doc: Document, text: string): void {
  const blob = new Blob([text], { type: "text/plain" });
  const anchor = doc.createElement("a");
  anchor.href = URL.createObjectURL(blob);
  anchor.download = "session-log.txt";
  anchor.click();
  URL.revokeObjectURL(anchor.href);
}

/** Browser entry point; tests drive startApp directly instead. */
export async function bootstrap(): Promise<void> {
  const response = await fetch("/station.json");
  const station = (await response.json()) as StationDoc;
  const url = `ws://${location.host}/bus`;
  const container = document.getElementById("app");
  if (!container) {
    throw new Error("missing #app container");
  }
  await startApp(document, container, station, url, (u) => new WebSocket(u));
}

declare const window: (Window & { __ARTTS_TEST__?: boolean }) | undefined;
if (typeof window !== "undefined" && !window.__ARTTS_TEST__ && typeof fetch !== "undefined") {
  if (typeof document !== "undefined" && document.getElementById("app")) {
    void bootstrap();
  }
}
