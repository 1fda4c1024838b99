/** Panel rendering: a pure projection of station.json plus current point
 * values onto DOM widgets. No interlock logic lives here; indicator
 * widgets change only when the session reports a new value, and control
 * widgets latch their visual state only once the echoing EVT confirms.
 */

import { BusSession } from "./session.js";
import { INPUT_WIDGETS, PanelDoc, StationDoc, WidgetDoc } from "./types.js";

export interface WidgetHandle {
  doc: WidgetDoc;
  element: HTMLElement;
  /** last confirmed value from the simulator */
  confirmed: number;
  update(value: number): void;
}

export class PanelView {
  readonly widgets = new Map<string, WidgetHandle[]>();
  readonly root: HTMLElement;

  constructor(
    doc: Document,
    private readonly station: StationDoc,
    private readonly session: BusSession,
  ) {
    this.root = doc.createElement("div");
    this.root.className = "panels";
    for (const panel of station.panels) {
      this.root.appendChild(this.renderPanel(doc, panel));
    }
  }

  /** Every point bound by some widget, plus the fault lamps. */
  boundPoints(): string[] {
    const names = new Set<string>(this.widgets.keys());
    for (const led of Object.values(this.station.fault_leds ?? {})) {
      if (led) {
        names.add(led);
      }
    }
    const order = new Map(this.station.points.map((p, i) => [p.name, i] as const));
    return [...names].sort((a, b) => (order.get(a) ?? 0) - (order.get(b) ?? 0));
  }

  /** Apply one confirmed point value to every widget bound to it. */
  apply(point: string, value: number): void {
    for (const handle of this.widgets.get(point) ?? []) {
      handle.confirmed = value;
      handle.update(value);
    }
  }

  applyAll(): void {
    for (const [point, handles] of this.widgets) {
      const value = this.session.values.get(point);
      if (value !== undefined) {
        for (const handle of handles) {
          handle.confirmed = value;
          handle.update(value);
        }
      }
    }
  }

  setInteractive(on: boolean): void {
    for (const handles of this.widgets.values()) {
      for (const handle of handles) {
        if (INPUT_WIDGETS.has(handle.doc.kind)) {
          (handle.element as HTMLButtonElement).disabled = !on;
        }
      }
    }
  }

  private renderPanel(doc: Document, panel: PanelDoc): HTMLElement {
    const box = doc.createElement("fieldset");
    box.className = `panel panel-${panel.panel.toLowerCase()}`;
    const legend = doc.createElement("legend");
    legend.textContent = panel.panel;
    box.appendChild(legend);
    for (const widget of panel.widgets) {
      const handle = this.renderWidget(doc, widget);
      box.appendChild(handle.element);
      const list = this.widgets.get(widget.point) ?? [];
      list.push(handle);
      this.widgets.set(widget.point, list);
    }
    return box;
  }

  private renderWidget(doc: Document, widget: WidgetDoc): WidgetHandle {
    if (INPUT_WIDGETS.has(widget.kind)) {
      return this.renderControl(doc, widget);
    }
    return renderIndicator(doc, widget);
  }

  private renderControl(doc: Document, widget: WidgetDoc): WidgetHandle {
    const button = doc.createElement("button");
    button.type = "button";
    button.className = `widget control ${widget.kind.toLowerCase()}`;
    button.dataset.point = widget.point;
    button.textContent = widget.label;
    button.setAttribute("aria-pressed", "false");

    const handle: WidgetHandle = {
      doc: widget,
      element: button,
      confirmed: 0,
      update(value: number) {
        button.setAttribute("aria-pressed", value ? "true" : "false");
        button.classList.toggle("on", value === 1);
        button.classList.remove("pending");
      },
    };

    const send = (value: number) => {
      button.classList.add("pending");
      this.session.writePoint(widget.point, value).catch(() => {
        // ERR surfaced via the session's error hook; revert the visual
        handle.update(handle.confirmed);
      });
    };

    if (widget.kind === "MomentaryButton") {
      button.addEventListener("pointerdown", () => send(1));
      button.addEventListener("pointerup", () => send(0));
      button.addEventListener("pointerleave", () => {
        if (button.classList.contains("pending")) {
          send(0);
        }
      });
    } else {
      button.addEventListener("click", () => send(handle.confirmed ? 0 : 1));
    }
    return handle;
  }
}

function renderIndicator(doc: Document, widget: WidgetDoc): WidgetHandle {
  const el = doc.createElement("div");
  el.className = `widget indicator ${widget.kind.toLowerCase()}`;
  el.dataset.point = widget.point;
  const lamp = doc.createElement("span");
  lamp.className = "lamp";
  const label = doc.createElement("span");
  label.className = "label";
  label.textContent = widget.label;
  el.append(lamp, label);
  return {
    doc: widget,
    element: el,
    confirmed: 0,
    update(value: number) {
      el.classList.toggle("on", value === 1);
    },
  };
}
