/** Shapes of the station document served at /station.json. */

export type Direction = "Input" | "Output";
export type ChainName = "A" | "B" | "Both";
export type WidgetKind = "Switch" | "MomentaryButton" | "KeySwitch" | "Led" | "Beacon";
export type PanelKind = "UserPanel" | "DoorPanel" | "SystemController";

export interface PointDoc {
  name: string;
  direction: Direction;
  chain: ChainName;
  initial: number;
}

export interface WidgetDoc {
  kind: WidgetKind;
  point: string;
  label: string;
}

export interface PanelDoc {
  panel: PanelKind;
  widgets: WidgetDoc[];
}

export interface StationDoc {
  name: string;
  scan_period_ms: number;
  points: PointDoc[];
  panels: PanelDoc[];
  fault_leds?: { A?: string; B?: string };
}

export const INPUT_WIDGETS: ReadonlySet<WidgetKind> = new Set([
  "Switch",
  "MomentaryButton",
  "KeySwitch",
]);
