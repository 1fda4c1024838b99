import { describe, expect, it } from "vitest";

import { parseLine, subCommand, writeCommand } from "../src/protocol.js";

describe("parseLine", () => {
  it("parses OK with and without payload", () => {
    expect(parseLine("OK", false)).toEqual({ kind: "ok", payload: "" });
    expect(parseLine("OK 1", false)).toEqual({ kind: "ok", payload: "1" });
    expect(parseLine("OK 120", false)).toEqual({ kind: "ok", payload: "120" });
  });

  it("parses ERR with code and quoted message", () => {
    expect(parseLine('ERR not-input "SHUTTER_PERMIT is not an input"', false)).toEqual({
      kind: "err",
      code: "not-input",
      message: "SHUTTER_PERMIT is not an input",
    });
  });

  it("parses EVT lines", () => {
    expect(parseLine("EVT 120 SECURED_LED 1", false)).toEqual({
      kind: "evt",
      timeMs: 120,
      point: "SECURED_LED",
      value: 1,
    });
  });

  it("parses snapshot rows only inside a dump", () => {
    expect(parseLine("DOOR_CLOSED_1 0", true)).toEqual({
      kind: "dump",
      point: "DOOR_CLOSED_1",
      value: 0,
    });
    expect(parseLine(".", true)).toEqual({ kind: "dump", point: null, value: 0 });
    expect(() => parseLine("DOOR_CLOSED_1 0", false)).toThrow(/unparseable/);
  });

  it("formats commands", () => {
    expect(writeCommand("SEARCH_BTN_1", 1)).toBe("WRITE SEARCH_BTN_1 1");
    expect(subCommand(["A", "B"])).toBe("SUB A,B");
  });
});
