/** Line-level encoding of the bus protocol.
 *
 * The server answers every command with exactly one OK/ERR line; SNAPSHOT
 * rides its point dump behind the OK, terminated by ".". EVT lines for
 * subscribed points may interleave anywhere between responses.
 */

export interface OkLine {
  kind: "ok";
  payload: string;
}

export interface ErrLine {
  kind: "err";
  code: string;
  message: string;
}

export interface EvtLine {
  kind: "evt";
  timeMs: number;
  point: string;
  value: number;
}

/** A point row inside a SNAPSHOT dump, or its "." terminator. */
export interface DumpLine {
  kind: "dump";
  point: string | null;
  value: number;
}

export type ServerLine = OkLine | ErrLine | EvtLine | DumpLine;

const EVT_RE = /^EVT (\d+) ([A-Z0-9_]{1,64}) ([01])$/;
const ERR_RE = /^ERR (\S+) "(.*)"$/;
const DUMP_RE = /^([A-Z0-9_]{1,64}) ([01])$/;

/** Parse one server line; `inDump` flips interpretation of bare rows. */
export function parseLine(line: string, inDump: boolean): ServerLine {
  const evt = EVT_RE.exec(line);
  if (evt) {
    return { kind: "evt", timeMs: Number(evt[1]), point: evt[2], value: Number(evt[3]) };
  }
  if (line === "OK" || line.startsWith("OK ")) {
    return { kind: "ok", payload: line.length > 2 ? line.slice(3) : "" };
  }
  const err = ERR_RE.exec(line);
  if (err) {
    return { kind: "err", code: err[1], message: err[2] };
  }
  if (inDump) {
    if (line === ".") {
      return { kind: "dump", point: null, value: 0 };
    }
    const row = DUMP_RE.exec(line);
    if (row) {
      return { kind: "dump", point: row[1], value: Number(row[2]) };
    }
  }
  throw new Error(`unparseable server line: ${JSON.stringify(line)}`);
}

export function writeCommand(point: string, value: number): string {
  return `WRITE ${point} ${value}`;
}

export function subCommand(points: string[]): string {
  return `SUB ${points.join(",")}`;
}
