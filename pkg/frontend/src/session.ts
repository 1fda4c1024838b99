/** A live bus session over the WebSocket bridge.
 *
 * The session owns no interlock logic and caches no optimistic state:
 * point values change only when the server says so (SNAPSHOT rows or
 * EVTs), and every wire line is appended verbatim to the session log.
 */

import { parseLine, subCommand, writeCommand } from "./protocol.js";

/** The subset of the browser WebSocket API the session needs; the test
 * harness substitutes the `ws` package behind the same surface. */
export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev: any) => void) | null;
  onmessage: ((ev: any) => void) | null;
  onclose: ((ev: any) => void) | null;
  onerror: ((ev: any) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export interface LogEntry {
  wall: string;
  direction: "in" | "out";
  line: string;
}

interface Pending {
  command: string;
  resolve: (payload: string) => void;
  reject: (err: Error) => void;
}

export type SessionState = "connecting" | "live" | "closed";

export interface SessionEvents {
  /** a point value arrived (EVT or SNAPSHOT row) */
  point?: (point: string, value: number, timeMs: number) => void;
  /** connection state changed */
  state?: (state: SessionState) => void;
  /** a command was answered with ERR */
  protocolError?: (command: string, code: string, message: string) => void;
  /** any line was processed (for instrumentation) */
  line?: (direction: "in" | "out", line: string) => void;
}

export class BusSession {
  readonly log: LogEntry[] = [];
  readonly values = new Map<string, number>();
  state: SessionState = "connecting";

  private socket: SocketLike | null = null;
  private pending: Pending[] = [];
  private inDump = false;
  private buffer = "";

  constructor(
    private readonly url: string,
    private readonly makeSocket: SocketFactory,
    private readonly events: SessionEvents = {},
  ) {}

  connect(): Promise<void> {
    return new Promise((resolve, reject) => {
      const socket = this.makeSocket(this.url);
      this.socket = socket;
      this.setState("connecting");
      socket.onopen = () => {
        this.setState("live");
        resolve();
      };
      socket.onerror = () => {
        if (this.state === "connecting") {
          this.setState("closed");
          reject(new Error(`cannot reach ${this.url}`));
        }
      };
      socket.onclose = () => {
        this.setState("closed");
        for (const p of this.pending.splice(0)) {
          p.reject(new Error("session closed"));
        }
      };
      socket.onmessage = (ev: { data: unknown }) => {
        for (const line of String(ev.data).split("\n")) {
          const trimmed = line.replace(/\r$/, "");
          if (trimmed) {
            this.handleLine(trimmed);
          }
        }
      };
    });
  }

  close(): void {
    this.socket?.close();
  }

  get live(): boolean {
    return this.state === "live";
  }

  /** Issue one command; resolves with the OK payload, rejects on ERR. */
  command(line: string): Promise<string> {
    if (!this.live || !this.socket) {
      return Promise.reject(new Error("session is not live"));
    }
    this.append("out", line);
    this.events.line?.("out", line);
    this.socket.send(line);
    return new Promise((resolve, reject) => {
      this.pending.push({ command: line, resolve, reject });
    });
  }

  /** SNAPSHOT + SUB for the given points: the connect handshake. */
  async synchronize(points: string[]): Promise<void> {
    await this.command("SNAPSHOT");
    if (points.length) {
      await this.command(subCommand(points));
    }
  }

  writePoint(point: string, value: number): Promise<string> {
    return this.command(writeCommand(point, value));
  }

  exportLog(): string {
    return this.log.map((e) => `${e.wall} ${e.direction} ${e.line}`).join("\n") + "\n";
  }

  private setState(state: SessionState): void {
    this.state = state;
    this.events.state?.(state);
  }

  private append(direction: "in" | "out", line: string): void {
    this.log.push({ wall: new Date().toISOString(), direction, line });
  }

  private handleLine(line: string): void {
    this.append("in", line);
    const parsed = parseLine(line, this.inDump);
    switch (parsed.kind) {
      case "evt":
        this.values.set(parsed.point, parsed.value);
        this.events.point?.(parsed.point, parsed.value, parsed.timeMs);
        break;
      case "dump":
        if (parsed.point === null) {
          this.inDump = false;
          this.answer((p) => p.resolve(""));
        } else {
          this.values.set(parsed.point, parsed.value);
          this.events.point?.(parsed.point, parsed.value, -1);
        }
        break;
      case "ok":
        if (this.pending[0]?.command === "SNAPSHOT") {
          this.inDump = true; // resolution waits for the "." terminator
        } else {
          this.answer((p) => p.resolve(parsed.payload));
        }
        break;
      case "err":
        this.answer((p) => {
          this.events.protocolError?.(p.command, parsed.code, parsed.message);
          p.reject(new Error(`${parsed.code}: ${parsed.message}`));
        });
        break;
    }
    this.events.line?.("in", line);
  }

  private answer(settle: (p: Pending) => void): void {
    const head = this.pending.shift();
    if (head) {
      settle(head);
    }
  }
}
